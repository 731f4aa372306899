"""Prior-guided hyperspectral target detection."""

from ._core import (
    FormatError,
    RunConfig,
    __version__,
    composite_metrics,
    load_cube,
    load_map,
    load_prior,
    normalize_bands,
    roc,
    run_synthetic,
    save_cube,
    save_map,
    select_pseudo_labels,
    synthetic_target,
)

__all__ = [
    "FormatError",
    "RunConfig",
    "__version__",
    "composite_metrics",
    "load_cube",
    "load_map",
    "load_prior",
    "normalize_bands",
    "roc",
    "run_synthetic",
    "save_cube",
    "save_map",
    "select_pseudo_labels",
    "synthetic_target",
]
