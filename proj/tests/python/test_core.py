import math

import numpy as np
import pytest

sd = pytest.importorskip("specdetect")


def tiny_config(seed=3):
    cfg = sd.RunConfig()
    cfg.update(
        """
        model.bands = 16
        synth.bands = 16
        synth.height = 20
        synth.width = 20
        synth.implant_count = 8
        model.patch_side = 1
        model.group_width = 8
        model.adapter_width = 8
        model.state_size = 4
        model.embed_width = 16
        model.heads = 2
        model.blocks = 1
        model.ffn_width = 16
        model.prior_hidden = 16
        model.ways = 4
        train.ways = 4
        train.queries = 6
        train.iterations = 3
        train.batch = 1
        tta.iterations = 2
        source.materials = 2
        source.implants_per_material = 6
        """
    )
    cfg["seed"] = seed
    return cfg


def test_version():
    assert sd.__version__.count(".") == 2


def test_cube_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    cube = rng.random((4, 5, 6), dtype=np.float32)
    labels = rng.integers(0, 3, size=(4, 5)).astype(np.uint16)
    wl = [400.0 + 10 * i for i in range(6)]
    sd.save_cube(tmp_path / "c.sphc", cube, labels, wl)
    back, back_labels, back_wl = sd.load_cube(tmp_path / "c.sphc")
    assert back.dtype == np.float32 and back.shape == (4, 5, 6)
    np.testing.assert_array_equal(back, cube)
    np.testing.assert_array_equal(back_labels, labels)
    assert back_wl == wl

    sd.save_cube(tmp_path / "n.sphc", cube)
    _, none_labels, none_wl = sd.load_cube(tmp_path / "n.sphc")
    assert none_labels is None and none_wl == []


def test_corrupt_cube_raises(tmp_path):
    (tmp_path / "bad.sphc").write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(sd.FormatError):
        sd.load_cube(tmp_path / "bad.sphc")


def test_normalize_bands():
    cube = np.zeros((2, 2, 3), dtype=np.float32)
    cube[..., 0] = [[1, 2], [3, 5]]
    cube[..., 1] = 7  # constant band
    cube[..., 2] = [[-1, 0], [0, 1]]
    norm, lo, hi = sd.normalize_bands(cube)
    np.testing.assert_allclose(norm[..., 0], [[0, 0.25], [0.5, 1]])
    assert np.all(norm[..., 1] == 0)
    assert lo == [1, 7, -1] and hi == [5, 7, 1]


def test_roc_perfect_and_composite():
    truth = np.array([1, 1, 0, 0, 0], dtype=np.uint8)
    r = sd.roc(np.array([0.9, 0.8, 0.1, 0.2, 0.0]), truth, grid=100)
    assert r["auc_pf_pd"] == pytest.approx(1.0)
    assert r["auc_oa"] == pytest.approx(r["auc_pf_pd"] + r["auc_tau_pd"] - r["auc_tau_pf"], abs=1e-12)
    assert len(r["tau"]) == 101
    oa, snpr = sd.composite_metrics(0.99927, 0.98220, 0.16227)
    assert oa == pytest.approx(1.81920, abs=1e-5)
    assert snpr == pytest.approx(6.05287, abs=1e-5)
    assert math.isinf(sd.composite_metrics(1.0, 0.5, 0.0)[1])


def test_pseudo_labels_quantiles():
    sets = sd.select_pseudo_labels(np.arange(100) / 99.0, 0.95, 0.05)
    assert sets["positive"] == [95, 96, 97, 98, 99]
    assert sets["negative"] == [0, 1, 2, 3, 4]
    with pytest.raises(ValueError):
        sd.select_pseudo_labels(np.ones(10), 0.95, 0.05)


def test_run_config_errors_and_roundtrip():
    cfg = sd.RunConfig()
    cfg["train.lr"] = 2.5e-4
    cfg["tta.flips"] = False
    assert cfg["train.lr"] == "0.00025"
    assert cfg["tta.flips"] == "false"
    other = sd.RunConfig()
    other.update(cfg.serialize())
    assert other.serialize() == cfg.serialize()
    assert "model.patch_side" in sd.RunConfig.keys()
    with pytest.raises(ValueError, match="unknown config key"):
        cfg["nope"] = 1
    cfg["model.patch_side"] = 4
    with pytest.raises(ValueError):
        cfg.validate()


def test_synthetic_target_and_maps(tmp_path):
    t = sd.synthetic_target(tiny_config())
    assert t["cube"].shape == (20, 20, 16)
    assert t["truth"].sum() == 8
    assert len(t["prior"]) == 16
    sd.save_map(tmp_path / "t.sphm", t["truth"])
    np.testing.assert_array_equal(sd.load_map(tmp_path / "t.sphm"), t["truth"])


def test_run_synthetic_is_deterministic():
    a = sd.run_synthetic(tiny_config())
    b = sd.run_synthetic(tiny_config())
    assert len(a["loss_trace"]) == 3
    assert a["map"].shape == (20, 20)
    assert 0.0 <= a["map"].min() and a["map"].max() <= 1.0
    np.testing.assert_array_equal(a["map"], b["map"])
    for key in ("cosine", "unadapted", "adapted"):
        assert 0.0 <= a[key]["auc_pf_pd"] <= 1.0
