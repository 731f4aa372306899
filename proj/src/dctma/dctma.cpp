#include "specdet/dctma.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "common/init.hpp"

namespace specdet::dctma {

Tensor dct_matrix(std::size_t n) {
  Tensor d({n, n});
  const double nn = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double ck = k == 0 ? std::sqrt(1.0 / nn) : std::sqrt(2.0 / nn);
    for (std::size_t i = 0; i < n; ++i) {
      d.at(k, i) = ck * std::cos(std::numbers::pi * (2.0 * static_cast<double>(i) + 1.0) *
                                 static_cast<double>(k) / (2.0 * nn));
    }
  }
  return d;
}

Tensor spectral_matrix(const Patch& patch) {
  const std::size_t T = patch.tokens();
  const std::size_t B = patch.bands;
  Tensor m({B, T});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t b = 0; b < B; ++b) m.at(b, t) = patch.values[t * B + b];
  return m;
}

Tensor token_matrix(const Patch& patch) {
  return Tensor({patch.tokens(), patch.bands}, patch.values);
}

Tensor dct_spectral(const Patch& patch) {
  const Tensor d = dct_matrix(patch.bands);
  const Tensor x = spectral_matrix(patch);
  const std::size_t B = patch.bands;
  const std::size_t T = patch.tokens();
  Tensor f({B, T});
  for (std::size_t k = 0; k < B; ++k)
    for (std::size_t i = 0; i < B; ++i) {
      const double dk = d.at(k, i);
      for (std::size_t t = 0; t < T; ++t) f.at(k, t) += dk * x.at(i, t);
    }
  return f;
}

std::size_t FreqPartition::size(Group g) const noexcept {
  const auto [lo, hi] = range(g);
  return hi - lo;
}

std::pair<std::size_t, std::size_t> FreqPartition::range(Group g) const noexcept {
  switch (g) {
    case kLow:
      return {0, low_end};
    case kMid:
      return {low_end, mid_end};
    default:
      return {mid_end, bands};
  }
}

std::vector<double> FreqPartition::mask(Group g) const {
  std::vector<double> m(bands, 0.0);
  const auto [lo, hi] = range(g);
  for (std::size_t k = lo; k < hi; ++k) m[k] = 1.0;
  return m;
}

FreqPartition build_partition(std::size_t bands, double rho_low, double rho_mid) {
  if (!(0 < rho_low && rho_low < rho_mid && rho_mid < 1)) {
    throw ValidationError("frequency ratios must satisfy 0 < rho_L < rho_M < 1");
  }
  FreqPartition p;
  p.bands = bands;
  p.rho_low = rho_low;
  p.rho_mid = rho_mid;
  p.low_end = static_cast<std::size_t>(std::floor(rho_low * static_cast<double>(bands)));
  p.mid_end = static_cast<std::size_t>(std::floor(rho_mid * static_cast<double>(bands)));
  for (Group g : {kLow, kMid, kHigh}) {
    if (p.size(g) == 0 || p.mid_end > bands) {
      throw ValidationError(std::string("frequency group ") + kGroupNames[g] + " is empty for B=" +
                            std::to_string(bands));
    }
  }
  return p;
}

std::array<Var, 3> group_encode(const Var& coeffs, const FreqPartition& partition,
                                ParamScope& scope, Activation act, bool masking) {
  if (coeffs->value.cols() != partition.bands) {
    throw ValidationError("group_encode: coefficient width does not match partition");
  }
  std::array<Var, 3> z;
  for (Group g : {kLow, kMid, kHigh}) {
    const std::string name = std::string("dctma/group_") + kGroupNames[g] + "_W";
    Var masked = masking
                     ? ops::mul_row(coeffs, constant(Tensor::vector(partition.mask(g))))
                     : coeffs;
    Var pre = ops::linear(masked, scope(name));
    Var activated = activate(pre, act);
    z[g] = ops::mean_rows(activated);
  }
  return z;
}

GateResult spectral_gate(const std::array<Var, 3>& z, const Var& w_att) {
  const std::size_t d = z[0]->value.size();
  for (const Var& zg : z) {
    if (zg->value.size() != d) throw ValidationError("spectral_gate: descriptor widths differ");
  }
  Var stacked = ops::concat_rows({ops::reshape(z[0], {1, d}), ops::reshape(z[1], {1, d}),
                                  ops::reshape(z[2], {1, d})});
  Var scores = ops::reshape(ops::linear(stacked, w_att), {3});
  GateResult r;
  r.weights = ops::softmax_rows(scores);
  r.features = ops::matmul(r.weights, stacked);
  return r;
}

namespace {

// φ(Δ, a) = (exp(Δa) − 1)/a with the Δ limit near Δa = 0, and its partials.
struct Phi {
  double value;
  double d_delta;
  double d_a;
};

constexpr double kSeriesThreshold = 1e-6;

Phi phi(double delta, double a, double a_bar) {
  const double x = delta * a;
  if (std::abs(x) < kSeriesThreshold) return {delta, 1.0, 0.5 * delta * delta};
  const double v = (a_bar - 1.0) / a;
  return {v, a_bar, (delta * a_bar - v) / a};
}

}  // namespace

Discretized zoh_discretize(double a, double delta, double b) {
  if (!(delta > 0)) throw ValidationError("zoh_discretize: step must be > 0");
  const double a_bar = std::exp(delta * a);
  return {a_bar, phi(delta, a, a_bar).value * b};
}

Var selective_scan(const Var& x, const Var& delta, const Var& bcoef, const Var& ccoef,
                   const Var& a) {
  const std::size_t T = x->value.rows();
  const std::size_t C = x->value.cols();
  const std::size_t N = a->value.size();
  if (T == 0) throw ValidationError("selective_scan: empty sequence");
  if (delta->value.rows() != T || delta->value.cols() != C) {
    throw ValidationError("selective_scan: step shape mismatch");
  }
  if (bcoef->value.rows() != T || bcoef->value.cols() != N || ccoef->value.rows() != T ||
      ccoef->value.cols() != N) {
    throw ValidationError("selective_scan: B/C coefficient shape mismatch");
  }
  for (double ak : a->value.values()) {
    if (!(ak < 0)) throw ValidationError("selective_scan: evolution diagonal must be negative");
  }
  for (double d : delta->value.values()) {
    if (!(d > 0)) throw ValidationError("selective_scan: step must be > 0");
  }

  // Cached per (t, c, k): state after step t, Ā and φ.
  auto states = std::make_shared<std::vector<double>>(T * C * N);
  auto a_bars = std::make_shared<std::vector<double>>(T * C * N);
  auto phis = std::make_shared<std::vector<double>>(T * C * N);
  Tensor y({T, C});
  const Tensor& X = x->value;
  const Tensor& D = delta->value;
  const Tensor& Bm = bcoef->value;
  const Tensor& Cm = ccoef->value;
  const Tensor& A = a->value;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      const double xt = X.at(t, c);
      const double dt = D.at(t, c);
      double acc = 0;
      for (std::size_t k = 0; k < N; ++k) {
        const std::size_t idx = (t * C + c) * N + k;
        const double ab = std::exp(dt * A[k]);
        const double ph = phi(dt, A[k], ab).value;
        const double prev = t > 0 ? (*states)[idx - C * N] : 0.0;
        const double h = ab * prev + ph * Bm.at(t, k) * xt;
        (*states)[idx] = h;
        (*a_bars)[idx] = ab;
        (*phis)[idx] = ph;
        acc += Cm.at(t, k) * h;
      }
      y.at(t, c) = acc;
    }
  }

  Var out = std::make_shared<Node>();
  out->value = std::move(y);
  out->op = "selective_scan";
  if (!out->value.all_finite()) throw NumericError("non-finite value produced by 'selective_scan'");
  out->parents = {x, delta, bcoef, ccoef, a};
  for (const Var& p : out->parents) out->requires_grad = out->requires_grad || p->requires_grad;
  if (!out->requires_grad) return out;

  out->backward_fn = [T, C, N, states, a_bars, phis](Node& self) {
    const Var& xv = self.parents[0];
    const Var& dv = self.parents[1];
    const Var& bv = self.parents[2];
    const Var& cv = self.parents[3];
    const Var& av = self.parents[4];
    const Tensor& X = xv->value;
    const Tensor& D = dv->value;
    const Tensor& Bm = bv->value;
    const Tensor& Cm = cv->value;
    const Tensor& A = av->value;
    Tensor gX = Tensor::zeros_like(X);
    Tensor gD = Tensor::zeros_like(D);
    Tensor gB = Tensor::zeros_like(Bm);
    Tensor gC = Tensor::zeros_like(Cm);
    Tensor gA = Tensor::zeros_like(A);
    std::vector<double> carry(C * N, 0.0);
    for (std::size_t step = T; step-- > 0;) {
      for (std::size_t c = 0; c < C; ++c) {
        const double gy = self.grad.at(step, c);
        const double xt = X.at(step, c);
        const double dt = D.at(step, c);
        for (std::size_t k = 0; k < N; ++k) {
          const std::size_t idx = (step * C + c) * N + k;
          const double h = (*states)[idx];
          const double prev = step > 0 ? (*states)[idx - C * N] : 0.0;
          const double ab = (*a_bars)[idx];
          const double ph = (*phis)[idx];
          const double g = carry[c * N + k] + Cm.at(step, k) * gy;
          gC.at(step, k) += gy * h;
          const double g_abar = g * prev;
          const Phi dphi = phi(dt, A[k], ab);
          const double g_phi = g * Bm.at(step, k) * xt;
          gB.at(step, k) += g * ph * xt;
          gX.at(step, c) += g * ph * Bm.at(step, k);
          gD.at(step, c) += g_abar * A[k] * ab + g_phi * dphi.d_delta;
          gA[k] += g_abar * dt * ab + g_phi * dphi.d_a;
          carry[c * N + k] = g * ab;
        }
      }
    }
    if (xv->requires_grad) xv->grad_slot().accumulate(gX);
    if (dv->requires_grad) dv->grad_slot().accumulate(gD);
    if (bv->requires_grad) bv->grad_slot().accumulate(gB);
    if (cv->requires_grad) cv->grad_slot().accumulate(gC);
    if (av->requires_grad) av->grad_slot().accumulate(gA);
  };
  return out;
}

Var spatial_branch(const Var& tokens, ParamScope& scope) {
  Var step = ops::softplus(ops::linear(tokens, scope("dctma/ssm/dt_W"), scope("dctma/ssm/dt_b")));
  Var bcoef = ops::linear(tokens, scope("dctma/ssm/B_W"));
  Var ccoef = ops::linear(tokens, scope("dctma/ssm/C_W"));
  Var a = ops::scale(ops::exp(scope("dctma/ssm/A_log")), -1.0);
  return ops::mean_rows(selective_scan(tokens, step, bcoef, ccoef, a));
}

Var cross_gate_fuse(const Var& e_spec, const Var& e_spa, ParamScope& scope) {
  Var spec = ops::linear(e_spec, scope("dctma/fuse/spec_proj_W"), scope("dctma/fuse/spec_proj_b"));
  Var spa = ops::linear(e_spa, scope("dctma/fuse/spa_proj_W"), scope("dctma/fuse/spa_proj_b"));
  Var gate_spec = ops::sigmoid(
      ops::linear(spa, scope("dctma/fuse/spa_to_spec_W"), scope("dctma/fuse/spa_to_spec_b")));
  Var gate_spa = ops::sigmoid(
      ops::linear(spec, scope("dctma/fuse/spec_to_spa_W"), scope("dctma/fuse/spec_to_spa_b")));
  Var h_spec = ops::mul(spec, gate_spec);
  Var h_spa = ops::mul(spa, gate_spa);
  return ops::linear(ops::concat_cols({h_spec, h_spa}), scope("dctma/fuse/out_W"),
                     scope("dctma/fuse/out_b"));
}

ForwardTrace forward(const Patch& patch, const ModelConfig& cfg, const FreqPartition& partition,
                     ParamScope& scope) {
  if (patch.bands != cfg.bands || partition.bands != cfg.bands) {
    throw ValidationError("dctma: patch has " + std::to_string(patch.bands) +
                          " bands, adapter expects " + std::to_string(cfg.bands));
  }
  ForwardTrace tr;
  Var tokens = constant(token_matrix(patch));
  // Coefficients held token-major (s² × B), i.e. the transpose of D·x̄.
  tr.coeffs = ops::linear(tokens, constant(dct_matrix(patch.bands)));
  tr.descriptors =
      group_encode(tr.coeffs, partition, scope, cfg.group_activation, cfg.frequency_masking);
  tr.gate = spectral_gate(tr.descriptors, scope("dctma/gate/w_att"));
  tr.e_spatial = spatial_branch(tokens, scope);
  tr.h_ada = cross_gate_fuse(tr.gate.features, tr.e_spatial, scope);
  return tr;
}

Var dctma_forward(const Patch& patch, const ModelConfig& cfg, const FreqPartition& partition,
                  ParamScope& scope) {
  return forward(patch, cfg, partition, scope).h_ada;
}

void init_parameters(ParamStore& store, const ModelConfig& cfg, std::uint64_t seed) {
  const std::size_t B = cfg.bands;
  const std::size_t d = cfg.group_width;
  const std::size_t da = cfg.adapter_width;
  const std::size_t N = cfg.state_size;
  for (const char* g : kGroupNames) {
    detail::add_linear(store, std::string("dctma/group_") + g, d, B, seed, false);
  }
  store.add("dctma/gate/w_att",
            detail::uniform_tensor({d}, 1.0 / std::sqrt(static_cast<double>(d)), seed,
                                   "dctma/gate/w_att"));

  Tensor a_log({N});
  for (std::size_t k = 0; k < N; ++k) a_log[k] = std::log(static_cast<double>(k + 1));
  store.add("dctma/ssm/A_log", a_log);
  detail::add_linear(store, "dctma/ssm/dt", B, B, seed, false);
  store.add("dctma/ssm/dt_b", Tensor({B}, std::log(std::expm1(cfg.initial_step))));
  detail::add_linear(store, "dctma/ssm/B", N, B, seed, false);
  detail::add_linear(store, "dctma/ssm/C", N, B, seed, false);

  detail::add_linear(store, "dctma/fuse/spec_proj", da, d, seed);
  detail::add_linear(store, "dctma/fuse/spa_proj", da, B, seed);
  detail::add_linear(store, "dctma/fuse/spa_to_spec", da, da, seed);
  detail::add_linear(store, "dctma/fuse/spec_to_spa", da, da, seed);
  detail::add_linear(store, "dctma/fuse/out", da, 2 * da, seed);
}

}  // namespace specdet::dctma
