#include "specdet/param_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "specdet/binary_io.hpp"
#include "specdet/rng.hpp"

namespace specdet {

void Gradients::add(const std::string& name, const Tensor& g) {
  auto it = grads_.find(name);
  if (it == grads_.end()) {
    grads_.emplace(name, g);
  } else {
    it->second.accumulate(g);
  }
}

void Gradients::add_scaled(const Gradients& other, double scale) {
  for (const auto& [name, g] : other.grads_) {
    auto it = grads_.find(name);
    if (it == grads_.end()) {
      Tensor t = g;
      for (double& v : t.storage()) v *= scale;
      grads_.emplace(name, std::move(t));
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += scale * g[i];
    }
  }
}

const Tensor* Gradients::find(const std::string& name) const {
  auto it = grads_.find(name);
  return it == grads_.end() ? nullptr : &it->second;
}

void ParamStore::add(const std::string& name, Tensor value, bool frozen) {
  if (name.empty()) throw ValidationError("parameter name must be non-empty");
  if (entries_.count(name)) throw ValidationError("duplicate parameter name: " + name);
  if (!value.all_finite()) throw NumericError("non-finite initial value for " + name);
  round_to_f32(value);
  Entry e;
  e.grad = Tensor::zeros_like(value);
  e.first_moment = Tensor::zeros_like(value);
  e.second_moment = Tensor::zeros_like(value);
  e.value = std::move(value);
  e.frozen = frozen;
  entries_.emplace(name, std::move(e));
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError("unknown parameter: " + name);
  return it->second;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError("unknown parameter: " + name);
  return it->second;
}

void ParamStore::set_value(const std::string& name, Tensor value) {
  Entry& e = entry(name);
  if (!e.value.same_shape(value)) {
    throw ValidationError("set_value shape mismatch for " + name + ": " +
                          e.value.shape_string() + " vs " + value.shape_string());
  }
  round_to_f32(value);
  e.value = std::move(value);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& kv : entries_) out.push_back(kv.first);
  return out;
}

std::vector<std::string> ParamStore::names_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& kv : entries_) {
    if (kv.first.compare(0, prefix.size(), prefix) == 0) out.push_back(kv.first);
  }
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& kv : entries_) n += kv.second.value.size();
  return n;
}

void ParamStore::set_frozen(const std::string& name, bool frozen) { entry(name).frozen = frozen; }

std::size_t ParamStore::set_frozen_prefix(std::string_view prefix, bool frozen) {
  std::size_t n = 0;
  for (auto& [name, e] : entries_) {
    if (name.compare(0, prefix.size(), prefix) == 0) {
      e.frozen = frozen;
      ++n;
    }
  }
  return n;
}

void ParamStore::reset_optimizer_state() {
  for (auto& [name, e] : entries_) {
    e.first_moment = Tensor::zeros_like(e.value);
    e.second_moment = Tensor::zeros_like(e.value);
    e.step = 0;
  }
}

void ParamStore::set_gradients(const Gradients& grads) {
  for (const auto& [name, g] : grads.entries()) {
    if (!entries_.count(name)) throw ValidationError("gradient for unknown parameter: " + name);
  }
  for (auto& [name, e] : entries_) {
    e.grad.fill(0.0);
    e.skip = false;
    const Tensor* g = grads.find(name);
    if (e.frozen) {
      e.skip = true;
      continue;
    }
    if (!g) {
      e.skip = true;
      continue;
    }
    {
      if (g->size() != e.value.size()) throw ValidationError("gradient shape mismatch for " + name);
      if (!g->all_finite()) throw NumericError("non-finite gradient for " + name);
      std::copy(g->storage().begin(), g->storage().end(), e.grad.data());
    }
  }
  gradients_fresh_ = true;
}

bool ParamStore::values_equal(const ParamStore& other, std::string_view prefix) const {
  const auto mine = names_with_prefix(prefix);
  if (mine != other.names_with_prefix(prefix)) return false;
  for (const auto& name : mine) {
    const Tensor& a = value(name);
    const Tensor& b = other.value(name);
    if (!a.same_shape(b)) return false;
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

Var ParamScope::operator()(const std::string& name) {
  auto it = leaves_.find(name);
  if (it != leaves_.end()) return it->second;
  const auto& e = store_->entry(name);
  Var leaf = e.frozen ? constant(e.value) : variable(e.value);
  leaves_.emplace(name, leaf);
  return leaf;
}

Gradients ParamScope::gradients() const {
  Gradients g;
  for (const auto& [name, leaf] : leaves_) {
    if (!leaf->requires_grad) continue;
    g.add(name, leaf->grad.empty() ? Tensor::zeros_like(leaf->value) : leaf->grad);
  }
  return g;
}

void backward_gradients(const Var& loss, const ParamScope& scope, ParamStore& store) {
  backward(loss);
  store.set_gradients(scope.gradients());
}

void OptimConfig::validate() const {
  if (!(learning_rate > 0)) throw ValidationError("learning_rate must be > 0");
  if (!(beta1 >= 0 && beta1 < 1)) throw ValidationError("beta1 must lie in [0,1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ValidationError("beta2 must lie in [0,1)");
  if (!(epsilon > 0)) throw ValidationError("epsilon must be > 0");
  if (weight_decay < 0) throw ValidationError("weight_decay must be >= 0");
  if (max_grad_norm && !(*max_grad_norm > 0)) throw ValidationError("max_grad_norm must be > 0");
}

void adamw_update(ParamStore& store, const OptimConfig& cfg) {
  cfg.validate();
  if (!store.gradients_fresh()) throw ValidationError("stale gradients");

  double clip = 1.0;
  if (cfg.max_grad_norm) {
    double sq = 0;
    for (const auto& [name, e] : store.entries()) {
      if (e.frozen || e.skip) continue;
      for (double g : e.grad.values()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > *cfg.max_grad_norm) clip = *cfg.max_grad_norm / norm;
  }

  for (const auto& name : store.names()) {
    auto& e = store.entry(name);
    if (e.frozen || e.skip) continue;
    ++e.step;
    const double t = static_cast<double>(e.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i] * clip;
      double& m = e.first_moment[i];
      double& v = e.second_moment[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      double theta = e.value[i];
      theta -= cfg.learning_rate * cfg.weight_decay * theta;
      theta -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
      e.value[i] = theta;
    }
    round_to_f32(e.value);
    if (!e.value.all_finite()) throw NumericError("non-finite parameter after update: " + name);
  }
  store.mark_gradients_consumed();
}

FdReport finite_difference_check(const LossBuilder& fn, const ParamStore& store,
                                 const FdOptions& opts) {
  ParamStore probe = store;

  ParamScope scope(probe);
  Var loss = fn(scope);
  backward(loss);
  const Gradients analytic = scope.gradients();
  const double base = loss->value.item();

  auto evaluate = [&]() {
    ParamScope s(probe);
    return fn(s)->value.item();
  };
  if (evaluate() != base) {
    throw ValidationError("finite_difference_check: loss is not deterministic across evaluations");
  }

  std::vector<std::pair<std::string, std::size_t>> pool;
  for (const auto& name : probe.names_with_prefix(opts.prefix)) {
    const auto& e = probe.entry(name);
    if (e.frozen) continue;
    for (std::size_t i = 0; i < e.value.size(); ++i) pool.emplace_back(name, i);
  }
  Rng rng(opts.seed);
  rng.shuffle(pool);
  if (pool.size() > opts.coordinates) pool.resize(opts.coordinates);

  FdReport report;
  for (const auto& [name, idx] : pool) {
    double& theta = probe.entry(name).value[idx];
    const double saved = theta;
    const double h = opts.step_scale * (1.0 + std::abs(saved));
    theta = saved + h;
    const double up_arg = theta;
    const double up = evaluate();
    theta = saved - h;
    const double down_arg = theta;
    const double down = evaluate();
    theta = saved;
    const double numeric = (up - down) / (up_arg - down_arg);
    const Tensor* g = analytic.find(name);
    const double a = g ? (*g)[idx] : 0.0;
    const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
    ++report.coordinates_checked;
    if (report.worst_entry.empty() || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_entry = name;
      report.worst_index = idx;
    }
  }
  return report;
}

namespace {
constexpr char kCheckpointMagic[4] = {'S', 'P', 'D', 'M'};
constexpr std::uint16_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  os.write(kCheckpointMagic, 4);
  binio::put_le<std::uint16_t>(os, kCheckpointVersion);
  binio::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, e] : store.entries()) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ValidationError("parameter name too long: " + name);
    }
    binio::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    binio::put_le<std::uint8_t>(os, e.frozen ? 1 : 0);
    binio::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(e.value.rank()));
    for (std::size_t ext : e.value.shape()) binio::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ext));
    for (double v : e.value.values()) binio::put_f32(os, static_cast<float>(v));
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  binio::expect_magic(is, kCheckpointMagic);
  const auto version = binio::get_le<std::uint16_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("bad version", "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = binio::get_le<std::uint32_t>(is, "entry count");
  ParamStore store;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = binio::get_le<std::uint16_t>(is, "name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("truncated", "entry name");
    const bool frozen = binio::get_le<std::uint8_t>(is, "frozen flag") != 0;
    const auto rank = binio::get_le<std::uint8_t>(is, "rank");
    if (rank > 2) throw FormatError("bad rank", name + " has rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    std::uint64_t n = 1;
    for (auto& ext : shape) {
      ext = binio::get_le<std::uint32_t>(is, "extent");
      if (ext == 0) throw FormatError("bad extent", name);
      n *= ext;
      if (n > (std::uint64_t{1} << 32)) throw FormatError("dimension overflow", name);
    }
    std::vector<double> data(n);
    for (auto& v : data) v = binio::get_f32(is, "values");
    store.add(name, Tensor(std::move(shape), std::move(data)), frozen);
  }
  return store;
}

}  // namespace specdet
