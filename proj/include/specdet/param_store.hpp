#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "specdet/autograd.hpp"
#include "specdet/tensor.hpp"

namespace specdet {

/// Named gradient accumulator, reduced across per-sample graphs.
class Gradients {
 public:
  void add(const std::string& name, const Tensor& g);
  /// this += scale * other, visiting names in sorted order.
  void add_scaled(const Gradients& other, double scale = 1.0);
  const std::map<std::string, Tensor>& entries() const noexcept { return grads_; }
  const Tensor* find(const std::string& name) const;

 private:
  std::map<std::string, Tensor> grads_;
};

/// Named trainable tensors with freeze flags, gradient slots and AdamW state.
///
/// Values are kept representable in 32-bit floats so checkpoints round-trip
/// bit-exactly. Iteration order is lexicographic by name.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    bool frozen = false;
    Tensor grad;
    bool skip = false;  // frozen, or absent from the last gradient set; AdamW leaves it alone
    Tensor first_moment;
    Tensor second_moment;
    std::uint64_t step = 0;
  };

  void add(const std::string& name, Tensor value, bool frozen = false);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Entry& entry(const std::string& name) const;
  Entry& entry(const std::string& name);
  const Tensor& value(const std::string& name) const { return entry(name).value; }
  /// Replaces a value in place (rounded to 32-bit); shape must match.
  void set_value(const std::string& name, Tensor value);
  std::vector<std::string> names() const;
  std::vector<std::string> names_with_prefix(std::string_view prefix) const;
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t parameter_count() const;

  void set_frozen(const std::string& name, bool frozen);
  /// Toggles every entry whose name starts with prefix; returns how many matched.
  std::size_t set_frozen_prefix(std::string_view prefix, bool frozen);
  bool is_frozen(const std::string& name) const { return entry(name).frozen; }

  /// Loads gradient slots: trainable entries take the supplied gradient;
  /// frozen entries and entries with no supplied gradient are zeroed and
  /// flagged skip (no moment update, no decay).
  void set_gradients(const Gradients& grads);
  bool gradients_fresh() const noexcept { return gradients_fresh_; }
  /// Clears AdamW moments and step counters (checkpoints do not store them).
  void reset_optimizer_state();
  void mark_gradients_consumed() noexcept { gradients_fresh_ = false; }

  /// Values only, for bitwise comparisons between checkpoints.
  bool values_equal(const ParamStore& other, std::string_view prefix = {}) const;

  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
  bool gradients_fresh_ = false;
};

/// Binds store entries into one computation graph as leaves.
///
/// Frozen entries become constants, so gradients still flow through them to
/// upstream trainable parameters without accumulating on them.
class ParamScope {
 public:
  explicit ParamScope(const ParamStore& store) : store_(&store) {}
  Var operator()(const std::string& name);
  const ParamStore& store() const noexcept { return *store_; }
  /// Gradients of every bound trainable leaf (after backward()).
  Gradients gradients() const;

 private:
  const ParamStore* store_;
  std::map<std::string, Var> leaves_;
};

/// Runs backward from a scalar loss and loads the store's gradient slots.
void backward_gradients(const Var& loss, const ParamScope& scope, ParamStore& store);

struct OptimConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::optional<double> max_grad_norm;

  void validate() const;
};

/// Decoupled-weight-decay Adam step over every trainable entry.
/// Throws "stale gradients" unless gradients were loaded since the last step.
void adamw_update(ParamStore& store, const OptimConfig& cfg);

struct FdOptions {
  std::size_t coordinates = 100;  // sampled coordinates in total
  std::uint64_t seed = 0;
  std::string prefix;             // restrict sampling to names with this prefix
  double step_scale = 1e-3;       // h = step_scale * (1 + |theta|)
};

struct FdReport {
  double max_relative_error = 0.0;
  std::string worst_entry;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

/// Builds a scalar loss graph over the given scope.
using LossBuilder = std::function<Var(ParamScope&)>;

/// Central-difference audit of reverse-mode gradients at sampled coordinates.
/// Error per coordinate is |analytic - numeric| / max(1, |numeric|).
FdReport finite_difference_check(const LossBuilder& fn, const ParamStore& store,
                                 const FdOptions& opts = {});

/// Binary checkpoint ("SPDM" format, version 1).
void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace specdet
