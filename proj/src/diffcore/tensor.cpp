#include "specdet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace specdet {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  if (shape.size() > 2) throw ValidationError("tensor rank above 2 is not supported");
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw ValidationError("tensor extents must be positive");
    n *= e;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw ValidationError("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_string());
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw ValidationError("item() on non-scalar tensor " + shape_string());
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ']';
  return os.str();
}

void Tensor::fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

void Tensor::accumulate(const Tensor& other) {
  if (other.size() != size()) {
    throw ValidationError("accumulate shape mismatch " + shape_string() + " vs " +
                          other.shape_string());
  }
  std::transform(data_.begin(), data_.end(), other.data_.begin(), data_.begin(),
                 std::plus<>());
}

void round_to_f32(Tensor& t) noexcept {
  for (double& v : t.storage()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace specdet
