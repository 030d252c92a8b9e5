#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "roomfill/common.hpp"

namespace roomfill {

// Dense row-major n-d array. Deliberately minimal: shape + flat storage +
// indexed access. All layer math lives in ops that work on raw pointers.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(std::size_t(numel()), T(0));
  }

  Tensor(std::vector<int> shape, T fill_value) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(std::size_t(numel()), fill_value);
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, T v) { return Tensor(std::move(shape), v); }

  static Tensor scalar(T v) { return Tensor({1}, v); }

  int dim() const { return int(shape_.size()); }

  int size(int d) const { return shape_[std::size_t(d)]; }

  const std::vector<int>& shape() const { return shape_; }

  // Empty product: a default-constructed tensor reports numel() == 1 but holds
  // no data. Test emptiness with dim() == 0.
  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int s : shape_) n *= s;
    return n;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::int64_t i) { return data_[std::size_t(i)]; }
  const T& operator[](std::int64_t i) const { return data_[std::size_t(i)]; }

  T& operator()(int i, int j) { return data_[std::size_t(i) * shape_[1] + j]; }
  const T& operator()(int i, int j) const { return data_[std::size_t(i) * shape_[1] + j]; }

  T& operator()(int i, int j, int k) {
    return data_[(std::size_t(i) * shape_[1] + j) * shape_[2] + k];
  }
  const T& operator()(int i, int j, int k) const {
    return data_[(std::size_t(i) * shape_[1] + j) * shape_[2] + k];
  }

  T& operator()(int i, int j, int k, int l) {
    return data_[((std::size_t(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  const T& operator()(int i, int j, int k, int l) const {
    return data_[((std::size_t(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  T min_value() const { return *std::min_element(data_.begin(), data_.end()); }
  T max_value() const { return *std::max_element(data_.begin(), data_.end()); }

  double sum() const {
    double s = 0;
    for (const T& v : data_) s += double(v);
    return s;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::int64_t i = 0; i < numel(); ++i) out[i] = U(data_[std::size_t(i)]);
    return out;
  }

 private:
  void check_shape() const {
    RF_CHECK(!shape_.empty(), ShapeError, "tensor needs at least one dimension");
    for (int s : shape_)
      RF_CHECK(s > 0, ShapeError, "tensor dimensions must be positive, got ", s);
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;
using LabelMap = Tensor<std::int32_t>;  // H x W integer labels

inline std::string shape_str(const std::vector<int>& s) {
  std::string r = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + ")";
}

}  // namespace roomfill
