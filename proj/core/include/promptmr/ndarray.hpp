#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "promptmr/error.hpp"

namespace promptmr {

using Shape = std::vector<std::size_t>;
using cdouble = std::complex<double>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s);

/// Dense row-major N-d array with value semantics.
template <class T>
class NdArray {
 public:
  using value_type = T;

  NdArray() = default;
  explicit NdArray(Shape shape, T fill = T{}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  NdArray(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("NdArray: data size " + std::to_string(data_.size()) + " does not match shape " +
                       shape_str(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t ndim() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T>& vec() noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Contiguous block for leading index `i` (a view of one "row" along axis 0).
  std::span<T> slab(std::size_t i) {
    const std::size_t n = data_.size() / shape_.at(0);
    return std::span<T>(data_).subspan(i * n, n);
  }
  std::span<const T> slab(std::size_t i) const {
    const std::size_t n = data_.size() / shape_.at(0);
    return std::span<const T>(data_).subspan(i * n, n);
  }

  void reshape(Shape s) {
    if (shape_size(s) != data_.size()) {
      throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(s));
    }
    shape_ = std::move(s);
  }

  bool operator==(const NdArray&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using RealArray = NdArray<double>;
using ComplexArray = NdArray<cdouble>;

/// Copy of slab `i` along axis 0 as its own array.
template <class T>
NdArray<T> take(const NdArray<T>& a, std::size_t i) {
  Shape s(a.shape().begin() + 1, a.shape().end());
  auto sl = a.slab(i);
  return NdArray<T>(std::move(s), std::vector<T>(sl.begin(), sl.end()));
}

/// Stack equally shaped arrays along a new leading axis.
template <class T>
NdArray<T> stack(const std::vector<NdArray<T>>& parts) {
  if (parts.empty()) throw ShapeError("stack: no parts");
  Shape s = parts.front().shape();
  std::vector<T> out;
  out.reserve(parts.size() * parts.front().size());
  for (const auto& p : parts) {
    if (p.shape() != s) throw ShapeError("stack: mismatched shapes " + shape_str(p.shape()) + " vs " + shape_str(s));
    out.insert(out.end(), p.vec().begin(), p.vec().end());
  }
  s.insert(s.begin(), parts.size());
  return NdArray<T>(std::move(s), std::move(out));
}

}  // namespace promptmr
