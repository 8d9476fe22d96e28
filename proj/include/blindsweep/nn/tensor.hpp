#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "blindsweep/errors.hpp"

namespace blindsweep::nn {

// Up to four axes. Lower-rank shapes are right-aligned into (n, h, w, c) so a
// rank-1 tensor of length C is (1, 1, 1, C) and broadcasts as a channel vector.
class Shape {
 public:
  Shape() = default;
  Shape(int n, int h, int w, int c) : dims_{n, h, w, c}, rank_(4) { validate(); }

  static Shape vector(int c) { return with_rank({1, 1, 1, c}, 1); }
  static Shape matrix(int rows, int cols) { return with_rank({1, 1, rows, cols}, 2); }
  static Shape scalar() { return with_rank({1, 1, 1, 1}, 0); }
  static Shape with_rank(std::array<int, 4> dims, int rank) {
    Shape s;
    s.dims_ = dims;
    s.rank_ = rank;
    s.validate();
    return s;
  }

  int n() const { return dims_[0]; }
  int h() const { return dims_[1]; }
  int w() const { return dims_[2]; }
  int c() const { return dims_[3]; }
  int rank() const { return rank_; }
  const std::array<int, 4>& dims() const { return dims_; }

  // Logical dims (the last `rank` entries).
  std::vector<int> logical_dims() const {
    return {dims_.begin() + (4 - rank_), dims_.end()};
  }

  std::size_t size() const {
    return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2] * dims_[3];
  }

  // Shapes compare by their 4-D footprint; rank is bookkeeping for serialization.
  bool operator==(const Shape& o) const { return dims_ == o.dims_; }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s = "[";
    for (int i = 0; i < 4; ++i) {
      s += std::to_string(dims_[i]);
      if (i < 3) s += ",";
    }
    return s + "]";
  }

 private:
  void validate() const {
    if (rank_ < 0 || rank_ > 4) throw ShapeError("rank must be in [0, 4]");
    for (int d : dims_)
      if (d < 0) throw ShapeError("negative dimension in shape");
  }

  std::array<int, 4> dims_{1, 1, 1, 1};
  int rank_ = 0;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size())
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int n, int h, int w, int c) const {
    return ((static_cast<std::size_t>(n) * shape_.h() + h) * shape_.w() + w) * shape_.c() + c;
  }
  T& at(int n, int h, int w, int c) { return data_[index(n, h, w, c)]; }
  const T& at(int n, int h, int w, int c) const { return data_[index(n, h, w, c)]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  // Same data, different footprint (sizes must agree).
  Tensor reshaped(Shape s) const {
    if (s.size() != shape_.size())
      throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
    return Tensor(s, data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  Tensor& operator+=(const Tensor& o) {
    if (o.shape_ != shape_)
      throw ShapeError("cannot accumulate " + o.shape_.str() + " into " + shape_.str());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

}  // namespace blindsweep::nn
