#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qrn/error.hpp"

namespace qrn {

/// Dense shapes here are rank 1 (vectors) or rank 2 (row-major matrices).
/// Scalars travel as rank-1 tensors of size 1.
struct Shape {
  std::size_t d0 = 0;
  std::size_t d1 = 0;
  std::uint8_t rank = 0;

  static Shape vec(std::size_t n) { return Shape{n, 0, 1}; }
  static Shape mat(std::size_t r, std::size_t c) { return Shape{r, c, 2}; }

  std::size_t size() const { return rank == 0 ? 0 : (rank == 1 ? d0 : d0 * d1); }
  std::size_t rows() const { return d0; }
  std::size_t cols() const { return rank == 2 ? d1 : d0; }

  bool operator==(const Shape& o) const {
    return rank == o.rank && d0 == o.d0 && (rank < 2 || d1 == o.d1);
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    if (rank == 0) return "[]";
    if (rank == 1) return "[" + std::to_string(d0) + "]";
    return "[" + std::to_string(d0) + "x" + std::to_string(d1) + "]";
  }
};

template <class T>
class Tensor {
 public:
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), data(s.size(), T(0)) {}
  Tensor(Shape s, std::vector<T> values) : shape(s), data(std::move(values)) {
    if (data.size() != s.size())
      throw ShapeError("tensor init: " + std::to_string(data.size()) +
                       " values for shape " + s.str());
  }

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, T v) {
    Tensor t(s);
    for (auto& x : t.data) x = v;
    return t;
  }
  static Tensor scalar(T v) { return Tensor(Shape::vec(1), {v}); }
  static Tensor vec(std::vector<T> values) {
    Shape s = Shape::vec(values.size());
    return Tensor(s, std::move(values));
  }
  static Tensor mat(std::size_t r, std::size_t c, std::vector<T> values) {
    return Tensor(Shape::mat(r, c), std::move(values));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.rows(); }
  std::size_t cols() const { return shape.cols(); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  T& operator()(std::size_t r, std::size_t c) { return data[r * shape.d1 + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * shape.d1 + c]; }

  bool all_finite() const {
    for (const T& x : data)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }
};

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape)
    throw ShapeError("max_abs_diff: " + a.shape.str() + " vs " + b.shape.str());
  T worst = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    T d = std::abs(a[i] - b[i]);
    if (d > worst) worst = d;
  }
  return worst;
}

}  // namespace qrn
