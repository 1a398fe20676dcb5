#pragma once

#include <string>
#include <utility>

#include "qrn/rng.hpp"
#include "qrn/tensor.hpp"

namespace qrn {

/// A named trainable tensor with its gradient and AdaGrad accumulator.
/// Gradients accumulate across backward passes until zero_gradient().
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> gradient;
  Tensor<T> accumulator;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)),
        value(std::move(v)),
        gradient(Tensor<T>::zeros(value.shape)),
        accumulator(Tensor<T>::zeros(value.shape)) {}

  void zero_gradient() {
    for (auto& g : gradient.data) g = T(0);
  }

  void reset_accumulator() {
    for (auto& a : accumulator.data) a = T(0);
  }
};

/// Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)).
/// Rows index the output dimension, columns the input.
template <class T>
Tensor<T> glorot_uniform(Rng& rng, std::size_t rows, std::size_t cols) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor<T> t(Shape::mat(rows, cols));
  for (auto& x : t.data) x = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

template <class T>
Tensor<T> gaussian(Rng& rng, Shape shape, double stddev) {
  Tensor<T> t(shape);
  for (auto& x : t.data) x = static_cast<T>(rng.gauss(0.0, stddev));
  return t;
}

}  // namespace qrn
