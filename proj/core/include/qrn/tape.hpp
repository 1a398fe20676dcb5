#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qrn/parameter.hpp"
#include "qrn/tensor.hpp"

namespace qrn {

// Inputs to log() below this are clamped to it; the clamped region has zero
// gradient. Keeps log(1 - gate) and cross-entropy finite at saturation.
inline constexpr double kLogFloor = 1e-8;

template <class T>
struct Var {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first touch
  bool needs_grad = false;

  Var(Tensor<T> v, bool ng) : value(std::move(v)), needs_grad(ng) {}

  bool grad_empty() const { return grad.data.empty(); }
  T* grad_data() {
    if (grad.data.empty()) grad = Tensor<T>::zeros(value.shape);
    return grad.data.data();
  }
};

template <class T>
using VarPtr = std::shared_ptr<Var<T>>;

/// Records each forward operation; backward() replays them in reverse and
/// then adds leaf gradients into their Parameters. One tape per example.
template <class T>
class Tape {
 public:
  VarPtr<T> constant(Tensor<T> v) {
    return std::make_shared<Var<T>>(std::move(v), false);
  }

  /// Leaf for a trainable parameter. The same Parameter object always maps
  /// to the same Var, so reuse (tied weights) accumulates naturally.
  VarPtr<T> use(Parameter<T>& p) {
    auto it = leaf_index_.find(&p);
    if (it != leaf_index_.end()) return leaves_[it->second].second;
    auto v = std::make_shared<Var<T>>(p.value, recording_);
    leaf_index_.emplace(&p, leaves_.size());
    leaves_.emplace_back(&p, v);
    return v;
  }

  VarPtr<T> make(Tensor<T> v, bool ng) {
    return std::make_shared<Var<T>>(std::move(v), ng && recording_);
  }

  void record(std::function<void()> step) {
    if (recording_) steps_.push_back(std::move(step));
  }

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  std::size_t node_count() const { return steps_.size(); }

  void backward(const VarPtr<T>& loss) {
    if (!loss || loss->value.size() != 1)
      throw ContractError("backward requires a scalar loss");
    if (!recording_) throw ContractError("backward on a non-recording tape");
    loss->grad_data()[0] += T(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    for (auto& [param, var] : leaves_) {
      if (var->grad_empty()) continue;  // unreachable from loss, gradient zero
      const T* g = var->grad.data.data();
      T* dst = param->gradient.data.data();
      for (std::size_t i = 0; i < param->gradient.size(); ++i) dst[i] += g[i];
    }
  }

 private:
  std::vector<std::function<void()>> steps_;
  std::vector<std::pair<Parameter<T>*, VarPtr<T>>> leaves_;
  std::unordered_map<const Parameter<T>*, std::size_t> leaf_index_;
  bool recording_ = true;
};

namespace detail {

// c[m x n] += a[m x k] * b[k x n]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x k] += a[m x n] * b^T, b stored [k x n]
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    T* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc = T(0);
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// c[k x n] += a^T * b, a stored [m x k], b stored [m x n]
template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

enum class Broadcast { same, a_scalar, b_scalar, b_row };

inline Broadcast classify(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return Broadcast::same;
  if (b.size() == 1) return Broadcast::b_scalar;
  if (a.size() == 1) return Broadcast::a_scalar;
  if (a.rank == 2 && b.rank == 1 && b.d0 == a.d1) return Broadcast::b_row;
  throw ShapeError(std::string(op) + ": " + a.str() + " vs " + b.str());
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operations. Each computes the forward value eagerly and, when the tape is
// recording, pushes a closure that accumulates input gradients from the
// output gradient. Closures skip inputs that do not need gradients.

template <class T>
VarPtr<T> matmul(Tape<T>& tape, const VarPtr<T>& a, const VarPtr<T>& b) {
  const Shape& sa = a->value.shape;
  const Shape& sb = b->value.shape;
  if (sa.rank != 2) throw ShapeError("matmul: left operand " + sa.str() + " is not a matrix");
  const std::size_t m = sa.d0, k = sa.d1;

  if (sb.rank == 1) {  // matrix * vector
    if (sb.d0 != k) throw ShapeError("matmul: " + sa.str() + " vs " + sb.str());
    Tensor<T> out(Shape::vec(m));
    for (std::size_t i = 0; i < m; ++i) {
      const T* arow = a->value.data.data() + i * k;
      const T* x = b->value.data.data();
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * x[p];
      out[i] = acc;
    }
    auto res = tape.make(std::move(out), a->needs_grad || b->needs_grad);
    tape.record([a, b, res, m, k]() {
      if (res->grad_empty()) return;
      const T* g = res->grad.data.data();
      if (a->needs_grad) {
        T* da = a->grad_data();
        const T* x = b->value.data.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) da[i * k + p] += g[i] * x[p];
      }
      if (b->needs_grad) {
        T* dx = b->grad_data();
        const T* av = a->value.data.data();
        for (std::size_t i = 0; i < m; ++i) {
          const T gi = g[i];
          const T* arow = av + i * k;
          for (std::size_t p = 0; p < k; ++p) dx[p] += gi * arow[p];
        }
      }
    });
    return res;
  }

  if (sb.rank != 2 || sb.d0 != k) throw ShapeError("matmul: " + sa.str() + " vs " + sb.str());
  const std::size_t n = sb.d1;
  Tensor<T> out(Shape::mat(m, n));
  detail::gemm_nn(a->value.data.data(), b->value.data.data(), out.data.data(), m, k, n);
  auto res = tape.make(std::move(out), a->needs_grad || b->needs_grad);
  tape.record([a, b, res, m, k, n]() {
    if (res->grad_empty()) return;
    const T* g = res->grad.data.data();
    if (a->needs_grad)
      detail::gemm_nt(g, b->value.data.data(), a->grad_data(), m, n, k);
    if (b->needs_grad)
      detail::gemm_tn(a->value.data.data(), g, b->grad_data(), m, k, n);
  });
  return res;
}

template <class T>
VarPtr<T> transpose(Tape<T>& tape, const VarPtr<T>& a) {
  const Shape& s = a->value.shape;
  if (s.rank != 2) throw ShapeError("transpose: " + s.str() + " is not a matrix");
  const std::size_t m = s.d0, n = s.d1;
  Tensor<T> out(Shape::mat(n, m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a->value(i, j);
  auto res = tape.make(std::move(out), a->needs_grad);
  tape.record([a, res, m, n]() {
    if (res->grad_empty() || !a->needs_grad) return;
    T* da = a->grad_data();
    const T* g = res->grad.data.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) da[i * n + j] += g[j * m + i];
  });
  return res;
}

namespace detail {

enum class Arith { add, sub, mul };

template <class T>
VarPtr<T> binary(Tape<T>& tape, Arith op, const VarPtr<T>& a, const VarPtr<T>& b) {
  const char* name = op == Arith::add ? "add" : (op == Arith::sub ? "sub" : "mul");
  const Broadcast mode = classify(name, a->value.shape, b->value.shape);
  const std::size_t n = a->value.size();
  const std::size_t cols = a->value.shape.cols();
  const T* av = a->value.data.data();
  const T* bv = b->value.data.data();

  Tensor<T> out(mode == Broadcast::a_scalar ? b->value.shape : a->value.shape);
  T* o = out.data.data();
  switch (mode) {
    case Broadcast::same:
      for (std::size_t i = 0; i < n; ++i)
        o[i] = op == Arith::add ? av[i] + bv[i] : (op == Arith::sub ? av[i] - bv[i] : av[i] * bv[i]);
      break;
    case Broadcast::b_scalar: {
      const T s = bv[0];
      for (std::size_t i = 0; i < n; ++i)
        o[i] = op == Arith::add ? av[i] + s : (op == Arith::sub ? av[i] - s : av[i] * s);
      break;
    }
    case Broadcast::a_scalar: {
      const T s = av[0];
      const std::size_t bn = b->value.size();
      for (std::size_t i = 0; i < bn; ++i)
        o[i] = op == Arith::add ? s + bv[i] : (op == Arith::sub ? s - bv[i] : s * bv[i]);
      break;
    }
    case Broadcast::b_row:
      for (std::size_t i = 0; i < n; ++i) {
        const T s = bv[i % cols];
        o[i] = op == Arith::add ? av[i] + s : (op == Arith::sub ? av[i] - s : av[i] * s);
      }
      break;
  }

  auto res = tape.make(std::move(out), a->needs_grad || b->needs_grad);
  tape.record([a, b, res, op, mode, cols]() {
    if (res->grad_empty()) return;
    const T* g = res->grad.data.data();
    const std::size_t gn = res->grad.size();
    const T* av = a->value.data.data();
    const T* bv = b->value.data.data();
    if (a->needs_grad) {
      T* da = a->grad_data();
      switch (mode) {
        case Broadcast::same:
        case Broadcast::b_scalar:
        case Broadcast::b_row:
          if (op == Arith::mul) {
            if (mode == Broadcast::same)
              for (std::size_t i = 0; i < gn; ++i) da[i] += g[i] * bv[i];
            else if (mode == Broadcast::b_scalar)
              for (std::size_t i = 0; i < gn; ++i) da[i] += g[i] * bv[0];
            else
              for (std::size_t i = 0; i < gn; ++i) da[i] += g[i] * bv[i % cols];
          } else {
            for (std::size_t i = 0; i < gn; ++i) da[i] += g[i];
          }
          break;
        case Broadcast::a_scalar: {
          T acc = T(0);
          if (op == Arith::mul)
            for (std::size_t i = 0; i < gn; ++i) acc += g[i] * bv[i];
          else
            for (std::size_t i = 0; i < gn; ++i) acc += g[i];
          da[0] += acc;
          break;
        }
      }
    }
    if (b->needs_grad) {
      T* db = b->grad_data();
      switch (mode) {
        case Broadcast::same:
          if (op == Arith::mul)
            for (std::size_t i = 0; i < gn; ++i) db[i] += g[i] * av[i];
          else if (op == Arith::sub)
            for (std::size_t i = 0; i < gn; ++i) db[i] -= g[i];
          else
            for (std::size_t i = 0; i < gn; ++i) db[i] += g[i];
          break;
        case Broadcast::b_scalar: {
          T acc = T(0);
          if (op == Arith::mul)
            for (std::size_t i = 0; i < gn; ++i) acc += g[i] * av[i];
          else
            for (std::size_t i = 0; i < gn; ++i) acc += g[i];
          db[0] += op == Arith::sub ? -acc : acc;
          break;
        }
        case Broadcast::a_scalar:
          if (op == Arith::mul)
            for (std::size_t i = 0; i < gn; ++i) db[i] += g[i] * av[0];
          else if (op == Arith::sub)
            for (std::size_t i = 0; i < gn; ++i) db[i] -= g[i];
          else
            for (std::size_t i = 0; i < gn; ++i) db[i] += g[i];
          break;
        case Broadcast::b_row:
          if (op == Arith::mul)
            for (std::size_t i = 0; i < gn; ++i) db[i % cols] += g[i] * av[i];
          else if (op == Arith::sub)
            for (std::size_t i = 0; i < gn; ++i) db[i % cols] -= g[i];
          else
            for (std::size_t i = 0; i < gn; ++i) db[i % cols] += g[i];
          break;
      }
    }
  });
  return res;
}

}  // namespace detail

template <class T>
VarPtr<T> add(Tape<T>& tape, const VarPtr<T>& a, const VarPtr<T>& b) {
  return detail::binary(tape, detail::Arith::add, a, b);
}
template <class T>
VarPtr<T> sub(Tape<T>& tape, const VarPtr<T>& a, const VarPtr<T>& b) {
  return detail::binary(tape, detail::Arith::sub, a, b);
}
template <class T>
VarPtr<T> mul(Tape<T>& tape, const VarPtr<T>& a, const VarPtr<T>& b) {
  return detail::binary(tape, detail::Arith::mul, a, b);
}

template <class T>
VarPtr<T> scale(Tape<T>& tape, const VarPtr<T>& a, T c) {
  Tensor<T> out(a->value.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * c;
  auto res = tape.make(std::move(out), a->needs_grad);
  tape.record([a, res, c]() {
    if (res->grad_empty() || !a->needs_grad) return;
    T* da = a->grad_data();
    const T* g = res->grad.data.data();
    for (std::size_t i = 0; i < res->grad.size(); ++i) da[i] += g[i] * c;
  });
  return res;
}

template <class T>
VarPtr<T> sigmoid(Tape<T>& tape, const VarPtr<T>& a) {
  Tensor<T> out(a->value.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::stable_sigmoid(a->value[i]);
  auto res = tape.make(std::move(out), a->needs_grad);
  tape.record([a, res]() {
    if (res->grad_empty() || !a->needs_grad) return;
    T* da = a->grad_data();
    const T* g = res->grad.data.data();
    const T* y = res->value.data.data();
    for (std::size_t i = 0; i < res->grad.size(); ++i) da[i] += g[i] * y[i] * (T(1) - y[i]);
  });
  return res;
}

template <class T>
VarPtr<T> tanh_op(Tape<T>& tape, const VarPtr<T>& a) {
  Tensor<T> out(a->value.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a->value[i]);
  auto res = tape.make(std::move(out), a->needs_grad);
  tape.record([a, res]() {
    if (res->grad_empty() || !a->needs_grad) return;
    T* da = a->grad_data();
    const T* g = res->grad.data.data();
    const T* y = res->value.data.data();
    for (std::size_t i = 0; i < res->grad.size(); ++i) da[i] += g[i] * (T(1) - y[i] * y[i]);
  });
  return res;
}

template <class T>
VarPtr<T> exp_op(Tape<T>& tape, const VarPtr<T>& a) {
  Tensor<T> out(a->value.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a->value[i]);
  auto res = tape.make(std::move(out), a->needs_grad);
  tape.record([a, res]() {
    if (res->grad_empty() || !a->needs_grad) return;
    T* da = a->grad_data();
    const T* g = res->grad.data.data();
    const T* y = res->value.data.data();
    for (std::size_t i = 0; i < res->grad.size(); ++i) da[i] += g[i] * y[i];
  });
  return res;
}

/// log with inputs clamped up to kLogFloor. Strictly negative input is a
/// domain error; the clamped region contributes zero gradient.
template <class T>
VarPtr<T> log_op(Tape<T>& tape, const VarPtr<T>& a) {
  const T floor = static_cast<T>(kLogFloor);
  Tensor<T> out(a->value.shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    T x = a->value[i];
    if (x < T(0)) throw DomainError("log of negative value");
    out[i] = std::log(x < floor ? floor : x);
  }
  auto res = tape.make(std::move(out), a->needs_grad);
  tape.record([a, res, floor]() {
    if (res->grad_empty() || !a->needs_grad) return;
    T* da = a->grad_data();
    const T* g = res->grad.data.data();
    const T* x = a->value.data.data();
    for (std::size_t i = 0; i < res->grad.size(); ++i)
      if (x[i] >= floor) da[i] += g[i] / x[i];
  });
  return res;
}

/// Row-wise softmax, numerically shifted by each row's max. Rank-1 input is
/// one row.
template <class T>
VarPtr<T> softmax_rows(Tape<T>& tape, const VarPtr<T>& a) {
  const Shape& s = a->value.shape;
  const std::size_t rows = s.rank == 2 ? s.d0 : 1;
  const std::size_t cols = s.rank == 2 ? s.d1 : s.d0;
  if (cols == 0) throw ShapeError("softmax: empty row");
  Tensor<T> out(s);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = a->value.data.data() + r * cols;
    T* y = out.data.data() + r * cols;
    T mx = x[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    T sum = T(0);
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    for (std::size_t j = 0; j < cols; ++j) y[j] /= sum;
  }
  auto res = tape.make(std::move(out), a->needs_grad);
  tape.record([a, res, rows, cols]() {
    if (res->grad_empty() || !a->needs_grad) return;
    T* da = a->grad_data();
    const T* g = res->grad.data.data();
    const T* y = res->value.data.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* gr = g + r * cols;
      const T* yr = y + r * cols;
      T dot = T(0);
      for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * yr[j];
      T* dar = da + r * cols;
      for (std::size_t j = 0; j < cols; ++j) dar[j] += yr[j] * (gr[j] - dot);
    }
  });
  return res;
}

template <class T>
VarPtr<T> sum_all(Tape<T>& tape, const VarPtr<T>& a) {
  T acc = T(0);
  for (const T& x : a->value.data) acc += x;
  auto res = tape.make(Tensor<T>::scalar(acc), a->needs_grad);
  tape.record([a, res]() {
    if (res->grad_empty() || !a->needs_grad) return;
    T* da = a->grad_data();
    const T g = res->grad[0];
    for (std::size_t i = 0; i < a->value.size(); ++i) da[i] += g;
  });
  return res;
}

/// Column sums: [m x n] -> [n].
template <class T>
VarPtr<T> sum_axis0(Tape<T>& tape, const VarPtr<T>& a) {
  const Shape& s = a->value.shape;
  if (s.rank != 2) throw ShapeError("sum_axis0: " + s.str() + " is not a matrix");
  const std::size_t m = s.d0, n = s.d1;
  Tensor<T> out(Shape::vec(n));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a->value(i, j);
  auto res = tape.make(std::move(out), a->needs_grad);
  tape.record([a, res, m, n]() {
    if (res->grad_empty() || !a->needs_grad) return;
    T* da = a->grad_data();
    const T* g = res->grad.data.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) da[i * n + j] += g[j];
  });
  return res;
}

/// Single element by flat index, as a scalar tensor.
template <class T>
VarPtr<T> pick(Tape<T>& tape, const VarPtr<T>& a, std::size_t index) {
  if (index >= a->value.size())
    throw InputError("pick: index " + std::to_string(index) + " out of range for " +
                     a->value.shape.str());
  auto res = tape.make(Tensor<T>::scalar(a->value[index]), a->needs_grad);
  tape.record([a, res, index]() {
    if (res->grad_empty() || !a->needs_grad) return;
    a->grad_data()[index] += res->grad[0];
  });
  return res;
}

template <class T>
VarPtr<T> row(Tape<T>& tape, const VarPtr<T>& a, std::size_t r) {
  const Shape& s = a->value.shape;
  if (s.rank != 2) throw ShapeError("row: " + s.str() + " is not a matrix");
  if (r >= s.d0) throw InputError("row: index " + std::to_string(r) + " out of range");
  const std::size_t n = s.d1;
  Tensor<T> out(Shape::vec(n));
  for (std::size_t j = 0; j < n; ++j) out[j] = a->value(r, j);
  auto res = tape.make(std::move(out), a->needs_grad);
  tape.record([a, res, r, n]() {
    if (res->grad_empty() || !a->needs_grad) return;
    T* da = a->grad_data();
    const T* g = res->grad.data.data();
    for (std::size_t j = 0; j < n; ++j) da[r * n + j] += g[j];
  });
  return res;
}

template <class T>
VarPtr<T> column(Tape<T>& tape, const VarPtr<T>& a, std::size_t c) {
  const Shape& s = a->value.shape;
  if (s.rank != 2) throw ShapeError("column: " + s.str() + " is not a matrix");
  if (c >= s.d1) throw InputError("column: index " + std::to_string(c) + " out of range");
  const std::size_t m = s.d0, n = s.d1;
  Tensor<T> out(Shape::vec(m));
  for (std::size_t i = 0; i < m; ++i) out[i] = a->value(i, c);
  auto res = tape.make(std::move(out), a->needs_grad);
  tape.record([a, res, c, m, n]() {
    if (res->grad_empty() || !a->needs_grad) return;
    T* da = a->grad_data();
    const T* g = res->grad.data.data();
    for (std::size_t i = 0; i < m; ++i) da[i * n + c] += g[i];
  });
  return res;
}

/// Concatenate two vectors, or two matrices side by side (equal row counts).
template <class T>
VarPtr<T> concat(Tape<T>& tape, const VarPtr<T>& a, const VarPtr<T>& b) {
  const Shape& sa = a->value.shape;
  const Shape& sb = b->value.shape;
  Tensor<T> out;
  if (sa.rank == 1 && sb.rank == 1) {
    out = Tensor<T>(Shape::vec(sa.d0 + sb.d0));
    std::size_t i = 0;
    for (const T& x : a->value.data) out[i++] = x;
    for (const T& x : b->value.data) out[i++] = x;
  } else if (sa.rank == 2 && sb.rank == 2 && sa.d0 == sb.d0) {
    out = Tensor<T>(Shape::mat(sa.d0, sa.d1 + sb.d1));
    for (std::size_t r = 0; r < sa.d0; ++r) {
      for (std::size_t j = 0; j < sa.d1; ++j) out(r, j) = a->value(r, j);
      for (std::size_t j = 0; j < sb.d1; ++j) out(r, sa.d1 + j) = b->value(r, j);
    }
  } else {
    throw ShapeError("concat: " + sa.str() + " vs " + sb.str());
  }
  auto res = tape.make(std::move(out), a->needs_grad || b->needs_grad);
  tape.record([a, b, res, sa, sb]() {
    if (res->grad_empty()) return;
    const T* g = res->grad.data.data();
    if (sa.rank == 1) {
      if (a->needs_grad) {
        T* da = a->grad_data();
        for (std::size_t i = 0; i < sa.d0; ++i) da[i] += g[i];
      }
      if (b->needs_grad) {
        T* db = b->grad_data();
        for (std::size_t i = 0; i < sb.d0; ++i) db[i] += g[sa.d0 + i];
      }
    } else {
      const std::size_t w = sa.d1 + sb.d1;
      if (a->needs_grad) {
        T* da = a->grad_data();
        for (std::size_t r = 0; r < sa.d0; ++r)
          for (std::size_t j = 0; j < sa.d1; ++j) da[r * sa.d1 + j] += g[r * w + j];
      }
      if (b->needs_grad) {
        T* db = b->grad_data();
        for (std::size_t r = 0; r < sa.d0; ++r)
          for (std::size_t j = 0; j < sb.d1; ++j) db[r * sb.d1 + j] += g[r * w + sa.d1 + j];
      }
    }
  });
  return res;
}

template <class T>
VarPtr<T> stack_rows(Tape<T>& tape, const std::vector<VarPtr<T>>& rows) {
  if (rows.empty()) throw InputError("stack_rows: no rows");
  const Shape& s0 = rows[0]->value.shape;
  if (s0.rank != 1) throw ShapeError("stack_rows: rows must be vectors, got " + s0.str());
  const std::size_t n = s0.d0;
  bool ng = false;
  Tensor<T> out(Shape::mat(rows.size(), n));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r]->value.shape != s0)
      throw ShapeError("stack_rows: " + rows[r]->value.shape.str() + " vs " + s0.str());
    ng = ng || rows[r]->needs_grad;
    for (std::size_t j = 0; j < n; ++j) out(r, j) = rows[r]->value[j];
  }
  auto res = tape.make(std::move(out), ng);
  tape.record([rows, res, n]() {
    if (res->grad_empty()) return;
    const T* g = res->grad.data.data();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!rows[r]->needs_grad) continue;
      T* dr = rows[r]->grad_data();
      for (std::size_t j = 0; j < n; ++j) dr[j] += g[r * n + j];
    }
  });
  return res;
}

template <class T>
VarPtr<T> stack_cols(Tape<T>& tape, const std::vector<VarPtr<T>>& cols) {
  if (cols.empty()) throw InputError("stack_cols: no columns");
  const Shape& s0 = cols[0]->value.shape;
  if (s0.rank != 1) throw ShapeError("stack_cols: columns must be vectors, got " + s0.str());
  const std::size_t m = s0.d0, n = cols.size();
  bool ng = false;
  Tensor<T> out(Shape::mat(m, n));
  for (std::size_t c = 0; c < n; ++c) {
    if (cols[c]->value.shape != s0)
      throw ShapeError("stack_cols: " + cols[c]->value.shape.str() + " vs " + s0.str());
    ng = ng || cols[c]->needs_grad;
    for (std::size_t i = 0; i < m; ++i) out(i, c) = cols[c]->value[i];
  }
  auto res = tape.make(std::move(out), ng);
  tape.record([cols, res, m, n]() {
    if (res->grad_empty()) return;
    const T* g = res->grad.data.data();
    for (std::size_t c = 0; c < n; ++c) {
      if (!cols[c]->needs_grad) continue;
      T* dc = cols[c]->grad_data();
      for (std::size_t i = 0; i < m; ++i) dc[i] += g[i * n + c];
    }
  });
  return res;
}

/// Repeat a vector as every row: [n] -> [m x n].
template <class T>
VarPtr<T> tile_rows(Tape<T>& tape, const VarPtr<T>& v, std::size_t m) {
  const Shape& s = v->value.shape;
  if (s.rank != 1) throw ShapeError("tile_rows: " + s.str() + " is not a vector");
  const std::size_t n = s.d0;
  Tensor<T> out(Shape::mat(m, n));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = v->value[j];
  auto res = tape.make(std::move(out), v->needs_grad);
  tape.record([v, res, m, n]() {
    if (res->grad_empty() || !v->needs_grad) return;
    T* dv = v->grad_data();
    const T* g = res->grad.data.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dv[j] += g[i * n + j];
  });
  return res;
}

/// Repeat a vector as every column: [m] -> [m x n].
template <class T>
VarPtr<T> tile_cols(Tape<T>& tape, const VarPtr<T>& v, std::size_t n) {
  const Shape& s = v->value.shape;
  if (s.rank != 1) throw ShapeError("tile_cols: " + s.str() + " is not a vector");
  const std::size_t m = s.d0;
  Tensor<T> out(Shape::mat(m, n));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = v->value[i];
  auto res = tape.make(std::move(out), v->needs_grad);
  tape.record([v, res, m, n]() {
    if (res->grad_empty() || !v->needs_grad) return;
    T* dv = v->grad_data();
    const T* g = res->grad.data.data();
    for (std::size_t i = 0; i < m; ++i) {
      T acc = T(0);
      for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j];
      dv[i] += acc;
    }
  });
  return res;
}

/// Reverse row order of a matrix, or element order of a vector.
template <class T>
VarPtr<T> reverse_rows(Tape<T>& tape, const VarPtr<T>& a) {
  const Shape& s = a->value.shape;
  const std::size_t m = s.rank == 2 ? s.d0 : s.d0;
  const std::size_t n = s.rank == 2 ? s.d1 : 1;
  Tensor<T> out(s);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = a->value.data[(m - 1 - i) * n + j];
  auto res = tape.make(std::move(out), a->needs_grad);
  tape.record([a, res, m, n]() {
    if (res->grad_empty() || !a->needs_grad) return;
    T* da = a->grad_data();
    const T* g = res->grad.data.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) da[(m - 1 - i) * n + j] += g[i * n + j];
  });
  return res;
}

/// Select rows of a matrix by index; duplicate indices accumulate gradient.
template <class T>
VarPtr<T> gather_rows(Tape<T>& tape, const VarPtr<T>& a, std::vector<std::size_t> indices) {
  const Shape& s = a->value.shape;
  if (s.rank != 2) throw ShapeError("gather_rows: " + s.str() + " is not a matrix");
  if (indices.empty()) throw InputError("gather_rows: no indices");
  const std::size_t n = s.d1;
  Tensor<T> out(Shape::mat(indices.size(), n));
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= s.d0)
      throw InputError("gather_rows: index " + std::to_string(indices[r]) + " out of range");
    for (std::size_t j = 0; j < n; ++j) out(r, j) = a->value(indices[r], j);
  }
  auto res = tape.make(std::move(out), a->needs_grad);
  tape.record([a, res, idx = std::move(indices), n]() {
    if (res->grad_empty() || !a->needs_grad) return;
    T* da = a->grad_data();
    const T* g = res->grad.data.data();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) da[idx[r] * n + j] += g[r * n + j];
  });
  return res;
}

/// Inclusive prefix sums down each column: out[t][j] = sum_{k<=t} a[k][j].
/// Exactly multiplication by the all-ones lower-triangular matrix.
template <class T>
VarPtr<T> cumsum_rows(Tape<T>& tape, const VarPtr<T>& a) {
  const Shape& s = a->value.shape;
  if (s.rank != 2) throw ShapeError("cumsum_rows: " + s.str() + " is not a matrix");
  const std::size_t m = s.d0, n = s.d1;
  Tensor<T> out(s);
  for (std::size_t j = 0; j < n; ++j) out(0, j) = a->value(0, j);
  for (std::size_t i = 1; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = out(i - 1, j) + a->value(i, j);
  auto res = tape.make(std::move(out), a->needs_grad);
  tape.record([a, res, m, n]() {
    if (res->grad_empty() || !a->needs_grad) return;
    T* da = a->grad_data();
    const T* g = res->grad.data.data();
    std::vector<T> run(n, T(0));
    for (std::size_t i = m; i-- > 0;) {
      for (std::size_t j = 0; j < n; ++j) {
        run[j] += g[i * n + j];
        da[i * n + j] += run[j];
      }
    }
  });
  return res;
}

/// Dispatch by operation name. Shape- or index-bearing operations (tile,
/// pick, gather) take arguments that do not fit this surface and are called
/// directly.
template <class T>
VarPtr<T> forward_op(Tape<T>& tape, const std::string& kind, const std::vector<VarPtr<T>>& in) {
  auto want = [&](std::size_t n) {
    if (in.size() != n)
      throw InputError("forward_op " + kind + ": expected " + std::to_string(n) +
                       " inputs, got " + std::to_string(in.size()));
  };
  if (kind == "matmul") { want(2); return matmul(tape, in[0], in[1]); }
  if (kind == "add") { want(2); return add(tape, in[0], in[1]); }
  if (kind == "sub") { want(2); return sub(tape, in[0], in[1]); }
  if (kind == "mul") { want(2); return mul(tape, in[0], in[1]); }
  if (kind == "concat") { want(2); return concat(tape, in[0], in[1]); }
  if (kind == "transpose") { want(1); return transpose(tape, in[0]); }
  if (kind == "sigmoid") { want(1); return sigmoid(tape, in[0]); }
  if (kind == "tanh") { want(1); return tanh_op(tape, in[0]); }
  if (kind == "exp") { want(1); return exp_op(tape, in[0]); }
  if (kind == "log") { want(1); return log_op(tape, in[0]); }
  if (kind == "softmax") { want(1); return softmax_rows(tape, in[0]); }
  if (kind == "sum") { want(1); return sum_all(tape, in[0]); }
  if (kind == "sum_axis0") { want(1); return sum_axis0(tape, in[0]); }
  if (kind == "reverse_rows") { want(1); return reverse_rows(tape, in[0]); }
  if (kind == "cumsum_rows") { want(1); return cumsum_rows(tape, in[0]); }
  throw InputError("forward_op: unknown operation '" + kind + "'");
}

}  // namespace qrn
