#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "qrn/rng.hpp"
#include "qrn/tape.hpp"

namespace qrn {

template <class T>
Tensor<T> lower_triangular_ones(std::size_t n) {
  Tensor<T> t(Shape::mat(n, n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) t(i, j) = T(1);
  return t;
}

template <class T>
Tensor<T> strictly_lower_triangular_ones(std::size_t n) {
  Tensor<T> t(Shape::mat(n, n));
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) t(i, j) = T(1);
  return t;
}

namespace detail {

// Gate columns arrive either as [T] vectors or [T x 1] matrices.
template <class T>
VarPtr<T> as_gate_vector(Tape<T>& tape, const VarPtr<T>& g) {
  const Shape& s = g->value.shape;
  if (s.rank == 1) return g;
  if (s.rank == 2 && s.d1 == 1) return column(tape, g, 0);
  throw ShapeError("scan: gate shape " + s.str() + " is not a column");
}

template <class T>
void require_gates_in_range(const VarPtr<T>& g) {
  for (const T& z : g->value.data)
    if (!(z >= T(0) && z <= T(1)))
      throw DomainError("scan: gate value outside [0, 1]");
}

}  // namespace detail

/// Accumulated-decay matrix for one gate column: entry (t, i) holds the
/// product of (1 - z_j) for j in (i, t], 1 on the diagonal, 0 above it.
/// Built as mask(exp(cumulate(mask(tile(log(1 - z)))))) so no infinities
/// enter the arithmetic and gradients flow through exp and log.
template <class T>
VarPtr<T> build_decay_matrix(Tape<T>& tape, const VarPtr<T>& gate) {
  auto z = detail::as_gate_vector(tape, gate);
  detail::require_gates_in_range(z);
  const std::size_t n = z->value.size();
  auto survive = sub(tape, tape.constant(Tensor<T>::scalar(T(1))), z);  // 1 - z, [T]
  auto logs = log_op(tape, survive);
  auto tiled = tile_cols(tape, logs, n);                                 // row i = log(1 - z_i)
  auto masked = mul(tape, tiled, tape.constant(strictly_lower_triangular_ones<T>(n)));
  auto sums = cumsum_rows(tape, masked);  // (t, i) = sum of logs over (i, t]
  auto grown = exp_op(tape, sums);
  return mul(tape, grown, tape.constant(lower_triangular_ones<T>(n)));
}

/// Scalar-gate closed form spelled out op by op: H = Decay . (Z o Htilde),
/// with the reset column folded into the candidates first when present.
/// Kept as the transparent reference; scan_scalar computes the identical
/// value through one fused node.
template <class T>
VarPtr<T> scan_scalar_via_decay(Tape<T>& tape, const VarPtr<T>& update,
                                const VarPtr<T>& candidates, const VarPtr<T>& reset = nullptr) {
  auto z = detail::as_gate_vector(tape, update);
  const std::size_t steps = z->value.size();
  if (candidates->value.shape.rank != 2 || candidates->value.rows() != steps)
    throw ShapeError("scan_scalar: candidates " + candidates->value.shape.str() + " vs " +
                     std::to_string(steps) + " steps");
  const std::size_t width = candidates->value.cols();
  auto decay = build_decay_matrix(tape, z);
  auto weighted = mul(tape, tile_cols(tape, z, width), candidates);
  if (reset) {
    auto r = detail::as_gate_vector(tape, reset);
    if (r->value.size() != steps) throw ShapeError("scan_scalar: reset length mismatch");
    weighted = mul(tape, tile_cols(tape, r, width), weighted);
  }
  return matmul(tape, decay, weighted);
}

/// Op-by-op vector-gate form: one independent scalar scan per hidden
/// dimension, each with its own decay matrix. Reference for scan_vector.
template <class T>
VarPtr<T> scan_vector_via_decay(Tape<T>& tape, const VarPtr<T>& update,
                                const VarPtr<T>& candidates, const VarPtr<T>& reset = nullptr) {
  const Shape& zs = update->value.shape;
  const Shape& cs = candidates->value.shape;
  if (zs.rank != 2 || cs.rank != 2 || zs.d0 != cs.d0 || zs.d1 != cs.d1)
    throw ShapeError("scan_vector: gates " + zs.str() + " vs candidates " + cs.str());
  if (reset && reset->value.shape != zs)
    throw ShapeError("scan_vector: reset " + reset->value.shape.str() + " vs gates " + zs.str());
  std::vector<VarPtr<T>> out_cols;
  out_cols.reserve(zs.d1);
  for (std::size_t j = 0; j < zs.d1; ++j) {
    auto zj = column(tape, update, j);
    auto cj = column(tape, candidates, j);
    auto weighted = mul(tape, zj, cj);
    if (reset) weighted = mul(tape, column(tape, reset, j), weighted);
    auto decay = build_decay_matrix(tape, zj);
    out_cols.push_back(matmul(tape, decay, weighted));
  }
  return stack_cols(tape, out_cols);
}

namespace detail {

/// Decay row recurrence: row t is row t-1 scaled by (1 - z_t), diagonal 1.
/// Same entries build_decay_matrix produces through logs and exps.
template <class T>
void fill_decay(const T* z, std::size_t n, std::size_t stride, Tensor<T>& d) {
  for (auto& x : d.data) x = T(0);
  d(0, 0) = T(1);
  for (std::size_t t = 1; t < n; ++t) {
    const T survive = T(1) - z[t * stride];
    const T* prev = d.data.data() + (t - 1) * n;
    T* cur = d.data.data() + t * n;
    for (std::size_t i = 0; i < t; ++i) cur[i] = survive * prev[i];
    cur[t] = T(1);
  }
}

/// One fused node for the closed-form scan. Forward materializes the decay
/// matrix and multiplies it into the gated candidates (lower triangle only,
/// the rest is zero by construction). Backward applies the exact adjoint of
/// that product: with a_t = g_t + G_{t+1} and G_t = (1-z_t) a_t,
///   dHtilde_t = z_t r_t a_t,
///   dz_t = -<H_{t-1}, a_t> + r_t <c_t, a_t>   (per dimension when gates are
///   vectors; the first term is the decay matrix's own dependence on z_t,
///   which telescopes to -H_{t-1} because D[t][i] = D[t-1][i](1-z_t)),
///   dr_t = z_t <c_t, a_t>.
/// Division-free, so gates saturated at 1 stay finite.
template <class T>
VarPtr<T> fused_scan(Tape<T>& tape, const VarPtr<T>& z, const VarPtr<T>& candidates,
                     const VarPtr<T>& reset, bool vector_gates) {
  const std::size_t steps = candidates->value.rows();
  const std::size_t width = candidates->value.cols();
  const std::size_t gate_stride = vector_gates ? width : 1;
  require_gates_in_range(z);
  if (reset) require_gates_in_range(reset);

  const T* zv = z->value.data.data();
  const T* cv = candidates->value.data.data();
  const T* rv = reset ? reset->value.data.data() : nullptr;

  // W = Z o R o Htilde with the gate column(s) broadcast across width.
  Tensor<T> w(Shape::mat(steps, width));
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t k = 0; k < width; ++k) {
      const std::size_t gi = t * gate_stride + (vector_gates ? k : 0);
      T x = zv[gi] * cv[t * width + k];
      if (rv) x *= rv[gi];
      w(t, k) = x;
    }

  Tensor<T> h(Shape::mat(steps, width));
  if (!vector_gates) {
    Tensor<T> decay(Shape::mat(steps, steps));
    fill_decay(zv, steps, 1, decay);
    for (std::size_t t = 0; t < steps; ++t) {
      const T* drow = decay.data.data() + t * steps;
      T* hrow = h.data.data() + t * width;
      for (std::size_t k = 0; k < width; ++k) hrow[k] = T(0);
      for (std::size_t i = 0; i <= t; ++i) {
        const T dv = drow[i];
        const T* wrow = w.data.data() + i * width;
        for (std::size_t k = 0; k < width; ++k) hrow[k] += dv * wrow[k];
      }
    }
  } else {
    Tensor<T> decay(Shape::mat(steps, steps));
    for (std::size_t j = 0; j < width; ++j) {
      fill_decay(zv + j, steps, width, decay);
      for (std::size_t t = 0; t < steps; ++t) {
        const T* drow = decay.data.data() + t * steps;
        T acc = T(0);
        for (std::size_t i = 0; i <= t; ++i) acc += drow[i] * w(i, j);
        h(t, j) = acc;
      }
    }
  }

  const bool ng = z->needs_grad || candidates->needs_grad || (reset && reset->needs_grad);
  auto res = tape.make(std::move(h), ng);
  if (res->needs_grad) {
    tape.record([z, candidates, reset, res, steps, width, gate_stride, vector_gates]() {
      if (res->grad_empty()) return;
      const T* g = res->grad.data.data();
      const T* hv = res->value.data.data();
      const T* zv = z->value.data.data();
      const T* cv = candidates->value.data.data();
      const T* rv = reset ? reset->value.data.data() : nullptr;
      T* zg = z->needs_grad ? z->grad_data() : nullptr;
      T* cg = candidates->needs_grad ? candidates->grad_data() : nullptr;
      T* rg = reset && reset->needs_grad ? reset->grad_data() : nullptr;

      std::vector<T> run(width, T(0));  // G_{t+1} during iteration t
      for (std::size_t t = steps; t-- > 0;) {
        const T* hprev = t > 0 ? hv + (t - 1) * width : nullptr;
        for (std::size_t k = 0; k < width; ++k) {
          const std::size_t gi = t * gate_stride + (vector_gates ? k : 0);
          const T zt = zv[gi];
          const T rt = rv ? rv[gi] : T(1);
          const T a = g[t * width + k] + run[k];
          const T c = cv[t * width + k];
          if (cg) cg[t * width + k] += zt * rt * a;
          if (zg) {
            T dz = rt * c * a;
            if (hprev) dz -= hprev[k] * a;
            if (vector_gates)
              zg[gi] += dz;
            else
              zg[t] += dz;
          }
          if (rg) rg[gi] += zt * c * a;
          run[k] = (T(1) - zt) * a;
        }
      }
    });
  }
  return res;
}

}  // namespace detail

/// Closed-form scalar-gate scan as one fused node; value and gradient agree
/// with scan_scalar_via_decay and with the sequential recurrence.
template <class T>
VarPtr<T> scan_scalar(Tape<T>& tape, const VarPtr<T>& update, const VarPtr<T>& candidates,
                      const VarPtr<T>& reset = nullptr) {
  auto z = detail::as_gate_vector(tape, update);
  const std::size_t steps = z->value.size();
  if (candidates->value.shape.rank != 2 || candidates->value.rows() != steps)
    throw ShapeError("scan_scalar: candidates " + candidates->value.shape.str() + " vs " +
                     std::to_string(steps) + " steps");
  VarPtr<T> r;
  if (reset) {
    r = detail::as_gate_vector(tape, reset);
    if (r->value.size() != steps) throw ShapeError("scan_scalar: reset length mismatch");
  }
  return detail::fused_scan(tape, z, candidates, r, /*vector_gates=*/false);
}

/// Closed-form vector-gate scan: d independent per-dimension decays inside
/// one fused node.
template <class T>
VarPtr<T> scan_vector(Tape<T>& tape, const VarPtr<T>& update, const VarPtr<T>& candidates,
                      const VarPtr<T>& reset = nullptr) {
  const Shape& zs = update->value.shape;
  const Shape& cs = candidates->value.shape;
  if (zs.rank != 2 || cs.rank != 2 || zs.d0 != cs.d0 || zs.d1 != cs.d1)
    throw ShapeError("scan_vector: gates " + zs.str() + " vs candidates " + cs.str());
  if (reset && reset->value.shape != zs)
    throw ShapeError("scan_vector: reset " + reset->value.shape.str() + " vs gates " + zs.str());
  return detail::fused_scan(tape, update, candidates, reset, /*vector_gates=*/true);
}

/// Dispatch on gate width: one column means scalar gates.
template <class T>
VarPtr<T> scan(Tape<T>& tape, const VarPtr<T>& update, const VarPtr<T>& candidates,
               const VarPtr<T>& reset = nullptr) {
  const Shape& s = update->value.shape;
  if (s.rank == 1 || s.d1 == 1) return scan_scalar(tape, update, candidates, reset);
  return scan_vector(tape, update, candidates, reset);
}

/// Step-by-step reference recurrence on the tape. Gates as [T]/[T x 1]
/// (scalar) or [T x d] (vector). `initial` defaults to the zero state.
template <class T>
VarPtr<T> sequential_recurrence(Tape<T>& tape, const VarPtr<T>& update,
                                const VarPtr<T>& candidates, const VarPtr<T>& reset = nullptr,
                                const VarPtr<T>& initial = nullptr) {
  const std::size_t steps = candidates->value.rows();
  const std::size_t width = candidates->value.cols();
  const bool vector_gates = update->value.shape.rank == 2 && update->value.cols() > 1;
  if (update->value.rows() != steps && update->value.size() != steps)
    throw ShapeError("sequential_recurrence: gates " + update->value.shape.str() + " vs " +
                     std::to_string(steps) + " steps");

  auto gate_at = [&](const VarPtr<T>& gates, std::size_t t) {
    if (gates->value.shape.rank == 1) return pick(tape, gates, t);
    return vector_gates ? row(tape, gates, t) : pick(tape, gates, t);
  };

  auto one = tape.constant(Tensor<T>::scalar(T(1)));
  VarPtr<T> state = initial ? initial : tape.constant(Tensor<T>(Shape::vec(width)));
  std::vector<VarPtr<T>> states;
  states.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    auto z = gate_at(update, t);
    detail::require_gates_in_range(z);
    auto cand = row(tape, candidates, t);
    if (reset) cand = mul(tape, gate_at(reset, t), cand);
    auto taken = mul(tape, z, cand);
    auto kept = mul(tape, sub(tape, one, z), state);
    state = add(tape, taken, kept);
    states.push_back(state);
  }
  return stack_rows(tape, states);
}

struct ScanBenchResult {
  std::size_t steps = 0, width = 0, batch = 0;
  double seq_ms = 0, par_ms = 0, ratio = 0;  // ratio = seq / par
  double max_abs_diff = 0;
};

inline std::string format_bench_record(const ScanBenchResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "T=%zu d=%zu batch=%zu seq_ms=%.3f par_ms=%.3f ratio=%.3f",
                r.steps, r.width, r.batch, r.seq_ms, r.par_ms, r.ratio);
  return buf;
}

/// Times one training-shaped pass (forward + backward of a summed output)
/// per batch item through each path on identical random inputs. Outputs are
/// compared before any timing is reported; disagreement aborts.
template <class T>
ScanBenchResult benchmark_scan(std::size_t steps, std::size_t width, std::size_t batch,
                               std::size_t repeats = 5, std::uint64_t seed = 7) {
  if (steps == 0 || width == 0 || batch == 0 || repeats == 0)
    throw InputError("benchmark_scan: sizes must be positive");

  struct Item {
    Parameter<T> gates, candidates, reset;
  };
  Rng rng(derive_seed(seed, 0xBE));
  std::vector<Item> items;
  items.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    Tensor<T> z(Shape::mat(steps, 1));
    for (auto& v : z.data) v = static_cast<T>(rng.uniform(0.01, 0.99));
    Tensor<T> c(Shape::mat(steps, width));
    for (auto& v : c.data) v = static_cast<T>(rng.uniform(-1.0, 1.0));
    Tensor<T> r(Shape::mat(steps, 1));
    for (auto& v : r.data) v = static_cast<T>(rng.uniform(0.01, 0.99));
    items.push_back({Parameter<T>("gates", std::move(z)),
                     Parameter<T>("candidates", std::move(c)),
                     Parameter<T>("reset", std::move(r))});
  }

  auto run_item = [&](Item& it, bool parallel) {
    Tape<T> tape;
    auto z = tape.use(it.gates);
    auto c = tape.use(it.candidates);
    auto r = tape.use(it.reset);
    auto h = parallel ? scan_scalar(tape, z, c, r) : sequential_recurrence(tape, z, c, r);
    tape.backward(sum_all(tape, h));
    return h->value;
  };

  ScanBenchResult res;
  res.steps = steps;
  res.width = width;
  res.batch = batch;
  for (std::size_t b = 0; b < batch; ++b) {
    auto seq = run_item(items[b], false);
    auto par = run_item(items[b], true);
    res.max_abs_diff =
        std::max(res.max_abs_diff, static_cast<double>(max_abs_diff(seq, par)));
  }
  const double tol = sizeof(T) == 4 ? 1e-4 : 1e-9;
  if (res.max_abs_diff >= tol)
    throw NumericCheckError("benchmark_scan: paths disagree, max-abs " +
                            std::to_string(res.max_abs_diff));

  auto time_pass = [&](bool parallel) {
    auto begin = std::chrono::steady_clock::now();
    for (auto& it : items) {
      it.gates.zero_gradient();
      it.candidates.zero_gradient();
      it.reset.zero_gradient();
      run_item(it, parallel);
    }
    auto end = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(end - begin).count();
  };

  std::vector<double> seq_times, par_times;
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    seq_times.push_back(time_pass(false));
    par_times.push_back(time_pass(true));
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  res.seq_ms = median(seq_times);
  res.par_ms = median(par_times);
  res.ratio = res.par_ms > 0 ? res.seq_ms / res.par_ms : 0.0;
  return res;
}

}  // namespace qrn
