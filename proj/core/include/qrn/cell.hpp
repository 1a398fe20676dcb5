#pragma once

#include <optional>
#include <vector>

#include "qrn/config.hpp"
#include "qrn/scan.hpp"
#include "qrn/tape.hpp"
#include "qrn/trace.hpp"

namespace qrn {

/// One layer's trainable tensors. Gate weights have one row for scalar
/// gates and d rows for vector gates; the reset gate carries no bias.
template <class T>
struct QrnLayerParams {
  Parameter<T> w_update;  // [gate_rows x d]
  Parameter<T> b_update;  // [gate_rows], initialized to the forget bias
  Parameter<T> w_reduce;  // [d x 2d]
  Parameter<T> b_reduce;  // [d]
  std::optional<Parameter<T>> w_reset;  // [gate_rows x d]
};

template <class T>
QrnLayerParams<T> init_layer_params(const QrnConfig& cfg, Rng& rng, const std::string& prefix) {
  const std::size_t d = cfg.hidden_size;
  const std::size_t gr = cfg.gate_rows();
  QrnLayerParams<T> p;
  p.w_update = Parameter<T>(prefix + "w_update", glorot_uniform<T>(rng, gr, d));
  p.b_update = Parameter<T>(prefix + "b_update",
                            Tensor<T>::full(Shape::vec(gr), static_cast<T>(cfg.forget_bias)));
  p.w_reduce = Parameter<T>(prefix + "w_reduce", glorot_uniform<T>(rng, d, 2 * d));
  p.b_reduce = Parameter<T>(prefix + "b_reduce", Tensor<T>(Shape::vec(d)));
  if (cfg.reset_gate)
    p.w_reset = Parameter<T>(prefix + "w_reset", glorot_uniform<T>(rng, gr, d));
  return p;
}

// --- single-timestep forms -------------------------------------------------

/// sigmoid(W_update (x o q) + b): relevance of sentence x to local query q.
template <class T>
VarPtr<T> update_gate(Tape<T>& tape, QrnLayerParams<T>& p, const VarPtr<T>& x,
                      const VarPtr<T>& q) {
  auto gated = matmul(tape, tape.use(p.w_update), mul(tape, x, q));
  return sigmoid(tape, add(tape, gated, tape.use(p.b_update)));
}

/// tanh(W_reduce [x; q] + b): candidate reduced query, independent of the
/// running state.
template <class T>
VarPtr<T> reduce_candidate(Tape<T>& tape, QrnLayerParams<T>& p, const VarPtr<T>& x,
                           const VarPtr<T>& q) {
  auto cat = concat(tape, x, q);
  return tanh_op(tape, add(tape, matmul(tape, tape.use(p.w_reduce), cat), tape.use(p.b_reduce)));
}

/// sigmoid(W_reset (x o q)); no bias term.
template <class T>
VarPtr<T> reset_gate(Tape<T>& tape, QrnLayerParams<T>& p, const VarPtr<T>& x,
                     const VarPtr<T>& q) {
  if (!p.w_reset) throw ConfigError("reset gate requested but disabled in this configuration");
  return sigmoid(tape, matmul(tape, tape.use(*p.w_reset), mul(tape, x, q)));
}

/// One recurrence step: state <- z (r) candidate + (1 - z) state.
template <class T>
VarPtr<T> step(Tape<T>& tape, QrnLayerParams<T>& p, const VarPtr<T>& x, const VarPtr<T>& q,
               const VarPtr<T>& prev_state, bool use_reset) {
  auto z = update_gate(tape, p, x, q);
  auto cand = reduce_candidate(tape, p, x, q);
  if (use_reset) cand = mul(tape, reset_gate(tape, p, x, q), cand);
  auto taken = mul(tape, z, cand);
  auto kept = mul(tape, sub(tape, tape.constant(Tensor<T>::scalar(T(1))), z), prev_state);
  return add(tape, taken, kept);
}

// --- whole-sequence forms --------------------------------------------------

template <class T>
struct LayerGates {
  VarPtr<T> update;     // [T x gate_rows]
  VarPtr<T> candidate;  // [T x d]
  VarPtr<T> reset;      // null when unused
};

/// Batched gate precomputation over all timesteps. Gates depend only on
/// (X, Q), so one computation serves both directions.
template <class T>
LayerGates<T> layer_gates(Tape<T>& tape, QrnLayerParams<T>& p, const VarPtr<T>& X,
                          const VarPtr<T>& Q, bool use_reset) {
  if (X->value.shape != Q->value.shape)
    throw ShapeError("layer_gates: X " + X->value.shape.str() + " vs Q " +
                     Q->value.shape.str());
  LayerGates<T> g;
  auto interaction = mul(tape, X, Q);
  g.update = sigmoid(
      tape, add(tape, matmul(tape, interaction, transpose(tape, tape.use(p.w_update))),
                tape.use(p.b_update)));
  auto cat = concat(tape, X, Q);
  g.candidate = tanh_op(
      tape, add(tape, matmul(tape, cat, transpose(tape, tape.use(p.w_reduce))),
                tape.use(p.b_reduce)));
  if (use_reset) {
    if (!p.w_reset) throw ConfigError("reset gate requested but disabled in this configuration");
    g.reset = sigmoid(tape, matmul(tape, interaction, transpose(tape, tape.use(*p.w_reset))));
  }
  return g;
}

template <class T>
struct LayerRun {
  VarPtr<T> states;  // [T x d], aligned to the original time order
  LayerGates<T> gates;
};

/// Full recurrence of one layer in one direction. The backward direction
/// reverses the precomputed gate rows, runs the same recurrence, and
/// reverses the result back.
template <class T>
LayerRun<T> run_layer(Tape<T>& tape, QrnLayerParams<T>& p, const VarPtr<T>& X,
                      const VarPtr<T>& Q, bool use_reset, bool backward_direction,
                      ScanMode mode) {
  LayerRun<T> run;
  run.gates = layer_gates(tape, p, X, Q, use_reset);
  VarPtr<T> update = run.gates.update;
  VarPtr<T> cand = run.gates.candidate;
  VarPtr<T> reset = run.gates.reset;
  if (backward_direction) {
    update = reverse_rows(tape, update);
    cand = reverse_rows(tape, cand);
    if (reset) reset = reverse_rows(tape, reset);
  }
  VarPtr<T> states = mode == ScanMode::parallel
                         ? scan(tape, update, cand, reset)
                         : sequential_recurrence(tape, update, cand, reset);
  run.states = backward_direction ? reverse_rows(tape, states) : states;
  return run;
}

namespace detail {

template <class T>
std::vector<std::vector<float>> trace_rows(const Tensor<T>& m) {
  std::vector<std::vector<float>> rows(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    rows[i].resize(m.cols());
    for (std::size_t j = 0; j < m.cols(); ++j)
      rows[i][j] = static_cast<float>(m.data[i * m.cols() + j]);
  }
  return rows;
}

template <class T>
void record_trace(GateTrace* trace, std::size_t layer, bool backward, const LayerRun<T>& run) {
  if (!trace) return;
  GateTraceEntry e;
  e.layer = layer;
  e.backward = backward;
  e.update = trace_rows(run.gates.update->value);
  if (run.gates.reset) e.reset = trace_rows(run.gates.reset->value);
  e.states = trace_rows(run.states->value);
  trace->entries.push_back(std::move(e));
}

}  // namespace detail

template <class T>
struct StackResult {
  VarPtr<T> final_state;            // [d]: last timestep, last layer, forward direction
  VarPtr<T> last_layer_states;      // [T x d]
  std::vector<VarPtr<T>> queries;   // query matrix fed into each layer, size K
};

/// The layered network: layer 1 sees the question as its query at every
/// timestep, later layers see the previous layer's reduced queries (summed
/// over directions when bidirectional). X is shared by all layers. The last
/// layer runs forward-only and without reset.
template <class T>
StackResult<T> stack_forward(Tape<T>& tape, std::vector<QrnLayerParams<T>*> layers,
                             const VarPtr<T>& X, const VarPtr<T>& q, const QrnConfig& cfg,
                             ScanMode mode, GateTrace* trace = nullptr) {
  if (layers.size() != cfg.layers)
    throw ContractError("stack_forward: expected " + std::to_string(cfg.layers) +
                        " layer parameter sets, got " + std::to_string(layers.size()));
  const std::size_t steps = X->value.rows();
  StackResult<T> result;
  VarPtr<T> Q = tile_rows(tape, q, steps);
  for (std::size_t k = 0; k < cfg.layers; ++k) {
    result.queries.push_back(Q);
    const bool last = k + 1 == cfg.layers;
    const bool use_reset = cfg.reset_gate && !last;
    auto fwd = run_layer(tape, *layers[k], X, Q, use_reset, false, mode);
    detail::record_trace(trace, k, false, fwd);
    if (last) {
      result.last_layer_states = fwd.states;
      result.final_state = row(tape, fwd.states, steps - 1);
      break;
    }
    if (cfg.bidirectional) {
      auto bwd = run_layer(tape, *layers[k], X, Q, use_reset, true, mode);
      detail::record_trace(trace, k, true, bwd);
      Q = add(tape, fwd.states, bwd.states);
    } else {
      Q = fwd.states;
    }
  }
  if (trace) {
    trace->final_state.resize(result.final_state->value.size());
    for (std::size_t i = 0; i < trace->final_state.size(); ++i)
      trace->final_state[i] = static_cast<float>(result.final_state->value[i]);
  }
  return result;
}

}  // namespace qrn
