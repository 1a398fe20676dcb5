#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "qrn/model.hpp"

namespace qrn {

inline constexpr double kAdaGradEpsilon = 1e-8;

/// One AdaGrad update from the gradient accumulated in `p`, scaled by
/// `grad_scale` (1/batch for batch-mean semantics). The squared-gradient
/// accumulator starts at zero and only ever grows.
template <class T>
void adagrad_step(Parameter<T>& p, double learning_rate, double grad_scale) {
  T* v = p.value.data.data();
  T* g = p.gradient.data.data();
  T* a = p.accumulator.data.data();
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double gi = static_cast<double>(g[i]) * grad_scale;
    const double ai = static_cast<double>(a[i]) + gi * gi;
    a[i] = static_cast<T>(ai);
    v[i] -= static_cast<T>(learning_rate * gi / (std::sqrt(ai) + kAdaGradEpsilon));
  }
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double dev_loss = 0;
  double dev_err = 0;
};

inline std::string format_epoch_record(const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch=%zu train_loss=%.6f dev_loss=%.6f dev_err=%.6f",
                r.epoch, r.train_loss, r.dev_loss, r.dev_err);
  return buf;
}

struct RestartLog {
  std::size_t restart = 0;  // 0-based
  std::uint64_t init_seed = 0;
  std::vector<EpochRecord> epochs;
  double best_dev_loss = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  bool diverged = false;
};

struct TrainLog {
  std::vector<RestartLog> restarts;
  std::size_t best_restart = 0;
  double best_dev_loss = std::numeric_limits<double>::infinity();
};

struct EvalResult {
  double error_rate = 0;
  double mean_loss = 0;
  std::size_t total = 0;
  std::size_t wrong = 0;
};

/// Error rate and mean data loss (no decay penalty) over a list of examples.
template <class T>
EvalResult evaluate(QrnModel<T>& model, const std::vector<Example>& examples, ScanMode mode) {
  if (examples.empty()) throw InputError("evaluate: no examples");
  EvalResult res;
  res.total = examples.size();
  LossOptions opts;
  opts.include_l2 = false;
  opts.mode = mode;
  for (const auto& ex : examples) {
    Tape<T> tape;
    tape.set_recording(false);
    res.mean_loss += static_cast<double>(example_loss(tape, model, ex, opts)->value[0]);
    if (!predict(model, ex, mode).correct) ++res.wrong;
  }
  res.mean_loss /= static_cast<double>(res.total);
  res.error_rate = static_cast<double>(res.wrong) / static_cast<double>(res.total);
  return res;
}

template <class T>
std::vector<Tensor<T>> snapshot_values(QrnModel<T>& model) {
  std::vector<Tensor<T>> vals;
  for (const auto& ref : model.parameters()) vals.push_back(ref.param->value);
  return vals;
}

template <class T>
void restore_values(QrnModel<T>& model, const std::vector<Tensor<T>>& vals) {
  auto refs = model.parameters();
  if (vals.size() != refs.size()) throw ContractError("snapshot/parameter count mismatch");
  for (std::size_t i = 0; i < refs.size(); ++i) refs[i].param->value = vals[i];
}

template <class T>
struct TrainResult {
  QrnModel<T> model;  // best restart, rolled back to its best epoch
  TrainLog log;
};

namespace detail {

/// One restart: fresh init, epochs until patience runs out, parameters left
/// at the best-dev-loss epoch. Returns false if optimization diverged.
template <class T>
bool run_restart(QrnModel<T>& model, const std::vector<Example>& train_set,
                 const std::vector<Example>& dev_set, RestartLog& log,
                 std::ostream* stream) {
  const TrainConfig& tc = model.cfg.train;
  Rng order_rng(derive_seed(log.init_seed, 0x0DE));
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  LossOptions opts;
  opts.include_l2 = true;
  opts.mode = tc.scan;

  auto params = model.parameters();
  if (tc.max_epochs == 0) {  // degenerate schedule: score the fresh init as-is
    auto dev = evaluate(model, dev_set, tc.scan);
    if (!std::isfinite(dev.mean_loss)) return false;
    log.best_dev_loss = dev.mean_loss;
    log.best_epoch = 0;
    return true;
  }
  std::vector<Tensor<T>> best;
  std::size_t since_best = 0;
  try {
    for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
      order_rng.shuffle(order);
      double loss_sum = 0;
      for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
        const std::size_t stop = std::min(order.size(), start + tc.batch_size);
        for (auto& ref : params) ref.param->zero_gradient();
        for (std::size_t i = start; i < stop; ++i) {
          Tape<T> tape;
          auto loss = example_loss(tape, model, train_set[order[i]], opts);
          const double value = static_cast<double>(loss->value[0]);
          if (!std::isfinite(value)) return false;
          loss_sum += value;
          tape.backward(loss);
        }
        const double scale = 1.0 / static_cast<double>(stop - start);
        for (auto& ref : params) adagrad_step(*ref.param, tc.learning_rate, scale);
      }

      EpochRecord rec;
      rec.epoch = epoch;
      rec.train_loss = loss_sum / static_cast<double>(order.size());
      auto dev = evaluate(model, dev_set, tc.scan);
      rec.dev_loss = dev.mean_loss;
      rec.dev_err = dev.error_rate;
      if (!std::isfinite(rec.dev_loss)) return false;
      log.epochs.push_back(rec);
      if (stream) (*stream) << format_epoch_record(rec) << "\n" << std::flush;

      if (rec.dev_loss < log.best_dev_loss) {
        log.best_dev_loss = rec.dev_loss;
        log.best_epoch = epoch;
        best = snapshot_values(model);
        since_best = 0;
      } else if (++since_best >= tc.patience_epochs) {
        break;
      }
    }
  } catch (const DomainError&) {
    // exploded parameters can push an activation outside its domain (NaN
    // gate) before any loss value goes non-finite; same thing, same verdict
    return false;
  }
  if (best.empty()) return false;
  restore_values(model, best);
  return true;
}

}  // namespace detail

/// Full schedule: `restarts` independent initializations, each trained with
/// early stopping on dev loss; the restart with the lowest dev loss wins.
/// Epoch records stream to `stream` as they happen; restart boundaries are
/// '#'-prefixed notes.
template <class T>
TrainResult<T> train(const RunConfig& cfg, TaskKind kind, const Vocabulary& vocab,
                     std::shared_ptr<const std::vector<std::string>> candidates,
                     const std::vector<Example>& train_set,
                     const std::vector<Example>& dev_set, std::ostream* stream = nullptr) {
  if (train_set.empty()) throw InputError("train: no training examples");
  if (dev_set.empty()) throw InputError("train: no dev examples");

  TrainResult<T> result;
  for (std::size_t r = 0; r < cfg.train.restarts; ++r) {
    RestartLog rlog;
    rlog.restart = r;
    rlog.init_seed = derive_seed(cfg.train.seed, r);
    if (stream)
      (*stream) << "# restart " << (r + 1) << "/" << cfg.train.restarts << "\n" << std::flush;
    auto model = build_model<T>(cfg, kind, vocab, candidates, rlog.init_seed);
    const bool ok = detail::run_restart(model, train_set, dev_set, rlog, stream);
    rlog.diverged = !ok;
    if (stream && !ok) (*stream) << "# restart " << (r + 1) << " diverged\n" << std::flush;
    if (ok && rlog.best_dev_loss < result.log.best_dev_loss) {
      result.log.best_dev_loss = rlog.best_dev_loss;
      result.log.best_restart = r;
      result.model = std::move(model);
    }
    result.log.restarts.push_back(std::move(rlog));
  }
  if (!std::isfinite(result.log.best_dev_loss))
    throw NumericCheckError("training diverged in every restart");
  if (result.model.decoder) result.model.decoder->trained = true;
  return result;
}

}  // namespace qrn
