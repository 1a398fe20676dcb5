#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "qrn/cell.hpp"
#include "qrn/config.hpp"
#include "qrn/encoding.hpp"
#include "qrn/heads.hpp"

namespace qrn {

enum class ParamKind { weight, bias, embedding };

template <class T>
struct ParamRef {
  Parameter<T>* param;
  ParamKind kind;
};

/// Whole model: shared word embedding, the layered recurrence, one task head,
/// and the optional query decoder.
template <class T>
struct QrnModel {
  RunConfig cfg;
  TaskKind kind = TaskKind::qa;
  Vocabulary vocab;
  Parameter<T> embedding;                 // [V x d]
  std::vector<QrnLayerParams<T>> layers;  // one set when weights are tied
  std::optional<QaHead<T>> qa;
  std::optional<DialogHead<T>> dialog;
  std::optional<QueryDecoder<T>> decoder;

  std::vector<QrnLayerParams<T>*> layer_stack() {
    std::vector<QrnLayerParams<T>*> ptrs;
    for (std::size_t k = 0; k < cfg.model.layers; ++k)
      ptrs.push_back(&layers[cfg.model.tie_weights ? 0 : k]);
    return ptrs;
  }

  std::vector<ParamRef<T>> parameters() {
    std::vector<ParamRef<T>> out;
    out.push_back({&embedding, ParamKind::embedding});
    for (auto& layer : layers) {
      out.push_back({&layer.w_update, ParamKind::weight});
      out.push_back({&layer.b_update, ParamKind::bias});
      out.push_back({&layer.w_reduce, ParamKind::weight});
      out.push_back({&layer.b_reduce, ParamKind::bias});
      if (layer.w_reset) out.push_back({&*layer.w_reset, ParamKind::weight});
    }
    if (qa) {
      out.push_back({&qa->w_out, ParamKind::weight});
      if (qa->mixer) out.push_back({&*qa->mixer, ParamKind::weight});
    }
    if (dialog) {
      out.push_back({&dialog->prev_embedding, ParamKind::embedding});
      if (dialog->mixer) out.push_back({&*dialog->mixer, ParamKind::weight});
      for (auto& w : dialog->slot_weights) out.push_back({&w, ParamKind::weight});
    }
    if (decoder) {
      out.push_back({&decoder->w, ParamKind::weight});
      out.push_back({&decoder->b, ParamKind::bias});
    }
    return out;
  }
};

namespace detail {

template <class T>
void zero_row(Tensor<T>& m, std::size_t r) {
  for (std::size_t j = 0; j < m.cols(); ++j) m(r, j) = T(0);
}

template <class T>
Parameter<T> head_matrix(Rng& rng, const std::string& name, std::size_t rows,
                         std::size_t cols, double stddev) {
  return Parameter<T>{name, gaussian<T>(rng, Shape::mat(rows, cols), static_cast<T>(stddev))};
}

}  // namespace detail

template <class T>
DialogHead<T> build_dialog_head(const QrnConfig& cfg, const Vocabulary& vocab,
                                std::shared_ptr<const std::vector<std::string>> candidates,
                                Rng& rng) {
  if (!candidates || candidates->empty())
    throw InputError("dialog model requires a candidate list");
  DialogHead<T> head;
  head.use_match = cfg.use_match;
  head.candidates = candidates;
  head.candidate_tokens.reserve(candidates->size());
  head.candidate_length.reserve(candidates->size());
  std::size_t slots = 1;
  for (const auto& c : *candidates) {
    auto tokens = vocab.indices(tokenize(c));
    if (tokens.empty()) throw InputError("candidate tokenizes to nothing: '" + c + "'");
    slots = std::max(slots, tokens.size());
    head.candidate_length.push_back(tokens.size());
    head.candidate_tokens.push_back(std::move(tokens));
  }
  head.slots = slots;
  for (auto& tokens : head.candidate_tokens)
    tokens.resize(slots, Vocabulary::kNil);  // pad short candidates with NIL

  const std::size_t d = cfg.hidden_size, v = vocab.size();
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
  head.prev_embedding = detail::head_matrix<T>(rng, "dialog.prev_embedding", v, d, stddev);
  detail::zero_row(head.prev_embedding.value, Vocabulary::kNil);
  if (head.use_match)
    head.mixer = Parameter<T>{"dialog.mixer", glorot_uniform<T>(rng, 2 * d, 2 * d)};
  const std::size_t in_cols = head.use_match ? 2 * d - 2 : 2 * d;
  for (std::size_t p = 0; p < slots; ++p)
    head.slot_weights.push_back(detail::head_matrix<T>(
        rng, "dialog.slot" + std::to_string(p) + ".w", v, in_cols, stddev));
  return head;
}

template <class T>
QrnModel<T> build_model(const RunConfig& cfg, TaskKind kind, Vocabulary vocab,
                        std::shared_ptr<const std::vector<std::string>> candidates,
                        std::uint64_t seed) {
  QrnModel<T> model;
  model.cfg = cfg;
  model.kind = kind;
  model.vocab = std::move(vocab);

  const std::size_t d = cfg.model.hidden_size, v = model.vocab.size();
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng(derive_seed(seed, 0x11D));

  model.embedding =
      Parameter<T>{"embedding", gaussian<T>(rng, Shape::mat(v, d), static_cast<T>(stddev))};
  detail::zero_row(model.embedding.value, Vocabulary::kNil);

  const std::size_t stored = cfg.model.tie_weights ? 1 : cfg.model.layers;
  for (std::size_t k = 0; k < stored; ++k) {
    const std::string prefix =
        cfg.model.tie_weights ? "shared." : "layer" + std::to_string(k + 1) + ".";
    model.layers.push_back(init_layer_params<T>(cfg.model, rng, prefix));
  }

  if (kind == TaskKind::qa) {
    QaHead<T> head;
    head.use_match = cfg.model.use_match;
    const std::size_t out_cols = head.use_match ? d - 2 : d;
    head.w_out = detail::head_matrix<T>(rng, "qa.w_out", v, out_cols, stddev);
    if (head.use_match)
      head.mixer = Parameter<T>{"qa.mixer", glorot_uniform<T>(rng, d, d)};
    model.qa = std::move(head);
  } else {
    model.dialog = build_dialog_head<T>(cfg.model, model.vocab, std::move(candidates), rng);
  }

  if (cfg.model.reconstruction) {
    QueryDecoder<T> dec;
    dec.w = detail::head_matrix<T>(rng, "decoder.w", v, d, stddev);
    dec.b = Parameter<T>{"decoder.b", Tensor<T>::zeros(Shape::vec(v))};
    dec.loss_weight = cfg.model.reconstruction_weight;
    model.decoder = std::move(dec);
  }
  return model;
}

template <class T>
struct ForwardResult {
  EncodedExample<T> enc;
  StackResult<T> stack;
  Tensor<T> match_cols;  // empty unless the match extension is on
  std::unordered_set<std::size_t> context_token_set;
  std::unordered_set<std::size_t> question_token_set;
};

template <class T>
ForwardResult<T> model_forward(Tape<T>& tape, QrnModel<T>& model, const Example& ex,
                               ScanMode mode, GateTrace* trace = nullptr) {
  ForwardResult<T> fr;
  fr.enc = encode_example(tape, ex, model.vocab, model.embedding);
  auto ptrs = model.layer_stack();
  fr.stack = stack_forward(tape, ptrs, fr.enc.context, fr.enc.question, model.cfg.model,
                           mode, trace);
  if (model.cfg.model.use_match) {
    for (const auto& sent : fr.enc.context_tokens)
      fr.context_token_set.insert(sent.begin(), sent.end());
    fr.question_token_set.insert(fr.enc.question_tokens.begin(),
                                 fr.enc.question_tokens.end());
    fr.match_cols = match_columns<T>(compute_word_match(
        model.vocab.size(), fr.context_token_set, fr.question_token_set));
  }
  return fr;
}

/// Sum of squared weight-matrix entries for the decay penalty. Biases are
/// skipped unless decay_biases; embedding matrices contribute everything but
/// their NIL row so the padding word is free to stay at zero.
template <class T>
VarPtr<T> l2_penalty(Tape<T>& tape, QrnModel<T>& model) {
  VarPtr<T> total;
  auto accumulate = [&](const VarPtr<T>& v) { total = total ? add(tape, total, v) : v; };
  for (const auto& ref : model.parameters()) {
    if (ref.kind == ParamKind::bias && !model.cfg.train.decay_biases) continue;
    auto w = tape.use(*ref.param);
    accumulate(sum_all(tape, mul(tape, w, w)));
    if (ref.kind == ParamKind::embedding) {
      auto nil = row(tape, w, Vocabulary::kNil);
      accumulate(scale(tape, sum_all(tape, mul(tape, nil, nil)), T(-1)));
    }
  }
  return total;
}

struct LossOptions {
  bool include_l2 = true;
  ScanMode mode = ScanMode::parallel;
};

/// Per-example training loss: answer negative log-likelihood, plus the
/// weighted question-reconstruction term, plus (optionally) the decay
/// penalty. Dev-set loss drops the penalty.
template <class T>
VarPtr<T> example_loss(Tape<T>& tape, QrnModel<T>& model, const Example& ex,
                       const LossOptions& opts) {
  auto fr = model_forward(tape, model, ex, opts.mode);
  const Tensor<T>* match = model.cfg.model.use_match ? &fr.match_cols : nullptr;
  VarPtr<T> loss;
  if (model.kind == TaskKind::qa) {
    auto dist = qa_predict(tape, *model.qa, fr.stack.final_state, match);
    loss = scale(tape, log_op(tape, pick(tape, dist, fr.enc.answer_index)), T(-1));
  } else {
    auto gold = model.vocab.indices(tokenize(ex.answer));
    if (gold.empty()) throw InputError("answer tokenizes to nothing: '" + ex.answer + "'");
    loss = dialog_loss(tape, *model.dialog, fr.stack.final_state, gold, match);
  }
  if (model.decoder) {
    auto recon = reconstruction_loss(tape, *model.decoder, fr.enc.question,
                                     fr.enc.question_tokens);
    loss = add(tape, loss, scale(tape, recon, static_cast<T>(model.decoder->loss_weight)));
  }
  if (opts.include_l2 && model.cfg.train.l2_decay > 0)
    loss = add(tape, loss,
               scale(tape, l2_penalty(tape, model), static_cast<T>(model.cfg.train.l2_decay)));
  return loss;
}

template <class T>
struct Prediction {
  std::string answer;
  std::size_t index = 0;      // vocabulary index (QA) or candidate index (dialog)
  bool correct = false;
};

/// Greedy prediction without recording gradients.
template <class T>
Prediction<T> predict(QrnModel<T>& model, const Example& ex, ScanMode mode,
                      GateTrace* trace = nullptr) {
  Tape<T> tape;
  tape.set_recording(false);
  auto fr = model_forward(tape, model, ex, mode, trace);
  const Tensor<T>* match = model.cfg.model.use_match ? &fr.match_cols : nullptr;
  Prediction<T> pred;
  if (model.kind == TaskKind::qa) {
    auto dist = qa_predict(tape, *model.qa, fr.stack.final_state, match);
    pred.index = argmax(dist->value);
    pred.answer = model.vocab.word(pred.index);
    pred.correct = pred.answer == canonical_answer(ex.answer);
  } else {
    pred.index = dialog_predict(tape, *model.dialog, fr.stack.final_state, match);
    pred.answer = (*model.dialog->candidates)[pred.index];
    pred.correct = tokenize(pred.answer) == tokenize(ex.answer);
  }
  return pred;
}

}  // namespace qrn
