#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <unordered_set>
#include <vector>

#include "qrn/encoding.hpp"
#include "qrn/tape.hpp"

namespace qrn {

template <class T>
std::size_t argmax(const Tensor<T>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;  // ties keep the lowest index
  return best;
}

// --- QA --------------------------------------------------------------------

template <class T>
struct QaHead {
  bool use_match = false;
  Parameter<T> w_out;                 // [V x d], or [V x (d-2)] with match
  std::optional<Parameter<T>> mixer;  // [d x d] with match
};

template <class T>
VarPtr<T> qa_logits(Tape<T>& tape, QaHead<T>& head, const VarPtr<T>& final_state,
                    const Tensor<T>* match_cols = nullptr) {
  if (head.use_match) {
    if (!match_cols) throw ContractError("match-enabled head requires match features");
    auto mixed = matmul(tape, tape.use(*head.mixer), final_state);
    auto full = concat(tape, tape.use(head.w_out), tape.constant(*match_cols));
    return matmul(tape, full, mixed);
  }
  return matmul(tape, tape.use(head.w_out), final_state);
}

template <class T>
VarPtr<T> qa_predict(Tape<T>& tape, QaHead<T>& head, const VarPtr<T>& final_state,
                     const Tensor<T>* match_cols = nullptr) {
  return softmax_rows(tape, qa_logits(tape, head, final_state, match_cols));
}

// --- lexical-match features --------------------------------------------------

struct MatchFeatures {
  std::vector<unsigned char> in_context;   // one entry per candidate row
  std::vector<unsigned char> in_question;

  std::size_t rows() const { return in_context.size(); }
};

/// Any-token overlap of each candidate row with the context and question
/// token sets. Insensitive to order and duplicates by construction.
inline MatchFeatures compute_match(const std::vector<std::vector<std::size_t>>& candidates,
                                   const std::unordered_set<std::size_t>& context_tokens,
                                   const std::unordered_set<std::size_t>& question_tokens) {
  MatchFeatures m;
  m.in_context.reserve(candidates.size());
  m.in_question.reserve(candidates.size());
  for (const auto& tokens : candidates) {
    unsigned char ctx = 0, q = 0;
    for (std::size_t t : tokens) {
      if (context_tokens.count(t)) ctx = 1;
      if (question_tokens.count(t)) q = 1;
      if (ctx && q) break;
    }
    m.in_context.push_back(ctx);
    m.in_question.push_back(q);
  }
  return m;
}

/// Word-level rows (every vocabulary entry as a one-token candidate), the
/// form consumed by the per-slot dialog classifiers.
inline MatchFeatures compute_word_match(std::size_t vocab_size,
                                        const std::unordered_set<std::size_t>& context_tokens,
                                        const std::unordered_set<std::size_t>& question_tokens) {
  MatchFeatures m;
  m.in_context.resize(vocab_size, 0);
  m.in_question.resize(vocab_size, 0);
  for (std::size_t t : context_tokens)
    if (t < vocab_size) m.in_context[t] = 1;
  for (std::size_t t : question_tokens)
    if (t < vocab_size) m.in_question[t] = 1;
  return m;
}

template <class T>
Tensor<T> match_columns(const MatchFeatures& m) {
  Tensor<T> t(Shape::mat(m.rows(), 2));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    t(i, 0) = static_cast<T>(m.in_context[i]);
    t(i, 1) = static_cast<T>(m.in_question[i]);
  }
  return t;
}

// --- dialog ------------------------------------------------------------------

/// P per-slot word classifiers over a fixed candidate list. Each slot sees
/// the network's final state concatenated with the previous slot word's
/// embedding (NIL before the first slot). With the match extension, slot
/// weights lose their last two columns to the 0/1 match matrix and the input
/// passes through a trainable square mixer first.
template <class T>
struct DialogHead {
  std::size_t slots = 1;
  bool use_match = false;
  std::shared_ptr<const std::vector<std::string>> candidates;
  std::vector<std::vector<std::size_t>> candidate_tokens;  // padded to `slots` with NIL
  std::vector<std::size_t> candidate_length;               // true token counts
  Parameter<T> prev_embedding;                             // [V x d]
  std::vector<Parameter<T>> slot_weights;  // [V x 2d] or [V x (2d-2)] with match
  std::optional<Parameter<T>> mixer;       // [2d x 2d] with match
};

template <class T>
VarPtr<T> slot_logits(Tape<T>& tape, DialogHead<T>& head, std::size_t slot,
                      const VarPtr<T>& final_state, std::size_t prev_word,
                      const Tensor<T>* match_cols) {
  if (slot >= head.slots) throw InputError("slot index out of range");
  auto prev = row(tape, tape.use(head.prev_embedding), prev_word);
  auto input = concat(tape, final_state, prev);
  if (head.use_match) {
    if (!match_cols) throw ContractError("match-enabled head requires match features");
    auto mixed = matmul(tape, tape.use(*head.mixer), input);
    auto full = concat(tape, tape.use(head.slot_weights[slot]),
                       tape.constant(*match_cols));
    return matmul(tape, full, mixed);
  }
  return matmul(tape, tape.use(head.slot_weights[slot]), input);
}

/// Teacher-forced negative log-likelihood of the gold word sequence.
template <class T>
VarPtr<T> dialog_loss(Tape<T>& tape, DialogHead<T>& head, const VarPtr<T>& final_state,
                      const std::vector<std::size_t>& gold_tokens, const Tensor<T>* match_cols) {
  if (gold_tokens.empty()) throw InputError("dialog_loss: empty gold sequence");
  if (gold_tokens.size() > head.slots)
    throw InputError("dialog_loss: gold sequence longer than slot count");
  VarPtr<T> total;
  for (std::size_t p = 0; p < gold_tokens.size(); ++p) {
    const std::size_t prev = p == 0 ? Vocabulary::kNil : gold_tokens[p - 1];
    auto dist = softmax_rows(tape, slot_logits(tape, head, p, final_state, prev, match_cols));
    auto nll = scale(tape, log_op(tape, pick(tape, dist, gold_tokens[p])), T(-1));
    total = total ? add(tape, total, nll) : nll;
  }
  return total;
}

/// Ranks candidates by the sum of their own tokens' log-probabilities under
/// the per-slot classifiers (teacher forcing on the candidate's own prefix).
/// Ties break toward the lowest index. Slot distributions are cached per
/// (slot, previous word), which the fixed candidate list makes effective.
template <class T>
std::size_t dialog_predict(Tape<T>& tape, DialogHead<T>& head, const VarPtr<T>& final_state,
                           const Tensor<T>* match_cols,
                           std::vector<double>* scores_out = nullptr) {
  if (!head.candidates || head.candidates->empty())
    throw InputError("dialog_predict: empty candidate list");
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> cache;
  auto log_probs = [&](std::size_t slot, std::size_t prev) -> const std::vector<double>& {
    auto key = std::make_pair(slot, prev);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto dist = softmax_rows(tape, slot_logits(tape, head, slot, final_state, prev, match_cols));
    std::vector<double> lp(dist->value.size());
    for (std::size_t i = 0; i < lp.size(); ++i)
      lp[i] = std::log(std::max(static_cast<double>(dist->value[i]), kLogFloor));
    return cache.emplace(key, std::move(lp)).first->second;
  };

  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<double> scores(head.candidate_tokens.size());
  for (std::size_t c = 0; c < head.candidate_tokens.size(); ++c) {
    const auto& tokens = head.candidate_tokens[c];
    double score = 0;
    for (std::size_t p = 0; p < head.candidate_length[c]; ++p) {
      const std::size_t prev = p == 0 ? Vocabulary::kNil : tokens[p - 1];
      score += log_probs(p, prev)[tokens[p]];
    }
    scores[c] = score;
    if (score > best_score) {
      best_score = score;
      best = c;
    }
  }
  if (scores_out) *scores_out = std::move(scores);
  return best;
}

// --- interpretability decoder ------------------------------------------------

/// Affine map from a d-vector back to word logits, trained with a
/// bag-of-words reconstruction loss on the question embedding and reused to
/// decode intermediate reduced queries.
template <class T>
struct QueryDecoder {
  Parameter<T> w;  // [V x d]
  Parameter<T> b;  // [V]
  double loss_weight = 1.0;
  bool trained = false;
};

template <class T>
VarPtr<T> reconstruction_loss(Tape<T>& tape, QueryDecoder<T>& decoder,
                              const VarPtr<T>& query_vec,
                              const std::vector<std::size_t>& question_tokens) {
  if (question_tokens.empty()) throw InputError("reconstruction_loss: no question tokens");
  auto logits = add(tape, matmul(tape, tape.use(decoder.w), query_vec), tape.use(decoder.b));
  auto dist = softmax_rows(tape, logits);
  VarPtr<T> total;
  for (std::size_t tok : question_tokens) {
    auto nll = scale(tape, log_op(tape, pick(tape, dist, tok)), T(-1));
    total = total ? add(tape, total, nll) : nll;
  }
  return total;
}

/// Top-k words by decoder logit for an arbitrary d-vector. Requires a
/// decoder that was actually trained.
template <class T>
std::vector<std::size_t> decode_query(const QueryDecoder<T>& decoder, const Tensor<T>& h,
                                      std::size_t top_k) {
  if (!decoder.trained)
    throw ContractError("decode_query: decoder was not trained with reconstruction loss");
  const auto& w = decoder.w.value;
  if (h.size() != w.cols()) throw ShapeError("decode_query: vector " + h.shape.str());
  std::vector<std::pair<T, std::size_t>> scored(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    T acc = decoder.b.value[i];
    for (std::size_t j = 0; j < w.cols(); ++j) acc += w(i, j) * h[j];
    scored[i] = {acc, i};
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(top_k, scored.size()); ++i)
    out.push_back(scored[i].second);
  return out;
}

}  // namespace qrn
