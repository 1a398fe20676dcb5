#pragma once

#include <string>
#include <vector>

#include "qrn/tape.hpp"
#include "qrn/vocabulary.hpp"

namespace qrn {

/// Position-encoder weights for a sentence of `words` tokens in `dims`
/// dimensions: l[j][k] = (1 - j/J) - (k/d)(1 - 2j/J) with 1-based j, k.
/// Order-sensitive: permuting words changes the weighted sum.
template <class T>
Tensor<T> position_weights(std::size_t words, std::size_t dims) {
  if (words == 0) throw InputError("position_weights: empty sentence");
  Tensor<T> l(Shape::mat(words, dims));
  const double J = static_cast<double>(words);
  const double d = static_cast<double>(dims);
  for (std::size_t j = 1; j <= words; ++j)
    for (std::size_t k = 1; k <= dims; ++k)
      l(j - 1, k - 1) = static_cast<T>((1.0 - j / J) -
                                       (static_cast<double>(k) / d) * (1.0 - 2.0 * j / J));
  return l;
}

/// Weighted sum of word vectors: sum_j l_j o w_j. Input [J x d] -> [d].
template <class T>
VarPtr<T> position_encode(Tape<T>& tape, const VarPtr<T>& word_vectors) {
  const Shape& s = word_vectors->value.shape;
  if (s.rank != 2 || s.d0 == 0)
    throw InputError("position_encode: need at least one word vector");
  auto weights = tape.constant(position_weights<T>(s.d0, s.d1));
  return sum_axis0(tape, mul(tape, word_vectors, weights));
}

template <class T>
VarPtr<T> encode_sentence(Tape<T>& tape, const VarPtr<T>& embedding,
                          const std::vector<std::size_t>& token_indices) {
  if (token_indices.empty()) throw InputError("encode_sentence: no tokens");
  return position_encode(tape, gather_rows(tape, embedding, token_indices));
}

template <class T>
struct EncodedExample {
  VarPtr<T> context;   // [T x d]
  VarPtr<T> question;  // [d]
  std::vector<std::vector<std::size_t>> context_tokens;
  std::vector<std::size_t> question_tokens;
  std::size_t answer_index = 0;  // folded answer token (QA tasks)
};

/// Sentence-by-sentence position encoding of an example with the shared
/// embedding matrix; the question goes through the identical path.
template <class T>
EncodedExample<T> encode_example(Tape<T>& tape, const Example& ex, const Vocabulary& vocab,
                                 Parameter<T>& embedding) {
  EncodedExample<T> enc;
  auto emb = tape.use(embedding);
  std::vector<VarPtr<T>> rows;
  rows.reserve(ex.context.size());
  for (const auto& sentence : ex.context) {
    auto tokens = tokenize(sentence);
    if (tokens.empty())
      throw InputError("empty sentence after tokenization: '" + sentence + "'");
    enc.context_tokens.push_back(vocab.indices(tokens));
    rows.push_back(encode_sentence(tape, emb, enc.context_tokens.back()));
  }
  if (rows.empty()) throw InputError("example has no context sentences");
  enc.context = stack_rows(tape, rows);
  auto qtokens = tokenize(ex.question);
  if (qtokens.empty())
    throw InputError("empty question after tokenization: '" + ex.question + "'");
  enc.question_tokens = vocab.indices(qtokens);
  enc.question = encode_sentence(tape, emb, enc.question_tokens);
  enc.answer_index = vocab.index(canonical_answer(ex.answer));
  return enc;
}

}  // namespace qrn
