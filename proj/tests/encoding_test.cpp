#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "qrn/data.hpp"
#include "qrn/encoding.hpp"
#include "qrn/parameter.hpp"
#include "qrn/rng.hpp"
#include "qrn/tape.hpp"
#include "qrn/vocabulary.hpp"

namespace {

using qrn::Example;
using qrn::Parameter;
using qrn::Rng;
using qrn::Shape;
using qrn::Tape;
using qrn::Tensor;
using qrn::Vocabulary;

TEST(Tokenize, LowercasesAndStripsPunctuation) {
  auto t = qrn::tokenize("Where is Mary?");
  EXPECT_EQ(t, (std::vector<std::string>{"where", "is", "mary"}));
  EXPECT_EQ(qrn::tokenize("John went home."), (std::vector<std::string>{"john", "went", "home"}));
  EXPECT_EQ(qrn::tokenize("Hello!"), (std::vector<std::string>{"hello"}));
  EXPECT_TRUE(qrn::tokenize("   ").empty());
}

TEST(Tokenize, CanonicalAnswerFoldsLists) {
  EXPECT_EQ(qrn::canonical_answer("Football, Apple"), "football,apple");
  EXPECT_EQ(qrn::canonical_answer("garden"), "garden");
}

TEST(Vocabulary, ReservedThenSorted) {
  Example ex;
  ex.context = {"Mary moved to the bathroom."};
  ex.question = "Where is Mary?";
  ex.answer = "bathroom";
  auto v = Vocabulary::build({ex}, true);
  EXPECT_EQ(v.word(Vocabulary::kPad), "<pad>");
  EXPECT_EQ(v.word(Vocabulary::kUnk), "<unk>");
  EXPECT_EQ(v.word(Vocabulary::kNil), "<nil>");
  EXPECT_TRUE(v.contains("bathroom"));
  EXPECT_TRUE(v.contains("mary"));
  // non-reserved words appear in sorted order
  for (std::size_t i = 4; i < v.size(); ++i) EXPECT_LT(v.word(i - 1), v.word(i));
  // lookups are total: absent words map to <unk>
  EXPECT_EQ(v.index("zeppelin"), Vocabulary::kUnk);
  EXPECT_FALSE(v.contains("zeppelin"));
}

TEST(Vocabulary, DeterministicAcrossBuilds) {
  Example a;
  a.context = {"john grabbed the apple", "sandra went to the office"};
  a.question = "where is the apple";
  a.answer = "office";
  Example b = a;
  b.question = "where is sandra";
  auto v1 = Vocabulary::build({a, b}, true);
  auto v2 = Vocabulary::build({a, b}, true);
  EXPECT_EQ(v1.words(), v2.words());
}

TEST(Vocabulary, FoldedAnswersAreSingleEntries) {
  Example ex;
  ex.context = {"daniel picked up the football"};
  ex.question = "what is daniel holding";
  ex.answer = "Football, Apple";
  auto v = Vocabulary::build({ex}, true);
  EXPECT_TRUE(v.contains("football,apple"));
  auto idx = v.index("football,apple");
  EXPECT_EQ(v.word(idx), "football,apple");
}

TEST(Vocabulary, CandidateLinesEnterOnce) {
  auto cands = std::make_shared<std::vector<std::string>>(
      std::vector<std::string>{"api_call british london", "hello there"});
  Example ex;
  ex.context = {"<nil>"};
  ex.question = "hi";
  ex.answer = "hello there";
  ex.candidates = cands;
  auto v = Vocabulary::build({ex}, false);
  EXPECT_TRUE(v.contains("api_call"));
  EXPECT_TRUE(v.contains("london"));
  EXPECT_TRUE(v.contains("hello"));
}

TEST(Vocabulary, FromWordsRoundTrip) {
  Example ex;
  ex.context = {"a b c"};
  ex.question = "a";
  ex.answer = "b";
  auto v = Vocabulary::build({ex}, true);
  auto v2 = Vocabulary::from_words(v.words());
  EXPECT_EQ(v2.words(), v.words());
  EXPECT_THROW(Vocabulary::from_words({"x", "y"}), qrn::InputError);
  EXPECT_THROW(Vocabulary::from_words({"<pad>", "<unk>", "<nil>", "dup", "dup"}),
               qrn::InputError);
}

TEST(PositionWeights, SingleWordOracle) {
  // one word, two dims: weights are [1/2, 1]
  auto w = qrn::position_weights<double>(1, 2);
  EXPECT_EQ(w.shape, Shape::mat(1, 2));
  EXPECT_NEAR(w(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(w(0, 1), 1.0, 1e-12);
}

TEST(PositionWeights, BilinearRangeAndMidRow) {
  for (std::size_t J : {2u, 4u, 6u}) {
    auto w = qrn::position_weights<double>(J, 5);
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t k = 0; k < 5; ++k) {
        EXPECT_GE(w(j, k), 0.0);
        EXPECT_LE(w(j, k), 1.0);
      }
    // at j = J/2 (1-based) the dimension-dependent term vanishes
    std::size_t mid = J / 2 - 1;
    for (std::size_t k = 1; k < 5; ++k) EXPECT_NEAR(w(mid, k), w(mid, 0), 1e-12);
    EXPECT_NEAR(w(mid, 0), 1.0 - 0.5, 1e-12);
  }
  EXPECT_THROW(qrn::position_weights<double>(0, 3), qrn::InputError);
}

TEST(PositionEncode, UniformWordVectorOracle) {
  Tape<double> tape;
  auto wv = tape.constant(Tensor<double>::mat(1, 2, {1, 1}));
  auto enc = qrn::position_encode(tape, wv)->value;
  EXPECT_NEAR(enc[0], 0.5, 1e-12);
  EXPECT_NEAR(enc[1], 1.0, 1e-12);
}

TEST(PositionEncode, ZeroWordsGiveZero) {
  Tape<double> tape;
  auto wv = tape.constant(Tensor<double>(Shape::mat(4, 3)));
  for (double v : qrn::position_encode(tape, wv)->value.data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(PositionEncode, LinearInWordVectors) {
  Rng rng(19);
  Tensor<double> wv(Shape::mat(3, 4));
  for (auto& x : wv.data) x = rng.uniform(-1, 1);
  Tensor<double> scaled = wv;
  for (auto& x : scaled.data) x *= 2.5;
  Tape<double> tape;
  auto a = qrn::position_encode(tape, tape.constant(wv))->value;
  auto b = qrn::position_encode(tape, tape.constant(scaled))->value;
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(b[k], 2.5 * a[k], 1e-12);
}

TEST(PositionEncode, SensitiveToWordOrder) {
  Rng rng(23);
  Tensor<double> wv(Shape::mat(2, 3));
  for (auto& x : wv.data) x = rng.uniform(0.5, 1.5);
  Tensor<double> swapped(Shape::mat(2, 3));
  for (std::size_t k = 0; k < 3; ++k) {
    swapped(0, k) = wv(1, k);
    swapped(1, k) = wv(0, k);
  }
  Tape<double> tape;
  auto a = qrn::position_encode(tape, tape.constant(wv))->value;
  auto b = qrn::position_encode(tape, tape.constant(swapped))->value;
  EXPECT_GT(qrn::max_abs_diff(a, b), 1e-6);  // unlike bag-of-words
}

TEST(EncodeExample, ShapesAndSharedPath) {
  Example ex;
  ex.context = {"mary moved to the bathroom", "john went to the hallway"};
  ex.question = "mary moved to the bathroom";  // deliberately a context line
  ex.answer = "bathroom";
  auto vocab = Vocabulary::build({ex}, true);
  const std::size_t d = 6;
  Rng rng(29);
  Parameter<double> emb("embedding", qrn::gaussian<double>(rng, Shape::mat(vocab.size(), d), 0.3));
  Tape<double> tape;
  auto enc = qrn::encode_example(tape, ex, vocab, emb);
  EXPECT_EQ(enc.context->value.shape, Shape::mat(2, d));
  EXPECT_EQ(enc.question->value.shape, Shape::vec(d));
  EXPECT_EQ(enc.context_tokens.size(), 2u);
  EXPECT_EQ(enc.answer_index, vocab.index("bathroom"));
  // question identical to a context sentence encodes identically
  for (std::size_t k = 0; k < d; ++k)
    EXPECT_EQ(enc.question->value[k], enc.context->value(0, k));
}

TEST(EncodeExample, UnknownWordsUseUnkRow) {
  Example train;
  train.context = {"mary moved to the bathroom"};
  train.question = "where is mary";
  train.answer = "bathroom";
  auto vocab = Vocabulary::build({train}, true);
  Example test = train;
  test.context = {"zorp moved to the bathroom"};
  Rng rng(31);
  Parameter<double> emb("embedding", qrn::gaussian<double>(rng, Shape::mat(vocab.size(), 4), 0.3));
  Tape<double> tape;
  auto enc = qrn::encode_example(tape, test, vocab, emb);
  EXPECT_EQ(enc.context_tokens[0][0], Vocabulary::kUnk);
}

TEST(EncodeExample, EmptySentenceRejected) {
  Example ex;
  ex.context = {"..."};
  ex.question = "where is mary";
  ex.answer = "bathroom";
  Vocabulary v;
  Rng rng(37);
  Parameter<double> emb("embedding", qrn::gaussian<double>(rng, Shape::mat(v.size(), 4), 0.3));
  Tape<double> tape;
  EXPECT_THROW(qrn::encode_example(tape, ex, v, emb), qrn::InputError);
  ex.context = {"fine sentence"};
  ex.question = "?";
  EXPECT_THROW(qrn::encode_example(tape, ex, v, emb), qrn::InputError);
}

TEST(EncodeExample, DeterministicBits) {
  Example ex;
  ex.context = {"john took the milk", "john went to the kitchen"};
  ex.question = "where is the milk";
  ex.answer = "kitchen";
  auto vocab = Vocabulary::build({ex}, true);
  Rng rng(41);
  Parameter<double> emb("embedding", qrn::gaussian<double>(rng, Shape::mat(vocab.size(), 5), 0.3));
  Tape<double> t1, t2;
  auto e1 = qrn::encode_example(t1, ex, vocab, emb);
  auto e2 = qrn::encode_example(t2, ex, vocab, emb);
  EXPECT_EQ(e1.context->value.data, e2.context->value.data);
  EXPECT_EQ(e1.question->value.data, e2.question->value.data);
}

}  // namespace
