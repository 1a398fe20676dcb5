#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qrn/data.hpp"

namespace {

using qrn::Example;

const char* kTwoStories =
    "1 Mary moved to the bathroom.\n"
    "2 John went to the hallway.\n"
    "3 Where is Mary?\tbathroom\t1\n"
    "4 Daniel went back to the garden.\n"
    "5 Where is Daniel?\tgarden\t4\n"
    "1 Sandra journeyed to the office.\n"
    "2 Where is Sandra?\toffice\t1\n";

TEST(QaParser, StoriesQuestionsAndSupport) {
  std::istringstream in(kTwoStories);
  auto ex = qrn::parse_babi_qa(in, 1);
  ASSERT_EQ(ex.size(), 3u);
  EXPECT_EQ(ex[0].context, (std::vector<std::string>{"Mary moved to the bathroom.",
                                                     "John went to the hallway."}));
  EXPECT_EQ(ex[0].question, "Where is Mary?");
  EXPECT_EQ(ex[0].answer, "bathroom");
  EXPECT_EQ(ex[0].supporting_ids, (std::vector<int>{1}));
  EXPECT_EQ(ex[0].task_id, 1);
  // second question sees the grown story but not the first question line
  EXPECT_EQ(ex[1].context.size(), 3u);
  EXPECT_EQ(ex[1].context[2], "Daniel went back to the garden.");
  EXPECT_EQ(ex[1].answer, "garden");
  // id reset starts a fresh story
  EXPECT_EQ(ex[2].context, (std::vector<std::string>{"Sandra journeyed to the office."}));
}

TEST(QaParser, ContextNeverLeaksAcrossQuestions) {
  std::istringstream in(kTwoStories);
  auto ex = qrn::parse_babi_qa(in);
  for (const auto& e : ex)
    for (const auto& line : e.context) EXPECT_EQ(line.find('\t'), std::string::npos);
}

TEST(QaParser, MultipleSupportIdsAndCommaAnswer) {
  std::istringstream in(
      "1 Daniel took the apple.\n"
      "2 Daniel grabbed the football there.\n"
      "3 What is Daniel carrying?\tapple,football\t1 2\n");
  auto ex = qrn::parse_babi_qa(in);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].answer, "apple,football");
  EXPECT_EQ(ex[0].supporting_ids, (std::vector<int>{1, 2}));
}

TEST(QaParser, MalformedLineReportsLineNumber) {
  std::istringstream in("1 Mary moved to the bathroom.\nnot a numbered line\n");
  try {
    qrn::parse_babi_qa(in);
    FAIL() << "expected ParseError";
  } catch (const qrn::ParseError& e) {
    EXPECT_EQ(e.line_number, 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(DialogParser, TurnsGrowHistory) {
  auto cands = std::make_shared<const std::vector<std::string>>(
      std::vector<std::string>{"hello what can i help you with today",
                               "i'm on it", "api_call british london four cheap"});
  std::istringstream in(
      "1 hi\thello what can i help you with today\n"
      "2 may i have a table\ti'm on it\n"
      "\n"
      "1 good morning\thello what can i help you with today\n");
  auto ex = qrn::parse_babi_dialog(in, cands, 1);
  ASSERT_EQ(ex.size(), 3u);
  EXPECT_EQ(ex[0].context, (std::vector<std::string>{"<nil>"}));
  EXPECT_EQ(ex[0].question, "hi");
  EXPECT_EQ(ex[0].answer, "hello what can i help you with today");
  // turn two sees both utterances of turn one
  EXPECT_EQ(ex[1].context,
            (std::vector<std::string>{"hi", "hello what can i help you with today"}));
  // blank line or id reset starts a new dialog
  EXPECT_EQ(ex[2].context, (std::vector<std::string>{"<nil>"}));
  for (const auto& e : ex) {
    ASSERT_TRUE(e.candidates != nullptr);
    EXPECT_EQ(e.candidates.get(), cands.get());
  }
}

TEST(DialogParser, FactLinesJoinHistoryWithoutBecomingExamples) {
  auto cands = std::make_shared<const std::vector<std::string>>(
      std::vector<std::string>{"ok let me look into some options for you"});
  std::istringstream in(
      "1 hi\tok let me look into some options for you\n"
      "2 resto_paris_1 r_cuisine british\n"
      "3 thanks\tok let me look into some options for you\n");
  auto ex = qrn::parse_babi_dialog(in, cands);
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_EQ(ex[1].context.size(), 3u);
  EXPECT_EQ(ex[1].context[2], "resto_paris_1 r_cuisine british");
}

TEST(DialogParser, EmptyUtteranceRejected) {
  auto cands = std::make_shared<const std::vector<std::string>>(std::vector<std::string>{"x"});
  std::istringstream in("1 \tsystem says\n");
  EXPECT_THROW(qrn::parse_babi_dialog(in, cands), qrn::ParseError);
}

TEST(Candidates, ReadStripsNumbering) {
  std::istringstream in("1 hello there\n2 api_call british london\n");
  auto lines = qrn::read_candidate_lines(in);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], "hello there");
  EXPECT_EQ(lines[1], "api_call british london");
}

TEST(SplitDev, SizesAndDeterminism) {
  std::vector<Example> all(1000);
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i].question = "q" + std::to_string(i);
    all[i].answer = "a";
    all[i].context = {"c"};
  }
  std::vector<Example> tr1, dv1, tr2, dv2;
  qrn::split_dev(all, 0.1, 7, &tr1, &dv1);
  qrn::split_dev(all, 0.1, 7, &tr2, &dv2);
  EXPECT_EQ(tr1.size(), 900u);
  EXPECT_EQ(dv1.size(), 100u);
  EXPECT_EQ(tr1, tr2);
  EXPECT_EQ(dv1, dv2);
  std::vector<Example> tr3, dv3;
  qrn::split_dev(all, 0.1, 8, &tr3, &dv3);
  EXPECT_NE(dv1, dv3);  // different seed shuffles differently
  // ceil on awkward sizes
  std::vector<Example> small(all.begin(), all.begin() + 15);
  qrn::split_dev(small, 0.1, 7, &tr1, &dv1);
  EXPECT_EQ(dv1.size(), 2u);  // ceil(1.5)
  EXPECT_EQ(tr1.size(), 13u);
  EXPECT_THROW(qrn::split_dev(all, 0.0, 7, &tr1, &dv1), qrn::InputError);
  EXPECT_THROW(qrn::split_dev(all, 1.0, 7, &tr1, &dv1), qrn::InputError);
  std::vector<Example> none;
  EXPECT_THROW(qrn::split_dev(none, 0.1, 7, &tr1, &dv1), qrn::InputError);
}

TEST(SplitDev, PartitionsWithoutLoss) {
  std::vector<Example> all(37);
  for (std::size_t i = 0; i < all.size(); ++i) all[i].question = "q" + std::to_string(i);
  std::vector<Example> tr, dv;
  qrn::split_dev(all, 0.25, 3, &tr, &dv);
  EXPECT_EQ(tr.size() + dv.size(), all.size());
  std::set<std::string> seen;
  for (const auto& e : tr) seen.insert(e.question);
  for (const auto& e : dv) seen.insert(e.question);
  EXPECT_EQ(seen.size(), all.size());
}

TEST(StoryCap, KeepsMostRecentLines) {
  std::vector<Example> ex(1);
  for (int i = 0; i < 10; ++i) ex[0].context.push_back("line " + std::to_string(i));
  qrn::apply_story_cap(ex, 3);
  EXPECT_EQ(ex[0].context,
            (std::vector<std::string>{"line 7", "line 8", "line 9"}));
  qrn::apply_story_cap(ex, 100);  // no-op below the cap
  EXPECT_EQ(ex[0].context.size(), 3u);
  EXPECT_THROW(qrn::apply_story_cap(ex, 0), qrn::InputError);
}

TEST(Normalized, QaRoundTrip) {
  std::istringstream in(kTwoStories);
  auto ex = qrn::parse_babi_qa(in, 1);
  std::ostringstream out;
  qrn::write_normalized(out, ex);
  std::istringstream back(out.str());
  auto again = qrn::read_normalized(back);
  EXPECT_EQ(again, ex);
}

TEST(Normalized, DialogRoundTripReattachesCandidates) {
  auto cands = std::make_shared<const std::vector<std::string>>(
      std::vector<std::string>{"hello", "api_call british london"});
  std::istringstream in("1 hi\thello\n2 book me\tapi_call british london\n");
  auto ex = qrn::parse_babi_dialog(in, cands, 1);
  std::ostringstream out;
  qrn::write_normalized(out, ex);
  std::istringstream back(out.str());
  auto again = qrn::read_normalized(back, cands);
  EXPECT_EQ(again, ex);
}

TEST(Normalized, RejectsFieldCountDrift) {
  std::istringstream bad("1\tonly\tthree\n");
  EXPECT_THROW(qrn::read_normalized(bad), qrn::ParseError);
}

TEST(Fingerprint, StableAndContentSensitive) {
  const char a[] = "hello world";
  const char b[] = "hello worle";
  EXPECT_EQ(qrn::fingerprint_bytes(a, sizeof(a) - 1), qrn::fingerprint_bytes(a, sizeof(a) - 1));
  EXPECT_NE(qrn::fingerprint_bytes(a, sizeof(a) - 1), qrn::fingerprint_bytes(b, sizeof(b) - 1));
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "qrn_fp_test";
  fs::create_directories(dir);
  auto p = (dir / "f.txt").string();
  std::ofstream(p) << a;
  EXPECT_EQ(qrn::fingerprint_file(p), qrn::fingerprint_bytes(a, sizeof(a) - 1));
  EXPECT_THROW(qrn::fingerprint_file((dir / "missing.txt").string()), qrn::IoError);
  fs::remove_all(dir);
}

TEST(Discovery, FindsConventionalFileNames) {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "qrn_find_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "qa1_train.txt") << "1 x\n";
  std::ofstream(dir / "qa1_test.txt") << "1 x\n";
  auto qa = qrn::find_qa_files(dir.string(), 1);
  EXPECT_NE(qa.train.find("qa1_train.txt"), std::string::npos);
  EXPECT_NE(qa.test.find("qa1_test.txt"), std::string::npos);
  EXPECT_THROW(qrn::find_qa_files(dir.string(), 2), qrn::IoError);

  std::ofstream(dir / "dialog-babi-task1-API-calls-trn.txt") << "";
  std::ofstream(dir / "dialog-babi-task1-API-calls-tst.txt") << "";
  std::ofstream(dir / "dialog-babi-candidates.txt") << "1 hello\n";
  auto dlg = qrn::find_dialog_files(dir.string(), 1);
  EXPECT_NE(dlg.train.find("trn"), std::string::npos);
  EXPECT_NE(dlg.test.find("tst"), std::string::npos);
  EXPECT_NE(dlg.candidates.find("candidates"), std::string::npos);
  fs::remove_all(dir);
}

}  // namespace
