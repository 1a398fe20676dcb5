#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

// End-to-end checks of the installed command-line tools. The binary paths
// arrive as positional arguments (see main below) or via QRN_CLI /
// QRN_DATAGEN.

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

RunResult run(const std::string& cmd) {
  RunResult r;
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  int status = pclose(pipe);
  if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
  return r;
}

std::string env_path(const char* name) {
  const char* v = std::getenv(name);
  return v ? v : "";
}

std::vector<std::string> lines_matching(const std::string& text, const std::string& prefix) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(prefix, 0) == 0) out.push_back(line);
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  static std::string cli, datagen;
  static fs::path dir, qa_dir, dlg_dir, ckpt;
  static RunResult trained;

  static void SetUpTestSuite() {
    cli = env_path("QRN_CLI");
    datagen = env_path("QRN_DATAGEN");
    ASSERT_FALSE(cli.empty()) << "QRN_CLI not set";
    ASSERT_FALSE(datagen.empty()) << "QRN_DATAGEN not set";
    dir = fs::temp_directory_path() / "qrn_cli_test";
    fs::remove_all(dir);
    qa_dir = dir / "qa";
    dlg_dir = dir / "dialog";
    fs::create_directories(qa_dir);
    fs::create_directories(dlg_dir);
    ckpt = dir / "qa1.ckpt";

    auto g1 = run(datagen + " qa --task 1 --train-stories 6 --test-stories 3 --seed 5 --out " +
                  qa_dir.string());
    ASSERT_EQ(g1.exit_code, 0) << g1.output;
    auto g2 = run(datagen + " dialog --train-dialogs 4 --test-dialogs 2 --seed 6 --out " +
                  dlg_dir.string());
    ASSERT_EQ(g2.exit_code, 0) << g2.output;

    trained = run(train_cmd(ckpt));
  }

  static std::string train_cmd(const fs::path& out, const std::string& extra = "") {
    return cli + " train --task qa1 --data " + qa_dir.string() + " --out " + out.string() +
           " --seed 3 --set hidden_size=8 --set max_epochs=2 --set patience_epochs=2" +
           " --set restarts=1 --set batch_size=8 " + extra;
  }
};

std::string CliTest::cli, CliTest::datagen;
fs::path CliTest::dir, CliTest::qa_dir, CliTest::dlg_dir, CliTest::ckpt;
RunResult CliTest::trained;

TEST_F(CliTest, DatagenWritesDiscoverableFiles) {
  EXPECT_TRUE(fs::exists(qa_dir / "qa1_train.txt"));
  EXPECT_TRUE(fs::exists(qa_dir / "qa1_test.txt"));
  EXPECT_TRUE(fs::exists(dlg_dir / "dialog-babi-candidates.txt"));
  auto bad = run(datagen + " qa --task 3 --out " + qa_dir.string());
  EXPECT_EQ(bad.exit_code, 1);
  EXPECT_NE(bad.output.find("error:"), std::string::npos);
}

TEST_F(CliTest, TrainReportsProgressAndWritesCheckpoint) {
  ASSERT_EQ(trained.exit_code, 0) << trained.output;
  EXPECT_NE(trained.output.find("# task=qa1"), std::string::npos);
  EXPECT_NE(trained.output.find("epoch=1 "), std::string::npos);
  EXPECT_NE(trained.output.find("test_err="), std::string::npos);
  EXPECT_NE(trained.output.find("# checkpoint written"), std::string::npos);
  EXPECT_TRUE(fs::exists(ckpt));
  EXPECT_TRUE(fs::exists(ckpt.string() + ".bin"));
  auto manifest = read_file(ckpt);
  EXPECT_NE(manifest.find("config-begin"), std::string::npos);
  EXPECT_NE(manifest.find("hidden_size=8"), std::string::npos);
}

TEST_F(CliTest, TrainingIsReproducibleCommandToCommand) {
  auto again = run(train_cmd(dir / "qa1_again.ckpt"));
  ASSERT_EQ(again.exit_code, 0) << again.output;
  EXPECT_EQ(lines_matching(trained.output, "epoch="), lines_matching(again.output, "epoch="));
  EXPECT_EQ(read_file(ckpt.string() + ".bin"),
            read_file((dir / "qa1_again.ckpt").string() + ".bin"));
}

TEST_F(CliTest, EvalReportsCountsOnBothSplits) {
  ASSERT_EQ(trained.exit_code, 0);
  auto test = run(cli + " eval --task qa1 --data " + qa_dir.string() + " --checkpoint " +
                  ckpt.string());
  ASSERT_EQ(test.exit_code, 0) << test.output;
  EXPECT_NE(test.output.find("examples=15 "), std::string::npos);
  EXPECT_NE(test.output.find("error_rate="), std::string::npos);
  EXPECT_NE(test.output.find("mean_loss="), std::string::npos);
  auto train_split = run(cli + " eval --task qa1 --data " + qa_dir.string() + " --checkpoint " +
                         ckpt.string() + " --split train");
  ASSERT_EQ(train_split.exit_code, 0) << train_split.output;
  EXPECT_NE(train_split.output.find("examples=30 "), std::string::npos);
}

TEST_F(CliTest, EvalRejectsKindMismatch) {
  ASSERT_EQ(trained.exit_code, 0);
  auto r = run(cli + " eval --task dialog1 --data " + dlg_dir.string() + " --checkpoint " +
               ckpt.string());
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("error: checkpoint task kind"), std::string::npos);
}

TEST_F(CliTest, TraceRendersBothLayouts) {
  ASSERT_EQ(trained.exit_code, 0);
  auto human = run(cli + " trace --task qa1 --data " + qa_dir.string() + " --checkpoint " +
                   ckpt.string() + " --index 0");
  ASSERT_EQ(human.exit_code, 0) << human.output;
  EXPECT_NE(human.output.find("question: "), std::string::npos);
  EXPECT_NE(human.output.find("predicted: "), std::string::npos);
  EXPECT_NE(human.output.find("z1"), std::string::npos);
  auto machine = run(cli + " trace --task qa1 --data " + qa_dir.string() + " --checkpoint " +
                     ckpt.string() + " --contains \"Where is\" --machine");
  ASSERT_EQ(machine.exit_code, 0) << machine.output;
  EXPECT_EQ(machine.output.rfind("#t\tsentence", 0), 0u);
  EXPECT_NE(machine.output.find('\t'), std::string::npos);
}

TEST_F(CliTest, TraceRejectsBadSelectors) {
  ASSERT_EQ(trained.exit_code, 0);
  auto oob = run(cli + " trace --task qa1 --data " + qa_dir.string() + " --checkpoint " +
                 ckpt.string() + " --index 999");
  EXPECT_EQ(oob.exit_code, 1);
  EXPECT_NE(oob.output.find("error: example index 999 out of range"), std::string::npos);
  auto missing = run(cli + " trace --task qa1 --data " + qa_dir.string() + " --checkpoint " +
                     ckpt.string() + " --contains zanzibar");
  EXPECT_EQ(missing.exit_code, 1);
  EXPECT_NE(missing.output.find("error: no example contains"), std::string::npos);
}

TEST_F(CliTest, BenchPrintsOneRecordPerLength) {
  auto r = run(cli + " bench --steps 4,8 --width 3 --batch 2 --repeats 1");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("T=4 d=3 batch=2 "), std::string::npos);
  EXPECT_NE(r.output.find("T=8 d=3 batch=2 "), std::string::npos);
  EXPECT_NE(r.output.find("seq_ms="), std::string::npos);
  EXPECT_NE(r.output.find("ratio="), std::string::npos);
}

TEST_F(CliTest, GradcheckPassesAtDefaultSize) {
  auto r = run(cli + " gradcheck --seed 11");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("scan=sequential max_rel_err="), std::string::npos);
  EXPECT_NE(r.output.find("scan=parallel max_rel_err="), std::string::npos);
  EXPECT_NE(r.output.find("gradcheck ok"), std::string::npos);
}

TEST_F(CliTest, GradcheckRefusesWideModels) {
  auto r = run(cli + " gradcheck --set hidden_size=64");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("error: gradcheck is limited"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run(cli).exit_code, 1);                      // subcommand required
  EXPECT_EQ(run(cli + " train --task qa1").exit_code, 1);  // --data required
  auto bad_key = run(train_cmd(dir / "nope.ckpt", "--set no_such_key=1"));
  EXPECT_EQ(bad_key.exit_code, 1);
  EXPECT_NE(bad_key.output.find("error:"), std::string::npos);
  EXPECT_NE(bad_key.output.find("no_such_key"), std::string::npos);
}

TEST_F(CliTest, MissingDataExitsTwo) {
  auto r = run(cli + " train --task qa1 --data " + (dir / "empty").string() +
               " --out " + (dir / "x.ckpt").string());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("error:"), std::string::npos);
}

TEST_F(CliTest, ConfigFileFeedsTrainingAndSetOverridesIt) {
  auto cfg_path = dir / "small.cfg";
  {
    std::ofstream out(cfg_path);
    out << "# tiny run\nhidden_size=9\nlayers=1\nmax_epochs=1\npatience_epochs=1\n"
        << "restarts=1\nbatch_size=8\n";
  }
  auto out1 = dir / "cfgrun.ckpt";
  auto r1 = run(cli + " train --task qa1 --data " + qa_dir.string() + " --out " + out1.string() +
                " --seed 3 --config " + cfg_path.string());
  ASSERT_EQ(r1.exit_code, 0) << r1.output;
  auto m1 = read_file(out1);
  EXPECT_NE(m1.find("hidden_size=9"), std::string::npos);
  EXPECT_NE(m1.find("layers=1"), std::string::npos);

  auto out2 = dir / "cfgrun2.ckpt";
  auto r2 = run(cli + " train --task qa1 --data " + qa_dir.string() + " --out " + out2.string() +
                " --seed 3 --config " + cfg_path.string() + " --set hidden_size=7");
  ASSERT_EQ(r2.exit_code, 0) << r2.output;
  EXPECT_NE(read_file(out2).find("hidden_size=7"), std::string::npos);
}

TEST_F(CliTest, DialogPipelineTrainsAndEvaluates) {
  auto out = dir / "dlg.ckpt";
  auto r = run(cli + " train --task dialog1 --data " + dlg_dir.string() + " --out " +
               out.string() + " --seed 4 --set hidden_size=8 --set max_epochs=1" +
               " --set patience_epochs=1 --set restarts=1 --set batch_size=8");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("# task=dialog1"), std::string::npos);
  EXPECT_NE(r.output.find("test_err="), std::string::npos);
  auto e = run(cli + " eval --task dialog1 --data " + dlg_dir.string() + " --checkpoint " +
               out.string());
  ASSERT_EQ(e.exit_code, 0) << e.output;
  EXPECT_NE(e.output.find("error_rate="), std::string::npos);
}

}  // namespace

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  if (argc > 1) setenv("QRN_CLI", argv[1], 0);
  if (argc > 2) setenv("QRN_DATAGEN", argv[2], 0);
  return RUN_ALL_TESTS();
}
