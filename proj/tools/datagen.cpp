#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "qrn/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"generate deterministic story/dialog datasets"};
  app.require_subcommand(1);

  int qa_task = 1;
  std::size_t train_stories = 200, test_stories = 200;
  std::size_t train_dialogs = 300, test_dialogs = 200;
  std::uint64_t seed = 1;
  std::string out_dir = ".";

  auto* qa = app.add_subcommand("qa", "story question-answering tasks (1, 2, 12)");
  qa->add_option("--task", qa_task, "task number")->check(CLI::IsMember({1, 2, 12}));
  qa->add_option("--train-stories", train_stories, "stories in the train file");
  qa->add_option("--test-stories", test_stories, "stories in the test file");
  qa->add_option("--seed", seed, "generator seed");
  qa->add_option("--out", out_dir, "output directory")->required();

  auto* dialog = app.add_subcommand("dialog", "restaurant slot-filling dialogs");
  dialog->add_option("--train-dialogs", train_dialogs, "dialogs in the train file");
  dialog->add_option("--test-dialogs", test_dialogs, "dialogs in the test file");
  dialog->add_option("--seed", seed, "generator seed");
  dialog->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
    qrn::DatasetPaths paths;
    if (*qa)
      paths = qrn::synth::write_qa_dataset(out_dir, qa_task, train_stories, test_stories, seed);
    else
      paths = qrn::synth::write_dialog_dataset(out_dir, train_dialogs, test_dialogs, seed);
    std::cout << "train " << paths.train << "\n";
    std::cout << "test " << paths.test << "\n";
    if (!paths.candidates.empty()) std::cout << "candidates " << paths.candidates << "\n";
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const qrn::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
