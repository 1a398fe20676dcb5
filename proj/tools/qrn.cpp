#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <CLI11.hpp>

#include "qrn/checkpoint.hpp"
#include "qrn/gradcheck.hpp"
#include "qrn/synth.hpp"
#include "qrn/trainer.hpp"

namespace {

using namespace qrn;

struct TaskSpec {
  TaskKind kind = TaskKind::qa;
  int number = 1;
};

TaskSpec parse_task_spec(const std::string& s) {
  TaskSpec spec;
  std::string digits;
  if (s.rfind("qa", 0) == 0) {
    spec.kind = TaskKind::qa;
    digits = s.substr(2);
  } else if (s.rfind("dialog", 0) == 0) {
    spec.kind = TaskKind::dialog;
    digits = s.substr(6);
  } else {
    throw ConfigError("task must look like 'qa1' or 'dialog1', got '" + s + "'");
  }
  try {
    std::size_t pos = 0;
    spec.number = std::stoi(digits, &pos);
    if (pos != digits.size() || spec.number < 1) throw std::invalid_argument("");
  } catch (...) {
    throw ConfigError("task must end in a positive number, got '" + s + "'");
  }
  return spec;
}

/// Flags shared by the data-facing commands. Explicit flags beat --set
/// entries, which beat the --config file, which beats built-in defaults.
struct CommonFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::string precision;  // empty = not given
  std::string scan;
  long long seed = -1;

  RunConfig resolve(RunConfig base = RunConfig{}) const {
    RunConfig cfg = std::move(base);
    if (!config_path.empty()) cfg = parse_config_file(config_path, std::move(cfg));
    for (const auto& kv : sets) {
      auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ConfigError("--set expects key=value, got '" + kv + "'");
      apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed);
    if (!precision.empty()) apply_config_entry(cfg, "precision", precision);
    if (!scan.empty()) cfg.train.scan = parse_scan_mode(scan);
    cfg.validate();
    return cfg;
  }
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key=value config file");
  cmd->add_option("--set", f.sets, "config override, key=value (repeatable)");
  cmd->add_option("--seed", f.seed, "base random seed")->check(CLI::NonNegativeNumber);
  cmd->add_option("--precision", f.precision, "compute precision")
      ->check(CLI::IsMember({"f32", "f64"}));
  cmd->add_option("--scan", f.scan, "recurrence evaluation strategy")
      ->check(CLI::IsMember({"sequential", "parallel"}));
}

template <class Fn>
void with_precision(const RunConfig& cfg, Fn&& fn) {
  if (cfg.precision == "f64")
    fn(std::type_identity<double>{});
  else
    fn(std::type_identity<float>{});
}

struct LoadedData {
  DatasetPaths paths;
  std::vector<Example> train, test;
  std::shared_ptr<const std::vector<std::string>> candidates;
};

std::vector<Example> parse_data_file(const std::string& path, const TaskSpec& spec,
                                     std::shared_ptr<const std::vector<std::string>> cands) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);
  if (spec.kind == TaskKind::qa) return parse_babi_qa(in, spec.number);
  return parse_babi_dialog(in, std::move(cands), spec.number);
}

LoadedData load_dataset(const TaskSpec& spec, const std::string& dir, std::size_t story_cap) {
  LoadedData d;
  if (spec.kind == TaskKind::qa) {
    d.paths = find_qa_files(dir, spec.number);
  } else {
    d.paths = find_dialog_files(dir, spec.number);
    std::ifstream cand_in(d.paths.candidates);
    if (!cand_in) throw IoError("cannot open candidate file: " + d.paths.candidates);
    d.candidates =
        std::make_shared<const std::vector<std::string>>(read_candidate_lines(cand_in));
  }
  d.train = parse_data_file(d.paths.train, spec, d.candidates);
  d.test = parse_data_file(d.paths.test, spec, d.candidates);
  apply_story_cap(d.train, story_cap);
  apply_story_cap(d.test, story_cap);
  return d;
}

// --- train -------------------------------------------------------------------

template <class T>
void run_train(const RunConfig& cfg, const TaskSpec& spec, const std::string& data_dir,
               const std::string& out_path) {
  auto data = load_dataset(spec, data_dir, cfg.train.story_cap);
  auto vocab = Vocabulary::build(data.train, /*fold_answers=*/spec.kind == TaskKind::qa);
  std::vector<Example> train_set, dev_set;
  split_dev(data.train, cfg.train.dev_fraction, cfg.train.seed, &train_set, &dev_set);
  std::cout << "# task=" << to_string(spec.kind) << spec.number << " train=" << train_set.size()
            << " dev=" << dev_set.size() << " test=" << data.test.size()
            << " vocab=" << vocab.size() << "\n";

  auto result = train<T>(cfg, spec.kind, vocab, data.candidates, train_set, dev_set, &std::cout);
  std::cout << "# best restart " << (result.log.best_restart + 1) << " dev_loss="
            << result.log.best_dev_loss << "\n";

  auto test = evaluate(result.model, data.test, cfg.train.scan);
  char line[128];
  std::snprintf(line, sizeof line, "test_err=%.6f test_loss=%.6f\n", test.error_rate,
                test.mean_loss);
  std::cout << line;

  save_checkpoint(result.model, out_path, fingerprint_file(data.paths.train));
  std::cout << "# checkpoint written to " << out_path << "\n";
}

// --- eval --------------------------------------------------------------------

template <class T>
void run_eval(const CommonFlags& flags, const TaskSpec& spec, const std::string& data_dir,
              const std::string& ckpt_path, const std::string& split) {
  auto loaded = load_checkpoint<T>(ckpt_path);
  RunConfig cfg = flags.resolve(loaded.model.cfg);
  loaded.model.cfg = cfg;
  if (loaded.model.kind != spec.kind)
    throw InputError("checkpoint task kind is " + to_string(loaded.model.kind) +
                     ", --task says " + to_string(spec.kind));

  auto data = load_dataset(spec, data_dir, cfg.train.story_cap);
  if (fingerprint_file(data.paths.train) != loaded.fingerprint)
    std::cerr << "warning: dataset fingerprint differs from the one this checkpoint was "
                 "trained on\n";

  const auto& examples = split == "train" ? data.train : data.test;
  auto res = evaluate(loaded.model, examples, cfg.train.scan);
  char line[160];
  std::snprintf(line, sizeof line, "examples=%zu errors=%zu error_rate=%.6f mean_loss=%.6f\n",
                res.total, res.wrong, res.error_rate, res.mean_loss);
  std::cout << line;
}

// --- trace -------------------------------------------------------------------

template <class T>
void run_trace(const CommonFlags& flags, const TaskSpec& spec, const std::string& data_dir,
               const std::string& ckpt_path, const std::string& split, long long index,
               const std::string& contains, bool machine) {
  auto loaded = load_checkpoint<T>(ckpt_path);
  RunConfig cfg = flags.resolve(loaded.model.cfg);
  loaded.model.cfg = cfg;
  auto data = load_dataset(spec, data_dir, cfg.train.story_cap);
  const auto& examples = split == "train" ? data.train : data.test;

  const Example* chosen = nullptr;
  if (!contains.empty()) {
    for (const auto& ex : examples) {
      bool hit = ex.question.find(contains) != std::string::npos;
      for (const auto& s : ex.context)
        if (!hit && s.find(contains) != std::string::npos) hit = true;
      if (hit) {
        chosen = &ex;
        break;
      }
    }
    if (!chosen) throw InputError("no example contains '" + contains + "'");
  } else {
    const std::size_t i = index < 0 ? 0 : static_cast<std::size_t>(index);
    if (i >= examples.size())
      throw InputError("example index " + std::to_string(i) + " out of range (" +
                       std::to_string(examples.size()) + " examples)");
    chosen = &examples[i];
  }

  GateTrace trace;
  auto pred = predict(loaded.model, *chosen, cfg.train.scan, &trace);
  const std::string render =
      machine ? render_trace_machine(trace, chosen->context, chosen->question, chosen->answer,
                                     pred.answer)
              : render_trace_human(trace, chosen->context, chosen->question, chosen->answer,
                                   pred.answer);
  std::cout << render;
}

// --- bench -------------------------------------------------------------------

template <class T>
void run_bench(const std::vector<std::size_t>& steps, std::size_t width, std::size_t batch,
               std::size_t repeats, std::uint64_t seed) {
  for (std::size_t t : steps) {
    auto r = benchmark_scan<T>(t, width, batch, repeats, seed);
    std::cout << format_bench_record(r) << "\n";
  }
}

// --- gradcheck ---------------------------------------------------------------

void run_gradcheck(const CommonFlags& flags) {
  RunConfig cfg;
  cfg.model.hidden_size = 8;
  cfg.model.vector_gates = true;
  cfg.model.reconstruction = true;
  cfg = flags.resolve(std::move(cfg));
  cfg.precision = "f64";
  if (cfg.model.hidden_size > 16)
    throw ConfigError("gradcheck is limited to hidden_size <= 16");

  std::istringstream story(synth::qa_text(1, 1, cfg.train.seed));
  auto examples = parse_babi_qa(story, 1);
  auto vocab = Vocabulary::build(examples, true);
  Example ex = examples[2];  // six context sentences
  if (ex.context.size() > 8) ex.context.resize(8);

  auto model = build_model<double>(cfg, TaskKind::qa, vocab, nullptr, cfg.train.seed);
  std::vector<Parameter<double>*> params;
  for (auto& ref : model.parameters()) params.push_back(ref.param);

  const double tolerance = 1e-4;
  for (ScanMode mode : {ScanMode::sequential, ScanMode::parallel}) {
    LossOptions opts;
    opts.include_l2 = true;
    opts.mode = mode;
    auto reports = check_gradients<double>(
        [&](Tape<double>& tape) { return example_loss(tape, model, ex, opts); }, params);
    const GradCheckReport<double>* worst = &reports.front();
    for (const auto& r : reports)
      if (r.max_rel_err > worst->max_rel_err) worst = &r;
    char line[192];
    std::snprintf(line, sizeof line, "scan=%s max_rel_err=%.3e param=%s[%zu]\n",
                  to_string(mode).c_str(), worst->max_rel_err, worst->name.c_str(),
                  worst->worst_index);
    std::cout << line;
    if (worst->max_rel_err > tolerance)
      throw NumericCheckError("gradient check failed: " + worst->name + " rel err " +
                              std::to_string(worst->max_rel_err));
  }
  std::cout << "gradcheck ok\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"query-reduction network: train, evaluate, trace, benchmark"};
  app.require_subcommand(1);

  CommonFlags train_flags, eval_flags, trace_flags, bench_flags, grad_flags;
  std::string train_task, train_data, train_out = "qrn.ckpt";
  std::string eval_task, eval_data, eval_ckpt, eval_split = "test";
  std::string trace_task, trace_data, trace_ckpt, trace_split = "test", trace_contains;
  long long trace_index = -1;
  bool trace_machine = false;
  std::vector<std::size_t> bench_steps = {100};
  std::size_t bench_width = 50, bench_batch = 32, bench_repeats = 5;

  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common_flags(train_cmd, train_flags);
  train_cmd->add_option("--task", train_task, "task name, e.g. qa1 or dialog1")->required();
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "checkpoint path (manifest; blob gets .bin)");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common_flags(eval_cmd, eval_flags);
  eval_cmd->add_option("--task", eval_task, "task name")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint manifest path")->required();
  eval_cmd->add_option("--split", eval_split, "train or test")
      ->check(CLI::IsMember({"train", "test"}));

  auto* trace_cmd = app.add_subcommand("trace", "print per-sentence gate activity");
  add_common_flags(trace_cmd, trace_flags);
  trace_cmd->add_option("--task", trace_task, "task name")->required();
  trace_cmd->add_option("--data", trace_data, "dataset directory")->required();
  trace_cmd->add_option("--checkpoint", trace_ckpt, "checkpoint manifest path")->required();
  trace_cmd->add_option("--split", trace_split, "train or test")
      ->check(CLI::IsMember({"train", "test"}));
  auto* idx_opt = trace_cmd->add_option("--index", trace_index, "example index");
  trace_cmd->add_option("--contains", trace_contains, "first example containing this text")
      ->excludes(idx_opt);
  trace_cmd->add_flag("--machine", trace_machine, "tab-separated full-precision output");

  auto* bench_cmd = app.add_subcommand("bench", "time sequential vs parallel recurrence");
  add_common_flags(bench_cmd, bench_flags);
  bench_cmd->add_option("--steps", bench_steps, "sequence lengths")->delimiter(',');
  bench_cmd->add_option("--width", bench_width, "state width");
  bench_cmd->add_option("--batch", bench_batch, "items per timed pass");
  bench_cmd->add_option("--repeats", bench_repeats, "timed passes per path");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check (f64)");
  add_common_flags(grad_cmd, grad_flags);

  try {
    app.parse(argc, argv);

    using namespace qrn;
    if (*train_cmd) {
      RunConfig cfg = train_flags.resolve();
      auto spec = parse_task_spec(train_task);
      with_precision(cfg, [&](auto tag) {
        using T = typename decltype(tag)::type;
        run_train<T>(cfg, spec, train_data, train_out);
      });
    } else if (*eval_cmd) {
      RunConfig cfg = eval_flags.resolve();
      auto spec = parse_task_spec(eval_task);
      with_precision(cfg, [&](auto tag) {
        using T = typename decltype(tag)::type;
        run_eval<T>(eval_flags, spec, eval_data, eval_ckpt, eval_split);
      });
    } else if (*trace_cmd) {
      RunConfig cfg = trace_flags.resolve();
      auto spec = parse_task_spec(trace_task);
      with_precision(cfg, [&](auto tag) {
        using T = typename decltype(tag)::type;
        run_trace<T>(trace_flags, spec, trace_data, trace_ckpt, trace_split, trace_index,
                     trace_contains, trace_machine);
      });
    } else if (*bench_cmd) {
      RunConfig cfg = bench_flags.resolve();
      with_precision(cfg, [&](auto tag) {
        using T = typename decltype(tag)::type;
        run_bench<T>(bench_steps, bench_width, bench_batch, bench_repeats, cfg.train.seed);
      });
    } else if (*grad_cmd) {
      run_gradcheck(grad_flags);
    }
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const qrn::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const qrn::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const qrn::NumericCheckError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
