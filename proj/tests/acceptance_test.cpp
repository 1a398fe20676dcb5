// Acceptance checks A1..A9 for the query-reduction network. Each check
// prints exactly one line:
//
//   A<n> PASS - <detail> (<elapsed>s)
//   A<n> FAIL - <detail> (<elapsed>s)
//
// Run without arguments for the full battery, or name the checks to run
// (e.g. `qrn-acceptance A1 A6`). Exit status is the number of failures.
// Every tolerance and budget lives here, in code.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qrn/checkpoint.hpp"
#include "qrn/gradcheck.hpp"
#include "qrn/scan.hpp"
#include "qrn/synth.hpp"
#include "qrn/trainer.hpp"

namespace {

using namespace qrn;
namespace fs = std::filesystem;

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

// --- A1: closed-form recurrence matches the sequential one ------------------

template <class T>
Tensor<T> random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  Tensor<T> t(Shape::mat(rows, cols));
  for (auto& x : t.data) x = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <class T>
double a1_sweep(std::size_t cases, std::uint64_t seed, double tol, std::size_t* violations) {
  const std::size_t lens[] = {1, 2, 7, 50, 100, 200};
  const std::size_t widths[] = {1, 8, 50};
  Rng rng(seed);
  double worst = 0;
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t steps = lens[i % 6];
    const std::size_t d = widths[(i / 6) % 3];
    const bool vector_gates = ((i / 18) % 2) != 0;
    const bool with_reset = ((i / 36) % 2) != 0;
    const std::size_t gr = vector_gates ? d : 1;

    Tape<T> tape;
    tape.set_recording(false);
    auto z = tape.constant(random_tensor<T>(rng, steps, gr, 0.0, 1.0));
    auto c = tape.constant(random_tensor<T>(rng, steps, d, -2.0, 2.0));
    VarPtr<T> r = with_reset ? tape.constant(random_tensor<T>(rng, steps, gr, 0.0, 1.0))
                             : VarPtr<T>{};
    auto par = scan(tape, z, c, r);
    auto seq = sequential_recurrence(tape, z, c, r);
    const double diff = static_cast<double>(max_abs_diff(par->value, seq->value));
    if (diff > worst) worst = diff;
    if (diff > tol) ++*violations;
  }
  return worst;
}

Outcome check_a1() {
  std::size_t violations = 0;
  const double tol64 = 1e-9, tol32 = 1e-4;
  const double worst64 = a1_sweep<double>(500, 41, tol64, &violations);
  const double worst32 = a1_sweep<float>(500, 42, tol32, &violations);
  return {violations == 0,
          fmt("1000 random cases over T<=200, d<=50, scalar/vector, +/-reset: "
              "f64 worst=%.2e (tol %.0e), f32 worst=%.2e (tol %.0e), %zu violations",
              worst64, tol64, worst32, tol32, violations)};
}

// --- A2: end-to-end gradients, both evaluation strategies -------------------

Outcome check_a2() {
  std::istringstream story(synth::qa_text(1, 1, 17));
  auto examples = parse_babi_qa(story, 1);
  auto vocab = Vocabulary::build(examples, true);
  Example ex = examples[2];
  if (ex.context.size() > 5) ex.context.erase(ex.context.begin(), ex.context.end() - 5);

  RunConfig cfg;
  cfg.model.layers = 2;
  cfg.model.hidden_size = 8;
  cfg.model.vector_gates = true;
  cfg.model.use_match = true;
  cfg.model.reconstruction = true;
  cfg.precision = "f64";

  auto model = build_model<double>(cfg, TaskKind::qa, vocab, nullptr, 5);
  std::vector<Parameter<double>*> params;
  for (auto& ref : model.parameters()) params.push_back(ref.param);

  const double fd_tol = 1e-4, cross_tol = 1e-8;
  double worst_fd = 0;
  for (ScanMode mode : {ScanMode::sequential, ScanMode::parallel}) {
    LossOptions opts;
    opts.include_l2 = true;
    opts.mode = mode;
    auto reports = check_gradients<double>(
        [&](Tape<double>& tape) { return example_loss(tape, model, ex, opts); }, params);
    worst_fd = std::max(worst_fd, static_cast<double>(worst_rel_err(reports)));
  }

  auto grads_under = [&](ScanMode mode) {
    for (auto* p : params) p->zero_gradient();
    Tape<double> tape;
    LossOptions opts;
    opts.include_l2 = true;
    opts.mode = mode;
    tape.backward(example_loss(tape, model, ex, opts));
    std::vector<Tensor<double>> out;
    out.reserve(params.size());
    for (auto* p : params) out.push_back(p->gradient);
    return out;
  };
  auto gs = grads_under(ScanMode::sequential);
  auto gp = grads_under(ScanMode::parallel);
  double cross = 0;
  for (std::size_t i = 0; i < gs.size(); ++i)
    cross = std::max(cross, static_cast<double>(max_abs_diff(gs[i], gp[i])));

  const bool ok = worst_fd < fd_tol && cross < cross_tol;
  return {ok, fmt("full model (2 layers, d=8, T=5, reset+vector+match+reconstruction): "
                  "finite-difference rel err %.2e (tol %.0e), cross-strategy grad gap %.2e "
                  "(tol %.0e)",
                  worst_fd, fd_tol, cross, cross_tol)};
}

// --- A3/A4/A5: story tasks train to the expected error range ----------------

Outcome qa_task_criterion(int task, std::size_t restarts, double bound) {
  std::istringstream train_in(synth::qa_text(task, 200, 1000 + static_cast<std::uint64_t>(task)));
  auto all = parse_babi_qa(train_in, task);
  std::istringstream test_in(synth::qa_text(task, 40, 2000 + static_cast<std::uint64_t>(task)));
  auto test = parse_babi_qa(test_in, task);

  RunConfig cfg;
  cfg.train.restarts = restarts;
  cfg.train.seed = 7;

  auto vocab = Vocabulary::build(all, true);
  std::vector<Example> train_set, dev_set;
  split_dev(all, cfg.train.dev_fraction, cfg.train.seed, &train_set, &dev_set);
  auto result = train<float>(cfg, TaskKind::qa, vocab, nullptr, train_set, dev_set, &std::cerr);
  auto ev = evaluate(result.model, test, cfg.train.scan);
  return {ev.error_rate <= bound,
          fmt("task %d: %zu train / %zu test examples, best of %zu restarts, "
              "test_err=%.4f (bound %.2f)",
              task, all.size(), test.size(), restarts, ev.error_rate, bound)};
}

Outcome check_a3() { return qa_task_criterion(1, 5, 0.02); }
Outcome check_a4() { return qa_task_criterion(12, 5, 0.02); }
Outcome check_a5() { return qa_task_criterion(2, 10, 0.10); }

// --- A6: the closed form is not slower than stepping -------------------------

Outcome check_a6() {
  auto r = benchmark_scan<float>(100, 50, 32, 5, 7);
  const double equiv_tol = 1e-4;
  const bool ok = r.par_ms <= r.seq_ms && r.max_abs_diff < equiv_tol;
  return {ok, fmt("T=100 d=50 batch=32: seq=%.2fms par=%.2fms ratio=%.2f, "
                  "outputs agree to %.2e (tol %.0e)",
                  r.seq_ms, r.par_ms, r.ratio, static_cast<double>(r.max_abs_diff), equiv_tol)};
}

// --- A7: dialogs train and predictions obey the candidate contract ----------

Outcome check_a7() {
  std::istringstream cand_in(synth::dialog_candidates_text());
  auto cands =
      std::make_shared<const std::vector<std::string>>(read_candidate_lines(cand_in));
  std::istringstream train_in(synth::dialog_text(300, 3001));
  auto all = parse_babi_dialog(train_in, cands, 1);
  std::istringstream test_in(synth::dialog_text(100, 3002));
  auto test = parse_babi_dialog(test_in, cands, 1);

  RunConfig cfg;
  cfg.train.restarts = 3;
  cfg.train.seed = 7;

  auto vocab = Vocabulary::build(all, false);
  std::vector<Example> train_set, dev_set;
  split_dev(all, cfg.train.dev_fraction, cfg.train.seed, &train_set, &dev_set);
  auto result =
      train<float>(cfg, TaskKind::dialog, vocab, cands, train_set, dev_set, &std::cerr);
  auto ev = evaluate(result.model, test, cfg.train.scan);

  std::set<std::string> cand_set(cands->begin(), cands->end());
  std::size_t outside = 0, unstable = 0, misflagged = 0;
  for (const auto& ex : test) {
    auto p1 = predict(result.model, ex, cfg.train.scan);
    auto p2 = predict(result.model, ex, cfg.train.scan);
    if (!cand_set.count(p1.answer)) ++outside;
    if (p1.answer != p2.answer || p1.index != p2.index) ++unstable;
    if (p1.correct != (tokenize(p1.answer) == tokenize(ex.answer))) ++misflagged;
  }
  const double bound = 0.15;
  const bool ok = ev.error_rate <= bound && !outside && !unstable && !misflagged;
  return {ok, fmt("dialog task: %zu train / %zu test examples, best of 3 restarts, "
                  "test_err=%.4f (bound %.2f); predictions outside candidate list: %zu, "
                  "unstable: %zu, correctness flag mismatches: %zu",
                  all.size(), test.size(), ev.error_rate, bound, outside, unstable, misflagged)};
}

// --- A8: fresh gates sit at their designed operating point ------------------

Outcome check_a8() {
  std::istringstream in(synth::qa_text(1, 20, 555));
  auto examples = parse_babi_qa(in, 1);
  auto vocab = Vocabulary::build(examples, true);
  RunConfig cfg;  // stock 2-layer d=50 network, forget bias 2.5
  auto model = build_model<float>(cfg, TaskKind::qa, vocab, nullptr, 99);

  double zsum = 0, rsum = 0;
  const std::size_t n = 20;
  for (std::size_t i = 0; i < n; ++i) {
    GateTrace trace;
    predict(model, examples[i], ScanMode::parallel, &trace);
    zsum += trace_mean_update(trace);
    rsum += trace_mean_reset(trace);
  }
  const double zmean = zsum / n, rmean = rsum / n;
  const bool ok = zmean >= 0.87 && zmean <= 0.97 && rmean >= 0.45 && rmean <= 0.55;
  return {ok, fmt("untrained network over %zu stories: mean update gate %.4f "
                  "(expected in [0.87, 0.97]), mean reset gate %.4f (expected in [0.45, 0.55])",
                  n, zmean, rmean)};
}

// --- A9: parsers and checkpoints round-trip everything we ship --------------

template <class T>
bool checkpoint_round_trips(QrnModel<T>& model, const std::vector<Example>& probe,
                            const std::string& path) {
  save_checkpoint(model, path, 0x5151515151515151ULL);
  auto loaded = load_checkpoint<T>(path);
  if (loaded.fingerprint != 0x5151515151515151ULL) return false;
  if (dump_config(loaded.model.cfg) != dump_config(model.cfg)) return false;
  auto a = model.parameters();
  auto b = loaded.model.parameters();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].param->name != b[i].param->name) return false;
    if (!(a[i].param->value.data == b[i].param->value.data)) return false;
  }
  for (const auto& ex : probe)
    if (predict(model, ex, ScanMode::parallel).answer !=
        predict(loaded.model, ex, ScanMode::parallel).answer)
      return false;
  fs::remove(path);
  fs::remove(path + ".bin");
  return true;
}

Outcome check_a9() {
  std::size_t datasets = 0, checkpoints = 0;

  for (int task : {1, 2, 12}) {
    const auto text = synth::qa_text(task, 40, 900 + static_cast<std::uint64_t>(task));
    std::istringstream in1(text), in2(text);
    auto once = parse_babi_qa(in1, task);
    auto twice = parse_babi_qa(in2, task);
    if (!(once == twice)) return {false, fmt("task %d parses differently on reread", task)};
    std::stringstream norm;
    write_normalized(norm, once);
    auto back = read_normalized(norm);
    if (!(back == once)) return {false, fmt("task %d lost in normalized round trip", task)};
    ++datasets;
  }
  {
    std::istringstream cand_in(synth::dialog_candidates_text());
    auto cands =
        std::make_shared<const std::vector<std::string>>(read_candidate_lines(cand_in));
    const auto text = synth::dialog_text(60, 950);
    std::istringstream in1(text), in2(text);
    auto once = parse_babi_dialog(in1, cands, 1);
    auto twice = parse_babi_dialog(in2, cands, 1);
    if (!(once == twice)) return {false, "dialogs parse differently on reread"};
    std::stringstream norm;
    write_normalized(norm, once);
    auto back = read_normalized(norm, cands);
    if (!(back == once)) return {false, "dialogs lost in normalized round trip"};
    ++datasets;

    // a dialog checkpoint, candidates and slot layout included
    auto vocab = Vocabulary::build(once, false);
    RunConfig cfg;
    cfg.model.hidden_size = 8;
    auto model = build_model<float>(cfg, TaskKind::dialog, vocab, cands, 77);
    std::vector<Example> probe(once.begin(), once.begin() + 5);
    if (!checkpoint_round_trips(model, probe,
                                (fs::temp_directory_path() / "qrn_a9_dialog.ckpt").string()))
      return {false, "dialog checkpoint did not round-trip"};
    ++checkpoints;
  }
  {
    std::istringstream in(synth::qa_text(1, 5, 901));
    auto examples = parse_babi_qa(in, 1);
    auto vocab = Vocabulary::build(examples, true);
    RunConfig cfg;
    cfg.model.hidden_size = 8;
    cfg.model.vector_gates = true;
    cfg.model.use_match = true;
    cfg.model.reconstruction = true;
    auto model = build_model<float>(cfg, TaskKind::qa, vocab, nullptr, 78);
    std::vector<Example> probe(examples.begin(), examples.begin() + 5);
    if (!checkpoint_round_trips(model, probe,
                                (fs::temp_directory_path() / "qrn_a9_qa.ckpt").string()))
      return {false, "story checkpoint did not round-trip"};
    ++checkpoints;
  }
  return {true, fmt("%zu datasets re-parse and survive the normalized format, "
                    "%zu checkpoints reload bit-identically and predict identically",
                    datasets, checkpoints)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, Outcome (*)()>> checks = {
      {"A1", &check_a1}, {"A2", &check_a2}, {"A3", &check_a3},
      {"A4", &check_a4}, {"A5", &check_a5}, {"A6", &check_a6},
      {"A7", &check_a7}, {"A8", &check_a8}, {"A9", &check_a9},
  };

  std::vector<std::string> selected;
  for (int i = 1; i < argc; ++i) selected.emplace_back(argv[i]);
  if (selected.empty())
    for (const auto& c : checks) selected.push_back(c.first);

  int failures = 0;
  for (const auto& label : selected) {
    const auto it =
        std::find_if(checks.begin(), checks.end(), [&](const auto& c) { return c.first == label; });
    if (it == checks.end()) {
      std::printf("%s FAIL - unknown criterion\n", label.c_str());
      ++failures;
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {false, std::string("unhandled exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s - %s (%.1fs)\n", label.c_str(), o.ok ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.ok) ++failures;
  }
  return failures;
}
