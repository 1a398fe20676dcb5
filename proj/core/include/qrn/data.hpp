#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "qrn/error.hpp"

namespace qrn {

/// One supervised example: a story (or dialog history), a question (or user
/// utterance), and the answer. Supporting ids are parsed but never used for
/// supervision. Dialog examples share a candidate-response list.
struct Example {
  std::vector<std::string> context;
  std::string question;
  std::string answer;
  std::vector<int> supporting_ids;
  int task_id = 0;
  std::shared_ptr<const std::vector<std::string>> candidates;

  bool operator==(const Example& o) const;
};

/// Numbered bAbI QA lines: `<n> <sentence>` for statements,
/// `<n> <question>\t<answer>[\t<supporting ids>]` for questions. A line
/// number of 1 starts a new story; question lines never join later contexts.
std::vector<Example> parse_babi_qa(std::istream& in, int task_id = 0);

/// Candidate-response file: one response per line, optional leading line
/// number stripped.
std::vector<std::string> read_candidate_lines(std::istream& in);

/// Numbered dialog turns `<n> <user>\t<system>`; lines without a tab are
/// knowledge-base facts appended to the context verbatim. Turn number 1 (or
/// a blank line) starts a new dialog. A first turn gets one NIL placeholder
/// sentence as context so every example has at least one context row.
std::vector<Example> parse_babi_dialog(
    std::istream& in, std::shared_ptr<const std::vector<std::string>> candidates,
    int task_id = 0);

/// Deterministic shuffle by seed; the last ceil(fraction*N) examples go to
/// dev. Fraction outside (0,1) is an input error.
void split_dev(const std::vector<Example>& all, double fraction, std::uint64_t seed,
               std::vector<Example>* train, std::vector<Example>* dev);

/// Keep at most `cap` most recent context sentences per example.
void apply_story_cap(std::vector<Example>& examples, std::size_t cap);

/// One example per line: task id, context joined by " | ", question, answer,
/// space-joined supporting ids; fields tab-separated.
void write_normalized(std::ostream& out, const std::vector<Example>& examples);
std::vector<Example> read_normalized(
    std::istream& in,
    std::shared_ptr<const std::vector<std::string>> candidates = nullptr);

/// FNV-1a over a file's bytes, for checkpoint provenance stamps.
std::uint64_t fingerprint_file(const std::string& path);
std::uint64_t fingerprint_bytes(const void* data, std::size_t n);

/// Locate dataset files under a root directory by bAbI naming conventions
/// (`qa<task>_*_train.txt` / `..._test.txt`, or `dialog-babi-task<task>-*`
/// with -trn/-tst suffixes and a shared candidates file).
struct DatasetPaths {
  std::string train, test, candidates;
};

DatasetPaths find_qa_files(const std::string& root, int task);
DatasetPaths find_dialog_files(const std::string& root, int task);

}  // namespace qrn
