#pragma once

#include <cstdint>
#include <string>

#include "qrn/data.hpp"

namespace qrn::synth {

/// Deterministic story generators in the standard numbered-line format.
/// Supported QA tasks: 1 (single fact), 2 (object tracking, two facts),
/// 12 (conjoined subjects). Each story carries five questions.
std::string qa_text(int task, std::size_t stories, std::uint64_t seed);

/// Restaurant slot-filling dialogs, one system response per user turn,
/// ending in an api_call that names all four slots.
std::string dialog_text(std::size_t dialogs, std::uint64_t seed);

/// Candidate list for the dialog task: every fixed system utterance plus
/// every possible api_call, numbered lines.
std::string dialog_candidates_text();

/// Write train/test files with conventional names under `dir` (created if
/// missing) and return their paths.
DatasetPaths write_qa_dataset(const std::string& dir, int task, std::size_t train_stories,
                              std::size_t test_stories, std::uint64_t seed);
DatasetPaths write_dialog_dataset(const std::string& dir, std::size_t train_dialogs,
                                  std::size_t test_dialogs, std::uint64_t seed);

}  // namespace qrn::synth
