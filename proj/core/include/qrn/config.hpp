#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "qrn/error.hpp"

namespace qrn {

enum class ScanMode { sequential, parallel };
enum class TaskKind { qa, dialog };

std::string to_string(ScanMode m);
std::string to_string(TaskKind k);
ScanMode parse_scan_mode(const std::string& s);
TaskKind parse_task_kind(const std::string& s);

/// Architecture of the network itself.
struct QrnConfig {
  std::size_t layers = 2;
  std::size_t hidden_size = 50;
  bool reset_gate = true;
  bool vector_gates = false;
  bool bidirectional = true;
  bool tie_weights = true;
  double forget_bias = 2.5;
  bool use_match = false;
  bool reconstruction = false;
  double reconstruction_weight = 1.0;

  std::size_t gate_rows() const { return vector_gates ? hidden_size : 1; }
};

/// Optimization schedule. Defaults follow the 1k-dataset regime; the 10k
/// regime (batch 128, lr 0.1, decay 0.0005) is reachable through config.
struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.5;
  double l2_decay = 0.001;
  std::size_t max_epochs = 500;
  std::size_t patience_epochs = 50;
  std::size_t restarts = 10;
  std::uint64_t seed = 1;
  double dev_fraction = 0.1;
  bool decay_biases = false;
  std::size_t story_cap = 200;
  ScanMode scan = ScanMode::parallel;
};

struct RunConfig {
  QrnConfig model;
  TrainConfig train;
  std::string precision = "f32";  // f32 | f64

  void validate() const;  // throws ConfigError
};

/// Apply one key=value pair. Unknown keys and unparsable values throw
/// ConfigError naming the key.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

/// Flat key=value file, one pair per line, '#' starts a comment.
RunConfig parse_config_stream(std::istream& in, RunConfig base = RunConfig{});
RunConfig parse_config_file(const std::string& path, RunConfig base = RunConfig{});

/// All recognized keys with current values, one per line, stable order.
std::string dump_config(const RunConfig& cfg);

}  // namespace qrn
