#include "qrn/config.hpp"

#include <fstream>
#include <sstream>

namespace qrn {

std::string to_string(ScanMode m) {
  return m == ScanMode::sequential ? "sequential" : "parallel";
}

std::string to_string(TaskKind k) { return k == TaskKind::qa ? "qa" : "dialog"; }

ScanMode parse_scan_mode(const std::string& s) {
  if (s == "sequential") return ScanMode::sequential;
  if (s == "parallel") return ScanMode::parallel;
  throw ConfigError("scan mode must be 'sequential' or 'parallel', got '" + s + "'");
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "qa") return TaskKind::qa;
  if (s == "dialog") return TaskKind::dialog;
  throw ConfigError("task kind must be 'qa' or 'dialog', got '" + s + "'");
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError(key + ": expected boolean, got '" + v + "'");
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long n = std::stoll(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument("");
    return static_cast<std::size_t>(n);
  } catch (...) {
    throw ConfigError(key + ": expected non-negative integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError(key + ": expected number, got '" + v + "'");
  }
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "layers") cfg.model.layers = parse_size(key, value);
  else if (key == "hidden_size") cfg.model.hidden_size = parse_size(key, value);
  else if (key == "reset_gate") cfg.model.reset_gate = parse_bool(key, value);
  else if (key == "vector_gates") cfg.model.vector_gates = parse_bool(key, value);
  else if (key == "bidirectional") cfg.model.bidirectional = parse_bool(key, value);
  else if (key == "tie_weights") cfg.model.tie_weights = parse_bool(key, value);
  else if (key == "forget_bias") cfg.model.forget_bias = parse_double(key, value);
  else if (key == "use_match") cfg.model.use_match = parse_bool(key, value);
  else if (key == "reconstruction") cfg.model.reconstruction = parse_bool(key, value);
  else if (key == "reconstruction_weight")
    cfg.model.reconstruction_weight = parse_double(key, value);
  else if (key == "batch_size") cfg.train.batch_size = parse_size(key, value);
  else if (key == "learning_rate") cfg.train.learning_rate = parse_double(key, value);
  else if (key == "l2_decay") cfg.train.l2_decay = parse_double(key, value);
  else if (key == "max_epochs") cfg.train.max_epochs = parse_size(key, value);
  else if (key == "patience_epochs") cfg.train.patience_epochs = parse_size(key, value);
  else if (key == "restarts") cfg.train.restarts = parse_size(key, value);
  else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(parse_size(key, value));
  else if (key == "dev_fraction") cfg.train.dev_fraction = parse_double(key, value);
  else if (key == "decay_biases") cfg.train.decay_biases = parse_bool(key, value);
  else if (key == "story_cap") cfg.train.story_cap = parse_size(key, value);
  else if (key == "scan") cfg.train.scan = parse_scan_mode(value);
  else if (key == "precision") {
    if (value != "f32" && value != "f64")
      throw ConfigError("precision: expected f32 or f64, got '" + value + "'");
    cfg.precision = value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig parse_config_stream(std::istream& in, RunConfig base) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" +
                        line + "'");
    apply_config_entry(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  base.validate();
  return base;
}

RunConfig parse_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  return parse_config_stream(in, std::move(base));
}

void RunConfig::validate() const {
  if (model.layers == 0) throw ConfigError("layers must be >= 1");
  if (model.hidden_size == 0) throw ConfigError("hidden_size must be >= 1");
  if (model.reconstruction_weight < 0) throw ConfigError("reconstruction_weight must be >= 0");
  if (train.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (train.learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
  if (train.l2_decay < 0) throw ConfigError("l2_decay must be >= 0");
  if (train.patience_epochs > train.max_epochs && train.max_epochs > 0)
    throw ConfigError("patience_epochs must be <= max_epochs");
  if (train.restarts == 0) throw ConfigError("restarts must be >= 1");
  if (!(train.dev_fraction > 0.0 && train.dev_fraction < 1.0))
    throw ConfigError("dev_fraction must be in (0, 1)");
  if (train.story_cap == 0) throw ConfigError("story_cap must be >= 1");
}

std::string dump_config(const RunConfig& c) {
  std::ostringstream out;
  out << "layers=" << c.model.layers << '\n'
      << "hidden_size=" << c.model.hidden_size << '\n'
      << "reset_gate=" << (c.model.reset_gate ? 1 : 0) << '\n'
      << "vector_gates=" << (c.model.vector_gates ? 1 : 0) << '\n'
      << "bidirectional=" << (c.model.bidirectional ? 1 : 0) << '\n'
      << "tie_weights=" << (c.model.tie_weights ? 1 : 0) << '\n'
      << "forget_bias=" << c.model.forget_bias << '\n'
      << "use_match=" << (c.model.use_match ? 1 : 0) << '\n'
      << "reconstruction=" << (c.model.reconstruction ? 1 : 0) << '\n'
      << "reconstruction_weight=" << c.model.reconstruction_weight << '\n'
      << "batch_size=" << c.train.batch_size << '\n'
      << "learning_rate=" << c.train.learning_rate << '\n'
      << "l2_decay=" << c.train.l2_decay << '\n'
      << "max_epochs=" << c.train.max_epochs << '\n'
      << "patience_epochs=" << c.train.patience_epochs << '\n'
      << "restarts=" << c.train.restarts << '\n'
      << "seed=" << c.train.seed << '\n'
      << "dev_fraction=" << c.train.dev_fraction << '\n'
      << "decay_biases=" << (c.train.decay_biases ? 1 : 0) << '\n'
      << "story_cap=" << c.train.story_cap << '\n'
      << "scan=" << to_string(c.train.scan) << '\n'
      << "precision=" << c.precision << '\n';
  return out.str();
}

}  // namespace qrn
