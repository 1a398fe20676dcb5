#include "qrn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <regex>
#include <sstream>

#include "qrn/rng.hpp"

namespace qrn {

namespace {

constexpr const char* kNilSentence = "<nil>";

// Splits "<n> <rest>"; returns false when the line does not start with an
// integer followed by a space.
bool split_numbered(const std::string& line, long* number, std::string* rest) {
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i == 0 || i >= line.size() || line[i] != ' ') return false;
  *number = std::stol(line.substr(0, i));
  *rest = line.substr(i + 1);
  return true;
}

std::string rstrip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ')) s.pop_back();
  return s;
}

}  // namespace

bool Example::operator==(const Example& o) const {
  bool same_cands = (!candidates && !o.candidates) ||
                    (candidates && o.candidates && *candidates == *o.candidates);
  return context == o.context && question == o.question && answer == o.answer &&
         supporting_ids == o.supporting_ids && task_id == o.task_id && same_cands;
}

std::vector<Example> parse_babi_qa(std::istream& in, int task_id) {
  std::vector<Example> out;
  std::vector<std::string> story;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = rstrip(line);
    if (line.empty()) continue;
    long n = 0;
    std::string rest;
    if (!split_numbered(line, &n, &rest))
      throw ParseError("expected '<number> <text>', got '" + line + "'", line_no);
    if (n == 1) story.clear();
    std::size_t tab = rest.find('\t');
    if (tab == std::string::npos) {
      story.push_back(rest);
      continue;
    }
    Example ex;
    ex.task_id = task_id;
    ex.question = rest.substr(0, tab);
    std::string tail = rest.substr(tab + 1);
    std::size_t tab2 = tail.find('\t');
    ex.answer = tab2 == std::string::npos ? tail : tail.substr(0, tab2);
    if (ex.answer.empty()) throw ParseError("question without answer", line_no);
    if (tab2 != std::string::npos) {
      std::istringstream ids(tail.substr(tab2 + 1));
      int id;
      while (ids >> id) ex.supporting_ids.push_back(id);
    }
    if (story.empty()) throw ParseError("question before any statement", line_no);
    ex.context = story;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<std::string> read_candidate_lines(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = rstrip(line);
    if (line.empty()) continue;
    long n = 0;
    std::string rest;
    out.push_back(split_numbered(line, &n, &rest) ? rest : line);
  }
  return out;
}

std::vector<Example> parse_babi_dialog(
    std::istream& in, std::shared_ptr<const std::vector<std::string>> candidates, int task_id) {
  std::vector<Example> out;
  std::vector<std::string> history;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = rstrip(line);
    if (line.empty()) {
      history.clear();
      continue;
    }
    long n = 0;
    std::string rest;
    if (!split_numbered(line, &n, &rest))
      throw ParseError("expected '<number> <text>', got '" + line + "'", line_no);
    if (n == 1) history.clear();
    std::size_t tab = rest.find('\t');
    if (tab == std::string::npos) {
      history.push_back(rest);  // knowledge-base fact
      continue;
    }
    std::string user = rest.substr(0, tab);
    std::string system = rest.substr(tab + 1);
    if (user.empty() || system.empty())
      throw ParseError("turn with empty utterance", line_no);
    Example ex;
    ex.task_id = task_id;
    ex.context = history.empty() ? std::vector<std::string>{kNilSentence} : history;
    ex.question = user;
    ex.answer = system;
    ex.candidates = candidates;
    out.push_back(std::move(ex));
    history.push_back(user);
    history.push_back(system);
  }
  return out;
}

void split_dev(const std::vector<Example>& all, double fraction, std::uint64_t seed,
               std::vector<Example>* train, std::vector<Example>* dev) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw InputError("split_dev: fraction must be in (0, 1)");
  if (all.empty()) throw InputError("split_dev: empty example list");
  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0xDE5));
  rng.shuffle(order);
  const auto dev_n = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(all.size())));
  train->clear();
  dev->clear();
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i + dev_n < order.size())
      train->push_back(all[order[i]]);
    else
      dev->push_back(all[order[i]]);
  }
}

void apply_story_cap(std::vector<Example>& examples, std::size_t cap) {
  if (cap == 0) throw InputError("story cap must be >= 1");
  for (auto& ex : examples) {
    if (ex.context.size() > cap)
      ex.context.erase(ex.context.begin(), ex.context.end() - static_cast<long>(cap));
  }
}

void write_normalized(std::ostream& out, const std::vector<Example>& examples) {
  for (const auto& ex : examples) {
    out << ex.task_id << '\t';
    for (std::size_t i = 0; i < ex.context.size(); ++i) {
      if (i) out << " | ";
      out << ex.context[i];
    }
    out << '\t' << ex.question << '\t' << ex.answer << '\t';
    for (std::size_t i = 0; i < ex.supporting_ids.size(); ++i) {
      if (i) out << ' ';
      out << ex.supporting_ids[i];
    }
    out << '\n';
  }
}

std::vector<Example> read_normalized(
    std::istream& in, std::shared_ptr<const std::vector<std::string>> candidates) {
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = rstrip(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == '\t') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 5)
      throw ParseError("expected 5 tab-separated fields, got " +
                       std::to_string(fields.size()), line_no);
    Example ex;
    ex.task_id = std::stoi(fields[0]);
    std::string ctx = fields[1];
    std::size_t pos = 0;
    while (true) {
      std::size_t sep = ctx.find(" | ", pos);
      if (sep == std::string::npos) {
        ex.context.push_back(ctx.substr(pos));
        break;
      }
      ex.context.push_back(ctx.substr(pos, sep - pos));
      pos = sep + 3;
    }
    ex.question = fields[2];
    ex.answer = fields[3];
    std::istringstream ids(fields[4]);
    int id;
    while (ids >> id) ex.supporting_ids.push_back(id);
    ex.candidates = candidates;
    out.push_back(std::move(ex));
  }
  return out;
}

std::uint64_t fingerprint_bytes(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fingerprint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for fingerprint: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (got < static_cast<std::streamsize>(sizeof buf)) break;
  }
  return h;
}

namespace {

std::string find_one(const std::string& root, const std::regex& pattern, const char* what) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root);
  std::vector<std::string> hits;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (std::regex_match(name, pattern)) hits.push_back(entry.path().string());
  }
  if (hits.empty())
    throw IoError(std::string("no ") + what + " file found under " + root);
  std::sort(hits.begin(), hits.end());
  return hits.front();
}

}  // namespace

DatasetPaths find_qa_files(const std::string& root, int task) {
  const std::string t = std::to_string(task);
  DatasetPaths p;
  p.train = find_one(root, std::regex("qa" + t + "(_.*)?_train\\.txt"), "QA train");
  p.test = find_one(root, std::regex("qa" + t + "(_.*)?_test\\.txt"), "QA test");
  return p;
}

DatasetPaths find_dialog_files(const std::string& root, int task) {
  const std::string t = std::to_string(task);
  DatasetPaths p;
  p.train = find_one(root, std::regex("dialog-babi-task" + t + "-.*trn\\.txt"), "dialog train");
  p.test = find_one(root, std::regex("dialog-babi-task" + t + "-.*tst\\.txt"), "dialog test");
  p.candidates =
      find_one(root, std::regex("dialog-babi-candidates\\.txt"), "dialog candidates");
  return p;
}

}  // namespace qrn
