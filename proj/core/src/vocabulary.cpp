#include "qrn/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace qrn {

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string strip_final_punct(std::string tok) {
  while (!tok.empty() && (tok.back() == '.' || tok.back() == '?' || tok.back() == '!'))
    tok.pop_back();
  return tok;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&]() {
    std::string tok = strip_final_punct(cur);
    if (!tok.empty()) out.push_back(tok);
    cur.clear();
  };
  for (char c : lower(text)) {
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n')
      flush();
    else
      cur.push_back(c);
  }
  flush();
  return out;
}

std::string canonical_answer(const std::string& answer) {
  std::string low = lower(answer);
  std::vector<std::string> items;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= low.size(); ++i) {
    if (i == low.size() || low[i] == ',') {
      std::string item = trim(low.substr(start, i - start));
      if (!item.empty()) items.push_back(item);
      start = i + 1;
    }
  }
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += items[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
  add("<nil>");
}

void Vocabulary::add(const std::string& word) {
  if (map_.count(word)) return;
  map_.emplace(word, words_.size());
  words_.push_back(word);
}

Vocabulary Vocabulary::build(const std::vector<Example>& corpus, bool fold_answers) {
  if (corpus.empty()) throw InputError("build_vocabulary: empty corpus");
  std::set<std::string> seen;
  auto take = [&](const std::vector<std::string>& toks) {
    for (const auto& t : toks) seen.insert(t);
  };
  const std::vector<std::string>* candidate_lines = nullptr;
  for (const auto& ex : corpus) {
    for (const auto& sentence : ex.context) take(tokenize(sentence));
    take(tokenize(ex.question));
    if (fold_answers)
      seen.insert(canonical_answer(ex.answer));
    else
      take(tokenize(ex.answer));
    if (ex.candidates && ex.candidates.get() != candidate_lines) {
      candidate_lines = ex.candidates.get();
      for (const auto& cand : *candidate_lines) take(tokenize(cand));
    }
  }
  Vocabulary v;
  for (const auto& w : seen) v.add(w);  // std::set iterates sorted
  return v;
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  if (words.size() < 3 || words[0] != "<pad>" || words[1] != "<unk>" || words[2] != "<nil>")
    throw InputError("vocabulary word list missing reserved entries");
  Vocabulary v;
  for (std::size_t i = 3; i < words.size(); ++i) v.add(words[i]);
  if (v.size() != words.size()) throw InputError("vocabulary word list has duplicates");
  return v;
}

std::size_t Vocabulary::index(const std::string& word) const {
  auto it = map_.find(word);
  return it == map_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& word) const { return map_.count(word) > 0; }

const std::string& Vocabulary::word(std::size_t index) const {
  if (index >= words_.size())
    throw InputError("vocabulary index " + std::to_string(index) + " out of range");
  return words_[index];
}

std::vector<std::size_t> Vocabulary::indices(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(index(t));
  return out;
}

}  // namespace qrn
