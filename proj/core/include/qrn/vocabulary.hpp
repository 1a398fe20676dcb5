#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "qrn/data.hpp"

namespace qrn {

/// Lowercase, split on whitespace, strip trailing sentence punctuation
/// {., ?, !} from each token. Empty tokens are dropped.
std::vector<std::string> tokenize(const std::string& text);

/// Fold a (possibly comma-separated list) answer into one canonical token:
/// lowercased, items trimmed, rejoined with bare commas.
std::string canonical_answer(const std::string& answer);

/// Dense word index with three reserved entries. Non-reserved words are
/// inserted in sorted order, so identical corpora yield identical tables.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kNil = 2;

  Vocabulary();

  /// Collects tokens from contexts, questions, and answers. QA answers are
  /// folded to single tokens; dialog answers and candidate lines are
  /// tokenized word by word.
  static Vocabulary build(const std::vector<Example>& corpus, bool fold_answers);

  /// Rebuild from an ordered word list (checkpoint load).
  static Vocabulary from_words(std::vector<std::string> words);

  std::size_t index(const std::string& word) const;  // kUnk when absent
  bool contains(const std::string& word) const;
  const std::string& word(std::size_t index) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  std::vector<std::size_t> indices(const std::vector<std::string>& tokens) const;

 private:
  void add(const std::string& word);
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> map_;
};

}  // namespace qrn
