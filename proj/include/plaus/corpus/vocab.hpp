#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "plaus/label.hpp"

namespace plaus {

// Word-level vocabulary. One token per whitespace-separated word; the label
// words "True" and "False" are reserved single tokens.
class Vocabulary {
 public:
  Vocabulary() = default;
  // Words are deduplicated and sorted; the two label tokens are appended.
  explicit Vocabulary(std::vector<std::string> words);
  // Exact id order, as stored in a checkpoint.
  static Vocabulary from_ordered(std::vector<std::string> words);

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  int id(std::string_view word) const;  // -1 if absent
  const std::string& word(int id) const;
  // Throws ConfigError when either label token is missing.
  LabelIds label_ids() const;

  // Throws ParseError naming the first unknown word.
  std::vector<int> tokenize(std::string_view text) const;
  std::string detokenize(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// Collapse runs of whitespace to single spaces and trim.
std::string normalize_text(std::string_view text);
std::vector<std::string> split_words(std::string_view text);

}  // namespace plaus
