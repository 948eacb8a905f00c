#include "plaus/corpus/vocab.hpp"

#include <algorithm>
#include <cctype>

#include "plaus/errors.hpp"

namespace plaus {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  for (const auto& w : split_words(text)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  std::erase_if(words, [](const std::string& w) { return w == "True" || w == "False"; });
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  words.push_back("True");
  words.push_back("False");
  *this = from_ordered(std::move(words));
}

Vocabulary Vocabulary::from_ordered(std::vector<std::string> words) {
  Vocabulary v;
  v.words_ = std::move(words);
  for (std::size_t i = 0; i < v.words_.size(); ++i) {
    if (!v.index_.emplace(v.words_[i], static_cast<int>(i)).second) {
      throw ConfigError("duplicate vocabulary word '" + v.words_[i] + "'");
    }
  }
  return v;
}

int Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? -1 : it->second;
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw ContractError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return words_[static_cast<std::size_t>(id)];
}

LabelIds Vocabulary::label_ids() const {
  LabelIds ids{id("True"), id("False")};
  if (ids.true_id < 0 || ids.false_id < 0) {
    throw ConfigError("label tokens True/False are missing from the vocabulary");
  }
  return ids;
}

std::vector<int> Vocabulary::tokenize(std::string_view text) const {
  std::vector<int> out;
  for (const auto& w : split_words(text)) {
    const int i = id(w);
    if (i < 0) throw ParseError("unknown word '" + w + "'");
    out.push_back(i);
  }
  return out;
}

std::string Vocabulary::detokenize(const std::vector<int>& ids) const {
  std::string out;
  for (int i : ids) {
    if (!out.empty()) out.push_back(' ');
    out += word(i);
  }
  return out;
}

}  // namespace plaus
