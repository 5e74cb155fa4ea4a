#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <unordered_map>
#include <vector>

#include "lclip/error.hpp"

namespace lclip {

// Lowercase + whitespace/punctuation split. Word characters are alnum,
// underscore and apostrophe; everything else separates. Shared by the encoder
// vocabulary and the n-gram metrics so both sides see identical tokens.
inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '_' || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// Corpus-built vocabulary with fixed special slots. Unknown words map to the
// OOV token at encode time.
class Vocabulary {
public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kOov = 3;

  Vocabulary() = default;

  static Vocabulary from_words(std::vector<std::string> words) {
    Vocabulary v;
    v.words_ = std::move(words);
    for (std::size_t i = 0; i < v.words_.size(); ++i) v.index_[v.words_[i]] = static_cast<int>(i);
    return v;
  }

  static Vocabulary build(const std::vector<std::string>& texts, std::size_t max_size) {
    std::unordered_map<std::string, long> freq;
    for (const auto& t : texts)
      for (auto& w : split_words(t)) ++freq[w];
    std::vector<std::pair<std::string, long>> items(freq.begin(), freq.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    std::vector<std::string> words = {"<pad>", "<bos>", "<eos>", "<oov>"};
    for (const auto& [w, _] : items) {
      if (words.size() >= max_size) break;
      words.push_back(w);
    }
    return from_words(std::move(words));
  }

  int size() const { return static_cast<int>(words_.size()); }

  int id(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? kOov : it->second;
  }

  bool contains(const std::string& w) const { return index_.count(w) > 0; }

  const std::string& word(int id) const {
    if (id < 0 || id >= size()) throw IndexError("vocabulary: id " + std::to_string(id) + " out of range");
    return words_[static_cast<std::size_t>(id)];
  }

  const std::vector<std::string>& words() const { return words_; }

  std::vector<int> encode(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& w : split_words(text)) ids.push_back(id(w));
    return ids;
  }

  std::string decode(const std::vector<int>& ids, bool skip_special = true) const {
    std::string out;
    for (int t : ids) {
      if (skip_special && (t == kPad || t == kBos || t == kEos)) continue;
      if (!out.empty()) out.push_back(' ');
      out += word(t);
    }
    return out;
  }

private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace lclip
