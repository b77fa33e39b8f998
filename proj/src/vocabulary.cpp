#include "cha/vocabulary.hpp"

#include <algorithm>
#include <map>

#include "cha/errors.hpp"

namespace cha {
namespace {
const std::vector<std::string> kReservedWords = {"<start>", "<end>", "<pad>", "<unk>"};
}

Vocabulary::Vocabulary() : words_(kReservedWords) {
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> captions) {
  std::map<std::string, std::size_t> freq;
  for (const auto& caption : captions)
    for (const auto& w : caption)
      if (std::find(kReservedWords.begin(), kReservedWords.end(), w) == kReservedWords.end()) ++freq[w];
  std::vector<std::pair<std::string, std::size_t>> entries(freq.begin(), freq.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words = kReservedWords;
  for (auto& e : entries) words.push_back(e.first);
  return from_words(std::move(words));
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  if (words.size() < kReserved || !std::equal(kReservedWords.begin(), kReservedWords.end(), words.begin()))
    throw FormatError("vocabulary must start with the reserved tokens <start> <end> <pad> <unk>");
  Vocabulary v;
  v.words_ = std::move(words);
  v.index_.clear();
  for (std::size_t i = 0; i < v.words_.size(); ++i) {
    if (!v.index_.emplace(v.words_[i], i).second) throw FormatError("duplicate vocabulary word '" + v.words_[i] + "'");
  }
  return v;
}

std::size_t Vocabulary::index(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word(std::size_t index) const {
  if (index >= words_.size())
    throw IndexError("vocabulary index " + std::to_string(index) + " outside size " + std::to_string(words_.size()));
  return words_[index];
}

std::vector<std::size_t> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(index(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const std::size_t> indices) const {
  std::vector<std::string> out;
  for (auto i : indices)
    if (i != kStart && i != kEnd && i != kPad) out.push_back(word(i));
  return out;
}

std::string Vocabulary::to_sentence(std::span<const std::size_t> indices) const {
  std::string s;
  for (const auto& w : decode(indices)) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

}  // namespace cha
