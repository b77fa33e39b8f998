#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cha {

// Word <-> index map. Indices 0..3 are reserved for <start>, <end>, <pad>
// and <unk>; the rest are ordered by descending corpus frequency, then
// lexicographically.
class Vocabulary {
 public:
  static constexpr std::size_t kStart = 0;
  static constexpr std::size_t kEnd = 1;
  static constexpr std::size_t kPad = 2;
  static constexpr std::size_t kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();

  static Vocabulary build(std::span<const std::vector<std::string>> captions);
  // Rebuilds from a stored word list; the reserved tokens must lead it.
  static Vocabulary from_words(std::vector<std::string> words);

  std::size_t size() const { return words_.size(); }
  std::size_t index(const std::string& word) const;
  const std::string& word(std::size_t index) const;
  const std::vector<std::string>& words() const { return words_; }

  std::vector<std::size_t> encode(std::span<const std::string> tokens) const;
  // Surface words; <start>, <end> and <pad> are dropped.
  std::vector<std::string> decode(std::span<const std::size_t> indices) const;
  std::string to_sentence(std::span<const std::size_t> indices) const;

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace cha
