#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cha {

using Tokens = std::vector<std::string>;
using References = std::vector<Tokens>;

// Lowercases, strips . , ; : and splits on whitespace.
Tokens tokenize(std::string_view text);

// Corpus BLEU-1..4: clipped n-gram precision, geometric mean over orders
// 1..n, brevity penalty against the closest reference length (ties prefer
// the shorter one). No smoothing: a zero precision zeroes that order.
std::array<double, 4> bleu(std::span<const Tokens> candidates, std::span<const References> references);

// LCS F-measure with beta = 1.2, best reference per image.
double rouge_l_sentence(const Tokens& candidate, const References& references);
// Corpus mean of rouge_l_sentence.
double rouge_l(std::span<const Tokens> candidates, std::span<const References> references);

// Plain CIDEr (no length penalty): TF-IDF n-gram cosine averaged over
// n = 1..4 and over references, times 10. IDF comes from the reference
// sets of the whole corpus.
std::vector<double> cider_per_image(std::span<const Tokens> candidates, std::span<const References> references);
double cider(std::span<const Tokens> candidates, std::span<const References> references);

struct ImageScores {
  std::string image_id;
  std::string candidate;
  std::array<double, 4> bleu{};
  double cider = 0.0;
  double rouge_l = 0.0;
};

struct EvalReport {
  std::array<double, 4> bleu{};
  double cider = 0.0;
  double rouge_l = 0.0;
  std::vector<ImageScores> images;
};

EvalReport evaluate(std::span<const std::string> image_ids, std::span<const Tokens> candidates,
                    std::span<const References> references);

// {"scores": {"B-1",...,"B-4","C","R"}, "images": [...]}.
std::string report_json(const EvalReport& report);
// Aligned table with columns B-1 B-2 B-3 B-4 C R.
std::string report_table(const EvalReport& report);

}  // namespace cha
