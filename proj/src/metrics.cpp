#include "cha/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

#include <nlohmann/json.hpp>

#include "cha/errors.hpp"
#include "cha/kernels.hpp"

namespace cha {
namespace {

using NGram = std::vector<std::string>;
using Counts = std::map<NGram, double>;

Counts ngram_counts(const Tokens& tokens, std::size_t n) {
  Counts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    counts[NGram(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1.0;
  return counts;
}

void check_corpus(std::size_t candidates, std::size_t references) {
  if (candidates == 0) throw DomainError("metric over an empty corpus");
  if (candidates != references)
    throw ShapeError("metric: " + std::to_string(candidates) + " candidates but " + std::to_string(references) +
                     " reference sets");
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  for (char ch : text) {
    if (ch == '.' || ch == ',' || ch == ';' || ch == ':') continue;
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::array<double, 4> bleu(std::span<const Tokens> candidates, std::span<const References> references) {
  check_corpus(candidates.size(), references.size());
  std::array<double, 4> matched{}, total{};
  double cand_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    const auto& refs = references[i];
    if (refs.empty()) throw ContractError("bleu: image " + std::to_string(i) + " has no references");
    for (std::size_t n = 1; n <= 4; ++n) {
      const Counts cc = ngram_counts(cand, n);
      Counts max_ref;
      for (const auto& r : refs)
        for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
      for (const auto& [g, c] : cc) {
        auto it = max_ref.find(g);
        matched[n - 1] += std::min(c, it == max_ref.end() ? 0.0 : it->second);
        total[n - 1] += c;
      }
    }
    const double len = static_cast<double>(cand.size());
    double closest = static_cast<double>(refs[0].size());
    for (const auto& r : refs) {
      const double rl = static_cast<double>(r.size());
      const double d = std::abs(rl - len), best = std::abs(closest - len);
      if (d < best || (d == best && rl < closest)) closest = rl;
    }
    cand_len += len;
    ref_len += closest;
  }
  const double bp = cand_len >= ref_len ? 1.0 : (cand_len == 0 ? 0.0 : std::exp(1.0 - ref_len / cand_len));
  std::array<double, 4> scores{};
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    if (total[n] == 0 || matched[n] == 0) zero = true;
    if (!zero) log_sum += std::log(matched[n] / total[n]);
    scores[n] = zero ? 0.0 : bp * std::exp(log_sum / static_cast<double>(n + 1));
  }
  return scores;
}

double rouge_l_sentence(const Tokens& candidate, const References& references) {
  constexpr double beta = 1.2;
  double best = 0.0;
  for (const auto& ref : references) {
    const double lcs = static_cast<double>(lcs_length(candidate, ref));
    if (lcs == 0) continue;
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(ref.size());
    const double f = (1 + beta * beta) * p * r / (r + beta * beta * p);
    best = std::max(best, f);
  }
  return best;
}

double rouge_l(std::span<const Tokens> candidates, std::span<const References> references) {
  check_corpus(candidates.size(), references.size());
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) total += rouge_l_sentence(candidates[i], references[i]);
  return total / static_cast<double>(candidates.size());
}

std::vector<double> cider_per_image(std::span<const Tokens> candidates, std::span<const References> references) {
  check_corpus(candidates.size(), references.size());
  const std::size_t images = candidates.size();
  // Document frequency: number of images whose reference set contains the n-gram.
  std::array<std::map<NGram, double>, 4> df;
  for (const auto& refs : references) {
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<NGram, bool> seen;
      for (const auto& r : refs)
        for (const auto& [g, c] : ngram_counts(r, n)) seen[g] = true;
      for (const auto& [g, _] : seen) df[n - 1][g] += 1.0;
    }
  }
  const double log_images = std::log(static_cast<double>(images));

  auto tfidf = [&](const Tokens& tokens, std::size_t n) {
    Counts counts = ngram_counts(tokens, n);
    double total = 0;
    for (const auto& [g, c] : counts) total += c;
    Counts vec;
    for (const auto& [g, c] : counts) {
      auto it = df[n - 1].find(g);
      const double d = it == df[n - 1].end() ? 0.0 : it->second;
      vec[g] = (c / total) * (log_images - std::log(std::max(1.0, d)));
    }
    return vec;
  };
  auto cosine = [](const Counts& a, const Counts& b) {
    double dot = 0, na = 0, nb = 0;
    for (const auto& [g, x] : a) {
      na += x * x;
      auto it = b.find(g);
      if (it != b.end()) dot += x * it->second;
    }
    for (const auto& [g, y] : b) nb += y * y;
    return (na == 0 || nb == 0) ? 0.0 : dot / (std::sqrt(na) * std::sqrt(nb));
  };

  std::vector<double> scores(images, 0.0);
  const auto count = static_cast<long long>(images);
#pragma omp parallel for schedule(dynamic) num_threads(kernels::thread_cap())
  for (long long ii = 0; ii < count; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto& refs = references[i];
    double score = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
      const Counts cv = tfidf(candidates[i], n);
      double acc = 0.0;
      for (const auto& r : refs) acc += cosine(cv, tfidf(r, n));
      score += refs.empty() ? 0.0 : acc / static_cast<double>(refs.size());
    }
    scores[i] = 10.0 * score / 4.0;
  }
  return scores;
}

double cider(std::span<const Tokens> candidates, std::span<const References> references) {
  const auto per = cider_per_image(candidates, references);
  double total = 0.0;
  for (double s : per) total += s;
  return total / static_cast<double>(per.size());
}

EvalReport evaluate(std::span<const std::string> image_ids, std::span<const Tokens> candidates,
                    std::span<const References> references) {
  check_corpus(candidates.size(), references.size());
  EvalReport report;
  report.bleu = bleu(candidates, references);
  const auto per_cider = cider_per_image(candidates, references);
  double c = 0.0, r = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    ImageScores s;
    s.image_id = i < image_ids.size() ? image_ids[i] : std::to_string(i);
    for (const auto& w : candidates[i]) s.candidate += (s.candidate.empty() ? "" : " ") + w;
    s.bleu = bleu(candidates.subspan(i, 1), references.subspan(i, 1));
    s.cider = per_cider[i];
    s.rouge_l = rouge_l_sentence(candidates[i], references[i]);
    c += s.cider;
    r += s.rouge_l;
    report.images.push_back(std::move(s));
  }
  report.cider = c / static_cast<double>(candidates.size());
  report.rouge_l = r / static_cast<double>(candidates.size());
  return report;
}

std::string report_json(const EvalReport& report) {
  auto scores = [](const std::array<double, 4>& b, double c, double r) {
    return nlohmann::ordered_json{{"B-1", b[0]}, {"B-2", b[1]}, {"B-3", b[2]}, {"B-4", b[3]}, {"C", c}, {"R", r}};
  };
  nlohmann::ordered_json j;
  j["scores"] = scores(report.bleu, report.cider, report.rouge_l);
  j["images"] = nlohmann::ordered_json::array();
  for (const auto& s : report.images) {
    j["images"].push_back(
        {{"image_id", s.image_id}, {"candidate", s.candidate}, {"scores", scores(s.bleu, s.cider, s.rouge_l)}});
  }
  return j.dump(2);
}

std::string report_table(const EvalReport& report) {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof line, "%-8s%-8s%-8s%-8s%-8s%-8s\n", "B-1", "B-2", "B-3", "B-4", "C", "R");
  out += line;
  std::snprintf(line, sizeof line, "%-8.3f%-8.3f%-8.3f%-8.3f%-8.3f%-8.3f\n", report.bleu[0], report.bleu[1],
                report.bleu[2], report.bleu[3], report.cider, report.rouge_l);
  out += line;
  return out;
}

}  // namespace cha
