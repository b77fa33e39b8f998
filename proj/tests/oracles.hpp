#pragma once

// Reference implementations written independently of the library, used as
// oracles by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using Tokens = std::vector<std::string>;
using References = std::vector<Tokens>;

inline std::vector<std::string> ngrams(const Tokens& t, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    std::string g;
    for (std::size_t j = 0; j < n; ++j) g += t[i + j] + '\x1f';
    out.push_back(g);
  }
  return out;
}

// Plain CIDEr by direct summation over a dense n-gram axis.
inline double brute_force_cider(const std::vector<Tokens>& cands, const std::vector<References>& refs) {
  const std::size_t images = cands.size();
  double corpus = 0.0;
  for (std::size_t i = 0; i < images; ++i) {
    double image_score = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
      std::vector<std::string> axis;
      auto add_axis = [&](const Tokens& t) {
        for (auto& g : ngrams(t, n))
          if (std::find(axis.begin(), axis.end(), g) == axis.end()) axis.push_back(g);
      };
      add_axis(cands[i]);
      for (auto& r : refs[i]) add_axis(r);

      std::vector<double> idf(axis.size());
      for (std::size_t a = 0; a < axis.size(); ++a) {
        double df = 0;
        for (std::size_t j = 0; j < images; ++j) {
          bool present = false;
          for (auto& r : refs[j]) {
            auto gs = ngrams(r, n);
            if (std::find(gs.begin(), gs.end(), axis[a]) != gs.end()) present = true;
          }
          df += present ? 1 : 0;
        }
        idf[a] = std::log(static_cast<double>(images)) - std::log(std::max(1.0, df));
      }
      auto vec = [&](const Tokens& t) {
        auto gs = ngrams(t, n);
        std::vector<double> v(axis.size(), 0.0);
        for (std::size_t a = 0; a < axis.size(); ++a) {
          double c = 0;
          for (auto& g : gs) c += g == axis[a] ? 1 : 0;
          v[a] = gs.empty() ? 0.0 : c / static_cast<double>(gs.size()) * idf[a];
        }
        return v;
      };
      const auto cv = vec(cands[i]);
      double sum = 0.0;
      for (auto& r : refs[i]) {
        const auto rv = vec(r);
        double dot = 0, nc = 0, nr = 0;
        for (std::size_t a = 0; a < axis.size(); ++a) {
          dot += cv[a] * rv[a];
          nc += cv[a] * cv[a];
          nr += rv[a] * rv[a];
        }
        sum += (nc > 0 && nr > 0) ? dot / std::sqrt(nc * nr) : 0.0;
      }
      image_score += sum / static_cast<double>(refs[i].size());
    }
    corpus += 10.0 * image_score / 4.0;
  }
  return corpus / static_cast<double>(images);
}

// Small random corpus over a five-word alphabet.
inline void random_corpus(std::uint64_t seed, std::vector<Tokens>& cands, std::vector<References>& refs) {
  static const char* words[] = {"a", "b", "c", "d", "e"};
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  auto sentence = [&] {
    Tokens t(pick(1, 7));
    for (auto& w : t) w = words[pick(0, 4)];
    return t;
  };
  const std::size_t images = pick(2, 5);
  cands.clear();
  refs.clear();
  for (std::size_t i = 0; i < images; ++i) {
    cands.push_back(sentence());
    References r(pick(1, 4));
    for (auto& s : r) s = sentence();
    refs.push_back(r);
  }
}

// Three-token model whose step distribution is a fixed table keyed by the
// prefix: token 0 and 1 are words, token 2 ends the sentence. Greedy takes
// the locally likelier word 0 first, which forfeits the much likelier
// two-token sentence [1, end].
struct ToyModel {
  static constexpr std::size_t kEnd = 2;
  using State = std::vector<std::size_t>;
  struct Transition {
    std::vector<double> log_probs;
    State next;
  };
  State start() const { return {}; }
  Transition step(const State& s) const {
    std::vector<double> p;
    if (s.empty())
      p = {0.50, 0.45, 0.05};
    else if (s.front() == 0)
      p = {0.36, 0.34, 0.30};
    else if (s.size() == 1)
      p = {0.05, 0.05, 0.90};
    else
      p = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    for (auto& x : p) x = std::log(x);
    return {p, s};
  }
  State with_token(State s, std::size_t tok) const {
    s.push_back(tok);
    return s;
  }
};

struct Ranked {
  std::vector<std::size_t> tokens;
  double log_prob = 0.0;
  double normalized = 0.0;
};

// Every complete sequence of length <= max_len (ended by kEnd, or cut at
// max_len), ranked by length-normalized log-probability, ties lexicographic.
inline std::vector<Ranked> enumerate_toy(const ToyModel& m, std::size_t max_len) {
  std::vector<Ranked> out;
  std::function<void(std::vector<std::size_t>, double)> walk = [&](std::vector<std::size_t> prefix, double lp) {
    auto tr = m.step(prefix);
    for (std::size_t v = 0; v < 3; ++v) {
      auto seq = prefix;
      seq.push_back(v);
      const double total = lp + tr.log_probs[v];
      if (v == ToyModel::kEnd || seq.size() == max_len)
        out.push_back({seq, total, total / static_cast<double>(seq.size())});
      else
        walk(seq, total);
    }
  };
  walk({}, 0.0);
  std::sort(out.begin(), out.end(), [](const Ranked& a, const Ranked& b) {
    if (a.normalized != b.normalized) return a.normalized > b.normalized;
    return a.tokens < b.tokens;
  });
  return out;
}

}  // namespace oracle
