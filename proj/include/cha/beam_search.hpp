#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <vector>

namespace cha {

// A left-to-right sequence model: from a state, a distribution over the
// next token plus the successor state that still needs the chosen token.
template <typename M>
concept SequenceModel = requires(const M& m, const typename M::State& s, std::size_t tok) {
  { m.start() } -> std::convertible_to<typename M::State>;
  { m.step(s) } -> std::convertible_to<typename M::Transition>;
  { m.with_token(typename M::State(s), tok) } -> std::convertible_to<typename M::State>;
};

template <typename State>
struct Hypothesis {
  std::vector<std::size_t> tokens;
  double log_prob = 0.0;
  State state;
  bool finished = false;

  // Length-normalized score (exponent 1 over emitted tokens, <end> included).
  double normalized() const {
    return tokens.empty() ? log_prob : log_prob / static_cast<double>(tokens.size());
  }
};

// Argmax at every step (lowest index wins ties); stops after emitting
// end_token or max_len tokens. The returned tokens include <end> if emitted.
template <SequenceModel M>
std::vector<std::size_t> greedy_search(const M& model, std::size_t max_len, std::size_t end_token) {
  std::vector<std::size_t> tokens;
  typename M::State state = model.start();
  for (std::size_t t = 0; t < max_len; ++t) {
    auto tr = model.step(state);
    const auto& lp = tr.log_probs;
    const std::size_t best = static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    tokens.push_back(best);
    if (best == end_token) break;
    state = model.with_token(std::move(tr.next), best);
  }
  return tokens;
}

// Beam search with width `beam`. Each round keeps the top `beam` extensions
// by cumulative log-probability (ties: lexicographically smaller sequence);
// extensions ending in end_token leave the beam and wait in a finished pool.
// The winner among finished hypotheses and any survivors at max_len is the
// best length-normalized score, ties again lexicographic.
template <SequenceModel M>
Hypothesis<typename M::State> beam_search(const M& model, std::size_t beam, std::size_t max_len,
                                          std::size_t end_token) {
  using Hyp = Hypothesis<typename M::State>;
  struct Candidate {
    std::size_t parent;
    std::size_t token;
    double log_prob;
    std::vector<std::size_t> tokens;
  };
  beam = std::max<std::size_t>(beam, 1);

  std::vector<Hyp> active(1);
  active[0].state = model.start();
  std::vector<Hyp> finished;

  for (std::size_t t = 0; t < max_len && !active.empty(); ++t) {
    std::vector<typename M::Transition> transitions;
    std::vector<Candidate> candidates;
    for (std::size_t h = 0; h < active.size(); ++h) {
      transitions.push_back(model.step(active[h].state));
      const auto& lp = transitions.back().log_probs;
      for (std::size_t v = 0; v < lp.size(); ++v) {
        Candidate c{h, v, active[h].log_prob + lp[v], active[h].tokens};
        c.tokens.push_back(v);
        candidates.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        return a.tokens < b.tokens;
                      });
    std::vector<Hyp> next;
    for (std::size_t i = 0; i < keep; ++i) {
      auto& c = candidates[i];
      Hyp hyp;
      hyp.tokens = std::move(c.tokens);
      hyp.log_prob = c.log_prob;
      if (c.token == end_token) {
        hyp.finished = true;
        hyp.state = active[c.parent].state;
        finished.push_back(std::move(hyp));
      } else {
        hyp.state = model.with_token(typename M::State(transitions[c.parent].next), c.token);
        next.push_back(std::move(hyp));
      }
    }
    active = std::move(next);
  }

  std::vector<Hyp> pool = std::move(finished);
  for (auto& h : active) pool.push_back(std::move(h));
  if (pool.empty()) return Hyp{};
  return *std::min_element(pool.begin(), pool.end(), [](const Hyp& a, const Hyp& b) {
    const double sa = a.normalized(), sb = b.normalized();
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  });
}

// Cumulative log-probability of a token sequence under the model.
template <SequenceModel M>
double sequence_log_prob(const M& model, const std::vector<std::size_t>& tokens) {
  typename M::State state = model.start();
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto tr = model.step(state);
    total += tr.log_probs[tokens[i]];
    if (i + 1 < tokens.size()) state = model.with_token(std::move(tr.next), tokens[i]);
  }
  return total;
}

}  // namespace cha
