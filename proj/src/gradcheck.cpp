#include "cha/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "cha/decoder.hpp"
#include "cha/features.hpp"
#include "cha/training.hpp"

namespace cha {

double gradient_error(const std::function<Tensor()>& loss, std::span<Tensor> inputs, double eps) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    Tensor l;
    {
      TapeScope scope(tape);
      l = loss();
    }
    tape.backward(l);
  }
  double worst = 0.0;
  for (auto& t : inputs) {
    auto data = t.data();
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = loss().item();
      data[i] = saved - eps;
      const double down = loss().item();
      data[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      diff = std::max(diff, std::abs(analytic[i] - numeric));
      scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric)});
    }
    if (scale > 0) worst = std::max(worst, diff / scale);
  }
  return worst;
}

Tensor faulty_square(const Tensor& x) {
  std::vector<double> v(x.data().begin(), x.data().end());
  for (auto& e : v) e *= e;
  Tensor out = Tensor::from(x.shape(), std::move(v));
  if (Tape* tape = active_tape(); tape && x.requires_grad()) {
    out.set_requires_grad(true);
    tape->record({x}, out, [x = Tensor(x), out]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      auto xd = x.data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 3.0 * xd[i] * g[i];
    });
  }
  return out;
}

namespace {

struct Rng {
  std::mt19937_64 engine;
  Tensor uniform(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& x : t.data()) x = d(engine);
    return t;
  }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine); }
  std::size_t extent(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(engine); }
};

// Weighted sum so that every output element gets a distinct upstream gradient.
Tensor project(const Tensor& out, const Tensor& weights) { return sum(mul(out, weights)); }

using CaseBuilder = std::function<double(Rng&)>;

struct Case {
  std::string name;
  CaseBuilder run;
};

std::vector<Case> operator_cases(double eps) {
  std::vector<Case> cases;
  cases.push_back({"matmul", [eps](Rng& r) {
                     const std::size_t m = r.extent(1, 4), k = r.extent(1, 4), p = r.extent(1, 4);
                     std::vector<Tensor> in = {r.uniform({m, k}), r.uniform({k, p})};
                     Tensor w = r.uniform({m, p});
                     return gradient_error([&] { return project(matmul(in[0], in[1]), w); }, in, eps);
                   }});
  cases.push_back({"matvec", [eps](Rng& r) {
                     const std::size_t m = r.extent(1, 5), k = r.extent(1, 5);
                     std::vector<Tensor> in = {r.uniform({k}), r.uniform({k, m})};
                     Tensor w = r.uniform({m});
                     return gradient_error([&] { return project(matmul(in[0], in[1]), w); }, in, eps);
                   }});
  cases.push_back({"add", [eps](Rng& r) {
                     const std::size_t m = r.extent(1, 4), n = r.extent(1, 4);
                     std::vector<Tensor> in = {r.uniform({m, n}), r.uniform({n})};
                     Tensor w = r.uniform({m, n});
                     return gradient_error([&] { return project(add(in[0], in[1]), w); }, in, eps);
                   }});
  cases.push_back({"mul", [eps](Rng& r) {
                     const std::size_t n = r.extent(1, 16);
                     std::vector<Tensor> in = {r.uniform({n}), r.uniform({n})};
                     Tensor w = r.uniform({n});
                     return gradient_error([&] { return project(mul(in[0], in[1]), w); }, in, eps);
                   }});
  cases.push_back({"scale", [eps](Rng& r) {
                     const std::size_t n = r.extent(1, 16);
                     std::vector<Tensor> in = {r.uniform({n})};
                     Tensor w = r.uniform({n});
                     const double f = r.uniform({1}, -3, 3).item();
                     return gradient_error([&] { return project(scale(in[0], f), w); }, in, eps);
                   }});
  cases.push_back({"tanh", [eps](Rng& r) {
                     const std::size_t n = r.extent(1, 16);
                     std::vector<Tensor> in = {r.uniform({n}, -3, 3)};
                     Tensor w = r.uniform({n});
                     return gradient_error([&] { return project(tanh_activation(in[0]), w); }, in, eps);
                   }});
  cases.push_back({"sigmoid", [eps](Rng& r) {
                     const std::size_t n = r.extent(1, 16);
                     std::vector<Tensor> in = {r.uniform({n}, -4, 4)};
                     Tensor w = r.uniform({n});
                     return gradient_error([&] { return project(sigmoid(in[0]), w); }, in, eps);
                   }});
  cases.push_back({"softmax", [eps](Rng& r) {
                     const std::size_t n = r.extent(2, 16);
                     std::vector<Tensor> in = {r.uniform({n}, -3, 3)};
                     Tensor w = r.uniform({n});
                     return gradient_error([&] { return project(softmax(in[0]), w); }, in, eps);
                   }});
  cases.push_back({"concat_rows", [eps](Rng& r) {
                     const std::size_t a = r.extent(1, 3), b = r.extent(1, 3), c = r.extent(1, 4);
                     std::vector<Tensor> in = {r.uniform({a, c}), r.uniform({b, c})};
                     Tensor w = r.uniform({a + b, c});
                     return gradient_error([&] { return project(concat_rows({in[0], in[1]}), w); }, in, eps);
                   }});
  cases.push_back({"concat_cols", [eps](Rng& r) {
                     const std::size_t m = r.extent(1, 3), a = r.extent(1, 4), b = r.extent(1, 4);
                     std::vector<Tensor> in = {r.uniform({m, a}), r.uniform({m, b})};
                     Tensor w = r.uniform({m, a + b});
                     return gradient_error([&] { return project(concat_cols({in[0], in[1]}), w); }, in, eps);
                   }});
  cases.push_back({"repeat_rows", [eps](Rng& r) {
                     const std::size_t n = r.extent(1, 6), count = r.extent(1, 4);
                     std::vector<Tensor> in = {r.uniform({n})};
                     Tensor w = r.uniform({count, n});
                     return gradient_error([&] { return project(repeat_rows(in[0], count), w); }, in, eps);
                   }});
  cases.push_back({"slice", [eps](Rng& r) {
                     const std::size_t n = r.extent(2, 16);
                     const std::size_t off = r.index(n), len = r.extent(1, n - off);
                     std::vector<Tensor> in = {r.uniform({n})};
                     Tensor w = r.uniform({len});
                     return gradient_error([&] { return project(slice(in[0], off, len), w); }, in, eps);
                   }});
  cases.push_back({"row", [eps](Rng& r) {
                     const std::size_t m = r.extent(1, 6), n = r.extent(1, 5), i = r.index(m);
                     std::vector<Tensor> in = {r.uniform({m, n})};
                     Tensor w = r.uniform({n});
                     return gradient_error([&] { return project(row(in[0], i), w); }, in, eps);
                   }});
  cases.push_back({"sum", [eps](Rng& r) {
                     const std::size_t n = r.extent(1, 16);
                     std::vector<Tensor> in = {r.uniform({n})};
                     return gradient_error([&] { return mul(sum(in[0]), sum(in[0])); }, in, eps);
                   }});
  cases.push_back({"cross_entropy", [eps](Rng& r) {
                     const std::size_t n = r.extent(2, 12), target = r.index(n);
                     std::vector<Tensor> in = {r.uniform({n}, -3, 3)};
                     return gradient_error([&] { return cross_entropy(in[0], target); }, in, eps);
                   }});
  cases.push_back({"diamond", [eps](Rng& r) {
                     // x feeds two branches that meet again; gradients must accumulate.
                     const std::size_t n = r.extent(1, 8);
                     std::vector<Tensor> in = {r.uniform({n})};
                     Tensor w = r.uniform({n});
                     return gradient_error(
                         [&] {
                           Tensor t = tanh_activation(in[0]);
                           return project(add(mul(t, in[0]), sigmoid(t)), w);
                         },
                         in, eps);
                   }});
  return cases;
}

DecoderParams small_params(Rng& r, LstmInput mode) {
  DecoderDims dims;
  dims.feature = dims.hidden = dims.attention = dims.output = 4;
  dims.vocab = 6;
  dims.lstm_input = mode;
  return DecoderParams::init(dims, r.engine());
}

std::vector<Tensor> all_tensors(const DecoderParams& p) {
  std::vector<Tensor> out;
  for (auto& nt : p.named()) out.push_back(nt.tensor);
  return out;
}

std::vector<Case> decoder_cases(double eps) {
  std::vector<Case> cases;
  cases.push_back({"attention_scores", [eps](Rng& r) {
                     DecoderParams p = small_params(r, LstmInput::context_plus_embedding);
                     std::vector<Tensor> in = {r.uniform({5, 4}), r.uniform({4}), r.uniform({4}), p.attn_proj,
                                               p.attn_score};
                     Tensor w = r.uniform({5});
                     return gradient_error([&] { return project(attention_scores(in[0], in[1], in[2], p), w); }, in,
                                           eps);
                   }});
  cases.push_back({"context_vector", [eps](Rng& r) {
                     std::vector<Tensor> in = {r.uniform({5, 4}), r.uniform({5})};
                     Tensor w = r.uniform({4});
                     return gradient_error(
                         [&] { return project(context_vector(in[0], attention_weights(in[1])), w); }, in, eps);
                   }});
  cases.push_back({"lstm_step", [eps](Rng& r) {
                     DecoderParams p = small_params(r, LstmInput::context_plus_embedding);
                     std::vector<Tensor> in = {r.uniform({8}), r.uniform({4}), r.uniform({4}), p.lstm_weight,
                                               p.lstm_bias};
                     Tensor wh = r.uniform({4}), wc = r.uniform({4});
                     return gradient_error(
                         [&] {
                           auto [h, c] = lstm_step(in[0], in[1], in[2], p);
                           return add(project(h, wh), project(c, wc));
                         },
                         in, eps);
                   }});
  cases.push_back({"word_distribution", [eps](Rng& r) {
                     DecoderParams p = small_params(r, LstmInput::context_plus_embedding);
                     std::vector<Tensor> in = {r.uniform({4}), r.uniform({4}), p.out_proj, p.out_vocab, p.out_bias};
                     const std::size_t target = r.index(6);
                     return gradient_error([&] { return cross_entropy(word_logits(in[0], in[1], p), target); }, in,
                                           eps);
                   }});
  cases.push_back({"decoder_step", [eps](Rng& r) {
                     DecoderParams p = small_params(r, LstmInput::context_plus_embedding);
                     std::vector<Tensor> in = all_tensors(p);
                     Tensor features = r.uniform({5, 4});
                     in.push_back(features);
                     const std::size_t target = r.index(6);
                     Tensor wh = r.uniform({4});
                     return gradient_error(
                         [&] {
                           StepResult s = step(init_state(features, p.dims), features, p);
                           return add(cross_entropy(s.logits, target), project(s.state.h, wh));
                         },
                         in, eps);
                   }});
  // The unrolled loss through feature projections, in both LSTM input modes.
  for (auto mode : {LstmInput::context_plus_embedding, LstmInput::context_only}) {
    cases.push_back({"teacher_forced_loss/" + to_string(mode), [eps, mode](Rng& r) {
                       TrainConfig cfg;
                       cfg.feature_dim = cfg.hidden = cfg.attention = cfg.output = 4;
                       cfg.objects = 2;
                       cfg.lstm_input = mode;
                       cfg.seed = r.engine();
                       CaptionModel model = CaptionModel::init(cfg, 6);
                       SampleDescriptors raw;
                       raw.n = 2;
                       raw.objects = r.uniform({2, kRawDescriptorSize}, 0, 1);
                       raw.patches = r.uniform({2, kRawDescriptorSize}, 0, 1);
                       raw.global = r.uniform({1, kRawDescriptorSize}, 0, 1);
                       std::vector<std::size_t> caption = {0, 4 + r.index(2), 4 + r.index(2), 1};
                       std::vector<Tensor> in;
                       for (auto& nt : model.named()) in.push_back(nt.tensor);
                       return gradient_error(
                           [&] {
                             return teacher_forced_loss(project_stack(raw, model.projections), model.decoder, caption);
                           },
                           in, eps);
                     }});
  }
  return cases;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options) {
  std::vector<Case> cases = operator_cases(options.eps);
  if (options.include_decoder) {
    auto dec = decoder_cases(options.eps);
    cases.insert(cases.end(), dec.begin(), dec.end());
  }
  if (options.inject_fault) {
    const double eps = options.eps;
    cases.push_back({"faulty_square", [eps](Rng& r) {
                       std::vector<Tensor> in = {r.uniform({4})};
                       return gradient_error([&] { return sum(faulty_square(in[0])); }, in, eps);
                     }});
  }
  std::vector<GradCheckResult> results;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    GradCheckResult res;
    res.name = cases[c].name;
    for (std::size_t t = 0; t < options.trials; ++t) {
      Rng rng{std::mt19937_64(options.seed * 1000003ULL + c * 7919ULL + t)};
      res.max_error = std::max(res.max_error, cases[c].run(rng));
      ++res.trials;
    }
    res.passed = res.max_error < options.tolerance;
    results.push_back(res);
  }
  return results;
}

std::string format_gradcheck(const std::vector<GradCheckResult>& results) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-40s %8s %14s  %s\n", "check", "trials", "max_rel_error", "status");
  out += line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-40s %8zu %14.3e  %s\n", r.name.c_str(), r.trials, r.max_error,
                  r.passed ? "PASS" : "FAIL");
    out += line;
  }
  return out;
}

}  // namespace cha
