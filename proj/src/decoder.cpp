#include "cha/decoder.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "cha/features.hpp"

namespace cha {

std::string to_string(LstmInput mode) {
  return mode == LstmInput::context_only ? "context_only" : "context_plus_embedding";
}

LstmInput parse_lstm_input(const std::string& text) {
  if (text == "context_only") return LstmInput::context_only;
  if (text == "context_plus_embedding") return LstmInput::context_plus_embedding;
  throw ConfigError("unknown lstm_input mode '" + text + "'");
}

namespace {

Tensor uniform_tensor(Shape shape, std::size_t fan_in, double scale, std::mt19937_64& rng) {
  const double s = scale / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-s, s);
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& x : t.data()) x = dist(rng);
  return t;
}

void expect_vector(const Tensor& t, std::size_t n, const char* what) {
  if (t.rank() != 1 || t.numel() != n)
    throw ShapeError(std::string(what) + ": expected a vector of length " + std::to_string(n) + ", got " +
                     to_string(t.shape()));
}

}  // namespace

DecoderParams DecoderParams::init(const DecoderDims& dims, std::uint64_t seed, double scale) {
  const std::size_t d = dims.feature, H = dims.hidden, A = dims.attention, P = dims.output, V = dims.vocab;
  if (!d || !H || !A || !P || !V) throw ConfigError("decoder widths must all be at least 1");
  if (!(scale > 0)) throw ConfigError("init scale must be positive");
  std::mt19937_64 rng(seed);
  DecoderParams p;
  p.dims = dims;
  const std::size_t attn_in = 2 * d + H;
  const std::size_t lstm_in = dims.lstm_input_width() + H;
  p.attn_proj = uniform_tensor({attn_in, A}, attn_in, scale, rng);
  p.attn_score = uniform_tensor({A}, A, scale, rng);
  p.lstm_weight = uniform_tensor({lstm_in, 4 * H}, lstm_in, scale, rng);
  p.lstm_bias = Tensor::zeros({4 * H}, true);
  p.embedding = uniform_tensor({V, d}, 1, scale, rng);
  p.out_proj = uniform_tensor({d + H, P}, d + H, scale, rng);
  p.out_vocab = uniform_tensor({P, V}, P, scale, rng);
  p.out_bias = Tensor::zeros({P}, true);
  return p;
}

std::vector<NamedTensor> DecoderParams::named() const {
  return {{"attn_proj", attn_proj},     {"attn_score", attn_score}, {"lstm_weight", lstm_weight},
          {"lstm_bias", lstm_bias},     {"embedding", embedding},   {"out_proj", out_proj},
          {"out_vocab", out_vocab},     {"out_bias", out_bias}};
}

DecoderParams DecoderParams::clone() const {
  DecoderParams p;
  p.dims = dims;
  p.attn_proj = attn_proj.clone();
  p.attn_score = attn_score.clone();
  p.lstm_weight = lstm_weight.clone();
  p.lstm_bias = lstm_bias.clone();
  p.embedding = embedding.clone();
  p.out_proj = out_proj.clone();
  p.out_vocab = out_vocab.clone();
  p.out_bias = out_bias.clone();
  return p;
}

DecoderState init_state(const Tensor& features, const DecoderDims& dims) {
  if (!features.defined() || features.rank() != 2)
    throw ShapeError("init_state: feature stack must be a non-empty matrix");
  const std::size_t slots = features.rows();
  DecoderState s;
  s.alpha = Tensor::full({slots}, 1.0 / static_cast<double>(slots));
  s.context = context_vector(features, s.alpha);
  s.h = Tensor::zeros({dims.hidden});
  s.c = Tensor::zeros({dims.hidden});
  s.prev_token = Vocabulary::kStart;
  return s;
}

Tensor attention_scores(const Tensor& features, const Tensor& h_prev, const Tensor& e_prev,
                        const DecoderParams& params) {
  const auto& dims = params.dims;
  if (features.rank() != 2 || features.cols() != dims.feature)
    throw ShapeError("attention_scores: feature stack " + to_string(features.shape()) + " does not have width " +
                     std::to_string(dims.feature));
  expect_vector(h_prev, dims.hidden, "attention_scores: hidden state");
  expect_vector(e_prev, dims.feature, "attention_scores: word embedding");
  const std::size_t slots = features.rows();
  // h and e are broadcast so every slot is scored against the same decoder context.
  Tensor joined = concat_cols({features, repeat_rows(h_prev, slots), repeat_rows(e_prev, slots)});
  return matmul(tanh_activation(matmul(joined, params.attn_proj)), params.attn_score);
}

Tensor attention_weights(const Tensor& scores) { return softmax(scores); }

Tensor context_vector(const Tensor& features, const Tensor& alpha) {
  if (alpha.rank() != 1 || features.rank() != 2 || alpha.numel() != features.rows())
    throw ShapeError("context_vector: weights " + to_string(alpha.shape()) + " do not match feature stack " +
                     to_string(features.shape()));
  return matmul(alpha, features);
}

Tensor lstm_input(const Tensor& context, const Tensor& embedding, LstmInput mode) {
  if (mode == LstmInput::context_only) return context;
  return concat_rows({context, embedding});
}

std::pair<Tensor, Tensor> lstm_step(const Tensor& input, const Tensor& h, const Tensor& c,
                                    const DecoderParams& params) {
  const std::size_t H = params.dims.hidden;
  expect_vector(input, params.dims.lstm_input_width(), "lstm_step: input");
  expect_vector(h, H, "lstm_step: hidden state");
  expect_vector(c, H, "lstm_step: cell state");
  Tensor z = add(matmul(concat_rows({input, h}), params.lstm_weight), params.lstm_bias);
  Tensor in_gate = sigmoid(slice(z, 0, H));
  Tensor forget_gate = sigmoid(slice(z, H, H));
  Tensor candidate = tanh_activation(slice(z, 2 * H, H));
  Tensor out_gate = sigmoid(slice(z, 3 * H, H));
  Tensor c_next = add(mul(forget_gate, c), mul(in_gate, candidate));
  Tensor h_next = mul(out_gate, tanh_activation(c_next));
  return {h_next, c_next};
}

Tensor word_logits(const Tensor& context, const Tensor& h_prev, const DecoderParams& params) {
  expect_vector(context, params.dims.feature, "word_logits: context");
  expect_vector(h_prev, params.dims.hidden, "word_logits: hidden state");
  Tensor hidden = tanh_activation(add(matmul(concat_rows({context, h_prev}), params.out_proj), params.out_bias));
  return matmul(hidden, params.out_vocab);
}

Tensor word_distribution(const Tensor& context, const Tensor& h_prev, const DecoderParams& params) {
  return softmax(word_logits(context, h_prev, params));
}

StepResult step(const DecoderState& state, const Tensor& features, const DecoderParams& params) {
  Tensor e_prev = row(params.embedding, state.prev_token);
  Tensor alpha = attention_weights(attention_scores(features, state.h, e_prev, params));
  Tensor ctx = context_vector(features, alpha);
  Tensor logits = word_logits(ctx, state.h, params);
  auto [h, c] = lstm_step(lstm_input(ctx, e_prev, params.dims.lstm_input), state.h, state.c, params);
  StepResult r;
  r.logits = logits;
  r.state = {h, c, alpha, ctx, state.prev_token};
  return r;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : logits) mx = std::max(mx, x);
  double total = 0.0;
  for (double x : logits) total += std::exp(x - mx);
  const double log_z = mx + std::log(total);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] - log_z;
  return out;
}

DecoderModel::Transition DecoderModel::step(const DecoderState& s) const {
  StepResult r = cha::step(s, features_, params_);
  return {log_softmax(r.logits.data()), std::move(r.state)};
}

std::vector<std::size_t> greedy_decode(const Tensor& features, const DecoderParams& params, std::size_t max_len) {
  if (max_len == 0) throw ContractError("greedy_decode: max_len must be at least 1");
  return greedy_search(DecoderModel(features, params), max_len, Vocabulary::kEnd);
}

std::vector<std::size_t> beam_decode(const Tensor& features, const DecoderParams& params, std::size_t beam,
                                     std::size_t max_len) {
  if (beam == 0) throw ContractError("beam_decode: beam width must be at least 1");
  if (max_len == 0) throw ContractError("beam_decode: max_len must be at least 1");
  return beam_search(DecoderModel(features, params), beam, max_len, Vocabulary::kEnd).tokens;
}

std::vector<AttentionRecord> attention_trace(const Tensor& features, const DecoderParams& params,
                                             const std::vector<std::size_t>& tokens) {
  std::vector<AttentionRecord> out;
  DecoderState state = init_state(features, params.dims);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    StepResult r = step(state, features, params);
    out.push_back({t + 1, tokens[t], std::vector<double>(r.state.alpha.data().begin(), r.state.alpha.data().end())});
    state = std::move(r.state);
    state.prev_token = tokens[t];
  }
  return out;
}

std::string attention_dump_json(const std::vector<AttentionRecord>& records, const Vocabulary& vocab,
                                std::size_t n) {
  nlohmann::json arr = nlohmann::json::array();
  const auto labels = slot_labels(n);
  for (const auto& r : records) {
    arr.push_back({{"t", r.t}, {"token", vocab.word(r.token)}, {"alpha", r.alpha}, {"slot_labels", labels}});
  }
  return arr.dump(2);
}

}  // namespace cha
