#include "cha/training.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "cha/format.hpp"
#include "cha/kernels.hpp"
#include "cha/metrics.hpp"

namespace cha {

DecoderDims TrainConfig::decoder_dims(std::size_t vocab_size) const {
  DecoderDims dims;
  dims.feature = feature_dim;
  dims.hidden = hidden;
  dims.attention = attention;
  dims.output = output;
  dims.vocab = vocab_size;
  dims.lstm_input = lstm_input;
  return dims;
}

void TrainConfig::validate() const {
  if (!feature_dim || !hidden || !attention || !output) throw ConfigError("layer widths must all be at least 1");
  if (!(patch_scale > 0)) throw ConfigError("patch_scale must be positive");
  if (!(lr >= 0)) throw ConfigError("lr must be non-negative");
  if (beam == 0) throw ConfigError("beam must be at least 1");
  if (max_len == 0) throw ConfigError("max_len must be at least 1");
  if (!(clip_norm > 0)) throw ConfigError("clip_norm must be positive");
  if (captions_per_image < 1 || captions_per_image > 5) throw ConfigError("captions_per_image must be in 1..5");
  if (!(init_scale > 0)) throw ConfigError("init_scale must be positive");
}

CaptionModel CaptionModel::init(const TrainConfig& config, std::size_t vocab_size) {
  CaptionModel m;
  m.decoder = DecoderParams::init(config.decoder_dims(vocab_size), config.seed, config.init_scale);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const double s = config.init_scale / std::sqrt(static_cast<double>(kRawDescriptorSize));
  std::uniform_real_distribution<double> dist(-s, s);
  auto make = [&] {
    Tensor t = Tensor::zeros({kRawDescriptorSize, config.feature_dim}, true);
    for (auto& x : t.data()) x = dist(rng);
    return t;
  };
  m.projections.object = make();
  m.projections.patch = make();
  m.projections.global = make();
  return m;
}

std::vector<NamedTensor> CaptionModel::named() const {
  std::vector<NamedTensor> out;
  for (auto& nt : decoder.named()) out.push_back({"decoder." + nt.name, nt.tensor});
  out.push_back({"proj.object", projections.object});
  out.push_back({"proj.patch", projections.patch});
  out.push_back({"proj.global", projections.global});
  return out;
}

CaptionModel CaptionModel::clone() const {
  return {decoder.clone(), {projections.object.clone(), projections.patch.clone(), projections.global.clone()}};
}

AdamState AdamState::for_params(std::span<const NamedTensor> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adam_step(std::span<NamedTensor> params, AdamState& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adam_step: optimizer tracks " + std::to_string(state.m.size()) + " arrays but got " +
                     std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].tensor.numel() || state.v[i].size() != params[i].tensor.numel() ||
        params[i].tensor.grad().size() != params[i].tensor.numel())
      throw ShapeError("adam_step: moment or gradient shape mismatch for '" + params[i].name + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double c2 = 1.0 - std::pow(AdamState::kBeta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.data();
    auto g = params[i].tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = AdamState::kBeta1 * m[j] + (1.0 - AdamState::kBeta1) * g[j];
      v[j] = AdamState::kBeta2 * v[j] + (1.0 - AdamState::kBeta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      w[j] -= lr * m_hat / (std::sqrt(v_hat) + AdamState::kEpsilon);
    }
  }
}

double clip_grad_norm(std::span<NamedTensor> params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params)
    for (double g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& p : params)
      for (auto& g : p.tensor.grad()) g *= f;
  }
  return norm;
}

Tensor teacher_forced_loss(const Tensor& features, const DecoderParams& params,
                           std::span<const std::size_t> caption) {
  if (caption.size() < 2) throw ContractError("teacher_forced_loss: caption needs <start> and at least one target");
  if (caption.front() != Vocabulary::kStart) throw ContractError("teacher_forced_loss: caption must begin with <start>");
  DecoderState state = init_state(features, params.dims);
  std::vector<Tensor> losses;
  for (std::size_t t = 1; t < caption.size(); ++t) {
    state.prev_token = caption[t - 1];
    StepResult r = step(state, features, params);
    if (caption[t] != Vocabulary::kPad) losses.push_back(cross_entropy(r.logits, caption[t]));
    state = std::move(r.state);
  }
  if (losses.empty()) throw ContractError("teacher_forced_loss: caption has only padding targets");
  return scale(sum(concat_rows(losses)), 1.0 / static_cast<double>(losses.size()));
}

Tensor sample_features(const PreparedSample& sample, const CaptionModel& model) {
  if (sample.precomputed.defined()) return sample.precomputed;
  return project_stack(sample.descriptors, model.projections);
}

std::vector<std::vector<std::size_t>> decode_all(std::span<const PreparedSample> samples, const CaptionModel& model,
                                                 std::size_t beam, std::size_t max_len) {
  std::vector<std::vector<std::size_t>> out(samples.size());
  const auto count = static_cast<long long>(samples.size());
#pragma omp parallel for schedule(dynamic) num_threads(kernels::thread_cap())
  for (long long i = 0; i < count; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    Tensor features = sample_features(s, model);
    out[static_cast<std::size_t>(i)] = beam <= 1 ? greedy_decode(features, model.decoder, max_len)
                                                 : beam_decode(features, model.decoder, beam, max_len);
  }
  return out;
}

namespace {

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

double validation_bleu4(std::span<const PreparedSample> val, const CaptionModel& model, const Vocabulary& vocab,
                        std::size_t max_len) {
  const auto decoded = decode_all(val, model, 1, max_len);
  std::vector<std::vector<std::string>> candidates;
  std::vector<std::vector<std::vector<std::string>>> references;
  for (std::size_t i = 0; i < val.size(); ++i) {
    candidates.push_back(vocab.decode(decoded[i]));
    references.push_back(val[i].references);
  }
  return bleu(candidates, references)[3];
}

}  // namespace

TrainResult train(const TrainConfig& config, const Vocabulary& vocab, std::span<const PreparedSample> train_split,
                  std::span<const PreparedSample> val_split, const EpochCallback& on_epoch) {
  config.validate();
  if (train_split.empty()) throw ConfigError("training split is empty");

  TrainResult result;
  TrainState state;
  state.config = config;
  state.vocab = vocab;
  state.model = CaptionModel::init(config, vocab.size());
  auto params = state.model.named();
  state.adam = AdamState::for_params(params);
  std::mt19937_64 rng(config.seed);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < train_split.size(); ++i) {
    const std::size_t n = std::min(config.captions_per_image, train_split[i].captions.size());
    for (std::size_t c = 0; c < n; ++c) pairs.emplace_back(i, c);
  }
  if (pairs.empty()) throw ConfigError("training split has no captions");

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> pair_loss(pairs.size());

  std::optional<double> best_bleu;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    for (std::size_t k : order) {
      const auto [si, ci] = pairs[k];
      Tape tape;
      Tensor loss;
      {
        TapeScope scope(tape);
        Tensor features = sample_features(train_split[si], state.model);
        loss = teacher_forced_loss(features, state.model.decoder, train_split[si].captions[ci]);
      }
      pair_loss[k] = loss.item();
      for (auto& p : params) p.tensor.zero_grad();
      tape.backward(loss);
      clip_grad_norm(params, config.clip_norm);
      adam_step(params, state.adam, config.lr);
    }

    EpochLog entry;
    entry.epoch = epoch;
    // Mean over pairs in corpus order.
    entry.train_loss = std::accumulate(pair_loss.begin(), pair_loss.end(), 0.0) / static_cast<double>(pairs.size());
    if (!val_split.empty()) entry.val_bleu4 = validation_bleu4(val_split, state.model, vocab, config.max_len);
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    state.epoch = epoch;
    state.rng_state = rng_to_string(rng);
    const bool improved = !entry.val_bleu4 || !best_bleu || *entry.val_bleu4 > *best_bleu;
    if (improved) {
      if (entry.val_bleu4) best_bleu = entry.val_bleu4;
      result.best = state;
      result.best.model = state.model.clone();
    }
  }
  if (config.epochs == 0) {
    state.rng_state = rng_to_string(rng);
    result.best = state;
    result.best.model = state.model.clone();
  }
  result.last = std::move(state);
  return result;
}

std::string training_log_csv(std::span<const EpochLog> log) {
  std::string out = "epoch,train_loss,val_bleu4\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," +
           (e.val_bleu4 ? format_double(*e.val_bleu4) : std::string()) + "\n";
  }
  return out;
}

}  // namespace cha
