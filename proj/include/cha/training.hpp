#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cha/decoder.hpp"
#include "cha/features.hpp"
#include "cha/tensor.hpp"
#include "cha/vocabulary.hpp"

namespace cha {

struct TrainConfig {
  std::size_t feature_dim = 64;  // d
  std::size_t hidden = 64;       // H
  std::size_t attention = 64;    // A
  std::size_t output = 64;       // P
  std::size_t objects = 5;       // n
  double patch_scale = 2.0;      // k
  double lr = 1e-4;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  LstmInput lstm_input = LstmInput::context_plus_embedding;
  std::size_t beam = 2;
  std::size_t max_len = 16;
  double clip_norm = 5.0;
  // Reference captions per image used as training pairs (1..5).
  std::size_t captions_per_image = 5;
  // Multiplies the uniform initialization range of every weight array.
  double init_scale = 1.0;

  DecoderDims decoder_dims(std::size_t vocab_size) const;
  void validate() const;
};

// Decoder plus the per-level descriptor projections.
struct CaptionModel {
  DecoderParams decoder;
  Projections projections;

  static CaptionModel init(const TrainConfig& config, std::size_t vocab_size);
  std::vector<NamedTensor> named() const;
  CaptionModel clone() const;
};

// ADAM moments for a fixed list of arrays.
struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;

  static AdamState for_params(std::span<const NamedTensor> params);
};

// One bias-corrected ADAM update from the gradients held by `params`.
void adam_step(std::span<NamedTensor> params, AdamState& state, double lr);

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<NamedTensor> params, double max_norm);

// Mean cross-entropy over the predicted tokens of a <start> ... <end>
// caption under teacher forcing; <pad> targets are skipped.
Tensor teacher_forced_loss(const Tensor& features, const DecoderParams& params,
                           std::span<const std::size_t> caption);

// One image ready for training or decoding.
struct PreparedSample {
  std::string image_id;
  SampleDescriptors descriptors;
  Tensor precomputed;  // (2n+1)×d stack supplied externally; overrides descriptors
  std::vector<std::vector<std::size_t>> captions;     // framed, encoded
  std::vector<std::vector<std::string>> references;   // tokenized
};

// The feature stack of a sample: the precomputed stack if present,
// otherwise the projected descriptors (recorded on the active tape).
Tensor sample_features(const PreparedSample& sample, const CaptionModel& model);

// Decodes every sample (beam 1 is greedy) on worker threads; results are in
// sample order.
std::vector<std::vector<std::size_t>> decode_all(std::span<const PreparedSample> samples, const CaptionModel& model,
                                                 std::size_t beam, std::size_t max_len);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_bleu4;
};

struct TrainState {
  TrainConfig config;
  Vocabulary vocab;
  CaptionModel model;
  AdamState adam;
  std::string rng_state;
  std::uint64_t epoch = 0;
};

struct TrainResult {
  TrainState best;   // best validation BLEU-4, or the last epoch without a validation split
  TrainState last;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(const TrainConfig& config, const Vocabulary& vocab, std::span<const PreparedSample> train_split,
                  std::span<const PreparedSample> val_split, const EpochCallback& on_epoch = {});

std::string training_log_csv(std::span<const EpochLog> log);

}  // namespace cha
