#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cha/beam_search.hpp"
#include "cha/tensor.hpp"
#include "cha/vocabulary.hpp"

namespace cha {

// What the LSTM consumes each step: the attended context alone, or the
// context followed by the previous word embedding.
enum class LstmInput { context_only, context_plus_embedding };

std::string to_string(LstmInput mode);
LstmInput parse_lstm_input(const std::string& text);

struct DecoderDims {
  std::size_t feature = 64;    // d: feature and embedding width
  std::size_t hidden = 64;     // H: LSTM width
  std::size_t attention = 64;  // A: attention hidden width
  std::size_t output = 64;     // P: output hidden width
  std::size_t vocab = 4;       // |V|
  LstmInput lstm_input = LstmInput::context_plus_embedding;

  std::size_t lstm_input_width() const {
    return lstm_input == LstmInput::context_only ? feature : 2 * feature;
  }
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Trainable arrays of the attention decoder. Weight matrices are stored
// input-major (rows = input width) so a row vector multiplies from the left.
struct DecoderParams {
  DecoderDims dims;
  Tensor attn_proj;    // (d+H+d)×A, maps [F_i ; h ; e] into the attention layer
  Tensor attn_score;   // A, scoring vector
  Tensor lstm_weight;  // (in+H)×4H, gate blocks ordered input, forget, candidate, output
  Tensor lstm_bias;    // 4H
  Tensor embedding;    // |V|×d
  Tensor out_proj;     // (d+H)×P, maps [C_t ; h]
  Tensor out_vocab;    // P×|V|
  Tensor out_bias;     // P

  // Uniform(-s, s) weights with s = scale/sqrt(fan-in), zero biases. The
  // embedding is a lookup on a one-hot input, so its fan-in is 1.
  static DecoderParams init(const DecoderDims& dims, std::uint64_t seed, double scale = 1.0);
  // Aliasing handles in a fixed order.
  std::vector<NamedTensor> named() const;
  DecoderParams clone() const;
};

struct DecoderState {
  Tensor h;        // H
  Tensor c;        // H
  Tensor alpha;    // 2n+1 attention weights from the latest step
  Tensor context;  // d, attended feature from the latest step
  std::size_t prev_token = Vocabulary::kStart;
};

// Uniform attention over every slot, the matching mean context, zero LSTM
// state and <start> as the previous token.
DecoderState init_state(const Tensor& features, const DecoderDims& dims);

// score_i = attn_score · tanh(attn_proj^T [F_i ; h_prev ; e_prev]).
Tensor attention_scores(const Tensor& features, const Tensor& h_prev, const Tensor& e_prev,
                        const DecoderParams& params);
Tensor attention_weights(const Tensor& scores);
// Sum_i alpha_i F_i.
Tensor context_vector(const Tensor& features, const Tensor& alpha);

Tensor lstm_input(const Tensor& context, const Tensor& embedding, LstmInput mode);
std::pair<Tensor, Tensor> lstm_step(const Tensor& input, const Tensor& h, const Tensor& c,
                                    const DecoderParams& params);

// Pre-softmax scores: out_vocab^T tanh(out_proj^T [C_t ; h_prev] + out_bias).
Tensor word_logits(const Tensor& context, const Tensor& h_prev, const DecoderParams& params);
Tensor word_distribution(const Tensor& context, const Tensor& h_prev, const DecoderParams& params);

struct StepResult {
  Tensor logits;
  DecoderState state;  // prev_token is left for the caller to set
};

// One decode step: embed prev_token, attend with h_{t-1}, predict the word
// from (C_t, h_{t-1}), then advance the LSTM on C_t.
StepResult step(const DecoderState& state, const Tensor& features, const DecoderParams& params);

std::vector<double> log_softmax(std::span<const double> logits);

// Adapter exposing a frozen decoder to the generic searches.
class DecoderModel {
 public:
  using State = DecoderState;
  struct Transition {
    std::vector<double> log_probs;
    DecoderState next;
  };

  DecoderModel(const Tensor& features, const DecoderParams& params) : features_(features), params_(params) {}

  DecoderState start() const { return init_state(features_, params_.dims); }
  Transition step(const DecoderState& s) const;
  DecoderState with_token(DecoderState s, std::size_t token) const {
    s.prev_token = token;
    return s;
  }

 private:
  Tensor features_;
  const DecoderParams& params_;
};

// Token sequences returned here include the <end> token when it was emitted.
std::vector<std::size_t> greedy_decode(const Tensor& features, const DecoderParams& params, std::size_t max_len);
std::vector<std::size_t> beam_decode(const Tensor& features, const DecoderParams& params, std::size_t beam,
                                     std::size_t max_len);

struct AttentionRecord {
  std::size_t t = 0;
  std::size_t token = 0;
  std::vector<double> alpha;
};

// Replays a decoded sequence and collects the attention used for each token.
std::vector<AttentionRecord> attention_trace(const Tensor& features, const DecoderParams& params,
                                             const std::vector<std::size_t>& tokens);

// JSON array of {t, token, alpha, slot_labels} records.
std::string attention_dump_json(const std::vector<AttentionRecord>& records, const Vocabulary& vocab,
                                std::size_t n);

}  // namespace cha
