#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cha/checkpoint.hpp"
#include "cha/config.hpp"
#include "cha/dataset.hpp"
#include "cha/format.hpp"
#include "cha/gradcheck.hpp"
#include "cha/training.hpp"

using namespace cha;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.feature_dim = c.hidden = c.attention = c.output = 8;
  c.objects = 2;
  c.epochs = 3;
  c.seed = 5;
  c.lr = 1e-3;
  c.captions_per_image = 2;
  c.max_len = 8;
  return c;
}

struct Corpus {
  Vocabulary vocab;
  std::vector<PreparedSample> train, val;
};

Corpus tiny_corpus(const TrainConfig& c) {
  Dataset ds = generate_dataset(2, 10);
  std::vector<std::string> caps;
  for (auto& s : ds.split("train")) caps.insert(caps.end(), s.captions.begin(), s.captions.end());
  Corpus out;
  out.vocab = build_vocabulary(caps);
  out.train = prepare_samples(ds.split("train"), out.vocab, c.objects, c.patch_scale);
  out.val = prepare_samples(ds.split("val"), out.vocab, c.objects, c.patch_scale);
  return out;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor w = Tensor::vector({1.0, -2.0}, true);
  std::vector<NamedTensor> params = {{"w", w}};
  AdamState s = AdamState::for_params(params);
  adam_step(params, s, 0.1);
  EXPECT_EQ(w[0], 1.0);
  EXPECT_EQ(w[1], -2.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor w = Tensor::vector({1.0, -2.0, 0.5}, true);
  std::vector<NamedTensor> params = {{"w", w}};
  w.grad()[0] = 0.3;
  w.grad()[1] = -7.0;
  w.grad()[2] = 1e-3;
  AdamState s = AdamState::for_params(params);
  adam_step(params, s, 1e-4);
  EXPECT_NEAR(w[0], 1.0 - 1e-4, 1e-9);
  EXPECT_NEAR(w[1], -2.0 + 1e-4, 1e-9);
  EXPECT_NEAR(w[2], 0.5 - 1e-4, 1e-9);
  EXPECT_EQ(s.step, 1u);
}

TEST(ClipGradNorm, ScalesToMaximum) {
  Tensor a = Tensor::vector({3.0}, true), b = Tensor::vector({4.0}, true);
  a.grad()[0] = 3.0;
  b.grad()[0] = 4.0;
  std::vector<NamedTensor> params = {{"a", a}, {"b", b}};
  EXPECT_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad()[0], 0.8, 1e-15);
  EXPECT_NEAR(clip_grad_norm(params, 5.0), 1.0, 1e-15);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
}

TEST(TeacherForcedLoss, UniformModelGivesLogV) {
  DecoderDims d;
  d.feature = d.hidden = d.attention = d.output = 4;
  d.vocab = 7;
  DecoderParams p = DecoderParams::init(d, 1);
  for (auto& x : p.out_vocab.data()) x = 0.0;
  Tensor f = Tensor::full({3, 4}, 0.2);
  std::vector<std::size_t> cap = {0, 4, 5, 1};
  EXPECT_NEAR(teacher_forced_loss(f, p, cap).item(), std::log(7.0), 1e-12);
  std::vector<std::size_t> bad = {4, 1};
  EXPECT_THROW(teacher_forced_loss(f, p, bad), ContractError);
}

TEST(Train, ZeroLearningRateKeepsParametersAndLoss) {
  TrainConfig c = tiny_config();
  c.lr = 0.0;
  Corpus corpus = tiny_corpus(c);
  CaptionModel init = CaptionModel::init(c, corpus.vocab.size());
  TrainResult r = train(c, corpus.vocab, corpus.train, {});
  EXPECT_EQ(r.log.front().train_loss, r.log.back().train_loss);
  auto a = init.named(), b = r.last.model.named();
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(std::vector<double>(a[i].tensor.data().begin(), a[i].tensor.data().end()),
              std::vector<double>(b[i].tensor.data().begin(), b[i].tensor.data().end()))
        << a[i].name;
}

TEST(Train, SeededRunsAreIdenticalAndLossDecreases) {
  TrainConfig c = tiny_config();
  Corpus corpus = tiny_corpus(c);
  TrainResult a = train(c, corpus.vocab, corpus.train, corpus.val);
  TrainResult b = train(c, corpus.vocab, corpus.train, corpus.val);
  EXPECT_EQ(training_log_csv(a.log), training_log_csv(b.log));
  EXPECT_LT(a.log.back().train_loss, a.log.front().train_loss);
  ASSERT_TRUE(a.log.back().val_bleu4.has_value());
  EXPECT_EQ(training_log_csv(a.log).substr(0, 26), "epoch,train_loss,val_bleu4");
}

TEST(Checkpoint, RoundTripIsByteIdenticalAndDecodesTheSame) {
  TrainConfig c = tiny_config();
  Corpus corpus = tiny_corpus(c);
  TrainResult r = train(c, corpus.vocab, corpus.train, {});
  const std::string bytes = serialize_checkpoint(r.last);
  TrainState back = deserialize_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(back.vocab, r.last.vocab);
  EXPECT_EQ(back.epoch, r.last.epoch);
  EXPECT_EQ(decode_all(corpus.train, back.model, 2, 8), decode_all(corpus.train, r.last.model, 2, 8));
}

TEST(Checkpoint, RejectsCorruptionAndShapeMismatch) {
  TrainConfig c = tiny_config();
  Corpus corpus = tiny_corpus(c);
  TrainState state;
  state.config = c;
  state.vocab = corpus.vocab;
  state.model = CaptionModel::init(c, corpus.vocab.size());
  auto named = state.model.named();
  state.adam = AdamState::for_params(named);
  std::string bytes = serialize_checkpoint(state);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), FormatError);
  std::string bad_version = bytes;
  bad_version[4] = 99;
  EXPECT_THROW(deserialize_checkpoint(bad_version), CheckpointVersionError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 5)), CheckpointTruncatedError);

  fs::path path = fs::temp_directory_path() / "cha_test_shape.ckpt";
  save_checkpoint(state, path);
  TrainConfig narrower = c;
  narrower.feature_dim = 4;
  try {
    load_checkpoint(path, narrower);
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.attn_proj"), std::string::npos) << e.what();
  }
  fs::remove(path);
}

TEST(Config, ParsesOverridesAndRejectsUnknownKeys) {
  TrainConfig c = config_from_text("# comment\nlr = 0.01\nn=3\nlstm_input = context_only\n");
  EXPECT_EQ(c.lr, 0.01);
  EXPECT_EQ(c.objects, 3u);
  EXPECT_EQ(c.lstm_input, LstmInput::context_only);
  EXPECT_THROW(config_from_text("learning_rate = 1"), ConfigError);
  EXPECT_THROW(config_from_text("lr = fast"), ConfigError);
  EXPECT_EQ(config_from_text(config_to_text(c)).lr, c.lr);
}

TEST(Config, DefaultsEchoTheReferenceHyperparameters) {
  const std::string text = config_to_text(TrainConfig{});
  EXPECT_NE(text.find("k=2.0"), std::string::npos) << text;
  EXPECT_NE(text.find("n=5"), std::string::npos);
  EXPECT_NE(text.find("lr=1e-4"), std::string::npos);
  EXPECT_NE(text.find("beam=2"), std::string::npos);
}

TEST(Format, ShortestRoundTrip) {
  EXPECT_EQ(format_double(2.0), "2.0");
  EXPECT_EQ(format_double(1e-4), "1e-4");
  EXPECT_EQ(format_double(0.25), "0.25");
  EXPECT_EQ(parse_double(format_double(0.1 + 0.2)), 0.1 + 0.2);
}

TEST(GradCheck, PassesOnAllOpsAndFlagsFaultyRule) {
  GradCheckOptions opt;
  opt.trials = 5;
  opt.inject_fault = true;
  auto results = run_gradcheck(opt);
  for (auto& r : results) {
    if (r.name == "faulty_square")
      EXPECT_FALSE(r.passed);
    else
      EXPECT_TRUE(r.passed) << r.name << " " << r.max_error;
  }
  EXPECT_NE(format_gradcheck(results).find("faulty_square"), std::string::npos);
}
