#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cha/checkpoint.hpp"
#include "cha/config.hpp"
#include "cha/dataset.hpp"
#include "cha/decoder.hpp"
#include "cha/errors.hpp"
#include "cha/gradcheck.hpp"
#include "cha/kernels.hpp"
#include "cha/metrics.hpp"
#include "cha/training.hpp"

namespace fs = std::filesystem;
using namespace cha;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerification = 1;
constexpr int kExitUsage = 2;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::string flag_name(const std::string& key) {
  std::string name = key;
  std::replace(name.begin(), name.end(), '_', '-');
  return "--" + name;
}

struct GenDataArgs {
  std::string out;
  std::uint64_t seed = 1;
  std::size_t count = 200;
  bool force = false;
};

int cmd_gen_data(const GenDataArgs& args) {
  const fs::path dir = args.out;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!args.force) {
      std::cerr << "error: " << dir.string() << " is not empty; pass --force to overwrite\n";
      return kExitUsage;
    }
    fs::remove_all(dir);
  }
  Dataset ds = generate_dataset(args.seed, args.count);
  write_dataset(ds, dir);
  std::cout << "wrote " << args.count << " images to " << dir.string() << " (train "
            << ds.manifest.split_counts.at("train") << ", val " << ds.manifest.split_counts.at("val") << ", test "
            << ds.manifest.split_counts.at("test") << ")\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config_file;
  std::string log;
  std::string features;
  std::map<std::string, std::string> overrides;
};

std::vector<std::string> all_captions(std::span<const CaptionSample> samples) {
  std::vector<std::string> caps;
  for (const auto& s : samples) caps.insert(caps.end(), s.captions.begin(), s.captions.end());
  return caps;
}

void attach_features(std::vector<PreparedSample>& prepared, const std::string& path, const TrainConfig& config) {
  if (path.empty()) return;
  const auto stacks = load_precomputed_features(path);
  for (auto& p : prepared) {
    auto it = stacks.find(p.image_id);
    if (it == stacks.end()) throw ConfigError("no precomputed features for " + p.image_id);
    if (it->second.dim() != config.feature_dim || it->second.n != config.objects)
      throw ShapeError("precomputed features for " + p.image_id + " do not match d=" +
                       std::to_string(config.feature_dim) + ", n=" + std::to_string(config.objects));
    p.precomputed = it->second.as_tensor();
  }
}

int cmd_train(const TrainArgs& args) {
  TrainConfig config;
  if (!args.config_file.empty()) config = config_from_text(read_text(args.config_file));
  for (const auto& [key, value] : args.overrides) apply_config_value(config, key, value);
  config.validate();

  std::cout << "# effective config\n" << config_to_text(config) << std::flush;

  const Dataset ds = load_dataset(args.data);
  const auto& train_samples = ds.split("train");
  const auto caps = all_captions(train_samples);
  const Vocabulary vocab = build_vocabulary(caps);
  std::cout << "# vocabulary " << vocab.size() << " words, " << train_samples.size() << " training images\n";

  auto train_prepared = prepare_samples(train_samples, vocab, config.objects, config.patch_scale);
  std::vector<PreparedSample> val_prepared;
  if (ds.splits.count("val")) val_prepared = prepare_samples(ds.split("val"), vocab, config.objects, config.patch_scale);
  attach_features(train_prepared, args.features, config);
  attach_features(val_prepared, args.features, config);

  std::cout << "epoch,train_loss,val_bleu4\n";
  TrainResult result = train(config, vocab, train_prepared, val_prepared, [](const EpochLog& log) {
    std::string line = training_log_csv(std::span<const EpochLog>(&log, 1));
    std::cout << line.substr(line.find('\n') + 1) << std::flush;
  });

  save_checkpoint(result.best, args.out);
  const std::string log_path = args.log.empty() ? args.out + ".csv" : args.log;
  write_text(log_path, training_log_csv(result.log));
  std::cout << "# saved checkpoint from epoch " << result.best.epoch << " to " << args.out << "\n";
  return kExitOk;
}

struct CaptionArgs {
  std::string ckpt;
  std::string image;
  std::string data;
  std::string features;
  std::string dump_attention;
  std::optional<std::size_t> beam;
};

std::optional<CaptionSample> find_sample(const Dataset& ds, const std::string& id) {
  for (const auto& [name, samples] : ds.splits)
    for (const auto& s : samples)
      if (s.image_id == id) return s;
  return std::nullopt;
}

int cmd_caption(const CaptionArgs& args) {
  const TrainState state = load_checkpoint(args.ckpt);
  const TrainConfig& config = state.config;
  const std::size_t beam = args.beam.value_or(config.beam);
  if (beam == 0) throw ConfigError("beam must be at least 1");

  PreparedSample prepared;
  prepared.image_id = args.image;
  if (!args.data.empty()) {
    const Dataset ds = load_dataset(args.data);
    auto sample = find_sample(ds, args.image);
    if (!sample) throw ConfigError("image " + args.image + " is not in " + args.data);
    prepared = prepare_sample(*sample, state.vocab, config.objects, config.patch_scale);
  } else if (args.features.empty()) {
    throw ConfigError("caption needs --data or --features to locate the image");
  }
  std::vector<PreparedSample> one{prepared};
  attach_features(one, args.features, config);

  const Tensor features = sample_features(one[0], state.model);
  const auto tokens = beam == 1 ? greedy_decode(features, state.model.decoder, config.max_len)
                                : beam_decode(features, state.model.decoder, beam, config.max_len);
  std::cout << state.vocab.to_sentence(tokens) << "\n";

  if (!args.dump_attention.empty()) {
    const auto trace = attention_trace(features, state.model.decoder, tokens);
    write_text(args.dump_attention, attention_dump_json(trace, state.vocab, config.objects) + "\n");
  }
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  std::string json;
  std::string features;
  std::optional<std::size_t> beam;
  bool copy_reference = false;
};

int cmd_eval(const EvalArgs& args) {
  const TrainState state = load_checkpoint(args.ckpt);
  const TrainConfig& config = state.config;
  const std::size_t beam = args.beam.value_or(config.beam);
  if (beam == 0) throw ConfigError("beam must be at least 1");

  const Dataset ds = load_dataset(args.data);
  const auto& samples = ds.split(args.split);
  auto prepared = prepare_samples(samples, state.vocab, config.objects, config.patch_scale);
  attach_features(prepared, args.features, config);

  std::vector<std::string> ids;
  std::vector<Tokens> candidates;
  std::vector<References> references;
  std::vector<std::vector<std::size_t>> decoded;
  if (!args.copy_reference) decoded = decode_all(prepared, state.model, beam, config.max_len);
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    ids.push_back(prepared[i].image_id);
    references.push_back(prepared[i].references);
    candidates.push_back(args.copy_reference ? prepared[i].references.front() : state.vocab.decode(decoded[i]));
  }
  const EvalReport report = evaluate(ids, candidates, references);
  std::cout << report_table(report);
  const std::string json = report_json(report);
  if (args.json.empty())
    std::cout << json << "\n";
  else
    write_text(args.json, json + "\n");
  return kExitOk;
}

struct GradcheckArgs {
  std::size_t trials = 100;
  std::uint64_t seed = 1;
  bool inject_fault = false;
};

int cmd_gradcheck(const GradcheckArgs& args) {
  GradCheckOptions options;
  options.trials = args.trials;
  options.seed = args.seed;
  options.inject_fault = args.inject_fault;
  const auto results = run_gradcheck(options);
  std::cout << format_gradcheck(results);
  std::size_t failed = 0;
  for (const auto& r : results)
    if (!r.passed) {
      std::cerr << "gradient check failed: " << r.name << "\n";
      ++failed;
    }
  std::cout << (failed ? "FAILED " + std::to_string(failed) + " check(s)\n" : "all checks passed\n");
  return failed ? kExitVerification : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  kernels::apply_thread_env();

  CLI::App app{"Instance-aware cross-hierarchy attention captioner"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic captioning dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--count", gen.count, "Number of images");
  gen_cmd->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

  TrainArgs tr;
  std::map<std::string, std::string> override_values;
  auto* train_cmd = app.add_subcommand("train", "Train a captioner and write a checkpoint");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  train_cmd->add_option("--config", tr.config_file, "key=value config file; flags override it");
  train_cmd->add_option("--log", tr.log, "CSV log path (default: <out>.csv)");
  train_cmd->add_option("--features", tr.features, "Precomputed feature stacks (JSONL)");
  for (const auto& key : config_keys())
    train_cmd->add_option(flag_name(key), override_values[key], key)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  CaptionArgs cap;
  auto* caption_cmd = app.add_subcommand("caption", "Caption one image");
  caption_cmd->add_option("--ckpt", cap.ckpt, "Checkpoint path")->required();
  caption_cmd->add_option("--image", cap.image, "Image id")->required();
  caption_cmd->add_option("--data", cap.data, "Dataset directory holding the image");
  caption_cmd->add_option("--features", cap.features, "Precomputed feature stacks (JSONL)");
  caption_cmd->add_option("--beam", cap.beam, "Beam width (1 = greedy)");
  caption_cmd->add_option("--dump-attention", cap.dump_attention, "Write per-step attention weights as JSON");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset split");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint path")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--split", ev.split, "train, val or test");
  eval_cmd->add_option("--beam", ev.beam, "Beam width (1 = greedy)");
  eval_cmd->add_option("--json", ev.json, "Write the JSON report here instead of stdout");
  eval_cmd->add_option("--features", ev.features, "Precomputed feature stacks (JSONL)");
  eval_cmd->add_flag("--copy-reference", ev.copy_reference, "Score the first reference as the candidate");

  GradcheckArgs gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare taped gradients with finite differences");
  grad_cmd->add_option("--trials", gc.trials, "Seeded cases per check");
  grad_cmd->add_option("--seed", gc.seed, "Base seed");
  grad_cmd->add_flag("--inject-faulty-op", gc.inject_fault, "Include an op with a wrong backward rule");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) {
      for (const auto& key : config_keys())
        if (train_cmd->count(flag_name(key))) tr.overrides[key] = override_values[key];
      return cmd_train(tr);
    }
    if (*caption_cmd) return cmd_caption(cap);
    if (*eval_cmd) return cmd_eval(ev);
    if (*grad_cmd) return cmd_gradcheck(gc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
