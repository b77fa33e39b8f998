#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cha/features.hpp"
#include "cha/metrics.hpp"
#include "cha/training.hpp"
#include "cha/vocabulary.hpp"

namespace cha {

enum class ObjectClass { building, pond, road, tree, vehicle, field, tank, bridge };

inline constexpr std::size_t kClassCount = 8;
inline constexpr int kTemplateVersion = 1;
inline constexpr std::size_t kCaptionsPerImage = 5;

const std::array<std::string, kClassCount>& class_names();
std::string to_string(ObjectClass cls);
ObjectClass parse_class(const std::string& name);

struct PlacedObject {
  ObjectClass cls = ObjectClass::building;
  BoundingBox box;
  std::array<double, 3> color{};
};

struct SceneSpec {
  std::size_t width = 64;
  std::size_t height = 64;
  std::string background = "meadow";
  std::vector<PlacedObject> objects;

  std::vector<BoundingBox> boxes() const;
};

struct CaptionSample {
  std::string image_id;
  Image image;
  SceneSpec scene;
  std::vector<std::string> captions;
};

struct GeneratorOptions {
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t max_objects = 6;
  double max_iou = 0.3;
};

// Fully determined by (seed, index).
CaptionSample generate_scene(std::uint64_t seed, std::size_t index, const GeneratorOptions& options = {});

// Five captions from distinct template families.
std::vector<std::string> caption_templates(const SceneSpec& scene, std::uint64_t seed);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Seeded shuffle, then val and test each take floor(count/10); train keeps
// the remainder.
SplitIndices split_dataset(std::size_t count, std::uint64_t seed);

Vocabulary build_vocabulary(std::span<const std::string> captions);

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::size_t count = 0;
  std::size_t width = 64;
  std::size_t height = 64;
  std::map<std::string, std::size_t> split_counts;
  std::map<std::string, std::string> split_files;
  std::vector<std::string> classes;
  int template_version = kTemplateVersion;
};

struct Dataset {
  DatasetManifest manifest;
  std::map<std::string, std::vector<CaptionSample>> splits;  // "train", "val", "test"

  const std::vector<CaptionSample>& split(const std::string& name) const;
};

Dataset generate_dataset(std::uint64_t seed, std::size_t count, const GeneratorOptions& options = {});
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

std::string sample_to_json(const CaptionSample& sample);
CaptionSample sample_from_json(const std::string& line);

// Externally computed features, one JSONL record per image.
std::map<std::string, FeatureStack> load_precomputed_features(const std::filesystem::path& path);
void write_precomputed_features(const std::filesystem::path& path,
                                const std::vector<std::pair<std::string, FeatureStack>>& stacks);

// Descriptors and encoded captions for training and decoding.
PreparedSample prepare_sample(const CaptionSample& sample, const Vocabulary& vocab, std::size_t n, double k);
std::vector<PreparedSample> prepare_samples(std::span<const CaptionSample> samples, const Vocabulary& vocab,
                                            std::size_t n, double k);

}  // namespace cha
