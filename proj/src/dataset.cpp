#include "cha/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cha/errors.hpp"
#include "cha/kernels.hpp"

namespace cha {
namespace {

using json = nlohmann::ordered_json;

struct ClassStyle {
  std::array<int, 3> color;  // base RGB bytes
  int min_w, max_w, min_h, max_h;
  bool may_rotate;  // swap w and h half the time
};

const std::array<ClassStyle, kClassCount> kStyles = {{
    {{190, 50, 50}, 8, 14, 8, 14, false},     // building
    {{30, 80, 205}, 10, 16, 8, 14, false},    // pond
    {{75, 75, 75}, 26, 40, 4, 6, true},       // road
    {{15, 90, 15}, 4, 7, 4, 7, false},        // tree
    {{240, 225, 30}, 3, 5, 3, 5, false},      // vehicle
    {{150, 205, 75}, 14, 22, 12, 20, false},  // field
    {{230, 230, 230}, 5, 8, 5, 8, false},     // tank
    {{140, 90, 155}, 12, 20, 4, 6, true},     // bridge
}};

struct Background {
  const char* name;
  std::array<int, 3> color;
};

const std::array<Background, 3> kBackgrounds = {{
    {"meadow", {95, 140, 65}},
    {"desert", {215, 190, 125}},
    {"farmland", {140, 115, 75}},
}};

const std::array<std::string, kClassCount> kClassNames = {"building", "pond", "road", "tree",
                                                          "vehicle", "field", "tank", "bridge"};

const char* number_word(std::size_t n) {
  static const char* words[] = {"zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"};
  return n < 10 ? words[n] : "many";
}

std::string plural(const std::string& noun) { return noun + "s"; }

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += i + 1 == items.size() ? " and " : ", ";
    out += items[i];
  }
  return out;
}

std::string grid_position(const BoundingBox& box, std::size_t width, std::size_t height) {
  static const char* names[3][3] = {{"top left", "top", "top right"},
                                    {"left", "center", "right"},
                                    {"bottom left", "bottom", "bottom right"}};
  const auto cell = [](double c, std::size_t extent) {
    return std::min<std::size_t>(2, static_cast<std::size_t>(3.0 * c / static_cast<double>(extent)));
  };
  return names[cell(box.cy, height)][cell(box.cx, width)];
}

std::array<double, 3> to_unit(const std::array<int, 3>& bytes) {
  return {bytes[0] / 255.0, bytes[1] / 255.0, bytes[2] / 255.0};
}

// Objects ordered by area (descending), ties by center left-to-right then top-to-bottom.
std::vector<const PlacedObject*> by_area(const SceneSpec& scene) {
  std::vector<const PlacedObject*> out;
  for (const auto& o : scene.objects) out.push_back(&o);
  std::stable_sort(out.begin(), out.end(), [](const PlacedObject* a, const PlacedObject* b) {
    if (a->box.area() != b->box.area()) return a->box.area() > b->box.area();
    if (a->box.cx != b->box.cx) return a->box.cx < b->box.cx;
    return a->box.cy < b->box.cy;
  });
  return out;
}

Image render(const SceneSpec& scene, const std::array<double, 3>& background) {
  Image img(scene.width, scene.height, background);
  for (const auto& o : scene.objects) {
    for (std::size_t y = 0; y < scene.height; ++y) {
      const double py = static_cast<double>(y) + 0.5;
      if (py < o.box.top() || py >= o.box.bottom()) continue;
      for (std::size_t x = 0; x < scene.width; ++x) {
        const double px = static_cast<double>(x) + 0.5;
        if (px >= o.box.left() && px < o.box.right()) img.set(x, y, o.color);
      }
    }
  }
  return img;
}

std::string image_id_for(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img%05zu", index);
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

const std::array<const char*, 3> kSplitNames = {"train", "val", "test"};

}  // namespace

const std::array<std::string, kClassCount>& class_names() { return kClassNames; }

std::string to_string(ObjectClass cls) { return kClassNames[static_cast<std::size_t>(cls)]; }

ObjectClass parse_class(const std::string& name) {
  for (std::size_t i = 0; i < kClassCount; ++i)
    if (kClassNames[i] == name) return static_cast<ObjectClass>(i);
  throw FormatError("unknown object class '" + name + "'");
}

std::vector<BoundingBox> SceneSpec::boxes() const {
  std::vector<BoundingBox> out;
  for (const auto& o : objects) out.push_back(o.box);
  return out;
}

CaptionSample generate_scene(std::uint64_t seed, std::size_t index, const GeneratorOptions& options) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  SceneSpec scene;
  scene.width = options.width;
  scene.height = options.height;
  const auto& bg = kBackgrounds[static_cast<std::size_t>(uniform_int(0, static_cast<int>(kBackgrounds.size()) - 1))];
  scene.background = bg.name;

  const auto wanted = static_cast<std::size_t>(uniform_int(0, static_cast<int>(options.max_objects)));
  const int W = static_cast<int>(options.width), H = static_cast<int>(options.height);
  for (std::size_t i = 0; i < wanted; ++i) {
    const auto cls = static_cast<ObjectClass>(uniform_int(0, kClassCount - 1));
    const auto& style = kStyles[static_cast<std::size_t>(cls)];
    std::array<double, 3> color{};
    for (std::size_t c = 0; c < 3; ++c) color[c] = std::clamp(style.color[c] + uniform_int(-10, 10), 0, 255) / 255.0;
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      int w = uniform_int(style.min_w, style.max_w);
      int h = uniform_int(style.min_h, style.max_h);
      if (style.may_rotate && uniform_int(0, 1)) std::swap(w, h);
      w = std::min(w, W);
      h = std::min(h, H);
      const int x0 = uniform_int(0, W - w);
      const int y0 = uniform_int(0, H - h);
      const BoundingBox box = BoundingBox::from_edges(x0, y0, x0 + w, y0 + h);
      const bool clear = std::all_of(scene.objects.begin(), scene.objects.end(),
                                     [&](const PlacedObject& o) { return iou(o.box, box) <= options.max_iou; });
      if (clear) {
        scene.objects.push_back({cls, box, color});
        placed = true;
      }
    }
    // An object that cannot be placed is dropped, reducing the count.
  }

  CaptionSample sample;
  sample.image_id = image_id_for(index);
  sample.image = render(scene, to_unit(bg.color));
  sample.captions = caption_templates(scene, seed);
  sample.scene = std::move(scene);
  return sample;
}

std::vector<std::string> caption_templates(const SceneSpec& scene, std::uint64_t seed) {
  const std::string& bg = scene.background;
  if (scene.objects.empty()) {
    return {"there is nothing but " + bg + " in the scene", "an empty " + bg, "a wide " + bg + " with no objects",
            "the image shows a plain " + bg, "a " + bg + " covers the whole image"};
  }

  std::array<std::size_t, kClassCount> counts{};
  for (const auto& o : scene.objects) ++counts[static_cast<std::size_t>(o.cls)];
  std::vector<std::string> counted, bare;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    if (!counts[c]) continue;
    const std::string noun = counts[c] == 1 ? kClassNames[c] : plural(kClassNames[c]);
    counted.push_back(std::string(number_word(counts[c])) + " " + noun);
    bare.push_back(counts[c] == 1 ? "a " + kClassNames[c] : plural(kClassNames[c]));
  }
  const auto ranked = by_area(scene);
  const std::string largest = to_string(ranked[0]->cls);
  const std::size_t total = scene.objects.size();
  std::size_t first_class = 0;
  while (!counts[first_class]) ++first_class;

  std::vector<std::string> out;
  out.push_back(std::string("there ") + (counts[first_class] == 1 ? "is " : "are ") + join_list(counted) +
                " in the scene");
  if (total >= 2) {
    const std::string second = to_string(ranked[1]->cls);
    const char* relation = (seed & 1) ? " is next to " : " is near ";
    out.push_back("a " + largest + relation + (second == largest ? "another " + second : "a " + second));
  } else {
    out.push_back("a " + largest + " sits alone on the " + bg);
  }
  out.push_back(total == 1 ? "a single " + largest + " on a " + bg : join_list(bare) + " scattered across a " + bg);
  out.push_back("the " + largest + " is in the " + grid_position(ranked[0]->box, scene.width, scene.height) +
                " of the image");
  out.push_back("an aerial view of a " + bg + " with " + number_word(total) + (total == 1 ? " object" : " objects"));
  return out;
}

SplitIndices split_dataset(std::size_t count, std::uint64_t seed) {
  if (count < 10) throw ConfigError("need at least 10 samples to split 80/10/10, got " + std::to_string(count));
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = count; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const std::size_t tenth = count / 10;
  const std::size_t n_train = count - 2 * tenth;
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + tenth));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + tenth), order.end());
  return s;
}

Vocabulary build_vocabulary(std::span<const std::string> captions) {
  if (captions.empty()) throw ConfigError("cannot build a vocabulary from zero captions");
  std::vector<Tokens> tokenized;
  for (const auto& c : captions) tokenized.push_back(tokenize(c));
  return Vocabulary::build(tokenized);
}

const std::vector<CaptionSample>& Dataset::split(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) throw ConfigError("dataset has no split '" + name + "'");
  return it->second;
}

Dataset generate_dataset(std::uint64_t seed, std::size_t count, const GeneratorOptions& options) {
  const SplitIndices idx = split_dataset(count, seed);
  std::vector<CaptionSample> all(count);
  const auto n = static_cast<long long>(count);
#pragma omp parallel for schedule(dynamic) num_threads(kernels::thread_cap())
  for (long long i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = generate_scene(seed, static_cast<std::size_t>(i), options);

  Dataset ds;
  ds.manifest.seed = seed;
  ds.manifest.count = count;
  ds.manifest.width = options.width;
  ds.manifest.height = options.height;
  ds.manifest.classes.assign(kClassNames.begin(), kClassNames.end());
  const std::array<const std::vector<std::size_t>*, 3> parts = {&idx.train, &idx.val, &idx.test};
  for (std::size_t s = 0; s < 3; ++s) {
    auto& samples = ds.splits[kSplitNames[s]];
    std::vector<std::size_t> sorted = *parts[s];
    std::sort(sorted.begin(), sorted.end());
    for (auto i : sorted) samples.push_back(all[i]);
    ds.manifest.split_counts[kSplitNames[s]] = samples.size();
    ds.manifest.split_files[kSplitNames[s]] = std::string(kSplitNames[s]) + ".jsonl";
  }
  return ds;
}

std::string sample_to_json(const CaptionSample& sample) {
  json j;
  j["image_id"] = sample.image_id;
  j["width"] = sample.image.width;
  j["height"] = sample.image.height;
  j["background"] = sample.scene.background;
  json pixels = json::array();
  for (std::size_t i = 0; i < sample.image.width * sample.image.height; ++i) {
    pixels.push_back({static_cast<int>(std::lround(sample.image.rgb[i * 3] * 255)),
                      static_cast<int>(std::lround(sample.image.rgb[i * 3 + 1] * 255)),
                      static_cast<int>(std::lround(sample.image.rgb[i * 3 + 2] * 255))});
  }
  j["image"] = std::move(pixels);
  json boxes = json::array();
  for (const auto& o : sample.scene.objects)
    boxes.push_back({{"cx", o.box.cx}, {"cy", o.box.cy}, {"w", o.box.w}, {"h", o.box.h}, {"class", to_string(o.cls)}});
  j["boxes"] = std::move(boxes);
  j["captions"] = sample.captions;
  return j.dump();
}

CaptionSample sample_from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
    CaptionSample s;
    s.image_id = j.at("image_id").get<std::string>();
    const auto w = j.at("width").get<std::size_t>();
    const auto h = j.at("height").get<std::size_t>();
    s.image = Image(w, h);
    const auto& pixels = j.at("image");
    if (pixels.size() != w * h) throw FormatError("image " + s.image_id + ": pixel count does not match size");
    for (std::size_t i = 0; i < w * h; ++i)
      for (std::size_t c = 0; c < 3; ++c) s.image.rgb[i * 3 + c] = pixels[i][c].get<int>() / 255.0;
    s.scene.width = w;
    s.scene.height = h;
    s.scene.background = j.value("background", std::string());
    for (const auto& b : j.at("boxes")) {
      PlacedObject o;
      o.cls = parse_class(b.at("class").get<std::string>());
      o.box = {b.at("cx").get<double>(), b.at("cy").get<double>(), b.at("w").get<double>(), b.at("h").get<double>()};
      if (!(o.box.w > 0 && o.box.h > 0)) throw FormatError("image " + s.image_id + ": box with non-positive extent");
      s.scene.objects.push_back(o);
    }
    s.captions = j.at("captions").get<std::vector<std::string>>();
    if (s.captions.size() != kCaptionsPerImage)
      throw FormatError("image " + s.image_id + ": expected 5 captions, got " + std::to_string(s.captions.size()));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed dataset record: ") + e.what());
  }
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json m;
  m["format"] = "cha-dataset";
  m["template_version"] = dataset.manifest.template_version;
  m["seed"] = dataset.manifest.seed;
  m["count"] = dataset.manifest.count;
  m["image_width"] = dataset.manifest.width;
  m["image_height"] = dataset.manifest.height;
  m["classes"] = dataset.manifest.classes;
  json splits = json::object();
  for (const char* name : kSplitNames) {
    const auto& samples = dataset.split(name);
    splits[name] = {{"count", samples.size()}, {"file", std::string(name) + ".jsonl"}};
    std::string body;
    for (const auto& s : samples) body += sample_to_json(s) + "\n";
    write_file(dir / (std::string(name) + ".jsonl"), body);
  }
  m["splits"] = std::move(splits);
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  json m;
  try {
    m = json::parse(read_file(dir / "manifest.json"));
    ds.manifest.seed = m.at("seed").get<std::uint64_t>();
    ds.manifest.count = m.at("count").get<std::size_t>();
    ds.manifest.width = m.value("image_width", std::size_t{64});
    ds.manifest.height = m.value("image_height", std::size_t{64});
    ds.manifest.classes = m.value("classes", std::vector<std::string>());
    ds.manifest.template_version = m.value("template_version", kTemplateVersion);
    for (const auto& [name, info] : m.at("splits").items()) {
      ds.manifest.split_counts[name] = info.at("count").get<std::size_t>();
      ds.manifest.split_files[name] = info.at("file").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  for (const auto& [name, file] : ds.manifest.split_files) {
    std::istringstream in(read_file(dir / file));
    std::string line;
    auto& samples = ds.splits[name];
    while (std::getline(in, line))
      if (!line.empty()) samples.push_back(sample_from_json(line));
    if (samples.size() != ds.manifest.split_counts[name])
      throw FormatError("split '" + name + "' has " + std::to_string(samples.size()) + " records, manifest says " +
                        std::to_string(ds.manifest.split_counts[name]));
  }
  return ds;
}

std::map<std::string, FeatureStack> load_precomputed_features(const std::filesystem::path& path) {
  std::map<std::string, FeatureStack> out;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const auto id = j.at("image_id").get<std::string>();
      std::vector<InstanceFeature> objects, patches;
      for (const auto& v : j.at("object_features")) objects.push_back({Level::object, v.get<std::vector<double>>()});
      for (const auto& v : j.at("patch_features")) patches.push_back({Level::patch, v.get<std::vector<double>>()});
      InstanceFeature global{Level::global, j.at("global_feature").get<std::vector<double>>()};
      FeatureStack stack = stack_features(objects, patches, global);
      if (dim == 0) dim = stack.dim();
      if (stack.dim() != dim)
        throw ShapeError("precomputed features for " + id + " have width " + std::to_string(stack.dim()) +
                         ", expected " + std::to_string(dim));
      out[id] = std::move(stack);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed feature record: ") + e.what());
    }
  }
  return out;
}

void write_precomputed_features(const std::filesystem::path& path,
                                const std::vector<std::pair<std::string, FeatureStack>>& stacks) {
  std::string body;
  for (const auto& [id, stack] : stacks) {
    json j;
    j["image_id"] = id;
    json objs = json::array(), patches = json::array();
    for (std::size_t i = 0; i < stack.n; ++i) {
      objs.push_back(stack.rows[i].vector);
      patches.push_back(stack.rows[stack.n + i].vector);
    }
    j["object_features"] = std::move(objs);
    j["patch_features"] = std::move(patches);
    j["global_feature"] = stack.rows.back().vector;
    body += j.dump() + "\n";
  }
  write_file(path, body);
}

PreparedSample prepare_sample(const CaptionSample& sample, const Vocabulary& vocab, std::size_t n, double k) {
  PreparedSample p;
  p.image_id = sample.image_id;
  const auto boxes = sample.scene.boxes();
  p.descriptors = describe_sample(sample.image, boxes, n, k);
  for (const auto& c : sample.captions) {
    Tokens tokens = tokenize(c);
    std::vector<std::size_t> framed{Vocabulary::kStart};
    for (auto idx : vocab.encode(tokens)) framed.push_back(idx);
    framed.push_back(Vocabulary::kEnd);
    p.captions.push_back(std::move(framed));
    p.references.push_back(std::move(tokens));
  }
  return p;
}

std::vector<PreparedSample> prepare_samples(std::span<const CaptionSample> samples, const Vocabulary& vocab,
                                            std::size_t n, double k) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(prepare_sample(s, vocab, n, k));
  return out;
}

}  // namespace cha
