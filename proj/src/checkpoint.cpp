#include "cha/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "cha/config.hpp"

namespace cha {
namespace {

constexpr char kMagic[4] = {'C', 'H', 'A', 'C'};

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  std::string take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) {
    if (in_.size() - pos_ < n) throw CheckpointTruncatedError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

void write_array(Writer& w, const std::string& name, const Shape& shape, std::span<const double> values) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (auto e : shape) w.u64(e);
  for (double v : values) w.f64(v);
}

struct StoredArray {
  Shape shape;
  std::vector<double> values;
};

void check_shapes(const std::map<std::string, StoredArray>& arrays, const CaptionModel& model) {
  for (const auto& nt : model.named()) {
    auto it = arrays.find(nt.name);
    if (it == arrays.end()) throw FormatError("checkpoint is missing array '" + nt.name + "'");
    if (it->second.shape != nt.tensor.shape())
      throw ShapeError("array '" + nt.name + "' has shape " + to_string(it->second.shape) + " in the checkpoint but " +
                       to_string(nt.tensor.shape()) + " in the configuration");
  }
}

}  // namespace

std::string serialize_checkpoint(const TrainState& state) {
  std::string manifest = "[config]\n" + config_to_text(state.config);
  manifest += "[state]\nepoch=" + std::to_string(state.epoch) + "\nadam_step=" + std::to_string(state.adam.step) +
              "\nrng=" + state.rng_state + "\n";
  manifest += "[vocabulary]\n";
  for (const auto& w : state.vocab.words()) manifest += w + "\n";

  Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kCheckpointVersion);
  w.u64(manifest.size());
  w.bytes(manifest);
  const auto params = state.model.named();
  const bool with_adam = state.adam.m.size() == params.size();
  w.u32(static_cast<std::uint32_t>(params.size() * (with_adam ? 3 : 1)));
  for (const auto& p : params) write_array(w, p.name, p.tensor.shape(), p.tensor.data());
  if (with_adam) {
    for (std::size_t i = 0; i < params.size(); ++i)
      write_array(w, "adam.m." + params[i].name, params[i].tensor.shape(), state.adam.m[i]);
    for (std::size_t i = 0; i < params.size(); ++i)
      write_array(w, "adam.v." + params[i].name, params[i].tensor.shape(), state.adam.v[i]);
  }
  return w.take();
}

TrainState deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("not a checkpoint file (bad magic bytes)");
  r.bytes(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t manifest_size = r.u64();
  const std::string manifest(r.bytes(manifest_size));

  // Split the manifest into sections.
  std::map<std::string, std::string> sections;
  std::string current;
  std::istringstream in(manifest);
  std::string line;
  while (std::getline(in, line)) {
    if (line.size() > 2 && line.front() == '[' && line.back() == ']') {
      current = line.substr(1, line.size() - 2);
      sections[current];
      continue;
    }
    sections[current] += line + "\n";
  }
  for (const char* s : {"config", "state", "vocabulary"})
    if (!sections.count(s)) throw FormatError(std::string("checkpoint manifest lacks [") + s + "]");

  TrainState state;
  state.config = config_from_text(sections["config"]);
  std::vector<std::string> words;
  std::istringstream vin(sections["vocabulary"]);
  while (std::getline(vin, line)) words.push_back(line);
  state.vocab = Vocabulary::from_words(std::move(words));
  // rng state contains spaces, so it is read raw rather than through the key=value parser.
  {
    std::istringstream sin(sections["state"]);
    while (std::getline(sin, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
      if (key == "epoch") state.epoch = std::stoull(value);
      else if (key == "adam_step") state.adam.step = std::stoull(value);
      else if (key == "rng") state.rng_state = value;
    }
  }

  std::map<std::string, StoredArray> arrays;
  const std::uint32_t count = r.u32();
  for (std::uint32_t a = 0; a < count; ++a) {
    const std::string name(r.bytes(r.u32()));
    StoredArray arr;
    const std::uint32_t rank = r.u32();
    std::uint64_t total = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      arr.shape.push_back(r.u64());
      total *= arr.shape.back();
    }
    if (total > (bytes.size() / 8) + 1) throw CheckpointTruncatedError("array '" + name + "' exceeds the file size");
    arr.values.resize(total);
    for (auto& v : arr.values) v = r.f64();
    arrays[name] = std::move(arr);
  }
  if (!r.done()) throw FormatError("trailing bytes after the last checkpoint array");

  state.model = CaptionModel::init(state.config, state.vocab.size());
  check_shapes(arrays, state.model);
  const auto params = state.model.named();
  for (const auto& p : params) {
    auto src = arrays.at(p.name).values;
    auto dst = Tensor(p.tensor).data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  state.adam = [&] {
    AdamState adam = AdamState::for_params(params);
    adam.step = state.adam.step;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto m = arrays.find("adam.m." + params[i].name);
      auto v = arrays.find("adam.v." + params[i].name);
      if (m == arrays.end() || v == arrays.end()) continue;
      if (m->second.values.size() != adam.m[i].size() || v->second.values.size() != adam.v[i].size())
        throw ShapeError("optimizer moments for '" + params[i].name + "' do not match the parameter shape");
      adam.m[i] = m->second.values;
      adam.v[i] = v->second.values;
    }
    return adam;
  }();
  return state;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(state);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

TrainState load_checkpoint(const std::filesystem::path& path, const TrainConfig& expected) {
  TrainState state = load_checkpoint(path);
  const CaptionModel reference = CaptionModel::init(expected, state.vocab.size());
  const auto want = reference.named();
  const auto have = state.model.named();
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (i >= have.size() || have[i].name != want[i].name)
      throw FormatError("checkpoint is missing array '" + want[i].name + "'");
    if (have[i].tensor.shape() != want[i].tensor.shape())
      throw ShapeError("array '" + want[i].name + "' has shape " + to_string(have[i].tensor.shape()) +
                       " in the checkpoint but " + to_string(want[i].tensor.shape()) + " in the configuration");
  }
  return state;
}

}  // namespace cha
