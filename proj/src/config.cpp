#include "cha/config.hpp"

#include <charconv>

#include "cha/format.hpp"

namespace cha {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + value + "'");
  return v;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + " has no '='");
    out.emplace_back(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {"d",    "hidden",     "attention", "output",   "n",
                                                "k",    "lr",         "epochs",    "seed",     "lstm_input",
                                                "beam", "max_len",    "clip_norm", "captions_per_image", "init_scale"};
  return keys;
}

void apply_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "d") c.feature_dim = parse_uint(key, value);
  else if (key == "hidden") c.hidden = parse_uint(key, value);
  else if (key == "attention") c.attention = parse_uint(key, value);
  else if (key == "output") c.output = parse_uint(key, value);
  else if (key == "n") c.objects = parse_uint(key, value);
  else if (key == "k") c.patch_scale = parse_double(value);
  else if (key == "lr") c.lr = parse_double(value);
  else if (key == "epochs") c.epochs = parse_uint(key, value);
  else if (key == "seed") c.seed = parse_uint(key, value);
  else if (key == "lstm_input") c.lstm_input = parse_lstm_input(value);
  else if (key == "beam") c.beam = parse_uint(key, value);
  else if (key == "max_len") c.max_len = parse_uint(key, value);
  else if (key == "clip_norm") c.clip_norm = parse_double(value);
  else if (key == "captions_per_image") c.captions_per_image = parse_uint(key, value);
  else if (key == "init_scale") c.init_scale = parse_double(value);
  else throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig config_from_text(std::string_view text, TrainConfig base) {
  for (const auto& [k, v] : parse_key_values(text)) apply_config_value(base, k, v);
  return base;
}

std::string config_to_text(const TrainConfig& c) {
  std::string out;
  auto line = [&](const char* key, const std::string& value) { out += std::string(key) + "=" + value + "\n"; };
  line("d", std::to_string(c.feature_dim));
  line("hidden", std::to_string(c.hidden));
  line("attention", std::to_string(c.attention));
  line("output", std::to_string(c.output));
  line("n", std::to_string(c.objects));
  line("k", format_double(c.patch_scale));
  line("lr", format_double(c.lr));
  line("epochs", std::to_string(c.epochs));
  line("seed", std::to_string(c.seed));
  line("lstm_input", to_string(c.lstm_input));
  line("beam", std::to_string(c.beam));
  line("max_len", std::to_string(c.max_len));
  line("clip_norm", format_double(c.clip_norm));
  line("captions_per_image", std::to_string(c.captions_per_image));
  line("init_scale", format_double(c.init_scale));
  return out;
}

}  // namespace cha
