#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cha/training.hpp"

namespace cha {

// `key = value` lines; blank lines and '#' comments are ignored.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

const std::vector<std::string>& config_keys();

// Throws ConfigError for unknown keys or unparsable values.
void apply_config_value(TrainConfig& config, const std::string& key, const std::string& value);
TrainConfig config_from_text(std::string_view text, TrainConfig base = {});
// One key=value line per field, in config_keys() order.
std::string config_to_text(const TrainConfig& config);

}  // namespace cha
