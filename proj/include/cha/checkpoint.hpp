#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "cha/errors.hpp"
#include "cha/training.hpp"

namespace cha {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class CheckpointTruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Layout, all integers little-endian:
//   "CHAC" | u32 version | u64 manifest bytes | manifest (UTF-8)
//   | u32 array count | per array: u32 name bytes, name, u32 rank,
//     u64 extents[rank], float64 values
// The manifest holds [config], [state] and [vocabulary] sections.
std::string serialize_checkpoint(const TrainState& state);
TrainState deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);
// Also checks every stored array against the shapes `expected` implies;
// a mismatch raises ShapeError naming the array.
TrainState load_checkpoint(const std::filesystem::path& path, const TrainConfig& expected);

}  // namespace cha
