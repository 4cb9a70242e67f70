#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffmatte/model.hpp"

namespace diffmatte {

inline constexpr char kCheckpointMagic[4] = {'D', 'M', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, BadConfig, ShapeMismatch, MissingParameter, UnknownParameter, TrailingBytes };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Binary layout, all integers little-endian u32:
///   "DMCK" | version | config length | config text (key = value lines, UTF-8)
///   | entry count | entries...
/// entry: name length | name | rank | extents[rank] | float32 LE payload.
std::vector<std::uint8_t> serialize_checkpoint(const MattingModel& model);
MattingModel deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const MattingModel& model, const std::filesystem::path& path);
MattingModel load_checkpoint(const std::filesystem::path& path);

}  // namespace diffmatte
