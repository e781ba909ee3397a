#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wavray/config.hpp"
#include "wavray/train.hpp"

namespace wavray {

class CheckpointError : public Error {
 public:
  using Error::Error;
};
class ChecksumError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class VersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class TruncationError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class ConfigMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> values;
};

/// File layout, all integers little-endian:
///   "WRNC" | u32 version | u32 n + n bytes of `key = value` text |
///   records { u32 n + name | u32 rank | u64 extents[rank] | f32 values } |
///   u64 FNV-1a of everything between the version and the checksum.
struct Checkpoint {
  KeyValues config;
  std::vector<TensorRecord> records;

  const TensorRecord* find(const std::string& name) const;
};

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Model and train settings recorded in a checkpoint.
RunConfig run_config_of(const Checkpoint& ckpt);

/// Model keys whose values differ, formatted as "key: a vs b".
std::vector<std::string> model_config_differences(const KeyValues& a, const KeyValues& b);

/// Parameters, optimizer moments, generator state and counters.
template <typename T>
Checkpoint snapshot(const Trainer<T>& trainer);

/// Inverse of snapshot. Raises ConfigMismatchError listing the differing
/// model keys when the checkpoint was written for another architecture.
template <typename T>
void restore(Trainer<T>& trainer, const Checkpoint& ckpt);

}  // namespace wavray
