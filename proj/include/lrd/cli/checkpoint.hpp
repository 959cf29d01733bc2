#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lrd/cli/config_io.hpp"
#include "lrd/train/detector.hpp"

namespace lrd {

/// File layout, all integers little-endian:
///   8 bytes magic "LRDCKPT\0", u32 version,
///   u64 length + JSON text {"config", "role", "step"},
///   u64 tensor count, then per tensor:
///     u32 length + name, u32 rank, rank x i64 extents, numel x f32.
inline constexpr char kCheckpointMagic[8] = {'L', 'R', 'D', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointFormatError : public IoError {
 public:
  using IoError::IoError;
};
class BadMagicError : public CheckpointFormatError {
 public:
  using CheckpointFormatError::CheckpointFormatError;
};
class BadVersionError : public CheckpointFormatError {
 public:
  using CheckpointFormatError::CheckpointFormatError;
};
class TruncatedCheckpointError : public CheckpointFormatError {
 public:
  using CheckpointFormatError::CheckpointFormatError;
};

/// The checkpoint is well formed but does not fit the requested run.
class IncompatibleCheckpointError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Checkpoint {
  ExperimentConfig config;
  std::string role;  // "teacher" or "student"
  std::int64_t step = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

Checkpoint make_checkpoint(const Detector& model, const ExperimentConfig& cfg, const std::string& role,
                           std::int64_t step);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws IncompatibleCheckpointError naming the first field where a run
/// configured by `run` could not reuse weights saved under `saved`.
void check_compatible(const ExperimentConfig& saved, const ExperimentConfig& run);

/// Rebuilds the model the checkpoint was saved from.
Detector restore_detector(const Checkpoint& ckpt);

/// Hex FNV-1a 64 of the encoded bytes.
std::string checkpoint_digest(const Checkpoint& ckpt);

}  // namespace lrd
