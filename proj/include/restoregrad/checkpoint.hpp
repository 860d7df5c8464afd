#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "restoregrad/autodiff.hpp"

namespace restoregrad {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

struct CheckpointArray {
  std::string name;
  DType dtype = DType::kF32;
  ad::Shape shape;
  std::vector<double> values;  // exactly representable in dtype
};

/// Training snapshot. Binary layout, all integers little-endian:
///
///   magic      8 bytes  "RGCKPT\0\1"
///   version    u32      (currently 1)
///   config     u32 length + UTF-8 bytes (canonical config echo)
///   step       u64      completed optimizer steps
///   rng_seed   u64      root seed of all training streams
///   rng_ctr    u64      next per-step stream counter
///   n_entries  u32
///   entries    per array: u16 name length, name, u8 dtype, u8 rank,
///              rank x u64 dims, u64 payload offset, u64 byte length
///   payload    u64 length + bytes (arrays back to back, offsets relative
///              to the payload start)
///   crc32      u32      zlib crc32 of every preceding byte
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string config_text;
  std::uint64_t step = 0;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_counter = 0;
  std::vector<CheckpointArray> arrays;

  const CheckpointArray* find(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
// Throws CheckpointError on a bad magic, version, checksum, truncation or
// inconsistent manifest.
Checkpoint parse_checkpoint(const std::string& bytes);

// Writes to a sibling temporary file, then renames over `path`.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Writes bytes to path via a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& bytes);

}  // namespace restoregrad
