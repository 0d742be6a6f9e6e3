#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tsforge/tensor.hpp"

namespace tsforge {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct AdamSnapshot {
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;   // aligned with the parameter order
  std::vector<std::vector<double>> second_moment;
};

// Everything needed to continue a run exactly where it stopped. Save and
// load round-trip bit-exactly: the file layout is fixed (magic, version,
// little-endian IEEE doubles, length-prefixed strings and names).
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_json;  // RunConfig snapshot
  std::vector<NamedTensor> generator;
  std::vector<NamedTensor> discriminator;
  AdamSnapshot adam_g;
  AdamSnapshot adam_d;
  std::uint64_t step = 0;   // train steps taken
  std::uint64_t epoch = 0;  // epochs completed
  std::string rng_state;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tsforge
