#pragma once

// Binary checkpoint container.
//
//   magic "BOXCAPCK" | u32 version | config (key=value text) | vocabulary | u64 step |
//   rng state | tensors (model) | tensors (adam m) | tensors (adam v)
//
// Integers are little-endian, strings are u64 length + bytes, tensors are
// name + u64 rows + u64 cols + row-major doubles.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "boxcap/autograd.hpp"
#include "boxcap/model_config.hpp"
#include "boxcap/net.hpp"

namespace boxcap::net {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix value;
};

struct Checkpoint {
  ModelConfig model;
  /// Training settings stored alongside the model (opaque to this module).
  std::map<std::string, std::string> train;
  std::vector<std::string> vocab;
  std::uint64_t step = 0;
  std::string rng_state;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> adam_m;
  std::vector<NamedTensor> adam_v;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes to a temporary sibling and renames, so an existing file is replaced atomically.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<NamedTensor> export_parameters(const CaptionModel& model);
/// Copies tensors into the model; every parameter must be present with matching shape.
void import_parameters(CaptionModel& model, const std::vector<NamedTensor>& tensors);

}  // namespace boxcap::net
