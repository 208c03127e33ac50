#pragma once

#include <map>
#include <string>

namespace boxcap {

/// Which boxes feed the prev/next slots of the location token.
enum class NeighborMode {
  kNone,     // both slots hold the learned null embedding
  kTop1,     // nearest previous and nearest next box
  kTop2,     // two nearest previous and two nearest next boxes
  kRandom2,  // two uniformly random locations
};

std::string to_string(NeighborMode m);
NeighborMode neighbor_mode_from_string(const std::string& s);

struct ModelConfig {
  int layers = 2;
  int width = 128;
  int heads = 4;
  int grid = 8;
  int vocab = 0;
  int max_caption_len = 10;
  int max_info_len = 16;
  NeighborMode neighbors = NeighborMode::kTop1;
  bool use_image = true;
  bool use_info = true;
  bool use_location = true;

  /// Caption rows per sample: SOS plus up to max_caption_len tokens.
  int caption_slots() const { return max_caption_len + 1; }
  int position_rows() const { return max_info_len > caption_slots() ? max_info_len : caption_slots(); }
  /// Neighbor embeddings concatenated in front of W1.
  int neighbor_slots() const { return neighbors == NeighborMode::kTop2 ? 4 : 2; }

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace boxcap
