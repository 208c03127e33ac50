#pragma once

// Context encoders: image grid tokens, the neighbor-enhanced location token and
// product-info tokens, all mapped to the model width d.
//
//   image:    v_i + [Emb_h(x_i); Emb_v(y_i)] + SE_v              (one row per grid cell)
//   location: [W1' [e_prev; e_next]; W2' e_cur] + SE_l          (one row per box)
//             e = [Emb_h(x_i); Emb_v(y_i); Emb_h(x_j); Emb_v(y_j)] over the box corners
//   tokens:   W_e x_i + PE_i + SE                              (info or caption rows)

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "boxcap/autograd.hpp"
#include "boxcap/dataio.hpp"
#include "boxcap/image.hpp"
#include "boxcap/model_config.hpp"
#include "boxcap/neighbors.hpp"

namespace boxcap::encoders {

/// Per-cell pooled statistics fed to the trainable backbone: mean RGB of the cell
/// followed by the mean RGB of its four quadrants.
inline constexpr int kCellFeatures = 15;

struct EncoderParams {
  Parameter backbone_w1, backbone_b1, backbone_w2, backbone_b2;
  Parameter emb_h, emb_v;
  Parameter seg_image, seg_location, seg_info, seg_caption;
  Parameter position;
  Parameter null_neighbor;
  Parameter loc_w1, loc_w2;
  Parameter word;
  Parameter placeholder_image, placeholder_location, placeholder_info;

  EncoderParams() = default;
  EncoderParams(const ModelConfig& cfg, std::mt19937_64& rng);

  std::vector<Parameter*> all();
};

/// Fixed pooling stage of the visual backbone: k*k rows of kCellFeatures, row-major cells.
Matrix pool_cells(const Image& image, int k);

/// Trainable two-layer MLP over pooled cells; rows in, rows of width d out.
Var visual_backbone(Tape& tape, EncoderParams& p, const Matrix& cells);

/// pool_cells + visual_backbone for a single image (k*k rows of d).
Matrix visual_backbone(EncoderParams& p, const Image& image, int k);

/// Adds spatial and segment embeddings to backbone rows; rows repeat every k*k cells.
Var encode_image(Tape& tape, EncoderParams& p, const Var& grid_features, int k);

struct GridIndex {
  int x = 0;
  int y = 0;
  bool operator==(const GridIndex&) const = default;
};
struct GridCorners {
  GridIndex top_left;
  GridIndex bottom_right;
  bool operator==(const GridCorners&) const = default;
};

/// Each coordinate c maps to min(floor(c * k), k - 1).
GridCorners box_to_grid(const dataio::TextBox& box, int k);

struct LocationQuery {
  dataio::TextBox box;
  /// prev slots then next slots; nullopt selects the learned null embedding.
  std::vector<std::optional<dataio::TextBox>> slots;
};

/// Resolves the neighbor slots of box i. kRandom2 draws from rng, which must then be non-null.
LocationQuery make_location_query(NeighborMode mode, std::span<const dataio::TextBox> boxes,
                                  std::size_t i, std::mt19937_64* rng = nullptr);

/// One row per query.
Var encode_location(Tape& tape, EncoderParams& p, std::span<const LocationQuery> queries, int k);

enum class TokenSegment { kInfo, kCaption };

/// Token rows for every sequence, concatenated; positions restart at 0 per sequence.
Var encode_tokens(Tape& tape, EncoderParams& p, std::span<const std::vector<int>> sequences,
                  TokenSegment segment);

/// Single-query convenience wrappers returning plain values.
Matrix encode_location(EncoderParams& p, const LocationQuery& query, int k);
Matrix encode_info(EncoderParams& p, std::span<const int> ids);

}  // namespace boxcap::encoders
