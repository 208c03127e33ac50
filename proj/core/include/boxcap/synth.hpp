#pragma once

// Deterministic synthetic card generator.
//
// Every 64x64 card has three horizontal zones on an 8x8 layout lattice:
//   top band (lattice rows 0-1)     -> brand captions, list A from the info text
//   middle band (rows 2-5)          -> feature captions: product color + list F
//   bottom band (rows 6-7)          -> selling-point captions, list B
// A solid product region in the category color fills lattice columns 3-5 of the
// middle band. Each zone holds one or two boxes; the k-th box of a zone in
// ascending top-left-sum order takes the k-th item of the zone's list, so a
// caption is only recoverable when the neighboring boxes are known. A caption
// has clamp(round(aspect ratio), 2, 10) tokens, padded with the zone filler.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "boxcap/dataio.hpp"

namespace boxcap::synth {

inline constexpr int kImageSize = 64;
inline constexpr int kLatticeCells = 8;
inline constexpr int kNumCategories = 8;
inline constexpr int kPoolSize = 12;
inline constexpr int kItemsPerList = 2;

inline constexpr std::array<std::string_view, kNumCategories> kColorTokens = {
    "red", "green", "blue", "yellow", "purple", "orange", "cyan", "pink"};

struct Rgb {
  double r, g, b;
};
inline constexpr std::array<Rgb, kNumCategories> kCategoryColors = {{
    {0.85, 0.15, 0.15}, {0.15, 0.70, 0.20}, {0.15, 0.25, 0.85}, {0.90, 0.85, 0.10},
    {0.55, 0.15, 0.65}, {0.95, 0.55, 0.10}, {0.10, 0.80, 0.80}, {0.95, 0.45, 0.70},
}};

inline constexpr std::string_view kTopFiller = "tfill";
inline constexpr std::string_view kProductFiller = "pfill";
inline constexpr std::string_view kBottomFiller = "bfill";

enum class Zone { kTop = 0, kProduct = 1, kBottom = 2 };
inline constexpr int kNumZones = 3;

/// Top if the box ends above lattice row 2, bottom if it starts at row 6 or below.
Zone zone_of(const dataio::TextBox& box);

std::string category_token(int category);
std::string brand_token(int i);
std::string selling_token(int i);
std::string feature_token(int i);

/// Token count the generator assigns to a box.
int caption_length(const dataio::TextBox& box);

struct CardAttributes {
  int category = 0;
  std::array<std::string, kItemsPerList> brands;
  std::array<std::string, kItemsPerList> selling_points;
  std::array<std::string, kItemsPerList> features;
};

std::string format_info(const CardAttributes& attrs);
/// Parses "cat<c> A0 A1 [SEP] B0 B1 [SEP] F0 F1"; throws std::invalid_argument otherwise.
CardAttributes parse_info(std::string_view info);

/// The generator's caption rule applied to a full layout (k-th box of a zone takes
/// item k mod 2).
std::vector<std::string> derive_captions(std::span<const dataio::TextBox> boxes,
                                         const CardAttributes& attrs);

/// Position of box i among the boxes of its zone (ascending top-left sum, ties by index).
int zone_ordinal(std::span<const dataio::TextBox> boxes, std::size_t i);
/// True when box i shares its zone with another box.
bool in_ordered_zone(std::span<const dataio::TextBox> boxes, std::size_t i);

dataio::Card synth_card(std::uint64_t seed, std::size_t index);
dataio::DatasetSplit synth_cards(std::size_t n, std::uint64_t seed,
                                 dataio::Split split = dataio::Split::kTrain);

}  // namespace boxcap::synth
