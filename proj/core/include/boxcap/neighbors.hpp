#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "boxcap/dataio.hpp"

namespace boxcap::encoders {

struct Neighbors {
  std::optional<std::size_t> prev;
  std::optional<std::size_t> next;

  bool operator==(const Neighbors&) const = default;
};

/// Box j is "previous" to box i when its top-left sum is smaller (equal sums: smaller list
/// index is previous), otherwise "next". Within each class the box whose center is nearest
/// to box i's center wins; equal distances go to the smaller list index.
Neighbors select_neighbors(std::span<const dataio::TextBox> boxes, std::size_t i);

/// Up to n nearest previous and n nearest next boxes, nearest first.
struct NeighborLists {
  std::vector<std::size_t> prev;
  std::vector<std::size_t> next;
};
NeighborLists select_neighbors(std::span<const dataio::TextBox> boxes, std::size_t i, std::size_t n);

/// Squared Euclidean distance between box centers.
double center_distance2(const dataio::TextBox& a, const dataio::TextBox& b);

}  // namespace boxcap::encoders
