#include "boxcap/neighbors.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace boxcap::encoders {

double center_distance2(const dataio::TextBox& a, const dataio::TextBox& b) {
  const double dx = a.center_x() - b.center_x();
  const double dy = a.center_y() - b.center_y();
  return dx * dx + dy * dy;
}

namespace {

bool is_previous(std::span<const dataio::TextBox> boxes, std::size_t j, std::size_t i) {
  const double sj = boxes[j].top_left_sum(), si = boxes[i].top_left_sum();
  return sj < si || (sj == si && j < i);
}

}  // namespace

NeighborLists select_neighbors(std::span<const dataio::TextBox> boxes, std::size_t i, std::size_t n) {
  if (i >= boxes.size())
    throw std::out_of_range("select_neighbors: index " + std::to_string(i) + " out of range for " +
                            std::to_string(boxes.size()) + " boxes");
  NeighborLists out;
  for (std::size_t j = 0; j < boxes.size(); ++j) {
    if (j == i) continue;
    (is_previous(boxes, j, i) ? out.prev : out.next).push_back(j);
  }
  auto nearest_first = [&](std::size_t a, std::size_t b) {
    const double da = center_distance2(boxes[a], boxes[i]);
    const double db = center_distance2(boxes[b], boxes[i]);
    return da < db || (da == db && a < b);
  };
  std::sort(out.prev.begin(), out.prev.end(), nearest_first);
  std::sort(out.next.begin(), out.next.end(), nearest_first);
  if (out.prev.size() > n) out.prev.resize(n);
  if (out.next.size() > n) out.next.resize(n);
  return out;
}

Neighbors select_neighbors(std::span<const dataio::TextBox> boxes, std::size_t i) {
  const NeighborLists l = select_neighbors(boxes, i, 1);
  Neighbors out;
  if (!l.prev.empty()) out.prev = l.prev.front();
  if (!l.next.empty()) out.next = l.next.front();
  return out;
}

}  // namespace boxcap::encoders
