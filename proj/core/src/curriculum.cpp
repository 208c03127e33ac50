#include "boxcap/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "boxcap/neighbors.hpp"

namespace boxcap::curriculum {

Schedule schedule(std::int64_t step) {
  if (step < 1) throw std::invalid_argument("schedule: step must be >= 1, got " + std::to_string(step));
  const double s = static_cast<double>(step);
  Schedule out;
  out.p1 = std::min(1.0, 2.0 * std::pow(s, -0.2));
  out.p3 = std::min(1.0, s * std::pow(5000.0, -1.5));
  if (out.p1 + out.p3 > 1.0) out.p1 = 1.0 - out.p3;
  out.p2 = std::max(0.0, 1.0 - out.p1 - out.p3);
  // Rounding can leave the sum an ulp or two away from 1. Search nearby doubles of p1 and
  // p2 (smallest total displacement first) for a pair that makes p1 + p2 + p3 == 1 exactly.
  if (out.p1 + out.p2 + out.p3 != 1.0) {
    auto step = [](double v, int k) {
      for (; k > 0; --k) v = std::nextafter(v, 2.0);
      for (; k < 0; ++k) v = std::max(0.0, std::nextafter(v, -1.0));
      return v;
    };
    const Schedule base = out;
    bool found = false;
    for (int radius = 1; radius <= 8 && !found; ++radius)
      for (int a = -radius; a <= radius && !found; ++a)
        for (int b = -radius; b <= radius && !found; ++b) {
          if (std::max(std::abs(a), std::abs(b)) != radius) continue;
          const double p1 = step(base.p1, a), p2 = base.p2 > 0.0 ? step(base.p2, b) : 0.0;
          if (p1 + p2 + base.p3 == 1.0) {
            out.p1 = p1;
            out.p2 = p2;
            found = true;
          }
        }
  }
  return out;
}

std::string to_string(Level l) {
  switch (l) {
    case Level::kPositive: return "positive";
    case Level::kLevel1: return "I";
    case Level::kLevel2: return "II";
    case Level::kLevel3: return "III";
  }
  return "?";
}

namespace {

double uniform(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::optional<std::string> level1(std::span<const dataio::Card> dataset, std::size_t card,
                                  const std::string& truth, std::mt19937_64& rng) {
  if (dataset.size() < 2) return std::nullopt;
  constexpr int kTries = 100;
  for (int i = 0; i < kTries; ++i) {
    std::size_t other = pick(rng, dataset.size() - 1);
    if (other >= card) ++other;
    const auto& items = dataset[other].items;
    if (items.empty()) continue;
    const std::string& c = items[pick(rng, items.size())].caption;
    if (c != truth) return c;
  }
  return std::nullopt;
}

std::optional<std::string> level2(const dataio::Card& c, std::size_t box, const std::string& truth,
                                  std::mt19937_64& rng) {
  const std::size_t n = c.items.size();
  if (n < 2) return std::nullopt;
  for (int i = 0; i < kLevel2Retries; ++i) {
    std::size_t other = pick(rng, n - 1);
    if (other >= box) ++other;
    if (c.items[other].caption != truth) return c.items[other].caption;
  }
  return std::nullopt;
}

std::optional<std::string> level3(const dataio::Card& c, std::size_t box, const std::string& truth,
                                  std::mt19937_64& rng) {
  const std::vector<dataio::TextBox> boxes = c.boxes();
  const encoders::Neighbors nb = encoders::select_neighbors(boxes, box);
  std::vector<std::size_t> cand;
  if (nb.prev) cand.push_back(*nb.prev);
  if (nb.next) cand.push_back(*nb.next);
  if (cand.empty()) return std::nullopt;
  const std::size_t first = cand.size() == 1 ? 0 : pick(rng, 2);
  for (std::size_t j = 0; j < cand.size(); ++j) {
    const std::string& cap = c.items[cand[(first + j) % cand.size()]].caption;
    if (cap != truth) return cap;
  }
  return std::nullopt;
}

}  // namespace

CmSample make_cm_sample(std::span<const dataio::Card> dataset, std::size_t card, std::size_t box,
                        std::mt19937_64& rng, const Schedule& mix, double replace_prob) {
  if (card >= dataset.size()) throw std::out_of_range("make_cm_sample: card index out of range");
  const dataio::Card& c = dataset[card];
  if (c.items.size() < 2) throw std::invalid_argument("make_cm_sample: card " + c.id + " has fewer than 2 captions");
  if (box >= c.items.size()) throw std::out_of_range("make_cm_sample: box index out of range");
  const std::string& truth = c.items[box].caption;

  if (uniform(rng) >= replace_prob) return {truth, 1, Level::kPositive};

  const double u = uniform(rng);
  Level level = u < mix.p1 ? Level::kLevel1 : (u < mix.p1 + mix.p2 ? Level::kLevel2 : Level::kLevel3);

  if (level == Level::kLevel3) {
    if (auto cap = level3(c, box, truth, rng)) return {*cap, 0, Level::kLevel3};
    level = Level::kLevel2;
  }
  const bool tried_level2 = level == Level::kLevel2;
  if (tried_level2) {
    if (auto cap = level2(c, box, truth, rng)) return {*cap, 0, Level::kLevel2};
  }
  if (auto cap = level1(dataset, card, truth, rng)) return {*cap, 0, Level::kLevel1};
  if (!tried_level2) {
    if (auto cap = level2(c, box, truth, rng)) return {*cap, 0, Level::kLevel2};
  }
  // No caption anywhere differs from the ground truth; the pair can only be positive.
  return {truth, 1, Level::kPositive};
}

}  // namespace boxcap::curriculum
