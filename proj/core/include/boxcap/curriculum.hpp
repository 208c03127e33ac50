#pragma once

// Negative sampling for caption matching and its step-dependent level mixture.

#include <cstdint>
#include <random>
#include <span>
#include <string>

#include "boxcap/dataio.hpp"

namespace boxcap::curriculum {

inline constexpr double kReplaceProb = 0.6;
/// Level-II draws that may hit the ground-truth string before falling back to Level-I.
inline constexpr int kLevel2Retries = 10;

struct Schedule {
  double p1 = 1.0;
  double p2 = 0.0;
  double p3 = 0.0;
};

/// p1 = min(1, 2 s^-0.2), p3 = min(1, s * 5000^-1.5); p1 shrinks to 1 - p3 when they overlap.
Schedule schedule(std::int64_t step);

enum class Level { kPositive, kLevel1, kLevel2, kLevel3 };
std::string to_string(Level l);

struct CmSample {
  std::string caption;
  int label = 1;
  /// The level actually used after any fallback.
  Level level = Level::kPositive;
};

/// Ground truth with probability 1 - replace_prob, otherwise a negative drawn at a level
/// chosen from `mix`. Level-I draws from any other card of `dataset`.
CmSample make_cm_sample(std::span<const dataio::Card> dataset, std::size_t card, std::size_t box,
                        std::mt19937_64& rng, const Schedule& mix, double replace_prob = kReplaceProb);

}  // namespace boxcap::curriculum
