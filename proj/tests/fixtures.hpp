#pragma once

#include <memory>
#include <random>
#include <vector>

#include "boxcap/net.hpp"
#include "boxcap/textcodec.hpp"

namespace fixtures {

/// Tiny model settings used by gradient checks.
inline boxcap::ModelConfig tiny_config() {
  boxcap::ModelConfig cfg;
  cfg.layers = 1;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.grid = 4;
  cfg.vocab = 20;
  cfg.max_caption_len = 5;
  cfg.max_info_len = 6;
  return cfg;
}

/// A random but well-formed sample: random pooled cells, a random layout around box 0,
/// random info and caption ids drawn from the non-control part of the vocabulary.
inline boxcap::net::SampleInput random_sample(const boxcap::ModelConfig& cfg, std::mt19937_64& rng, int info_len,
                                              int caption_len, int pad = 0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> tok(boxcap::textcodec::kSep, cfg.vocab - 1);
  auto cells = std::make_shared<boxcap::Matrix>(cfg.grid * cfg.grid, boxcap::encoders::kCellFeatures);
  for (Eigen::Index i = 0; i < cells->size(); ++i) cells->data()[i] = u(rng);
  std::vector<boxcap::dataio::TextBox> boxes;
  while (boxes.size() < 4) {
    const double x = 0.8 * u(rng), y = 0.8 * u(rng);
    boxes.push_back({x, y, x + 0.05 + 0.15 * u(rng), y + 0.05 + 0.15 * u(rng)});
  }
  boxcap::net::SampleInput s;
  s.cells = cells;
  s.location = boxcap::encoders::make_location_query(cfg.neighbors, boxes, 1, &rng);
  for (int i = 0; i < info_len; ++i) s.info.push_back(tok(rng));
  for (int i = 0; i < caption_len; ++i) s.caption.push_back(tok(rng));
  s.pad = pad;
  return s;
}

/// Moves every parameter away from its small initial scale so gradients are well above
/// finite-difference noise.
inline void randomize(boxcap::net::CaptionModel& model, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  for (auto* p : model.parameters())
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += d(rng);
}

}  // namespace fixtures
