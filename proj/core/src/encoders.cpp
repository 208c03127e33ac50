#include "boxcap/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace boxcap::encoders {
namespace {

Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix zeros(Eigen::Index rows, Eigen::Index cols) { return Matrix::Zero(rows, cols); }

constexpr double kEmbedStd = 0.02;

}  // namespace

EncoderParams::EncoderParams(const ModelConfig& cfg, std::mt19937_64& rng) {
  const Eigen::Index d = cfg.width, half = d / 2, k = cfg.grid;
  backbone_w1 = {"backbone.w1", normal(kCellFeatures, d, 1.0 / std::sqrt(double(kCellFeatures)), rng)};
  backbone_b1 = {"backbone.b1", zeros(1, d)};
  backbone_w2 = {"backbone.w2", normal(d, d, 1.0 / std::sqrt(double(d)), rng)};
  backbone_b2 = {"backbone.b2", zeros(1, d)};
  emb_h = {"spatial.emb_h", normal(k, half, kEmbedStd, rng)};
  emb_v = {"spatial.emb_v", normal(k, half, kEmbedStd, rng)};
  seg_image = {"segment.image", normal(1, d, kEmbedStd, rng)};
  seg_location = {"segment.location", normal(1, d, kEmbedStd, rng)};
  seg_info = {"segment.info", normal(1, d, kEmbedStd, rng)};
  seg_caption = {"segment.caption", normal(1, d, kEmbedStd, rng)};
  position = {"position", normal(cfg.position_rows(), d, kEmbedStd, rng)};
  null_neighbor = {"location.null", normal(1, 2 * d, kEmbedStd, rng)};
  loc_w1 = {"location.w1", normal(cfg.neighbor_slots() * 2 * d, half, 1.0 / std::sqrt(double(cfg.neighbor_slots() * 2 * d)), rng)};
  loc_w2 = {"location.w2", normal(2 * d, half, 1.0 / std::sqrt(double(2 * d)), rng)};
  word = {"word", normal(cfg.vocab, d, kEmbedStd, rng)};
  placeholder_image = {"placeholder.image", normal(1, d, kEmbedStd, rng)};
  placeholder_location = {"placeholder.location", normal(1, d, kEmbedStd, rng)};
  placeholder_info = {"placeholder.info", normal(1, d, kEmbedStd, rng)};
}

std::vector<Parameter*> EncoderParams::all() {
  return {&backbone_w1, &backbone_b1, &backbone_w2, &backbone_b2, &emb_h, &emb_v,
          &seg_image, &seg_location, &seg_info, &seg_caption, &position, &null_neighbor,
          &loc_w1, &loc_w2, &word, &placeholder_image, &placeholder_location, &placeholder_info};
}

Matrix pool_cells(const Image& image, int k) {
  if (k < 1) throw std::invalid_argument("pool_cells: grid size must be positive");
  if (image.height() < k || image.width() < k)
    throw std::invalid_argument("visual backbone: image " + std::to_string(image.width()) + "x" +
                                std::to_string(image.height()) + " is smaller than the " +
                                std::to_string(k) + "x" + std::to_string(k) + " grid");
  Matrix out(k * k, kCellFeatures);
  const int H = image.height(), W = image.width();
  auto mean_rgb = [&](int y0, int y1, int x0, int x1, double* dst) {
    double s[3] = {0, 0, 0};
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        for (int c = 0; c < 3; ++c) s[c] += image.at(y, x, c);
    const double n = double(y1 - y0) * double(x1 - x0);
    for (int c = 0; c < 3; ++c) dst[c] = s[c] / n;
  };
  for (int r = 0; r < k; ++r) {
    const int y0 = r * H / k, y1 = (r + 1) * H / k, ym = (y0 + y1) / 2;
    for (int c = 0; c < k; ++c) {
      const int x0 = c * W / k, x1 = (c + 1) * W / k, xm = (x0 + x1) / 2;
      double* row = out.row(r * k + c).data();
      mean_rgb(y0, y1, x0, x1, row);
      const int ys[3] = {y0, ym, y1}, xs[3] = {x0, xm, x1};
      for (int q = 0; q < 4; ++q) {
        const int qy = q / 2, qx = q % 2;
        double* dst = row + 3 + 3 * q;
        if (ys[qy] == ys[qy + 1] || xs[qx] == xs[qx + 1]) {
          std::copy(row, row + 3, dst);
        } else {
          mean_rgb(ys[qy], ys[qy + 1], xs[qx], xs[qx + 1], dst);
        }
      }
    }
  }
  return out;
}

Var visual_backbone(Tape& tape, EncoderParams& p, const Matrix& cells) {
  Var x = tape.constant(cells);
  Var h = ops::gelu(ops::linear(x, tape.param(p.backbone_w1), tape.param(p.backbone_b1)));
  return ops::linear(h, tape.param(p.backbone_w2), tape.param(p.backbone_b2));
}

Matrix visual_backbone(EncoderParams& p, const Image& image, int k) {
  Tape tape;
  return visual_backbone(tape, p, pool_cells(image, k)).value();
}

Var encode_image(Tape& tape, EncoderParams& p, const Var& grid_features, int k) {
  const Eigen::Index cells = Eigen::Index(k) * k;
  if (grid_features.rows() % cells != 0)
    throw std::invalid_argument("encode_image: rows must be a multiple of k*k");
  std::vector<Eigen::Index> xs(static_cast<std::size_t>(grid_features.rows()));
  std::vector<Eigen::Index> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto cell = static_cast<Eigen::Index>(i) % cells;
    xs[i] = cell % k;
    ys[i] = cell / k;
  }
  const Var parts[] = {ops::gather_rows(tape.param(p.emb_h), xs), ops::gather_rows(tape.param(p.emb_v), ys)};
  Var spatial = ops::concat_cols(parts);
  return ops::add_row(ops::add(grid_features, spatial), tape.param(p.seg_image));
}

GridCorners box_to_grid(const dataio::TextBox& box, int k) {
  auto idx = [k](double c) {
    const auto i = static_cast<int>(std::floor(c * k));
    return std::clamp(i, 0, k - 1);
  };
  return {{idx(box.x_min), idx(box.y_min)}, {idx(box.x_max), idx(box.y_max)}};
}

LocationQuery make_location_query(NeighborMode mode, std::span<const dataio::TextBox> boxes,
                                  std::size_t i, std::mt19937_64* rng) {
  if (i >= boxes.size()) throw std::out_of_range("make_location_query: box index out of range");
  LocationQuery q;
  q.box = boxes[i];
  switch (mode) {
    case NeighborMode::kNone:
      q.slots = {std::nullopt, std::nullopt};
      break;
    case NeighborMode::kTop1: {
      const Neighbors n = select_neighbors(boxes, i);
      q.slots = {n.prev ? std::optional(boxes[*n.prev]) : std::nullopt,
                 n.next ? std::optional(boxes[*n.next]) : std::nullopt};
      break;
    }
    case NeighborMode::kTop2: {
      const NeighborLists n = select_neighbors(boxes, i, 2);
      for (const auto* list : {&n.prev, &n.next})
        for (std::size_t s = 0; s < 2; ++s)
          q.slots.push_back(s < list->size() ? std::optional(boxes[(*list)[s]]) : std::nullopt);
      break;
    }
    case NeighborMode::kRandom2: {
      if (!rng) throw std::invalid_argument("make_location_query: random2 neighbors need an rng");
      auto unit = [rng] { return static_cast<double>((*rng)() >> 11) * 0x1.0p-53; };
      for (int s = 0; s < 2; ++s) {
        dataio::TextBox b;
        do {
          const double xa = unit(), xb = unit(), ya = unit(), yb = unit();
          b = {std::min(xa, xb), std::min(ya, yb), std::max(xa, xb), std::max(ya, yb)};
        } while (!b.valid());
        q.slots.emplace_back(b);
      }
      break;
    }
  }
  return q;
}

Var encode_location(Tape& tape, EncoderParams& p, std::span<const LocationQuery> queries, int k) {
  if (queries.empty()) throw std::invalid_argument("encode_location: no queries");
  const std::size_t nslots = queries.front().slots.size();
  const auto expected_slots = static_cast<std::size_t>(p.loc_w1.value.rows() / p.null_neighbor.value.cols());
  if (nslots != expected_slots)
    throw std::invalid_argument("encode_location: query has " + std::to_string(nslots) +
                                " neighbor slots, W1 expects " + std::to_string(expected_slots));

  // Every distinct box occurrence becomes one row of corner embeddings; row M is e_null.
  std::vector<Eigen::Index> x0, y0, x1, y1;
  auto add_box = [&](const dataio::TextBox& b) {
    const GridCorners g = box_to_grid(b, k);
    x0.push_back(g.top_left.x);
    y0.push_back(g.top_left.y);
    x1.push_back(g.bottom_right.x);
    y1.push_back(g.bottom_right.y);
    return static_cast<Eigen::Index>(x0.size() - 1);
  };
  std::vector<Eigen::Index> cur_rows;
  std::vector<std::vector<Eigen::Index>> slot_rows(nslots);
  std::vector<std::size_t> null_fixups;
  for (const LocationQuery& q : queries) {
    if (q.slots.size() != nslots) throw std::invalid_argument("encode_location: inconsistent slot counts");
    cur_rows.push_back(add_box(q.box));
    for (std::size_t s = 0; s < nslots; ++s)
      slot_rows[s].push_back(q.slots[s] ? add_box(*q.slots[s]) : Eigen::Index(-1));
  }
  const auto null_row = static_cast<Eigen::Index>(x0.size());
  for (auto& rows : slot_rows)
    for (Eigen::Index& r : rows)
      if (r < 0) r = null_row;

  Var eh = tape.param(p.emb_h), ev = tape.param(p.emb_v);
  const Var corner_parts[] = {ops::gather_rows(eh, x0), ops::gather_rows(ev, y0),
                              ops::gather_rows(eh, x1), ops::gather_rows(ev, y1)};
  const Var table_parts[] = {ops::concat_cols(corner_parts), tape.param(p.null_neighbor)};
  Var table = ops::concat_rows(table_parts);

  Var e_cur = ops::gather_rows(table, cur_rows);
  std::vector<Var> slots;
  for (const auto& rows : slot_rows) slots.push_back(ops::gather_rows(table, rows));
  Var context = ops::linear(ops::concat_cols(slots), tape.param(p.loc_w1));
  Var current = ops::linear(e_cur, tape.param(p.loc_w2));
  const Var halves[] = {context, current};
  return ops::add_row(ops::concat_cols(halves), tape.param(p.seg_location));
}

Var encode_tokens(Tape& tape, EncoderParams& p, std::span<const std::vector<int>> sequences,
                  TokenSegment segment) {
  std::vector<Eigen::Index> ids, pos;
  for (const auto& seq : sequences) {
    if (static_cast<Eigen::Index>(seq.size()) > p.position.value.rows())
      throw std::invalid_argument("encode_tokens: sequence of " + std::to_string(seq.size()) +
                                  " tokens exceeds the position table");
    for (std::size_t i = 0; i < seq.size(); ++i) {
      ids.push_back(seq[i]);
      pos.push_back(static_cast<Eigen::Index>(i));
    }
  }
  if (ids.empty()) return tape.constant(Matrix(0, p.word.value.cols()));
  Var tokens = ops::add(ops::gather_rows(tape.param(p.word), ids), ops::gather_rows(tape.param(p.position), pos));
  Parameter& seg = segment == TokenSegment::kInfo ? p.seg_info : p.seg_caption;
  return ops::add_row(tokens, tape.param(seg));
}

Matrix encode_location(EncoderParams& p, const LocationQuery& query, int k) {
  Tape tape;
  return encode_location(tape, p, std::span(&query, 1), k).value();
}

Matrix encode_info(EncoderParams& p, std::span<const int> ids) {
  Tape tape;
  const std::vector<std::vector<int>> seqs = {std::vector<int>(ids.begin(), ids.end())};
  return encode_tokens(tape, p, seqs, TokenSegment::kInfo).value();
}

}  // namespace boxcap::encoders
