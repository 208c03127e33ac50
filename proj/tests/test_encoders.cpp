#include <gtest/gtest.h>

#include <random>

#include "boxcap/encoders.hpp"
#include "boxcap/neighbors.hpp"
#include "oracles.hpp"

using namespace boxcap;
using namespace boxcap::encoders;
using dataio::TextBox;

namespace {

ModelConfig small_config(int d = 16, int k = 4) {
  ModelConfig cfg;
  cfg.width = d;
  cfg.heads = 2;
  cfg.grid = k;
  cfg.vocab = 12;
  cfg.layers = 1;
  return cfg;
}

// Random layouts on a coarse lattice so equal top-left sums and equal distances occur often.
std::vector<TextBox> random_layout(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(1, 8), cell(0, 7), span(1, 3);
  const int n = count(rng);
  std::vector<TextBox> out;
  while (static_cast<int>(out.size()) < n) {
    const int x = cell(rng), y = cell(rng);
    const int w = std::min(span(rng), 8 - x), h = std::min(span(rng), 8 - y);
    TextBox b{x / 8.0, y / 8.0, (x + w) / 8.0, (y + h) / 8.0};
    if (std::find(out.begin(), out.end(), b) == out.end()) out.push_back(b);
  }
  return out;
}

std::vector<oracle::Box> to_oracle(const std::vector<TextBox>& b) {
  std::vector<oracle::Box> out;
  for (const auto& x : b) out.push_back({x.x_min, x.y_min, x.x_max, x.y_max});
  return out;
}

}  // namespace

TEST(BoxToGrid, WholeImage) {
  EXPECT_EQ(box_to_grid({0, 0, 1, 1}, 8), (GridCorners{{0, 0}, {7, 7}}));
}

TEST(BoxToGrid, FloorPerCoordinate) {
  EXPECT_EQ(box_to_grid({0.5, 0.25, 0.75, 0.5}, 8), (GridCorners{{4, 2}, {6, 4}}));
  EXPECT_EQ(box_to_grid({0.124, 0.124, 0.126, 0.126}, 8), (GridCorners{{0, 0}, {1, 1}}));
}

TEST(BoxToGrid, MonotoneAndInRange) {
  int prev = 0;
  for (int i = 0; i <= 1000; ++i) {
    const double c = i / 1000.0;
    const int g = box_to_grid({c, c, c, c}, 8).top_left.x;
    EXPECT_GE(g, prev);
    EXPECT_GE(g, 0);
    EXPECT_LE(g, 7);
    prev = g;
  }
}

TEST(SelectNeighbors, DiagonalMiddle) {
  const std::vector<TextBox> b = {{0, 0, .2, .2}, {.4, .4, .6, .6}, {.8, .8, 1, 1}};
  EXPECT_EQ(select_neighbors(b, 1), (Neighbors{0, 2}));
}

TEST(SelectNeighbors, SingleBox) {
  const std::vector<TextBox> b = {{0, 0, .2, .2}};
  EXPECT_EQ(select_neighbors(b, 0), (Neighbors{std::nullopt, std::nullopt}));
}

TEST(SelectNeighbors, SmallestSumHasOnlyNext) {
  const std::vector<TextBox> b = {{.5, .5, .6, .6}, {0, 0, .1, .1}, {.1, .3, .2, .4}};
  const Neighbors n = select_neighbors(b, 1);
  EXPECT_FALSE(n.prev.has_value());
  EXPECT_EQ(n.next, 2u);
}

TEST(SelectNeighbors, EqualSumsAndDistancesBreakByIndex) {
  // Boxes 0 and 2 share box 1's top-left sum; box 0 is previous, box 2 next.
  const std::vector<TextBox> b = {{0.2, 0.0, 0.3, 0.1}, {0.1, 0.1, 0.2, 0.2}, {0.0, 0.2, 0.1, 0.3}};
  EXPECT_EQ(select_neighbors(b, 1), (Neighbors{0, 2}));
  // Two next boxes at the same distance: the smaller index wins.
  const std::vector<TextBox> c = {{0, 0, .1, .1}, {.4, .2, .5, .3}, {.2, .4, .3, .5}};
  EXPECT_EQ(select_neighbors(c, 0).next, 1u);
}

TEST(SelectNeighbors, OutOfRange) {
  const std::vector<TextBox> b = {{0, 0, .2, .2}};
  EXPECT_THROW(select_neighbors(b, 1), std::out_of_range);
}

TEST(SelectNeighbors, AgreesWithBruteForceOnRandomLayouts) {
  std::mt19937_64 rng(1234);
  for (int t = 0; t < 1000; ++t) {
    const auto boxes = random_layout(rng);
    const auto ob = to_oracle(boxes);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const auto [p, n] = oracle::neighbors(ob, i);
      const Neighbors got = select_neighbors(boxes, i);
      ASSERT_EQ(got.prev, p) << "layout " << t << " box " << i;
      ASSERT_EQ(got.next, n) << "layout " << t << " box " << i;
      const NeighborLists lists = select_neighbors(boxes, i, 1);
      EXPECT_EQ(lists.prev.empty() ? std::nullopt : std::optional<std::size_t>(lists.prev[0]), p);
      EXPECT_EQ(lists.next.empty() ? std::nullopt : std::optional<std::size_t>(lists.next[0]), n);
    }
  }
}

TEST(VisualBackbone, ShapesAndDeterminism) {
  const ModelConfig cfg = small_config(16, 8);
  std::mt19937_64 rng(1);
  EncoderParams p(cfg, rng);
  Image img(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) img.set_rgb(y, x, x / 63.0, y / 63.0, 0.5);
  const Matrix a = visual_backbone(p, img, 8), b = visual_backbone(p, img, 8);
  EXPECT_EQ(a.rows(), 64);
  EXPECT_EQ(a.cols(), 16);
  EXPECT_EQ(a, b);
  const Matrix z = visual_backbone(p, Image(64, 64, 0.0), 8);
  EXPECT_TRUE(z.allFinite());
}

TEST(VisualBackbone, ImageSmallerThanGridIsAnError) {
  EXPECT_THROW(pool_cells(Image(7, 64), 8), std::invalid_argument);
  EXPECT_THROW(pool_cells(Image(64, 3), 8), std::invalid_argument);
  EXPECT_NO_THROW(pool_cells(Image(8, 8), 8));
}

TEST(PoolCells, CellAndQuadrantMeans) {
  Image img(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.set_rgb(y, x, y * 4 + x, 0, 0);
  const Matrix m = pool_cells(img, 2);
  // Cell (0,0) covers values 0,1,4,5.
  EXPECT_DOUBLE_EQ(m(0, 0), 2.5);
  EXPECT_DOUBLE_EQ(m(0, 3), 0.0);
  EXPECT_DOUBLE_EQ(m(0, 6), 1.0);
  EXPECT_DOUBLE_EQ(m(0, 9), 4.0);
  EXPECT_DOUBLE_EQ(m(0, 12), 5.0);
  // Cell (1,1) mean of 10,11,14,15.
  EXPECT_DOUBLE_EQ(m(3, 0), 12.5);
}

TEST(EncodeImage, ZeroFeaturesAndSegmentGiveSpatialEmbedding) {
  const ModelConfig cfg = small_config(8, 4);
  std::mt19937_64 rng(2);
  EncoderParams p(cfg, rng);
  p.seg_image.value.setZero();
  Tape tape;
  const Var v = tape.constant(Matrix::Zero(16, 8));
  const Matrix out = encode_image(tape, p, v, 4).value();
  ASSERT_EQ(out.rows(), 16);
  ASSERT_EQ(out.cols(), 8);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const int i = y * 4 + x;
      EXPECT_EQ(Matrix(out.row(i).leftCols(4)), Matrix(p.emb_h.value.row(x)));
      EXPECT_EQ(Matrix(out.row(i).rightCols(4)), Matrix(p.emb_v.value.row(y)));
    }
  // Same column (x = 1), rows 0 and 2: first half equal, second half differs.
  EXPECT_EQ(Matrix(out.row(1).leftCols(4)), Matrix(out.row(9).leftCols(4)));
  EXPECT_NE(Matrix(out.row(1).rightCols(4)), Matrix(out.row(9).rightCols(4)));
}

TEST(EncodeImage, FullScaleShape) {
  ModelConfig cfg = small_config(128, 8);
  cfg.heads = 4;
  std::mt19937_64 rng(3);
  EncoderParams p(cfg, rng);
  Tape tape;
  const Var g = visual_backbone(tape, p, pool_cells(Image(64, 64, 0.3), 8));
  const Var out = encode_image(tape, p, g, 8);
  EXPECT_EQ(out.rows(), 64);
  EXPECT_EQ(out.cols(), 128);
}

TEST(EncodeLocation, ShapesOfProjections) {
  ModelConfig cfg = small_config(128, 8);
  cfg.heads = 4;
  std::mt19937_64 rng(4);
  EncoderParams p(cfg, rng);
  EXPECT_EQ(p.loc_w1.value.rows(), 4 * 128);
  EXPECT_EQ(p.loc_w1.value.cols(), 64);
  EXPECT_EQ(p.loc_w2.value.rows(), 2 * 128);
  EXPECT_EQ(p.loc_w2.value.cols(), 64);
  EXPECT_EQ(p.null_neighbor.value.cols(), 2 * 128);
  const std::vector<TextBox> boxes = {{0, 0, .2, .2}, {.4, .4, .6, .6}, {.8, .8, 1, 1}};
  const Matrix l = encode_location(p, make_location_query(NeighborMode::kTop1, boxes, 1), 8);
  EXPECT_EQ(l.rows(), 1);
  EXPECT_EQ(l.cols(), 128);
}

TEST(EncodeLocation, ZeroW1AndSegmentZeroFirstHalf) {
  const ModelConfig cfg = small_config(16, 4);
  std::mt19937_64 rng(5);
  EncoderParams p(cfg, rng);
  p.loc_w1.value.setZero();
  p.seg_location.value.setZero();
  const std::vector<TextBox> boxes = {{0, 0, .2, .2}, {.4, .4, .6, .6}};
  const Matrix l = encode_location(p, make_location_query(NeighborMode::kTop1, boxes, 0), 4);
  EXPECT_TRUE(l.leftCols(8).isZero(0.0));
  EXPECT_FALSE(l.rightCols(8).isZero(0.0));
}

TEST(EncodeLocation, NullNeighborsAreFiniteAndDeterministic) {
  const ModelConfig cfg = small_config(16, 4);
  std::mt19937_64 rng(6);
  EncoderParams p(cfg, rng);
  const std::vector<TextBox> one = {{.3, .3, .5, .4}};
  const LocationQuery q = make_location_query(NeighborMode::kTop1, one, 0);
  ASSERT_EQ(q.slots.size(), 2u);
  EXPECT_FALSE(q.slots[0].has_value());
  EXPECT_FALSE(q.slots[1].has_value());
  const Matrix a = encode_location(p, q, 4), b = encode_location(p, q, 4);
  EXPECT_TRUE(a.allFinite());
  EXPECT_EQ(a, b);
  // The no-context mode always uses null slots, so it matches a lone box.
  const std::vector<TextBox> three = {{0, 0, .2, .2}, {.3, .3, .5, .4}, {.8, .8, 1, 1}};
  EXPECT_EQ(encode_location(p, make_location_query(NeighborMode::kNone, three, 1), 4), a);
}

TEST(EncodeLocation, DependsOnNeighborsOnlyThroughGridIndices) {
  const ModelConfig cfg = small_config(16, 4);
  std::mt19937_64 rng(7);
  EncoderParams p(cfg, rng);
  const std::vector<TextBox> a = {{0.0, 0.0, 0.2, 0.2}, {.4, .4, .6, .6}, {.8, .8, 1, 1}};
  // Same grid cells for the neighbors (k = 4: cell width 0.25).
  const std::vector<TextBox> b = {{0.01, 0.02, 0.21, 0.22}, {.4, .4, .6, .6}, {.76, .77, .99, 1}};
  const Matrix la = encode_location(p, make_location_query(NeighborMode::kTop1, a, 1), 4);
  const Matrix lb = encode_location(p, make_location_query(NeighborMode::kTop1, b, 1), 4);
  EXPECT_EQ(la, lb);
  const std::vector<TextBox> c = {{0.3, 0.0, 0.4, 0.2}, {.4, .4, .6, .6}, {.8, .8, 1, 1}};
  EXPECT_NE(la, encode_location(p, make_location_query(NeighborMode::kTop1, c, 1), 4));
}

TEST(EncodeLocation, Top2AndRandom2Slots) {
  const std::vector<TextBox> b = {{0, 0, .1, .1}, {.1, .1, .2, .2}, {.3, .3, .4, .4}, {.5, .5, .6, .6}, {.7, .7, .8, .8}};
  const LocationQuery q = make_location_query(NeighborMode::kTop2, b, 2);
  ASSERT_EQ(q.slots.size(), 4u);
  EXPECT_EQ(*q.slots[0], b[1]);
  EXPECT_EQ(*q.slots[1], b[0]);
  EXPECT_EQ(*q.slots[2], b[3]);
  EXPECT_EQ(*q.slots[3], b[4]);
  EXPECT_THROW(make_location_query(NeighborMode::kRandom2, b, 2), std::invalid_argument);
  std::mt19937_64 r1(9), r2(9);
  const LocationQuery x = make_location_query(NeighborMode::kRandom2, b, 2, &r1);
  const LocationQuery y = make_location_query(NeighborMode::kRandom2, b, 2, &r2);
  ASSERT_EQ(x.slots.size(), 2u);
  EXPECT_TRUE(x.slots[0]->valid());
  EXPECT_EQ(*x.slots[0], *y.slots[0]);
  EXPECT_EQ(*x.slots[1], *y.slots[1]);
}

TEST(EncodeInfo, EmptyAndShapes) {
  const ModelConfig cfg = small_config(16, 4);
  std::mt19937_64 rng(8);
  EncoderParams p(cfg, rng);
  EXPECT_EQ(encode_info(p, std::vector<int>{}).rows(), 0);
  const std::vector<int> ids = {5, 6, 7};
  const Matrix m = encode_info(p, ids);
  EXPECT_EQ(m.rows(), 3);
  EXPECT_EQ(m.cols(), 16);
}

TEST(EncodeInfo, SameTokenWithoutPositionAndSegmentIsEqual) {
  const ModelConfig cfg = small_config(16, 4);
  std::mt19937_64 rng(9);
  EncoderParams p(cfg, rng);
  p.position.value.setZero();
  p.seg_info.value.setZero();
  const std::vector<int> ids = {7, 5, 7};
  const Matrix m = encode_info(p, ids);
  EXPECT_EQ(Matrix(m.row(0)), Matrix(m.row(2)));
  EXPECT_EQ(Matrix(m.row(0)), Matrix(p.word.value.row(7)));
}

TEST(EncodeTokens, TooLongSequenceIsAnError) {
  const ModelConfig cfg = small_config(16, 4);
  std::mt19937_64 rng(10);
  EncoderParams p(cfg, rng);
  Tape tape;
  const std::vector<std::vector<int>> seqs = {std::vector<int>(cfg.position_rows() + 1, 5)};
  EXPECT_THROW(encode_tokens(tape, p, seqs, TokenSegment::kInfo), std::invalid_argument);
}
