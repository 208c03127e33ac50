#include "boxcap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "boxcap/neighbors.hpp"
#include "boxcap/textcodec.hpp"

namespace boxcap::synth {

using dataio::TextBox;

Zone zone_of(const TextBox& box) {
  constexpr double eps = 1e-9;
  if (box.y_max <= 0.25 + eps) return Zone::kTop;
  if (box.y_min >= 0.75 - eps) return Zone::kBottom;
  return Zone::kProduct;
}

namespace {

std::string numbered(std::string_view stem, int i) {
  std::ostringstream os;
  os << stem << (i < 10 ? "0" : "") << i;
  return os.str();
}

}  // namespace

std::string category_token(int category) { return "cat" + std::to_string(category); }
std::string brand_token(int i) { return numbered("brand", i); }
std::string selling_token(int i) { return numbered("sell", i); }
std::string feature_token(int i) { return numbered("feat", i); }

int caption_length(const TextBox& box) {
  return static_cast<int>(std::clamp<long>(std::lround(box.aspect_ratio()), 2, 10));
}

std::string format_info(const CardAttributes& a) {
  std::ostringstream os;
  os << category_token(a.category) << ' ' << a.brands[0] << ' ' << a.brands[1] << " [SEP] "
     << a.selling_points[0] << ' ' << a.selling_points[1] << " [SEP] " << a.features[0] << ' '
     << a.features[1];
  return os.str();
}

CardAttributes parse_info(std::string_view info) {
  const std::vector<std::string> u = textcodec::split_units(info);
  if (u.size() != 9 || u[3] != "[SEP]" || u[6] != "[SEP]" || u[0].rfind("cat", 0) != 0)
    throw std::invalid_argument("not a synthetic info string: '" + std::string(info) + "'");
  CardAttributes a;
  try {
    a.category = std::stoi(u[0].substr(3));
  } catch (const std::exception&) {
    throw std::invalid_argument("bad category token '" + u[0] + "'");
  }
  if (a.category < 0 || a.category >= kNumCategories)
    throw std::invalid_argument("category out of range in '" + u[0] + "'");
  a.brands = {u[1], u[2]};
  a.selling_points = {u[4], u[5]};
  a.features = {u[7], u[8]};
  return a;
}

int zone_ordinal(std::span<const TextBox> boxes, std::size_t i) {
  const Zone z = zone_of(boxes[i]);
  const double si = boxes[i].top_left_sum();
  int k = 0;
  for (std::size_t j = 0; j < boxes.size(); ++j) {
    if (j == i || zone_of(boxes[j]) != z) continue;
    const double sj = boxes[j].top_left_sum();
    if (sj < si || (sj == si && j < i)) ++k;
  }
  return k;
}

bool in_ordered_zone(std::span<const TextBox> boxes, std::size_t i) {
  const Zone z = zone_of(boxes[i]);
  for (std::size_t j = 0; j < boxes.size(); ++j)
    if (j != i && zone_of(boxes[j]) == z) return true;
  return false;
}

std::vector<std::string> derive_captions(std::span<const TextBox> boxes, const CardAttributes& a) {
  std::vector<std::string> out;
  out.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const int k = zone_ordinal(boxes, i) % kItemsPerList;
    const auto len = static_cast<std::size_t>(caption_length(boxes[i]));
    std::vector<std::string> tokens;
    std::string_view filler;
    switch (zone_of(boxes[i])) {
      case Zone::kTop:
        tokens = {a.brands[static_cast<std::size_t>(k)]};
        filler = kTopFiller;
        break;
      case Zone::kProduct:
        tokens = {std::string(kColorTokens[static_cast<std::size_t>(a.category)]),
                  a.features[static_cast<std::size_t>(k)]};
        filler = kProductFiller;
        break;
      case Zone::kBottom:
        tokens = {a.selling_points[static_cast<std::size_t>(k)]};
        filler = kBottomFiller;
        break;
    }
    while (tokens.size() < len) tokens.emplace_back(filler);
    tokens.resize(len);
    out.push_back(textcodec::join_units(tokens));
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  // Inclusive range; modulo keeps the stream identical across standard libraries.
  int range(int lo, int hi) { return lo + static_cast<int>(gen_() % static_cast<std::uint64_t>(hi - lo + 1)); }
  bool coin() { return range(0, 1) == 1; }

 private:
  std::mt19937_64 gen_;
};

// Lattice rectangle [c0, c1) x [r0, r1) in cells of 1/8.
struct Cells {
  int c0, r0, c1, r1;
  bool overlaps(const Cells& o) const { return c0 < o.c1 && o.c0 < c1 && r0 < o.r1 && o.r0 < r1; }
  TextBox box() const {
    constexpr double s = 1.0 / kLatticeCells;
    return {c0 * s, r0 * s, c1 * s, r1 * s};
  }
};

constexpr Cells kProductRegion{3, 2, 6, 6};

constexpr std::array<Rgb, 6> kBackgrounds = {{
    {0.95, 0.95, 0.90}, {0.20, 0.20, 0.25}, {0.90, 0.85, 0.70},
    {0.70, 0.85, 0.95}, {0.30, 0.35, 0.20}, {0.95, 0.80, 0.85},
}};

// Short bands keep the filler words from swamping the item words in Div@1.
Cells band_box(Rng& rng, int first_row) {
  const int w = rng.range(2, 4);
  const int x0 = rng.range(0, kLatticeCells - w);
  const int row = first_row + rng.range(0, 1);
  return {x0, row, x0 + w, row + 1};
}

// Both product-zone boxes sit on the same side of the product region.
Cells product_box(Rng& rng, int column) {
  const int h = rng.range(2, 4);
  const int y0 = rng.range(2, 6 - h);
  return {column, y0, column + 1, y0 + h};
}

// Partner boxes of a zone must be each other's strict nearest previous/next neighbor.
bool neighbors_reveal_order(const std::vector<TextBox>& boxes) {
  for (std::size_t a = 0; a < boxes.size(); ++a) {
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      if (a == b || zone_of(boxes[a]) != zone_of(boxes[b])) continue;
      if (!(boxes[a].top_left_sum() < boxes[b].top_left_sum())) continue;
      const auto nb = encoders::select_neighbors(boxes, b, 2);
      const auto na = encoders::select_neighbors(boxes, a, 2);
      if (nb.prev.empty() || nb.prev[0] != a || na.next.empty() || na.next[0] != b) return false;
      const double d = encoders::center_distance2(boxes[a], boxes[b]);
      if (nb.prev.size() > 1 && !(encoders::center_distance2(boxes[nb.prev[1]], boxes[b]) > d)) return false;
      if (na.next.size() > 1 && !(encoders::center_distance2(boxes[na.next[1]], boxes[a]) > d)) return false;
    }
  }
  return true;
}

std::vector<Cells> sample_layout(Rng& rng) {
  // A zone holds two boxes three times out of four.
  const auto zone_size = [&rng] { return rng.range(0, 3) == 0 ? 1 : 2; };
  const int n_top = zone_size(), n_prod = zone_size(), n_bot = zone_size();
  for (int attempt = 0; attempt < 100000; ++attempt) {
    std::vector<Cells> cells;
    for (int i = 0; i < n_top; ++i) cells.push_back(band_box(rng, 0));
    const bool left = rng.coin();
    std::vector<int> columns = left ? std::vector<int>{0, 1, 2} : std::vector<int>{6, 7};
    for (int i = 0; i < n_prod; ++i) {
      const int pick = rng.range(0, static_cast<int>(columns.size()) - 1);
      cells.push_back(product_box(rng, columns[static_cast<std::size_t>(pick)]));
      columns.erase(columns.begin() + pick);
    }
    for (int i = 0; i < n_bot; ++i) cells.push_back(band_box(rng, 6));

    bool ok = true;
    for (std::size_t i = 0; i < cells.size() && ok; ++i)
      for (std::size_t j = 0; j < i && ok; ++j)
        ok = !cells[i].overlaps(cells[j]) &&
             (cells[i].c0 + cells[i].r0) != (cells[j].c0 + cells[j].r0);
    if (!ok) continue;
    std::vector<TextBox> boxes;
    for (const Cells& c : cells) boxes.push_back(c.box());
    if (!neighbors_reveal_order(boxes)) continue;

    for (std::size_t i = cells.size(); i > 1; --i)
      std::swap(cells[i - 1], cells[static_cast<std::size_t>(rng.range(0, static_cast<int>(i) - 1))]);
    return cells;
  }
  throw std::runtime_error("synth: could not sample a layout");
}

std::vector<Cells> sample_decoys(Rng& rng, const std::vector<Cells>& taken) {
  std::vector<Cells> decoys;
  const int want = rng.range(1, 3);
  for (int attempt = 0; attempt < 200 && static_cast<int>(decoys.size()) < want; ++attempt) {
    Cells c{};
    switch (rng.range(0, 2)) {
      case 0: c = band_box(rng, 0); break;
      case 1: c = band_box(rng, 6); break;
      default: c = product_box(rng, rng.coin() ? rng.range(0, 2) : rng.range(6, 7)); break;
    }
    bool free = !c.overlaps(kProductRegion);
    for (const Cells& t : taken) free = free && !c.overlaps(t);
    for (const Cells& t : decoys) free = free && !c.overlaps(t);
    if (free) decoys.push_back(c);
  }
  return decoys;
}

void fill(Image& img, const Cells& c, const Rgb& color) {
  constexpr int px = kImageSize / kLatticeCells;
  for (int y = c.r0 * px; y < c.r1 * px; ++y)
    for (int x = c.c0 * px; x < c.c1 * px; ++x) img.set_rgb(y, x, color.r, color.g, color.b);
}

// Stand-in for rendered text: a caption-dependent ink pattern inside the box.
void ink(Image& img, const Cells& c, const std::string& caption) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : caption) h = (h ^ ch) * 1099511628211ULL;
  constexpr int px = kImageSize / kLatticeCells;
  for (int y = c.r0 * px; y < c.r1 * px; ++y)
    for (int x = c.c0 * px; x < c.c1 * px; ++x) {
      const bool dark = ((static_cast<std::uint64_t>(x) * 7 + static_cast<std::uint64_t>(y) * 13 + h) % 5) < 2;
      const double v = dark ? 0.08 : 0.98;
      img.set_rgb(y, x, v, v, v);
    }
}

std::array<std::string, kItemsPerList> pick_two(Rng& rng, std::string (*name)(int)) {
  const int a = rng.range(0, kPoolSize - 1);
  int b = rng.range(0, kPoolSize - 2);
  if (b >= a) ++b;
  return {name(a), name(b)};
}

}  // namespace

dataio::Card synth_card(std::uint64_t seed, std::size_t index) {
  Rng rng(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(index)));

  CardAttributes attrs;
  attrs.category = rng.range(0, kNumCategories - 1);
  attrs.brands = pick_two(rng, brand_token);
  attrs.selling_points = pick_two(rng, selling_token);
  attrs.features = pick_two(rng, feature_token);

  const std::vector<Cells> layout = sample_layout(rng);
  const std::vector<Cells> decoys = sample_decoys(rng, layout);

  std::vector<TextBox> boxes;
  for (const Cells& c : layout) boxes.push_back(c.box());
  const std::vector<std::string> captions = derive_captions(boxes, attrs);

  Image img(kImageSize, kImageSize);
  fill(img, {0, 0, 8, 2}, kBackgrounds[static_cast<std::size_t>(rng.range(0, 5))]);
  fill(img, {0, 2, 8, 6}, kBackgrounds[static_cast<std::size_t>(rng.range(0, 5))]);
  fill(img, {0, 6, 8, 8}, kBackgrounds[static_cast<std::size_t>(rng.range(0, 5))]);
  fill(img, kProductRegion, kCategoryColors[static_cast<std::size_t>(attrs.category)]);
  for (const Cells& d : decoys) fill(img, d, {dataio::kMaskValue, dataio::kMaskValue, dataio::kMaskValue});
  for (std::size_t i = 0; i < layout.size(); ++i) ink(img, layout[i], captions[i]);

  dataio::Card card;
  card.id = "syn" + std::to_string(seed) + "-" + std::to_string(index);
  card.image = std::move(img);
  card.info = format_info(attrs);
  card.category = attrs.category;
  for (std::size_t i = 0; i < boxes.size(); ++i) card.items.push_back({boxes[i], captions[i]});
  return card;
}

dataio::DatasetSplit synth_cards(std::size_t n, std::uint64_t seed, dataio::Split split) {
  if (n < 1) throw std::invalid_argument("synth_cards: n must be at least 1");
  dataio::DatasetSplit out;
  out.split = split;
  out.cards.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.cards.push_back(synth_card(seed, i));
  return out;
}

}  // namespace boxcap::synth
