#pragma once

// Brute-force reference computations used by the unit and acceptance tests.
// Nothing here calls into the library code it checks; every rule is re-derived
// from its written definition with the most direct loops available.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using Tokens = std::vector<std::string>;

/// Whitespace tokenization. The toy corpora are ASCII so no CJK handling is needed.
inline Tokens words(const std::string& s) {
  std::istringstream is(s);
  Tokens out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

inline std::vector<Tokens> grams(const Tokens& t, int n) {
  std::vector<Tokens> out;
  for (int i = 0; i + n <= static_cast<int>(t.size()); ++i) out.emplace_back(t.begin() + i, t.begin() + i + n);
  return out;
}

inline int count_of(const std::vector<Tokens>& pool, const Tokens& g) {
  return static_cast<int>(std::count(pool.begin(), pool.end(), g));
}

/// Corpus BLEU: clipped n-gram matches summed over the corpus per order, geometric mean,
/// brevity penalty exp(1 - r/c) when the candidate corpus is not longer than the references.
inline double bleu(const std::vector<std::string>& pred, const std::vector<std::string>& ref, int n) {
  double c = 0, r = 0;
  std::vector<double> hit(n, 0), tot(n, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Tokens p = words(pred[i]), q = words(ref[i]);
    c += static_cast<double>(p.size());
    r += static_cast<double>(q.size());
    for (int m = 1; m <= n; ++m) {
      const auto pg = grams(p, m), rg = grams(q, m);
      // Visit each distinct candidate n-gram once.
      for (std::size_t a = 0; a < pg.size(); ++a) {
        if (std::find(pg.begin(), pg.begin() + static_cast<std::ptrdiff_t>(a), pg[a]) != pg.begin() + static_cast<std::ptrdiff_t>(a)) continue;
        const int cp = count_of(pg, pg[a]), cr = count_of(rg, pg[a]);
        hit[m - 1] += std::min(cp, cr);
        tot[m - 1] += cp;
      }
    }
  }
  if (c == 0) return 0.0;
  double prod = 1.0;
  for (int m = 0; m < n; ++m) {
    if (hit[m] == 0) return 0.0;
    prod *= hit[m] / tot[m];
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::pow(prod, 1.0 / n);
}

/// CIDEr with one reference per box: tf-idf vectors per order, idf = log(N / max(1, df)),
/// df = number of references containing the n-gram, cosine averaged over orders 1..4, x10.
inline double cider(const std::vector<std::string>& pred, const std::vector<std::string>& ref) {
  const double N = static_cast<double>(ref.size());
  double total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double box = 0;
    for (int m = 1; m <= 4; ++m) {
      const auto pg = grams(words(pred[i]), m), rg = grams(words(ref[i]), m);
      auto idf = [&](const Tokens& g) {
        int df = 0;
        for (const auto& rr : ref) df += count_of(grams(words(rr), m), g) > 0 ? 1 : 0;
        return std::log(N / std::max(1, df));
      };
      std::vector<Tokens> keys = pg;
      keys.insert(keys.end(), rg.begin(), rg.end());
      std::sort(keys.begin(), keys.end());
      keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
      double dot = 0, np = 0, nr = 0;
      for (const Tokens& g : keys) {
        const double w = idf(g);
        const double a = count_of(pg, g) * w, b = count_of(rg, g) * w;
        dot += a * b;
        np += a * a;
        nr += b * b;
      }
      if (np > 0 && nr > 0) box += dot / std::sqrt(np * nr);
    }
    total += box / 4;
  }
  return 10.0 * total / N;
}

/// Div@n: per card unique/total n-grams pooled over its captions, averaged over cards
/// that have any, x100. Returns -1 when no card has an n-gram.
inline double div(const std::vector<std::vector<std::string>>& cards, int n) {
  double sum = 0;
  int used = 0;
  for (const auto& card : cards) {
    std::vector<Tokens> all;
    for (const auto& c : card) {
      auto g = grams(words(c), n);
      all.insert(all.end(), g.begin(), g.end());
    }
    if (all.empty()) continue;
    std::vector<Tokens> uniq = all;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    sum += static_cast<double>(uniq.size()) / static_cast<double>(all.size());
    ++used;
  }
  return used == 0 ? -1.0 : 100.0 * sum / used;
}

struct Box {
  double x0, y0, x1, y1;
};

/// Neighbor rule by exhaustive comparison: j is previous to i iff (s_j, j) < (s_i, i)
/// lexicographically; the winner in each class minimizes (distance^2, index).
inline std::pair<std::optional<std::size_t>, std::optional<std::size_t>> neighbors(const std::vector<Box>& b,
                                                                                   std::size_t i) {
  auto s = [&](std::size_t k) { return b[k].x0 + b[k].y0; };
  auto d2 = [&](std::size_t k) {
    const double dx = (b[k].x0 + b[k].x1) / 2 - (b[i].x0 + b[i].x1) / 2;
    const double dy = (b[k].y0 + b[k].y1) / 2 - (b[i].y0 + b[i].y1) / 2;
    return dx * dx + dy * dy;
  };
  std::optional<std::size_t> prev, next;
  for (std::size_t j = 0; j < b.size(); ++j) {
    if (j == i) continue;
    const bool is_prev = std::make_pair(s(j), j) < std::make_pair(s(i), i);
    std::optional<std::size_t>& slot = is_prev ? prev : next;
    if (!slot || std::make_pair(d2(j), j) < std::make_pair(d2(*slot), *slot)) slot = j;
  }
  return {prev, next};
}

/// Schedule by the stated formulas.
inline std::array<double, 3> schedule(double step) {
  double p1 = std::min(1.0, 2.0 * std::pow(step, -0.2));
  const double p3 = std::min(1.0, step * std::pow(5000.0, -1.5));
  if (p1 + p3 > 1.0) p1 = 1.0 - p3;
  return {p1, 1.0 - p1 - p3, p3};
}

/// Synthetic captions from the written generator rules: zone by lattice band, k-th box of
/// a zone by ascending top-left sum takes item k, length clamp(round(aspect), 2, 10),
/// padded with the zone filler. `info` is "catC A0 A1 [SEP] B0 B1 [SEP] F0 F1".
inline std::vector<std::string> synth_captions(const std::vector<Box>& boxes, const std::string& info) {
  static const char* colors[] = {"red", "green", "blue", "yellow", "purple", "orange", "cyan", "pink"};
  const Tokens t = words(info);
  const int category = std::stoi(t.at(0).substr(3));
  auto zone = [](const Box& b) { return b.y1 <= 0.25 + 1e-9 ? 0 : (b.y0 >= 0.75 - 1e-9 ? 2 : 1); };
  std::vector<std::string> out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const int z = zone(boxes[i]);
    int rank = 0;
    for (std::size_t j = 0; j < boxes.size(); ++j) {
      if (j == i || zone(boxes[j]) != z) continue;
      const double sj = boxes[j].x0 + boxes[j].y0, si = boxes[i].x0 + boxes[i].y0;
      if (sj < si || (sj == si && j < i)) ++rank;
    }
    const int k = rank % 2;
    Tokens cap;
    std::string filler;
    if (z == 0) {
      cap = {t[1 + k]};
      filler = "tfill";
    } else if (z == 1) {
      cap = {colors[category], t[7 + k]};
      filler = "pfill";
    } else {
      cap = {t[4 + k]};
      filler = "bfill";
    }
    const double w = boxes[i].x1 - boxes[i].x0, h = boxes[i].y1 - boxes[i].y0;
    const int len = std::clamp(static_cast<int>(std::lround(std::max(w, h) / std::min(w, h))), 2, 10);
    while (static_cast<int>(cap.size()) < len) cap.push_back(filler);
    cap.resize(static_cast<std::size_t>(len));
    std::string s;
    for (std::size_t a = 0; a < cap.size(); ++a) s += (a ? " " : "") + cap[a];
    out.push_back(s);
  }
  return out;
}

/// Prefix-LM attention rule for one sample: context rows see context, caption row t sees
/// context and caption rows <= t, padding rows see nothing and are seen by nobody.
inline bool allowed(int ctx, int cap, int row, int col) {
  const int real = ctx + cap;
  if (row >= real || col >= real) return false;
  if (row < ctx) return col < ctx;
  return col <= row;
}

/// Random toy corpus: 1-5 cards of 1-4 boxes, captions of 1-6 words over {a..f}; a third
/// of the predictions copy their reference.
struct Corpus {
  std::vector<std::vector<std::string>> pred_cards, ref_cards;
  std::vector<std::string> pred, ref;
};

inline Corpus toy_corpus(std::mt19937_64& rng) {
  const char* alphabet[] = {"a", "b", "c", "d", "e", "f"};
  std::uniform_int_distribution<int> ncards(1, 5), nboxes(1, 4), len(1, 6), word(0, 5), coin(0, 2);
  auto sentence = [&] {
    std::string s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) s += (i ? " " : "") + std::string(alphabet[word(rng)]);
    return s;
  };
  Corpus c;
  const int cards = ncards(rng);
  for (int k = 0; k < cards; ++k) {
    std::vector<std::string> p, r;
    const int boxes = nboxes(rng);
    for (int b = 0; b < boxes; ++b) {
      r.push_back(sentence());
      p.push_back(coin(rng) == 0 ? r.back() : sentence());
    }
    c.pred.insert(c.pred.end(), p.begin(), p.end());
    c.ref.insert(c.ref.end(), r.begin(), r.end());
    c.pred_cards.push_back(p);
    c.ref_cards.push_back(r);
  }
  return c;
}

}  // namespace oracle
