#include "boxcap/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

namespace boxcap::evalsuite {
namespace {

using Units = std::vector<std::string>;
using NgramCounts = std::map<std::vector<std::string>, double>;

NgramCounts ngrams(const Units& u, int n) {
  NgramCounts c;
  if (static_cast<int>(u.size()) < n) return c;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= u.size(); ++i)
    c[Units(u.begin() + static_cast<std::ptrdiff_t>(i), u.begin() + static_cast<std::ptrdiff_t>(i) + n)] += 1.0;
  return c;
}

void check_corpus(std::span<const std::string> p, std::span<const std::string> r, const char* what) {
  if (p.empty()) throw std::invalid_argument(std::string(what) + ": empty corpus");
  if (p.size() != r.size())
    throw std::invalid_argument(std::string(what) + ": " + std::to_string(p.size()) + " predictions for " +
                                std::to_string(r.size()) + " references");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

double bleu_n(std::span<const std::string> predictions, std::span<const std::string> references, int n) {
  check_corpus(predictions, references, "bleu");
  if (n < 1) throw std::invalid_argument("bleu: order must be at least 1");
  std::vector<double> match(static_cast<std::size_t>(n), 0.0), total(static_cast<std::size_t>(n), 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const Units p = textcodec::split_units(predictions[i]);
    const Units r = textcodec::split_units(references[i]);
    cand_len += static_cast<double>(p.size());
    ref_len += static_cast<double>(r.size());
    for (int m = 1; m <= n; ++m) {
      const NgramCounts pc = ngrams(p, m), rc = ngrams(r, m);
      for (const auto& [g, c] : pc) {
        auto it = rc.find(g);
        match[static_cast<std::size_t>(m - 1)] += std::min(c, it == rc.end() ? 0.0 : it->second);
        total[static_cast<std::size_t>(m - 1)] += c;
      }
    }
  }
  if (cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int m = 0; m < n; ++m) {
    if (match[static_cast<std::size_t>(m)] == 0.0) return 0.0;
    log_sum += std::log(match[static_cast<std::size_t>(m)] / total[static_cast<std::size_t>(m)]);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / n);
}

double cider(std::span<const std::string> predictions, std::span<const std::string> references) {
  check_corpus(predictions, references, "cider");
  constexpr int kOrders = 4;
  const auto N = static_cast<double>(references.size());
  std::vector<std::vector<NgramCounts>> ref_grams(references.size()), pred_grams(predictions.size());
  std::vector<std::map<std::vector<std::string>, double>> df(kOrders);
  for (std::size_t i = 0; i < references.size(); ++i) {
    const Units r = textcodec::split_units(references[i]);
    const Units p = textcodec::split_units(predictions[i]);
    for (int m = 1; m <= kOrders; ++m) {
      ref_grams[i].push_back(ngrams(r, m));
      pred_grams[i].push_back(ngrams(p, m));
      for (const auto& [g, c] : ref_grams[i].back()) df[static_cast<std::size_t>(m - 1)][g] += 1.0;
    }
  }
  auto idf = [&](int m, const std::vector<std::string>& g) {
    auto it = df[static_cast<std::size_t>(m)].find(g);
    const double d = it == df[static_cast<std::size_t>(m)].end() ? 0.0 : it->second;
    return std::log(N / std::max(1.0, d));
  };
  double total = 0.0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    double per_box = 0.0;
    for (int m = 0; m < kOrders; ++m) {
      const NgramCounts& pc = pred_grams[i][static_cast<std::size_t>(m)];
      const NgramCounts& rc = ref_grams[i][static_cast<std::size_t>(m)];
      double dot = 0.0, np = 0.0, nr = 0.0;
      for (const auto& [g, c] : pc) {
        const double w = c * idf(m, g);
        np += w * w;
        auto it = rc.find(g);
        if (it != rc.end()) dot += w * it->second * idf(m, g);
      }
      for (const auto& [g, c] : rc) {
        const double w = c * idf(m, g);
        nr += w * w;
      }
      if (np > 0.0 && nr > 0.0) per_box += dot / (std::sqrt(np) * std::sqrt(nr));
    }
    total += per_box / kOrders;
  }
  return 10.0 * total / N;
}

DivResult div_n(std::span<const std::vector<std::string>> cards, int n) {
  if (n < 1) throw std::invalid_argument("div_n: order must be at least 1");
  DivResult out;
  double sum = 0.0;
  for (const auto& card : cards) {
    NgramCounts pooled;
    double total = 0.0;
    for (const std::string& c : card)
      for (const auto& [g, k] : ngrams(textcodec::split_units(c), n)) {
        pooled[g] += k;
        total += k;
      }
    if (total == 0.0) {
      ++out.cards_skipped;
      continue;
    }
    ++out.cards_used;
    sum += static_cast<double>(pooled.size()) / total;
  }
  // Very short captions (e.g. early in training) can leave nothing to count; keep the report finite.
  if (out.cards_used > 0) out.score = 100.0 * sum / static_cast<double>(out.cards_used);
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

FitnessCurve length_fitness(std::span<const dataio::TextBox> boxes, std::span<const std::string> captions) {
  if (boxes.empty() || boxes.size() != captions.size())
    throw std::invalid_argument("length_fitness: needs a non-empty list of boxes with one caption each");
  FitnessCurve curve;
  std::vector<double> sums(kFitnessBuckets, 0.0);
  curve.buckets.resize(kFitnessBuckets);
  for (int b = 0; b < kFitnessBuckets; ++b) curve.buckets[static_cast<std::size_t>(b)].lower = b + 1;
  std::vector<double> ar, len;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const double a = boxes[i].aspect_ratio();
    const double l = static_cast<double>(textcodec::unit_count(captions[i]));
    const int b = std::clamp(static_cast<int>(std::floor(a)), 1, kFitnessBuckets) - 1;
    curve.buckets[static_cast<std::size_t>(b)].count += 1;
    sums[static_cast<std::size_t>(b)] += l;
    ar.push_back(a);
    len.push_back(l);
  }
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < curve.buckets.size(); ++b) {
    FitnessBucket& fb = curve.buckets[b];
    if (fb.count == 0) continue;
    fb.mean_length = sums[b] / static_cast<double>(fb.count);
    if (fb.mean_length < prev) curve.monotone = false;
    prev = fb.mean_length;
  }
  const double r = pearson(ar, len);
  if (std::isfinite(r)) curve.pearson = r;
  return curve;
}

KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int restarts, int max_iter) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw std::invalid_argument("kmeans: k must be at least 1");
  if (n < k) throw std::invalid_argument("kmeans: " + std::to_string(n) + " points cannot form " + std::to_string(k) + " clusters");
  if (restarts < 1) throw std::invalid_argument("kmeans: restarts must be at least 1");

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int run = 0; run < restarts; ++run) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(run) * 0x9e3779b97f4a7c15ULL);
    Matrix centers(k, points.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centers.row(0) = points.row(first(rng));
    Eigen::VectorXd d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = (points.row(i) - centers.row(0)).squaredNorm();
    for (int c = 1; c < k; ++c) {
      const double total = d2.sum();
      Eigen::Index pick = 0;
      if (total > 0.0) {
        const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
        double cum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (d2(i) <= 0.0) continue;
          pick = i;
          cum += d2(i);
          if (u < cum) break;
        }
      } else {
        pick = first(rng);
      }
      centers.row(c) = points.row(pick);
      for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (points.row(i) - centers.row(c)).squaredNorm());
    }

    std::vector<int> assign(static_cast<std::size_t>(n), -1);
    double inertia = 0.0;
    for (int it = 0; it < max_iter; ++it) {
      bool changed = false;
      inertia = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        int arg = 0;
        double bestd = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          const double d = (points.row(i) - centers.row(c)).squaredNorm();
          if (d < bestd) {
            bestd = d;
            arg = c;
          }
        }
        inertia += bestd;
        if (assign[static_cast<std::size_t>(i)] != arg) {
          assign[static_cast<std::size_t>(i)] = arg;
          changed = true;
        }
      }
      if (!changed) break;
      Matrix sum = Matrix::Zero(k, points.cols());
      std::vector<int> count(static_cast<std::size_t>(k), 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        sum.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
        ++count[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
      }
      for (int c = 0; c < k; ++c)
        if (count[static_cast<std::size_t>(c)] > 0) centers.row(c) = sum.row(c) / count[static_cast<std::size_t>(c)];
    }
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.assignment = assign;
      best.centers = centers;
    }
  }
  return best;
}

ClusterResult cluster_types(std::span<const std::string> captions, std::span<const dataio::TextBox> boxes,
                            const Matrix& embeddings, const textcodec::Vocabulary& vocab, int k, std::uint64_t seed,
                            int grid) {
  if (captions.size() != boxes.size()) throw std::invalid_argument("cluster_types: one box per caption required");
  if (static_cast<int>(captions.size()) < k)
    throw std::invalid_argument("cluster_types: " + std::to_string(captions.size()) + " captions for k=" + std::to_string(k));
  if (embeddings.rows() != vocab.size()) throw std::invalid_argument("cluster_types: embedding rows must match the vocabulary");
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(captions.size()), embeddings.cols());
  for (std::size_t i = 0; i < captions.size(); ++i) {
    const std::vector<int> ids = vocab.encode(captions[i]);
    if (ids.empty()) continue;
    for (int id : ids) x.row(static_cast<Eigen::Index>(i)) += embeddings.row(id);
    x.row(static_cast<Eigen::Index>(i)) /= static_cast<double>(ids.size());
  }
  const KMeansResult km = kmeans(x, k, seed, 10);
  ClusterResult out;
  out.assignment = km.assignment;
  out.inertia = km.inertia;
  out.heatmap = Matrix::Zero(k, Eigen::Index(grid) * grid);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const int cx = std::clamp(static_cast<int>(std::floor(boxes[i].center_x() * grid)), 0, grid - 1);
    const int cy = std::clamp(static_cast<int>(std::floor(boxes[i].center_y() * grid)), 0, grid - 1);
    out.heatmap(out.assignment[i], cy * grid + cx) += 1.0;
  }
  return out;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("adjusted_rand_index: label lists must be aligned and non-empty");
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  auto c2 = [](double v) { return v * (v - 1.0) / 2.0; };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [key, v] : table) index += c2(v);
  for (const auto& [key, v] : ra) sa += c2(v);
  for (const auto& [key, v] : rb) sb += c2(v);
  const double total = c2(static_cast<double>(a.size()));
  const double expected = total > 0.0 ? sa * sb / total : 0.0;
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

double exact_match(std::span<const std::string> predictions, std::span<const std::string> references) {
  check_corpus(predictions, references, "exact_match");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    hit += textcodec::split_units(predictions[i]) == textcodec::split_units(references[i]) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(predictions.size());
}

MetricReport evaluate(std::span<const std::vector<std::string>> predicted_cards,
                      std::span<const std::vector<std::string>> reference_cards,
                      std::span<const std::vector<dataio::TextBox>> boxes) {
  if (predicted_cards.size() != reference_cards.size() || predicted_cards.size() != boxes.size())
    throw std::invalid_argument("evaluate: predictions, references and boxes must cover the same cards");
  std::vector<std::string> preds, refs;
  std::vector<dataio::TextBox> flat_boxes;
  for (std::size_t c = 0; c < predicted_cards.size(); ++c) {
    if (predicted_cards[c].size() != reference_cards[c].size() || boxes[c].size() != reference_cards[c].size())
      throw std::invalid_argument("evaluate: card " + std::to_string(c) + " has mismatched caption counts");
    preds.insert(preds.end(), predicted_cards[c].begin(), predicted_cards[c].end());
    refs.insert(refs.end(), reference_cards[c].begin(), reference_cards[c].end());
    flat_boxes.insert(flat_boxes.end(), boxes[c].begin(), boxes[c].end());
  }
  MetricReport r;
  r.bleu1 = 100.0 * bleu_n(preds, refs, 1);
  r.bleu4 = 100.0 * bleu_n(preds, refs, 4);
  r.cider = 100.0 * cider(preds, refs);
  const DivResult d1 = div_n(predicted_cards, 1);
  const DivResult d2 = div_n(predicted_cards, 2);
  r.div1 = d1.score;
  r.div2 = d2.score;
  r.div_cards_skipped = d2.cards_skipped;
  r.fitness = length_fitness(flat_boxes, preds);
  return r;
}

void write_report(const MetricReport& report, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write report " + path.string());
  os << "B@1=" << fmt(report.bleu1) << "\n";
  os << "B@4=" << fmt(report.bleu4) << "\n";
  os << "CIDEr=" << fmt(report.cider) << "\n";
  os << "D@1=" << fmt(report.div1) << "\n";
  os << "D@2=" << fmt(report.div2) << "\n";
  os << "fitness=" << (report.fitness.pearson ? fmt(*report.fitness.pearson) : std::string("n/a")) << "\n";
  os << "clusters=" << (report.clusters ? std::to_string(report.clusters->heatmap.rows()) : std::string("n/a")) << "\n";

  std::filesystem::path fit = path;
  fit += ".fitness.csv";
  std::ofstream fs(fit, std::ios::trunc);
  if (!fs) throw std::runtime_error("cannot write " + fit.string());
  fs << "bucket,count,mean_length\n";
  for (const FitnessBucket& b : report.fitness.buckets) {
    const std::string label = b.lower == kFitnessBuckets ? std::to_string(b.lower) + "+" : std::to_string(b.lower);
    fs << label << "," << b.count << "," << (b.count ? fmt(b.mean_length) : std::string("")) << "\n";
  }

  if (report.clusters) {
    std::filesystem::path cl = path;
    cl += ".clusters.csv";
    std::ofstream cs(cl, std::ios::trunc);
    if (!cs) throw std::runtime_error("cannot write " + cl.string());
    const Matrix& h = report.clusters->heatmap;
    cs << "cluster,cell,count\n";
    for (Eigen::Index c = 0; c < h.rows(); ++c)
      for (Eigen::Index j = 0; j < h.cols(); ++j)
        if (h(c, j) > 0) cs << c << "," << j << "," << static_cast<long long>(h(c, j)) << "\n";
  }
}

}  // namespace boxcap::evalsuite
