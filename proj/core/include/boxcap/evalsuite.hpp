#pragma once

// Caption metrics. Captions are tokenized with textcodec::split_units; every box
// has exactly one reference.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "boxcap/autograd.hpp"
#include "boxcap/dataio.hpp"
#include "boxcap/textcodec.hpp"

namespace boxcap::evalsuite {

/// Corpus BLEU over orders 1..n with brevity penalty, in [0, 1].
double bleu_n(std::span<const std::string> predictions, std::span<const std::string> references, int n);

/// Mean over boxes of the TF-IDF cosine averaged over orders 1..4, times 10.
/// idf(g) = log(N / max(1, df(g))) with df counted over the N references.
double cider(std::span<const std::string> predictions, std::span<const std::string> references);

struct DivResult {
  /// Mean over used cards of unique/total n-grams, times 100. Zero when no card is used.
  double score = 0.0;
  std::size_t cards_used = 0;
  std::size_t cards_skipped = 0;
};

/// Each inner vector holds one card's captions; n-grams never cross caption boundaries.
DivResult div_n(std::span<const std::vector<std::string>> cards, int n);

inline constexpr int kFitnessBuckets = 9;

struct FitnessBucket {
  int lower = 1;  // aspect ratios in [lower, lower + 1); the last bucket is open-ended
  std::size_t count = 0;
  double mean_length = 0.0;
};

struct FitnessCurve {
  std::vector<FitnessBucket> buckets;  // kFitnessBuckets entries
  /// Pearson correlation of aspect ratio and caption length; empty when either is constant.
  std::optional<double> pearson;
  /// Mean lengths of non-empty buckets never decrease.
  bool monotone = true;
};

FitnessCurve length_fitness(std::span<const dataio::TextBox> boxes, std::span<const std::string> captions);

double pearson(std::span<const double> x, std::span<const double> y);

struct KMeansResult {
  std::vector<int> assignment;
  Matrix centers;
  double inertia = 0.0;
};

/// k-means++ seeding and Lloyd iterations; the restart with the lowest inertia wins.
KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int restarts = 10, int max_iter = 300);

struct ClusterResult {
  std::vector<int> assignment;
  double inertia = 0.0;
  /// k rows of grid*grid counts: how often each cluster's boxes are centred in each cell.
  Matrix heatmap;
};

/// Clusters captions by the mean of their word embeddings (rows of `embeddings`).
ClusterResult cluster_types(std::span<const std::string> captions, std::span<const dataio::TextBox> boxes,
                            const Matrix& embeddings, const textcodec::Vocabulary& vocab, int k = 4,
                            std::uint64_t seed = 1, int grid = 8);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

struct MetricReport {
  double bleu1 = 0.0;
  double bleu4 = 0.0;
  double cider = 0.0;
  double div1 = 0.0;
  double div2 = 0.0;
  FitnessCurve fitness;
  std::optional<ClusterResult> clusters;
  std::size_t div_cards_skipped = 0;
};

/// All scores times 100.
MetricReport evaluate(std::span<const std::vector<std::string>> predicted_cards,
                      std::span<const std::vector<std::string>> reference_cards,
                      std::span<const std::vector<dataio::TextBox>> boxes);

/// Flat key=value file with exactly the keys B@1, B@4, CIDEr, D@1, D@2, fitness, clusters.
/// Also writes <path>.fitness.csv and, when clusters are present, <path>.clusters.csv.
void write_report(const MetricReport& report, const std::filesystem::path& path);

/// Exact-match fraction over aligned caption lists.
double exact_match(std::span<const std::string> predictions, std::span<const std::string> references);

}  // namespace boxcap::evalsuite
