#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mrshift {

// Scores for one pathology; higher means more likely positive.
struct ScoredLabels {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

// Mann-Whitney U / (P * N) with midranks for ties; equals the trapezoidal
// ROC area. Throws MetricError unless both classes are present.
double auroc(const ScoredLabels& s);

// (TPR + TNR) / 2 with "positive" meaning score >= threshold.
double balanced_accuracy(const ScoredLabels& s, double threshold = 0.5);

double mean_metric_over_pathologies(std::span<const double> per_class);

struct MeanStd {
  double mean = 0;
  double std = 0;  // sample standard deviation (n - 1); 0 for n < 2
};
MeanStd mean_std(std::span<const double> values);

struct Interval {
  double lo = 0;
  double hi = 0;
};
// Percentile bootstrap of the mean over `resamples` seeded draws.
Interval bootstrap_mean_ci(std::span<const double> values, std::size_t resamples,
                           std::uint64_t seed, double level = 0.95);

}  // namespace mrshift
