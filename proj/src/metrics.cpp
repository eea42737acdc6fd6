#include "mrshift/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mrshift/error.hpp"
#include "mrshift/rng.hpp"

namespace mrshift {

namespace {

void check_two_classes(const ScoredLabels& s, const char* metric, std::size_t& pos,
                       std::size_t& neg) {
  if (s.scores.size() != s.labels.size())
    throw MetricError(std::string(metric) + ": scores and labels differ in length");
  pos = neg = 0;
  for (auto l : s.labels) {
    if (l > 1) throw MetricError(std::string(metric) + ": labels must be 0 or 1");
    (l ? pos : neg)++;
  }
  if (pos == 0 || neg == 0)
    throw MetricError(std::string(metric) + ": undefined without both classes present");
}

}  // namespace

double auroc(const ScoredLabels& s) {
  std::size_t pos, neg;
  check_two_classes(s, "auroc", pos, neg);
  const std::size_t n = s.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });

  // Ranks are doubled (2 * midrank) so tie groups stay integral and the
  // statistic is exact.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && s.scores[order[j + 1]] == s.scores[order[i]]) ++j;
    const std::uint64_t twice_mid = (i + 1) + (j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (s.labels[order[k]]) twice_rank_sum += twice_mid;
    i = j + 1;
  }
  // 2U = 2 * R_pos - P(P + 1)
  const std::uint64_t twice_u = twice_rank_sum - pos * (pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double balanced_accuracy(const ScoredLabels& s, double threshold) {
  std::size_t pos, neg;
  check_two_classes(s, "balanced_accuracy", pos, neg);
  std::size_t tp = 0, tn = 0;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    const bool predicted = s.scores[i] >= threshold;
    if (s.labels[i] && predicted) ++tp;
    if (!s.labels[i] && !predicted) ++tn;
  }
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) +
                static_cast<double>(tn) / static_cast<double>(neg));
}

double mean_metric_over_pathologies(std::span<const double> per_class) {
  if (per_class.empty()) throw MetricError("mean over pathologies: no values");
  return std::accumulate(per_class.begin(), per_class.end(), 0.0) /
         static_cast<double>(per_class.size());
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() < 2) return r;
  double q = 0.0;
  for (double v : values) q += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(q / static_cast<double>(values.size() - 1));
  return r;
}

Interval bootstrap_mean_ci(std::span<const double> values, std::size_t resamples,
                           std::uint64_t seed, double level) {
  if (values.empty() || resamples == 0) throw MetricError("bootstrap: empty input");
  Rng rng(seed);
  std::vector<double> means(resamples);
  const auto n = static_cast<std::int64_t>(values.size());
  for (auto& m : means) {
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += values[static_cast<std::size_t>(rng.uniform_int(0, n - 1))];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double alpha = 0.5 * (1.0 - level);
  auto pick = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(resamples - 1) + 0.5));
    return means[std::min(idx, resamples - 1)];
  };
  return {pick(alpha), pick(1.0 - alpha)};
}

}  // namespace mrshift
