// Model stability under resampling: refit on bootstrap or half-subsample
// draws, record post-selection weights, and compute selection frequencies,
// weight signal-to-noise ratios, importance scores, and the ASP@T / SNR@T
// curves over a ranked feature list.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ordstab/concurrency.hpp"
#include "ordstab/rng.hpp"
#include "ordstab/trainer.hpp"

namespace ordstab {

enum class ResampleMode : std::uint8_t { bootstrap_full, subsample_half };

inline const char* to_string(ResampleMode m) {
  return m == ResampleMode::bootstrap_full ? "bootstrap" : "subsample";
}

inline std::optional<ResampleMode> parse_resample_mode(std::string_view s) {
  if (s == "bootstrap") return ResampleMode::bootstrap_full;
  if (s == "subsample") return ResampleMode::subsample_half;
  return std::nullopt;
}

struct ResamplePlan {
  ResampleMode mode = ResampleMode::subsample_half;
  int B = 30;
  std::uint64_t seed = 0;

  void validate() const {
    if (B < 2) fail(ErrorCategory::config, "resample plan needs B >= 2");
  }
};

// Post-selection weight vectors per weight block and sample; zeros kept.
struct WeightSnapshots {
  int dim = 0;
  std::vector<std::vector<Eigen::VectorXd>> blocks;  // blocks[block][sample]
};

namespace detail {

inline std::vector<int> draw_rows(Rng& rng, ResampleMode mode, int n) {
  if (mode == ResampleMode::bootstrap_full) {
    std::vector<int> rows(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    return rows;
  }
  return rng.sample_without_replacement(n, n / 2);
}

inline bool all_classes_present(const Dataset& data, const std::vector<int>& rows) {
  std::vector<bool> seen(static_cast<std::size_t>(data.n_classes), false);
  for (int r : rows) seen[static_cast<std::size_t>(data.y(r) - 1)] = true;
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

}  // namespace detail

inline WeightSnapshots resample_and_fit(const Dataset& data, const ResamplePlan& plan,
                                        const TrainingConfig& config, Variant variant,
                                        const RegularizerMatrix* S = nullptr, int threads = 1) {
  plan.validate();
  data.validate();
  if (data.n() < 4) fail(ErrorCategory::data, "resampling needs at least 4 rows");

  const int n_blocks = variant == Variant::stagewise_multi ? data.n_classes - 1 : 1;
  WeightSnapshots snaps;
  snaps.dim = data.dim();
  snaps.blocks.assign(static_cast<std::size_t>(n_blocks),
                      std::vector<Eigen::VectorXd>(static_cast<std::size_t>(plan.B)));

  parallel_for(plan.B, threads, [&](int b) {
    std::vector<int> rows;
    bool ok = false;
    for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
      Rng rng(mix_seed(mix_seed(plan.seed, static_cast<std::uint64_t>(b)),
                       static_cast<std::uint64_t>(attempt)));
      rows = detail::draw_rows(rng, plan.mode, data.n());
      ok = detail::all_classes_present(data, rows);
    }
    if (!ok)
      fail(ErrorCategory::data,
           "sample " + std::to_string(b) + " missing a class after 10 redraws");
    Dataset sample = data.rows(rows);
    FitOutcome outcome = fit(sample, config, variant, S);
    SelectionResult selected = select_features(outcome.model, config.selection_threshold);
    for (int blk = 0; blk < n_blocks; ++blk)
      snaps.blocks[static_cast<std::size_t>(blk)][static_cast<std::size_t>(b)] =
          selected.model.weights[static_cast<std::size_t>(blk)];
  });
  return snaps;
}

inline constexpr double kSnrCap = 1e6;

struct FeatureStability {
  double selection_freq = 0.0;
  double weight_mean = 0.0;
  double weight_std = 0.0;  // population std over all B samples, zeros included
  double snr = 0.0;
  double importance = 0.0;  // |mean weight| * feature std over the dataset
};

inline std::vector<FeatureStability> feature_stability(const std::vector<Eigen::VectorXd>& samples,
                                                       const RowMatrixXd& X) {
  if (samples.empty()) fail(ErrorCategory::data, "no weight snapshots");
  const int d = static_cast<int>(samples.front().size());
  const double B = static_cast<double>(samples.size());
  std::vector<FeatureStability> stats(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    double sum = 0.0, sum_sq = 0.0;
    int selected = 0;
    for (const auto& w : samples) {
      double v = w(j);
      sum += v;
      sum_sq += v * v;
      if (v != 0.0) ++selected;
    }
    auto& s = stats[static_cast<std::size_t>(j)];
    s.selection_freq = selected / B;
    s.weight_mean = sum / B;
    double var = std::max(0.0, sum_sq / B - s.weight_mean * s.weight_mean);
    s.weight_std = std::sqrt(var);
    double abs_mean = std::abs(s.weight_mean);
    if (s.weight_std > 0.0)
      s.snr = std::min(abs_mean / s.weight_std, kSnrCap);
    else
      s.snr = abs_mean > 0.0 ? kSnrCap : 0.0;
    if (X.rows() > 0 && X.cols() == d) {
      double mean_x = X.col(j).mean();
      double var_x = (X.col(j).array() - mean_x).square().mean();
      s.importance = abs_mean * std::sqrt(std::max(0.0, var_x));
    }
  }
  return stats;
}

enum class RankCriterion : std::uint8_t { snr, selection_probability, importance };

inline const char* to_string(RankCriterion c) {
  switch (c) {
    case RankCriterion::snr: return "snr";
    case RankCriterion::selection_probability: return "selection";
    case RankCriterion::importance: return "importance";
  }
  return "unknown";
}

inline std::optional<RankCriterion> parse_criterion(std::string_view s) {
  if (s == "snr") return RankCriterion::snr;
  if (s == "selection") return RankCriterion::selection_probability;
  if (s == "importance") return RankCriterion::importance;
  return std::nullopt;
}

// Descending by the criterion; ties broken by descending |mean weight|, then
// by feature id.
inline std::vector<int> rank_features(const std::vector<FeatureStability>& stats,
                                      RankCriterion criterion,
                                      const std::vector<std::string>& feature_ids) {
  const int d = static_cast<int>(stats.size());
  std::vector<int> order(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) order[static_cast<std::size_t>(j)] = j;
  auto key = [&](int j) -> double {
    const auto& s = stats[static_cast<std::size_t>(j)];
    switch (criterion) {
      case RankCriterion::snr: return s.snr;
      case RankCriterion::selection_probability: return s.selection_freq;
      case RankCriterion::importance: return s.importance;
    }
    return 0.0;
  };
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    double ka = key(a), kb = key(b);
    if (ka != kb) return ka > kb;
    double ma = std::abs(stats[static_cast<std::size_t>(a)].weight_mean);
    double mb = std::abs(stats[static_cast<std::size_t>(b)].weight_mean);
    if (ma != mb) return ma > mb;
    if (!feature_ids.empty())
      return feature_ids[static_cast<std::size_t>(a)] < feature_ids[static_cast<std::size_t>(b)];
    return a < b;
  });
  return order;
}

// Mean selection frequency of the top-T ranked features.
inline double asp_at(const std::vector<Eigen::VectorXd>& samples, const std::vector<int>& ranking,
                     int T) {
  if (T < 1 || T > static_cast<int>(ranking.size()))
    fail(ErrorCategory::config, "ASP@T requires 1 <= T <= d");
  const double B = static_cast<double>(samples.size());
  double acc = 0.0;
  for (int t = 0; t < T; ++t) {
    int j = ranking[static_cast<std::size_t>(t)];
    int selected = 0;
    for (const auto& w : samples)
      if (w(j) != 0.0) ++selected;
    acc += selected / B;
  }
  return acc / T;
}

// Mean weight signal-to-noise ratio of the top-T ranked features.
inline double snr_at(const std::vector<FeatureStability>& stats, const std::vector<int>& ranking,
                     int T) {
  if (T < 1 || T > static_cast<int>(ranking.size()))
    fail(ErrorCategory::config, "SNR@T requires 1 <= T <= d");
  double acc = 0.0;
  for (int t = 0; t < T; ++t) acc += stats[static_cast<std::size_t>(ranking[static_cast<std::size_t>(t)])].snr;
  return acc / T;
}

struct StabilityReport {
  RankCriterion criterion = RankCriterion::snr;
  std::vector<FeatureStability> stats;
  std::vector<int> ranking;
  std::vector<double> asp_curve;  // ASP@T for T = 1..d
  std::vector<double> snr_curve;  // SNR@T for T = 1..d
};

inline StabilityReport make_stability_report(const std::vector<Eigen::VectorXd>& samples,
                                             const RowMatrixXd& X, RankCriterion criterion,
                                             const std::vector<std::string>& feature_ids) {
  StabilityReport report;
  report.criterion = criterion;
  report.stats = feature_stability(samples, X);
  report.ranking = rank_features(report.stats, criterion, feature_ids);
  const int d = static_cast<int>(report.stats.size());
  report.asp_curve.reserve(static_cast<std::size_t>(d));
  report.snr_curve.reserve(static_cast<std::size_t>(d));
  // running means along the ranking
  double asp_acc = 0.0, snr_acc = 0.0;
  const double B = static_cast<double>(samples.size());
  for (int t = 0; t < d; ++t) {
    int j = report.ranking[static_cast<std::size_t>(t)];
    int selected = 0;
    for (const auto& w : samples)
      if (w(j) != 0.0) ++selected;
    asp_acc += selected / B;
    snr_acc += report.stats[static_cast<std::size_t>(j)].snr;
    report.asp_curve.push_back(asp_acc / (t + 1));
    report.snr_curve.push_back(snr_acc / (t + 1));
  }
  return report;
}

}  // namespace ordstab
