// One-sided temporal filter bank: kernel convolution of event series at
// multiple scales and delays, derived assessment statistics, and the
// train-max normalization that maps raw responses into [0,1].
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordstab/event_store.hpp"

namespace ordstab {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class KernelKind : std::uint8_t { uniform, truncated_gaussian };

inline const char* to_string(KernelKind k) {
  return k == KernelKind::uniform ? "uniform" : "truncated_gaussian";
}

inline std::optional<KernelKind> parse_kernel(std::string_view s) {
  if (s == "uniform") return KernelKind::uniform;
  if (s == "truncated_gaussian") return KernelKind::truncated_gaussian;
  return std::nullopt;
}

struct FilterSpec {
  KernelKind kernel = KernelKind::uniform;
  double sigma_months = 3.0;  // effective width, > 0
  double delay_months = 0.0;  // shift into the past, >= 0
};

// Kernel value at lag h (months past the delay). One-sided: zero for h < 0.
inline double kernel_eval(const FilterSpec& spec, double h_months) {
  if (h_months < 0.0) return 0.0;
  if (spec.kernel == KernelKind::uniform)
    return h_months <= spec.sigma_months ? 1.0 / spec.sigma_months : 0.0;
  double s2 = spec.sigma_months * spec.sigma_months;
  return std::sqrt(2.0 / (M_PI * s2)) * std::exp(-h_months * h_months / (2.0 * s2));
}

// Day-grid weight for an event at offset h days before the anchor. Uniform
// windows are half-open, [delay, delay+sigma) in days, so that the standard
// segment banks tile the history without double counting boundary days.
inline double filter_weight_days(const FilterSpec& spec, int h_days) {
  int start = static_cast<int>(std::llround(spec.delay_months * kDaysPerMonth));
  if (h_days < start) return 0.0;
  if (spec.kernel == KernelKind::uniform) {
    int width = static_cast<int>(std::llround(spec.sigma_months * kDaysPerMonth));
    return h_days < start + width ? 1.0 / spec.sigma_months : 0.0;
  }
  return kernel_eval(spec, static_cast<double>(h_days - start) / kDaysPerMonth);
}

// Raw filter response for one event type of one image. Events strictly after
// the anchor never appear in the image, so the response is one-sided by
// construction.
inline double convolve(const EventImage& image, const EventKey& key, const FilterSpec& spec) {
  auto it = image.series.find(key);
  if (it == image.series.end()) return 0.0;
  double acc = 0.0;
  for (const auto& [offset, value] : it->second) acc += filter_weight_days(spec, offset) * value;
  return acc;
}

// --- derived assessment statistics -----------------------------------------

// Ratings of an assessment instrument over time: per day offset, the observed
// item ratings plus an optional instrument-level overall rating.
struct AssessmentSeries {
  std::map<int, std::map<std::string, double>> items;  // offset -> item -> rating
  std::map<int, double> overall;                       // offset -> overall rating

  bool empty() const { return items.empty() && overall.empty(); }
};

inline constexpr std::array<const char*, 5> kDerivedStatNames = {
    "overall_max",    // max over time of the overall rating
    "item_max_sum",   // sum over items of each item's max over time
    "item_mean_sum",  // sum over items of each item's mean over time
    "time_sum_mean",  // mean over time of the per-time sum over items
    "time_sum_max",   // max over time of the per-time sum over items
};

// Missing items are skipped from means and contribute zero to sums.
inline std::array<double, 5> derived_statistics(const AssessmentSeries& series) {
  if (series.empty())
    fail(ErrorCategory::data, "derived_statistics: no assessments in the series");

  double overall_max = 0.0;
  for (const auto& [offset, rating] : series.overall) overall_max = std::max(overall_max, rating);

  std::map<std::string, std::pair<double, std::pair<double, int>>> per_item;  // max, (sum, count)
  double time_sum_total = 0.0;
  double time_sum_max = 0.0;
  for (const auto& [offset, ratings] : series.items) {
    double sum_at_time = 0.0;
    for (const auto& [item, rating] : ratings) {
      auto& acc = per_item[item];
      acc.first = std::max(acc.first, rating);
      acc.second.first += rating;
      acc.second.second += 1;
      sum_at_time += rating;
    }
    time_sum_total += sum_at_time;
    time_sum_max = std::max(time_sum_max, sum_at_time);
  }
  double item_max_sum = 0.0, item_mean_sum = 0.0;
  for (const auto& [item, acc] : per_item) {
    item_max_sum += acc.first;
    item_mean_sum += acc.second.first / acc.second.second;
  }
  double n_times = static_cast<double>(series.items.size());
  double time_sum_mean = n_times > 0 ? time_sum_total / n_times : 0.0;
  return {overall_max, item_max_sum, item_mean_sum, time_sum_mean, time_sum_max};
}

// --- filter bank configuration ----------------------------------------------

struct FilterBankConfig {
  std::vector<FilterSpec> filters;
  std::set<Channel> channels;  // empty = all channels
  bool assessment_statistics = true;
  std::string overall_code = "overall";  // assessment item treated as the overall rating

  // The default bank: uniform kernels tiling 48 months of history into the
  // non-overlapping segments [0-3],[3-6],[6-12],[12-24],[24-48] months.
  static FilterBankConfig default_config() {
    FilterBankConfig cfg;
    cfg.filters = {{KernelKind::uniform, 3.0, 0.0},
                   {KernelKind::uniform, 3.0, 3.0},
                   {KernelKind::uniform, 6.0, 6.0},
                   {KernelKind::uniform, 12.0, 12.0},
                   {KernelKind::uniform, 24.0, 24.0}};
    return cfg;
  }

  bool channel_selected(Channel c) const { return channels.empty() || channels.count(c) > 0; }

  static FilterBankConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::io, "cannot open filter config: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      fail(ErrorCategory::parse, "filter config " + path + ": " + e.what());
    }
    FilterBankConfig cfg = default_config();
    if (j.contains("filters")) {
      cfg.filters.clear();
      for (const auto& f : j.at("filters")) {
        FilterSpec spec;
        auto kernel = parse_kernel(f.at("kernel").get<std::string>());
        if (!kernel) fail(ErrorCategory::config, "unknown kernel in filter config");
        spec.kernel = *kernel;
        spec.sigma_months = f.at("sigma").get<double>();
        spec.delay_months = f.at("delay").get<double>();
        if (spec.sigma_months <= 0 || spec.delay_months < 0)
          fail(ErrorCategory::config, "filter config requires sigma > 0 and delay >= 0");
        cfg.filters.push_back(spec);
      }
    }
    if (j.contains("channels")) {
      for (const auto& c : j.at("channels")) {
        auto channel = parse_channel(c.get<std::string>());
        if (!channel) fail(ErrorCategory::config, "unknown channel in filter config");
        cfg.channels.insert(*channel);
      }
    }
    if (j.contains("assessment_statistics"))
      cfg.assessment_statistics = j.at("assessment_statistics").get<bool>();
    if (j.contains("overall_code")) cfg.overall_code = j.at("overall_code").get<std::string>();
    if (cfg.filters.empty()) fail(ErrorCategory::config, "filter config has no filters");
    return cfg;
  }
};

// --- feature space ----------------------------------------------------------

struct FeatureDescriptor {
  std::string id;
  Channel channel = Channel::diagnosis;
  std::string code;
  double sigma_months = 0.0;
  double delay_months = 0.0;
  std::string statistic;  // "response" or a derived-statistic name

  bool is_response() const { return statistic == "response"; }
};

inline std::string make_feature_id(const EventKey& key, const FilterSpec& spec) {
  char kind = spec.kernel == KernelKind::uniform ? 'u' : 'g';
  return std::string(to_string(key.channel)) + "/" + key.code + "/" + kind +
         fmt_double(spec.sigma_months) + "+" + fmt_double(spec.delay_months);
}

struct NormalizationState {
  std::vector<double> train_max;  // per-feature maximum raw response on the training corpus
};

// Raw (pre-normalization) extracted dataset plus everything the evaluation
// harness needs to refit preprocessing inside resampling loops.
struct RawDataset {
  std::vector<FeatureDescriptor> features;
  RowMatrixXd X;  // n x d raw responses
  Eigen::VectorXi y;
  int n_classes = 0;
  std::vector<std::string> patient_ids;
  std::vector<std::string> anchors;

  // Event-occurrence bookkeeping for rare-code filtering inside CV folds.
  std::vector<std::string> codes;  // "channel/code" table
  std::vector<std::vector<std::pair<int, std::int64_t>>> row_code_counts;
  std::vector<int> feature_code;  // feature index -> codes index, -1 for derived stats

  int n() const { return static_cast<int>(X.rows()); }
  int dim() const { return static_cast<int>(X.cols()); }
};

inline NormalizationState fit_normalizer(const RowMatrixXd& X_raw) {
  NormalizationState state;
  state.train_max.resize(static_cast<std::size_t>(X_raw.cols()));
  for (Eigen::Index j = 0; j < X_raw.cols(); ++j)
    state.train_max[static_cast<std::size_t>(j)] = X_raw.rows() > 0 ? X_raw.col(j).maxCoeff() : 0.0;
  return state;
}

// (v / train_max)^2 clamped into [0,1]. Features with train max 0 map to 0.
inline double normalize_value(double v, double train_max) {
  if (train_max <= 0.0) return 0.0;
  double r = v / train_max;
  double squared = r * r;
  return squared > 1.0 ? 1.0 : squared;
}

inline RowMatrixXd apply_normalizer(const RowMatrixXd& X_raw, const NormalizationState& state) {
  if (static_cast<std::size_t>(X_raw.cols()) != state.train_max.size())
    fail(ErrorCategory::data, "normalizer dimension mismatch");
  RowMatrixXd X = X_raw;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      X(i, j) = normalize_value(X_raw(i, j), state.train_max[static_cast<std::size_t>(j)]);
  return X;
}

namespace detail {

inline AssessmentSeries assessment_series_of(const EventImage& image, const std::string& overall_code) {
  AssessmentSeries series;
  for (const auto& [key, entries] : image.series) {
    if (key.channel != Channel::assessment_item) continue;
    for (const auto& [offset, value] : entries) {
      if (key.code == overall_code) {
        auto [it, inserted] = series.overall.emplace(offset, value);
        if (!inserted) it->second = std::max(it->second, value);
      } else {
        auto& slot = series.items[offset][key.code];
        slot = std::max(slot, value);  // duplicate same-day ratings collapse to the max
      }
    }
  }
  return series;
}

}  // namespace detail

// Deterministic feature universe: for every (channel, code) seen in the
// corpus and every configured filter, one response feature; plus the five
// derived assessment statistics when assessment items are present. Also fits
// the train-max normalizer on the extracted corpus.
inline RawDataset extract_dataset(const EventMatrixCollection& collection,
                                  const FilterBankConfig& config) {
  RawDataset ds;

  std::set<EventKey> keys;
  bool any_assessments = false;
  for (const auto& img : collection.images) {
    for (const auto& [key, entries] : img.series) {
      if (!config.channel_selected(key.channel)) continue;
      if (key.channel == Channel::assessment_item) any_assessments = true;
      keys.insert(key);
    }
  }

  std::map<std::string, int> code_index;
  for (const auto& key : keys) {
    std::string name = to_string(key);
    if (code_index.emplace(name, static_cast<int>(ds.codes.size())).second) ds.codes.push_back(name);
  }

  for (const auto& key : keys) {
    for (const auto& spec : config.filters) {
      FeatureDescriptor f;
      f.id = make_feature_id(key, spec);
      f.channel = key.channel;
      f.code = key.code;
      f.sigma_months = spec.sigma_months;
      f.delay_months = spec.delay_months;
      f.statistic = "response";
      ds.features.push_back(std::move(f));
      ds.feature_code.push_back(code_index.at(to_string(key)));
    }
  }
  bool with_stats = config.assessment_statistics && any_assessments;
  if (with_stats) {
    for (const char* stat : kDerivedStatNames) {
      FeatureDescriptor f;
      f.id = std::string("assessment/") + stat;
      f.channel = Channel::assessment_item;
      f.statistic = stat;
      ds.features.push_back(std::move(f));
      ds.feature_code.push_back(-1);
    }
  }

  const int n = static_cast<int>(collection.images.size());
  const int d = static_cast<int>(ds.features.size());
  ds.X = RowMatrixXd::Zero(n, d);
  ds.y.resize(n);
  ds.patient_ids.resize(static_cast<std::size_t>(n));
  ds.anchors.resize(static_cast<std::size_t>(n));
  ds.row_code_counts.resize(static_cast<std::size_t>(n));

  // response features are laid out per key in filter order
  std::map<EventKey, int> first_column;
  {
    int col = 0;
    for (const auto& key : keys) {
      first_column[key] = col;
      col += static_cast<int>(config.filters.size());
    }
  }

  for (int i = 0; i < n; ++i) {
    const EventImage& img = collection.images[static_cast<std::size_t>(i)];
    ds.patient_ids[static_cast<std::size_t>(i)] = img.patient_id;
    ds.anchors[static_cast<std::size_t>(i)] = img.anchor_text;
    ds.y(i) = img.label;
    ds.n_classes = std::max(ds.n_classes, img.label);
    for (const auto& [key, entries] : img.series) {
      if (!config.channel_selected(key.channel)) continue;
      int base = first_column.at(key);
      for (std::size_t k = 0; k < config.filters.size(); ++k)
        ds.X(i, base + static_cast<int>(k)) = convolve(img, key, config.filters[k]);
      ds.row_code_counts[static_cast<std::size_t>(i)].emplace_back(
          code_index.at(to_string(key)), static_cast<std::int64_t>(entries.size()));
    }
    if (with_stats) {
      AssessmentSeries series = detail::assessment_series_of(img, config.overall_code);
      if (!series.empty()) {
        auto stats = derived_statistics(series);
        for (int s = 0; s < 5; ++s) ds.X(i, d - 5 + s) = stats[static_cast<std::size_t>(s)];
      }
      // no assessments in this window: derived columns stay 0
    }
  }
  return ds;
}

}  // namespace ordstab
