// Synthetic cohort generation: event streams with planted correlated code
// groups and known true weights, labels drawn from a chosen ordinal ground
// truth. Emits the same file formats the ingestion pipeline reads, plus a
// ground-truth manifest. oracle_probs is an independent implementation of
// the class-probability formulas used for cross-checking the model code.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordstab/evaluation.hpp"
#include "ordstab/filterbank.hpp"
#include "ordstab/rng.hpp"

namespace ordstab {

struct GeneratorSpec {
  int n_patients = 400;
  int n_groups = 12;      // correlated code groups
  int group_size = 2;     // near-duplicate codes per group
  int n_background_codes = 6;
  double events_per_code_mean = 3.0;        // Poisson mean over the whole history
  double informative_events_mean = 6.0;     // rate for codes carrying true weight
  double duplication_noise_days = 2.0;      // jitter applied to duplicated streams
  int true_support = 10;                    // number of planted nonzero weights
  double weight_magnitude = 5.0;
  Variant variant = Variant::cumulative;    // generative model (shared-parameter)
  std::vector<double> thresholds;           // explicit; empty = solve from class_proportions
  std::vector<double> class_proportions = {0.93, 0.05, 0.02};
  int history_days = 48 * kDaysPerMonth;
  int horizon_days = 90;
  std::uint64_t seed = 1;

  int n_classes() const {
    return thresholds.empty() ? static_cast<int>(class_proportions.size())
                              : static_cast<int>(thresholds.size()) + 1;
  }

  void validate() const {
    if (n_patients < 2) fail(ErrorCategory::config, "generator needs at least 2 patients");
    if (n_groups < 0 || group_size < 1) fail(ErrorCategory::config, "bad group layout");
    if (true_support > n_groups)
      fail(ErrorCategory::config, "true_support cannot exceed n_groups");
    if (variant == Variant::stagewise_multi)
      fail(ErrorCategory::config, "generator supports shared-parameter variants only");
    if (n_classes() < 2) fail(ErrorCategory::config, "generator needs at least 2 classes");
    if (thresholds.empty()) {
      double sum = 0.0;
      for (double p : class_proportions) {
        if (p <= 0) fail(ErrorCategory::config, "class proportions must be positive");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-6)
        fail(ErrorCategory::config, "class proportions must sum to 1");
    }
  }

  static GeneratorSpec from_json(const nlohmann::json& j) {
    GeneratorSpec s;
    if (j.contains("n_patients")) s.n_patients = j.at("n_patients").get<int>();
    if (j.contains("n_groups")) s.n_groups = j.at("n_groups").get<int>();
    if (j.contains("group_size")) s.group_size = j.at("group_size").get<int>();
    if (j.contains("n_background_codes")) s.n_background_codes = j.at("n_background_codes").get<int>();
    if (j.contains("events_per_code_mean")) s.events_per_code_mean = j.at("events_per_code_mean").get<double>();
    if (j.contains("informative_events_mean")) s.informative_events_mean = j.at("informative_events_mean").get<double>();
    if (j.contains("duplication_noise_days")) s.duplication_noise_days = j.at("duplication_noise_days").get<double>();
    if (j.contains("true_support")) s.true_support = j.at("true_support").get<int>();
    if (j.contains("weight_magnitude")) s.weight_magnitude = j.at("weight_magnitude").get<double>();
    if (j.contains("variant")) {
      auto v = parse_variant(j.at("variant").get<std::string>());
      if (!v) fail(ErrorCategory::config, "unknown generator variant");
      s.variant = *v;
    }
    if (j.contains("thresholds")) s.thresholds = j.at("thresholds").get<std::vector<double>>();
    if (j.contains("class_proportions"))
      s.class_proportions = j.at("class_proportions").get<std::vector<double>>();
    if (j.contains("history_days")) s.history_days = j.at("history_days").get<int>();
    if (j.contains("horizon_days")) s.horizon_days = j.at("horizon_days").get<int>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    s.validate();
    return s;
  }

  static GeneratorSpec load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::io, "cannot open generator spec: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      fail(ErrorCategory::parse, std::string("generator spec: ") + e.what());
    }
    return from_json(j);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["n_patients"] = n_patients;
    j["n_groups"] = n_groups;
    j["group_size"] = group_size;
    j["n_background_codes"] = n_background_codes;
    j["events_per_code_mean"] = events_per_code_mean;
    j["informative_events_mean"] = informative_events_mean;
    j["duplication_noise_days"] = duplication_noise_days;
    j["true_support"] = true_support;
    j["weight_magnitude"] = weight_magnitude;
    j["variant"] = to_string(variant);
    if (!thresholds.empty()) j["thresholds"] = thresholds;
    j["class_proportions"] = class_proportions;
    j["history_days"] = history_days;
    j["horizon_days"] = horizon_days;
    j["seed"] = seed;
    return j;
  }
};

// Exact class probabilities from true parameters, written directly from the
// distribution definitions. Deliberately a separate code path from
// class_probs() so the two can check each other.
inline Eigen::VectorXd oracle_probs(Variant variant, const Eigen::VectorXd& thresholds,
                                    double score) {
  const int L = static_cast<int>(thresholds.size()) + 1;
  Eigen::VectorXd p(L);
  auto F = [](double u) { return 1.0 / (1.0 + std::exp(-u)); };
  if (variant == Variant::cumulative) {
    double prev = 0.0;
    for (int l = 0; l < L - 1; ++l) {
      double cum = F(thresholds(l) - score);
      p(l) = cum - prev;
      prev = cum;
    }
    p(L - 1) = 1.0 - prev;
  } else {
    double survive = 1.0;
    for (int l = 0; l < L - 1; ++l) {
      double accept = F(thresholds(l) - score);
      p(l) = accept * survive;
      survive *= 1.0 - accept;
    }
    p(L - 1) = survive;
  }
  return p;
}

struct GroundTruth {
  Variant variant = Variant::cumulative;
  Eigen::VectorXd thresholds;
  std::map<std::string, double> true_weights;       // feature id -> weight
  std::vector<int> support_columns;                 // column indices in the dataset
  std::vector<std::vector<std::string>> groups;     // planted code groups
  RowMatrixXd probabilities;                        // n x L generative probabilities
  std::vector<int> class_counts;
};

struct SyntheticCohort {
  GeneratorSpec spec;
  std::vector<EventRecord> records;
  std::vector<EvaluationPoint> points;
  EventMatrixCollection matrices;
  RawDataset dataset;          // raw responses, labels filled in
  NormalizationState norm;     // fitted on this cohort
  RowMatrixXd X;               // normalized features used by the generator
  GroundTruth truth;
};

namespace detail {

inline std::string group_code(int group, int member) {
  std::string prefix{static_cast<char>('A' + group % 26), static_cast<char>('0' + group / 26)};
  return prefix + static_cast<char>('A' + member);
}

inline std::string background_code(int index) {
  std::string prefix{static_cast<char>('a' + index % 26), static_cast<char>('0' + index / 26)};
  return prefix + "X";
}

// Solve mean_i P(y <= l) = target for tau_l by bisection; the earlier
// thresholds are already fixed for the stagewise form.
inline double solve_threshold(Variant variant, const Eigen::VectorXd& scores,
                              const std::vector<double>& fixed, double target) {
  auto cum_prob = [&](double tau) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      double s = scores(i);
      auto F = [](double u) { return 1.0 / (1.0 + std::exp(-u)); };
      if (variant == Variant::cumulative) {
        acc += F(tau - s);
      } else {
        double survive = 1.0;
        for (double t : fixed) survive *= 1.0 - F(t - s);
        acc += 1.0 - survive * (1.0 - F(tau - s));
      }
    }
    return acc / static_cast<double>(scores.size());
  };
  double lo = -60.0, hi = 60.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (cum_prob(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

inline SyntheticCohort generate(const GeneratorSpec& spec) {
  spec.validate();
  SyntheticCohort cohort;
  cohort.spec = spec;
  const int L = spec.n_classes();
  const int H = spec.history_days;
  const std::int64_t anchor_day = days_from_civil(2020, 1, 1);
  const std::string anchor_text = format_iso_date(anchor_day);

  // one evaluation point per patient; labels filled in after sampling
  char buf[16];
  for (int p = 0; p < spec.n_patients; ++p) {
    std::snprintf(buf, sizeof(buf), "p%05d", p);
    EvaluationPoint point;
    point.patient_id = buf;
    point.anchor_text = anchor_text;
    point.anchor_day = anchor_day;
    point.label = 1;
    point.horizon_days = spec.horizon_days;
    cohort.points.push_back(std::move(point));
  }

  for (int p = 0; p < spec.n_patients; ++p) {
    Rng rng(mix_seed(mix_seed(spec.seed, 0xE7), static_cast<std::uint64_t>(p)));
    const std::string& patient = cohort.points[static_cast<std::size_t>(p)].patient_id;
    auto emit = [&](const std::string& code, int offset) {
      EventRecord rec;
      rec.patient_id = patient;
      rec.day = anchor_day - offset;
      rec.channel = Channel::diagnosis;
      rec.code = code;
      rec.value = 1.0;
      cohort.records.push_back(std::move(rec));
    };
    for (int g = 0; g < spec.n_groups; ++g) {
      double rate = g < spec.true_support ? spec.informative_events_mean : spec.events_per_code_mean;
      int count = rng.poisson(rate);
      std::vector<int> offsets(static_cast<std::size_t>(count));
      for (int e = 0; e < count; ++e) {
        offsets[static_cast<std::size_t>(e)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(H)));
        emit(detail::group_code(g, 0), offsets[static_cast<std::size_t>(e)]);
      }
      for (int m = 1; m < spec.group_size; ++m) {
        for (int offset : offsets) {
          int jitter = static_cast<int>(std::llround(rng.normal() * spec.duplication_noise_days));
          int shifted = std::clamp(offset + jitter, 0, H - 1);
          emit(detail::group_code(g, m), shifted);
        }
      }
    }
    for (int bgc = 0; bgc < spec.n_background_codes; ++bgc) {
      int count = rng.poisson(spec.events_per_code_mean);
      for (int e = 0; e < count; ++e)
        emit(detail::background_code(bgc), static_cast<int>(rng.below(static_cast<std::uint64_t>(H))));
    }
  }

  IngestOptions options;
  options.history_days = H;
  options.horizon_days = spec.horizon_days;
  IngestReport report;
  auto collection = build_matrices(cohort.records, cohort.points, options, report);
  cohort.matrices = filter_rare_codes(collection, 1).first;

  FilterBankConfig bank = FilterBankConfig::default_config();
  cohort.dataset = extract_dataset(cohort.matrices, bank);
  cohort.dataset.n_classes = L;
  cohort.norm = fit_normalizer(cohort.dataset.X);
  cohort.X = apply_normalizer(cohort.dataset.X, cohort.norm);

  // planted weights: one feature per informative group, spread over filters
  cohort.truth.variant = spec.variant;
  std::map<std::string, int> column_of;
  for (std::size_t j = 0; j < cohort.dataset.features.size(); ++j)
    column_of[cohort.dataset.features[j].id] = static_cast<int>(j);
  Eigen::VectorXd w_true = Eigen::VectorXd::Zero(cohort.dataset.dim());
  for (int g = 0; g < spec.true_support; ++g) {
    const auto& filter = bank.filters[static_cast<std::size_t>(g) % bank.filters.size()];
    EventKey key{Channel::diagnosis, detail::group_code(g, 0)};
    std::string id = make_feature_id(key, filter);
    auto it = column_of.find(id);
    if (it == column_of.end())
      fail(ErrorCategory::data, "support feature " + id + " absent from the generated corpus; "
                                "increase event rates or patients");
    double w = (g % 2 == 0 ? 1.0 : -1.0) * spec.weight_magnitude;
    w_true(it->second) = w;
    cohort.truth.true_weights[id] = w;
    cohort.truth.support_columns.push_back(it->second);
  }
  for (int g = 0; g < spec.n_groups; ++g) {
    std::vector<std::string> group;
    for (int m = 0; m < spec.group_size; ++m) group.push_back(detail::group_code(g, m));
    cohort.truth.groups.push_back(std::move(group));
  }

  Eigen::VectorXd scores = cohort.X * w_true;

  if (!spec.thresholds.empty()) {
    cohort.truth.thresholds =
        Eigen::Map<const Eigen::VectorXd>(spec.thresholds.data(), static_cast<Eigen::Index>(spec.thresholds.size()));
  } else {
    cohort.truth.thresholds.resize(L - 1);
    std::vector<double> fixed;
    double cum = 0.0;
    for (int l = 0; l < L - 1; ++l) {
      cum += spec.class_proportions[static_cast<std::size_t>(l)];
      double tau = detail::solve_threshold(spec.variant, scores, fixed, cum);
      cohort.truth.thresholds(l) = tau;
      fixed.push_back(tau);
    }
  }

  const int n = spec.n_patients;
  cohort.truth.probabilities.resize(n, L);
  for (int i = 0; i < n; ++i)
    cohort.truth.probabilities.row(i) = oracle_probs(spec.variant, cohort.truth.thresholds, scores(i)).transpose();

  // draw labels; redraw with a derived seed if a class fails to appear
  std::vector<int> labels(static_cast<std::size_t>(n), 1);
  bool ok = false;
  for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
    Rng rng(mix_seed(mix_seed(spec.seed, 0x1abe1), static_cast<std::uint64_t>(attempt)));
    std::vector<bool> seen(static_cast<std::size_t>(L), false);
    for (int i = 0; i < n; ++i) {
      double u = rng.uniform01();
      double cum = 0.0;
      int label = L;
      for (int l = 0; l < L; ++l) {
        cum += cohort.truth.probabilities(i, l);
        if (u < cum) {
          label = l + 1;
          break;
        }
      }
      labels[static_cast<std::size_t>(i)] = label;
      seen[static_cast<std::size_t>(label - 1)] = true;
    }
    ok = std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
  }
  if (!ok)
    fail(ErrorCategory::data, "could not realize every class in " + std::to_string(n) +
                                  " draws after 10 attempts");

  cohort.truth.class_counts.assign(static_cast<std::size_t>(L), 0);
  for (int i = 0; i < n; ++i) {
    int label = labels[static_cast<std::size_t>(i)];
    cohort.points[static_cast<std::size_t>(i)].label = label;
    cohort.matrices.images[static_cast<std::size_t>(i)].label = label;
    cohort.dataset.y(i) = label;
    ++cohort.truth.class_counts[static_cast<std::size_t>(label - 1)];
  }
  return cohort;
}

// Probabilities for an arbitrary feature vector under the planted truth.
inline Eigen::VectorXd oracle_probs(const GroundTruth& truth,
                                    const std::vector<FeatureDescriptor>& features,
                                    const Eigen::Ref<const Eigen::VectorXd>& x) {
  double score = 0.0;
  for (std::size_t j = 0; j < features.size(); ++j) {
    auto it = truth.true_weights.find(features[j].id);
    if (it != truth.true_weights.end()) score += it->second * x(static_cast<Eigen::Index>(j));
  }
  return oracle_probs(truth.variant, truth.thresholds, score);
}

inline void write_cohort(const SyntheticCohort& cohort, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream os(fs::path(dir) / "events.csv", std::ios::binary);
    if (!os) fail(ErrorCategory::io, "cannot write events.csv in " + dir);
    os << "patient_id,event_time,channel,code,value\n";
    for (const auto& rec : cohort.records) {
      std::vector<std::string> row = {rec.patient_id, format_iso_date(rec.day),
                                      to_string(rec.channel), rec.code, fmt_double(rec.value)};
      write_csv_row(os, row);
    }
  }
  {
    std::ofstream os(fs::path(dir) / "labels.csv", std::ios::binary);
    if (!os) fail(ErrorCategory::io, "cannot write labels.csv in " + dir);
    os << "patient_id,anchor_time,label\n";
    for (const auto& point : cohort.points) {
      std::vector<std::string> row = {point.patient_id, point.anchor_text,
                                      std::to_string(point.label)};
      write_csv_row(os, row);
    }
  }
  {
    std::ofstream os(fs::path(dir) / "hierarchy.csv", std::ios::binary);
    if (!os) fail(ErrorCategory::io, "cannot write hierarchy.csv in " + dir);
    os << "code,parent\n";
    std::set<std::pair<std::string, std::string>> rows;
    for (int g = 0; g < cohort.spec.n_groups; ++g)
      for (int m = 0; m < cohort.spec.group_size; ++m) {
        std::string code = detail::group_code(g, m);
        rows.insert({code, code.substr(0, 2)});
        rows.insert({code.substr(0, 2), code.substr(0, 1)});
      }
    for (int b = 0; b < cohort.spec.n_background_codes; ++b) {
      std::string code = detail::background_code(b);
      rows.insert({code, code.substr(0, 2)});
      rows.insert({code.substr(0, 2), code.substr(0, 1)});
    }
    for (const auto& [code, parent] : rows) {
      std::vector<std::string> row = {code, parent};
      write_csv_row(os, row);
    }
  }
  {
    nlohmann::json j;
    j["format"] = "ordstab-ground-truth";
    j["version"] = 1;
    j["spec"] = cohort.spec.to_json();
    j["variant"] = to_string(cohort.truth.variant);
    j["thresholds"] = std::vector<double>(cohort.truth.thresholds.data(),
                                          cohort.truth.thresholds.data() + cohort.truth.thresholds.size());
    j["true_weights"] = cohort.truth.true_weights;
    j["groups"] = cohort.truth.groups;
    j["class_counts"] = cohort.truth.class_counts;
    std::vector<std::vector<double>> probs;
    for (Eigen::Index i = 0; i < cohort.truth.probabilities.rows(); ++i)
      probs.emplace_back(cohort.truth.probabilities.row(i).data(),
                         cohort.truth.probabilities.row(i).data() + cohort.truth.probabilities.cols());
    j["probabilities"] = probs;
    std::ofstream os(fs::path(dir) / "ground_truth.json", std::ios::binary);
    if (!os) fail(ErrorCategory::io, "cannot write ground_truth.json in " + dir);
    os << j.dump(2) << '\n';
  }
}

}  // namespace ordstab
