// Patient-space K-fold cross-validation and the metric suite: per-class
// recall, precision, F1, and macro-averaged MAE. Preprocessing that depends
// on data (rare-code filtering, response normalization) is refit inside each
// fold on the training part only.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ordstab/concurrency.hpp"
#include "ordstab/filterbank.hpp"
#include "ordstab/rng.hpp"
#include "ordstab/trainer.hpp"

namespace ordstab {

struct FoldPlan {
  int K = 10;
  std::map<std::string, int> fold_of_patient;

  int fold_of(const std::string& patient) const {
    auto it = fold_of_patient.find(patient);
    if (it == fold_of_patient.end()) fail(ErrorCategory::data, "patient not in fold plan: " + patient);
    return it->second;
  }
};

// Canonicalize (sort unique ids) before shuffling so the plan is invariant to
// input row order; fold sizes differ by at most one patient.
inline FoldPlan make_folds(const std::vector<std::string>& patient_ids, int K, std::uint64_t seed) {
  if (K < 2) fail(ErrorCategory::config, "K must be >= 2");
  std::vector<std::string> unique(patient_ids);
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  if (static_cast<int>(unique.size()) < K)
    fail(ErrorCategory::data, "fewer distinct patients (" + std::to_string(unique.size()) +
                                  ") than folds (" + std::to_string(K) + ")");
  Rng rng(mix_seed(seed, 0x0f01d5));
  rng.shuffle(unique);
  FoldPlan plan;
  plan.K = K;
  for (std::size_t i = 0; i < unique.size(); ++i)
    plan.fold_of_patient[unique[i]] = static_cast<int>(i % static_cast<std::size_t>(K));
  return plan;
}

struct ClassMetrics {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;  // truth count
};

struct Metrics {
  Eigen::MatrixXi confusion;  // confusion(t, p): truth t+1 predicted as p+1
  std::vector<ClassMetrics> per_class;
  double macro_mae = 0.0;
  std::int64_t n = 0;
};

inline Metrics confusion_and_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                                     int L) {
  if (truth.size() != predicted.size())
    fail(ErrorCategory::data, "truth and prediction vectors differ in length");
  Metrics m;
  m.confusion = Eigen::MatrixXi::Zero(L, L);
  m.n = static_cast<std::int64_t>(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    int t = truth[i], p = predicted[i];
    if (t < 1 || t > L || p < 1 || p > L)
      fail(ErrorCategory::data, "label outside 1.." + std::to_string(L) + " at row " + std::to_string(i));
    m.confusion(t - 1, p - 1) += 1;
  }
  m.per_class.resize(static_cast<std::size_t>(L));
  double mae_sum = 0.0;
  int nonempty = 0;
  for (int l = 0; l < L; ++l) {
    std::int64_t tp = m.confusion(l, l);
    std::int64_t truth_count = m.confusion.row(l).sum();
    std::int64_t pred_count = m.confusion.col(l).sum();
    auto& c = m.per_class[static_cast<std::size_t>(l)];
    c.support = truth_count;
    c.recall = truth_count > 0 ? static_cast<double>(tp) / truth_count : 0.0;
    c.precision = pred_count > 0 ? static_cast<double>(tp) / pred_count : 0.0;
    c.f1 = (c.recall + c.precision) > 0 ? 2.0 * c.recall * c.precision / (c.recall + c.precision) : 0.0;
    if (truth_count > 0) {
      double abs_err = 0.0;
      for (int p = 0; p < L; ++p) abs_err += m.confusion(l, p) * std::abs(p - l);
      mae_sum += abs_err / static_cast<double>(truth_count);
      ++nonempty;
    }
  }
  m.macro_mae = nonempty > 0 ? mae_sum / nonempty : 0.0;  // empty classes excluded from the macro average
  return m;
}

struct CrossValidationOutcome {
  Metrics pooled;
  std::vector<Metrics> per_fold;
  std::vector<int> pooled_truth, pooled_predicted;  // concatenated in fold order
};

// Rare codes are those whose event occurrences over the training rows of a
// fold do not exceed min_occurrences; their response features are zeroed in
// the training matrix, which forces their train max (and hence every
// transformed value, held-out included) to zero.
inline std::vector<bool> rare_feature_mask(const RawDataset& raw, const std::vector<int>& train_rows,
                                           std::int64_t min_occurrences) {
  std::vector<std::int64_t> counts(raw.codes.size(), 0);
  for (int r : train_rows)
    for (const auto& [code, count] : raw.row_code_counts[static_cast<std::size_t>(r)])
      counts[static_cast<std::size_t>(code)] += count;
  std::vector<bool> masked(raw.features.size(), false);
  for (std::size_t j = 0; j < raw.features.size(); ++j) {
    int code = raw.feature_code[j];
    if (code >= 0 && counts[static_cast<std::size_t>(code)] <= min_occurrences) masked[j] = true;
  }
  return masked;
}

inline CrossValidationOutcome cross_validate(const RawDataset& raw, const FoldPlan& folds,
                                             const TrainingConfig& config, Variant variant,
                                             const RegularizerMatrix* S,
                                             std::int64_t min_occurrences = 1, int threads = 1) {
  const int n = raw.n(), K = folds.K, L = raw.n_classes;
  std::vector<std::vector<int>> fold_rows(static_cast<std::size_t>(K));
  for (int i = 0; i < n; ++i)
    fold_rows[static_cast<std::size_t>(folds.fold_of(raw.patient_ids[static_cast<std::size_t>(i)]))].push_back(i);

  struct FoldResult {
    std::vector<int> truth, predicted;
  };
  std::vector<FoldResult> results(static_cast<std::size_t>(K));

  parallel_for(K, threads, [&](int k) {
    std::vector<int> train_rows, test_rows;
    for (int f = 0; f < K; ++f) {
      const auto& rows = fold_rows[static_cast<std::size_t>(f)];
      auto& dst = (f == k) ? test_rows : train_rows;
      dst.insert(dst.end(), rows.begin(), rows.end());
    }
    std::vector<bool> class_seen(static_cast<std::size_t>(L), false);
    for (int r : train_rows) class_seen[static_cast<std::size_t>(raw.y(r) - 1)] = true;
    for (int l = 0; l < L; ++l)
      if (!class_seen[static_cast<std::size_t>(l)])
        fail(ErrorCategory::data, "fold " + std::to_string(k) + ": class " + std::to_string(l + 1) +
                                      " missing from the training part");

    std::vector<bool> masked = rare_feature_mask(raw, train_rows, min_occurrences);
    RowMatrixXd X_train(static_cast<Eigen::Index>(train_rows.size()), raw.X.cols());
    for (std::size_t i = 0; i < train_rows.size(); ++i)
      X_train.row(static_cast<Eigen::Index>(i)) = raw.X.row(train_rows[i]);
    for (std::size_t j = 0; j < masked.size(); ++j)
      if (masked[j]) X_train.col(static_cast<Eigen::Index>(j)).setZero();

    NormalizationState norm = fit_normalizer(X_train);

    Dataset train;
    train.X = apply_normalizer(X_train, norm);
    train.y.resize(static_cast<Eigen::Index>(train_rows.size()));
    train.n_classes = L;
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      train.y(static_cast<Eigen::Index>(i)) = raw.y(train_rows[i]);
      train.patient_ids.push_back(raw.patient_ids[static_cast<std::size_t>(train_rows[i])]);
    }

    FitOutcome outcome = fit(train, config, variant, S);
    SelectionResult selected = select_features(outcome.model, config.selection_threshold);

    auto& res = results[static_cast<std::size_t>(k)];
    Eigen::VectorXd x(raw.X.cols());
    for (int r : test_rows) {
      for (Eigen::Index j = 0; j < raw.X.cols(); ++j)
        x(j) = normalize_value(raw.X(r, j), norm.train_max[static_cast<std::size_t>(j)]);
      res.truth.push_back(raw.y(r));
      res.predicted.push_back(predict_class(selected.model, x));
    }
  });

  CrossValidationOutcome out;
  for (int k = 0; k < K; ++k) {
    const auto& res = results[static_cast<std::size_t>(k)];
    out.per_fold.push_back(confusion_and_metrics(res.truth, res.predicted, L));
    out.pooled_truth.insert(out.pooled_truth.end(), res.truth.begin(), res.truth.end());
    out.pooled_predicted.insert(out.pooled_predicted.end(), res.predicted.begin(), res.predicted.end());
  }
  out.pooled = confusion_and_metrics(out.pooled_truth, out.pooled_predicted, L);
  return out;
}

}  // namespace ordstab
