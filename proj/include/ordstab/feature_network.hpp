// Feature relation network and its quadratic-penalty transforms. Features of
// the same code at different extraction periods (Same-Code) or different
// codes sharing a short prefix within one period (Shared-Ancestor) are
// linked; the Laplacian or random-walk transform of the relation matrix
// yields the positive-semidefinite penalty used during training.
#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "ordstab/filterbank.hpp"

namespace ordstab {

using SparseMatrixXd = Eigen::SparseMatrix<double>;

enum class Relation : std::uint8_t { same_code, shared_ancestor };

inline const char* to_string(Relation r) {
  return r == Relation::same_code ? "same_code" : "shared_ancestor";
}

struct NetworkEdge {
  int a = 0, b = 0;  // feature indices, a < b
  double weight = 1.0;
  Relation relation = Relation::same_code;
};

struct FeatureNetwork {
  int dim = 0;
  std::vector<NetworkEdge> edges;

  SparseMatrixXd relation_matrix() const {
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(edges.size() * 2);
    for (const auto& e : edges) {
      triplets.emplace_back(e.a, e.b, e.weight);
      triplets.emplace_back(e.b, e.a, e.weight);
    }
    SparseMatrixXd W(dim, dim);
    W.setFromTriplets(triplets.begin(), triplets.end());
    return W;
  }
};

// Relations are built from the feature manifest only; derived-statistic
// features carry no code and are never linked.
inline FeatureNetwork build_network(const std::vector<FeatureDescriptor>& features,
                                    int prefix_length = 2) {
  FeatureNetwork net;
  net.dim = static_cast<int>(features.size());

  using PeriodKey = std::pair<double, double>;  // (sigma, delay)
  std::map<std::tuple<Channel, std::string>, std::vector<int>> by_code;
  std::map<std::tuple<Channel, PeriodKey, std::string>, std::vector<int>> by_prefix;

  for (int j = 0; j < net.dim; ++j) {
    const auto& f = features[static_cast<std::size_t>(j)];
    if (!f.is_response()) continue;
    by_code[{f.channel, f.code}].push_back(j);
    std::string prefix = f.code.substr(0, static_cast<std::size_t>(prefix_length));
    by_prefix[{f.channel, {f.sigma_months, f.delay_months}, prefix}].push_back(j);
  }

  for (const auto& [key, members] : by_code) {
    for (std::size_t p = 0; p < members.size(); ++p)
      for (std::size_t q = p + 1; q < members.size(); ++q)
        net.edges.push_back({members[p], members[q], 1.0, Relation::same_code});
  }
  for (const auto& [key, members] : by_prefix) {
    for (std::size_t p = 0; p < members.size(); ++p) {
      for (std::size_t q = p + 1; q < members.size(); ++q) {
        const auto& fa = features[static_cast<std::size_t>(members[p])];
        const auto& fb = features[static_cast<std::size_t>(members[q])];
        if (fa.code == fb.code) continue;  // same code, same period cannot occur; guard anyway
        net.edges.push_back({members[p], members[q], 1.0, Relation::shared_ancestor});
      }
    }
  }
  std::sort(net.edges.begin(), net.edges.end(), [](const NetworkEdge& x, const NetworkEdge& y) {
    return std::tie(x.a, x.b) < std::tie(y.a, y.b);
  });
  return net;
}

enum class RegularizerKind : std::uint8_t { laplacian, random_walk };

inline const char* to_string(RegularizerKind k) {
  return k == RegularizerKind::laplacian ? "laplacian" : "random_walk";
}

struct RegularizerMatrix {
  RegularizerKind kind = RegularizerKind::laplacian;
  SparseMatrixXd S;

  int dim() const { return static_cast<int>(S.rows()); }
};

// S = D - W with D the degree matrix; w'Sw = 1/2 sum_jk W_jk (w_j - w_k)^2.
inline RegularizerMatrix laplacian_transform(const FeatureNetwork& net) {
  Eigen::VectorXd degree = Eigen::VectorXd::Zero(net.dim);
  for (const auto& e : net.edges) {
    degree(e.a) += e.weight;
    degree(e.b) += e.weight;
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(net.edges.size() * 2 + static_cast<std::size_t>(net.dim));
  for (int j = 0; j < net.dim; ++j)
    if (degree(j) != 0.0) triplets.emplace_back(j, j, degree(j));
  for (const auto& e : net.edges) {
    triplets.emplace_back(e.a, e.b, -e.weight);
    triplets.emplace_back(e.b, e.a, -e.weight);
  }
  RegularizerMatrix reg;
  reg.kind = RegularizerKind::laplacian;
  reg.S = SparseMatrixXd(net.dim, net.dim);
  reg.S.setFromTriplets(triplets.begin(), triplets.end());
  return reg;
}

// Rows of W are normalized to sum one and S = (I - W)'(I - W), so
// w'Sw = sum_j (w_j - sum_k W_jk w_k)^2. Isolated features get an identity
// row in the normalized matrix and therefore contribute nothing.
inline RegularizerMatrix random_walk_transform(const FeatureNetwork& net) {
  Eigen::VectorXd degree = Eigen::VectorXd::Zero(net.dim);
  for (const auto& e : net.edges) {
    degree(e.a) += e.weight;
    degree(e.b) += e.weight;
  }
  std::vector<Eigen::Triplet<double>> triplets;
  for (int j = 0; j < net.dim; ++j)
    if (degree(j) > 0.0) triplets.emplace_back(j, j, 1.0);  // isolated rows stay zero in I - W
  for (const auto& e : net.edges) {
    triplets.emplace_back(e.a, e.b, -e.weight / degree(e.a));
    triplets.emplace_back(e.b, e.a, -e.weight / degree(e.b));
  }
  SparseMatrixXd M(net.dim, net.dim);  // I - W on connected rows
  M.setFromTriplets(triplets.begin(), triplets.end());
  RegularizerMatrix reg;
  reg.kind = RegularizerKind::random_walk;
  reg.S = SparseMatrixXd(M.transpose() * M);
  return reg;
}

inline double penalty(const RegularizerMatrix& reg, const Eigen::VectorXd& w) {
  if (w.size() != reg.S.rows())
    fail(ErrorCategory::data, "penalty: weight dimension " + std::to_string(w.size()) +
                                  " does not match regularizer dimension " +
                                  std::to_string(reg.S.rows()));
  return w.dot(reg.S * w);
}

inline Eigen::VectorXd penalty_gradient(const RegularizerMatrix& reg, const Eigen::VectorXd& w) {
  if (w.size() != reg.S.rows())
    fail(ErrorCategory::data, "penalty_gradient: dimension mismatch");
  return 2.0 * (reg.S * w);
}

}  // namespace ordstab
