// On-disk formats for extracted datasets, trained models, networks, and the
// run manifest every command leaves in its output directory. All numbers are
// written in shortest round-trip form so reruns are byte-identical.
#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordstab/feature_network.hpp"
#include "ordstab/filterbank.hpp"
#include "ordstab/ordinal_model.hpp"
#include "ordstab/version.hpp"

namespace ordstab {

namespace fs = std::filesystem;

inline std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string fnv1a64_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return buf;
}

inline std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::io, "cannot open for hashing: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a64_hex(ss.str());
}

// Reproducible-builds convention: SOURCE_DATE_EPOCH pins the manifest
// timestamp so identical runs produce identical bytes.
inline std::int64_t manifest_timestamp() {
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
    std::int64_t v = 0;
    if (parse_int64(env, v)) return v;
  }
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  int threads = 1;
  nlohmann::json config;
  std::map<std::string, std::string> input_hashes;
  std::vector<std::string> outputs;

  void write(const std::string& dir) const {
    nlohmann::json j;
    j["tool"] = "ordstab";
    j["version"] = kVersion;
    j["command"] = command;
    j["seed"] = seed;
    j["threads"] = threads;
    j["config"] = config;
    j["config_hash"] = fnv1a64_hex(config.dump());
    j["inputs"] = input_hashes;
    j["outputs"] = outputs;
    j["created_unix"] = manifest_timestamp();
    std::ofstream os(fs::path(dir) / "run_manifest.json", std::ios::binary);
    if (!os) fail(ErrorCategory::io, "cannot write run manifest in " + dir);
    os << j.dump(2) << '\n';
  }
};

// --- extracted dataset directory -------------------------------------------

inline void write_features_csv(const std::string& path, const std::vector<FeatureDescriptor>& features) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCategory::io, "cannot write " + path);
  os << "feature_id,channel,code,sigma,delay,statistic\n";
  for (const auto& f : features) {
    std::vector<std::string> row = {f.id,
                                    to_string(f.channel),
                                    f.code,
                                    f.is_response() ? fmt_double(f.sigma_months) : "",
                                    f.is_response() ? fmt_double(f.delay_months) : "",
                                    f.statistic};
    write_csv_row(os, row);
  }
}

inline std::vector<FeatureDescriptor> read_features_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::io, "cannot open " + path);
  CsvReader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row) || row.size() != 6 || row[0] != "feature_id")
    fail(ErrorCategory::parse, path + ": bad feature manifest header");
  std::vector<FeatureDescriptor> features;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 6) fail(ErrorCategory::parse, path + ": bad row");
    FeatureDescriptor f;
    f.id = row[0];
    auto channel = parse_channel(row[1]);
    if (!channel) fail(ErrorCategory::parse, path + ": unknown channel " + row[1]);
    f.channel = *channel;
    f.code = row[2];
    if (!row[3].empty() && !parse_double(row[3], f.sigma_months))
      fail(ErrorCategory::parse, path + ": bad sigma");
    if (!row[4].empty() && !parse_double(row[4], f.delay_months))
      fail(ErrorCategory::parse, path + ": bad delay");
    f.statistic = row[5];
    features.push_back(std::move(f));
  }
  return features;
}

inline void write_dataset(const std::string& dir, const RawDataset& ds, const NormalizationState& norm) {
  fs::create_directories(dir);
  write_features_csv((fs::path(dir) / "features.csv").string(), ds.features);
  {
    std::ofstream os(fs::path(dir) / "data.csv", std::ios::binary);
    if (!os) fail(ErrorCategory::io, "cannot write data.csv in " + dir);
    std::vector<std::string> header = {"patient_id", "anchor_time", "label"};
    for (const auto& f : ds.features) header.push_back(f.id);
    write_csv_row(os, header);
    for (int i = 0; i < ds.n(); ++i) {
      std::vector<std::string> row = {ds.patient_ids[static_cast<std::size_t>(i)],
                                      ds.anchors[static_cast<std::size_t>(i)],
                                      std::to_string(ds.y(i))};
      for (int j = 0; j < ds.dim(); ++j) row.push_back(fmt_double(ds.X(i, j)));
      write_csv_row(os, row);
    }
  }
  {
    std::ofstream os(fs::path(dir) / "counts.csv", std::ios::binary);
    if (!os) fail(ErrorCategory::io, "cannot write counts.csv in " + dir);
    os << "row,code,count\n";
    for (std::size_t i = 0; i < ds.row_code_counts.size(); ++i)
      for (const auto& [code, count] : ds.row_code_counts[i]) {
        std::vector<std::string> row = {std::to_string(i), ds.codes[static_cast<std::size_t>(code)],
                                        std::to_string(count)};
        write_csv_row(os, row);
      }
  }
  {
    std::ofstream os(fs::path(dir) / "normalizer.csv", std::ios::binary);
    if (!os) fail(ErrorCategory::io, "cannot write normalizer.csv in " + dir);
    os << "feature_id,train_max\n";
    for (std::size_t j = 0; j < norm.train_max.size(); ++j) {
      std::vector<std::string> row = {ds.features[j].id, fmt_double(norm.train_max[j])};
      write_csv_row(os, row);
    }
  }
  {
    nlohmann::json j;
    j["format"] = "ordstab-dataset";
    j["version"] = 1;
    j["n"] = ds.n();
    j["d"] = ds.dim();
    j["classes"] = ds.n_classes;
    std::ofstream os(fs::path(dir) / "dataset.json", std::ios::binary);
    if (!os) fail(ErrorCategory::io, "cannot write dataset.json in " + dir);
    os << j.dump(2) << '\n';
  }
}

struct StoredDataset {
  RawDataset raw;
  NormalizationState norm;
};

inline StoredDataset read_dataset(const std::string& dir) {
  auto meta_path = fs::path(dir) / "dataset.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) fail(ErrorCategory::io, "not a dataset directory (missing dataset.json): " + dir);
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const std::exception& e) {
    fail(ErrorCategory::parse, meta_path.string() + ": " + e.what());
  }
  if (meta.value("format", "") != "ordstab-dataset")
    fail(ErrorCategory::parse, dir + ": not an ordstab dataset");
  if (meta.value("version", 0) != 1)
    fail(ErrorCategory::parse, dir + ": unsupported dataset version");

  StoredDataset out;
  out.raw.features = read_features_csv((fs::path(dir) / "features.csv").string());
  const int d = static_cast<int>(out.raw.features.size());
  out.raw.n_classes = meta.at("classes").get<int>();

  // code table from response features
  std::map<std::string, int> code_index;
  for (const auto& f : out.raw.features) {
    if (!f.is_response()) {
      out.raw.feature_code.push_back(-1);
      continue;
    }
    std::string name = std::string(to_string(f.channel)) + "/" + f.code;
    auto [it, inserted] = code_index.emplace(name, static_cast<int>(out.raw.codes.size()));
    if (inserted) out.raw.codes.push_back(name);
    out.raw.feature_code.push_back(it->second);
  }

  {
    std::ifstream in(fs::path(dir) / "data.csv", std::ios::binary);
    if (!in) fail(ErrorCategory::io, "cannot open data.csv in " + dir);
    CsvReader reader(in);
    std::vector<std::string> row;
    if (!reader.next(row) || static_cast<int>(row.size()) != 3 + d)
      fail(ErrorCategory::parse, dir + "/data.csv: header does not match the feature manifest");
    std::vector<std::vector<double>> rows;
    while (reader.next(row)) {
      if (row.size() == 1 && row[0].empty()) continue;
      if (static_cast<int>(row.size()) != 3 + d)
        fail(ErrorCategory::parse, dir + "/data.csv: bad row at line " + std::to_string(reader.line()));
      out.raw.patient_ids.push_back(row[0]);
      out.raw.anchors.push_back(row[1]);
      std::int64_t label;
      if (!parse_int64(row[2], label)) fail(ErrorCategory::parse, dir + "/data.csv: bad label");
      std::vector<double> values(static_cast<std::size_t>(d + 1));
      values[0] = static_cast<double>(label);
      for (int j = 0; j < d; ++j)
        if (!parse_double(row[static_cast<std::size_t>(3 + j)], values[static_cast<std::size_t>(j + 1)]))
          fail(ErrorCategory::parse, dir + "/data.csv: bad value");
      rows.push_back(std::move(values));
    }
    const int n = static_cast<int>(rows.size());
    out.raw.X.resize(n, d);
    out.raw.y.resize(n);
    for (int i = 0; i < n; ++i) {
      out.raw.y(i) = static_cast<int>(rows[static_cast<std::size_t>(i)][0]);
      for (int j = 0; j < d; ++j) out.raw.X(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j + 1)];
    }
    out.raw.row_code_counts.resize(static_cast<std::size_t>(n));
  }
  {
    std::ifstream in(fs::path(dir) / "counts.csv", std::ios::binary);
    if (in) {
      CsvReader reader(in);
      std::vector<std::string> row;
      reader.next(row);  // header
      while (reader.next(row)) {
        if (row.size() == 1 && row[0].empty()) continue;
        if (row.size() != 3) fail(ErrorCategory::parse, dir + "/counts.csv: bad row");
        std::int64_t r, c;
        if (!parse_int64(row[0], r) || !parse_int64(row[2], c))
          fail(ErrorCategory::parse, dir + "/counts.csv: bad numbers");
        auto it = code_index.find(row[1]);
        if (it == code_index.end()) fail(ErrorCategory::parse, dir + "/counts.csv: unknown code " + row[1]);
        out.raw.row_code_counts[static_cast<std::size_t>(r)].emplace_back(it->second, c);
      }
    }
  }
  {
    std::ifstream in(fs::path(dir) / "normalizer.csv", std::ios::binary);
    if (!in) fail(ErrorCategory::io, "cannot open normalizer.csv in " + dir);
    CsvReader reader(in);
    std::vector<std::string> row;
    reader.next(row);  // header
    std::map<std::string, double> max_of;
    while (reader.next(row)) {
      if (row.size() == 1 && row[0].empty()) continue;
      if (row.size() != 2) fail(ErrorCategory::parse, dir + "/normalizer.csv: bad row");
      double v;
      if (!parse_double(row[1], v)) fail(ErrorCategory::parse, dir + "/normalizer.csv: bad value");
      max_of[row[0]] = v;
    }
    out.norm.train_max.resize(static_cast<std::size_t>(d), 0.0);
    for (int j = 0; j < d; ++j) {
      auto it = max_of.find(out.raw.features[static_cast<std::size_t>(j)].id);
      if (it == max_of.end())
        fail(ErrorCategory::parse, dir + "/normalizer.csv: missing feature " +
                                       out.raw.features[static_cast<std::size_t>(j)].id);
      out.norm.train_max[static_cast<std::size_t>(j)] = it->second;
    }
  }
  return out;
}

// --- model files ------------------------------------------------------------

inline void save_model(const std::string& path, const OrdinalModel& model,
                       const std::vector<std::string>& feature_ids,
                       const std::string& config_fingerprint) {
  nlohmann::json j;
  j["format"] = "ordstab-model";
  j["version"] = 1;
  j["variant"] = to_string(model.variant);
  j["classes"] = model.n_classes;
  j["link"] = "logistic";
  j["thresholds"] = std::vector<double>(model.thresholds.data(),
                                        model.thresholds.data() + model.thresholds.size());
  j["features"] = feature_ids;
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& w : model.weights) {
    nlohmann::json block = nlohmann::json::object();
    for (Eigen::Index k = 0; k < w.size(); ++k)
      if (w(k) != 0.0) block[feature_ids[static_cast<std::size_t>(k)]] = w(k);
    blocks.push_back(std::move(block));
  }
  j["weights"] = std::move(blocks);
  j["config_fingerprint"] = config_fingerprint;
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCategory::io, "cannot write model file: " + path);
  os << j.dump(2) << '\n';
}

struct StoredModel {
  OrdinalModel model;
  std::vector<std::string> feature_ids;
  std::string config_fingerprint;
};

inline StoredModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open model file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(ErrorCategory::parse, path + ": " + e.what());
  }
  if (j.value("format", "") != "ordstab-model") fail(ErrorCategory::parse, path + ": not a model file");
  if (j.value("version", 0) != 1) fail(ErrorCategory::parse, path + ": unsupported model version");
  StoredModel out;
  auto variant = parse_variant(j.at("variant").get<std::string>());
  if (!variant) fail(ErrorCategory::parse, path + ": unknown variant");
  out.feature_ids = j.at("features").get<std::vector<std::string>>();
  auto thresholds = j.at("thresholds").get<std::vector<double>>();
  const int L = j.at("classes").get<int>();
  const int d = static_cast<int>(out.feature_ids.size());
  out.model = OrdinalModel::zeros(*variant, L, d);
  out.model.thresholds = Eigen::Map<const Eigen::VectorXd>(thresholds.data(),
                                                           static_cast<Eigen::Index>(thresholds.size()));
  std::map<std::string, int> column_of;
  for (int k = 0; k < d; ++k) column_of[out.feature_ids[static_cast<std::size_t>(k)]] = k;
  const auto& blocks = j.at("weights");
  if (blocks.size() != out.model.weights.size())
    fail(ErrorCategory::parse, path + ": wrong number of weight blocks");
  for (std::size_t b = 0; b < out.model.weights.size(); ++b) {
    for (const auto& [id, value] : blocks[b].items()) {
      auto it = column_of.find(id);
      if (it == column_of.end()) fail(ErrorCategory::parse, path + ": weight for unknown feature " + id);
      out.model.weights[b](it->second) = value.get<double>();
    }
  }
  out.config_fingerprint = j.value("config_fingerprint", "");
  return out;
}

// --- network directory --------------------------------------------------------

inline void write_network(const std::string& dir, const FeatureNetwork& net,
                          const RegularizerMatrix& reg,
                          const std::vector<FeatureDescriptor>& features) {
  fs::create_directories(dir);
  {
    std::ofstream os(fs::path(dir) / "edges.csv", std::ios::binary);
    if (!os) fail(ErrorCategory::io, "cannot write edges.csv in " + dir);
    os << "feature_id_a,feature_id_b,weight,relation_tag\n";
    for (const auto& e : net.edges) {
      std::vector<std::string> row = {features[static_cast<std::size_t>(e.a)].id,
                                      features[static_cast<std::size_t>(e.b)].id,
                                      fmt_double(e.weight), to_string(e.relation)};
      write_csv_row(os, row);
    }
  }
  {
    std::ofstream os(fs::path(dir) / "s_matrix.csv", std::ios::binary);
    if (!os) fail(ErrorCategory::io, "cannot write s_matrix.csv in " + dir);
    os << "feature_id_row,feature_id_col,value\n";
    for (int k = 0; k < reg.S.outerSize(); ++k)
      for (SparseMatrixXd::InnerIterator it(reg.S, k); it; ++it) {
        std::vector<std::string> row = {features[static_cast<std::size_t>(it.row())].id,
                                        features[static_cast<std::size_t>(it.col())].id,
                                        fmt_double(it.value())};
        write_csv_row(os, row);
      }
  }
  {
    nlohmann::json j;
    j["format"] = "ordstab-network";
    j["version"] = 1;
    j["regularizer"] = to_string(reg.kind);
    j["d"] = net.dim;
    j["edges"] = net.edges.size();
    std::ofstream os(fs::path(dir) / "network.json", std::ios::binary);
    if (!os) fail(ErrorCategory::io, "cannot write network.json in " + dir);
    os << j.dump(2) << '\n';
  }
}

// Load S aligned to the given feature order.
inline RegularizerMatrix read_network(const std::string& dir,
                                      const std::vector<FeatureDescriptor>& features) {
  std::ifstream meta_in(fs::path(dir) / "network.json");
  if (!meta_in) fail(ErrorCategory::io, "not a network directory (missing network.json): " + dir);
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const std::exception& e) {
    fail(ErrorCategory::parse, dir + "/network.json: " + e.what());
  }
  if (meta.value("format", "") != "ordstab-network")
    fail(ErrorCategory::parse, dir + ": not an ordstab network");
  RegularizerMatrix reg;
  reg.kind = meta.at("regularizer").get<std::string>() == "laplacian" ? RegularizerKind::laplacian
                                                                      : RegularizerKind::random_walk;
  std::map<std::string, int> column_of;
  for (std::size_t j = 0; j < features.size(); ++j) column_of[features[j].id] = static_cast<int>(j);
  std::ifstream in(fs::path(dir) / "s_matrix.csv", std::ios::binary);
  if (!in) fail(ErrorCategory::io, "cannot open s_matrix.csv in " + dir);
  CsvReader reader(in);
  std::vector<std::string> row;
  reader.next(row);  // header
  std::vector<Eigen::Triplet<double>> triplets;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 3) fail(ErrorCategory::parse, dir + "/s_matrix.csv: bad row");
    auto a = column_of.find(row[0]);
    auto b = column_of.find(row[1]);
    if (a == column_of.end() || b == column_of.end())
      fail(ErrorCategory::data, dir + "/s_matrix.csv: feature not in the dataset manifest: " +
                                    (a == column_of.end() ? row[0] : row[1]));
    double v;
    if (!parse_double(row[2], v)) fail(ErrorCategory::parse, dir + "/s_matrix.csv: bad value");
    triplets.emplace_back(a->second, b->second, v);
  }
  reg.S = SparseMatrixXd(static_cast<int>(features.size()), static_cast<int>(features.size()));
  reg.S.setFromTriplets(triplets.begin(), triplets.end());
  return reg;
}

}  // namespace ordstab
