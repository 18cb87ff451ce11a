// Event ingestion and storage: patient event histories become sparse temporal
// images anchored at evaluation points, with code-hierarchy rollup and
// rare-code filtering. Collections persist to a versioned binary container.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ordstab/csv.hpp"
#include "ordstab/dates.hpp"
#include "ordstab/errors.hpp"

namespace ordstab {

enum class Channel : std::uint8_t {
  diagnosis,
  procedure,
  emergency_visit,
  admission,
  assessment_item,
  derived,
};

inline constexpr Channel kAllChannels[] = {
    Channel::diagnosis,     Channel::procedure,       Channel::emergency_visit,
    Channel::admission,     Channel::assessment_item, Channel::derived,
};

inline const char* to_string(Channel c) {
  switch (c) {
    case Channel::diagnosis: return "diagnosis";
    case Channel::procedure: return "procedure";
    case Channel::emergency_visit: return "emergency_visit";
    case Channel::admission: return "admission";
    case Channel::assessment_item: return "assessment_item";
    case Channel::derived: return "derived";
  }
  return "unknown";
}

inline std::optional<Channel> parse_channel(std::string_view s) {
  for (Channel c : kAllChannels)
    if (s == to_string(c)) return c;
  return std::nullopt;
}

struct EventRecord {
  std::string patient_id;
  std::int64_t day = 0;  // resolved day number (date) or day offset
  Channel channel = Channel::diagnosis;
  std::string code;
  double value = 1.0;  // 1.0 for point events, duration in days, or a rating
};

// Parent links between code strings, e.g. "F32.2" -> "F32" -> "F32"-level
// ancestors. Acyclic; loaded from a code,parent CSV.
class CodeHierarchy {
 public:
  CodeHierarchy() = default;

  void insert(const std::string& code, const std::string& parent) {
    parent_[code] = parent;
  }

  const std::string* parent_of(const std::string& code) const {
    auto it = parent_.find(code);
    return it == parent_.end() ? nullptr : &it->second;
  }

  bool empty() const { return parent_.empty(); }
  std::size_t size() const { return parent_.size(); }

  // Throws on cycles.
  void validate() const {
    for (const auto& [code, parent] : parent_) {
      const std::string* cur = &parent;
      std::size_t steps = 0;
      while (cur != nullptr) {
        if (*cur == code) fail(ErrorCategory::data, "hierarchy cycle involving code '" + code + "'");
        if (++steps > parent_.size()) fail(ErrorCategory::data, "hierarchy cycle detected");
        cur = parent_of(*cur);
      }
    }
  }

  static CodeHierarchy load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCategory::io, "cannot open hierarchy file: " + path);
    CodeHierarchy h;
    CsvReader reader(in);
    std::vector<std::string> row;
    bool first = true;
    while (reader.next(row)) {
      if (row.size() == 1 && row[0].empty()) continue;
      if (row.size() != 2)
        fail(ErrorCategory::parse, "hierarchy file line " + std::to_string(reader.line()) +
                                       ": expected 2 columns");
      if (first && row[0] == "code" && row[1] == "parent") {  // optional header
        first = false;
        continue;
      }
      first = false;
      h.insert(row[0], row[1]);
    }
    h.validate();
    return h;
  }

 private:
  std::map<std::string, std::string> parent_;
};

// Ancestor of `code` at the requested prefix depth. Walks hierarchy parent
// links while the code is longer than `depth`; falls back to plain prefix
// truncation (trailing '.' stripped) when the hierarchy has no entry.
inline std::string rollup_code(const std::string& code, const CodeHierarchy& hierarchy, int depth) {
  if (depth <= 0) return code;
  std::string cur = code;
  std::set<std::string> seen;
  while (cur.size() > static_cast<std::size_t>(depth)) {
    const std::string* parent = hierarchy.parent_of(cur);
    if (parent == nullptr || parent->empty() || !seen.insert(cur).second) break;
    if (parent->size() >= cur.size()) break;  // not a prefix-style rollup step
    cur = *parent;
  }
  if (cur.size() > static_cast<std::size_t>(depth)) {
    cur = cur.substr(0, static_cast<std::size_t>(depth));
    while (!cur.empty() && cur.back() == '.') cur.pop_back();
  }
  return cur;
}

struct EvaluationPoint {
  std::string patient_id;
  std::string anchor_text;  // as read from the label file
  std::int64_t anchor_day = 0;
  int label = 1;  // 1..L
  int horizon_days = 90;
};

struct EventKey {
  Channel channel = Channel::diagnosis;
  std::string code;
  auto operator<=>(const EventKey&) const = default;
};

inline std::string to_string(const EventKey& k) {
  return std::string(to_string(k.channel)) + "/" + k.code;
}

// One sparse temporal image: everything known about a patient at an anchor
// time, as (day-offset, value) series per event type. Offsets are in
// [0, history_days], sorted ascending; duplicate offsets are kept (they add
// under convolution).
struct EventImage {
  std::string patient_id;
  std::string anchor_text;
  std::int64_t anchor_day = 0;
  int label = 1;
  int history_days = 1440;
  std::map<EventKey, std::vector<std::pair<int, double>>> series;
};

struct RowIssue {
  std::size_t line = 0;
  std::string message;
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t records_kept = 0;
  std::size_t events_outside_window = 0;
  std::vector<RowIssue> issues;
};

struct IngestOptions {
  int history_days = 48 * kDaysPerMonth;
  int rollup_depth = 0;  // 0 = no rollup
  int horizon_days = 90;
};

struct EventMatrixCollection {
  int history_days = 1440;
  std::vector<EventImage> images;

  // Occurrences per event type: number of stored (offset, value) entries
  // across all images.
  std::map<EventKey, std::int64_t> code_counts() const {
    std::map<EventKey, std::int64_t> counts;
    for (const auto& img : images)
      for (const auto& [key, entries] : img.series)
        counts[key] += static_cast<std::int64_t>(entries.size());
    return counts;
  }
};

inline std::vector<EvaluationPoint> parse_labels(const std::string& path, int horizon_days) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::io, "cannot open label file: " + path);
  CsvReader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row) || row.size() != 3 || row[0] != "patient_id" ||
      row[1] != "anchor_time" || row[2] != "label")
    fail(ErrorCategory::parse, "label file must start with header patient_id,anchor_time,label");
  std::vector<EvaluationPoint> points;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    const std::string where = "label file line " + std::to_string(reader.line());
    if (row.size() != 3) fail(ErrorCategory::parse, where + ": expected 3 columns");
    EvaluationPoint p;
    p.patient_id = row[0];
    p.anchor_text = row[1];
    if (p.patient_id.empty()) fail(ErrorCategory::parse, where + ": empty patient_id");
    if (!parse_time_field(row[1], p.anchor_day))
      fail(ErrorCategory::parse, where + ": bad anchor_time '" + row[1] + "'");
    std::int64_t label = 0;
    if (!parse_int64(row[2], label) || label < 1)
      fail(ErrorCategory::parse, where + ": label must be a positive integer");
    p.label = static_cast<int>(label);
    p.horizon_days = horizon_days;
    points.push_back(std::move(p));
  }
  if (points.empty()) fail(ErrorCategory::data, "label file has no evaluation points: " + path);
  return points;
}

// Event file rows -> records. Malformed rows are reported, not fatal.
inline std::vector<EventRecord> parse_events(const std::string& path, const CodeHierarchy& hierarchy,
                                             const IngestOptions& options, IngestReport& report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::io, "cannot open event file: " + path);
  CsvReader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row) || row.size() != 5 || row[0] != "patient_id" || row[1] != "event_time" ||
      row[2] != "channel" || row[3] != "code" || row[4] != "value")
    fail(ErrorCategory::parse,
         "event file must start with header patient_id,event_time,channel,code,value");
  std::vector<EventRecord> records;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    ++report.rows_read;
    auto reject = [&](const std::string& msg) {
      report.issues.push_back({reader.line(), msg});
    };
    if (row.size() != 5) {
      reject("expected 5 columns, got " + std::to_string(row.size()));
      continue;
    }
    EventRecord rec;
    rec.patient_id = row[0];
    if (rec.patient_id.empty()) {
      reject("empty patient_id");
      continue;
    }
    if (!parse_time_field(row[1], rec.day)) {
      reject("bad event_time '" + row[1] + "' (ISO date or nonnegative day offset)");
      continue;
    }
    auto channel = parse_channel(row[2]);
    if (!channel) {
      reject("unknown channel '" + row[2] + "'");
      continue;
    }
    rec.channel = *channel;
    rec.code = row[3];
    if (rec.code.empty()) {
      reject("empty code");
      continue;
    }
    if (!parse_double(row[4], rec.value) || !std::isfinite(rec.value)) {
      reject("bad value '" + row[4] + "'");
      continue;
    }
    if (rec.value < 0) {
      reject("negative value " + row[4]);
      continue;
    }
    if (options.rollup_depth > 0 &&
        (rec.channel == Channel::diagnosis || rec.channel == Channel::procedure))
      rec.code = rollup_code(rec.code, hierarchy, options.rollup_depth);
    records.push_back(std::move(rec));
    ++report.records_kept;
  }
  return records;
}

// Assemble images from records and evaluation points. Only offsets within
// [0, history_days] are stored; events after the anchor never enter.
inline EventMatrixCollection build_matrices(const std::vector<EventRecord>& records,
                                            const std::vector<EvaluationPoint>& points,
                                            const IngestOptions& options, IngestReport& report) {
  std::unordered_map<std::string, std::vector<const EventRecord*>> by_patient;
  for (const auto& rec : records) by_patient[rec.patient_id].push_back(&rec);

  EventMatrixCollection collection;
  collection.history_days = options.history_days;
  collection.images.reserve(points.size());
  for (const auto& point : points) {
    EventImage img;
    img.patient_id = point.patient_id;
    img.anchor_text = point.anchor_text;
    img.anchor_day = point.anchor_day;
    img.label = point.label;
    img.history_days = options.history_days;
    auto it = by_patient.find(point.patient_id);
    if (it != by_patient.end()) {
      for (const EventRecord* rec : it->second) {
        std::int64_t offset = point.anchor_day - rec->day;
        if (offset < 0 || offset > options.history_days) {
          ++report.events_outside_window;
          continue;
        }
        img.series[{rec->channel, rec->code}].emplace_back(static_cast<int>(offset), rec->value);
      }
      for (auto& [key, entries] : img.series)
        std::stable_sort(entries.begin(), entries.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
    }
    collection.images.push_back(std::move(img));
  }
  return collection;
}

inline EventMatrixCollection ingest_events(const std::string& events_path,
                                           const std::string& labels_path,
                                           const CodeHierarchy& hierarchy,
                                           const IngestOptions& options, IngestReport& report) {
  auto points = parse_labels(labels_path, options.horizon_days);
  auto records = parse_events(events_path, hierarchy, options, report);
  return build_matrices(records, points, options, report);
}

// Codes occurring at most `min_occurrences` times across the collection are
// removed. Returns the filtered collection and the sorted drop list.
inline std::pair<EventMatrixCollection, std::vector<EventKey>> filter_rare_codes(
    const EventMatrixCollection& collection, std::int64_t min_occurrences) {
  if (min_occurrences < 1) fail(ErrorCategory::config, "min_occurrences must be >= 1");
  std::vector<EventKey> dropped;
  for (const auto& [key, count] : collection.code_counts())
    if (count <= min_occurrences) dropped.push_back(key);

  EventMatrixCollection out;
  out.history_days = collection.history_days;
  out.images.reserve(collection.images.size());
  std::set<EventKey> drop_set(dropped.begin(), dropped.end());
  for (const auto& img : collection.images) {
    EventImage copy = img;
    for (const auto& key : drop_set) copy.series.erase(key);
    out.images.push_back(std::move(copy));
  }
  return {std::move(out), std::move(dropped)};
}

// Apply a previously computed drop list; never consults this collection's own
// counts, so a training-fold list can be applied to held-out data.
inline EventMatrixCollection apply_drop_list(const EventMatrixCollection& collection,
                                             const std::vector<EventKey>& drop_list) {
  EventMatrixCollection out;
  out.history_days = collection.history_days;
  out.images.reserve(collection.images.size());
  for (const auto& img : collection.images) {
    EventImage copy = img;
    for (const auto& key : drop_list) copy.series.erase(key);
    out.images.push_back(std::move(copy));
  }
  return out;
}

// --- binary persistence ---------------------------------------------------
// Little-endian container: magic "OSEM", u32 version, then the images.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_i32(std::ostream& os, std::int32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) fail(ErrorCategory::parse, "truncated matrix container");
  return v;
}
inline std::string get_str(std::istream& is) {
  auto len = get_pod<std::uint32_t>(is);
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  if (!is) fail(ErrorCategory::parse, "truncated matrix container");
  return s;
}

}  // namespace detail

inline constexpr char kMatrixMagic[4] = {'O', 'S', 'E', 'M'};
inline constexpr std::uint32_t kMatrixFormatVersion = 1;

inline void save_matrix_collection(const std::string& path, const EventMatrixCollection& collection) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCategory::io, "cannot write matrix container: " + path);
  os.write(kMatrixMagic, 4);
  detail::put_u32(os, kMatrixFormatVersion);
  detail::put_i32(os, collection.history_days);
  detail::put_u64(os, collection.images.size());
  for (const auto& img : collection.images) {
    detail::put_str(os, img.patient_id);
    detail::put_str(os, img.anchor_text);
    detail::put_i64(os, img.anchor_day);
    detail::put_i32(os, img.label);
    detail::put_u64(os, img.series.size());
    for (const auto& [key, entries] : img.series) {
      os.put(static_cast<char>(key.channel));
      detail::put_str(os, key.code);
      detail::put_u64(os, entries.size());
      for (const auto& [offset, value] : entries) {
        detail::put_i32(os, offset);
        detail::put_f64(os, value);
      }
    }
  }
  if (!os) fail(ErrorCategory::io, "write failed: " + path);
}

inline EventMatrixCollection load_matrix_collection(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCategory::io, "cannot open matrix container: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMatrixMagic, 4) != 0)
    fail(ErrorCategory::parse, "not a matrix container: " + path);
  auto version = detail::get_pod<std::uint32_t>(is);
  if (version != kMatrixFormatVersion)
    fail(ErrorCategory::parse, "unsupported matrix container version " + std::to_string(version));
  EventMatrixCollection collection;
  collection.history_days = detail::get_pod<std::int32_t>(is);
  auto n_images = detail::get_pod<std::uint64_t>(is);
  collection.images.reserve(n_images);
  for (std::uint64_t i = 0; i < n_images; ++i) {
    EventImage img;
    img.patient_id = detail::get_str(is);
    img.anchor_text = detail::get_str(is);
    img.anchor_day = detail::get_pod<std::int64_t>(is);
    img.label = detail::get_pod<std::int32_t>(is);
    img.history_days = collection.history_days;
    auto n_series = detail::get_pod<std::uint64_t>(is);
    for (std::uint64_t s = 0; s < n_series; ++s) {
      EventKey key;
      key.channel = static_cast<Channel>(detail::get_pod<std::uint8_t>(is));
      key.code = detail::get_str(is);
      auto n_entries = detail::get_pod<std::uint64_t>(is);
      auto& entries = img.series[key];
      entries.reserve(n_entries);
      for (std::uint64_t e = 0; e < n_entries; ++e) {
        int offset = detail::get_pod<std::int32_t>(is);
        double value = detail::get_pod<double>(is);
        entries.emplace_back(offset, value);
      }
    }
    collection.images.push_back(std::move(img));
  }
  return collection;
}

}  // namespace ordstab
