// Minimal RFC-4180 CSV reading/writing and deterministic number formatting.
#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "ordstab/errors.hpp"

namespace ordstab {

// Shortest round-trip representation; identical bytes for identical doubles.
inline std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline bool parse_int64(std::string_view s, std::int64_t& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::string csv_escape(std::string_view field) {
  bool needs_quotes = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

template <typename Range>
void write_csv_row(std::ostream& os, const Range& fields) {
  bool first = true;
  for (const auto& f : fields) {
    if (!first) os << ',';
    os << csv_escape(f);
    first = false;
  }
  os << '\n';
}

// Streaming RFC-4180 reader. Records may span physical lines inside quoted
// fields; line() reports the line the current record started on.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  bool next(std::vector<std::string>& fields) {
    fields.clear();
    record_line_ = line_;
    int c = in_.get();
    if (c == EOF) return false;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    while (true) {
      if (c == EOF) {
        fields.push_back(field);
        return true;
      }
      any = true;
      char ch = static_cast<char>(c);
      if (in_quotes) {
        if (ch == '"') {
          int peek = in_.peek();
          if (peek == '"') {
            in_.get();
            field += '"';
          } else {
            in_quotes = false;
          }
        } else {
          if (ch == '\n') ++line_;
          field += ch;
        }
      } else if (ch == '"') {
        in_quotes = true;
      } else if (ch == ',') {
        fields.push_back(field);
        field.clear();
      } else if (ch == '\r') {
        // swallow; handled with the following '\n' if present
        if (in_.peek() == '\n') {
          in_.get();
          ++line_;
          fields.push_back(field);
          return true;
        }
        field += ch;
      } else if (ch == '\n') {
        ++line_;
        fields.push_back(field);
        return true;
      } else {
        field += ch;
      }
      c = in_.get();
    }
    (void)any;
  }

  std::size_t line() const { return record_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
  std::size_t record_line_ = 1;
};

}  // namespace ordstab
