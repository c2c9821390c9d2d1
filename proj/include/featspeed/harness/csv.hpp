#pragma once
// CSV tables with '#'-prefixed metadata lines and locale-independent,
// round-trippable number formatting.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace featspeed::harness {

/// Shortest representation that parses back to the same double.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string format_int(std::uint64_t x) { return std::to_string(x); }

inline constexpr std::string_view kTimestampKey = "generated_at";

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void add_meta(std::string key, std::string value) { meta_.emplace_back(std::move(key), std::move(value)); }

  /// Cells for one row, in column order.
  void add_row(std::vector<std::string> cells) {
    if (cells.size() != columns_.size()) throw std::invalid_argument("CsvTable: row width mismatch");
    rows_.push_back(std::move(cells));
  }

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  std::string str() const {
    std::ostringstream os;
    for (const auto& [k, v] : meta_) os << "# " << k << ": " << v << "\n";
    write_line(os, columns_);
    for (const auto& r : rows_) write_line(os, r);
    return os.str();
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << str();
    if (!out) throw std::runtime_error("write failed: " + path.string());
  }

 private:
  static void write_line(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os << ',';
      const bool quote = cells[i].find_first_of(",\"\n") != std::string::npos;
      if (!quote) {
        os << cells[i];
        continue;
      }
      os << '"';
      for (char c : cells[i]) {
        if (c == '"') os << '"';
        os << c;
      }
      os << '"';
    }
    os << '\n';
  }

  std::vector<std::string> columns_;
  std::vector<std::pair<std::string, std::string>> meta_;
  std::vector<std::vector<std::string>> rows_;
};

struct ParsedCsv {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw std::invalid_argument("missing column: " + std::string(name));
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

inline ParsedCsv parse_csv(const std::string& text) {
  ParsedCsv out;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header && line.rfind("# ", 0) == 0) {
      const auto colon = line.find(": ");
      if (colon != std::string::npos) out.meta.emplace_back(line.substr(2, colon - 2), line.substr(colon + 2));
      continue;
    }
    auto cells = split_csv_line(line);
    if (!header) {
      out.columns = std::move(cells);
      header = true;
    } else {
      if (cells.size() != out.columns.size()) throw std::invalid_argument("csv: ragged row");
      out.rows.push_back(std::move(cells));
    }
  }
  if (!header) throw std::invalid_argument("csv: missing header");
  return out;
}

inline ParsedCsv read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

/// File contents with the timestamp metadata line removed.
inline std::string strip_timestamp(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  const std::string prefix = "# " + std::string(kTimestampKey) + ":";
  while (std::getline(in, line))
    if (line.rfind(prefix, 0) != 0) out << line << '\n';
  return out.str();
}

inline double parse_number(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::invalid_argument("not a number: " + s);
  return v;
}

}  // namespace featspeed::harness
