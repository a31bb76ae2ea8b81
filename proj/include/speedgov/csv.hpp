#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "speedgov/core.hpp"

namespace speedgov {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string strip(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return s.substr(a, b - a);
}

inline bool parse_double(std::string_view tok, double& out) {
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
  if (begin == end) return false;
  auto [p, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc{} || p != end) {
    // from_chars on libstdc++ handles inf/nan, but be explicit about empties
    return false;
  }
  return true;
}

// In-memory CSV table with a named header. Quoting is not supported: no field
// in any of the file formats here may contain a comma.
class CsvTable {
 public:
  static CsvTable read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return read_string(ss.str());
  }

  static CsvTable read_string(const std::string& text) {
    CsvTable t;
    std::size_t start = 0;
    bool header_done = false;
    while (start <= text.size()) {
      std::size_t eol = text.find('\n', start);
      if (eol == std::string::npos) eol = text.size();
      std::string line = text.substr(start, eol - start);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      start = eol + 1;
      if (line.empty()) {
        if (start > text.size()) break;
        continue;
      }
      if (!header_done) {
        for (auto& h : split(line, ',')) {
          t.col_index_[strip(h)] = t.header_.size();
          t.header_.push_back(strip(h));
        }
        header_done = true;
      } else {
        t.rows_.push_back(split(line, ','));
      }
    }
    if (!header_done) throw SchemaError("empty file: header row required");
    return t;
  }

  std::size_t n_rows() const { return rows_.size(); }
  const std::vector<std::string>& header() const { return header_; }

  bool has_column(const std::string& name) const {
    return col_index_.count(name) > 0;
  }

  std::size_t column(const std::string& name) const {
    auto it = col_index_.find(name);
    if (it == col_index_.end())
      throw SchemaError("missing required column: " + name);
    return it->second;
  }

  const std::string& cell(std::size_t row, std::size_t col) const {
    const auto& r = rows_[row];
    static const std::string empty;
    return col < r.size() ? r[col] : empty;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::unordered_map<std::string, std::size_t> col_index_;
};

// Writer with explicit numeric formatting so outputs are reproducible.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> cells) { rows_.push_back(std::move(cells)); }

  static std::string fmt(double x, int precision = 9) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, x);
    return buf;
  }

  // Shortest decimal that parses back to the same double.
  static std::string fmt_exact(double x) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, p);
  }

  static std::string fmt_int(long long x) { return std::to_string(x); }

  std::string to_string() const {
    std::string out = join(header_);
    for (const auto& r : rows_) out += join(r);
    return out;
  }

  void write_file(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SchemaError("cannot write file: " + path);
    f << to_string();
  }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    line += '\n';
    return line;
  }
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace speedgov
