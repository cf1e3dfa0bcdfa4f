#ifndef TREELETS_CSV_HPP
#define TREELETS_CSV_HPP

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "treelets/errors.hpp"

namespace treelets::csv {

/// Malformed input; `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct Table {
  std::vector<std::string> header;
  Eigen::MatrixXd values;

  std::ptrdiff_t column(std::string_view name) const {
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (header[k] == name) return static_cast<std::ptrdiff_t>(k);
    }
    return -1;
  }
};

namespace detail {

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline bool parse_number(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = first + text.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace detail

/// Comma-separated, '.' decimal point, mandatory header row, one sample per
/// row. A first row made entirely of numbers is rejected as a missing header.
inline Table parse(std::istream& in) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) {
      if (lineno == 1) throw ParseError(1, "missing header row");
      continue;
    }
    auto cells = detail::split(line);
    for (auto& c : cells) c = detail::trim(c);
    if (t.header.empty()) {
      bool all_numeric = true;
      double dummy = 0.0;
      for (const auto& c : cells) all_numeric = all_numeric && detail::parse_number(c, dummy);
      if (all_numeric) throw ParseError(lineno, "missing header row");
      for (const auto& c : cells) {
        if (c.empty()) throw ParseError(lineno, "empty column name in header");
      }
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw ParseError(lineno, "expected " + std::to_string(t.header.size()) + " cells, found " +
                                   std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (!detail::parse_number(cells[k], row[k]) || !std::isfinite(row[k]))
        throw ParseError(lineno, "non-numeric cell '" + cells[k] + "' in column '" + t.header[k] + "'");
    }
    rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw ParseError(1, "missing header row");
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t k = 0; k < rows[r].size(); ++k)
      t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
  }
  return t;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidDataError("cannot open " + path);
  return parse(in);
}

/// 17 significant digits, so values round-trip exactly.
inline std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string write(const std::vector<std::string>& header, const Eigen::MatrixXd& values) {
  std::ostringstream out;
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
  out << '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index k = 0; k < values.cols(); ++k) out << (k ? "," : "") << number(values(r, k));
    out << '\n';
  }
  return out.str();
}

}  // namespace treelets::csv

#endif  // TREELETS_CSV_HPP
