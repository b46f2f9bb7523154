#ifndef SBTREES_CSV_HPP
#define SBTREES_CSV_HPP

#include "sbtrees/core.hpp"

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace sbtrees {

// Numeric CSV table: comma separator, mandatory header row, '.' decimal
// point.  Every data cell must parse as a finite number; offending rows are
// reported by 1-based line number.
struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;  // rows x columns

  int column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<int>(j);
    return -1;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline bool parse_cell(const std::string& raw, double& out) {
  const std::string cell = trim(raw);
  if (cell.empty()) return false;
  const char* first = cell.data();
  const char* last = first + cell.size();
  const auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc() || res.ptr != last) return false;
  return std::isfinite(out);
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error(path + " is empty");
  CsvTable table;
  for (const std::string& cell : detail::split_csv_line(line)) {
    const std::string name = detail::trim(cell);
    if (name.empty()) throw data_error(path + " has an empty column name");
    table.header.push_back(name);
  }
  const std::size_t cols = table.header.size();

  std::vector<double> data;
  std::vector<long> bad_rows;
  long line_no = 1, rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != cols)
      throw data_error(path + " line " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(cols));
    bool ok = true;
    for (const std::string& cell : cells) {
      double v = 0.0;
      if (!detail::parse_cell(cell, v)) ok = false;
      data.push_back(v);
    }
    if (!ok) bad_rows.push_back(line_no);
    ++rows;
  }
  if (!bad_rows.empty()) {
    std::string msg = path + " has non-numeric or missing cells on line(s)";
    for (std::size_t i = 0; i < bad_rows.size() && i < 20; ++i)
      msg += " " + std::to_string(bad_rows[i]);
    if (bad_rows.size() > 20) msg += " ...";
    throw data_error(msg);
  }
  if (rows == 0) throw data_error(path + " has a header but no data rows");
  table.values.resize(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) table.values(i, j) = data[i * cols + j];
  return table;
}

// Writes a numeric table with enough digits to round-trip doubles exactly.
inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const Eigen::MatrixXd& values) {
  if (static_cast<Eigen::Index>(header.size()) != values.cols())
    throw domain_error("csv header length does not match column count");
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  for (std::size_t j = 0; j < header.size(); ++j)
    out << (j ? "," : "") << header[j];
  out << "\n";
  char buf[64];
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), values(i, j),
                                     std::chars_format::general, 17);
      if (j) out << ',';
      out.write(buf, res.ptr - buf);
    }
    out << "\n";
  }
  if (!out) throw data_error("failed while writing " + path);
}

// String CSV (used for the predictor-to-group mapping file).
inline std::vector<std::vector<std::string>> read_csv_strings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    for (std::string& c : cells) c = detail::trim(c);
    out.push_back(std::move(cells));
  }
  if (out.empty()) throw data_error(path + " is empty");
  return out;
}

}  // namespace sbtrees

#endif
