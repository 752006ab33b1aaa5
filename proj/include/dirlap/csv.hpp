#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dirlap/composition.hpp"
#include "dirlap/design.hpp"
#include "dirlap/errors.hpp"

// Dataset CSV schema: one row per observation; response proportions in columns
// named y1..yC; every other column is a covariate, referenced by name from the
// formula.

namespace dirlap {

struct Table {
  std::vector<std::string> headers;
  std::vector<Eigen::VectorXd> columns;

  Eigen::Index n_rows() const { return columns.empty() ? 0 : columns[0].size(); }
  Eigen::Index n_cols() const { return static_cast<Eigen::Index>(columns.size()); }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_double(const std::string& s, Eigen::Index row,
                           const std::string& header) {
  double value = 0.0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end)
    throw validation_error("CSV: non-numeric value '" + s + "' in column '" +
                           header + "', data row " + std::to_string(row + 1));
  return value;
}

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line))
    throw validation_error("CSV: file '" + path + "' is empty");
  Table table;
  table.headers = detail::split_fields(line);
  if (table.headers.empty())
    throw validation_error("CSV: file '" + path + "' has no columns");
  std::vector<std::vector<double>> cols(table.headers.size());
  Eigen::Index row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != table.headers.size())
      throw validation_error("CSV: data row " + std::to_string(row + 1) +
                             " has " + std::to_string(fields.size()) +
                             " fields, expected " +
                             std::to_string(table.headers.size()));
    for (std::size_t c = 0; c < fields.size(); ++c)
      cols[c].push_back(detail::parse_double(fields[c], row, table.headers[c]));
    ++row;
  }
  if (row == 0)
    throw validation_error("CSV: file '" + path + "' has no data rows");
  for (auto& col : cols) {
    Eigen::VectorXd v =
        Eigen::Map<Eigen::VectorXd>(col.data(), static_cast<Eigen::Index>(col.size()));
    table.columns.push_back(std::move(v));
  }
  return table;
}

// Write columns with shortest round-trip formatting, so read_csv(write_csv(x))
// reproduces x bit-exactly.
inline void write_csv(const std::string& path,
                      const std::vector<std::string>& headers,
                      const std::vector<Eigen::VectorXd>& columns) {
  if (headers.size() != columns.size())
    throw shape_error("write_csv: header/column count mismatch");
  std::ofstream out(path);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  for (std::size_t c = 0; c < headers.size(); ++c)
    out << (c ? "," : "") << headers[c];
  out << "\n";
  const Eigen::Index n = columns.empty() ? 0 : columns[0].size();
  for (Eigen::Index r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c)
      out << (c ? "," : "") << detail::format_double(columns[c][r]);
    out << "\n";
  }
  if (!out) throw io_error("error while writing '" + path + "'");
}

// Split a dataset table into the C x N response matrix (columns y1..yC, which
// may still contain boundary 0/1 values) and the covariate table.
struct Dataset {
  Eigen::MatrixXd response;  // C x N, not yet validated/compressed
  CovariateTable covariates;
};

inline Dataset split_dataset(const Table& table) {
  std::vector<int> y_index(table.headers.size(), -1);
  int max_cat = 0;
  for (std::size_t c = 0; c < table.headers.size(); ++c) {
    const std::string& h = table.headers[c];
    if (h.size() >= 2 && h[0] == 'y') {
      bool digits = true;
      for (std::size_t i = 1; i < h.size(); ++i)
        if (h[i] < '0' || h[i] > '9') digits = false;
      if (digits) {
        y_index[c] = std::stoi(h.substr(1));
        max_cat = std::max(max_cat, y_index[c]);
      }
    }
  }
  if (max_cat < 2)
    throw validation_error(
        "dataset: need response columns y1..yC with C >= 2");
  std::vector<int> seen(max_cat + 1, 0);
  Dataset ds;
  ds.response.resize(max_cat, table.n_rows());
  for (std::size_t c = 0; c < table.headers.size(); ++c) {
    if (y_index[c] > 0) {
      if (y_index[c] < 1 || seen[y_index[c]]++)
        throw validation_error("dataset: duplicate response column '" +
                               table.headers[c] + "'");
      ds.response.row(y_index[c] - 1) = table.columns[c].transpose();
    } else {
      ds.covariates.add(table.headers[c], table.columns[c]);
    }
  }
  for (int k = 1; k <= max_cat; ++k)
    if (!seen[k])
      throw validation_error("dataset: missing response column y" +
                             std::to_string(k));
  return ds;
}

}  // namespace dirlap
