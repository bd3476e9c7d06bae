#ifndef TAILVC_IO_HPP
#define TAILVC_IO_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "tailvc/errors.hpp"
#include "tailvc/model.hpp"
#include "tailvc/random.hpp"

namespace tailvc {

// Shortest representation that parses back to the identical double, so
// emitted tables round-trip exactly.
inline std::string format_double(double value) {
  char buffer[32];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

inline double parse_double(std::string_view text, std::size_t row, std::size_t col) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    fail(ErrorKind::parse_error, "row " + std::to_string(row) + ", column " +
                                     std::to_string(col) + ": not a number: '" +
                                     std::string(text) + "'");
  return value;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    fail(ErrorKind::invalid_config, "column '" + name + "' not found in input");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::file_not_found, path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::parse_error, "empty file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  table.header = split_csv_line(line);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != table.header.size())
      fail(ErrorKind::parse_error, "row " + std::to_string(row) + ": expected " +
                                       std::to_string(table.header.size()) + " cells, got " +
                                       std::to_string(cells.size()));
    table.rows.push_back(std::move(cells));
  }
  return table;
}

// Rank-based mapping of a column onto fixed standard-normal quantiles
// Phi^-1((r - 3/8)/(n + 1/4)), ranks taken after a seeded uniform jitter of
// magnitude half the smallest nonzero gap.
inline std::vector<double> normal_score_transform(const std::vector<double>& column, Rng& rng) {
  const std::size_t n = column.size();
  if (n == 0) fail(ErrorKind::empty_input, "empty column");

  std::vector<double> sorted(column);
  std::sort(sorted.begin(), sorted.end());
  double smallest_gap = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double gap = sorted[i] - sorted[i - 1];
    if (gap > 0.0 && (smallest_gap == 0.0 || gap < smallest_gap)) smallest_gap = gap;
  }
  const double eps = 0.5 * smallest_gap;

  std::vector<double> jittered(n);
  for (std::size_t i = 0; i < n; ++i)
    jittered[i] = column[i] + (eps > 0.0 ? rng.uniform(-eps / 2.0, eps / 2.0) : 0.0);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (jittered[a] != jittered[b]) return jittered[a] < jittered[b];
    return a < b;
  });

  std::vector<double> out(n);
  for (std::size_t rank = 0; rank < n; ++rank) {
    const double prob = (static_cast<double>(rank) + 1.0 - 0.375) /
                        (static_cast<double>(n) + 0.25);
    out[order[rank]] = norm_ppf(prob);
  }
  return out;
}

struct ColumnMapping {
  std::string response;
  std::vector<std::string> x_cols;
  std::vector<std::string> t_cols;
};

struct IngestResult {
  Dataset data;         // t rescaled onto [0,1]^q
  TRescaling rescaling;
  ColumnMapping mapping;
};

// CSV ingestion: parse the mapped columns, apply normal scores to the
// requested x columns, validate and rescale t.
inline IngestResult ingest_csv(const std::string& path, const ColumnMapping& mapping,
                               const std::vector<std::string>& normal_score_cols = {},
                               std::uint64_t seed = 0) {
  const CsvTable table = read_csv(path);
  if (mapping.t_cols.empty())
    fail(ErrorKind::invalid_config, "at least one t column is required");
  if (table.rows.empty()) fail(ErrorKind::empty_dataset, "no data rows in " + path);

  {
    std::vector<std::string> all{mapping.response};
    all.insert(all.end(), mapping.x_cols.begin(), mapping.x_cols.end());
    all.insert(all.end(), mapping.t_cols.begin(), mapping.t_cols.end());
    for (std::size_t a = 0; a < all.size(); ++a)
      for (std::size_t b = a + 1; b < all.size(); ++b)
        if (all[a] == all[b])
          fail(ErrorKind::invalid_config, "column '" + all[a] + "' mapped twice");
  }

  const std::size_t n = table.rows.size();
  auto parse_column = [&](const std::string& name) {
    const std::size_t c = table.column(name);
    std::vector<double> out(n);
    for (std::size_t r = 0; r < n; ++r) out[r] = parse_double(table.rows[r][c], r + 2, c + 1);
    return out;
  };

  Dataset data;
  {
    const std::vector<double> y = parse_column(mapping.response);
    data.y.resize(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) data.y[static_cast<Eigen::Index>(r)] = y[r];
  }
  data.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(mapping.x_cols.size()));
  for (std::size_t j = 0; j < mapping.x_cols.size(); ++j) {
    std::vector<double> col = parse_column(mapping.x_cols[j]);
    bool transform = false;
    for (const std::string& name : normal_score_cols)
      if (name == "all" || name == mapping.x_cols[j]) transform = true;
    if (transform) {
      Rng rng(derive_seed(seed, 0xA5C0 + j));
      col = normal_score_transform(col, rng);
    }
    for (std::size_t r = 0; r < n; ++r)
      data.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = col[r];
  }
  data.t.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(mapping.t_cols.size()));
  for (std::size_t k = 0; k < mapping.t_cols.size(); ++k) {
    const std::vector<double> col = parse_column(mapping.t_cols[k]);
    for (std::size_t r = 0; r < n; ++r)
      data.t(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = col[r];
  }

  validate_dataset(data);
  auto [rescaled, map] = rescale_t_to_unit_cube(data);
  return IngestResult{std::move(rescaled), std::move(map), mapping};
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::file_not_found, "cannot open for writing: " + path);
  for (const std::string& line : lines) out << line << "\n";
}

}  // namespace tailvc

#endif
