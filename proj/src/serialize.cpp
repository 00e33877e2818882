#include "szsdg/serialize.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace szsdg {

std::string format_double(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

namespace {

std::string csv_impl(const std::vector<double>& grid,
                     const std::vector<double>& values, int dim) {
  std::string out = "time";
  for (int c = 0; c < dim; ++c) out += ",v" + std::to_string(c);
  out += "\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out += format_double(grid[i]);
    for (int c = 0; c < dim; ++c)
      out += "," + format_double(values[i * dim + c]);
    out += "\n";
  }
  return out;
}

struct Table {
  std::vector<double> grid, values;
  int dim = 0;
};

Table parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("csv: empty input");
  int dim = 0;
  {
    std::istringstream hs(line);
    std::string col;
    bool first = true;
    while (std::getline(hs, col, ',')) {
      if (first) {
        if (col != "time")
          throw std::invalid_argument("csv: first column must be 'time'");
        first = false;
      } else {
        ++dim;
      }
    }
  }
  if (dim == 0) throw std::invalid_argument("csv: no value columns");
  Table t;
  t.dim = dim;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    int col = 0;
    while (std::getline(ls, cell, ',')) {
      double x = 0.0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), x);
      if (res.ec != std::errc())
        throw std::invalid_argument("csv: bad number '" + cell + "'");
      if (col == 0)
        t.grid.push_back(x);
      else
        t.values.push_back(x);
      ++col;
    }
    if (col != dim + 1)
      throw std::invalid_argument("csv: inconsistent column count");
  }
  return t;
}

}  // namespace

std::string to_csv(const Path& p) {
  return csv_impl(p.grid(), p.raw_values(), p.dim());
}

std::string to_csv(const CadlagPath& p) {
  return csv_impl(p.grid(), p.raw_values(), p.dim());
}

Path path_from_csv(const std::string& text) {
  Table t = parse_csv(text);
  return Path(std::move(t.grid), std::move(t.values), t.dim);
}

CadlagPath cadlag_from_csv(const std::string& text, double t_end) {
  Table t = parse_csv(text);
  return CadlagPath(std::move(t.grid), std::move(t.values), t.dim, t_end);
}

namespace {

nlohmann::json values_matrix(const std::vector<double>& values, int dim) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i * dim < values.size(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < dim; ++c) row.push_back(values[i * dim + c]);
    rows.push_back(row);
  }
  return rows;
}

void matrix_values(const nlohmann::json& rows, std::vector<double>& values,
                   int& dim) {
  if (!rows.is_array() || rows.empty())
    throw std::invalid_argument("path json: values must be non-empty array");
  dim = static_cast<int>(rows[0].size());
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != dim)
      throw std::invalid_argument("path json: ragged values");
    for (const auto& x : row) values.push_back(x.get<double>());
  }
}

}  // namespace

nlohmann::json to_json(const Path& p) {
  return {{"grid", p.grid()},
          {"values", values_matrix(p.raw_values(), p.dim())},
          {"kind", "continuous"}};
}

nlohmann::json to_json(const CadlagPath& p) {
  return {{"grid", p.grid()},
          {"values", values_matrix(p.raw_values(), p.dim())},
          {"kind", "cadlag"},
          {"t_end", p.t_end()}};
}

Path path_from_json(const nlohmann::json& j) {
  if (j.at("kind").get<std::string>() != "continuous")
    throw std::invalid_argument("path json: kind mismatch");
  std::vector<double> grid = j.at("grid").get<std::vector<double>>();
  std::vector<double> values;
  int dim = 0;
  matrix_values(j.at("values"), values, dim);
  return Path(std::move(grid), std::move(values), dim);
}

CadlagPath cadlag_from_json(const nlohmann::json& j) {
  if (j.at("kind").get<std::string>() != "cadlag")
    throw std::invalid_argument("path json: kind mismatch");
  std::vector<double> grid = j.at("grid").get<std::vector<double>>();
  std::vector<double> values;
  int dim = 0;
  matrix_values(j.at("values"), values, dim);
  double t_end = j.contains("t_end") ? j.at("t_end").get<double>() : -1.0;
  return CadlagPath(std::move(grid), std::move(values), dim, t_end);
}

}  // namespace szsdg
