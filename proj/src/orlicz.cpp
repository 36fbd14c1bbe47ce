#include "galflow/orlicz.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace galflow {

namespace {

std::string format_real(real_t v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

SampleFamily family_inverse_sqrt(int n_cells) {
  if (n_cells < 4) throw std::invalid_argument("family_inverse_sqrt: need at least 4 cells");
  SampleFamily family;
  family.cell_measure = real_t(1) / n_cells;
  Eigen::VectorXd f(n_cells);
  for (int i = 0; i < n_cells; ++i) {
    const real_t x = (i + real_t(0.5)) * family.cell_measure;
    f[i] = real_t(1) / std::sqrt(x);
  }
  family.members.push_back(std::move(f));
  return family;
}

SampleFamily family_spike(int count) {
  if (count < 2 || count > 24) throw std::invalid_argument("family_spike: count must lie in [2, 24]");
  const long long cells = 1LL << (count - 1);
  SampleFamily family;
  family.cell_measure = real_t(1) / static_cast<real_t>(cells);
  for (int k = 0; k < count; ++k) {
    const long long height = 1LL << k;
    const long long support = cells / height;  // cells covering [0, 1/height]
    Eigen::VectorXd f = Eigen::VectorXd::Zero(cells);
    f.head(support).setConstant(static_cast<real_t>(height));
    family.members.push_back(std::move(f));
  }
  return family;
}

SampleFamily load_family_csv(const std::string& path, real_t cell_measure) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_family_csv: cannot open " + path);

  std::vector<std::vector<real_t>> columns;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<real_t> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t used = 0;
        const real_t v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) throw std::invalid_argument("trailing characters");
        row.push_back(v);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": not a number: '" + cell + "'");
      }
    }
    if (row.empty())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty row");
    if (columns.empty()) columns.resize(row.size());
    if (row.size() != columns.size())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(columns.size()) + " columns, found " +
                               std::to_string(row.size()));
    for (size_t c = 0; c < row.size(); ++c) columns[c].push_back(row[c]);
  }
  if (columns.empty() || columns[0].empty())
    throw std::runtime_error("load_family_csv: no data rows in " + path);

  SampleFamily family;
  const size_t rows = columns[0].size();
  family.cell_measure = cell_measure > 0 ? cell_measure : real_t(1) / static_cast<real_t>(rows);
  for (auto& col : columns) {
    Eigen::VectorXd f(rows);
    for (size_t i = 0; i < rows; ++i) f[static_cast<Eigen::Index>(i)] = col[i];
    family.members.push_back(std::move(f));
  }
  family.validate();
  return family;
}

void save_family_csv(const SampleFamily& family, const std::string& path) {
  family.validate();
  const Eigen::Index rows = family.members.front().size();
  for (const auto& f : family.members)
    if (f.size() != rows)
      throw std::invalid_argument("save_family_csv: members must share one grid");

  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_family_csv: cannot open " + path);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (size_t n = 0; n < family.members.size(); ++n) {
      if (n) out << ',';
      out << format_real(family.members[n][i]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_family_csv: write failed for " + path);
}

void save_young_csv(const YoungFunction& young, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_young_csv: cannot open " + path);
  out << "breakpoint,slope_after,value\n";
  for (size_t k = 0; k < young.thresholds.size(); ++k) {
    const long long c = young.thresholds[k];
    out << c << ',' << (k + 1) << ',' << format_real(young.value(static_cast<real_t>(c))) << '\n';
  }
  if (!out) throw std::runtime_error("save_young_csv: write failed for " + path);
}

}  // namespace galflow
