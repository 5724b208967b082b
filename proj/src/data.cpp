#include "dln/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "dln/error.hpp"
#include "dln/init.hpp"
#include "dln/rng.hpp"

namespace dln {

Dataset::Dataset(Matrix x_in, Matrix y_in) : x(std::move(x_in)), y(std::move(y_in)) {
  if (x.empty() || y.empty()) throw ContractViolation("dataset needs at least one instance");
  if (x.cols() != y.cols()) throw ContractViolation("features and labels differ in instance count");
}

Moments empirical_moments(const Dataset& d) {
  const double inv_m = 1.0 / static_cast<double>(d.samples());
  Moments m;
  m.lxx = multiply_a_bt(d.x, d.x) * inv_m;
  m.lyx = multiply_a_bt(d.y, d.x) * inv_m;
  m.lyy = multiply_a_bt(d.y, d.y) * inv_m;
  m.opt_const = -0.5 * m.lyx.squared_norm() + 0.5 * trace(m.lyy);
  return m;
}

Whitened whiten(const Dataset& d) {
  const Matrix lxx = multiply_a_bt(d.x, d.x) * (1.0 / static_cast<double>(d.samples()));
  const SymEig eig = sym_eig(lxx);
  const double top = eig.values.front();
  const double bottom = eig.values.back();
  if (!(top > 0.0) || bottom <= 1e-10 * top) {
    std::ostringstream msg;
    msg << "feature covariance is rank deficient: eigenvalue " << std::setprecision(17) << bottom
        << " vs largest " << top;
    throw ContractViolation(msg.str());
  }
  const std::size_t n = eig.values.size();
  Matrix t(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += eig.q(i, k) * eig.q(j, k) / std::sqrt(eig.values[k]);
      t(i, j) = s;
      t(j, i) = s;
    }
  }
  Matrix xw = t * d.x;
  return {t, Dataset(std::move(xw), d.y)};
}

Dataset rescale_labels(const Dataset& d) {
  const Matrix lyx = multiply_a_bt(d.y, d.x) * (1.0 / static_cast<double>(d.samples()));
  const double norm = lyx.frobenius_norm();
  if (norm == 0.0) throw ContractViolation("labels are uncorrelated with features; cannot rescale");
  return Dataset(d.x, d.y * (1.0 / norm));
}

Problem problem_from_moments(const Moments& m) { return Problem{m.lyx, m.opt_const}; }

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

double parse_cell(std::string_view cell, std::size_t line, std::size_t col) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw IngestionError("column " + std::to_string(col + 1) + ": '" + std::string(cell) +
                             "' is not a number",
                         line);
  }
  if (!std::isfinite(v)) {
    throw IngestionError("column " + std::to_string(col + 1) + ": non-finite value", line);
  }
  return v;
}

}  // namespace

Dataset parse_csv(std::istream& in, const CsvLayout& layout) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  bool skipped_header = !layout.header;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    const auto cells = split(view);
    if (width == 0) {
      width = cells.size();
    } else if (cells.size() != width) {
      throw IngestionError("expected " + std::to_string(width) + " columns, found " +
                               std::to_string(cells.size()),
                           lineno);
    }
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) row[c] = parse_cell(cells[c], lineno, c);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IngestionError("no data rows");

  std::vector<std::size_t> features = layout.features;
  std::vector<std::size_t> labels = layout.labels;
  if (features.empty() && labels.empty()) {
    if (width < 2) throw IngestionError("need at least one feature and one label column");
    for (std::size_t c = 0; c + 1 < width; ++c) features.push_back(c);
    labels.push_back(width - 1);
  }
  if (features.empty() || labels.empty()) throw IngestionError("layout names no features or no labels");
  for (std::size_t c : features) {
    if (c >= width) throw IngestionError("feature column " + std::to_string(c) + " out of range");
  }
  for (std::size_t c : labels) {
    if (c >= width) throw IngestionError("label column " + std::to_string(c) + " out of range");
  }

  const std::size_t m = rows.size();
  Matrix x(features.size(), m);
  Matrix y(labels.size(), m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t f = 0; f < features.size(); ++f) x(f, i) = rows[i][features[f]];
    for (std::size_t l = 0; l < labels.size(); ++l) y(l, i) = rows[i][labels[l]];
  }
  return Dataset(std::move(x), std::move(y));
}

Dataset load_csv(const std::string& path, const CsvLayout& layout) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_csv(in, layout);
}

void write_csv(std::ostream& out, const Dataset& d, bool header) {
  if (header) {
    for (std::size_t f = 0; f < d.x.rows(); ++f) out << (f ? "," : "") << 'x' << f;
    for (std::size_t l = 0; l < d.y.rows(); ++l) out << ",y" << l;
    out << '\n';
  }
  out << std::setprecision(17);
  for (std::size_t i = 0; i < d.samples(); ++i) {
    for (std::size_t f = 0; f < d.x.rows(); ++f) out << (f ? "," : "") << d.x(f, i);
    for (std::size_t l = 0; l < d.y.rows(); ++l) out << ',' << d.y(l, i);
    out << '\n';
  }
}

void save_csv(const std::string& path, const Dataset& d, bool header) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_csv(out, d, header);
  if (!out) throw IoError("write failed for '" + path + "'");
}

SynthKind synth_kind_from_string(const std::string& name) {
  if (name == "random_gaussian_target" || name == "gaussian") return SynthKind::kRandomGaussianTarget;
  if (name == "near_identity") return SynthKind::kNearIdentity;
  if (name == "scalar_regression") return SynthKind::kScalarRegression;
  throw ContractViolation("unknown synthetic problem '" + name + "'");
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::kRandomGaussianTarget: return "random_gaussian_target";
    case SynthKind::kNearIdentity: return "near_identity";
    case SynthKind::kScalarRegression: return "scalar_regression";
  }
  return "unknown";
}

Dataset synth_regression_dataset(std::size_t dx, std::size_t m, std::uint64_t seed, double noise) {
  if (dx == 0 || m == 0) throw ContractViolation("synthetic dataset needs positive sizes");
  Rng rng(seed);
  Matrix mix = Matrix::identity(dx);
  mix.add_scaled(gaussian_matrix(dx, dx, 1.0, rng), 0.5 / std::sqrt(static_cast<double>(dx)));
  const Matrix x = mix * gaussian_matrix(dx, m, 1.0, rng);
  const Matrix beta = gaussian_matrix(1, dx, 1.0, rng);
  Matrix y = beta * x;
  y.add_scaled(gaussian_matrix(1, m, 1.0, rng), noise);
  return Dataset(x, y);
}

Problem synth_problem(SynthKind kind, std::size_t rows, std::size_t cols, std::uint64_t seed, double r) {
  if (rows == 0 || cols == 0) throw ContractViolation("synthetic target needs positive sizes");
  Rng rng(seed);
  switch (kind) {
    case SynthKind::kRandomGaussianTarget: {
      Matrix phi = gaussian_matrix(rows, cols, 1.0, rng);
      phi *= 1.0 / phi.frobenius_norm();
      return Problem{phi, 0.0};
    }
    case SynthKind::kNearIdentity: {
      if (rows != cols) throw ContractViolation("near_identity target must be square");
      if (!(r >= 0.0)) throw ContractViolation("near_identity radius must be >= 0");
      Matrix e = gaussian_matrix(rows, cols, 1.0, rng);
      e *= r / e.frobenius_norm();
      return Problem{Matrix::identity(rows) + e, 0.0};
    }
    case SynthKind::kScalarRegression: {
      if (rows != 1) throw ContractViolation("scalar_regression target has one output row");
      const Dataset raw = synth_regression_dataset(cols, 8 * cols, rng.next_u64());
      const Dataset ready = rescale_labels(whiten(raw).data);
      return problem_from_moments(empirical_moments(ready));
    }
  }
  throw ContractViolation("unknown synthetic problem kind");
}

}  // namespace dln
