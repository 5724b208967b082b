#pragma once

// Regression datasets, their second moments, whitening and label rescaling,
// CSV ingestion and synthetic targets.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dln/matrix.hpp"
#include "dln/network.hpp"

namespace dln {

/// Instances in columns: x is d_x x m, y is d_y x m.
struct Dataset {
  Matrix x;
  Matrix y;

  Dataset(Matrix x, Matrix y);
  std::size_t samples() const noexcept { return x.cols(); }
};

struct Moments {
  Matrix lxx;  // (1/m) X X^T
  Matrix lyx;  // (1/m) Y X^T
  Matrix lyy;  // (1/m) Y Y^T
  double opt_const = 0.0;  // -1/2 Tr(lyx lyx^T) + 1/2 Tr(lyy)
};

Moments empirical_moments(const Dataset& d);

struct Whitened {
  Matrix transform;  // lxx^{-1/2}
  Dataset data;
};

/// Symmetric inverse square root whitening. Throws ContractViolation when
/// lxx has an eigenvalue <= 1e-10 * its largest.
Whitened whiten(const Dataset& d);

/// Y / ||lyx||_F so the cross-covariance has unit Frobenius norm.
Dataset rescale_labels(const Dataset& d);

/// Target and constant of the whitened objective.
Problem problem_from_moments(const Moments& m);

/// Column roles in a CSV file, 0-based. Empty feature and label lists mean
/// "all columns but the last are features, the last is the label".
struct CsvLayout {
  std::vector<std::size_t> features;
  std::vector<std::size_t> labels;
  bool header = false;
};

Dataset parse_csv(std::istream& in, const CsvLayout& layout);
Dataset load_csv(const std::string& path, const CsvLayout& layout);

/// One row per instance, features then labels, 17 significant digits.
void write_csv(std::ostream& out, const Dataset& d, bool header = true);
void save_csv(const std::string& path, const Dataset& d, bool header = true);

enum class SynthKind { kRandomGaussianTarget, kNearIdentity, kScalarRegression };

SynthKind synth_kind_from_string(const std::string& name);
std::string to_string(SynthKind kind);

/// random_gaussian_target: i.i.d. normal rows x cols target scaled to unit
/// Frobenius norm. near_identity: I + E with ||E||_F = r (square only).
/// scalar_regression: 1 x cols target from a whitened, label-rescaled
/// synthetic dataset (see synth_regression_dataset).
Problem synth_problem(SynthKind kind, std::size_t rows, std::size_t cols, std::uint64_t seed,
                      double r = 0.3);

/// Correlated Gaussian features (d_x x m) with a noisy linear scalar label.
Dataset synth_regression_dataset(std::size_t dx, std::size_t m, std::uint64_t seed,
                                 double noise = 0.1);

}  // namespace dln
