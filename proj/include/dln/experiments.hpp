#pragma once

// Initialisation sweeps, Monte Carlo checks of the random-initialisation
// probabilities, and the two constructions on which gradient descent fails.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dln/matrix.hpp"
#include "dln/network.hpp"

namespace dln {

enum class InitScheme { kLayerwise, kBalanced, kIdentity };

InitScheme init_scheme_from_string(const std::string& name);
std::string to_string(InitScheme scheme);

/// Stack for `scheme` at std s (ignored for identity).
WeightStack make_init(const NetSpec& spec, InitScheme scheme, double s, std::uint64_t seed);

/// n log-spaced points from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, std::size_t n);

/// Nine log-spaced learning rates from 1e-4 to 1.
std::vector<double> default_lr_grid();

struct SweepOptions {
  std::vector<double> std_grid;
  std::vector<double> lr_grid = default_lr_grid();
  double eps = 1e-5;
  std::int64_t cap = 1000000;
  std::uint64_t seed = 0;
};

struct SweepCell {
  double s = 0.0;
  std::optional<double> best_lr;
  std::optional<std::int64_t> iterations;  // empty = no convergence within cap
  std::size_t runs = 0;                    // training runs actually launched
};

struct SweepResult {
  InitScheme scheme = InitScheme::kLayerwise;
  std::vector<std::size_t> dims;
  double eps = 0.0;
  std::int64_t cap = 0;
  std::vector<SweepCell> cells;

  std::size_t converged_count() const noexcept;
};

/// For every s, the fewest gradient steps to loss <= eps over lr_grid, from
/// one initialisation per s (seed derived from the grid index). Runs at later
/// learning rates are capped at the best count found so far.
SweepResult std_sweep(const NetSpec& spec, const Matrix& phi, InitScheme scheme,
                      const SweepOptions& options);

struct BalanceSeries {
  std::vector<std::int64_t> t;
  std::vector<double> loss;
  std::vector<double> min_gram;  // min_j ||W_j W_j^T||_F
  std::vector<double> delta;
};

BalanceSeries balancedness_trace(const NetSpec& spec, const Matrix& phi, InitScheme scheme,
                                 double s, double eta, std::int64_t steps, std::uint64_t seed,
                                 std::size_t stride = 1);

struct MCReport {
  std::size_t trials = 0;
  std::size_t successes = 0;
  double empirical_p = 0.0;
  double bound = 0.0;
  double slack = 0.0;        // 3 sqrt(p_hat (1 - p_hat) / trials)
  double bound_slack = 0.0;  // 3 sqrt(bound (1 - bound) / trials)
  std::string mode;

  /// empirical_p >= bound - max(slack, bound_slack).
  bool consistent() const noexcept;
};

double binomial_slack(double p, std::size_t trials);

/// max{0, 1 - 10 delta^{-2} N s^4 d_max^3}.
double balance_probability_bound(const NetSpec& spec, double s, double delta);

/// Fraction of layer-wise Gaussian stacks (std s) that are delta-balanced.
MCReport mc_balance_probability(const NetSpec& spec, double s, double delta, std::size_t trials,
                                std::uint64_t seed);

enum class MarginMode { kBalanced, kLayerwise };

MarginMode margin_mode_from_string(const std::string& name);
std::string to_string(MarginMode mode);

inline constexpr double kBalancedTargetProbability = 0.25;

/// Scalar-output (d_N = 1) margin frequency. Balanced mode counts margin >=
/// s^2 d_0 / (2 ||phi||_2) and is measured against 0.25; layer-wise mode
/// counts any positive margin and carries no bound.
MCReport mc_margin_probability(const NetSpec& spec, const Matrix& phi, MarginMode mode, double s,
                               std::size_t trials, std::uint64_t seed);

struct FailureReport {
  Matrix phi;
  double c = 0.0;          // after clamping
  double a_const = 0.0;    // A of the construction (unbalanced case)
  double initial_margin = 0.0;
  double floor = 0.0;
  TrainTrace trace;
  double min_loss_after_start = 0.0;  // min over t >= 1
  bool floor_held = false;
  bool strictly_increasing = false;   // unbalanced case
  bool guard_fired = false;
  std::optional<std::int64_t> guard_step;
  bool others_fixed = true;           // untouched diagonal entries stay at 1
  bool initial_gradient_nonzero = false;
  double max_diag_residual = 0.0;     // no-margin case
  bool verdict = false;
  std::string message;
};

/// A = max{sqrt(eta N), 2/(eta (1-c) c^{(N-1)/N}), 2000, 20/eta,
///         (20 10^{2N-1} / eta^{2N})^{1/(2N-2)}}.
double unbalanced_scale(double c, double eta, std::size_t depth);

/// Depth-N even, d x d identity target, wildly unbalanced start with margin c.
FailureReport failure_unbalanced(double c, double eta, std::size_t depth, std::size_t d,
                                 std::int64_t steps = 50);

/// Identity start on phi = diag(1, ..., 1, -lambda): loss never below
/// lambda^2 / 2.
FailureReport failure_no_margin(std::size_t d, std::size_t depth, double eta, double lambda,
                                std::int64_t steps);

}  // namespace dln
