#pragma once

// Balancedness / deficiency-margin diagnostics and the numeric convergence
// certificates for gradient descent on deep linear networks.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dln/matrix.hpp"
#include "dln/network.hpp"

namespace dln {

/// max_j ||W_{j+1}^T W_{j+1} - W_j W_j^T||_F over adjacent layer pairs; 0 for depth 1.
double balancedness_delta(const WeightStack& w);

/// sigma_min(phi) - ||W - phi||_F. Positive means W has that deficiency margin.
double deficiency_margin(const Matrix& w, const Matrix& phi);

/// Every W' at least as close to phi as the margin allows is c-bounded away
/// from singularity. Reports whether that held for one W'.
struct MarginWitness {
  double sigma_min = 0.0;
  double distance = 0.0;
  bool hypothesis = false;  // ||W' - phi||_F <= sigma_min(phi) - c
  bool holds = false;       // sigma_min(W') >= c
};
MarginWitness margin_implies_sigma(const Matrix& w_prime, const Matrix& phi, double c);

/// Closed-form quantities of the linear-rate guarantee for given scalars.
struct RateBounds {
  double required_delta = 0.0;  // c^2 / (256 N^3 ||phi||_F^{2(N-1)/N})
  double eta_max = 0.0;         // c^{(4N-2)/N} / (6144 N^3 ||phi||_F^{(6N-4)/N})
  double rate_exponent = 0.0;   // 2(N-1)/N
};
RateBounds rate_bounds(double c, std::size_t depth, double phi_fro);

/// ceil( ln(loss0 / eps) / (eta * c^{2(N-1)/N}) ), or 0 when loss0 <= eps.
std::int64_t iteration_bound(double c, std::size_t depth, double eta, double loss0, double eps);

struct Certificate {
  std::size_t depth = 0;
  double margin = 0.0;           // c
  double phi_fro = 0.0;
  double loss0 = 0.0;
  double eps = 0.0;
  double observed_delta = 0.0;
  double required_delta = 0.0;
  double eta_max = 0.0;
  std::int64_t t_bound_at_eta_max = 0;
  bool margin_positive = false;
  bool balanced_enough = false;
  bool full_rank_capable = false;
  bool satisfied = false;

  /// Iteration count after which loss <= eps at learning rate eta.
  std::int64_t t_bound(double eta, double eps) const;
  /// l(0) (1 - eta c^{2(N-1)/N})^t.
  double envelope(double eta, std::int64_t t) const;
};

Certificate theorem1_certificate(const WeightStack& w0, const Matrix& phi, double eps);

struct TrajectoryReport {
  std::size_t checked_steps = 0;
  std::size_t descent_failures = 0;
  std::size_t balance_failures = 0;
  std::size_t norm_failures = 0;
  std::size_t margin_failures = 0;
  std::size_t envelope_failures = 0;
  std::optional<std::int64_t> first_failure;
  double worst_descent_residual = 0.0;  // max of l(t+1) - l(t) + eta sigma^{..} l(t) - tol
  double max_delta = 0.0;
  double max_layer_norm = 0.0;
  double min_margin = 0.0;
  double layer_norm_bound = 0.0;
  double delta_bound = 0.0;
  bool passed = false;
};

inline constexpr double kDescentAbsTol = 1e-12;
inline constexpr double kDescentRelTol = 1e-9;

/// Checks a recorded run against the per-step descent inequality, the
/// 2*delta balancedness, spectral-norm and margin conditions, and the
/// geometric loss envelope. Requires delta, sigma_min, margin and layer-norm
/// monitors in the trace.
TrajectoryReport verify_trajectory(const TrainTrace& trace, const Matrix& phi, double eta,
                                   const Certificate& cert);

/// Certificate for balanced initialisation with scalar output (d_N = 1).
struct BalancedInitCertificate {
  std::size_t depth = 0;
  std::size_t input_dim = 0;
  double phi_spectral = 0.0;
  double init_std = 0.0;
  double eps = 0.0;
  double d0_min = 100.0;
  double a = 100.0;
  double eta_max = 0.0;
  double t_bound = 0.0;      // at eta_max
  double success_probability = 0.0;  // (1 - 2 e^{-d0/16}) (3 - 4 F(2/sqrt(a/2))) / 2
  double margin_threshold = 0.0;     // s^2 d_0 / (2 ||phi||_2)
  bool input_dim_ok = false;
  bool std_in_range = false;
  bool satisfied = false;

  /// (4/eta)(ln 4 (||phi||/(s^2 d0))^{2-2/N} + ||phi||^{2/N-2} ln(||phi||^2/(8 eps))).
  double iterations(double eta) const;
};

BalancedInitCertificate theorem2_certificate(const NetSpec& spec, const Matrix& phi, double s,
                                             double eps, double d0_min = 100.0, double a = 100.0);

/// Standard normal CDF.
double normal_cdf(double x);

/// ||W_{1:j}^T W_{1:j} - (W_1^T W_1)^j||_F against (3/2) nu M^{2(j-1)} j^2 and
/// the mirrored output-side bound, for every j. `nu` and `m` default to the
/// stack's own balancedness and largest layer norm.
struct CommuteBoundCheck {
  double nu = 0.0;
  double m = 0.0;
  double worst_ratio = 0.0;  // max lhs / rhs over all j and both sides
  bool holds = false;
};
CommuteBoundCheck commute_bound_check(const WeightStack& w);

/// For nu <= C^{2/N} / (30 N^2) and ||W_{1:N}||_2 <= C, each ||W_j||_2 <=
/// C^{1/N} 2^{1/(2N)}. `applicable` is false if the stack misses the premise.
struct LayerNormBoundCheck {
  double nu = 0.0;
  double c = 0.0;
  double bound = 0.0;
  double max_layer_norm = 0.0;
  bool applicable = false;
  bool holds = false;
};
LayerNormBoundCheck layer_norm_bound_check(const WeightStack& w, double c);

}  // namespace dln
