#pragma once

// Continuous-time gradient flow of the end-to-end matrix of a balanced deep
// linear network, integrated with fixed steps, and its comparison against
// discrete gradient descent on the layers.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dln/matrix.hpp"
#include "dln/network.hpp"

namespace dln {

enum class Integrator { kEuler, kRk4 };

Integrator integrator_from_string(const std::string& name);
std::string to_string(Integrator integrator);

struct FlowConfig {
  std::size_t depth = 1;
  double h = 1e-3;
  double tau_max = 1.0;
  Integrator integrator = Integrator::kRk4;
  std::size_t record_stride = 1;

  /// 1e-3 * max(1, ||phi||_F)^{-2(N-1)/N}.
  static double default_step(std::size_t depth, double phi_fro);
  void validate() const;
};

/// -sum_{j=1}^{N} (W W^T)^{(N-j)/N} (W - phi) (W^T W)^{(j-1)/N}.
Matrix flow_rhs(const Matrix& w, const Matrix& phi, std::size_t depth);

enum class FlowStatus { kCompleted, kFailed };

struct FlowTrajectory {
  std::vector<double> tau;
  std::vector<double> loss;       // 1/2 ||W(tau) - phi||_F^2
  std::vector<double> sigma_min;  // of W(tau)
  std::vector<Matrix> states;
  FlowStatus status = FlowStatus::kCompleted;
};

/// Fixed-step integration of dW/dtau = flow_rhs(W) over [0, tau_max],
/// recording every `record_stride` steps (and the final state).
FlowTrajectory integrate_flow(const Matrix& w0, const Matrix& phi, const FlowConfig& cfg);

/// Advances `w` by one step of size h.
Matrix flow_step(const Matrix& w, const Matrix& phi, std::size_t depth, double h, Integrator integrator);

struct FlowComparison {
  double max_deviation = 0.0;    // max_t ||W_gd(t) - W_flow(eta t)||_F / max(1, ||phi||_F)
  double final_deviation = 0.0;
  std::size_t substeps = 1;      // flow steps per gradient step
  std::vector<double> tau;
  std::vector<double> deviation;
  std::vector<double> gd_loss;
  std::vector<double> flow_loss;
  std::vector<double> flow_sigma_min;
};

/// Runs `steps` gradient steps on a 0-balanced stack alongside the flow from
/// its end-to-end matrix, aligned at tau = eta * t. The flow step is the
/// largest h' <= cfg.h that divides eta.
FlowComparison compare_flow_gd(const WeightStack& w0, const Matrix& phi, double eta,
                               std::int64_t steps, const FlowConfig& cfg,
                               std::size_t checkpoint_stride = 1);

}  // namespace dln
