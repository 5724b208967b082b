#include "dln/flow.hpp"

#include <algorithm>
#include <cmath>

#include "dln/error.hpp"
#include "dln/theory.hpp"

namespace dln {

Integrator integrator_from_string(const std::string& name) {
  if (name == "euler") return Integrator::kEuler;
  if (name == "rk4") return Integrator::kRk4;
  throw ContractViolation("unknown integrator '" + name + "' (expected euler or rk4)");
}

std::string to_string(Integrator integrator) {
  return integrator == Integrator::kEuler ? "euler" : "rk4";
}

double FlowConfig::default_step(std::size_t depth, double phi_fro) {
  const double n = static_cast<double>(depth);
  return 1e-3 * std::pow(std::max(1.0, phi_fro), -2.0 * (n - 1.0) / n);
}

void FlowConfig::validate() const {
  if (depth < 1) throw ContractViolation("flow depth must be >= 1");
  if (!(h > 0.0) || !(tau_max > 0.0)) throw ContractViolation("flow step and horizon must be positive");
  if (h > tau_max) throw ContractViolation("flow step exceeds the horizon");
}

Matrix flow_rhs(const Matrix& w, const Matrix& phi, std::size_t depth) {
  if (!w.same_shape(phi)) throw ContractViolation("flow_rhs: shape mismatch");
  if (depth < 1) throw ContractViolation("flow_rhs: depth must be >= 1");
  const Matrix grad = w - phi;
  if (depth == 1) return grad * -1.0;

  const double n = static_cast<double>(depth);
  const SymEig left = sym_eig(multiply_a_bt(w, w));
  const SymEig right = sym_eig(multiply_at_b(w, w));
  Matrix out(w.rows(), w.cols());
  for (std::size_t j = 1; j <= depth; ++j) {
    const Matrix l = psd_power(left, static_cast<double>(depth - j) / n);
    const Matrix r = psd_power(right, static_cast<double>(j - 1) / n);
    out -= multiply3(l, grad, r);
  }
  return out;
}

Matrix flow_step(const Matrix& w, const Matrix& phi, std::size_t depth, double h, Integrator integrator) {
  if (integrator == Integrator::kEuler) {
    Matrix next = w;
    return next.add_scaled(flow_rhs(w, phi, depth), h);
  }
  const Matrix k1 = flow_rhs(w, phi, depth);
  Matrix tmp = w;
  const Matrix k2 = flow_rhs(tmp.add_scaled(k1, 0.5 * h), phi, depth);
  tmp = w;
  const Matrix k3 = flow_rhs(tmp.add_scaled(k2, 0.5 * h), phi, depth);
  tmp = w;
  const Matrix k4 = flow_rhs(tmp.add_scaled(k3, h), phi, depth);
  Matrix next = w;
  next.add_scaled(k1, h / 6.0).add_scaled(k2, h / 3.0).add_scaled(k3, h / 3.0).add_scaled(k4, h / 6.0);
  return next;
}

FlowTrajectory integrate_flow(const Matrix& w0, const Matrix& phi, const FlowConfig& cfg) {
  cfg.validate();
  if (!w0.same_shape(phi)) throw ContractViolation("integrate_flow: shape mismatch");
  const auto steps = static_cast<std::int64_t>(std::llround(cfg.tau_max / cfg.h));
  const double h = cfg.tau_max / static_cast<double>(std::max<std::int64_t>(1, steps));
  const std::size_t stride = std::max<std::size_t>(1, cfg.record_stride);

  FlowTrajectory traj;
  auto record = [&](double tau, const Matrix& w) {
    traj.tau.push_back(tau);
    traj.loss.push_back(0.5 * (w - phi).squared_norm());
    traj.sigma_min.push_back(sigma_min(w));
    traj.states.push_back(w);
  };

  Matrix w = w0;
  record(0.0, w);
  for (std::int64_t i = 1; i <= steps; ++i) {
    w = flow_step(w, phi, cfg.depth, h, cfg.integrator);
    if (!w.all_finite()) {
      traj.status = FlowStatus::kFailed;
      return traj;
    }
    if (static_cast<std::size_t>(i) % stride == 0 || i == steps) record(h * static_cast<double>(i), w);
  }
  return traj;
}

FlowComparison compare_flow_gd(const WeightStack& w0, const Matrix& phi, double eta,
                               std::int64_t steps, const FlowConfig& cfg,
                               std::size_t checkpoint_stride) {
  if (!(eta > 0.0)) throw ContractViolation("learning rate must be positive");
  if (steps < 1) throw ContractViolation("need at least one gradient step");
  if (cfg.depth != w0.depth()) throw ContractViolation("flow depth differs from the stack depth");
  if (!(cfg.h > 0.0)) throw ContractViolation("flow step must be positive");
  const double delta = balancedness_delta(w0);
  if (delta > 1e-8) {
    throw ContractViolation("flow comparison needs a balanced stack (delta = " +
                            std::to_string(delta) + ")");
  }
  const Problem problem{phi, 0.0};
  const double scale = std::max(1.0, phi.frobenius_norm());
  const std::size_t stride = std::max<std::size_t>(1, checkpoint_stride);

  FlowComparison out;
  out.substeps = static_cast<std::size_t>(std::max<long long>(1, std::llround(std::ceil(eta / cfg.h - 1e-9))));
  const double h = eta / static_cast<double>(out.substeps);

  WeightStack stack = w0;
  Matrix flow = end_to_end(w0);
  auto record = [&](std::int64_t t) {
    const Matrix gd = end_to_end(stack);
    const double dev = (gd - flow).frobenius_norm() / scale;
    out.tau.push_back(eta * static_cast<double>(t));
    out.deviation.push_back(dev);
    out.gd_loss.push_back(0.5 * (gd - phi).squared_norm());
    out.flow_loss.push_back(0.5 * (flow - phi).squared_norm());
    out.flow_sigma_min.push_back(sigma_min(flow));
    out.max_deviation = std::max(out.max_deviation, dev);
    out.final_deviation = dev;
  };
  record(0);
  for (std::int64_t t = 1; t <= steps; ++t) {
    stack.descend(gradients(stack, problem), eta);
    for (std::size_t i = 0; i < out.substeps; ++i) flow = flow_step(flow, phi, cfg.depth, h, cfg.integrator);
    if (!stack.all_finite() || !flow.all_finite()) {
      throw NumericalFailure("flow comparison produced non-finite values at step " + std::to_string(t));
    }
    if (static_cast<std::size_t>(t) % stride == 0 || t == steps) {
      record(t);
    } else {
      const double dev = (end_to_end(stack) - flow).frobenius_norm() / scale;
      out.max_deviation = std::max(out.max_deviation, dev);
      out.final_deviation = dev;
    }
  }
  return out;
}

}  // namespace dln
