#include "dln/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dln/error.hpp"

namespace dln {

namespace {

double rate_exponent(std::size_t depth) {
  const double n = static_cast<double>(depth);
  return 2.0 * (n - 1.0) / n;
}

Matrix integer_power(const Matrix& s, std::size_t k) {
  Matrix out = s;
  for (std::size_t i = 1; i < k; ++i) out = out * s;
  return out;
}

}  // namespace

double balancedness_delta(const WeightStack& w) {
  const auto& layers = w.layers();
  double worst = 0.0;
  for (std::size_t j = 0; j + 1 < layers.size(); ++j) {
    const Matrix upper = multiply_at_b(layers[j + 1], layers[j + 1]);
    const Matrix lower = multiply_a_bt(layers[j], layers[j]);
    worst = std::max(worst, (upper - lower).frobenius_norm());
  }
  return worst;
}

double deficiency_margin(const Matrix& w, const Matrix& phi) {
  if (!w.same_shape(phi)) throw ContractViolation("deficiency_margin: shape mismatch");
  return sigma_min(phi) - (w - phi).frobenius_norm();
}

MarginWitness margin_implies_sigma(const Matrix& w_prime, const Matrix& phi, double c) {
  if (!(c > 0.0)) throw ContractViolation("margin_implies_sigma: c must be positive");
  if (!w_prime.same_shape(phi)) throw ContractViolation("margin_implies_sigma: shape mismatch");
  MarginWitness out;
  out.distance = (w_prime - phi).frobenius_norm();
  out.hypothesis = out.distance <= sigma_min(phi) - c;
  out.sigma_min = sigma_min(w_prime);
  out.holds = out.sigma_min >= c;
  return out;
}

RateBounds rate_bounds(double c, std::size_t depth, double phi_fro) {
  const double n = static_cast<double>(depth);
  RateBounds b;
  b.rate_exponent = rate_exponent(depth);
  b.required_delta = c * c / (256.0 * n * n * n * std::pow(phi_fro, b.rate_exponent));
  b.eta_max = std::pow(c, (4.0 * n - 2.0) / n) /
              (6144.0 * n * n * n * std::pow(phi_fro, (6.0 * n - 4.0) / n));
  return b;
}

std::int64_t iteration_bound(double c, std::size_t depth, double eta, double loss0, double eps) {
  if (!(eps > 0.0)) throw ContractViolation("eps must be positive");
  if (loss0 <= eps) return 0;
  const double rate = eta * std::pow(c, rate_exponent(depth));
  if (!(rate > 0.0)) return std::numeric_limits<std::int64_t>::max();
  return static_cast<std::int64_t>(std::ceil(std::log(loss0 / eps) / rate));
}

std::int64_t Certificate::t_bound(double eta, double eps_target) const {
  if (!margin_positive) return std::numeric_limits<std::int64_t>::max();
  return iteration_bound(margin, depth, eta, loss0, eps_target);
}

double Certificate::envelope(double eta, std::int64_t t) const {
  const double factor = std::max(0.0, 1.0 - eta * std::pow(margin, rate_exponent(depth)));
  return loss0 * std::pow(factor, static_cast<double>(t));
}

Certificate theorem1_certificate(const WeightStack& w0, const Matrix& phi, double eps) {
  if (!(eps > 0.0)) throw ContractViolation("eps must be positive");
  const Matrix product = end_to_end(w0);
  Certificate cert;
  cert.depth = w0.depth();
  cert.eps = eps;
  cert.margin = deficiency_margin(product, phi);
  cert.phi_fro = phi.frobenius_norm();
  cert.loss0 = 0.5 * (product - phi).squared_norm();
  cert.observed_delta = balancedness_delta(w0);
  cert.full_rank_capable = w0.spec().full_rank_capable();
  cert.margin_positive = cert.margin > 0.0;
  if (cert.margin_positive) {
    const RateBounds b = rate_bounds(cert.margin, cert.depth, cert.phi_fro);
    cert.required_delta = b.required_delta;
    cert.eta_max = b.eta_max;
    cert.t_bound_at_eta_max = cert.t_bound(cert.eta_max, eps);
    cert.balanced_enough = cert.depth == 1 || cert.observed_delta <= cert.required_delta;
  }
  cert.satisfied = cert.margin_positive && cert.balanced_enough && cert.full_rank_capable;
  return cert;
}

TrajectoryReport verify_trajectory(const TrainTrace& trace, const Matrix& phi, double eta,
                                   const Certificate& cert) {
  const MonitorFlags& f = trace.flags;
  if (!(f.delta && f.sigma_min && f.margin && f.layer_norms)) {
    throw ContractViolation("verify_trajectory needs delta, sigma_min, margin and layer-norm monitors");
  }
  if (trace.loss.empty()) throw ContractViolation("verify_trajectory: empty trace");

  const std::size_t depth = cert.depth;
  const double ex = rate_exponent(depth);
  TrajectoryReport r;
  r.delta_bound = 2.0 * cert.required_delta;
  r.layer_norm_bound = std::pow(4.0 * phi.frobenius_norm(), 1.0 / static_cast<double>(depth));
  r.min_margin = std::numeric_limits<double>::infinity();
  r.worst_descent_residual = -std::numeric_limits<double>::infinity();

  auto note_failure = [&](std::int64_t t) {
    if (!r.first_failure || t < *r.first_failure) r.first_failure = t;
  };

  const auto& loss = trace.loss;
  for (const MonitorRecord& m : trace.monitors) {
    const auto t = static_cast<std::size_t>(m.t);
    ++r.checked_steps;
    if (t + 1 < loss.size()) {
      const double bound_drop = eta * std::pow(*m.sigma_min, ex) * loss[t];
      const double residual = loss[t + 1] - loss[t] + bound_drop;
      const double tol = kDescentAbsTol + kDescentRelTol * loss[t];
      r.worst_descent_residual = std::max(r.worst_descent_residual, residual - tol);
      if (!(residual <= tol)) {
        ++r.descent_failures;
        note_failure(m.t);
      }
    }
    r.max_delta = std::max(r.max_delta, *m.delta);
    if (!(*m.delta <= r.delta_bound)) {
      ++r.balance_failures;
      note_failure(m.t);
    }
    r.max_layer_norm = std::max(r.max_layer_norm, *m.max_layer_norm);
    if (!(*m.max_layer_norm <= r.layer_norm_bound * (1.0 + 1e-12))) {
      ++r.norm_failures;
      note_failure(m.t);
    }
    r.min_margin = std::min(r.min_margin, *m.margin);
    if (!(*m.margin >= cert.margin - 1e-12 * std::max(1.0, std::abs(cert.margin)))) {
      ++r.margin_failures;
      note_failure(m.t);
    }
  }
  for (std::size_t t = 0; t < loss.size(); ++t) {
    const double env = cert.envelope(eta, static_cast<std::int64_t>(t));
    if (!(loss[t] <= env * (1.0 + kDescentRelTol) + kDescentAbsTol)) {
      ++r.envelope_failures;
      note_failure(static_cast<std::int64_t>(t));
    }
  }
  r.passed = cert.margin_positive && r.checked_steps > 0 && !r.first_failure;
  return r;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double BalancedInitCertificate::iterations(double eta) const {
  const double n = static_cast<double>(depth);
  const double scale = init_std * init_std * static_cast<double>(input_dim);
  const double warmup = std::log(4.0) * std::pow(phi_spectral / scale, 2.0 - 2.0 / n);
  const double tail = std::pow(phi_spectral, 2.0 / n - 2.0) *
                      std::max(0.0, std::log(phi_spectral * phi_spectral / (8.0 * eps)));
  return 4.0 / eta * (warmup + tail);
}

BalancedInitCertificate theorem2_certificate(const NetSpec& spec, const Matrix& phi, double s,
                                             double eps, double d0_min, double a) {
  if (spec.output_dim() != 1) throw ContractViolation("balanced-init certificate needs d_N = 1");
  if (phi.rows() != 1 || phi.cols() != spec.input_dim()) {
    throw ContractViolation("target must be 1 x d_0");
  }
  if (!(s > 0.0) || !(eps > 0.0) || !(a > 0.0)) {
    throw ContractViolation("std, eps and a must be positive");
  }
  const double n = static_cast<double>(spec.depth());
  const double d0 = static_cast<double>(spec.input_dim());
  BalancedInitCertificate c;
  c.depth = spec.depth();
  c.input_dim = spec.input_dim();
  c.phi_spectral = sigma_max(phi);
  c.init_std = s;
  c.eps = eps;
  c.d0_min = d0_min;
  c.a = a;
  const double scale = s * s * d0;
  c.eta_max = std::pow(scale, 4.0 - 2.0 / n) /
              (1e5 * n * n * n * std::pow(c.phi_spectral, 10.0 - 6.0 / n));
  c.t_bound = c.eta_max > 0.0 ? c.iterations(c.eta_max) : std::numeric_limits<double>::infinity();
  c.success_probability = (1.0 - 2.0 * std::exp(-d0 / 16.0)) *
                          (3.0 - 4.0 * normal_cdf(2.0 / std::sqrt(a / 2.0))) / 2.0;
  c.margin_threshold = c.phi_spectral > 0.0 ? scale / (2.0 * c.phi_spectral) : 0.0;
  c.input_dim_ok = d0 >= d0_min;
  c.std_in_range = s <= c.phi_spectral / std::sqrt(a * d0 * d0) * (1.0 + 1e-12);
  c.satisfied = c.input_dim_ok && c.std_in_range && c.phi_spectral > 0.0;
  return c;
}

CommuteBoundCheck commute_bound_check(const WeightStack& w) {
  const auto& dims = w.spec().dims();
  const std::size_t n = w.depth();
  if (n >= 2 && (dims[n] > dims[n - 1] || dims[0] > dims[1])) {
    throw ContractViolation("commute bound needs d_N <= d_{N-1} and d_0 <= d_1");
  }
  const auto& layers = w.layers();
  CommuteBoundCheck out;
  out.nu = balancedness_delta(w);
  for (const auto& l : layers) out.m = std::max(out.m, sigma_max(l));

  const Matrix first_gram = multiply_at_b(layers.front(), layers.front());
  const Matrix last_gram = multiply_a_bt(layers.back(), layers.back());
  bool ok = true;
  auto consider = [&](double lhs, double rhs, double scale) {
    const double slack = 1e-12 * std::max(1.0, scale);
    if (lhs > rhs + slack) ok = false;
    const double ratio = rhs > 0.0 ? lhs / rhs : (lhs <= slack ? 0.0 : std::numeric_limits<double>::infinity());
    out.worst_ratio = std::max(out.worst_ratio, ratio);
  };

  Matrix prefix = layers.front();
  for (std::size_t j = 1; j <= n; ++j) {
    if (j > 1) prefix = layers[j - 1] * prefix;
    const double jj = static_cast<double>(j);
    const double lhs = (multiply_at_b(prefix, prefix) - integer_power(first_gram, j)).frobenius_norm();
    const double rhs = 1.5 * out.nu * std::pow(out.m, 2.0 * (jj - 1.0)) * jj * jj;
    consider(lhs, rhs, std::pow(out.m, 2.0 * jj) * jj);
  }
  Matrix suffix = layers.back();
  for (std::size_t k = 1; k <= n; ++k) {  // k = N - j + 1 layers from the output side
    if (k > 1) suffix = suffix * layers[n - k];
    const double kk = static_cast<double>(k);
    const double lhs = (multiply_a_bt(suffix, suffix) - integer_power(last_gram, k)).frobenius_norm();
    const double rhs = 1.5 * out.nu * std::pow(out.m, 2.0 * (kk - 1.0)) * kk * kk;
    consider(lhs, rhs, std::pow(out.m, 2.0 * kk) * kk);
  }
  out.holds = ok;
  return out;
}

LayerNormBoundCheck layer_norm_bound_check(const WeightStack& w, double c) {
  const double n = static_cast<double>(w.depth());
  LayerNormBoundCheck out;
  out.nu = balancedness_delta(w);
  out.c = c;
  out.bound = std::pow(c, 1.0 / n) * std::pow(2.0, 1.0 / (2.0 * n));
  for (const auto& l : w.layers()) out.max_layer_norm = std::max(out.max_layer_norm, sigma_max(l));
  out.applicable = c > 0.0 && out.nu <= std::pow(c, 2.0 / n) / (30.0 * n * n) &&
                   sigma_max(end_to_end(w)) <= c;
  out.holds = !out.applicable || out.max_layer_norm <= out.bound * (1.0 + 1e-12);
  return out;
}

}  // namespace dln
