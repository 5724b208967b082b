// End-to-end acceptance checks. Prints one line per criterion and exits
// nonzero if any of them fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dln/data.hpp"
#include "dln/experiments.hpp"
#include "dln/flow.hpp"
#include "dln/init.hpp"
#include "dln/network.hpp"
#include "dln/runners.hpp"
#include "dln/theory.hpp"
#include "support.hpp"

using namespace dln;
using dln::testing::random_matrix;
using dln::testing::uniform_int;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Criterion 1: scalar run at the certified rate reaches eps within the bound.
Outcome scalar_theorem1() {
  const WeightStack w0 = balanced_init(NetSpec({1, 1, 1}), Matrix::scalar(0.9));
  const Matrix phi = Matrix::scalar(1.0);
  const double eps = 1e-5;
  const Certificate cert = theorem1_certificate(w0, phi, eps);
  const double eta = cert.eta_max;
  const std::int64_t t_bound = cert.t_bound(eta, eps);
  TrainOptions opt;
  opt.eta = eta;
  opt.eps = eps;
  opt.max_iters = t_bound;
  opt.monitors = MonitorFlags::all(1);
  const TrainTrace trace = train(w0, Problem{phi, 0.0}, opt);
  const TrajectoryReport rep = verify_trajectory(trace, phi, eta, cert);
  const bool converged = trace.status == TrainStatus::kConverged && trace.loss.back() <= eps;
  std::ostringstream d;
  d << "eta=" << eta << " T_bound=" << t_bound << " steps=" << trace.steps()
    << " descent_failures=" << rep.descent_failures << " envelope_failures=" << rep.envelope_failures;
  return {cert.satisfied && converged && trace.steps() <= t_bound && rep.descent_failures == 0 &&
              rep.envelope_failures == 0,
          d.str()};
}

// Criterion 2: property suite on the 5x5 identity problem at the certified rate.
Outcome matrix_theorem1() {
  const NetSpec spec({5, 5, 5, 5});
  const Matrix phi = Matrix::identity(5);
  const WeightStack w0 = balanced_init(spec, Matrix::identity(5) * 0.8);
  const Certificate cert = theorem1_certificate(w0, phi, 1e-5);
  TrainOptions opt;
  opt.eta = cert.eta_max;
  opt.eps = 1e-5;
  opt.max_iters = 10000;
  opt.monitors = MonitorFlags::all(1);
  const TrainTrace trace = train(w0, Problem{phi, 0.0}, opt);
  const TrajectoryReport r = verify_trajectory(trace, phi, cert.eta_max, cert);
  const double expected_c = 1.0 - 0.2 * std::sqrt(5.0);
  std::ostringstream d;
  d << "c=" << cert.margin << " eta=" << cert.eta_max << " checked=" << r.checked_steps
    << " max_delta=" << r.max_delta << "/" << r.delta_bound << " max_norm=" << r.max_layer_norm << "/"
    << r.layer_norm_bound << " min_margin=" << r.min_margin;
  const bool ok = std::abs(cert.margin - expected_c) < 1e-12 && r.checked_steps >= 10000 &&
                  r.descent_failures == 0 && r.balance_failures == 0 && r.norm_failures == 0 &&
                  r.margin_failures == 0;
  return {ok, d.str()};
}

// Criterion 3: grid-searched rate converges, and the log loss is close to linear.
Outcome empirical_rate() {
  const NetSpec spec({5, 5, 5, 5});
  const Problem p{Matrix::identity(5), 0.0};
  const WeightStack w0 = balanced_init(spec, Matrix::identity(5) * 0.8);
  std::optional<TrainTrace> best;
  for (double eta : default_lr_grid()) {
    TrainOptions opt;
    opt.eta = eta;
    opt.eps = 1e-5;
    opt.max_iters = 10000;
    TrainTrace t = train(w0, p, opt);
    if (t.status == TrainStatus::kConverged && (!best || t.steps() < best->steps())) best = std::move(t);
  }
  if (!best) return {false, "no learning rate converged within 1e4 iterations"};
  // Fit over the last 80% of iterations.
  const auto n = static_cast<std::size_t>(best->steps()) + 1;
  const std::size_t start = static_cast<std::size_t>(best->steps()) / 5;
  // Ordinary least squares of log loss on t.
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  const double m = static_cast<double>(n - start);
  for (std::size_t t = start; t < n; ++t) {
    const double x = static_cast<double>(t);
    const double y = std::log(best->loss[t]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const double cov = sxy - sx * sy / m;
  const double vx = sxx - sx * sx / m;
  const double vy = syy - sy * sy / m;
  const double r2 = vx > 0 && vy > 0 ? cov * cov / (vx * vy) : 0.0;
  std::ostringstream d;
  d << "best_eta=" << best->eta << " steps=" << best->steps() << " fit_points=" << (n - start)
    << " R2=" << r2 << " log_loss=";
  for (std::size_t t = start; t < n && t < start + 6; ++t) d << (t > start ? "," : "") << fmt("%.3g", std::log(best->loss[t]));
  return {n - start >= 3 && r2 >= 0.99, d.str()};
}

// Criterion 4: the unbalanced start never gets below the loss floor.
Outcome unbalanced_failure() {
  const FailureReport r = failure_unbalanced(0.75, 0.01, 2, 1, 50);
  std::ostringstream d;
  d << "margin0=" << fmt("%.17g", r.initial_margin) << " loss(1)="
    << (r.trace.loss.size() > 1 ? r.trace.loss[1] : 0.0) << " guard_step="
    << (r.guard_step ? std::to_string(*r.guard_step) : "none");
  // The product A c^{1/N} * c^{1/N} / A is c only up to rounding.
  const bool margin_exact = std::abs(r.initial_margin - 0.75) <= 4 * std::numeric_limits<double>::epsilon();
  const bool ok = margin_exact && r.floor_held && r.strictly_increasing && r.guard_fired &&
                  r.guard_step && *r.guard_step <= 50;
  return {ok, d.str()};
}

// Criterion 5: no margin, loss stuck above 1/2 at every learning rate.
Outcome no_margin_failure() {
  bool ok = true;
  std::ostringstream d;
  for (double eta : {1e-3, 1e-2, 1e-1, 1.0}) {
    const FailureReport r = failure_no_margin(2, 2, eta, 1.0, 10000);
    const bool this_ok = r.floor_held && r.max_diag_residual <= 1e-8;
    ok = ok && this_ok;
    d << "eta=" << eta << (this_ok ? " ok" : " FAIL") << " (min_loss=" << r.min_loss_after_start
      << (r.guard_fired ? ", diverged" : "") << ") ";
  }
  return {ok, d.str()};
}

// Criterion 6: descent tracks the flow, with error halving as the rate halves.
Outcome flow_agreement() {
  const WeightStack w0 = balanced_init(NetSpec({1, 1, 1, 1}), Matrix::scalar(0.5));
  const Matrix phi = Matrix::scalar(1.0);
  FlowConfig cfg;
  cfg.depth = 3;
  cfg.h = 1e-4;
  cfg.integrator = Integrator::kRk4;
  const FlowComparison full = compare_flow_gd(w0, phi, 1e-4, 10000, cfg, 100);
  const FlowComparison half = compare_flow_gd(w0, phi, 5e-5, 20000, cfg, 200);
  const double ratio = half.max_deviation / full.max_deviation;
  std::ostringstream d;
  d << "max_dev=" << full.max_deviation << " half_max_dev=" << half.max_deviation << " ratio=" << ratio;
  return {full.max_deviation <= 1e-2 && ratio >= 0.3 && ratio <= 0.7, d.str()};
}

// Criterion 7: frequency of delta-balanced Gaussian stacks.
Outcome balance_probability() {
  const NetSpec spec({4, 4, 4, 4});
  const MCReport r = mc_balance_probability(spec, 0.1, 1.386, 1000, derive_seed(kDefaultSeed, 7));
  const double threshold = r.bound - binomial_slack(r.bound, r.trials);
  std::ostringstream d;
  d << "p_hat=" << r.empirical_p << " bound=" << r.bound << " threshold=" << threshold;
  return {r.empirical_p >= threshold, d.str()};
}

// Criterion 8: balanced initialisation has the required margin with probability >= 0.25.
Outcome margin_probability() {
  const NetSpec spec({100, 100, 1});
  Matrix phi(1, 100);
  phi(0, 0) = 1.0;
  const MCReport r =
      mc_margin_probability(spec, phi, MarginMode::kBalanced, 1e-3, 2000, derive_seed(kDefaultSeed, 8));
  std::ostringstream d;
  d << "p_hat=" << r.empirical_p << " bound=" << r.bound << " slack=" << std::max(r.slack, r.bound_slack);
  return {r.consistent(), d.str()};
}

// Criterion 9: whitening and the reduction of the data loss to the target loss.
Outcome whitening() {
  const Dataset raw = synth_regression_dataset(16, 256, derive_seed(kDefaultSeed, 9));
  const Dataset white = whiten(raw).data;
  const Moments m = empirical_moments(white);
  const double resid = (m.lxx - Matrix::identity(16)).frobenius_norm();
  Rng rng(derive_seed(kDefaultSeed, 90));
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Matrix w = random_matrix(1, 16, rng);
    const double direct = 0.5 / 256.0 * (w * white.x - white.y).squared_norm();
    const double reduced = 0.5 * (w - m.lyx).squared_norm() + m.opt_const;
    worst = std::max(worst, std::abs(direct - reduced) / std::abs(direct));
  }
  std::ostringstream d;
  d << "||lxx - I||=" << resid << " worst_rel=" << worst;
  return {resid <= 1e-10 && worst <= 1e-9, d.str()};
}

// Criterion 10: analytic gradients against central differences.
Outcome gradient_check() {
  Rng rng(derive_seed(kDefaultSeed, 10));
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const NetSpec spec = dln::testing::random_spec(rng, 4, 6);
    std::vector<Matrix> layers;
    for (std::size_t j = 0; j < spec.depth(); ++j) {
      layers.push_back(random_matrix(spec.dims()[j + 1], spec.dims()[j], rng, 0.7));
    }
    const WeightStack w(spec, layers);
    const Problem p{random_matrix(spec.output_dim(), spec.input_dim(), rng), 0.0};
    const std::vector<Matrix> g = gradients(w, p);
    const double h = 1e-6;
    for (std::size_t j = 0; j < layers.size(); ++j) {
      Matrix fd(layers[j].rows(), layers[j].cols());
      for (std::size_t r = 0; r < fd.rows(); ++r) {
        for (std::size_t c = 0; c < fd.cols(); ++c) {
          std::vector<Matrix> plus = layers, minus = layers;
          plus[j](r, c) += h;
          minus[j](r, c) -= h;
          fd(r, c) = (loss(WeightStack(spec, plus), p) - loss(WeightStack(spec, minus), p)) / (2 * h);
        }
      }
      const double scale = std::max(g[j].frobenius_norm(), 1e-8);
      worst = std::max(worst, (g[j] - fd).frobenius_norm() / scale);
    }
  }
  return {worst <= 1e-6, "worst_rel=" + fmt("%.3g", worst)};
}

NetSpec funnel_spec(Rng& rng, std::size_t max_depth, std::size_t max_dim) {
  const std::size_t n = uniform_int(rng, 1, max_depth);
  std::vector<std::size_t> dims(n + 1);
  dims[0] = uniform_int(rng, 1, max_dim);
  dims[n] = uniform_int(rng, 1, max_dim);
  for (std::size_t j = 1; j < n; ++j) dims[j] = uniform_int(rng, std::max(dims[0], dims[n]), max_dim);
  return NetSpec(dims);
}

WeightStack near_balanced(const NetSpec& spec, Rng& rng, double noise) {
  std::vector<Matrix> layers = balanced_init(spec, random_matrix(spec.output_dim(), spec.input_dim(), rng, 0.8)).layers();
  for (Matrix& l : layers) l.add_scaled(random_matrix(l.rows(), l.cols(), rng), noise);
  return WeightStack(spec, layers);
}

// Criterion 11: the near-balanced inequalities and the margin claim.
Outcome property_suite() {
  Rng rng(derive_seed(kDefaultSeed, 11));
  int commute_fail = 0;
  double worst_ratio = 0.0;
  for (int i = 0; i < 200; ++i) {
    const CommuteBoundCheck c = commute_bound_check(near_balanced(funnel_spec(rng, 5, 8), rng, i % 2 ? 1e-3 : 0.1));
    if (!c.holds) ++commute_fail;
    worst_ratio = std::max(worst_ratio, c.worst_ratio);
  }
  int norm_fail = 0;
  int applicable = 0;
  for (int i = 0; i < 200; ++i) {
    const WeightStack w = near_balanced(funnel_spec(rng, 5, 8), rng, 1e-4);
    const LayerNormBoundCheck c = layer_norm_bound_check(w, sigma_max(end_to_end(w)) * (1.0 + rng.uniform()));
    if (c.applicable) ++applicable;
    if (!c.holds) ++norm_fail;
  }
  int counterexamples = 0;
  int tested = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t r = uniform_int(rng, 1, 5);
    const std::size_t c = uniform_int(rng, 1, 5);
    const Matrix phi = random_matrix(r, c, rng) + Matrix::eye(r, c) * 2.0;
    const double smin = sigma_min(phi);
    if (!(smin > 0.0)) continue;
    const double margin = smin * rng.uniform() * 0.999 + 1e-9;
    Matrix e = random_matrix(r, c, rng);
    e *= (smin - margin) * rng.uniform() / e.frobenius_norm();
    const MarginWitness wit = margin_implies_sigma(phi + e, phi, margin);
    if (!wit.hypothesis) continue;
    ++tested;
    if (!wit.holds) ++counterexamples;
  }
  std::ostringstream d;
  d << "commute_fail=" << commute_fail << " worst_ratio=" << worst_ratio << " norm_fail=" << norm_fail
    << " (applicable " << applicable << ") claim_tested=" << tested << " counterexamples=" << counterexamples;
  return {commute_fail == 0 && norm_fail == 0 && counterexamples == 0 && tested >= 9000, d.str()};
}

// Criterion 12: balanced initialisation converges over a wide range of std.
Outcome init_sweep() {
  const Problem problem = synth_problem(SynthKind::kScalarRegression, 1, 32, derive_seed(kDefaultSeed, 0x70686900));
  SweepOptions opt;
  opt.std_grid = log_grid(1e-3, 1.0, 12);
  opt.eps = 1e-5;
  opt.cap = 200000;
  opt.seed = derive_seed(kDefaultSeed, 0x696e6974);
  std::ostringstream d;
  std::size_t lw8 = 0, bal8 = 0;
  for (std::size_t depth : {3, 8}) {
    std::vector<std::size_t> dims(depth + 1, 8);
    dims.front() = 32;
    dims.back() = 1;
    for (InitScheme scheme : {InitScheme::kLayerwise, InitScheme::kBalanced}) {
      const auto start = std::chrono::steady_clock::now();
      const SweepResult r = std_sweep(NetSpec(dims), problem.phi, scheme, opt);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      d << "N=" << depth << " " << to_string(scheme) << "=" << r.converged_count() << "/12 (" << fmt("%.0fs", secs)
        << ") ";
      if (depth == 8) (scheme == InitScheme::kLayerwise ? lw8 : bal8) = r.converged_count();
    }
  }
  return {lw8 < bal8 && static_cast<double>(bal8) >= 0.8 * 12.0, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, scalar_theorem1},  {2, matrix_theorem1},     {3, empirical_rate},      {4, unbalanced_failure},
      {5, no_margin_failure}, {6, flow_agreement},     {7, balance_probability}, {8, margin_probability},
      {9, whitening},        {10, gradient_check},     {11, property_suite},     {12, init_sweep},
  };
  int failures = 0;
  for (const auto& [id, run] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d: %s [%.2fs] %s\n", id, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
