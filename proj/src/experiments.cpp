#include "dln/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dln/error.hpp"
#include "dln/init.hpp"
#include "dln/rng.hpp"
#include "dln/theory.hpp"

namespace dln {

InitScheme init_scheme_from_string(const std::string& name) {
  if (name == "layerwise") return InitScheme::kLayerwise;
  if (name == "balanced") return InitScheme::kBalanced;
  if (name == "identity") return InitScheme::kIdentity;
  throw ContractViolation("unknown init scheme '" + name + "' (expected layerwise, balanced or identity)");
}

std::string to_string(InitScheme scheme) {
  switch (scheme) {
    case InitScheme::kLayerwise: return "layerwise";
    case InitScheme::kBalanced: return "balanced";
    case InitScheme::kIdentity: return "identity";
  }
  return "unknown";
}

WeightStack make_init(const NetSpec& spec, InitScheme scheme, double s, std::uint64_t seed) {
  switch (scheme) {
    case InitScheme::kLayerwise: return gaussian_layerwise(spec, s, seed);
    case InitScheme::kBalanced: return balanced_init_gaussian(spec, s, seed);
    case InitScheme::kIdentity: return identity_residual(spec);
  }
  throw ContractViolation("unknown init scheme");
}

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0) || !(hi >= lo) || n == 0) throw ContractViolation("log grid needs 0 < lo <= hi and n >= 1");
  if (n == 1) return {lo};
  std::vector<double> out(n);
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

std::vector<double> default_lr_grid() { return log_grid(1e-4, 1.0, 9); }

std::size_t SweepResult::converged_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const SweepCell& c) { return c.iterations.has_value(); }));
}

SweepResult std_sweep(const NetSpec& spec, const Matrix& phi, InitScheme scheme,
                      const SweepOptions& options) {
  if (options.std_grid.empty() || options.lr_grid.empty()) throw ContractViolation("sweep grids must be non-empty");
  if (options.cap < 1) throw ContractViolation("sweep cap must be >= 1");
  const Problem problem{phi, 0.0};

  // Larger rates first: they either finish quickly or blow up quickly, and a
  // fast finish tightens the cap for the rest.
  std::vector<double> rates = options.lr_grid;
  std::sort(rates.begin(), rates.end(), std::greater<>());

  SweepResult result;
  result.scheme = scheme;
  result.dims = spec.dims();
  result.eps = options.eps;
  result.cap = options.cap;
  for (std::size_t i = 0; i < options.std_grid.size(); ++i) {
    SweepCell cell;
    cell.s = options.std_grid[i];
    const WeightStack w0 = make_init(spec, scheme, cell.s, derive_seed(options.seed, i));
    std::int64_t budget = options.cap;
    for (double eta : rates) {
      TrainOptions opts;
      opts.eta = eta;
      opts.eps = options.eps;
      opts.max_iters = budget;
      const TrainTrace trace = train(w0, problem, opts);
      ++cell.runs;
      if (trace.status != TrainStatus::kConverged) continue;
      const std::int64_t iters = std::max<std::int64_t>(1, trace.steps());
      if (!cell.iterations || iters < *cell.iterations) {
        cell.iterations = iters;
        cell.best_lr = eta;
        budget = iters;
      }
      if (iters <= 1) break;
    }
    result.cells.push_back(cell);
  }
  return result;
}

BalanceSeries balancedness_trace(const NetSpec& spec, const Matrix& phi, InitScheme scheme,
                                 double s, double eta, std::int64_t steps, std::uint64_t seed,
                                 std::size_t stride) {
  if (steps < 1) throw ContractViolation("need at least one step");
  TrainOptions opts;
  opts.eta = eta;
  opts.eps = std::numeric_limits<double>::min();
  opts.max_iters = steps;
  opts.monitors.delta = true;
  opts.monitors.layer_norms = true;
  opts.monitors.stride = std::max<std::size_t>(1, stride);
  const TrainTrace trace = train(make_init(spec, scheme, s, seed), Problem{phi, 0.0}, opts);
  BalanceSeries out;
  for (const MonitorRecord& r : trace.monitors) {
    out.t.push_back(r.t);
    out.loss.push_back(trace.loss[static_cast<std::size_t>(r.t)]);
    out.min_gram.push_back(r.min_layer_gram.value_or(0.0));
    out.delta.push_back(r.delta.value_or(0.0));
  }
  return out;
}

double binomial_slack(double p, std::size_t trials) {
  if (trials == 0) return 0.0;
  const double q = std::clamp(p, 0.0, 1.0);
  return 3.0 * std::sqrt(q * (1.0 - q) / static_cast<double>(trials));
}

bool MCReport::consistent() const noexcept {
  return empirical_p >= bound - std::max(slack, bound_slack);
}

namespace {

MCReport finish_report(std::size_t trials, std::size_t successes, double bound, std::string mode) {
  MCReport r;
  r.trials = trials;
  r.successes = successes;
  r.empirical_p = static_cast<double>(successes) / static_cast<double>(trials);
  r.bound = bound;
  r.slack = binomial_slack(r.empirical_p, trials);
  r.bound_slack = binomial_slack(bound, trials);
  r.mode = std::move(mode);
  return r;
}

}  // namespace

double balance_probability_bound(const NetSpec& spec, double s, double delta) {
  if (!(delta > 0.0)) throw ContractViolation("delta must be positive");
  const double n = static_cast<double>(spec.depth());
  const double dmax = static_cast<double>(spec.max_dim());
  return std::max(0.0, 1.0 - 10.0 * n * std::pow(s, 4) * dmax * dmax * dmax / (delta * delta));
}

MCReport mc_balance_probability(const NetSpec& spec, double s, double delta, std::size_t trials,
                                std::uint64_t seed) {
  if (trials < 100) throw ContractViolation("Monte Carlo needs at least 100 trials");
  const double bound = balance_probability_bound(spec, s, delta);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    if (balancedness_delta(gaussian_layerwise(spec, s, derive_seed(seed, i))) <= delta) ++hits;
  }
  return finish_report(trials, hits, bound, "balance");
}

MarginMode margin_mode_from_string(const std::string& name) {
  if (name == "balanced_lemma6" || name == "balanced") return MarginMode::kBalanced;
  if (name == "layerwise_claim3" || name == "layerwise") return MarginMode::kLayerwise;
  throw ContractViolation("unknown margin mode '" + name + "'");
}

std::string to_string(MarginMode mode) {
  return mode == MarginMode::kBalanced ? "balanced_lemma6" : "layerwise_claim3";
}

MCReport mc_margin_probability(const NetSpec& spec, const Matrix& phi, MarginMode mode, double s,
                               std::size_t trials, std::uint64_t seed) {
  if (spec.output_dim() != 1) throw ContractViolation("margin Monte Carlo needs scalar output (d_N = 1)");
  if (trials < 100) throw ContractViolation("Monte Carlo needs at least 100 trials");
  if (phi.rows() != 1 || phi.cols() != spec.input_dim()) throw ContractViolation("target must be 1 x d_0");
  const double phi_norm = sigma_max(phi);
  const double threshold =
      phi_norm > 0.0 ? s * s * static_cast<double>(spec.input_dim()) / (2.0 * phi_norm) : 0.0;

  std::size_t hits = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    const std::uint64_t trial_seed = derive_seed(seed, i);
    if (mode == MarginMode::kBalanced) {
      if (phi_norm == 0.0) continue;
      const double margin = deficiency_margin(end_to_end(balanced_init_gaussian(spec, s, trial_seed)), phi);
      if (margin >= threshold) ++hits;
    } else {
      const double margin = deficiency_margin(end_to_end(gaussian_layerwise(spec, s, trial_seed)), phi);
      if (margin > 0.0) ++hits;
    }
  }
  const double bound = mode == MarginMode::kBalanced ? kBalancedTargetProbability : 0.0;
  return finish_report(trials, hits, bound, to_string(mode));
}

double unbalanced_scale(double c, double eta, std::size_t depth) {
  const double n = static_cast<double>(depth);
  const double candidates[] = {
      std::sqrt(eta * n),
      2.0 / (eta * (1.0 - c) * std::pow(c, (n - 1.0) / n)),
      2000.0,
      20.0 / eta,
      std::pow(20.0 * std::pow(10.0, 2.0 * n - 1.0) / std::pow(eta, 2.0 * n), 1.0 / (2.0 * n - 2.0)),
  };
  return *std::max_element(std::begin(candidates), std::end(candidates));
}

FailureReport failure_unbalanced(double c, double eta, std::size_t depth, std::size_t d,
                                 std::int64_t steps) {
  if (depth < 2 || depth % 2 != 0) throw ContractViolation("depth must be even and >= 2");
  if (!(c > 0.0 && c < 1.0)) throw ContractViolation("margin c must lie in (0, 1)");
  if (!(eta > 0.0)) throw ContractViolation("learning rate must be positive");
  if (d < 1 || steps < 1) throw ContractViolation("need d >= 1 and steps >= 1");

  FailureReport rep;
  rep.c = std::max(c, 0.75);
  rep.a_const = unbalanced_scale(rep.c, eta, depth);
  rep.phi = Matrix::identity(d);
  rep.floor = 0.5 * std::pow(std::pow(2.0, static_cast<double>(depth)) - 1.0, 2);

  const double root = std::pow(rep.c, 1.0 / static_cast<double>(depth));
  std::vector<Matrix> layers(depth, Matrix::identity(d));
  for (std::size_t j = 0; j < depth; ++j) {
    layers[j](0, 0) = j < depth / 2 ? rep.a_const * root : root / rep.a_const;
  }
  const WeightStack w0(NetSpec(std::vector<std::size_t>(depth + 1, d)), std::move(layers));
  rep.initial_margin = deficiency_margin(end_to_end(w0), rep.phi);

  TrainOptions opts;
  opts.eta = eta;
  opts.eps = std::numeric_limits<double>::min();
  opts.max_iters = steps;
  opts.observer = [&](std::int64_t, const WeightStack& w) {
    for (const Matrix& layer : w.layers()) {
      for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t col = 0; col < d; ++col) {
          if (r == 0 && col == 0) continue;
          if (layer(r, col) != (r == col ? 1.0 : 0.0)) rep.others_fixed = false;
        }
      }
    }
  };
  rep.trace = train(w0, Problem{rep.phi, 0.0}, opts);

  const auto& loss = rep.trace.loss;
  rep.guard_fired = rep.trace.status == TrainStatus::kDiverged;
  if (rep.guard_fired) rep.guard_step = rep.trace.steps();
  rep.floor_held = loss.size() > 1;
  rep.strictly_increasing = true;
  rep.min_loss_after_start = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t < loss.size(); ++t) {
    const double l = std::isnan(loss[t]) ? std::numeric_limits<double>::infinity() : loss[t];
    rep.min_loss_after_start = std::min(rep.min_loss_after_start, l);
    if (!(l >= rep.floor)) rep.floor_held = false;
    if (t >= 2 && !(l > loss[t - 1])) rep.strictly_increasing = false;
  }
  const bool margin_ok = std::abs(rep.initial_margin - rep.c) <= 1e-12;
  rep.verdict = margin_ok && rep.floor_held && rep.others_fixed;
  std::ostringstream msg;
  if (rep.verdict) {
    msg << "loss floor " << rep.floor << " held for t >= 1";
    if (rep.guard_step) msg << "; divergence guard fired at t = " << *rep.guard_step;
  } else if (!margin_ok) {
    msg << "initial margin " << rep.initial_margin << " differs from c = " << rep.c;
  } else if (!rep.floor_held) {
    msg << "loss fell to " << rep.min_loss_after_start << ", below the floor " << rep.floor;
  } else {
    msg << "untouched diagonal entries moved";
  }
  rep.message = msg.str();
  return rep;
}

FailureReport failure_no_margin(std::size_t d, std::size_t depth, double eta, double lambda,
                                std::int64_t steps) {
  if (depth < 2 || depth % 2 != 0) throw ContractViolation("depth must be even and >= 2");
  if (d < 2) throw ContractViolation("need d >= 2");
  if (!(lambda > 0.0)) throw ContractViolation("lambda must be positive");
  if (!(eta > 0.0)) throw ContractViolation("learning rate must be positive");
  if (steps < 1) throw ContractViolation("need steps >= 1");

  FailureReport rep;
  rep.phi = Matrix::identity(d);
  rep.phi(d - 1, d - 1) = -lambda;
  rep.floor = 0.5 * lambda * lambda;
  const NetSpec spec(std::vector<std::size_t>(depth + 1, d));
  const WeightStack w0 = identity_residual(spec);
  const Problem problem{rep.phi, 0.0};
  rep.initial_margin = deficiency_margin(end_to_end(w0), rep.phi);
  for (const Matrix& g : gradients(w0, problem)) {
    if (g.frobenius_norm() > 0.0) rep.initial_gradient_nonzero = true;
  }

  // phi is already diagonal, so the shared eigenbasis is the standard one.
  TrainOptions opts;
  opts.eta = eta;
  opts.eps = std::numeric_limits<double>::min();
  opts.max_iters = steps;
  opts.observer = [&](std::int64_t, const WeightStack& w) {
    for (const Matrix& layer : w.layers()) {
      double off = 0.0;
      for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t col = 0; col < d; ++col) {
          if (r != col) off += layer(r, col) * layer(r, col);
        }
      }
      rep.max_diag_residual = std::max(rep.max_diag_residual, std::sqrt(off));
    }
  };
  rep.trace = train(w0, problem, opts);

  rep.guard_fired = rep.trace.status == TrainStatus::kDiverged;
  if (rep.guard_fired) rep.guard_step = rep.trace.steps();
  rep.floor_held = true;
  rep.min_loss_after_start = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < rep.trace.loss.size(); ++t) {
    const double l = rep.trace.loss[t];
    if (t >= 1) rep.min_loss_after_start = std::min(rep.min_loss_after_start, l);
    if (!(l >= rep.floor)) rep.floor_held = false;
  }
  rep.verdict = rep.floor_held && rep.max_diag_residual <= 1e-8 && rep.initial_gradient_nonzero;
  std::ostringstream msg;
  if (rep.verdict) {
    msg << "loss floor " << rep.floor << " held";
  } else if (!rep.floor_held) {
    msg << "loss fell below the floor " << rep.floor;
  } else if (!rep.initial_gradient_nonzero) {
    msg << "initial point is stationary";
  } else {
    msg << "layers left the shared diagonal form (residual " << rep.max_diag_residual << ")";
  }
  rep.message = msg.str();
  return rep;
}

}  // namespace dln
