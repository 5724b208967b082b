#include "dln/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "dln/error.hpp"
#include "dln/theory.hpp"

namespace dln {

namespace {

void require_compatible(const WeightStack& w, const Problem& p) {
  const auto& spec = w.spec();
  if (p.phi.rows() != spec.output_dim() || p.phi.cols() != spec.input_dim()) {
    throw ContractViolation("target is " + std::to_string(p.phi.rows()) + "x" +
                            std::to_string(p.phi.cols()) + " but the network maps " +
                            std::to_string(spec.input_dim()) + " -> " +
                            std::to_string(spec.output_dim()));
  }
}

// Partial products for one loss/gradient evaluation. When d_N <= d_0 the
// chains run from the output side (every partial product has d_N rows),
// otherwise from the input side (every partial product has d_0 columns).
// Either way each gradient costs O(d_j * d_{j-1} * min(d_0, d_N)).
class Evaluator {
 public:
  Evaluator(const WeightStack& w, const Problem& p) : w_(w), p_(p) {
    const auto& layers = w.layers();
    const std::size_t n = layers.size();
    output_side_ = w.spec().output_dim() <= w.spec().input_dim();
    chain_.resize(n + 1);
    if (output_side_) {
      // chain_[j] = W_N ... W_{j+1}, chain_[N] = I.
      chain_[n] = Matrix::identity(w.spec().output_dim());
      chain_[n - 1] = layers[n - 1];
      for (std::size_t j = n - 1; j-- > 0;) chain_[j] = chain_[j + 1] * layers[j];
      residual_ = chain_[0] - p.phi;
    } else {
      // chain_[j] = W_j ... W_1, chain_[0] = I.
      chain_[0] = Matrix::identity(w.spec().input_dim());
      chain_[1] = layers[0];
      for (std::size_t j = 2; j <= n; ++j) chain_[j] = layers[j - 1] * chain_[j - 1];
      residual_ = chain_[n] - p.phi;
    }
    loss_ = 0.5 * residual_.squared_norm();
  }

  double loss() const noexcept { return loss_; }
  const Matrix& residual() const noexcept { return residual_; }
  Matrix product() const { return residual_ + p_.phi; }

  std::vector<Matrix> gradients() const {
    const auto& layers = w_.layers();
    const std::size_t n = layers.size();
    std::vector<Matrix> grads(n);
    if (output_side_) {
      // back = E W_1^T ... W_{j-1}^T ; grad_j = chain_[j]^T back.
      Matrix back = residual_;
      for (std::size_t j = 0; j < n; ++j) {
        grads[j] = (j + 1 == n) ? back : multiply_at_b(chain_[j + 1], back);
        if (j + 1 < n) back = multiply_a_bt(back, layers[j]);
      }
    } else {
      // back = W_{j+1}^T ... W_N^T E ; grad_j = back chain_[j-1]^T.
      Matrix back = residual_;
      for (std::size_t j = n; j-- > 0;) {
        grads[j] = (j == 0) ? back : multiply_a_bt(back, chain_[j]);
        if (j > 0) back = multiply_at_b(layers[j], back);
      }
    }
    return grads;
  }

 private:
  const WeightStack& w_;
  const Problem& p_;
  bool output_side_ = true;
  std::vector<Matrix> chain_;
  Matrix residual_;
  double loss_ = 0.0;
};

MonitorRecord measure_with(std::int64_t t, const WeightStack& w, const Matrix& product,
                           const Problem& p, double phi_sigma_min, const MonitorFlags& flags) {
  MonitorRecord r;
  r.t = t;
  if (flags.delta) r.delta = balancedness_delta(w);
  if (flags.sigma_min) r.sigma_min = sigma_min(product);
  if (flags.margin) r.margin = phi_sigma_min - (product - p.phi).frobenius_norm();
  if (flags.layer_norms) {
    double top = 0.0;
    double gram = std::numeric_limits<double>::infinity();
    for (const auto& layer : w.layers()) {
      top = std::max(top, sigma_max(layer));
      gram = std::min(gram, multiply_a_bt(layer, layer).frobenius_norm());
    }
    r.max_layer_norm = top;
    r.min_layer_gram = gram;
  }
  return r;
}

}  // namespace

NetSpec::NetSpec(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw ContractViolation("a network needs at least d_0 and d_1");
  for (std::size_t d : dims_) {
    if (d == 0) throw ContractViolation("layer widths must be positive");
  }
}

std::size_t NetSpec::max_dim() const noexcept { return *std::max_element(dims_.begin(), dims_.end()); }

bool NetSpec::uniform() const noexcept {
  return std::all_of(dims_.begin(), dims_.end(), [&](std::size_t d) { return d == dims_.front(); });
}

bool NetSpec::full_rank_capable() const noexcept {
  const std::size_t outer = std::min(dims_.front(), dims_.back());
  for (std::size_t j = 1; j + 1 < dims_.size(); ++j) {
    if (dims_[j] < outer) return false;
  }
  return true;
}

WeightStack::WeightStack(NetSpec spec, std::vector<Matrix> layers)
    : spec_(std::move(spec)), layers_(std::move(layers)) {
  if (layers_.size() != spec_.depth()) {
    throw ContractViolation("expected " + std::to_string(spec_.depth()) + " layers, got " +
                            std::to_string(layers_.size()));
  }
  for (std::size_t j = 0; j < layers_.size(); ++j) {
    const auto& l = layers_[j];
    if (l.rows() != spec_.dims()[j + 1] || l.cols() != spec_.dims()[j]) {
      throw ContractViolation("layer " + std::to_string(j + 1) + " is " + std::to_string(l.rows()) +
                              "x" + std::to_string(l.cols()) + ", expected " +
                              std::to_string(spec_.dims()[j + 1]) + "x" +
                              std::to_string(spec_.dims()[j]));
    }
  }
}

bool WeightStack::all_finite() const noexcept {
  return std::all_of(layers_.begin(), layers_.end(), [](const Matrix& m) { return m.all_finite(); });
}

double WeightStack::distance(const WeightStack& other) const {
  if (!(spec_ == other.spec_)) throw ContractViolation("distance: architectures differ");
  double s = 0.0;
  for (std::size_t j = 0; j < layers_.size(); ++j) s += (layers_[j] - other.layers_[j]).squared_norm();
  return std::sqrt(s);
}

void WeightStack::descend(const std::vector<Matrix>& grads, double eta) {
  if (grads.size() != layers_.size()) throw ContractViolation("descend: gradient count mismatch");
  for (std::size_t j = 0; j < layers_.size(); ++j) layers_[j].add_scaled(grads[j], -eta);
}

Matrix end_to_end(const WeightStack& w) {
  const auto& layers = w.layers();
  Matrix out = layers.front();
  for (std::size_t j = 1; j < layers.size(); ++j) out = layers[j] * out;
  return out;
}

double loss(const WeightStack& w, const Problem& p) {
  require_compatible(w, p);
  return 0.5 * (end_to_end(w) - p.phi).squared_norm();
}

std::vector<Matrix> gradients(const WeightStack& w, const Problem& p) {
  require_compatible(w, p);
  return Evaluator(w, p).gradients();
}

WeightStack gd_step(const WeightStack& w, const Problem& p, double eta) {
  if (!(eta >= 0.0)) throw ContractViolation("learning rate must be nonnegative");
  WeightStack next = w;
  next.descend(gradients(w, p), eta);
  return next;
}

std::string to_string(TrainStatus status) {
  switch (status) {
    case TrainStatus::kConverged: return "converged";
    case TrainStatus::kIterationCap: return "iteration-cap";
    case TrainStatus::kDiverged: return "diverged";
  }
  return "unknown";
}

MonitorRecord measure(std::int64_t t, const WeightStack& w, const Problem& p,
                      const MonitorFlags& flags) {
  require_compatible(w, p);
  const double phi_min = flags.margin ? sigma_min(p.phi) : 0.0;
  return measure_with(t, w, end_to_end(w), p, phi_min, flags);
}

TrainTrace train(const WeightStack& w0, const Problem& p, const TrainOptions& options) {
  require_compatible(w0, p);
  if (!(options.eps > 0.0)) throw ContractViolation("eps must be positive");
  if (options.max_iters < 1) throw ContractViolation("max_iters must be at least 1");
  if (!(options.eta >= 0.0) || !std::isfinite(options.eta)) {
    throw ContractViolation("learning rate must be finite and nonnegative");
  }
  const std::size_t stride = std::max<std::size_t>(1, options.monitors.stride);
  const double phi_min = options.monitors.margin ? sigma_min(p.phi) : 0.0;

  TrainTrace trace;
  trace.flags = options.monitors;
  trace.flags.stride = stride;
  trace.eta = options.eta;

  WeightStack w = w0;
  for (std::int64_t t = 0;; ++t) {
    Evaluator eval(w, p);
    const double l = eval.loss();
    trace.loss.push_back(l);
    const bool finite = std::isfinite(l) && w.all_finite();
    if (finite && options.monitors.any() && static_cast<std::size_t>(t) % stride == 0) {
      trace.monitors.push_back(measure_with(t, w, eval.product(), p, phi_min, options.monitors));
    }
    if (options.observer) options.observer(t, w);
    if (!finite || l > kDivergenceLoss) {
      trace.status = TrainStatus::kDiverged;
      break;
    }
    if (l <= options.eps) {
      trace.status = TrainStatus::kConverged;
      break;
    }
    if (t >= options.max_iters) {
      trace.status = TrainStatus::kIterationCap;
      break;
    }
    w.descend(eval.gradients(), options.eta);
  }
  trace.final_weights = std::move(w);
  return trace;
}

}  // namespace dln
