#pragma once

// Deep linear networks x -> W_N ... W_1 x trained by full-batch gradient
// descent on 1/2 ||W_N ... W_1 - Phi||_F^2.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dln/matrix.hpp"

namespace dln {

/// Architecture d_0 (input), d_1..d_{N-1} (hidden), d_N (output).
class NetSpec {
 public:
  explicit NetSpec(std::vector<std::size_t> dims);

  std::size_t depth() const noexcept { return dims_.size() - 1; }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t input_dim() const noexcept { return dims_.front(); }
  std::size_t output_dim() const noexcept { return dims_.back(); }
  std::size_t max_dim() const noexcept;
  bool uniform() const noexcept;

  /// No hidden layer narrower than min(d_0, d_N), so the end-to-end matrix
  /// can have full rank.
  bool full_rank_capable() const noexcept;

  friend bool operator==(const NetSpec&, const NetSpec&) = default;

 private:
  std::vector<std::size_t> dims_;
};

/// Layers W_1..W_N; layer j (0-based index j-1) is d_j x d_{j-1}.
class WeightStack {
 public:
  WeightStack(NetSpec spec, std::vector<Matrix> layers);

  const NetSpec& spec() const noexcept { return spec_; }
  std::size_t depth() const noexcept { return layers_.size(); }
  const std::vector<Matrix>& layers() const noexcept { return layers_; }
  const Matrix& layer(std::size_t index) const { return layers_.at(index); }
  bool all_finite() const noexcept;

  /// Frobenius distance over all layers, sqrt(sum_j ||A_j - B_j||_F^2).
  double distance(const WeightStack& other) const;

  /// W_j <- W_j - eta * grads[j] for every layer.
  void descend(const std::vector<Matrix>& grads, double eta);

 private:
  NetSpec spec_;
  std::vector<Matrix> layers_;
};

/// Whitened regression target: minimise 1/2 ||W - phi||_F^2 (+ opt_const).
struct Problem {
  Matrix phi;
  double opt_const = 0.0;
};

/// W_N * ... * W_1.
Matrix end_to_end(const WeightStack& w);

/// 1/2 ||end_to_end(w) - phi||_F^2, without the additive constant.
double loss(const WeightStack& w, const Problem& p);

/// dL/dW_j = W_{j+1:N}^T (W_{1:N} - phi) W_{1:j-1}^T for every layer.
std::vector<Matrix> gradients(const WeightStack& w, const Problem& p);

/// One simultaneous gradient step on every layer.
WeightStack gd_step(const WeightStack& w, const Problem& p, double eta);

enum class TrainStatus { kConverged, kIterationCap, kDiverged };

std::string to_string(TrainStatus status);

struct MonitorFlags {
  bool delta = false;        // balancedness max_j ||W_{j+1}^T W_{j+1} - W_j W_j^T||_F
  bool sigma_min = false;    // smallest singular value of W_{1:N}
  bool margin = false;       // sigma_min(phi) - ||W_{1:N} - phi||_F
  bool layer_norms = false;  // max_j ||W_j||_2 and min_j ||W_j W_j^T||_F
  std::size_t stride = 1;

  bool any() const noexcept { return delta || sigma_min || margin || layer_norms; }
  static MonitorFlags all(std::size_t stride = 1) { return {true, true, true, true, stride}; }
};

struct MonitorRecord {
  std::int64_t t = 0;
  std::optional<double> delta;
  std::optional<double> sigma_min;
  std::optional<double> margin;
  std::optional<double> max_layer_norm;
  std::optional<double> min_layer_gram;
};

struct TrainTrace {
  std::vector<double> loss;  // loss[t] = l(t); always every iteration
  std::vector<MonitorRecord> monitors;
  MonitorFlags flags;
  TrainStatus status = TrainStatus::kIterationCap;
  double eta = 0.0;
  std::optional<WeightStack> final_weights;

  /// Number of gradient steps actually applied.
  std::int64_t steps() const noexcept { return static_cast<std::int64_t>(loss.size()) - 1; }
};

struct TrainOptions {
  double eta = 0.0;
  double eps = 1e-5;
  std::int64_t max_iters = 1000000;
  MonitorFlags monitors;
  /// Called with (t, W(t)) before the step from t to t+1.
  std::function<void(std::int64_t, const WeightStack&)> observer;
};

inline constexpr double kDivergenceLoss = 1e12;

/// Gradient descent from w0 until loss <= eps, the iteration cap, or the
/// divergence guard (loss > 1e12 or a non-finite weight).
TrainTrace train(const WeightStack& w0, const Problem& p, const TrainOptions& options);

/// Evaluates the monitors selected in `flags` at the current weights.
MonitorRecord measure(std::int64_t t, const WeightStack& w, const Problem& p,
                      const MonitorFlags& flags);

}  // namespace dln
