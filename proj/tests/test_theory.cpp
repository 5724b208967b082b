#include <gtest/gtest.h>

#include <cmath>

#include "dln/error.hpp"
#include "dln/init.hpp"
#include "dln/theory.hpp"
#include "support.hpp"

using namespace dln;
using dln::testing::random_matrix;
using dln::testing::uniform_int;

namespace {

WeightStack scalars(std::vector<double> values) {
  std::vector<Matrix> layers;
  for (double v : values) layers.push_back(Matrix::scalar(v));
  return WeightStack(NetSpec(std::vector<std::size_t>(values.size() + 1, 1)), layers);
}

// Nearly balanced stack: SVD-balanced layers plus a small perturbation.
WeightStack near_balanced(const NetSpec& spec, Rng& rng, double noise) {
  const Matrix a = random_matrix(spec.output_dim(), spec.input_dim(), rng, 0.8);
  std::vector<Matrix> layers = balanced_init(spec, a).layers();
  for (Matrix& l : layers) l.add_scaled(random_matrix(l.rows(), l.cols(), rng), noise);
  return WeightStack(spec, layers);
}

NetSpec funnel_spec(Rng& rng, std::size_t max_depth, std::size_t max_dim) {
  const std::size_t n = uniform_int(rng, 1, max_depth);
  std::vector<std::size_t> dims(n + 1);
  dims[0] = uniform_int(rng, 1, max_dim);
  dims[n] = uniform_int(rng, 1, max_dim);
  for (std::size_t j = 1; j < n; ++j) dims[j] = uniform_int(rng, std::max(dims[0], dims[n]), max_dim);
  return NetSpec(dims);
}

}  // namespace

TEST(Balancedness, HandValues) {
  EXPECT_EQ(balancedness_delta(scalars({2})), 0.0);
  const WeightStack w(NetSpec({2, 1, 1}), {Matrix{{1, 0}}, Matrix{{2}}});
  EXPECT_DOUBLE_EQ(balancedness_delta(w), 3.0);
  EXPECT_EQ(balancedness_delta(identity_residual(NetSpec({3, 3, 3}))), 0.0);
}

TEST(DeficiencyMargin, HandValues) {
  EXPECT_DOUBLE_EQ(deficiency_margin(Matrix::identity(3), Matrix::identity(3)), 1.0);
  EXPECT_NEAR(deficiency_margin(Matrix::identity(2) * 0.6, Matrix::identity(2)), 1 - 0.4 * std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(deficiency_margin(Matrix{{2, 0}, {0, 0.5}}, Matrix{{2, 0}, {0, 1}}), 0.5, 1e-15);
  EXPECT_THROW(deficiency_margin(Matrix(2, 2), Matrix(2, 3)), ContractViolation);
}

TEST(MarginImpliesSigma, HandExampleAndContract) {
  const MarginWitness w = margin_implies_sigma(Matrix::identity(2) * 0.6, Matrix::identity(2), 0.4);
  EXPECT_TRUE(w.hypothesis);
  EXPECT_TRUE(w.holds);
  EXPECT_DOUBLE_EQ(w.sigma_min, 0.6);
  EXPECT_THROW(margin_implies_sigma(Matrix::identity(2), Matrix::identity(2), 0.0), ContractViolation);
}

TEST(MarginImpliesSigma, NoCounterexampleInRandomBall) {
  Rng rng(4);
  int tested = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t r = uniform_int(rng, 1, 4);
    const std::size_t c = uniform_int(rng, 1, 4);
    const Matrix phi = random_matrix(r, c, rng) + Matrix::eye(r, c) * 2.0;
    const double smin = sigma_min(phi);
    if (smin <= 0.0) continue;
    const double margin = smin * rng.uniform() * 0.999 + 1e-9;
    Matrix d = random_matrix(r, c, rng);
    d *= (smin - margin) * rng.uniform() / d.frobenius_norm();
    const MarginWitness w = margin_implies_sigma(phi + d, phi, margin);
    ASSERT_TRUE(w.hypothesis);
    EXPECT_TRUE(w.holds) << "trial " << trial;
    ++tested;
  }
  EXPECT_GT(tested, 900);
}

TEST(RateBounds, ClosedForms) {
  const RateBounds one = rate_bounds(1.0, 1, 1.0);
  EXPECT_DOUBLE_EQ(one.eta_max, 1.0 / 6144.0);
  EXPECT_DOUBLE_EQ(one.required_delta, 1.0 / 256.0);
  const RateBounds two = rate_bounds(1.0, 2, 1.0);
  EXPECT_DOUBLE_EQ(two.eta_max, 1.0 / 49152.0);
  EXPECT_DOUBLE_EQ(two.required_delta, 1.0 / 2048.0);
  EXPECT_DOUBLE_EQ(two.rate_exponent, 1.0);
}

TEST(IterationBound, DepthOneExample) {
  // ceil(6144 ln 10) = 14148 (6144 ln 10 = 14147.01...).
  EXPECT_EQ(iteration_bound(1.0, 1, 1.0 / 6144.0, 0.5, 0.05), 14148);
  EXPECT_EQ(static_cast<std::int64_t>(std::ceil(6144.0 * std::log(10.0))), 14148);
  EXPECT_EQ(iteration_bound(1.0, 1, 1.0 / 6144.0, 0.5, 0.5), 0);
}

TEST(Theorem1Certificate, ScalarBalancedStart) {
  const Certificate c = theorem1_certificate(scalars({0.9}), Matrix::scalar(1), 0.05);
  EXPECT_NEAR(c.margin, 0.9, 1e-15);
  EXPECT_TRUE(c.satisfied);
  EXPECT_NEAR(c.loss0, 0.005, 1e-15);
  EXPECT_EQ(c.t_bound(c.eta_max, c.loss0), 0);

  const WeightStack w = balanced_init(NetSpec({1, 1, 1}), Matrix::scalar(0.9));
  const Certificate c2 = theorem1_certificate(w, Matrix::scalar(1), 1e-5);
  EXPECT_NEAR(c2.eta_max, std::pow(0.9, 3.0) / (6144.0 * 8.0), 1e-20);
  EXPECT_TRUE(c2.satisfied);
}

TEST(Theorem1Certificate, NoMarginIsReportedNotThrown) {
  const Certificate c = theorem1_certificate(scalars({-1}), Matrix::scalar(1), 1e-5);
  EXPECT_FALSE(c.margin_positive);
  EXPECT_FALSE(c.satisfied);
  const WeightStack unbalanced(NetSpec({2, 1, 1}), {Matrix{{0.5, 0}}, Matrix{{1.8}}});
  const Certificate u = theorem1_certificate(unbalanced, Matrix{{1, 0}}, 1e-5);
  EXPECT_FALSE(u.balanced_enough);
  EXPECT_FALSE(u.satisfied);
}

TEST(Theorem1Certificate, ScaleCovariance) {
  Rng rng(8);
  for (std::size_t n : {1u, 2u, 3u, 5u}) {
    const NetSpec spec(std::vector<std::size_t>(n + 1, 3));
    const Matrix phi = Matrix::identity(3) + random_matrix(3, 3, rng, 0.1);
    const Matrix a = phi + random_matrix(3, 3, rng, 0.05);
    const double alpha = 2.5;
    const Certificate c1 = theorem1_certificate(balanced_init(spec, a), phi, 1e-5);
    const Certificate c2 = theorem1_certificate(balanced_init(spec, a * alpha), phi * alpha, 1e-5);
    ASSERT_TRUE(c1.margin_positive);
    EXPECT_NEAR(c2.margin, alpha * c1.margin, 1e-12);
    const double nn = static_cast<double>(n);
    EXPECT_NEAR(c2.eta_max / c1.eta_max, std::pow(alpha, -2.0 * (nn - 1.0) / nn), 1e-10);
  }
}

TEST(VerifyTrajectory, RequiresMonitors) {
  TrainOptions o;
  o.eta = 0.01;
  o.max_iters = 3;
  const TrainTrace t = train(scalars({0.5, 0.5}), Problem{Matrix::scalar(1)}, o);
  const Certificate c = theorem1_certificate(scalars({0.5, 0.5}), Matrix::scalar(1), 1e-5);
  EXPECT_THROW(verify_trajectory(t, Matrix::scalar(1), 0.01, c), ContractViolation);
}

TEST(VerifyTrajectory, GlobalMinimumStepHoldsTrivially) {
  TrainOptions o;
  o.eta = 0.01;
  o.eps = 1e-300;
  o.max_iters = 1;
  o.monitors = MonitorFlags::all();
  const WeightStack w = scalars({1, 1});
  const TrainTrace t = train(w, Problem{Matrix::scalar(1)}, o);
  const Certificate c = theorem1_certificate(w, Matrix::scalar(1), 1e-5);
  const TrajectoryReport r = verify_trajectory(t, Matrix::scalar(1), 0.01, c);
  EXPECT_EQ(r.descent_failures, 0u);
  EXPECT_TRUE(r.passed);
}

TEST(VerifyTrajectory, CompliantMatrixRunPasses) {
  const NetSpec spec({3, 3, 3});
  const Matrix phi = Matrix::identity(3);
  const WeightStack w = balanced_init(spec, phi * 0.8);
  const Certificate c = theorem1_certificate(w, phi, 1e-5);
  ASSERT_TRUE(c.satisfied);
  TrainOptions o;
  o.eta = c.eta_max;
  o.max_iters = 2000;
  o.monitors = MonitorFlags::all();
  const TrainTrace t = train(w, Problem{phi}, o);
  const TrajectoryReport r = verify_trajectory(t, phi, c.eta_max, c);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.checked_steps, 2001u);
}

TEST(VerifyTrajectory, DivergentRunFailsFromFirstStep) {
  // Wildly unbalanced scalar pair with a margin; gradient descent blows up.
  const WeightStack w = scalars({1.2247e6, 0.75 / 1.2247e6});
  const Certificate c = theorem1_certificate(w, Matrix::scalar(1), 1e-5);
  TrainOptions o;
  o.eta = 0.01;
  o.max_iters = 20;
  o.monitors = MonitorFlags::all();
  const TrainTrace t = train(w, Problem{Matrix::scalar(1)}, o);
  const TrajectoryReport r = verify_trajectory(t, Matrix::scalar(1), 0.01, c);
  EXPECT_FALSE(r.passed);
  ASSERT_TRUE(r.first_failure.has_value());
  EXPECT_LE(*r.first_failure, 1);
}

TEST(Theorem2Certificate, HandValues) {
  Matrix phi(1, 100);
  phi(0, 0) = 1.0;
  const BalancedInitCertificate c = theorem2_certificate(NetSpec({100, 100, 1}), phi, 1e-3, 1e-5);
  EXPECT_NEAR(c.eta_max / 1.25e-18, 1.0, 1e-12);
  EXPECT_TRUE(c.satisfied);
  EXPECT_NEAR(c.margin_threshold, 5e-5, 1e-18);
  const double p = (1 - 2 * std::exp(-100.0 / 16)) * (3 - 4 * normal_cdf(2 / std::sqrt(50.0))) / 2;
  EXPECT_NEAR(c.success_probability, p, 1e-15);
  EXPECT_GT(c.success_probability, 0.25);

  // eps = ||phi||^2 / 8 zeroes the second summand.
  const BalancedInitCertificate e = theorem2_certificate(NetSpec({100, 100, 1}), phi, 1e-3, 1.0 / 8.0);
  const double warm = std::log(4.0) * std::pow(1.0 / 1e-4, 1.0);
  EXPECT_NEAR(e.iterations(1.0), 4.0 * warm, 1e-9 * warm);

  EXPECT_FALSE(theorem2_certificate(NetSpec({100, 100, 1}), phi, 2e-3, 1e-5).std_in_range);
  EXPECT_FALSE(theorem2_certificate(NetSpec({50, 50, 1}), Matrix(1, 50) + Matrix::eye(1, 50), 1e-3, 1e-5)
                   .input_dim_ok);
  EXPECT_THROW(theorem2_certificate(NetSpec({3, 3, 2}), Matrix(2, 3), 1e-3, 1e-5), ContractViolation);
}

TEST(NormalCdf, KnownValues) {
  EXPECT_DOUBLE_EQ(normal_cdf(0.0), 0.5);
  EXPECT_NEAR(normal_cdf(1.959963984540054), 0.975, 1e-15);
  EXPECT_NEAR(normal_cdf(-1.0), 0.15865525393145707, 1e-15);
}

TEST(CommuteBound, HoldsOnRandomNearBalancedStacks) {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const NetSpec spec = funnel_spec(rng, 5, 8);
    const double noise = trial % 2 ? 1e-3 : 0.1;
    const CommuteBoundCheck c = commute_bound_check(near_balanced(spec, rng, noise));
    EXPECT_TRUE(c.holds) << "trial " << trial << " ratio " << c.worst_ratio;
  }
  EXPECT_THROW(commute_bound_check(gaussian_layerwise(NetSpec({3, 2, 2}), 1.0, 1)), ContractViolation);
}

TEST(LayerNormBound, HoldsWheneverApplicable) {
  Rng rng(37);
  int applicable = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const NetSpec spec = funnel_spec(rng, 5, 8);
    const WeightStack w = near_balanced(spec, rng, 1e-4);
    const double c = sigma_max(end_to_end(w)) * (1.0 + rng.uniform());
    const LayerNormBoundCheck check = layer_norm_bound_check(w, c);
    if (check.applicable) ++applicable;
    EXPECT_TRUE(check.holds) << "trial " << trial;
  }
  EXPECT_GT(applicable, 150);
}
