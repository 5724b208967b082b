#include "dln/init.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dln/error.hpp"

namespace dln {

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double s, Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.data()) x = s * rng.normal();
  return m;
}

WeightStack gaussian_layerwise(const NetSpec& spec, double s, std::uint64_t seed) {
  if (!(s > 0.0) || !std::isfinite(s)) throw ContractViolation("init std must be positive");
  Rng rng(seed);
  std::vector<Matrix> layers;
  layers.reserve(spec.depth());
  for (std::size_t j = 1; j <= spec.depth(); ++j) {
    layers.push_back(gaussian_matrix(spec.dims()[j], spec.dims()[j - 1], s, rng));
  }
  return WeightStack(spec, std::move(layers));
}

WeightStack identity_residual(const NetSpec& spec) {
  if (!spec.uniform()) throw ContractViolation("identity initialisation needs equal widths");
  std::vector<Matrix> layers(spec.depth(), Matrix::identity(spec.input_dim()));
  return WeightStack(spec, std::move(layers));
}

WeightStack balanced_init(const NetSpec& spec, const Matrix& a) {
  if (!spec.full_rank_capable()) {
    throw ContractViolation("balanced initialisation needs every hidden width >= min(d_0, d_N)");
  }
  if (a.rows() != spec.output_dim() || a.cols() != spec.input_dim()) {
    throw ContractViolation("end-to-end target must be d_N x d_0");
  }
  const std::size_t n = spec.depth();
  if (n == 1) return WeightStack(spec, {a});

  const Svd svd = svd_thin(a);
  const std::size_t k = svd.s.size();
  std::vector<double> root(k);
  for (std::size_t i = 0; i < k; ++i) root[i] = std::pow(svd.s[i], 1.0 / static_cast<double>(n));

  const auto& dims = spec.dims();
  std::vector<Matrix> layers;
  layers.reserve(n);
  for (std::size_t j = 1; j <= n; ++j) layers.emplace_back(dims[j], dims[j - 1]);

  // W_1 ~ S^{1/N} V^T
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < dims[0]; ++c) layers[0](r, c) = root[r] * svd.v(c, r);
  }
  // W_2 .. W_{N-1} ~ S^{1/N}
  for (std::size_t j = 1; j + 1 < n; ++j) {
    for (std::size_t i = 0; i < k; ++i) layers[j](i, i) = root[i];
  }
  // W_N ~ U S^{1/N}
  for (std::size_t r = 0; r < dims[n]; ++r) {
    for (std::size_t c = 0; c < k; ++c) layers[n - 1](r, c) = svd.u(r, c) * root[c];
  }
  return WeightStack(spec, std::move(layers));
}

WeightStack balanced_init(const NetSpec& spec, const std::function<Matrix(Rng&)>& sampler,
                          std::uint64_t seed) {
  Rng rng(seed);
  return balanced_init(spec, sampler(rng));
}

WeightStack balanced_init_gaussian(const NetSpec& spec, double s, std::uint64_t seed) {
  if (!(s > 0.0) || !std::isfinite(s)) throw ContractViolation("init std must be positive");
  return balanced_init(
      spec, [&](Rng& rng) { return gaussian_matrix(spec.output_dim(), spec.input_dim(), s, rng); },
      seed);
}

}  // namespace dln
