#pragma once

#include <cstdint>
#include <functional>

#include "dln/matrix.hpp"
#include "dln/network.hpp"
#include "dln/rng.hpp"

namespace dln {

/// Every entry of every layer i.i.d. Normal(0, s^2). Layers are drawn in
/// order W_1..W_N, entries row-major.
WeightStack gaussian_layerwise(const NetSpec& spec, double s, std::uint64_t seed);

/// W_j = I_d for every layer. Requires uniform widths.
WeightStack identity_residual(const NetSpec& spec);

/// Perfectly balanced stack with end-to-end matrix `a`: thin SVD A = U S V^T,
/// W_N ~ U S^{1/N}, hidden W_j ~ S^{1/N}, W_1 ~ S^{1/N} V^T, each embedded in
/// the top-left corner of an otherwise zero layer.
WeightStack balanced_init(const NetSpec& spec, const Matrix& a);

/// Balanced initialisation of a target drawn from `sampler`.
WeightStack balanced_init(const NetSpec& spec, const std::function<Matrix(Rng&)>& sampler,
                          std::uint64_t seed);

/// Balanced initialisation whose end-to-end entries are i.i.d. Normal(0, s^2).
WeightStack balanced_init_gaussian(const NetSpec& spec, double s, std::uint64_t seed);

/// rows x cols with i.i.d. Normal(0, s^2) entries, row-major draw order.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double s, Rng& rng);

}  // namespace dln
