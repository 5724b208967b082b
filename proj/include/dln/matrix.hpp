#pragma once

// Dense real matrices and the small linear-algebra kernel the rest of the
// library is built on. Sizes are expected to stay below a few hundred per
// side; nothing here is blocked or vectorised beyond what the compiler does.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace dln {

class Matrix {
 public:
  /// Empty 0x0 matrix; only useful as a placeholder to be assigned later.
  Matrix() = default;

  /// rows x cols of zeros. Both dimensions must be positive.
  Matrix(std::size_t rows, std::size_t cols);

  /// Row-major entries; size must equal rows*cols and every entry be finite.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

  /// Row-major nested list, e.g. Matrix{{1, 2}, {3, 4}}.
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  /// rows x cols with ones on the main diagonal (a rectangular identity).
  static Matrix eye(std::size_t rows, std::size_t cols);
  static Matrix diag(std::span<const double> values);
  static Matrix scalar(double value) { return Matrix(1, 1, {value}); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  Matrix transpose() const;
  double frobenius_norm() const;
  double squared_norm() const;
  bool all_finite() const noexcept;

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s) noexcept;

  /// this += s * o without a temporary.
  Matrix& add_scaled(const Matrix& o, double s);

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);

/// a^T * b without materialising the transpose.
Matrix multiply_at_b(const Matrix& a, const Matrix& b);
/// a * b^T without materialising the transpose.
Matrix multiply_a_bt(const Matrix& a, const Matrix& b);
/// a * b * c, associated whichever way needs fewer multiplications.
Matrix multiply3(const Matrix& a, const Matrix& b, const Matrix& c);

/// Frobenius inner product <a, b> = Tr(a^T b).
double frobenius_inner(const Matrix& a, const Matrix& b);
double trace(const Matrix& a);

struct Svd {
  Matrix u;                 // rows x k, orthonormal columns
  std::vector<double> s;    // k values, descending, >= 0
  Matrix v;                 // cols x k, orthonormal columns
};

struct SymEig {
  Matrix q;                 // orthogonal, eigenvectors in columns
  std::vector<double> values;  // descending
};

/// min(rows, cols) singular values in descending order.
std::vector<double> singular_values(const Matrix& a);
/// Thin SVD by one-sided Jacobi. Throws NumericalFailure past the sweep cap.
Svd svd_thin(const Matrix& a);

double sigma_max(const Matrix& a);
double sigma_min(const Matrix& a);

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Throws ContractViolation if `s` is not symmetric to 1e-8 relative.
SymEig sym_eig(const Matrix& s);

/// Fractional power of a symmetric PSD matrix. Eigenvalues slightly below
/// zero (roundoff) clamp to 0; 0^0 is taken as 1 so p = 0 gives identity.
Matrix psd_power(const Matrix& s, double p);
/// Same, reusing an existing decomposition.
Matrix psd_power(const SymEig& eig, double p);

}  // namespace dln
