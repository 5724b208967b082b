#include "dln/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "dln/error.hpp"

namespace dln {

namespace {

constexpr int kMaxSweeps = 60;
constexpr double kEps = std::numeric_limits<double>::epsilon();

void require_positive(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw ContractViolation("matrix dimensions must be positive, got " + std::to_string(rows) +
                            "x" + std::to_string(cols));
  }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                            "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                            "x" + std::to_string(b.cols()));
  }
}

// Column-major working copy used by the one-sided Jacobi sweeps, oriented so
// that rows >= cols.
struct ColumnBlock {
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<double> g;

  double* col(std::size_t j) { return g.data() + j * m; }
  const double* col(std::size_t j) const { return g.data() + j * m; }
};

ColumnBlock to_columns(const Matrix& a, bool transposed) {
  ColumnBlock b;
  b.m = transposed ? a.cols() : a.rows();
  b.n = transposed ? a.rows() : a.cols();
  b.g.resize(b.m * b.n);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (transposed) {
        b.g[i * b.m + j] = a(i, j);
      } else {
        b.g[j * b.m + i] = a(i, j);
      }
    }
  }
  return b;
}

// One-sided (Hestenes) Jacobi: rotates column pairs of `w` until all pairs are
// numerically orthogonal. Rotations are mirrored into `v` when given.
void orthogonalize_columns(ColumnBlock& w, ColumnBlock* v) {
  const std::size_t n = w.n;
  if (n < 2) return;
  const double tol = std::max(1e-14, static_cast<double>(w.m) * kEps);
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double* gp = w.col(p);
        double* gq = w.col(q);
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < w.m; ++i) {
          alpha += gp[i] * gp[i];
          beta += gq[i] * gq[i];
          gamma += gp[i] * gq[i];
        }
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < w.m; ++i) {
          const double x = gp[i], y = gq[i];
          gp[i] = c * x - s * y;
          gq[i] = s * x + c * y;
        }
        if (v != nullptr) {
          double* vp = v->col(p);
          double* vq = v->col(q);
          for (std::size_t i = 0; i < v->m; ++i) {
            const double x = vp[i], y = vq[i];
            vp[i] = c * x - s * y;
            vq[i] = s * x + c * y;
          }
        }
      }
    }
    if (!rotated) return;
  }
  throw NumericalFailure("one-sided Jacobi SVD did not converge within " +
                         std::to_string(kMaxSweeps) + " sweeps");
}

double column_norm(const double* c, std::size_t m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) s += c[i] * c[i];
  return std::sqrt(s);
}

// Fills the columns of `u` flagged in `missing` with unit vectors orthogonal
// to every other column (Gram-Schmidt against the standard basis).
void complete_orthonormal(Matrix& u, const std::vector<bool>& missing) {
  const std::size_t m = u.rows();
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < u.cols(); ++j) {
    if (!missing[j]) continue;
    for (; candidate < m; ++candidate) {
      std::vector<double> x(m, 0.0);
      x[candidate] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < u.cols(); ++k) {
          if (k == j || (missing[k] && k > j)) continue;
          double d = 0.0;
          for (std::size_t i = 0; i < m; ++i) d += u(i, k) * x[i];
          for (std::size_t i = 0; i < m; ++i) x[i] -= d * u(i, k);
        }
      }
      const double nrm = column_norm(x.data(), m);
      if (nrm > 0.5) {
        for (std::size_t i = 0; i < m; ++i) u(i, j) = x[i] / nrm;
        ++candidate;
        break;
      }
    }
  }
}

// Largest-magnitude entry of each column of `primary` made nonnegative;
// the matching column of `partner` flips with it.
void fix_signs(Matrix& primary, Matrix* partner) {
  for (std::size_t j = 0; j < primary.cols(); ++j) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < primary.rows(); ++i) {
      if (std::abs(primary(i, j)) > best) {
        best = std::abs(primary(i, j));
        arg = i;
      }
    }
    if (primary(arg, j) < 0.0) {
      for (std::size_t i = 0; i < primary.rows(); ++i) primary(i, j) = -primary(i, j);
      if (partner != nullptr) {
        for (std::size_t i = 0; i < partner->rows(); ++i) (*partner)(i, j) = -(*partner)(i, j);
      }
    }
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
  require_positive(rows, cols);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
  require_positive(rows, cols);
  if (data_.size() != rows * cols) {
    throw ContractViolation("matrix entry count " + std::to_string(data_.size()) +
                            " does not match " + std::to_string(rows) + "x" +
                            std::to_string(cols));
  }
  if (!all_finite()) throw ContractViolation("matrix entries must be finite");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  require_positive(rows_, cols_);
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ContractViolation("ragged matrix initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  if (!all_finite()) throw ContractViolation("matrix entries must be finite");
}

Matrix Matrix::identity(std::size_t n) { return eye(n, n); }

Matrix Matrix::eye(std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < std::min(rows, cols); ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diag(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t;
  t.rows_ = cols_;
  t.cols_ = rows_;
  t.data_.resize(data_.size());
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) t.data_[j * rows_ + i] = data_[i * cols_ + j];
  }
  return t;
}

double Matrix::squared_norm() const {
  double s = 0.0;
  for (double x : data_) s += x * x;
  return s;
}

double Matrix::frobenius_norm() const { return std::sqrt(squared_norm()); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Matrix& Matrix::operator+=(const Matrix& o) {
  require_same_shape(*this, o, "add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  require_same_shape(*this, o, "subtract");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
  for (double& x : data_) x *= s;
  return *this;
}

Matrix& Matrix::add_scaled(const Matrix& o, double s) {
  require_same_shape(*this, o, "add_scaled");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ContractViolation("multiply: inner dimensions differ (" + std::to_string(a.cols()) +
                            " vs " + std::to_string(b.rows()) + ")");
  }
  Matrix c(a.rows(), b.cols());
  const std::size_t n = a.cols(), p = b.cols();
  const double* bd = b.data().data();
  double* cd = c.data().data();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* crow = cd + i * p;
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = bd + k * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix multiply_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ContractViolation("multiply_at_b: row counts differ");
  Matrix c(a.cols(), b.cols());
  const std::size_t p = b.cols();
  double* cd = c.data().data();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* brow = b.data().data() + k * p;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* crow = cd + i * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix multiply_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ContractViolation("multiply_a_bt: column counts differ");
  Matrix c(a.rows(), b.rows());
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.data().data() + i * n;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.data().data() + j * n;
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += arow[k] * brow[k];
      c(i, j) = s;
    }
  }
  return c;
}

Matrix multiply3(const Matrix& a, const Matrix& b, const Matrix& c) {
  const double left = static_cast<double>(a.rows()) * a.cols() * b.cols() +
                      static_cast<double>(a.rows()) * b.cols() * c.cols();
  const double right = static_cast<double>(b.rows()) * b.cols() * c.cols() +
                       static_cast<double>(a.rows()) * a.cols() * c.cols();
  return left <= right ? (a * b) * c : a * (b * c);
}

double frobenius_inner(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "frobenius_inner");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

double trace(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) s += a(i, i);
  return s;
}

std::vector<double> singular_values(const Matrix& a) {
  ColumnBlock w = to_columns(a, a.rows() < a.cols());
  orthogonalize_columns(w, nullptr);
  std::vector<double> s(w.n);
  for (std::size_t j = 0; j < w.n; ++j) s[j] = column_norm(w.col(j), w.m);
  std::sort(s.begin(), s.end(), std::greater<>());
  return s;
}

Svd svd_thin(const Matrix& a) {
  const bool transposed = a.rows() < a.cols();
  ColumnBlock w = to_columns(a, transposed);
  ColumnBlock v;
  v.m = w.n;
  v.n = w.n;
  v.g.assign(w.n * w.n, 0.0);
  for (std::size_t j = 0; j < w.n; ++j) v.col(j)[j] = 1.0;
  orthogonalize_columns(w, &v);

  const std::size_t k = w.n;
  std::vector<double> norms(k);
  for (std::size_t j = 0; j < k; ++j) norms[j] = column_norm(w.col(j), w.m);
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  const double smax = k ? norms[order[0]] : 0.0;
  Matrix left(w.m, k);
  Matrix right(w.n, k);
  std::vector<double> s(k);
  std::vector<bool> missing(k, false);
  for (std::size_t jj = 0; jj < k; ++jj) {
    const std::size_t j = order[jj];
    s[jj] = norms[j];
    for (std::size_t i = 0; i < v.m; ++i) right(i, jj) = v.col(j)[i];
    if (norms[j] <= 1e-13 * smax || norms[j] == 0.0) {
      missing[jj] = true;
      continue;
    }
    for (std::size_t i = 0; i < w.m; ++i) left(i, jj) = w.col(j)[i] / norms[j];
  }
  complete_orthonormal(left, missing);

  Svd out;
  out.s = std::move(s);
  if (transposed) {
    out.u = std::move(right);
    out.v = std::move(left);
  } else {
    out.u = std::move(left);
    out.v = std::move(right);
  }
  fix_signs(out.u, &out.v);
  return out;
}

double sigma_max(const Matrix& a) { return singular_values(a).front(); }
double sigma_min(const Matrix& a) { return singular_values(a).back(); }

SymEig sym_eig(const Matrix& s) {
  if (s.rows() != s.cols()) throw ContractViolation("sym_eig: matrix must be square");
  const std::size_t n = s.rows();
  const double norm = s.frobenius_norm();
  const Matrix st = s.transpose();
  if ((s - st).frobenius_norm() > 1e-8 * std::max(1.0, norm)) {
    throw ContractViolation("sym_eig: matrix is not symmetric");
  }
  Matrix a = (s + st) * 0.5;
  Matrix q = Matrix::identity(n);
  const double tol = 1e-15 * norm;

  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t r = p + 1; r < n; ++r) {
        const double apr = a(p, r);
        if (std::abs(apr) <= tol) continue;
        rotated = true;
        const double theta = (a(r, r) - a(p, p)) / (2.0 * apr);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(1.0, theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akr = a(k, r);
          a(k, p) = c * akp - sn * akr;
          a(k, r) = sn * akp + c * akr;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), ark = a(r, k);
          a(p, k) = c * apk - sn * ark;
          a(r, k) = sn * apk + c * ark;
        }
        a(p, r) = 0.0;
        a(r, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double qkp = q(k, p), qkr = q(k, r);
          q(k, p) = c * qkp - sn * qkr;
          q(k, r) = sn * qkp + c * qkr;
        }
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    throw NumericalFailure("Jacobi eigensolver did not converge within " +
                           std::to_string(kMaxSweeps) + " sweeps");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  SymEig out;
  out.q = Matrix(n, n);
  out.values.resize(n);
  for (std::size_t jj = 0; jj < n; ++jj) {
    out.values[jj] = a(order[jj], order[jj]);
    for (std::size_t i = 0; i < n; ++i) out.q(i, jj) = q(i, order[jj]);
  }
  fix_signs(out.q, nullptr);
  return out;
}

Matrix psd_power(const SymEig& eig, double p) {
  if (p < 0.0 || !std::isfinite(p)) throw ContractViolation("psd_power: exponent must be >= 0");
  const std::size_t n = eig.values.size();
  const double top = n ? std::max(1.0, std::abs(eig.values.front())) : 1.0;
  double largest = 0.0;
  for (double v : eig.values) largest = std::max(largest, std::abs(v));
  const double negligible = 16.0 * static_cast<double>(n) * std::numeric_limits<double>::epsilon() * largest;
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lambda = eig.values[i];
    if (lambda < -1e-10 * top) {
      throw ContractViolation("psd_power: eigenvalue " + std::to_string(lambda) +
                              " is negative beyond roundoff");
    }
    // Eigenvalues at roundoff level are zeros of a rank-deficient input; a
    // fractional power would blow them up to eps^p.
    if (lambda <= negligible) lambda = 0.0;
    f[i] = lambda == 0.0 ? (p == 0.0 ? 1.0 : 0.0) : std::pow(lambda, p);
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += eig.q(i, k) * f[k] * eig.q(j, k);
      out(i, j) = s;
      out(j, i) = s;
    }
  }
  return out;
}

Matrix psd_power(const Matrix& s, double p) { return psd_power(sym_eig(s), p); }

}  // namespace dln
