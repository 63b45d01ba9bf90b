#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <utility>
#include <vector>

#include "mlasdi/errors.hpp"

namespace mlasdi {

// Dense real matrix, row-major, 64-bit floats throughout. This is the only
// matrix type in the library; everything numerical sits on top of it.
class Matrix {
 public:
  Matrix() = default;

  Matrix(int rows, int cols)
      : rows_(rows), cols_(cols),
        data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0.0) {
    require(rows >= 0 && cols >= 0, Errc::invalid_argument, "negative matrix dimension");
  }

  Matrix(int rows, int cols, std::vector<double> entries)
      : rows_(rows), cols_(cols), data_(std::move(entries)) {
    require(data_.size() == static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols),
            Errc::dimension_mismatch, "entry count does not match rows*cols");
  }

  // Row-list constructor for small literals in tests and examples.
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = static_cast<int>(rows.size());
    cols_ = rows_ > 0 ? static_cast<int>(rows.begin()->size()) : 0;
    data_.reserve(static_cast<std::size_t>(rows_) * cols_);
    for (const auto& r : rows) {
      require(static_cast<int>(r.size()) == cols_, Errc::dimension_mismatch,
              "ragged row list");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(int r, int c) {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  double operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::vector<double>& entries() noexcept { return data_; }
  const std::vector<double>& entries() const noexcept { return data_; }

  double* row_ptr(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
  const double* row_ptr(int r) const {
    return data_.data() + static_cast<std::size_t>(r) * cols_;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Matrix block(int row0, int col0, int nrows, int ncols) const {
    Matrix out(nrows, ncols);
    for (int r = 0; r < nrows; ++r)
      for (int c = 0; c < ncols; ++c) out(r, c) = (*this)(row0 + r, col0 + c);
    return out;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

namespace detail {

using EigenRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<EigenRM>;
using CMapRM = Eigen::Map<const EigenRM>;

inline CMapRM as_eigen(const Matrix& m) { return CMapRM(m.data(), m.rows(), m.cols()); }
inline MapRM as_eigen(Matrix& m) { return MapRM(m.data(), m.rows(), m.cols()); }

}  // namespace detail

// C = A * B
inline void matmul_into(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.cols() == b.rows(), Errc::dimension_mismatch, "matmul: inner dims differ");
  if (out.rows() != a.rows() || out.cols() != b.cols()) out = Matrix(a.rows(), b.cols());
  detail::as_eigen(out).noalias() = detail::as_eigen(a) * detail::as_eigen(b);
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  matmul_into(a, b, out);
  return out;
}

// C = A^T * B
inline void matmul_at_b_into(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.rows() == b.rows(), Errc::dimension_mismatch, "matmul_at_b: row counts differ");
  if (out.rows() != a.cols() || out.cols() != b.cols()) out = Matrix(a.cols(), b.cols());
  detail::as_eigen(out).noalias() =
      detail::as_eigen(a).transpose() * detail::as_eigen(b);
}

// C = A * B^T
inline void matmul_a_bt_into(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.cols() == b.cols(), Errc::dimension_mismatch, "matmul_a_bt: col counts differ");
  if (out.rows() != a.rows() || out.cols() != b.rows()) out = Matrix(a.rows(), b.rows());
  detail::as_eigen(out).noalias() =
      detail::as_eigen(a) * detail::as_eigen(b).transpose();
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  detail::as_eigen(out) = detail::as_eigen(a).transpose();
  return out;
}

inline double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.entries()) s += v * v;
  return std::sqrt(s);
}

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.entries()) m = std::max(m, std::abs(v));
  return m;
}

namespace detail {

// Plain lower Cholesky, no jitter. Returns nullopt when a pivot drops below
// the relative tolerance (rank-deficient or indefinite input).
inline std::optional<Matrix> cholesky_raw(const Matrix& a, double rel_tol = 0.0) {
  const int n = a.rows();
  Matrix lower(n, n);
  double max_diag = 0.0;
  for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
  const double floor = rel_tol * max_diag;
  for (int j = 0; j < n; ++j) {
    double d = a(j, j);
    for (int k = 0; k < j; ++k) d -= lower(j, k) * lower(j, k);
    if (!(d > floor) || !std::isfinite(d)) return std::nullopt;
    const double ljj = std::sqrt(d);
    lower(j, j) = ljj;
    for (int i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
      lower(i, j) = s / ljj;
    }
  }
  return lower;
}

inline void check_square(const Matrix& a, const char* what) {
  require(a.rows() == a.cols(), Errc::dimension_mismatch,
          std::string(what) + ": matrix not square");
}

// Symmetry gate + symmetrization for the SPD entry points. Inputs beyond the
// tolerance are rejected; within it, (A + A^T)/2 is factored.
inline Matrix symmetrized(const Matrix& a) {
  const int n = a.rows();
  double max_asym = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      max_asym = std::max(max_asym, std::abs(a(i, j) - a(j, i)));
  require(max_asym <= 1e-8 * std::max(max_abs(a), 1e-300), Errc::invalid_argument,
          "SPD input is not symmetric within tolerance");
  Matrix s(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
  return s;
}

// Jittered factorization used by the public SPD operations: on failure add
// 1e-10*trace/n to the diagonal and escalate tenfold up to 1e-4*trace/n.
inline Matrix cholesky_spd(const Matrix& a) {
  check_square(a, "cholesky");
  Matrix sym = symmetrized(a);
  const int n = sym.rows();
  if (auto l = cholesky_raw(sym)) return *l;
  double trace = 0.0;
  for (int i = 0; i < n; ++i) trace += sym(i, i);
  const double unit = trace / std::max(n, 1);
  for (double jitter = 1e-10 * unit; jitter <= 1e-4 * unit; jitter *= 10.0) {
    Matrix shifted = sym;
    for (int i = 0; i < n; ++i) shifted(i, i) += jitter;
    if (auto l = cholesky_raw(shifted)) return *l;
  }
  fail(Errc::not_positive_definite,
       "matrix is not positive definite (pivot <= 0 after maximum jitter)");
}

inline void solve_lower_inplace(const Matrix& lower, Matrix& b) {
  const int n = lower.rows();
  const int m = b.cols();
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < m; ++c) {
      double s = b(i, c);
      for (int k = 0; k < i; ++k) s -= lower(i, k) * b(k, c);
      b(i, c) = s / lower(i, i);
    }
  }
}

inline void solve_upper_from_lower_inplace(const Matrix& lower, Matrix& b) {
  const int n = lower.rows();
  const int m = b.cols();
  for (int i = n - 1; i >= 0; --i) {
    for (int c = 0; c < m; ++c) {
      double s = b(i, c);
      for (int k = i + 1; k < n; ++k) s -= lower(k, i) * b(k, c);
      b(i, c) = s / lower(i, i);
    }
  }
}

inline Matrix cholesky_backsolve(const Matrix& lower, const Matrix& rhs) {
  Matrix x = rhs;
  solve_lower_inplace(lower, x);
  solve_upper_from_lower_inplace(lower, x);
  return x;
}

}  // namespace detail

// Lower-triangular L with L L^T = spd, applying the jitter policy.
inline Matrix cholesky_lower(const Matrix& spd) {
  return detail::cholesky_spd(spd);
}

// Solve spd * X = rhs via Cholesky.
inline Matrix cholesky_solve(const Matrix& spd, const Matrix& rhs) {
  detail::check_square(spd, "cholesky_solve");
  require(spd.rows() == rhs.rows(), Errc::dimension_mismatch,
          "cholesky_solve: rhs row count differs");
  Matrix lower = detail::cholesky_spd(spd);
  return detail::cholesky_backsolve(lower, rhs);
}

// argmin_W ||targets - design*W||^2 + ridge*||W||^2 via the normal equations
// (design^T design + ridge I) W = design^T targets, factored with Cholesky.
// The systems here are tiny (p <= a few hundred), where this is both the
// fastest and an adequately stable route.
inline Matrix solve_ridge_least_squares(const Matrix& design, const Matrix& targets,
                                        double ridge) {
  require(design.rows() == targets.rows(), Errc::dimension_mismatch,
          "ridge solve: design and target row counts differ");
  require(design.rows() >= 1 && design.cols() >= 1, Errc::dimension_mismatch,
          "ridge solve: empty design");
  require(ridge >= 0.0, Errc::invalid_argument, "ridge must be nonnegative");
  const int p = design.cols();
  Matrix gram(p, p);
  matmul_at_b_into(design, design, gram);
  for (int i = 0; i < p; ++i) gram(i, i) += ridge;
  Matrix rhs(p, targets.cols());
  matmul_at_b_into(design, targets, rhs);
  // No jitter here: with ridge == 0 a failed pivot means the design is
  // genuinely rank-deficient and must be reported, not patched.
  auto lower = detail::cholesky_raw(gram, 1e-13);
  if (!lower) {
    if (ridge == 0.0)
      fail(Errc::rank_deficient, "design matrix is rank-deficient and ridge == 0");
    fail(Errc::not_positive_definite, "ridge-augmented normal equations not SPD");
  }
  return detail::cholesky_backsolve(*lower, rhs);
}

}  // namespace mlasdi
