#pragma once

#include <cmath>
#include <vector>

#include "mlasdi/data.hpp"
#include "mlasdi/errors.hpp"
#include "mlasdi/matrix.hpp"

namespace mlasdi {

// Linear latent dynamics zdot = b + A z identified for one training
// parameter. Stored as the stacked coefficient matrix
//   Xi = [ b^T ; A^T ]  ((N_z+1) x N_z),
// so that rows of [1 Z] * Xi are (b + A z)^T.
struct SindyModel {
  Matrix coefficients;  // (N_z+1) x N_z
  ParameterPoint parameter;

  int latent_dim() const { return coefficients.cols(); }

  std::vector<double> intercept() const {
    std::vector<double> b(latent_dim());
    for (int j = 0; j < latent_dim(); ++j) b[j] = coefficients(0, j);
    return b;
  }

  // A with A(i,j) = d zdot_i / d z_j.
  Matrix dynamics_matrix() const {
    const int nz = latent_dim();
    Matrix a(nz, nz);
    for (int i = 0; i < nz; ++i)
      for (int j = 0; j < nz; ++j) a(i, j) = coefficients(1 + j, i);
    return a;
  }

  static SindyModel from_parts(const std::vector<double>& intercept, const Matrix& a,
                               ParameterPoint parameter = {}) {
    const int nz = static_cast<int>(intercept.size());
    Matrix xi(nz + 1, nz);
    for (int j = 0; j < nz; ++j) xi(0, j) = intercept[j];
    for (int i = 0; i < nz; ++i)
      for (int j = 0; j < nz; ++j) xi(1 + j, i) = a(i, j);
    return SindyModel{std::move(xi), std::move(parameter)};
  }
};

// Weights and batch segmentation shared between the training loss and the
// SINDy solves. The batch is parameter-major: n_params trajectories of
// steps_per_param rows each.
struct SindyContext {
  double beta_di = 0.0;     // weight on the dynamics-identification loss
  double beta_ridge = 0.0;  // weight on the coefficient norm penalty
  double dt = 0.0;
  int n_params = 1;
  int steps_per_param = 0;  // N_t + 1

  int batch_rows() const { return n_params * steps_per_param; }

  // All loss terms are means over tensor entries, so the ridge that makes a
  // per-trajectory least-squares solve the exact minimizer of
  //   beta_di * L_DI + beta_ridge * mean(Xi^2)
  // carries the entry-count ratio between the two terms.
  double effective_ridge(int latent_dim) const {
    if (beta_di <= 0.0) return 0.0;
    const double m_di = static_cast<double>(n_params) * steps_per_param * latent_dim;
    const double m_xi = static_cast<double>(n_params) * (latent_dim + 1) * latent_dim;
    return beta_ridge * m_di / (beta_di * m_xi);
  }
};

// Second-order time derivative on a uniform grid: central differences in the
// interior, one-sided three-point stencils at both ends. Exact for
// polynomials of degree <= 2.
inline Matrix estimate_time_derivative(const Matrix& z, double dt) {
  const int n = z.rows();
  const int nz = z.cols();
  require(n >= 3, Errc::too_few_timesteps,
          "time derivative needs at least 3 samples");
  require(dt > 0.0, Errc::invalid_argument, "dt must be positive");
  Matrix out(n, nz);
  const double inv2dt = 1.0 / (2.0 * dt);
  for (int j = 0; j < nz; ++j) {
    out(0, j) = (-3.0 * z(0, j) + 4.0 * z(1, j) - z(2, j)) * inv2dt;
    out(n - 1, j) = (3.0 * z(n - 1, j) - 4.0 * z(n - 2, j) + z(n - 3, j)) * inv2dt;
  }
  for (int i = 1; i < n - 1; ++i)
    for (int j = 0; j < nz; ++j) out(i, j) = (z(i + 1, j) - z(i - 1, j)) * inv2dt;
  return out;
}

// Adjoint of the stencil above: given G = dL/d(zdot), accumulate D^T G into
// dL/dz. Needed by backpropagation through the DI loss.
inline void add_time_derivative_adjoint(const Matrix& g, double dt, Matrix& dz) {
  const int n = g.rows();
  const int nz = g.cols();
  require(dz.rows() == n && dz.cols() == nz, Errc::dimension_mismatch,
          "adjoint accumulator shape mismatch");
  const double inv2dt = 1.0 / (2.0 * dt);
  for (int j = 0; j < nz; ++j) {
    dz(0, j) += -3.0 * inv2dt * g(0, j);
    dz(1, j) += 4.0 * inv2dt * g(0, j);
    dz(2, j) += -1.0 * inv2dt * g(0, j);
    dz(n - 1, j) += 3.0 * inv2dt * g(n - 1, j);
    dz(n - 2, j) += -4.0 * inv2dt * g(n - 1, j);
    dz(n - 3, j) += 1.0 * inv2dt * g(n - 1, j);
  }
  for (int i = 1; i < n - 1; ++i)
    for (int j = 0; j < nz; ++j) {
      dz(i + 1, j) += inv2dt * g(i, j);
      dz(i - 1, j) += -inv2dt * g(i, j);
    }
}

// Library Theta(Z) = [1 Z] for the linear dynamics model.
inline Matrix sindy_library(const Matrix& z) {
  Matrix theta(z.rows(), z.cols() + 1);
  for (int i = 0; i < z.rows(); ++i) {
    theta(i, 0) = 1.0;
    for (int j = 0; j < z.cols(); ++j) theta(i, j + 1) = z(i, j);
  }
  return theta;
}

// Ridge least-squares fit of dense linear dynamics for one trajectory.
inline SindyModel fit_sindy(const Matrix& z, const Matrix& zdot, double ridge,
                            ParameterPoint parameter = {}) {
  require(z.rows() == zdot.rows() && z.cols() == zdot.cols(), Errc::dimension_mismatch,
          "fit_sindy: Z and Zdot shapes differ");
  Matrix xi = solve_ridge_least_squares(sindy_library(z), zdot, ridge);
  return SindyModel{std::move(xi), std::move(parameter)};
}

// Mean squared mismatch between Zdot and Theta(Z) Xi, the same reduction
// convention as the reconstruction loss.
inline double di_loss(const Matrix& z, const Matrix& zdot, const SindyModel& model) {
  require(z.rows() == zdot.rows() && z.cols() == zdot.cols(), Errc::dimension_mismatch,
          "di_loss: Z and Zdot shapes differ");
  require(model.coefficients.rows() == z.cols() + 1, Errc::dimension_mismatch,
          "di_loss: coefficient rows must be N_z+1");
  Matrix pred = matmul(sindy_library(z), model.coefficients);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = zdot.entries()[i] - pred.entries()[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

}  // namespace mlasdi
