#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "mlasdi/data.hpp"
#include "mlasdi/errors.hpp"
#include "mlasdi/latent_dynamics.hpp"
#include "mlasdi/matrix.hpp"
#include "mlasdi/rng.hpp"

namespace mlasdi {

enum class KernelKind { rbf, matern15 };

inline KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "rbf") return KernelKind::rbf;
  if (s == "matern15") return KernelKind::matern15;
  fail(Errc::config_error, "unknown kernel '" + s + "' (expected rbf or matern15)");
}

inline const char* kernel_kind_name(KernelKind k) {
  return k == KernelKind::rbf ? "rbf" : "matern15";
}

struct Kernel {
  KernelKind kind = KernelKind::rbf;
  double amplitude = 1.0;    // A > 0
  double lengthscale = 1.0;  // L > 0
  double noise = 0.0;        // sigma^2 >= 0
  bool degenerate = false;   // set when fit saw constant targets
};

inline double kernel_eval_distance(const Kernel& kernel, double distance) {
  const double r = distance / kernel.lengthscale;
  if (kernel.kind == KernelKind::rbf) return kernel.amplitude * std::exp(-0.5 * r * r);
  const double s = std::numbers::sqrt3 * r;
  return kernel.amplitude * (1.0 + s) * std::exp(-s);
}

// Covariance between two points in parameter space. Distances are plain
// Euclidean for both kernels; any coordinate standardization happens before
// this is called.
inline double kernel_eval(const Kernel& kernel, const ParameterPoint& x,
                          const ParameterPoint& y) {
  require(x.dim() == y.dim(), Errc::dimension_mismatch,
          "kernel_eval: point dimensions differ");
  double d2 = 0.0;
  for (int i = 0; i < x.dim(); ++i) {
    const double d = x.values[i] - y.values[i];
    d2 += d * d;
  }
  return kernel_eval_distance(kernel, std::sqrt(d2));
}

struct GpConfig {
  KernelKind kind = KernelKind::rbf;
  std::optional<double> noise_override;  // absolute sigma^2; default is a small floor
};

namespace detail {

inline double population_variance(const std::vector<double>& y) {
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(y.size());
}

inline double euclidean(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline Matrix kernel_matrix(const Kernel& kernel, const Matrix& x) {
  const int n = x.rows();
  Matrix k(n, n);
  for (int i = 0; i < n; ++i) {
    k(i, i) = kernel.amplitude + kernel.noise;
    for (int j = i + 1; j < n; ++j) {
      const double v =
          kernel_eval_distance(kernel, euclidean(x.row_ptr(i), x.row_ptr(j), x.cols()));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

// log p(y | X, A, L, sigma^2); -inf when the kernel matrix cannot be factored.
inline double log_marginal_likelihood(const Kernel& kernel, const Matrix& x,
                                      const std::vector<double>& y) {
  const int n = x.rows();
  Matrix k = kernel_matrix(kernel, x);
  Matrix lower;
  try {
    lower = cholesky_lower(k);
  } catch (const Error&) {
    return -std::numeric_limits<double>::infinity();
  }
  Matrix u(n, 1);
  for (int i = 0; i < n; ++i) u(i, 0) = y[i];
  detail::solve_lower_inplace(lower, u);
  double quad = 0.0;
  for (int i = 0; i < n; ++i) quad += u(i, 0) * u(i, 0);
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += std::log(lower(i, i));
  return -0.5 * quad - logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

// Golden-section maximization of f over [lo, hi]; deterministic.
template <typename F>
double golden_section_max(F&& f, double lo, double hi, int iters = 40) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < iters; ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    }
  }
  return f1 > f2 ? x1 : x2;
}

}  // namespace detail

// Maximize the marginal likelihood over (A, L): a 16x16 log-space grid
// centered on the data scales, then coordinate-wise golden-section
// refinement. Derivative-free and deterministic, which is what the tiny
// training sets here (N_mu <= 25) want. Returns a flagged fallback kernel
// when the targets are constant.
inline Kernel fit_hyperparameters(const Matrix& x, const std::vector<double>& y,
                                  KernelKind kind,
                                  std::optional<double> noise_override = std::nullopt) {
  const int n = x.rows();
  require(n >= 2, Errc::invalid_argument, "GP fit needs at least two points");
  require(static_cast<int>(y.size()) == n, Errc::dimension_mismatch,
          "GP fit: target length does not match points");
  for (double v : y)
    require(std::isfinite(v), Errc::invalid_argument, "GP fit: non-finite target");

  std::vector<double> dists;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      dists.push_back(detail::euclidean(x.row_ptr(i), x.row_ptr(j), x.cols()));
  std::sort(dists.begin(), dists.end());
  const double span = dists.back();
  const double median_dist = dists[dists.size() / 2];

  const double var_y = detail::population_variance(y);
  double ymax = 0.0;
  for (double v : y) ymax = std::max(ymax, std::abs(v));
  const bool constant = var_y <= 1e-26 * std::max(1.0, ymax * ymax);
  if (constant) {
    Kernel k;
    k.kind = kind;
    k.amplitude = 1e-12;
    k.lengthscale = std::max(span, 1e-12);
    k.noise = noise_override.value_or(1e-8 * k.amplitude);
    k.degenerate = true;
    return k;
  }

  const double noise = noise_override.value_or(1e-8 * var_y);
  const double log_a_mid = std::log(var_y);
  const double log_l_mid = std::log(std::max(median_dist, 1e-12));
  constexpr int grid = 16;
  const double a_halfspan = std::log(1e3);
  const double l_halfspan = std::log(1e2);
  auto lml = [&](double log_a, double log_l) {
    Kernel k{kind, std::exp(log_a), std::exp(log_l), noise, false};
    return detail::log_marginal_likelihood(k, x, y);
  };
  double best_a = log_a_mid, best_l = log_l_mid;
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      const double la = log_a_mid - a_halfspan + 2.0 * a_halfspan * i / (grid - 1);
      const double ll = log_l_mid - l_halfspan + 2.0 * l_halfspan * j / (grid - 1);
      const double v = lml(la, ll);
      if (v > best) {
        best = v;
        best_a = la;
        best_l = ll;
      }
    }
  const double a_step = 2.0 * a_halfspan / (grid - 1);
  const double l_step = 2.0 * l_halfspan / (grid - 1);
  for (int round = 0; round < 10; ++round) {
    best_a = detail::golden_section_max(
        [&](double la) { return lml(la, best_l); }, best_a - a_step, best_a + a_step);
    best_l = detail::golden_section_max(
        [&](double ll) { return lml(best_a, ll); }, best_l - l_step, best_l + l_step);
  }
  return Kernel{kind, std::exp(best_a), std::exp(best_l), noise, false};
}

// One GP per SINDy coefficient over parameter space. Parameter coordinates
// are standardized per dimension before any kernel sees them.
class GpCoefficientField {
 public:
  struct CoordinateStats {
    std::vector<double> mean;
    std::vector<double> std;
  };

  GpCoefficientField() = default;

  static GpCoefficientField fit(const std::vector<ParameterPoint>& params,
                                const std::vector<SindyModel>& models,
                                const GpConfig& config) {
    GpCoefficientField field = prepare(params, models);
    const int n_coeff = field.coefficient_count();
    field.gps_.resize(n_coeff);
    for (int c = 0; c < n_coeff; ++c) {
      std::vector<double> y = field.targets_for(models, c);
      if (field.x_std_.rows() < 2) {
        field.gps_[c] = degenerate_gp(config.kind, y);
        continue;
      }
      Kernel kernel =
          fit_hyperparameters(field.x_std_, y, config.kind, config.noise_override);
      field.gps_[c] = kernel.degenerate ? degenerate_gp(config.kind, y)
                                        : assemble(kernel, field.x_std_, y);
    }
    return field;
  }

  // Reassemble from already-fitted kernels (model deserialization path).
  static GpCoefficientField from_kernels(const std::vector<ParameterPoint>& params,
                                         const std::vector<SindyModel>& models,
                                         const std::vector<Kernel>& kernels) {
    GpCoefficientField field = prepare(params, models);
    require(static_cast<int>(kernels.size()) == field.coefficient_count(),
            Errc::dimension_mismatch, "kernel count does not match coefficients");
    field.gps_.resize(kernels.size());
    for (std::size_t c = 0; c < kernels.size(); ++c) {
      std::vector<double> y = field.targets_for(models, static_cast<int>(c));
      if (kernels[c].degenerate) {
        field.gps_[c] = degenerate_gp(kernels[c].kind, y);
        field.gps_[c].kernel = kernels[c];
      } else {
        field.gps_[c] = assemble(kernels[c], field.x_std_, y);
      }
    }
    return field;
  }

  int latent_dim() const { return latent_dim_; }
  int coefficient_count() const { return (latent_dim_ + 1) * latent_dim_; }
  int num_training_points() const { return x_std_.rows(); }
  const std::vector<ParameterPoint>& parameters() const { return params_; }
  const CoordinateStats& coordinate_stats() const { return coord_stats_; }

  const Kernel& kernel(int row, int col) const {
    return gps_[coefficient_index(row, col)].kernel;
  }

  bool any_degenerate() const {
    for (const auto& g : gps_)
      if (g.kernel.degenerate) return true;
    return false;
  }

  // Predictive mean and standard deviation of coefficient Xi(row, col).
  std::pair<double, double> predict(int row, int col, const ParameterPoint& mu) const {
    const CoefficientGp& gp = gps_[coefficient_index(row, col)];
    if (gp.kernel.degenerate) return {gp.constant, 0.0};
    const std::vector<double> q = standardize_point(mu);
    const int n = x_std_.rows();
    Matrix kstar(n, 1);
    for (int i = 0; i < n; ++i)
      kstar(i, 0) = kernel_eval_distance(
          gp.kernel, detail::euclidean(q.data(), x_std_.row_ptr(i), x_std_.cols()));
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += kstar(i, 0) * gp.alpha[i];
    Matrix v = kstar;
    detail::solve_lower_inplace(gp.chol, v);
    double reduction = 0.0;
    for (int i = 0; i < n; ++i) reduction += v(i, 0) * v(i, 0);
    const double variance = std::max(gp.kernel.amplitude - reduction, 0.0);
    return {mean, std::sqrt(variance)};
  }

  SindyModel mean_model(const ParameterPoint& mu) const {
    SindyModel model;
    model.parameter = mu;
    model.coefficients = Matrix(latent_dim_ + 1, latent_dim_);
    for (int r = 0; r <= latent_dim_; ++r)
      for (int c = 0; c < latent_dim_; ++c)
        model.coefficients(r, c) = predict(r, c, mu).first;
    return model;
  }

  // Draw models with every coefficient sampled independently from its
  // predictive normal. Sample-major draw order, fixed seed reproducibility.
  std::vector<SindyModel> sample_models(const ParameterPoint& mu, int n_samples,
                                        std::uint64_t seed) const {
    require(n_samples >= 1, Errc::invalid_argument, "need at least one sample");
    const int rows = latent_dim_ + 1;
    const int cols = latent_dim_;
    std::vector<std::pair<double, double>> stats(coefficient_count());
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) stats[coefficient_index(r, c)] = predict(r, c, mu);
    Rng rng(seed);
    std::vector<SindyModel> out;
    out.reserve(n_samples);
    for (int s = 0; s < n_samples; ++s) {
      SindyModel model;
      model.parameter = mu;
      model.coefficients = Matrix(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          const auto& [mean, std] = stats[coefficient_index(r, c)];
          model.coefficients(r, c) = std > 0.0 ? rng.normal(mean, std) : mean;
        }
      out.push_back(std::move(model));
    }
    return out;
  }

 private:
  struct CoefficientGp {
    Kernel kernel;
    std::vector<double> alpha;  // (K + sigma^2 I)^{-1} y
    Matrix chol;                // lower factor of K + sigma^2 I
    double constant = 0.0;      // degenerate-case value
  };

  int coefficient_index(int row, int col) const { return row * latent_dim_ + col; }

  std::vector<double> targets_for(const std::vector<SindyModel>& models, int index) const {
    const int row = index / latent_dim_;
    const int col = index % latent_dim_;
    std::vector<double> y(models.size());
    for (std::size_t i = 0; i < models.size(); ++i)
      y[i] = models[i].coefficients(row, col);
    return y;
  }

  std::vector<double> standardize_point(const ParameterPoint& mu) const {
    require(mu.dim() == x_std_.cols(), Errc::dimension_mismatch,
            "parameter dimension does not match field");
    std::vector<double> q(mu.values.size());
    for (std::size_t d = 0; d < q.size(); ++d)
      q[d] = (mu.values[d] - coord_stats_.mean[d]) / coord_stats_.std[d];
    return q;
  }

  static CoefficientGp degenerate_gp(KernelKind kind, const std::vector<double>& y) {
    CoefficientGp gp;
    double mean = 0.0;
    for (double v : y) mean += v;
    gp.constant = y.empty() ? 0.0 : mean / static_cast<double>(y.size());
    gp.kernel.kind = kind;
    gp.kernel.amplitude = 1e-12;
    gp.kernel.lengthscale = 1.0;
    gp.kernel.noise = 1e-20;
    gp.kernel.degenerate = true;
    return gp;
  }

  static CoefficientGp assemble(const Kernel& kernel, const Matrix& x_std,
                                const std::vector<double>& y) {
    CoefficientGp gp;
    gp.kernel = kernel;
    Matrix k = detail::kernel_matrix(kernel, x_std);
    gp.chol = cholesky_lower(k);
    Matrix rhs(x_std.rows(), 1);
    for (int i = 0; i < x_std.rows(); ++i) rhs(i, 0) = y[i];
    Matrix a = detail::cholesky_backsolve(gp.chol, rhs);
    gp.alpha.resize(x_std.rows());
    for (int i = 0; i < x_std.rows(); ++i) gp.alpha[i] = a(i, 0);
    return gp;
  }

  static GpCoefficientField prepare(const std::vector<ParameterPoint>& params,
                                    const std::vector<SindyModel>& models) {
    require(!params.empty(), Errc::invalid_argument, "GP field needs parameters");
    require(params.size() == models.size(), Errc::dimension_mismatch,
            "parameter and model counts differ");
    GpCoefficientField field;
    field.params_ = params;
    field.latent_dim_ = models.front().latent_dim();
    for (const auto& m : models)
      require(m.latent_dim() == field.latent_dim_, Errc::dimension_mismatch,
              "models disagree on latent dimension");
    const int n = static_cast<int>(params.size());
    const int dim = params.front().dim();
    field.coord_stats_.mean.assign(dim, 0.0);
    field.coord_stats_.std.assign(dim, 0.0);
    for (const auto& p : params)
      for (int d = 0; d < dim; ++d) field.coord_stats_.mean[d] += p.values[d];
    for (int d = 0; d < dim; ++d) field.coord_stats_.mean[d] /= n;
    for (const auto& p : params)
      for (int d = 0; d < dim; ++d) {
        const double diff = p.values[d] - field.coord_stats_.mean[d];
        field.coord_stats_.std[d] += diff * diff;
      }
    for (int d = 0; d < dim; ++d) {
      field.coord_stats_.std[d] = std::sqrt(field.coord_stats_.std[d] / n);
      if (field.coord_stats_.std[d] <= 0.0) field.coord_stats_.std[d] = 1.0;
    }
    field.x_std_ = Matrix(n, dim);
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < dim; ++d)
        field.x_std_(i, d) =
            (params[i].values[d] - field.coord_stats_.mean[d]) / field.coord_stats_.std[d];
    return field;
  }

  std::vector<ParameterPoint> params_;
  Matrix x_std_;
  CoordinateStats coord_stats_;
  int latent_dim_ = 0;
  std::vector<CoefficientGp> gps_;
};

// Spec-shaped free functions over the field.
inline std::pair<double, double> predict_coefficient(const GpCoefficientField& field,
                                                     int row, int col,
                                                     const ParameterPoint& mu) {
  return field.predict(row, col, mu);
}

inline std::vector<SindyModel> sample_coefficients(const GpCoefficientField& field,
                                                   const ParameterPoint& mu,
                                                   int n_samples, std::uint64_t seed) {
  return field.sample_models(mu, n_samples, seed);
}

}  // namespace mlasdi
