#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mlasdi/errors.hpp"
#include "mlasdi/matrix.hpp"
#include "mlasdi/rom.hpp"

namespace mlasdi {

// Worst-over-time relative Euclidean error between two trajectories:
//   max_j ||u(t_j) - u~(t_j)|| / ||u(t_j)||.
// A zero-norm truth snapshot is an error; skipping it silently would bias
// the maximum.
inline double max_relative_error(const Matrix& truth, const Matrix& approx) {
  require(truth.rows() == approx.rows() && truth.cols() == approx.cols(),
          Errc::dimension_mismatch, "max_relative_error: shapes differ");
  double worst = 0.0;
  for (int t = 0; t < truth.rows(); ++t) {
    double num = 0.0, den = 0.0;
    for (int c = 0; c < truth.cols(); ++c) {
      const double d = truth(t, c) - approx(t, c);
      num += d * d;
      den += truth(t, c) * truth(t, c);
    }
    require(den > 0.0, Errc::zero_norm_slice,
            "truth snapshot at time index " + std::to_string(t) + " has zero norm");
    worst = std::max(worst, std::sqrt(num / den));
  }
  return worst;
}

// Percentile by the ceiling convention: sort ascending and take the 1-based
// element at ceil(q/100 * n).
inline double percentile_error(std::vector<double> errors, double q) {
  require(!errors.empty(), Errc::invalid_argument, "percentile of empty list");
  require(q > 0.0 && q <= 100.0, Errc::invalid_argument, "percentile must be in (0, 100]");
  std::sort(errors.begin(), errors.end());
  const auto n = static_cast<double>(errors.size());
  auto idx = static_cast<std::size_t>(std::ceil(q / 100.0 * n));
  idx = std::min(std::max<std::size_t>(idx, 1), errors.size());
  return errors[idx - 1];
}

// Scalar uncertainty score mirroring the relative-error structure:
//   max_j ||std(t_j)|| / ||mean(t_j)||.
inline double prediction_std_summary(const Prediction& pred) {
  require(!pred.samples.empty(), Errc::no_samples,
          "prediction carries no posterior samples");
  double worst = 0.0;
  for (int t = 0; t < pred.std_field.rows(); ++t) {
    double s = 0.0, m = 0.0;
    for (int c = 0; c < pred.std_field.cols(); ++c) {
      s += pred.std_field(t, c) * pred.std_field(t, c);
      m += pred.mean_trajectory(t, c) * pred.mean_trajectory(t, c);
    }
    if (m <= 0.0) {
      if (s > 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    worst = std::max(worst, std::sqrt(s / m));
  }
  return worst;
}

struct ErrorReportRow {
  ParameterPoint parameter;
  double max_relative = 0.0;
  double std_score = 0.0;  // NaN when no samples were requested
  bool is_training = false;
};

struct ErrorReport {
  std::vector<ErrorReportRow> rows;

  std::vector<double> errors() const {
    std::vector<double> e;
    e.reserve(rows.size());
    for (const auto& r : rows) e.push_back(r.max_relative);
    return e;
  }

  double max_error() const { return percentile_error(errors(), 100.0); }
  double p90_error() const { return percentile_error(errors(), 90.0); }
  double p75_error() const { return percentile_error(errors(), 75.0); }
};

}  // namespace mlasdi
