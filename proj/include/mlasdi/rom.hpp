#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "mlasdi/autoencoder.hpp"
#include "mlasdi/data.hpp"
#include "mlasdi/errors.hpp"
#include "mlasdi/gp.hpp"
#include "mlasdi/latent_dynamics.hpp"
#include "mlasdi/matrix.hpp"
#include "mlasdi/rng.hpp"

namespace mlasdi {

struct StageConfig {
  std::vector<int> architecture;  // encoder layer sizes, e.g. 600-100-5
  Activation activation = Activation::tanh;
  int iterations = 0;
  double learning_rate = 1e-3;
  double beta_di = 0.0;     // beta_1, weight on the latent-dynamics loss
  double beta_ridge = 0.0;  // beta_2, weight on the coefficient penalty
  int rollout_substeps = 1;
};

struct LossRecord {
  int iteration = 0;
  double total = 0.0;
  double reconstruction = 0.0;
  double dynamics = 0.0;
  double coefficient_norm = 0.0;
};

// One trained stage: the networks, the per-parameter dynamics fitted at the
// final weights, their GP interpolants, and the normalization the stage's
// target was divided by (1 for the first stage).
struct StageModel {
  AutoencoderPair autoencoder;
  std::vector<SindyModel> sindy;
  GpCoefficientField gp_field;
  double epsilon_prev = 1.0;
  int rollout_substeps = 1;

  int latent_dim() const { return autoencoder.latent_dim(); }
  int state_dim() const { return autoencoder.state_dim(); }
};

struct StageMeta {
  int iterations = 0;
  double wall_seconds = 0.0;
  std::vector<LossRecord> loss_history;
  double residual_norm_after = 0.0;  // Frobenius norm of the residual tensor
  double epsilon_after = 0.0;        // raw std of the residual (unguarded)
};

struct StageStack {
  std::vector<StageModel> stages;
  std::vector<StageMeta> meta;
  std::vector<ParameterPoint> parameters;
  std::vector<double> times;
  int state_dim = 0;

  int num_stages() const { return static_cast<int>(stages.size()); }
  double dt() const { return times[1] - times[0]; }
};

struct Prediction {
  Matrix mean_trajectory;       // (N_t+1) x N_u, original units
  std::vector<Matrix> samples;  // composite trajectories per posterior sample
  Matrix std_field;             // entrywise std over samples (population)
};

// Classical RK4 on the identified linear system zdot = b + A z, one step per
// grid interval (the dynamics are linear and mild at the scales handled
// here); substeps subdivide each interval when asked for.
inline Matrix rollout_latent(const SindyModel& model, const std::vector<double>& z0,
                             int n_times, double dt, int substeps = 1) {
  const int nz = model.latent_dim();
  require(static_cast<int>(z0.size()) == nz, Errc::dimension_mismatch,
          "rollout: initial condition length does not match latent dim");
  require(n_times >= 1, Errc::invalid_argument, "rollout needs n_times >= 1");
  require(dt > 0.0 && substeps >= 1, Errc::invalid_argument, "rollout: bad step setup");
  const std::vector<double> b = model.intercept();
  const Matrix a = model.dynamics_matrix();
  auto deriv = [&](const std::vector<double>& z, std::vector<double>& out) {
    for (int i = 0; i < nz; ++i) {
      double s = b[i];
      for (int j = 0; j < nz; ++j) s += a(i, j) * z[j];
      out[i] = s;
    }
  };
  Matrix traj(n_times, nz);
  std::vector<double> z = z0, k1(nz), k2(nz), k3(nz), k4(nz), tmp(nz);
  for (int j = 0; j < nz; ++j) traj(0, j) = z[j];
  const double h = dt / substeps;
  for (int step = 1; step < n_times; ++step) {
    for (int sub = 0; sub < substeps; ++sub) {
      deriv(z, k1);
      for (int i = 0; i < nz; ++i) tmp[i] = z[i] + 0.5 * h * k1[i];
      deriv(tmp, k2);
      for (int i = 0; i < nz; ++i) tmp[i] = z[i] + 0.5 * h * k2[i];
      deriv(tmp, k3);
      for (int i = 0; i < nz; ++i) tmp[i] = z[i] + h * k3[i];
      deriv(tmp, k4);
      for (int i = 0; i < nz; ++i)
        z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    for (int i = 0; i < nz; ++i) {
      require(std::isfinite(z[i]), Errc::non_finite_state,
              "latent trajectory diverged at step " + std::to_string(step));
      traj(step, i) = z[i];
    }
  }
  return traj;
}

namespace detail {

inline void validate_stage_config(const StageConfig& cfg, int state_dim) {
  require(cfg.architecture.size() >= 2, Errc::config_error,
          "stage architecture needs at least input and latent dims");
  require(cfg.architecture.front() == state_dim, Errc::config_error,
          "stage input width " + std::to_string(cfg.architecture.front()) +
              " does not match data state dim " + std::to_string(state_dim));
  require(cfg.iterations >= 0, Errc::config_error, "iterations must be >= 0");
  require(cfg.learning_rate > 0.0, Errc::config_error, "learning rate must be > 0");
  require(cfg.beta_di >= 0.0 && cfg.beta_ridge >= 0.0, Errc::config_error,
          "loss weights must be nonnegative");
  require(cfg.rollout_substeps >= 1, Errc::config_error, "substeps must be >= 1");
}

}  // namespace detail

// Train one stage: fixed-iteration full-batch Adam on the combined loss,
// coefficients re-solved exactly every iteration, GP field fitted to the
// final coefficients. `input` feeds the encoder (the raw training data for
// every stage); `target` is what the decoder must reproduce (the data for
// stage one, the normalized residual afterwards).
inline std::pair<StageModel, StageMeta> train_stage(const SnapshotTensor& input,
                                                    const SnapshotTensor& target,
                                                    const StageConfig& config,
                                                    const GpConfig& gp_config,
                                                    std::uint64_t seed) {
  const auto t_start = std::chrono::steady_clock::now();
  require(input.num_parameters() == target.num_parameters() &&
              input.num_times() == target.num_times() &&
              input.state_dim() == target.state_dim(),
          Errc::dimension_mismatch, "stage input and target tensors differ in shape");
  detail::validate_stage_config(config, target.state_dim());

  StageModel stage;
  stage.rollout_substeps = config.rollout_substeps;
  stage.autoencoder = AutoencoderPair::initialized(
      config.architecture, config.activation, center_scale_stats(target), seed);

  const Matrix input_std = standardize(input.all_snapshots(), stage.autoencoder.input_stats);
  const Matrix target_std =
      standardize(target.all_snapshots(), stage.autoencoder.input_stats);

  SindyContext ctx;
  ctx.beta_di = config.beta_di;
  ctx.beta_ridge = config.beta_ridge;
  ctx.dt = target.dt();
  ctx.n_params = target.num_parameters();
  ctx.steps_per_param = target.num_times();

  auto params = parameter_views(stage.autoencoder);
  AdamState adam = make_adam_state(params, config.learning_rate);
  EvalWorkspace ws;
  StageMeta meta;
  meta.iterations = config.iterations;

  for (int iter = 1; iter <= config.iterations; ++iter) {
    TrainingEval* ev = nullptr;
    try {
      ev = &detail::loss_and_gradients_standardized(stage.autoencoder, input_std,
                                                    target_std, ctx, ws);
    } catch (const Error& e) {
      if (e.code() == Errc::non_finite_loss)
        fail(Errc::non_finite_loss,
             std::string(e.what()) + " at iteration " + std::to_string(iter));
      throw;
    }
    if (iter % 100 == 0 && iter != config.iterations)
      meta.loss_history.push_back({iter, ev->losses.total(ctx.beta_di, ctx.beta_ridge),
                                   ev->losses.reconstruction, ev->losses.dynamics,
                                   ev->losses.coefficient_norm});
    adam_step(params, gradient_views(ev->grads), adam);
  }

  // final pass: losses and coefficients at the trained weights
  TrainingEval& final_ev = detail::loss_and_gradients_standardized(
      stage.autoencoder, input_std, target_std, ctx, ws);
  meta.loss_history.push_back({config.iterations,
                               final_ev.losses.total(ctx.beta_di, ctx.beta_ridge),
                               final_ev.losses.reconstruction, final_ev.losses.dynamics,
                               final_ev.losses.coefficient_norm});
  stage.sindy = final_ev.sindy;
  for (int i = 0; i < target.num_parameters(); ++i)
    stage.sindy[i].parameter = target.parameters()[i];
  stage.gp_field = GpCoefficientField::fit(target.parameters(), stage.sindy, gp_config);

  meta.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return {std::move(stage), std::move(meta)};
}

// SINDy reconstruction of the training data by one stage for one parameter:
// encode the raw initial condition, evolve the stage's fitted dynamics,
// decode. Output is in the stage's target units (before epsilon weighting).
inline Matrix stage_rollout_reconstruction(const StageModel& stage,
                                           const SnapshotTensor& data, int param,
                                           int n_times, double dt) {
  const Matrix z0m = encode(stage.autoencoder, data.initial_condition(param));
  std::vector<double> z0(z0m.data(), z0m.data() + z0m.size());
  const Matrix z =
      rollout_latent(stage.sindy[param], z0, n_times, dt, stage.rollout_substeps);
  return decode(stage.autoencoder, z);
}

struct StageResidual {
  SnapshotTensor residual;
  double epsilon = 1.0;   // std of the residual, guarded to 1 when degenerate
  double raw_std = 0.0;   // unguarded value
  bool degenerate = false;
};

// data minus the epsilon-weighted sum of the stages' SINDy rollouts, plus the
// next normalization factor. `n_stages` < 0 uses the whole stack.
inline StageResidual stage_residual(const SnapshotTensor& data, const StageStack& stack,
                                    int n_stages = -1) {
  require(!stack.stages.empty(), Errc::invalid_argument, "stack has no stages");
  const int use = n_stages < 0 ? stack.num_stages() : n_stages;
  require(use >= 1 && use <= stack.num_stages(), Errc::invalid_argument,
          "invalid stage count");
  const int n_times = data.num_times();
  const double dt = data.dt();
  std::vector<double> composite(data.values().size(), 0.0);
  for (int k = 0; k < use; ++k) {
    const StageModel& stage = stack.stages[k];
    require(stage.state_dim() == data.state_dim(), Errc::dimension_mismatch,
            "stage state dim does not match data");
    for (int p = 0; p < data.num_parameters(); ++p) {
      const Matrix traj = stage_rollout_reconstruction(stage, data, p, n_times, dt);
      const std::size_t base =
          static_cast<std::size_t>(p) * n_times * data.state_dim();
      for (std::size_t i = 0; i < traj.size(); ++i)
        composite[base + i] += stage.epsilon_prev * traj.entries()[i];
    }
  }
  std::vector<double> res(data.values().size());
  for (std::size_t i = 0; i < res.size(); ++i) res[i] = data.values()[i] - composite[i];

  // two-pass population std over every entry
  double mean = 0.0;
  for (double v : res) mean += v;
  mean /= static_cast<double>(res.size());
  double ss = 0.0;
  for (double v : res) ss += (v - mean) * (v - mean);
  const double raw = std::sqrt(ss / static_cast<double>(res.size()));

  StageResidual out;
  out.residual = SnapshotTensor(data.parameters(), data.times(), data.state_dim(),
                                std::move(res));
  out.raw_std = raw;
  out.degenerate = !(raw > 0.0);
  out.epsilon = out.degenerate ? 1.0 : raw;
  return out;
}

// Sequential residual training: stage one targets the data, stage k the
// previous residual divided by its std. Stops early when the residual
// becomes numerically zero.
inline StageStack train_multistage(const SnapshotTensor& data,
                                   const std::vector<StageConfig>& configs,
                                   const GpConfig& gp_config, std::uint64_t seed) {
  require(!configs.empty(), Errc::config_error, "need at least one stage config");
  StageStack stack;
  stack.parameters = data.parameters();
  stack.times = data.times();
  stack.state_dim = data.state_dim();

  SnapshotTensor target = data;
  double epsilon_prev = 1.0;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    auto [stage, meta] = train_stage(data, target, configs[k], gp_config,
                                     derive_seed(seed, k));
    stage.epsilon_prev = epsilon_prev;
    stack.stages.push_back(std::move(stage));

    StageResidual res = stage_residual(data, stack);
    double res_ss = 0.0;
    for (double v : res.residual.values()) res_ss += v * v;
    meta.residual_norm_after = std::sqrt(res_ss);
    meta.epsilon_after = res.raw_std;
    stack.meta.push_back(std::move(meta));

    if (k + 1 < configs.size()) {
      if (res.raw_std < 1e-14) {
        std::fprintf(stderr,
                     "[mlasdi] residual std %.3e below 1e-14 after stage %zu; "
                     "skipping remaining stages\n",
                     res.raw_std, k + 1);
        break;
      }
      std::vector<double> next(res.residual.values().size());
      const double inv = 1.0 / res.epsilon;
      for (std::size_t i = 0; i < next.size(); ++i)
        next[i] = res.residual.values()[i] * inv;
      target = SnapshotTensor(data.parameters(), data.times(), data.state_dim(),
                              std::move(next));
      epsilon_prev = res.epsilon;
    }
  }
  return stack;
}

// Predict the full-order trajectory for an unseen parameter: per stage,
// encode the initial condition, evolve the GP-mean dynamics, decode, and sum
// with the epsilon weights. Optional posterior samples re-run the same
// composition with coefficients drawn from the GPs.
inline Prediction predict(const StageStack& stack, const ParameterPoint& mu,
                          const Matrix& u0, int n_samples, std::uint64_t seed) {
  require(!stack.stages.empty(), Errc::invalid_argument, "stack has no stages");
  require(u0.rows() == 1 && u0.cols() == stack.state_dim, Errc::dimension_mismatch,
          "u0 must be 1 x state_dim");
  require(n_samples >= 0, Errc::invalid_argument, "n_samples must be >= 0");
  const int n_times = static_cast<int>(stack.times.size());
  const double dt = stack.dt();

  Prediction pred;
  pred.mean_trajectory = Matrix(n_times, stack.state_dim);
  pred.std_field = Matrix(n_times, stack.state_dim);

  std::vector<std::vector<double>> z0(stack.num_stages());
  for (int k = 0; k < stack.num_stages(); ++k) {
    const Matrix z = encode(stack.stages[k].autoencoder, u0);
    z0[k].assign(z.data(), z.data() + z.size());
  }

  for (int k = 0; k < stack.num_stages(); ++k) {
    const StageModel& stage = stack.stages[k];
    const SindyModel mean_model = stage.gp_field.mean_model(mu);
    const Matrix z =
        rollout_latent(mean_model, z0[k], n_times, dt, stage.rollout_substeps);
    const Matrix traj = decode(stage.autoencoder, z);
    for (std::size_t i = 0; i < traj.size(); ++i)
      pred.mean_trajectory.entries()[i] += stage.epsilon_prev * traj.entries()[i];
  }

  if (n_samples == 0) return pred;

  std::vector<std::vector<SindyModel>> stage_samples(stack.num_stages());
  for (int k = 0; k < stack.num_stages(); ++k)
    stage_samples[k] =
        stack.stages[k].gp_field.sample_models(mu, n_samples, derive_seed(seed, k));

  pred.samples.reserve(n_samples);
  for (int s = 0; s < n_samples; ++s) {
    Matrix composite(n_times, stack.state_dim);
    for (int k = 0; k < stack.num_stages(); ++k) {
      const StageModel& stage = stack.stages[k];
      const Matrix z = rollout_latent(stage_samples[k][s], z0[k], n_times, dt,
                                      stage.rollout_substeps);
      const Matrix traj = decode(stage.autoencoder, z);
      for (std::size_t i = 0; i < traj.size(); ++i)
        composite.entries()[i] += stage.epsilon_prev * traj.entries()[i];
    }
    pred.samples.push_back(std::move(composite));
  }

  // entrywise population std over the samples
  const double inv_n = 1.0 / static_cast<double>(n_samples);
  for (std::size_t i = 0; i < pred.std_field.size(); ++i) {
    double m = 0.0;
    for (const auto& s : pred.samples) m += s.entries()[i];
    m *= inv_n;
    double ss = 0.0;
    for (const auto& s : pred.samples) {
      const double d = s.entries()[i] - m;
      ss += d * d;
    }
    pred.std_field.entries()[i] = std::sqrt(ss * inv_n);
  }
  return pred;
}

}  // namespace mlasdi
