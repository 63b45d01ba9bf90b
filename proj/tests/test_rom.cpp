#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mlasdi/data.hpp"
#include "mlasdi/rng.hpp"
#include "mlasdi/rom.hpp"

using namespace mlasdi;

namespace {

StageConfig small_config(int state_dim, int iterations, double beta_di = 0.1) {
  StageConfig cfg;
  cfg.architecture = {state_dim, 12, 3};
  cfg.activation = Activation::tanh;
  cfg.iterations = iterations;
  cfg.learning_rate = 1e-3;
  cfg.beta_di = beta_di;
  cfg.beta_ridge = 1e-3;
  return cfg;
}

SnapshotTensor small_toy() { return generate_toy({1.0, 1.4}, 24, 33); }

double tensor_norm(const SnapshotTensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

// A stack whose single stage reproduces its data exactly: identity linear
// autoencoder around latent trajectories generated by the rollout itself.
StageStack exact_stack(const SindyModel& dynamics, const std::vector<double>& z0,
                       int n_times, double dt) {
  const int nz = dynamics.latent_dim();
  std::vector<double> times(n_times);
  for (int i = 0; i < n_times; ++i) times[i] = dt * i;

  StageStack stack;
  stack.state_dim = nz;
  stack.times = times;
  stack.parameters = {{{1.0}}};

  StageModel stage;
  CenterScale stats;
  stats.mean.assign(nz, 0.0);
  stats.scale = 1.0;
  stage.autoencoder = AutoencoderPair::initialized({nz, nz}, Activation::tanh, stats, 0);
  stage.autoencoder.encoder.weights[0] = Matrix::identity(nz);
  stage.autoencoder.encoder.biases[0].assign(nz, 0.0);
  stage.autoencoder.decoder.weights[0] = Matrix::identity(nz);
  stage.autoencoder.decoder.biases[0].assign(nz, 0.0);
  SindyModel m = dynamics;
  m.parameter = stack.parameters[0];
  stage.sindy = {m};
  stage.gp_field = GpCoefficientField::fit(stack.parameters, stage.sindy, GpConfig{});
  stage.epsilon_prev = 1.0;
  stack.stages.push_back(std::move(stage));
  stack.meta.push_back({});
  return stack;
}

SnapshotTensor tensor_from_rollout(const StageStack& stack) {
  const auto& stage = stack.stages[0];
  Matrix traj = rollout_latent(stage.sindy[0], {1.0, 0.0}, int(stack.times.size()),
                               stack.times[1] - stack.times[0]);
  return SnapshotTensor(stack.parameters, stack.times, stack.state_dim, traj.entries());
}

}  // namespace

TEST_CASE("rollout of trivial dynamics") {
  SECTION("zero dynamics hold the initial state") {
    SindyModel m = SindyModel::from_parts({0.0, 0.0}, Matrix(2, 2));
    Matrix traj = rollout_latent(m, {0.3, -0.7}, 11, 0.1);
    for (int t = 0; t < 11; ++t) {
      REQUIRE(traj(t, 0) == 0.3);
      REQUIRE(traj(t, 1) == -0.7);
    }
  }
  SECTION("a pure intercept integrates exactly to a line") {
    SindyModel m = SindyModel::from_parts({0.5, -1.0}, Matrix(2, 2));
    Matrix traj = rollout_latent(m, {1.0, 2.0}, 21, 0.05);
    for (int t = 0; t < 21; ++t) {
      REQUIRE(traj(t, 0) == Catch::Approx(1.0 + 0.5 * 0.05 * t).margin(1e-13));
      REQUIRE(traj(t, 1) == Catch::Approx(2.0 - 1.0 * 0.05 * t).margin(1e-13));
    }
  }
}

TEST_CASE("rollout matches the analytic exponential to 1e-8") {
  Matrix a(1, 1);
  a(0, 0) = -1.0;
  SindyModel m = SindyModel::from_parts({0.0}, a);
  Matrix traj = rollout_latent(m, {1.0}, 101, 0.01);
  REQUIRE(std::abs(traj(100, 0) - std::exp(-1.0)) < 1e-8);
}

TEST_CASE("rollout error shrinks about sixteenfold when the step halves") {
  Matrix a(1, 1);
  a(0, 0) = -1.0;
  SindyModel m = SindyModel::from_parts({0.0}, a);
  auto err_at = [&](double dt, int steps) {
    Matrix traj = rollout_latent(m, {1.0}, steps + 1, dt);
    return std::abs(traj(steps, 0) - std::exp(-dt * steps));
  };
  const double coarse = err_at(0.2, 5);
  const double fine = err_at(0.1, 10);
  const double ratio = coarse / fine;
  REQUIRE(ratio > 12.0);
  REQUIRE(ratio < 20.0);
}

TEST_CASE("rollout reports divergence as a numeric failure") {
  Matrix a(1, 1);
  a(0, 0) = 500.0;
  SindyModel m = SindyModel::from_parts({0.0}, a);
  REQUIRE_THROWS_MATCHES(rollout_latent(m, {1.0}, 500, 0.5), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::non_finite_state;
                         }));
}

TEST_CASE("zero-iteration training returns a valid untrained stage") {
  const SnapshotTensor toy = small_toy();
  auto [stage, meta] = train_stage(toy, toy, small_config(24, 0), GpConfig{}, 5);
  REQUIRE(stage.sindy.size() == 2);
  REQUIRE(stage.latent_dim() == 3);
  REQUIRE(meta.loss_history.size() == 1);
  REQUIRE(std::isfinite(meta.loss_history.back().total));
}

TEST_CASE("short training runs to completion with finite recorded losses") {
  const SnapshotTensor toy = small_toy();
  auto [stage, meta] = train_stage(toy, toy, small_config(24, 250), GpConfig{}, 5);
  REQUIRE(meta.loss_history.size() == 3);  // iters 100, 200, 250
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& rec : meta.loss_history) {
    REQUIRE(std::isfinite(rec.total));
    REQUIRE(rec.total >= 0.0);
    prev = rec.total;
  }
  // the loop should make progress on this easy task
  REQUIRE(meta.loss_history.back().total < meta.loss_history.front().total);
}

TEST_CASE("stage config validation catches mismatched architecture") {
  const SnapshotTensor toy = small_toy();
  StageConfig bad = small_config(25, 10);
  REQUIRE_THROWS_MATCHES(train_stage(toy, toy, bad, GpConfig{}, 1), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::config_error;
                         }));
}

TEST_CASE("an exactly reproducing stack has zero residual and guarded epsilon") {
  SindyModel dyn = SindyModel::from_parts({0.1, 0.0}, {{0.0, 1.0}, {-1.0, 0.0}});
  StageStack stack = exact_stack(dyn, {1.0, 0.0}, 40, 0.05);
  SnapshotTensor data = tensor_from_rollout(stack);
  StageResidual res = stage_residual(data, stack);
  for (double v : res.residual.values()) REQUIRE(std::abs(v) < 1e-12);
  REQUIRE(res.degenerate);
  REQUIRE(res.epsilon == 1.0);
}

TEST_CASE("residual of a hand-computable case is an entrywise subtraction") {
  // identity stage on 2 latent dims, constant dynamics z(t) = z0 + c t
  SindyModel dyn = SindyModel::from_parts({0.5, -0.25}, Matrix(2, 2));
  StageStack stack = exact_stack(dyn, {1.0, 2.0}, 3, 0.1);
  // data differs from the rollout by a known offset
  SnapshotTensor exact = tensor_from_rollout(stack);
  std::vector<double> shifted = exact.values();
  // the rollout starts from the data's own initial condition, so keep row 0
  for (std::size_t i = 2; i < shifted.size(); ++i) shifted[i] += 0.01 * double(i);
  SnapshotTensor data(exact.parameters(), exact.times(), exact.state_dim(), shifted);
  StageResidual res = stage_residual(data, stack);
  for (std::size_t i = 2; i < shifted.size(); ++i)
    REQUIRE(res.residual.values()[i] == Catch::Approx(0.01 * double(i)).margin(1e-12));
}

TEST_CASE("epsilon equals the two-pass standard deviation of the residual") {
  const SnapshotTensor toy = small_toy();
  auto configs = std::vector<StageConfig>{small_config(24, 60)};
  StageStack stack = train_multistage(toy, configs, GpConfig{}, 3);
  StageResidual res = stage_residual(toy, stack);
  // independent two-pass oracle
  const auto& v = res.residual.values();
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double oracle = std::sqrt(ss / double(v.size()));
  REQUIRE(res.raw_std == Catch::Approx(oracle).margin(1e-12));
  REQUIRE(res.epsilon == res.raw_std);  // non-degenerate here
}

TEST_CASE("single-stage multistage equals a direct stage training") {
  const SnapshotTensor toy = small_toy();
  StageStack stack = train_multistage(toy, {small_config(24, 40)}, GpConfig{}, 11);
  auto [stage, meta] = train_stage(toy, toy, small_config(24, 40), GpConfig{},
                                   derive_seed(11, 0));
  REQUIRE(stack.stages.size() == 1);
  REQUIRE(stack.stages[0].autoencoder.encoder.weights[0].entries() ==
          stage.autoencoder.encoder.weights[0].entries());
  REQUIRE(stack.stages[0].sindy[0].coefficients.entries() ==
          stage.sindy[0].coefficients.entries());
}

TEST_CASE("stage-2 target equals the normalized stage-1 residual") {
  const SnapshotTensor toy = small_toy();
  StageStack stack =
      train_multistage(toy, {small_config(24, 50), small_config(24, 10, 1.0)},
                       GpConfig{}, 17);
  REQUIRE(stack.num_stages() == 2);
  // recompute the stage-1 residual from the saved stage-1 model
  StageResidual res = stage_residual(toy, stack, 1);
  REQUIRE(stack.stages[1].epsilon_prev == Catch::Approx(res.epsilon).margin(1e-15));
  // the stage-2 training target is residual / epsilon; verify via the stored
  // centering statistics, which are computed from exactly that tensor
  std::vector<double> target(res.residual.values());
  for (double& v : target) v /= res.epsilon;
  SnapshotTensor t2(toy.parameters(), toy.times(), toy.state_dim(), target);
  CenterScale expect = center_scale_stats(t2);
  const CenterScale& got = stack.stages[1].autoencoder.input_stats;
  REQUIRE(got.scale == Catch::Approx(expect.scale).margin(1e-12));
  for (int s = 0; s < toy.state_dim(); ++s)
    REQUIRE(got.mean[s] == Catch::Approx(expect.mean[s]).margin(1e-12));
}

TEST_CASE("composition identity: data minus residual is the weighted stage sum") {
  const SnapshotTensor toy = small_toy();
  StageStack stack =
      train_multistage(toy, {small_config(24, 40), small_config(24, 40, 1.0)},
                       GpConfig{}, 23);
  StageResidual res = stage_residual(toy, stack);
  // independent recomposition from the public per-stage pieces
  std::vector<double> composite(toy.values().size(), 0.0);
  for (int k = 0; k < stack.num_stages(); ++k) {
    for (int p = 0; p < toy.num_parameters(); ++p) {
      Matrix traj = stage_rollout_reconstruction(stack.stages[k], toy, p,
                                                 toy.num_times(), toy.dt());
      const std::size_t base = std::size_t(p) * toy.num_times() * toy.state_dim();
      for (std::size_t i = 0; i < traj.size(); ++i)
        composite[base + i] += stack.stages[k].epsilon_prev * traj.entries()[i];
    }
  }
  for (std::size_t i = 0; i < composite.size(); ++i) {
    const double lhs = toy.values()[i] - res.residual.values()[i];
    REQUIRE(lhs == Catch::Approx(composite[i]).margin(1e-12));
  }
}

TEST_CASE("prediction at a training parameter matches its training rollout") {
  const SnapshotTensor toy = small_toy();
  GpConfig gp;
  gp.noise_override = 1e-10;
  StageStack stack = train_multistage(toy, {small_config(24, 120)}, gp, 29);
  for (int p = 0; p < toy.num_parameters(); ++p) {
    Prediction pred =
        predict(stack, toy.parameters()[p], toy.initial_condition(p), 0, 0);
    Matrix train_rollout = stage_rollout_reconstruction(stack.stages[0], toy, p,
                                                        toy.num_times(), toy.dt());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < train_rollout.size(); ++i) {
      const double d = pred.mean_trajectory.entries()[i] - train_rollout.entries()[i];
      num += d * d;
      den += train_rollout.entries()[i] * train_rollout.entries()[i];
    }
    REQUIRE(std::sqrt(num / den) < 1e-4);
  }
}

TEST_CASE("prediction without samples has a zero std field") {
  const SnapshotTensor toy = small_toy();
  StageStack stack = train_multistage(toy, {small_config(24, 30)}, GpConfig{}, 31);
  Prediction pred = predict(stack, {{1.2}}, toy.initial_condition(0), 0, 0);
  REQUIRE(pred.samples.empty());
  for (double v : pred.std_field.entries()) REQUIRE(v == 0.0);
  REQUIRE(pred.mean_trajectory.all_finite());
}

TEST_CASE("sampled predictions are reproducible under a fixed seed") {
  const SnapshotTensor toy = small_toy();
  StageStack stack = train_multistage(toy, {small_config(24, 30)}, GpConfig{}, 37);
  Prediction a = predict(stack, {{1.2}}, toy.initial_condition(0), 4, 12345);
  Prediction b = predict(stack, {{1.2}}, toy.initial_condition(0), 4, 12345);
  REQUIRE(a.samples.size() == 4);
  for (std::size_t s = 0; s < a.samples.size(); ++s)
    REQUIRE(a.samples[s].entries() == b.samples[s].entries());
  REQUIRE(a.std_field.entries() == b.std_field.entries());
  for (double v : a.std_field.entries()) REQUIRE(v >= 0.0);
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
  const SnapshotTensor toy = small_toy();
  auto configs = std::vector<StageConfig>{small_config(24, 50), small_config(24, 20, 1.0)};
  StageStack a = train_multistage(toy, configs, GpConfig{}, 41);
  StageStack b = train_multistage(toy, configs, GpConfig{}, 41);
  REQUIRE(a.num_stages() == b.num_stages());
  for (int k = 0; k < a.num_stages(); ++k) {
    for (int l = 0; l < a.stages[k].autoencoder.encoder.num_layers(); ++l) {
      REQUIRE(a.stages[k].autoencoder.encoder.weights[l].entries() ==
              b.stages[k].autoencoder.encoder.weights[l].entries());
      REQUIRE(a.stages[k].autoencoder.decoder.weights[l].entries() ==
              b.stages[k].autoencoder.decoder.weights[l].entries());
    }
    REQUIRE(a.stages[k].epsilon_prev == b.stages[k].epsilon_prev);
    for (std::size_t p = 0; p < a.stages[k].sindy.size(); ++p)
      REQUIRE(a.stages[k].sindy[p].coefficients.entries() ==
              b.stages[k].sindy[p].coefficients.entries());
  }
}

TEST_CASE("multistage stops early when the residual is numerically zero") {
  // data the first stage reproduces exactly cannot feed a second stage
  SindyModel dyn = SindyModel::from_parts({0.2, 0.0}, {{0.0, 0.5}, {-0.5, 0.0}});
  StageStack proto = exact_stack(dyn, {1.0, 0.0}, 30, 0.05);
  SnapshotTensor data = tensor_from_rollout(proto);
  // a 0-iteration identity-like run cannot be built through train_multistage,
  // so check the residual guard directly
  StageResidual res = stage_residual(data, proto);
  REQUIRE(res.degenerate);
  REQUIRE(res.epsilon == 1.0);
  REQUIRE(res.raw_std < 1e-14);
  REQUIRE(tensor_norm(res.residual) < 1e-10);
}
