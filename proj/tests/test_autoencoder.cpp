#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mlasdi/autoencoder.hpp"
#include "mlasdi/rng.hpp"

using namespace mlasdi;

namespace {

CenterScale unit_stats(int dim) {
  CenterScale cs;
  cs.mean.assign(dim, 0.0);
  cs.scale = 1.0;
  return cs;
}

// Single linear layer configured as the identity on both sides.
AutoencoderPair identity_pair(int dim) {
  AutoencoderPair pair = AutoencoderPair::initialized({dim, dim}, Activation::tanh,
                                                      unit_stats(dim), 0);
  pair.encoder.weights[0] = Matrix::identity(dim);
  pair.encoder.biases[0].assign(dim, 0.0);
  pair.decoder.weights[0] = Matrix::identity(dim);
  pair.decoder.biases[0].assign(dim, 0.0);
  return pair;
}

SindyContext plain_context(int n_params, int steps, double beta_di = 0.0,
                           double beta_ridge = 0.0) {
  SindyContext ctx;
  ctx.beta_di = beta_di;
  ctx.beta_ridge = beta_ridge;
  ctx.dt = 0.1;
  ctx.n_params = n_params;
  ctx.steps_per_param = steps;
  return ctx;
}

}  // namespace

TEST_CASE("identity-configured pair is the identity map") {
  AutoencoderPair pair = identity_pair(4);
  Rng rng(1);
  Matrix u(3, 4);
  for (double& v : u.entries()) v = rng.uniform(-2.0, 2.0);
  Matrix z = encode(pair, u);
  for (std::size_t i = 0; i < u.size(); ++i)
    REQUIRE(z.entries()[i] == Catch::Approx(u.entries()[i]).margin(1e-14));
  Matrix back = decode(pair, z);
  for (std::size_t i = 0; i < u.size(); ++i)
    REQUIRE(back.entries()[i] == Catch::Approx(u.entries()[i]).margin(1e-12));
}

TEST_CASE("encode/decode shape contracts") {
  AutoencoderPair pair =
      AutoencoderPair::initialized({6, 4, 2}, Activation::tanh, unit_stats(6), 7);
  Matrix single(1, 6);
  Matrix z = encode(pair, single);
  REQUIRE(z.rows() == 1);
  REQUIRE(z.cols() == 2);
  Matrix u = decode(pair, z);
  REQUIRE(u.rows() == 1);
  REQUIRE(u.cols() == 6);
  REQUIRE(u.all_finite());
  REQUIRE_THROWS_AS(encode(pair, Matrix(1, 5)), Error);
  REQUIRE_THROWS_AS(decode(pair, Matrix(1, 3)), Error);
}

TEST_CASE("paper-scale encode shape: 600-100-5 on 402 snapshots") {
  AutoencoderPair pair =
      AutoencoderPair::initialized({600, 100, 5}, Activation::tanh, unit_stats(600), 3);
  Matrix batch(402, 600);
  Matrix z = encode(pair, batch);
  REQUIRE(z.rows() == 402);
  REQUIRE(z.cols() == 5);
}

TEST_CASE("zero latents through a zero-bias decoder reproduce the stored mean") {
  AutoencoderPair pair =
      AutoencoderPair::initialized({5, 3, 2}, Activation::tanh, unit_stats(5), 11);
  pair.input_stats.mean = {1.0, -2.0, 0.5, 3.0, 0.0};
  pair.input_stats.scale = 2.0;
  for (auto& b : pair.decoder.biases) std::fill(b.begin(), b.end(), 0.0);
  Matrix out = decode(pair, Matrix(1, 2));
  for (int c = 0; c < 5; ++c)
    REQUIRE(out(0, c) == Catch::Approx(pair.input_stats.mean[c]).margin(1e-14));
}

TEST_CASE("softplus is overflow-safe and exact in the linear tail") {
  REQUIRE(softplus(0.0) == Catch::Approx(std::log(2.0)));
  for (double x : {31.0, 100.0, 700.0, 5000.0}) {
    REQUIRE(std::isfinite(softplus(x)));
    REQUIRE(softplus(x) - x >= 0.0);
    REQUIRE(softplus(x) - x < 1e-12);
  }
  REQUIRE(softplus(-5000.0) == 0.0);  // underflows cleanly
}

TEST_CASE("loss with zero weights is the plain reconstruction MSE") {
  Rng rng(13);
  AutoencoderPair pair =
      AutoencoderPair::initialized({4, 3, 2}, Activation::tanh, unit_stats(4), 17);
  Matrix batch(6, 4);
  for (double& v : batch.entries()) v = rng.uniform(-1.0, 1.0);
  SindyContext ctx = plain_context(1, 6);
  TrainingEval ev = loss_and_gradients(pair, batch, ctx);
  // oracle: forward pass by hand through the public encode/decode
  Matrix recon = decode(pair, encode(pair, batch));
  double mse = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double d = recon.entries()[i] - batch.entries()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(batch.size());
  REQUIRE(ev.losses.total(0.0, 0.0) == Catch::Approx(mse).margin(1e-14));
  REQUIRE(ev.losses.total(0.0, 0.0) == Catch::Approx(ev.losses.reconstruction));
}

TEST_CASE("zero network on standardized +-1 data has unit reconstruction loss") {
  AutoencoderPair pair =
      AutoencoderPair::initialized({2, 2}, Activation::tanh, unit_stats(2), 19);
  for (auto& w : pair.encoder.weights) std::fill(w.entries().begin(), w.entries().end(), 0.0);
  for (auto& b : pair.encoder.biases) std::fill(b.begin(), b.end(), 0.0);
  for (auto& w : pair.decoder.weights) std::fill(w.entries().begin(), w.entries().end(), 0.0);
  for (auto& b : pair.decoder.biases) std::fill(b.begin(), b.end(), 0.0);
  Matrix batch{{1.0, -1.0}, {-1.0, 1.0}, {1.0, 1.0}, {-1.0, -1.0}};
  TrainingEval ev = loss_and_gradients(pair, batch, plain_context(1, 4));
  // constant-zero output against data of unit second moment
  REQUIRE(ev.losses.reconstruction == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("backprop matches central finite differences on the full loss") {
  // both activations, loss with all three terms active
  for (Activation act : {Activation::tanh, Activation::softplus}) {
    Rng data_rng(23);
    AutoencoderPair pair =
        AutoencoderPair::initialized({5, 4, 2}, act, unit_stats(5), 29);
    Matrix batch(2 * 7, 5);
    for (double& v : batch.entries()) v = data_rng.uniform(-1.0, 1.0);
    SindyContext ctx = plain_context(2, 7, 0.3, 1e-2);
    TrainingEval ev = loss_and_gradients(pair, batch, ctx);
    auto views = parameter_views(pair);
    auto gviews = gradient_views(ev.grads);
    Rng pick(31);
    for (int s = 0; s < 40; ++s) {
      const auto t = static_cast<std::size_t>(pick.uniform01() * views.size());
      const auto i = static_cast<std::size_t>(pick.uniform01() * views[t].size);
      const double h = 1e-6;
      const double orig = views[t].data[i];
      views[t].data[i] = orig + h;
      const double lp =
          loss_and_gradients(pair, batch, ctx).losses.total(ctx.beta_di, ctx.beta_ridge);
      views[t].data[i] = orig - h;
      const double lm =
          loss_and_gradients(pair, batch, ctx).losses.total(ctx.beta_di, ctx.beta_ridge);
      views[t].data[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double g = gviews[t].data[i];
      REQUIRE(std::abs(fd - g) / (std::abs(g) + 1e-12) < 1e-5);
    }
  }
}

TEST_CASE("non-finite loss is reported as divergence") {
  AutoencoderPair pair =
      AutoencoderPair::initialized({3, 2}, Activation::tanh, unit_stats(3), 37);
  pair.decoder.weights[0](0, 0) = std::numeric_limits<double>::infinity();
  Matrix batch(4, 3);
  for (double& v : batch.entries()) v = 0.5;
  REQUIRE_THROWS_MATCHES(loss_and_gradients(pair, batch, plain_context(1, 4)), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::non_finite_loss;
                         }));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  std::vector<double> p = {1.0, -2.0, 3.0};
  std::vector<double> g = {0.0, 0.0, 0.0};
  std::vector<ParamView> pv = {{p.data(), p.size()}};
  std::vector<ParamView> gv = {{g.data(), g.size()}};
  AdamState st = make_adam_state(pv, 0.05);
  adam_step(pv, gv, st);
  REQUIRE(st.step == 1);
  REQUIRE(p == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("adam: first step moves by about -lr*sign(g)") {
  std::vector<double> p = {0.0, 0.0};
  std::vector<double> g = {0.5, -3.0};
  std::vector<ParamView> pv = {{p.data(), p.size()}};
  std::vector<ParamView> gv = {{g.data(), g.size()}};
  AdamState st = make_adam_state(pv, 0.1);
  adam_step(pv, gv, st);
  // bias-corrected first step: -lr * g / (|g| + eps)
  REQUIRE(p[0] == Catch::Approx(-0.1).margin(1e-6 * 0.1));
  REQUIRE(p[1] == Catch::Approx(0.1).margin(1e-6 * 0.1));
}

TEST_CASE("adam: constant gradient settles at lr-sized steps") {
  std::vector<double> p = {0.0};
  std::vector<double> g = {0.7};
  std::vector<ParamView> pv = {{p.data(), p.size()}};
  std::vector<ParamView> gv = {{g.data(), g.size()}};
  AdamState st = make_adam_state(pv, 0.01);
  double prev = p[0];
  for (int i = 0; i < 200; ++i) {
    adam_step(pv, gv, st);
    if (i >= 100) {
      const double step = prev - p[0];
      REQUIRE(step == Catch::Approx(0.01).epsilon(1e-3));
    }
    prev = p[0];
  }
  REQUIRE(p[0] < 0.0);
}

TEST_CASE("deterministic initialization for a fixed seed") {
  AutoencoderPair a =
      AutoencoderPair::initialized({6, 3}, Activation::tanh, unit_stats(6), 123);
  AutoencoderPair b =
      AutoencoderPair::initialized({6, 3}, Activation::tanh, unit_stats(6), 123);
  REQUIRE(a.encoder.weights[0].entries() == b.encoder.weights[0].entries());
  REQUIRE(a.decoder.biases[0] == b.decoder.biases[0]);
  AutoencoderPair c =
      AutoencoderPair::initialized({6, 3}, Activation::tanh, unit_stats(6), 124);
  REQUIRE(a.encoder.weights[0].entries() != c.encoder.weights[0].entries());
}
