#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mlasdi/data.hpp"
#include "mlasdi/errors.hpp"
#include "mlasdi/latent_dynamics.hpp"
#include "mlasdi/matrix.hpp"
#include "mlasdi/rng.hpp"

namespace mlasdi {

enum class Activation { tanh, softplus };

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "softplus") return Activation::softplus;
  fail(Errc::config_error, "unknown activation '" + s + "' (expected tanh or softplus)");
}

inline const char* activation_name(Activation a) {
  return a == Activation::tanh ? "tanh" : "softplus";
}

// Overflow-safe softplus: max(x,0) + log1p(exp(-|x|)); indistinguishable from
// x itself for large positive arguments.
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Fully connected network. The nonlinearity acts on every layer except the
// last, which stays linear (latent layer of the encoder, reconstruction
// layer of the decoder).
struct MlpNetwork {
  std::vector<int> layer_dims;
  std::vector<Matrix> weights;              // weights[l]: dims[l+1] x dims[l]
  std::vector<std::vector<double>> biases;  // biases[l]:  dims[l+1]
  Activation activation = Activation::tanh;

  int num_layers() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }

  // Uniform +-1/sqrt(fan_in) for weights and biases, drawn in layer order
  // from the given stream.
  static MlpNetwork initialized(std::vector<int> dims, Activation act, Rng& rng) {
    require(dims.size() >= 2, Errc::invalid_argument, "network needs >= 2 layer dims");
    for (int d : dims)
      require(d >= 1, Errc::invalid_argument, "layer dims must be positive");
    MlpNetwork net;
    net.layer_dims = std::move(dims);
    net.activation = act;
    for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
      const int fan_in = net.layer_dims[l];
      const int fan_out = net.layer_dims[l + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      Matrix w(fan_out, fan_in);
      for (double& v : w.entries()) v = rng.uniform(-bound, bound);
      std::vector<double> b(fan_out);
      for (double& v : b) v = rng.uniform(-bound, bound);
      net.weights.push_back(std::move(w));
      net.biases.push_back(std::move(b));
    }
    return net;
  }
};

// Per-layer forward cache reused across training iterations. The input is
// referenced, not copied; it must outlive any backward pass using the cache.
struct MlpForwardCache {
  const Matrix* input = nullptr;
  std::vector<Matrix> act;  // act[l] = output of layer l, l = 0..layers-1
  std::vector<Matrix> pre;  // pre[l] = pre-activation of layer l

  const Matrix& layer_input(int l) const { return l == 0 ? *input : act[l - 1]; }
};

inline const Matrix& mlp_forward(const MlpNetwork& net, const Matrix& input,
                                 MlpForwardCache& cache) {
  require(input.cols() == net.input_dim(), Errc::dimension_mismatch,
          "mlp_forward: input width does not match network");
  const int layers = net.num_layers();
  cache.input = &input;
  cache.act.resize(layers);
  cache.pre.resize(layers);
  for (int l = 0; l < layers; ++l) {
    Matrix& p = cache.pre[l];
    matmul_a_bt_into(cache.layer_input(l), net.weights[l], p);
    const auto& b = net.biases[l];
    for (int r = 0; r < p.rows(); ++r) {
      double* row = p.row_ptr(r);
      for (int c = 0; c < p.cols(); ++c) row[c] += b[c];
    }
    Matrix& out = cache.act[l];
    if (l == layers - 1) {
      out = p;  // final layer stays linear
    } else {
      if (out.rows() != p.rows() || out.cols() != p.cols())
        out = Matrix(p.rows(), p.cols());
      auto pm = detail::as_eigen(p);
      auto om = detail::as_eigen(out);
      if (net.activation == Activation::tanh) {
        om.array() = pm.array().tanh();
      } else {
        // softplus, vectorized and overflow-safe
        om.array() = pm.array().max(0.0) + (-pm.array().abs()).exp().log1p();
      }
    }
  }
  return cache.act.back();
}

inline Matrix mlp_forward(const MlpNetwork& net, const Matrix& input) {
  MlpForwardCache cache;
  return mlp_forward(net, input, cache);
}

struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  // Weight buffers are overwritten by the backward pass, so only shape them;
  // bias buffers accumulate and need clearing.
  void init_like(const MlpNetwork& net) {
    weights.resize(net.num_layers());
    biases.resize(net.num_layers());
    for (int l = 0; l < net.num_layers(); ++l) {
      if (weights[l].rows() != net.weights[l].rows() ||
          weights[l].cols() != net.weights[l].cols())
        weights[l] = Matrix(net.weights[l].rows(), net.weights[l].cols());
      biases[l].assign(net.biases[l].size(), 0.0);
    }
  }
};

// Backpropagate d_output = dL/d(net output) through the cached forward pass.
// Fills grads; when d_input is non-null also produces dL/d(net input).
inline void mlp_backward(const MlpNetwork& net, const MlpForwardCache& cache,
                         const Matrix& d_output, MlpGradients& grads,
                         Matrix* d_input = nullptr) {
  const int layers = net.num_layers();
  grads.init_like(net);
  Matrix delta = d_output;  // dL/d(act[l]) while walking backwards
  Matrix next;
  for (int l = layers - 1; l >= 0; --l) {
    if (l < layers - 1) {
      // multiply by the activation derivative to get dL/d(pre[l])
      auto dm = detail::as_eigen(delta);
      if (net.activation == Activation::tanh) {
        auto am = detail::as_eigen(cache.act[l]);
        dm.array() *= 1.0 - am.array().square();
      } else {
        auto pm = detail::as_eigen(cache.pre[l]);
        dm.array() *= (1.0 + (-pm.array()).exp()).inverse();
      }
    }
    matmul_at_b_into(delta, cache.layer_input(l), grads.weights[l]);
    auto& db = grads.biases[l];
    for (int r = 0; r < delta.rows(); ++r) {
      const double* row = delta.row_ptr(r);
      for (int c = 0; c < delta.cols(); ++c) db[c] += row[c];
    }
    const bool need_input_grad = l > 0 || d_input != nullptr;
    if (need_input_grad) {
      matmul_into(delta, net.weights[l], next);
      std::swap(delta, next);
    }
  }
  if (d_input != nullptr) *d_input = std::move(delta);
}

// Encoder/decoder pair plus the centering statistics of the data it was
// trained on. The decoder mirrors the encoder architecture.
struct AutoencoderPair {
  MlpNetwork encoder;
  MlpNetwork decoder;
  CenterScale input_stats;

  int state_dim() const { return encoder.input_dim(); }
  int latent_dim() const { return encoder.output_dim(); }

  static AutoencoderPair initialized(const std::vector<int>& encoder_dims,
                                     Activation act, CenterScale stats,
                                     std::uint64_t seed) {
    Rng rng(seed);
    AutoencoderPair pair;
    pair.encoder = MlpNetwork::initialized(encoder_dims, act, rng);
    std::vector<int> reversed(encoder_dims.rbegin(), encoder_dims.rend());
    pair.decoder = MlpNetwork::initialized(reversed, act, rng);
    pair.input_stats = std::move(stats);
    require(pair.input_stats.mean.size() == static_cast<std::size_t>(encoder_dims.front()),
            Errc::dimension_mismatch, "centering stats do not match input width");
    return pair;
  }
};

inline Matrix standardize(const Matrix& states, const CenterScale& stats) {
  require(states.cols() == static_cast<int>(stats.mean.size()), Errc::dimension_mismatch,
          "standardize: state width does not match stats");
  Matrix out(states.rows(), states.cols());
  const double inv = 1.0 / stats.scale;
  for (int r = 0; r < states.rows(); ++r)
    for (int c = 0; c < states.cols(); ++c)
      out(r, c) = (states(r, c) - stats.mean[c]) * inv;
  return out;
}

inline void unstandardize_inplace(Matrix& states, const CenterScale& stats) {
  for (int r = 0; r < states.rows(); ++r)
    for (int c = 0; c < states.cols(); ++c)
      states(r, c) = states(r, c) * stats.scale + stats.mean[c];
}

// Map full-order states to latent coordinates.
inline Matrix encode(const AutoencoderPair& pair, const Matrix& states) {
  return mlp_forward(pair.encoder, standardize(states, pair.input_stats));
}

// Map latent coordinates back to full-order states in original units.
inline Matrix decode(const AutoencoderPair& pair, const Matrix& latents) {
  require(latents.cols() == pair.latent_dim(), Errc::dimension_mismatch,
          "decode: latent width does not match network");
  Matrix out = mlp_forward(pair.decoder, latents);
  unstandardize_inplace(out, pair.input_stats);
  return out;
}

struct LossTerms {
  double reconstruction = 0.0;   // L_AE
  double dynamics = 0.0;         // L_DI
  double coefficient_norm = 0.0; // mean of squared SINDy coefficients

  double total(double beta_di, double beta_ridge) const {
    return reconstruction + beta_di * dynamics + beta_ridge * coefficient_norm;
  }
};

struct PairGradients {
  MlpGradients encoder;
  MlpGradients decoder;
};

struct TrainingEval {
  LossTerms losses;
  PairGradients grads;
  std::vector<SindyModel> sindy;  // refitted coefficients, one per trajectory
};

// Scratch buffers for one evaluation; reusing them across iterations keeps
// the training loop allocation-free on the hot path.
struct EvalWorkspace {
  MlpForwardCache enc;
  MlpForwardCache dec;
  Matrix d_recon;
  Matrix d_latent;
  Matrix d_latent_di;
  TrainingEval eval;
};

namespace detail {

// Core of the loss: inputs already standardized. Gradients are exact for the
// total loss with the coefficients held at their per-iteration ridge optimum;
// because that optimum zeroes the loss derivative in Xi, they also equal the
// gradients of the reduced objective min_Xi L.
inline TrainingEval& loss_and_gradients_standardized(const AutoencoderPair& pair,
                                                     const Matrix& input_std,
                                                     const Matrix& target_std,
                                                     const SindyContext& ctx,
                                                     EvalWorkspace& ws) {
  const int rows = input_std.rows();
  require(rows > 0, Errc::invalid_argument, "empty batch");
  require(rows == target_std.rows() && input_std.cols() == target_std.cols(),
          Errc::dimension_mismatch, "input and target batches differ in shape");
  require(ctx.n_params >= 1 && ctx.steps_per_param >= 3, Errc::too_few_timesteps,
          "context needs >= 3 steps per trajectory");
  require(ctx.batch_rows() == rows, Errc::dimension_mismatch,
          "batch rows do not match context segmentation");

  const int nz = pair.latent_dim();
  const Matrix& z = mlp_forward(pair.encoder, input_std, ws.enc);
  const Matrix& recon = mlp_forward(pair.decoder, z, ws.dec);

  TrainingEval& ev = ws.eval;
  ev.sindy.clear();

  // reconstruction term and its gradient
  const double m_ae = static_cast<double>(recon.size());
  double ae = 0.0;
  Matrix& d_recon = ws.d_recon;
  if (d_recon.rows() != recon.rows() || d_recon.cols() != recon.cols())
    d_recon = Matrix(recon.rows(), recon.cols());
  for (std::size_t i = 0; i < recon.size(); ++i) {
    const double d = recon.entries()[i] - target_std.entries()[i];
    ae += d * d;
    d_recon.entries()[i] = 2.0 * d / m_ae;
  }
  ev.losses.reconstruction = ae / m_ae;

  mlp_backward(pair.decoder, ws.dec, d_recon, ev.grads.decoder, &ws.d_latent);

  // dynamics-identification term, coefficients refit per trajectory
  const int steps = ctx.steps_per_param;
  const double m_di = static_cast<double>(ctx.n_params) * steps * nz;
  const double m_xi = static_cast<double>(ctx.n_params) * (nz + 1) * nz;
  const double ridge = ctx.effective_ridge(nz);
  double di_sum = 0.0;
  double xi_sum = 0.0;
  for (int p = 0; p < ctx.n_params; ++p) {
    Matrix zp = z.block(p * steps, 0, steps, nz);
    Matrix zdot = estimate_time_derivative(zp, ctx.dt);
    SindyModel model;
    if (ctx.beta_di > 0.0) {
      model = fit_sindy(zp, zdot, ridge);
    } else {
      // with no DI weight the penalized optimum is identically zero
      model.coefficients = Matrix(nz + 1, nz);
    }
    Matrix pred = matmul(sindy_library(zp), model.coefficients);
    Matrix err(steps, nz);
    for (std::size_t i = 0; i < err.size(); ++i) {
      err.entries()[i] = zdot.entries()[i] - pred.entries()[i];
      di_sum += err.entries()[i] * err.entries()[i];
    }
    for (double v : model.coefficients.entries()) xi_sum += v * v;

    if (ctx.beta_di > 0.0) {
      const double c = 2.0 * ctx.beta_di / m_di;
      Matrix& dzp = ws.d_latent_di;
      if (dzp.rows() != steps || dzp.cols() != nz) dzp = Matrix(steps, nz);
      std::fill(dzp.entries().begin(), dzp.entries().end(), 0.0);
      // zdot path: D^T err
      Matrix g = err;
      for (double& v : g.entries()) v *= c;
      add_time_derivative_adjoint(g, ctx.dt, dzp);
      // library path: -err * (Xi without intercept row)^T
      Matrix lin = model.coefficients.block(1, 0, nz, nz);
      Matrix lib_grad(steps, nz);
      matmul_a_bt_into(err, lin, lib_grad);
      for (std::size_t i = 0; i < dzp.size(); ++i)
        dzp.entries()[i] -= c * lib_grad.entries()[i];
      for (int r = 0; r < steps; ++r) {
        double* acc = ws.d_latent.row_ptr(p * steps + r);
        const double* add = dzp.row_ptr(r);
        for (int j = 0; j < nz; ++j) acc[j] += add[j];
      }
    }
    ev.sindy.push_back(std::move(model));
  }
  ev.losses.dynamics = di_sum / m_di;
  ev.losses.coefficient_norm = xi_sum / m_xi;

  mlp_backward(pair.encoder, ws.enc, ws.d_latent, ev.grads.encoder);

  const double total = ev.losses.total(ctx.beta_di, ctx.beta_ridge);
  require(std::isfinite(total), Errc::non_finite_loss,
          "training loss is not finite (diverged)");
  return ev;
}

}  // namespace detail

// Loss terms and exact parameter gradients for one batch. `input` feeds the
// encoder, `target` is what the decoder must reproduce; both in raw units.
inline TrainingEval loss_and_gradients(const AutoencoderPair& pair, const Matrix& input,
                                       const Matrix& target, const SindyContext& ctx) {
  EvalWorkspace ws;
  Matrix input_std = standardize(input, pair.input_stats);
  Matrix target_std = standardize(target, pair.input_stats);
  return detail::loss_and_gradients_standardized(pair, input_std, target_std, ctx, ws);
}

// Plain autoencoding form: the batch is both input and reconstruction target.
inline TrainingEval loss_and_gradients(const AutoencoderPair& pair, const Matrix& batch,
                                       const SindyContext& ctx) {
  return loss_and_gradients(pair, batch, batch, ctx);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

struct ParamView {
  double* data;
  std::size_t size;
};

inline std::vector<ParamView> parameter_views(MlpNetwork& net) {
  std::vector<ParamView> views;
  for (auto& w : net.weights) views.push_back({w.data(), w.size()});
  for (auto& b : net.biases) views.push_back({b.data(), b.size()});
  return views;
}

inline std::vector<ParamView> parameter_views(AutoencoderPair& pair) {
  auto views = parameter_views(pair.encoder);
  auto dec = parameter_views(pair.decoder);
  views.insert(views.end(), dec.begin(), dec.end());
  return views;
}

inline std::vector<ParamView> gradient_views(MlpGradients& g) {
  std::vector<ParamView> views;
  for (auto& w : g.weights) views.push_back({w.data(), w.size()});
  for (auto& b : g.biases) views.push_back({b.data(), b.size()});
  return views;
}

inline std::vector<ParamView> gradient_views(PairGradients& g) {
  auto views = gradient_views(g.encoder);
  auto dec = gradient_views(g.decoder);
  views.insert(views.end(), dec.begin(), dec.end());
  return views;
}

inline AdamState make_adam_state(const std::vector<ParamView>& params, double lr) {
  AdamState st;
  st.learning_rate = lr;
  st.first_moment.resize(params.size());
  st.second_moment.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.first_moment[i].assign(params[i].size, 0.0);
    st.second_moment[i].assign(params[i].size, 0.0);
  }
  return st;
}

// One bias-corrected Adam update over all parameter tensors.
inline void adam_step(const std::vector<ParamView>& params,
                      const std::vector<ParamView>& grads, AdamState& st) {
  require(params.size() == grads.size() && params.size() == st.first_moment.size(),
          Errc::dimension_mismatch, "adam_step: view counts differ");
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    require(params[t].size == grads[t].size, Errc::dimension_mismatch,
            "adam_step: tensor shapes differ");
    const auto n = static_cast<Eigen::Index>(params[t].size);
    Eigen::Map<Eigen::ArrayXd> p(params[t].data, n);
    Eigen::Map<const Eigen::ArrayXd> g(grads[t].data, n);
    Eigen::Map<Eigen::ArrayXd> m(st.first_moment[t].data(), n);
    Eigen::Map<Eigen::ArrayXd> v(st.second_moment[t].data(), n);
    m = st.beta1 * m + (1.0 - st.beta1) * g;
    v = st.beta2 * v + (1.0 - st.beta2) * g.square();
    p -= st.learning_rate * (m / bc1) / ((v / bc2).sqrt() + st.eps);
  }
}

}  // namespace mlasdi
