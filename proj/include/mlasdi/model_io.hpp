#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlasdi/data.hpp"
#include "mlasdi/errors.hpp"
#include "mlasdi/metrics.hpp"
#include "mlasdi/rom.hpp"

namespace mlasdi {

// ---------------------------------------------------------------------------
// Stage model file (.mlm), little-endian, versioned; round-trips bitwise.
//   magic "MLSM", u8 version = 1
//   u8 activation (0 tanh, 1 softplus), u32 rollout_substeps, f64 epsilon_prev
//   u32 n_dims, u32 encoder dims...
//   encoder layers: weights then biases, f64 row-major
//   decoder layers: same, architecture is the reverse of the encoder
//   u32 state_dim, f64 mean[state_dim], f64 scale
//   u32 n_mu, u32 param_dim, f64 parameters (row-major)
//   f64 xi[n_mu * (nz+1) * nz]
//   per coefficient (row-major over (nz+1) x nz):
//     u8 kind (0 rbf, 1 matern15), u8 degenerate, f64 amplitude, f64
//     lengthscale, f64 noise
// ---------------------------------------------------------------------------

namespace detail {

constexpr char kStageMagic[4] = {'M', 'L', 'S', 'M'};

inline void write_net(std::FILE* f, const MlpNetwork& net) {
  for (int l = 0; l < net.num_layers(); ++l) {
    for (double v : net.weights[l].entries()) write_f64(f, v);
    for (double v : net.biases[l]) write_f64(f, v);
  }
}

inline void read_net(std::FILE* f, MlpNetwork& net, const std::vector<int>& dims,
                     Activation act, const std::string& path) {
  net.layer_dims = dims;
  net.activation = act;
  net.weights.clear();
  net.biases.clear();
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Matrix w(dims[l + 1], dims[l]);
    for (double& v : w.entries())
      require(read_f64(f, v), Errc::shape_error, path + ": truncated weights");
    std::vector<double> b(dims[l + 1]);
    for (double& v : b)
      require(read_f64(f, v), Errc::shape_error, path + ": truncated biases");
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
}

}  // namespace detail

inline void save_stage_model(const StageModel& stage, const std::string& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "wb"));
  require(f != nullptr, Errc::io_error, "cannot open " + path + " for writing");
  detail::write_bytes(f.get(), detail::kStageMagic, 4);
  const unsigned char version = 1;
  detail::write_bytes(f.get(), &version, 1);
  const unsigned char act =
      stage.autoencoder.encoder.activation == Activation::tanh ? 0 : 1;
  detail::write_bytes(f.get(), &act, 1);
  detail::write_u32(f.get(), static_cast<std::uint32_t>(stage.rollout_substeps));
  detail::write_f64(f.get(), stage.epsilon_prev);

  const auto& dims = stage.autoencoder.encoder.layer_dims;
  detail::write_u32(f.get(), static_cast<std::uint32_t>(dims.size()));
  for (int d : dims) detail::write_u32(f.get(), static_cast<std::uint32_t>(d));
  detail::write_net(f.get(), stage.autoencoder.encoder);
  detail::write_net(f.get(), stage.autoencoder.decoder);

  detail::write_u32(f.get(), static_cast<std::uint32_t>(stage.state_dim()));
  for (double v : stage.autoencoder.input_stats.mean) detail::write_f64(f.get(), v);
  detail::write_f64(f.get(), stage.autoencoder.input_stats.scale);

  const int n_mu = static_cast<int>(stage.sindy.size());
  const int param_dim = n_mu > 0 ? stage.sindy.front().parameter.dim() : 0;
  detail::write_u32(f.get(), static_cast<std::uint32_t>(n_mu));
  detail::write_u32(f.get(), static_cast<std::uint32_t>(param_dim));
  for (const auto& m : stage.sindy)
    for (double v : m.parameter.values) detail::write_f64(f.get(), v);
  for (const auto& m : stage.sindy)
    for (double v : m.coefficients.entries()) detail::write_f64(f.get(), v);

  const int nz = stage.latent_dim();
  for (int r = 0; r <= nz; ++r)
    for (int c = 0; c < nz; ++c) {
      const Kernel& k = stage.gp_field.kernel(r, c);
      const unsigned char kind = k.kind == KernelKind::rbf ? 0 : 1;
      const unsigned char degenerate = k.degenerate ? 1 : 0;
      detail::write_bytes(f.get(), &kind, 1);
      detail::write_bytes(f.get(), &degenerate, 1);
      detail::write_f64(f.get(), k.amplitude);
      detail::write_f64(f.get(), k.lengthscale);
      detail::write_f64(f.get(), k.noise);
    }
  detail::flush_and_sync(f.get(), path);
}

inline StageModel load_stage_model(const std::string& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "rb"));
  require(f != nullptr, Errc::io_error, "cannot open " + path);
  char magic[4];
  require(detail::read_bytes(f.get(), magic, 4) &&
              std::memcmp(magic, detail::kStageMagic, 4) == 0,
          Errc::format_error, path + ": not a stage model file");
  unsigned char version = 0, act = 0;
  require(detail::read_bytes(f.get(), &version, 1) && version == 1, Errc::format_error,
          path + ": unsupported model version");
  require(detail::read_bytes(f.get(), &act, 1) && act <= 1, Errc::format_error,
          path + ": bad activation tag");

  StageModel stage;
  std::uint32_t substeps = 1;
  require(detail::read_u32(f.get(), substeps), Errc::format_error, path + ": truncated");
  stage.rollout_substeps = static_cast<int>(substeps);
  require(detail::read_f64(f.get(), stage.epsilon_prev), Errc::format_error,
          path + ": truncated");

  std::uint32_t n_dims = 0;
  require(detail::read_u32(f.get(), n_dims) && n_dims >= 2, Errc::format_error,
          path + ": bad layer count");
  std::vector<int> dims(n_dims);
  for (auto& d : dims) {
    std::uint32_t v = 0;
    require(detail::read_u32(f.get(), v) && v >= 1, Errc::format_error,
            path + ": bad layer dim");
    d = static_cast<int>(v);
  }
  const Activation activation = act == 0 ? Activation::tanh : Activation::softplus;
  detail::read_net(f.get(), stage.autoencoder.encoder, dims, activation, path);
  std::vector<int> rdims(dims.rbegin(), dims.rend());
  detail::read_net(f.get(), stage.autoencoder.decoder, rdims, activation, path);

  std::uint32_t state_dim = 0;
  require(detail::read_u32(f.get(), state_dim) && static_cast<int>(state_dim) == dims[0],
          Errc::shape_error, path + ": stats width does not match architecture");
  stage.autoencoder.input_stats.mean.resize(state_dim);
  for (double& v : stage.autoencoder.input_stats.mean)
    require(detail::read_f64(f.get(), v), Errc::shape_error, path + ": truncated stats");
  require(detail::read_f64(f.get(), stage.autoencoder.input_stats.scale),
          Errc::shape_error, path + ": truncated stats");

  std::uint32_t n_mu = 0, param_dim = 0;
  require(detail::read_u32(f.get(), n_mu) && detail::read_u32(f.get(), param_dim),
          Errc::shape_error, path + ": truncated coefficient block");
  std::vector<ParameterPoint> params(n_mu);
  for (auto& p : params) {
    p.values.resize(param_dim);
    for (double& v : p.values)
      require(detail::read_f64(f.get(), v), Errc::shape_error,
              path + ": truncated parameters");
  }
  const int nz = dims.back();
  stage.sindy.resize(n_mu);
  for (std::uint32_t i = 0; i < n_mu; ++i) {
    stage.sindy[i].parameter = params[i];
    stage.sindy[i].coefficients = Matrix(nz + 1, nz);
    for (double& v : stage.sindy[i].coefficients.entries())
      require(detail::read_f64(f.get(), v), Errc::shape_error,
              path + ": truncated coefficients");
  }

  std::vector<Kernel> kernels;
  kernels.reserve(static_cast<std::size_t>(nz + 1) * nz);
  for (int c = 0; c < (nz + 1) * nz; ++c) {
    unsigned char kind = 0, degenerate = 0;
    Kernel k;
    require(detail::read_bytes(f.get(), &kind, 1) &&
                detail::read_bytes(f.get(), &degenerate, 1) &&
                detail::read_f64(f.get(), k.amplitude) &&
                detail::read_f64(f.get(), k.lengthscale) &&
                detail::read_f64(f.get(), k.noise),
            Errc::shape_error, path + ": truncated GP block");
    k.kind = kind == 0 ? KernelKind::rbf : KernelKind::matern15;
    k.degenerate = degenerate != 0;
    kernels.push_back(k);
  }
  stage.gp_field = GpCoefficientField::from_kernels(params, stage.sindy, kernels);
  return stage;
}

// ---------------------------------------------------------------------------
// Stack directory: stage_NNN.mlm files, per-stage loss CSVs, manifest.json.
// ---------------------------------------------------------------------------

inline std::string stage_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "stage_%03d.mlm", index + 1);
  return buf;
}

inline std::string loss_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "losses_stage_%03d.csv", index + 1);
  return buf;
}

inline void write_loss_csv(const std::vector<LossRecord>& history,
                           const std::string& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "w"));
  require(f != nullptr, Errc::io_error, "cannot open " + path + " for writing");
  std::fprintf(f.get(), "iteration,total,reconstruction,dynamics,coefficient_norm\n");
  for (const auto& r : history)
    std::fprintf(f.get(), "%d,%.17g,%.17g,%.17g,%.17g\n", r.iteration, r.total,
                 r.reconstruction, r.dynamics, r.coefficient_norm);
  detail::flush_and_sync(f.get(), path);
}

inline void save_stack(const StageStack& stack, const std::string& dir,
                       std::uint64_t seed,
                       const nlohmann::json& config_echo = nlohmann::json::object()) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, Errc::io_error, "cannot create directory " + dir);

  nlohmann::json manifest;
  manifest["format"] = "mlasdi-stack";
  manifest["version"] = 1;
  manifest["seed"] = seed;
  manifest["state_dim"] = stack.state_dim;
  manifest["time_grid"] = {{"t0", stack.times.front()},
                           {"dt", stack.times[1] - stack.times.front()},
                           {"count", stack.times.size()}};
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : stack.parameters) params.push_back(p.values);
  manifest["parameters"] = params;
  manifest["config"] = config_echo;

  nlohmann::json stages = nlohmann::json::array();
  for (int k = 0; k < stack.num_stages(); ++k) {
    const std::string model_file = stage_file_name(k);
    const std::string loss_file = loss_file_name(k);
    save_stage_model(stack.stages[k], (fs::path(dir) / model_file).string());
    write_loss_csv(stack.meta[k].loss_history, (fs::path(dir) / loss_file).string());
    nlohmann::json s;
    s["model_file"] = model_file;
    s["loss_file"] = loss_file;
    s["epsilon_prev"] = stack.stages[k].epsilon_prev;
    s["iterations"] = stack.meta[k].iterations;
    s["wall_seconds"] = stack.meta[k].wall_seconds;
    s["residual_norm_after"] = stack.meta[k].residual_norm_after;
    s["epsilon_after"] = stack.meta[k].epsilon_after;
    stages.push_back(s);
  }
  manifest["stages"] = stages;

  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::unique_ptr<std::FILE, detail::FileCloser> f(
      std::fopen(manifest_path.c_str(), "w"));
  require(f != nullptr, Errc::io_error, "cannot open " + manifest_path + " for writing");
  const std::string text = manifest.dump(2);
  detail::write_bytes(f.get(), text.data(), text.size());
  detail::write_bytes(f.get(), "\n", 1);
  detail::flush_and_sync(f.get(), manifest_path);
}

inline StageStack load_stack(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(manifest_path.c_str(), "rb"));
  require(f != nullptr, Errc::io_error, "cannot open " + manifest_path);
  std::string text;
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f.get())) > 0) text.append(buf, got);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::format_error, manifest_path + ": " + e.what());
  }
  require(manifest.value("format", "") == "mlasdi-stack", Errc::format_error,
          manifest_path + ": not a stack manifest");

  StageStack stack;
  stack.state_dim = manifest.at("state_dim").get<int>();
  const auto& grid = manifest.at("time_grid");
  const double t0 = grid.at("t0").get<double>();
  const double dt = grid.at("dt").get<double>();
  const auto count = grid.at("count").get<std::size_t>();
  stack.times.resize(count);
  for (std::size_t i = 0; i < count; ++i) stack.times[i] = t0 + dt * i;
  for (const auto& p : manifest.at("parameters"))
    stack.parameters.push_back({p.get<std::vector<double>>()});

  for (const auto& s : manifest.at("stages")) {
    StageModel stage =
        load_stage_model((fs::path(dir) / s.at("model_file").get<std::string>()).string());
    stage.epsilon_prev = s.at("epsilon_prev").get<double>();
    StageMeta meta;
    meta.iterations = s.value("iterations", 0);
    meta.wall_seconds = s.value("wall_seconds", 0.0);
    meta.residual_norm_after = s.value("residual_norm_after", 0.0);
    meta.epsilon_after = s.value("epsilon_after", 0.0);
    stack.stages.push_back(std::move(stage));
    stack.meta.push_back(std::move(meta));
  }
  require(!stack.stages.empty(), Errc::format_error, dir + ": stack has no stages");
  return stack;
}

// ---------------------------------------------------------------------------
// CSV exports
// ---------------------------------------------------------------------------

inline void write_error_report_csv(const ErrorReport& report, const std::string& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "w"));
  require(f != nullptr, Errc::io_error, "cannot open " + path + " for writing");
  const int dim = report.rows.empty() ? 0 : report.rows.front().parameter.dim();
  for (int d = 0; d < dim; ++d) std::fprintf(f.get(), d ? ",mu%d" : "mu%d", d);
  std::fprintf(f.get(), ",max_relative_error,std_score,is_training\n");
  for (const auto& r : report.rows) {
    for (int d = 0; d < dim; ++d)
      std::fprintf(f.get(), d ? ",%.17g" : "%.17g", r.parameter.values[d]);
    std::fprintf(f.get(), ",%.17g,%.17g,%d\n", r.max_relative, r.std_score,
                 r.is_training ? 1 : 0);
  }
  detail::flush_and_sync(f.get(), path);
}

inline void write_coefficients_csv(const StageStack& stack, const std::string& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "w"));
  require(f != nullptr, Errc::io_error, "cannot open " + path + " for writing");
  std::fprintf(f.get(), "stage,parameter_index,row,col,value\n");
  for (int k = 0; k < stack.num_stages(); ++k) {
    const auto& sindy = stack.stages[k].sindy;
    for (std::size_t p = 0; p < sindy.size(); ++p) {
      const Matrix& xi = sindy[p].coefficients;
      for (int r = 0; r < xi.rows(); ++r)
        for (int c = 0; c < xi.cols(); ++c)
          std::fprintf(f.get(), "%d,%zu,%d,%d,%.17g\n", k + 1, p, r, c, xi(r, c));
    }
  }
  detail::flush_and_sync(f.get(), path);
}

inline void write_gp_params_csv(const StageStack& stack, const std::string& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "w"));
  require(f != nullptr, Errc::io_error, "cannot open " + path + " for writing");
  std::fprintf(f.get(), "stage,row,col,kernel,amplitude,lengthscale,noise,degenerate\n");
  for (int k = 0; k < stack.num_stages(); ++k) {
    const int nz = stack.stages[k].latent_dim();
    for (int r = 0; r <= nz; ++r)
      for (int c = 0; c < nz; ++c) {
        const Kernel& kern = stack.stages[k].gp_field.kernel(r, c);
        std::fprintf(f.get(), "%d,%d,%d,%s,%.17g,%.17g,%.17g,%d\n", k + 1, r, c,
                     kernel_kind_name(kern.kind), kern.amplitude, kern.lengthscale,
                     kern.noise, kern.degenerate ? 1 : 0);
      }
  }
  detail::flush_and_sync(f.get(), path);
}

}  // namespace mlasdi
