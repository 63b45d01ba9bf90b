#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#ifdef __unix__
#include <unistd.h>
#endif

#include "mlasdi/errors.hpp"
#include "mlasdi/matrix.hpp"

namespace mlasdi {

// One point in parameter space (mu in R^N).
struct ParameterPoint {
  std::vector<double> values;

  int dim() const { return static_cast<int>(values.size()); }

  bool operator==(const ParameterPoint& o) const { return values == o.values; }
};

// Training/testing tensor U: n_params x (N_t+1) x N_u, stored parameter-major
// row-major. Time grid is uniform; non-uniform grids are rejected on
// construction instead of resampled.
class SnapshotTensor {
 public:
  SnapshotTensor() = default;

  SnapshotTensor(std::vector<ParameterPoint> parameters, std::vector<double> times,
                 int state_dim, std::vector<double> values)
      : parameters_(std::move(parameters)),
        times_(std::move(times)),
        state_dim_(state_dim),
        values_(std::move(values)) {
    validate();
  }

  int num_parameters() const { return static_cast<int>(parameters_.size()); }
  int num_times() const { return static_cast<int>(times_.size()); }
  int state_dim() const { return state_dim_; }
  int parameter_dim() const { return parameters_.empty() ? 0 : parameters_[0].dim(); }

  const std::vector<ParameterPoint>& parameters() const { return parameters_; }
  const std::vector<double>& times() const { return times_; }
  double t0() const { return times_.front(); }
  double dt() const { return times_.size() > 1 ? times_[1] - times_[0] : 0.0; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  double at(int param, int time, int state) const {
    return values_[offset(param, time, state)];
  }
  double& at(int param, int time, int state) {
    return values_[offset(param, time, state)];
  }

  // All snapshots of one parameter as a (N_t+1) x N_u matrix.
  Matrix trajectory(int param) const {
    Matrix out(num_times(), state_dim_);
    std::memcpy(out.data(), values_.data() + offset(param, 0, 0),
                sizeof(double) * out.size());
    return out;
  }

  // Every snapshot of every parameter stacked parameter-major:
  // (n_params*(N_t+1)) x N_u.
  Matrix all_snapshots() const {
    Matrix out(num_parameters() * num_times(), state_dim_);
    std::memcpy(out.data(), values_.data(), sizeof(double) * values_.size());
    return out;
  }

  // Initial snapshot u(t0) for one parameter as a 1 x N_u matrix.
  Matrix initial_condition(int param) const {
    Matrix out(1, state_dim_);
    std::memcpy(out.data(), values_.data() + offset(param, 0, 0),
                sizeof(double) * static_cast<std::size_t>(state_dim_));
    return out;
  }

 private:
  std::size_t offset(int param, int time, int state) const {
    return (static_cast<std::size_t>(param) * num_times() + time) * state_dim_ + state;
  }

  void validate() const {
    require(!parameters_.empty(), Errc::invalid_tensor, "tensor has no parameters");
    require(state_dim_ >= 1, Errc::invalid_tensor, "state dimension must be >= 1");
    require(times_.size() >= 2, Errc::invalid_tensor, "need at least two time samples");
    const int n = parameters_[0].dim();
    require(n >= 1, Errc::invalid_tensor, "parameter dimension must be >= 1");
    for (const auto& p : parameters_)
      require(p.dim() == n, Errc::invalid_tensor, "inconsistent parameter dimensions");
    for (std::size_t i = 0; i < parameters_.size(); ++i)
      for (std::size_t j = i + 1; j < parameters_.size(); ++j)
        require(!(parameters_[i] == parameters_[j]), Errc::invalid_tensor,
                "parameters must be pairwise distinct");
    const double dt = times_[1] - times_[0];
    require(dt > 0.0, Errc::non_uniform_time_grid, "time grid must be increasing");
    for (std::size_t i = 0; i + 1 < times_.size(); ++i)
      require(std::abs(times_[i + 1] - times_[i] - dt) <= 1e-12 * dt,
              Errc::non_uniform_time_grid, "time grid is not uniform");
    require(values_.size() == parameters_.size() * times_.size() *
                                  static_cast<std::size_t>(state_dim_),
            Errc::invalid_tensor, "value count does not match dimensions");
    for (double v : values_)
      require(std::isfinite(v), Errc::invalid_tensor, "tensor contains non-finite values");
  }

  std::vector<ParameterPoint> parameters_;
  std::vector<double> times_;
  int state_dim_ = 0;
  std::vector<double> values_;
};

struct DatasetSplit {
  SnapshotTensor train;
  SnapshotTensor test;
};

inline std::vector<double> uniform_grid(double lo, double hi, int n) {
  std::vector<double> g(n);
  const double step = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) g[i] = lo + step * i;
  g.back() = hi;
  return g;
}

// Multiscale oscillating field: a slow traveling sine plus a small
// frequency-modulated cosine, enveloped by exp(-x^2). The amplitude is the
// single input parameter.
inline double toy_field(double x, double t, double amplitude) {
  return amplitude *
         (std::sin(2.0 * x - t) + 0.1 * std::cos((40.0 * x + 2.0 * t) * std::sin(t))) *
         std::exp(-x * x);
}

// Sample the toy field on nx points over [-3, 3] and nt points over [0, 2*pi],
// one trajectory per amplitude.
inline SnapshotTensor generate_toy(const std::vector<double>& amplitudes, int nx, int nt) {
  require(nx >= 2 && nt >= 2, Errc::invalid_grid, "toy grid needs nx >= 2 and nt >= 2");
  require(!amplitudes.empty(), Errc::invalid_grid, "need at least one amplitude");
  const std::vector<double> xs = uniform_grid(-3.0, 3.0, nx);
  const std::vector<double> ts = uniform_grid(0.0, 2.0 * std::numbers::pi, nt);
  std::vector<ParameterPoint> params;
  params.reserve(amplitudes.size());
  for (double a : amplitudes) params.push_back({{a}});
  std::vector<double> values;
  values.reserve(amplitudes.size() * ts.size() * xs.size());
  for (double a : amplitudes)
    for (double t : ts)
      for (double x : xs) values.push_back(toy_field(x, t, a));
  return SnapshotTensor(std::move(params), ts, nx, std::move(values));
}

// Per-state-entry mean plus one global scale (population standard deviation
// of the centered data; 1 when the data is constant).
struct CenterScale {
  std::vector<double> mean;
  double scale = 1.0;
};

inline CenterScale center_scale_stats(const SnapshotTensor& tensor) {
  const int nu = tensor.state_dim();
  const std::size_t rows = tensor.values().size() / nu;
  CenterScale cs;
  cs.mean.assign(nu, 0.0);
  const auto& v = tensor.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (int s = 0; s < nu; ++s) cs.mean[s] += v[r * nu + s];
  for (int s = 0; s < nu; ++s) cs.mean[s] /= static_cast<double>(rows);
  double ss = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (int s = 0; s < nu; ++s) {
      const double d = v[r * nu + s] - cs.mean[s];
      ss += d * d;
    }
  const double var = ss / static_cast<double>(v.size());
  cs.scale = var > 0.0 ? std::sqrt(var) : 1.0;
  return cs;
}

// ---------------------------------------------------------------------------
// MLSD snapshot file format (little-endian):
//   bytes 0-3  magic "MLSD"
//   byte  4    version (1)
//   u32 n_params, u32 n_times, u32 state_dim, u32 param_dim
//   f64 t0, f64 dt
//   n_params * param_dim   f64 parameter coordinates (row-major)
//   n_params * n_times * state_dim  f64 payload (row-major, parameter-major)
// ---------------------------------------------------------------------------

namespace detail {

constexpr char kMlsdMagic[4] = {'M', 'L', 'S', 'D'};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

inline void write_bytes(std::FILE* f, const void* p, std::size_t n) {
  require(std::fwrite(p, 1, n, f) == n, Errc::io_error, "short write");
}

inline void write_u32(std::FILE* f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  write_bytes(f, b, 4);
}

inline void write_f64(std::FILE* f, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  write_bytes(f, b, 8);
}

inline bool read_bytes(std::FILE* f, void* p, std::size_t n) {
  return std::fread(p, 1, n, f) == n;
}

inline bool read_u32(std::FILE* f, std::uint32_t& v) {
  unsigned char b[4];
  if (!read_bytes(f, b, 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

inline bool read_f64(std::FILE* f, double& v) {
  unsigned char b[8];
  if (!read_bytes(f, b, 8)) return false;
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  std::memcpy(&v, &bits, 8);
  return true;
}

inline void flush_and_sync(std::FILE* f, const std::string& path) {
  require(std::fflush(f) == 0, Errc::io_error, "flush failed for " + path);
#ifdef __unix__
  require(::fsync(fileno(f)) == 0, Errc::io_error, "fsync failed for " + path);
#endif
}

}  // namespace detail

inline void save_snapshots(const SnapshotTensor& tensor, const std::string& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "wb"));
  require(f != nullptr, Errc::io_error, "cannot open " + path + " for writing");
  detail::write_bytes(f.get(), detail::kMlsdMagic, 4);
  const unsigned char version = 1;
  detail::write_bytes(f.get(), &version, 1);
  detail::write_u32(f.get(), static_cast<std::uint32_t>(tensor.num_parameters()));
  detail::write_u32(f.get(), static_cast<std::uint32_t>(tensor.num_times()));
  detail::write_u32(f.get(), static_cast<std::uint32_t>(tensor.state_dim()));
  detail::write_u32(f.get(), static_cast<std::uint32_t>(tensor.parameter_dim()));
  detail::write_f64(f.get(), tensor.t0());
  detail::write_f64(f.get(), tensor.dt());
  for (const auto& p : tensor.parameters())
    for (double v : p.values) detail::write_f64(f.get(), v);
  for (double v : tensor.values()) detail::write_f64(f.get(), v);
  detail::flush_and_sync(f.get(), path);
}

inline SnapshotTensor load_snapshots(const std::string& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "rb"));
  require(f != nullptr, Errc::io_error, "cannot open " + path);
  char magic[4];
  require(detail::read_bytes(f.get(), magic, 4), Errc::format_error,
          path + ": too short for magic");
  require(std::memcmp(magic, detail::kMlsdMagic, 4) == 0, Errc::format_error,
          path + ": bad magic, not an MLSD file");
  unsigned char version = 0;
  require(detail::read_bytes(f.get(), &version, 1) && version == 1, Errc::format_error,
          path + ": unsupported MLSD version");
  std::uint32_t n_params, n_times, state_dim, param_dim;
  require(detail::read_u32(f.get(), n_params) && detail::read_u32(f.get(), n_times) &&
              detail::read_u32(f.get(), state_dim) && detail::read_u32(f.get(), param_dim),
          Errc::format_error, path + ": truncated header");
  double t0, dt;
  require(detail::read_f64(f.get(), t0) && detail::read_f64(f.get(), dt),
          Errc::format_error, path + ": truncated header");
  require(dt > 0.0 && std::isfinite(dt) && std::isfinite(t0), Errc::non_uniform_time_grid,
          path + ": invalid time step");
  std::vector<ParameterPoint> params(n_params);
  for (auto& p : params) {
    p.values.resize(param_dim);
    for (double& v : p.values)
      require(detail::read_f64(f.get(), v), Errc::shape_error,
              path + ": truncated parameter block");
  }
  const std::size_t count = static_cast<std::size_t>(n_params) * n_times * state_dim;
  std::vector<double> values(count);
  for (double& v : values)
    require(detail::read_f64(f.get(), v), Errc::shape_error, path + ": truncated payload");
  char extra;
  require(std::fread(&extra, 1, 1, f.get()) == 0, Errc::shape_error,
          path + ": trailing bytes after payload");
  std::vector<double> times(n_times);
  for (std::uint32_t i = 0; i < n_times; ++i) times[i] = t0 + dt * i;
  try {
    return SnapshotTensor(std::move(params), std::move(times),
                          static_cast<int>(state_dim), std::move(values));
  } catch (const Error& e) {
    // Structural problems in a file are shape errors to the caller.
    if (e.code() == Errc::invalid_tensor) fail(Errc::shape_error, path + ": " + e.what());
    throw;
  }
}

// CSV dump for plotting: one row per (parameter, time), one column per state
// entry, parameter coordinates and time up front.
inline void snapshots_to_csv(const SnapshotTensor& tensor, const std::string& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "w"));
  require(f != nullptr, Errc::io_error, "cannot open " + path + " for writing");
  std::fprintf(f.get(), "param_index");
  for (int d = 0; d < tensor.parameter_dim(); ++d) std::fprintf(f.get(), ",mu%d", d);
  std::fprintf(f.get(), ",time");
  for (int s = 0; s < tensor.state_dim(); ++s) std::fprintf(f.get(), ",u%d", s);
  std::fprintf(f.get(), "\n");
  for (int p = 0; p < tensor.num_parameters(); ++p)
    for (int t = 0; t < tensor.num_times(); ++t) {
      std::fprintf(f.get(), "%d", p);
      for (double v : tensor.parameters()[p].values) std::fprintf(f.get(), ",%.17g", v);
      std::fprintf(f.get(), ",%.17g", tensor.times()[t]);
      for (int s = 0; s < tensor.state_dim(); ++s)
        std::fprintf(f.get(), ",%.17g", tensor.at(p, t, s));
      std::fprintf(f.get(), "\n");
    }
  detail::flush_and_sync(f.get(), path);
}

}  // namespace mlasdi
