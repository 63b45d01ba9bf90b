// Command-line front end: data generation, training, evaluation, export.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mlasdi/mlasdi.hpp"

namespace fs = std::filesystem;
using namespace mlasdi;

namespace {

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::config_error:
    case Errc::invalid_grid:
    case Errc::unknown_export:
      return 2;
    case Errc::io_error:
    case Errc::format_error:
    case Errc::shape_error:
    case Errc::non_uniform_time_grid:
    case Errc::invalid_tensor:
      return 4;
    default:
      return 3;  // numeric failure
  }
}

SnapshotTensor toy_from_config(const DatasetConfig& ds, bool test_split) {
  return generate_toy(test_split ? ds.amplitudes_test : ds.amplitudes_train, ds.nx,
                      ds.nt);
}

void cmd_generate(const RunConfig& cfg, const std::string& out_dir) {
  require(cfg.dataset.kind == DatasetConfig::Kind::toy, Errc::config_error,
          "generate needs a toy dataset section; file datasets are produced elsewhere");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, Errc::io_error, "cannot create output directory " + out_dir);

  const SnapshotTensor train = toy_from_config(cfg.dataset, false);
  const SnapshotTensor test = toy_from_config(cfg.dataset, true);
  const std::string train_path = (fs::path(out_dir) / "train.mlsd").string();
  const std::string test_path = (fs::path(out_dir) / "test.mlsd").string();
  save_snapshots(train, train_path);
  save_snapshots(test, test_path);

  nlohmann::json manifest;
  manifest["format"] = "mlasdi-dataset";
  manifest["train_file"] = "train.mlsd";
  manifest["test_file"] = "test.mlsd";
  manifest["config"] = config_to_json(cfg);
  const std::string mpath = (fs::path(out_dir) / "dataset.json").string();
  std::FILE* f = std::fopen(mpath.c_str(), "w");
  require(f != nullptr, Errc::io_error, "cannot write " + mpath);
  const std::string text = manifest.dump(2) + "\n";
  std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);

  std::printf("wrote %s (%d x %d x %d)\n", train_path.c_str(), train.num_parameters(),
              train.num_times(), train.state_dim());
  std::printf("wrote %s (%d x %d x %d)\n", test_path.c_str(), test.num_parameters(),
              test.num_times(), test.state_dim());
}

SnapshotTensor training_tensor(const RunConfig& cfg, const std::string& data_override) {
  if (!data_override.empty()) return load_snapshots(data_override);
  if (cfg.dataset.kind == DatasetConfig::Kind::file) {
    require(fs::exists(cfg.dataset.train_file), Errc::io_error,
            "training data file not found: " + cfg.dataset.train_file);
    return load_snapshots(cfg.dataset.train_file);
  }
  return toy_from_config(cfg.dataset, false);
}

void cmd_train(const RunConfig& cfg, const std::string& out_dir, std::uint64_t seed,
               const std::string& data_override) {
  const SnapshotTensor data = training_tensor(cfg, data_override);
  std::printf("training data: %d parameters x %d times x %d states\n",
              data.num_parameters(), data.num_times(), data.state_dim());
  const StageStack stack = train_multistage(data, cfg.stages, cfg.gp, seed);
  save_stack(stack, out_dir, seed, config_to_json(cfg));
  double total = 0.0;
  for (int k = 0; k < stack.num_stages(); ++k) {
    const auto& meta = stack.meta[k];
    const auto& last = meta.loss_history.back();
    std::printf(
        "stage %d: %d iterations in %.2f s | loss %.4e (recon %.4e, dyn %.4e) | "
        "residual norm %.4e, epsilon %.4e\n",
        k + 1, meta.iterations, meta.wall_seconds, last.total, last.reconstruction,
        last.dynamics, meta.residual_norm_after, meta.epsilon_after);
    total += meta.wall_seconds;
  }
  std::printf("total training time %.2f s; stack written to %s\n", total,
              out_dir.c_str());
}

bool grids_match(const StageStack& stack, const SnapshotTensor& data) {
  if (static_cast<std::size_t>(data.num_times()) != stack.times.size()) return false;
  const double dt = stack.dt();
  return std::abs(data.dt() - dt) <= 1e-9 * dt &&
         std::abs(data.t0() - stack.times.front()) <= 1e-9 * std::max(1.0, std::abs(dt));
}

bool is_training_parameter(const StageStack& stack, const ParameterPoint& p) {
  for (const auto& q : stack.parameters)
    if (q == p) return true;
  return false;
}

void cmd_evaluate(const RunConfig& cfg, const std::string& stack_dir,
                  const std::string& data_path, const std::string& out_dir,
                  std::uint64_t seed) {
  const StageStack stack = load_stack(stack_dir);
  const SnapshotTensor data = load_snapshots(data_path);
  require(data.state_dim() == stack.state_dim, Errc::dimension_mismatch,
          "data state dimension does not match the stack");
  require(grids_match(stack, data), Errc::dimension_mismatch,
          "data time grid does not match the stack's training grid");

  ErrorReport report;
  const int n_samples = cfg.prediction.n_samples;
  for (int i = 0; i < data.num_parameters(); ++i) {
    ErrorReportRow row;
    row.parameter = data.parameters()[i];
    row.is_training = is_training_parameter(stack, row.parameter);
    try {
      const Prediction pred = predict(stack, row.parameter, data.initial_condition(i),
                                      n_samples, derive_seed(seed, i));
      row.max_relative = max_relative_error(data.trajectory(i), pred.mean_trajectory);
      row.std_score = n_samples > 0 ? prediction_std_summary(pred)
                                    : std::numeric_limits<double>::quiet_NaN();
    } catch (const Error& e) {
      if (e.code() != Errc::non_finite_state) throw;
      std::fprintf(stderr, "[mlasdi] parameter %d: %s; recording infinite error\n", i,
                   e.what());
      row.max_relative = std::numeric_limits<double>::infinity();
      row.std_score = std::numeric_limits<double>::infinity();
    }
    report.rows.push_back(std::move(row));
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, Errc::io_error, "cannot create output directory " + out_dir);
  const std::string csv_path = (fs::path(out_dir) / "errors.csv").string();
  write_error_report_csv(report, csv_path);
  std::printf("evaluated %zu parameters: max %.4e, p90 %.4e, p75 %.4e -> %s\n",
              report.rows.size(), report.max_error(), report.p90_error(),
              report.p75_error(), csv_path.c_str());
}

void export_losses(const std::string& stack_dir, const std::string& out_path) {
  // merge the per-stage loss CSVs with a stage column
  const StageStack stack = load_stack(stack_dir);
  std::FILE* out = std::fopen(out_path.c_str(), "w");
  require(out != nullptr, Errc::io_error, "cannot open " + out_path + " for writing");
  std::fprintf(out, "stage,iteration,total,reconstruction,dynamics,coefficient_norm\n");
  for (int k = 0; k < stack.num_stages(); ++k) {
    const std::string path =
        (fs::path(stack_dir) / loss_file_name(k)).string();
    std::FILE* in = std::fopen(path.c_str(), "r");
    require(in != nullptr, Errc::io_error, "cannot open " + path);
    char line[512];
    bool header = true;
    while (std::fgets(line, sizeof line, in)) {
      if (header) {
        header = false;
        continue;
      }
      std::fprintf(out, "%d,%s", k + 1, line);
    }
    std::fclose(in);
  }
  std::fclose(out);
}

void cmd_export(const std::string& stack_dir, const std::string& what,
                const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, Errc::io_error, "cannot create output directory " + out_dir);
  const std::string out_path = (fs::path(out_dir) / (what + ".csv")).string();
  if (what == "coefficients") {
    write_coefficients_csv(load_stack(stack_dir), out_path);
  } else if (what == "gp_params") {
    write_gp_params_csv(load_stack(stack_dir), out_path);
  } else if (what == "losses") {
    export_losses(stack_dir, out_path);
  } else {
    fail(Errc::unknown_export,
         "unknown export '" + what + "' (coefficients, gp_params, losses)");
  }
  std::printf("wrote %s\n", out_path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-stage latent space dynamics identification"};
  app.require_subcommand(1);

  std::string config_path, out_dir, stack_dir, data_path, what;
  std::optional<std::uint64_t> seed_flag;

  auto* gen = app.add_subcommand("generate", "generate toy snapshot files");
  gen->add_option("--config", config_path, "run config file")->required();
  gen->add_option("--out", out_dir, "output directory (default: config output dir)");

  auto* train = app.add_subcommand("train", "train a stage stack");
  train->add_option("--config", config_path, "run config file")->required();
  train->add_option("--out", out_dir, "output directory (default: config output dir)");
  train->add_option("--seed", seed_flag, "seed override");
  train->add_option("--data", data_path, "training snapshot file override");

  auto* eval = app.add_subcommand("evaluate", "evaluate a stack against data");
  eval->add_option("--config", config_path, "run config file")->required();
  eval->add_option("--stack", stack_dir, "stack directory")->required();
  eval->add_option("--data", data_path, "snapshot file to evaluate")->required();
  eval->add_option("--out", out_dir, "output directory (default: config output dir)");
  eval->add_option("--seed", seed_flag, "seed override");

  auto* exp = app.add_subcommand("export", "export stack artifacts as CSV");
  exp->add_option("--stack", stack_dir, "stack directory")->required();
  exp->add_option("--what", what, "coefficients | gp_params | losses")->required();
  exp->add_option("--out", out_dir, "output directory (default: stack directory)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (exp->parsed()) {
      cmd_export(stack_dir, what, out_dir.empty() ? stack_dir : out_dir);
      return 0;
    }
    const RunConfig cfg = parse_run_config(config_path);
    const std::string out = out_dir.empty() ? cfg.output_dir : out_dir;
    const std::uint64_t seed = seed_flag.value_or(cfg.prediction.seed);
    if (gen->parsed()) {
      cmd_generate(cfg, out);
    } else if (train->parsed()) {
      cmd_train(cfg, out, seed, data_path);
    } else if (eval->parsed()) {
      cmd_evaluate(cfg, stack_dir, data_path, out, seed);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
