#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlasdi/autoencoder.hpp"
#include "mlasdi/errors.hpp"
#include "mlasdi/gp.hpp"
#include "mlasdi/rom.hpp"

namespace mlasdi {

// ---------------------------------------------------------------------------
// Run configuration, parsed from an INI-style text file:
//
//   [dataset]
//   kind = toy                # toy | file
//   amplitudes_train = 1.0, 1.4
//   amplitudes_test  = 1.2
//   nx = 600
//   nt = 201
//   # kind = file instead uses: train_file = ..., test_file = ...
//
//   [stage]                   # repeat one section per stage, in order
//   architecture = 600-100-5
//   activation = tanh         # tanh | softplus
//   iterations = 10000
//   learning_rate = 1e-3
//   beta1 = 0.1               # latent-dynamics weight
//   beta2 = 1e-3              # coefficient penalty weight
//   # substeps = 1            # optional RK4 substeps per time step
//
//   [gp]
//   kernel = rbf              # rbf | matern15
//   # noise = 1e-8            # optional absolute sigma^2 override
//
//   [prediction]
//   n_samples = 50
//   seed = 1
//
//   [output]
//   dir = out/toy
//
// learning_rate, beta1 and beta2 are deliberately required: they change
// between stages and silently defaulting them would hide that.
// ---------------------------------------------------------------------------

struct DatasetConfig {
  enum class Kind { toy, file };
  Kind kind = Kind::toy;
  std::vector<double> amplitudes_train;
  std::vector<double> amplitudes_test;
  int nx = 0;
  int nt = 0;
  std::string train_file;
  std::string test_file;
};

struct PredictionConfig {
  int n_samples = 0;
  std::uint64_t seed = 0;
};

struct RunConfig {
  DatasetConfig dataset;
  std::vector<StageConfig> stages;
  GpConfig gp;
  PredictionConfig prediction;
  std::string output_dir;
};

namespace detail {

struct IniEntry {
  std::string key;
  std::string value;
  int line = 0;
  bool used = false;
};

struct IniSection {
  std::string name;
  int line = 0;
  std::vector<IniEntry> entries;

  const IniEntry* find(const std::string& key) const {
    for (const auto& e : entries)
      if (e.key == key) return &e;
    return nullptr;
  }
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<IniSection> parse_ini(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_error, "cannot open config file " + path);
  std::vector<IniSection> sections;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      require(t.back() == ']', Errc::config_error,
              path + ":" + std::to_string(lineno) + ": unterminated section header");
      sections.push_back({trim(t.substr(1, t.size() - 2)), lineno, {}});
      continue;
    }
    const auto eq = t.find('=');
    require(eq != std::string::npos, Errc::config_error,
            path + ":" + std::to_string(lineno) + ": expected key = value");
    require(!sections.empty(), Errc::config_error,
            path + ":" + std::to_string(lineno) + ": key outside any [section]");
    sections.back().entries.push_back(
        {trim(t.substr(0, eq)), trim(t.substr(eq + 1)), lineno, false});
  }
  return sections;
}

class SectionReader {
 public:
  SectionReader(const std::string& path, IniSection& section)
      : path_(path), section_(section) {}

  std::string where(const IniEntry& e) const {
    return path_ + ":" + std::to_string(e.line) + ": [" + section_.name + "] " + e.key;
  }

  const IniEntry* optional(const std::string& key) {
    for (auto& e : section_.entries)
      if (e.key == key) {
        e.used = true;
        return &e;
      }
    return nullptr;
  }

  const IniEntry& required(const std::string& key) {
    const IniEntry* e = optional(key);
    require(e != nullptr, Errc::config_error,
            path_ + ": [" + section_.name + "] (line " + std::to_string(section_.line) +
                ") is missing required key '" + key + "'");
    return *e;
  }

  std::string required_string(const std::string& key) { return required(key).value; }

  double required_double(const std::string& key) {
    return to_double(required(key));
  }

  int required_int(const std::string& key) { return to_int(required(key)); }

  std::optional<double> optional_double(const std::string& key) {
    const IniEntry* e = optional(key);
    if (!e) return std::nullopt;
    return to_double(*e);
  }

  std::optional<int> optional_int(const std::string& key) {
    const IniEntry* e = optional(key);
    if (!e) return std::nullopt;
    return to_int(*e);
  }

  std::optional<std::string> optional_string(const std::string& key) {
    const IniEntry* e = optional(key);
    if (!e) return std::nullopt;
    return e->value;
  }

  std::vector<double> required_double_list(const std::string& key) {
    const IniEntry& e = required(key);
    std::vector<double> out;
    std::stringstream ss(e.value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      require(!item.empty(), Errc::config_error, where(e) + ": empty list element");
      out.push_back(to_double_value(item, e));
    }
    require(!out.empty(), Errc::config_error, where(e) + ": empty list");
    return out;
  }

  std::vector<int> required_architecture(const std::string& key) {
    const IniEntry& e = required(key);
    std::vector<int> dims;
    std::stringstream ss(e.value);
    std::string item;
    while (std::getline(ss, item, '-')) {
      item = trim(item);
      const int v = static_cast<int>(to_double_value(item, e));
      require(v >= 1, Errc::config_error, where(e) + ": layer sizes must be >= 1");
      dims.push_back(v);
    }
    require(dims.size() >= 2, Errc::config_error,
            where(e) + ": architecture needs at least two layer sizes (e.g. 600-100-5)");
    return dims;
  }

  void reject_unknown() const {
    for (const auto& e : section_.entries)
      require(e.used, Errc::config_error, where(e) + ": unknown key");
  }

 private:
  double to_double_value(const std::string& text, const IniEntry& e) const {
    try {
      std::size_t pos = 0;
      const double v = std::stod(text, &pos);
      require(pos == text.size(), Errc::config_error, where(e) + ": trailing characters");
      return v;
    } catch (const std::exception&) {
      fail(Errc::config_error, where(e) + ": cannot parse number '" + text + "'");
    }
  }

  double to_double(const IniEntry& e) const { return to_double_value(e.value, e); }

  int to_int(const IniEntry& e) const {
    const double v = to_double(e);
    require(v == static_cast<long long>(v), Errc::config_error,
            where(e) + ": expected an integer");
    return static_cast<int>(v);
  }

  const std::string& path_;
  IniSection& section_;
};

}  // namespace detail

inline RunConfig parse_run_config(const std::string& path) {
  auto sections = detail::parse_ini(path);
  RunConfig cfg;
  bool saw_dataset = false, saw_prediction = false, saw_output = false;

  for (auto& section : sections) {
    detail::SectionReader r(path, section);
    if (section.name == "dataset") {
      require(!saw_dataset, Errc::config_error, path + ": duplicate [dataset] section");
      saw_dataset = true;
      const std::string kind = r.required_string("kind");
      if (kind == "toy") {
        cfg.dataset.kind = DatasetConfig::Kind::toy;
        cfg.dataset.amplitudes_train = r.required_double_list("amplitudes_train");
        cfg.dataset.amplitudes_test = r.required_double_list("amplitudes_test");
        cfg.dataset.nx = r.required_int("nx");
        cfg.dataset.nt = r.required_int("nt");
      } else if (kind == "file") {
        cfg.dataset.kind = DatasetConfig::Kind::file;
        cfg.dataset.train_file = r.required_string("train_file");
        cfg.dataset.test_file = r.optional_string("test_file").value_or("");
      } else {
        fail(Errc::config_error,
             path + ": [dataset] kind must be 'toy' or 'file', got '" + kind + "'");
      }
      r.reject_unknown();
    } else if (section.name == "stage") {
      StageConfig sc;
      sc.architecture = r.required_architecture("architecture");
      sc.activation = activation_from_string(r.required_string("activation"));
      sc.iterations = r.required_int("iterations");
      require(sc.iterations >= 0, Errc::config_error,
              path + ": [stage] iterations must be >= 0");
      sc.learning_rate = r.required_double("learning_rate");
      sc.beta_di = r.required_double("beta1");
      sc.beta_ridge = r.required_double("beta2");
      sc.rollout_substeps = r.optional_int("substeps").value_or(1);
      r.reject_unknown();
      cfg.stages.push_back(std::move(sc));
    } else if (section.name == "gp") {
      cfg.gp.kind = kernel_kind_from_string(r.optional_string("kernel").value_or("rbf"));
      cfg.gp.noise_override = r.optional_double("noise");
      r.reject_unknown();
    } else if (section.name == "prediction") {
      saw_prediction = true;
      cfg.prediction.n_samples = r.required_int("n_samples");
      require(cfg.prediction.n_samples >= 0, Errc::config_error,
              path + ": [prediction] n_samples must be >= 0");
      const auto seed = r.optional_int("seed");
      cfg.prediction.seed = static_cast<std::uint64_t>(seed.value_or(0));
      r.reject_unknown();
    } else if (section.name == "output") {
      saw_output = true;
      cfg.output_dir = r.required_string("dir");
      r.reject_unknown();
    } else {
      fail(Errc::config_error, path + ":" + std::to_string(section.line) +
                                   ": unknown section [" + section.name + "]");
    }
  }

  require(saw_dataset, Errc::config_error, path + ": missing [dataset] section");
  require(!cfg.stages.empty(), Errc::config_error,
          path + ": need at least one [stage] section");
  require(saw_prediction, Errc::config_error, path + ": missing [prediction] section");
  require(saw_output, Errc::config_error, path + ": missing [output] section");
  return cfg;
}

// JSON rendering of the resolved config, embedded in the run manifest.
inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  if (cfg.dataset.kind == DatasetConfig::Kind::toy) {
    j["dataset"] = {{"kind", "toy"},
                    {"amplitudes_train", cfg.dataset.amplitudes_train},
                    {"amplitudes_test", cfg.dataset.amplitudes_test},
                    {"nx", cfg.dataset.nx},
                    {"nt", cfg.dataset.nt}};
  } else {
    j["dataset"] = {{"kind", "file"},
                    {"train_file", cfg.dataset.train_file},
                    {"test_file", cfg.dataset.test_file}};
  }
  j["stages"] = nlohmann::json::array();
  for (const auto& s : cfg.stages) {
    std::string arch;
    for (std::size_t i = 0; i < s.architecture.size(); ++i)
      arch += (i ? "-" : "") + std::to_string(s.architecture[i]);
    j["stages"].push_back({{"architecture", arch},
                           {"activation", activation_name(s.activation)},
                           {"iterations", s.iterations},
                           {"learning_rate", s.learning_rate},
                           {"beta1", s.beta_di},
                           {"beta2", s.beta_ridge},
                           {"substeps", s.rollout_substeps}});
  }
  j["gp"] = {{"kernel", kernel_kind_name(cfg.gp.kind)}};
  if (cfg.gp.noise_override) j["gp"]["noise"] = *cfg.gp.noise_override;
  j["prediction"] = {{"n_samples", cfg.prediction.n_samples},
                     {"seed", cfg.prediction.seed}};
  j["output"] = {{"dir", cfg.output_dir}};
  return j;
}

}  // namespace mlasdi
