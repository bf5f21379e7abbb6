#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pfw/core.hpp"
#include "pfw/fourier.hpp"
#include "pfw/residual.hpp"
#include "pfw/spectral.hpp"
#include "pfw/train.hpp"

namespace pfw::config {

using nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const json& j, const std::string& path,
                                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed)
      if (item.key() == key) {
        known = true;
        break;
      }
    if (!known) throw ConfigError(path + "." + item.key() + ": unknown key");
  }
}

template <typename T>
T require(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ConfigError(path + "." + key + ": missing required key");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + "." + key + ": wrong type (" + e.what() + ")");
  }
}

template <typename T>
T get_or(const json& j, const std::string& path, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + "." + key + ": wrong type (" + e.what() + ")");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sections
// ---------------------------------------------------------------------------

/// Initial-profile presets covering the shipped benchmarks.
///   quadratic-cosine   x^2 cos(pi x)                      (1D)
///   quadratic-sine     x^2 sin(2 pi x)                    (1D)
///   negative-cosine    -cos(2 pi x)                       (1D)
///   product-waves      sin(2 pi x) cos(2 pi y)            (2D)
///   tanh-particle      tanh((radius - |x - c|) / width)   (any dim)
///   two-particle       max over centers of tanh profiles  (any dim)
struct InitialConditionConfig {
  std::string preset;
  double radius = 0.0;
  double interface_width = 0.0;
  std::vector<std::array<double, 2>> centers;
};

struct NetworkConfig {
  std::vector<int> hidden = {50, 50, 50};
  int fourier_modes = 5;
  bool skips = true;
  std::vector<int> hidden_potential = {20, 20, 20};
};

struct ReferenceConfig {
  std::array<int, 2> grid = {512, 1};
  double dt = 0.005;
  int save_every = 1;
};

struct SensorConfig {
  bool enabled = false;
  std::array<int, 2> nx = {0, 0};  // 0 = every grid node on that axis
  int nt = 0;                      // 0 = every saved time (unless `times` given)
  std::vector<double> times;
  double noise_level = 0.0;
};

struct RunConfig {
  std::string name = "run";
  Equation equation = Equation::kAllenCahn;
  int dimension = 1;
  std::array<double, 2> domain_lo = {-1.0, -1.0};
  std::array<double, 2> domain_hi = {1.0, 1.0};
  double mobility = 1.0;
  double lambda_sq = 1e-4;
  double t_end = 1.0;
  InitialConditionConfig initial;
  NetworkConfig network;
  train::TrainConfig training;
  ReferenceConfig reference;
  SensorConfig sensors;
  std::string output_dir = "out";

  Domain domain() const {
    Domain d;
    d.dim = dimension;
    d.lo = domain_lo;
    d.hi = domain_hi;
    d.validate();
    return d;
  }

  PdeSpec pde() const { return PdeSpec{equation, mobility, lambda_sq}; }

  spectral::Grid grid() const {
    spectral::Grid g;
    g.dim = dimension;
    g.n = {reference.grid[0], dimension == 2 ? reference.grid[1] : 1};
    g.domain = domain();
    g.validate();
    return g;
  }

  FourierConfig fourier() const {
    FourierConfig cfg;
    cfg.dim = dimension;
    for (int a = 0; a < dimension; ++a) {
      cfg.modes[a] = network.fourier_modes;
      cfg.period[a] = domain_hi[a] - domain_lo[a];
    }
    cfg.validate();
    return cfg;
  }

  spectral::SensorSpec sensor_spec() const {
    spectral::SensorSpec s;
    s.nx = sensors.nx;
    s.nt = sensors.nt;
    s.times = sensors.times;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Initial-condition factory
// ---------------------------------------------------------------------------

inline std::function<double(const std::array<double, 2>&)> make_initial_condition(
    const InitialConditionConfig& ic, int dim) {
  const auto need_1d = [&] {
    if (dim != 1) throw ConfigError("initial_condition.preset '" + ic.preset + "' is 1D only");
  };
  const auto need_profile = [&](std::size_t min_centers) {
    if (!(ic.radius > 0.0))
      throw ConfigError("initial_condition.radius must be positive for '" + ic.preset + "'");
    if (!(ic.interface_width > 0.0))
      throw ConfigError("initial_condition.interface_width must be positive for '" + ic.preset +
                        "'");
    if (ic.centers.size() < min_centers)
      throw ConfigError("initial_condition.centers: preset '" + ic.preset + "' needs at least " +
                        std::to_string(min_centers) + " center(s)");
  };
  const auto distance = [dim](const std::array<double, 2>& x, const std::array<double, 2>& c) {
    double acc = 0.0;
    for (int a = 0; a < dim; ++a) acc += (x[a] - c[a]) * (x[a] - c[a]);
    return std::sqrt(acc);
  };

  if (ic.preset == "quadratic-cosine") {
    need_1d();
    return [](const std::array<double, 2>& x) { return x[0] * x[0] * std::cos(kPi * x[0]); };
  }
  if (ic.preset == "quadratic-sine") {
    need_1d();
    return [](const std::array<double, 2>& x) { return x[0] * x[0] * std::sin(2.0 * kPi * x[0]); };
  }
  if (ic.preset == "negative-cosine") {
    need_1d();
    return [](const std::array<double, 2>& x) { return -std::cos(2.0 * kPi * x[0]); };
  }
  if (ic.preset == "product-waves") {
    if (dim != 2) throw ConfigError("initial_condition.preset 'product-waves' is 2D only");
    return [](const std::array<double, 2>& x) {
      return std::sin(2.0 * kPi * x[0]) * std::cos(2.0 * kPi * x[1]);
    };
  }
  if (ic.preset == "tanh-particle") {
    need_profile(0);
    std::array<double, 2> center = ic.centers.empty() ? std::array<double, 2>{0.0, 0.0}
                                                      : ic.centers.front();
    double radius = ic.radius, width = ic.interface_width;
    return [=](const std::array<double, 2>& x) {
      return std::tanh((radius - distance(x, center)) / width);
    };
  }
  if (ic.preset == "two-particle") {
    need_profile(1);
    std::vector<std::array<double, 2>> centers = ic.centers;
    double radius = ic.radius, width = ic.interface_width;
    return [=](const std::array<double, 2>& x) {
      double best = -1.0;
      for (const auto& c : centers)
        best = std::max(best, std::tanh((radius - distance(x, c)) / width));
      return best;
    };
  }
  throw ConfigError("initial_condition.preset: unknown preset '" + ic.preset + "'");
}

// ---------------------------------------------------------------------------
// Parsing (validation-first; unknown keys rejected with their path)
// ---------------------------------------------------------------------------

namespace detail {

inline InitialConditionConfig parse_initial(const json& j, const std::string& path) {
  reject_unknown_keys(j, path, {"preset", "radius", "interface_width", "centers"});
  InitialConditionConfig ic;
  ic.preset = require<std::string>(j, path, "preset");
  ic.radius = get_or(j, path, "radius", 0.0);
  ic.interface_width = get_or(j, path, "interface_width", 0.0);
  if (j.contains("centers")) {
    for (const auto& c : j.at("centers")) {
      auto v = c.get<std::vector<double>>();
      if (v.empty() || v.size() > kMaxDim)
        throw ConfigError(path + ".centers: each center needs 1 or 2 coordinates");
      ic.centers.push_back({v[0], v.size() > 1 ? v[1] : 0.0});
    }
  }
  return ic;
}

inline NetworkConfig parse_network(const json& j, const std::string& path) {
  reject_unknown_keys(j, path, {"hidden", "fourier_modes", "skips", "hidden_potential"});
  NetworkConfig net;
  net.hidden = get_or(j, path, "hidden", net.hidden);
  net.fourier_modes = get_or(j, path, "fourier_modes", net.fourier_modes);
  net.skips = get_or(j, path, "skips", net.skips);
  net.hidden_potential = get_or(j, path, "hidden_potential", net.hidden_potential);
  if (net.hidden.empty()) throw ConfigError(path + ".hidden: needs at least one layer");
  if (net.fourier_modes < 1) throw ConfigError(path + ".fourier_modes: must be >= 1");
  return net;
}

inline train::TrainConfig parse_training(const json& j, const std::string& path) {
  reject_unknown_keys(j, path,
                      {"iterations", "sub_intervals", "learning_rate", "warm_start", "n_particles",
                       "n_ball_points", "n_time_slices", "n_init_points", "r_min", "r_max_initial",
                       "causal", "causal_eps", "weight_residual", "weight_initial", "weight_data",
                       "seed"});
  train::TrainConfig t;
  t.iterations = get_or(j, path, "iterations", t.iterations);
  t.sub_intervals = get_or(j, path, "sub_intervals", t.sub_intervals);
  t.learning_rate = get_or(j, path, "learning_rate", t.learning_rate);
  t.warm_start = get_or(j, path, "warm_start", t.warm_start);
  t.n_particles = get_or(j, path, "n_particles", t.n_particles);
  t.n_ball_points = get_or(j, path, "n_ball_points", t.n_ball_points);
  t.n_time_slices = get_or(j, path, "n_time_slices", t.n_time_slices);
  t.n_init_points = get_or(j, path, "n_init_points", t.n_init_points);
  t.r_min = get_or(j, path, "r_min", t.r_min);
  t.r_max_initial = get_or(j, path, "r_max_initial", t.r_max_initial);
  t.causal = get_or(j, path, "causal", t.causal);
  t.causal_eps = get_or(j, path, "causal_eps", t.causal_eps);
  t.weight_residual = get_or(j, path, "weight_residual", t.weight_residual);
  t.weight_initial = get_or(j, path, "weight_initial", t.weight_initial);
  t.weight_data = get_or(j, path, "weight_data", t.weight_data);
  t.seed = get_or(j, path, "seed", t.seed);
  t.validate();
  return t;
}

inline ReferenceConfig parse_reference(const json& j, const std::string& path, int dim) {
  reject_unknown_keys(j, path, {"grid", "dt", "save_every"});
  ReferenceConfig r;
  if (j.contains("grid")) {
    auto v = require<std::vector<int>>(j, path, "grid");
    if (static_cast<int>(v.size()) != dim)
      throw ConfigError(path + ".grid: expected " + std::to_string(dim) + " entries");
    r.grid = {v[0], dim == 2 ? v[1] : 1};
  } else {
    r.grid = {dim == 1 ? 512 : 128, dim == 2 ? 128 : 1};
  }
  r.dt = get_or(j, path, "dt", r.dt);
  r.save_every = get_or(j, path, "save_every", r.save_every);
  if (!(r.dt > 0.0)) throw ConfigError(path + ".dt: must be positive");
  if (r.save_every < 1) throw ConfigError(path + ".save_every: must be >= 1");
  return r;
}

inline SensorConfig parse_sensors(const json& j, const std::string& path, int dim) {
  reject_unknown_keys(j, path, {"nx", "nt", "times", "noise_level"});
  SensorConfig s;
  s.enabled = true;
  if (j.contains("nx")) {
    auto v = require<std::vector<int>>(j, path, "nx");
    if (static_cast<int>(v.size()) != dim)
      throw ConfigError(path + ".nx: expected " + std::to_string(dim) + " entries");
    s.nx = {v[0], dim == 2 ? v[1] : 0};
    for (int a = 0; a < dim; ++a)
      if (s.nx[a] < 0) throw ConfigError(path + ".nx: counts must be >= 0");
  }
  s.nt = get_or(j, path, "nt", 0);
  if (s.nt < 0) throw ConfigError(path + ".nt: must be >= 0");
  s.times = get_or(j, path, "times", std::vector<double>{});
  s.noise_level = get_or(j, path, "noise_level", 0.0);
  if (s.noise_level < 0.0) throw ConfigError(path + ".noise_level: must be >= 0");
  return s;
}

}  // namespace detail

inline RunConfig parse_run_config(const json& j) {
  const std::string path = "config";
  detail::reject_unknown_keys(j, path,
                              {"name", "equation", "dimension", "domain", "mobility", "lambda_sq",
                               "t_end", "initial_condition", "network", "training", "reference",
                               "sensors", "output_dir"});
  RunConfig cfg;
  cfg.name = detail::get_or<std::string>(j, path, "name", "run");
  cfg.equation = parse_equation(detail::require<std::string>(j, path, "equation"));
  cfg.dimension = detail::require<int>(j, path, "dimension");
  if (cfg.dimension < 1 || cfg.dimension > kMaxDim)
    throw ConfigError(path + ".dimension: must be 1 or 2");

  if (!j.contains("domain")) throw ConfigError(path + ".domain: missing required key");
  const json& dj = j.at("domain");
  detail::reject_unknown_keys(dj, path + ".domain", {"lo", "hi"});
  auto lo = detail::require<std::vector<double>>(dj, path + ".domain", "lo");
  auto hi = detail::require<std::vector<double>>(dj, path + ".domain", "hi");
  if (static_cast<int>(lo.size()) != cfg.dimension || static_cast<int>(hi.size()) != cfg.dimension)
    throw ConfigError(path + ".domain: lo/hi need " + std::to_string(cfg.dimension) + " entries");
  for (int a = 0; a < cfg.dimension; ++a) {
    cfg.domain_lo[a] = lo[static_cast<std::size_t>(a)];
    cfg.domain_hi[a] = hi[static_cast<std::size_t>(a)];
  }

  cfg.mobility = detail::require<double>(j, path, "mobility");
  cfg.lambda_sq = detail::require<double>(j, path, "lambda_sq");
  cfg.t_end = detail::require<double>(j, path, "t_end");
  if (!(cfg.t_end > 0.0)) throw ConfigError(path + ".t_end: must be positive");

  if (!j.contains("initial_condition"))
    throw ConfigError(path + ".initial_condition: missing required key");
  cfg.initial = detail::parse_initial(j.at("initial_condition"), path + ".initial_condition");
  cfg.network = j.contains("network")
                    ? detail::parse_network(j.at("network"), path + ".network")
                    : NetworkConfig{};
  cfg.training = j.contains("training")
                     ? detail::parse_training(j.at("training"), path + ".training")
                     : train::TrainConfig{};
  cfg.reference = j.contains("reference")
                      ? detail::parse_reference(j.at("reference"), path + ".reference",
                                                cfg.dimension)
                      : detail::parse_reference(json::object(), path + ".reference",
                                                cfg.dimension);
  if (j.contains("sensors"))
    cfg.sensors = detail::parse_sensors(j.at("sensors"), path + ".sensors", cfg.dimension);
  cfg.output_dir = detail::get_or<std::string>(j, path, "output_dir", "out/" + cfg.name);

  // Cross-field validation before anything runs.
  cfg.domain();
  cfg.pde().validate();
  cfg.grid();
  cfg.fourier();
  make_initial_condition(cfg.initial, cfg.dimension);
  return cfg;
}

inline json to_json(const RunConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["equation"] = equation_name(cfg.equation);
  j["dimension"] = cfg.dimension;
  j["domain"] = {{"lo", std::vector<double>(cfg.domain_lo.begin(),
                                            cfg.domain_lo.begin() + cfg.dimension)},
                 {"hi", std::vector<double>(cfg.domain_hi.begin(),
                                            cfg.domain_hi.begin() + cfg.dimension)}};
  j["mobility"] = cfg.mobility;
  j["lambda_sq"] = cfg.lambda_sq;
  j["t_end"] = cfg.t_end;
  json ic;
  ic["preset"] = cfg.initial.preset;
  if (cfg.initial.radius > 0.0) ic["radius"] = cfg.initial.radius;
  if (cfg.initial.interface_width > 0.0) ic["interface_width"] = cfg.initial.interface_width;
  if (!cfg.initial.centers.empty()) {
    json centers = json::array();
    for (const auto& c : cfg.initial.centers)
      centers.push_back(std::vector<double>(c.begin(), c.begin() + cfg.dimension));
    ic["centers"] = centers;
  }
  j["initial_condition"] = ic;
  j["network"] = {{"hidden", cfg.network.hidden},
                  {"fourier_modes", cfg.network.fourier_modes},
                  {"skips", cfg.network.skips},
                  {"hidden_potential", cfg.network.hidden_potential}};
  const train::TrainConfig& t = cfg.training;
  j["training"] = {{"iterations", t.iterations},
                   {"sub_intervals", t.sub_intervals},
                   {"learning_rate", t.learning_rate},
                   {"warm_start", t.warm_start},
                   {"n_particles", t.n_particles},
                   {"n_ball_points", t.n_ball_points},
                   {"n_time_slices", t.n_time_slices},
                   {"n_init_points", t.n_init_points},
                   {"r_min", t.r_min},
                   {"r_max_initial", t.r_max_initial},
                   {"causal", t.causal},
                   {"causal_eps", t.causal_eps},
                   {"weight_residual", t.weight_residual},
                   {"weight_initial", t.weight_initial},
                   {"weight_data", t.weight_data},
                   {"seed", t.seed}};
  j["reference"] = {{"grid", std::vector<int>(cfg.reference.grid.begin(),
                                              cfg.reference.grid.begin() + cfg.dimension)},
                    {"dt", cfg.reference.dt},
                    {"save_every", cfg.reference.save_every}};
  if (cfg.sensors.enabled) {
    json s;
    s["nx"] = std::vector<int>(cfg.sensors.nx.begin(), cfg.sensors.nx.begin() + cfg.dimension);
    s["nt"] = cfg.sensors.nt;
    if (!cfg.sensors.times.empty()) s["times"] = cfg.sensors.times;
    s["noise_level"] = cfg.sensors.noise_level;
    j["sensors"] = s;
  }
  j["output_dir"] = cfg.output_dir;
  return j;
}

inline RunConfig load_run_config(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open for reading: " + file);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError(file + ": malformed JSON: " + e.what());
  }
  try {
    return parse_run_config(j);
  } catch (const ConfigError& e) {
    throw ConfigError(file + ": " + e.what());
  }
}

inline void save_run_config(const std::string& file, const RunConfig& cfg) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + file);
  out << to_json(cfg).dump(2) << "\n";
  if (!out) throw IoError("write failed: " + file);
}

}  // namespace pfw::config
