#pragma once

// Flat JSON run configuration shared by every CLI subcommand. Keys not listed
// in defaults() are rejected; the resolved object is echoed next to outputs.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tawm/env.hpp"
#include "tawm/errors.hpp"
#include "tawm/evalkit.hpp"
#include "tawm/trainer.hpp"

namespace tawm {

using nlohmann::json;

inline json config_defaults() {
  const TrainConfig t;
  const PlanConfig p;
  const EvalConfig e;
  return {
      {"env", "wave"},
      {"seed", 0},
      {"out", "out"},
      // training
      {"mode", "log-uniform"},
      {"dt_min", 0.01},
      {"dt_max", 1.0},
      {"dt", 0.0},  // fixed-mode dt and single-dt eval; 0 = env default
      {"integrator", "euler"},
      {"steps", t.total_steps},
      {"episode_length", t.episode_length},
      {"batch_size", t.batch_size},
      {"train_horizon", t.train_horizon},
      {"updates_per_step", t.updates_per_step},
      {"seed_episodes", t.seed_episodes},
      {"buffer_capacity", t.buffer_capacity},
      {"latent_dim", t.latent_dim},
      {"hidden_dim", t.hidden_dim},
      {"learning_rate", t.learning_rate},
      {"grad_clip", t.grad_clip},
      {"checkpoint_interval", t.checkpoint_interval},
      {"loss_consistency", t.loss.consistency},
      {"loss_reward", t.loss.reward},
      {"loss_value", t.loss.value},
      {"loss_lambda", t.loss.horizon_discount},
      {"gamma", t.loss.gamma_base},
      {"dt_ref", 0.0},  // 0 = env default
      // planner
      {"plan_horizon", p.horizon},
      {"plan_samples", p.samples},
      {"plan_elites", p.elites},
      {"plan_iterations", p.iterations},
      {"plan_temperature", p.temperature},
      {"plan_init_std", p.init_std},
      {"plan_min_std", p.min_std},
      {"plan_prior_fraction", p.prior_fraction},
      {"plan_prior_std", p.prior_std},
      // evaluation
      {"eval_episodes", e.n_episodes},
      {"eval_horizon", e.horizon},
      {"eval_grid", json::array()},  // empty = default grid for the env
      {"seeds", {0, 1, 2}},
      {"threads", 1},
      {"models", json::array()},         // "id=path" or "path"
      {"repeat_models", json::array()},  // evaluated with action repeat
      {"repeat_dt", 0.0},                // 0 = model's training dt, else env default
      {"checkpoint_dir", ""},
  };
}

inline json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config file '" + path + "'");
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
}

// Overlays `user` on the defaults; unknown keys and type mismatches throw.
inline json resolve_config(const json& user) {
  json out = config_defaults();
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : user.items()) {
    if (!out.contains(k)) throw ConfigError("unknown config key '" + k + "'");
    const auto& d = out[k];
    const bool ok = (d.is_number() && v.is_number()) || (d.is_string() && v.is_string()) ||
                    (d.is_array() && v.is_array()) || (d.is_boolean() && v.is_boolean());
    if (!ok) throw ConfigError("config key '" + k + "' has the wrong type");
    if (d.is_number_unsigned() && !(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0))) {
      throw ConfigError("config key '" + k + "' must be a non-negative integer");
    }
    out[k] = v;
  }
  return out;
}

inline env::EnvSpec env_from_name(const std::string& name) {
  if (name == "burgers") return env::default_pde(env::PdeKind::Burgers);
  if (name == "allen-cahn") return env::default_pde(env::PdeKind::AllenCahn);
  if (name == "wave") return env::default_pde(env::PdeKind::Wave);
  if (name == "oscillator") return env::default_oscillator();
  throw ConfigError("unknown env '" + name + "' (expected burgers|allen-cahn|wave|oscillator)");
}

struct RunConfig {
  json values;

  static RunConfig from_json(const json& user) { return {resolve_config(user)}; }
  static RunConfig from_file(const std::string& path) { return from_json(read_json_file(path)); }

  template <class V>
  void set(const std::string& key, const V& v) {
    json patch = values;
    patch[key] = v;
    values = resolve_config(patch);
  }

  env::EnvSpec env() const { return env_from_name(values.at("env").get<std::string>()); }
  std::uint64_t seed() const { return values.at("seed").get<std::uint64_t>(); }
  std::string out() const { return values.at("out").get<std::string>(); }
  std::size_t threads() const { return values.at("threads").get<std::size_t>(); }

  double dt_ref() const {
    const double r = values.at("dt_ref").get<double>();
    return r > 0.0 ? r : env::dt_default(env());
  }

  // The single dt for fixed-mode training and `eval`.
  double dt() const {
    const double d = values.at("dt").get<double>();
    return d > 0.0 ? d : env::dt_default(env());
  }

  PlanConfig plan() const {
    PlanConfig p;
    p.horizon = values.at("plan_horizon").get<std::size_t>();
    p.samples = values.at("plan_samples").get<std::size_t>();
    p.elites = values.at("plan_elites").get<std::size_t>();
    p.iterations = values.at("plan_iterations").get<std::size_t>();
    p.temperature = values.at("plan_temperature").get<double>();
    p.init_std = values.at("plan_init_std").get<double>();
    p.min_std = values.at("plan_min_std").get<double>();
    p.prior_fraction = values.at("plan_prior_fraction").get<double>();
    p.prior_std = values.at("plan_prior_std").get<double>();
    p.gamma_base = values.at("gamma").get<double>();
    p.dt_ref = dt_ref();
    return p;
  }

  TrainConfig train() const {
    TrainConfig t;
    t.env = env();
    t.dt.mode = dt_sampling_from_string(values.at("mode").get<std::string>());
    t.dt.dt_min = values.at("dt_min").get<double>();
    t.dt.dt_max = values.at("dt_max").get<double>();
    t.dt.dt_fixed = dt();
    t.total_steps = values.at("steps").get<std::size_t>();
    t.episode_length = values.at("episode_length").get<std::size_t>();
    t.batch_size = values.at("batch_size").get<std::size_t>();
    t.train_horizon = values.at("train_horizon").get<std::size_t>();
    t.updates_per_step = values.at("updates_per_step").get<std::size_t>();
    t.seed_episodes = values.at("seed_episodes").get<std::size_t>();
    t.buffer_capacity = values.at("buffer_capacity").get<std::size_t>();
    t.seed = seed();
    t.integrator = integrator_from_string(values.at("integrator").get<std::string>());
    t.latent_dim = values.at("latent_dim").get<std::size_t>();
    t.hidden_dim = values.at("hidden_dim").get<std::size_t>();
    t.loss.consistency = values.at("loss_consistency").get<double>();
    t.loss.reward = values.at("loss_reward").get<double>();
    t.loss.value = values.at("loss_value").get<double>();
    t.loss.horizon_discount = values.at("loss_lambda").get<double>();
    t.loss.gamma_base = values.at("gamma").get<double>();
    t.loss.dt_ref = dt_ref();
    t.learning_rate = values.at("learning_rate").get<double>();
    t.grad_clip = values.at("grad_clip").get<double>();
    t.plan = plan();
    t.checkpoint_interval = values.at("checkpoint_interval").get<std::size_t>();
    t.out_dir = out();
    return t;
  }

  EvalConfig eval() const {
    EvalConfig e;
    e.n_episodes = values.at("eval_episodes").get<std::size_t>();
    e.horizon = values.at("eval_horizon").get<std::size_t>();
    e.plan = plan();
    e.gamma_base = values.at("gamma").get<double>();
    e.dt_ref = dt_ref();
    return e;
  }

  std::vector<double> grid() const {
    auto g = values.at("eval_grid").get<std::vector<double>>();
    if (g.empty()) return default_dt_grid(env::dt_default(env()), values.at("dt_max").get<double>());
    std::sort(g.begin(), g.end());
    return g;
  }

  std::vector<std::uint64_t> seeds() const { return values.at("seeds").get<std::vector<std::uint64_t>>(); }

  std::string dump() const { return values.dump(2) + "\n"; }

  // Writes <out>/config.resolved.json.
  void echo() const {
    std::filesystem::create_directories(out());
    const auto path = (std::filesystem::path(out()) / "config.resolved.json").string();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path + "'");
    os << dump();
  }
};

// "id=path" or a bare path (id = file stem).
inline std::pair<std::string, std::string> parse_model_entry(const std::string& s) {
  const auto eq = s.find('=');
  if (eq != std::string::npos) return {s.substr(0, eq), s.substr(eq + 1)};
  return {std::filesystem::path(s).stem().string(), s};
}

}  // namespace tawm
