#pragma once

// Evaluation: fixed-dt episodes, the action-repeat extension of a fixed-dt
// model, dt sweeps with CSV/SVG reports, learning curves over checkpoints and
// the interpolation experiment on a linear oracle.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "tawm/env.hpp"
#include "tawm/errors.hpp"
#include "tawm/planner.hpp"
#include "tawm/svg.hpp"
#include "tawm/trainer.hpp"
#include "tawm/worldmodel.hpp"

namespace tawm {

struct EvalConfig {
  std::size_t n_episodes = 10;
  std::size_t horizon = 100;  // planner queries per episode
  PlanConfig plan;
  double gamma_base = 0.99;
  double dt_ref = 0.0;  // discount reference interval; 0 means the env default
};

struct EvalResult {
  double dt_eval = 0.0;
  std::size_t repeat = 1;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double discounted_return = 0.0;  // mean over episodes
  std::vector<double> episode_rewards;
  std::vector<double> episode_returns;
};

inline double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double mean_of(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m += x;
  return v.empty() ? 0.0 : m / static_cast<double>(v.size());
}

struct CiSummary {
  double mean = 0.0;
  double half_width = 0.0;  // normal approximation, 1.96 * s / sqrt(n)
  std::size_t n = 0;
};

inline CiSummary ci95(std::span<const double> v) {
  CiSummary c;
  c.n = v.size();
  c.mean = mean_of(v);
  if (v.size() >= 2) c.half_width = 1.96 * sample_std(v) / std::sqrt(static_cast<double>(v.size()));
  return c;
}

// Conditions the wrapped actor on a fixed dt regardless of the step interval.
class FixedConditioningActor final : public Actor {
 public:
  FixedConditioningActor(Actor& inner, double dt) : inner_(&inner), dt_(dt) {}
  void begin_episode() override { inner_->begin_episode(); }
  std::vector<double> act(std::span<const double> obs, double, std::uint64_t seed) override {
    return inner_->act(obs, dt_, seed);
  }

 private:
  Actor* inner_;
  double dt_;
};

inline EvalResult eval_actor(Actor& actor, const env::EnvSpec& spec, double dt_eval, const EvalConfig& cfg,
                             std::uint64_t seed) {
  if (cfg.n_episodes == 0) throw ConfigError("evaluation needs at least one episode");
  if (cfg.horizon == 0) throw ConfigError("evaluation horizon must be positive");
  const double sim = env::dt_sim(spec);
  if (dt_eval < sim * (1.0 - 1e-9)) {
    throw ConfigError("dt_eval " + std::to_string(dt_eval) + " is below the simulation step " + std::to_string(sim));
  }
  const double dt_ref = cfg.dt_ref > 0.0 ? cfg.dt_ref : env::dt_default(spec);
  env::Environment e(spec);
  EvalResult r;
  r.dt_eval = dt_eval;
  const double gamma = discount(cfg.gamma_base, dt_ref, env::realized_dt(dt_eval, sim));
  for (std::size_t ep = 0; ep < cfg.n_episodes; ++ep) {
    const auto st = collect_episode(e, actor, dt_eval, cfg.horizon, ep, derive_seed(seed, "eval"), nullptr, {}, gamma);
    r.episode_rewards.push_back(st.total_reward);
    r.episode_returns.push_back(st.discounted_return);
  }
  r.mean_reward = mean_of(r.episode_rewards);
  r.std_reward = sample_std(r.episode_rewards);
  r.discounted_return = mean_of(r.episode_returns);
  return r;
}

// Greedy planner rollouts at a fixed dt.
inline EvalResult eval_model(const Model& m, const env::EnvSpec& spec, double dt_eval, const EvalConfig& cfg,
                             std::uint64_t seed) {
  PlannerActor actor(m, cfg.plan, /*explore=*/false);
  return eval_actor(actor, spec, dt_eval, cfg, seed);
}

inline std::size_t repeat_factor(double dt_eval, double dt_base) {
  if (!(dt_base > 0.0)) throw ConfigError("action repeat: base dt must be positive");
  if (dt_eval < dt_base * (1.0 - 1e-9)) {
    throw ConfigError("action repeat: dt_eval " + std::to_string(dt_eval) + " is below the model's dt " +
                      std::to_string(dt_base));
  }
  return static_cast<std::size_t>(std::llround(dt_eval / dt_base));
}

// The planner is queried once per window of k = round(dt_eval / dt_base)
// base intervals, conditioned on dt_base, and its action is held for the whole
// window. Sub-stepping composes exactly, so one env step of k * dt_base is the
// same trajectory as k held steps of dt_base.
inline EvalResult action_repeat_eval(const Model& m, const env::EnvSpec& spec, double dt_eval, double dt_base,
                                     const EvalConfig& cfg, std::uint64_t seed) {
  const std::size_t k = repeat_factor(dt_eval, dt_base);
  PlannerActor inner(m, cfg.plan, /*explore=*/false);
  FixedConditioningActor actor(inner, dt_base);
  auto r = eval_actor(actor, spec, static_cast<double>(k) * dt_base, cfg, seed);
  r.dt_eval = dt_eval;
  r.repeat = k;
  return r;
}

// {0.5, 1, 2, 4, 8} x dt_default, capped at dt_max, ascending and distinct.
inline std::vector<double> default_dt_grid(double dt_default, double dt_max = 1.0) {
  std::vector<double> g;
  for (double f : {0.5, 1.0, 2.0, 4.0, 8.0}) g.push_back(std::min(f * dt_default, dt_max));
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

// Runs fn(0..n-1) on up to `threads` workers. Results must be written by
// index; scheduling therefore never affects the output.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Sweeps

enum class EvalKind { Plain, ActionRepeat };

struct SweepModel {
  std::string id;
  const Model* model = nullptr;
  EvalKind kind = EvalKind::Plain;
  double dt_base = 0.0;  // action-repeat only
};

struct SweepRow {
  std::string model;
  double dt_eval = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_episodes = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double discounted_return = 0.0;
  std::size_t repeat = 1;
  std::vector<double> episode_rewards;
};

struct SweepFailure {
  std::string model;
  double dt_eval = 0.0;
  std::uint64_t seed = 0;
  std::string message;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<SweepFailure> failures;

  // Rows of one model at one dt (all seeds).
  std::vector<const SweepRow*> select(const std::string& model, double dt) const {
    std::vector<const SweepRow*> out;
    for (const auto& r : rows)
      if (r.model == model && r.dt_eval == dt) out.push_back(&r);
    return out;
  }
};

inline SweepReport sweep(const std::vector<SweepModel>& models, const env::EnvSpec& spec, std::vector<double> grid,
                         const std::vector<std::uint64_t>& seeds, const EvalConfig& cfg, std::size_t threads = 1) {
  if (models.empty()) throw ConfigError("sweep: no models given");
  if (grid.empty()) throw ConfigError("sweep: empty dt grid");
  if (seeds.empty()) throw ConfigError("sweep: no seeds given");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  struct Cell {
    std::size_t m, g, s;
    std::optional<SweepRow> row;
    std::string error;
  };
  std::vector<Cell> cells;
  for (std::size_t m = 0; m < models.size(); ++m)
    for (std::size_t g = 0; g < grid.size(); ++g)
      for (std::size_t s = 0; s < seeds.size(); ++s) cells.push_back({m, g, s, std::nullopt, {}});

  parallel_for(cells.size(), threads, [&](std::size_t i) {
    auto& c = cells[i];
    const auto& sm = models[c.m];
    try {
      if (!sm.model) throw ConfigError("model '" + sm.id + "' is not loaded");
      const EvalResult r = sm.kind == EvalKind::Plain
                               ? eval_model(*sm.model, spec, grid[c.g], cfg, seeds[c.s])
                               : action_repeat_eval(*sm.model, spec, grid[c.g], sm.dt_base, cfg, seeds[c.s]);
      c.row = SweepRow{sm.id,          grid[c.g],   seeds[c.s],          cfg.n_episodes, r.mean_reward,
                       r.std_reward,   r.discounted_return, r.repeat,    r.episode_rewards};
    } catch (const std::exception& e) {
      c.error = e.what();
    }
  });

  SweepReport rep;
  for (auto& c : cells) {
    if (c.row) {
      rep.rows.push_back(std::move(*c.row));
    } else {
      rep.failures.push_back({models[c.m].id, grid[c.g], seeds[c.s], c.error});
    }
  }
  return rep;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char ch : s) o += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return o + "\"";
}

inline void write_sweep_csv(std::ostream& os, const SweepReport& rep) {
  os << "model,dt_eval,seed,n_episodes,mean_reward,std_reward,discounted_return\n";
  char buf[256];
  for (const auto& r : rep.rows) {
    std::snprintf(buf, sizeof buf, ",%.17g,%llu,%zu,%.17g,%.17g,%.17g\n", r.dt_eval,
                  static_cast<unsigned long long>(r.seed), r.n_episodes, r.mean_reward, r.std_reward,
                  r.discounted_return);
    os << csv_field(r.model) << buf;
  }
}

inline void write_failures_csv(std::ostream& os, const SweepReport& rep) {
  os << "model,dt_eval,seed,error\n";
  char buf[64];
  for (const auto& f : rep.failures) {
    std::snprintf(buf, sizeof buf, ",%.17g,%llu,", f.dt_eval, static_cast<unsigned long long>(f.seed));
    os << csv_field(f.model) << buf << csv_field(f.message) << '\n';
  }
}

// Per model: mean over seeds of the per-seed mean reward, with a 95% band.
inline svg::Chart sweep_chart(const SweepReport& rep, const std::string& title) {
  svg::Chart c;
  c.title = title;
  c.x_label = "evaluation dt [s]";
  c.y_label = "episode reward";
  c.log_x = true;
  std::vector<std::string> ids;
  for (const auto& r : rep.rows)
    if (std::find(ids.begin(), ids.end(), r.model) == ids.end()) ids.push_back(r.model);
  for (const auto& id : ids) {
    svg::Series s;
    s.name = id;
    std::vector<double> dts;
    for (const auto& r : rep.rows)
      if (r.model == id && std::find(dts.begin(), dts.end(), r.dt_eval) == dts.end()) dts.push_back(r.dt_eval);
    std::sort(dts.begin(), dts.end());
    for (double dt : dts) {
      std::vector<double> means;
      for (const auto* r : rep.select(id, dt)) means.push_back(r->mean_reward);
      const auto ci = ci95(means);
      s.x.push_back(dt);
      s.y.push_back(ci.mean);
      s.lo.push_back(ci.mean - ci.half_width);
      s.hi.push_back(ci.mean + ci.half_width);
    }
    c.series.push_back(std::move(s));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Learning curves

struct CurveRow {
  std::size_t step = 0;
  std::string checkpoint;
  double dt_eval = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_episodes = 0;
  double mean_reward = std::nan("");
  double std_reward = std::nan("");
  std::string status = "ok";
};

// Step index parsed from a file name such as ckpt_00005000.tawm.
inline std::optional<std::size_t> checkpoint_step_from_name(const std::string& name) {
  std::string digits;
  for (char ch : name)
    if (ch >= '0' && ch <= '9') digits += ch;
  if (digits.empty()) return std::nullopt;
  return static_cast<std::size_t>(std::stoull(digits));
}

// Evaluates every *.tawm file in `dir` at every dt and seed, ordered by
// training step. Files that fail to load produce one warning row each.
inline std::vector<CurveRow> learning_curve(const std::string& dir, const env::EnvSpec& spec,
                                            const std::vector<double>& grid, const std::vector<std::uint64_t>& seeds,
                                            const EvalConfig& cfg, std::size_t threads = 1) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("checkpoint directory '" + dir + "' does not exist");
  if (grid.empty() || seeds.empty()) throw ConfigError("learning_curve: empty dt grid or seed list");

  struct Entry {
    std::size_t step;
    std::string path, name;
    std::optional<Model> model;
    std::string error;
  };
  std::vector<Entry> entries;
  for (const auto& de : fs::directory_iterator(dir)) {
    if (!de.is_regular_file() || de.path().extension() != ".tawm") continue;
    Entry e{0, de.path().string(), de.path().filename().string(), std::nullopt, {}};
    try {
      nlohmann::json extra;
      e.model = load_world_model<float>(e.path, &extra);
      if (extra.contains("step")) {
        e.step = extra["step"].get<std::size_t>();
      } else {
        e.step = checkpoint_step_from_name(e.name).value_or(0);
      }
    } catch (const std::exception& ex) {
      e.error = ex.what();
      e.step = checkpoint_step_from_name(e.name).value_or(0);
    }
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw ConfigError("no checkpoints (*.tawm) in '" + dir + "'");
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.step != b.step ? a.step < b.step : a.name < b.name; });

  std::vector<double> sorted_grid(grid);
  std::sort(sorted_grid.begin(), sorted_grid.end());
  std::vector<CurveRow> rows;
  std::vector<std::size_t> pending;
  std::vector<const Model*> models;
  for (const auto& e : entries) {
    if (!e.model) {
      CurveRow w;
      w.step = e.step;
      w.checkpoint = e.name;
      w.status = "warning: skipped (" + e.error + ")";
      rows.push_back(w);
      continue;
    }
    for (double dt : sorted_grid) {
      for (auto s : seeds) {
        rows.push_back({e.step, e.name, dt, s, cfg.n_episodes, std::nan(""), std::nan(""), "ok"});
        pending.push_back(rows.size() - 1);
        models.push_back(&*e.model);
      }
    }
  }
  parallel_for(pending.size(), threads, [&](std::size_t i) {
    auto& r = rows[pending[i]];
    try {
      const auto res = eval_model(*models[i], spec, r.dt_eval, cfg, r.seed);
      r.mean_reward = res.mean_reward;
      r.std_reward = res.std_reward;
    } catch (const std::exception& ex) {
      r.status = std::string("error: ") + ex.what();
    }
  });
  return rows;
}

inline void write_curve_csv(std::ostream& os, const std::vector<CurveRow>& rows) {
  os << "step,checkpoint,dt_eval,seed,n_episodes,mean_reward,std_reward,status\n";
  char buf[160];
  for (const auto& r : rows) {
    os << r.step << ',' << csv_field(r.checkpoint);
    std::snprintf(buf, sizeof buf, ",%.17g,%llu,%zu,%.17g,%.17g,", r.dt_eval, static_cast<unsigned long long>(r.seed),
                  r.n_episodes, r.mean_reward, r.std_reward);
    os << buf << csv_field(r.status) << '\n';
  }
}

inline svg::Chart curve_chart(const std::vector<CurveRow>& rows, const std::string& title) {
  svg::Chart c;
  c.title = title;
  c.x_label = "environment steps";
  c.y_label = "episode reward";
  std::vector<double> dts;
  for (const auto& r : rows)
    if (r.status == "ok" && std::find(dts.begin(), dts.end(), r.dt_eval) == dts.end()) dts.push_back(r.dt_eval);
  std::sort(dts.begin(), dts.end());
  for (double dt : dts) {
    svg::Series s;
    char name[48];
    std::snprintf(name, sizeof name, "dt = %g s", dt);
    s.name = name;
    std::vector<std::size_t> steps;
    for (const auto& r : rows)
      if (r.status == "ok" && r.dt_eval == dt && (steps.empty() || steps.back() != r.step)) steps.push_back(r.step);
    for (auto st : steps) {
      std::vector<double> v;
      for (const auto& r : rows)
        if (r.status == "ok" && r.dt_eval == dt && r.step == st) v.push_back(r.mean_reward);
      const auto ci = ci95(v);
      s.x.push_back(static_cast<double>(st));
      s.y.push_back(ci.mean);
      s.lo.push_back(ci.mean - ci.half_width);
      s.hi.push_back(ci.mean + ci.half_width);
    }
    c.series.push_back(std::move(s));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Linear oracle and the interpolation experiment

// dz/dt = A z + B a with the action held over each interval. Transitions are
// exact: exp of the augmented matrix [[A, B], [0, 0]].
struct LinearOracle {
  std::size_t n = 0, m = 0;
  std::vector<double> A, B;  // row-major n x n and n x m

  static LinearOracle oscillator(double omega, double damping = 0.0) {
    return {2, 1, {0.0, 1.0, -omega * omega, -2.0 * damping * omega}, {0.0, 1.0}};
  }

  // exp(M dt) of the augmented (n+m) x (n+m) matrix, by scaling and squaring
  // of a truncated Taylor series.
  std::vector<double> propagator(double dt) const {
    const std::size_t k = n + m;
    std::vector<double> M(k * k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) M[i * k + j] = A[i * n + j] * dt;
      for (std::size_t j = 0; j < m; ++j) M[i * k + n + j] = B[i * m + j] * dt;
    }
    double norm = 0.0;
    for (double v : M) norm = std::max(norm, std::abs(v));
    int squarings = 0;
    while (norm * static_cast<double>(k) > 0.5) {
      norm /= 2;
      ++squarings;
    }
    const double s = std::ldexp(1.0, -squarings);
    for (double& v : M) v *= s;
    auto matmul = [k](const std::vector<double>& X, const std::vector<double>& Y) {
      std::vector<double> Z(k * k, 0.0);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t l = 0; l < k; ++l)
          for (std::size_t j = 0; j < k; ++j) Z[i * k + j] += X[i * k + l] * Y[l * k + j];
      return Z;
    };
    std::vector<double> E(k * k, 0.0), term(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) E[i * k + i] = term[i * k + i] = 1.0;
    for (int p = 1; p <= 20; ++p) {
      term = matmul(term, M);
      for (std::size_t i = 0; i < k * k; ++i) term[i] /= p;
      for (std::size_t i = 0; i < k * k; ++i) E[i] += term[i];
    }
    for (int q = 0; q < squarings; ++q) E = matmul(E, E);
    return E;
  }

  std::vector<double> step(std::span<const double> z, std::span<const double> a, double dt) const {
    const auto E = propagator(dt);
    const std::size_t k = n + m;
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[i] += E[i * k + j] * z[j];
      for (std::size_t j = 0; j < m; ++j) out[i] += E[i * k + n + j] * a[j];
    }
    return out;
  }

  // Finite-difference map G(dt) = (exp(M dt) - I) / dt restricted to the
  // state rows; (z' - z) / dt = G(dt) [z; a].
  std::vector<double> secant(double dt) const {
    auto E = propagator(dt);
    const std::size_t k = n + m;
    std::vector<double> G(n * k);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) G[i * k + j] = (E[i * k + j] - (i == j ? 1.0 : 0.0)) / dt;
    return G;
  }

  // Capture tolerance: max over dt in (0, dt_bar] of the Frobenius distance
  // between the secant maps at dt_bar and dt, bounded on a fine grid.
  double capture_epsilon(double dt_bar, std::size_t points = 200) const {
    const auto Gb = secant(dt_bar);
    double eps = 0.0;
    for (std::size_t p = 1; p <= points; ++p) {
      const auto G = secant(dt_bar * static_cast<double>(p) / static_cast<double>(points));
      double s = 0.0;
      for (std::size_t i = 0; i < G.size(); ++i) s += (G[i] - Gb[i]) * (G[i] - Gb[i]);
      eps = std::max(eps, std::sqrt(s));
    }
    return eps;
  }
};

struct ScalingConfig {
  double omega = 0.5;     // oscillator angular frequency [rad/s]
  double dt_bar = 0.05;
  double dt_min = 0.005;  // training and test range is [dt_min, dt_bar]
  std::size_t n_train = 2048;
  std::size_t n_test = 256;
  std::size_t grid_points = 10;
  std::size_t hidden = 32;
  std::size_t steps = 6000;
  std::size_t batch = 128;
  double lr = 3e-3;
  double lr_final = 3e-5;
  double state_bound = 1.0;
  std::uint64_t seed = 0;
};

struct ScalingSample {
  std::vector<double> z, a, z_next;
  double dt;
};

struct ScalingResult {
  double max_deviation = 0.0;
  double residual = 0.0;      // RMS of ||d - (z' - z) / tau|| on the training set
  double control_deviation = 0.0;  // the same deviation for the untrained model
  double epsilon = 0.0;
  std::vector<double> grid;
  std::vector<double> grid_max;  // max deviation at each grid point
};

inline std::vector<ScalingSample> scaling_dataset(const LinearOracle& o, const ScalingConfig& c, std::size_t n,
                                                std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ScalingSample> d;
  for (std::size_t i = 0; i < n; ++i) {
    ScalingSample s;
    for (std::size_t j = 0; j < o.n; ++j) s.z.push_back(rng.uniform(-c.state_bound, c.state_bound));
    for (std::size_t j = 0; j < o.m; ++j) s.a.push_back(rng.uniform(-1.0, 1.0));
    s.dt = std::exp(rng.uniform(std::log(c.dt_min), std::log(c.dt_bar)));
    s.z_next = o.step(s.z, s.a, s.dt);
    d.push_back(std::move(s));
  }
  return d;
}

inline WorldModel<double> scaling_untrained(const LinearOracle& o, const ScalingConfig& c) {
  return make_world_model<double>({o.n, o.m, o.n, c.hidden}, Integrator::Euler, derive_seed(c.seed, "scaling.model"));
}

// Supervised fit of the derivative network with an identity encoder: the
// Euler consistency loss ||z + d(z, a, dt) tau(dt) - z'||^2 on exact oracle
// transitions, Adam with cosine learning-rate decay.
inline WorldModel<double> scaling_fit(const LinearOracle& o, const ScalingConfig& c,
                                     const std::vector<ScalingSample>& data) {
  auto m = scaling_untrained(o, c);
  nn::AdamState<double> opt(m.dynamics, nn::AdamConfig{c.lr});
  Rng rng(derive_seed(c.seed, "scaling.batch"));
  nn::ParamStore<double> grads(m.dynamics.spec());
  for (std::size_t it = 0; it < c.steps; ++it) {
    grads.set_zero();
    for (std::size_t b = 0; b < c.batch; ++b) {
      const auto& s = data[rng.index(data.size())];
      const auto x = detail::head_input<double>(s.z, s.a, s.dt);
      auto f = nn::mlp_forward(m.dynamics, std::span<const double>(x));
      const double t = tau(s.dt);
      std::vector<double> g(o.n);
      for (std::size_t i = 0; i < o.n; ++i)
        g[i] = 2.0 * (s.z[i] + f.output[i] * t - s.z_next[i]) * t / static_cast<double>(c.batch);
      nn::mlp_backward(f.tape, std::span<const double>(g), grads);
    }
    const double frac = static_cast<double>(it) / static_cast<double>(std::max<std::size_t>(1, c.steps - 1));
    opt.config.lr = c.lr_final + 0.5 * (c.lr - c.lr_final) * (1.0 + std::cos(std::numbers::pi * frac));
    nn::adam_step(m.dynamics, grads, opt);
  }
  return m;
}

inline double scaling_residual(const WorldModel<double>& m, const std::vector<ScalingSample>& data) {
  double s = 0.0;
  for (const auto& d : data) {
    const auto out = latent_derivative<double>(m, d.z, d.a, d.dt);
    const double t = tau(d.dt);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double e = out[i] - (d.z_next[i] - d.z[i]) / t;
      s += e * e;
    }
  }
  return std::sqrt(s / static_cast<double>(data.size()));
}

// max over grid and test points of ||d(z, a, dt) - d(z, a, dt_bar) I(dt)||.
inline double scaling_deviation(const WorldModel<double>& m, double dt_bar, std::span<const double> grid,
                               const std::vector<ScalingSample>& test, std::vector<double>* per_grid = nullptr) {
  double worst = 0.0;
  if (per_grid) per_grid->assign(grid.size(), 0.0);
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    const double dt = grid[gi];
    if (tau(dt) == 0.0) throw ConfigError("scaling check: grid point " + std::to_string(dt) + " has tau = 0");
    const double I = interpolation_factor(dt, dt_bar);
    for (const auto& s : test) {
      const auto d = latent_derivative<double>(m, s.z, s.a, dt);
      const auto db = latent_derivative<double>(m, s.z, s.a, dt_bar);
      double e = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) e += (d[i] - db[i] * I) * (d[i] - db[i] * I);
      e = std::sqrt(e);
      worst = std::max(worst, e);
      if (per_grid) (*per_grid)[gi] = std::max((*per_grid)[gi], e);
    }
  }
  return worst;
}

inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  std::vector<double> g;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = n == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    g.push_back(i + 1 == n ? hi : std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo))));
  }
  return g;
}

inline ScalingResult scaling_experiment(const ScalingConfig& c) {
  const auto oracle = LinearOracle::oscillator(c.omega);
  const auto train = scaling_dataset(oracle, c, c.n_train, derive_seed(c.seed, "scaling.train"));
  const auto test = scaling_dataset(oracle, c, c.n_test, derive_seed(c.seed, "scaling.test"));
  ScalingResult r;
  r.grid = log_grid(c.dt_min, c.dt_bar, c.grid_points);
  r.epsilon = oracle.capture_epsilon(c.dt_bar);
  r.control_deviation = scaling_deviation(scaling_untrained(oracle, c), c.dt_bar, r.grid, test);
  const auto model = scaling_fit(oracle, c, train);
  r.residual = scaling_residual(model, train);
  r.max_deviation = scaling_deviation(model, c.dt_bar, r.grid, test, &r.grid_max);
  return r;
}

}  // namespace tawm
