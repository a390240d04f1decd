#pragma once

// Invariant checks for every module. Each returns pass/fail plus a short
// detail string; `propcheck` runs all of them, the unit tests call them
// individually.

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "tawm/config.hpp"
#include "tawm/env.hpp"
#include "tawm/evalkit.hpp"
#include "tawm/nn.hpp"
#include "tawm/planner.hpp"
#include "tawm/trainer.hpp"
#include "tawm/worldmodel.hpp"

namespace tawm::props {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Property {
  std::string name;
  std::function<Outcome()> run;
};

namespace detail {
inline std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

inline bool same_state(const env::State& a, const env::State& b) { return a.u == b.u && a.psi == b.psi; }

// Small model on the Wave task for planner and evaluation checks.
inline Model tiny_model(std::uint64_t seed = 7) {
  const auto spec = env::EnvSpec{env::default_pde(env::PdeKind::Wave)};
  return make_world_model<float>({env::obs_dim(spec), env::action_dim(spec), 8, 16}, Integrator::Euler, seed);
}

inline PlanConfig tiny_plan() {
  PlanConfig p;
  p.horizon = 3;
  p.samples = 32;
  p.elites = 4;
  p.iterations = 3;
  p.dt_ref = 0.1;
  return p;
}

// Two-sided KS statistic against a CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}
}  // namespace detail

// Asymptotic two-sided KS critical value at alpha = 0.01.
inline double ks_critical_001(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

// ---------------------------------------------------------------------------
// nn

inline Outcome mlp_gradients(std::size_t seeds = 5) {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    Rng rng(derive_seed(s, "props.mlp"));
    const nn::Activation outs[] = {nn::Activation::Identity, nn::Activation::Tanh};
    nn::MlpSpec spec{"probe", {5, 7, 6, 3}, nn::Activation::SiLU, outs[s % 2]};
    auto p = nn::make_params<double>(spec, rng);
    std::vector<double> x(5), w(3);
    for (auto& v : x) v = rng.uniform(-1, 1);
    for (auto& v : w) v = rng.uniform(-1, 1);
    auto loss = [&] {
      const auto y = nn::mlp_infer(p, std::span<const double>(x));
      double l = 0.0;
      for (std::size_t i = 0; i < 3; ++i) l += w[i] * y[i] + 0.5 * y[i] * y[i];
      return l;
    };
    auto f = nn::mlp_forward(p, std::span<const double>(x));
    std::vector<double> g(3);
    for (std::size_t i = 0; i < 3; ++i) g[i] = w[i] + f.output[i];
    nn::ParamStore<double> grads(spec);
    nn::mlp_backward(f.tape, std::span<const double>(g), grads);
    const auto rep = nn::grad_check(p.values(), grads.values(), loss, {});
    worst = std::max(worst, rep.max_rel_error);
    if (!rep.passed) return {false, detail::fmt("seed %g: max rel error %.3g", double(s), rep.max_rel_error)};
  }
  return {true, detail::fmt("max rel error %.3g", worst)};
}

inline Outcome checkpoint_roundtrip() {
  const auto m = detail::tiny_model();
  std::stringstream ss;
  save_world_model<float>(ss, m);
  const auto back = load_world_model<float>(ss);
  const bool ok = back.dims == m.dims && back.integrator == m.integrator &&
                  std::ranges::equal(back.dynamics.values(), m.dynamics.values()) &&
                  std::ranges::equal(back.value_target.values(), m.value_target.values()) &&
                  back.symlog_heads == m.symlog_heads;
  return {ok, ok ? "bitwise equal after reload" : "reloaded parameters differ"};
}

// ---------------------------------------------------------------------------
// env

inline std::vector<env::EnvSpec> all_envs() {
  return {env::default_pde(env::PdeKind::Burgers), env::default_pde(env::PdeKind::AllenCahn),
          env::default_pde(env::PdeKind::Wave), env::default_oscillator()};
}

// One step of 2 dt equals two steps of dt with the same held action, bitwise.
inline Outcome temporal_consistency() {
  for (const auto& spec : all_envs()) {
    Rng rng(11);
    std::vector<double> a(env::action_dim(spec));
    for (auto& v : a) v = rng.uniform(-1, 1);
    const double dt = env::dt_default(spec);
    auto s1 = env::env_reset(spec, 3);
    auto s2 = s1;
    env::env_step(spec, s1, a, 2 * dt);
    env::env_step(spec, s2, a, dt);
    env::env_step(spec, s2, a, dt);
    if (!detail::same_state(s1, s2)) return {false, env::env_name(spec) + ": composed steps differ"};
  }
  return {true, "bit-exact on all four environments"};
}

inline Outcome burgers_mass_conservation(std::size_t steps = 100) {
  const auto p = env::default_pde(env::PdeKind::Burgers);
  const env::EnvSpec spec = p;
  auto s = env::env_reset(spec, 5);
  const std::vector<double> zero(p.n_actuators, 0.0);
  double worst = 0.0;
  double m0 = env::field_mass(p, s);
  for (std::size_t k = 0; k < steps; ++k) {
    env::env_step(spec, s, zero, p.dt_default);
    const double m1 = env::field_mass(p, s);
    worst = std::max(worst, std::abs(m1 - m0));
    m0 = m1;
  }
  return {worst < 1e-10, detail::fmt("max per-step mass change %.3g", worst)};
}

inline Outcome wave_energy_drift(std::size_t steps = 100) {
  const auto p = env::default_pde(env::PdeKind::Wave);
  const env::EnvSpec spec = p;
  auto s = env::env_reset(spec, 5);
  const std::vector<double> zero(p.n_actuators, 0.0);
  const double e0 = env::wave_energy(p, s);
  double worst = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    env::env_step(spec, s, zero, p.dt_default);
    worst = std::max(worst, std::abs(env::wave_energy(p, s) - e0) / e0);
  }
  return {worst < 1e-3, detail::fmt("max relative energy drift %.3g", worst)};
}

inline Outcome allen_cahn_fixed_points() {
  const auto p = env::default_pde(env::PdeKind::AllenCahn);
  const env::EnvSpec spec = p;
  const std::vector<double> zero(p.n_actuators, 0.0);
  for (double level : {-1.0, 1.0}) {
    env::State s;
    s.u.assign(p.n_x, level);
    s.psi.assign(p.n_x, 0.0);
    for (int k = 0; k < 50; ++k) env::env_step(spec, s, zero, p.dt_default);
    for (double v : s.u)
      if (std::abs(v - level) > 1e-12) return {false, detail::fmt("u = %g drifted to %.17g", level, v)};
  }
  return {true, "u = +1 and u = -1 stay fixed"};
}

inline Outcome rewards_nonpositive() {
  for (const auto& spec : all_envs()) {
    env::Environment e(spec);
    e.reset(1);
    RandomActor actor(env::action_dim(spec));
    for (std::uint64_t k = 0; k < 20; ++k) {
      const auto r = e.step(actor.act({}, 0, k), env::dt_default(spec));
      if (r.reward > 0.0) return {false, env::env_name(spec) + ": positive LQ reward"};
    }
  }
  return {true, "LQ rewards are <= 0"};
}

// ---------------------------------------------------------------------------
// world model

inline Outcome tau_identities() {
  const bool ok = tau(1e-5) == 0.0 && tau(1e-3) == 2.0 && tau(1.0) == 5.0 && tau(1e-7) == 0.0;
  return {ok, ok ? "tau(1e-5)=0, tau(1e-3)=2, tau(1)=5" : "tau identity violated"};
}

// dt <= 1e-5 leaves the latent unchanged, bitwise, for both integrators.
inline Outcome zero_dt_identity() {
  for (auto integ : {Integrator::Euler, Integrator::RK4}) {
    auto m = make_world_model<double>({6, 2, 5, 12}, integ, 3);
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> z(5), a(2);
      for (auto& v : z) v = rng.uniform(-3, 3);
      for (auto& v : a) v = rng.uniform(-1, 1);
      for (double dt : {1e-5, 3e-6, 1e-9}) {
        if (next_latent<double>(m, z, a, dt) != z) return {false, std::string(to_string(integ)) + ": latent moved"};
        LatentBatch<double> b(m);
        std::vector<double> out(5);
        b.next(z, a, 1, dt, out);
        if (out != z) return {false, std::string(to_string(integ)) + ": batched latent moved"};
      }
    }
  }
  return {true, "z_next == z for dt <= 1e-5 (Euler, RK4)"};
}

// Constant derivative network: the RK4 weights sum to one, so RK4 == Euler.
inline Outcome rk4_constant_derivative() {
  auto m = make_world_model<double>({4, 2, 6, 10}, Integrator::RK4, 9);
  auto e = m;
  e.integrator = Integrator::Euler;
  const std::size_t last = m.dynamics.num_layers() - 1;
  for (auto* net : {&m.dynamics, &e.dynamics}) {
    for (auto& w : net->weights(last)) w = 0.0;
    Rng rng(2);
    for (auto& b : net->bias(last)) b = rng.uniform(-2, 2);
  }
  double worst = 0.0;
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> z(6), a(2);
    for (auto& v : z) v = rng.uniform(-2, 2);
    for (auto& v : a) v = rng.uniform(-1, 1);
    const double dt = std::exp(rng.uniform(std::log(1e-4), std::log(1.0)));
    const auto r = next_latent<double>(m, z, a, dt);
    const auto u = next_latent<double>(e, z, a, dt);
    for (std::size_t i = 0; i < z.size(); ++i) worst = std::max(worst, std::abs(r[i] - u[i]));
  }
  return {worst < 1e-12, detail::fmt("max |rk4 - euler| = %.3g", worst)};
}

struct LossGradReport {
  double max_rel_error = 0.0;
  std::string worst_head;
  bool passed = true;
  std::string failure;
};

// Finite-difference check of every trained head (encoder, dynamics, reward,
// value through the joint loss; policy through its own objective).
inline LossGradReport loss_gradients(std::uint64_t seed, Integrator integ, double tolerance = 1e-4) {
  LossGradReport out;
  const ModelDims dims{5, 2, 4, 8};
  auto m = make_world_model<double>(dims, integ, derive_seed(seed, "props.loss"));
  // Targets differ from the online nets so every loss term is active.
  Rng rng(derive_seed(seed, "props.loss.data"));
  for (auto& v : m.encoder_target.values()) v += 0.05 * rng.normal();
  for (auto& v : m.value_target.values()) v += 0.05 * rng.normal();
  std::vector<std::vector<Transition>> batch(2);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1.0)));
    std::vector<double> o(5);
    for (auto& v : o) v = rng.uniform(-1, 1);
    for (std::uint64_t k = 0; k < 3; ++k) {
      Transition t;
      t.obs = o;
      t.action = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
      for (auto& v : o) v += 0.3 * rng.normal();
      t.next_obs = o;
      t.reward = -rng.uniform(0, 3);
      t.dt = dt;
      t.episode = b;
      t.step = k;
      batch[b].push_back(t);
    }
  }
  const LossConfig cfg;
  const auto span = std::span<const std::vector<Transition>>(batch);
  const auto res = loss_batch<double>(m, span, cfg);
  struct Head {
    const char* name;
    nn::ParamStore<double>* params;
    const nn::ParamStore<double>* grad;
  };
  const Head heads[] = {{"encoder", &m.encoder, &res.grads.encoder},
                        {"dynamics", &m.dynamics, &res.grads.dynamics},
                        {"reward", &m.reward, &res.grads.reward},
                        {"value", &m.value, &res.grads.value}};
  nn::GradCheckOptions opts;
  opts.tolerance = tolerance;
  opts.stencil = 4;
  opts.step = 1e-3;
  for (const auto& h : heads) {
    const auto rep = nn::grad_check(h.params->values(), h.grad->values(),
                                    [&] { return loss_batch<double>(m, span, cfg).total; }, opts);
    if (rep.max_rel_error > out.max_rel_error) {
      out.max_rel_error = rep.max_rel_error;
      out.worst_head = h.name;
    }
    if (!rep.passed && out.passed) {
      out.passed = false;
      out.failure = std::string(h.name) + " (" + h.params->parameter_name(rep.worst_index) + ")";
    }
  }
  const auto pl = policy_loss<double>(m, std::span<const std::vector<double>>(res.latents), res.latent_dt,
                                      res.latent_weight);
  const auto rep = nn::grad_check(
      m.policy.values(), pl.grad.values(),
      [&] {
        return policy_loss<double>(m, std::span<const std::vector<double>>(res.latents), res.latent_dt,
                                   res.latent_weight)
            .loss;
      },
      opts);
  if (rep.max_rel_error > out.max_rel_error) {
    out.max_rel_error = rep.max_rel_error;
    out.worst_head = "policy";
  }
  if (!rep.passed && out.passed) {
    out.passed = false;
    out.failure = "policy (" + m.policy.parameter_name(rep.worst_index) + ")";
  }
  return out;
}

inline Outcome loss_gradients_all(std::size_t seeds = 2) {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    for (auto integ : {Integrator::Euler, Integrator::RK4}) {
      const auto r = loss_gradients(s, integ);
      worst = std::max(worst, r.max_rel_error);
      if (!r.passed) return {false, "seed " + std::to_string(s) + " " + to_string(integ) + ": " + r.failure};
    }
  }
  return {true, detail::fmt("max rel error %.3g", worst)};
}

inline Outcome batch_matches_single() {
  for (auto integ : {Integrator::Euler, Integrator::RK4}) {
    auto m = make_world_model<float>({6, 3, 5, 12}, integ, 21);
    LatentBatch<float> b(m);
    Rng rng(8);
    const std::size_t n = 7;
    std::vector<float> z(n * 5), a(n * 3), zn(n * 5), r(n);
    for (auto& v : z) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : a) v = static_cast<float>(rng.uniform(-1, 1));
    b.next(z, a, n, 0.07, zn);
    b.reward(z, a, n, 0.07, r);
    for (std::size_t i = 0; i < n; ++i) {
      std::span<const float> zi(z.data() + i * 5, 5), ai(a.data() + i * 3, 3);
      const auto single = next_latent<float>(m, zi, ai, 0.07);
      if (!std::equal(single.begin(), single.end(), zn.begin() + i * 5)) return {false, "batched latent differs"};
      if (predict_reward<float>(m, zi, ai, 0.07) != r[i]) return {false, "batched reward differs"};
    }
  }
  return {true, "batched and single-sample paths agree bitwise"};
}

// ---------------------------------------------------------------------------
// planner

inline Outcome planner_bounds_and_determinism() {
  const auto m = detail::tiny_model();
  std::vector<float> z(m.dims.latent_dim);
  Rng rng(1);
  for (auto& v : z) v = static_cast<float>(rng.uniform(-2, 2));
  auto p = detail::tiny_plan();
  p.init_std = 3.0;
  Mppi<float> a(p, m.dims.action_dim), b(p, m.dims.action_dim);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto x = a.plan(m, z, 0.1, s), y = b.plan(m, z, 0.1, s);
    if (x != y) return {false, "same seed gave different actions"};
    for (double v : x)
      if (v < -1.0 || v > 1.0) return {false, "action out of bounds"};
  }
  return {true, "actions within [-1, 1]; repeatable per seed"};
}

inline Outcome planner_shift_invariance() {
  auto m = detail::tiny_model().cast<double>();
  m.symlog_heads = false;
  auto shifted = m;
  // A constant on the value output adds gamma^H * c to every return.
  shifted.value.bias(shifted.value.num_layers() - 1)[0] += 25.0;
  std::vector<double> z(m.dims.latent_dim, 0.3);
  const auto p = detail::tiny_plan();
  Mppi<double> a(p, m.dims.action_dim), b(p, m.dims.action_dim);
  const auto x = a.plan(m, z, 0.1, 4), y = b.plan(shifted, z, 0.1, 4);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
  return {worst < 1e-9, detail::fmt("max action change %.3g", worst)};
}

inline Outcome planner_monotone_elites() {
  const auto m = detail::tiny_model(13);
  auto p = detail::tiny_plan();
  p.iterations = 6;
  Mppi<float> mp(p, m.dims.action_dim);
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    std::vector<float> z(m.dims.latent_dim);
    for (auto& v : z) v = static_cast<float>(rng.uniform(-1, 1));
    mp.reset();
    mp.plan(m, z, 0.2, static_cast<std::uint64_t>(t));
    const auto& h = mp.elite_history();
    for (std::size_t i = 1; i < h.size(); ++i)
      if (h[i] < h[i - 1]) return {false, detail::fmt("elite mean fell from %.6g to %.6g", h[i - 1], h[i])};
  }
  return {true, "mean elite score non-decreasing"};
}

// ---------------------------------------------------------------------------
// trainer

inline Outcome sampler_ks(DtSampling mode, std::size_t n = 10000) {
  DtDistribution d;
  d.mode = mode;
  d.dt_min = 1e-3;
  d.dt_max = 5e-2;
  Rng rng(derive_seed(0, "props.ks", static_cast<std::uint64_t>(mode)));
  std::vector<double> xs(n);
  for (auto& x : xs) x = sample_dt(d, rng);
  const double D = detail::ks_statistic(xs, [&](double x) { return dt_cdf(d, x); });
  const double crit = ks_critical_001(n);
  return {D < crit, detail::fmt("D = %.4g, critical %.4g", D, crit)};
}

inline Outcome buffer_contiguity() {
  ReplayBuffer buf(250);
  Rng rng(3);
  for (std::uint64_t ep = 0; ep < 20; ++ep) {
    const std::size_t len = 20 + rng.index(40);
    for (std::uint64_t k = 0; k < len; ++k) {
      Transition t;
      t.episode = ep;
      t.step = k;
      t.dt = 0.01 * static_cast<double>(ep + 1);
      buf.add(t);
      if (buf.size() > buf.capacity()) return {false, "capacity exceeded"};
    }
  }
  for (const auto& e : buf.episodes())
    if (e.front().step != 0 && &e != &buf.episodes().back()) return {false, "partial episode kept after eviction"};
  const auto batch = buf.sample(2000, 3, rng);
  for (const auto& seq : batch) {
    for (std::size_t k = 1; k < seq.size(); ++k) {
      if (seq[k].episode != seq[0].episode || seq[k].step != seq[k - 1].step + 1 || seq[k].dt != seq[0].dt) {
        return {false, "sampled window crosses an episode boundary"};
      }
    }
  }
  return {true, "2000 windows within single episodes; whole-episode FIFO eviction"};
}

inline Outcome fixed_mode_constant_feature() {
  DtDistribution d;
  d.mode = DtSampling::Fixed;
  d.dt_fixed = 0.1;
  Rng rng(0);
  const double f0 = dt_feature(sample_dt(d, rng));
  for (int i = 0; i < 1000; ++i)
    if (dt_feature(sample_dt(d, rng)) != f0) return {false, "fixed mode produced a varying dt feature"};
  return {true, "dt feature constant in fixed mode"};
}

// ---------------------------------------------------------------------------
// evalkit

inline Outcome report_consistency() {
  const auto m = detail::tiny_model();
  EvalConfig cfg;
  cfg.n_episodes = 3;
  cfg.horizon = 5;
  cfg.plan = detail::tiny_plan();
  const env::EnvSpec spec = env::default_pde(env::PdeKind::Wave);
  const auto r = eval_model(m, spec, 0.2, cfg, 1);
  const double err = std::abs(mean_of(r.episode_rewards) - r.mean_reward);
  return {err <= 1e-12 * std::max(1.0, std::abs(r.mean_reward)), detail::fmt("|mean - reported| = %.3g", err)};
}

inline Outcome action_repeat_k1() {
  const auto m = detail::tiny_model();
  EvalConfig cfg;
  cfg.n_episodes = 2;
  cfg.horizon = 6;
  cfg.plan = detail::tiny_plan();
  const env::EnvSpec spec = env::default_pde(env::PdeKind::Wave);
  const double dt = env::dt_default(spec);
  const auto a = eval_model(m, spec, dt, cfg, 5);
  const auto b = action_repeat_eval(m, spec, dt, dt, cfg, 5);
  const bool ok = a.episode_rewards == b.episode_rewards && b.repeat == 1;
  return {ok, ok ? "k = 1 reproduces the plain evaluator" : "k = 1 trajectories differ"};
}

inline Outcome sweep_serial_parallel() {
  const auto m = detail::tiny_model();
  EvalConfig cfg;
  cfg.n_episodes = 1;
  cfg.horizon = 4;
  cfg.plan = detail::tiny_plan();
  const env::EnvSpec spec = env::default_pde(env::PdeKind::Wave);
  const std::vector<SweepModel> models = {{"a", &m, EvalKind::Plain, 0.0}, {"b", &m, EvalKind::ActionRepeat, 0.1}};
  std::ostringstream s1, s2;
  write_sweep_csv(s1, sweep(models, spec, {0.1, 0.2, 0.4}, {0, 1}, cfg, 1));
  write_sweep_csv(s2, sweep(models, spec, {0.1, 0.2, 0.4}, {0, 1}, cfg, 4));
  return {s1.str() == s2.str(), s1.str() == s2.str() ? "serial and 4-thread CSV identical" : "CSV differs"};
}

// ---------------------------------------------------------------------------
// cli

inline Outcome config_roundtrip() {
  auto c = RunConfig::from_json({{"env", "oscillator"}, {"steps", 123}, {"seeds", {4, 5}}});
  const auto again = RunConfig::from_json(json::parse(c.dump()));
  if (again.dump() != c.dump()) return {false, "echoed config does not reload identically"};
  try {
    RunConfig::from_json({{"no_such_key", 1}});
    return {false, "unknown key accepted"};
  } catch (const ConfigError&) {
  }
  return {true, "echo reloads identically; unknown keys rejected"};
}

// ---------------------------------------------------------------------------

inline std::vector<Property> all() {
  return {
      {"nn.mlp_gradients", [] { return mlp_gradients(); }},
      {"nn.checkpoint_roundtrip", checkpoint_roundtrip},
      {"env.temporal_consistency", temporal_consistency},
      {"env.burgers_mass_conservation", [] { return burgers_mass_conservation(); }},
      {"env.wave_energy_drift", [] { return wave_energy_drift(); }},
      {"env.allen_cahn_fixed_points", allen_cahn_fixed_points},
      {"env.rewards_nonpositive", rewards_nonpositive},
      {"worldmodel.tau_identities", tau_identities},
      {"worldmodel.zero_dt_identity", zero_dt_identity},
      {"worldmodel.rk4_constant_derivative", rk4_constant_derivative},
      {"worldmodel.loss_gradients", [] { return loss_gradients_all(); }},
      {"worldmodel.batch_matches_single", batch_matches_single},
      {"planner.bounds_and_determinism", planner_bounds_and_determinism},
      {"planner.shift_invariance", planner_shift_invariance},
      {"planner.monotone_elites", planner_monotone_elites},
      {"trainer.ks_log_uniform", [] { return sampler_ks(DtSampling::LogUniform); }},
      {"trainer.ks_uniform", [] { return sampler_ks(DtSampling::Uniform); }},
      {"trainer.buffer_contiguity", buffer_contiguity},
      {"trainer.fixed_mode_constant_feature", fixed_mode_constant_feature},
      {"evalkit.report_consistency", report_consistency},
      {"evalkit.action_repeat_k1", action_repeat_k1},
      {"evalkit.sweep_serial_parallel", sweep_serial_parallel},
      {"cli.config_roundtrip", config_roundtrip},
  };
}

}  // namespace tawm::props
