#pragma once

// Control environments with variable observation interval: three periodic 1D
// PDE tasks (Burgers, Allen-Cahn, Wave) and a pair of coupled linear
// oscillators running on different time scales. Every environment advances
// by an integer number of fixed internal sub-steps.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tawm/errors.hpp"
#include "tawm/rng.hpp"

namespace tawm::env {

enum class PdeKind { Burgers, AllenCahn, Wave };

inline const char* to_string(PdeKind k) {
  switch (k) {
    case PdeKind::Burgers: return "burgers";
    case PdeKind::AllenCahn: return "allen-cahn";
    case PdeKind::Wave: return "wave";
  }
  return "burgers";
}

struct PdeSpec {
  PdeKind kind = PdeKind::Burgers;
  double length = 1.0;          // domain [0, L)
  std::size_t n_x = 64;
  double nu = 1e-3;             // Burgers viscosity; Allen-Cahn uses nu^2
  double potential = 5.0;       // Allen-Cahn V
  double wave_speed = 0.1;      // Wave c
  std::size_t n_actuators = 8;
  double actuator_width = 1.0 / 16.0;  // Gaussian sigma of each support bump
  double forcing_gain = 1.0;    // peak of each support bump
  double dt_sim = 1e-3;         // internal sub-step [s]
  double dt_default = 0.05;     // the task's nominal observation interval [s]
  std::vector<double> cost_q;   // diagonal, one entry per observation component
  std::vector<double> cost_r;   // diagonal, one entry per actuator
  double reset_noise = 0.0;     // amplitude of smooth random perturbation of u(x, 0)

  double dx() const { return length / static_cast<double>(n_x); }
  double x(std::size_t i) const { return (static_cast<double>(i) + 0.5) * dx(); }
  std::size_t obs_dim() const { return kind == PdeKind::Wave ? 2 * n_x : n_x; }
  std::size_t action_dim() const { return n_actuators; }
};

// Two oscillators, fast and slow, coupled by a spring of stiffness `coupling`.
// State is (x_fast, v_fast, x_slow, v_slow); action j drives oscillator j.
struct OscSpec {
  double omega_fast = 2.0 * std::numbers::pi * 1.5;
  double omega_slow = 2.0 * std::numbers::pi * 0.15;
  double coupling = 0.2;
  double damping = 0.0;
  double gain_fast = 10.0;
  double gain_slow = 1.0;
  double dt_sim = 1e-3;
  double dt_default = 0.05;
  std::vector<double> cost_q;
  std::vector<double> cost_r;
  double reset_amplitude = 1.0;

  std::size_t obs_dim() const { return 4; }
  std::size_t action_dim() const { return 2; }
};

using EnvSpec = std::variant<PdeSpec, OscSpec>;

inline std::size_t obs_dim(const EnvSpec& s) {
  return std::visit([](const auto& v) { return v.obs_dim(); }, s);
}
inline std::size_t action_dim(const EnvSpec& s) {
  return std::visit([](const auto& v) { return v.action_dim(); }, s);
}
inline double dt_sim(const EnvSpec& s) {
  return std::visit([](const auto& v) { return v.dt_sim; }, s);
}
inline double dt_default(const EnvSpec& s) {
  return std::visit([](const auto& v) { return v.dt_default; }, s);
}
inline const std::vector<double>& cost_q(const EnvSpec& s) {
  return std::visit([](const auto& v) -> const std::vector<double>& { return v.cost_q; }, s);
}
inline const std::vector<double>& cost_r(const EnvSpec& s) {
  return std::visit([](const auto& v) -> const std::vector<double>& { return v.cost_r; }, s);
}
inline std::string env_name(const EnvSpec& s) {
  if (const auto* p = std::get_if<PdeSpec>(&s)) return to_string(p->kind);
  return "oscillator";
}

// Default task configurations. Observation-weighted costs approximate the
// spatial mean square of the field.
inline PdeSpec default_pde(PdeKind kind) {
  PdeSpec s;
  s.kind = kind;
  switch (kind) {
    case PdeKind::Burgers:
      s.length = 1.0;
      s.nu = 1e-3;
      s.dt_sim = 1e-3;
      s.dt_default = 0.05;
      break;
    case PdeKind::AllenCahn:
      s.length = 2.0;
      s.nu = 1e-4;
      s.potential = 5.0;
      s.dt_sim = 1e-3;
      s.dt_default = 0.01;
      break;
    case PdeKind::Wave:
      s.length = 1.0;
      s.wave_speed = 0.1;
      s.dt_sim = 5e-3;
      s.dt_default = 0.1;
      break;
  }
  s.actuator_width = s.length / (2.0 * static_cast<double>(s.n_actuators));
  s.cost_q.assign(s.obs_dim(), 1.0 / static_cast<double>(s.n_x));
  s.cost_r.assign(s.n_actuators, 0.01 / static_cast<double>(s.n_actuators));
  s.reset_noise = 0.1;
  return s;
}

inline OscSpec default_oscillator() {
  OscSpec s;
  s.cost_q = {1.0, 1.0 / (s.omega_fast * s.omega_fast), 1.0, 1.0 / (s.omega_slow * s.omega_slow)};
  s.cost_r = {0.005, 0.005};
  return s;
}

// Field state; for the oscillator `u` holds (x_fast, v_fast, x_slow, v_slow).
struct State {
  std::vector<double> u;
  std::vector<double> psi;  // Wave only
  double t = 0.0;
};

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  double elapsed = 0.0;
  std::size_t substeps = 0;
};

inline std::vector<double> observe(const EnvSpec& spec, const State& s) {
  std::vector<double> o = s.u;
  if (const auto* p = std::get_if<PdeSpec>(&spec); p && p->kind == PdeKind::Wave) {
    o.insert(o.end(), s.psi.begin(), s.psi.end());
  }
  return o;
}

namespace detail {
inline double sech(double x) { return 1.0 / std::cosh(x); }

inline void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NonFiniteError(std::string(what) + " contains a non-finite value");
}

// Periodic second derivative, centered second-order.
inline void laplacian(std::span<const double> u, double dx, std::span<double> out) {
  const std::size_t n = u.size();
  const double inv = 1.0 / (dx * dx);
  for (std::size_t i = 0; i < n; ++i) {
    const double um = u[(i + n - 1) % n], up = u[(i + 1) % n];
    out[i] = (up - 2.0 * u[i] + um) * inv;
  }
}
}  // namespace detail

inline State pde_reset(const PdeSpec& spec, std::uint64_t seed) {
  if (spec.n_x < 16) throw ConfigError("PDE grid needs n_x >= 16");
  State s;
  s.u.resize(spec.n_x);
  for (std::size_t i = 0; i < spec.n_x; ++i) {
    const double x = spec.x(i);
    switch (spec.kind) {
      case PdeKind::Burgers:
      case PdeKind::Wave: s.u[i] = detail::sech(10.0 * x - 5.0); break;
      case PdeKind::AllenCahn: s.u[i] = (x - 1.0) * (x - 1.0) * std::cos(std::numbers::pi * (x - 1.0)); break;
    }
  }
  if (spec.reset_noise > 0.0) {
    Rng rng(derive_seed(seed, "env.reset"));
    for (int m = 1; m <= 3; ++m) {
      const double a = rng.normal() / m, b = rng.normal() / m;
      const double k = 2.0 * std::numbers::pi * m / spec.length;
      for (std::size_t i = 0; i < spec.n_x; ++i) {
        s.u[i] += spec.reset_noise * (a * std::cos(k * spec.x(i)) + b * std::sin(k * spec.x(i))) / 3.0;
      }
    }
  }
  if (spec.kind == PdeKind::Wave) s.psi.assign(spec.n_x, 0.0);
  return s;
}

inline State osc_reset(const OscSpec& spec, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "env.reset"));
  const double a = spec.reset_amplitude;
  State s;
  s.u = {rng.uniform(-a, a), rng.uniform(-a, a) * spec.omega_fast, rng.uniform(-a, a),
         rng.uniform(-a, a) * spec.omega_slow};
  return s;
}

inline State env_reset(const EnvSpec& spec, std::uint64_t seed) {
  return std::visit(
      [&](const auto& s) {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, PdeSpec>)
          return pde_reset(s, seed);
        else
          return osc_reset(s, seed);
      },
      spec);
}

// a(x) = sum_j Phi_j(x) a_j with Gaussian supports centred on a uniform grid.
inline double support(const PdeSpec& spec, std::size_t j, double x) {
  const double centre = (static_cast<double>(j) + 0.5) * spec.length / static_cast<double>(spec.n_actuators);
  double d = std::abs(x - centre);
  d = std::min(d, spec.length - d);
  const double z = d / spec.actuator_width;
  return spec.forcing_gain * std::exp(-0.5 * z * z);
}

inline std::vector<double> forcing_profile(const PdeSpec& spec, std::span<const double> action) {
  if (action.size() != spec.n_actuators) {
    throw ShapeError("forcing_profile: expected " + std::to_string(spec.n_actuators) + " actions, got " +
                     std::to_string(action.size()));
  }
  std::vector<double> f(spec.n_x, 0.0);
  for (std::size_t j = 0; j < spec.n_actuators; ++j) {
    if (action[j] == 0.0) continue;
    for (std::size_t i = 0; i < spec.n_x; ++i) f[i] += support(spec, j, spec.x(i)) * action[j];
  }
  return f;
}

struct Rhs {
  std::vector<double> du;
  std::vector<double> dpsi;  // Wave only
};

// Time derivative of the PDE state with the forcing field added. Burgers uses
// the skew-symmetric split of u u_x, which telescopes to zero on a periodic
// grid and therefore conserves sum(u) exactly.
inline Rhs pde_rhs(const PdeSpec& spec, const State& s, std::span<const double> forcing) {
  detail::require_finite(s.u, "pde state u");
  const std::size_t n = spec.n_x;
  if (s.u.size() != n || forcing.size() != n) throw ShapeError("pde_rhs: field/forcing width != n_x");
  const double dx = spec.dx();
  Rhs r;
  r.du.resize(n);
  std::vector<double> lap(n);
  detail::laplacian(s.u, dx, lap);
  switch (spec.kind) {
    case PdeKind::Burgers: {
      const double inv = 1.0 / (6.0 * dx);
      for (std::size_t i = 0; i < n; ++i) {
        const double um = s.u[(i + n - 1) % n], up = s.u[(i + 1) % n];
        const double adv = ((up * up - um * um) + s.u[i] * (up - um)) * inv;
        r.du[i] = -adv + spec.nu * lap[i] + forcing[i];
      }
      break;
    }
    case PdeKind::AllenCahn: {
      const double nu2 = spec.nu * spec.nu;
      for (std::size_t i = 0; i < n; ++i) {
        const double u = s.u[i];
        r.du[i] = nu2 * lap[i] - spec.potential * (u * u * u - u) + forcing[i];
      }
      break;
    }
    case PdeKind::Wave: {
      detail::require_finite(s.psi, "pde state psi");
      const double c2 = spec.wave_speed * spec.wave_speed;
      r.dpsi.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        r.du[i] = s.psi[i];
        r.dpsi[i] = c2 * lap[i] + forcing[i];
      }
      break;
    }
  }
  return r;
}

// r = -[(s - 0)' Q (s - 0) + a' R a] with diagonal Q, R.
inline double lq_reward(std::span<const double> q, std::span<const double> r, std::span<const double> obs,
                        std::span<const double> action) {
  if (q.size() != obs.size() || r.size() != action.size()) throw ShapeError("lq_reward: cost/state widths differ");
  double cost = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) cost += q[i] * obs[i] * obs[i];
  for (std::size_t j = 0; j < action.size(); ++j) cost += r[j] * action[j] * action[j];
  return -cost;
}

inline double lq_reward(const EnvSpec& spec, const State& s, std::span<const double> action) {
  const auto o = observe(spec, s);
  return lq_reward(cost_q(spec), cost_r(spec), o, action);
}

namespace detail {
inline void check_pde_stability(const PdeSpec& spec, const State& s) {
  double umax = 0.0;
  for (double v : s.u) {
    if (!std::isfinite(v)) throw StabilityError(std::string(to_string(spec.kind)) + ": field blew up (non-finite u)");
    umax = std::max(umax, std::abs(v));
  }
  const double dx = spec.dx(), dt = spec.dt_sim;
  auto fail = [&](const std::string& what, double value, double limit) {
    throw StabilityError(std::string(to_string(spec.kind)) + ": " + what + " = " + std::to_string(value) +
                         " exceeds " + std::to_string(limit) + " (dt_sim=" + std::to_string(dt) + ")");
  };
  switch (spec.kind) {
    case PdeKind::Burgers: {
      const double cfl = umax * dt / dx;
      if (cfl > 1.0) fail("advective CFL |u| dt/dx", cfl, 1.0);
      const double diff = spec.nu * dt / (dx * dx);
      if (diff > 0.5) fail("diffusion number nu dt/dx^2", diff, 0.5);
      break;
    }
    case PdeKind::AllenCahn: {
      const double diff = spec.nu * spec.nu * dt / (dx * dx);
      if (diff > 0.5) fail("diffusion number nu^2 dt/dx^2", diff, 0.5);
      const double react = spec.potential * dt * std::abs(3.0 * umax * umax - 1.0);
      if (react > 2.5) fail("reaction stiffness V dt |3u^2-1|", react, 2.5);
      break;
    }
    case PdeKind::Wave: {
      const double cfl = spec.wave_speed * dt / dx;
      if (cfl > 1.0) fail("wave CFL c dt/dx", cfl, 1.0);
      for (double v : s.psi)
        if (!std::isfinite(v)) throw StabilityError("wave: field blew up (non-finite psi)");
      break;
    }
  }
}

inline void axpy_into(std::span<const double> base, double h, std::span<const double> k, std::vector<double>& out) {
  out.resize(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i] + h * k[i];
}

// One explicit RK4 sub-step for Burgers / Allen-Cahn.
inline void rk4_substep(const PdeSpec& spec, State& s, std::span<const double> forcing) {
  const double h = spec.dt_sim;
  State tmp;
  const Rhs k1 = pde_rhs(spec, s, forcing);
  axpy_into(s.u, 0.5 * h, k1.du, tmp.u);
  const Rhs k2 = pde_rhs(spec, tmp, forcing);
  axpy_into(s.u, 0.5 * h, k2.du, tmp.u);
  const Rhs k3 = pde_rhs(spec, tmp, forcing);
  axpy_into(s.u, h, k3.du, tmp.u);
  const Rhs k4 = pde_rhs(spec, tmp, forcing);
  for (std::size_t i = 0; i < s.u.size(); ++i) {
    s.u[i] += h / 6.0 * (k1.du[i] + 2.0 * k2.du[i] + 2.0 * k3.du[i] + k4.du[i]);
  }
}

// Velocity-Verlet (kick-drift-kick) sub-step for the wave equation.
inline void leapfrog_substep(const PdeSpec& spec, State& s, std::span<const double> forcing) {
  const double h = spec.dt_sim, c2 = spec.wave_speed * spec.wave_speed;
  const std::size_t n = spec.n_x;
  std::vector<double> lap(n);
  detail::laplacian(s.u, spec.dx(), lap);
  for (std::size_t i = 0; i < n; ++i) s.psi[i] += 0.5 * h * (c2 * lap[i] + forcing[i]);
  for (std::size_t i = 0; i < n; ++i) s.u[i] += h * s.psi[i];
  detail::laplacian(s.u, spec.dx(), lap);
  for (std::size_t i = 0; i < n; ++i) s.psi[i] += 0.5 * h * (c2 * lap[i] + forcing[i]);
}

inline void osc_accel(const OscSpec& spec, const std::vector<double>& u, std::span<const double> action, double& af,
                      double& as) {
  const double xf = u[0], vf = u[1], xs = u[2], vs = u[3];
  af = -spec.omega_fast * spec.omega_fast * xf - spec.coupling * (xf - xs) - spec.damping * vf +
       spec.gain_fast * action[0];
  as = -spec.omega_slow * spec.omega_slow * xs - spec.coupling * (xs - xf) - spec.damping * vs +
       spec.gain_slow * action[1];
}

// Velocity-Verlet sub-step; damping is evaluated at the start-of-step velocity.
inline void osc_substep(const OscSpec& spec, State& s, std::span<const double> action) {
  const double h = spec.dt_sim;
  double af, as;
  osc_accel(spec, s.u, action, af, as);
  s.u[1] += 0.5 * h * af;
  s.u[3] += 0.5 * h * as;
  s.u[0] += h * s.u[1];
  s.u[2] += h * s.u[3];
  osc_accel(spec, s.u, action, af, as);
  s.u[1] += 0.5 * h * af;
  s.u[3] += 0.5 * h * as;
}
}  // namespace detail

inline std::size_t substep_count(double dt, double dt_sim) {
  if (!(dt > 0.0)) throw ConfigError("env_step: dt must be positive, got " + std::to_string(dt));
  const long long k = std::llround(dt / dt_sim);
  if (k < 1) {
    throw ConfigError("env_step: dt=" + std::to_string(dt) + " is shorter than the simulation step " +
                      std::to_string(dt_sim));
  }
  return static_cast<std::size_t>(k);
}

inline double realized_dt(double dt, double dt_sim) { return static_cast<double>(substep_count(dt, dt_sim)) * dt_sim; }

// Advances `s` by round(dt / dt_sim) sub-steps with the action held fixed and
// evaluates one LQ reward at the resulting state.
inline StepResult env_step(const EnvSpec& spec, State& s, std::span<const double> action, double dt) {
  const std::size_t k = substep_count(dt, tawm::env::dt_sim(spec));
  if (action.size() != action_dim(spec)) {
    throw ShapeError("env_step: expected " + std::to_string(action_dim(spec)) + " actions, got " +
                     std::to_string(action.size()));
  }
  std::vector<double> a(action.begin(), action.end());
  for (auto& v : a) v = std::clamp(v, -1.0, 1.0);
  if (const auto* p = std::get_if<PdeSpec>(&spec)) {
    const auto forcing = forcing_profile(*p, a);
    for (std::size_t i = 0; i < k; ++i) {
      detail::check_pde_stability(*p, s);
      if (p->kind == PdeKind::Wave)
        detail::leapfrog_substep(*p, s, forcing);
      else
        detail::rk4_substep(*p, s, forcing);
      s.t += p->dt_sim;
    }
    detail::check_pde_stability(*p, s);
  } else {
    const auto& o = std::get<OscSpec>(spec);
    for (std::size_t i = 0; i < k; ++i) {
      detail::osc_substep(o, s, a);
      s.t += o.dt_sim;
    }
    for (double v : s.u)
      if (!std::isfinite(v)) throw StabilityError("oscillator: state blew up");
  }
  StepResult r;
  r.observation = observe(spec, s);
  r.reward = lq_reward(cost_q(spec), cost_r(spec), r.observation, a);
  r.substeps = k;
  r.elapsed = static_cast<double>(k) * tawm::env::dt_sim(spec);
  return r;
}

// Stateful convenience wrapper.
class Environment {
 public:
  explicit Environment(EnvSpec spec) : spec_(std::move(spec)) {}

  std::vector<double> reset(std::uint64_t seed) {
    state_ = env_reset(spec_, seed);
    return observe(spec_, state_);
  }

  StepResult step(std::span<const double> action, double dt) { return env_step(spec_, state_, action, dt); }

  const EnvSpec& spec() const { return spec_; }
  const State& state() const { return state_; }
  State& state() { return state_; }

 private:
  EnvSpec spec_;
  State state_;
};

// Discrete wave energy 0.5 * sum(psi^2 + c^2 (forward-difference u_x)^2) dx.
inline double wave_energy(const PdeSpec& spec, const State& s) {
  const std::size_t n = spec.n_x;
  const double dx = spec.dx(), c2 = spec.wave_speed * spec.wave_speed;
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ux = (s.u[(i + 1) % n] - s.u[i]) / dx;
    e += s.psi[i] * s.psi[i] + c2 * ux * ux;
  }
  return 0.5 * e * dx;
}

inline double field_mass(const PdeSpec& spec, const State& s) {
  double m = 0.0;
  for (double v : s.u) m += v;
  return m * spec.dx();
}

// Oscillator amplitudes sqrt(x^2 + (v/omega)^2), fast first.
inline std::pair<double, double> osc_amplitudes(const OscSpec& spec, const State& s) {
  return {std::hypot(s.u[0], s.u[1] / spec.omega_fast), std::hypot(s.u[2], s.u[3] / spec.omega_slow)};
}

struct TrajectoryRow {
  double t = 0.0;
  double dt = 0.0;
  double reward = 0.0;
  std::vector<double> observation;
};

// CSV: t,dt,r,u_0..u_{n-1}[,psi_0..psi_{n-1}]
inline void write_trajectory_csv(std::ostream& os, const EnvSpec& spec, std::span<const TrajectoryRow> rows) {
  os << "t,dt,r";
  const std::size_t n = obs_dim(spec);
  const bool wave = std::holds_alternative<PdeSpec>(spec) && std::get<PdeSpec>(spec).kind == PdeKind::Wave;
  const std::size_t nu = wave ? n / 2 : n;
  for (std::size_t i = 0; i < nu; ++i) os << ",u_" << i;
  if (wave)
    for (std::size_t i = 0; i < nu; ++i) os << ",psi_" << i;
  os << '\n';
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  for (const auto& r : rows) {
    put(r.t);
    os << ',';
    put(r.dt);
    os << ',';
    put(r.reward);
    for (double v : r.observation) {
      os << ',';
      put(v);
    }
    os << '\n';
  }
}

}  // namespace tawm::env
