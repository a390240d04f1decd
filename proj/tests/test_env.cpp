#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "tawm/env.hpp"
#include "tawm/properties.hpp"

using namespace tawm;
using namespace tawm::env;

namespace {

PdeSpec quiet(PdeKind k) {
  auto s = default_pde(k);
  s.reset_noise = 0.0;
  return s;
}

// Periodic derivative by a naive DFT; the Nyquist mode is dropped.
std::vector<double> spectral_derivative(const std::vector<double>& f, double length) {
  const std::size_t n = f.size();
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<std::complex<double>> F(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j) F[k] += f[j] * std::polar(1.0, -two_pi * double(k * j % n) / double(n));
  for (std::size_t k = 0; k < n; ++k) {
    const long kk = k < n / 2 ? long(k) : (k == n / 2 ? 0 : long(k) - long(n));
    F[k] *= std::complex<double>(0.0, two_pi * double(kk) / length);
  }
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::complex<double> acc;
    for (std::size_t k = 0; k < n; ++k) acc += F[k] * std::polar(1.0, two_pi * double(k * j % n) / double(n));
    out[j] = acc.real() / double(n);
  }
  return out;
}

}  // namespace

TEST(Env, BurgersResetIsSech) {
  const auto s = quiet(PdeKind::Burgers);
  const auto st = pde_reset(s, 0);
  ASSERT_EQ(st.u.size(), 64u);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_DOUBLE_EQ(st.u[i], 1.0 / std::cosh(10.0 * s.x(i) - 5.0));
  EXPECT_TRUE(st.psi.empty());
}

TEST(Env, AllenCahnResetVanishesAtCentre) {
  const auto s = quiet(PdeKind::AllenCahn);
  const auto st = pde_reset(s, 0);
  for (std::size_t i = 0; i < s.n_x; ++i) {
    const double x = s.x(i);
    EXPECT_DOUBLE_EQ(st.u[i], (x - 1) * (x - 1) * std::cos(std::numbers::pi * (x - 1)));
    if (std::abs(x - 1.0) < s.dx()) {
      EXPECT_LT(std::abs(st.u[i]), s.dx() * s.dx());
    }
  }
}

TEST(Env, WaveResetHasZeroVelocity) {
  const auto st = pde_reset(default_pde(PdeKind::Wave), 3);
  ASSERT_EQ(st.psi.size(), 64u);
  for (double v : st.psi) EXPECT_EQ(v, 0.0);
}

TEST(Env, ResetNoiseIsSeeded) {
  const auto s = default_pde(PdeKind::Burgers);
  EXPECT_EQ(pde_reset(s, 5).u, pde_reset(s, 5).u);
  EXPECT_NE(pde_reset(s, 5).u, pde_reset(s, 6).u);
  const auto o = default_oscillator();
  EXPECT_EQ(osc_reset(o, 1).u, osc_reset(o, 1).u);
}

TEST(Env, RhsOfConstantBurgersFieldVanishes) {
  const auto s = quiet(PdeKind::Burgers);
  State st{std::vector<double>(s.n_x, 0.7), {}, 0.0};
  const auto r = pde_rhs(s, st, std::vector<double>(s.n_x, 0.0));
  for (double v : r.du) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Env, AllenCahnPhaseEquilibrium) {
  const auto s = quiet(PdeKind::AllenCahn);
  for (double level : {1.0, -1.0}) {
    State st{std::vector<double>(s.n_x, level), {}, 0.0};
    const auto r = pde_rhs(s, st, std::vector<double>(s.n_x, 0.0));
    for (double v : r.du) EXPECT_EQ(v, 0.0);
  }
}

TEST(Env, BurgersRhsMatchesSpectralOracle) {
  auto s = quiet(PdeKind::Burgers);
  s.n_x = 256;
  s.nu = 1e-3;
  State st;
  st.u.resize(s.n_x);
  for (std::size_t i = 0; i < s.n_x; ++i) st.u[i] = std::sin(2.0 * std::numbers::pi * s.x(i));
  const auto ux = spectral_derivative(st.u, s.length);
  const auto uxx = spectral_derivative(ux, s.length);
  const auto r = pde_rhs(s, st, std::vector<double>(s.n_x, 0.0));
  double err = 0.0;
  for (std::size_t i = 0; i < s.n_x; ++i) err = std::max(err, std::abs(r.du[i] - (-st.u[i] * ux[i] + s.nu * uxx[i])));
  EXPECT_LT(err, 1e-3);
}

TEST(Env, RhsRejectsNonFiniteState) {
  const auto s = quiet(PdeKind::Burgers);
  State st{std::vector<double>(s.n_x, 0.0), {}, 0.0};
  st.u[3] = std::nan("");
  EXPECT_THROW(pde_rhs(s, st, std::vector<double>(s.n_x, 0.0)), NonFiniteError);
}

TEST(Env, ForcingProfile) {
  const auto s = quiet(PdeKind::Burgers);
  std::vector<double> a(s.n_actuators, 0.0);
  for (double v : forcing_profile(s, a)) EXPECT_EQ(v, 0.0);
  a[2] = 1.0;
  const auto one = forcing_profile(s, a);
  for (std::size_t i = 0; i < s.n_x; ++i) EXPECT_EQ(one[i], support(s, 2, s.x(i)));
  std::fill(a.begin(), a.end(), 1.0);
  const auto all = forcing_profile(s, a);
  for (std::size_t i = 0; i < s.n_x; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < s.n_actuators; ++j) sum += support(s, j, s.x(i));
    EXPECT_NEAR(all[i], sum, 1e-15);
    EXPECT_GT(all[i], 0.0);
  }
  EXPECT_THROW(forcing_profile(s, std::vector<double>(3, 0.0)), ShapeError);
}

TEST(Env, LqReward) {
  const std::vector<double> q(4, 1.0), r(2, 1.0);
  EXPECT_EQ(lq_reward(q, r, std::vector<double>(4, 0.0), std::vector<double>(2, 0.0)), 0.0);
  const std::vector<double> u = {1.0, 0.0, -1.0, 0.0};
  EXPECT_EQ(lq_reward(q, r, u, std::vector<double>(2, 0.0)), -2.0);

  Rng rng(12);
  std::vector<double> qq(6), rr(3), o(6), a(3);
  for (auto* v : {&qq, &rr}) for (auto& x : *v) x = rng.uniform(0, 2);
  for (auto* v : {&o, &a}) for (auto& x : *v) x = rng.uniform(-1, 1);
  double expect = 0.0;
  for (std::size_t i = 0; i < 6; ++i) expect -= o[i] * qq[i] * o[i];
  for (std::size_t j = 0; j < 3; ++j) expect -= a[j] * rr[j] * a[j];
  EXPECT_NEAR(lq_reward(qq, rr, o, a), expect, 1e-14);
  EXPECT_LE(lq_reward(qq, rr, o, a), 0.0);
}

TEST(Env, StepComposesSubsteps) {
  for (const EnvSpec& spec : props::all_envs()) {
    const double h = dt_sim(spec);
    std::vector<double> a(action_dim(spec));
    for (std::size_t j = 0; j < a.size(); ++j) a[j] = 0.3 - 0.1 * double(j);
    auto s1 = env_reset(spec, 4), s2 = s1;
    const auto r = env_step(spec, s1, a, 2 * h);
    env_step(spec, s2, a, h);
    const auto r2 = env_step(spec, s2, a, h);
    EXPECT_EQ(s1.u, s2.u) << env_name(spec);
    EXPECT_EQ(s1.psi, s2.psi);
    EXPECT_EQ(r.observation, r2.observation);
    EXPECT_EQ(r.reward, r2.reward);
    EXPECT_EQ(r.substeps, 2u);
  }
}

TEST(Env, DtIsRoundedToSubstepMultiple) {
  const EnvSpec spec = quiet(PdeKind::Burgers);
  auto s = env_reset(spec, 0);
  const auto r = env_step(spec, s, std::vector<double>(8, 0.0), 0.0504);
  EXPECT_EQ(r.substeps, 50u);
  EXPECT_DOUBLE_EQ(r.elapsed, 50 * 1e-3);
  EXPECT_THROW(env_step(spec, s, std::vector<double>(8, 0.0), 1e-4), ConfigError);
  EXPECT_THROW(env_step(spec, s, std::vector<double>(3, 0.0), 0.05), ShapeError);
}

TEST(Env, UnstableStateIsReported) {
  const EnvSpec spec = quiet(PdeKind::Burgers);
  State s{std::vector<double>(64, 100.0), {}, 0.0};
  EXPECT_THROW(env_step(spec, s, std::vector<double>(8, 0.0), 0.05), StabilityError);
  auto w = quiet(PdeKind::Wave);
  w.dt_sim = 0.5;  // c dt / dx = 3.2
  const EnvSpec ws = w;
  auto st = env_reset(ws, 0);
  EXPECT_THROW(env_step(ws, st, std::vector<double>(8, 0.0), 0.5), StabilityError);
}

TEST(Env, WaveEnergyNearlyConserved) {
  const auto s = quiet(PdeKind::Wave);
  const EnvSpec spec = s;
  auto st = env_reset(spec, 0);
  const double e0 = wave_energy(s, st);
  env_step(spec, st, std::vector<double>(8, 0.0), 100 * s.dt_sim);
  EXPECT_LT(std::abs(wave_energy(s, st) - e0) / e0, 1e-3);
}

TEST(Env, BurgersMassConserved) {
  const auto s = default_pde(PdeKind::Burgers);
  const EnvSpec spec = s;
  auto st = env_reset(spec, 9);
  for (int k = 0; k < 20; ++k) {
    const double m0 = field_mass(s, st);
    env_step(spec, st, std::vector<double>(8, 0.0), s.dt_sim);
    EXPECT_LT(std::abs(field_mass(s, st) - m0), 1e-10);
  }
}

TEST(Env, UncoupledOscillatorKeepsAmplitude) {
  auto o = default_oscillator();
  o.coupling = 0.0;
  const EnvSpec spec = o;
  auto st = env_reset(spec, 2);
  const auto [f0, s0] = osc_amplitudes(o, st);
  env_step(spec, st, std::vector<double>(2, 0.0), 1e4 * o.dt_sim);
  const auto [f1, s1] = osc_amplitudes(o, st);
  EXPECT_LT(std::abs(f1 - f0) / f0, 1e-3);
  EXPECT_LT(std::abs(s1 - s0) / s0, 1e-3);
}

TEST(Env, TrajectoryCsvHeader) {
  const EnvSpec spec = quiet(PdeKind::Wave);
  std::vector<TrajectoryRow> rows = {{0.1, 0.1, -1.5, std::vector<double>(128, 0.0)}};
  std::ostringstream os;
  write_trajectory_csv(os, spec, rows);
  const auto text = os.str();
  EXPECT_EQ(text.rfind("t,dt,r,u_0,", 0), 0u);
  EXPECT_NE(text.find(",u_63,psi_0,"), std::string::npos);
  EXPECT_NE(text.find("psi_63\n0.10000000000000001,0.10000000000000001,-1.5,0,"), std::string::npos);
}

TEST(Env, Properties) {
  for (auto o : {props::temporal_consistency(), props::burgers_mass_conservation(), props::wave_energy_drift(),
                 props::allen_cahn_fixed_points(), props::rewards_nonpositive()}) {
    EXPECT_TRUE(o.passed) << o.detail;
  }
}
