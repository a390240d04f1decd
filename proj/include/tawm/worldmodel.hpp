#pragma once

// Time-aware latent world model: encoder h(o), latent derivative d(z, a, dt)
// integrated with the tau(dt) warp (Euler or RK4), reward R(z, a, dt), value
// Q(z, a, dt) and policy prior p(z, dt). The observation encoder is the only
// component that does not see dt.

#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tawm/errors.hpp"
#include "tawm/nn.hpp"
#include "tawm/rng.hpp"
#include "tawm/transition.hpp"

namespace tawm {

enum class Integrator { Euler, RK4 };

inline const char* to_string(Integrator i) { return i == Integrator::Euler ? "euler" : "rk4"; }

inline Integrator integrator_from_string(const std::string& s) {
  if (s == "euler") return Integrator::Euler;
  if (s == "rk4") return Integrator::RK4;
  throw ConfigError("unknown integrator '" + s + "' (expected euler|rk4)");
}

// tau(dt) = max(0, log10(dt) + 5); zero for dt <= 1e-5.
inline double tau(double dt) {
  if (!(dt > 0.0)) throw ConfigError("tau: dt must be positive, got " + std::to_string(dt));
  return std::max(0.0, std::log10(dt) + 5.0);
}

// Network input encoding of dt: tau(dt) / 5, i.e. [0, 1] for dt in [1e-5, 1].
inline double dt_feature(double dt) { return tau(dt) / 5.0; }

// Reward and value heads regress symlog(target) when WorldModel::symlog_heads
// is set; their outputs are mapped back with symexp.
inline double symlog(double x) { return std::copysign(std::log1p(std::abs(x)), x); }
inline double symexp(double x) { return std::copysign(std::expm1(std::abs(x)), x); }

// Decoded head outputs are read from a bounded symlog range so that a latent
// far outside the training data cannot overflow float. NaN passes through.
inline constexpr double kSymlogBound = 20.0;
inline double decode_head(double raw) {
  return symexp(raw > kSymlogBound ? kSymlogBound : (raw < -kSymlogBound ? -kSymlogBound : raw));
}

// I(dt) = (dt / tau(dt)) * (tau(dt_bar) / dt_bar).
inline double interpolation_factor(double dt, double dt_bar) {
  const double t = tau(dt), tb = tau(dt_bar);
  if (t == 0.0 || tb == 0.0) throw ConfigError("interpolation_factor: tau vanishes (dt <= 1e-5)");
  return (dt / t) * (tb / dt_bar);
}

struct ModelDims {
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  std::size_t latent_dim = 32;
  std::size_t hidden_dim = 64;

  std::size_t head_input() const { return latent_dim + action_dim + 1; }
  bool operator==(const ModelDims&) const = default;
};

template <class T>
struct WorldModel {
  ModelDims dims;
  Integrator integrator = Integrator::Euler;
  double target_ema = 0.995;  // target <- ema * target + (1 - ema) * online
  bool symlog_heads = true;

  double head_out(double raw) const { return symlog_heads ? decode_head(raw) : raw; }
  double head_target(double y) const { return symlog_heads ? symlog(y) : y; }

  nn::ParamStore<T> encoder;
  nn::ParamStore<T> dynamics;
  nn::ParamStore<T> reward;
  nn::ParamStore<T> value;
  nn::ParamStore<T> policy;
  nn::ParamStore<T> encoder_target;
  nn::ParamStore<T> value_target;

  template <class U>
  WorldModel<U> cast() const {
    WorldModel<U> m;
    m.dims = dims;
    m.integrator = integrator;
    m.target_ema = target_ema;
    m.symlog_heads = symlog_heads;
    m.encoder = encoder.template cast<U>();
    m.dynamics = dynamics.template cast<U>();
    m.reward = reward.template cast<U>();
    m.value = value.template cast<U>();
    m.policy = policy.template cast<U>();
    m.encoder_target = encoder_target.template cast<U>();
    m.value_target = value_target.template cast<U>();
    return m;
  }
};

inline nn::MlpSpec head_spec(std::string name, std::size_t in, std::size_t hidden, std::size_t out,
                             nn::Activation output = nn::Activation::Identity) {
  return {std::move(name), {in, hidden, hidden, out}, nn::Activation::SiLU, output};
}

// Builds a model with seeded fan-in initialisation; target networks start as
// copies of their online counterparts.
template <class T>
WorldModel<T> make_world_model(const ModelDims& dims, Integrator integrator, std::uint64_t seed) {
  if (dims.obs_dim == 0 || dims.action_dim == 0 || dims.latent_dim == 0 || dims.hidden_dim == 0) {
    throw ConfigError("make_world_model: every model dimension must be positive");
  }
  WorldModel<T> m;
  m.dims = dims;
  m.integrator = integrator;
  const std::size_t h = dims.hidden_dim, z = dims.latent_dim, in = dims.head_input();
  auto init = [&](const nn::MlpSpec& spec) {
    Rng rng(derive_seed(seed, "model.init." + spec.name));
    return nn::make_params<T>(spec, rng);
  };
  // Bounded latents: an unbounded encoder drifts in scale under mixed-dt consistency targets.
  m.encoder = init(head_spec("encoder", dims.obs_dim, h, z, nn::Activation::Tanh));
  m.dynamics = init(head_spec("dynamics", in, h, z));
  m.reward = init(head_spec("reward", in, h, 1));
  m.value = init(head_spec("value", in, h, 1));
  m.policy = init(head_spec("policy", z + 1, h, dims.action_dim, nn::Activation::Tanh));
  m.encoder_target = m.encoder;
  m.encoder_target.set_name("encoder_target");
  m.value_target = m.value;
  m.value_target.set_name("value_target");
  return m;
}

namespace detail {
template <class T>
void require_finite(std::span<const T> v, const std::string& what) {
  for (T x : v)
    if (!std::isfinite(static_cast<double>(x))) throw NonFiniteError(what + ": non-finite value");
}

template <class T>
std::vector<T> head_input(std::span<const T> z, std::span<const T> a, double dt) {
  std::vector<T> x;
  x.reserve(z.size() + a.size() + 1);
  x.insert(x.end(), z.begin(), z.end());
  x.insert(x.end(), a.begin(), a.end());
  x.push_back(static_cast<T>(dt_feature(dt)));
  return x;
}

template <class T>
void check_za(const WorldModel<T>& m, std::span<const T> z, std::span<const T> a, const char* op) {
  if (z.size() != m.dims.latent_dim || a.size() != m.dims.action_dim) {
    throw ShapeError(std::string(op) + ": latent/action widths " + std::to_string(z.size()) + "/" +
                     std::to_string(a.size()) + " do not match model " + std::to_string(m.dims.latent_dim) + "/" +
                     std::to_string(m.dims.action_dim));
  }
}
}  // namespace detail

template <class T>
std::vector<T> encode(const WorldModel<T>& m, std::span<const T> obs) {
  return nn::mlp_infer(m.encoder, obs);
}

// The raw derivative network d(z, a, dt).
template <class T>
std::vector<T> latent_derivative(const WorldModel<T>& m, std::span<const T> z, std::span<const T> a, double dt) {
  detail::check_za(m, z, a, "latent_derivative");
  const auto x = detail::head_input(z, a, dt);
  return nn::mlp_infer(m.dynamics, std::span<const T>(x));
}

template <class T>
std::vector<T> dynamics_euler(const WorldModel<T>& m, std::span<const T> z, std::span<const T> a, double dt) {
  const T t = static_cast<T>(tau(dt));
  const auto d = latent_derivative(m, z, a, dt);
  std::vector<T> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] + d[i] * t;
  detail::require_finite<T>(out, "dynamics_euler");
  return out;
}

// Four-stage integration with half-step midpoints advanced by tau(dt/2).
template <class T>
std::vector<T> dynamics_rk4(const WorldModel<T>& m, std::span<const T> z, std::span<const T> a, double dt) {
  const T t = static_cast<T>(tau(dt)), th = static_cast<T>(tau(dt / 2));
  const std::size_t n = z.size();
  auto advance = [&](std::span<const T> d, T scale, const char* stage) {
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = z[i] + d[i] * scale;
    detail::require_finite<T>(out, std::string("dynamics_rk4 ") + stage);
    return out;
  };
  const auto k1 = latent_derivative(m, z, a, dt);
  const auto z1 = advance(latent_derivative(m, z, a, dt / 2), th, "midpoint 1");
  const auto k2 = latent_derivative<T>(m, z1, a, dt);
  const auto z2 = advance(latent_derivative<T>(m, z1, a, dt / 2), th, "midpoint 2");
  const auto k3 = latent_derivative<T>(m, z2, a, dt);
  const auto z3 = advance(k3, t, "endpoint");
  const auto k4 = latent_derivative<T>(m, z3, a, dt);
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = z[i] + (k1[i] + T(2) * k2[i] + T(2) * k3[i] + k4[i]) / T(6) * t;
  detail::require_finite<T>(out, "dynamics_rk4 output");
  return out;
}

template <class T>
std::vector<T> next_latent(const WorldModel<T>& m, std::span<const T> z, std::span<const T> a, double dt) {
  return m.integrator == Integrator::Euler ? dynamics_euler(m, z, a, dt) : dynamics_rk4(m, z, a, dt);
}

template <class T>
T predict_reward(const WorldModel<T>& m, std::span<const T> z, std::span<const T> a, double dt) {
  detail::check_za(m, z, a, "predict_reward");
  const auto x = detail::head_input(z, a, dt);
  return static_cast<T>(m.head_out(static_cast<double>(nn::mlp_infer(m.reward, std::span<const T>(x))[0])));
}

template <class T>
T predict_value(const WorldModel<T>& m, std::span<const T> z, std::span<const T> a, double dt) {
  detail::check_za(m, z, a, "predict_value");
  const auto x = detail::head_input(z, a, dt);
  return static_cast<T>(m.head_out(static_cast<double>(nn::mlp_infer(m.value, std::span<const T>(x))[0])));
}

template <class T>
std::vector<T> policy_prior(const WorldModel<T>& m, std::span<const T> z, double dt) {
  if (z.size() != m.dims.latent_dim) throw ShapeError("policy_prior: latent width mismatch");
  std::vector<T> x(z.begin(), z.end());
  x.push_back(static_cast<T>(dt_feature(dt)));
  return nn::mlp_infer(m.policy, std::span<const T>(x));
}

// ---------------------------------------------------------------------------
// Batched, tape-free evaluation used by the planner. All buffers are row-major
// with one row per sample. Arithmetic matches the single-sample functions.

template <class T>
class LatentBatch {
 public:
  explicit LatentBatch(const WorldModel<T>& m) : m_(&m) {}

  void next(std::span<const T> z, std::span<const T> a, std::size_t batch, double dt, std::span<T> out) {
    const std::size_t nz = m_->dims.latent_dim;
    const T t = static_cast<T>(tau(dt));
    const T ff = static_cast<T>(dt_feature(dt));
    if (m_->integrator == Integrator::Euler) {
      derivative(z, a, batch, ff, k1_);
      for (std::size_t i = 0; i < batch * nz; ++i) out[i] = z[i] + k1_[i] * t;
      return;
    }
    const T th = static_cast<T>(tau(dt / 2));
    const T fh = static_cast<T>(dt_feature(dt / 2));
    auto advance = [&](const std::vector<T>& d, T scale, std::vector<T>& dst) {
      dst.resize(batch * nz);
      for (std::size_t i = 0; i < batch * nz; ++i) dst[i] = z[i] + d[i] * scale;
    };
    derivative(z, a, batch, ff, k1_);
    derivative(z, a, batch, fh, tmp_);
    advance(tmp_, th, z1_);
    derivative(z1_, a, batch, ff, k2_);
    derivative(z1_, a, batch, fh, tmp_);
    advance(tmp_, th, z2_);
    derivative(z2_, a, batch, ff, k3_);
    advance(k3_, t, z3_);
    derivative(z3_, a, batch, ff, k4_);
    for (std::size_t i = 0; i < batch * nz; ++i)
      out[i] = z[i] + (k1_[i] + T(2) * k2_[i] + T(2) * k3_[i] + k4_[i]) / T(6) * t;
  }

  void reward(std::span<const T> z, std::span<const T> a, std::size_t batch, double dt, std::span<T> out) {
    pack(z, a, batch, static_cast<T>(dt_feature(dt)));
    nn::mlp_infer_batch(m_->reward, std::span<const T>(x_), batch, out, scratch_);
    unscale(out, batch);
  }

  void value(std::span<const T> z, std::span<const T> a, std::size_t batch, double dt, std::span<T> out) {
    pack(z, a, batch, static_cast<T>(dt_feature(dt)));
    nn::mlp_infer_batch(m_->value, std::span<const T>(x_), batch, out, scratch_);
    unscale(out, batch);
  }

  void policy(std::span<const T> z, std::size_t batch, double dt, std::span<T> out) {
    const std::size_t nz = m_->dims.latent_dim;
    const T f = static_cast<T>(dt_feature(dt));
    x_.resize(batch * (nz + 1));
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(z.data() + b * nz, nz, x_.data() + b * (nz + 1));
      x_[b * (nz + 1) + nz] = f;
    }
    nn::mlp_infer_batch(m_->policy, std::span<const T>(x_), batch, out, scratch_);
  }

 private:
  void unscale(std::span<T> out, std::size_t batch) const {
    if (!m_->symlog_heads) return;
    for (std::size_t b = 0; b < batch; ++b) out[b] = static_cast<T>(decode_head(static_cast<double>(out[b])));
  }

  void pack(std::span<const T> z, std::span<const T> a, std::size_t batch, T f) {
    const std::size_t nz = m_->dims.latent_dim, na = m_->dims.action_dim, w = nz + na + 1;
    x_.resize(batch * w);
    for (std::size_t b = 0; b < batch; ++b) {
      T* row = x_.data() + b * w;
      std::copy_n(z.data() + b * nz, nz, row);
      std::copy_n(a.data() + b * na, na, row + nz);
      row[nz + na] = f;
    }
  }

  void derivative(std::span<const T> z, std::span<const T> a, std::size_t batch, T f, std::vector<T>& out) {
    pack(z, a, batch, f);
    out.resize(batch * m_->dims.latent_dim);
    nn::mlp_infer_batch(m_->dynamics, std::span<const T>(x_), batch, std::span<T>(out), scratch_);
  }

  const WorldModel<T>* m_;
  std::vector<T> x_, k1_, k2_, k3_, k4_, z1_, z2_, z3_, tmp_;
  nn::InferScratch<T> scratch_;
};

// ---------------------------------------------------------------------------
// Training losses

struct LossConfig {
  double consistency = 1.0;
  double reward = 0.5;
  double value = 0.5;
  double horizon_discount = 0.9;  // lambda^k weighting of rollout step k
  double gamma_base = 0.99;
  double dt_ref = 0.05;           // gamma_dt = gamma_base^(dt / dt_ref)
};

inline double discount(double gamma_base, double dt_ref, double dt) { return std::pow(gamma_base, dt / dt_ref); }

template <class T>
struct ModelGrads {
  nn::ParamStore<T> encoder, dynamics, reward, value, policy;

  ModelGrads() = default;
  explicit ModelGrads(const WorldModel<T>& m)
      : encoder(m.encoder.spec()),
        dynamics(m.dynamics.spec()),
        reward(m.reward.spec()),
        value(m.value.spec()),
        policy(m.policy.spec()) {}
};

template <class T>
struct LossResult {
  double total = 0.0;
  double consistency = 0.0;
  double reward = 0.0;
  double value = 0.0;
  ModelGrads<T> grads;
  // Rolled-out latents z_hat_k (detached) with their dt and lambda^k weight,
  // reused by the policy objective.
  std::vector<std::vector<T>> latents;
  std::vector<double> latent_dt;
  std::vector<double> latent_weight;
};

namespace detail {
template <class T>
struct DynamicsTape {
  std::vector<nn::GradTape<T>> evals;
  T tau_full{}, tau_half{};
};

template <class T>
std::vector<T> dynamics_taped(const WorldModel<T>& m, std::span<const T> z, std::span<const T> a, double dt,
                              DynamicsTape<T>& tape) {
  const std::size_t n = z.size();
  tape.evals.clear();
  tape.tau_full = static_cast<T>(tau(dt));
  auto eval = [&](std::span<const T> zin, double step) {
    const auto x = head_input(zin, a, step);
    auto r = nn::mlp_forward(m.dynamics, std::span<const T>(x));
    tape.evals.push_back(std::move(r.tape));
    return std::move(r.output);
  };
  std::vector<T> out(n);
  const T t = tape.tau_full;
  if (m.integrator == Integrator::Euler) {
    const auto d = eval(z, dt);
    for (std::size_t i = 0; i < n; ++i) out[i] = z[i] + d[i] * t;
    return out;
  }
  tape.tau_half = static_cast<T>(tau(dt / 2));
  const T th = tape.tau_half;
  auto advance = [&](const std::vector<T>& d, T s) {
    std::vector<T> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = z[i] + d[i] * s;
    return v;
  };
  const auto k1 = eval(z, dt);
  const auto z1 = advance(eval(z, dt / 2), th);
  const auto k2 = eval(z1, dt);
  const auto z2 = advance(eval(z1, dt / 2), th);
  const auto k3 = eval(z2, dt);
  const auto z3 = advance(k3, t);
  const auto k4 = eval(z3, dt);
  for (std::size_t i = 0; i < n; ++i) out[i] = z[i] + (k1[i] + T(2) * k2[i] + T(2) * k3[i] + k4[i]) / T(6) * t;
  return out;
}

// Backpropagates g_out through a taped integration step; returns dL/dz.
template <class T>
std::vector<T> dynamics_backward(const DynamicsTape<T>& tape, std::span<const T> g_out, std::size_t nz,
                                 nn::ParamStore<T>& grads) {
  const std::size_t n = g_out.size();
  std::vector<T> gz(g_out.begin(), g_out.end());
  auto back = [&](std::size_t idx, const std::vector<T>& g, std::vector<T>& accum) {
    const auto gin = nn::mlp_backward(tape.evals[idx], std::span<const T>(g), grads);
    for (std::size_t i = 0; i < nz; ++i) accum[i] += gin[i];
  };
  auto scaled = [&](std::span<const T> g, T s) {
    std::vector<T> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = g[i] * s;
    return v;
  };
  const T t = tape.tau_full;
  if (tape.evals.size() == 1) {
    back(0, scaled(g_out, t), gz);
    return gz;
  }
  const T th = tape.tau_half;
  auto gk1 = scaled(g_out, t / T(6));
  auto gk2 = scaled(g_out, T(2) * t / T(6));
  auto gk3 = scaled(g_out, T(2) * t / T(6));
  auto gk4 = scaled(g_out, t / T(6));
  std::vector<T> gz3(n, T(0)), gz2(n, T(0)), gz1(n, T(0));
  back(5, gk4, gz3);                                  // k4 = d(z3, dt)
  for (std::size_t i = 0; i < n; ++i) {               // z3 = z + t * k3
    gk3[i] += t * gz3[i];
    gz[i] += gz3[i];
  }
  back(4, gk3, gz2);                                  // k3 = d(z2, dt)
  for (std::size_t i = 0; i < n; ++i) gz[i] += gz2[i];  // z2 = z + th * d(z1, dt/2)
  back(3, scaled(gz2, th), gz1);
  back(2, gk2, gz1);                                  // k2 = d(z1, dt)
  for (std::size_t i = 0; i < n; ++i) gz[i] += gz1[i];  // z1 = z + th * d(z, dt/2)
  back(1, scaled(gz1, th), gz);
  back(0, gk1, gz);                                   // k1 = d(z, dt)
  return gz;
}
}  // namespace detail

// Joint consistency / reward / TD loss over a batch of contiguous
// sub-trajectories. Latents are rolled out through the dynamics (never
// re-encoded); targets come from the target encoder and target value network.
template <class T>
LossResult<T> loss_batch(const WorldModel<T>& m, std::span<const std::vector<Transition>> batch,
                         const LossConfig& cfg) {
  if (batch.empty()) throw ConfigError("loss_batch: empty batch");
  const std::size_t nz = m.dims.latent_dim, na = m.dims.action_dim;
  LossResult<T> res;
  res.grads = ModelGrads<T>(m);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& seq = batch[b];
    const std::size_t H = seq.size();
    if (H == 0) throw ConfigError("loss_batch: empty sub-trajectory");
    const double dt = seq[0].dt;
    const double gamma = discount(cfg.gamma_base, cfg.dt_ref, dt);
    const T f = static_cast<T>(dt_feature(dt));

    const std::vector<T> o0(seq[0].obs.begin(), seq[0].obs.end());
    auto enc = nn::mlp_forward(m.encoder, std::span<const T>(o0));
    std::vector<T> zhat = enc.output;

    struct StepRecord {
      detail::DynamicsTape<T> dyn;
      nn::GradTape<T> rtape, qtape;
      std::vector<T> znext, ztarget;
      double r_err, q_err, weight;
    };
    std::vector<StepRecord> steps(H);
    double seq_cons = 0.0, seq_rew = 0.0, seq_val = 0.0;
    double w = 1.0;
    for (std::size_t k = 0; k < H; ++k) {
      const auto& tr = seq[k];
      if (tr.action.size() != na || tr.obs.size() != m.dims.obs_dim || tr.next_obs.size() != m.dims.obs_dim) {
        throw ShapeError("loss_batch: transition widths do not match the model (batch item " + std::to_string(b) +
                         ")");
      }
      auto& st = steps[k];
      st.weight = w;
      const std::vector<T> a(tr.action.begin(), tr.action.end());
      res.latents.push_back(zhat);
      res.latent_dt.push_back(dt);
      res.latent_weight.push_back(w);

      auto x = detail::head_input<T>(zhat, a, dt);
      auto rf = nn::mlp_forward(m.reward, std::span<const T>(x));
      auto qf = nn::mlp_forward(m.value, std::span<const T>(x));
      st.znext = detail::dynamics_taped<T>(m, zhat, a, dt, st.dyn);

      const std::vector<T> on(tr.next_obs.begin(), tr.next_obs.end());
      st.ztarget = nn::mlp_infer(m.encoder_target, std::span<const T>(on));
      std::vector<T> px(st.ztarget);
      px.push_back(f);
      const auto pa = nn::mlp_infer(m.policy, std::span<const T>(px));
      const auto qx = detail::head_input<T>(st.ztarget, pa, dt);
      const double q_next = m.head_out(static_cast<double>(nn::mlp_infer(m.value_target, std::span<const T>(qx))[0]));
      const double y = tr.reward + gamma * q_next;

      double cons = 0.0;
      for (std::size_t i = 0; i < nz; ++i) {
        const double e = static_cast<double>(st.znext[i]) - static_cast<double>(st.ztarget[i]);
        cons += e * e;
      }
      st.r_err = static_cast<double>(rf.output[0]) - m.head_target(tr.reward);
      st.q_err = static_cast<double>(qf.output[0]) - m.head_target(y);
      seq_cons += w * cons;
      seq_rew += w * st.r_err * st.r_err;
      seq_val += w * st.q_err * st.q_err;
      st.rtape = std::move(rf.tape);
      st.qtape = std::move(qf.tape);
      zhat = st.znext;
      w *= cfg.horizon_discount;
    }
    const double seq_total = cfg.consistency * seq_cons + cfg.reward * seq_rew + cfg.value * seq_val;
    if (!std::isfinite(seq_total)) {
      throw NonFiniteError("loss_batch: non-finite loss for batch item " + std::to_string(b) + " (episode " +
                           std::to_string(seq[0].episode) + ", step " + std::to_string(seq[0].step) +
                           ", dt=" + std::to_string(dt) + "; consistency=" + std::to_string(seq_cons) +
                           ", reward=" + std::to_string(seq_rew) + ", value=" + std::to_string(seq_val) + ")");
    }
    res.consistency += inv_b * seq_cons;
    res.reward += inv_b * seq_rew;
    res.value += inv_b * seq_val;
    res.total += inv_b * seq_total;

    std::vector<T> carry(nz, T(0));
    for (std::size_t k = H; k-- > 0;) {
      auto& st = steps[k];
      const double s = inv_b * st.weight;
      std::vector<T> g(nz);
      for (std::size_t i = 0; i < nz; ++i) {
        g[i] = carry[i] + static_cast<T>(s * cfg.consistency * 2.0 *
                                         (static_cast<double>(st.znext[i]) - static_cast<double>(st.ztarget[i])));
      }
      auto gz = detail::dynamics_backward<T>(st.dyn, g, nz, res.grads.dynamics);
      const T gr[1] = {static_cast<T>(s * cfg.reward * 2.0 * st.r_err)};
      const auto gxr = nn::mlp_backward(st.rtape, std::span<const T>(gr, 1), res.grads.reward);
      const T gq[1] = {static_cast<T>(s * cfg.value * 2.0 * st.q_err)};
      const auto gxq = nn::mlp_backward(st.qtape, std::span<const T>(gq, 1), res.grads.value);
      for (std::size_t i = 0; i < nz; ++i) gz[i] += gxr[i] + gxq[i];
      carry = std::move(gz);
    }
    nn::mlp_backward(enc.tape, std::span<const T>(carry), res.grads.encoder);
  }
  return res;
}

template <class T>
struct PolicyLossResult {
  double loss = 0.0;
  nn::ParamStore<T> grad;
};

// Policy objective: maximise the raw value-head output at (z, p(z, dt), dt)
// over the given (detached) latents; symexp is monotone so the maximiser is
// unchanged. Only the policy receives gradients.
template <class T>
PolicyLossResult<T> policy_loss(const WorldModel<T>& m, std::span<const std::vector<T>> latents,
                                std::span<const double> dts, std::span<const double> weights) {
  if (latents.empty()) throw ConfigError("policy_loss: no latents");
  const std::size_t nz = m.dims.latent_dim, na = m.dims.action_dim;
  PolicyLossResult<T> res;
  res.grad = nn::ParamStore<T>(m.policy.spec());
  nn::ParamStore<T> value_sink(m.value.spec());
  const double inv_n = 1.0 / static_cast<double>(latents.size());
  for (std::size_t k = 0; k < latents.size(); ++k) {
    const double dt = dts[k];
    std::vector<T> px(latents[k]);
    px.push_back(static_cast<T>(dt_feature(dt)));
    auto pf = nn::mlp_forward(m.policy, std::span<const T>(px));
    const auto qx = detail::head_input<T>(latents[k], pf.output, dt);
    auto qf = nn::mlp_forward(m.value, std::span<const T>(qx));
    const double q = static_cast<double>(qf.output[0]);
    res.loss -= inv_n * weights[k] * q;
    const T gq[1] = {static_cast<T>(-inv_n * weights[k])};
    const auto gx = nn::mlp_backward(qf.tape, std::span<const T>(gq, 1), value_sink);
    nn::mlp_backward(pf.tape, std::span<const T>(gx.data() + nz, na), res.grad);
  }
  if (!std::isfinite(res.loss)) throw NonFiniteError("policy_loss: non-finite objective");
  return res;
}

template <class T>
void update_targets(WorldModel<T>& m) {
  const T e = static_cast<T>(m.target_ema);
  auto blend = [e](nn::ParamStore<T>& target, const nn::ParamStore<T>& online) {
    auto tv = target.values();
    auto ov = online.values();
    for (std::size_t i = 0; i < tv.size(); ++i) tv[i] = e * tv[i] + (T(1) - e) * ov[i];
  };
  blend(m.encoder_target, m.encoder);
  blend(m.value_target, m.value);
}

// ---------------------------------------------------------------------------
// Checkpoints

template <class T>
void save_world_model(std::ostream& os, const WorldModel<T>& m, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json meta = {{"kind", "world_model"},
                         {"integrator", to_string(m.integrator)},
                         {"obs_dim", m.dims.obs_dim},
                         {"action_dim", m.dims.action_dim},
                         {"latent_dim", m.dims.latent_dim},
                         {"hidden_dim", m.dims.hidden_dim},
                         {"target_ema", m.target_ema},
                         {"symlog_heads", m.symlog_heads},
                         {"extra", extra}};
  nn::write_checkpoint<T>(os, meta,
                          {&m.encoder, &m.dynamics, &m.reward, &m.value, &m.policy, &m.encoder_target, &m.value_target});
}

template <class T>
WorldModel<T> load_world_model(std::istream& is, nlohmann::json* extra = nullptr) {
  auto ck = nn::read_checkpoint<T>(is);
  if (ck.meta.value("kind", "") != "world_model") throw IoError("checkpoint does not hold a world model");
  WorldModel<T> m;
  m.integrator = integrator_from_string(ck.meta.at("integrator").template get<std::string>());
  m.dims.obs_dim = ck.meta.at("obs_dim").template get<std::size_t>();
  m.dims.action_dim = ck.meta.at("action_dim").template get<std::size_t>();
  m.dims.latent_dim = ck.meta.at("latent_dim").template get<std::size_t>();
  m.dims.hidden_dim = ck.meta.at("hidden_dim").template get<std::size_t>();
  m.target_ema = ck.meta.at("target_ema").template get<double>();
  m.symlog_heads = ck.meta.value("symlog_heads", false);
  m.encoder = ck.net("encoder");
  m.dynamics = ck.net("dynamics");
  m.reward = ck.net("reward");
  m.value = ck.net("value");
  m.policy = ck.net("policy");
  m.encoder_target = ck.net("encoder_target");
  m.value_target = ck.net("value_target");
  if (m.encoder.spec().input_width() != m.dims.obs_dim || m.dynamics.spec().input_width() != m.dims.head_input()) {
    throw IoError("checkpoint network widths disagree with its metadata");
  }
  if (extra) *extra = ck.meta.value("extra", nlohmann::json::object());
  return m;
}

template <class T>
void save_world_model(const std::string& path, const WorldModel<T>& m,
                      const nlohmann::json& extra = nlohmann::json::object()) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  save_world_model(os, m, extra);
}

template <class T>
WorldModel<T> load_world_model(const std::string& path, nlohmann::json* extra = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  return load_world_model<T>(is, extra);
}

}  // namespace tawm
