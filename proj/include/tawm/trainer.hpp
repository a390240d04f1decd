#pragma once

// Mixture-of-dt training: per-episode dt sampling, a replay buffer that keeps
// whole episodes, and model updates interleaved with collection.

#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tawm/env.hpp"
#include "tawm/errors.hpp"
#include "tawm/nn.hpp"
#include "tawm/planner.hpp"
#include "tawm/rng.hpp"
#include "tawm/transition.hpp"
#include "tawm/worldmodel.hpp"

namespace tawm {

using Model = WorldModel<float>;

enum class DtSampling { LogUniform, Uniform, Fixed };

inline const char* to_string(DtSampling m) {
  switch (m) {
    case DtSampling::LogUniform: return "log-uniform";
    case DtSampling::Uniform: return "uniform";
    case DtSampling::Fixed: return "fixed";
  }
  return "fixed";
}

inline DtSampling dt_sampling_from_string(const std::string& s) {
  if (s == "log-uniform") return DtSampling::LogUniform;
  if (s == "uniform") return DtSampling::Uniform;
  if (s == "fixed") return DtSampling::Fixed;
  throw ConfigError("unknown dt sampling mode '" + s + "' (expected log-uniform|uniform|fixed)");
}

struct DtDistribution {
  DtSampling mode = DtSampling::LogUniform;
  double dt_min = 0.01;
  double dt_max = 1.0;
  double dt_fixed = 0.1;

  void validate() const {
    if (mode == DtSampling::Fixed) {
      if (!(dt_fixed > 0.0)) throw ConfigError("fixed dt must be positive");
      return;
    }
    if (!(dt_min > 0.0) || !(dt_min < dt_max)) throw ConfigError("dt range requires 0 < dt_min < dt_max");
  }
};

inline double sample_dt(const DtDistribution& d, Rng& rng) {
  switch (d.mode) {
    case DtSampling::LogUniform: return std::exp(rng.uniform(std::log(d.dt_min), std::log(d.dt_max)));
    case DtSampling::Uniform: return rng.uniform(d.dt_min, d.dt_max);
    case DtSampling::Fixed: return d.dt_fixed;
  }
  return d.dt_fixed;
}

// Closed-form CDFs, used by the sampler tests.
inline double dt_cdf(const DtDistribution& d, double x) {
  if (d.mode == DtSampling::Fixed) return x < d.dt_fixed ? 0.0 : 1.0;
  if (x <= d.dt_min) return 0.0;
  if (x >= d.dt_max) return 1.0;
  if (d.mode == DtSampling::Uniform) return (x - d.dt_min) / (d.dt_max - d.dt_min);
  return std::log(x / d.dt_min) / std::log(d.dt_max / d.dt_min);
}

// ---------------------------------------------------------------------------

// FIFO over whole episodes. Transitions are appended one at a time; an episode
// is identified by Transition::episode and must arrive contiguously.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be positive");
  }

  void add(Transition t) {
    if (episodes_.empty() || episodes_.back().front().episode != t.episode) {
      episodes_.emplace_back();
    } else if (t.step != episodes_.back().back().step + 1) {
      throw ConfigError("ReplayBuffer: non-contiguous step index in episode " + std::to_string(t.episode));
    }
    episodes_.back().push_back(std::move(t));
    ++size_;
    while (size_ > capacity_) {
      if (episodes_.size() == 1) throw ConfigError("ReplayBuffer: a single episode exceeds the capacity");
      size_ -= episodes_.front().size();
      episodes_.pop_front();
    }
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t num_episodes() const { return episodes_.size(); }
  const std::deque<std::vector<Transition>>& episodes() const { return episodes_; }

  std::size_t num_starts(std::size_t len) const {
    std::size_t n = 0;
    for (const auto& e : episodes_)
      if (e.size() >= len) n += e.size() - len + 1;
    return n;
  }

  // Uniform over every window of `len` consecutive transitions inside one episode.
  std::vector<std::vector<Transition>> sample(std::size_t batch, std::size_t len, Rng& rng) const {
    if (len == 0) throw ConfigError("ReplayBuffer::sample: sub-trajectory length must be positive");
    const std::size_t total = num_starts(len);
    if (total == 0) throw ConfigError("ReplayBuffer::sample: buffer holds no sub-trajectory of length " +
                                      std::to_string(len));
    std::vector<std::vector<Transition>> out;
    out.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      std::size_t k = rng.index(total);
      for (const auto& e : episodes_) {
        if (e.size() < len) continue;
        const std::size_t n = e.size() - len + 1;
        if (k < n) {
          out.emplace_back(e.begin() + static_cast<std::ptrdiff_t>(k), e.begin() + static_cast<std::ptrdiff_t>(k + len));
          break;
        }
        k -= n;
      }
    }
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::deque<std::vector<Transition>> episodes_;
};

// ---------------------------------------------------------------------------
// Actors

class Actor {
 public:
  virtual ~Actor() = default;
  virtual void begin_episode() {}
  virtual std::vector<double> act(std::span<const double> obs, double dt, std::uint64_t seed) = 0;
};

class ZeroActor final : public Actor {
 public:
  explicit ZeroActor(std::size_t action_dim) : n_(action_dim) {}
  std::vector<double> act(std::span<const double>, double, std::uint64_t) override { return std::vector<double>(n_, 0.0); }

 private:
  std::size_t n_;
};

class RandomActor final : public Actor {
 public:
  explicit RandomActor(std::size_t action_dim) : n_(action_dim) {}
  std::vector<double> act(std::span<const double>, double, std::uint64_t seed) override {
    StreamRng rng(seed);
    std::vector<double> a(n_);
    for (auto& v : a) v = rng.uniform(-1.0, 1.0);
    return a;
  }

 private:
  std::size_t n_;
};

// MPPI on the latent model. With explore=true the first action is perturbed by
// the planner's final std, as during data collection.
class PlannerActor final : public Actor {
 public:
  PlannerActor(const Model& model, PlanConfig cfg, bool explore = false)
      : model_(&model), mppi_(cfg, model.dims.action_dim), explore_(explore) {}

  void begin_episode() override { mppi_.reset(); }

  std::vector<double> act(std::span<const double> obs, double dt, std::uint64_t seed) override {
    const std::vector<float> o(obs.begin(), obs.end());
    const auto z = encode(*model_, std::span<const float>(o));
    auto a = mppi_.plan(*model_, std::span<const float>(z), dt, seed);
    if (explore_) {
      StreamRng rng(derive_seed(seed, "explore"));
      const auto& sd = mppi_.last_std();
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double s = i < sd.size() ? sd[i] : 0.0;
        a[i] = std::clamp(a[i] + s * rng.normal(), -1.0, 1.0);
      }
    }
    return a;
  }

  Mppi<float>& planner() { return mppi_; }

 private:
  const Model* model_;
  Mppi<float> mppi_;
  bool explore_;
};

// ---------------------------------------------------------------------------

struct EpisodeStats {
  std::uint64_t episode = 0;
  double dt = 0.0;
  double total_reward = 0.0;
  double discounted_return = 0.0;
  std::size_t steps = 0;
};

using StepHook = std::function<void(const Transition&)>;

// Runs one episode of `horizon` steps at a fixed dt. Every transition is
// pushed to `buffer` (if given) and then handed to `hook`.
inline EpisodeStats collect_episode(env::Environment& e, Actor& actor, double dt, std::size_t horizon,
                                    std::uint64_t episode, std::uint64_t seed, ReplayBuffer* buffer,
                                    const StepHook& hook = {}, double gamma = 1.0) {
  EpisodeStats st;
  st.episode = episode;
  st.dt = env::realized_dt(dt, env::dt_sim(e.spec()));
  auto obs = e.reset(derive_seed(seed, "episode.reset", episode));
  actor.begin_episode();
  double g = 1.0;
  for (std::size_t k = 0; k < horizon; ++k) {
    const auto a = actor.act(obs, st.dt, derive_seed(seed, "episode.act", episode, k));
    env::StepResult r;
    try {
      r = e.step(a, st.dt);
    } catch (const StabilityError& err) {
      throw StabilityError("episode " + std::to_string(episode) + " step " + std::to_string(k) + " (dt=" +
                           std::to_string(st.dt) + "): " + err.what());
    }
    Transition t{obs, a, r.observation, r.reward, r.elapsed, episode, k};
    st.total_reward += r.reward;
    st.discounted_return += g * r.reward;
    g *= gamma;
    ++st.steps;
    obs = r.observation;
    if (buffer) buffer->add(t);
    if (hook) hook(t);
  }
  return st;
}

// ---------------------------------------------------------------------------

struct Learner {
  Model model;
  nn::AdamState<float> encoder_opt, dynamics_opt, reward_opt, value_opt, policy_opt;
  LossConfig loss;
  double grad_clip = 20.0;  // global L2 norm over the joint-loss heads

  Learner(Model m, nn::AdamConfig adam, LossConfig l, double clip)
      : model(std::move(m)),
        encoder_opt(model.encoder, adam),
        dynamics_opt(model.dynamics, adam),
        reward_opt(model.reward, adam),
        value_opt(model.value, adam),
        policy_opt(model.policy, adam),
        loss(l),
        grad_clip(clip) {}
};

struct UpdateStats {
  double loss = 0.0;
  double consistency = 0.0;
  double reward = 0.0;
  double value = 0.0;
  double policy = 0.0;
  double grad_norm = 0.0;
};

// One gradient step on a uniformly sampled batch of sub-trajectories.
inline UpdateStats update_step(Learner& L, const ReplayBuffer& buffer, std::size_t batch, std::size_t horizon,
                               Rng& rng) {
  if (buffer.size() == 0) throw ConfigError("update_step: replay buffer is empty");
  const auto sample = buffer.sample(batch, horizon, rng);
  auto res = loss_batch<float>(L.model, std::span<const std::vector<Transition>>(sample), L.loss);

  auto& g = res.grads;
  double sq = 0.0;
  for (auto* p : {&g.encoder, &g.dynamics, &g.reward, &g.value})
    for (float v : p->values()) sq += static_cast<double>(v) * v;
  const double norm = std::sqrt(sq);
  if (L.grad_clip > 0.0 && norm > L.grad_clip) {
    const float s = static_cast<float>(L.grad_clip / norm);
    for (auto* p : {&g.encoder, &g.dynamics, &g.reward, &g.value})
      for (float& v : p->values()) v *= s;
  }
  nn::adam_step(L.model.encoder, g.encoder, L.encoder_opt);
  nn::adam_step(L.model.dynamics, g.dynamics, L.dynamics_opt);
  nn::adam_step(L.model.reward, g.reward, L.reward_opt);
  nn::adam_step(L.model.value, g.value, L.value_opt);

  auto pl = policy_loss<float>(L.model, std::span<const std::vector<float>>(res.latents), res.latent_dt,
                               res.latent_weight);
  nn::adam_step(L.model.policy, pl.grad, L.policy_opt);
  update_targets(L.model);
  return {res.total, res.consistency, res.reward, res.value, pl.loss, norm};
}

// ---------------------------------------------------------------------------

struct TrainConfig {
  env::EnvSpec env = env::default_pde(env::PdeKind::Wave);
  DtDistribution dt;
  std::size_t total_steps = 30000;
  std::size_t episode_length = 100;
  std::size_t batch_size = 32;
  std::size_t train_horizon = 3;
  std::size_t updates_per_step = 1;
  std::size_t seed_episodes = 5;
  std::size_t buffer_capacity = 100000;
  std::uint64_t seed = 0;
  Integrator integrator = Integrator::Euler;
  std::size_t latent_dim = 32;
  std::size_t hidden_dim = 64;
  LossConfig loss;
  double learning_rate = 3e-4;
  double grad_clip = 20.0;
  PlanConfig plan;
  std::size_t checkpoint_interval = 5000;
  std::string out_dir = "out";

  void validate() const {
    dt.validate();
    if (total_steps == 0 || episode_length == 0 || batch_size == 0 || train_horizon == 0) {
      throw ConfigError("total_steps, episode_length, batch_size and train_horizon must be positive");
    }
    if (train_horizon > episode_length) throw ConfigError("train_horizon exceeds episode_length");
    if (buffer_capacity < episode_length) throw ConfigError("buffer_capacity is smaller than one episode");
    plan.validate();
  }

  ModelDims dims() const { return {env::obs_dim(env), env::action_dim(env), latent_dim, hidden_dim}; }
};

struct LogRow {
  std::size_t step = 0;
  double dt_episode = 0.0;
  double episode_reward = 0.0;
  double loss_mean = std::nan("");
};

inline std::string format_log_row(const LogRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g", r.step, r.dt_episode, r.episode_reward, r.loss_mean);
  return buf;
}

inline std::string checkpoint_name(std::size_t step) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "ckpt_%08zu.tawm", step);
  return buf;
}

struct TrainResult {
  Model model;
  std::vector<LogRow> log;
  std::vector<std::string> checkpoints;
};

// Episodes of fixed length with one dt each, interleaved with updates, until
// total_steps environment steps. The first seed_episodes act uniformly at
// random; updates start once those are in the buffer. Writes log.csv and
// checkpoints into out_dir when it is non-empty.
inline TrainResult train(const TrainConfig& cfg, std::ostream* progress = nullptr) {
  cfg.validate();
  namespace fs = std::filesystem;
  const bool write = !cfg.out_dir.empty();
  if (write) fs::create_directories(cfg.out_dir);

  Learner L(make_world_model<float>(cfg.dims(), cfg.integrator, derive_seed(cfg.seed, "train.model")),
            nn::AdamConfig{cfg.learning_rate}, cfg.loss, cfg.grad_clip);
  ReplayBuffer buffer(cfg.buffer_capacity);
  env::Environment environment(cfg.env);
  RandomActor random_actor(env::action_dim(cfg.env));
  PlannerActor planner_actor(L.model, cfg.plan, /*explore=*/true);
  Rng batch_rng(derive_seed(cfg.seed, "train.batch"));

  TrainResult out;
  std::ofstream log;
  if (write) {
    log.open(fs::path(cfg.out_dir) / "log.csv", std::ios::binary);
    if (!log) throw IoError("cannot write " + (fs::path(cfg.out_dir) / "log.csv").string());
    log << "step,dt_episode,episode_reward,loss_mean\n";
  }
  auto save = [&](std::size_t step) {
    if (!write) return;
    const auto path = (fs::path(cfg.out_dir) / checkpoint_name(step)).string();
    save_world_model<float>(path, L.model,
                            {{"step", step},
                             {"env", env::env_name(cfg.env)},
                             {"dt_mode", to_string(cfg.dt.mode)},
                             {"dt_default", env::dt_default(cfg.env)},
                             {"dt_train", cfg.dt.mode == DtSampling::Fixed ? cfg.dt.dt_fixed : 0.0}});
    out.checkpoints.push_back(path);
  };

  std::size_t step = 0, next_ckpt = cfg.checkpoint_interval;
  for (std::uint64_t ep = 0; step < cfg.total_steps; ++ep) {
    Rng dt_rng(derive_seed(cfg.seed, "train.dt", ep));
    const double dt = sample_dt(cfg.dt, dt_rng);
    const std::size_t H = std::min(cfg.episode_length, cfg.total_steps - step);
    const bool seeding = ep < cfg.seed_episodes;
    Actor& actor = seeding ? static_cast<Actor&>(random_actor) : planner_actor;
    double loss_sum = 0.0;
    std::size_t n_updates = 0;
    StepHook hook = [&](const Transition&) {
      if (seeding || buffer.num_starts(cfg.train_horizon) == 0) return;
      for (std::size_t u = 0; u < cfg.updates_per_step; ++u) {
        loss_sum += update_step(L, buffer, cfg.batch_size, cfg.train_horizon, batch_rng).loss;
        ++n_updates;
      }
    };
    EpisodeStats st;
    try {
      st = collect_episode(environment, actor, dt, H, ep, cfg.seed, &buffer, hook);
    } catch (const Error& e) {
      throw std::runtime_error("train: " + env::env_name(cfg.env) + " seed " + std::to_string(cfg.seed) +
                               " episode " + std::to_string(ep) + ": " + e.what());
    }
    step += st.steps;
    LogRow row{step, st.dt, st.total_reward, n_updates ? loss_sum / static_cast<double>(n_updates) : std::nan("")};
    out.log.push_back(row);
    if (write) log << format_log_row(row) << '\n' << std::flush;
    if (progress) *progress << format_log_row(row) << '\n' << std::flush;
    if (cfg.checkpoint_interval > 0 && step >= next_ckpt && step < cfg.total_steps) {
      save(step);
      while (next_ckpt <= step) next_ckpt += cfg.checkpoint_interval;
    }
  }
  save(step);
  out.model = L.model;
  return out;
}

}  // namespace tawm
