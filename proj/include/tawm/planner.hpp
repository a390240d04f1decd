#pragma once

// MPPI planning over dt-conditioned latent rollouts.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "tawm/errors.hpp"
#include "tawm/rng.hpp"
#include "tawm/worldmodel.hpp"

namespace tawm {

struct PlanConfig {
  std::size_t horizon = 5;
  std::size_t samples = 256;
  std::size_t elites = 32;
  std::size_t iterations = 4;
  double temperature = 0.5;
  double init_std = 1.0;
  double min_std = 0.05;
  double gamma_base = 0.99;
  double dt_ref = 0.05;
  double prior_fraction = 0.25;
  double prior_std = 0.1;  // perturbation of all but the first policy-prior sample

  void validate() const {
    if (samples == 0 || elites == 0 || iterations == 0) throw ConfigError("PlanConfig: counts must be positive");
    if (elites > samples) throw ConfigError("PlanConfig: elites must not exceed samples");
    if (!(temperature > 0.0)) throw ConfigError("PlanConfig: temperature must be positive");
    if (init_std < 0.0 || min_std < 0.0) throw ConfigError("PlanConfig: std must be non-negative");
    if (prior_fraction < 0.0 || prior_fraction > 1.0) throw ConfigError("PlanConfig: prior_fraction must be in [0,1]");
  }

  std::size_t prior_samples() const {
    if (prior_fraction <= 0.0) return 0;
    const auto n = static_cast<std::size_t>(std::llround(prior_fraction * static_cast<double>(samples)));
    return std::clamp<std::size_t>(n, 1, samples);
  }
};

struct RolloutResult {
  std::vector<std::vector<double>> latents;  // H + 1 entries, starting at z0
  double value = 0.0;
};

// Sum_k gamma^k r_hat_k + gamma^H Q(z_H, p(z_H)); one model transition per step.
// `actions` holds horizon * action_dim values, step-major.
template <class T>
RolloutResult latent_rollout(const WorldModel<T>& m, std::span<const T> z0, std::span<const T> actions,
                             std::size_t horizon, double dt, double gamma) {
  const std::size_t nz = m.dims.latent_dim, na = m.dims.action_dim;
  if (z0.size() != nz) throw ShapeError("latent_rollout: latent width mismatch");
  if (actions.size() != horizon * na) throw ShapeError("latent_rollout: action sequence length != horizon");
  LatentBatch<T> batch(m);
  RolloutResult res;
  std::vector<T> z(z0.begin(), z0.end()), zn(nz);
  res.latents.emplace_back(z.begin(), z.end());
  double g = 1.0;
  T r[1];
  for (std::size_t k = 0; k < horizon; ++k) {
    auto a = actions.subspan(k * na, na);
    batch.reward(z, a, 1, dt, r);
    res.value += g * static_cast<double>(r[0]);
    batch.next(z, a, 1, dt, zn);
    detail::require_finite<T>(zn, "latent_rollout step " + std::to_string(k));
    z = zn;
    res.latents.emplace_back(z.begin(), z.end());
    g *= gamma;
  }
  std::vector<T> pa(na);
  batch.policy(z, 1, dt, pa);
  T q[1];
  batch.value(z, pa, 1, dt, q);
  res.value += g * static_cast<double>(q[0]);
  return res;
}

// Iterative MPPI with elite carry-over. Sample noise for (iteration, sample)
// comes from its own stream derived from the call seed, so results do not
// depend on evaluation order.
template <class T>
class Mppi {
 public:
  Mppi(PlanConfig cfg, std::size_t action_dim) : cfg_(cfg), na_(action_dim) { cfg_.validate(); }

  const PlanConfig& config() const { return cfg_; }

  // Drops the warm start (call at episode boundaries).
  void reset() { mean_.clear(); }

  // Overrides the warm-start mean (horizon * action_dim values).
  void set_mean(std::span<const double> mean) { mean_.assign(mean.begin(), mean.end()); }

  // Mean elite score after each iteration of the last plan() call.
  const std::vector<double>& elite_history() const { return elite_history_; }

  // Final sampling std of the last plan() call (horizon * action_dim values).
  const std::vector<double>& last_std() const { return std_; }

  std::vector<double> plan(const WorldModel<T>& m, std::span<const T> z0, double dt, std::uint64_t seed) {
    const std::size_t H = cfg_.horizon, na = na_, nz = m.dims.latent_dim;
    if (m.dims.action_dim != na) throw ShapeError("Mppi: model action width differs from planner");
    if (z0.size() != nz) throw ShapeError("Mppi: latent width mismatch");
    const double gamma = discount(cfg_.gamma_base, cfg_.dt_ref, dt);
    const std::size_t len = H * na;
    elite_history_.clear();

    // Warm start: previous mean shifted by one step, std re-inflated.
    std::vector<double> mean(len, 0.0);
    if (mean_.size() == len && len > 0) {
      std::copy(mean_.begin() + static_cast<std::ptrdiff_t>(na), mean_.end(), mean.begin());
    }
    std::vector<double> stdev(len, cfg_.init_std);

    LatentBatch<T> batch(m);
    std::vector<Candidate> pool;
    const std::size_t n_prior = cfg_.prior_samples();
    if (n_prior > 0) sample_prior(m, batch, z0, dt, seed, n_prior, pool);
    const std::size_t n_gauss = cfg_.samples - n_prior;

    std::vector<Candidate> elites;
    for (std::size_t it = 0; it < cfg_.iterations; ++it) {
      std::vector<Candidate> fresh(n_gauss);
      for (std::size_t j = 0; j < n_gauss; ++j) {
        StreamRng rng(derive_seed(seed, "mppi.sample", it, j));
        fresh[j].actions.resize(len);
        for (std::size_t i = 0; i < len; ++i) {
          fresh[j].actions[i] = std::clamp(mean[i] + stdev[i] * rng.normal(), -1.0, 1.0);
        }
      }
      score(m, batch, z0, dt, gamma, fresh);
      std::vector<Candidate> candidates = std::move(fresh);
      if (it == 0) {
        candidates.insert(candidates.end(), pool.begin(), pool.end());
      } else {
        candidates.insert(candidates.end(), elites.begin(), elites.end());
      }
      elites = select_elites(std::move(candidates));
      if (elites.empty()) throw NonFiniteError("Mppi: every rollout produced a non-finite return");

      const double best = elites.front().score;
      std::vector<double> w(elites.size());
      double wsum = 0.0, score_sum = 0.0;
      for (std::size_t e = 0; e < elites.size(); ++e) {
        w[e] = std::exp((elites[e].score - best) / cfg_.temperature);
        wsum += w[e];
        score_sum += elites[e].score;
      }
      elite_history_.push_back(score_sum / static_cast<double>(elites.size()));
      for (std::size_t i = 0; i < len; ++i) {
        double mu = 0.0;
        for (std::size_t e = 0; e < elites.size(); ++e) mu += w[e] * elites[e].actions[i];
        mu /= wsum;
        double var = 0.0;
        for (std::size_t e = 0; e < elites.size(); ++e) {
          const double d = elites[e].actions[i] - mu;
          var += w[e] * d * d;
        }
        mean[i] = mu;
        stdev[i] = std::clamp(std::sqrt(var / wsum), cfg_.min_std, std::max(cfg_.min_std, cfg_.init_std));
      }
    }
    mean_ = mean;
    std_ = stdev;
    std::vector<double> action(na);
    for (std::size_t i = 0; i < na; ++i) action[i] = std::clamp(len ? mean[i] : 0.0, -1.0, 1.0);
    if (H == 0) {
      // Nothing to optimise over an empty horizon; act with the prior.
      std::vector<T> pa(na);
      batch.policy(z0, 1, dt, pa);
      for (std::size_t i = 0; i < na; ++i) action[i] = std::clamp(static_cast<double>(pa[i]), -1.0, 1.0);
    }
    return action;
  }

 private:
  struct Candidate {
    std::vector<double> actions;
    double score = -std::numeric_limits<double>::infinity();
    std::size_t order = 0;
  };

  void sample_prior(const WorldModel<T>& m, LatentBatch<T>& batch, std::span<const T> z0, double dt,
                    std::uint64_t seed, std::size_t n, std::vector<Candidate>& out) {
    const std::size_t H = cfg_.horizon, na = na_, nz = m.dims.latent_dim;
    std::vector<T> z(n * nz), zn(n * nz), a(n * na);
    for (std::size_t j = 0; j < n; ++j) std::copy(z0.begin(), z0.end(), z.begin() + j * nz);
    out.resize(n);
    std::vector<StreamRng> rngs;
    for (std::size_t j = 0; j < n; ++j) {
      out[j].actions.resize(H * na);
      rngs.emplace_back(derive_seed(seed, "mppi.prior", j));
    }
    for (std::size_t k = 0; k < H; ++k) {
      batch.policy(z, n, dt, a);
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < na; ++i) {
          double v = static_cast<double>(a[j * na + i]);
          if (j > 0) v += cfg_.prior_std * rngs[j].normal();
          v = std::clamp(v, -1.0, 1.0);
          out[j].actions[k * na + i] = v;
          a[j * na + i] = static_cast<T>(v);
        }
      }
      batch.next(z, a, n, dt, zn);
      std::swap(z, zn);
    }
    score(m, batch, z0, dt, discount(cfg_.gamma_base, cfg_.dt_ref, dt), out);
  }

  void score(const WorldModel<T>& m, LatentBatch<T>& batch, std::span<const T> z0, double dt, double gamma,
             std::vector<Candidate>& cands) {
    const std::size_t n = cands.size(), H = cfg_.horizon, na = na_, nz = m.dims.latent_dim;
    if (n == 0) return;
    std::vector<T> z(n * nz), zn(n * nz), a(n * na), r(n);
    std::vector<double> ret(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) std::copy(z0.begin(), z0.end(), z.begin() + j * nz);
    double g = 1.0;
    for (std::size_t k = 0; k < H; ++k) {
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < na; ++i) a[j * na + i] = static_cast<T>(cands[j].actions[k * na + i]);
      batch.reward(z, a, n, dt, r);
      for (std::size_t j = 0; j < n; ++j) ret[j] += g * static_cast<double>(r[j]);
      batch.next(z, a, n, dt, zn);
      std::swap(z, zn);
      g *= gamma;
    }
    batch.policy(z, n, dt, a);
    batch.value(z, a, n, dt, r);
    for (std::size_t j = 0; j < n; ++j) {
      const double s = ret[j] + g * static_cast<double>(r[j]);
      cands[j].score = std::isfinite(s) ? s : -std::numeric_limits<double>::infinity();
    }
  }

  std::vector<Candidate> select_elites(std::vector<Candidate> cands) const {
    for (std::size_t i = 0; i < cands.size(); ++i) cands[i].order = i;
    std::erase_if(cands, [](const Candidate& c) { return !std::isfinite(c.score); });
    const std::size_t k = std::min(cfg_.elites, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(k), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        return a.score != b.score ? a.score > b.score : a.order < b.order;
                      });
    cands.resize(k);
    return cands;
  }

  PlanConfig cfg_;
  std::size_t na_;
  std::vector<double> mean_;
  std::vector<double> std_;
  std::vector<double> elite_history_;
};

}  // namespace tawm
