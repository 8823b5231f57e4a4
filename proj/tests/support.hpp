#pragma once

// Test-only helpers: a seeded generator and brute-force reference
// computations that share no code with the library's oracles.

#include <cmath>
#include <cstdint>
#include <vector>

#include "dectrust/decmdp.hpp"
#include "dectrust/policy.hpp"

namespace testing {

/// SplitMix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  int below(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }
  std::uint64_t seed() { return next(); }
  double pick(std::initializer_list<double> xs) { return xs.begin()[below(static_cast<int>(xs.size()))]; }

 private:
  std::uint64_t state_;
};

/// Random instance description drawn from a seed.
struct Shape {
  int agents;
  int states;
  int actions;
  bool shared;
  double discount;
};

inline Shape random_shape(Rng& rng, bool force_shared = false, int max_agents = 3) {
  Shape s;
  s.agents = 1 + rng.below(max_agents);
  s.states = 1 + rng.below(4);
  s.actions = 1 + rng.below(3);
  s.shared = force_shared || rng.below(2) == 0;
  s.discount = rng.below(2) ? 0.99 : 0.9;
  if (s.states * s.actions == 1) s.states = 2;
  return s;
}

/// pi(a | s) from per-agent tables by explicit digit decoding.
inline double joint_prob(const dectrust::TabularDecMdp& mdp, const dectrust::PolicyProfile& p, std::size_t s,
                         std::size_t a) {
  const std::vector<int> acts = mdp.action_codec().decode(a);
  double prob = 1.0;
  for (int k = 0; k < mdp.n_agents(); ++k) prob *= p.probs[k](mdp.local_state(s, k), acts[k]);
  return prob;
}

/// Joint state chain P(s, s') as nested vectors.
inline std::vector<std::vector<double>> chain(const dectrust::TabularDecMdp& mdp, const dectrust::PolicyProfile& p) {
  const std::size_t n = mdp.joint_state_count();
  std::vector<std::vector<double>> out(n, std::vector<double>(n, 0.0));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t a = 0; a < mdp.joint_action_count(); ++a) {
      const double w = joint_prob(mdp, p, s, a);
      for (std::size_t t = 0; t < n; ++t) out[s][t] += w * mdp.transition(s, a, t);
    }
  return out;
}

/// Value by repeated Bellman backups v <- r + gamma P v.
inline std::vector<double> power_iteration_values(const dectrust::TabularDecMdp& mdp,
                                                  const dectrust::PolicyProfile& p, int steps) {
  const auto P = chain(mdp, p);
  const auto r = mdp.joint_reward();
  std::vector<double> v(mdp.joint_state_count(), 0.0), next(v.size());
  for (int it = 0; it < steps; ++it) {
    for (std::size_t s = 0; s < v.size(); ++s) {
      double acc = 0.0;
      for (std::size_t t = 0; t < v.size(); ++t) acc += P[s][t] * v[t];
      next[s] = r[s] + mdp.discount() * acc;
    }
    v.swap(next);
  }
  return v;
}

inline double power_iteration_return(const dectrust::TabularDecMdp& mdp, const dectrust::PolicyProfile& p,
                                     int steps = 10000) {
  const auto v = power_iteration_values(mdp, p, steps);
  double j = 0.0;
  for (std::size_t s = 0; s < v.size(); ++s) j += mdp.initial_dist()[s] * v[s];
  return j;
}

/// Normalized discounted occupancy by summing the truncated series
/// (1 - gamma) sum_t gamma^t d0 P^t.
inline std::vector<double> series_occupancy(const dectrust::TabularDecMdp& mdp, const dectrust::PolicyProfile& p,
                                            int steps) {
  const auto P = chain(mdp, p);
  const std::size_t n = mdp.joint_state_count();
  std::vector<double> dist(mdp.initial_dist().begin(), mdp.initial_dist().end()), out(n, 0.0), next(n);
  double weight = 1.0 - mdp.discount();
  for (int t = 0; t < steps; ++t) {
    for (std::size_t s = 0; s < n; ++s) out[s] += weight * dist[s];
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t u = 0; u < n; ++u) next[u] += dist[s] * P[s][u];
    dist.swap(next);
    weight *= mdp.discount();
  }
  return out;
}

/// Shared-state staged kernel K(s' | s, a_k) with the others following
/// `others` (agent k's entry is ignored). Rows are s * |A_k| + a_k.
inline std::vector<std::vector<double>> enumerate_kernel(const dectrust::TabularDecMdp& mdp,
                                                         const dectrust::PolicyProfile& others, int k) {
  const std::size_t n = mdp.joint_state_count();
  const int ak = mdp.local_action_count(k);
  std::vector<std::vector<double>> out(n * ak, std::vector<double>(n, 0.0));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t a = 0; a < mdp.joint_action_count(); ++a) {
      const std::vector<int> acts = mdp.action_codec().decode(a);
      double w = 1.0;
      for (int i = 0; i < mdp.n_agents(); ++i)
        if (i != k) w *= others.probs[i](static_cast<int>(s), acts[i]);
      for (std::size_t t = 0; t < n; ++t) out[s * ak + acts[k]][t] += w * mdp.transition(s, a, t);
    }
  return out;
}

}  // namespace testing
