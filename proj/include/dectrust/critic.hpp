#pragma once

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "dectrust/decmdp.hpp"
#include "dectrust/policy.hpp"

namespace dectrust {

enum class CriticKind {
  none,
  decentralized,  ///< v(s_k), one table per agent (IPPO)
  centralized,    ///< v(s) on the joint state (MAPPO)
};

/// Tabular critic values. Both tables are kept so a run can switch kinds.
struct CriticState {
  Eigen::VectorXd central;
  std::vector<Eigen::VectorXd> local;

  static CriticState zeros(const TabularDecMdp& mdp);
};

/// One synchronous expected TD(0) sweep toward the critic's fixed point,
/// each state's TD error weighted by the discounted occupancy of `profile`.
/// Targets use the team reward r(s).
CriticState critic_update(const TabularDecMdp& mdp, const PolicyProfile& profile, CriticKind kind, CriticState state,
                          double step = 1.0);

/// max |TD error| over states with positive occupancy (centralized) or over
/// reached local states (decentralized, every agent).
double critic_residual(const TabularDecMdp& mdp, const PolicyProfile& profile, CriticKind kind,
                       const CriticState& state);

struct CriticConvergence {
  CriticState state;
  double residual = 0.0;
  int sweeps = 0;
};

/// Repeats critic_update until critic_residual < tolerance.
CriticConvergence converge_critic(const TabularDecMdp& mdp, const PolicyProfile& profile, CriticKind kind,
                                  double tolerance, int max_sweeps = 2'000'000, double step = 1.0);

/// Direct solve of agent k's decentralized TD fixed point (aggregated over
/// joint states sharing s_k, occupancy weighted).
Eigen::VectorXd decentralized_fixed_point(const TabularDecMdp& mdp, const PolicyProfile& profile, int k);

/// Decentralized (IPPO) advantage from a local value table v_k:
/// E_{s_-k | s_k} E_{a_-k}[r(s) + gamma sum_s' p(s'|s,a) v_k(s'_k)] - v_k(s_k).
Eigen::MatrixXd ippo_advantage(const TabularDecMdp& mdp, const PolicyProfile& profile, int k,
                               const Eigen::VectorXd& local_values);

/// Centralized (MAPPO) advantage averaged over s_-k given s_k, from the joint
/// value table v.
Eigen::MatrixXd mappo_advantage(const TabularDecMdp& mdp, const PolicyProfile& profile, int k,
                                const Eigen::VectorXd& joint_values);

struct AdvantageGap {
  double max_gap = 0.0;
  bool exact_regime = true;
};

/// Compares IPPO and MAPPO advantages with both critics at their exact fixed
/// points.
AdvantageGap advantage_equivalence_check(const TabularDecMdp& mdp, const PolicyProfile& profile);

// Sampling -----------------------------------------------------------------

struct Transition {
  std::size_t state = 0;
  std::size_t action = 0;
  double reward = 0.0;
  std::size_t next_state = 0;
};

using Trajectory = std::vector<Transition>;

/// Draws an index from a discrete distribution with one uniform variate.
std::size_t sample_index(std::span<const double> probs, std::mt19937_64& rng);

std::vector<Trajectory> rollout(const TabularDecMdp& mdp, const PolicyProfile& profile, int count, int length,
                                std::mt19937_64& rng);

/// Sampled TD(0) over every transition in the batch, in order.
void critic_update_sampled(const TabularDecMdp& mdp, const std::vector<Trajectory>& batch, CriticKind kind,
                           CriticState& state, double step);

}  // namespace dectrust
