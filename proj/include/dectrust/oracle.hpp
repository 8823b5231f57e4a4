#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dectrust/decmdp.hpp"
#include "dectrust/policy.hpp"

// Exact tabular oracles. Everything here is a direct linear solve or a full
// enumeration over joint states and actions; nothing is sampled.

namespace dectrust {

/// Thrown when (I - gamma P) is numerically singular.
class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct JointEval {
  Eigen::MatrixXd chain;      ///< P_pi(s, s')
  Eigen::VectorXd v;          ///< v_pi
  Eigen::MatrixXd q;          ///< q_pi(s, a)
  Eigen::MatrixXd adv;        ///< A_pi = q_pi - v_pi
  Eigen::VectorXd occupancy;  ///< normalized discounted state distribution d_pi
  double ret = 0.0;           ///< J(pi) = d_0 . v_pi
};

/// Joint state transition matrix under a profile.
Eigen::MatrixXd joint_chain(const TabularDecMdp& mdp, const PolicyProfile& profile);

JointEval joint_eval(const TabularDecMdp& mdp, const PolicyProfile& profile);
inline JointEval joint_eval(const TabularDecMdp& mdp, const JointPolicy& policy) {
  return joint_eval(mdp, policy.profile());
}

/// Discounted occupancy (1 - gamma) d0^T (I - gamma P)^{-1} for any chain.
Eigen::VectorXd discounted_occupancy(const Eigen::MatrixXd& chain, const Eigen::VectorXd& start, double discount);

/// Solves (I - gamma P) v = r.
Eigen::VectorXd solve_values(const Eigen::MatrixXd& chain, const Eigen::VectorXd& reward, double discount);

/// Total variation sum_{p > q} (p - q).
double tv_divergence(std::span<const double> p, std::span<const double> q);
double tv_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

struct PerformanceDifference {
  double lhs = 0.0;  ///< J(new) - J(old)
  double rhs = 0.0;  ///< advantage form under the new occupancy
};

PerformanceDifference performance_difference(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                                             const PolicyProfile& new_profile);

/// L_old(new) = J(old) + 1/(1-gamma) sum_s d_old(s) sum_a new(a|s) A_old(s,a).
double joint_surrogate(const TabularDecMdp& mdp, const PolicyProfile& old_profile, const PolicyProfile& new_profile);

struct Theorem1Result {
  double lhs = 0.0;  ///< J(new)
  double rhs = 0.0;  ///< L_old(new) - 4 xi gamma alpha^2 / (1-gamma)^2
  double xi = 0.0;
  double alpha = 0.0;  ///< max_s TV over joint action distributions
};

Theorem1Result theorem1_bound(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                              const PolicyProfile& new_profile);

/// Optimal return of the centralized joint MDP by value iteration.
double optimal_joint_return(const TabularDecMdp& mdp, double tolerance = 1e-13);

/// Marginal advantage of agent k conditioned on the joint state:
/// sum_{a_-k} pi_-k(a_-k|s) A(s, a). Shape (joint state, A_k).
Eigen::MatrixXd marginal_advantage(const TabularDecMdp& mdp, const PolicyProfile& profile, const JointEval& eval,
                                   int k);

// ---------------------------------------------------------------------------
// Agent-local quantities.

enum class KernelExactness { exact, occupancy_weighted };

/// Agent k's local transition model with the other agents acting under the
/// stage profile (agents before `stage` updated). Rows are s_k * |A_k| + a_k.
struct StagedKernel {
  int agent = 0;
  int stage = 1;
  Eigen::MatrixXd kernel;
  KernelExactness exactness = KernelExactness::exact;

  double operator()(int s, int a, int next) const {
    return kernel(s * (kernel.rows() / kernel.cols()) + a, next);
  }
};

/// Local kernel of agent k when the other agents follow `profile`. In the
/// factored case the other agents' local states are averaged under the
/// conditional occupancy of `weight_profile`.
StagedKernel local_kernel(const TabularDecMdp& mdp, const PolicyProfile& profile, const PolicyProfile& weight_profile,
                          int k);

StagedKernel staged_marginal_kernel(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                                    const PolicyProfile& new_profile, int k, int stage);

/// Local chain M(s'|s) = sum_a own(a|s) K(s'|s,a).
Eigen::MatrixXd local_chain(const StagedKernel& kernel, const Eigen::MatrixXd& own_policy);

/// Definition-1 shift for agent k; shape (S_k, S_k), rows sum to zero.
Eigen::MatrixXd transition_shift(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                                 const PolicyProfile& new_profile, int k);

struct ShiftDecomposition {
  Eigen::MatrixXd total;
  std::vector<Eigen::MatrixXd> stages;  ///< one per updated agent, in order 1..N
  double residual = 0.0;                ///< max |total - sum(stages)|
  KernelExactness exactness = KernelExactness::exact;
};

ShiftDecomposition shift_decomposition(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                                       const PolicyProfile& new_profile, int k);

/// Agent k's marginal start distribution p_0(s_k).
Eigen::VectorXd local_initial_dist(const TabularDecMdp& mdp, int k);

struct LocalEval {
  Eigen::MatrixXd chain;
  Eigen::VectorXd v;
  Eigen::VectorXd occupancy;
  double ret = 0.0;
  KernelExactness exactness = KernelExactness::exact;
};

/// Value of agent k's local chain when every agent follows `profile`,
/// with local reward r(s_k).
LocalEval decentralized_eval(const TabularDecMdp& mdp, const PolicyProfile& profile, int k);

/// A^{pi_j}_{pi_k}(s_k, a_k) for stage j in 1..N. Shape (S_k, A_k).
Eigen::MatrixXd staged_advantage(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                                 const PolicyProfile& new_profile, int k, int stage);

/// U_{pi_k}(new_j): agent j's independent-ratio surrogate measured on agent
/// k's stationary occupancy. `j` is the 1-based stage/agent index.
double surrogate_u(const TabularDecMdp& mdp, const PolicyProfile& old_profile, const PolicyProfile& new_profile,
                   int k, int j);

struct Theorem2Result {
  double lhs = 0.0;  ///< J(new_k) - J(old_k)
  double rhs = 0.0;  ///< (sum_j U - 2 N gamma xi alpha / (1-gamma)) / (1-gamma)
  double alpha = 0.0;
  double xi = 0.0;
  std::vector<double> surrogates;  ///< U_{pi_k}(new_j), j = 1..N
  KernelExactness exactness = KernelExactness::exact;

  double slack() const { return lhs - rhs; }
};

Theorem2Result theorem2_bound(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                              const PolicyProfile& new_profile, int k);
/// Same bound for every agent, sharing the xi computation.
std::vector<Theorem2Result> theorem2_all(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                                         const PolicyProfile& new_profile);

/// Max |A^{pi_j}_{pi_k}| over all agents k and stages j.
double staged_advantage_bound(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                              const PolicyProfile& new_profile);

struct Prop4AgentReport {
  double eps = 0.0;
  bool premise = false;  ///< every ratio on the support lies in [1/(1+eps), 1+eps]
  double min_ratio = 1.0;
  double max_ratio = 1.0;
  double expected_tv = 0.0;
  bool holds = true;  ///< !premise || expected_tv <= eps
};

/// `occupancy` is a distribution over local states, shared by all agents.
std::vector<Prop4AgentReport> prop4_check(const PolicyProfile& old_profile, const PolicyProfile& new_profile,
                                          std::span<const double> occupancy, std::span<const double> eps_per_agent);

struct StationarityWitness {
  bool violated = false;
  double true_return = 0.0;    ///< J(new_k) under the real, shifted kernel
  double frozen_return = 0.0;  ///< J(new_k) if the stage-1 kernel were frozen
  double naive_rhs = 0.0;      ///< single-agent bound under the frozen kernel
  double alpha = 0.0;
  double xi = 0.0;
};

/// Evaluates agent k's single-agent trust-region bound as if the other
/// agents' policies never changed, and compares it against the true return.
StationarityWitness stationarity_counterexample(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                                                const PolicyProfile& new_profile, int k);

struct CounterexampleSearch {
  std::optional<std::uint64_t> witness_seed;
  StationarityWitness witness;
  int trials = 0;
  int violations = 0;
  std::vector<std::string> log;
};

/// Scans seeds in [first, last] over two-agent shared-state instances where
/// agent 0 barely moves and its partner takes a large step.
CounterexampleSearch search_stationarity_counterexample(std::uint64_t first, std::uint64_t last,
                                                        double own_scale = 0.05, double opponent_scale = 2.0);

/// Flat summary of every oracle quantity for one (old, new, agent) triple.
struct OracleReport {
  int agent = 0;
  KernelExactness exactness = KernelExactness::exact;
  double theorem1_lhs = 0.0;
  double theorem1_rhs = 0.0;
  double theorem2_lhs = 0.0;
  double theorem2_rhs = 0.0;
  double alpha = 0.0;
  double xi = 0.0;
  double shift_residual = 0.0;
  std::vector<double> surrogates;
  Eigen::VectorXd local_value;

  static std::string csv_header(int n_agents);
  std::string csv_row() const;
};

OracleReport oracle_report(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                           const PolicyProfile& new_profile, int k);

}  // namespace dectrust
