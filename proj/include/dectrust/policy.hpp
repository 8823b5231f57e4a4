#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dectrust/decmdp.hpp"

namespace dectrust {

enum class Sharing {
  independent,     ///< one logit table per agent
  shared,          ///< one table indexed by (local state, action)
  shared_with_id,  ///< one table indexed by (agent id, local state, action)
};

/// Per-agent action distributions, probs[k](s_k, a_k). The oracles work on
/// profiles rather than parameters so that mixed profiles (some agents
/// updated, others not) are plain values.
struct PolicyProfile {
  std::vector<Eigen::MatrixXd> probs;

  int n_agents() const { return static_cast<int>(probs.size()); }
  double operator()(int k, int s, int a) const { return probs[k](s, a); }

  /// Joint action probability pi(a|s) = prod_k pi_k(a_k|s_k).
  double joint(const TabularDecMdp& mdp, std::size_t s, std::size_t a) const;

  /// Agents 0..stage-2 (the first stage-1 agents) from `updated`, the rest
  /// from `base`. stage ranges over 1..N+1.
  static PolicyProfile mixed(const PolicyProfile& base, const PolicyProfile& updated, int stage);
};

/// Tabular softmax decentralized policy. Parameters are one flat vector of
/// logits; rows are addressed through row_offset().
class JointPolicy {
 public:
  static JointPolicy uniform(const TabularDecMdp& mdp, Sharing sharing = Sharing::independent);
  static JointPolicy from_params(const TabularDecMdp& mdp, Sharing sharing, std::vector<double> params);

  Sharing sharing() const { return sharing_; }
  int n_agents() const { return static_cast<int>(state_counts_.size()); }
  int state_count(int k) const { return state_counts_[k]; }
  int action_count(int k) const { return action_counts_[k]; }

  std::span<const double> params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }
  std::size_t row_offset(int k, int s) const;
  std::span<const double> logits(int k, int s) const {
    return {params_.data() + row_offset(k, s), static_cast<std::size_t>(action_counts_[k])};
  }

  Eigen::VectorXd probs(int k, int s) const;
  PolicyProfile profile() const;

  /// Same layout, new parameters.
  JointPolicy with_params(std::vector<double> params) const;

  bool operator==(const JointPolicy& other) const = default;

 private:
  JointPolicy() = default;

  Sharing sharing_ = Sharing::independent;
  std::vector<int> state_counts_;
  std::vector<int> action_counts_;
  std::vector<std::size_t> agent_offsets_;
  std::vector<double> params_;
};

Eigen::VectorXd softmax(std::span<const double> logits);

/// Per-agent independent ratios and joint ratios between two profiles.
struct RatioTable {
  std::vector<Eigen::MatrixXd> per_agent;  ///< (s_k, a_k)
  Eigen::MatrixXd joint;                   ///< (joint state, joint action)
};

RatioTable ratios(const TabularDecMdp& mdp, const JointPolicy& old_policy, const JointPolicy& new_policy);

/// Adds N(0, scale^2) noise to every logit; deterministic in seed.
JointPolicy perturb(const JointPolicy& policy, double scale, std::uint64_t seed);

struct BoxProjection {
  JointPolicy policy;
  /// (agent, state) rows that could not be brought inside the box.
  std::vector<std::pair<int, int>> infeasible_rows;
};

/// Moves every row of new_policy into the ratio box
/// [pi_old / (1 + eps), pi_old * (1 + eps)]: the row is rescaled by the c
/// solving sum_a clamp(c q_a, lo_a, hi_a) = 1, then clamped. eps = 0 returns
/// the old rows.
BoxProjection project_to_ratio_box(const JointPolicy& old_policy, const JointPolicy& new_policy, double eps);

/// Per-agent trust-region budget delta / N.
double sharing_budget(double delta, int n_agents);

}  // namespace dectrust
