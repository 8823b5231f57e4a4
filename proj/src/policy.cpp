#include "dectrust/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace dectrust {

Eigen::VectorXd softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  Eigen::VectorXd out(static_cast<Eigen::Index>(logits.size()));
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += (out[i] = std::exp(logits[i] - top));
  return out / total;
}

double PolicyProfile::joint(const TabularDecMdp& mdp, std::size_t s, std::size_t a) const {
  double p = 1.0;
  const auto& codec = mdp.action_codec();
  for (int k = 0; k < n_agents(); ++k) p *= probs[k](mdp.local_state(s, k), codec.digit(a, k));
  return p;
}

PolicyProfile PolicyProfile::mixed(const PolicyProfile& base, const PolicyProfile& updated, int stage) {
  if (base.n_agents() != updated.n_agents()) throw std::invalid_argument("PolicyProfile::mixed: agent count mismatch");
  if (stage < 1 || stage > base.n_agents() + 1) throw std::out_of_range("PolicyProfile::mixed: stage out of range");
  PolicyProfile out = base;
  for (int k = 0; k < stage - 1; ++k) out.probs[k] = updated.probs[k];
  return out;
}

JointPolicy JointPolicy::uniform(const TabularDecMdp& mdp, Sharing sharing) {
  JointPolicy p;
  p.sharing_ = sharing;
  for (int k = 0; k < mdp.n_agents(); ++k) {
    p.state_counts_.push_back(mdp.local_state_count(k));
    p.action_counts_.push_back(mdp.local_action_count(k));
  }
  std::size_t total = 0;
  if (sharing == Sharing::independent) {
    for (int k = 0; k < mdp.n_agents(); ++k) {
      p.agent_offsets_.push_back(total);
      total += static_cast<std::size_t>(p.state_counts_[k]) * p.action_counts_[k];
    }
  } else {
    for (int k = 1; k < mdp.n_agents(); ++k)
      if (p.state_counts_[k] != p.state_counts_[0] || p.action_counts_[k] != p.action_counts_[0])
        throw std::invalid_argument("JointPolicy: parameter sharing requires identical local spaces");
    const std::size_t table = static_cast<std::size_t>(p.state_counts_[0]) * p.action_counts_[0];
    total = sharing == Sharing::shared ? table : table * mdp.n_agents();
  }
  p.params_.assign(total, 0.0);
  return p;
}

JointPolicy JointPolicy::from_params(const TabularDecMdp& mdp, Sharing sharing, std::vector<double> params) {
  return uniform(mdp, sharing).with_params(std::move(params));
}

std::size_t JointPolicy::row_offset(int k, int s) const {
  const auto a = static_cast<std::size_t>(action_counts_[k]);
  switch (sharing_) {
    case Sharing::independent:
      return agent_offsets_[k] + static_cast<std::size_t>(s) * a;
    case Sharing::shared:
      return static_cast<std::size_t>(s) * a;
    case Sharing::shared_with_id:
      return (static_cast<std::size_t>(k) * state_counts_[k] + s) * a;
  }
  return 0;
}

Eigen::VectorXd JointPolicy::probs(int k, int s) const { return softmax(logits(k, s)); }

PolicyProfile JointPolicy::profile() const {
  PolicyProfile out;
  for (int k = 0; k < n_agents(); ++k) {
    Eigen::MatrixXd table(state_counts_[k], action_counts_[k]);
    for (int s = 0; s < state_counts_[k]; ++s) table.row(s) = probs(k, s).transpose();
    out.probs.push_back(std::move(table));
  }
  return out;
}

JointPolicy JointPolicy::with_params(std::vector<double> params) const {
  if (params.size() != params_.size()) throw std::invalid_argument("JointPolicy::with_params: size mismatch");
  for (double x : params)
    if (!std::isfinite(x)) throw std::invalid_argument("JointPolicy::with_params: non-finite logit");
  JointPolicy out = *this;
  out.params_ = std::move(params);
  return out;
}

RatioTable ratios(const TabularDecMdp& mdp, const JointPolicy& old_policy, const JointPolicy& new_policy) {
  const PolicyProfile before = old_policy.profile();
  const PolicyProfile after = new_policy.profile();
  RatioTable table;
  for (int k = 0; k < mdp.n_agents(); ++k) table.per_agent.push_back(after.probs[k].cwiseQuotient(before.probs[k]));

  const auto& codec = mdp.action_codec();
  table.joint.resize(static_cast<Eigen::Index>(mdp.joint_state_count()), static_cast<Eigen::Index>(codec.size()));
  for (std::size_t s = 0; s < mdp.joint_state_count(); ++s)
    for (std::size_t a = 0; a < codec.size(); ++a) {
      double lambda = 1.0;
      for (int k = 0; k < mdp.n_agents(); ++k) lambda *= table.per_agent[k](mdp.local_state(s, k), codec.digit(a, k));
      table.joint(s, a) = lambda;
    }
  return table;
}

JointPolicy perturb(const JointPolicy& policy, double scale, std::uint64_t seed) {
  std::vector<double> params(policy.params().begin(), policy.params().end());
  if (scale == 0.0) return policy.with_params(std::move(params));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, scale);
  for (auto& x : params) x += noise(rng);
  return policy.with_params(std::move(params));
}

namespace {

constexpr double kBoxMargin = 1e-12;

// Finds c with sum_i clamp(c * q_i, lo_i, hi_i) = 1. The sum is piecewise
// linear and nondecreasing in c, so the root lies between two consecutive
// breakpoints.
Eigen::VectorXd clamp_to_box(const Eigen::VectorXd& q, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  auto mass = [&](double c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i) total += std::clamp(c * q[i], lo[i], hi[i]);
    return total;
  };
  std::vector<double> breaks;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    breaks.push_back(lo[i] / q[i]);
    breaks.push_back(hi[i] / q[i]);
  }
  std::sort(breaks.begin(), breaks.end());

  double c = breaks.back();
  double prev_c = 0.0;
  double prev_mass = mass(0.0);
  for (double b : breaks) {
    const double m = mass(b);
    if (m >= 1.0) {
      c = m == prev_mass ? b : prev_c + (1.0 - prev_mass) * (b - prev_c) / (m - prev_mass);
      break;
    }
    prev_c = b;
    prev_mass = m;
  }
  Eigen::VectorXd x(q.size());
  for (Eigen::Index i = 0; i < q.size(); ++i) x[i] = std::clamp(c * q[i], lo[i], hi[i]);
  return x / x.sum();
}

}  // namespace

BoxProjection project_to_ratio_box(const JointPolicy& old_policy, const JointPolicy& new_policy, double eps) {
  if (eps < 0.0) throw std::invalid_argument("project_to_ratio_box: eps must be nonnegative");
  if (old_policy.param_count() != new_policy.param_count() || old_policy.sharing() != new_policy.sharing())
    throw std::invalid_argument("project_to_ratio_box: policies have different layouts");

  std::vector<double> params(new_policy.params().begin(), new_policy.params().end());
  std::set<std::size_t> done;
  BoxProjection out{new_policy, {}};
  for (int k = 0; k < old_policy.n_agents(); ++k) {
    for (int s = 0; s < old_policy.state_count(k); ++s) {
      const std::size_t offset = old_policy.row_offset(k, s);
      if (!done.insert(offset).second) continue;
      const Eigen::VectorXd p = old_policy.probs(k, s);
      if (eps == 0.0) {
        const auto logits = old_policy.logits(k, s);
        std::copy(logits.begin(), logits.end(), params.begin() + static_cast<std::ptrdiff_t>(offset));
        continue;
      }
      // The target box is shrunk by a relative 1e-12 so that rounding in the
      // renormalization and the softmax cannot push a ratio past the boundary.
      const Eigen::VectorXd q = new_policy.probs(k, s);
      const Eigen::VectorXd lo = p / (1.0 + eps) * (1.0 + kBoxMargin);
      const Eigen::VectorXd hi = p * (1.0 + eps) * (1.0 - kBoxMargin);
      const Eigen::VectorXd x = clamp_to_box(q, lo, hi);
      for (Eigen::Index a = 0; a < x.size(); ++a) {
        const double r = x[a] / p[a];
        if (r > 1.0 + eps + 1e-9 || r < 1.0 / (1.0 + eps) - 1e-9) out.infeasible_rows.emplace_back(k, s);
        params[offset + a] = std::log(x[a]);
      }
    }
  }
  out.policy = new_policy.with_params(std::move(params));
  return out;
}

double sharing_budget(double delta, int n_agents) {
  if (n_agents < 1) throw std::invalid_argument("sharing_budget: n_agents must be positive");
  return delta / n_agents;
}

}  // namespace dectrust
