#include "dectrust/critic.hpp"

#include <algorithm>
#include <cmath>

#include "dectrust/oracle.hpp"

namespace dectrust {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd to_vector(std::span<const double> xs) {
  return Eigen::Map<const VectorXd>(xs.data(), static_cast<Index>(xs.size()));
}

// Conditional weights of joint states given agent k's local state. Local
// states with no occupancy fall back to a uniform average over their fiber.
VectorXd fiber_weights(const TabularDecMdp& mdp, const VectorXd& occupancy, int k) {
  const int states = mdp.local_state_count(k);
  VectorXd mass = VectorXd::Zero(states);
  VectorXd size = VectorXd::Zero(states);
  for (std::size_t s = 0; s < mdp.joint_state_count(); ++s) {
    mass[mdp.local_state(s, k)] += occupancy[s];
    size[mdp.local_state(s, k)] += 1.0;
  }
  VectorXd w(occupancy.size());
  for (std::size_t s = 0; s < mdp.joint_state_count(); ++s) {
    const int sk = mdp.local_state(s, k);
    w[s] = mass[sk] > 0.0 ? occupancy[s] / mass[sk] : 1.0 / size[sk];
  }
  return w;
}

double others_weight(const TabularDecMdp& mdp, const PolicyProfile& profile, std::size_t s, std::size_t a, int skip) {
  const auto& codec = mdp.action_codec();
  double w = 1.0;
  for (int i = 0; i < mdp.n_agents(); ++i)
    if (i != skip) w *= profile.probs[i](mdp.local_state(s, i), codec.digit(a, i));
  return w;
}

// TD errors of agent k's local critic at every joint state.
VectorXd local_td_errors(const TabularDecMdp& mdp, const MatrixXd& chain, int k, const VectorXd& local) {
  const auto states = static_cast<Index>(mdp.joint_state_count());
  VectorXd lifted(states);
  for (Index s = 0; s < states; ++s) lifted[s] = local[mdp.local_state(s, k)];
  const VectorXd reward = to_vector(mdp.joint_reward());
  return reward + mdp.discount() * chain * lifted - lifted;
}

}  // namespace

CriticState CriticState::zeros(const TabularDecMdp& mdp) {
  CriticState c;
  c.central = VectorXd::Zero(static_cast<Index>(mdp.joint_state_count()));
  for (int k = 0; k < mdp.n_agents(); ++k) c.local.push_back(VectorXd::Zero(mdp.local_state_count(k)));
  return c;
}

CriticState critic_update(const TabularDecMdp& mdp, const PolicyProfile& profile, CriticKind kind, CriticState state,
                          double step) {
  if (kind == CriticKind::none) return state;
  const MatrixXd chain = joint_chain(mdp, profile);
  const VectorXd occupancy = discounted_occupancy(chain, to_vector(mdp.initial_dist()), mdp.discount());
  if (kind == CriticKind::centralized) {
    const VectorXd reward = to_vector(mdp.joint_reward());
    const VectorXd td = reward + mdp.discount() * chain * state.central - state.central;
    state.central += step * occupancy.cwiseProduct(td);
    return state;
  }
  for (int k = 0; k < mdp.n_agents(); ++k) {
    const VectorXd td = local_td_errors(mdp, chain, k, state.local[k]);
    VectorXd delta = VectorXd::Zero(state.local[k].size());
    for (std::size_t s = 0; s < mdp.joint_state_count(); ++s) delta[mdp.local_state(s, k)] += occupancy[s] * td[s];
    state.local[k] += step * delta;
  }
  return state;
}

double critic_residual(const TabularDecMdp& mdp, const PolicyProfile& profile, CriticKind kind,
                       const CriticState& state) {
  if (kind == CriticKind::none) return 0.0;
  const MatrixXd chain = joint_chain(mdp, profile);
  const VectorXd occupancy = discounted_occupancy(chain, to_vector(mdp.initial_dist()), mdp.discount());
  double worst = 0.0;
  if (kind == CriticKind::centralized) {
    const VectorXd reward = to_vector(mdp.joint_reward());
    const VectorXd td = reward + mdp.discount() * chain * state.central - state.central;
    for (Index s = 0; s < td.size(); ++s)
      if (occupancy[s] > 0.0) worst = std::max(worst, std::abs(td[s]));
    return worst;
  }
  for (int k = 0; k < mdp.n_agents(); ++k) {
    const VectorXd td = local_td_errors(mdp, chain, k, state.local[k]);
    const VectorXd w = fiber_weights(mdp, occupancy, k);
    VectorXd projected = VectorXd::Zero(state.local[k].size());
    for (std::size_t s = 0; s < mdp.joint_state_count(); ++s) projected[mdp.local_state(s, k)] += w[s] * td[s];
    worst = std::max(worst, projected.cwiseAbs().maxCoeff());
  }
  return worst;
}

CriticConvergence converge_critic(const TabularDecMdp& mdp, const PolicyProfile& profile, CriticKind kind,
                                  double tolerance, int max_sweeps, double step) {
  CriticConvergence out{CriticState::zeros(mdp), 0.0, 0};
  if (kind == CriticKind::none) return out;
  // The sweep is affine in the critic tables, so the chain and occupancy are
  // computed once here instead of through critic_update.
  const MatrixXd chain = joint_chain(mdp, profile);
  const VectorXd occupancy = discounted_occupancy(chain, to_vector(mdp.initial_dist()), mdp.discount());
  const VectorXd reward = to_vector(mdp.joint_reward());
  for (; out.sweeps < max_sweeps; ++out.sweeps) {
    double residual = 0.0;
    if (kind == CriticKind::centralized) {
      const VectorXd td = reward + mdp.discount() * chain * out.state.central - out.state.central;
      for (Index s = 0; s < td.size(); ++s)
        if (occupancy[s] > 0.0) residual = std::max(residual, std::abs(td[s]));
      if (residual < tolerance) {
        out.residual = residual;
        return out;
      }
      out.state.central += step * occupancy.cwiseProduct(td);
    } else {
      std::vector<VectorXd> deltas;
      for (int k = 0; k < mdp.n_agents(); ++k) {
        const VectorXd td = local_td_errors(mdp, chain, k, out.state.local[k]);
        const VectorXd w = fiber_weights(mdp, occupancy, k);
        VectorXd projected = VectorXd::Zero(out.state.local[k].size());
        VectorXd delta = VectorXd::Zero(out.state.local[k].size());
        for (std::size_t s = 0; s < mdp.joint_state_count(); ++s) {
          projected[mdp.local_state(s, k)] += w[s] * td[s];
          delta[mdp.local_state(s, k)] += occupancy[s] * td[s];
        }
        residual = std::max(residual, projected.cwiseAbs().maxCoeff());
        deltas.push_back(std::move(delta));
      }
      if (residual < tolerance) {
        out.residual = residual;
        return out;
      }
      for (int k = 0; k < mdp.n_agents(); ++k) out.state.local[k] += step * deltas[k];
    }
    out.residual = residual;
  }
  return out;
}

VectorXd decentralized_fixed_point(const TabularDecMdp& mdp, const PolicyProfile& profile, int k) {
  const MatrixXd chain = joint_chain(mdp, profile);
  const VectorXd occupancy = discounted_occupancy(chain, to_vector(mdp.initial_dist()), mdp.discount());
  const VectorXd w = fiber_weights(mdp, occupancy, k);
  const auto states = static_cast<Index>(mdp.joint_state_count());
  MatrixXd phi = MatrixXd::Zero(states, mdp.local_state_count(k));
  for (Index s = 0; s < states; ++s) phi(s, mdp.local_state(s, k)) = 1.0;
  const MatrixXd weighted = phi.transpose() * w.asDiagonal();
  const MatrixXd system = weighted * (phi - mdp.discount() * chain * phi);
  return system.partialPivLu().solve(weighted * to_vector(mdp.joint_reward()));
}

MatrixXd ippo_advantage(const TabularDecMdp& mdp, const PolicyProfile& profile, int k, const VectorXd& local_values) {
  const MatrixXd chain = joint_chain(mdp, profile);
  const VectorXd occupancy = discounted_occupancy(chain, to_vector(mdp.initial_dist()), mdp.discount());
  const VectorXd w = fiber_weights(mdp, occupancy, k);
  const auto& codec = mdp.action_codec();
  const auto reward = mdp.joint_reward();
  MatrixXd out = MatrixXd::Zero(mdp.local_state_count(k), mdp.local_action_count(k));
  for (std::size_t s = 0; s < mdp.joint_state_count(); ++s) {
    const int sk = mdp.local_state(s, k);
    for (std::size_t a = 0; a < codec.size(); ++a) {
      const auto next = mdp.transition_row(s, a);
      double expected = 0.0;
      for (std::size_t s2 = 0; s2 < next.size(); ++s2) expected += next[s2] * local_values[mdp.local_state(s2, k)];
      out(sk, codec.digit(a, k)) +=
          w[s] * others_weight(mdp, profile, s, a, k) * (reward[s] + mdp.discount() * expected);
    }
  }
  for (Index sk = 0; sk < out.rows(); ++sk) out.row(sk).array() -= local_values[sk];
  return out;
}

MatrixXd mappo_advantage(const TabularDecMdp& mdp, const PolicyProfile& profile, int k, const VectorXd& joint_values) {
  const MatrixXd chain = joint_chain(mdp, profile);
  const VectorXd occupancy = discounted_occupancy(chain, to_vector(mdp.initial_dist()), mdp.discount());
  const VectorXd w = fiber_weights(mdp, occupancy, k);
  const auto& codec = mdp.action_codec();
  const auto reward = mdp.joint_reward();
  MatrixXd out = MatrixXd::Zero(mdp.local_state_count(k), mdp.local_action_count(k));
  for (std::size_t s = 0; s < mdp.joint_state_count(); ++s) {
    const int sk = mdp.local_state(s, k);
    for (std::size_t a = 0; a < codec.size(); ++a) {
      const double q = reward[s] + mdp.discount() * to_vector(mdp.transition_row(s, a)).dot(joint_values);
      out(sk, codec.digit(a, k)) += w[s] * others_weight(mdp, profile, s, a, k) * (q - joint_values[s]);
    }
  }
  return out;
}

AdvantageGap advantage_equivalence_check(const TabularDecMdp& mdp, const PolicyProfile& profile) {
  AdvantageGap gap;
  gap.exact_regime = mdp.shared_state();
  const VectorXd joint_values = joint_eval(mdp, profile).v;
  for (int k = 0; k < mdp.n_agents(); ++k) {
    const MatrixXd ippo = ippo_advantage(mdp, profile, k, decentralized_fixed_point(mdp, profile, k));
    const MatrixXd mappo = mappo_advantage(mdp, profile, k, joint_values);
    gap.max_gap = std::max(gap.max_gap, (ippo - mappo).cwiseAbs().maxCoeff());
  }
  return gap;
}

std::size_t sample_index(std::span<const double> probs, std::mt19937_64& rng) {
  // 53-bit uniform in [0, 1), independent of the standard library's
  // distribution implementations.
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cumulative += probs[i];
    if (u < cumulative) return i;
  }
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return i;
  return probs.size() - 1;
}

std::vector<Trajectory> rollout(const TabularDecMdp& mdp, const PolicyProfile& profile, int count, int length,
                                std::mt19937_64& rng) {
  std::vector<Trajectory> batch;
  std::vector<int> actions(mdp.n_agents());
  for (int t = 0; t < count; ++t) {
    Trajectory traj;
    std::size_t s = sample_index(mdp.initial_dist(), rng);
    for (int step = 0; step < length; ++step) {
      for (int k = 0; k < mdp.n_agents(); ++k) {
        const Eigen::RowVectorXd row = profile.probs[k].row(mdp.local_state(s, k));
        actions[k] = static_cast<int>(sample_index({row.data(), static_cast<std::size_t>(row.size())}, rng));
      }
      const std::size_t a = mdp.action_codec().encode(actions);
      const std::size_t next = sample_index(mdp.transition_row(s, a), rng);
      traj.push_back({s, a, mdp.joint_reward()[s], next});
      s = next;
    }
    batch.push_back(std::move(traj));
  }
  return batch;
}

void critic_update_sampled(const TabularDecMdp& mdp, const std::vector<Trajectory>& batch, CriticKind kind,
                           CriticState& state, double step) {
  const double gamma = mdp.discount();
  for (const auto& traj : batch)
    for (const auto& tr : traj) {
      if (kind == CriticKind::centralized) {
        state.central[tr.state] += step * (tr.reward + gamma * state.central[tr.next_state] - state.central[tr.state]);
      } else if (kind == CriticKind::decentralized) {
        for (int k = 0; k < mdp.n_agents(); ++k) {
          const int sk = mdp.local_state(tr.state, k);
          const int nk = mdp.local_state(tr.next_state, k);
          state.local[k][sk] += step * (tr.reward + gamma * state.local[k][nk] - state.local[k][sk]);
        }
      }
    }
}

}  // namespace dectrust
