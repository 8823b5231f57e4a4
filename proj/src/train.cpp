#include "dectrust/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "dectrust/oracle.hpp"

namespace dectrust {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

bool same_local_spaces(const TabularDecMdp& mdp) {
  for (int k = 1; k < mdp.n_agents(); ++k)
    if (mdp.local_state_count(k) != mdp.local_state_count(0) || mdp.local_action_count(k) != mdp.local_action_count(0))
      return false;
  return true;
}

// Clipped term and its derivative with respect to lambda. The derivative is
// zero on the clipped branch.
struct Term {
  double value;
  double slope;
};

Term clipped_term(double lambda, double adv, const ObjectiveSpec& spec) {
  const double shift = spec.form == ObjectiveForm::eq15 ? 1.0 : 0.0;
  const double raw = (lambda - shift) * adv;
  if (adv == 0.0) return {0.0, 0.0};
  if (!spec.eps) return {raw, adv};
  const double eps = *spec.eps;
  const double clipped = spec.form == ObjectiveForm::eq15 ? std::clamp(lambda - 1.0, -eps, eps) * adv
                                                          : std::clamp(lambda, 1.0 - eps, 1.0 + eps) * adv;
  const bool active = (adv > 0.0 && lambda < 1.0 + eps) || (adv < 0.0 && lambda > 1.0 - eps);
  return {std::min(raw, clipped), active ? adv : 0.0};
}

struct ParamRow {
  int agent;
  int state;
  std::size_t offset;
};

std::vector<ParamRow> unique_rows(const JointPolicy& policy) {
  std::vector<ParamRow> rows;
  std::set<std::size_t> seen;
  for (int k = 0; k < policy.n_agents(); ++k)
    for (int s = 0; s < policy.state_count(k); ++s)
      if (seen.insert(policy.row_offset(k, s)).second) rows.push_back({k, s, policy.row_offset(k, s)});
  return rows;
}

struct RatioRange {
  double lo = 1.0;
  double hi = 1.0;
};

RatioRange ratio_range(const TabularDecMdp& mdp, const SampleBatch& batch, const PolicyProfile& current) {
  RatioRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  const auto& codec = mdp.action_codec();
  for (const auto& e : batch.entries)
    for (int k = 0; k < mdp.n_agents(); ++k) {
      const double lambda = current.probs[k](mdp.local_state(e.state, k), codec.digit(e.action, k)) / e.behavior_prob[k];
      r.lo = std::min(r.lo, lambda);
      r.hi = std::max(r.hi, lambda);
    }
  if (batch.entries.empty()) r = {1.0, 1.0};
  return r;
}

std::vector<double> behavior_probs(const TabularDecMdp& mdp, const PolicyProfile& profile, std::size_t s,
                                   std::size_t a) {
  std::vector<double> out(mdp.n_agents());
  for (int k = 0; k < mdp.n_agents(); ++k)
    out[k] = profile.probs[k](mdp.local_state(s, k), mdp.action_codec().digit(a, k));
  return out;
}

SampleBatch rollout_batch(const TabularDecMdp& mdp, const JointPolicy& behavior, const TrainConfig& cfg,
                          TrainerState& state) {
  const PolicyProfile profile = behavior.profile();
  const auto trajectories = rollout(mdp, profile, cfg.rollout_count, cfg.rollout_length, state.rng);
  const double gamma = mdp.discount();
  const int n = mdp.n_agents();
  const CriticState& critic = state.critic;
  const bool central_baseline = cfg.critic != CriticKind::none;

  auto agent_baseline = [&](std::size_t s, int k) {
    switch (cfg.critic) {
      case CriticKind::centralized:
        return critic.central[static_cast<Eigen::Index>(s)];
      case CriticKind::decentralized:
        return critic.local[k][mdp.local_state(s, k)];
      case CriticKind::none:
        break;
    }
    return 0.0;
  };
  auto joint_baseline = [&](std::size_t s) {
    return central_baseline ? critic.central[static_cast<Eigen::Index>(s)] : 0.0;
  };

  SampleBatch batch;
  const double weight = 1.0 / (static_cast<double>(cfg.rollout_count) * cfg.rollout_length);
  for (const auto& traj : trajectories) {
    if (traj.empty()) continue;
    std::vector<double> agent_return(n);
    for (int k = 0; k < n; ++k) agent_return[k] = agent_baseline(traj.back().next_state, k);
    double joint_return = joint_baseline(traj.back().next_state);
    std::vector<BatchEntry> entries(traj.size());
    for (std::size_t t = traj.size(); t-- > 0;) {
      const Transition& tr = traj[t];
      joint_return = tr.reward + gamma * joint_return;
      BatchEntry& e = entries[t];
      e.state = tr.state;
      e.action = tr.action;
      e.weight = weight;
      e.joint_adv = joint_return - joint_baseline(tr.state);
      e.agent_adv.resize(n);
      for (int k = 0; k < n; ++k) {
        agent_return[k] = tr.reward + gamma * agent_return[k];
        e.agent_adv[k] = agent_return[k] - agent_baseline(tr.state, k);
      }
      e.behavior_prob = behavior_probs(mdp, profile, tr.state, tr.action);
    }
    batch.entries.insert(batch.entries.end(), entries.begin(), entries.end());
  }
  critic_update_sampled(mdp, trajectories, CriticKind::centralized, state.critic, cfg.critic_step);
  critic_update_sampled(mdp, trajectories, CriticKind::decentralized, state.critic, cfg.critic_step);
  return batch;
}

StepResult policy_step(const TabularDecMdp& mdp, const JointPolicy& policy, const TrainConfig& cfg,
                       TrainerState& state, Algorithm expected) {
  cfg.validate();
  if (cfg.algorithm != expected) throw ConfigError("train step called with a config for another algorithm");
  if (policy.n_agents() != mdp.n_agents()) throw ConfigError("policy and Dec-MDP disagree on agent count");

  const PolicyProfile before = policy.profile();
  SampleBatch batch;
  if (cfg.advantage_source == AdvantageSource::exact_oracle) {
    batch = exact_batch(mdp, policy, cfg.critic);
    state.critic.central = joint_eval(mdp, before).v;
    for (int k = 0; k < mdp.n_agents(); ++k) state.critic.local[k] = decentralized_fixed_point(mdp, before, k);
  } else {
    batch = rollout_batch(mdp, policy, cfg, state);
  }

  const ObjectiveSpec spec = objective_spec(cfg, mdp.n_agents());
  IterationRecord rec;
  JointPolicy current = policy;
  std::vector<double> params(policy.params().begin(), policy.params().end());
  std::vector<double> grad;
  rec.ratio_min.push_back(1.0);
  rec.ratio_max.push_back(1.0);
  for (int epoch = 1; epoch <= cfg.epochs_per_iter; ++epoch) {
    surrogate_objective(mdp, batch, current, spec, &grad);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!std::isfinite(grad[i]))
        throw TrainError("non-finite gradient at epoch " + std::to_string(epoch), epoch);
      params[i] += cfg.learning_rate * grad[i];
      if (!std::isfinite(params[i])) throw TrainError("non-finite logit at epoch " + std::to_string(epoch), epoch);
    }
    current = current.with_params(params);
    const RatioRange range = ratio_range(mdp, batch, current.profile());
    rec.ratio_min.push_back(range.lo);
    rec.ratio_max.push_back(range.hi);
  }
  rec.objective = surrogate_objective(mdp, batch, current, spec);

  const PolicyProfile after = current.profile();
  std::map<std::size_t, double> state_mass;
  for (const auto& e : batch.entries) state_mass[e.state] += e.weight;
  double total_mass = 0.0;
  for (const auto& [s, m] : state_mass) total_mass += m;
  rec.agent_tv.assign(mdp.n_agents(), 0.0);
  for (int k = 0; k < mdp.n_agents(); ++k) {
    for (const auto& [s, m] : state_mass) {
      const int sk = mdp.local_state(s, k);
      const VectorXd p = before.probs[k].row(sk).transpose();
      const VectorXd q = after.probs[k].row(sk).transpose();
      rec.agent_tv[k] += m * tv_divergence(p, q);
    }
    if (total_mass > 0.0) rec.agent_tv[k] /= total_mass;
  }
  rec.central_tv = std::accumulate(rec.agent_tv.begin(), rec.agent_tv.end(), 0.0);

  rec.ret = joint_eval(mdp, after).ret;
  for (int k = 0; k < mdp.n_agents(); ++k) rec.agent_returns.push_back(decentralized_eval(mdp, after, k).ret);
  rec.theorem2_slack = std::numeric_limits<double>::quiet_NaN();
  if (cfg.track_theorem2 && same_local_spaces(mdp)) {
    double slack = std::numeric_limits<double>::infinity();
    for (const auto& r : theorem2_all(mdp, before, after)) slack = std::min(slack, r.slack());
    rec.theorem2_slack = slack;
  }
  return {std::move(current), std::move(rec)};
}

}  // namespace

std::optional<double> ClipSetting::resolve(int n_agents) const {
  if (eps) return eps;
  if (delta) return sharing_budget(*delta, n_agents);
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (clip.eps && clip.delta) throw ConfigError("clip: set eps or delta, not both");
  if (clip.eps && !(*clip.eps >= 0.0 && *clip.eps <= 1.0)) throw ConfigError("clip_eps must lie in [0, 1]");
  if (clip.delta && !(*clip.delta >= 0.0 && *clip.delta <= 1.0)) throw ConfigError("clip delta must lie in [0, 1]");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (epochs_per_iter < 0) throw ConfigError("epochs_per_iter must be nonnegative");
  if (iterations < 0) throw ConfigError("iterations must be nonnegative");
  if (advantage_source == AdvantageSource::mc_rollout && (rollout_length < 1 || rollout_count < 1))
    throw ConfigError("rollout length and count must be positive");
  if (!(critic_step > 0.0 && critic_step <= 1.0)) throw ConfigError("critic_step must lie in (0, 1]");
}

ObjectiveSpec objective_spec(const TrainConfig& cfg, int n_agents) {
  ObjectiveSpec spec{cfg.algorithm, cfg.clip.resolve(n_agents), cfg.objective_form};
  if (cfg.algorithm == Algorithm::surrogate) {
    spec.eps.reset();
    spec.form = ObjectiveForm::eq15;
  }
  return spec;
}

double surrogate_objective(const TabularDecMdp& mdp, const SampleBatch& batch, const JointPolicy& current,
                           const ObjectiveSpec& spec, std::vector<double>* grad) {
  const PolicyProfile profile = current.profile();
  const auto& codec = mdp.action_codec();
  const int n = mdp.n_agents();
  std::vector<double> acc;
  if (grad) acc.assign(current.param_count(), 0.0);

  double value = 0.0;
  std::vector<double> lambdas(n);
  for (const auto& e : batch.entries) {
    for (int k = 0; k < n; ++k)
      lambdas[k] = profile.probs[k](mdp.local_state(e.state, k), codec.digit(e.action, k)) / e.behavior_prob[k];
    if (spec.algorithm == Algorithm::jr_ppo) {
      const double lambda = std::accumulate(lambdas.begin(), lambdas.end(), 1.0, std::multiplies<>());
      const Term t = clipped_term(lambda, e.joint_adv, spec);
      value += e.weight * t.value;
      if (grad && t.slope != 0.0)
        for (int k = 0; k < n; ++k)
          acc[current.row_offset(k, mdp.local_state(e.state, k)) + codec.digit(e.action, k)] +=
              e.weight * t.slope * lambda;
    } else {
      for (int k = 0; k < n; ++k) {
        const Term t = clipped_term(lambdas[k], e.agent_adv[k], spec);
        value += e.weight * t.value;
        if (grad && t.slope != 0.0)
          acc[current.row_offset(k, mdp.local_state(e.state, k)) + codec.digit(e.action, k)] +=
              e.weight * t.slope * lambdas[k];
      }
    }
  }

  if (grad) {
    // d lambda / d theta_b = lambda (1[a = b] - p_b) on each softmax row.
    grad->assign(current.param_count(), 0.0);
    for (const ParamRow& row : unique_rows(current)) {
      const VectorXd p = current.probs(row.agent, row.state);
      double total = 0.0;
      for (Eigen::Index b = 0; b < p.size(); ++b) total += acc[row.offset + b];
      for (Eigen::Index b = 0; b < p.size(); ++b) (*grad)[row.offset + b] = acc[row.offset + b] - p[b] * total;
    }
  }
  return value;
}

SampleBatch exact_batch(const TabularDecMdp& mdp, const JointPolicy& behavior, CriticKind critic) {
  const PolicyProfile profile = behavior.profile();
  const JointEval eval = joint_eval(mdp, profile);
  const int n = mdp.n_agents();
  const double gamma = mdp.discount();
  const auto reward = mdp.joint_reward();

  std::vector<VectorXd> local_values;
  if (critic == CriticKind::decentralized)
    for (int k = 0; k < n; ++k) local_values.push_back(decentralized_fixed_point(mdp, profile, k));

  SampleBatch batch;
  for (std::size_t s = 0; s < mdp.joint_state_count(); ++s) {
    if (!(eval.occupancy[s] > 0.0)) continue;
    for (std::size_t a = 0; a < mdp.joint_action_count(); ++a) {
      BatchEntry e;
      e.state = s;
      e.action = a;
      e.weight = eval.occupancy[s] * profile.joint(mdp, s, a);
      if (!(e.weight > 0.0)) continue;
      e.joint_adv = eval.adv(s, a);
      e.behavior_prob = behavior_probs(mdp, profile, s, a);
      e.agent_adv.assign(n, e.joint_adv);
      if (critic == CriticKind::decentralized) {
        const auto next = mdp.transition_row(s, a);
        for (int k = 0; k < n; ++k) {
          double expected = 0.0;
          for (std::size_t s2 = 0; s2 < next.size(); ++s2) expected += next[s2] * local_values[k][mdp.local_state(s2, k)];
          e.agent_adv[k] = reward[s] + gamma * expected - local_values[k][mdp.local_state(s, k)];
        }
      }
      batch.entries.push_back(std::move(e));
    }
  }
  return batch;
}

TrainerState TrainerState::init(const TabularDecMdp& mdp, std::uint64_t seed) {
  return {CriticState::zeros(mdp), std::mt19937_64(seed)};
}

StepResult ir_ppo_step(const TabularDecMdp& mdp, const JointPolicy& policy, const TrainConfig& cfg,
                       TrainerState& state) {
  return policy_step(mdp, policy, cfg, state, Algorithm::ir_ppo);
}

StepResult jr_ppo_step(const TabularDecMdp& mdp, const JointPolicy& policy, const TrainConfig& cfg,
                       TrainerState& state) {
  return policy_step(mdp, policy, cfg, state, Algorithm::jr_ppo);
}

StepResult surrogate_step(const TabularDecMdp& mdp, const JointPolicy& policy, const TrainConfig& cfg,
                          TrainerState& state) {
  return policy_step(mdp, policy, cfg, state, Algorithm::surrogate);
}

StepResult train_step(const TabularDecMdp& mdp, const JointPolicy& policy, const TrainConfig& cfg,
                      TrainerState& state) {
  return policy_step(mdp, policy, cfg, state, cfg.algorithm);
}

RunResult run_training(const TabularDecMdp& mdp, const JointPolicy& initial, const TrainConfig& cfg,
                       const IterationCallback& on_iteration) {
  cfg.validate();
  RunResult out;
  out.policies.push_back(initial);
  TrainerState state = TrainerState::init(mdp, cfg.seed);
  for (int it = 0; it < cfg.iterations; ++it) {
    StepResult step = train_step(mdp, out.policies.back(), cfg, state);
    step.record.iteration = it;
    if (on_iteration) on_iteration(step.record, step.policy);
    out.records.push_back(std::move(step.record));
    out.policies.push_back(std::move(step.policy));
  }
  return out;
}

RunResult run_training(const TabularDecMdp& mdp, const TrainConfig& cfg, const IterationCallback& on_iteration) {
  return run_training(mdp, JointPolicy::uniform(mdp, cfg.sharing), cfg, on_iteration);
}

GradCheckResult finite_difference_check(const std::function<double(const std::vector<double>&)>& f,
                                        const std::vector<double>& x, const std::vector<double>& grad,
                                        const std::vector<std::size_t>& coords, double step) {
  GradCheckResult out;
  std::vector<double> probe = x;
  for (std::size_t i : coords) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * step);
    const double scale = std::max({std::abs(grad[i]), std::abs(numeric), 1e-6});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(grad[i] - numeric) / scale);
    ++out.checked;
  }
  return out;
}

GradCheckResult grad_check(const TabularDecMdp& mdp, const JointPolicy& policy, const TrainConfig& cfg,
                           int coordinates, double offset_scale) {
  const ObjectiveSpec spec = objective_spec(cfg, mdp.n_agents());
  const SampleBatch batch = exact_batch(mdp, policy, cfg.critic);
  const JointPolicy point = perturb(policy, offset_scale, cfg.seed ^ 0x5bd1e995ULL);
  std::vector<double> grad;
  surrogate_objective(mdp, batch, point, spec, &grad);

  const PolicyProfile profile = point.profile();
  const auto& codec = mdp.action_codec();
  const std::vector<double> x(point.params().begin(), point.params().end());

  // Parameter rows whose objective terms sit next to a kink.
  std::set<std::size_t> kinked_rows;
  if (spec.eps) {
    const double eps = *spec.eps;
    auto near_kink = [&](double lambda) {
      return std::abs(lambda - (1.0 + eps)) <= 1e-3 || std::abs(lambda - (1.0 - eps)) <= 1e-3;
    };
    for (const auto& e : batch.entries) {
      double joint = 1.0;
      for (int k = 0; k < mdp.n_agents(); ++k) {
        const double lambda =
            profile.probs[k](mdp.local_state(e.state, k), codec.digit(e.action, k)) / e.behavior_prob[k];
        joint *= lambda;
        if (spec.algorithm != Algorithm::jr_ppo && near_kink(lambda))
          kinked_rows.insert(point.row_offset(k, mdp.local_state(e.state, k)));
      }
      if (spec.algorithm == Algorithm::jr_ppo && near_kink(joint))
        for (int k = 0; k < mdp.n_agents(); ++k) kinked_rows.insert(point.row_offset(k, mdp.local_state(e.state, k)));
    }
  }
  std::vector<std::size_t> row_of(x.size());
  for (const ParamRow& row : unique_rows(point))
    for (int a = 0; a < point.action_count(row.agent); ++a) row_of[row.offset + a] = row.offset;

  std::vector<std::size_t> all(x.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(coordinates)));

  std::vector<std::size_t> coords;
  std::vector<std::size_t> excluded;
  for (std::size_t i : all) (kinked_rows.count(row_of[i]) ? excluded : coords).push_back(i);

  auto f = [&](const std::vector<double>& params) {
    return surrogate_objective(mdp, batch, point.with_params(params), spec);
  };
  GradCheckResult out = finite_difference_check(f, x, grad, coords);
  out.excluded = std::move(excluded);
  return out;
}

}  // namespace dectrust
