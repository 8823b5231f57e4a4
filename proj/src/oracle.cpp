#include "dectrust/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace dectrust {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kMinReciprocalCondition = 1e-14;

VectorXd to_vector(std::span<const double> xs) {
  return Eigen::Map<const VectorXd>(xs.data(), static_cast<Index>(xs.size()));
}

Eigen::PartialPivLU<MatrixXd> factor(const MatrixXd& chain, double discount) {
  const MatrixXd system = MatrixXd::Identity(chain.rows(), chain.cols()) - discount * chain;
  Eigen::PartialPivLU<MatrixXd> lu(system);
  if (!(lu.rcond() > kMinReciprocalCondition)) throw SingularSystemError("(I - gamma P) is numerically singular");
  return lu;
}

// Product over agents other than `skip` of profile(i, local(s, i), a_i).
double others_weight(const TabularDecMdp& mdp, const PolicyProfile& profile, std::size_t s, std::size_t a, int skip) {
  const auto& codec = mdp.action_codec();
  double w = 1.0;
  for (int i = 0; i < mdp.n_agents(); ++i)
    if (i != skip) w *= profile.probs[i](mdp.local_state(s, i), codec.digit(a, i));
  return w;
}

void require_same_spaces(const TabularDecMdp& mdp, int k, int j) {
  if (mdp.local_state_count(k) != mdp.local_state_count(j) || mdp.local_action_count(k) != mdp.local_action_count(j))
    throw std::invalid_argument("agent-j surrogate on agent-k states needs identical local spaces");
}

// Everything Theorem 2 needs for one agent k.
struct AgentStages {
  std::vector<StagedKernel> kernels;  // stages 1..N+1 at index 0..N
  LocalEval before;
  LocalEval after;
  std::vector<MatrixXd> advantages;  // stages 1..N
};

AgentStages agent_stages(const TabularDecMdp& mdp, const PolicyProfile& old_profile, const PolicyProfile& new_profile,
                         int k) {
  const int n = mdp.n_agents();
  AgentStages out;
  for (int stage = 1; stage <= n + 1; ++stage)
    out.kernels.push_back(staged_marginal_kernel(mdp, old_profile, new_profile, k, stage));

  const VectorXd start = local_initial_dist(mdp, k);
  const VectorXd reward = to_vector(mdp.local_reward(k));
  auto evaluate = [&](const StagedKernel& kernel, const MatrixXd& own) {
    LocalEval e;
    e.chain = local_chain(kernel, own);
    e.v = solve_values(e.chain, reward, mdp.discount());
    e.occupancy = discounted_occupancy(e.chain, start, mdp.discount());
    e.ret = start.dot(e.v);
    e.exactness = kernel.exactness;
    return e;
  };
  out.before = evaluate(out.kernels.front(), old_profile.probs[k]);
  out.after = evaluate(out.kernels.back(), new_profile.probs[k]);

  const double gamma = mdp.discount();
  const int states = mdp.local_state_count(k);
  const int actions = mdp.local_action_count(k);
  for (int stage = 1; stage <= n; ++stage) {
    const MatrixXd next_values = out.kernels[stage - 1].kernel * out.before.v;
    MatrixXd adv(states, actions);
    for (int s = 0; s < states; ++s)
      for (int a = 0; a < actions; ++a)
        adv(s, a) = reward[s] + gamma * next_values(s * actions + a) - out.before.v[s];
    out.advantages.push_back(std::move(adv));
  }
  return out;
}

double surrogate_from(const AgentStages& st, const PolicyProfile& old_profile, const PolicyProfile& new_profile,
                      int j0) {
  const MatrixXd& before = old_profile.probs[j0];
  const MatrixXd& after = new_profile.probs[j0];
  const MatrixXd& adv = st.advantages[j0];
  double total = 0.0;
  for (Index s = 0; s < adv.rows(); ++s) {
    double inner = 0.0;
    for (Index a = 0; a < adv.cols(); ++a) {
      if (before(s, a) <= 0.0) {
        if (after(s, a) > 0.0) throw std::domain_error("surrogate_u: ratio undefined, old probability is zero");
        continue;
      }
      inner += before(s, a) * (after(s, a) / before(s, a) - 1.0) * adv(s, a);
    }
    total += st.before.occupancy[s] * inner;
  }
  return total;
}

double expected_tv_sum(const VectorXd& occupancy, const PolicyProfile& old_profile, const PolicyProfile& new_profile) {
  double alpha = 0.0;
  for (int j = 0; j < old_profile.n_agents(); ++j)
    for (Index s = 0; s < occupancy.size(); ++s)
      alpha += occupancy[s] * tv_divergence(VectorXd(old_profile.probs[j].row(s).transpose()),
                                            VectorXd(new_profile.probs[j].row(s).transpose()));
  return alpha;
}

Theorem2Result theorem2_from(const TabularDecMdp& mdp, const AgentStages& st, const PolicyProfile& old_profile,
                             const PolicyProfile& new_profile, int k, double xi) {
  const int n = mdp.n_agents();
  const double gamma = mdp.discount();
  Theorem2Result r;
  r.exactness = st.before.exactness;
  r.lhs = st.after.ret - st.before.ret;
  for (int j = 0; j < n; ++j) {
    require_same_spaces(mdp, k, j);
    r.surrogates.push_back(surrogate_from(st, old_profile, new_profile, j));
  }
  r.alpha = expected_tv_sum(st.before.occupancy, old_profile, new_profile);
  r.xi = xi;
  double total_u = 0.0;
  for (double u : r.surrogates) total_u += u;
  r.rhs = (total_u - 2.0 * n * gamma * xi * r.alpha / (1.0 - gamma)) / (1.0 - gamma);
  return r;
}

double max_abs(const std::vector<MatrixXd>& tables) {
  double m = 0.0;
  for (const auto& t : tables) m = std::max(m, t.cwiseAbs().maxCoeff());
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------

MatrixXd joint_chain(const TabularDecMdp& mdp, const PolicyProfile& profile) {
  const auto states = static_cast<Index>(mdp.joint_state_count());
  const std::size_t actions = mdp.joint_action_count();
  MatrixXd chain = MatrixXd::Zero(states, states);
  for (Index s = 0; s < states; ++s)
    for (std::size_t a = 0; a < actions; ++a) {
      const double w = profile.joint(mdp, static_cast<std::size_t>(s), a);
      if (w == 0.0) continue;
      chain.row(s) += w * to_vector(mdp.transition_row(static_cast<std::size_t>(s), a)).transpose();
    }
  return chain;
}

VectorXd solve_values(const MatrixXd& chain, const VectorXd& reward, double discount) {
  return factor(chain, discount).solve(reward);
}

VectorXd discounted_occupancy(const MatrixXd& chain, const VectorXd& start, double discount) {
  return (1.0 - discount) * factor(chain.transpose(), discount).solve(start);
}

JointEval joint_eval(const TabularDecMdp& mdp, const PolicyProfile& profile) {
  const double gamma = mdp.discount();
  const VectorXd reward = to_vector(mdp.joint_reward());
  JointEval e;
  e.chain = joint_chain(mdp, profile);
  e.v = solve_values(e.chain, reward, gamma);
  e.occupancy = discounted_occupancy(e.chain, to_vector(mdp.initial_dist()), gamma);
  e.ret = to_vector(mdp.initial_dist()).dot(e.v);

  const auto states = static_cast<Index>(mdp.joint_state_count());
  const auto actions = static_cast<Index>(mdp.joint_action_count());
  e.q.resize(states, actions);
  for (Index s = 0; s < states; ++s)
    for (Index a = 0; a < actions; ++a)
      e.q(s, a) = reward[s] + gamma * to_vector(mdp.transition_row(s, a)).dot(e.v);
  e.adv = e.q.colwise() - e.v;
  return e;
}

double tv_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_divergence: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > q[i]) total += p[i] - q[i];
  return total;
}

double tv_divergence(const VectorXd& p, const VectorXd& q) {
  return tv_divergence(std::span<const double>(p.data(), p.size()), std::span<const double>(q.data(), q.size()));
}

PerformanceDifference performance_difference(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                                             const PolicyProfile& new_profile) {
  const JointEval before = joint_eval(mdp, old_profile);
  const JointEval after = joint_eval(mdp, new_profile);
  double weighted = 0.0;
  for (std::size_t s = 0; s < mdp.joint_state_count(); ++s) {
    double inner = 0.0;
    for (std::size_t a = 0; a < mdp.joint_action_count(); ++a)
      inner += new_profile.joint(mdp, s, a) * before.adv(s, a);
    weighted += after.occupancy[s] * inner;
  }
  return {after.ret - before.ret, weighted / (1.0 - mdp.discount())};
}

double joint_surrogate(const TabularDecMdp& mdp, const PolicyProfile& old_profile, const PolicyProfile& new_profile) {
  const JointEval before = joint_eval(mdp, old_profile);
  double weighted = 0.0;
  for (std::size_t s = 0; s < mdp.joint_state_count(); ++s) {
    double inner = 0.0;
    for (std::size_t a = 0; a < mdp.joint_action_count(); ++a)
      inner += new_profile.joint(mdp, s, a) * before.adv(s, a);
    weighted += before.occupancy[s] * inner;
  }
  return before.ret + weighted / (1.0 - mdp.discount());
}

Theorem1Result theorem1_bound(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                              const PolicyProfile& new_profile) {
  const double gamma = mdp.discount();
  const JointEval before = joint_eval(mdp, old_profile);
  Theorem1Result r;
  r.lhs = joint_eval(mdp, new_profile).ret;
  r.xi = before.adv.cwiseAbs().maxCoeff();
  const std::size_t actions = mdp.joint_action_count();
  VectorXd p(static_cast<Index>(actions)), q(static_cast<Index>(actions));
  for (std::size_t s = 0; s < mdp.joint_state_count(); ++s) {
    for (std::size_t a = 0; a < actions; ++a) {
      p[a] = old_profile.joint(mdp, s, a);
      q[a] = new_profile.joint(mdp, s, a);
    }
    r.alpha = std::max(r.alpha, tv_divergence(p, q));
  }
  r.rhs = joint_surrogate(mdp, old_profile, new_profile) -
          4.0 * r.xi * gamma * r.alpha * r.alpha / ((1.0 - gamma) * (1.0 - gamma));
  return r;
}

double optimal_joint_return(const TabularDecMdp& mdp, double tolerance) {
  const auto states = static_cast<Index>(mdp.joint_state_count());
  const VectorXd reward = to_vector(mdp.joint_reward());
  VectorXd v = VectorXd::Zero(states);
  for (int iter = 0; iter < 1'000'000; ++iter) {
    VectorXd next(states);
    for (Index s = 0; s < states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < mdp.joint_action_count(); ++a)
        best = std::max(best, to_vector(mdp.transition_row(s, a)).dot(v));
      next[s] = reward[s] + mdp.discount() * best;
    }
    const double change = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (change < tolerance) break;
  }
  return to_vector(mdp.initial_dist()).dot(v);
}

MatrixXd marginal_advantage(const TabularDecMdp& mdp, const PolicyProfile& profile, const JointEval& eval, int k) {
  const auto& codec = mdp.action_codec();
  MatrixXd out = MatrixXd::Zero(static_cast<Index>(mdp.joint_state_count()), mdp.local_action_count(k));
  for (std::size_t s = 0; s < mdp.joint_state_count(); ++s)
    for (std::size_t a = 0; a < codec.size(); ++a)
      out(s, codec.digit(a, k)) += others_weight(mdp, profile, s, a, k) * eval.adv(s, a);
  return out;
}

// ---------------------------------------------------------------------------

VectorXd local_initial_dist(const TabularDecMdp& mdp, int k) {
  VectorXd p = VectorXd::Zero(mdp.local_state_count(k));
  const auto d0 = mdp.initial_dist();
  for (std::size_t s = 0; s < mdp.joint_state_count(); ++s) p[mdp.local_state(s, k)] += d0[s];
  return p;
}

StagedKernel local_kernel(const TabularDecMdp& mdp, const PolicyProfile& profile, const PolicyProfile& weight_profile,
                          int k) {
  const int states = mdp.local_state_count(k);
  const int actions = mdp.local_action_count(k);
  const auto& codec = mdp.action_codec();
  StagedKernel out;
  out.agent = k;
  out.kernel = MatrixXd::Zero(states * actions, states);

  if (mdp.shared_state()) {
    out.exactness = KernelExactness::exact;
    for (std::size_t s = 0; s < mdp.joint_state_count(); ++s)
      for (std::size_t a = 0; a < codec.size(); ++a) {
        const double w = others_weight(mdp, profile, s, a, k);
        if (w == 0.0) continue;
        out.kernel.row(static_cast<Index>(s) * actions + codec.digit(a, k)) +=
            w * to_vector(mdp.transition_row(s, a)).transpose();
      }
    return out;
  }

  out.exactness = KernelExactness::occupancy_weighted;
  const VectorXd occupancy = joint_eval(mdp, weight_profile).occupancy;
  VectorXd fiber_mass = VectorXd::Zero(states);
  VectorXd fiber_size = VectorXd::Zero(states);
  for (std::size_t s = 0; s < mdp.joint_state_count(); ++s) {
    fiber_mass[mdp.local_state(s, k)] += occupancy[s];
    fiber_size[mdp.local_state(s, k)] += 1.0;
  }
  for (std::size_t s = 0; s < mdp.joint_state_count(); ++s) {
    const int sk = mdp.local_state(s, k);
    // Unreached local states fall back to a uniform average over the fiber.
    const double weight = fiber_mass[sk] > 0.0 ? occupancy[s] / fiber_mass[sk] : 1.0 / fiber_size[sk];
    if (weight == 0.0) continue;
    for (std::size_t a = 0; a < codec.size(); ++a) {
      const double w = weight * others_weight(mdp, profile, s, a, k);
      if (w == 0.0) continue;
      const Index row = static_cast<Index>(sk) * actions + codec.digit(a, k);
      const auto next = mdp.transition_row(s, a);
      for (std::size_t s2 = 0; s2 < next.size(); ++s2) out.kernel(row, mdp.local_state(s2, k)) += w * next[s2];
    }
  }
  return out;
}

StagedKernel staged_marginal_kernel(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                                    const PolicyProfile& new_profile, int k, int stage) {
  if (stage < 1 || stage > mdp.n_agents() + 1) throw std::out_of_range("staged_marginal_kernel: stage out of range");
  const PolicyProfile mixed = PolicyProfile::mixed(old_profile, new_profile, stage);
  StagedKernel out = local_kernel(mdp, mixed, mixed, k);
  out.stage = stage;
  return out;
}

MatrixXd local_chain(const StagedKernel& kernel, const MatrixXd& own_policy) {
  const Index states = kernel.kernel.cols();
  const Index actions = kernel.kernel.rows() / states;
  MatrixXd chain = MatrixXd::Zero(states, states);
  for (Index s = 0; s < states; ++s)
    for (Index a = 0; a < actions; ++a) chain.row(s) += own_policy(s, a) * kernel.kernel.row(s * actions + a);
  return chain;
}

MatrixXd transition_shift(const TabularDecMdp& mdp, const PolicyProfile& old_profile, const PolicyProfile& new_profile,
                          int k) {
  const int n = mdp.n_agents();
  const StagedKernel first = staged_marginal_kernel(mdp, old_profile, new_profile, k, 1);
  const StagedKernel last = staged_marginal_kernel(mdp, old_profile, new_profile, k, n + 1);
  return local_chain(last, new_profile.probs[k]) - local_chain(first, old_profile.probs[k]);
}

ShiftDecomposition shift_decomposition(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                                       const PolicyProfile& new_profile, int k) {
  const int n = mdp.n_agents();
  const int states = mdp.local_state_count(k);
  const int actions = mdp.local_action_count(k);
  ShiftDecomposition out;
  out.total = transition_shift(mdp, old_profile, new_profile, k);
  out.exactness = mdp.shared_state() ? KernelExactness::exact : KernelExactness::occupancy_weighted;

  // Stage j advances agent j alone, starting from the profile with agents
  // before j already updated. Both sides use the stage-j conditional weights.
  MatrixXd sum = MatrixXd::Zero(states, states);
  for (int stage = 1; stage <= n; ++stage) {
    const int j = stage - 1;
    const PolicyProfile from = PolicyProfile::mixed(old_profile, new_profile, stage);
    const PolicyProfile to = PolicyProfile::mixed(old_profile, new_profile, stage + 1);
    MatrixXd term = MatrixXd::Zero(states, states);
    if (j == k) {
      const StagedKernel kernel = local_kernel(mdp, from, from, k);
      for (int s = 0; s < states; ++s)
        for (int a = 0; a < actions; ++a)
          term.row(s) += (new_profile(k, s, a) - old_profile(k, s, a)) * kernel.kernel.row(s * actions + a);
    } else {
      const StagedKernel before = local_kernel(mdp, from, from, k);
      const StagedKernel after = local_kernel(mdp, to, from, k);
      const MatrixXd& own = from.probs[k];
      for (int s = 0; s < states; ++s)
        for (int a = 0; a < actions; ++a)
          term.row(s) += own(s, a) * (after.kernel.row(s * actions + a) - before.kernel.row(s * actions + a));
    }
    sum += term;
    out.stages.push_back(std::move(term));
  }
  out.residual = (out.total - sum).cwiseAbs().maxCoeff();
  return out;
}

LocalEval decentralized_eval(const TabularDecMdp& mdp, const PolicyProfile& profile, int k) {
  const StagedKernel kernel = local_kernel(mdp, profile, profile, k);
  const VectorXd start = local_initial_dist(mdp, k);
  LocalEval e;
  e.chain = local_chain(kernel, profile.probs[k]);
  e.v = solve_values(e.chain, to_vector(mdp.local_reward(k)), mdp.discount());
  e.occupancy = discounted_occupancy(e.chain, start, mdp.discount());
  e.ret = start.dot(e.v);
  e.exactness = kernel.exactness;
  return e;
}

MatrixXd staged_advantage(const TabularDecMdp& mdp, const PolicyProfile& old_profile, const PolicyProfile& new_profile,
                          int k, int stage) {
  if (stage < 1 || stage > mdp.n_agents()) throw std::out_of_range("staged_advantage: stage out of range");
  return agent_stages(mdp, old_profile, new_profile, k).advantages[stage - 1];
}

double surrogate_u(const TabularDecMdp& mdp, const PolicyProfile& old_profile, const PolicyProfile& new_profile,
                   int k, int j) {
  if (j < 1 || j > mdp.n_agents()) throw std::out_of_range("surrogate_u: agent index out of range");
  require_same_spaces(mdp, k, j - 1);
  return surrogate_from(agent_stages(mdp, old_profile, new_profile, k), old_profile, new_profile, j - 1);
}

double staged_advantage_bound(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                              const PolicyProfile& new_profile) {
  double xi = 0.0;
  for (int k = 0; k < mdp.n_agents(); ++k)
    xi = std::max(xi, max_abs(agent_stages(mdp, old_profile, new_profile, k).advantages));
  return xi;
}

std::vector<Theorem2Result> theorem2_all(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                                         const PolicyProfile& new_profile) {
  std::vector<AgentStages> stages;
  double xi = 0.0;
  for (int k = 0; k < mdp.n_agents(); ++k) {
    stages.push_back(agent_stages(mdp, old_profile, new_profile, k));
    xi = std::max(xi, max_abs(stages.back().advantages));
  }
  std::vector<Theorem2Result> out;
  for (int k = 0; k < mdp.n_agents(); ++k) out.push_back(theorem2_from(mdp, stages[k], old_profile, new_profile, k, xi));
  return out;
}

Theorem2Result theorem2_bound(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                              const PolicyProfile& new_profile, int k) {
  if (k < 0 || k >= mdp.n_agents()) throw std::out_of_range("theorem2_bound: agent out of range");
  const double xi = staged_advantage_bound(mdp, old_profile, new_profile);
  return theorem2_from(mdp, agent_stages(mdp, old_profile, new_profile, k), old_profile, new_profile, k, xi);
}

std::vector<Prop4AgentReport> prop4_check(const PolicyProfile& old_profile, const PolicyProfile& new_profile,
                                          std::span<const double> occupancy, std::span<const double> eps_per_agent) {
  if (eps_per_agent.size() != static_cast<std::size_t>(old_profile.n_agents()))
    throw std::invalid_argument("prop4_check: one eps per agent required");
  std::vector<Prop4AgentReport> out;
  for (int j = 0; j < old_profile.n_agents(); ++j) {
    const MatrixXd& before = old_profile.probs[j];
    const MatrixXd& after = new_profile.probs[j];
    if (static_cast<std::size_t>(before.rows()) != occupancy.size())
      throw std::invalid_argument("prop4_check: occupancy size != local state count");
    Prop4AgentReport r;
    r.eps = eps_per_agent[j];
    r.min_ratio = std::numeric_limits<double>::infinity();
    r.max_ratio = -std::numeric_limits<double>::infinity();
    for (Index s = 0; s < before.rows(); ++s) {
      r.expected_tv += occupancy[s] * tv_divergence(VectorXd(before.row(s).transpose()), VectorXd(after.row(s).transpose()));
      if (occupancy[s] <= 0.0) continue;
      for (Index a = 0; a < before.cols(); ++a) {
        const double ratio = after(s, a) / before(s, a);
        r.min_ratio = std::min(r.min_ratio, ratio);
        r.max_ratio = std::max(r.max_ratio, ratio);
      }
    }
    r.premise = r.max_ratio <= 1.0 + r.eps && r.min_ratio >= 1.0 / (1.0 + r.eps);
    r.holds = !r.premise || r.expected_tv <= r.eps;
    out.push_back(r);
  }
  return out;
}

StationarityWitness stationarity_counterexample(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                                                const PolicyProfile& new_profile, int k) {
  const double gamma = mdp.discount();
  const AgentStages st = agent_stages(mdp, old_profile, new_profile, k);
  const StagedKernel& frozen = st.kernels.front();
  const MatrixXd& adv = st.advantages.front();  // advantage under the frozen kernel
  const MatrixXd& before = old_profile.probs[k];
  const MatrixXd& after = new_profile.probs[k];

  StationarityWitness w;
  w.true_return = st.after.ret;
  const VectorXd start = local_initial_dist(mdp, k);
  w.frozen_return =
      start.dot(solve_values(local_chain(frozen, after), to_vector(mdp.local_reward(k)), gamma));
  w.xi = adv.cwiseAbs().maxCoeff();
  double gain = 0.0;
  for (Index s = 0; s < before.rows(); ++s) {
    w.alpha = std::max(w.alpha, tv_divergence(VectorXd(before.row(s).transpose()), VectorXd(after.row(s).transpose())));
    gain += st.before.occupancy[s] * after.row(s).dot(adv.row(s));
  }
  const double surrogate = st.before.ret + gain / (1.0 - gamma);
  w.naive_rhs = surrogate - 4.0 * w.xi * gamma * w.alpha * w.alpha / ((1.0 - gamma) * (1.0 - gamma));
  w.violated = w.true_return < w.naive_rhs - 1e-8;
  return w;
}

CounterexampleSearch search_stationarity_counterexample(std::uint64_t first, std::uint64_t last, double own_scale,
                                                        double opponent_scale) {
  CounterexampleSearch out;
  for (std::uint64_t seed = first; seed <= last; ++seed) {
    const TabularDecMdp mdp = random_dec_mdp(2, 3, 2, true, seed);
    const JointPolicy base = perturb(JointPolicy::uniform(mdp), 0.5, seed);
    std::vector<double> params(base.params().begin(), base.params().end());
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int k = 0; k < mdp.n_agents(); ++k)
      for (int s = 0; s < mdp.local_state_count(k); ++s)
        for (int a = 0; a < mdp.local_action_count(k); ++a)
          params[base.row_offset(k, s) + a] += (k == 0 ? own_scale : opponent_scale) * noise(rng);
    const JointPolicy moved = base.with_params(std::move(params));

    const StationarityWitness w = stationarity_counterexample(mdp, base.profile(), moved.profile(), 0);
    ++out.trials;
    if (w.violated) {
      ++out.violations;
      if (!out.witness_seed) {
        out.witness_seed = seed;
        out.witness = w;
      }
    }
    std::ostringstream os;
    os << std::setprecision(10) << "seed " << seed << ": true " << w.true_return << " naive_rhs " << w.naive_rhs
       << (w.violated ? " VIOLATED" : "");
    out.log.push_back(os.str());
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string OracleReport::csv_header(int n_agents) {
  std::string h = "agent,exact,theorem1_lhs,theorem1_rhs,lhs,rhs,alpha,xi,residual";
  for (int j = 0; j < n_agents; ++j) h += ",U_" + std::to_string(j);
  return h;
}

std::string OracleReport::csv_row() const {
  std::ostringstream os;
  os << std::setprecision(17) << agent << ',' << (exactness == KernelExactness::exact ? 1 : 0) << ',' << theorem1_lhs
     << ',' << theorem1_rhs << ',' << theorem2_lhs << ',' << theorem2_rhs << ',' << alpha << ',' << xi << ','
     << shift_residual;
  for (double u : surrogates) os << ',' << u;
  return os.str();
}

OracleReport oracle_report(const TabularDecMdp& mdp, const PolicyProfile& old_profile,
                           const PolicyProfile& new_profile, int k) {
  OracleReport r;
  r.agent = k;
  const Theorem1Result t1 = theorem1_bound(mdp, old_profile, new_profile);
  r.theorem1_lhs = t1.lhs;
  r.theorem1_rhs = t1.rhs;
  const Theorem2Result t2 = theorem2_bound(mdp, old_profile, new_profile, k);
  r.exactness = t2.exactness;
  r.theorem2_lhs = t2.lhs;
  r.theorem2_rhs = t2.rhs;
  r.alpha = t2.alpha;
  r.xi = t2.xi;
  r.surrogates = t2.surrogates;
  r.shift_residual = shift_decomposition(mdp, old_profile, new_profile, k).residual;
  r.local_value = decentralized_eval(mdp, old_profile, k).v;
  return r;
}

}  // namespace dectrust
