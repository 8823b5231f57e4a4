#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dectrust/critic.hpp"
#include "dectrust/oracle.hpp"
#include "support.hpp"

using namespace dectrust;

TEST_CASE("property: centralized TD critic converges to the oracle values") {
  testing::Rng rng(41);
  for (int trial = 0; trial < 15; ++trial) {
    const auto shape = testing::random_shape(rng, false, 2);
    const auto mdp = random_dec_mdp(shape.agents, shape.states, shape.actions, shape.shared, rng.seed(), 0.9);
    const auto p = perturb(JointPolicy::uniform(mdp), 0.5, rng.seed()).profile();
    const auto c = converge_critic(mdp, p, CriticKind::centralized, 1e-9);
    CHECK(c.residual < 1e-9);
    const auto ref = testing::power_iteration_values(mdp, p, 5000);
    for (std::size_t s = 0; s < ref.size(); ++s) CHECK(std::abs(c.state.central[s] - ref[s]) < 1e-6);
  }
}

TEST_CASE("property: decentralized TD critic converges to its projected fixed point") {
  testing::Rng rng(42);
  for (int trial = 0; trial < 15; ++trial) {
    const auto shape = testing::random_shape(rng, false, 2);
    const auto mdp = random_dec_mdp(shape.agents, shape.states, shape.actions, shape.shared, rng.seed(), 0.9);
    const auto p = perturb(JointPolicy::uniform(mdp), 0.5, rng.seed()).profile();
    const auto c = converge_critic(mdp, p, CriticKind::decentralized, 1e-10);
    for (int k = 0; k < mdp.n_agents(); ++k)
      CHECK((c.state.local[k] - decentralized_fixed_point(mdp, p, k)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("shared-state decentralized fixed point is the joint value") {
  testing::Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const auto shape = testing::random_shape(rng, true);
    const auto mdp = random_dec_mdp(shape.agents, shape.states, shape.actions, true, rng.seed(), shape.discount);
    const auto p = perturb(JointPolicy::uniform(mdp), 0.5, rng.seed()).profile();
    const auto v = joint_eval(mdp, p).v;
    for (int k = 0; k < mdp.n_agents(); ++k) CHECK((decentralized_fixed_point(mdp, p, k) - v).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("property: IPPO and MAPPO advantages coincide on shared states") {
  testing::Rng rng(44);
  for (int trial = 0; trial < 30; ++trial) {
    const auto shape = testing::random_shape(rng, true);
    const auto mdp = random_dec_mdp(shape.agents, shape.states, shape.actions, true, rng.seed(), shape.discount);
    const auto p = perturb(JointPolicy::uniform(mdp), 1.0, rng.seed()).profile();
    const auto gap = advantage_equivalence_check(mdp, p);
    CHECK(gap.exact_regime);
    CHECK(gap.max_gap < 1e-8);
  }
}

TEST_CASE("MAPPO advantage is the marginal joint advantage") {
  const auto mdp = random_dec_mdp(2, 3, 2, true, 6);
  const auto p = perturb(JointPolicy::uniform(mdp), 0.5, 1).profile();
  const auto eval = joint_eval(mdp, p);
  for (int k = 0; k < 2; ++k)
    CHECK((mappo_advantage(mdp, p, k, eval.v) - marginal_advantage(mdp, p, eval, k)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("advantage check reports the approximate regime on factored states") {
  const auto mdp = random_dec_mdp(2, 2, 2, false, 6);
  const auto p = perturb(JointPolicy::uniform(mdp), 0.5, 1).profile();
  CHECK_FALSE(advantage_equivalence_check(mdp, p).exact_regime);
}

TEST_CASE("critic kind none never moves") {
  const auto mdp = random_dec_mdp(2, 2, 2, true, 2);
  const auto p = JointPolicy::uniform(mdp).profile();
  const auto zero = CriticState::zeros(mdp);
  const auto after = critic_update(mdp, p, CriticKind::none, zero);
  CHECK(after.central == zero.central);
  CHECK(after.local[0] == zero.local[0]);
}

TEST_CASE("sample_index follows the distribution") {
  std::mt19937_64 gen(5);
  const std::vector<double> probs = {0.1, 0.0, 0.6, 0.3};
  std::vector<int> counts(4, 0);
  constexpr int kDraws = 200000;
  for (int i = 0; i < kDraws; ++i) ++counts[sample_index(probs, gen)];
  CHECK(counts[1] == 0);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(counts[i] / double(kDraws) - probs[i]) < 0.005);
}

TEST_CASE("rollouts are deterministic and carry state rewards") {
  const auto mdp = random_dec_mdp(2, 3, 2, false, 7);
  const auto p = perturb(JointPolicy::uniform(mdp), 0.5, 1).profile();
  std::mt19937_64 a(9), b(9);
  const auto x = rollout(mdp, p, 4, 10, a);
  const auto y = rollout(mdp, p, 4, 10, b);
  REQUIRE(x.size() == 4);
  for (std::size_t i = 0; i < x.size(); ++i) {
    REQUIRE(x[i].size() == 10);
    for (std::size_t t = 0; t < x[i].size(); ++t) {
      CHECK(x[i][t].state == y[i][t].state);
      CHECK(x[i][t].action == y[i][t].action);
      CHECK(x[i][t].reward == mdp.joint_reward()[x[i][t].state]);
      CHECK(mdp.transition(x[i][t].state, x[i][t].action, x[i][t].next_state) > 0.0);
      if (t + 1 < x[i].size()) CHECK(x[i][t + 1].state == x[i][t].next_state);
    }
  }
}

TEST_CASE("sampled TD approaches the true values") {
  const auto mdp = random_dec_mdp(1, 3, 2, true, 12, 0.5);
  const auto p = JointPolicy::uniform(mdp).profile();
  std::mt19937_64 gen(3);
  auto state = CriticState::zeros(mdp);
  for (int round = 0; round < 400; ++round)
    critic_update_sampled(mdp, rollout(mdp, p, 8, 20, gen), CriticKind::centralized, state, 0.02);
  const auto v = joint_eval(mdp, p).v;
  CHECK((state.central - v).cwiseAbs().maxCoeff() < 0.05 * v.cwiseAbs().maxCoeff());
}
