#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dectrust/decmdp.hpp"
#include "dectrust/oracle.hpp"
#include "support.hpp"

using namespace dectrust;

namespace {

DecMdpTables self_loop() {
  DecMdpTables t;
  t.n_agents = 1;
  t.local_state_counts = {1};
  t.local_action_counts = {1};
  t.shared_state = true;
  t.transition = {1.0};
  t.joint_reward = {1.0};
  t.local_rewards = {{1.0}};
  t.initial_dist = {1.0};
  t.discount = 0.9;
  return t;
}

DecMdpError::Kind error_kind(DecMdpTables t) {
  try {
    TabularDecMdp::create(std::move(t));
  } catch (const DecMdpError& e) {
    return e.kind();
  }
  FAIL("expected a validation error");
  return DecMdpError::Kind::capacity;
}

}  // namespace

TEST_CASE("single self-loop state is a valid Dec-MDP") {
  const auto mdp = TabularDecMdp::create(self_loop());
  CHECK(mdp.joint_state_count() == 1);
  CHECK(mdp.joint_action_count() == 1);
  CHECK(mdp.n_agents() == 1);
}

TEST_CASE("row-sum violation names the row") {
  DecMdpTables t;
  t.n_agents = 1;
  t.local_state_counts = {2};
  t.local_action_counts = {1};
  t.shared_state = true;
  t.transition = {0.5, 0.5, 0.6, 0.3};
  t.joint_reward = {0.0, 1.0};
  t.local_rewards = {{0.0, 1.0}};
  t.initial_dist = {1.0, 0.0};
  try {
    TabularDecMdp::create(t);
    FAIL("row sum 0.9 accepted");
  } catch (const DecMdpError& e) {
    CHECK(e.kind() == DecMdpError::Kind::row_sum);
    CHECK(e.index() == 1);
  }
}

TEST_CASE("validation errors are distinct") {
  auto t = self_loop();
  t.discount = 1.0;
  CHECK(error_kind(t) == DecMdpError::Kind::discount);

  t = self_loop();
  t.transition = {1.0, 0.0};
  CHECK(error_kind(t) == DecMdpError::Kind::dimension_mismatch);

  t = self_loop();
  t.initial_dist = {0.5};
  CHECK(error_kind(t) == DecMdpError::Kind::initial_dist);

  t = self_loop();
  t.joint_reward = {std::nan("")};
  CHECK(error_kind(t) == DecMdpError::Kind::non_finite);

  t = self_loop();
  t.local_state_counts = {2};
  CHECK(error_kind(t) == DecMdpError::Kind::dimension_mismatch);
}

TEST_CASE("negative transition entry is rejected") {
  DecMdpTables t = self_loop();
  t.local_state_counts = {2};
  t.transition = {1.5, -0.5, 0.0, 1.0};
  t.joint_reward = {0.0, 0.0};
  t.local_rewards = {{0.0, 0.0}};
  t.initial_dist = {1.0, 0.0};
  CHECK(error_kind(t) == DecMdpError::Kind::negative_entry);
}

TEST_CASE("oversized joint spaces hit the capacity guard") {
  CHECK_THROWS_AS(random_dec_mdp(7, 4, 2, false, 1), DecMdpError);
}

TEST_CASE("random tables survive re-validation unchanged") {
  const auto mdp = random_dec_mdp(2, 2, 2, false, 11);
  const auto again = TabularDecMdp::create(mdp.tables());
  CHECK(again == mdp);
}

TEST_CASE("random_dec_mdp is deterministic in its seed") {
  CHECK(random_dec_mdp(2, 2, 2, true, 7) == random_dec_mdp(2, 2, 2, true, 7));
  CHECK(random_dec_mdp(3, 4, 2, true, 3).tables().transition == random_dec_mdp(3, 4, 2, true, 3).tables().transition);
  CHECK_FALSE(random_dec_mdp(2, 2, 2, true, 7) == random_dec_mdp(2, 2, 2, true, 8));
}

TEST_CASE("random_dec_mdp(3, 2, 2, shared, 1) satisfies every invariant") {
  const auto mdp = random_dec_mdp(3, 2, 2, true, 1);
  CHECK(mdp.joint_state_count() == 2);
  CHECK(mdp.joint_action_count() == 8);
  for (std::size_t s = 0; s < 2; ++s)
    for (int k = 0; k < 3; ++k) CHECK(mdp.local_reward(k)[s] == mdp.joint_reward()[s]);
}

TEST_CASE("single-agent factored instance collapses to an MDP") {
  const auto mdp = random_dec_mdp(1, 4, 3, false, 5);
  CHECK(mdp.joint_state_count() == 4);
  CHECK(mdp.joint_action_count() == 3);
  for (std::size_t s = 0; s < 4; ++s) CHECK(mdp.local_state(s, 0) == static_cast<int>(s));
}

TEST_CASE("property: generated transition rows are distributions") {
  testing::Rng rng(101);
  for (int trial = 0; trial < 60; ++trial) {
    const auto shape = testing::random_shape(rng);
    const auto mdp = random_dec_mdp(shape.agents, shape.states, shape.actions, shape.shared, rng.seed(), shape.discount);
    for (std::size_t s = 0; s < mdp.joint_state_count(); ++s)
      for (std::size_t a = 0; a < mdp.joint_action_count(); ++a) {
        const auto row = mdp.transition_row(s, a);
        double total = 0.0;
        for (double p : row) {
          CHECK(p >= 0.0);
          total += p;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
      }
    for (double r : mdp.joint_reward()) CHECK((r >= 0.0 && r <= 1.0));
  }
}

TEST_CASE("property: mixed-radix codec round-trips exhaustively") {
  testing::Rng rng(202);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<int> radices(1 + rng.below(4));
    for (auto& r : radices) r = 1 + rng.below(5);
    const MixedRadix codec(radices);
    CHECK(codec.size() == static_cast<std::size_t>(std::accumulate(radices.begin(), radices.end(), 1, std::multiplies<>())));
    for (std::size_t i = 0; i < codec.size(); ++i) {
      const auto digits = codec.decode(i);
      for (std::size_t k = 0; k < digits.size(); ++k) {
        CHECK(digits[k] >= 0);
        CHECK(digits[k] < radices[k]);
        CHECK(codec.digit(i, static_cast<int>(k)) == digits[k]);
      }
      CHECK(codec.encode(digits) == i);
    }
  }
}

TEST_CASE("property: shared-state projections are the identity") {
  testing::Rng rng(303);
  for (int trial = 0; trial < 20; ++trial) {
    const auto shape = testing::random_shape(rng, true);
    const auto mdp = random_dec_mdp(shape.agents, shape.states, shape.actions, true, rng.seed());
    for (std::size_t s = 0; s < mdp.joint_state_count(); ++s)
      for (int k = 0; k < mdp.n_agents(); ++k) CHECK(mdp.local_state(s, k) == static_cast<int>(s));
  }
}

TEST_CASE("factored joint state count is the product of local counts") {
  const auto mdp = random_dec_mdp(3, 3, 2, false, 4);
  CHECK(mdp.joint_state_count() == 27);
  for (std::size_t s = 0; s < 27; ++s) {
    const auto digits = mdp.state_codec().decode(s);
    for (int k = 0; k < 3; ++k) CHECK(mdp.local_state(s, k) == digits[k]);
  }
}

TEST_CASE("coop chain (2, 3) all-push return by hand") {
  // Start at 0 (reward 0), reach 1 (reward 0), then the goal pays 1 forever:
  // J = gamma^2 / (1 - gamma).
  const auto mdp = coop_chain_env(2, 3, true);
  const double gamma = mdp.discount();
  PolicyProfile push;
  for (int k = 0; k < 2; ++k) {
    Eigen::MatrixXd table = Eigen::MatrixXd::Zero(3, 2);
    table.col(kChainPush).setOnes();
    push.probs.push_back(table);
  }
  CHECK(joint_eval(mdp, push).ret == doctest::Approx(gamma * gamma / (1.0 - gamma)).epsilon(1e-12));
  CHECK(optimal_joint_return(mdp) == doctest::Approx(gamma * gamma / (1.0 - gamma)).epsilon(1e-10));
}

TEST_CASE("coop chain is deterministic and cooperative") {
  CHECK(coop_chain_env(3, 4, true) == coop_chain_env(3, 4, true));
  const auto single = coop_chain_env(1, 2, true);
  CHECK(single.joint_state_count() == 2);
  CHECK(single.joint_action_count() == 2);
  for (int n = 1; n <= 3; ++n) {
    const auto mdp = coop_chain_env(n, 4, true);
    CHECK(optimal_joint_return(mdp) > joint_eval(mdp, JointPolicy::uniform(mdp)).ret + 1e-3);
  }
  CHECK(chain_push_threshold(1) == 1);
  CHECK(chain_push_threshold(2) == 1);
  CHECK(chain_push_threshold(3) == 2);
  CHECK(chain_push_threshold(5) == 3);
}

TEST_CASE("factored chain matches the shared chain's return") {
  const auto shared = coop_chain_env(2, 4, true);
  const auto factored = coop_chain_env(2, 4, false);
  CHECK(factored.joint_state_count() == 16);
  CHECK(joint_eval(factored, JointPolicy::uniform(factored)).ret ==
        doctest::Approx(joint_eval(shared, JointPolicy::uniform(shared)).ret).epsilon(1e-12));
}
