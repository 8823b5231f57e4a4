#include "dectrust/decmdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace dectrust {

namespace {

constexpr double kRowTolerance = 1e-12;

std::string describe(const char* what, std::size_t index) {
  std::ostringstream os;
  os << what << " (index " << index << ")";
  return os.str();
}

[[noreturn]] void fail(DecMdpError::Kind kind, std::size_t index, const char* what) {
  throw DecMdpError(kind, index, describe(what, index));
}

std::size_t checked_product(const std::vector<int>& counts) {
  std::size_t product = 1;
  for (int c : counts) {
    product *= static_cast<std::size_t>(c);
    if (product > kMaxTransitionEntries) fail(DecMdpError::Kind::capacity, product, "joint space too large");
  }
  return product;
}

}  // namespace

MixedRadix::MixedRadix(std::vector<int> radices) : radices_(std::move(radices)), strides_(radices_.size()) {
  size_ = 1;
  for (int k = static_cast<int>(radices_.size()) - 1; k >= 0; --k) {
    if (radices_[k] <= 0) throw std::invalid_argument("MixedRadix: radix must be positive");
    strides_[k] = size_;
    size_ *= static_cast<std::size_t>(radices_[k]);
  }
}

std::size_t MixedRadix::encode(std::span<const int> digits) const {
  if (digits.size() != radices_.size()) throw std::invalid_argument("MixedRadix::encode: digit count mismatch");
  std::size_t index = 0;
  for (std::size_t k = 0; k < digits.size(); ++k) {
    if (digits[k] < 0 || digits[k] >= radices_[k]) throw std::out_of_range("MixedRadix::encode: digit out of range");
    index += static_cast<std::size_t>(digits[k]) * strides_[k];
  }
  return index;
}

std::vector<int> MixedRadix::decode(std::size_t index) const {
  std::vector<int> out(radices_.size());
  decode(index, out);
  return out;
}

void MixedRadix::decode(std::size_t index, std::span<int> out) const {
  if (index >= size_) throw std::out_of_range("MixedRadix::decode: index out of range");
  for (std::size_t k = 0; k < radices_.size(); ++k) {
    out[k] = static_cast<int>(index / strides_[k]);
    index %= strides_[k];
  }
}

DecMdpError::DecMdpError(Kind kind, std::size_t index, const std::string& what)
    : std::invalid_argument(what), kind_(kind), index_(index) {}

TabularDecMdp::TabularDecMdp(DecMdpTables tables) : tables_(std::move(tables)) {}

TabularDecMdp TabularDecMdp::create(DecMdpTables t) {
  using Kind = DecMdpError::Kind;
  if (t.n_agents < 1) fail(Kind::dimension_mismatch, 0, "n_agents must be positive");
  const auto n = static_cast<std::size_t>(t.n_agents);
  if (t.local_state_counts.size() != n) fail(Kind::dimension_mismatch, t.local_state_counts.size(), "local_state_counts length != n_agents");
  if (t.local_action_counts.size() != n) fail(Kind::dimension_mismatch, t.local_action_counts.size(), "local_action_counts length != n_agents");
  for (std::size_t k = 0; k < n; ++k) {
    if (t.local_state_counts[k] < 1) fail(Kind::dimension_mismatch, k, "local state count must be positive");
    if (t.local_action_counts[k] < 1) fail(Kind::dimension_mismatch, k, "local action count must be positive");
  }
  if (!(t.discount >= 0.0 && t.discount < 1.0)) fail(Kind::discount, 0, "discount must lie in [0, 1)");

  std::size_t joint_states = 0;
  if (t.shared_state) {
    for (std::size_t k = 1; k < n; ++k)
      if (t.local_state_counts[k] != t.local_state_counts[0])
        fail(Kind::dimension_mismatch, k, "shared_state requires equal local state counts");
    joint_states = static_cast<std::size_t>(t.local_state_counts[0]);
  } else {
    joint_states = checked_product(t.local_state_counts);
  }
  if (joint_states > kMaxJointStates) fail(Kind::capacity, joint_states, "joint state count exceeds capacity");
  const std::size_t joint_actions = checked_product(t.local_action_counts);
  if (joint_states * joint_actions * joint_states > kMaxTransitionEntries)
    fail(Kind::capacity, joint_states * joint_actions * joint_states, "transition tensor exceeds capacity");

  if (t.transition.size() != joint_states * joint_actions * joint_states)
    fail(Kind::dimension_mismatch, t.transition.size(), "transition size != |S| * |A| * |S|");
  if (t.joint_reward.size() != joint_states) fail(Kind::dimension_mismatch, t.joint_reward.size(), "joint_reward size != |S|");
  if (t.initial_dist.size() != joint_states) fail(Kind::dimension_mismatch, t.initial_dist.size(), "initial_dist size != |S|");
  if (t.local_rewards.size() != n) fail(Kind::dimension_mismatch, t.local_rewards.size(), "local_rewards length != n_agents");
  for (std::size_t k = 0; k < n; ++k)
    if (t.local_rewards[k].size() != static_cast<std::size_t>(t.local_state_counts[k]))
      fail(Kind::dimension_mismatch, k, "local reward table size != local state count");

  for (std::size_t i = 0; i < joint_states; ++i)
    if (!std::isfinite(t.joint_reward[i])) fail(Kind::non_finite, i, "joint reward not finite");
  for (std::size_t k = 0; k < n; ++k)
    for (double r : t.local_rewards[k])
      if (!std::isfinite(r)) fail(Kind::non_finite, k, "local reward not finite");

  const std::size_t rows = joint_states * joint_actions;
  for (std::size_t row = 0; row < rows; ++row) {
    double sum = 0.0;
    for (std::size_t j = 0; j < joint_states; ++j) {
      const double p = t.transition[row * joint_states + j];
      if (!std::isfinite(p)) fail(Kind::non_finite, row, "transition entry not finite");
      if (p < 0.0) fail(Kind::negative_entry, row, "negative transition probability in row");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowTolerance) fail(Kind::row_sum, row, "transition row does not sum to 1");
  }
  double init_sum = 0.0;
  for (std::size_t i = 0; i < joint_states; ++i) {
    const double p = t.initial_dist[i];
    if (!std::isfinite(p) || p < 0.0) fail(Kind::initial_dist, i, "initial_dist entry negative or not finite");
    init_sum += p;
  }
  if (std::abs(init_sum - 1.0) > kRowTolerance) fail(Kind::initial_dist, 0, "initial_dist does not sum to 1");

  TabularDecMdp mdp(std::move(t));
  mdp.joint_states_ = joint_states;
  mdp.actions_ = MixedRadix(mdp.tables_.local_action_counts);
  if (!mdp.tables_.shared_state) mdp.states_ = MixedRadix(mdp.tables_.local_state_counts);
  return mdp;
}

bool TabularDecMdp::operator==(const TabularDecMdp& o) const {
  const auto& a = tables_;
  const auto& b = o.tables_;
  return a.n_agents == b.n_agents && a.local_state_counts == b.local_state_counts &&
         a.local_action_counts == b.local_action_counts && a.shared_state == b.shared_state &&
         a.transition == b.transition && a.joint_reward == b.joint_reward && a.local_rewards == b.local_rewards &&
         a.initial_dist == b.initial_dist && a.discount == b.discount;
}

TabularDecMdp random_dec_mdp(int n_agents, int state_count, int action_count, bool shared_state,
                             std::uint64_t seed, double discount) {
  if (n_agents < 1 || state_count < 1 || action_count < 1)
    throw std::invalid_argument("random_dec_mdp: counts must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto positive = [&] { return 1.0 - unit(rng); };  // (0, 1]

  DecMdpTables t;
  t.n_agents = n_agents;
  t.local_state_counts.assign(n_agents, state_count);
  t.local_action_counts.assign(n_agents, action_count);
  t.shared_state = shared_state;
  t.discount = discount;

  std::size_t states = static_cast<std::size_t>(state_count);
  if (!shared_state)
    for (int k = 1; k < n_agents; ++k) states *= static_cast<std::size_t>(state_count);
  std::size_t actions = 1;
  for (int k = 0; k < n_agents; ++k) actions *= static_cast<std::size_t>(action_count);
  if (states > kMaxJointStates || states * actions * states > kMaxTransitionEntries)
    throw DecMdpError(DecMdpError::Kind::capacity, states, "random_dec_mdp: requested size exceeds capacity");

  t.transition.resize(states * actions * states);
  for (std::size_t row = 0; row < states * actions; ++row) {
    double sum = 0.0;
    for (std::size_t j = 0; j < states; ++j) sum += (t.transition[row * states + j] = positive());
    for (std::size_t j = 0; j < states; ++j) t.transition[row * states + j] /= sum;
  }
  t.initial_dist.resize(states);
  double sum = 0.0;
  for (auto& p : t.initial_dist) sum += (p = positive());
  for (auto& p : t.initial_dist) p /= sum;

  if (shared_state) {
    t.joint_reward.resize(states);
    for (auto& r : t.joint_reward) r = unit(rng);
    t.local_rewards.assign(n_agents, t.joint_reward);
  } else {
    t.local_rewards.assign(n_agents, std::vector<double>(state_count));
    for (auto& table : t.local_rewards)
      for (auto& r : table) r = unit(rng);
    MixedRadix codec(t.local_state_counts);
    t.joint_reward.resize(states);
    for (std::size_t s = 0; s < states; ++s) {
      double total = 0.0;
      for (int k = 0; k < n_agents; ++k) total += t.local_rewards[k][codec.digit(s, k)];
      t.joint_reward[s] = total / n_agents;
    }
  }
  std::ostringstream os;
  os << "random(agents=" << n_agents << ",states=" << state_count << ",actions=" << action_count
     << ",shared=" << (shared_state ? 1 : 0) << ",seed=" << seed << ")";
  t.provenance = os.str();
  return TabularDecMdp::create(std::move(t));
}

int chain_push_threshold(int n_agents) { return (n_agents + 1) / 2; }

TabularDecMdp coop_chain_env(int n_agents, int length, bool shared_state, double discount) {
  if (n_agents < 1 || length < 2) throw std::invalid_argument("coop_chain_env: need n_agents >= 1 and length >= 2");
  const int goal = length - 1;
  const int threshold = chain_push_threshold(n_agents);

  DecMdpTables t;
  t.n_agents = n_agents;
  t.local_state_counts.assign(n_agents, length);
  t.local_action_counts.assign(n_agents, 2);
  t.shared_state = shared_state;
  t.discount = discount;

  std::vector<double> position_reward(length, 0.0);
  position_reward[goal] = 1.0;
  t.local_rewards.assign(n_agents, position_reward);

  const MixedRadix actions(t.local_action_counts);
  const MixedRadix positions(shared_state ? std::vector<int>{length} : t.local_state_counts);
  const std::size_t states = positions.size();

  t.transition.assign(states * actions.size() * states, 0.0);
  std::vector<int> pos(positions.n_digits());
  std::vector<int> act(n_agents);
  for (std::size_t s = 0; s < states; ++s) {
    positions.decode(s, pos);
    for (std::size_t a = 0; a < actions.size(); ++a) {
      actions.decode(a, act);
      const int pushers = static_cast<int>(std::count(act.begin(), act.end(), kChainPush));
      std::vector<int> next = pos;
      if (pushers >= threshold)
        for (int& x : next) x = std::min(x + 1, goal);
      t.transition[(s * actions.size() + a) * states + positions.encode(next)] = 1.0;
    }
  }

  t.joint_reward.resize(states);
  for (std::size_t s = 0; s < states; ++s) {
    positions.decode(s, pos);
    double total = 0.0;
    for (int x : pos) total += position_reward[x];
    t.joint_reward[s] = total / static_cast<double>(pos.size());
  }
  t.initial_dist.assign(states, 0.0);
  t.initial_dist[0] = 1.0;

  std::ostringstream os;
  os << "chain(agents=" << n_agents << ",length=" << length << ",shared=" << (shared_state ? 1 : 0) << ")";
  t.provenance = os.str();
  return TabularDecMdp::create(std::move(t));
}

}  // namespace dectrust
