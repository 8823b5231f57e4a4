#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dectrust {

/// Mixed-radix codec between a flat joint index and per-agent local digits.
/// Digit 0 is the most significant one, so agent 0 varies slowest.
class MixedRadix {
 public:
  MixedRadix() = default;
  explicit MixedRadix(std::vector<int> radices);

  std::size_t size() const { return size_; }
  int n_digits() const { return static_cast<int>(radices_.size()); }
  int radix(int k) const { return radices_[k]; }
  const std::vector<int>& radices() const { return radices_; }

  std::size_t encode(std::span<const int> digits) const;
  std::vector<int> decode(std::size_t index) const;
  void decode(std::size_t index, std::span<int> out) const;
  int digit(std::size_t index, int k) const { return static_cast<int>((index / strides_[k]) % radices_[k]); }
  std::size_t stride(int k) const { return strides_[k]; }

 private:
  std::vector<int> radices_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 1;
};

class DecMdpError : public std::invalid_argument {
 public:
  enum class Kind { dimension_mismatch, negative_entry, row_sum, initial_dist, discount, non_finite, capacity };

  DecMdpError(Kind kind, std::size_t index, const std::string& what);

  Kind kind() const { return kind_; }
  /// Offending row/entry/agent index, depending on kind.
  std::size_t index() const { return index_; }

 private:
  Kind kind_;
  std::size_t index_;
};

/// Raw tables accepted by TabularDecMdp::create. Layouts are row-major:
/// transition[(s * |A| + a) * |S| + s'] and local_rewards[k][s_k].
struct DecMdpTables {
  int n_agents = 1;
  std::vector<int> local_state_counts;
  std::vector<int> local_action_counts;
  bool shared_state = false;
  std::vector<double> transition;
  std::vector<double> joint_reward;
  std::vector<std::vector<double>> local_rewards;
  std::vector<double> initial_dist;
  double discount = 0.9;
  std::string provenance;
};

/// Largest joint state count accepted by the dense oracles.
inline constexpr std::size_t kMaxJointStates = 4096;
/// Largest transition tensor (entries) accepted.
inline constexpr std::size_t kMaxTransitionEntries = std::size_t{1} << 24;

/// Finite cooperative Dec-MDP with state-only rewards. Immutable once built.
class TabularDecMdp {
 public:
  static TabularDecMdp create(DecMdpTables tables);

  int n_agents() const { return tables_.n_agents; }
  bool shared_state() const { return tables_.shared_state; }
  double discount() const { return tables_.discount; }
  const std::string& provenance() const { return tables_.provenance; }

  std::size_t joint_state_count() const { return joint_states_; }
  std::size_t joint_action_count() const { return actions_.size(); }
  int local_state_count(int k) const { return tables_.local_state_counts[k]; }
  int local_action_count(int k) const { return tables_.local_action_counts[k]; }

  const MixedRadix& action_codec() const { return actions_; }
  /// Only meaningful when !shared_state().
  const MixedRadix& state_codec() const { return states_; }

  /// Agent k's local state inside joint state s.
  int local_state(std::size_t s, int k) const {
    return tables_.shared_state ? static_cast<int>(s) : states_.digit(s, k);
  }

  std::span<const double> transition_row(std::size_t s, std::size_t a) const {
    return {tables_.transition.data() + (s * joint_action_count() + a) * joint_states_, joint_states_};
  }
  double transition(std::size_t s, std::size_t a, std::size_t next) const {
    return tables_.transition[(s * joint_action_count() + a) * joint_states_ + next];
  }
  std::span<const double> joint_reward() const { return tables_.joint_reward; }
  std::span<const double> local_reward(int k) const { return tables_.local_rewards[k]; }
  std::span<const double> initial_dist() const { return tables_.initial_dist; }

  const DecMdpTables& tables() const { return tables_; }

  bool operator==(const TabularDecMdp& other) const;

 private:
  explicit TabularDecMdp(DecMdpTables tables);

  DecMdpTables tables_;
  MixedRadix actions_;
  MixedRadix states_;
  std::size_t joint_states_ = 0;
};

/// Random Dec-MDP: every agent has `state_count` local states and
/// `action_count` actions. Transition rows and the initial distribution are
/// normalized positive uniform draws; rewards are uniform in [0, 1].
/// In the factored case the joint reward is the mean of the local rewards.
TabularDecMdp random_dec_mdp(int n_agents, int state_count, int action_count, bool shared_state,
                             std::uint64_t seed, double discount = 0.9);

/// Cooperative push chain. Positions 0..length-1, start at 0, the last
/// position is an absorbing goal with reward 1. Each agent picks wait (0) or
/// push (1); the chain advances one position when at least ceil(N/2) agents
/// push. In the factored variant every agent carries its own copy of the
/// position and all copies advance together.
TabularDecMdp coop_chain_env(int n_agents, int length, bool shared_state, double discount = 0.9);

inline constexpr int kChainWait = 0;
inline constexpr int kChainPush = 1;

/// Number of pushing agents required to advance the chain.
int chain_push_threshold(int n_agents);

}  // namespace dectrust
