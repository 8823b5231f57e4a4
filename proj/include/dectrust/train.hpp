#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dectrust/critic.hpp"
#include "dectrust/decmdp.hpp"
#include "dectrust/policy.hpp"

namespace dectrust {

enum class Algorithm { ir_ppo, jr_ppo, surrogate };
enum class ObjectiveForm {
  eq6,   ///< min(lambda A, clip(lambda, 1 - eps, 1 + eps) A)
  eq15,  ///< min((lambda - 1) A, clip(lambda - 1, -eps, eps) A)
};
enum class AdvantageSource { exact_oracle, mc_rollout };

/// Clip range: a fixed eps, delta / N, or none (unclipped objective).
struct ClipSetting {
  std::optional<double> eps;
  std::optional<double> delta;

  static ClipSetting none() { return {}; }
  static ClipSetting fixed(double e) { return {e, std::nullopt}; }
  static ClipSetting delta_over_n(double d) { return {std::nullopt, d}; }

  std::optional<double> resolve(int n_agents) const;
  bool operator==(const ClipSetting&) const = default;
};

inline constexpr double kDefaultLearningRate = 1.0;

struct TrainConfig {
  Algorithm algorithm = Algorithm::ir_ppo;
  ClipSetting clip = ClipSetting::fixed(0.1);
  ObjectiveForm objective_form = ObjectiveForm::eq6;
  int epochs_per_iter = 10;
  int iterations = 50;
  double learning_rate = kDefaultLearningRate;
  AdvantageSource advantage_source = AdvantageSource::exact_oracle;
  CriticKind critic = CriticKind::centralized;
  int rollout_length = 32;
  int rollout_count = 16;
  double critic_step = 0.1;
  Sharing sharing = Sharing::independent;
  std::uint64_t seed = 1;
  bool track_theorem2 = true;

  /// Throws ConfigError on any violated constraint.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TrainError : public std::runtime_error {
 public:
  TrainError(const std::string& what, int epoch) : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

struct IterationRecord {
  int iteration = 0;
  double ret = 0.0;                  ///< J of the updated policy
  std::vector<double> agent_returns;  ///< decentralized J(pi_k) of the updated policy
  std::vector<double> ratio_min;      ///< per epoch, index 0 before the first step
  std::vector<double> ratio_max;
  std::vector<double> agent_tv;  ///< E_{s_k ~ behavior}[TV(pi_k, new pi_k)]
  double central_tv = 0.0;       ///< sum of agent_tv
  double theorem2_slack = 0.0;   ///< min over agents; NaN when not tracked
  double objective = 0.0;        ///< surrogate objective at the final epoch
};

/// One (state, joint action) sample of the behavior policy.
struct BatchEntry {
  std::size_t state = 0;
  std::size_t action = 0;
  double weight = 0.0;
  double joint_adv = 0.0;
  std::vector<double> agent_adv;
  std::vector<double> behavior_prob;  ///< pi_k(a_k | s_k) per agent
};

struct SampleBatch {
  std::vector<BatchEntry> entries;
};

struct ObjectiveSpec {
  Algorithm algorithm = Algorithm::ir_ppo;
  std::optional<double> eps;
  ObjectiveForm form = ObjectiveForm::eq6;
};

ObjectiveSpec objective_spec(const TrainConfig& cfg, int n_agents);

/// Value of the configured surrogate at `current`; when `grad` is non-null it
/// receives the analytic gradient with respect to current.params().
double surrogate_objective(const TabularDecMdp& mdp, const SampleBatch& batch, const JointPolicy& current,
                           const ObjectiveSpec& spec, std::vector<double>* grad = nullptr);

/// Batch of every (s, a) with positive behavior mass, weighted by d(s) pi(a|s),
/// with advantages from the exact oracle (centralized or none) or the exact
/// decentralized fixed point.
SampleBatch exact_batch(const TabularDecMdp& mdp, const JointPolicy& behavior, CriticKind critic);

struct TrainerState {
  CriticState critic;
  std::mt19937_64 rng;

  static TrainerState init(const TabularDecMdp& mdp, std::uint64_t seed);
};

struct StepResult {
  JointPolicy policy;
  IterationRecord record;
};

StepResult ir_ppo_step(const TabularDecMdp& mdp, const JointPolicy& policy, const TrainConfig& cfg,
                       TrainerState& state);
StepResult jr_ppo_step(const TabularDecMdp& mdp, const JointPolicy& policy, const TrainConfig& cfg,
                       TrainerState& state);
StepResult surrogate_step(const TabularDecMdp& mdp, const JointPolicy& policy, const TrainConfig& cfg,
                          TrainerState& state);
/// Dispatches on cfg.algorithm.
StepResult train_step(const TabularDecMdp& mdp, const JointPolicy& policy, const TrainConfig& cfg,
                      TrainerState& state);

struct RunResult {
  std::vector<JointPolicy> policies;  ///< iterations + 1 entries, starting with the initial policy
  std::vector<IterationRecord> records;
};

using IterationCallback = std::function<void(const IterationRecord&, const JointPolicy&)>;

RunResult run_training(const TabularDecMdp& mdp, const JointPolicy& initial, const TrainConfig& cfg,
                       const IterationCallback& on_iteration = {});
/// Starts from the uniform policy with cfg.sharing.
RunResult run_training(const TabularDecMdp& mdp, const TrainConfig& cfg, const IterationCallback& on_iteration = {});

// Gradient checking -----------------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  std::vector<std::size_t> excluded;  ///< coordinates next to a clip kink
};

/// Central differences of `f` at coordinates `coords` against `grad`.
/// Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator.
GradCheckResult finite_difference_check(const std::function<double(const std::vector<double>&)>& f,
                                        const std::vector<double>& x, const std::vector<double>& grad,
                                        const std::vector<std::size_t>& coords, double step = 1e-5);

/// Checks the analytic gradient of the configured objective. The batch comes
/// from `policy`; the evaluation point is `policy` with logit noise of size
/// `offset_scale` so that ratios differ from 1. Coordinates whose ratios sit
/// within 1e-3 of a clip boundary are excluded.
GradCheckResult grad_check(const TabularDecMdp& mdp, const JointPolicy& policy, const TrainConfig& cfg,
                           int coordinates = 20, double offset_scale = 0.3);

}  // namespace dectrust
