#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dectrust/decmdp.hpp"
#include "dectrust/oracle.hpp"
#include "dectrust/policy.hpp"
#include "dectrust/train.hpp"

namespace dectrust {

struct RunMetadata {
  std::string env;
  int n_agents = 0;
  std::optional<double> eps;
  int epochs = 0;
  std::uint64_t seed = 0;
};

/// Oracle bound for one consecutive policy pair, at the agent with the
/// smallest slack.
struct SlackPoint {
  int iteration = 0;
  int agent = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  double alpha = 0.0;
  bool exact = true;
};

struct TrustRegionReport {
  RunMetadata meta;
  std::vector<double> ratio_min;  ///< first update, per epoch
  std::vector<double> ratio_max;
  std::vector<std::vector<double>> agent_tv;  ///< per update, per agent
  std::vector<double> central_tv;             ///< per update
  std::vector<SlackPoint> slack;              ///< per update
};

/// Summary of a finished run. The slack series is recomputed from the policy
/// sequence by bound_slack_report.
TrustRegionReport trust_region_report(const TabularDecMdp& mdp, const RunResult& run, const RunMetadata& meta);

/// One first-iteration IR_PPO run per (eps, epochs) cell, eps-major order.
/// Cells with epochs = 0 produce the constant series {1}.
std::vector<TrustRegionReport> ratio_drift_experiment(const TabularDecMdp& mdp, const TrainConfig& base,
                                                      const std::vector<std::optional<double>>& eps_grid,
                                                      const std::vector<int>& epoch_grid,
                                                      const std::string& env_label = "");

inline const std::vector<double> kDefaultTvBinEdges = {0.0, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0};
inline constexpr int kDefaultTvEpochs = 20;

/// Histogram of per-(agent, local state) TV between the behavior policy and
/// the policy after the first actor update. Each sample carries the behavior
/// occupancy of its local state divided by N, so `mass` sums to 1.
struct TvHistogram {
  std::optional<double> eps;
  std::vector<double> edges;        ///< bins [edges[i], edges[i+1]), last bin closed
  std::vector<std::size_t> counts;  ///< unweighted sample counts
  std::vector<double> mass;
  std::vector<double> cumulative;  ///< mass of samples below each bin's upper edge
  std::size_t samples = 0;
};

TvHistogram tv_histogram(const TabularDecMdp& mdp, const JointPolicy& before, const JointPolicy& after,
                         const std::vector<double>& edges, std::optional<double> eps = std::nullopt);

/// One histogram per eps (nullopt is the unclipped control), each from a
/// single multi-epoch update of base.algorithm starting at the uniform policy.
std::vector<TvHistogram> tv_distribution_experiment(const TabularDecMdp& mdp, const TrainConfig& base,
                                                    const std::vector<std::optional<double>>& eps_grid,
                                                    const std::vector<double>& edges = kDefaultTvBinEdges);

/// True when every cumulative value of `small` is at least that of `large`.
bool stochastically_smaller(const TvHistogram& small, const TvHistogram& large, double tol = 1e-12);

struct CentralTvPoint {
  int n_agents = 0;
  double median = 0.0;
  std::vector<double> samples;  ///< central TV of every update in the run
};

/// For each N, trains base on family(N) and records the central TV of every
/// update; the median is taken over updates.
std::vector<CentralTvPoint> centralized_tv_vs_n(const std::function<TabularDecMdp(int)>& family,
                                                const std::vector<int>& n_values, const TrainConfig& base);

double median(std::vector<double> xs);

/// Theorem 2 slack for each consecutive pair in `policies`.
std::vector<SlackPoint> bound_slack_report(const TabularDecMdp& mdp, const std::vector<JointPolicy>& policies);

// CSV writers. Column orders are documented in README.md.

void write_records_csv(std::ostream& out, const std::vector<IterationRecord>& records, int n_agents);
void write_records_header(std::ostream& out, int n_agents);
void write_record_row(std::ostream& out, const IterationRecord& record);
void write_ratios_csv(std::ostream& out, const std::vector<IterationRecord>& records);
void write_ratio_drift_csv(std::ostream& out, const std::vector<TrustRegionReport>& reports);
void write_tv_histogram_csv(std::ostream& out, const std::vector<TvHistogram>& hists);
void write_tv_vs_n_csv(std::ostream& out, const std::vector<CentralTvPoint>& points);
void write_slack_csv(std::ostream& out, const std::vector<SlackPoint>& points);

/// "none" for an unclipped cell, otherwise the shortest exact decimal.
std::string format_eps(std::optional<double> eps);
std::string format_double(double x);

}  // namespace dectrust
