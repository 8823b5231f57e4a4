#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "dectrust/diagnostics.hpp"
#include "support.hpp"

using namespace dectrust;

namespace {

TrainConfig chain_config(std::optional<double> eps, int epochs, int iterations) {
  TrainConfig cfg;
  cfg.clip = eps ? ClipSetting::fixed(*eps) : ClipSetting::none();
  cfg.epochs_per_iter = epochs;
  cfg.iterations = iterations;
  return cfg;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("zero epochs give a flat ratio series") {
  const auto mdp = coop_chain_env(2, 3, true);
  const auto reps = ratio_drift_experiment(mdp, chain_config(0.1, 10, 1), {0.1}, {0});
  REQUIRE(reps.size() == 1);
  CHECK(reps[0].ratio_min == std::vector<double>{1.0});
  CHECK(reps[0].ratio_max == std::vector<double>{1.0});
}

TEST_CASE("smaller clip range grows the max ratio more slowly") {
  const auto mdp = coop_chain_env(3, 4, true);
  const auto reps = ratio_drift_experiment(mdp, chain_config(0.1, 20, 1), {0.1, 0.3}, {20}, "chain");
  REQUIRE(reps.size() == 2);
  CHECK(reps[0].meta.eps == 0.1);
  CHECK(reps[1].meta.eps == 0.3);
  REQUIRE(reps[0].ratio_max.size() == 21);
  for (std::size_t e = 0; e < 21; ++e) CHECK(reps[0].ratio_max[e] <= reps[1].ratio_max[e]);
  CHECK(*std::max_element(reps[0].ratio_max.begin(), reps[0].ratio_max.end()) > 1.1);
}

TEST_CASE("max ratio is nondecreasing within one iteration") {
  const auto mdp = coop_chain_env(2, 5, true);
  const auto reps = ratio_drift_experiment(mdp, chain_config(0.3, 20, 1), {0.3}, {20});
  const auto& series = reps[0].ratio_max;
  for (std::size_t e = 1; e < series.size(); ++e) CHECK(series[e] >= series[e - 1]);
}

TEST_CASE("ratio drift grid runs eps-major") {
  const auto mdp = coop_chain_env(2, 3, true);
  const auto reps = ratio_drift_experiment(mdp, chain_config(0.1, 1, 1), {0.1, std::nullopt}, {1, 3});
  REQUIRE(reps.size() == 4);
  CHECK(reps[1].meta.epochs == 3);
  CHECK_FALSE(reps[2].meta.eps.has_value());
  CHECK(reps[3].ratio_max.size() == 4);
}

TEST_CASE("no-update control puts all TV mass in the first bin") {
  const auto mdp = coop_chain_env(2, 4, true);
  const auto hists = tv_distribution_experiment(mdp, chain_config(0.1, 0, 1), {0.1});
  const auto& h = hists[0];
  CHECK(h.mass[0] == doctest::Approx(1.0));
  CHECK(h.counts[0] == h.samples);
}

TEST_CASE("property: histogram mass and counts are normalized") {
  testing::Rng rng(61);
  for (int trial = 0; trial < 10; ++trial) {
    const auto shape = testing::random_shape(rng);
    const auto mdp = random_dec_mdp(shape.agents, shape.states, shape.actions, shape.shared, rng.seed(), 0.9);
    const auto before = perturb(JointPolicy::uniform(mdp), 0.5, rng.seed());
    const auto after = perturb(before, 1.0, rng.seed());
    const auto h = tv_histogram(mdp, before, after, kDefaultTvBinEdges);
    CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}) == h.samples);
    CHECK(std::accumulate(h.mass.begin(), h.mass.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(h.cumulative.back() == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 1; i < h.cumulative.size(); ++i) CHECK(h.cumulative[i] >= h.cumulative[i - 1]);
  }
}

TEST_CASE("histogram rejects bad edges") {
  const auto mdp = coop_chain_env(1, 2, true);
  const auto p = JointPolicy::uniform(mdp);
  CHECK_THROWS_AS(tv_histogram(mdp, p, p, {0.5}), std::invalid_argument);
  CHECK_THROWS_AS(tv_histogram(mdp, p, p, {0.5, 0.1}), std::invalid_argument);
}

TEST_CASE("clipped TV distribution sits below the unclipped one") {
  const auto mdp = coop_chain_env(3, 4, true);
  const auto hists = tv_distribution_experiment(mdp, chain_config(0.1, kDefaultTvEpochs, 1), {0.1, std::nullopt});
  REQUIRE(hists.size() == 2);
  CHECK(stochastically_smaller(hists[0], hists[1]));
  CHECK_FALSE(stochastically_smaller(hists[1], hists[0]));
}

TEST_CASE("centralized TV grows with the number of agents") {
  auto family = [](int n) { return coop_chain_env(n, 5, true); };
  const auto points = centralized_tv_vs_n(family, {1, 2, 3, 5}, chain_config(0.1, 20, 10));
  REQUIRE(points.size() == 4);
  CHECK(points[0].median > 0.0);
  double lo = 1e300, hi = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    CHECK(points[i].samples.size() == 10);
    if (i) CHECK(points[i].median >= points[i - 1].median);
    const double per_agent = points[i].median / points[i].n_agents;
    lo = std::min(lo, per_agent);
    hi = std::max(hi, per_agent);
  }
  CHECK(hi <= 2.0 * lo);
}

TEST_CASE("median of odd and even samples") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(std::isnan(median({})));
}

TEST_CASE("zero-step run has zero slack") {
  const auto mdp = coop_chain_env(2, 3, true);
  const auto p = JointPolicy::uniform(mdp);
  const auto slack = bound_slack_report(mdp, {p, p});
  REQUIRE(slack.size() == 1);
  CHECK(std::abs(slack[0].slack) < 1e-12);
  CHECK(slack[0].exact);
}

TEST_CASE("budgeted chain run never violates the bound") {
  const auto mdp = coop_chain_env(3, 4, true);
  TrainConfig cfg = chain_config(std::nullopt, 10, 15);
  cfg.clip = ClipSetting::delta_over_n(0.3);
  const auto run = run_training(mdp, cfg);
  const auto rep = trust_region_report(mdp, run, {"chain", 3, 0.1, 10, 1});
  REQUIRE(rep.slack.size() == 15);
  for (const auto& p : rep.slack) CHECK(p.slack >= -1e-8);
  CHECK(rep.central_tv.size() == 15);
}

TEST_CASE("unclipped large steps keep the bound while alpha grows") {
  const auto mdp = coop_chain_env(2, 4, true);
  TrainConfig clipped = chain_config(0.05, 10, 5);
  TrainConfig free = chain_config(std::nullopt, 10, 5);
  free.learning_rate = 5.0;
  const auto small = bound_slack_report(mdp, run_training(mdp, clipped).policies);
  const auto large = bound_slack_report(mdp, run_training(mdp, free).policies);
  for (const auto& p : large) CHECK(p.slack >= -1e-8);
  CHECK(large[0].alpha > small[0].alpha);
}

TEST_CASE("format_double is shortest round trip") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(-INFINITY) == "-inf");
  const double x = 0.1 + 0.2;
  CHECK(std::stod(format_double(x)) == x);
  CHECK(format_eps(std::nullopt) == "none");
  CHECK(format_eps(0.3) == "0.3");
}

TEST_CASE("CSV writers emit the documented columns") {
  const auto mdp = coop_chain_env(2, 3, true);
  const auto run = run_training(mdp, chain_config(0.1, 2, 2));
  std::ostringstream records, ratios_out, slack;
  write_records_csv(records, run.records, 2);
  write_ratios_csv(ratios_out, run.records);
  write_slack_csv(slack, bound_slack_report(mdp, run.policies));
  const auto r = lines(records.str());
  CHECK(r[0] ==
        "iteration,return,return_agent0,return_agent1,tv_agent0,tv_agent1,central_tv,theorem2_slack,objective,"
        "ratio_min,ratio_max");
  CHECK(r.size() == 3);
  const auto q = lines(ratios_out.str());
  CHECK(q[0] == "iteration,epoch,ratio_min,ratio_max");
  CHECK(q.size() == 1 + 2 * 3);
  CHECK(lines(slack.str())[0] == "iteration,agent,lhs,rhs,slack,alpha,exact");

  std::ostringstream drift, hist, tvn;
  write_ratio_drift_csv(drift, ratio_drift_experiment(mdp, chain_config(0.1, 1, 1), {std::nullopt}, {1}));
  CHECK(lines(drift.str())[0] == "eps,epochs,epoch,ratio_min,ratio_max");
  CHECK(lines(drift.str())[1].rfind("none,1,0,1,1", 0) == 0);
  write_tv_histogram_csv(hist, tv_distribution_experiment(mdp, chain_config(0.1, 1, 1), {0.1}));
  CHECK(lines(hist.str())[0] == "eps,bin_lo,bin_hi,count,mass,cumulative");
  CHECK(lines(hist.str()).size() == kDefaultTvBinEdges.size());
  write_tv_vs_n_csv(tvn, {{2, 0.5, {0.5}}});
  CHECK(lines(tvn.str())[1] == "2,0.5,0.25,1");
}
