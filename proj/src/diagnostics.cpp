#include "dectrust/diagnostics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

namespace dectrust {

namespace {

Eigen::VectorXd local_mass(const TabularDecMdp& mdp, const Eigen::VectorXd& occupancy, int k) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mdp.local_state_count(k));
  for (std::size_t s = 0; s < mdp.joint_state_count(); ++s) out[mdp.local_state(s, k)] += occupancy[s];
  return out;
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return {buf, res.ptr};
}

std::string format_eps(std::optional<double> eps) { return eps ? format_double(*eps) : "none"; }

double median(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t mid = xs.size() / 2;
  return xs.size() % 2 ? xs[mid] : 0.5 * (xs[mid - 1] + xs[mid]);
}

std::vector<SlackPoint> bound_slack_report(const TabularDecMdp& mdp, const std::vector<JointPolicy>& policies) {
  std::vector<SlackPoint> out;
  for (std::size_t i = 0; i + 1 < policies.size(); ++i) {
    const auto results = theorem2_all(mdp, policies[i].profile(), policies[i + 1].profile());
    SlackPoint p;
    p.iteration = static_cast<int>(i);
    p.slack = std::numeric_limits<double>::infinity();
    for (int k = 0; k < static_cast<int>(results.size()); ++k) {
      if (results[k].slack() < p.slack) {
        p.agent = k;
        p.lhs = results[k].lhs;
        p.rhs = results[k].rhs;
        p.slack = results[k].slack();
        p.alpha = results[k].alpha;
      }
      p.exact = p.exact && results[k].exactness == KernelExactness::exact;
    }
    out.push_back(p);
  }
  return out;
}

TrustRegionReport trust_region_report(const TabularDecMdp& mdp, const RunResult& run, const RunMetadata& meta) {
  TrustRegionReport rep;
  rep.meta = meta;
  if (!run.records.empty()) {
    rep.ratio_min = run.records.front().ratio_min;
    rep.ratio_max = run.records.front().ratio_max;
  } else {
    rep.ratio_min = {1.0};
    rep.ratio_max = {1.0};
  }
  for (const auto& r : run.records) {
    rep.agent_tv.push_back(r.agent_tv);
    rep.central_tv.push_back(r.central_tv);
  }
  rep.slack = bound_slack_report(mdp, run.policies);
  return rep;
}

std::vector<TrustRegionReport> ratio_drift_experiment(const TabularDecMdp& mdp, const TrainConfig& base,
                                                      const std::vector<std::optional<double>>& eps_grid,
                                                      const std::vector<int>& epoch_grid,
                                                      const std::string& env_label) {
  std::vector<TrustRegionReport> out;
  for (const auto& eps : eps_grid)
    for (int epochs : epoch_grid) {
      TrainConfig cfg = base;
      cfg.algorithm = Algorithm::ir_ppo;
      cfg.clip = eps ? ClipSetting::fixed(*eps) : ClipSetting::none();
      cfg.epochs_per_iter = epochs;
      cfg.iterations = std::max(cfg.iterations, 1);
      const RunResult run = run_training(mdp, cfg);
      out.push_back(trust_region_report(mdp, run, {env_label, mdp.n_agents(), eps, epochs, cfg.seed}));
    }
  return out;
}

TvHistogram tv_histogram(const TabularDecMdp& mdp, const JointPolicy& before, const JointPolicy& after,
                         const std::vector<double>& edges, std::optional<double> eps) {
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()))
    throw std::invalid_argument("tv_histogram: need at least two increasing bin edges");
  TvHistogram h;
  h.eps = eps;
  h.edges = edges;
  const std::size_t bins = edges.size() - 1;
  h.counts.assign(bins, 0);
  h.mass.assign(bins, 0.0);

  const PolicyProfile p = before.profile();
  const PolicyProfile q = after.profile();
  const Eigen::VectorXd occupancy = joint_eval(mdp, p).occupancy;
  const int n = mdp.n_agents();
  for (int k = 0; k < n; ++k) {
    const Eigen::VectorXd mass = local_mass(mdp, occupancy, k);
    for (int s = 0; s < mdp.local_state_count(k); ++s) {
      if (!(mass[s] > 0.0)) continue;
      const double tv = tv_divergence(Eigen::VectorXd(p.probs[k].row(s).transpose()),
                                      Eigen::VectorXd(q.probs[k].row(s).transpose()));
      auto it = std::upper_bound(edges.begin(), edges.end(), tv);
      std::size_t bin = it == edges.begin() ? 0 : static_cast<std::size_t>(it - edges.begin()) - 1;
      bin = std::min(bin, bins - 1);
      ++h.counts[bin];
      h.mass[bin] += mass[s] / n;
      ++h.samples;
    }
  }
  double running = 0.0;
  for (double m : h.mass) h.cumulative.push_back(running += m);
  return h;
}

std::vector<TvHistogram> tv_distribution_experiment(const TabularDecMdp& mdp, const TrainConfig& base,
                                                    const std::vector<std::optional<double>>& eps_grid,
                                                    const std::vector<double>& edges) {
  std::vector<TvHistogram> out;
  for (const auto& eps : eps_grid) {
    TrainConfig cfg = base;
    cfg.clip = eps ? ClipSetting::fixed(*eps) : ClipSetting::none();
    cfg.iterations = 1;
    cfg.track_theorem2 = false;
    const RunResult run = run_training(mdp, cfg);
    out.push_back(tv_histogram(mdp, run.policies[0], run.policies[1], edges, eps));
  }
  return out;
}

bool stochastically_smaller(const TvHistogram& small, const TvHistogram& large, double tol) {
  if (small.edges != large.edges) throw std::invalid_argument("stochastically_smaller: bin edges differ");
  for (std::size_t i = 0; i < small.cumulative.size(); ++i)
    if (small.cumulative[i] < large.cumulative[i] - tol) return false;
  return true;
}

std::vector<CentralTvPoint> centralized_tv_vs_n(const std::function<TabularDecMdp(int)>& family,
                                                const std::vector<int>& n_values, const TrainConfig& base) {
  std::vector<CentralTvPoint> out;
  for (int n : n_values) {
    const TabularDecMdp mdp = family(n);
    TrainConfig cfg = base;
    cfg.track_theorem2 = false;
    const RunResult run = run_training(mdp, cfg);
    CentralTvPoint p;
    p.n_agents = n;
    for (const auto& r : run.records) p.samples.push_back(r.central_tv);
    p.median = median(p.samples);
    out.push_back(std::move(p));
  }
  return out;
}

void write_records_header(std::ostream& out, int n_agents) {
  out << "iteration,return";
  for (int k = 0; k < n_agents; ++k) out << ",return_agent" << k;
  for (int k = 0; k < n_agents; ++k) out << ",tv_agent" << k;
  out << ",central_tv,theorem2_slack,objective,ratio_min,ratio_max\n";
}

void write_record_row(std::ostream& out, const IterationRecord& r) {
  out << r.iteration << ',' << format_double(r.ret);
  for (double x : r.agent_returns) out << ',' << format_double(x);
  for (double x : r.agent_tv) out << ',' << format_double(x);
  out << ',' << format_double(r.central_tv) << ',' << format_double(r.theorem2_slack) << ','
      << format_double(r.objective) << ',' << format_double(r.ratio_min.back()) << ','
      << format_double(r.ratio_max.back()) << '\n';
}

void write_records_csv(std::ostream& out, const std::vector<IterationRecord>& records, int n_agents) {
  write_records_header(out, n_agents);
  for (const auto& r : records) write_record_row(out, r);
}

void write_ratios_csv(std::ostream& out, const std::vector<IterationRecord>& records) {
  out << "iteration,epoch,ratio_min,ratio_max\n";
  for (const auto& r : records)
    for (std::size_t e = 0; e < r.ratio_max.size(); ++e)
      out << r.iteration << ',' << e << ',' << format_double(r.ratio_min[e]) << ',' << format_double(r.ratio_max[e])
          << '\n';
}

void write_ratio_drift_csv(std::ostream& out, const std::vector<TrustRegionReport>& reports) {
  out << "eps,epochs,epoch,ratio_min,ratio_max\n";
  for (const auto& rep : reports)
    for (std::size_t e = 0; e < rep.ratio_max.size(); ++e)
      out << format_eps(rep.meta.eps) << ',' << rep.meta.epochs << ',' << e << ',' << format_double(rep.ratio_min[e])
          << ',' << format_double(rep.ratio_max[e]) << '\n';
}

void write_tv_histogram_csv(std::ostream& out, const std::vector<TvHistogram>& hists) {
  out << "eps,bin_lo,bin_hi,count,mass,cumulative\n";
  for (const auto& h : hists)
    for (std::size_t i = 0; i < h.counts.size(); ++i)
      out << format_eps(h.eps) << ',' << format_double(h.edges[i]) << ',' << format_double(h.edges[i + 1]) << ','
          << h.counts[i] << ',' << format_double(h.mass[i]) << ',' << format_double(h.cumulative[i]) << '\n';
}

void write_tv_vs_n_csv(std::ostream& out, const std::vector<CentralTvPoint>& points) {
  out << "n_agents,median,median_over_n,samples\n";
  for (const auto& p : points)
    out << p.n_agents << ',' << format_double(p.median) << ',' << format_double(p.median / p.n_agents) << ','
        << p.samples.size() << '\n';
}

void write_slack_csv(std::ostream& out, const std::vector<SlackPoint>& points) {
  out << "iteration,agent,lhs,rhs,slack,alpha,exact\n";
  for (const auto& p : points)
    out << p.iteration << ',' << p.agent << ',' << format_double(p.lhs) << ',' << format_double(p.rhs) << ','
        << format_double(p.slack) << ',' << format_double(p.alpha) << ',' << (p.exact ? 1 : 0) << '\n';
}

}  // namespace dectrust
