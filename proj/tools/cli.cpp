#include "cli.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "dectrust/critic.hpp"
#include "dectrust/diagnostics.hpp"
#include "dectrust/oracle.hpp"

namespace dectrust::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

template <class T>
T value_or(const Json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("key '") + key + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Verification suites

struct Instance {
  TabularDecMdp mdp;
  JointPolicy old_policy;
  JointPolicy new_policy;
  double scale;
};

constexpr double kScales[] = {0.01, 0.1, 0.5};

Instance make_instance(std::uint64_t seed, bool shared_only) {
  const int n = 1 + static_cast<int>(seed % 3);
  const int states = 2 + static_cast<int>((seed / 3) % 3);
  const int actions = 2 + static_cast<int>((seed / 9) % 2);
  const bool shared = shared_only || (seed / 18) % 2 == 0;
  const double discount = (seed / 36) % 2 ? 0.99 : 0.9;
  const double scale = kScales[(seed / 72) % 3];
  TabularDecMdp mdp = random_dec_mdp(n, states, actions, shared, seed, discount);
  JointPolicy old_policy = perturb(JointPolicy::uniform(mdp), 0.5, seed);
  JointPolicy new_policy = perturb(old_policy, scale, seed + 0x1000);
  return {std::move(mdp), std::move(old_policy), std::move(new_policy), scale};
}

struct SuiteTally {
  int trials = 0;
  int failures = 0;
  double worst = 0.0;
};

void trial_line(std::ostream& out, int trial, std::uint64_t seed, const std::string& what, bool ok) {
  out << "trial " << trial << " seed " << seed << ' ' << what << (ok ? " ok" : " FAIL") << '\n';
}

int verify_counterexample(const VerifyOptions& opts, std::ostream& out) {
  const CounterexampleSearch search = search_stationarity_counterexample(opts.first_seed, opts.last_seed);
  out << "searched seeds " << opts.first_seed << ".." << opts.last_seed << ": " << search.violations << " of "
      << search.trials << " instances violate the frozen-kernel bound\n";
  if (!search.witness_seed) {
    out << "no witness\n";
    for (const auto& line : search.log) out << line << '\n';
    return kContractViolation;
  }
  const auto& w = search.witness;
  out << "witness seed " << *search.witness_seed << ": true_return=" << format_double(w.true_return)
      << " naive_bound=" << format_double(w.naive_rhs) << " frozen_return=" << format_double(w.frozen_return)
      << " alpha=" << format_double(w.alpha) << " xi=" << format_double(w.xi) << '\n';
  return kOk;
}

}  // namespace

int run_verify_suite(const std::string& suite, const VerifyOptions& opts, std::ostream& out) {
  if (suite == "counterexample") return verify_counterexample(opts, out);

  SuiteTally tally;
  std::string measure = "worst";
  for (int t = 0; t < opts.trials; ++t) {
    const std::uint64_t seed = opts.seed + static_cast<std::uint64_t>(t);
    const bool shared_only = suite == "prop1" || suite == "thm2" || suite == "prop5";
    const Instance inst = make_instance(seed, shared_only);
    const PolicyProfile p = inst.old_policy.profile();
    const PolicyProfile q = inst.new_policy.profile();
    double value = 0.0;
    bool ok = true;
    std::string what;
    if (suite == "eq1") {
      const auto pd = performance_difference(inst.mdp, p, q);
      value = std::abs(pd.lhs - pd.rhs);
      ok = value < 1e-8;
      what = "gap=" + sci(value);
      measure = "worst gap";
    } else if (suite == "thm1") {
      const auto r = theorem1_bound(inst.mdp, p, q);
      value = r.lhs - r.rhs;
      ok = value >= -1e-8;
      what = "slack=" + sci(value);
      measure = "worst slack";
    } else if (suite == "prop1") {
      for (int k = 0; k < inst.mdp.n_agents(); ++k)
        value = std::max(value, shift_decomposition(inst.mdp, p, q, k).residual);
      ok = value < 1e-10;
      what = "residual=" + sci(value);
      measure = "worst residual";
    } else if (suite == "thm2") {
      value = std::numeric_limits<double>::infinity();
      for (const auto& r : theorem2_all(inst.mdp, p, q)) value = std::min(value, r.slack());
      double tight = 0.0;
      for (const auto& r : theorem2_all(inst.mdp, p, p)) tight = std::max({tight, std::abs(r.lhs), std::abs(r.rhs)});
      ok = value >= -1e-8 && tight < 1e-10;
      what = "slack=" + sci(value) + " identity=" + sci(tight);
      measure = "worst slack";
    } else if (suite == "prop4") {
      value = -std::numeric_limits<double>::infinity();
      for (double eps : {0.05, 0.1, 0.3}) {
        const JointPolicy boxed = project_to_ratio_box(inst.old_policy, inst.new_policy, eps).policy;
        const Eigen::VectorXd occupancy = joint_eval(inst.mdp, p).occupancy;
        std::vector<double> marginal(inst.mdp.local_state_count(0), 0.0);
        for (std::size_t s = 0; s < inst.mdp.joint_state_count(); ++s) marginal[inst.mdp.local_state(s, 0)] += occupancy[s];
        if (inst.mdp.shared_state() || inst.mdp.n_agents() == 1) {
          const std::vector<double> budget(inst.mdp.n_agents(), eps);
          for (const auto& r : prop4_check(p, boxed.profile(), marginal, budget)) {
            ok = ok && r.premise && r.holds;
            value = std::max(value, r.expected_tv - eps);
          }
        } else {
          for (int k = 0; k < inst.mdp.n_agents(); ++k) {
            std::vector<double> local(inst.mdp.local_state_count(k), 0.0);
            for (std::size_t s = 0; s < inst.mdp.joint_state_count(); ++s) local[inst.mdp.local_state(s, k)] += occupancy[s];
            PolicyProfile one_old{{p.probs[k]}};
            PolicyProfile one_new{{boxed.profile().probs[k]}};
            for (const auto& r : prop4_check(one_old, one_new, local, std::vector<double>{eps})) {
              ok = ok && r.premise && r.holds;
              value = std::max(value, r.expected_tv - eps);
            }
          }
        }
      }
      what = "max(tv - eps)=" + sci(value);
      measure = "max(tv - eps)";
    } else if (suite == "prop5") {
      const AdvantageGap gap = advantage_equivalence_check(inst.mdp, p);
      const CriticConvergence c = converge_critic(inst.mdp, p, CriticKind::centralized, 1e-8);
      const double critic_err = (c.state.central - joint_eval(inst.mdp, p).v).cwiseAbs().maxCoeff();
      value = std::max(gap.max_gap, critic_err);
      ok = gap.max_gap < 1e-8 && critic_err < 1e-6;
      what = "advantage_gap=" + sci(gap.max_gap) + " critic_error=" + sci(critic_err);
      measure = "worst error";
    } else {
      throw UsageError("unknown verify suite '" + suite + "'");
    }
    trial_line(out, t, seed, what, ok);
    ++tally.trials;
    if (!ok) ++tally.failures;
    const bool lower_is_worse = suite == "thm1" || suite == "thm2";
    if (t == 0) tally.worst = value;
    else tally.worst = lower_is_worse ? std::min(tally.worst, value) : std::max(tally.worst, value);
  }
  out << suite << ": " << tally.trials - tally.failures << '/' << tally.trials << " passed, " << measure << ' '
      << sci(tally.worst) << '\n';
  return tally.failures == 0 ? kOk : kContractViolation;
}

// ---------------------------------------------------------------------------
// Configuration

Json ExperimentConfig::to_json() const {
  Json doc{{"environment", environment},
           {"train", dectrust::to_json(train)},
           {"diagnostics",
            {{"slack", diagnostics.slack},
             {"tv_histogram", diagnostics.tv_histogram},
             {"tv_vs_n", diagnostics.tv_vs_n},
             {"bin_edges", diagnostics.bin_edges}}},
           {"output", output},
           {"verify", verify},
           {"grid", grid},
           {"workers", workers}};
  return doc;
}

ExperimentConfig parse_experiment(const Json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw UsageError("config must be a JSON object");
  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  for (const auto& [key, value] : doc.items()) {
    if (key == "environment") {
      cfg.environment = value;
    } else if (key == "train") {
      cfg.train = train_config_from_json(value);
    } else if (key == "diagnostics") {
      if (!value.is_object()) throw UsageError("diagnostics must be an object");
      for (const auto& [dk, dv] : value.items())
        if (dk != "slack" && dk != "tv_histogram" && dk != "tv_vs_n" && dk != "bin_edges")
          throw UsageError("unknown diagnostics key '" + dk + "'");
      cfg.diagnostics.slack = value_or(value, "slack", true);
      cfg.diagnostics.tv_histogram = value_or(value, "tv_histogram", false);
      cfg.diagnostics.tv_vs_n = value_or(value, "tv_vs_n", false);
      cfg.diagnostics.bin_edges = value_or(value, "bin_edges", std::vector<double>{});
    } else if (key == "output") {
      cfg.output = value.get<std::string>();
    } else if (key == "verify") {
      cfg.verify = value.get<std::vector<std::string>>();
      for (const auto& s : cfg.verify)
        if (std::find(kVerifySuites.begin(), kVerifySuites.end(), s) == kVerifySuites.end())
          throw UsageError("unknown verify suite '" + s + "'");
    } else if (key == "grid") {
      if (!value.is_object()) throw UsageError("grid must be an object of arrays");
      for (const auto& [gk, gv] : value.items())
        if (!gv.is_array() || gv.empty()) throw UsageError("grid '" + gk + "' must be a non-empty array");
      cfg.grid = value;
    } else if (key == "workers") {
      cfg.workers = value.get<int>();
    } else {
      throw UsageError("unknown config key '" + key + "'");
    }
  }
  if (cfg.environment.is_null()) throw UsageError("config needs an 'environment' section");
  if (cfg.diagnostics.bin_edges.empty()) cfg.diagnostics.bin_edges = kDefaultTvBinEdges;
  cfg.train.validate();
  return cfg;
}

Json apply_override(Json doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw UsageError("override must look like key=value");
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  Json value;
  try {
    value = Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw UsageError("empty key segment in '" + path + "'");
    if (!node->is_object()) *node = Json::object();
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
  return doc;
}

TabularDecMdp build_environment(const Json& env, const fs::path& base_dir) {
  if (!env.is_object()) throw UsageError("environment must be an object");
  if (env.contains("file")) {
    fs::path path = env.at("file").get<std::string>();
    if (path.is_relative()) path = base_dir / path;
    return dec_mdp_from_json(read_json_file(path));
  }
  const auto generator = value_or<std::string>(env, "generator", "");
  const int agents = value_or(env, "agents", 2);
  const bool shared = value_or(env, "shared_state", true);
  const double discount = value_or(env, "discount", 0.9);
  if (generator == "chain") return coop_chain_env(agents, value_or(env, "length", 3), shared, discount);
  if (generator == "random") {
    if (!env.contains("seed")) throw UsageError("random environments need an explicit seed");
    return random_dec_mdp(agents, value_or(env, "states", 2), value_or(env, "actions", 2), shared,
                          env.at("seed").get<std::uint64_t>(), discount);
  }
  throw UsageError("environment needs 'file' or generator 'chain' / 'random'");
}

fs::path output_root() {
  const char* env = std::getenv("DECTRUST_OUT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

namespace {

std::string hashed_text(const ExperimentConfig& cfg) {
  return Json{{"environment", cfg.environment}, {"train", dectrust::to_json(cfg.train)}}.dump();
}

struct CellResult {
  RunResult run;
  std::vector<SlackPoint> slack;
  int exit_code = kOk;
  std::string error;
};

// Trains one configuration into `dir`. Every file is a deterministic function
// of the config.
CellResult run_cell(const ExperimentConfig& cfg, const TabularDecMdp& mdp, const fs::path& dir) {
  fs::create_directories(dir);
  const std::string meta = metadata_line(hashed_text(cfg), cfg.train.seed);
  write_text_file(dir / "config.json", cfg.to_json().dump(2) + "\n");
  write_text_file(dir / "env.json", to_json(mdp).dump() + "\n");

  CellResult result;
  const JointPolicy initial = JointPolicy::uniform(mdp, cfg.train.sharing);
  write_text_file(dir / "policy_initial.txt", to_json(initial).dump(2) + "\n");

  std::ofstream records(dir / "records.csv", std::ios::binary);
  std::ofstream trace(dir / "policies.jsonl", std::ios::binary);
  records << meta << '\n';
  write_records_header(records, mdp.n_agents());
  trace << to_json(initial).dump() << '\n';
  try {
    result.run = run_training(mdp, initial, cfg.train, [&](const IterationRecord& rec, const JointPolicy& pol) {
      write_record_row(records, rec);
      records.flush();
      trace << to_json(pol).dump() << '\n';
    });
  } catch (const TrainError& e) {
    result.exit_code = kContractViolation;
    result.error = e.what();
    return result;
  }
  records.close();
  trace.close();

  std::ostringstream ratios;
  ratios << meta << '\n';
  write_ratios_csv(ratios, result.run.records);
  write_text_file(dir / "ratios.csv", ratios.str());
  write_text_file(dir / "policy_final.txt", to_json(result.run.policies.back()).dump(2) + "\n");

  double min_slack = std::numeric_limits<double>::quiet_NaN();
  if (cfg.diagnostics.slack) {
    result.slack = bound_slack_report(mdp, result.run.policies);
    std::ostringstream slack;
    slack << meta << '\n';
    write_slack_csv(slack, result.slack);
    write_text_file(dir / "slack.csv", slack.str());
    for (const auto& p : result.slack) {
      min_slack = std::isnan(min_slack) ? p.slack : std::min(min_slack, p.slack);
      if (p.exact && p.slack < -1e-8) result.exit_code = kContractViolation;
    }
  }

  std::ostringstream m;
  m << meta.substr(2) << '\n'
    << "environment=" << mdp.provenance() << '\n'
    << "n_agents=" << mdp.n_agents() << '\n'
    << "algorithm=" << to_string(cfg.train.algorithm) << '\n'
    << "clip_eps=" << format_eps(cfg.train.clip.resolve(mdp.n_agents())) << '\n'
    << "iterations=" << cfg.train.iterations << '\n'
    << "initial_return=" << format_double(joint_eval(mdp, initial).ret) << '\n'
    << "final_return=" << format_double(joint_eval(mdp, result.run.policies.back()).ret) << '\n'
    << "optimal_return=" << format_double(optimal_joint_return(mdp)) << '\n'
    << "min_theorem2_slack=" << format_double(min_slack) << '\n';
  write_text_file(dir / "meta.txt", m.str());
  return result;
}

fs::path resolve_output(const ExperimentConfig& cfg, const std::string& flag, const fs::path& config_path) {
  if (!flag.empty()) return flag;
  if (!cfg.output.empty()) {
    const fs::path p = cfg.output;
    return p.is_absolute() ? p : output_root() / p;
  }
  return output_root() / config_path.stem();
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  Json doc = read_json_file(path);
  for (const auto& o : overrides) doc = apply_override(std::move(doc), o);
  return parse_experiment(doc, fs::path(path).parent_path());
}

int cmd_gen_env(const std::string& generator, int agents, int states, int actions, int length,
                std::optional<std::uint64_t> seed, bool factored, double discount, const std::string& out_path,
                std::ostream& out) {
  Json env{{"generator", generator}, {"agents", agents}, {"shared_state", !factored}, {"discount", discount}};
  if (generator == "random") {
    if (!seed) throw UsageError("gen-env random needs --seed");
    env["states"] = states;
    env["actions"] = actions;
    env["seed"] = *seed;
  } else {
    env["length"] = length;
  }
  const TabularDecMdp mdp = build_environment(env);
  const fs::path path = out_path.empty() ? output_root() / (generator + "_env.json") : fs::path(out_path);
  write_text_file(path, to_json(mdp).dump() + "\n");
  out << "wrote " << path.string() << ": N=" << mdp.n_agents() << " joint_states=" << mdp.joint_state_count()
      << " joint_actions=" << mdp.joint_action_count() << " local_states=";
  for (int k = 0; k < mdp.n_agents(); ++k) out << (k ? "x" : "") << mdp.local_state_count(k);
  out << " local_actions=";
  for (int k = 0; k < mdp.n_agents(); ++k) out << (k ? "x" : "") << mdp.local_action_count(k);
  out << " gamma=" << format_double(mdp.discount()) << '\n';
  return kOk;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& out_flag,
              std::ostream& out) {
  const ExperimentConfig cfg = load_config(config_path, overrides);
  const TabularDecMdp mdp = build_environment(cfg.environment, cfg.base_dir);
  const fs::path dir = resolve_output(cfg, out_flag, config_path);
  const CellResult r = run_cell(cfg, mdp, dir);
  if (!r.error.empty()) {
    out << "training failed: " << r.error << '\n';
    return r.exit_code;
  }
  out << "wrote " << dir.string() << ": " << r.run.records.size() << " iterations";
  if (!r.run.records.empty()) out << ", final return " << format_double(r.run.records.back().ret);
  out << '\n';
  if (r.exit_code != kOk) out << "bound slack below -1e-8 on an exact pair\n";
  return r.exit_code;
}

struct Cell {
  Json doc;
  std::vector<Json> values;
  ExperimentConfig cfg;
};

std::vector<Cell> expand_grid(const Json& base_doc, const ExperimentConfig& base, const fs::path& base_dir) {
  std::vector<std::string> keys;
  std::vector<Json> axes;
  for (const auto& [k, v] : base.grid.items()) {
    keys.push_back(k);
    axes.push_back(v);
  }
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.size();
  std::vector<Cell> cells;
  for (std::size_t index = 0; index < total; ++index) {
    Json doc = base_doc;
    doc.erase("grid");
    doc.erase("output");
    Cell cell;
    std::size_t rest = index;
    std::vector<std::size_t> pick(axes.size());
    for (std::size_t i = axes.size(); i-- > 0;) {
      pick[i] = rest % axes[i].size();
      rest /= axes[i].size();
    }
    bool seeded = false;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      const Json& v = axes[i][pick[i]];
      doc = apply_override(std::move(doc), keys[i] + "=" + v.dump());
      cell.values.push_back(v);
      seeded = seeded || keys[i] == "train.seed";
    }
    if (!seeded) doc = apply_override(std::move(doc), "train.seed=" + std::to_string(base.train.seed + index));
    cell.cfg = parse_experiment(doc, base_dir);
    cell.doc = std::move(doc);
    cells.push_back(std::move(cell));
  }
  return cells;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& out_flag,
              int workers_flag, std::ostream& out) {
  Json doc = read_json_file(config_path);
  for (const auto& o : overrides) doc = apply_override(std::move(doc), o);
  const fs::path base_dir = fs::path(config_path).parent_path();
  const ExperimentConfig base = parse_experiment(doc, base_dir);
  const fs::path root = resolve_output(base, out_flag, config_path);
  const std::vector<Cell> cells = expand_grid(doc, base, base_dir);

  std::vector<CellResult> results(cells.size());
  std::vector<std::optional<TabularDecMdp>> envs(cells.size());
  std::vector<std::string> errors(cells.size());
  std::atomic<std::size_t> next{0};
  int workers = workers_flag > 0 ? workers_flag : base.workers;
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min<int>(workers, static_cast<int>(std::max<std::size_t>(cells.size(), 1)));
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) {
      try {
        envs[i].emplace(build_environment(cells[i].cfg.environment, base_dir));
        char name[32];
        std::snprintf(name, sizeof name, "cell_%03zu", i);
        results[i] = run_cell(cells[i].cfg, *envs[i], root / name);
        if (!results[i].error.empty()) errors[i] = results[i].error;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < cells.size(); ++i)
    if (!errors[i].empty()) {
      out << "cell " << i << " failed: " << errors[i] << '\n';
      return kContractViolation;
    }

  std::vector<std::string> keys;
  for (const auto& [k, v] : base.grid.items()) keys.push_back(k);
  const std::string meta = metadata_line(doc.dump(), base.train.seed);

  std::ostringstream combined, drift, hist, tvn;
  combined << meta << "\ncell";
  for (const auto& k : keys) combined << ',' << k;
  combined << ",iteration,return,central_tv,theorem2_slack,ratio_min,ratio_max\n";
  drift << meta << "\ncell,eps,epochs,epoch,ratio_min,ratio_max\n";
  hist << meta << "\ncell,eps,bin_lo,bin_hi,count,mass,cumulative\n";
  tvn << meta << "\ncell,n_agents,median,median_over_n,samples\n";
  int exit_code = kOk;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& cfg = cells[i].cfg;
    const auto& run = results[i].run;
    const TabularDecMdp& mdp = *envs[i];
    const std::string eps = format_eps(cfg.train.clip.resolve(mdp.n_agents()));
    std::string prefix = std::to_string(i);
    for (const auto& v : cells[i].values) {
      std::string text = v.is_string() ? v.get<std::string>() : v.dump();
      if (text.find(',') != std::string::npos) text = '"' + text + '"';
      prefix += ',' + text;
    }
    for (const auto& r : run.records)
      combined << prefix << ',' << r.iteration << ',' << format_double(r.ret) << ',' << format_double(r.central_tv)
               << ',' << format_double(r.theorem2_slack) << ',' << format_double(r.ratio_min.back()) << ','
               << format_double(r.ratio_max.back()) << '\n';
    if (!run.records.empty()) {
      const auto& first = run.records.front();
      for (std::size_t e = 0; e < first.ratio_max.size(); ++e)
        drift << i << ',' << eps << ',' << cfg.train.epochs_per_iter << ',' << e << ','
              << format_double(first.ratio_min[e]) << ',' << format_double(first.ratio_max[e]) << '\n';
    }
    if (base.diagnostics.tv_histogram && run.policies.size() > 1) {
      const TvHistogram h = tv_histogram(mdp, run.policies[0], run.policies[1], cfg.diagnostics.bin_edges,
                                         cfg.train.clip.resolve(mdp.n_agents()));
      for (std::size_t b = 0; b < h.counts.size(); ++b)
        hist << i << ',' << eps << ',' << format_double(h.edges[b]) << ',' << format_double(h.edges[b + 1]) << ','
             << h.counts[b] << ',' << format_double(h.mass[b]) << ',' << format_double(h.cumulative[b]) << '\n';
    }
    if (base.diagnostics.tv_vs_n) {
      std::vector<double> samples;
      for (const auto& r : run.records) samples.push_back(r.central_tv);
      const double m = median(samples);
      tvn << i << ',' << mdp.n_agents() << ',' << format_double(m) << ',' << format_double(m / mdp.n_agents()) << ','
          << samples.size() << '\n';
    }
    if (results[i].exit_code != kOk) exit_code = results[i].exit_code;
  }
  write_text_file(root / "combined.csv", combined.str());
  write_text_file(root / "ratio_drift.csv", drift.str());
  if (base.diagnostics.tv_histogram) write_text_file(root / "tv_hist.csv", hist.str());
  if (base.diagnostics.tv_vs_n) write_text_file(root / "tv_vs_n.csv", tvn.str());
  out << "wrote " << root.string() << ": " << cells.size() << " cells\n";
  return exit_code;
}

int cmd_report(const std::string& run_dir, std::ostream& out) {
  const fs::path dir = run_dir;
  const TabularDecMdp mdp = dec_mdp_from_json(read_json_file(dir / "env.json"));
  std::ifstream trace(dir / "policies.jsonl");
  if (!trace) throw UsageError("no policies.jsonl in " + run_dir);
  std::vector<JointPolicy> policies;
  for (std::string line; std::getline(trace, line);)
    if (!line.empty()) policies.push_back(policy_from_json(mdp, Json::parse(line)));
  const Json cfg = read_json_file(dir / "config.json");
  const ExperimentConfig parsed = parse_experiment(cfg, dir);
  const std::vector<SlackPoint> slack = bound_slack_report(mdp, policies);

  std::ostringstream csv;
  csv << metadata_line(hashed_text(parsed), parsed.train.seed) << '\n';
  write_slack_csv(csv, slack);
  write_text_file(dir / "slack.csv", csv.str());

  int code = kOk;
  char line[160];
  std::snprintf(line, sizeof line, "%9s %14s %14s %12s %10s\n", "iteration", "lhs", "rhs", "slack", "alpha");
  out << line;
  for (const auto& p : slack) {
    std::snprintf(line, sizeof line, "%9d %14.6e %14.6e %12.3e %10.4f%s\n", p.iteration, p.lhs, p.rhs, p.slack, p.alpha,
                  p.exact ? "" : " (approximate)");
    out << line;
    if (p.exact && p.slack < -1e-8) code = kContractViolation;
  }
  if (slack.empty()) out << "no updates recorded\n";
  return code;
}

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      const auto v = std::stoull(text);
      return {v, v};
    }
    return {std::stoull(text.substr(0, dots)), std::stoull(text.substr(dots + 2))};
  } catch (const std::exception&) {
    throw UsageError("--seeds expects A..B, got '" + text + "'");
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exact trust-region oracles and tabular PPO trainers for cooperative Dec-MDPs", "dectrust"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-env", "Generate and validate a Dec-MDP file");
  std::string generator, env_out;
  int agents = 2, states = 2, actions = 2, length = 3;
  std::optional<std::uint64_t> env_seed;
  bool factored = false;
  double discount = 0.9;
  gen->add_option("generator", generator, "random | chain")->required()->check(CLI::IsMember({"random", "chain"}));
  gen->add_option("--agents", agents, "number of agents")->capture_default_str();
  gen->add_option("--states", states, "local states per agent (random)")->capture_default_str();
  gen->add_option("--actions", actions, "actions per agent (random)")->capture_default_str();
  gen->add_option("--length", length, "chain length (chain)")->capture_default_str();
  gen->add_option("--seed", env_seed, "generator seed (random)");
  gen->add_flag("--factored", factored, "per-agent local states instead of a shared joint state");
  gen->add_option("--discount", discount, "discount factor")->capture_default_str();
  gen->add_option("-o,--out", env_out, "output file");

  auto* train = app.add_subcommand("train", "Run one training configuration");
  std::string config_path, out_dir;
  std::vector<std::string> overrides;
  train->add_option("config", config_path, "experiment config (JSON)")->required();
  train->add_option("--set", overrides, "override a config key, e.g. train.learning_rate=0.5");
  train->add_option("-o,--out", out_dir, "run directory");

  auto* verify = app.add_subcommand("verify", "Run an exact oracle verification sweep");
  std::vector<std::string> suites;
  VerifyOptions vopts;
  std::string seeds;
  verify->add_option("suite", suites, "eq1 thm1 prop1 thm2 prop4 prop5 counterexample")
      ->required()
      ->check(CLI::IsMember(kVerifySuites));
  verify->add_option("--trials", vopts.trials, "instances per suite")->capture_default_str()->check(CLI::PositiveNumber);
  verify->add_option("--seed", vopts.seed, "first instance seed")->capture_default_str();
  verify->add_option("--seeds", seeds, "seed range A..B for the counterexample search");

  auto* sweep = app.add_subcommand("sweep", "Expand a config grid and run every cell");
  int workers = 0;
  sweep->add_option("config", config_path, "experiment config with a grid")->required();
  sweep->add_option("--set", overrides, "override a config key");
  sweep->add_option("-o,--out", out_dir, "sweep directory");
  sweep->add_option("-j,--workers", workers, "worker threads");

  auto* report = app.add_subcommand("report", "Recompute bound slack for a finished run");
  std::string run_dir;
  report->add_option("run_dir", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*gen) return cmd_gen_env(generator, agents, states, actions, length, env_seed, factored, discount, env_out, out);
    if (*train) return cmd_train(config_path, overrides, out_dir, out);
    if (*sweep) return cmd_sweep(config_path, overrides, out_dir, workers, out);
    if (*report) return cmd_report(run_dir, out);
    if (*verify) {
      if (!seeds.empty()) std::tie(vopts.first_seed, vopts.last_seed) = parse_seed_range(seeds);
      int code = kOk;
      for (const auto& s : suites) code = std::max(code, run_verify_suite(s, vopts, out));
      return code;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const DecMdpError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kContractViolation;
  }
  return kUsageError;
}

}  // namespace dectrust::cli
