#include "dectrust/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dectrust/oracle.hpp"

namespace dectrust {

namespace {

template <class Enum>
struct EnumName {
  Enum value;
  const char* name;
};

constexpr EnumName<Algorithm> kAlgorithms[] = {
    {Algorithm::ir_ppo, "ir_ppo"}, {Algorithm::jr_ppo, "jr_ppo"}, {Algorithm::surrogate, "surrogate"}};
constexpr EnumName<ObjectiveForm> kForms[] = {{ObjectiveForm::eq6, "eq6"}, {ObjectiveForm::eq15, "eq15"}};
constexpr EnumName<AdvantageSource> kSources[] = {{AdvantageSource::exact_oracle, "exact_oracle"},
                                                  {AdvantageSource::mc_rollout, "mc_rollout"}};
constexpr EnumName<CriticKind> kCritics[] = {
    {CriticKind::none, "none"}, {CriticKind::decentralized, "decentralized"}, {CriticKind::centralized, "centralized"}};
constexpr EnumName<Sharing> kSharing[] = {
    {Sharing::independent, "independent"}, {Sharing::shared, "shared"}, {Sharing::shared_with_id, "shared_with_id"}};

template <class Enum, std::size_t N>
std::string name_of(const EnumName<Enum> (&table)[N], Enum v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

template <class Enum, std::size_t N>
Enum parse_enum(const EnumName<Enum> (&table)[N], const Json& j, const char* key) {
  if (!j.is_string()) throw FormatError(std::string(key) + ": expected a string");
  const auto text = j.get<std::string>();
  for (const auto& e : table)
    if (text == e.name) return e.value;
  throw FormatError(std::string(key) + ": unknown value '" + text + "'");
}

const Json& require(const Json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) throw FormatError(std::string("missing key '") + key + "'");
  return doc.at(key);
}

template <class T>
T get(const Json& doc, const char* key) {
  try {
    return require(doc, key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("key '") + key + "': " + e.what());
  }
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

std::string to_string(Algorithm a) { return name_of(kAlgorithms, a); }
std::string to_string(ObjectiveForm f) { return name_of(kForms, f); }
std::string to_string(AdvantageSource s) { return name_of(kSources, s); }
std::string to_string(CriticKind c) { return name_of(kCritics, c); }
std::string to_string(Sharing s) { return name_of(kSharing, s); }

Json to_json(const TabularDecMdp& mdp) {
  const DecMdpTables& t = mdp.tables();
  return Json{{"format", "dec_mdp"},
              {"n_agents", t.n_agents},
              {"local_state_counts", t.local_state_counts},
              {"local_action_counts", t.local_action_counts},
              {"shared_state", t.shared_state},
              {"discount", t.discount},
              {"provenance", t.provenance},
              {"transition", t.transition},
              {"joint_reward", t.joint_reward},
              {"local_rewards", t.local_rewards},
              {"initial_dist", t.initial_dist}};
}

TabularDecMdp dec_mdp_from_json(const Json& doc) {
  DecMdpTables t;
  t.n_agents = get<int>(doc, "n_agents");
  t.local_state_counts = get<std::vector<int>>(doc, "local_state_counts");
  t.local_action_counts = get<std::vector<int>>(doc, "local_action_counts");
  t.shared_state = get<bool>(doc, "shared_state");
  t.discount = get<double>(doc, "discount");
  if (doc.contains("provenance")) t.provenance = get<std::string>(doc, "provenance");
  t.transition = get<std::vector<double>>(doc, "transition");
  t.joint_reward = get<std::vector<double>>(doc, "joint_reward");
  t.local_rewards = get<std::vector<std::vector<double>>>(doc, "local_rewards");
  t.initial_dist = get<std::vector<double>>(doc, "initial_dist");
  return TabularDecMdp::create(std::move(t));
}

Json to_json(const JointPolicy& policy) {
  std::vector<int> states, actions;
  for (int k = 0; k < policy.n_agents(); ++k) {
    states.push_back(policy.state_count(k));
    actions.push_back(policy.action_count(k));
  }
  return Json{{"format", "joint_policy"},
              {"sharing", to_string(policy.sharing())},
              {"local_state_counts", states},
              {"local_action_counts", actions},
              {"logits", std::vector<double>(policy.params().begin(), policy.params().end())}};
}

JointPolicy policy_from_json(const TabularDecMdp& mdp, const Json& doc) {
  const Sharing sharing = parse_enum(kSharing, require(doc, "sharing"), "sharing");
  const auto states = get<std::vector<int>>(doc, "local_state_counts");
  const auto actions = get<std::vector<int>>(doc, "local_action_counts");
  if (static_cast<int>(states.size()) != mdp.n_agents()) throw FormatError("policy: agent count differs from Dec-MDP");
  for (int k = 0; k < mdp.n_agents(); ++k)
    if (states[k] != mdp.local_state_count(k) || actions[k] != mdp.local_action_count(k))
      throw FormatError("policy: local spaces differ from Dec-MDP at agent " + std::to_string(k));
  try {
    return JointPolicy::from_params(mdp, sharing, get<std::vector<double>>(doc, "logits"));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("policy: ") + e.what());
  }
}

Json to_json(const TrainConfig& cfg) {
  Json clip = nullptr;
  if (cfg.clip.eps) clip = *cfg.clip.eps;
  if (cfg.clip.delta) clip = Json{{"delta_over_n", *cfg.clip.delta}};
  return Json{{"algorithm", to_string(cfg.algorithm)},
              {"clip_eps", clip},
              {"objective_form", to_string(cfg.objective_form)},
              {"epochs_per_iter", cfg.epochs_per_iter},
              {"iterations", cfg.iterations},
              {"learning_rate", cfg.learning_rate},
              {"advantage_source", to_string(cfg.advantage_source)},
              {"critic", to_string(cfg.critic)},
              {"rollout_length", cfg.rollout_length},
              {"rollout_count", cfg.rollout_count},
              {"critic_step", cfg.critic_step},
              {"sharing", to_string(cfg.sharing)},
              {"seed", cfg.seed},
              {"track_theorem2", cfg.track_theorem2}};
}

TrainConfig train_config_from_json(const Json& doc, TrainConfig cfg) {
  if (!doc.is_object()) throw FormatError("train config must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "algorithm") {
      cfg.algorithm = parse_enum(kAlgorithms, value, "algorithm");
    } else if (key == "clip_eps") {
      if (value.is_null() || (value.is_string() && value.get<std::string>() == "none")) {
        cfg.clip = ClipSetting::none();
      } else if (value.is_number()) {
        cfg.clip = ClipSetting::fixed(value.get<double>());
      } else if (value.is_object() && value.contains("delta_over_n") && value.at("delta_over_n").is_number()) {
        cfg.clip = ClipSetting::delta_over_n(value.at("delta_over_n").get<double>());
      } else {
        throw FormatError("clip_eps: expected a number, null, \"none\" or {\"delta_over_n\": delta}");
      }
    } else if (key == "objective_form") {
      cfg.objective_form = parse_enum(kForms, value, "objective_form");
    } else if (key == "epochs_per_iter") {
      cfg.epochs_per_iter = get<int>(doc, "epochs_per_iter");
    } else if (key == "iterations") {
      cfg.iterations = get<int>(doc, "iterations");
    } else if (key == "learning_rate") {
      cfg.learning_rate = get<double>(doc, "learning_rate");
    } else if (key == "advantage_source") {
      cfg.advantage_source = parse_enum(kSources, value, "advantage_source");
    } else if (key == "critic") {
      cfg.critic = parse_enum(kCritics, value, "critic");
    } else if (key == "rollout_length") {
      cfg.rollout_length = get<int>(doc, "rollout_length");
    } else if (key == "rollout_count") {
      cfg.rollout_count = get<int>(doc, "rollout_count");
    } else if (key == "critic_step") {
      cfg.critic_step = get<double>(doc, "critic_step");
    } else if (key == "sharing") {
      cfg.sharing = parse_enum(kSharing, value, "sharing");
    } else if (key == "seed") {
      cfg.seed = get<std::uint64_t>(doc, "seed");
    } else if (key == "track_theorem2") {
      cfg.track_theorem2 = get<bool>(doc, "track_theorem2");
    } else {
      throw FormatError("unknown train key '" + key + "'");
    }
  }
  return cfg;
}

Json oracle_dump(const TabularDecMdp& mdp, const PolicyProfile& old_profile, const PolicyProfile& new_profile) {
  const JointEval before = joint_eval(mdp, old_profile);
  const JointEval after = joint_eval(mdp, new_profile);
  const Theorem1Result t1 = theorem1_bound(mdp, old_profile, new_profile);
  const PerformanceDifference pd = performance_difference(mdp, old_profile, new_profile);

  Json doc{{"joint",
            {{"v_old", vector_json(before.v)},
             {"v_new", vector_json(after.v)},
             {"occupancy_old", vector_json(before.occupancy)},
             {"occupancy_new", vector_json(after.occupancy)},
             {"adv_old", matrix_json(before.adv)},
             {"return_old", before.ret},
             {"return_new", after.ret},
             {"performance_difference", {{"lhs", pd.lhs}, {"rhs", pd.rhs}}},
             {"theorem1", {{"lhs", t1.lhs}, {"rhs", t1.rhs}, {"xi", t1.xi}, {"alpha", t1.alpha}}}}}};

  Json agents = Json::array();
  for (int k = 0; k < mdp.n_agents(); ++k) {
    const LocalEval local = decentralized_eval(mdp, old_profile, k);
    const ShiftDecomposition shift = shift_decomposition(mdp, old_profile, new_profile, k);
    Json a{{"agent", k},
           {"exact", local.exactness == KernelExactness::exact},
           {"local_value", vector_json(local.v)},
           {"local_occupancy", vector_json(local.occupancy)},
           {"shift", matrix_json(shift.total)},
           {"shift_residual", shift.residual}};
    Json stages = Json::array();
    for (const auto& m : shift.stages) stages.push_back(matrix_json(m));
    a["shift_stages"] = std::move(stages);
    Json kernels = Json::array();
    for (int j = 1; j <= mdp.n_agents() + 1; ++j)
      kernels.push_back(matrix_json(staged_marginal_kernel(mdp, old_profile, new_profile, k, j).kernel));
    a["staged_kernels"] = std::move(kernels);
    Json advs = Json::array();
    for (int j = 1; j <= mdp.n_agents(); ++j) advs.push_back(matrix_json(staged_advantage(mdp, old_profile, new_profile, k, j)));
    a["staged_advantages"] = std::move(advs);
    try {
      const Theorem2Result t2 = theorem2_bound(mdp, old_profile, new_profile, k);
      a["theorem2"] = {{"lhs", t2.lhs}, {"rhs", t2.rhs}, {"alpha", t2.alpha}, {"xi", t2.xi}, {"surrogates", t2.surrogates}};
    } catch (const std::invalid_argument&) {
      a["theorem2"] = nullptr;
    }
    agents.push_back(std::move(a));
  }
  doc["agents"] = std::move(agents);
  return doc;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string metadata_line(std::string_view config_text, std::uint64_t seed) {
  char buf[80];
  std::snprintf(buf, sizeof buf, "# config_hash=%016" PRIx64 " seed=%" PRIu64, fnv1a(config_text), seed);
  return buf;
}

}  // namespace dectrust
