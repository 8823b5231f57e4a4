#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dectrust/io.hpp"
#include "support.hpp"

using namespace dectrust;
namespace fs = std::filesystem;

TEST_CASE("property: Dec-MDP documents round-trip bitwise") {
  testing::Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const auto shape = testing::random_shape(rng);
    const auto mdp = random_dec_mdp(shape.agents, shape.states, shape.actions, shape.shared, rng.seed(), shape.discount);
    const auto text = to_json(mdp).dump();
    const auto back = dec_mdp_from_json(Json::parse(text));
    CHECK(back == mdp);
    CHECK(to_json(back).dump() == text);
  }
}

TEST_CASE("chain documents keep their provenance") {
  const auto mdp = coop_chain_env(2, 3, false);
  const auto back = dec_mdp_from_json(to_json(mdp));
  CHECK(back.provenance() == mdp.provenance());
  CHECK_FALSE(back.shared_state());
}

TEST_CASE("invalid Dec-MDP documents are rejected") {
  auto doc = to_json(coop_chain_env(1, 2, true));
  doc["discount"] = 1.0;
  CHECK_THROWS_AS(dec_mdp_from_json(doc), DecMdpError);
  doc.erase("discount");
  CHECK_THROWS_AS(dec_mdp_from_json(doc), FormatError);
  auto bad_type = to_json(coop_chain_env(1, 2, true));
  bad_type["transition"] = "oops";
  CHECK_THROWS_AS(dec_mdp_from_json(bad_type), FormatError);
}

TEST_CASE("property: policies round-trip bitwise for every sharing mode") {
  testing::Rng rng(72);
  for (Sharing sharing : {Sharing::independent, Sharing::shared, Sharing::shared_with_id}) {
    const auto mdp = random_dec_mdp(2, 3, 2, true, rng.seed());
    const auto pol = perturb(JointPolicy::uniform(mdp, sharing), 1.0, rng.seed());
    const auto back = policy_from_json(mdp, Json::parse(to_json(pol).dump()));
    CHECK(back == pol);
  }
}

TEST_CASE("policies must fit their Dec-MDP") {
  const auto pol = JointPolicy::uniform(random_dec_mdp(2, 3, 2, true, 1));
  CHECK_THROWS_AS(policy_from_json(random_dec_mdp(2, 2, 2, true, 1), to_json(pol)), FormatError);
  CHECK_THROWS_AS(policy_from_json(random_dec_mdp(3, 3, 2, true, 1), to_json(pol)), FormatError);
  auto doc = to_json(pol);
  doc["logits"] = std::vector<double>{1.0};
  CHECK_THROWS_AS(policy_from_json(random_dec_mdp(2, 3, 2, true, 1), doc), FormatError);
}

TEST_CASE("train configs round-trip") {
  TrainConfig cfg;
  cfg.algorithm = Algorithm::jr_ppo;
  cfg.clip = ClipSetting::delta_over_n(0.4);
  cfg.objective_form = ObjectiveForm::eq15;
  cfg.advantage_source = AdvantageSource::mc_rollout;
  cfg.critic = CriticKind::decentralized;
  cfg.sharing = Sharing::shared_with_id;
  cfg.seed = 0xffffffffffffULL;
  cfg.learning_rate = 0.123;
  CHECK(train_config_from_json(Json::parse(to_json(cfg).dump())) == cfg);
  cfg.clip = ClipSetting::none();
  CHECK(train_config_from_json(to_json(cfg)) == cfg);
}

TEST_CASE("train config parsing keeps defaults and rejects unknown keys") {
  const auto cfg = train_config_from_json(Json{{"iterations", 7}, {"clip_eps", "none"}});
  CHECK(cfg.iterations == 7);
  CHECK_FALSE(cfg.clip.eps.has_value());
  CHECK(cfg.epochs_per_iter == TrainConfig{}.epochs_per_iter);
  CHECK(train_config_from_json(Json{{"clip_eps", 0.3}}).clip == ClipSetting::fixed(0.3));
  CHECK_THROWS_AS(train_config_from_json(Json{{"itrations", 7}}), FormatError);
  CHECK_THROWS_AS(train_config_from_json(Json{{"algorithm", "trpo"}}), FormatError);
  CHECK_THROWS_AS(train_config_from_json(Json{{"clip_eps", true}}), FormatError);
  CHECK_THROWS_AS(train_config_from_json(Json{{"iterations", "many"}}), FormatError);
}

TEST_CASE("enum names") {
  CHECK(to_string(Algorithm::ir_ppo) == "ir_ppo");
  CHECK(to_string(ObjectiveForm::eq15) == "eq15");
  CHECK(to_string(CriticKind::centralized) == "centralized");
  CHECK(to_string(AdvantageSource::mc_rollout) == "mc_rollout");
  CHECK(to_string(Sharing::shared_with_id) == "shared_with_id");
}

TEST_CASE("oracle dump carries one entry per agent") {
  const auto mdp = random_dec_mdp(2, 2, 2, true, 3);
  const auto p = perturb(JointPolicy::uniform(mdp), 0.5, 1).profile();
  const auto q = perturb(JointPolicy::uniform(mdp), 0.5, 2).profile();
  const auto doc = oracle_dump(mdp, p, q);
  CHECK(doc.at("agents").size() == 2);
  CHECK(doc.at("agents")[0].at("staged_kernels").size() == 3);
  const double lhs = doc.at("joint").at("performance_difference").at("lhs").get<double>();
  const double rhs = doc.at("joint").at("performance_difference").at("rhs").get<double>();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("fnv1a and metadata line") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(metadata_line("", 3) == "# config_hash=cbf29ce484222325 seed=3");
}

TEST_CASE("file helpers create directories and report missing files") {
  const fs::path dir = fs::temp_directory_path() / "dectrust_io_test" / "nested";
  fs::remove_all(dir.parent_path());
  write_text_file(dir / "x.json", "{\"a\": 1}\n");
  CHECK(read_json_file(dir / "x.json").at("a") == 1);
  CHECK_THROWS_AS(read_json_file(dir / "missing.json"), FormatError);
  write_text_file(dir / "bad.json", "{");
  CHECK_THROWS_AS(read_json_file(dir / "bad.json"), FormatError);
  fs::remove_all(dir.parent_path());
}
