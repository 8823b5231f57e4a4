#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "dectrust/decmdp.hpp"
#include "dectrust/policy.hpp"
#include "dectrust/train.hpp"

// JSON documents for Dec-MDPs, policy checkpoints and train configs. Doubles
// are written in shortest round-trip form, so load(store(x)) == x bitwise.

namespace dectrust {

using Json = nlohmann::json;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Json to_json(const TabularDecMdp& mdp);
TabularDecMdp dec_mdp_from_json(const Json& doc);

Json to_json(const JointPolicy& policy);
/// The layout is checked against `mdp`.
JointPolicy policy_from_json(const TabularDecMdp& mdp, const Json& doc);

Json to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const Json& doc, TrainConfig base = {});

/// Full table dump of every oracle quantity for a policy pair.
Json oracle_dump(const TabularDecMdp& mdp, const PolicyProfile& old_profile, const PolicyProfile& new_profile);

std::string to_string(Algorithm a);
std::string to_string(ObjectiveForm f);
std::string to_string(AdvantageSource s);
std::string to_string(CriticKind c);
std::string to_string(Sharing s);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text);

/// "# config_hash=<16 hex digits> seed=<n>"
std::string metadata_line(std::string_view config_text, std::uint64_t seed);

}  // namespace dectrust
