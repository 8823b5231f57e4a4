#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dectrust/decmdp.hpp"
#include "dectrust/io.hpp"
#include "dectrust/train.hpp"

namespace dectrust::cli {

enum ExitCode : int { kOk = 0, kContractViolation = 1, kUsageError = 2 };

struct DiagnosticsToggles {
  bool slack = true;
  bool tv_histogram = false;
  bool tv_vs_n = false;
  std::vector<double> bin_edges;
};

/// Declarative experiment description. Precedence, lowest first: built-in
/// defaults, the config file, then --set overrides.
struct ExperimentConfig {
  Json environment;
  TrainConfig train;
  DiagnosticsToggles diagnostics;
  std::string output;
  std::vector<std::string> verify;
  Json grid = Json::object();
  int workers = 0;
  std::filesystem::path base_dir;  ///< relative paths resolve against this

  Json to_json() const;
};

ExperimentConfig parse_experiment(const Json& doc, const std::filesystem::path& base_dir = {});

/// Applies "a.b.c=value"; value is parsed as JSON when possible, else kept as
/// a string.
Json apply_override(Json doc, std::string_view assignment);

TabularDecMdp build_environment(const Json& env, const std::filesystem::path& base_dir = {});

/// Default output root: $DECTRUST_OUT, else "runs".
std::filesystem::path output_root();

struct VerifyOptions {
  int trials = 100;
  std::uint64_t seed = 1;
  std::uint64_t first_seed = 1;
  std::uint64_t last_seed = 500;
};

/// Runs one named suite, prints per-trial lines and a summary, and returns
/// kOk iff every contract held.
int run_verify_suite(const std::string& suite, const VerifyOptions& opts, std::ostream& out);

inline const std::vector<std::string> kVerifySuites = {"eq1",  "thm1", "prop1",         "thm2",
                                                       "prop4", "prop5", "counterexample"};

/// Full command-line entry point.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dectrust::cli
