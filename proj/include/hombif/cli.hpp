#pragma once

#include "hombif/bifurcation.hpp"
#include "hombif/bundle.hpp"
#include "hombif/errors.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hombif::cli {

using Json = nlohmann::ordered_json;

inline constexpr int schema_version = 1;
inline constexpr const char* tool_version = "1.0.0";

enum class Command { spectrum, projectors, index, klass, certify, solve, realize };

const char* to_string(Command c);
std::optional<Command> parse_command(std::string_view name);

/// 2 certification, 3 input/domain, 4 numeric/indeterminate.
int exit_code(ErrorKind kind);

struct SolveOptions {
  Side side = Side::plus;
  long kappa = 0;
  double tolerance = default_solve_tol;
  std::vector<FiniteWindowSequence> rhs;
};

struct ScenarioOptions {
  TimeWindow window{-100, 100};
  long horizon = 100;
  long kappa_plus = 1;
  long kappa_minus = -1;
  std::vector<std::size_t> samples;
  DichotomyOptions dichotomy;
  SpectrumOptions spectrum;
  long projector_horizon = 20;
  SolveOptions solve;
  CertifyOptions certify;
  bool localize = true;
  LocalizeOptions localization;
  TimeWindow realize_window;
};

/// A validated scenario. `echo` is the input with every default filled in,
/// so re-running it alone reproduces the run.
struct Scenario {
  Json echo;
  std::uint64_t seed = 0;
  int dimension = 0;
  ParameterLoop loop;
  std::optional<DiscreteVectorField> linear;   // linearization for nonlinear input
  std::optional<NonlinearField> nonlinear;     // only for nonlinear input
  ScenarioOptions options;
};

/// Parses scenario text. Syntax errors become InputError with line and column.
Json parse_scenario_text(const std::string& text);
/// "builtin:NAME" or a file path.
Json read_scenario(const std::string& reference);

/// Validates and materializes; errors name the JSON path of the offending
/// field. `seed` overrides the scenario seed.
Scenario load_scenario(const Json& raw, std::optional<std::uint64_t> seed = std::nullopt);

std::vector<std::string> builtin_scenario_names();
Json builtin_scenario(const std::string& name);

struct Artifact {
  std::string name;
  std::string content;
};

struct Outcome {
  int exit_code = 0;
  Json report;
  std::vector<Artifact> csv;        // tables for --format csv
  std::vector<Artifact> extra;      // always written (realized scenario)
};

/// Runs one command. Errors are caught and recorded in the report.
Outcome execute(Command command, const Json& raw, std::optional<std::uint64_t> seed = std::nullopt);

/// Report serialization used for every output (2-space indent, newline).
std::string dump(const Json& report);

/// Full command line: hombif <command> --scenario S [--out DIR]
/// [--format json|csv] [--seed N] [--threads N].
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hombif::cli
