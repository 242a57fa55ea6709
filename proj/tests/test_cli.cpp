#include "hombif/cli.hpp"
#include "hombif/parallel.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace hombif;
using namespace hombif::cli;

namespace {

struct Invocation {
  int code = -1;
  std::string out;
  std::string err;
};

Invocation invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "hombif");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Invocation r;
  r.code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string input_message(const Json& raw) {
  try {
    load_scenario(raw);
  } catch (const InputError& e) {
    return e.what();
  }
  return {};
}

Json minimal() {
  return Json::parse(R"({"schema_version": 1,
    "field": {"kind": "builtin", "name": "diagonal", "params": {"entries": [0.5, 2.0]}},
    "options": {"window": [-30, 30], "samples": [0]}})");
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("hombif_cli_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("defaults are materialized in the echoed scenario") {
  const auto s = load_scenario(minimal());
  const Json& e = s.echo;
  CHECK(e["schema_version"] == 1);
  CHECK(e["dimension"] == 2);
  CHECK(e["loop"]["kind"] == "circle");
  CHECK(e["loop"]["samples"] == 16);
  CHECK(e["options"]["horizon"] == 100);
  CHECK(e["options"]["kappa_plus"] == 1);
  CHECK(e["options"]["kappa_minus"] == -1);
  CHECK(e["options"]["dichotomy"]["gap_ratio"] == 1e3);
  CHECK(e["options"]["solve"]["rhs"].size() == 1);
  CHECK(e["seed"] == 0);
  // The echo alone reproduces itself.
  CHECK(load_scenario(e).echo == e);
  CHECK(load_scenario(minimal(), 42).seed == 42);
}

TEST_CASE("malformed scenarios name the offending field") {
  CHECK_THROWS_AS(parse_scenario_text("{\"schema_version\": 1,\n  \"field\": }"), InputError);
  try {
    parse_scenario_text("{\"schema_version\": 1,\n  \"field\": }");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  Json j = minimal();
  j["schema_version"] = 7;
  CHECK(input_message(j).find("/schema_version") != std::string::npos);

  j = minimal();
  j["field"]["name"] = "nosuch";
  const auto unknown = input_message(j);
  CHECK(unknown.find("/field/name") != std::string::npos);
  CHECK(unknown.find("unknown builtin") != std::string::npos);

  j = minimal();
  j["options"]["horizon"] = "long";
  CHECK(input_message(j).find("/options/horizon") != std::string::npos);

  j = minimal();
  j["options"]["typo"] = 1;
  CHECK(input_message(j).find("/options/typo: unknown field") != std::string::npos);

  j = minimal();
  j["field"] = Json::parse(R"({"kind": "builtin", "name": "autonomous",
                               "params": {"matrix": [[1, 2], [3]]}})");
  CHECK(input_message(j).find("/field/params/matrix/1") != std::string::npos);

  j = minimal();
  j["dimension"] = 3;
  CHECK(input_message(j).find("/dimension") != std::string::npos);

  j = minimal();
  j["options"]["samples"] = Json::array({99});
  CHECK(input_message(j).find("/options/samples/0") != std::string::npos);

  j = minimal();
  j["loop"] = Json::parse(R"({"kind": "points", "points": [[0], [1]]})");
  CHECK(input_message(j).find("/loop") != std::string::npos);

  CHECK_THROWS_AS(builtin_scenario("nosuch"), InputError);
  CHECK_THROWS_AS(read_scenario("/nonexistent/scenario.json"), InputError);
}

TEST_CASE("exit codes") {
  CHECK(exit_code(ErrorKind::certification) == 2);
  CHECK(exit_code(ErrorKind::input) == 3);
  CHECK(exit_code(ErrorKind::domain) == 3);
  CHECK(exit_code(ErrorKind::numeric) == 4);
  CHECK(exit_code(ErrorKind::indeterminate) == 4);

  CHECK(invoke({"spectrum", "--scenario", "builtin:nosuch"}).code == 3);
  CHECK(invoke({"nosuch", "--scenario", "builtin:autonomous-diag"}).code == 3);
  CHECK(invoke({"spectrum"}).code == 3);
  CHECK(invoke({"spectrum", "--scenario", "builtin:autonomous-diag", "--format", "xml"}).code == 3);
  CHECK(invoke({"spectrum", "--scenario", "builtin:autonomous-diag", "--threads", "0"}).code == 3);
  CHECK(invoke({"--help"}).code == 0);

  Json bad = minimal();
  bad["field"]["name"] = "nosuch";
  const auto o = execute(Command::index, bad);
  CHECK(o.exit_code == 3);
  CHECK(o.report["error"]["kind"] == "input");
  CHECK(o.report["scenario"].is_null());

  // No obstruction on a hyperbolic linear field: not certified.
  CHECK(execute(Command::certify, minimal()).exit_code == 2);

  // A neutral field has no splitting anywhere.
  Json neutral = minimal();
  neutral["field"]["params"]["entries"] = Json::array({1.0, 2.0});
  const auto n = execute(Command::klass, neutral);
  CHECK(n.exit_code == 2);
  CHECK(n.report["error"]["kind"] == "certification");
}

TEST_CASE("spectrum of the autonomous builtin") {
  const auto o = execute(Command::spectrum, builtin_scenario("autonomous-diag"));
  REQUIRE(o.exit_code == 0);
  const Json& samples = o.report["results"]["samples"];
  REQUIRE(samples.size() == 8);
  for (const auto& s : samples) {
    REQUIRE(s["intervals"].size() == 2);
    CHECK(std::abs(s["intervals"][0]["lower"].get<double>() - 0.5) <= 1e-2);
    CHECK(std::abs(s["intervals"][0]["upper"].get<double>() - 0.5) <= 1e-2);
    CHECK(std::abs(s["intervals"][1]["lower"].get<double>() - 2.0) <= 1e-2);
    CHECK(std::abs(s["intervals"][1]["upper"].get<double>() - 2.0) <= 1e-2);
  }
  REQUIRE(o.csv.size() == 8);
  CHECK(o.csv[0].name == "spectrum_0.csv");
  CHECK(o.csv[0].content.rfind("gamma,verdict\n", 0) == 0);
  CHECK(o.csv[0].content.find(",dichotomy\n") != std::string::npos);
}

TEST_CASE("index bundle classes of the realization builtins") {
  struct Case {
    const char* name;
    int rank;
    int w1;
  };
  for (const Case c : {Case{"mobius-realization", 0, 1}, Case{"trivial-realization", 1, 0},
                       Case{"mobius-sum", 0, 0}}) {
    CAPTURE(c.name);
    const auto o = execute(Command::klass, builtin_scenario(c.name));
    REQUIRE(o.exit_code == 0);
    CHECK(o.report["results"]["class"]["virtual_rank"] == c.rank);
    CHECK(o.report["results"]["class"]["delta_w1"] == c.w1);
    REQUIRE(o.csv.size() == 3);
    CHECK(o.csv[0].name == "bundle_stable.csv");
  }
  const auto m = execute(Command::klass, builtin_scenario("mobius-realization"));
  CHECK(m.csv[0].content.rfind("i,lambda0,v0_0,v0_1\n", 0) == 0);
}

TEST_CASE("realize round trip reproduces the class") {
  for (const char* name : {"mobius-realization", "trivial-realization"}) {
    CAPTURE(name);
    const auto real = execute(Command::realize, builtin_scenario(name));
    REQUIRE(real.exit_code == 0);
    const Json& tab = real.report["results"]["scenario"];
    CHECK(tab["field"]["kind"] == "tabulated");
    REQUIRE(real.extra.size() == 1);
    CHECK(parse_scenario_text(real.extra[0].content) == tab);
    const auto a = execute(Command::klass, builtin_scenario(name));
    const auto b = execute(Command::klass, tab);
    REQUIRE(b.exit_code == 0);
    CHECK(a.report["results"]["class"]["virtual_rank"] == b.report["results"]["class"]["virtual_rank"]);
    CHECK(a.report["results"]["class"]["delta_w1"] == b.report["results"]["class"]["delta_w1"]);
  }
}

TEST_CASE("tabulated input is validated against its declared shape") {
  Json j = minimal();
  j["field"] = Json::parse(R"({"kind": "tabulated", "window": [0, 1], "shape": [16, 2, 1],
                               "data": [0.5]})");
  CHECK(input_message(j).find("/field/data") != std::string::npos);
  j["field"]["shape"] = Json::array({8, 2, 1});
  CHECK(input_message(j).find("/field/shape/0") != std::string::npos);
}

TEST_CASE("index and solve on the switched builtin") {
  const auto idx = execute(Command::index, builtin_scenario("switched-index"));
  REQUIRE(idx.exit_code == 0);
  for (const auto& s : idx.report["results"]["samples"]) {
    CHECK(s["index"] == 2);
    CHECK(s["dim_ker"] == 2);
    CHECK(s["dim_coker"] == 0);
    CHECK(s["consistent"] == true);
  }
  const auto sol = execute(Command::solve, builtin_scenario("switched-index"));
  REQUIRE(sol.exit_code == 0);
  for (const auto& s : sol.report["results"]["samples"]) {
    for (const auto& x : s["solutions"]) CHECK(x["residual"].get<double>() <= 1e-10);
  }
  REQUIRE(sol.csv.size() == 1);
  CHECK(sol.csv[0].content.rfind("lambda0,n,phi0,phi1\n", 0) == 0);
}

TEST_CASE("solve with supplied right-hand sides on the minus side") {
  Json j = minimal();
  j["options"]["solve"] = Json::parse(R"({"side": "minus",
      "rhs": [{"start": -5, "values": [[1, -1], [0.5, 2]]}]})");
  const auto o = execute(Command::solve, j);
  REQUIRE(o.exit_code == 0);
  const Json& s = o.report["results"]["samples"][0];
  CHECK(o.report["results"]["kappa"] == -1);
  CHECK(s["solutions"][0]["residual"].get<double>() <= 1e-10);
  // Support outside the half-line is an input problem.
  j["options"]["solve"]["rhs"][0]["start"] = 5;
  CHECK(execute(Command::solve, j).exit_code == 3);
}

TEST_CASE("certify the Mobius system end to end") {
  const auto o = execute(Command::certify, builtin_scenario("system2-mobius"));
  CHECK(o.exit_code == 0);
  const Json& r = o.report["results"];
  CHECK(r["verdict"] == "bifurcation_certified");
  CHECK(r["lambda0"]["sample"] == 0);
  CHECK(r["class"]["delta_w1"] == 1);
  REQUIRE(r["localization"].is_object());
  CHECK(r["localization"]["clusters"].get<int>() >= 1);
  const double pi = std::acos(-1.0);
  const double step = 2 * pi / 64;
  bool near_pi = false;
  for (const auto& c : r["localization"]["candidates"]) {
    CHECK(c["residual"].get<double>() <= 1e-9);
    near_pi |= std::abs(c["coords"][0].get<double>() - pi) <= 2 * step;
  }
  CHECK(near_pi);
  REQUIRE(o.csv.size() == 1);
  CHECK(o.csv[0].content.rfind("lambda0,n,phi0,phi1\n", 0) == 0);
}

TEST_CASE("reports are byte-identical across worker counts") {
  for (const char* name : {"mobius-realization", "switched-index"}) {
    for (Command c : {Command::spectrum, Command::projectors, Command::klass}) {
      CAPTURE(name);
      CAPTURE(to_string(c));
      set_worker_count(1);
      const auto one = dump(execute(c, builtin_scenario(name)).report);
      set_worker_count(8);
      const auto eight = dump(execute(c, builtin_scenario(name)).report);
      CHECK(one == eight);
    }
  }
  set_worker_count(1);
}

TEST_CASE("command line writes report and tables") {
  const auto dir = scratch("out");
  const auto r = invoke({"class", "--scenario", "builtin:mobius-realization", "--out",
                         dir.string(), "--format", "csv", "--seed", "7", "--threads", "2"});
  CHECK(r.code == 0);
  const Json report = Json::parse(slurp(dir / "report.json"));
  CHECK(report["seed"] == 7);
  CHECK(report["scenario"]["seed"] == 7);
  CHECK(report["command"] == "class");
  CHECK(std::filesystem::exists(dir / "bundle_stable.csv"));
  CHECK(std::filesystem::exists(dir / "bundle_unstable.csv"));
  CHECK(std::filesystem::exists(dir / "bundle_minus_image.csv"));

  // Same run on stdout, json by default.
  const auto s = invoke({"class", "--scenario", "builtin:mobius-realization", "--seed", "7"});
  CHECK(s.out == slurp(dir / "report.json"));

  // csv on stdout prints the first table.
  const auto c = invoke({"spectrum", "--scenario", "builtin:autonomous-diag", "--format", "csv"});
  CHECK(c.out.rfind("gamma,verdict\n", 0) == 0);

  // A scenario file on disk.
  const auto file = dir / "scenario.json";
  {
    std::ofstream f(file);
    f << minimal().dump();
  }
  CHECK(invoke({"index", "--scenario", file.string()}).code == 0);
  {
    std::ofstream f(file);
    f << "{\"schema_version\": 1,";
  }
  const auto broken = invoke({"index", "--scenario", file.string()});
  CHECK(broken.code == 3);
  CHECK(broken.err.find("line") != std::string::npos);
  std::filesystem::remove_all(dir);
}
