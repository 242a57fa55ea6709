#include "hombif/cli.hpp"

#include "hombif/errors.hpp"
#include "hombif/parallel.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace hombif::cli {

namespace {

constexpr const char* equicontinuity_warning =
    "equicontinuity in the parameter is not machine-checked; only sampled boundedness is verified";

Json coords(const Parameter& p) {
  Json a = Json::array();
  for (double c : p.coords) a.push_back(c);
  return a;
}

Json window_json(TimeWindow w) { return Json::array({w.first, w.last}); }

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json sequence_json(const FiniteWindowSequence& s) {
  Json values = Json::array();
  for (const auto& v : s.values) {
    Json row = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(v(i));
    values.push_back(std::move(row));
  }
  return Json{{"window", window_json(s.window)}, {"decays_low", s.decays_low},
              {"decays_high", s.decays_high}, {"values", std::move(values)}};
}

Json error_json(ErrorKind kind, const std::string& message) {
  return Json{{"kind", to_string(kind)}, {"message", message}};
}

std::ostream& csv_precision(std::ostream& os) {
  os.precision(17);
  return os;
}

// Column header for parameter coordinates.
std::string lambda_header(const ParameterLoop& loop) {
  std::string h;
  const std::size_t n = loop.size() ? loop[0].coords.size() : 0;
  for (std::size_t c = 0; c < n; ++c) h += (c ? ",lambda" : "lambda") + std::to_string(c);
  return h;
}

void solution_rows(std::ostream& os, const Parameter& lambda, const FiniteWindowSequence& phi) {
  for (long n = phi.window.first; n <= phi.window.last; ++n) {
    bool first = true;
    for (double c : lambda.coords) {
      os << (first ? "" : ",") << c;
      first = false;
    }
    os << (first ? "" : ",") << n;
    const Vector& v = phi.at(n);
    for (Eigen::Index i = 0; i < v.size(); ++i) os << "," << v(i);
    os << "\n";
  }
}

std::string solution_header(const ParameterLoop& loop, int d) {
  std::string h = lambda_header(loop);
  h += h.empty() ? "n" : ",n";
  for (int i = 0; i < d; ++i) h += ",phi" + std::to_string(i);
  return h + "\n";
}

// Accumulates results, warnings and the exit code of one run. The exit code
// follows the first failure in sample order, so it does not depend on
// scheduling.
struct Run {
  explicit Run(const Scenario& scenario) : s(scenario) {}
  const Scenario& s;
  Json results = Json::object();
  Json warnings = Json::array();
  int exit = 0;
  std::vector<Artifact> csv;
  std::vector<Artifact> extra;

  void fail(ErrorKind k) {
    if (exit == 0) exit = exit_code(k);
  }
};

// Per-sample slot filled in parallel.
struct SampleSlot {
  Json json;
  std::string csv;
  std::optional<ErrorKind> failure;
  std::vector<std::string> warnings;
};

template <class Body>
std::vector<SampleSlot> per_sample(Run& run, Body&& body) {
  const auto& samples = run.s.options.samples;
  std::vector<SampleSlot> slots(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    SampleSlot& slot = slots[i];
    const Parameter& lambda = run.s.loop[samples[i]];
    slot.json = Json{{"sample", samples[i]}, {"coords", coords(lambda)}};
    try {
      body(lambda, slot);
    } catch (const Error& e) {
      slot.json["error"] = error_json(e.kind(), e.what());
      slot.failure = e.kind();
    }
  });
  for (auto& slot : slots) {
    if (slot.failure) run.fail(*slot.failure);
    if (slot.json.contains("error")) {
      run.warnings.push_back("sample " + slot.json["sample"].dump() + ": " +
                             slot.json["error"]["message"].get<std::string>());
    }
    for (auto& w : slot.warnings) run.warnings.push_back(w);
  }
  return slots;
}

Json family_json(const ProjectorFamily& pf, const EDWitness& w) {
  Json mats = Json::array();
  for (long n = pf.window.first; n <= pf.window.last; ++n) {
    mats.push_back(Json{{"n", n}, {"P", matrix_json(pf.at(n))}});
  }
  return Json{{"side", to_string(pf.side)},
              {"anchor", pf.anchor},
              {"window", window_json(pf.window)},
              {"rank", pf.rank},
              {"complement_choice", pf.complement_choice},
              {"idempotency_residual", pf.idempotency_residual},
              {"invariance_residual", pf.invariance_residual},
              {"worst_invariance_time", pf.worst_invariance_time},
              {"min_regularity", pf.min_regularity},
              {"sup_norm", pf.sup_norm},
              {"K", w.K},
              {"alpha", w.alpha},
              {"worst_excess", w.worst_excess},
              {"checked_pairs", w.checked_pairs},
              {"matrices", std::move(mats)}};
}

void cmd_spectrum(Run& run) {
  const auto& o = run.s.options;
  auto slots = per_sample(run, [&](const Parameter& lambda, SampleSlot& slot) {
    const auto res = dichotomy_spectrum(*run.s.linear, lambda, o.spectrum, o.dichotomy);
    Json intervals = Json::array();
    bool indeterminate = false;
    for (const auto& iv : res.intervals) {
      intervals.push_back(Json{{"lower", iv.lower}, {"upper", iv.upper},
                               {"indeterminate", iv.indeterminate}});
      indeterminate |= iv.indeterminate;
    }
    int counts[3] = {0, 0, 0};
    std::ostringstream csv;
    csv_precision(csv) << "gamma,verdict\n";
    for (const auto& v : res.verdicts) {
      ++counts[static_cast<int>(v.verdict)];
      csv << v.gamma << "," << to_string(v.verdict) << "\n";
    }
    slot.json["intervals"] = std::move(intervals);
    slot.json["grid_points"] = res.verdicts.size();
    slot.json["dichotomy_points"] = counts[0];
    slot.json["no_dichotomy_points"] = counts[1];
    slot.json["indeterminate_points"] = counts[2];
    slot.json["evaluations"] = res.evaluations;
    slot.csv = csv.str();
    if (indeterminate || counts[2] > 0) {
      slot.failure = ErrorKind::indeterminate;
      slot.warnings.push_back(lambda.label() + ": spectrum contains indeterminate verdicts");
    }
  });
  Json list = Json::array();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i].csv.empty()) {
      run.csv.push_back({"spectrum_" + std::to_string(o.samples[i]) + ".csv", slots[i].csv});
    }
    list.push_back(std::move(slots[i].json));
  }
  run.results["samples"] = std::move(list);
}

void cmd_projectors(Run& run) {
  const auto& o = run.s.options;
  const auto& field = *run.s.linear;
  const int d = run.s.dimension;
  auto slots = per_sample(run, [&](const Parameter& lambda, SampleSlot& slot) {
    std::ostringstream csv;
    csv_precision(csv);
    for (Side side : {Side::plus, Side::minus}) {
      const long anchor = side == Side::plus ? o.kappa_plus : o.kappa_minus;
      const auto pf = build_projector_family(field, lambda, side, anchor, o.projector_horizon,
                                             o.dichotomy);
      const auto w = verify_ed(field, lambda, pf);
      slot.json[to_string(side)] = family_json(pf, w);
      for (long n = pf.window.first; n <= pf.window.last; ++n) {
        csv << lambda.index;
        for (double c : lambda.coords) csv << "," << c;
        csv << "," << to_string(side) << "," << n;
        const Matrix& p = pf.at(n);
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < d; ++c) csv << "," << p(r, c);
        csv << "\n";
      }
    }
    slot.csv = csv.str();
  });
  std::string header = "i";
  if (const auto lh = lambda_header(run.s.loop); !lh.empty()) header += "," + lh;
  header += ",side,n";
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) header += ",p" + std::to_string(r) + "_" + std::to_string(c);
  std::string table = header + "\n";
  Json list = Json::array();
  for (auto& slot : slots) {
    table += slot.csv;
    list.push_back(std::move(slot.json));
  }
  run.results["samples"] = std::move(list);
  run.csv.push_back({"projectors.csv", table});
}

void cmd_index(Run& run) {
  const auto& o = run.s.options;
  auto slots = per_sample(run, [&](const Parameter& lambda, SampleSlot& slot) {
    const auto r = fredholm_index(*run.s.linear, lambda, o.window, o.horizon, o.dichotomy);
    Json kernel = Json::array();
    for (const auto& k : r.kernel_basis) {
      kernel.push_back(Json{{"sup_norm", k.sup_norm()}, {"decays_low", k.decays_low},
                            {"decays_high", k.decays_high}});
    }
    slot.json["index"] = r.index;
    slot.json["dim_ker"] = r.dim_ker;
    slot.json["dim_coker"] = r.dim_coker;
    slot.json["rank_plus"] = r.rank_plus;
    slot.json["rank_minus"] = r.rank_minus;
    slot.json["kappa_minus"] = r.kappa_minus;
    slot.json["kappa_plus"] = r.kappa_plus;
    slot.json["ker_by_intersection"] = r.ker_by_intersection;
    slot.json["ker_by_truncation"] = r.ker_by_truncation;
    slot.json["truncated_index"] = r.truncated_index;
    slot.json["consistent"] = r.consistent;
    slot.json["smallest_angle"] = r.smallest_angle;
    slot.json["kernel"] = std::move(kernel);
    slot.json["note"] = r.note;
    if (!r.consistent) {
      slot.failure = ErrorKind::indeterminate;
      slot.warnings.push_back(lambda.label() + ": kernel dimension estimates disagree");
    }
  });
  Json list = Json::array();
  for (auto& slot : slots) {
    list.push_back(std::move(slot.json));
  }
  run.results["samples"] = std::move(list);
}

Json bundle_summary(const SampledBundle& b) {
  return Json{{"name", b.name}, {"ambient", b.ambient}, {"rank", b.rank},
              {"w1", first_sw_class(b)}, {"max_consecutive_angle", b.max_consecutive_angle()}};
}

void cmd_class(Run& run) {
  const auto& o = run.s.options;
  const auto b = stable_unstable_bundles(*run.s.linear, run.s.loop, o.kappa_plus, o.kappa_minus,
                                         o.horizon, o.dichotomy);
  const auto cls = index_bundle_class(b);
  double worst_k = 0, worst_alpha = 0;
  for (const auto* side : {&b.plus, &b.minus}) {
    for (const auto& w : *side) {
      worst_k = std::max(worst_k, w.K);
      worst_alpha = std::max(worst_alpha, w.alpha);
    }
  }
  run.results = Json{
      {"kappa_plus", b.kappa_plus},
      {"kappa_minus", b.kappa_minus},
      {"class", {{"virtual_rank", cls.virtual_rank}, {"delta_w1", cls.delta_w1},
                 {"provenance", cls.provenance}}},
      {"stable", bundle_summary(b.stable)},
      {"unstable", bundle_summary(b.unstable)},
      {"minus_image", bundle_summary(b.minus_image)},
      {"worst_K", worst_k},
      {"worst_alpha", worst_alpha},
  };
  for (const auto& [name, bundle] : {std::pair{"stable", &b.stable},
                                     std::pair{"unstable", &b.unstable},
                                     std::pair{"minus_image", &b.minus_image}}) {
    std::ostringstream os;
    write_bundle_csv(os, *bundle);
    run.csv.push_back({std::string("bundle_") + name + ".csv", os.str()});
  }
}

NonlinearField as_nonlinear(const DiscreteVectorField& a) {
  NonlinearField f;
  f.dimension = a.dimension();
  f.window = a.window();
  f.name = "linear";
  f.f = [a](const Parameter& l, long n, const Vector& x) -> Vector { return a(l, n) * x; };
  f.jacobian = [a](const Parameter& l, long n, const Vector&) -> Matrix { return a(l, n); };
  return f;
}

void cmd_certify(Run& run) {
  const auto& o = run.s.options;
  const NonlinearField f = run.s.nonlinear ? *run.s.nonlinear : as_nonlinear(*run.s.linear);
  if (!run.s.nonlinear) run.warnings.push_back("linear field certified with a zero remainder");
  const auto cert = certify_bifurcation(f, run.s.loop, o.certify);

  Json hyps = Json::array();
  for (const auto& h : cert.hypotheses) {
    hyps.push_back(Json{{"name", h.name}, {"passed", h.passed}, {"evidence", h.evidence}});
  }
  Json lambda0 = nullptr;
  if (cert.lambda0) lambda0 = Json{{"sample", cert.lambda0_index}, {"coords", coords(*cert.lambda0)}};
  Json notes = Json::array();
  for (const auto& n : cert.notes) notes.push_back(n);
  run.results = Json{
      {"verdict", to_string(cert.verdict)},
      {"failed_item", cert.failed_item},
      {"hypotheses", std::move(hyps)},
      {"kappa_minus", cert.kappa_minus},
      {"kappa_plus", cert.kappa_plus},
      {"lambda0", std::move(lambda0)},
      {"lambda0_condition", cert.lambda0_condition},
      {"rank_plus", cert.rank_plus},
      {"rank_minus", cert.rank_minus},
      {"class", {{"virtual_rank", cert.index_class.virtual_rank},
                 {"delta_w1", cert.index_class.delta_w1},
                 {"provenance", cert.index_class.provenance}}},
      {"notes", std::move(notes)},
  };
  if (cert.verdict != CertificateVerdict::bifurcation_certified) {
    run.fail(ErrorKind::certification);
    run.warnings.push_back(std::string("no certificate: ") + to_string(cert.verdict) +
                           (cert.failed_item.empty() ? "" : " (" + cert.failed_item + ")"));
  }

  if (!o.localize || cert.verdict == CertificateVerdict::hypotheses_failed) {
    run.results["localization"] = nullptr;
    return;
  }
  const auto loc = localize_bifurcations(f, run.s.loop, o.localization);
  Json cands = Json::array();
  std::ostringstream csv;
  csv_precision(csv) << solution_header(run.s.loop, f.dimension);
  int clusters = 0;
  for (const auto& c : loc.candidates) {
    clusters = std::max(clusters, c.cluster + 1);
    cands.push_back(Json{{"cluster", c.cluster},
                         {"coords", coords(c.lambda)},
                         {"seed_sample", c.seed_sample},
                         {"seed_scale", c.seed_scale},
                         {"residual", c.residual},
                         {"amplitude", c.amplitude},
                         {"phi", sequence_json(c.phi)}});
    solution_rows(csv, c.lambda, c.phi);
  }
  Json dropped = Json::array();
  for (const auto& d : loc.dropped) dropped.push_back(d);
  run.results["localization"] = Json{{"grid_size", loc.grid_size},
                                     {"seeded_samples", loc.seeded_samples},
                                     {"clusters", clusters},
                                     {"candidates", std::move(cands)},
                                     {"dropped", std::move(dropped)}};
  run.warnings.push_back("localization is heuristic: candidates are evidence, not proof");
  run.csv.push_back({"solutions.csv", csv.str()});
}

void cmd_solve(Run& run) {
  const auto& o = run.s.options;
  const auto& field = *run.s.linear;
  auto slots = per_sample(run, [&](const Parameter& lambda, SampleSlot& slot) {
    const auto pf = build_projector_family(field, lambda, o.solve.side, o.solve.kappa, o.horizon,
                                           o.dichotomy);
    const auto w = verify_ed(field, lambda, pf);
    Json sols = Json::array();
    std::ostringstream csv;
    csv_precision(csv);
    for (std::size_t r = 0; r < o.solve.rhs.size(); ++r) {
      const auto sol = green_solve(field, lambda, o.solve.side, o.solve.kappa, o.solve.rhs[r], w,
                                   o.solve.tolerance);
      sols.push_back(Json{{"rhs", r}, {"tail_bound", sol.tail_bound}, {"residual", sol.residual},
                          {"phi", sequence_json(sol.phi)}});
      solution_rows(csv, lambda, sol.phi);
    }
    slot.json["K"] = w.K;
    slot.json["alpha"] = w.alpha;
    slot.json["solutions"] = std::move(sols);
    slot.csv = csv.str();
  });
  std::string table = solution_header(run.s.loop, run.s.dimension);
  Json list = Json::array();
  for (auto& slot : slots) {
    table += slot.csv;
    list.push_back(std::move(slot.json));
  }
  run.results = Json{{"side", to_string(o.solve.side)}, {"kappa", o.solve.kappa},
                     {"samples", std::move(list)}};
  run.csv.push_back({"solutions.csv", table});
}

void cmd_realize(Run& run) {
  const auto& s = run.s;
  const TimeWindow w = s.options.realize_window;
  const int d = s.dimension;
  Json data = Json::array();
  for (std::size_t i = 0; i < s.loop.size(); ++i) {
    for (long n = w.first; n <= w.last; ++n) {
      const Matrix a = (*s.linear)(s.loop[i], n);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) data.push_back(a(r, c));
    }
  }
  if (s.nonlinear) run.warnings.push_back("only the linearization at zero is tabulated");
  const TimeWindow fw = s.linear->window();
  if (!w.contains(TimeWindow{fw.first - 1, fw.last + 1})) {
    run.warnings.push_back("realize window does not reach past the field window; the table "
                           "repeats its edge matrices outside it");
  }
  Json out = s.echo;
  const std::string name = s.echo["name"].get<std::string>();
  out["name"] = name.empty() ? "tabulated" : name + "-tabulated";
  out["field"] = Json{{"kind", "tabulated"},
                      {"window", window_json(w)},
                      {"shape", Json::array({s.loop.size(), w.length(), d})},
                      {"data", std::move(data)}};
  run.results = Json{{"shape", Json::array({s.loop.size(), w.length(), d})},
                     {"window", window_json(w)},
                     {"scenario", out}};
  run.extra.push_back({"realized.json", dump(out)});
}

}  // namespace

const char* to_string(Command c) {
  switch (c) {
    case Command::spectrum: return "spectrum";
    case Command::projectors: return "projectors";
    case Command::index: return "index";
    case Command::klass: return "class";
    case Command::certify: return "certify";
    case Command::solve: return "solve";
    case Command::realize: return "realize";
  }
  return "?";
}

std::optional<Command> parse_command(std::string_view name) {
  for (Command c : {Command::spectrum, Command::projectors, Command::index, Command::klass,
                    Command::certify, Command::solve, Command::realize}) {
    if (name == to_string(c)) return c;
  }
  return std::nullopt;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::certification: return 2;
    case ErrorKind::input:
    case ErrorKind::domain: return 3;
    case ErrorKind::numeric:
    case ErrorKind::indeterminate: return 4;
  }
  return 4;
}

std::string dump(const Json& report) { return report.dump(2) + "\n"; }

Outcome execute(Command command, const Json& raw, std::optional<std::uint64_t> seed) {
  Outcome out;
  Json scenario = nullptr;
  Json error = nullptr;
  Json results = nullptr;
  Json warnings = Json::array();
  std::uint64_t used_seed = seed.value_or(0);
  try {
    const Scenario s = load_scenario(raw, seed);
    used_seed = s.seed;
    scenario = s.echo;
    Run run{s};
    run.warnings.push_back(equicontinuity_warning);
    try {
      switch (command) {
        case Command::spectrum: cmd_spectrum(run); break;
        case Command::projectors: cmd_projectors(run); break;
        case Command::index: cmd_index(run); break;
        case Command::klass: cmd_class(run); break;
        case Command::certify: cmd_certify(run); break;
        case Command::solve: cmd_solve(run); break;
        case Command::realize: cmd_realize(run); break;
      }
    } catch (const Error& e) {
      run.fail(e.kind());
      error = error_json(e.kind(), e.what());
    }
    results = std::move(run.results);
    warnings = std::move(run.warnings);
    out.exit_code = run.exit;
    out.csv = std::move(run.csv);
    out.extra = std::move(run.extra);
  } catch (const Error& e) {
    error = error_json(e.kind(), e.what());
    out.exit_code = exit_code(e.kind());
  } catch (const std::exception& e) {
    error = error_json(ErrorKind::numeric, std::string("internal failure: ") + e.what());
    out.exit_code = 4;
  }
  out.report = Json{{"tool", "hombif"},
                    {"version", tool_version},
                    {"command", to_string(command)},
                    {"seed", used_seed},
                    {"scenario", std::move(scenario)},
                    {"results", std::move(results)},
                    {"warnings", std::move(warnings)},
                    {"error", std::move(error)},
                    {"exit_code", out.exit_code}};
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exponential dichotomies, Fredholm indices, index bundles and homoclinic "
               "bifurcation for parametrized difference equations",
               "hombif"};
  app.require_subcommand(1, 1);
  std::string scenario_ref, out_dir, format = "json";
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  const std::vector<std::pair<Command, const char*>> commands = {
      {Command::spectrum, "dichotomy spectrum per loop sample"},
      {Command::projectors, "half-line projector families and (K, alpha) witnesses"},
      {Command::index, "Fredholm index, kernel and cokernel per loop sample"},
      {Command::klass, "desk-scale index bundle class over the loop"},
      {Command::certify, "bifurcation certificate and localized homoclinic candidates"},
      {Command::solve, "Green solves on a half-line for the scenario right-hand sides"},
      {Command::realize, "tabulate the field as a scenario file"},
  };
  for (const auto& [cmd, help] : commands) {
    auto* sub = app.add_subcommand(to_string(cmd), help);
    sub->add_option("--scenario", scenario_ref, "scenario file or builtin:NAME")->required();
    sub->add_option("--out", out_dir, "directory for report.json and tables");
    sub->add_option("--format", format, "json or csv")
        ->check(CLI::IsMember({"json", "csv"}));
    sub->add_option("--seed", seed, "overrides the scenario seed");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 256));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 3;
  }
  Command command = Command::spectrum;
  for (const auto& [cmd, help] : commands) {
    if (app.got_subcommand(to_string(cmd))) command = cmd;
  }

  Json raw;
  try {
    raw = read_scenario(scenario_ref);
  } catch (const Error& e) {
    err << "hombif: " << e.what() << "\n";
    return exit_code(e.kind());
  }
  set_worker_count(threads);
  const Outcome result = execute(command, raw, seed);
  if (result.report["error"].is_object()) {
    err << "hombif: " << result.report["error"]["message"].get<std::string>() << "\n";
  }
  for (const auto& w : result.report["warnings"]) err << "warning: " << w.get<std::string>() << "\n";

  if (out_dir.empty()) {
    if (format == "csv" && !result.csv.empty()) {
      out << result.csv.front().content;
    } else {
      out << dump(result.report);
    }
    return result.exit_code;
  }
  try {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto write = [&](const std::string& name, const std::string& content) {
      std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
      f << content;
      if (!f) throw InputError("cannot write " + (fs::path(out_dir) / name).string());
    };
    write("report.json", dump(result.report));
    if (format == "csv") {
      for (const auto& a : result.csv) write(a.name, a.content);
    }
    for (const auto& a : result.extra) write(a.name, a.content);
  } catch (const std::exception& e) {
    err << "hombif: " << e.what() << "\n";
    return 3;
  }
  return result.exit_code;
}

}  // namespace hombif::cli
