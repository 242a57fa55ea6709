// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "hombif/bifurcation.hpp"
#include "hombif/bundle.hpp"
#include "hombif/cli.hpp"
#include "hombif/matrixcore.hpp"
#include "hombif/parallel.hpp"
#include "random_systems.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace hombif;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

Matrix diag(std::initializer_list<double> entries) {
  Vector v(static_cast<Eigen::Index>(entries.size()));
  Eigen::Index i = 0;
  for (double e : entries) v(i++) = e;
  return v.asDiagonal();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

const Parameter p0{};

// 1. Contour projector against the eigendecomposition route.
Verdict projector_agreement() {
  std::mt19937_64 rng(101);
  double worst = 0;
  int rank_mismatch = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + trial % 4;
    std::vector<double> moduli;
    const Matrix m = testing::random_hyperbolic(rng, d, &moduli);
    const auto c = spectral_projector_contour(m);
    const auto e = spectral_projector_eigen(m);
    worst = std::max(worst, inf_norm(c.stable_projector - e.stable_projector));
    int inside = 0;
    for (double r : moduli) inside += r < 1 ? 1 : 0;
    rank_mismatch += c.stable_rank != inside ? 1 : 0;
  }
  return {worst <= 1e-8 && rank_mismatch == 0,
          fmt("200 matrices, worst |P_contour - P_eigen|_inf = %.2e, rank mismatches %.0f", worst,
              rank_mismatch)};
}

// 2. Dichotomy spectrum of autonomous fields against the eigenvalue moduli.
Verdict autonomous_spectrum() {
  std::mt19937_64 rng(202);
  SpectrumOptions so;
  so.relative_precision = 1e-4;
  double worst = 0;
  int failures = 0, non_hyperbolic = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + trial % 4;
    std::vector<double> moduli(d), angles(d, 0.0);
    // Distinct moduli in [0.1, 10], separated by at least 10 percent, the
    // first one on the unit circle for every third matrix.
    const bool unit = trial % 3 == 0;
    non_hyperbolic += unit ? 1 : 0;
    for (int i = 0; i < d; ++i) {
      for (;;) {
        const double r = unit && i == 0
                             ? 1.0
                             : std::exp(testing::uniform(rng, std::log(0.1), std::log(10.0)));
        bool ok = true;
        for (int k = 0; k < i; ++k) ok &= std::abs(std::log(r / moduli[k])) > 0.1;
        if (ok) {
          moduli[i] = r;
          break;
        }
      }
    }
    for (int i = 0; i + 1 < d; i += 2) {
      if (trial % 4 == 1) {
        angles[i] = testing::uniform(rng, 0.3, std::numbers::pi - 0.3);
        moduli[i + 1] = moduli[i];
      }
    }
    const Matrix m = testing::similar_to(rng, testing::block_with_moduli(moduli, angles));
    const auto s = dichotomy_spectrum(autonomous_field(m), p0, so);
    std::vector<double> pts(moduli);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    // Every interval lies within 1e-2 of one modulus and every modulus lies
    // within 1e-2 of an interval.
    bool ok = !s.intervals.empty();
    for (const auto& iv : s.intervals) {
      double e = std::numeric_limits<double>::infinity();
      for (double r : pts) e = std::min(e, std::max(std::abs(iv.lower - r), std::abs(iv.upper - r)));
      worst = std::max(worst, e);
      ok &= e <= 1e-2;
    }
    for (double r : pts) {
      bool covered = false;
      for (const auto& iv : s.intervals) covered |= iv.lower - 1e-2 <= r && r <= iv.upper + 1e-2;
      ok &= covered;
    }
    if (!ok && std::getenv("ACCEPTANCE_DEBUG")) {
      std::fprintf(stderr, "trial %d moduli:", trial);
      for (double r : pts) std::fprintf(stderr, " %.6f", r);
      std::fprintf(stderr, "\n intervals:");
      for (const auto& iv : s.intervals) std::fprintf(stderr, " [%.6f, %.6f]%s", iv.lower, iv.upper, iv.indeterminate ? "?" : "");
      std::fprintf(stderr, "\n");
    }
    failures += ok ? 0 : 1;
  }
  return {failures == 0, fmt("50 matrices (%.0f with a unit modulus), worst endpoint error %.2e, "
                             "mismatches %.0f",
                             non_hyperbolic, worst, failures)};
}

// 3. ED certificate of diag(0.5, 2).
Verdict ed_certificate() {
  auto f = autonomous_field(diag({0.5, 2}));
  auto pf = build_projector_family(f, p0, Side::plus, 0, 100);
  auto w = verify_ed(f, p0, pf);
  const bool pass = std::abs(w.K - 1) <= 1e-6 && std::abs(w.alpha - 0.5) <= 1e-6 &&
                    pf.invariance_residual <= 1e-7 && w.inverse_checked_pairs > 0;
  return {pass, fmt("K = %.12f, alpha = %.12f, invariance %.1e", w.K, w.alpha,
                    pf.invariance_residual) +
                    ", inverse form on im P checked on " +
                    std::to_string(w.inverse_checked_pairs) + " pairs"};
}

// 4. Contour projector of the truncated shift.
Verdict shift_projector() {
  auto pf = shift_operator_projector(autonomous_field(diag({0.5, 2})), p0, 64);
  double worst = 0;
  for (const auto& p : pf.matrices) worst = std::max(worst, max_abs(p - diag({1, 0})));
  return {worst <= 1e-6 && !pf.matrices.empty(),
          fmt("N = 64, %.0f interior nodes, worst |P(n) - diag(1,0)| = %.2e",
              static_cast<double>(pf.matrices.size()), worst)};
}

// 5. Green solver on random right-hand sides.
Verdict green_solver() {
  std::mt19937_64 rng(505);
  const int dims[] = {1, 2, 4};
  double worst = 0;
  int failures = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = dims[trial % 3];
    const Side side = trial % 2 ? Side::minus : Side::plus;
    std::vector<double> moduli(d), angles(d, 0.0);
    for (int i = 0; i < d; ++i) {
      moduli[i] = testing::uniform(rng, 0, 1) < 0.5 ? testing::uniform(rng, 0.1, 0.6)
                                                   : testing::uniform(rng, 1.7, 6.0);
    }
    // Purely contracting and purely expanding fields as well.
    if (trial % 5 == 0) std::fill(moduli.begin(), moduli.end(), trial % 2 ? 3.0 : 0.4);
    if (trial % 5 == 1) std::fill(moduli.begin(), moduli.end(), trial % 2 ? 0.3 : 2.5);
    auto f = autonomous_field(testing::similar_to(rng, testing::block_with_moduli(moduli, angles)));
    try {
      auto w = verify_ed(f, p0, build_projector_family(f, p0, side, 0, 120));
      const TimeWindow support = side == Side::plus ? TimeWindow{0, 20} : TimeWindow{-20, -1};
      auto psi = FiniteWindowSequence::zeros(support, d);
      for (auto& v : psi.values)
        for (int i = 0; i < d; ++i) v(i) = testing::uniform(rng, -1, 1);
      auto sol = green_solve(f, p0, side, 0, psi, w);
      auto lphi = apply_difference(f, p0, sol.phi);
      // Compare L phi with psi on the whole half-line window (psi is zero
      // off its support).
      const TimeWindow inner = side == Side::plus ? TimeWindow{0, sol.phi.window.last - 1}
                                                  : TimeWindow{sol.phi.window.first, -1};
      double r = 0;
      for (long n = inner.first; n <= inner.last; ++n) {
        const Vector target = support.contains(n) ? psi.at(n) : Vector::Zero(d);
        r = std::max(r, (lphi.at(n) - target).cwiseAbs().maxCoeff());
      }
      worst = std::max(worst, r);
      failures += r <= 1e-10 ? 0 : 1;
    } catch (const Error&) {
      ++failures;
    }
  }
  return {failures == 0, fmt("50 right-hand sides, d in {1,2,4}, both half-lines, worst "
                             "|L(M psi) - psi|_inf = %.2e, failures %.0f",
                             worst, failures)};
}

// A- for n < -3, random middle on [-3, 3], A+ for n > 3.
DiscreteVectorField asymptotic_random(std::mt19937_64& rng, int d, int* stable_plus,
                                      int* stable_minus) {
  std::vector<double> mp, mm;
  const Matrix ap = testing::random_hyperbolic(rng, d, &mp);
  const Matrix am = testing::random_hyperbolic(rng, d, &mm);
  *stable_plus = *stable_minus = 0;
  for (double m : mp) *stable_plus += m < 1 ? 1 : 0;
  for (double m : mm) *stable_minus += m < 1 ? 1 : 0;
  std::vector<Matrix> middle;
  for (int i = 0; i < 7; ++i) middle.push_back(testing::well_conditioned(rng, d));
  return DiscreteVectorField(
      d,
      [=](const Parameter&, long n) -> Matrix {
        if (n < -3) return am;
        if (n > 3) return ap;
        return middle[static_cast<std::size_t>(n + 3)];
      },
      {-3, 3}, FieldKind::asymptotic);
}

// 6. Projector-rank index against the truncated-rank index.
Verdict index_consistency() {
  std::mt19937_64 rng(606);
  int agree = 0, oracle = 0;
  const int trials = 24;
  for (int trial = 0; trial < trials; ++trial) {
    int sp = 0, sm = 0;
    auto f = asymptotic_random(rng, 1 + trial % 4, &sp, &sm);
    try {
      auto r = fredholm_index(f, p0, {-40, 40}, 40);
      agree += r.index == r.truncated_index && r.consistent ? 1 : 0;
      oracle += r.index == sp - sm ? 1 : 0;
    } catch (const Error&) {
    }
  }
  return {agree == trials && oracle == trials,
          fmt("%.0f fields, formula = truncated index on %.0f, = limit-eigenvalue count on %.0f",
              trials, agree, oracle)};
}

// 7. Classes of realization fields.
Verdict realization_classes() {
  auto loop = ParameterLoop::circle(16);
  std::vector<std::string> bad;
  auto check = [&](const std::string& name, const SampledBundle& e, const SampledBundle& f,
                   int rank, int w1) {
    try {
      auto c = index_bundle_class(realization_field(e, f, 0.5, -2, 2), loop, 2, -2, 50);
      if (c.virtual_rank != rank || c.delta_w1 != w1) {
        bad.push_back(name + " gave (" + std::to_string(c.virtual_rank) + ", " +
                      std::to_string(c.delta_w1) + ")");
      }
    } catch (const Error& ex) {
      bad.push_back(name + ": " + ex.what());
    }
  };
  const auto mob = mobius_bundle(loop);
  check("(Mobius, line)", mob, trivial_bundle(loop, 2, 1), 0, 1);
  for (auto [k, m] : {std::pair{2, 1}, std::pair{1, 2}, std::pair{3, 0}, std::pair{0, 2},
                      std::pair{2, 2}}) {
    check("(trivial " + std::to_string(k) + ", trivial " + std::to_string(m) + ")",
          trivial_bundle(loop, 3, k), trivial_bundle(loop, 3, m), k - m, 0);
  }
  check("(Mobius + Mobius, trivial 2)", whitney_sum(mob, mob), trivial_bundle(loop, 4, 2), 0, 0);
  std::string detail = "7 realizations match (k - m, w1)";
  if (!bad.empty()) {
    detail = "mismatches:";
    for (const auto& b : bad) detail += " " + b + ";";
  }
  return {bad.empty(), detail};
}

// 8. Index and class under perturbations inside the certified margin.
Verdict perturbation_invariance() {
  auto loop = ParameterLoop::circle(16);
  auto base = realization_field(mobius_bundle(loop), trivial_bundle(loop, 2, 1), 0.5, -2, 2);
  auto b = stable_unstable_bundles(base, loop, 2, -2, 50);
  double gp = 1e300, gm = 1e300;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    gp = std::min(gp, (1 - b.plus[i].alpha) / (4 * b.plus[i].K * (1 + b.plus[i].projectors.sup_norm)));
    gm = std::min(gm, (1 - b.minus[i].alpha) / (4 * b.minus[i].K * (1 + b.minus[i].projectors.sup_norm)));
  }
  const auto base_class = index_bundle_class(b);
  std::vector<int> base_index;
  const std::size_t probes[] = {0, 4, 8, 12};
  for (std::size_t i : probes) base_index.push_back(fredholm_index(base, loop[i], {-30, 30}, 40).index);

  std::mt19937_64 rng(808);
  int kept = 0;
  std::string why;
  for (int trial = 0; trial < 20; ++trial) {
    Matrix d0(2, 2);
    for (int k = 0; k < 4; ++k) d0(k) = testing::uniform(rng, -1, 1);
    d0 *= std::min(gp, gm) * testing::uniform(rng, 0.2, 1.0) / d0.norm();
    const double phase = testing::uniform(rng, 0, 2 * std::numbers::pi);
    const double decay = testing::uniform(rng, 0.0, 0.3);
    auto pert = perturb_field(
        base,
        [d0, phase, decay](const Parameter& l, long n) -> Matrix {
          return std::cos(l.angle() + phase) * std::exp(-decay * std::abs(static_cast<double>(n))) * d0;
        },
        gp, gm, 2, -2, loop, 20);
    try {
      if (!pert.report.holds()) throw DomainError("perturbation not small");
      bool same = index_bundle_class(pert.field, loop, 2, -2, 50) == base_class;
      for (std::size_t k = 0; k < 4; ++k) {
        same &= fredholm_index(pert.field, loop[probes[k]], {-30, 30}, 40).index == base_index[k];
      }
      kept += same ? 1 : 0;
    } catch (const Error& e) {
      why = e.what();
    }
  }
  return {kept == 20, fmt("gamma = %.3e, %.0f of 20 perturbations keep the class (%.0f, ",
                          std::min(gp, gm), kept, base_class.virtual_rank) +
                          std::to_string(base_class.delta_w1) + ") and the index at 4 samples" +
                          (why.empty() ? "" : "; " + why)};
}

// 9. Nemitski derivative and remainder of the quadratic family.
Verdict nemitski() {
  auto quadratic = [](int d) {
    NonlinearField f;
    f.dimension = d;
    f.f = [](const Parameter&, long, const Vector& x) -> Vector { return 0.5 * x + x.cwiseProduct(x); };
    f.jacobian = [](const Parameter&, long, const Vector& x) -> Matrix {
      return (0.5 * Vector::Ones(x.size()) + 2 * x).asDiagonal();
    };
    return f;
  };
  auto g = quadratic(3);
  std::mt19937_64 rng(909);
  auto phi = FiniteWindowSequence::zeros({-10, 10}, 3);
  for (auto& v : phi.values)
    for (int i = 0; i < 3; ++i) v(i) = testing::uniform(rng, -0.5, 0.5);
  auto analytic = nemitski_derivative(g, p0, phi);
  auto fd = nemitski_derivative(g, p0, phi, true);
  double worst = 0;
  for (long n = -10; n <= 10; ++n) worst = std::max(worst, max_abs(analytic.at(n) - fd.at(n)));

  auto f1 = quadratic(1);
  auto base = FiniteWindowSequence::zeros({-10, 10}, 1);
  auto dir = FiniteWindowSequence::zeros({-10, 10}, 1);
  for (long n = -10; n <= 10; ++n) {
    base.at(n)(0) = 0.3 * std::pow(0.7, std::abs(n));
    dir.at(n)(0) = std::cos(0.7 * n);
  }
  auto probe = remainder_ratios(f1, p0, base, dir);
  return {worst <= 1e-6 && probe.remainder_slope >= 1.8,
          fmt("|FD - analytic| = %.2e, remainder log-log slope %.3f", worst, probe.remainder_slope)};
}

// 10. End-to-end certificate and localization for the Mobius system.
Verdict end_to_end() {
  const std::size_t n = 64;
  auto loop = ParameterLoop::circle(n);
  auto f = system2_mobius(loop);
  auto cert = certify_bifurcation(f, loop);
  auto loc = localize_bifurcations(f, loop);
  const double tol = 2 * (2 * std::numbers::pi / static_cast<double>(n));
  double best = std::numeric_limits<double>::infinity();
  double best_residual = 0;
  for (const auto& c : loc.candidates) {
    const double off = std::abs(c.lambda.angle() - std::numbers::pi);
    if (c.residual <= 1e-9 && off < best) {
      best = off;
      best_residual = c.residual;
    }
  }
  const bool certified = cert.verdict == CertificateVerdict::bifurcation_certified &&
                         cert.lambda0_index == 0;
  const bool located = best <= tol;
  return {certified && located,
          std::string("verdict ") + to_string(cert.verdict) + " with lambda0 = sample " +
              std::to_string(cert.lambda0_index) +
              fmt("; nearest candidate |theta - pi| = %.2e (tolerance %.2e), residual %.1e", best,
                  tol, best_residual)};
}

// 11. Reports of every builtin scenario and command at 1 and 8 workers.
Verdict determinism() {
  int compared = 0;
  std::vector<std::string> diffs;
  for (const auto& name : cli::builtin_scenario_names()) {
    const auto raw = cli::builtin_scenario(name);
    for (auto c : {cli::Command::spectrum, cli::Command::projectors, cli::Command::index,
                   cli::Command::klass, cli::Command::certify, cli::Command::solve,
                   cli::Command::realize}) {
      set_worker_count(1);
      const auto one = cli::dump(cli::execute(c, raw).report);
      set_worker_count(8);
      const auto eight = cli::dump(cli::execute(c, raw).report);
      ++compared;
      if (one != eight) diffs.push_back(name + "/" + cli::to_string(c));
    }
  }
  set_worker_count(1);
  std::string detail = std::to_string(compared) + " reports byte-identical at 1 and 8 workers";
  if (!diffs.empty()) {
    detail = "differences:";
    for (const auto& d : diffs) detail += " " + d;
  }
  return {diffs.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"spectral-projector agreement", projector_agreement},
      {"autonomous dichotomy spectrum", autonomous_spectrum},
      {"ED certification of diag(0.5, 2)", ed_certificate},
      {"shift-operator projector", shift_projector},
      {"Green solver", green_solver},
      {"index two-way consistency", index_consistency},
      {"index-bundle realization", realization_classes},
      {"perturbation invariance", perturbation_invariance},
      {"Nemitski derivative", nemitski},
      {"end-to-end certification", end_to_end},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += v.pass ? 0 : 1;
    std::printf("%s %2zu %s: %s (%.1fs)\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
