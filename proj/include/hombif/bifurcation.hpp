#pragma once

#include "hombif/bundle.hpp"
#include "hombif/fredholm.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hombif {

using NonlinearEvaluator = std::function<Vector(const Parameter&, long, const Vector&)>;
using JacobianEvaluator = std::function<Matrix(const Parameter&, long, const Vector&)>;

inline constexpr double default_fd_step = 1e-5;

/// phi(n+1) = f_n(lambda, phi(n)) with f_n(lambda, 0) = 0.
struct NonlinearField {
  int dimension = 0;
  NonlinearEvaluator f;
  JacobianEvaluator jacobian;  // optional analytic D_2 f
  TimeWindow window{0, 0};     // outside it the field is settled
  double r0 = 1.0;             // radius of the controlled ball
  std::string name;

  /// Evaluates with shape and finiteness checks; evaluator failures become
  /// InputError naming (lambda, n).
  Vector operator()(const Parameter& lambda, long n, const Vector& x) const;
  /// Analytic D_2 f when available (and not overridden), otherwise central
  /// differences with relative step h.
  Matrix derivative(const Parameter& lambda, long n, const Vector& x,
                    bool finite_difference = false, double h = default_fd_step) const;
  Matrix finite_difference(const Parameter& lambda, long n, const Vector& x,
                           double h = default_fd_step) const;
};

FiniteWindowSequence nemitski_apply(const NonlinearField& f, const Parameter& lambda,
                                    const FiniteWindowSequence& phi);

/// Block-diagonal operator psi -> (D_2 f_n(lambda, phi(n)) psi(n))_n.
struct NemitskiDerivative {
  TimeWindow window;
  std::vector<Matrix> blocks;

  const Matrix& at(long n) const;
  FiniteWindowSequence apply(const FiniteWindowSequence& h) const;
};

NemitskiDerivative nemitski_derivative(const NonlinearField& f, const Parameter& lambda,
                                       const FiniteWindowSequence& phi,
                                       bool finite_difference = false,
                                       double h = default_fd_step);

/// r(h) = N(phi + h) - N(phi) - DN(phi) h along a probe direction scaled to
/// sup norms `scales`.
struct RemainderProbe {
  std::vector<double> scales;
  std::vector<double> remainders;  // |r(h)|_inf
  std::vector<double> ratios;      // |r(h)|_inf / |h|_inf
  double remainder_slope = 0.0;    // least squares in log-log
  bool ratios_decrease = false;
};

RemainderProbe remainder_ratios(const NonlinearField& f, const Parameter& lambda,
                                const FiniteWindowSequence& phi,
                                const FiniteWindowSequence& direction,
                                std::vector<double> scales = {1e-2, 1e-3, 1e-4});

/// Field with A_n(lambda) = D_2 f_n(lambda, 0).
DiscreteVectorField linearize_at_zero(const NonlinearField& f);

/// (A + D)(lambda, n) x + R(lambda, n, x).
struct PerturbedSystemSpec {
  DiscreteVectorField a;
  std::optional<DiscreteVectorField> d;
  NonlinearEvaluator residual;
  JacobianEvaluator residual_jacobian;  // optional
  double r0 = 1.0;
  std::string name;
};

struct ResidualReport {
  double worst_at_zero = 0.0;            // max |R(lambda, n, 0)|
  double derivative_at_edges = 0.0;      // max |D_2 R(lambda, n, 0)| far out
  double derivative_nearer = 0.0;        // same at half the distance
  bool vanishes_at_zero = false;
  bool derivative_decays = false;
};

/// Builds the nonlinear field of a perturbed system and checks the two side
/// conditions on R over the loop samples and [first - reach, last + reach].
NonlinearField make_perturbed_system(const PerturbedSystemSpec& spec,
                                     const ParameterLoop& loop, ResidualReport* report,
                                     long reach = 60);

struct F3Check {
  bool passed = false;
  bool indeterminate = false;
  GammaVerdict verdict;
  std::string reason;
};

/// Whole-line dichotomy of the linear field at lambda0 with matching ranks
/// and transversal stable/unstable spaces. Indeterminate verdicts never pass.
F3Check check_F3(const DiscreteVectorField& field, const Parameter& lambda0,
                 long horizon = 100, const DichotomyOptions& opt = {});

enum class CertificateVerdict { bifurcation_certified, obstruction_vanishes, hypotheses_failed };
const char* to_string(CertificateVerdict v);

struct HypothesisCheck {
  std::string name;  // F0 .. F3
  bool passed = false;
  std::string evidence;
};

struct CertifyOptions {
  std::optional<long> kappa_plus;   // default max(1, window.last)
  std::optional<long> kappa_minus;  // default min(-1, window.first)
  long horizon = 100;
  long sample_reach = 20;           // times beyond the window sampled for F0/F1
  /// Dimension k of a manifold the loop is embedded in; echoes the covering
  /// dimension statement when given.
  std::optional<int> manifold_dimension;
  DichotomyOptions dichotomy;
};

struct LocalizedSolution {
  Parameter lambda;          // off-grid when the field allows it
  std::size_t seed_sample = 0;
  double seed_scale = 0.0;
  FiniteWindowSequence phi;
  double residual = 0.0;     // max |phi(n+1) - f_n(lambda, phi(n))|
  double amplitude = 0.0;    // |phi|_inf
  int cluster = -1;
};

struct BifurcationCertificate {
  std::vector<HypothesisCheck> hypotheses;
  long kappa_minus = 0;
  long kappa_plus = 0;
  std::optional<Parameter> lambda0;
  long lambda0_index = -1;
  double lambda0_condition = 0.0;  // of the bordered truncation at lambda0
  int rank_plus = -1;
  int rank_minus = -1;
  KOClassDesk index_class;
  CertificateVerdict verdict = CertificateVerdict::hypotheses_failed;
  std::string failed_item;
  std::vector<std::string> notes;
  std::vector<LocalizedSolution> candidates;
};

BifurcationCertificate certify_bifurcation(const NonlinearField& f, const ParameterLoop& loop,
                                           const CertifyOptions& options = {});

struct LocalizeOptions {
  int refinements = 1;            // loop doublings before seeding
  TimeWindow window{-40, 40};
  long horizon = 40;
  int max_iterations = 50;
  double tolerance = 1e-11;       // Newton stop
  double accept_residual = 1e-9;
  double decay_tol = 1e-6;
  /// Seed where sigma_min/sigma_max of the bordered linear truncation is
  /// below this fraction of its largest value over the loop.
  double seed_ratio = 0.1;
  std::vector<double> seed_scales{1e-3, 1e-2, 1e-1};
  double lambda_step = 1e-7;      // parameter difference quotient
  std::uint64_t seed = 0x5eed;
  DichotomyOptions dichotomy;
};

struct LocalizeResult {
  std::vector<LocalizedSolution> candidates;  // sorted by angle, clustered
  std::size_t grid_size = 0;
  std::size_t seeded_samples = 0;
  std::vector<std::string> dropped;           // why seeds were abandoned
};

/// Heuristic search for small homoclinic solutions near the trivial branch.
/// Each refined sample whose bordered linear truncation is nearly singular
/// seeds Newton from its smallest singular vector at several amplitudes; on
/// angular loops the angle is an extra unknown and an amplitude constraint
/// closes the system. Failed solves are dropped.
LocalizeResult localize_bifurcations(const NonlinearField& f, const ParameterLoop& loop,
                                     const LocalizeOptions& options = {});

/// Candidate clusters: consecutive candidates closer than `gap` in angle
/// share a cluster id. Candidates are sorted by angle.
int cluster_candidates(std::vector<LocalizedSolution>& candidates, double gap);

/// Realization of (Mobius, span e1) with q = 0.5 and kappa = -2, 2, no
/// perturbation, R = e^{-|n|} (x1^2, x1 x2), r0 = 0.5.
NonlinearField system2_mobius(const ParameterLoop& loop);

}  // namespace hombif
