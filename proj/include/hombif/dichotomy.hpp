#pragma once

#include "hombif/field.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hombif {

enum class Side { plus, minus, full };
const char* to_string(Side s);

struct DichotomyOptions {
  double gap_ratio = 1e3;   // rates must clear +-log(gap_ratio)/(2N)
  double sigma_reg = 1e-6;  // smallest singular value of A_n on ker P(n)
  double tau_inv = 1e-7;    // |A_n P(n) - P(n+1) A_n|
  std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
};

/// Splitting at an anchor. `stable` and `unstable` are orthonormal frames;
/// the projector at the anchor maps onto `stable` along `unstable`.
/// On the plus side `stable` is the forward-decaying subspace and
/// `unstable` its orthogonal complement. On the minus side `unstable` is the
/// backward-decaying subspace and `stable` its orthogonal complement.
struct Splitting {
  Side side = Side::plus;
  long anchor = 0;
  long horizon = 0;
  Matrix stable;
  Matrix unstable;
  Vector rates;  // per-step log growth rates, ascending
  bool detected = false;
  std::string reason;  // why detection failed, empty otherwise

  int rank() const { return static_cast<int>(stable.cols()); }
  Matrix projector() const;
};

/// Rates come from QR iteration over 2N steps (plus: on transposes, from
/// kappa + 2N down to kappa; minus: forward from kappa - 2N). The N steps
/// farther from the anchor only settle the frame; the rates average the N
/// steps next to the anchor. A splitting is detected when every rate lies
/// outside (-delta, delta), delta = log(gap_ratio) / (2N).
Splitting estimate_splitting(const DiscreteVectorField& field,
                             const Parameter& lambda, Side side, long anchor,
                             long horizon, const DichotomyOptions& opt = {});

struct ProjectorFamily {
  Side side = Side::plus;
  long anchor = 0;
  TimeWindow window;
  std::vector<Matrix> matrices;  // P(n) for n in window
  int rank = 0;
  /// Which half of the projector is canonical and how the other is fixed.
  std::string complement_choice;

  double idempotency_residual = 0.0;
  double invariance_residual = 0.0;
  long worst_invariance_time = 0;
  double min_regularity = 0.0;  // min_n sigma_min(A_n on ker P(n))
  double sup_norm = 0.0;        // max_n |P(n)|_2

  const Matrix& at(long n) const;
  /// Orthonormal bases of im P(n) and ker P(n).
  Matrix image_frame(long n) const;
  Matrix kernel_frame(long n) const;
};

/// Invariant projectors on [kappa, kappa + N] (plus), [kappa - N, kappa]
/// (minus) or [kappa - N, kappa + N] (full). The canonical half is
/// re-estimated at every time by the QR sweep: the image on the plus side,
/// the kernel on the minus side, both on the full line. The free half starts
/// as the orthogonal complement at the anchor and is carried along by the
/// field (forward images on the plus side, preimages on the minus side).
/// Throws CertificationError if no splitting is detected, if invariance
/// exceeds tau_inv (naming the worst time) or if A_n is not regular on the
/// kernel ("irregular splitting").
ProjectorFamily build_projector_family(const DiscreteVectorField& field,
                                       const Parameter& lambda, Side side,
                                       long anchor, long horizon,
                                       const DichotomyOptions& opt = {});

struct EDWitness {
  ProjectorFamily projectors;
  double K = 1.0;
  double alpha = 0.0;
  long checked_pairs = 0;
  long inverse_checked_pairs = 0;
  /// Largest |log| excess of true propagator growth over the fitted bound,
  /// negative when the bound holds with room to spare.
  double worst_excess = 0.0;
  TimeWindow interval;
};

/// Fits (K, alpha) to the growth of the image and kernel under projected
/// propagation over all pairs k >= n in the family window (slope by least
/// squares, K as the smallest constant covering every pair), then checks
/// both inequalities with 5% slack against true propagator products and the
/// least-norm preimage form on im P for pairs up to 20 steps apart.
/// `horizon` limits k - n (0 means the whole window).
EDWitness verify_ed(const DiscreteVectorField& field, const Parameter& lambda,
                    const ProjectorFamily& pf, long horizon = 0);

// --- dichotomy spectrum ----------------------------------------------------

enum class EDVerdict { dichotomy, no_dichotomy, indeterminate };
const char* to_string(EDVerdict v);

struct GammaVerdict {
  double gamma = 1.0;
  EDVerdict verdict = EDVerdict::indeterminate;
  int stable_rank_plus = -1;
  int stable_rank_minus = -1;
  /// sigma_min of [stable(+) | unstable(-)] at time 0, when ranks match.
  double transversality = 0.0;
  std::string reason;
};

struct SpectralInterval {
  double lower = 0.0;
  double upper = 0.0;
  bool indeterminate = false;  // contains a verdict that could not be decided
};

struct SpectrumOptions {
  double gamma_min = 0.05;
  double gamma_max = 20.0;
  int grid_size = 64;
  long horizon = 100;
  double relative_precision = 1e-3;
};

struct SpectrumResult {
  std::vector<SpectralInterval> intervals;
  std::vector<double> grid;
  std::vector<GammaVerdict> verdicts;  // one per grid point
  long evaluations = 0;
};

/// Precomputed full-line data for one parameter: tail growth rates on both
/// half-lines and the QR frames at time 0. Scaling the field by 1/gamma only
/// shifts every rate by -log(gamma), so one sweep per side serves all gamma.
class LineDichotomy {
 public:
  /// Tails start at kappa_plus (>= 1) and kappa_minus (<= -1); by default
  /// the field window widened to contain 0 on both sides.
  LineDichotomy(const DiscreteVectorField& field, const Parameter& lambda,
                long horizon, const DichotomyOptions& opt = {});
  LineDichotomy(const DiscreteVectorField& field, const Parameter& lambda,
                long kappa_minus, long kappa_plus, long horizon,
                const DichotomyOptions& opt = {});

  GammaVerdict at(double gamma) const;

  struct RateGroup {
    double rate = 0.0;         // mean log growth per step
    double uncertainty = 0.0;  // drift between quarters of the tail
    int size = 0;
  };
  const std::vector<RateGroup>& plus_groups() const { return plus_; }
  const std::vector<RateGroup>& minus_groups() const { return minus_; }

 private:
  std::vector<RateGroup> plus_, minus_;
  Matrix plus_frame_;   // columns by descending rate; trailing k = stable
  Matrix minus_frame_;  // columns by descending rate; leading j = unstable
  double floor_ = 1e-6;
  double sigma_min_ = 1e-6;
};

/// Sigma of the field at lambda over [gamma_min, gamma_max]: failing grid
/// runs become intervals with bisected endpoints; passing neighbours whose
/// stable ranks differ are bisected down to a degenerate interval.
SpectrumResult dichotomy_spectrum(const DiscreteVectorField& field,
                                  const Parameter& lambda,
                                  const SpectrumOptions& so = {},
                                  const DichotomyOptions& opt = {});

/// Whole-line dichotomy of the unscaled field at lambda.
GammaVerdict full_line_verdict(const DiscreteVectorField& field,
                               const Parameter& lambda, long horizon = 100,
                               const DichotomyOptions& opt = {});

/// Projectors read off the contour projector of the periodically closed
/// weighted shift on the window [-N/2, N/2 - 1]. The N/8 times next to each
/// end are dropped. Throws IndeterminateError if the closed shift is not
/// hyperbolic.
ProjectorFamily shift_operator_projector(const DiscreteVectorField& field,
                                         const Parameter& lambda,
                                         long truncation, int nodes = 64);

}  // namespace hombif
