#pragma once

#include "hombif/core.hpp"

#include <functional>
#include <optional>
#include <string>

namespace hombif {

enum class FieldKind { autonomous, asymptotic, tabulated, constructed, linearized };

const char* to_string(FieldKind k);

/// (parameter, time) -> d x d coefficient matrix. Must be pure and reentrant.
using MatrixEvaluator = std::function<Matrix(const Parameter&, long)>;

/// Parametrized linear discrete vector field phi(n+1) = A_n(lambda) phi(n).
/// Outside `window()` the field is declared asymptotically settled.
class DiscreteVectorField {
 public:
  DiscreteVectorField(int dimension, MatrixEvaluator evaluator,
                      TimeWindow window, FieldKind kind);

  int dimension() const { return dimension_; }
  const TimeWindow& window() const { return window_; }
  FieldKind kind() const { return kind_; }

  /// Evaluates and checks shape and finiteness.
  Matrix operator()(const Parameter& lambda, long n) const;

  /// Sup of the sampled operator 2-norms; nullopt until computed.
  std::optional<double> bound() const { return bound_; }
  /// Samples the loop over the window widened by `margin` on each side and
  /// records the largest operator norm seen.
  double compute_bound(const ParameterLoop& loop, long margin = 2);

  /// c * A (the field gamma^{-1} A uses c = 1/gamma).
  DiscreteVectorField scaled(double c) const;
  /// A + D with the same window, kind tag `constructed`.
  DiscreteVectorField plus(MatrixEvaluator perturbation) const;

  const MatrixEvaluator& evaluator() const { return evaluator_; }

 private:
  int dimension_;
  MatrixEvaluator evaluator_;
  TimeWindow window_;
  FieldKind kind_;
  std::optional<double> bound_;
};

/// Field independent of n.
DiscreteVectorField autonomous_field(const Matrix& a);
/// Field equal to `before` for n < switch_time and `after` from then on.
DiscreteVectorField switched_field(const Matrix& before, const Matrix& after,
                                   long switch_time = 0);
/// Dense table indexed by (loop sample, time) over `window`; times outside the
/// window read the nearest edge. Off-grid parameters are rejected.
DiscreteVectorField tabulated_field(int dimension, TimeWindow window,
                                    std::vector<std::vector<Matrix>> table);

/// Phi(k, n) = A_{k-1} ... A_n for k >= n; Phi(n, n) = I.
Matrix propagator(const DiscreteVectorField& field, const Parameter& lambda,
                  long k, long n);

inline constexpr long max_propagator_steps = 10000;
inline constexpr double propagator_overflow = 1e150;

/// Orthonormal frames of a k-dimensional subbundle of the trivial bundle
/// R^d over a sampled loop.
struct SampledBundle {
  ParameterLoop base;
  int ambient = 0;
  int rank = 0;
  std::vector<Matrix> frames;  // one d x rank matrix per sample
  /// Continuous frame for off-grid parameters, when the family has one.
  std::function<Matrix(const Parameter&)> continuous;
  std::string name;

  /// Frame at a sample index, or through `continuous` for off-grid points.
  Matrix frame_at(const Parameter& lambda) const;
  /// Orthogonal projector onto the fibre.
  Matrix projector_at(const Parameter& lambda) const;
  /// Orthonormality to 1e-10 and consecutive principal angles below pi/3.
  void validate() const;
  /// Largest principal angle between consecutive fibres (wrap included).
  double max_consecutive_angle() const;
};

/// Largest principal angle between the spans of two orthonormal frames.
double max_principal_angle(const Matrix& a, const Matrix& b);

/// Half-angle frame (cos theta/2, sin theta/2) in R^2 over an angular loop.
SampledBundle mobius_bundle(const ParameterLoop& loop);
/// Constant span(e_1, ..., e_k) in R^d.
SampledBundle trivial_bundle(const ParameterLoop& loop, int ambient, int rank);
/// E (+) F inside R^{d_E + d_F}.
SampledBundle whitney_sum(const SampledBundle& e, const SampledBundle& f);

/// H_E(lambda) = q Pi_E + (1/q)(I - Pi_E); stable space E, unstable E^perp.
DiscreteVectorField construct_hyperbolic_family(const SampledBundle& e,
                                                double q);

struct HyperbolicFamilyReport {
  double max_eigen_residual = 0.0;  // |H v - q v|, |H w - w/q|
  double continuity_constant = 0.0; // max |H_i - H_{i+1}| / angle_i
};
HyperbolicFamilyReport check_hyperbolic_family(const SampledBundle& e, double q);

/// Middle-section evaluator for the realization field; identity by default.
using MiddleSection = std::function<Matrix(const Parameter&, long)>;

/// H_F before kappa_minus, T on [kappa_minus, kappa_plus], H_E after
/// kappa_plus. T is checked invertible on all loop samples.
DiscreteVectorField realization_field(const SampledBundle& e,
                                      const SampledBundle& f, double q,
                                      long kappa_minus, long kappa_plus,
                                      MiddleSection middle = {});

struct SmallnessReport {
  bool holds_plus = true;
  bool holds_minus = true;
  double worst_plus = 0.0;   // max sampled |D| for n >= kappa_plus
  double worst_minus = 0.0;  // max sampled |D| for n <= kappa_minus
  std::optional<long> first_violation_plus;
  std::optional<long> first_violation_minus;
  /// Equicontinuity cannot be checked from samples; always recorded.
  std::string note;
  bool holds() const { return holds_plus && holds_minus; }
};

struct PerturbedField {
  DiscreteVectorField field;
  SmallnessReport report;
};

/// base + D with an advisory check that |D(lambda, n)| <= gamma_plus for
/// n >= kappa_plus and <= gamma_minus for n <= kappa_minus, sampled over the
/// loop and [kappa_minus - reach, kappa_plus + reach].
PerturbedField perturb_field(const DiscreteVectorField& base,
                             MatrixEvaluator perturbation, double gamma_plus,
                             double gamma_minus, long kappa_plus,
                             long kappa_minus, const ParameterLoop& loop,
                             long reach = 100);

}  // namespace hombif
