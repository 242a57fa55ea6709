#pragma once

#include "hombif/dichotomy.hpp"

#include <functional>
#include <string>
#include <vector>

namespace hombif {

/// Values phi(n) in R^d on a finite window, with decay flags for the 10%
/// outermost times at each end.
struct FiniteWindowSequence {
  TimeWindow window;
  int dimension = 0;
  std::vector<Vector> values;
  bool decays_low = false;
  bool decays_high = false;

  static FiniteWindowSequence zeros(TimeWindow window, int dimension);

  Vector& at(long n);
  const Vector& at(long n) const;
  double sup_norm() const;
  /// Recomputes the decay flags: |phi(n)| < tol on the outer tenth.
  void update_decay(double tol = 1e-6);
};

struct TruncatedOperator {
  TimeWindow window;
  int dimension = 0;
  /// (W-1)d x Wd, block row i is [.. -A_{n_i} | I ..] at block columns i, i+1.
  Matrix matrix;
  std::string boundary = "none";
};

TruncatedOperator assemble_truncated(const DiscreteVectorField& field,
                                     const Parameter& lambda, TimeWindow window);

/// (L phi)(n) = phi(n+1) - A_n phi(n) for n in [first, last - 1].
FiniteWindowSequence apply_difference(const DiscreteVectorField& field,
                                      const Parameter& lambda,
                                      const FiniteWindowSequence& phi);

/// The truncated operator with rows forcing phi(first) into ker P-(first)
/// and phi(last) into im P+(last). Throws DomainError when the families do
/// not cover the window.
TruncatedOperator assemble_bordered(const DiscreteVectorField& field,
                                    const Parameter& lambda, TimeWindow window,
                                    const ProjectorFamily& plus,
                                    const ProjectorFamily& minus);

struct IndexReport {
  int index = 0;
  int dim_ker = 0;
  int dim_coker = 0;
  int rank_plus = 0;   // rank im P+(kappa_plus)
  int rank_minus = 0;  // rank im P-(kappa_minus)
  long kappa_minus = 0;
  long kappa_plus = 0;
  int ker_by_intersection = -1;  // forward/backward decaying subspaces at 0
  int ker_by_truncation = -1;    // null space with half-line boundary rows
  int truncated_index = 0;       // columns minus rows of the bordered matrix
  bool consistent = false;
  double smallest_angle = 0.0;   // between the two subspaces at time 0
  std::vector<FiniteWindowSequence> kernel_basis;
  std::string note;
};

/// Kernel and cokernel of L = S_l - A on a window containing
/// [kappa_minus, kappa_plus], given certified half-line witnesses anchored
/// there. dim coker is dim ker minus the projector-rank index.
IndexReport kernel_cokernel(const DiscreteVectorField& field,
                            const Parameter& lambda, TimeWindow window,
                            const EDWitness& plus, const EDWitness& minus);

/// Builds both witnesses with the default anchors and runs kernel_cokernel.
IndexReport fredholm_index(const DiscreteVectorField& field,
                           const Parameter& lambda, TimeWindow window = {-100, 100},
                           long horizon = 100, const DichotomyOptions& opt = {});

/// G(n, m) = Phi(n, m) P(m) for m <= n and -Phi(n, m)(I - P(m)) for n < m,
/// where Phi(n, m) for n < m inverts the field on the kernels.
class GreenKernel {
 public:
  GreenKernel(const DiscreteVectorField& field, const Parameter& lambda,
              const ProjectorFamily& pf);
  Side side() const { return family_.side; }
  const ProjectorFamily& family() const { return family_; }
  Matrix operator()(long n, long m) const;
  /// P(j+1) A_j P(j), one step forward along the images.
  const Matrix& forward_step(long j) const { return forward_[static_cast<std::size_t>(j - family_.window.first)]; }
  /// C_j (A_j C_j)^+ (I - P(j+1)), one step back along the kernels.
  const Matrix& backward_step(long j) const { return backward_[static_cast<std::size_t>(j - family_.window.first)]; }

 private:
  ProjectorFamily family_;
  std::vector<Matrix> forward_;   // P(j+1) A_j P(j)
  std::vector<Matrix> backward_;  // kernel inverse of A_j
};

struct GreenSolution {
  FiniteWindowSequence phi;
  double tail_bound = 0.0;  // mass leaving the window, from (K, alpha)
  double residual = 0.0;    // |L phi - psi| on the half-window interior
};

inline constexpr double default_solve_tol = 1e-8;

/// phi = M psi by the Green sums on the witness window: plus side over
/// n >= kappa with phi(n) = sum_{k >= kappa} G(n, k+1) psi(k), minus side
/// over n <= kappa with the sum over k <= kappa - 1. Throws DomainError
/// naming the required extension when the tail bound exceeds solve_tol.
GreenSolution green_solve(const DiscreteVectorField& field,
                          const Parameter& lambda, Side side, long kappa,
                          const FiniteWindowSequence& psi, const EDWitness& w,
                          double solve_tol = default_solve_tol);

using KernelFunction = std::function<Matrix(long n, long k)>;

struct Convolution {
  FiniteWindowSequence result;
  double row_sum_bound = 0.0;  // c0 = max_n sum_k |f(n, k)|_inf
};

/// (f * phi)(n) = sum_k f(n, k) phi(k) over the window of phi, with the
/// bound |f * phi|_inf <= c0 |phi|_inf checked.
Convolution kernel_convolve(const KernelFunction& f, const FiniteWindowSequence& phi);

}  // namespace hombif
