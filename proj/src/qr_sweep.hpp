#pragma once

// QR iteration along a discrete vector field. Shared by the half-line
// splitting code and the spectrum scan.

#include "hombif/field.hpp"

#include <cstdint>
#include <vector>

namespace hombif::detail {

/// Orthogonal d x d matrix from a fixed seed.
Matrix random_orthogonal(int d, std::uint64_t seed);

/// Orthonormal frames at every time of [lo, hi] and the local growth rates
/// log|R_ii| of every step n in [lo, hi - 1].
struct Sweep {
  long lo = 0;
  long hi = 0;
  std::vector<Matrix> frames;
  std::vector<Vector> log_r;

  const Matrix& frame(long t) const { return frames[static_cast<std::size_t>(t - lo)]; }
  const Vector& step(long n) const { return log_r[static_cast<std::size_t>(n - lo)]; }
  /// Mean of log_r over steps [a, b).
  Vector mean_rate(long a, long b) const;
};

/// frame(n + 1) = qr(A_n frame(n)), starting from `start` at lo.
Sweep forward_sweep(const DiscreteVectorField& field, const Parameter& lambda,
                    long lo, long hi, const Matrix& start);
/// frame(n) = qr(A_n^T frame(n + 1)), starting from `start` at hi.
Sweep backward_sweep(const DiscreteVectorField& field, const Parameter& lambda,
                     long lo, long hi, const Matrix& start);

/// Number of leading rates >= delta when every rate clears +-delta and the
/// rates are ordered; -1 otherwise with `reason` filled.
int count_expanding(const Vector& rates_desc, double delta, std::string& reason);

}  // namespace hombif::detail
