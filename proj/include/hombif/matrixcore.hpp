#pragma once

#include "hombif/core.hpp"

namespace hombif {

enum class Hyperbolicity { hyperbolic, not_hyperbolic, indeterminate };

const char* to_string(Hyperbolicity h);

struct HyperbolicityResult {
  Hyperbolicity verdict = Hyperbolicity::indeterminate;
  /// min over eigenvalues of | |z| - 1 |
  double gap = 0.0;
};

/// Spectral splitting of a hyperbolic matrix along the unit circle.
struct SpectralSplit {
  Matrix stable_projector;
  Matrix unstable_projector;
  int stable_rank = 0;
  double gap = 0.0;
  /// Largest imaginary entry discarded when forming the real projector.
  double imag_residue = 0.0;
  /// Quadrature nodes actually used (0 for the eigendecomposition route).
  int nodes = 0;
};

namespace tolerance {
inline constexpr double projector = 1e-8;      // idempotency / commutation
inline constexpr double imaginary = 1e-9;      // discarded imaginary part
inline constexpr double hyperbolic_margin = 1e-8;
inline constexpr double quadrature = 1e-10;    // successive node doublings
inline constexpr int max_nodes = 1024;
}  // namespace tolerance

/// Classifies `m` by the distance of its eigenvalue moduli to 1. Moduli
/// within rounding of the circle are `not_hyperbolic`; moduli closer than
/// `margin` but resolvably off the circle are `indeterminate`.
HyperbolicityResult is_hyperbolic(const Matrix& m,
                                  double margin = tolerance::hyperbolic_margin);

/// Riesz projector onto the eigenspaces inside the unit circle, by the
/// trapezoid rule for (1/2 pi i) \oint (zI - m)^{-1} dz on the unit circle.
/// Starts at `nodes` (>= 16) and doubles up to 1024 until two successive
/// approximations agree to 1e-10.
SpectralSplit spectral_projector_contour(const Matrix& m, int nodes = 64);

/// Same projector assembled from a full eigendecomposition. Used as an
/// independent oracle for the contour route.
SpectralSplit spectral_projector_eigen(const Matrix& m);

/// Trace of a projector rounded to an integer; throws NumericError when the
/// rounding residual is 0.01 or more.
int rank_from_trace(const Matrix& p);

}  // namespace hombif
