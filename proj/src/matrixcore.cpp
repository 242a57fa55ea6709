#include "hombif/matrixcore.hpp"

#include "hombif/errors.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <sstream>

namespace hombif {

const char* to_string(Hyperbolicity h) {
  switch (h) {
    case Hyperbolicity::hyperbolic: return "hyperbolic";
    case Hyperbolicity::not_hyperbolic: return "not_hyperbolic";
    case Hyperbolicity::indeterminate: return "indeterminate";
  }
  return "unknown";
}

namespace {

void require_square(const Matrix& m) {
  if (m.rows() == 0 || m.rows() != m.cols()) {
    throw InputError("expected a non-empty square matrix");
  }
  require_finite(m, "matrix");
}

Eigen::VectorXcd eigenvalues(const Matrix& m) {
  Eigen::EigenSolver<Matrix> es(m, false);
  if (es.info() != Eigen::Success) {
    throw NumericError("eigenvalue iteration did not converge");
  }
  return es.eigenvalues();
}

void require_hyperbolic(const Matrix& m, double& gap) {
  const auto h = is_hyperbolic(m);
  gap = h.gap;
  if (h.verdict != Hyperbolicity::hyperbolic) {
    std::ostringstream os;
    os << "matrix is " << to_string(h.verdict) << " (gap " << h.gap << ")";
    throw DomainError(os.str());
  }
}

SpectralSplit finish(Matrix ps, double gap, double imag, int nodes) {
  SpectralSplit s;
  const auto d = ps.rows();
  s.unstable_projector = Matrix::Identity(d, d) - ps;
  s.stable_projector = std::move(ps);
  s.stable_rank = rank_from_trace(s.stable_projector);
  s.gap = gap;
  s.imag_residue = imag;
  s.nodes = nodes;
  return s;
}

// Sum of z_j (z_j I - m)^{-1} over the nodes j = offset, offset+stride, ...
// of an n-point equispaced grid on the unit circle.
CMatrix resolvent_sum(const CMatrix& mc, int n, int offset, int stride) {
  const auto d = mc.rows();
  CMatrix acc = CMatrix::Zero(d, d);
  const CMatrix id = CMatrix::Identity(d, d);
  for (int j = offset; j < n; j += stride) {
    const double t = 2.0 * std::numbers::pi * j / n;
    const std::complex<double> z(std::cos(t), std::sin(t));
    Eigen::PartialPivLU<CMatrix> lu(z * id - mc);
    const double piv = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (!(piv > 1e-14 * (1.0 + mc.cwiseAbs().maxCoeff()))) {
      std::ostringstream os;
      os << "resolvent solve failed at quadrature node " << j << " of " << n;
      throw NumericError(os.str());
    }
    acc += z * lu.solve(id);
  }
  return acc;
}

}  // namespace

HyperbolicityResult is_hyperbolic(const Matrix& m, double margin) {
  require_square(m);
  if (!(margin > 0)) throw InputError("hyperbolicity margin must be positive");
  const auto ev = eigenvalues(m);
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    gap = std::min(gap, std::abs(std::abs(ev(i)) - 1.0));
  }
  // Moduli this close to 1 are indistinguishable from 1 in double precision.
  const double rounding = 64.0 * std::numeric_limits<double>::epsilon() *
                          std::max(1.0, m.norm());
  HyperbolicityResult r;
  r.gap = gap;
  if (gap <= rounding) r.verdict = Hyperbolicity::not_hyperbolic;
  else if (gap < margin) r.verdict = Hyperbolicity::indeterminate;
  else r.verdict = Hyperbolicity::hyperbolic;
  return r;
}

SpectralSplit spectral_projector_contour(const Matrix& m, int nodes) {
  require_square(m);
  if (nodes < 16) throw InputError("contour quadrature needs at least 16 nodes");
  double gap = 0;
  require_hyperbolic(m, gap);
  const CMatrix mc = m.cast<std::complex<double>>();

  int n = nodes;
  CMatrix sum = resolvent_sum(mc, n, 0, 1);
  CMatrix prev = sum / static_cast<double>(n);
  double diff = 0.0;
  while (2 * n <= tolerance::max_nodes) {
    // Nested grids: the doubled rule reuses the current nodes.
    sum += resolvent_sum(mc, 2 * n, 1, 2);
    n *= 2;
    CMatrix next = sum / static_cast<double>(n);
    diff = (next - prev).cwiseAbs().maxCoeff();
    prev = std::move(next);
    if (diff < tolerance::quadrature) break;
  }
  if (diff >= tolerance::quadrature) {
    std::ostringstream os;
    os << "contour quadrature unsettled at " << n << " nodes (change " << diff
       << ", gap " << gap << ")";
    throw NumericError(os.str());
  }
  const double imag = prev.imag().cwiseAbs().maxCoeff();
  if (imag > tolerance::imaginary) {
    std::ostringstream os;
    os << "contour projector has imaginary residue " << imag;
    throw NumericError(os.str());
  }
  return finish(prev.real(), gap, imag, n);
}

SpectralSplit spectral_projector_eigen(const Matrix& m) {
  require_square(m);
  double gap = 0;
  require_hyperbolic(m, gap);
  Eigen::EigenSolver<Matrix> es(m, true);
  if (es.info() != Eigen::Success) {
    throw NumericError("eigendecomposition did not converge");
  }
  const CMatrix v = es.eigenvectors();
  const auto ev = es.eigenvalues();
  Eigen::JacobiSVD<CMatrix> svd(v);
  const auto sv = svd.singularValues();
  const double cond = sv(sv.size() - 1) > 0
                          ? sv(0) / sv(sv.size() - 1)
                          : std::numeric_limits<double>::infinity();
  if (!(cond < 1e12)) {
    std::ostringstream os;
    os << "eigenvector matrix too ill-conditioned (condition estimate " << cond
       << "); matrix is numerically defective";
    throw NumericError(os.str());
  }
  Eigen::VectorXcd sel(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    sel(i) = std::abs(ev(i)) < 1.0 ? 1.0 : 0.0;
  }
  // Conjugate eigenvalues are selected together, so the sum is real up to
  // rounding.
  const CMatrix p = v * sel.asDiagonal() * v.inverse();
  return finish(p.real(), gap, p.imag().cwiseAbs().maxCoeff(), 0);
}

int rank_from_trace(const Matrix& p) {
  const double t = p.trace();
  const double r = std::round(t);
  if (std::abs(t - r) >= 0.01) {
    std::ostringstream os;
    os << "projector trace " << t << " is not close to an integer";
    throw NumericError(os.str());
  }
  return static_cast<int>(r);
}

}  // namespace hombif
