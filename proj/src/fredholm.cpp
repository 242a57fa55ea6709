#include "hombif/fredholm.hpp"

#include "hombif/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace hombif {

FiniteWindowSequence FiniteWindowSequence::zeros(TimeWindow window, int dimension) {
  if (window.last < window.first) throw InputError("empty sequence window");
  FiniteWindowSequence s;
  s.window = window;
  s.dimension = dimension;
  s.values.assign(static_cast<std::size_t>(window.length()), Vector::Zero(dimension));
  return s;
}

Vector& FiniteWindowSequence::at(long n) {
  if (!window.contains(n)) throw DomainError("time " + std::to_string(n) + " outside sequence window");
  return values[static_cast<std::size_t>(n - window.first)];
}

const Vector& FiniteWindowSequence::at(long n) const {
  if (!window.contains(n)) throw DomainError("time " + std::to_string(n) + " outside sequence window");
  return values[static_cast<std::size_t>(n - window.first)];
}

double FiniteWindowSequence::sup_norm() const {
  double s = 0.0;
  for (const auto& v : values) s = std::max(s, v.cwiseAbs().maxCoeff());
  return s;
}

void FiniteWindowSequence::update_decay(double tol) {
  const long edge = std::max(1L, window.length() / 10);
  decays_low = decays_high = true;
  for (long i = 0; i < edge; ++i) {
    if (values[static_cast<std::size_t>(i)].cwiseAbs().maxCoeff() >= tol) decays_low = false;
    if (values[values.size() - 1 - static_cast<std::size_t>(i)].cwiseAbs().maxCoeff() >= tol) {
      decays_high = false;
    }
  }
}

TruncatedOperator assemble_truncated(const DiscreteVectorField& field,
                                     const Parameter& lambda, TimeWindow window) {
  if (window.length() < 8) throw InputError("truncation window needs at least 8 times");
  const int d = field.dimension();
  const long w = window.length();
  TruncatedOperator op;
  op.window = window;
  op.dimension = d;
  op.matrix = Matrix::Zero((w - 1) * d, w * d);
  for (long i = 0; i + 1 < w; ++i) {
    op.matrix.block(i * d, i * d, d, d) = -field(lambda, window.first + i);
    op.matrix.block(i * d, (i + 1) * d, d, d).setIdentity();
  }
  return op;
}

FiniteWindowSequence apply_difference(const DiscreteVectorField& field,
                                      const Parameter& lambda,
                                      const FiniteWindowSequence& phi) {
  auto out = FiniteWindowSequence::zeros({phi.window.first, phi.window.last - 1}, phi.dimension);
  for (long n = phi.window.first; n < phi.window.last; ++n) {
    out.at(n) = phi.at(n + 1) - field(lambda, n) * phi.at(n);
  }
  return out;
}

namespace {

Matrix null_space(const Matrix& m, double rel_tol) {
  const auto cols = m.cols();
  if (m.rows() == 0) return Matrix::Identity(cols, cols);
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
  const auto sv = svd.singularValues();
  const double top = sv.size() ? sv(0) : 0.0;
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > rel_tol * std::max(1.0, top)) ++rank;
  return svd.matrixV().rightCols(cols - rank);
}

Matrix range_basis(const Matrix& m, double rel_tol) {
  if (m.cols() == 0) return Matrix(m.rows(), 0);
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU);
  const auto sv = svd.singularValues();
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > rel_tol * std::max(1.0, sv(0))) ++rank;
  return svd.matrixU().leftCols(rank);
}

constexpr double intersection_sine = 1e-7;
constexpr double null_zero_tol = 1e-8;
constexpr double null_gap = 1e3;

}  // namespace

TruncatedOperator assemble_bordered(const DiscreteVectorField& field,
                                    const Parameter& lambda, TimeWindow window,
                                    const ProjectorFamily& plus,
                                    const ProjectorFamily& minus) {
  if (window.last > plus.window.last || window.first < minus.window.first) {
    std::ostringstream os;
    os << "witness windows [" << minus.window.first << ", " << minus.window.last << "] and ["
       << plus.window.first << ", " << plus.window.last << "] do not cover the truncation window ["
       << window.first << ", " << window.last << "]";
    throw DomainError(os.str());
  }
  const int d = field.dimension();
  const Matrix id = Matrix::Identity(d, d);
  auto op = assemble_truncated(field, lambda, window);
  const Matrix low_rows = minus.image_frame(window.first).transpose() * minus.at(window.first);
  const Matrix high_rows =
      plus.kernel_frame(window.last).transpose() * (id - plus.at(window.last));
  const auto rows = op.matrix.rows();
  const auto cols = op.matrix.cols();
  Matrix bordered = Matrix::Zero(rows + low_rows.rows() + high_rows.rows(), cols);
  bordered.topRows(rows) = op.matrix;
  bordered.block(rows, 0, low_rows.rows(), d) = low_rows;
  bordered.block(rows + low_rows.rows(), cols - d, high_rows.rows(), d) = high_rows;
  op.matrix = std::move(bordered);
  op.boundary = "half-line";
  return op;
}

IndexReport kernel_cokernel(const DiscreteVectorField& field,
                            const Parameter& lambda, TimeWindow window,
                            const EDWitness& plus, const EDWitness& minus) {
  const auto& pp = plus.projectors;
  const auto& pm = minus.projectors;
  if (pp.side != Side::plus || pm.side != Side::minus) {
    throw InputError("kernel_cokernel needs a plus-side and a minus-side witness");
  }
  IndexReport r;
  r.kappa_plus = pp.anchor;
  r.kappa_minus = pm.anchor;
  if (!(r.kappa_minus <= 0 && 0 <= r.kappa_plus)) {
    throw DomainError("anchors must satisfy kappa_minus <= 0 <= kappa_plus");
  }
  if (window.length() < 8 || !window.contains(TimeWindow{r.kappa_minus, r.kappa_plus})) {
    throw DomainError("truncation window must contain [kappa_minus, kappa_plus]");
  }
  const int d = field.dimension();
  const Matrix id = Matrix::Identity(d, d);
  r.rank_plus = pp.rank;
  r.rank_minus = pm.rank;
  r.index = r.rank_plus - r.rank_minus;

  // (i) Solutions decaying forward are the preimages of im P+(kappa_plus);
  // solutions decaying backward are images of ker P-(kappa_minus).
  Matrix s = pp.image_frame(r.kappa_plus);
  for (long n = r.kappa_plus - 1; n >= 0; --n) {
    const Matrix c = orthogonal_complement(s, d);
    s = c.cols() == 0 ? id : null_space(c.transpose() * field(lambda, n), 1e-12);
  }
  Matrix u = pm.kernel_frame(r.kappa_minus);
  for (long n = r.kappa_minus; n < 0; ++n) u = range_basis(field(lambda, n) * u, 1e-12);
  if (u.cols() == 0 || s.cols() == 0) {
    r.ker_by_intersection = 0;
    r.smallest_angle = std::numbers::pi / 2;
  } else {
    Eigen::JacobiSVD<Matrix> svd((id - s * s.transpose()) * u);
    const auto sines = svd.singularValues();
    int count = 0;
    for (Eigen::Index i = 0; i < sines.size(); ++i) count += sines(i) <= intersection_sine ? 1 : 0;
    r.ker_by_intersection = count;
    r.smallest_angle = std::asin(std::min(1.0, sines.minCoeff()));
  }

  // (ii) Truncated operator bordered by the half-line conditions.
  const Matrix bordered = assemble_bordered(field, lambda, window, pp, pm).matrix;
  const auto cols = bordered.cols();
  r.truncated_index = static_cast<int>(cols - bordered.rows());

  Eigen::BDCSVD<Matrix> svd(bordered, Eigen::ComputeFullV);
  const int nullity = numerical_nullity(svd.singularValues(), cols, null_zero_tol, null_gap);
  r.ker_by_truncation = nullity;
  if (nullity > 0) {
    const Matrix v = svd.matrixV().rightCols(nullity);
    for (int j = 0; j < nullity; ++j) {
      auto seq = FiniteWindowSequence::zeros(window, d);
      for (long i = 0; i < window.length(); ++i) seq.values[static_cast<std::size_t>(i)] = v.col(j).segment(i * d, d);
      const double top = seq.sup_norm();
      for (auto& x : seq.values) x /= top;
      seq.update_decay();
      r.kernel_basis.push_back(std::move(seq));
    }
  }

  r.dim_ker = nullity >= 0 ? nullity : r.ker_by_intersection;
  r.dim_coker = r.dim_ker - r.index;
  r.consistent = nullity >= 0 && nullity == r.ker_by_intersection &&
                 r.truncated_index == r.index && r.dim_coker >= 0;
  if (nullity < 0) {
    r.note = "no singular-value gap in the bordered truncation; kernel dimension "
             "taken from the subspace intersection";
  } else if (!r.consistent) {
    std::ostringstream os;
    os << "kernel by intersection " << r.ker_by_intersection << ", by truncation "
       << nullity << ", truncated index " << r.truncated_index << ", projector index "
       << r.index;
    r.note = os.str();
  }
  return r;
}

IndexReport fredholm_index(const DiscreteVectorField& field,
                           const Parameter& lambda, TimeWindow window,
                           long horizon, const DichotomyOptions& opt) {
  const long kappa_plus = std::max(1L, field.window().last);
  const long kappa_minus = std::min(-1L, field.window().first);
  const long reach = std::max({horizon, window.last - kappa_plus, kappa_minus - window.first});
  auto plus = verify_ed(field, lambda,
                        build_projector_family(field, lambda, Side::plus, kappa_plus, reach, opt));
  auto minus = verify_ed(field, lambda,
                         build_projector_family(field, lambda, Side::minus, kappa_minus, reach, opt));
  return kernel_cokernel(field, lambda, window, plus, minus);
}

// --- Green's function ------------------------------------------------------

GreenKernel::GreenKernel(const DiscreteVectorField& field, const Parameter& lambda,
                         const ProjectorFamily& pf)
    : family_(pf) {
  const int d = field.dimension();
  const Matrix id = Matrix::Identity(d, d);
  for (long j = pf.window.first; j < pf.window.last; ++j) {
    const Matrix a = field(lambda, j);
    forward_.push_back(pf.at(j + 1) * a * pf.at(j));
    const Matrix c = pf.kernel_frame(j);
    if (c.cols() == 0) {
      backward_.push_back(Matrix::Zero(d, d));
      continue;
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a * c);
    backward_.push_back(c * cod.pseudoInverse() * (id - pf.at(j + 1)));
  }
}

Matrix GreenKernel::operator()(long n, long m) const {
  const auto& w = family_.window;
  if (!w.contains(n) || !w.contains(m)) throw DomainError("Green kernel evaluated outside its window");
  const auto d = family_.matrices.front().rows();
  if (m <= n) {
    Matrix g = family_.at(m);
    for (long j = m; j < n; ++j) g = forward_[static_cast<std::size_t>(j - w.first)] * g;
    return g;
  }
  Matrix g = Matrix::Identity(d, d) - family_.at(m);
  for (long j = m - 1; j >= n; --j) g = backward_[static_cast<std::size_t>(j - w.first)] * g;
  return -g;
}

GreenSolution green_solve(const DiscreteVectorField& field,
                          const Parameter& lambda, Side side, long kappa,
                          const FiniteWindowSequence& psi, const EDWitness& w,
                          double solve_tol) {
  const auto& pf = w.projectors;
  if (side == Side::full || pf.side != side) {
    throw InputError("green_solve needs a witness for the requested half-line");
  }
  if (psi.dimension != field.dimension()) throw InputError("right-hand side has the wrong dimension");
  const TimeWindow out = side == Side::plus ? TimeWindow{kappa, pf.window.last}
                                            : TimeWindow{pf.window.first, kappa};
  if (!pf.window.contains(out) || out.length() < 2) {
    throw DomainError("anchor " + std::to_string(kappa) + " outside the witness window");
  }
  // Sources k feed G(., k+1), so k ranges over [first, last - 1].
  const TimeWindow sources{out.first, out.last - 1};
  for (long k = psi.window.first; k <= psi.window.last; ++k) {
    if (!sources.contains(k) && psi.at(k).cwiseAbs().maxCoeff() != 0.0) {
      throw DomainError("right-hand side is nonzero at n=" + std::to_string(k) +
                        ", outside the half-window sources [" + std::to_string(sources.first) +
                        ", " + std::to_string(sources.last) + "]");
    }
  }

  const GreenKernel g(field, lambda, pf);
  const int d = field.dimension();
  const Matrix id = Matrix::Identity(d, d);
  GreenSolution sol;
  sol.phi = FiniteWindowSequence::zeros(out, d);
  const double log_alpha = std::log(std::max(w.alpha, 1e-300));
  double leak = 0.0;
  for (long k = std::max(sources.first, psi.window.first);
       k <= std::min(sources.last, psi.window.last); ++k) {
    const Vector& f = psi.at(k);
    const double size = f.cwiseAbs().maxCoeff();
    if (size == 0.0) continue;
    // Column k of the Green sum: stable part forward from k+1, kernel part
    // backward from k.
    Vector v = pf.at(k + 1) * f;
    for (long n = k + 1; n <= out.last; ++n) {
      sol.phi.at(n) += v;
      if (n < out.last) v = g.forward_step(n) * v;
    }
    Vector u = (id - pf.at(k + 1)) * f;
    for (long n = k; n >= out.first; --n) {
      u = g.backward_step(n) * u;
      sol.phi.at(n) -= u;
    }
    const long dist = side == Side::plus ? out.last - (k + 1) : k - out.first;
    leak += std::exp(dist * log_alpha) * size;
  }
  sol.tail_bound = w.K * (1.0 + pf.sup_norm) * leak;
  if (sol.tail_bound > solve_tol) {
    const long extra = static_cast<long>(std::ceil(std::log(solve_tol / sol.tail_bound) / log_alpha));
    std::ostringstream os;
    os << "window too short: tail bound " << sol.tail_bound << " exceeds " << solve_tol
       << "; extend the " << to_string(side) << " half-window by " << extra << " steps";
    throw DomainError(os.str());
  }

  const auto lphi = apply_difference(field, lambda, sol.phi);
  for (long n = sources.first; n <= sources.last; ++n) {
    const Vector target = psi.window.contains(n) ? psi.at(n) : Vector::Zero(d);
    sol.residual = std::max(sol.residual, (lphi.at(n) - target).cwiseAbs().maxCoeff());
  }
  if (sol.residual > 1e-10 * std::max(1.0, psi.sup_norm())) {
    std::ostringstream os;
    os << "Green solve residual " << sol.residual << " above 1e-10";
    throw NumericError(os.str());
  }
  sol.phi.update_decay();
  return sol;
}

Convolution kernel_convolve(const KernelFunction& f, const FiniteWindowSequence& phi) {
  Convolution c;
  c.result = FiniteWindowSequence::zeros(phi.window, phi.dimension);
  for (long n = phi.window.first; n <= phi.window.last; ++n) {
    double row = 0.0;
    Vector acc = Vector::Zero(phi.dimension);
    for (long k = phi.window.first; k <= phi.window.last; ++k) {
      const Matrix m = f(n, k);
      row += inf_norm(m);
      acc += m * phi.at(k);
    }
    if (!std::isfinite(row) || !acc.allFinite()) {
      throw NumericError("kernel row sum overflows at n=" + std::to_string(n));
    }
    c.row_sum_bound = std::max(c.row_sum_bound, row);
    c.result.at(n) = acc;
  }
  const double lhs = c.result.sup_norm();
  const double rhs = c.row_sum_bound * phi.sup_norm();
  if (lhs > rhs * (1 + 1e-12) + std::numeric_limits<double>::min()) {
    throw NumericError("convolution exceeds its row-sum bound");
  }
  c.result.update_decay();
  return c;
}

}  // namespace hombif
