#include "hombif/field.hpp"

#include "hombif/errors.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>

namespace hombif {

const char* to_string(FieldKind k) {
  switch (k) {
    case FieldKind::autonomous: return "autonomous";
    case FieldKind::asymptotic: return "asymptotic";
    case FieldKind::tabulated: return "tabulated";
    case FieldKind::constructed: return "constructed";
    case FieldKind::linearized: return "linearized";
  }
  return "unknown";
}

DiscreteVectorField::DiscreteVectorField(int dimension,
                                         MatrixEvaluator evaluator,
                                         TimeWindow window, FieldKind kind)
    : dimension_(dimension),
      evaluator_(std::move(evaluator)),
      window_(window),
      kind_(kind) {
  if (dimension_ <= 0) throw InputError("field dimension must be positive");
  if (window_.last < window_.first) throw InputError("empty field window");
  if (!evaluator_) throw InputError("field evaluator is empty");
}

Matrix DiscreteVectorField::operator()(const Parameter& lambda, long n) const {
  Matrix a = evaluator_(lambda, n);
  if (a.rows() != dimension_ || a.cols() != dimension_) {
    std::ostringstream os;
    os << "field evaluator returned " << a.rows() << "x" << a.cols()
       << " at n=" << n << ", expected " << dimension_;
    throw InputError(os.str());
  }
  if (!a.allFinite()) {
    throw InputError("field evaluator returned non-finite entries at " +
                     lambda.label() + ", n=" + std::to_string(n));
  }
  return a;
}

double DiscreteVectorField::compute_bound(const ParameterLoop& loop,
                                          long margin) {
  double b = 0.0;
  for (const auto& lambda : loop.samples()) {
    for (long n = window_.first - margin; n <= window_.last + margin; ++n) {
      Eigen::JacobiSVD<Matrix> svd((*this)(lambda, n));
      b = std::max(b, svd.singularValues()(0));
    }
  }
  bound_ = b;
  return b;
}

DiscreteVectorField DiscreteVectorField::scaled(double c) const {
  auto ev = evaluator_;
  DiscreteVectorField out(
      dimension_,
      [ev, c](const Parameter& l, long n) -> Matrix { return c * ev(l, n); },
      window_, kind_);
  if (bound_) out.bound_ = std::abs(c) * *bound_;
  return out;
}

DiscreteVectorField DiscreteVectorField::plus(MatrixEvaluator d) const {
  auto ev = evaluator_;
  return DiscreteVectorField(
      dimension_,
      [ev, d](const Parameter& l, long n) -> Matrix { return ev(l, n) + d(l, n); },
      window_, FieldKind::constructed);
}

DiscreteVectorField autonomous_field(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw InputError("autonomous field needs a square matrix");
  }
  require_finite(a, "autonomous field matrix");
  return DiscreteVectorField(
      static_cast<int>(a.rows()),
      [a](const Parameter&, long) -> Matrix { return a; }, TimeWindow{0, 0},
      FieldKind::autonomous);
}

DiscreteVectorField switched_field(const Matrix& before, const Matrix& after,
                                   long switch_time) {
  if (before.rows() != after.rows() || before.rows() != before.cols() ||
      after.rows() != after.cols()) {
    throw InputError("switched field needs two square matrices of equal size");
  }
  require_finite(before, "switched field (before)");
  require_finite(after, "switched field (after)");
  return DiscreteVectorField(
      static_cast<int>(before.rows()),
      [before, after, switch_time](const Parameter&, long n) -> Matrix {
        return n < switch_time ? before : after;
      },
      TimeWindow{switch_time - 1, switch_time}, FieldKind::asymptotic);
}

DiscreteVectorField tabulated_field(int dimension, TimeWindow window,
                                    std::vector<std::vector<Matrix>> table) {
  if (table.empty()) throw InputError("tabulated field has no parameter rows");
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (static_cast<long>(table[i].size()) != window.length()) {
      throw InputError("tabulated field row " + std::to_string(i) + " has " +
                       std::to_string(table[i].size()) + " times, expected " +
                       std::to_string(window.length()));
    }
    for (const auto& m : table[i]) {
      if (m.rows() != dimension || m.cols() != dimension) {
        throw InputError("tabulated matrix has wrong shape in row " +
                         std::to_string(i));
      }
      require_finite(m, "tabulated field");
    }
  }
  auto shared = std::make_shared<const std::vector<std::vector<Matrix>>>(
      std::move(table));
  return DiscreteVectorField(
      dimension,
      [shared, window](const Parameter& l, long n) -> Matrix {
        if (l.index < 0 || static_cast<std::size_t>(l.index) >= shared->size()) {
          throw DomainError("tabulated field has no data for " + l.label());
        }
        const long t = std::clamp(n, window.first, window.last);
        return (*shared)[static_cast<std::size_t>(l.index)]
                        [static_cast<std::size_t>(t - window.first)];
      },
      window, FieldKind::tabulated);
}

Matrix propagator(const DiscreteVectorField& field, const Parameter& lambda,
                  long k, long n) {
  if (k < n) {
    throw DomainError("propagator needs k >= n (got k=" + std::to_string(k) +
                      ", n=" + std::to_string(n) + ")");
  }
  if (k - n > max_propagator_steps) {
    throw DomainError("propagator product longer than 10^4 steps");
  }
  const int d = field.dimension();
  Matrix phi = Matrix::Identity(d, d);
  for (long j = n; j < k; ++j) {
    phi = field(lambda, j) * phi;
    if (phi.cwiseAbs().maxCoeff() > propagator_overflow) {
      throw NumericError("propagator overflow at step " + std::to_string(j));
    }
  }
  return phi;
}

// --- bundles -------------------------------------------------------------

Matrix SampledBundle::frame_at(const Parameter& lambda) const {
  if (lambda.index >= 0 && static_cast<std::size_t>(lambda.index) < frames.size()) {
    return frames[static_cast<std::size_t>(lambda.index)];
  }
  if (continuous) return continuous(lambda);
  throw DomainError("bundle '" + name + "' has no fibre at " + lambda.label());
}

Matrix SampledBundle::projector_at(const Parameter& lambda) const {
  const Matrix f = frame_at(lambda);
  return f * f.transpose();
}

double max_principal_angle(const Matrix& a, const Matrix& b) {
  if (a.cols() == 0 && b.cols() == 0) return 0.0;
  if (a.cols() != b.cols()) return std::numbers::pi / 2;
  Eigen::JacobiSVD<Matrix> svd(a.transpose() * b);
  const double c = std::clamp(svd.singularValues().minCoeff(), 0.0, 1.0);
  return std::acos(c);
}

double SampledBundle::max_consecutive_angle() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    worst = std::max(worst, max_principal_angle(
                                frames[i], frames[(i + 1) % frames.size()]));
  }
  return worst;
}

void SampledBundle::validate() const {
  if (frames.size() != base.size()) {
    throw InputError("bundle '" + name + "' has " +
                     std::to_string(frames.size()) + " frames for " +
                     std::to_string(base.size()) + " samples");
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (f.rows() != ambient || f.cols() != rank) {
      throw InputError("bundle '" + name + "' frame " + std::to_string(i) +
                       " has wrong shape");
    }
    if (rank > 0 &&
        (f.transpose() * f - Matrix::Identity(rank, rank)).cwiseAbs().maxCoeff() > 1e-10) {
      throw InputError("bundle '" + name + "' frame " + std::to_string(i) +
                       " is not orthonormal");
    }
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::size_t j = (i + 1) % frames.size();
    if (max_principal_angle(frames[i], frames[j]) >= std::numbers::pi / 3) {
      throw DomainError("bundle '" + name + "': fibres " + std::to_string(i) +
                        " and " + std::to_string(j) +
                        " differ by a principal angle >= pi/3; refine the loop");
    }
  }
}

SampledBundle mobius_bundle(const ParameterLoop& loop) {
  if (!loop.angular()) {
    throw DomainError("the Mobius bundle needs the standard angular loop");
  }
  auto frame = [](const Parameter& l) -> Matrix {
    Matrix f(2, 1);
    f << std::cos(l.angle() / 2), std::sin(l.angle() / 2);
    return f;
  };
  SampledBundle b;
  b.base = loop;
  b.ambient = 2;
  b.rank = 1;
  b.name = "mobius";
  b.continuous = frame;
  for (const auto& l : loop.samples()) b.frames.push_back(frame(l));
  return b;
}

SampledBundle trivial_bundle(const ParameterLoop& loop, int ambient, int rank) {
  if (ambient <= 0 || rank < 0 || rank > ambient) {
    throw InputError("trivial bundle needs 0 <= rank <= ambient");
  }
  const Matrix f = Matrix::Identity(ambient, ambient).leftCols(rank);
  SampledBundle b;
  b.base = loop;
  b.ambient = ambient;
  b.rank = rank;
  b.name = "trivial(" + std::to_string(rank) + " in R^" +
           std::to_string(ambient) + ")";
  b.continuous = [f](const Parameter&) -> Matrix { return f; };
  b.frames.assign(loop.size(), f);
  return b;
}

SampledBundle whitney_sum(const SampledBundle& e, const SampledBundle& f) {
  if (e.base.size() != f.base.size()) {
    throw InputError("Whitney sum needs bundles over the same loop");
  }
  auto combine = [](const Matrix& a, const Matrix& b) {
    Matrix m = Matrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
    m.topLeftCorner(a.rows(), a.cols()) = a;
    m.bottomRightCorner(b.rows(), b.cols()) = b;
    return m;
  };
  SampledBundle s;
  s.base = e.base;
  s.ambient = e.ambient + f.ambient;
  s.rank = e.rank + f.rank;
  s.name = e.name + "+" + f.name;
  for (std::size_t i = 0; i < e.frames.size(); ++i) {
    s.frames.push_back(combine(e.frames[i], f.frames[i]));
  }
  if (e.continuous && f.continuous) {
    auto ec = e.continuous;
    auto fc = f.continuous;
    s.continuous = [ec, fc, combine](const Parameter& l) -> Matrix {
      return combine(ec(l), fc(l));
    };
  }
  return s;
}

namespace {

Matrix hyperbolic_matrix(const Matrix& frame, double q) {
  const auto d = frame.rows();
  const Matrix pi = frame * frame.transpose();
  return q * pi + (1.0 / q) * (Matrix::Identity(d, d) - pi);
}

void check_q(double q) {
  if (!(q > 0 && q < 1)) {
    throw DomainError("hyperbolic family needs 0 < q < 1");
  }
}

}  // namespace

DiscreteVectorField construct_hyperbolic_family(const SampledBundle& e,
                                                double q) {
  check_q(q);
  e.validate();
  auto bundle = std::make_shared<const SampledBundle>(e);
  return DiscreteVectorField(
      e.ambient,
      [bundle, q](const Parameter& l, long) -> Matrix {
        return hyperbolic_matrix(bundle->frame_at(l), q);
      },
      TimeWindow{0, 0}, FieldKind::autonomous);
}

HyperbolicFamilyReport check_hyperbolic_family(const SampledBundle& e,
                                               double q) {
  check_q(q);
  HyperbolicFamilyReport r;
  const auto n = e.frames.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix& f = e.frames[i];
    const Matrix h = hyperbolic_matrix(f, q);
    const Matrix c = orthogonal_complement(f, e.ambient);
    if (f.cols() > 0) {
      r.max_eigen_residual = std::max(
          r.max_eigen_residual, (h * f - q * f).cwiseAbs().maxCoeff());
    }
    if (c.cols() > 0) {
      r.max_eigen_residual = std::max(
          r.max_eigen_residual, (h * c - c / q).cwiseAbs().maxCoeff());
    }
    const Matrix& g = e.frames[(i + 1) % n];
    const double angle = max_principal_angle(f, g);
    const double jump = (h - hyperbolic_matrix(g, q)).norm();
    if (angle > 1e-12) {
      r.continuity_constant = std::max(r.continuity_constant, jump / angle);
    }
  }
  return r;
}

DiscreteVectorField realization_field(const SampledBundle& e,
                                      const SampledBundle& f, double q,
                                      long kappa_minus, long kappa_plus,
                                      MiddleSection middle) {
  check_q(q);
  if (!(kappa_minus < 0 && 0 < kappa_plus)) {
    throw DomainError("realization field needs kappa_minus < 0 < kappa_plus");
  }
  if (e.ambient != f.ambient) {
    throw DomainError("realization field needs bundles in the same R^d");
  }
  if (e.base.size() != f.base.size()) {
    throw DomainError("realization field needs bundles over the same loop");
  }
  const int d = e.ambient;
  if (!middle) {
    middle = [d](const Parameter&, long) -> Matrix {
      return Matrix::Identity(d, d);
    };
  }
  for (const auto& l : e.base.samples()) {
    for (long n = kappa_minus; n <= kappa_plus; ++n) {
      const Matrix t = middle(l, n);
      if (t.rows() != d || t.cols() != d || !t.allFinite()) {
        throw InputError("middle section malformed at " + l.label() +
                         ", n=" + std::to_string(n));
      }
      Eigen::JacobiSVD<Matrix> svd(t);
      const auto sv = svd.singularValues();
      if (!(sv(d - 1) > 1e-12 * std::max(1.0, sv(0)))) {
        throw InputError("middle section singular at " + l.label() +
                         ", n=" + std::to_string(n));
      }
    }
  }
  const auto he = construct_hyperbolic_family(e, q).evaluator();
  const auto hf = construct_hyperbolic_family(f, q).evaluator();
  return DiscreteVectorField(
      d,
      [he, hf, middle, kappa_minus, kappa_plus](const Parameter& l,
                                                long n) -> Matrix {
        if (n < kappa_minus) return hf(l, n);
        if (n > kappa_plus) return he(l, n);
        return middle(l, n);
      },
      TimeWindow{kappa_minus, kappa_plus}, FieldKind::constructed);
}

PerturbedField perturb_field(const DiscreteVectorField& base,
                             MatrixEvaluator perturbation, double gamma_plus,
                             double gamma_minus, long kappa_plus,
                             long kappa_minus, const ParameterLoop& loop,
                             long reach) {
  if (!(gamma_plus > 0 && gamma_minus > 0)) {
    throw DomainError("smallness thresholds must be positive");
  }
  SmallnessReport rep;
  rep.note =
      "sampled operator norms only; equicontinuity in the parameter is not "
      "checked";
  for (const auto& l : loop.samples()) {
    for (long n = kappa_plus; n <= kappa_plus + reach; ++n) {
      Eigen::JacobiSVD<Matrix> svd(perturbation(l, n));
      const double s = svd.singularValues()(0);
      rep.worst_plus = std::max(rep.worst_plus, s);
      if (s > gamma_plus) {
        rep.holds_plus = false;
        if (!rep.first_violation_plus || n < *rep.first_violation_plus) {
          rep.first_violation_plus = n;
        }
      }
    }
    for (long n = kappa_minus; n >= kappa_minus - reach; --n) {
      Eigen::JacobiSVD<Matrix> svd(perturbation(l, n));
      const double s = svd.singularValues()(0);
      rep.worst_minus = std::max(rep.worst_minus, s);
      if (s > gamma_minus) {
        rep.holds_minus = false;
        if (!rep.first_violation_minus || n > *rep.first_violation_minus) {
          rep.first_violation_minus = n;
        }
      }
    }
  }
  return PerturbedField{base.plus(std::move(perturbation)), rep};
}

}  // namespace hombif
