#include "hombif/bifurcation.hpp"

#include "hombif/errors.hpp"
#include "hombif/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace hombif {

namespace {

std::string where(const Parameter& lambda, long n) {
  return lambda.label() + ", n=" + std::to_string(n);
}

double sigma_max(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

}  // namespace

Vector NonlinearField::operator()(const Parameter& lambda, long n, const Vector& x) const {
  if (x.size() != dimension) throw InputError("state has the wrong dimension at " + where(lambda, n));
  Vector y;
  try {
    y = f(lambda, n, x);
  } catch (const Error& e) {
    throw_error(e.kind(), "nonlinear field at " + where(lambda, n) + ": " + e.what());
  } catch (const std::exception& e) {
    throw InputError("nonlinear field failed at " + where(lambda, n) + ": " + e.what());
  }
  if (y.size() != dimension) {
    throw InputError("nonlinear field returned the wrong dimension at " + where(lambda, n));
  }
  if (!y.allFinite()) throw InputError("nonlinear field is not finite at " + where(lambda, n));
  return y;
}

Matrix NonlinearField::finite_difference(const Parameter& lambda, long n, const Vector& x,
                                         double h) const {
  if (!(h > 1e-300) || !std::isfinite(h)) {
    throw NumericError("finite-difference step must be positive and above underflow");
  }
  Matrix j(dimension, dimension);
  for (int c = 0; c < dimension; ++c) {
    const double step = h * std::max(1.0, std::abs(x(c)));
    Vector xp = x, xm = x;
    xp(c) += step;
    xm(c) -= step;
    if (xp(c) == x(c) || xm(c) == x(c)) {
      throw NumericError("finite-difference step underflows at " + where(lambda, n));
    }
    j.col(c) = ((*this)(lambda, n, xp) - (*this)(lambda, n, xm)) / (xp(c) - xm(c));
  }
  return j;
}

Matrix NonlinearField::derivative(const Parameter& lambda, long n, const Vector& x,
                                  bool fd, double h) const {
  if (fd || !jacobian) return finite_difference(lambda, n, x, h);
  Matrix j;
  try {
    j = jacobian(lambda, n, x);
  } catch (const Error& e) {
    throw_error(e.kind(), "jacobian at " + where(lambda, n) + ": " + e.what());
  } catch (const std::exception& e) {
    throw InputError("jacobian failed at " + where(lambda, n) + ": " + e.what());
  }
  if (j.rows() != dimension || j.cols() != dimension || !j.allFinite()) {
    throw InputError("jacobian malformed at " + where(lambda, n));
  }
  return j;
}

FiniteWindowSequence nemitski_apply(const NonlinearField& f, const Parameter& lambda,
                                    const FiniteWindowSequence& phi) {
  if (phi.dimension != f.dimension) throw InputError("sequence has the wrong dimension");
  auto out = FiniteWindowSequence::zeros(phi.window, phi.dimension);
  for (long n = phi.window.first; n <= phi.window.last; ++n) out.at(n) = f(lambda, n, phi.at(n));
  out.update_decay();
  return out;
}

const Matrix& NemitskiDerivative::at(long n) const {
  if (!window.contains(n)) throw DomainError("derivative block outside its window");
  return blocks[static_cast<std::size_t>(n - window.first)];
}

FiniteWindowSequence NemitskiDerivative::apply(const FiniteWindowSequence& h) const {
  if (h.window.first != window.first || h.window.last != window.last) {
    throw InputError("direction lives on a different window");
  }
  auto out = FiniteWindowSequence::zeros(window, h.dimension);
  for (long n = window.first; n <= window.last; ++n) out.at(n) = at(n) * h.at(n);
  return out;
}

NemitskiDerivative nemitski_derivative(const NonlinearField& f, const Parameter& lambda,
                                       const FiniteWindowSequence& phi, bool fd, double h) {
  NemitskiDerivative d;
  d.window = phi.window;
  for (long n = phi.window.first; n <= phi.window.last; ++n) {
    d.blocks.push_back(f.derivative(lambda, n, phi.at(n), fd, h));
  }
  return d;
}

RemainderProbe remainder_ratios(const NonlinearField& f, const Parameter& lambda,
                                const FiniteWindowSequence& phi,
                                const FiniteWindowSequence& direction,
                                std::vector<double> scales) {
  const double size = direction.sup_norm();
  if (!(size > 0)) throw InputError("probe direction is zero");
  if (scales.size() < 2) throw InputError("need at least two probe scales");
  const auto base = nemitski_apply(f, lambda, phi);
  const auto dn = nemitski_derivative(f, lambda, phi);
  RemainderProbe p;
  p.scales = scales;
  for (double s : scales) {
    auto h = direction;
    for (auto& v : h.values) v *= s / size;
    auto moved = phi;
    for (std::size_t i = 0; i < moved.values.size(); ++i) moved.values[i] += h.values[i];
    const auto image = nemitski_apply(f, lambda, moved);
    const auto lin = dn.apply(h);
    double r = 0.0;
    for (std::size_t i = 0; i < image.values.size(); ++i) {
      r = std::max(r, (image.values[i] - base.values[i] - lin.values[i]).cwiseAbs().maxCoeff());
    }
    p.remainders.push_back(r);
    p.ratios.push_back(r / s);
  }
  p.ratios_decrease = true;
  for (std::size_t i = 1; i < p.ratios.size(); ++i) {
    if (!(p.ratios[i] < p.ratios[i - 1])) p.ratios_decrease = false;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(scales.size());
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const double x = std::log(scales[i]);
    const double y = std::log(std::max(p.remainders[i], std::numeric_limits<double>::min()));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  p.remainder_slope = (sxy - sx * sy / m) / (sxx - sx * sx / m);
  return p;
}

DiscreteVectorField linearize_at_zero(const NonlinearField& f) {
  const Vector zero = Vector::Zero(f.dimension);
  return DiscreteVectorField(
      f.dimension,
      [f, zero](const Parameter& l, long n) -> Matrix { return f.derivative(l, n, zero); },
      f.window, FieldKind::linearized);
}

NonlinearField make_perturbed_system(const PerturbedSystemSpec& spec,
                                     const ParameterLoop& loop, ResidualReport* report,
                                     long reach) {
  const int d = spec.a.dimension();
  if (spec.d && spec.d->dimension() != d) throw InputError("perturbation has the wrong dimension");
  if (!spec.residual) throw InputError("perturbed system needs a residual evaluator");
  if (!(spec.r0 > 0)) throw InputError("r0 must be positive");

  const auto a = spec.a.evaluator();
  const MatrixEvaluator dd = spec.d ? spec.d->evaluator() : MatrixEvaluator{};
  auto linear = [a, dd](const Parameter& l, long n) -> Matrix {
    return dd ? Matrix(a(l, n) + dd(l, n)) : a(l, n);
  };
  NonlinearField out;
  out.dimension = d;
  out.r0 = spec.r0;
  out.name = spec.name;
  out.window = spec.a.window();
  if (spec.d) {
    out.window.first = std::min(out.window.first, spec.d->window().first);
    out.window.last = std::max(out.window.last, spec.d->window().last);
  }
  const auto r = spec.residual;
  out.f = [linear, r](const Parameter& l, long n, const Vector& x) -> Vector {
    return linear(l, n) * x + r(l, n, x);
  };
  if (spec.residual_jacobian) {
    const auto dr = spec.residual_jacobian;
    out.jacobian = [linear, dr](const Parameter& l, long n, const Vector& x) -> Matrix {
      return linear(l, n) + dr(l, n, x);
    };
  }

  // Side conditions on R alone.
  NonlinearField rf;
  rf.dimension = d;
  rf.f = r;
  rf.jacobian = spec.residual_jacobian;
  ResidualReport rep;
  const Vector zero = Vector::Zero(d);
  const long lo = out.window.first - reach;
  const long hi = out.window.last + reach;
  for (const auto& l : loop.samples()) {
    for (long n = lo; n <= hi; ++n) {
      rep.worst_at_zero = std::max(rep.worst_at_zero, rf(l, n, zero).cwiseAbs().maxCoeff());
    }
    for (long n : {lo, hi}) {
      rep.derivative_at_edges = std::max(rep.derivative_at_edges, sigma_max(rf.derivative(l, n, zero)));
    }
    for (long n : {out.window.first - reach / 2, out.window.last + reach / 2}) {
      rep.derivative_nearer = std::max(rep.derivative_nearer, sigma_max(rf.derivative(l, n, zero)));
    }
  }
  rep.vanishes_at_zero = rep.worst_at_zero <= 1e-12;
  rep.derivative_decays = rep.derivative_at_edges <= 1e-6 &&
                          rep.derivative_at_edges <= rep.derivative_nearer + 1e-15;
  if (!rep.vanishes_at_zero) {
    std::ostringstream os;
    os << "residual R does not vanish at x = 0 (max " << rep.worst_at_zero << ")";
    throw DomainError(os.str());
  }
  if (report) *report = rep;
  return out;
}

F3Check check_F3(const DiscreteVectorField& field, const Parameter& lambda0, long horizon,
                 const DichotomyOptions& opt) {
  F3Check c;
  try {
    c.verdict = full_line_verdict(field, lambda0, horizon, opt);
  } catch (const IndeterminateError& e) {
    c.indeterminate = true;
    c.reason = e.what();
    return c;
  } catch (const CertificationError& e) {
    c.reason = e.what();
    return c;
  }
  c.indeterminate = c.verdict.verdict == EDVerdict::indeterminate;
  c.passed = c.verdict.verdict == EDVerdict::dichotomy &&
             c.verdict.stable_rank_plus == c.verdict.stable_rank_minus;
  c.reason = c.verdict.reason;
  return c;
}

const char* to_string(CertificateVerdict v) {
  switch (v) {
    case CertificateVerdict::bifurcation_certified: return "bifurcation_certified";
    case CertificateVerdict::obstruction_vanishes: return "obstruction_vanishes";
    case CertificateVerdict::hypotheses_failed: return "hypotheses_failed";
  }
  return "unknown";
}

BifurcationCertificate certify_bifurcation(const NonlinearField& f, const ParameterLoop& loop,
                                           const CertifyOptions& o) {
  if (loop.size() == 0) throw InputError("empty parameter loop");
  BifurcationCertificate cert;
  cert.kappa_plus = o.kappa_plus.value_or(std::max(1L, f.window.last));
  cert.kappa_minus = o.kappa_minus.value_or(std::min(-1L, f.window.first));
  if (!(cert.kappa_minus < 0 && 0 < cert.kappa_plus)) {
    throw InputError("anchors must satisfy kappa_minus < 0 < kappa_plus");
  }
  const long lo = f.window.first - o.sample_reach;
  const long hi = f.window.last + o.sample_reach;
  const Vector zero = Vector::Zero(f.dimension);
  auto fail = [&](const std::string& name, const std::string& why) {
    if (cert.failed_item.empty()) cert.failed_item = name + ": " + why;
  };

  {  // F0: trivial branch and evaluability.
    HypothesisCheck h{"F0", false, ""};
    try {
      double worst = 0.0;
      for (const auto& l : loop.samples())
        for (long n = lo; n <= hi; ++n) worst = std::max(worst, f(l, n, zero).cwiseAbs().maxCoeff());
      std::ostringstream os;
      os << "max |f_n(lambda, 0)| = " << worst << " over " << loop.size() << " samples and n in ["
         << lo << ", " << hi << "]";
      h.evidence = os.str();
      h.passed = worst <= 1e-12;
    } catch (const Error& e) {
      h.evidence = e.what();
    }
    if (!h.passed) fail("F0", h.evidence);
    cert.hypotheses.push_back(h);
  }

  {  // F1: sampled boundedness of D_2 f on the ball of radius r0.
    HypothesisCheck h{"F1", false, ""};
    try {
      std::mt19937_64 rng(0xf1);
      std::normal_distribution<double> gauss;
      std::vector<Vector> points{zero};
      for (int j = 0; j < f.dimension; ++j) {
        for (double s : {-1.0, -0.5, 0.5, 1.0}) {
          Vector x = zero;
          x(j) = s * f.r0;
          points.push_back(x);
        }
      }
      for (int k = 0; k < 4; ++k) {
        Vector x(f.dimension);
        for (int j = 0; j < f.dimension; ++j) x(j) = gauss(rng);
        points.push_back(x * (f.r0 / x.norm()));
      }
      double worst = 0.0;
      for (const auto& l : loop.samples())
        for (long n = lo; n <= hi; ++n)
          for (const auto& x : points) worst = std::max(worst, sigma_max(f.derivative(l, n, x)));
      std::ostringstream os;
      os << "max |D_2 f| = " << worst << " on " << points.size() << " points of the r0 = " << f.r0
         << " ball";
      h.evidence = os.str();
      h.passed = std::isfinite(worst);
    } catch (const Error& e) {
      h.evidence = e.what();
    }
    if (!h.passed) fail("F1", h.evidence);
    cert.hypotheses.push_back(h);
    cert.notes.push_back(
        "F1: equicontinuity of f on the r0 ball is not verifiable from samples; only sampled "
        "boundedness of D_2 f was checked");
  }

  const auto lin = linearize_at_zero(f);
  HalfLineBundles bundles;
  {  // F2: dichotomies on both half-lines for every sample.
    HypothesisCheck h{"F2", false, ""};
    try {
      bundles = stable_unstable_bundles(lin, loop, cert.kappa_plus, cert.kappa_minus, o.horizon,
                                        o.dichotomy);
      double k = 0, alpha = 0;
      for (std::size_t i = 0; i < loop.size(); ++i) {
        k = std::max({k, bundles.plus[i].K, bundles.minus[i].K});
        alpha = std::max({alpha, bundles.plus[i].alpha, bundles.minus[i].alpha});
      }
      std::ostringstream os;
      os << "dichotomies on [" << cert.kappa_plus << ", inf) and (-inf, " << cert.kappa_minus
         << "] at all " << loop.size() << " samples; worst K = " << k << ", alpha = " << alpha;
      h.evidence = os.str();
      h.passed = true;
    } catch (const Error& e) {
      h.evidence = e.what();
    }
    cert.hypotheses.push_back(h);
    if (!h.passed) {
      fail("F2", h.evidence);
      cert.verdict = CertificateVerdict::hypotheses_failed;
      return cert;
    }
  }
  cert.rank_plus = bundles.stable.rank;
  cert.rank_minus = bundles.minus_image.rank;
  cert.index_class = index_bundle_class(bundles);

  {  // F3: first sample with a whole-line dichotomy.
    HypothesisCheck h{"F3", false, ""};
    if (cert.rank_plus != cert.rank_minus) {
      std::ostringstream os;
      os << "rank im P+ = " << cert.rank_plus << " differs from rank im P- = " << cert.rank_minus
         << ": the index is nonzero, so no parameter has a dichotomy on Z";
      h.evidence = os.str();
    } else {
      std::vector<F3Check> scan(loop.size());
      parallel_for(loop.size(), [&](std::size_t i) {
        scan[i] = check_F3(lin, loop[i], o.horizon, o.dichotomy);
      });
      std::size_t undecided = 0;
      for (std::size_t i = 0; i < scan.size(); ++i) {
        undecided += scan[i].indeterminate ? 1 : 0;
        if (scan[i].passed && cert.lambda0_index < 0) cert.lambda0_index = static_cast<long>(i);
      }
      std::ostringstream os;
      if (cert.lambda0_index >= 0) {
        const auto i = static_cast<std::size_t>(cert.lambda0_index);
        cert.lambda0 = loop[i];
        const long reach = o.horizon;
        const TimeWindow w{cert.kappa_minus - reach, cert.kappa_plus + reach};
        const Matrix b = assemble_bordered(lin, loop[i], w, bundles.plus[i].projectors,
                                           bundles.minus[i].projectors).matrix;
        Eigen::BDCSVD<Matrix> svd(b);
        const auto sv = svd.singularValues();
        cert.lambda0_condition = sv(0) / sv(sv.size() - 1);
        os << "dichotomy on Z at " << loop[i].label() << " (sample " << i
           << "), transversality " << scan[i].verdict.transversality
           << ", bordered truncation condition " << cert.lambda0_condition;
        h.passed = true;
      } else {
        os << "no sample has a dichotomy on Z";
        if (undecided > 0) os << " (" << undecided << " undecided; refine the loop)";
      }
      h.evidence = os.str();
    }
    if (!h.passed) fail("F3", h.evidence);
    cert.hypotheses.push_back(h);
  }

  cert.notes.push_back(
      "the w1 test replaces the J-image condition; on a loop they agree, elsewhere the test is "
      "sufficient but not necessary");
  if (o.manifold_dimension) {
    cert.notes.push_back("covering dimension of the bifurcation set is at least " +
                         std::to_string(*o.manifold_dimension - 1) +
                         " (stated by the theory, not verified)");
  }
  const bool all = std::all_of(cert.hypotheses.begin(), cert.hypotheses.end(),
                               [](const HypothesisCheck& h) { return h.passed; });
  if (!all) {
    cert.verdict = CertificateVerdict::hypotheses_failed;
  } else if (cert.index_class.delta_w1 == 1) {
    cert.verdict = CertificateVerdict::bifurcation_certified;
  } else {
    cert.verdict = CertificateVerdict::obstruction_vanishes;
  }
  return cert;
}

// --- localization ----------------------------------------------------------

namespace {

struct NewtonSystem {
  const NonlinearField& f;
  TimeWindow w;
  int d;
  Matrix boundary;   // rows acting on the stacked sequence
  Vector v;          // amplitude direction, unit 2-norm
  double c;          // <v, phi> = c
  bool free_angle;
  double step;

  long unknowns() const { return w.length() * d + (free_angle ? 1 : 0); }

  Parameter param(const Vector& z, const Parameter& fixed) const {
    if (!free_angle) return fixed;
    return Parameter{-1, {z(z.size() - 1)}};
  }

  Vector interior(const Vector& z, const Parameter& l) const {
    Vector g((w.length() - 1) * d);
    for (long i = 0; i + 1 < w.length(); ++i) {
      g.segment(i * d, d) = z.segment((i + 1) * d, d) - f(l, w.first + i, z.segment(i * d, d));
    }
    return g;
  }

  Vector residual(const Vector& z, const Parameter& fixed) const {
    const Parameter l = param(z, fixed);
    const auto phi = z.head(w.length() * d);
    const auto ni = (w.length() - 1) * d;
    Vector g(ni + boundary.rows() + 1);
    g.head(ni) = interior(z, l);
    g.segment(ni, boundary.rows()) = boundary * phi;
    g(g.size() - 1) = v.dot(phi) - c;
    return g;
  }

  Matrix jacobian(const Vector& z, const Parameter& fixed) const {
    const Parameter l = param(z, fixed);
    const auto cols = unknowns();
    const auto ni = (w.length() - 1) * d;
    Matrix j = Matrix::Zero(ni + boundary.rows() + 1, cols);
    for (long i = 0; i + 1 < w.length(); ++i) {
      const long n = w.first + i;
      const Vector x = z.segment(i * d, d);
      j.block(i * d, i * d, d, d) = -f.derivative(l, n, x);
      j.block(i * d, (i + 1) * d, d, d).setIdentity();
      if (free_angle) {
        const double t = l.angle();
        const Vector up = f(Parameter{-1, {t + step}}, n, x);
        const Vector dn = f(Parameter{-1, {t - step}}, n, x);
        j.block(i * d, cols - 1, d, 1) = -(up - dn) / (2 * step);
      }
    }
    j.block(ni, 0, boundary.rows(), w.length() * d) = boundary;
    j.block(ni + boundary.rows(), 0, 1, w.length() * d) = v.transpose();
    return j;
  }
};

}  // namespace

int cluster_candidates(std::vector<LocalizedSolution>& cs, double gap) {
  std::stable_sort(cs.begin(), cs.end(), [](const auto& a, const auto& b) {
    return a.lambda.angle() < b.lambda.angle();
  });
  int id = -1;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (i == 0 || cs[i].lambda.angle() - cs[i - 1].lambda.angle() > gap) ++id;
    cs[i].cluster = id;
  }
  // Close the circle: the last cluster continues the first one.
  if (id > 0 && cs.front().lambda.angle() + 2 * std::numbers::pi - cs.back().lambda.angle() <= gap) {
    const int last = id;
    for (auto& c : cs)
      if (c.cluster == last) c.cluster = 0;
    --id;
  }
  return id + 1;
}

LocalizeResult localize_bifurcations(const NonlinearField& f, const ParameterLoop& loop,
                                     const LocalizeOptions& o) {
  if (loop.size() == 0) throw InputError("empty parameter loop");
  if (o.window.length() < 8) throw InputError("localization window needs at least 8 times");
  ParameterLoop grid = loop;
  for (int r = 0; r < o.refinements && grid.angular(); ++r) grid = grid.refined();
  const auto lin = linearize_at_zero(f);
  const int d = f.dimension;
  const long kp = std::max(1L, lin.window().last);
  const long km = std::min(-1L, lin.window().first);
  if (!o.window.contains(TimeWindow{km, kp})) {
    throw InputError("localization window must contain the anchors");
  }
  const long reach = std::max({o.horizon, o.window.last - kp, km - o.window.first});
  const double two_pi = 2 * std::numbers::pi;

  struct Slot {
    std::vector<LocalizedSolution> found;
    std::vector<std::string> dropped;
    Matrix bordered;
    Vector smallest;     // right singular vector of the smallest value
    double ratio = -1;   // sigma_min / sigma_max, -1 when not split
    bool seeded = false;
  };
  std::vector<Slot> slots(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    Slot& slot = slots[i];
    const Parameter& lambda = grid[i];
    try {
      const auto plus = build_projector_family(lin, lambda, Side::plus, kp, reach, o.dichotomy);
      const auto minus = build_projector_family(lin, lambda, Side::minus, km, reach, o.dichotomy);
      slot.bordered = assemble_bordered(lin, lambda, o.window, plus, minus).matrix;
    } catch (const Error& e) {
      slot.dropped.push_back(lambda.label() + ": linearization not split (" + e.what() + ")");
      return;
    }
    Eigen::BDCSVD<Matrix> svd(slot.bordered, Eigen::ComputeFullV);
    const auto sv = svd.singularValues();
    const auto cols = slot.bordered.cols();
    slot.ratio = slot.bordered.rows() < cols ? 0.0 : sv(sv.size() - 1) / sv(0);
    slot.smallest = svd.matrixV().col(cols - 1);
  });
  // Seeds go where the linear problem is nearly singular relative to the
  // best-conditioned sample of the loop.
  double best = 0.0;
  for (const auto& s : slots) best = std::max(best, s.ratio);

  parallel_for(grid.size(), [&](std::size_t i) {
    Slot& slot = slots[i];
    const Parameter& lambda = grid[i];
    if (slot.ratio < 0 || slot.ratio > o.seed_ratio * best) return;
    slot.seeded = true;
    const Matrix& bordered = slot.bordered;
    const auto cols = bordered.cols();
    const Vector& v = slot.smallest;
    const double vmax = v.cwiseAbs().maxCoeff();
    const long ni = (o.window.length() - 1) * d;

    for (std::size_t s = 0; s < o.seed_scales.size(); ++s) {
      const double amp = o.seed_scales[s] * f.r0;
      NewtonSystem sys{f, o.window, d, bordered.bottomRows(bordered.rows() - ni), v,
                       amp / vmax, grid.angular(), o.lambda_step};
      std::mt19937_64 rng(o.seed ^ (0x9e3779b97f4a7c15ULL * (i + 1)) ^ (s + 1));
      std::uniform_real_distribution<double> noise(-1, 1);
      Vector z(sys.unknowns());
      z.head(cols) = v * (amp / vmax);
      for (long k = 0; k < cols; ++k) z(k) += 1e-3 * amp * noise(rng);
      if (sys.free_angle) z(z.size() - 1) = lambda.angle();

      std::string why;
      bool converged = false;
      try {
        Vector g = sys.residual(z, lambda);
        for (int it = 0; it < o.max_iterations; ++it) {
          if (g.cwiseAbs().maxCoeff() <= o.tolerance) {
            converged = true;
            break;
          }
          const Matrix j = sys.jacobian(z, lambda);
          Vector dz;
          if (j.rows() == j.cols()) {
            dz = j.partialPivLu().solve(-g);
          } else {
            dz = j.completeOrthogonalDecomposition().solve(-g);
          }
          if (!dz.allFinite()) {
            why = "singular Newton step";
            break;
          }
          // Armijo damping on the 2-norm of the residual.
          double t = 1.0;
          const double g0 = g.norm();
          Vector trial, gt;
          for (;;) {
            trial = z + t * dz;
            gt = sys.residual(trial, lambda);
            if (gt.norm() <= (1 - 1e-4 * t) * g0) break;
            t *= 0.5;
            if (t < 1.0 / 1024) break;
          }
          if (t < 1.0 / 1024) {
            why = "line search failed";
            break;
          }
          z = trial;
          g = gt;
        }
        if (!converged && why.empty()) {
          converged = g.cwiseAbs().maxCoeff() <= o.tolerance;
          if (!converged) why = "no convergence in " + std::to_string(o.max_iterations) + " steps";
        }
      } catch (const Error& e) {
        why = e.what();
      }

      std::ostringstream tag;
      tag << lambda.label() << " scale " << o.seed_scales[s] << ": ";
      if (!converged) {
        slot.dropped.push_back(tag.str() + why);
        continue;
      }
      LocalizedSolution sol;
      sol.lambda = sys.param(z, lambda);
      if (sys.free_angle) {
        double t = std::fmod(sol.lambda.angle(), two_pi);
        if (t < 0) t += two_pi;
        sol.lambda.coords[0] = t;
      }
      sol.seed_sample = i;
      sol.seed_scale = o.seed_scales[s];
      sol.phi = FiniteWindowSequence::zeros(o.window, d);
      for (long k = 0; k < o.window.length(); ++k) {
        sol.phi.values[static_cast<std::size_t>(k)] = z.segment(k * d, d);
      }
      sol.phi.update_decay(o.decay_tol);
      sol.amplitude = sol.phi.sup_norm();
      sol.residual = sys.interior(z, sol.lambda).cwiseAbs().maxCoeff();
      if (sol.residual > o.accept_residual) {
        slot.dropped.push_back(tag.str() + "residual above acceptance");
      } else if (!(sol.amplitude > 10 * o.decay_tol && sol.amplitude < f.r0)) {
        slot.dropped.push_back(tag.str() + "amplitude outside (10 decay_tol, r0)");
      } else if (!sol.phi.decays_low || !sol.phi.decays_high) {
        slot.dropped.push_back(tag.str() + "solution does not decay at the window edges");
      } else {
        slot.found.push_back(std::move(sol));
      }
    }
  });

  LocalizeResult out;
  out.grid_size = grid.size();
  for (auto& s : slots) {
    out.seeded_samples += s.seeded ? 1 : 0;
    for (auto& c : s.found) out.candidates.push_back(std::move(c));
    for (auto& m : s.dropped) out.dropped.push_back(std::move(m));
  }
  cluster_candidates(out.candidates, 2 * two_pi / static_cast<double>(grid.size()));
  return out;
}

NonlinearField system2_mobius(const ParameterLoop& loop) {
  const auto e = mobius_bundle(loop);
  const auto line = trivial_bundle(loop, 2, 1);
  PerturbedSystemSpec spec{realization_field(e, line, 0.5, -2, 2), std::nullopt,
                           [](const Parameter&, long n, const Vector& x) -> Vector {
                             Vector r(2);
                             const double w = std::exp(-std::abs(static_cast<double>(n)));
                             r << w * x(0) * x(0), w * x(0) * x(1);
                             return r;
                           },
                           [](const Parameter&, long n, const Vector& x) -> Matrix {
                             Matrix j(2, 2);
                             const double w = std::exp(-std::abs(static_cast<double>(n)));
                             j << 2 * w * x(0), 0, w * x(1), w * x(0);
                             return j;
                           },
                           0.5, "system2-mobius"};
  return make_perturbed_system(spec, loop, nullptr);
}

}  // namespace hombif
