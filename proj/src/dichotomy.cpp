#include "hombif/dichotomy.hpp"

#include "hombif/errors.hpp"
#include "hombif/matrixcore.hpp"
#include "qr_sweep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace hombif {

const char* to_string(Side s) {
  switch (s) {
    case Side::plus: return "plus";
    case Side::minus: return "minus";
    case Side::full: return "full";
  }
  return "unknown";
}

Matrix Splitting::projector() const { return oblique_projector(stable, unstable); }

namespace {

double sigma_min(const Matrix& m) {
  if (m.cols() == 0) return std::numeric_limits<double>::infinity();
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(svd.singularValues().size() - 1) *
         (m.cols() > m.rows() ? 0.0 : 1.0);
}

double sigma_max(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

double delta_for(long horizon, const DichotomyOptions& opt) {
  return std::log(opt.gap_ratio) / (2.0 * static_cast<double>(horizon));
}

void check_horizon(long horizon) {
  if (horizon < 20) throw InputError("horizon must be at least 20");
}

// Leading columns of a settled QR frame expand, trailing ones contract.
int expanding_count(const Vector& rates_desc, long horizon,
                    const DichotomyOptions& opt, const char* what) {
  std::string reason;
  const int j = detail::count_expanding(rates_desc, delta_for(horizon, opt), reason);
  if (j < 0) throw CertificationError(std::string(what) + ": " + reason);
  return j;
}

Matrix checked_projector(const Matrix& image, const Matrix& kernel, long n) {
  Matrix basis(image.rows(), image.cols() + kernel.cols());
  basis << image, kernel;
  if (sigma_min(basis) < 1e-12) {
    throw CertificationError("image and kernel are not complementary at n=" +
                             std::to_string(n));
  }
  return oblique_projector(image, kernel);
}

void irregular(long n, double s) {
  std::ostringstream os;
  os << "irregular splitting: A_n restricted to the kernel has smallest "
        "singular value "
     << s << " at n=" << n;
  throw CertificationError(os.str());
}

void validate_family(const DiscreteVectorField& field, const Parameter& lambda,
                     ProjectorFamily& pf, double tau_inv) {
  const auto d = field.dimension();
  pf.rank = rank_from_trace(pf.matrices.front());
  for (long n = pf.window.first; n <= pf.window.last; ++n) {
    const Matrix& p = pf.at(n);
    pf.idempotency_residual =
        std::max(pf.idempotency_residual, (p * p - p).cwiseAbs().maxCoeff());
    pf.sup_norm = std::max(pf.sup_norm, sigma_max(p));
    if (rank_from_trace(p) != pf.rank) {
      throw CertificationError("projector rank changes at n=" + std::to_string(n));
    }
    if (n < pf.window.last) {
      const Matrix a = field(lambda, n);
      const double r = (a * p - pf.at(n + 1) * a).cwiseAbs().maxCoeff();
      if (r > pf.invariance_residual) {
        pf.invariance_residual = r;
        pf.worst_invariance_time = n;
      }
    }
  }
  if (pf.idempotency_residual > tolerance::projector) {
    std::ostringstream os;
    os << "projector family not idempotent (residual " << pf.idempotency_residual << ")";
    throw CertificationError(os.str());
  }
  if (pf.invariance_residual > tau_inv) {
    std::ostringstream os;
    os << "invariance residual " << pf.invariance_residual << " at n="
       << pf.worst_invariance_time << " exceeds " << tau_inv;
    throw CertificationError(os.str());
  }
  (void)d;
}

}  // namespace

Splitting estimate_splitting(const DiscreteVectorField& field,
                             const Parameter& lambda, Side side, long anchor,
                             long horizon, const DichotomyOptions& opt) {
  check_horizon(horizon);
  if (side == Side::full) {
    throw InputError("estimate_splitting works on one half-line at a time");
  }
  const int d = field.dimension();
  const Matrix start = detail::random_orthogonal(d, opt.seed);
  Splitting s;
  s.side = side;
  s.anchor = anchor;
  s.horizon = horizon;

  Vector rates;
  Matrix frame;
  if (side == Side::plus) {
    auto sw = detail::backward_sweep(field, lambda, anchor, anchor + 2 * horizon, start);
    rates = sw.mean_rate(anchor, anchor + horizon);
    frame = sw.frame(anchor);
  } else {
    auto sw = detail::forward_sweep(field, lambda, anchor - 2 * horizon, anchor, start);
    rates = sw.mean_rate(anchor - horizon, anchor);
    frame = sw.frame(anchor);
  }
  int j = detail::count_expanding(rates, delta_for(horizon, opt), s.reason);
  s.detected = j >= 0;
  if (!s.detected) {
    j = 0;
    while (j < d && rates(j) > 0) ++j;
  }
  s.unstable = frame.leftCols(j);
  s.stable = frame.rightCols(d - j);
  s.rates = rates.reverse();
  return s;
}

const Matrix& ProjectorFamily::at(long n) const {
  if (!window.contains(n)) {
    throw DomainError("time " + std::to_string(n) + " outside projector window [" +
                      std::to_string(window.first) + ", " +
                      std::to_string(window.last) + "]");
  }
  return matrices[static_cast<std::size_t>(n - window.first)];
}

Matrix ProjectorFamily::image_frame(long n) const {
  const Matrix& p = at(n);
  Eigen::JacobiSVD<Matrix> svd(p, Eigen::ComputeFullU);
  return svd.matrixU().leftCols(rank);
}

Matrix ProjectorFamily::kernel_frame(long n) const {
  const Matrix& p = at(n);
  Eigen::JacobiSVD<Matrix> svd(p, Eigen::ComputeFullV);
  return svd.matrixV().rightCols(p.cols() - rank);
}

ProjectorFamily build_projector_family(const DiscreteVectorField& field,
                                       const Parameter& lambda, Side side,
                                       long anchor, long horizon,
                                       const DichotomyOptions& opt) {
  check_horizon(horizon);
  const int d = field.dimension();
  const Matrix start = detail::random_orthogonal(d, opt.seed);
  const Matrix id = Matrix::Identity(d, d);
  ProjectorFamily pf;
  pf.side = side;
  pf.anchor = anchor;
  pf.min_regularity = std::numeric_limits<double>::infinity();

  if (side == Side::plus) {
    pf.window = {anchor, anchor + horizon};
    pf.complement_choice =
        "image: forward-decaying subspace; kernel: orthogonal complement at the "
        "anchor, carried forward by the field";
    auto sw = detail::backward_sweep(field, lambda, anchor, anchor + 2 * horizon, start);
    const int j = expanding_count(sw.mean_rate(anchor, anchor + horizon), horizon,
                                  opt, "plus side");
    Matrix kernel = sw.frame(anchor).leftCols(j);
    for (long n = anchor; n <= pf.window.last; ++n) {
      pf.matrices.push_back(checked_projector(sw.frame(n).rightCols(d - j), kernel, n));
      if (n == pf.window.last || j == 0) continue;
      const Matrix moved = field(lambda, n) * kernel;
      const double s = sigma_min(moved);
      pf.min_regularity = std::min(pf.min_regularity, s);
      if (s < opt.sigma_reg) irregular(n, s);
      kernel = orthonormalize(moved);
    }
  } else if (side == Side::minus) {
    pf.window = {anchor - horizon, anchor};
    pf.complement_choice =
        "kernel: backward-decaying subspace; image: orthogonal complement at "
        "the anchor, carried backward by preimages";
    auto sw = detail::forward_sweep(field, lambda, anchor - 2 * horizon, anchor, start);
    const int j = expanding_count(sw.mean_rate(anchor - horizon, anchor), horizon,
                                  opt, "minus side");
    const int k = d - j;
    std::vector<Matrix> rev;
    Matrix next = checked_projector(sw.frame(anchor).rightCols(k),
                                    sw.frame(anchor).leftCols(j), anchor);
    rev.push_back(next);
    for (long n = anchor - 1; n >= pf.window.first; --n) {
      const Matrix a = field(lambda, n);
      const Matrix unstable = sw.frame(n).leftCols(j);
      if (j > 0) {
        const double s = sigma_min(a * unstable);
        pf.min_regularity = std::min(pf.min_regularity, s);
        if (s < opt.sigma_reg) irregular(n, s);
      }
      // Preimage of im P(n+1): null space of (I - P(n+1)) A_n.
      Matrix image(d, 0);
      if (k > 0) {
        Eigen::JacobiSVD<Matrix> svd((id - next) * a, Eigen::ComputeFullV);
        image = svd.matrixV().rightCols(k);
      }
      next = checked_projector(image, unstable, n);
      rev.push_back(next);
    }
    pf.matrices.assign(rev.rbegin(), rev.rend());
  } else {
    pf.window = {anchor - horizon, anchor + horizon};
    pf.complement_choice =
        "image: forward-decaying subspace; kernel: backward-decaying subspace";
    auto up = detail::backward_sweep(field, lambda, anchor - horizon,
                                     anchor + 2 * horizon, start);
    auto down = detail::forward_sweep(field, lambda, anchor - 2 * horizon,
                                      anchor + horizon, start);
    const int jp = expanding_count(up.mean_rate(anchor, anchor + horizon), horizon,
                                   opt, "plus side");
    const int jm = expanding_count(down.mean_rate(anchor - horizon, anchor),
                                   horizon, opt, "minus side");
    if (jp != jm) {
      throw CertificationError(
          "no dichotomy on the full line: " + std::to_string(d - jp) +
          " forward-decaying directions against " + std::to_string(jm) +
          " backward-decaying ones in R^" + std::to_string(d));
    }
    for (long n = pf.window.first; n <= pf.window.last; ++n) {
      const Matrix unstable = down.frame(n).leftCols(jm);
      if (n < pf.window.last && jm > 0) {
        const double s = sigma_min(field(lambda, n) * unstable);
        pf.min_regularity = std::min(pf.min_regularity, s);
        if (s < opt.sigma_reg) irregular(n, s);
      }
      Matrix both(d, d);
      both << up.frame(n).rightCols(d - jp), unstable;
      if (sigma_min(both) < opt.sigma_reg) {
        throw CertificationError(
            "no dichotomy on the full line: stable and unstable subspaces "
            "intersect at n=" +
            std::to_string(n));
      }
      pf.matrices.push_back(oblique_projector(up.frame(n).rightCols(d - jp), unstable));
    }
  }
  validate_family(field, lambda, pf, opt.tau_inv);
  return pf;
}

EDWitness verify_ed(const DiscreteVectorField& field, const Parameter& lambda,
                    const ProjectorFamily& pf, long horizon) {
  const long first = pf.window.first;
  const long last = pf.window.last;
  if (last <= first) throw InputError("projector window has a single time");
  const int d = field.dimension();
  const Matrix id = Matrix::Identity(d, d);
  const long reach = horizon > 0 ? horizon : last - first;

  std::vector<Matrix> a;
  for (long n = first; n < last; ++n) a.push_back(field(lambda, n));
  auto A = [&](long n) -> const Matrix& { return a[static_cast<std::size_t>(n - first)]; };

  // log-growth samples: (k - n, log sigma_max) of images pushed forward and
  // (k - n, log sigma_min) on kernels, the latter as minus the log norm of
  // the kernel inverse pulled back from k (forward products of kernel frames
  // lose the smallest singular value to rounding).
  struct Sample { long m; double l; long n; };
  std::vector<Sample> grow, expand;
  std::vector<Matrix> back(static_cast<std::size_t>(last - first));
  for (long n = first; n < last; ++n) {
    const Matrix c = pf.kernel_frame(n);
    if (c.cols() == 0) continue;
    const Matrix ac = A(n) * c;
    const double low = sigma_min(ac);
    if (!(low > 0)) irregular(n, low);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(ac);
    back[static_cast<std::size_t>(n - first)] = c * cod.pseudoInverse() * (id - pf.at(n + 1));
  }
  for (long n = first; n < last; ++n) {
    Matrix x = pf.image_frame(n);
    double sx = 0.0;
    for (long k = n + 1; k <= std::min(last, n + reach) && x.cols() > 0; ++k) {
      x = pf.at(k) * A(k - 1) * x;
      const double top = sigma_max(x);
      if (!(top > 0)) throw NumericError("image orbit vanished at k=" + std::to_string(k));
      sx += std::log(top);
      grow.push_back({k - n, sx, n});
      x /= top;
    }
  }
  for (long k = first + 1; k <= last; ++k) {
    Matrix z = pf.kernel_frame(k);
    double sz = 0.0;
    for (long n = k - 1; n >= std::max(first, k - reach) && z.cols() > 0; --n) {
      z = back[static_cast<std::size_t>(n - first)] * z;
      const double top = sigma_max(z);
      if (!(top > 0)) throw NumericError("kernel inverse vanished at n=" + std::to_string(n));
      sz += std::log(top);
      expand.push_back({k - n, -sz, n});
      z /= top;
    }
  }

  auto slope = [](const std::vector<Sample>& s) {
    double sm = 0, sl = 0, smm = 0, sml = 0;
    for (const auto& p : s) {
      sm += p.m;
      sl += p.l;
      smm += double(p.m) * p.m;
      sml += p.m * p.l;
    }
    const double n = static_cast<double>(s.size());
    const double var = smm - sm * sm / n;
    if (var <= 0) return sl / sm;
    return (sml - sm * sl / n) / var;
  };

  EDWitness w;
  w.projectors = pf;
  w.interval = pf.window;
  double log_alpha = std::log(1e-12);
  if (!grow.empty()) log_alpha = std::max(log_alpha, slope(grow));
  if (!expand.empty()) log_alpha = std::max(log_alpha, -slope(expand));
  if (log_alpha >= 0) {
    const auto& s = grow.empty() ? expand : grow;
    long worst = s.front().n;
    std::ostringstream os;
    os << "not an exponential dichotomy: fitted rate alpha=" << std::exp(log_alpha)
       << " >= 1 (orbit from n=" << worst << ")";
    throw CertificationError(os.str());
  }
  double log_k = 0.0;
  for (const auto& p : grow) log_k = std::max(log_k, p.l - p.m * log_alpha);
  for (const auto& p : expand) log_k = std::max(log_k, -p.l - p.m * log_alpha);
  w.alpha = std::exp(log_alpha);
  w.K = std::exp(log_k);
  w.checked_pairs = static_cast<long>(grow.size() + expand.size());

  // Independent check with true products and least-norm preimages.
  const double slack = std::log(1.05);
  constexpr long short_reach = 20;
  constexpr double floor_eps = 64 * std::numeric_limits<double>::epsilon();
  w.worst_excess = -std::numeric_limits<double>::infinity();
  for (long n = first; n < last; ++n) {
    const Matrix s = pf.image_frame(n);
    const Matrix u = pf.kernel_frame(n);
    Matrix phi = id;
    for (long k = n + 1; k <= std::min({last, n + reach, n + short_reach}); ++k) {
      phi = A(k - 1) * phi;
      const long m = k - n;
      const double bound = log_k + m * log_alpha;
      if (s.cols() > 0) {
        // Forward products of stable frames pick up the frame error times
        // |Phi|; only the part above that floor is attributed to the bound.
        const double floor = (pf.invariance_residual + floor_eps) * sigma_max(phi);
        const double top = sigma_max(phi * s) - floor;
        const double e = (top > 0 ? std::log(top) : -700.0) - bound;
        w.worst_excess = std::max(w.worst_excess, e);
      }
      if (u.cols() > 0) {
        // Skipped once the smallest singular value is below rounding.
        const Matrix pu = phi * u;
        const double low = sigma_min(pu);
        if (low > 1e3 * floor_eps * sigma_max(pu)) {
          w.worst_excess = std::max(w.worst_excess, -bound - std::log(low));
        }
      }
      ++w.checked_pairs;
      if (w.worst_excess > slack) {
        std::ostringstream os;
        os << "dichotomy bound fails by factor " << std::exp(w.worst_excess)
           << " for (k, n) = (" << k << ", " << n << ")";
        throw CertificationError(os.str());
      }

      const Matrix target = pf.image_frame(k);
      if (target.cols() == 0) continue;
      Eigen::JacobiSVD<Matrix> svd(phi);
      const auto sv = svd.singularValues();
      if (!(sv(sv.size() - 1) > sv(0) * 1e-12)) continue;
      Eigen::CompleteOrthogonalDecomposition<Matrix> cod(phi);
      const Matrix z = cod.solve(target);
      if ((phi * z - target).cwiseAbs().maxCoeff() > 1e-8) continue;
      const double low = sigma_min(z);
      if ((low > 0 ? std::log(low) : -700.0) < -bound - slack) {
        std::ostringstream os;
        os << "least-norm preimage bound fails for (k, n) = (" << k << ", " << n
           << "): " << low << " < " << std::exp(-bound) / 1.05;
        throw CertificationError(os.str());
      }
      ++w.inverse_checked_pairs;
    }
  }
  return w;
}

}  // namespace hombif
