#include "hombif/dichotomy.hpp"

#include "hombif/errors.hpp"
#include "hombif/matrixcore.hpp"
#include "qr_sweep.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace hombif {

const char* to_string(EDVerdict v) {
  switch (v) {
    case EDVerdict::dichotomy: return "dichotomy";
    case EDVerdict::no_dichotomy: return "no_dichotomy";
    case EDVerdict::indeterminate: return "indeterminate";
  }
  return "unknown";
}

namespace {

using RateGroup = LineDichotomy::RateGroup;

// Columns whose rates agree within their quarter-to-quarter drift are one
// group; a complex pair trades growth between its two columns, so only the
// group mean settles.
std::vector<RateGroup> group_rates(const detail::Sweep& sw, long a, long b) {
  const long q = (b - a) / 4;
  const Vector mean = sw.mean_rate(a, b);
  const auto d = mean.size();
  std::vector<Vector> quarter;
  for (int i = 0; i < 4; ++i) {
    quarter.push_back(sw.mean_rate(a + i * q, i == 3 ? b : a + (i + 1) * q));
  }
  Vector drift = Vector::Zero(d);
  for (const auto& m : quarter) drift = drift.cwiseMax((m - mean).cwiseAbs());

  std::vector<RateGroup> groups;
  Eigen::Index start = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const bool close = i + 1 < d &&
        std::abs(mean(i) - mean(i + 1)) <= 3 * (drift(i) + drift(i + 1)) + 1e-9;
    if (close) continue;
    const auto len = i - start + 1;
    RateGroup g;
    g.size = static_cast<int>(len);
    g.rate = mean.segment(start, len).mean();
    for (const auto& m : quarter) {
      g.uncertainty = std::max(g.uncertainty, std::abs(m.segment(start, len).mean() - g.rate));
    }
    groups.push_back(g);
    start = i + 1;
  }
  return groups;
}

double sigma_min_of(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

}  // namespace

LineDichotomy::LineDichotomy(const DiscreteVectorField& field,
                             const Parameter& lambda, long horizon,
                             const DichotomyOptions& opt)
    : LineDichotomy(field, lambda, std::min(-1L, field.window().first),
                    std::max(1L, field.window().last), horizon, opt) {}

LineDichotomy::LineDichotomy(const DiscreteVectorField& field,
                             const Parameter& lambda, long kappa_minus,
                             long kappa_plus, long horizon,
                             const DichotomyOptions& opt)
    : sigma_min_(opt.sigma_reg) {
  if (horizon < 20) throw InputError("horizon must be at least 20");
  if (!(kappa_minus < 0 && kappa_plus > 0)) {
    throw InputError("tail anchors must satisfy kappa_minus < 0 < kappa_plus");
  }
  const Matrix start = detail::random_orthogonal(field.dimension(), opt.seed);
  auto up = detail::backward_sweep(field, lambda, 0, kappa_plus + 2 * horizon, start);
  plus_ = group_rates(up, kappa_plus, kappa_plus + horizon);
  plus_frame_ = up.frame(0);
  auto down = detail::forward_sweep(field, lambda, kappa_minus - 2 * horizon, 0, start);
  minus_ = group_rates(down, kappa_minus - horizon, kappa_minus);
  minus_frame_ = down.frame(0);
}

GammaVerdict LineDichotomy::at(double gamma) const {
  GammaVerdict v;
  v.gamma = gamma;
  if (!(gamma > 0)) throw InputError("gamma must be positive");
  const double g = std::log(gamma);
  auto stable_count = [&](const std::vector<RateGroup>& groups, const char* side,
                          int& count) {
    count = 0;
    for (const auto& grp : groups) {
      const double gap = grp.rate - g;
      if (std::abs(gap) <= std::max(floor_, 4 * grp.uncertainty)) {
        std::ostringstream os;
        os << side << " growth factor " << std::exp(grp.rate) << " (+-"
           << grp.uncertainty << " in log) is not resolved from gamma";
        v.reason = os.str();
        return false;
      }
      if (gap < 0) count += grp.size;
    }
    return true;
  };
  const bool ok_plus = stable_count(plus_, "plus-side", v.stable_rank_plus);
  const bool ok_minus = ok_plus && stable_count(minus_, "minus-side", v.stable_rank_minus);
  if (!ok_plus || !ok_minus) {
    v.verdict = EDVerdict::indeterminate;
    return v;
  }
  if (v.stable_rank_plus != v.stable_rank_minus) {
    v.verdict = EDVerdict::no_dichotomy;
    v.reason = "stable ranks differ: " + std::to_string(v.stable_rank_plus) +
               " on the plus side, " + std::to_string(v.stable_rank_minus) +
               " on the minus side";
    return v;
  }
  const auto d = plus_frame_.rows();
  const int k = v.stable_rank_plus;
  if (k == 0 || k == d) {
    v.transversality = 1.0;
  } else {
    Matrix both(d, d);
    both << plus_frame_.rightCols(k), minus_frame_.leftCols(d - k);
    v.transversality = sigma_min_of(both);
  }
  if (v.transversality < sigma_min_) {
    v.verdict = EDVerdict::no_dichotomy;
    v.reason = "forward-decaying and backward-decaying subspaces intersect at time 0";
    return v;
  }
  v.verdict = EDVerdict::dichotomy;
  return v;
}

GammaVerdict full_line_verdict(const DiscreteVectorField& field,
                               const Parameter& lambda, long horizon,
                               const DichotomyOptions& opt) {
  return LineDichotomy(field, lambda, horizon, opt).at(1.0);
}

SpectrumResult dichotomy_spectrum(const DiscreteVectorField& field,
                                  const Parameter& lambda,
                                  const SpectrumOptions& so,
                                  const DichotomyOptions& opt) {
  if (!(so.gamma_min > 0 && so.gamma_min < so.gamma_max)) {
    throw InputError("spectrum range needs 0 < gamma_min < gamma_max");
  }
  if (so.grid_size < 16) throw InputError("spectrum grid needs at least 16 points");
  if (!(so.relative_precision > 0)) throw InputError("relative precision must be positive");

  const LineDichotomy line(field, lambda, so.horizon, opt);
  SpectrumResult res;
  const double lo = std::log(so.gamma_min);
  const double hi = std::log(so.gamma_max);
  for (int i = 0; i < so.grid_size; ++i) {
    const double g = std::exp(lo + (hi - lo) * i / (so.grid_size - 1));
    res.grid.push_back(g);
    res.verdicts.push_back(line.at(g));
  }
  res.evaluations = so.grid_size;

  const double tight = std::log1p(so.relative_precision);
  auto pass = [](const GammaVerdict& v) { return v.verdict == EDVerdict::dichotomy; };
  auto eval = [&](double g) {
    ++res.evaluations;
    return line.at(g);
  };

  struct Edge {
    GammaVerdict inside;   // last passing verdict found
    double outside = 0.0;  // closest failing gamma
    bool indeterminate = false;
  };
  // Narrows [passing, failing] to the requested relative width.
  auto bisect = [&](GammaVerdict in, double out, bool flag) {
    Edge e{in, out, flag};
    while (std::abs(std::log(e.outside / e.inside.gamma)) > tight) {
      const double mid = std::sqrt(e.outside * e.inside.gamma);
      auto v = eval(mid);
      if (pass(v)) {
        e.inside = v;
      } else {
        e.outside = mid;
        e.indeterminate |= v.verdict == EDVerdict::indeterminate;
      }
    }
    return e;
  };

  // Between two passing gammas with different stable ranks lies spectrum.
  std::function<void(const GammaVerdict&, const GammaVerdict&)> locate =
      [&](const GammaVerdict& a, const GammaVerdict& b) {
        if (std::log(b.gamma / a.gamma) <= tight) {
          res.intervals.push_back({a.gamma, b.gamma, false});
          return;
        }
        const auto v = eval(std::sqrt(a.gamma * b.gamma));
        if (pass(v)) {
          if (v.stable_rank_plus != a.stable_rank_plus) locate(a, v);
          if (v.stable_rank_plus != b.stable_rank_plus) locate(v, b);
          return;
        }
        const bool flag = v.verdict == EDVerdict::indeterminate;
        const Edge left = bisect(a, v.gamma, flag);
        const Edge right = bisect(b, v.gamma, flag);
        res.intervals.push_back({left.outside, right.outside,
                                 left.indeterminate || right.indeterminate});
        if (left.inside.stable_rank_plus != a.stable_rank_plus) locate(a, left.inside);
        if (right.inside.stable_rank_plus != b.stable_rank_plus) locate(right.inside, b);
      };

  const auto n = res.grid.size();
  std::size_t i = 0;
  while (i < n) {
    if (pass(res.verdicts[i])) {
      if (i + 1 < n && pass(res.verdicts[i + 1]) &&
          res.verdicts[i].stable_rank_plus != res.verdicts[i + 1].stable_rank_plus) {
        locate(res.verdicts[i], res.verdicts[i + 1]);
      }
      ++i;
      continue;
    }
    std::size_t j = i;
    bool flag = false;
    while (j < n && !pass(res.verdicts[j])) {
      flag |= res.verdicts[j].verdict == EDVerdict::indeterminate;
      ++j;
    }
    SpectralInterval iv{res.grid[i], res.grid[j - 1], flag};
    if (i > 0) {
      const Edge e = bisect(res.verdicts[i - 1], res.grid[i], flag);
      iv.lower = e.outside;
      iv.indeterminate |= e.indeterminate;
      if (e.inside.stable_rank_plus != res.verdicts[i - 1].stable_rank_plus) {
        locate(res.verdicts[i - 1], e.inside);
      }
    }
    if (j < n) {
      const Edge e = bisect(res.verdicts[j], res.grid[j - 1], flag);
      iv.upper = e.outside;
      iv.indeterminate |= e.indeterminate;
      if (e.inside.stable_rank_plus != res.verdicts[j].stable_rank_plus) {
        locate(e.inside, res.verdicts[j]);
      }
    }
    res.intervals.push_back(iv);
    i = j;
  }

  std::sort(res.intervals.begin(), res.intervals.end(),
            [](const auto& a, const auto& b) { return a.lower < b.lower; });
  std::vector<SpectralInterval> merged;
  for (const auto& iv : res.intervals) {
    if (!merged.empty() && iv.lower <= merged.back().upper * (1 + so.relative_precision)) {
      merged.back().upper = std::max(merged.back().upper, iv.upper);
      merged.back().indeterminate |= iv.indeterminate;
    } else {
      merged.push_back(iv);
    }
  }
  res.intervals = std::move(merged);
  return res;
}

ProjectorFamily shift_operator_projector(const DiscreteVectorField& field,
                                         const Parameter& lambda,
                                         long truncation, int nodes) {
  if (truncation < 16) throw InputError("shift truncation needs N >= 16");
  const int d = field.dimension();
  const long n_count = truncation;
  const long n0 = -n_count / 2;
  const long size = n_count * d;
  Matrix big = Matrix::Zero(size, size);
  for (long i = 0; i < n_count; ++i) {
    const long src = (i - 1 + n_count) % n_count;
    big.block(i * d, src * d, d, d) = field(lambda, n0 + src);
  }
  const auto h = is_hyperbolic(big);
  if (h.verdict != Hyperbolicity::hyperbolic) {
    std::ostringstream os;
    os << "closed weighted shift over " << n_count << " steps is "
       << to_string(h.verdict) << " (gap " << h.gap
       << "); either the field has no dichotomy on the line or the truncation "
          "is too short, try a larger N";
    throw IndeterminateError(os.str());
  }
  const auto split = spectral_projector_contour(big, nodes);
  const long layer = n_count / 8;
  ProjectorFamily pf;
  pf.side = Side::full;
  pf.anchor = 0;
  pf.window = {n0 + layer, n0 + n_count - 1 - layer};
  pf.complement_choice = "spectral projector of the periodically closed weighted shift";
  for (long i = layer; i < n_count - layer; ++i) {
    pf.matrices.push_back(split.stable_projector.block(i * d, i * d, d, d));
  }
  pf.rank = rank_from_trace(pf.matrices.front());
  pf.min_regularity = std::numeric_limits<double>::infinity();
  for (long n = pf.window.first; n <= pf.window.last; ++n) {
    const Matrix& p = pf.at(n);
    pf.idempotency_residual = std::max(pf.idempotency_residual, (p * p - p).cwiseAbs().maxCoeff());
    Eigen::JacobiSVD<Matrix> svd(p);
    pf.sup_norm = std::max(pf.sup_norm, svd.singularValues()(0));
    if (n < pf.window.last) {
      const Matrix a = field(lambda, n);
      const double r = (a * p - pf.at(n + 1) * a).cwiseAbs().maxCoeff();
      if (r > pf.invariance_residual) {
        pf.invariance_residual = r;
        pf.worst_invariance_time = n;
      }
      const Matrix ker = pf.kernel_frame(n);
      if (ker.cols() > 0) pf.min_regularity = std::min(pf.min_regularity, sigma_min_of(a * ker));
    }
  }
  return pf;
}

}  // namespace hombif
