#include "hombif/bundle.hpp"

#include "hombif/errors.hpp"
#include "hombif/matrixcore.hpp"
#include "hombif/parallel.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

namespace hombif {

KOClassDesk ko_difference(const SampledBundle& e, const SampledBundle& f) {
  if (e.base.size() != f.base.size()) throw InputError("bundles live over different loops");
  KOClassDesk c;
  c.virtual_rank = e.rank - f.rank;
  c.delta_w1 = (first_sw_class(e) + first_sw_class(f)) % 2;
  c.provenance = "[" + (e.name.empty() ? "E" : e.name) + "] - [" +
                 (f.name.empty() ? "F" : f.name) + "]";
  return c;
}

SampledBundle bundle_from_projectors(const ParameterLoop& loop,
                                     const std::vector<Matrix>& projectors,
                                     BundlePart part, std::string name) {
  if (projectors.size() != loop.size()) {
    throw InputError("need one projector per loop sample");
  }
  if (projectors.empty()) throw InputError("empty loop");
  const int d = static_cast<int>(projectors.front().rows());
  SampledBundle b;
  b.base = loop;
  b.ambient = d;
  b.name = std::move(name);
  int image_rank = -1;
  for (std::size_t i = 0; i < projectors.size(); ++i) {
    const Matrix& p = projectors[i];
    if (p.rows() != d || p.cols() != d) throw InputError("projectors differ in shape");
    require_finite(p, "projector");
    if ((p * p - p).cwiseAbs().maxCoeff() > tolerance::projector) {
      throw InputError("matrix at sample " + std::to_string(i) + " is not idempotent");
    }
    const int r = rank_from_trace(p);
    if (image_rank >= 0 && r != image_rank) {
      std::ostringstream os;
      os << "not a bundle at this sampling: rank jumps from " << image_rank << " to " << r
         << " on the edge (" << i - 1 << ", " << i << ")";
      throw DomainError(os.str());
    }
    image_rank = r;
    Eigen::JacobiSVD<Matrix> svd(p, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Matrix frame = part == BundlePart::image ? Matrix(svd.matrixU().leftCols(r))
                                             : Matrix(svd.matrixV().rightCols(d - r));
    if (!b.frames.empty() && frame.cols() > 0) {
      Eigen::JacobiSVD<Matrix> align(frame.transpose() * b.frames.back(),
                                     Eigen::ComputeFullU | Eigen::ComputeFullV);
      frame = frame * align.matrixU() * align.matrixV().transpose();
    }
    b.frames.push_back(std::move(frame));
  }
  b.rank = part == BundlePart::image ? image_rank : d - image_rank;
  b.validate();
  return b;
}

int monodromy_sign(const SampledBundle& e) {
  const std::size_t n = e.frames.size();
  if (n == 0) throw InputError("empty bundle");
  if (e.rank == 0) return 1;
  Matrix u = e.frames.front();
  for (std::size_t i = 1; i <= n; ++i) {
    const Matrix& next = e.frames[i % n];
    const Matrix m = next.transpose() * u;
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double low = svd.singularValues().minCoeff();
    if (!(low > 1e-8)) {
      std::ostringstream os;
      os << "sampling too coarse: fibres on the edge (" << i - 1 << ", " << i % n
         << ") are orthogonal (principal angle " << std::acos(std::min(1.0, low))
         << "); refine the loop";
      throw DomainError(os.str());
    }
    // Projection onto the next fibre followed by polar re-orthonormalization.
    u = next * (svd.matrixU() * svd.matrixV().transpose());
  }
  const double det = (e.frames.front().transpose() * u).determinant();
  return det < 0 ? -1 : 1;
}

int first_sw_class(const SampledBundle& e) { return monodromy_sign(e) < 0 ? 1 : 0; }

HalfLineBundles stable_unstable_bundles(const DiscreteVectorField& field,
                                        const ParameterLoop& loop,
                                        long kappa_plus, long kappa_minus,
                                        long horizon, const DichotomyOptions& opt) {
  if (kappa_minus > kappa_plus) throw InputError("kappa_minus must not exceed kappa_plus");
  const std::size_t n = loop.size();
  HalfLineBundles out;
  out.kappa_plus = kappa_plus;
  out.kappa_minus = kappa_minus;
  out.plus.resize(n);
  out.minus.resize(n);
  parallel_for(n, [&](std::size_t i) {
    const Parameter& lambda = loop[i];
    try {
      out.plus[i] = verify_ed(field, lambda,
                              build_projector_family(field, lambda, Side::plus, kappa_plus, horizon, opt));
      out.minus[i] = verify_ed(field, lambda,
                               build_projector_family(field, lambda, Side::minus, kappa_minus, horizon, opt));
    } catch (const Error& err) {
      throw_error(err.kind(), "at " + lambda.label() + ": " + err.what());
    }
  });
  std::vector<Matrix> pp(n), pm(n);
  for (std::size_t i = 0; i < n; ++i) {
    pp[i] = out.plus[i].projectors.at(kappa_plus);
    pm[i] = out.minus[i].projectors.at(kappa_minus);
  }
  const auto kp = std::to_string(kappa_plus);
  const auto km = std::to_string(kappa_minus);
  out.stable = bundle_from_projectors(loop, pp, BundlePart::image, "im P+(" + kp + ")");
  out.unstable = bundle_from_projectors(loop, pm, BundlePart::kernel, "ker P-(" + km + ")");
  out.minus_image = bundle_from_projectors(loop, pm, BundlePart::image, "im P-(" + km + ")");
  return out;
}

KOClassDesk index_bundle_class(const HalfLineBundles& b) {
  return ko_difference(b.stable, b.minus_image);
}

KOClassDesk index_bundle_class(const DiscreteVectorField& field,
                               const ParameterLoop& loop, long kappa_plus,
                               long kappa_minus, long horizon,
                               const DichotomyOptions& opt) {
  return index_bundle_class(
      stable_unstable_bundles(field, loop, kappa_plus, kappa_minus, horizon, opt));
}

void write_bundle_csv(std::ostream& os, const SampledBundle& e) {
  const std::size_t coords = e.base.size() ? e.base[0].coords.size() : 0;
  os << "i";
  for (std::size_t c = 0; c < coords; ++c) os << ",lambda" << c;
  for (int col = 0; col < e.rank; ++col)
    for (int row = 0; row < e.ambient; ++row) os << ",v" << col << "_" << row;
  os << "\n";
  os.precision(17);
  for (std::size_t i = 0; i < e.frames.size(); ++i) {
    os << i;
    for (double x : e.base[i].coords) os << "," << x;
    const Matrix& f = e.frames[i];
    for (int col = 0; col < e.rank; ++col)
      for (int row = 0; row < e.ambient; ++row) os << "," << f(row, col);
    os << "\n";
  }
}

}  // namespace hombif
