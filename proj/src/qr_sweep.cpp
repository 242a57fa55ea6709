#include "qr_sweep.hpp"

#include "hombif/errors.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace hombif::detail {

namespace {

// Per-step rates below this are treated as an annihilated direction.
constexpr double min_log_r = -700.0;

void qr_step(const Matrix& m, Matrix& q, Vector& log_r) {
  const auto d = m.rows();
  Eigen::HouseholderQR<Matrix> qr(m);
  q = qr.householderQ() * Matrix::Identity(d, d);
  log_r.resize(d);
  const auto& r = qr.matrixQR();
  for (Eigen::Index i = 0; i < d; ++i) {
    const double v = std::abs(r(i, i));
    if (r(i, i) < 0) q.col(i) = -q.col(i);
    log_r(i) = v > 0 ? std::max(std::log(v), min_log_r) : min_log_r;
  }
}

}  // namespace

Matrix random_orthogonal(int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = g(rng);
  Matrix q;
  Vector unused;
  qr_step(m, q, unused);
  return q;
}

Vector Sweep::mean_rate(long a, long b) const {
  Vector s = Vector::Zero(frames.front().cols());
  for (long n = a; n < b; ++n) s += step(n);
  return s / static_cast<double>(b - a);
}

Sweep forward_sweep(const DiscreteVectorField& field, const Parameter& lambda,
                    long lo, long hi, const Matrix& start) {
  Sweep s;
  s.lo = lo;
  s.hi = hi;
  const auto len = static_cast<std::size_t>(hi - lo + 1);
  s.frames.resize(len);
  s.log_r.resize(len);
  s.frames[0] = start;
  for (long n = lo; n < hi; ++n) {
    const auto i = static_cast<std::size_t>(n - lo);
    qr_step(field(lambda, n) * s.frames[i], s.frames[i + 1], s.log_r[i]);
  }
  return s;
}

Sweep backward_sweep(const DiscreteVectorField& field, const Parameter& lambda,
                     long lo, long hi, const Matrix& start) {
  Sweep s;
  s.lo = lo;
  s.hi = hi;
  const auto len = static_cast<std::size_t>(hi - lo + 1);
  s.frames.resize(len);
  s.log_r.resize(len);
  s.frames[len - 1] = start;
  for (long n = hi - 1; n >= lo; --n) {
    const auto i = static_cast<std::size_t>(n - lo);
    qr_step(field(lambda, n).transpose() * s.frames[i + 1], s.frames[i],
            s.log_r[i]);
  }
  return s;
}

int count_expanding(const Vector& rates, double delta, std::string& reason) {
  const auto d = rates.size();
  Eigen::Index j = 0;
  while (j < d && rates(j) >= delta) ++j;
  for (Eigen::Index i = j; i < d; ++i) {
    if (rates(i) > -delta) {
      std::ostringstream os;
      os << "no dichotomy detected: growth rate " << rates(i)
         << " lies within +-" << delta << " of zero";
      reason = os.str();
      return -1;
    }
  }
  return static_cast<int>(j);
}

}  // namespace hombif::detail
