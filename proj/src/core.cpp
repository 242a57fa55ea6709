#include "hombif/core.hpp"

#include "hombif/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace hombif {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::input: return "input";
    case ErrorKind::domain: return "domain";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::certification: return "certification";
    case ErrorKind::indeterminate: return "indeterminate";
  }
  return "unknown";
}

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) {
    throw InputError(std::string(what) + ": non-finite entries");
  }
}

std::string Parameter::label() const {
  std::ostringstream os;
  if (index >= 0) os << "lambda[" << index << "]";
  else os << "lambda(";
  if (!coords.empty()) {
    os << (index >= 0 ? "=(" : "");
    for (std::size_t i = 0; i < coords.size(); ++i) {
      if (i) os << ",";
      os << coords[i];
    }
    os << ")";
  } else if (index < 0) {
    os << ")";
  }
  return os.str();
}

ParameterLoop::ParameterLoop(std::vector<Parameter> samples, bool angular)
    : samples_(std::move(samples)), angular_(angular) {
  if (samples_.size() < 8) {
    throw InputError("parameter loop needs at least 8 samples, got " +
                     std::to_string(samples_.size()));
  }
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    samples_[i].index = static_cast<std::ptrdiff_t>(i);
    for (std::size_t j = 0; j < i; ++j) {
      if (samples_[i].coords == samples_[j].coords) {
        throw InputError("parameter loop samples " + std::to_string(j) +
                         " and " + std::to_string(i) + " coincide");
      }
    }
  }
}

ParameterLoop ParameterLoop::circle(std::size_t n) {
  std::vector<Parameter> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i].coords = {2.0 * std::numbers::pi * static_cast<double>(i) /
                   static_cast<double>(n)};
  }
  return ParameterLoop(std::move(s), true);
}

ParameterLoop ParameterLoop::rotated(std::size_t start) const {
  std::vector<Parameter> s;
  s.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    s.push_back(samples_[(start + i) % samples_.size()]);
  }
  return ParameterLoop(std::move(s), angular_);
}

ParameterLoop ParameterLoop::refined() const {
  if (!angular_) throw DomainError("only angular loops can be refined");
  return circle(2 * samples_.size());
}

Matrix orthonormalize(const Matrix& columns) {
  const auto k = columns.cols();
  if (k == 0) return Matrix(columns.rows(), 0);
  Eigen::HouseholderQR<Matrix> qr(columns);
  Matrix q = qr.householderQ() * Matrix::Identity(columns.rows(), k);
  // Positive R diagonal keeps the orientation of the input columns.
  const Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

Matrix orthogonal_complement(const Matrix& frame, int ambient) {
  const auto k = frame.cols();
  if (k == 0) return Matrix::Identity(ambient, ambient);
  if (k >= ambient) return Matrix(ambient, 0);
  Eigen::JacobiSVD<Matrix> svd(frame, Eigen::ComputeFullU);
  return svd.matrixU().rightCols(ambient - k);
}

Matrix oblique_projector(const Matrix& image, const Matrix& kernel) {
  const auto d = image.rows();
  if (image.cols() + kernel.cols() != d) {
    throw DomainError("image and kernel dimensions do not add up");
  }
  if (image.cols() == 0) return Matrix::Zero(d, d);
  if (kernel.cols() == 0) return Matrix::Identity(d, d);
  Matrix basis(d, d);
  basis << image, kernel;
  Eigen::PartialPivLU<Matrix> lu(basis);
  Matrix sel = Matrix::Zero(d, d);
  sel.topLeftCorner(image.cols(), image.cols()).setIdentity();
  // P = B * sel * B^{-1}
  return basis * sel * lu.inverse();
}

double inf_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

int numerical_nullity(const Vector& sv, Eigen::Index cols, double zero_tol,
                      double gap) {
  const auto m = sv.size();
  if (m == 0) return static_cast<int>(cols);
  const double top = sv(0);
  if (top == 0.0) return static_cast<int>(cols);
  Eigen::Index rank = 0;
  while (rank < m && sv(rank) > zero_tol * top) ++rank;
  if (rank < m) {
    const double smallest_big = rank > 0 ? sv(rank - 1) : top;
    const double largest_small = sv(rank);
    if (largest_small > 0 && smallest_big / largest_small < gap) return -1;
  }
  return static_cast<int>(cols - rank);
}

}  // namespace hombif
