#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hombif {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;

/// Throws InputError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);

/// Closed integer time interval [first, last].
struct TimeWindow {
  long first = 0;
  long last = 0;

  long length() const { return last - first + 1; }
  bool contains(long n) const { return n >= first && n <= last; }
  bool contains(const TimeWindow& w) const {
    return w.first >= first && w.last <= last;
  }
};

/// A point of the parameter space. Sampled points carry their loop index;
/// off-grid points (used by refinement) have index -1 and are only
/// understood by fields with a continuous parametrization.
struct Parameter {
  std::ptrdiff_t index = -1;
  std::vector<double> coords;

  double angle() const { return coords.empty() ? 0.0 : coords.front(); }
  std::string label() const;
};

/// Ordered samples of a closed loop; sample N wraps to sample 0.
class ParameterLoop {
 public:
  ParameterLoop() = default;
  explicit ParameterLoop(std::vector<Parameter> samples, bool angular = false);

  /// Standard angular loop theta_i = 2*pi*i/N.
  static ParameterLoop circle(std::size_t n);

  std::size_t size() const { return samples_.size(); }
  const Parameter& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<Parameter>& samples() const { return samples_; }
  bool angular() const { return angular_; }

  /// Same loop traversed from sample `start` (indices are renumbered).
  ParameterLoop rotated(std::size_t start) const;
  /// Angular loop with twice as many samples.
  ParameterLoop refined() const;

 private:
  std::vector<Parameter> samples_;
  bool angular_ = false;
};

/// Orthonormal basis of the column space, rank decided by `rank`.
Matrix orthonormalize(const Matrix& columns);
/// Orthonormal basis of the orthogonal complement of span(columns).
Matrix orthogonal_complement(const Matrix& frame, int ambient);
/// Projector onto span(image) along span(kernel); [image kernel] must be a basis.
Matrix oblique_projector(const Matrix& image, const Matrix& kernel);
/// Max-row-sum norm.
double inf_norm(const Matrix& m);

/// Numerical nullity of a matrix with singular values `sv` (descending) and
/// `cols` columns. Singular values below `zero_tol * sv[0]` count as zero;
/// returns -1 if the smallest nonzero and largest zero value are not
/// separated by `gap`.
int numerical_nullity(const Vector& sv, Eigen::Index cols, double zero_tol,
                      double gap);

}  // namespace hombif
