#include "doctest.h"

#include "hombif/core.hpp"
#include "hombif/errors.hpp"

#include <limits>

using namespace hombif;

TEST_CASE("parameter loop needs eight distinct samples") {
  CHECK_THROWS_AS(ParameterLoop::circle(7), InputError);
  auto loop = ParameterLoop::circle(8);
  CHECK(loop.size() == 8);
  CHECK(loop[3].index == 3);

  std::vector<Parameter> s(8);
  for (std::size_t i = 0; i < 8; ++i) s[i].coords = {double(i % 7)};
  CHECK_THROWS_AS(ParameterLoop{s}, InputError);
}

TEST_CASE("rotated loop renumbers from the new start") {
  auto loop = ParameterLoop::circle(16).rotated(5);
  CHECK(loop[0].index == 0);
  CHECK(loop[0].angle() == doctest::Approx(2 * 3.141592653589793 * 5 / 16));
  CHECK(loop.refined().size() == 32);
}

TEST_CASE("oblique projector") {
  Matrix img(2, 1), ker(2, 1);
  img << 1, 0;
  ker << 1, 1;
  const Matrix p = oblique_projector(img, ker);
  Matrix expect(2, 2);
  expect << 1, -1, 0, 0;
  CHECK((p - expect).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((p * p - p).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("orthonormalize keeps orientation") {
  Matrix a(3, 2);
  a << 2, 0, 0, 3, 0, 1;
  const Matrix q = orthonormalize(a);
  CHECK((q.transpose() * q - Matrix::Identity(2, 2)).norm() < 1e-14);
  CHECK(q(0, 0) > 0);
  CHECK(q(1, 1) > 0);
  const Matrix c = orthogonal_complement(q, 3);
  CHECK(c.cols() == 1);
  CHECK((q.transpose() * c).norm() < 1e-14);
}

TEST_CASE("numerical nullity needs a gap") {
  Vector sv(3);
  sv << 1.0, 0.5, 1e-14;
  CHECK(numerical_nullity(sv, 3, 1e-8, 1e3) == 1);
  sv << 1.0, 1e-7, 1e-9;
  CHECK(numerical_nullity(sv, 3, 1e-8, 1e3) == -1);
  sv << 1.0, 0.5, 0.2;
  CHECK(numerical_nullity(sv, 4, 1e-8, 1e3) == 1);
}

TEST_CASE("non-finite input is rejected") {
  Matrix m = Matrix::Identity(2, 2);
  m(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(require_finite(m, "m"), InputError);
}
