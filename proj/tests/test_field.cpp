#include "doctest.h"

#include "hombif/errors.hpp"
#include "hombif/field.hpp"
#include "hombif/matrixcore.hpp"

#include <cmath>
#include <numbers>

using namespace hombif;

namespace {

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

const Parameter p0{};

}  // namespace

TEST_CASE("propagator of an autonomous field") {
  auto f = autonomous_field(diag2(0.5, 2));
  CHECK(max_abs(propagator(f, p0, 3, 0) - diag2(0.125, 8)) < 1e-15);
  CHECK(max_abs(propagator(f, p0, 7, 7) - Matrix::Identity(2, 2)) == 0.0);
  CHECK_THROWS_AS(propagator(f, p0, 0, 1), DomainError);
  CHECK_THROWS_AS(propagator(f, p0, 20001, 0), DomainError);
}

TEST_CASE("propagator multiplies in descending time order") {
  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  auto loop = ParameterLoop::circle(8);
  std::vector<std::vector<Matrix>> table(8, {swap, diag2(2, 3)});
  auto f = tabulated_field(2, TimeWindow{0, 1}, table);
  Matrix expect(2, 2);
  expect << 0, 2, 3, 0;
  CHECK(max_abs(propagator(f, loop[0], 2, 0) - expect) == 0.0);
  // Outside the window the edge matrices repeat.
  CHECK(max_abs(f(loop[2], 40) - diag2(2, 3)) == 0.0);
  CHECK(max_abs(f(loop[2], -40) - swap) == 0.0);
  CHECK_THROWS_AS(f(Parameter{}, 0), DomainError);
}

TEST_CASE("propagator overflow is detected") {
  auto f = autonomous_field(diag2(10, 10));
  CHECK_THROWS_AS(propagator(f, p0, 200, 0), NumericError);
}

TEST_CASE("cocycle identity") {
  auto loop = ParameterLoop::circle(16);
  auto f = realization_field(mobius_bundle(loop), trivial_bundle(loop, 2, 1),
                             0.5, -3, 3,
                             [](const Parameter& l, long n) -> Matrix {
                               Matrix t(2, 2);
                               t << 1.1, 0.2 * std::sin(l.angle() + n), 0.1, 0.9;
                               return t;
                             });
  for (long n = -6; n <= 4; n += 2) {
    for (long m = n; m <= 6; m += 3) {
      for (long k = m; k <= 8; k += 4) {
        const Matrix lhs = propagator(f, loop[5], k, m) * propagator(f, loop[5], m, n);
        const Matrix rhs = propagator(f, loop[5], k, n);
        CHECK(max_abs(lhs - rhs) <= 1e-12 * std::max(1.0, max_abs(rhs)));
      }
    }
  }
}

TEST_CASE("hyperbolic family from an axis-aligned line") {
  auto loop = ParameterLoop::circle(16);
  auto h = construct_hyperbolic_family(trivial_bundle(loop, 2, 1), 0.5);
  for (const auto& l : loop.samples()) {
    CHECK(max_abs(h(l, 0) - diag2(0.5, 2)) < 1e-15);
  }
  CHECK_THROWS_AS(construct_hyperbolic_family(trivial_bundle(loop, 2, 1), 1.0),
                  DomainError);
  CHECK_THROWS_AS(construct_hyperbolic_family(trivial_bundle(loop, 2, 1), 0.0),
                  DomainError);
}

TEST_CASE("Mobius family: stable eigenvector is the half-angle frame") {
  auto loop = ParameterLoop::circle(16);
  auto e = mobius_bundle(loop);
  CHECK(max_abs(e.frames[0] - Matrix::Identity(2, 1)) < 1e-15);
  Matrix up(2, 1);
  up << 0, 1;
  CHECK(max_abs(e.frames[8] - up) < 1e-15);

  auto h = construct_hyperbolic_family(e, 0.5);
  for (const auto& l : loop.samples()) {
    const auto s = spectral_projector_eigen(h(l, 0));
    CHECK(max_abs(s.stable_projector - e.projector_at(l)) < 1e-12);
    CHECK(s.stable_rank == 1);
  }
  auto rep = check_hyperbolic_family(e, 0.5);
  CHECK(rep.max_eigen_residual <= 1e-10);
  // |H_i - H_j| is (q^{-1} - q)|Pi_i - Pi_j| = 1.5 * sqrt(2) sin(angle).
  CHECK(rep.continuity_constant == doctest::Approx(1.5 * std::sqrt(2.0)).epsilon(1e-2));
}

TEST_CASE("bundle validation") {
  auto loop = ParameterLoop::circle(8);
  auto e = mobius_bundle(loop);
  e.validate();
  auto coarse = e;
  coarse.frames[3] = coarse.frames[5];
  CHECK_THROWS_AS(coarse.validate(), DomainError);
  auto bad = e;
  bad.frames[2] *= 2.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  CHECK(e.max_consecutive_angle() == doctest::Approx(std::numbers::pi / 8));

  auto sum = whitney_sum(e, e);
  CHECK(sum.rank == 2);
  CHECK(sum.ambient == 4);
  sum.validate();
}

TEST_CASE("realization field pieces") {
  auto loop = ParameterLoop::circle(16);
  auto e = mobius_bundle(loop);
  auto line = trivial_bundle(loop, 2, 1);
  auto f = realization_field(e, line, 0.5, -2, 3);
  auto he = construct_hyperbolic_family(e, 0.5);
  auto hf = construct_hyperbolic_family(line, 0.5);
  for (const auto& l : loop.samples()) {
    for (long n = -6; n <= 6; ++n) {
      Matrix expect = n < -2  ? hf(l, n)
                      : n > 3 ? he(l, n)
                              : Matrix::Identity(2, 2);
      CHECK(max_abs(f(l, n) - expect) == 0.0);
    }
  }
  CHECK(f.kind() == FieldKind::constructed);

  auto same = realization_field(line, line, 0.5, -2, 3,
                                [](const Parameter&, long) -> Matrix {
                                  return diag2(0.5, 2);
                                });
  for (long n = -6; n <= 6; ++n) CHECK(max_abs(same(loop[1], n) - diag2(0.5, 2)) == 0.0);

  CHECK_THROWS_AS(realization_field(e, line, 0.5, 0, 3), DomainError);
  CHECK_THROWS_AS(realization_field(e, line, 0.5, -2, 3,
                                    [](const Parameter&, long n) -> Matrix {
                                      return n == 1 ? diag2(1, 0) : diag2(1, 1);
                                    }),
                  InputError);
}

TEST_CASE("perturbation smallness report") {
  auto loop = ParameterLoop::circle(8);
  auto base = autonomous_field(diag2(0.5, 2));
  auto zero = perturb_field(base, [](const Parameter&, long) -> Matrix {
    return Matrix::Zero(2, 2);
  }, 1e-9, 1e-9, 0, 0, loop);
  CHECK(zero.report.holds());
  CHECK(!zero.report.note.empty());

  auto small = perturb_field(base, [](const Parameter&, long n) -> Matrix {
    return (0.01 / (1.0 + std::abs(n))) * Matrix::Identity(2, 2);
  }, 0.02, 0.02, 0, 0, loop);
  CHECK(small.report.holds());
  CHECK(max_abs(small.field(loop[0], 0) - diag2(0.51, 2.01)) < 1e-15);

  auto large = perturb_field(base, [](const Parameter&, long) -> Matrix {
    return Matrix::Identity(2, 2);
  }, 0.5, 0.5, 4, -4, loop);
  CHECK(!large.report.holds_plus);
  CHECK(!large.report.holds_minus);
  REQUIRE(large.report.first_violation_plus.has_value());
  CHECK(*large.report.first_violation_plus == 4);
  CHECK(*large.report.first_violation_minus == -4);
  CHECK_THROWS_AS(perturb_field(base, {}, 0.0, 1.0, 0, 0, loop), DomainError);
}

TEST_CASE("sampled bound") {
  auto loop = ParameterLoop::circle(8);
  auto f = autonomous_field(diag2(0.5, -3));
  CHECK(!f.bound().has_value());
  CHECK(f.compute_bound(loop) == doctest::Approx(3.0));
  CHECK(f.scaled(0.5).bound().value() == doctest::Approx(1.5));
}
