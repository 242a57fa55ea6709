#include "doctest.h"

#include "hombif/dichotomy.hpp"
#include "hombif/errors.hpp"
#include "hombif/matrixcore.hpp"
#include "random_systems.hpp"

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

Matrix rotation(double t) {
  Matrix r(2, 2);
  r << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  return r;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

// |<u, v>| for unit vectors; 1 means same line.
double alignment(const Matrix& u, const Matrix& v) {
  return std::abs((u.transpose() * v)(0, 0)) / (u.norm() * v.norm());
}

const Parameter p0{};

}  // namespace

TEST_CASE("splitting of diag(0.5, 2)") {
  auto f = autonomous_field(diag2(0.5, 2));
  auto plus = estimate_splitting(f, p0, Side::plus, 0, 50);
  REQUIRE(plus.detected);
  CHECK(plus.rank() == 1);
  CHECK(alignment(plus.stable, Matrix::Identity(2, 1)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(plus.rates(0) == doctest::Approx(std::log(0.5)).epsilon(1e-10));
  CHECK(plus.rates(1) == doctest::Approx(std::log(2.0)).epsilon(1e-10));

  auto minus = estimate_splitting(f, p0, Side::minus, 0, 50);
  REQUIRE(minus.detected);
  Matrix e2(2, 1);
  e2 << 0, 1;
  CHECK(alignment(minus.unstable, e2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(max_abs(minus.projector() - diag2(1, 0)) < 1e-12);

  CHECK_THROWS_AS(estimate_splitting(f, p0, Side::plus, 0, 10), InputError);
  CHECK_THROWS_AS(estimate_splitting(f, p0, Side::full, 0, 50), InputError);
}

TEST_CASE("splitting of the Mobius family at theta = pi/2") {
  auto loop = ParameterLoop::circle(4 * 8);
  auto h = construct_hyperbolic_family(mobius_bundle(loop), 0.5);
  const auto& l = loop[8];  // theta = pi/2
  auto s = estimate_splitting(h, l, Side::plus, 0, 60);
  REQUIRE(s.detected);
  Matrix expect(2, 1);
  expect << 0.70710678118654752, 0.70710678118654752;
  CHECK(alignment(s.stable, expect) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("no splitting for a neutral direction") {
  auto f = autonomous_field(diag2(1.0, 2.0));
  auto s = estimate_splitting(f, p0, Side::plus, 0, 50);
  CHECK(!s.detected);
  CHECK(s.reason.find("no dichotomy") != std::string::npos);
  CHECK_THROWS_AS(build_projector_family(f, p0, Side::plus, 0, 50), CertificationError);
}

TEST_CASE("projector families of an autonomous field are constant") {
  auto f = autonomous_field(diag2(0.5, 2));
  for (Side side : {Side::plus, Side::minus, Side::full}) {
    auto pf = build_projector_family(f, p0, side, 0, 100);
    CHECK(pf.rank == 1);
    for (const auto& p : pf.matrices) CHECK(max_abs(p - diag2(1, 0)) < 1e-12);
    CHECK(pf.invariance_residual <= 1e-7);
    CHECK(pf.min_regularity >= 1e-6);
  }
}

TEST_CASE("H_E family gives the orthogonal fibre projector") {
  auto loop = ParameterLoop::circle(16);
  auto e = mobius_bundle(loop);
  auto h = construct_hyperbolic_family(e, 0.5);
  for (std::size_t i = 0; i < loop.size(); i += 3) {
    auto pf = build_projector_family(h, loop[i], Side::plus, 0, 60);
    for (long n = pf.window.first; n <= pf.window.last; n += 7) {
      CHECK(max_abs(pf.at(n) - e.projector_at(loop[i])) < 1e-10);
    }
  }
}

TEST_CASE("plus family propagates the anchor complement") {
  // A_3 = [[1,1],[0,1]], A_4 = [[2,0],[1,1]], A_n = diag(0.5,2) for n >= 5.
  Matrix a3(2, 2), a4(2, 2);
  a3 << 1, 1, 0, 1;
  a4 << 2, 0, 1, 1;
  auto loop = ParameterLoop::circle(8);
  std::vector<std::vector<Matrix>> table(8, {a3, a4, diag2(0.5, 2)});
  auto f = tabulated_field(2, TimeWindow{3, 5}, table);

  auto settled = build_projector_family(f, loop[0], Side::plus, 5, 60);
  for (const auto& p : settled.matrices) CHECK(max_abs(p - diag2(1, 0)) < 1e-12);

  // Hand propagation: stable lines (2,-1), (1,-1), (1,0); kernels (1,2),
  // A_3 (1,2) = (3,2), A_4 (3,2) = (6,5).
  auto pf = build_projector_family(f, loop[0], Side::plus, 3, 60);
  Matrix p3(2, 2), p4(2, 2), p5(2, 2);
  p3 << 0.8, -0.4, -0.4, 0.2;
  p4 << 0.4, -0.6, -0.4, 0.6;
  p5 << 1, -1.2, 0, 0;
  CHECK(max_abs(pf.at(3) - p3) < 1e-12);
  CHECK(max_abs(pf.at(4) - p4) < 1e-12);
  CHECK(max_abs(pf.at(5) - p5) < 1e-12);
  CHECK(pf.invariance_residual <= 1e-7);
}

TEST_CASE("minus family keeps the backward-decaying kernel") {
  Matrix a(2, 2);
  a << 0.5, 1, 0, 2;
  auto f = autonomous_field(a);
  auto pf = build_projector_family(f, p0, Side::minus, 0, 60);
  const Matrix expect = spectral_projector_eigen(a).stable_projector;
  // The kernel is canonical; the image is the orthogonal complement of the
  // kernel at the anchor and stays invariant for an autonomous field.
  Matrix ker = pf.kernel_frame(-30);
  CHECK(max_abs(expect * ker) < 1e-10);
  CHECK(pf.invariance_residual <= 1e-7);
}

TEST_CASE("irregular splitting is reported") {
  auto loop = ParameterLoop::circle(8);
  std::vector<std::vector<Matrix>> table(8, {diag2(0.5, 2), diag2(0.5, 1e-9),
                                             diag2(0.5, 2)});
  auto f = tabulated_field(2, TimeWindow{2, 4}, table);
  try {
    build_projector_family(f, loop[0], Side::plus, 0, 60);
    FAIL("expected an irregular splitting");
  } catch (const CertificationError& e) {
    CHECK(std::string(e.what()).find("irregular") != std::string::npos);
  }
  // A non-invertible step on the image is allowed.
  std::vector<std::vector<Matrix>> ok(8, {diag2(0.5, 2), diag2(0, 2), diag2(0.5, 2)});
  auto g = tabulated_field(2, TimeWindow{2, 4}, ok);
  auto pf = build_projector_family(g, loop[0], Side::plus, 0, 60);
  CHECK(pf.rank == 1);
}

TEST_CASE("ED witnesses") {
  SUBCASE("diag(0.5, 2)") {
    auto f = autonomous_field(diag2(0.5, 2));
    auto w = verify_ed(f, p0, build_projector_family(f, p0, Side::plus, 0, 100));
    CHECK(w.K == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(w.alpha == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(w.inverse_checked_pairs > 0);
    CHECK(w.checked_pairs > 0);
  }
  SUBCASE("diag(0.9, 2)") {
    auto f = autonomous_field(diag2(0.9, 2));
    auto w = verify_ed(f, p0, build_projector_family(f, p0, Side::plus, 0, 100));
    CHECK(w.alpha == doctest::Approx(0.9).epsilon(1e-9));
  }
  SUBCASE("diag(0.5, 2) scaled by 1/4") {
    auto f = autonomous_field(diag2(0.5, 2)).scaled(0.25);
    auto pf = build_projector_family(f, p0, Side::plus, 0, 100);
    CHECK(pf.rank == 2);
    CHECK(max_abs(pf.at(10) - Matrix::Identity(2, 2)) < 1e-12);
    auto w = verify_ed(f, p0, pf);
    CHECK(w.alpha == doctest::Approx(0.5).epsilon(1e-9));
  }
  SUBCASE("minus side and non-normal field") {
    Matrix a(2, 2);
    a << 0.5, 1, 0, 2;
    auto f = autonomous_field(a);
    auto w = verify_ed(f, p0, build_projector_family(f, p0, Side::minus, 0, 80));
    CHECK(w.alpha < 1);
    CHECK(w.K >= 1);
    CHECK(w.worst_excess <= std::log(1.05));
  }
}

TEST_CASE("dichotomy spectrum of autonomous fields") {
  auto f = autonomous_field(diag2(0.5, 2));
  auto s = dichotomy_spectrum(f, p0);
  REQUIRE(s.intervals.size() == 2);
  CHECK(s.intervals[0].lower == doctest::Approx(0.5).epsilon(1e-2));
  CHECK(s.intervals[0].upper - s.intervals[0].lower <= 1e-2);
  CHECK(s.intervals[1].lower == doctest::Approx(2.0).epsilon(1e-2));
  CHECK(s.intervals[1].upper - s.intervals[1].lower <= 1e-2);
  CHECK(s.verdicts.size() == 64);

  auto rot = autonomous_field(0.7 * rotation(1.0));
  auto r = dichotomy_spectrum(rot, p0);
  REQUIRE(r.intervals.size() == 1);
  CHECK(std::abs(r.intervals[0].lower - 0.7) <= 1e-2);
  CHECK(std::abs(r.intervals[0].upper - 0.7) <= 1e-2);
}

TEST_CASE("spectrum with a non-normal complex pair") {
  std::mt19937_64 rng(7);
  const Matrix b = testing::block_with_moduli({0.6, 0.6, 3.0}, {1.1, 0.0, 0.0});
  const Matrix m = testing::similar_to(rng, b);
  auto s = dichotomy_spectrum(autonomous_field(m), p0);
  REQUIRE(s.intervals.size() == 2);
  CHECK(std::abs(s.intervals[0].lower - 0.6) <= 1e-2);
  CHECK(std::abs(s.intervals[1].upper - 3.0) <= 1e-2);
}

TEST_CASE("spectrum scales with the field") {
  auto f = autonomous_field(diag2(0.5, 2));
  auto s = dichotomy_spectrum(f, p0);
  auto t = dichotomy_spectrum(f.scaled(3.0), p0);
  REQUIRE(s.intervals.size() == t.intervals.size());
  for (std::size_t i = 0; i < s.intervals.size(); ++i) {
    CHECK(t.intervals[i].lower == doctest::Approx(3 * s.intervals[i].lower).epsilon(3e-3));
    CHECK(t.intervals[i].upper == doctest::Approx(3 * s.intervals[i].upper).epsilon(3e-3));
  }
}

TEST_CASE("spectrum of a switched field has rank-mismatch intervals") {
  auto f = switched_field(diag2(0.25, 3), diag2(0.5, 2));
  auto s = dichotomy_spectrum(f, p0);
  REQUIRE(s.intervals.size() == 2);
  CHECK(s.intervals[0].lower == doctest::Approx(0.25).epsilon(2e-3));
  CHECK(s.intervals[0].upper == doctest::Approx(0.5).epsilon(2e-3));
  CHECK(s.intervals[1].lower == doctest::Approx(2.0).epsilon(2e-3));
  CHECK(s.intervals[1].upper == doctest::Approx(3.0).epsilon(2e-3));
}

TEST_CASE("full-line verdicts") {
  CHECK(full_line_verdict(autonomous_field(diag2(0.5, 2)), p0).verdict ==
        EDVerdict::dichotomy);
  // Stable direction after the switch is unstable before it.
  auto swap = switched_field(diag2(0.5, 2), diag2(2, 0.5));
  auto v = full_line_verdict(swap, p0);
  CHECK(v.verdict == EDVerdict::no_dichotomy);
  CHECK(full_line_verdict(autonomous_field(diag2(1.0, 2)), p0).verdict ==
        EDVerdict::indeterminate);
  CHECK(full_line_verdict(switched_field(diag2(0.5, 0.6), diag2(0.5, 2)), p0).verdict ==
        EDVerdict::no_dichotomy);
}

TEST_CASE("small perturbations keep the dichotomy at gamma = 1") {
  auto base = autonomous_field(diag2(0.5, 2));
  auto s = dichotomy_spectrum(base, p0);
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& iv : s.intervals) {
    margin = std::min({margin, std::abs(iv.lower - 1), std::abs(iv.upper - 1)});
  }
  CHECK(margin == doctest::Approx(0.5).epsilon(1e-2));
  for (int trial = 0; trial < 20; ++trial) {
    auto noise = [trial, margin](const Parameter&, long n) -> Matrix {
      std::mt19937_64 rng(1000003ULL * trial + static_cast<std::uint64_t>(n + 100000));
      Matrix e(2, 2);
      for (int i = 0; i < 4; ++i) e(i) = testing::uniform(rng, -1, 1);
      Eigen::JacobiSVD<Matrix> svd(e);
      return e * (margin / 4 / svd.singularValues()(0));
    };
    auto f = base.plus(noise);
    CHECK(full_line_verdict(f, p0).verdict == EDVerdict::dichotomy);
  }
}

TEST_CASE("shift operator projector") {
  auto f = autonomous_field(diag2(0.5, 2));
  auto pf = shift_operator_projector(f, p0, 64);
  CHECK(pf.window.first == -24);
  CHECK(pf.window.last == 23);
  for (const auto& p : pf.matrices) CHECK(max_abs(p - diag2(1, 0)) <= 1e-6);

  auto half = shift_operator_projector(autonomous_field(0.5 * Matrix::Identity(2, 2)), p0, 32);
  for (const auto& p : half.matrices) CHECK(max_abs(p - Matrix::Identity(2, 2)) <= 1e-6);

  // No dichotomy on the line: the closed shift has monodromy I.
  CHECK_THROWS_AS(shift_operator_projector(
                      switched_field(diag2(0.5, 2), diag2(2, 0.5)), p0, 64),
                  IndeterminateError);
}

TEST_CASE("shift operator and QR families agree for a switched field") {
  Matrix before(2, 2);
  before << 0.5, 1, 0, 2;
  const Matrix after = rotation(0.3) * diag2(0.25, 3) * rotation(-0.3);
  auto f = switched_field(before, after);
  auto shift = shift_operator_projector(f, p0, 128);
  auto full = build_projector_family(f, p0, Side::full, 0, 100);
  double worst = 0;
  for (long n = -40; n <= 40; ++n) worst = std::max(worst, max_abs(shift.at(n) - full.at(n)));
  CHECK(worst <= 1e-6);
  CHECK(full.invariance_residual <= 1e-7);
}
