#include <algorithm>
#include <random>

#include "catch_amalgamated.hpp"
#include "oracles.hpp"
#include "transport/floquet.hpp"
#include "transport/xychain.hpp"

using namespace transport;
using Catch::Approx;

namespace {

BlockJacobiOperator random_operator(std::uint64_t seed, int m, int q) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  BlockSpec s{m, q, {}, {}};
  for (int j = 0; j < q; ++j) {
    CMatrix a(m, m), b(m, m);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) {
        a(r, c) = cplx(g(rng), g(rng));
        b(r, c) = cplx(g(rng), g(rng));
      }
    s.a.push_back(a + 2.0 * CMatrix::Identity(m, m));
    s.b.push_back(b + b.adjoint());
  }
  return BlockJacobiOperator(std::move(s));
}

// Hausdorff distance between the eigenvalues of a truncation and the union of
// band ranges (sampled finely).
double spectrum_mismatch(const BlockJacobiOperator& op) {
  const RVector ev = truncate(op, 256).spectrum().values;
  const auto bs = band_structure(op, 1024);
  std::vector<std::pair<double, double>> ranges;
  for (const auto& band : bs.lambda) ranges.push_back({*std::min_element(band.begin(), band.end()),
                                                       *std::max_element(band.begin(), band.end())});
  double worst = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    double d = 1e300;
    for (const auto& [lo, hi] : ranges) d = std::min(d, std::max({lo - ev(i), ev(i) - hi, 0.0}));
    worst = std::max(worst, d);
  }
  for (const auto& [lo, hi] : ranges)
    for (int k = 0; k <= 200; ++k) {
      const double x = lo + (hi - lo) * k / 200.0;
      worst = std::max(worst, (ev.array() - x).abs().minCoeff());
    }
  return worst;
}

}  // namespace

TEST_CASE("fiber matrices", "[floquet]") {
  const auto free_op = scalar_jacobi({0.0});
  SECTION("free Laplacian") {
    CHECK(std::abs(fiber_matrix(free_op, 0.0)(0, 0) - 2.0) < 1e-15);
    CHECK(std::abs(fiber_matrix(free_op, oracle::kPi / 2)(0, 0)) < 1e-15);
    CHECK(std::abs(current_fiber_matrix(free_op, oracle::kPi / 2)(0, 0) + 2.0) < 1e-15);
  }
  SECTION("corner blocks carry the quasi-momentum phase") {
    const auto op = random_operator(4, 2, 3);
    const double theta = 0.37;
    const CMatrix f = fiber_matrix(op, theta);
    const CMatrix a = current_fiber_matrix(op, theta);
    const cplx phase = std::exp(cplx(0, theta));
    CHECK(max_abs(f.block(4, 0, 2, 2) - phase * op.a(2)) < 1e-14);
    CHECK(max_abs(f.block(0, 4, 2, 2) - std::conj(phase) * op.a(2).adjoint()) < 1e-14);
    CHECK(max_abs(a.block(4, 0, 2, 2) - kI * phase * op.a(2)) < 1e-14);
    CHECK(max_abs(f.block(0, 2, 2, 2) - op.a(0)) < 1e-14);
    CHECK(hermiticity_defect(f) < 1e-14);
    CHECK(hermiticity_defect(a) < 1e-14);
  }
  SECTION("theta-derivative of J_theta lives in the corner blocks of A_theta") {
    const auto op = random_operator(9, 2, 3);
    const double h = 1e-6;
    const CMatrix fd = (fiber_matrix(op, 1.0 + h) - fiber_matrix(op, 1.0 - h)) / (2 * h);
    const CMatrix a = current_fiber_matrix(op, 1.0);
    CMatrix corners = CMatrix::Zero(6, 6);
    corners.block(4, 0, 2, 2) = a.block(4, 0, 2, 2);
    corners.block(0, 4, 2, 2) = a.block(0, 4, 2, 2);
    CHECK(max_abs(fd - corners) < 1e-8);
  }
  SECTION("XY fiber matches the closed form") {
    const auto m = build_M({{0.8}, {0.3}, {1.1}});
    for (double theta : {0.0, 0.4, 2.0, 5.5}) {
      const auto ev = hermitian_eigenvalues(fiber_matrix(m, theta));
      const auto [lo, hi] = oracle::xy_fiber_bands(0.8, 0.3, 1.1, theta);
      CHECK(ev(0) == Approx(lo).margin(1e-12));
      CHECK(ev(1) == Approx(hi).margin(1e-12));
    }
  }
}

TEST_CASE("band structure", "[floquet]") {
  SECTION("free: lambda = 2 cos, velocity = -2 sin") {
    const auto bs = band_structure(scalar_jacobi({0.0}), 64);
    REQUIRE(bs.band_count == 1);
    for (std::size_t k = 0; k < bs.thetas.size(); ++k) {
      CHECK(bs.lambda[0][k] == Approx(2 * std::cos(bs.thetas[k])).margin(1e-13));
      CHECK(bs.velocity[0][k] == Approx(-2 * std::sin(bs.thetas[k])).margin(1e-13));
      CHECK_FALSE(bs.degenerate[k]);
    }
  }
  SECTION("period-2 bands and the gap at theta = pi") {
    const auto bs = band_structure(scalar_jacobi({1.0, -1.0}), 128);
    for (std::size_t k = 0; k < bs.thetas.size(); ++k) {
      const auto [lo, hi] = oracle::period2_bands(1.0, bs.thetas[k]);
      const double a = std::min(bs.lambda[0][k], bs.lambda[1][k]);
      const double b = std::max(bs.lambda[0][k], bs.lambda[1][k]);
      CHECK(a == Approx(lo).margin(1e-12));
      CHECK(b == Approx(hi).margin(1e-12));
    }
    CHECK(bs.min_gap[64] == Approx(2.0).margin(1e-12));
  }
  SECTION("period-2 with v = 0 closes the gap at theta = pi") {
    const auto bs = band_structure(scalar_jacobi({0.0, 0.0}), 128);
    CHECK(bs.degenerate[64]);
    CHECK_FALSE(bs.degenerate[10]);
  }
  SECTION("coarse grids are rejected") {
    try {
      band_structure(scalar_jacobi({0.0}), 8);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::GridTooCoarse);
    }
  }
  SECTION("a level is crossed at most 2m times per period") {
    for (const auto& op : {random_operator(1, 1, 3), random_operator(2, 2, 2), build_M({{1.0}, {0.5}, {1.0}})}) {
      const auto bs = band_structure(op, 2048);
      const RVector ev0 = hermitian_eigenvalues(fiber_matrix(op, 0.0));
      std::mt19937_64 rng(3);
      std::uniform_real_distribution<double> u(ev0.minCoeff() - 1.0, ev0.maxCoeff() + 1.0);
      for (int trial = 0; trial < 20; ++trial) {
        const double level = u(rng);
        int crossings = 0;
        for (const auto& band : bs.lambda)
          for (std::size_t k = 0; k < band.size(); ++k) {
            const double a = band[k] - level;
            const double b = band[(k + 1) % band.size()] - level;
            if ((a < 0) != (b < 0)) ++crossings;
          }
        CHECK(crossings <= 2 * op.block_dim());
      }
    }
  }
}

TEST_CASE("truncated spectra approach the bands", "[floquet]") {
  CHECK(spectrum_mismatch(scalar_jacobi({0.0})) < 0.05);
  CHECK(spectrum_mismatch(scalar_jacobi({0.5, -0.5})) < 0.05);
  CHECK(spectrum_mismatch(scalar_jacobi({1.0, -1.0})) < 0.05);
  CHECK(spectrum_mismatch(build_M({{1.0}, {0.0}, {1.0}})) < 0.05);
}

TEST_CASE("velocity norm", "[floquet]") {
  SECTION("free Laplacian has ||Q|| = 2") { CHECK(q_norm(scalar_jacobi({0.0})).value == Approx(2.0).margin(1e-9)); }
  SECTION("period-2 against a brute-force theta scan") {
    for (double v : {0.5, 1.0, 2.0}) {
      const double scan = 2.0 * oracle::scan_max_velocity([v](double th) { return oracle::period2_bands(v, th); }, 100000);
      CHECK(q_norm(scalar_jacobi({v, -v})).value == Approx(scan).margin(1e-6));
    }
  }
  SECTION("XY anisotropic against a brute-force theta scan") {
    const double scan =
        oracle::scan_max_velocity([](double th) { return oracle::xy_fiber_bands(1.0, 0.5, 1.0, th); }, 100000);
    CHECK(q_norm(build_M({{1.0}, {0.5}, {1.0}})).value == Approx(scan).margin(1e-6));
  }
  SECTION("does not depend on the chosen period") {
    const auto op = random_operator(17, 2, 2);
    CHECK(q_norm(op.with_period_multiple(2)).value == Approx(q_norm(op).value).margin(1e-8));
    CHECK(q_norm(op.with_period_multiple(3)).value == Approx(q_norm(op).value).margin(1e-8));
  }
}

TEST_CASE("Floquet transform", "[floquet]") {
  SECTION("Parseval identity") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    CVector c(22);
    for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = cplx(g(rng), g(rng));
    CHECK(floquet_parseval_residual(2, 3, WavePacket(2, -5, c), 64) < 1e-12);
    CHECK(floquet_parseval_residual(1, 1, WavePacket::delta(1, 0), 16) < 1e-14);
    CHECK(floquet_parseval_residual(1, 2, WavePacket::delta(1, 0) + WavePacket::delta(1, 2), 32) < 1e-14);
  }
  SECTION("inverse recovers the packet") {
    const WavePacket psi(1, -3, RVector::LinSpaced(7, -1.0, 2.0).cast<cplx>());
    const auto back = inverse_floquet_transform(1, 2, floquet_transform(1, 2, psi, uniform_theta_grid(32)));
    CHECK(distance(back, psi) < 1e-13);
  }
}

TEST_CASE("Q on wave packets", "[floquet]") {
  const auto free_op = scalar_jacobi({0.0});
  SECTION("free delta_0") {
    const auto out = apply_Q(free_op, WavePacket::delta(1, 0));
    CHECK(std::abs(out.result.scalar(-1) - cplx(0, 1)) < 1e-10);
    CHECK(std::abs(out.result.scalar(1) - cplx(0, -1)) < 1e-10);
    CHECK(std::abs(out.result.norm() - std::sqrt(2.0)) < 1e-10);
  }
  SECTION("zero packet") { CHECK(apply_Q(free_op, WavePacket(1, 0, CVector::Zero(2))).result.norm() == 0.0); }
  SECTION("<delta_0, |Q| delta_0> = 4/pi for the free Laplacian") {
    const auto abs_q = apply_velocity_function(free_op, WavePacket::delta(1, 0), 4096,
                                               [](double v) { return std::abs(v); });
    CHECK(abs_q.scalar(0).real() == Approx(4.0 / oracle::kPi).margin(1e-6));
  }
  SECTION("Q equals A for a period-1 scalar operator") {
    const auto psi = WavePacket::delta(1, 3);
    CHECK(distance(apply_Q(free_op, psi).result, apply_A(free_op, psi)) < 1e-10);
  }
  SECTION("||Q psi|| <= ||Q|| ||psi||") {
    const auto op = random_operator(5, 2, 2);
    const auto psi = WavePacket::delta(2, 1) + WavePacket::delta(2, 6);
    CHECK(apply_Q(op, psi).result.norm() <= q_norm(op).value * psi.norm() + 1e-8);
  }
}
