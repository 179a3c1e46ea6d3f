#include <random>

#include "catch_amalgamated.hpp"
#include "oracles.hpp"
#include "transport/dynamics.hpp"
#include "transport/xychain.hpp"

using namespace transport;
using Catch::Approx;

namespace {

const BlockJacobiOperator& free_op() {
  static const auto op = scalar_jacobi({0.0});
  return op;
}

std::vector<double> range(double from, double to, double step) {
  std::vector<double> out;
  for (double x = from; x <= to + 1e-9; x += step) out.push_back(x);
  return out;
}

}  // namespace

TEST_CASE("Bessel oracles agree", "[dynamics][oracle]") {
  for (int n : {0, 1, 2, 5, -3})
    for (double x : {0.5, 1.0, 4.0}) CHECK(oracle::bessel_series(n, x) == Approx(oracle::bessel(n, x)).margin(1e-13));
}

TEST_CASE("evolution", "[dynamics]") {
  const auto h = truncate(free_op(), 60);
  const auto psi = WavePacket::delta(1, 0);
  SECTION("t = 0 is the identity") { CHECK(distance(evolve(h, psi, 0.0), psi) < 1e-14); }
  SECTION("free propagator is a Bessel function") {
    const auto state = evolve(h, psi, 0.5);
    CHECK(std::abs(state.scalar(1)) == Approx(std::abs(oracle::bessel_series(1, 1.0))).margin(1e-12));
    const auto late = evolve(h, psi, 7.0);
    for (int n = -12; n <= 12; ++n) CHECK(std::abs(late.scalar(n) - oracle::free_propagator(n, 7.0)) < 1e-12);
  }
  SECTION("unitary and reversible") {
    const auto state = evolve(h, psi, 3.0);
    CHECK(state.norm() == Approx(1.0).margin(1e-13));
    CHECK(distance(evolve(h, state, -3.0), psi) < 1e-12);
  }
  SECTION("window too small") {
    try {
      evolve(truncate(free_op(), 20), psi, 10.0);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::WindowTooSmall);
    }
  }
  SECTION("support outside the window") {
    try {
      evolve(h, WavePacket::delta(1, 100), 0.1);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::SupportOutsideWindow);
    }
  }
}

TEST_CASE("moments", "[dynamics]") {
  CHECK(moment(WavePacket::delta(1, 0), 2.0) == 0.0);
  CHECK(moment(WavePacket::delta(1, 3), 2.0) == Approx(9.0));
  CHECK(moment(WavePacket::delta(2, 7), 1.0) == Approx(3.0));
  SECTION("free second moment is 2 t^2") {
    const auto traj = moment_trajectory(free_op(), WavePacket::delta(1, 0), 2.0, {1.0, 10.0, 40.0});
    for (const auto& s : traj.samples) {
      CHECK(s.accepted);
      CHECK(s.value == Approx(2.0 * s.t * s.t).epsilon(1e-10));
      CHECK(oracle::free_second_moment(s.t) == Approx(2.0 * s.t * s.t).epsilon(1e-10));
    }
  }
  SECTION("a constant diagonal does not change moments") {
    const auto a = moment_trajectory(free_op(), WavePacket::delta(1, 0), 2.0, {5.0, 15.0});
    const auto b = moment_trajectory(scalar_jacobi({1.7}), WavePacket::delta(1, 0), 2.0, {5.0, 15.0});
    for (std::size_t i = 0; i < a.samples.size(); ++i)
      CHECK(a.samples[i].value == Approx(b.samples[i].value).epsilon(1e-10));
  }
}

TEST_CASE("transport exponents", "[dynamics]") {
  const auto psi = WavePacket::delta(1, 0);
  const auto times = range(10.0, 100.0, 10.0);
  const auto f = transport_exponents(free_op(), psi, 2.0, times);
  CHECK(f.beta_plus == Approx(1.0).margin(1e-3));
  CHECK(f.beta_minus == Approx(1.0).margin(1e-3));
  const auto p3 = transport_exponents(scalar_jacobi({0.3, -1.0, 0.8}), psi, 2.0, times);
  CHECK(p3.beta_plus <= 1.05);
  CHECK(p3.beta_minus >= 0.85);
  CHECK_THROWS_AS(transport_exponents(free_op(), psi, 2.0, {5.0, 3.0}), Error);
}

TEST_CASE("ballistic limit", "[dynamics]") {
  const auto psi = WavePacket::delta(1, 0);
  SECTION("free delta_0") {
    const auto c = check_ballistic_limit(free_op(), psi, {20.0, 100.0});
    CHECK(c.errors[1] < 0.05);
  }
  SECTION("period-2 errors decrease") {
    const auto c = check_ballistic_limit(scalar_jacobi({1.0, -1.0}), psi, {10.0, 20.0, 40.0});
    CHECK(c.errors[1] < c.errors[0]);
    CHECK(c.errors[2] < c.errors[1]);
  }
  SECTION("zero packet") {
    const auto c = check_ballistic_limit(free_op(), WavePacket(1, 0, CVector::Zero(1)), {10.0});
    CHECK(c.errors[0] == 0.0);
  }
}

TEST_CASE("derivative identity", "[dynamics]") {
  const auto psi = WavePacket::delta(1, 0);
  CHECK(check_derivative_identity(free_op(), psi, 0.0, 8) < 1e-14);
  CHECK(check_derivative_identity(free_op(), psi, 1.0, 256) < 1e-8);
  const auto p2 = scalar_jacobi({1.0, -1.0});
  const double e8 = check_derivative_identity(p2, psi, 1.0, 8);
  const double e16 = check_derivative_identity(p2, psi, 1.0, 16);
  const double e32 = check_derivative_identity(p2, psi, 1.0, 32);
  CHECK(e8 / e16 > 14.0);
  CHECK(e16 / e32 > 14.0);
  const auto xy = build_M({{1.0}, {0.5}, {1.0}});
  CHECK(check_derivative_identity(xy, WavePacket::delta(2, 1), 0.5, 256) < 1e-8);
}

TEST_CASE("light-cone mass probe", "[dynamics]") {
  SECTION("free operator") {
    const auto probe = corollary_probe(free_op(), 0.2, {20.0, 40.0, 60.0}, 0);
    CHECK(probe.c_tilde > 0.0);
    CHECK(probe.ok);
    for (const auto& r : probe.records) CHECK(std::abs(r.n) >= static_cast<long>(1.8 * r.T) - 1);
  }
  SECTION("epsilon equal to ||Q|| covers the whole cone") {
    const auto probe = corollary_probe(free_op(), 2.0, {10.0}, 1);
    CHECK(probe.records[0].mass > 0.0);
  }
  SECTION("invalid parameters") {
    CHECK_THROWS_AS(corollary_probe(free_op(), 0.0, {10.0}, 0), Error);
    CHECK_THROWS_AS(corollary_probe(free_op(), 0.1, {10.0}, -1), Error);
  }
}

TEST_CASE("localization diagnostic", "[dynamics]") {
  std::vector<std::pair<long, long>> pairs;
  for (long d = 1; d <= 20; ++d) pairs.push_back({0, d});
  SECTION("free operator is not localized") {
    const auto h = truncate(free_op(), 150);
    const auto rep = localization_diagnostic(h, pairs, range(0.0, 40.0, 0.099 * kTwoPi / h.norm()));
    CHECK_FALSE(rep.localized);
  }
  SECTION("random XY chain is localized") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    XYChainSpec spec{{1.0}, {0.0}, std::vector<double>(200)};
    for (auto& v : spec.nu) v = u(rng);
    const auto h = truncate_range(build_M(spec), 1, 200);
    std::vector<std::pair<long, long>> xy_pairs;
    for (long d = 1; d <= 20; ++d) xy_pairs.push_back({200, 200 + 2 * d});
    const auto rep = localization_diagnostic(h, xy_pairs, range(0.0, 40.0, 0.099 * kTwoPi / h.norm()));
    CHECK(rep.localized);
    CHECK(rep.slope < -0.1);
  }
  SECTION("coarse time grid is rejected") {
    const auto h = truncate(free_op(), 50);
    try {
      localization_diagnostic(h, pairs, {0.0, 1.0, 2.0});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::GridTooCoarse);
    }
  }
}
