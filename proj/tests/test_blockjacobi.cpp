#include <random>
#include <thread>

#include "catch_amalgamated.hpp"
#include "transport/block_jacobi.hpp"
#include "transport/xychain.hpp"

using namespace transport;
using Catch::Approx;

namespace {

CMatrix scalar(cplx x) { return CMatrix::Constant(1, 1, x); }

CMatrix random_block(std::mt19937_64& rng, int m) {
  std::normal_distribution<double> g;
  CMatrix x(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) x(i, j) = cplx(g(rng), g(rng));
  return x;
}

BlockSpec random_spec(std::uint64_t seed, int m, int q) {
  std::mt19937_64 rng(seed);
  BlockSpec s{m, q, {}, {}};
  for (int j = 0; j < q; ++j) {
    s.a.push_back(random_block(rng, m) + 3.0 * CMatrix::Identity(m, m));
    const CMatrix b = random_block(rng, m);
    s.b.push_back(b + b.adjoint());
  }
  return s;
}

}  // namespace

TEST_CASE("operator construction validates blocks", "[blockjacobi]") {
  SECTION("free Laplacian") {
    const auto op = build_operator({1, 1, {scalar(1.0)}, {scalar(0.0)}});
    CHECK(op.block_dim() == 1);
    CHECK(op.period() == 1);
    CHECK(op.norm_bound() == Approx(2.0));
  }
  SECTION("singular off-diagonal block") {
    try {
      build_operator({1, 1, {scalar(0.0)}, {scalar(0.0)}});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::SingularOffDiagonal);
    }
  }
  SECTION("non-Hermitian diagonal") {
    CMatrix b(2, 2);
    b << 0, 1, 0, 0;
    try {
      build_operator({2, 1, {CMatrix::Identity(2, 2)}, {b}});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NonHermitianDiagonal);
    }
  }
  SECTION("block count mismatch") {
    try {
      build_operator({1, 2, {scalar(1.0)}, {scalar(0.0)}});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DimensionMismatch);
    }
  }
  SECTION("XY hopping block is invertible with det -4 mu^2 (1 - gamma^2)") {
    for (double gamma : {0.0, 0.5, 2.0, -3.0}) {
      const CMatrix a = xy_hopping_block(1.0, gamma);
      CHECK(a.determinant().real() == Approx(-4.0 * (1.0 - gamma * gamma)));
    }
    CHECK_NOTHROW(build_M({{1.0}, {2.0}, {0.0}}));
  }
}

TEST_CASE("apply follows the three-term recurrence", "[blockjacobi]") {
  const auto free_op = scalar_jacobi({0.0});
  const auto out = apply(free_op, WavePacket::delta(1, 0));
  CHECK(std::abs(out.scalar(-1) - 1.0) < 1e-15);
  CHECK(std::abs(out.scalar(0)) < 1e-15);
  CHECK(std::abs(out.scalar(1) - 1.0) < 1e-15);

  const auto diag = apply(scalar_jacobi({3.0}), WavePacket::delta(1, 0));
  CHECK(std::abs(diag.scalar(0) - 3.0) < 1e-15);

  const auto p2 = scalar_jacobi({0.7, -0.7});
  CHECK(std::abs(apply(p2, WavePacket::delta(1, 0)).scalar(0) - 0.7) < 1e-15);
  CHECK(std::abs(apply(p2, WavePacket::delta(1, 1)).scalar(1) + 0.7) < 1e-15);
  CHECK(std::abs(apply(p2, WavePacket::delta(1, -1)).scalar(-1) + 0.7) < 1e-15);
}

TEST_CASE("current operator A = i[J, X]", "[blockjacobi]") {
  SECTION("free delta_0") {
    const auto out = apply_A(scalar_jacobi({0.0}), WavePacket::delta(1, 0));
    CHECK(std::abs(out.scalar(-1) - cplx(0, 1)) < 1e-15);
    CHECK(std::abs(out.scalar(1) - cplx(0, -1)) < 1e-15);
    CHECK(std::abs(out.scalar(0)) < 1e-15);
  }
  SECTION("zero vector") {
    const auto out = apply_A(scalar_jacobi({0.0}), WavePacket(1, 0, CVector::Zero(3)));
    CHECK(out.norm() == 0.0);
  }
  SECTION("XY block example") {
    const auto m = build_M({{1.0}, {0.0}, {0.0}});
    const auto out = apply_A(m, WavePacket::block_delta(2, 0, 0));
    CHECK(std::abs(out.block(1)(0) - cplx(0, 2)) < 1e-14);
    CHECK(std::abs(out.block(-1)(0) - cplx(0, -2)) < 1e-14);
  }
  SECTION("matches the commutator on random data") {
    const auto op = build_operator(random_spec(11, 2, 3));
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    CVector c(2 * 7);
    for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = cplx(g(rng), g(rng));
    const WavePacket u(2, -3, c);
    const auto lhs = apply_A(op, u);
    const auto rhs = cplx(0, 1) * (apply(op, apply_X(u)) - apply_X(apply(op, u)));
    CHECK(distance(lhs, rhs) < 1e-12);
  }
}

TEST_CASE("position operator uses block sites", "[blockjacobi]") {
  for (long n : {-7L, -4L, -1L, 0L, 1L, 5L}) {
    const auto x = apply_X(WavePacket::delta(3, n));
    const double site = static_cast<double>(floor_div(n, 3));
    CHECK(std::abs(x.scalar(n) - site) < 1e-15);
  }
}

TEST_CASE("truncation", "[blockjacobi]") {
  SECTION("free N=1 has eigenvalues 0, +-sqrt(2)") {
    const auto h = truncate(scalar_jacobi({0.0}), 1);
    REQUIRE(h.dim() == 3);
    const auto& ev = h.spectrum().values;
    CHECK(ev(0) == Approx(-std::sqrt(2.0)).margin(1e-14));
    CHECK(ev(1) == Approx(0.0).margin(1e-14));
    CHECK(ev(2) == Approx(std::sqrt(2.0)).margin(1e-14));
  }
  SECTION("Hermitian, interior rows reproduce apply, norm bound holds") {
    const auto op = build_operator(random_spec(3, 2, 3));
    const auto h = truncate(op, 12);
    CHECK(hermiticity_defect(h.matrix()) < 1e-12);
    CHECK(h.norm() <= op.norm_bound() + 1e-12);
    const auto u = WavePacket::delta(2, 5);
    const CVector lhs = h.matrix() * h.embed(u);
    const auto rhs = apply(op, u);
    CHECK(distance(h.restrict(lhs), rhs) < 1e-13);
  }
  SECTION("truncated current equals i[J_N, X_N]") {
    const auto op = build_operator(random_spec(8, 2, 2));
    const auto h = truncate(op, 6);
    const auto a = truncate_current(op, -6, 6);
    CMatrix x = CMatrix::Zero(h.dim(), h.dim());
    for (long s = 0; s < h.sites(); ++s)
      for (int c = 0; c < 2; ++c) x(s * 2 + c, s * 2 + c) = static_cast<double>(-6 + s);
    const CMatrix comm = cplx(0, 1) * (h.matrix() * x - x * h.matrix());
    CHECK(max_abs(comm - a.matrix()) < 1e-13);
  }
  SECTION("size limit") {
    try {
      truncate(scalar_jacobi({0.0}), 5000);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::SizeLimitExceeded);
    }
  }
  SECTION("packet outside window") {
    const auto h = truncate(scalar_jacobi({0.0}), 3);
    CHECK_THROWS_AS(h.embed(WavePacket::delta(1, 10)), Error);
  }
  SECTION("spectrum is computed once and shared across threads") {
    const auto h = truncate(scalar_jacobi({0.0, 1.0}), 60);
    std::vector<double> norms(4);
    std::vector<std::thread> pool;
    for (int i = 0; i < 4; ++i) pool.emplace_back([&, i] { norms[i] = h.norm(); });
    for (auto& t : pool) t.join();
    for (double n : norms) CHECK(n == norms[0]);
  }
}

TEST_CASE("with_period_multiple describes the same operator", "[blockjacobi]") {
  const auto op = build_operator(random_spec(21, 2, 3));
  const auto op2 = op.with_period_multiple(2);
  CHECK(op2.period() == 6);
  const WavePacket u(2, -4, RVector::LinSpaced(16, 1.0, 2.0).cast<cplx>());
  CHECK(distance(apply(op, u), apply(op2, u)) < 1e-14);
}
