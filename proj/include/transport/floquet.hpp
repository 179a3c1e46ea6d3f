#pragma once

// Floquet-Bloch analysis of q-periodic block Jacobi operators.
//
// With (F u)_r(theta) = sum_l u_{r+lq} e^{-il theta}, both J and the current
// operator A become multiplication by mq x mq fiber matrices J_theta and
// A_theta. Band velocities q * d(lambda_j)/d(theta) equal <v_j, A_theta v_j>,
// and the asymptotic velocity operator is Q = F^{-1} (sum_j q lambda_j' P_j) F.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "transport/block_jacobi.hpp"
#include "transport/parallel.hpp"

namespace transport {

inline constexpr double kDegeneracyGap = 1e-8;

namespace detail {

template <class Diagonal, class Hop>
CMatrix assemble_fiber(const BlockJacobiOperator& op, double theta, Diagonal diagonal, Hop hop) {
  const int m = op.block_dim();
  const int q = op.period();
  CMatrix f = CMatrix::Zero(m * q, m * q);
  for (int r = 0; r < q; ++r) {
    f.block(r * m, r * m, m, m) += diagonal(op.b(r));
    if (r + 1 < q) {
      f.block(r * m, (r + 1) * m, m, m) += hop(op.a(r));
      f.block((r + 1) * m, r * m, m, m) += CMatrix(hop(op.a(r))).adjoint();
    }
  }
  // Boundary blocks: (last, first) picks up e^{i theta} times the hop of a_q.
  const CMatrix corner = std::exp(cplx(0.0, theta)) * hop(op.a(q - 1));
  f.block((q - 1) * m, 0, m, m) += corner;
  f.block(0, (q - 1) * m, m, m) += corner.adjoint();
  return f;
}

}  // namespace detail

inline CMatrix fiber_matrix(const BlockJacobiOperator& op, double theta) {
  return detail::assemble_fiber(
      op, theta, [](const CMatrix& b) { return CMatrix(0.5 * (b + b.adjoint())); },
      [](const CMatrix& a) { return a; });
}

inline CMatrix current_fiber_matrix(const BlockJacobiOperator& op, double theta) {
  const int m = op.block_dim();
  return detail::assemble_fiber(
      op, theta, [m](const CMatrix&) { return CMatrix(CMatrix::Zero(m, m)); },
      [](const CMatrix& a) { return CMatrix(kI * a); });
}

struct FloquetFiber {
  double theta = 0.0;
  CMatrix J;
  CMatrix A;
  RVector values;      // ascending
  CMatrix vectors;     // columns; inside a degenerate cluster they diagonalize A
  RVector velocities;  // <v_j, A_theta v_j> = q * d(lambda_j)/d(theta)
  double min_gap = 0.0;
  bool degenerate = false;
};

/// Eigen-decomposition of J_theta. Inside each cluster of eigenvalues closer
/// than kDegeneracyGap the basis is rotated to diagonalize the compression of
/// A_theta, which selects the analytic branches through the crossing.
inline FloquetFiber build_fiber(const BlockJacobiOperator& op, double theta) {
  FloquetFiber f;
  f.theta = theta;
  f.J = fiber_matrix(op, theta);
  f.A = current_fiber_matrix(op, theta);
  auto eig = hermitian_eigen(f.J);
  f.values = std::move(eig.values);
  f.vectors = std::move(eig.vectors);
  const Eigen::Index n = f.values.size();
  f.min_gap = std::numeric_limits<double>::infinity();
  Eigen::Index start = 0;
  while (start < n) {
    Eigen::Index end = start + 1;
    while (end < n && f.values(end) - f.values(end - 1) < kDegeneracyGap) ++end;
    if (end - start > 1) {
      f.degenerate = true;
      const Eigen::Index size = end - start;
      const CMatrix basis = f.vectors.middleCols(start, size);
      const CMatrix compressed = basis.adjoint() * f.A * basis;
      const auto inner = hermitian_eigen(0.5 * (compressed + compressed.adjoint()));
      f.vectors.middleCols(start, size) = basis * inner.vectors;
    }
    start = end;
  }
  for (Eigen::Index j = 1; j < n; ++j) f.min_gap = std::min(f.min_gap, f.values(j) - f.values(j - 1));
  f.velocities.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    f.velocities(j) = (f.vectors.col(j).adjoint() * f.A * f.vectors.col(j))(0, 0).real();
  }
  return f;
}

struct BandStructure {
  std::vector<double> thetas;
  int band_count = 0;
  // [band][grid point], bands followed continuously across the grid
  std::vector<std::vector<double>> lambda;
  std::vector<std::vector<double>> velocity;
  std::vector<bool> degenerate;
  std::vector<double> min_gap;
};

inline std::vector<double> uniform_theta_grid(int points) {
  std::vector<double> thetas(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) thetas[k] = kTwoPi * k / points;
  return thetas;
}

inline std::vector<FloquetFiber> build_fibers(const BlockJacobiOperator& op, const std::vector<double>& thetas) {
  std::vector<FloquetFiber> fibers(thetas.size());
  parallel_for(thetas.size(), [&](std::size_t k) { fibers[k] = build_fiber(op, thetas[k]); });
  return fibers;
}

/// Bands on a uniform grid of `points` values of theta, matched between
/// neighbouring grid points by greedy maximal eigenvector overlap.
inline BandStructure band_structure(const BlockJacobiOperator& op, int points) {
  if (points < 16) fail(ErrorKind::GridTooCoarse, "band structure needs at least 16 grid points");
  BandStructure bs;
  bs.thetas = uniform_theta_grid(points);
  const auto fibers = build_fibers(op, bs.thetas);
  const int n = op.block_dim() * op.period();
  bs.band_count = n;
  bs.lambda.assign(n, std::vector<double>(points));
  bs.velocity.assign(n, std::vector<double>(points));
  bs.degenerate.resize(points);
  bs.min_gap.resize(points);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int k = 0; k < points; ++k) {
    if (k > 0) {
      const CMatrix overlap = (fibers[k - 1].vectors.adjoint() * fibers[k].vectors).cwiseAbs().cast<cplx>();
      struct Pair {
        double weight;
        int from;
        int to;
      };
      std::vector<Pair> pairs;
      pairs.reserve(static_cast<std::size_t>(n) * n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) pairs.push_back({overlap(i, j).real(), i, j});
      std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) { return x.weight > y.weight; });
      std::vector<int> next_of(n, -1);
      std::vector<bool> taken(n, false);
      int assigned = 0;
      for (const auto& p : pairs) {
        if (assigned == n) break;
        if (next_of[p.from] >= 0 || taken[p.to]) continue;
        next_of[p.from] = p.to;
        taken[p.to] = true;
        ++assigned;
      }
      for (int band = 0; band < n; ++band) order[band] = next_of[order[band]];
    }
    for (int band = 0; band < n; ++band) {
      bs.lambda[band][k] = fibers[k].values(order[band]);
      bs.velocity[band][k] = fibers[k].velocities(order[band]);
    }
    bs.degenerate[k] = fibers[k].degenerate;
    bs.min_gap[k] = fibers[k].min_gap;
  }
  return bs;
}

struct QNorm {
  double value = 0.0;
  double argmax_theta = 0.0;
  int argmax_band = 0;  // index in ascending eigenvalue order at argmax_theta
};

/// ||Q|| = sup over bands and theta of |<v_j, A_theta v_j>|: coarse grid
/// maximum, then golden-section refinement of the winning band inside the
/// neighbouring grid cells.
inline QNorm q_norm(const BlockJacobiOperator& op, int points = 512) {
  if (points < 16) fail(ErrorKind::GridTooCoarse, "q_norm needs at least 16 grid points");
  const auto thetas = uniform_theta_grid(points);
  const auto fibers = build_fibers(op, thetas);
  QNorm best;
  int best_k = 0;
  for (int k = 0; k < points; ++k) {
    for (Eigen::Index j = 0; j < fibers[k].velocities.size(); ++j) {
      const double v = std::abs(fibers[k].velocities(j));
      if (v > best.value) {
        best = {v, thetas[k], static_cast<int>(j)};
        best_k = k;
      }
    }
  }
  const int band = best.argmax_band;
  auto speed = [&](double theta) { return std::abs(build_fiber(op, theta).velocities(band)); };
  const double h = kTwoPi / points;
  double lo = thetas[best_k] - h;
  double hi = thetas[best_k] + h;
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - ratio * (hi - lo);
  double x2 = lo + ratio * (hi - lo);
  double f1 = speed(x1);
  double f2 = speed(x2);
  while (hi - lo > 1e-12) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + ratio * (hi - lo);
      f2 = speed(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - ratio * (hi - lo);
      f1 = speed(x1);
    }
  }
  const double mid = 0.5 * (lo + hi);
  const double refined = speed(mid);
  if (refined > best.value) {
    best.value = refined;
    double theta = std::fmod(mid, kTwoPi);
    if (theta < 0) theta += kTwoPi;
    best.argmax_theta = theta;
  }
  return best;
}

/// Fourier transform (F psi)(theta_k) in (C^m)^q for every theta in the grid.
inline std::vector<CVector> floquet_transform(int m, int q, const WavePacket& psi, const std::vector<double>& thetas) {
  std::vector<CVector> out(thetas.size(), CVector::Zero(m * q));
  for (long s = 0; s < psi.sites(); ++s) {
    const long site = psi.base() + s;
    const long r = floor_mod(site, q);
    const long l = floor_div(site, q);
    const CVector blk = psi.coeffs().segment(s * m, m);
    if (blk.cwiseAbs().maxCoeff() == 0.0) continue;
    for (std::size_t k = 0; k < thetas.size(); ++k) {
      out[k].segment(r * m, m) += std::exp(cplx(0.0, -static_cast<double>(l) * thetas[k])) * blk;
    }
  }
  return out;
}

/// Inverse transform by the trapezoid rule on the uniform grid; recovers the
/// sites with l in [-G/2, G/2).
inline WavePacket inverse_floquet_transform(int m, int q, const std::vector<CVector>& values) {
  const long g = static_cast<long>(values.size());
  const long l_min = -g / 2;
  const long first = l_min * q;
  CVector c = CVector::Zero(g * q * m);
  std::vector<cplx> twiddle(static_cast<std::size_t>(g));
  for (long j = 0; j < g; ++j) twiddle[j] = std::exp(cplx(0.0, kTwoPi * static_cast<double>(j) / g));
  for (long li = 0; li < g; ++li) {
    const long l = l_min + li;
    CVector acc = CVector::Zero(m * q);
    for (long k = 0; k < g; ++k) acc += twiddle[floor_mod(l * k, g)] * values[k];
    acc /= static_cast<double>(g);
    // sites r + l q for r in [0, q)
    c.segment((l * q - first) * m, q * m) = acc;
  }
  return WavePacket(m, first, std::move(c));
}

/// |(1/G) sum_k ||F psi(theta_k)||^2 - ||psi||^2|.
inline double floquet_parseval_residual(int m, int q, const WavePacket& psi, int points) {
  const auto thetas = uniform_theta_grid(points);
  const auto f = floquet_transform(m, q, psi, thetas);
  double acc = 0.0;
  for (const auto& v : f) acc += v.squaredNorm();
  return std::abs(acc / points - psi.coeffs().squaredNorm());
}

inline double floquet_parseval_residual(const BlockJacobiOperator& op, const WavePacket& psi, int points) {
  return floquet_parseval_residual(op.block_dim(), op.period(), psi, points);
}

/// f(Q) psi on a single grid, with f applied to the band velocities.
inline WavePacket apply_velocity_function(const BlockJacobiOperator& op, const WavePacket& psi, int points,
                                          const std::function<double(double)>& f) {
  const int m = op.block_dim();
  const int q = op.period();
  if (psi.block_dim() != m) fail(ErrorKind::DimensionMismatch, "packet block size differs from operator");
  const auto thetas = uniform_theta_grid(points);
  auto values = floquet_transform(m, q, psi, thetas);
  parallel_for(thetas.size(), [&](std::size_t k) {
    const auto fiber = build_fiber(op, thetas[k]);
    RVector fv(fiber.velocities.size());
    for (Eigen::Index j = 0; j < fv.size(); ++j) fv(j) = f(fiber.velocities(j));
    const CVector coords = fiber.vectors.adjoint() * values[k];
    values[k] = fiber.vectors * (fv.cast<cplx>().asDiagonal() * coords);
  });
  return inverse_floquet_transform(m, q, values);
}

struct QApplication {
  WavePacket result;
  double quadrature_error = 0.0;  // || Q_G psi - Q_{2G} psi ||
  double parseval_residual = 0.0;
  double tail_mass = 0.0;  // squared mass of the entries dropped below 1e-12
  int grid = 0;
};

/// Q psi with the theta grid doubled from `points` until the Richardson
/// estimate and the Parseval residual both fall below `tolerance`.
inline QApplication apply_Q(const BlockJacobiOperator& op, const WavePacket& psi, int points = 512,
                            double tolerance = 1e-8, int max_points = 1 << 14) {
  if (points < 16) fail(ErrorKind::GridTooCoarse, "apply_Q needs at least 16 grid points");
  const auto identity = [](double v) { return v; };
  if (psi.empty() || psi.norm() == 0.0) {
    QApplication out;
    out.result = WavePacket(op.block_dim());
    out.grid = points;
    return out;
  }
  WavePacket coarse = apply_velocity_function(op, psi, points, identity);
  double error = 0.0;
  double parseval = 0.0;
  for (int g = points; g <= max_points; g *= 2) {
    WavePacket fine = apply_velocity_function(op, psi, 2 * g, identity);
    error = distance(coarse, fine);
    parseval = floquet_parseval_residual(op, psi, 2 * g);
    if (error < tolerance && parseval < tolerance) {
      QApplication out;
      const double threshold = 1e-12;
      CVector c = fine.coeffs();
      for (Eigen::Index i = 0; i < c.size(); ++i) {
        if (std::abs(c(i)) <= threshold) {
          out.tail_mass += std::norm(c(i));
          c(i) = 0.0;
        }
      }
      out.result = WavePacket(fine.block_dim(), fine.base(), std::move(c)).trimmed();
      out.quadrature_error = error;
      out.parseval_residual = parseval;
      out.grid = 2 * g;
      return out;
    }
    coarse = std::move(fine);
  }
  fail_numerical(ErrorKind::GridTooCoarse,
                 "Q psi did not converge to " + std::to_string(tolerance) + " (last estimate " +
                     std::to_string(error) + ")");
}

}  // namespace transport
