#pragma once

// Unitary dynamics psi(t) = e^{-itJ} psi on finite windows, position moments,
// transport exponents and the checks built on them.
//
// A window [-N, N] stands in for Z only while the packet stays away from its
// edges; evolve() enforces N >= ceil(||J|| |t|) + r + 20 for a packet of
// support radius r, and moment trajectories reject samples whose mass within
// the outer 10 sites exceeds 1e-8.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "transport/block_jacobi.hpp"
#include "transport/floquet.hpp"

namespace transport {

inline constexpr double kTailRejection = 1e-8;
inline constexpr long kTailEdgeSites = 10;
inline constexpr double kSupportThreshold = 1e-12;

/// Smallest admissible distance between packet support and window edge.
inline long margin_rule(double norm, double t) {
  return static_cast<long>(std::ceil(norm * std::abs(t))) + 20;
}

/// Half-width for a window that keeps a packet of support radius `radius`
/// clear of the edges up to time t_max. On top of the margin rule it adds
/// 10 (||J|| t)^{1/3} sites for the Airy-type tail beyond the light cone.
inline long auto_window(const BlockJacobiOperator& op, double t_max, long radius) {
  const double reach = op.norm_bound() * std::abs(t_max);
  return margin_rule(op.norm_bound(), t_max) + std::max(radius, 0L) +
         static_cast<long>(std::ceil(10.0 * std::cbrt(reach)));
}

inline WavePacket evolve(const TruncatedOperator& h, const WavePacket& psi, double t) {
  const CVector v = h.embed(psi);
  if (t == 0.0) return h.restrict(v);
  const long need = margin_rule(h.norm(), t);
  for (long s = 0; s < psi.sites(); ++s) {
    const long site = psi.base() + s;
    if (psi.coeffs().segment(s * psi.block_dim(), psi.block_dim()).cwiseAbs().maxCoeff() <= kSupportThreshold) {
      continue;
    }
    if (site - h.first_site() < need || h.last_site() - site < need) {
      fail(ErrorKind::WindowTooSmall, "site " + std::to_string(site) + " is closer than " + std::to_string(need) +
                                          " sites to the window edge for t=" + std::to_string(t));
    }
  }
  return h.restrict(h.propagate(v, t));
}

/// <psi, |X|^p psi> with X multiplying block site n by n.
inline double moment(const WavePacket& psi, double p) {
  const int m = psi.block_dim();
  double acc = 0.0;
  for (long s = 0; s < psi.sites(); ++s) {
    const long site = psi.base() + s;
    if (site == 0) continue;
    acc += std::pow(std::abs(static_cast<double>(site)), p) * psi.coeffs().segment(s * m, m).squaredNorm();
  }
  return acc;
}

inline double moment(const TruncatedOperator& h, const CVector& v, double p) {
  return moment(h.restrict(v), p);
}

/// Probability within the outer `edge` sites of the window.
inline double edge_mass(const TruncatedOperator& h, const CVector& v, long edge = kTailEdgeSites) {
  const int m = h.block_dim();
  double acc = 0.0;
  for (long s = 0; s < h.sites(); ++s) {
    if (s < edge || s >= h.sites() - edge) acc += v.segment(s * m, m).squaredNorm();
  }
  return acc;
}

struct MomentSample {
  double t = 0.0;
  double value = 0.0;
  double tail = 0.0;
  bool accepted = false;
};

struct MomentTrajectory {
  double p = 2.0;
  long window = 0;
  std::vector<MomentSample> samples;
};

/// Moments at the requested times on one window sized for the latest time
/// (or on [-window, window] when window > 0).
inline MomentTrajectory moment_trajectory(const BlockJacobiOperator& op, const WavePacket& psi, double p,
                                          const std::vector<double>& times, long window = 0) {
  if (p <= 0.0) fail(ErrorKind::InvalidSpec, "moment order must be positive");
  double t_max = 0.0;
  for (double t : times) t_max = std::max(t_max, std::abs(t));
  const long radius = psi.support_radius(kSupportThreshold);
  MomentTrajectory traj;
  traj.p = p;
  traj.window = window > 0 ? window : auto_window(op, t_max, radius);
  const auto h = truncate(op, traj.window);
  for (double t : times) {
    const WavePacket state = evolve(h, psi, t);
    MomentSample s;
    s.t = t;
    s.value = moment(state, p);
    s.tail = edge_mass(h, state.coeffs());
    s.accepted = s.tail < kTailRejection;
    traj.samples.push_back(s);
  }
  return traj;
}

struct ExponentEstimate {
  double beta_plus = 0.0;
  double beta_minus = 0.0;
  double t_first = 0.0;
  double t_last = 0.0;
  double residual = 0.0;                // sum of squared residuals of log M against p log t
  std::vector<double> running_slopes;  // between consecutive accepted samples
  MomentTrajectory trajectory;
};

/// Finite-time surrogates for beta^+ and beta^-: the largest and smallest
/// log-log slopes d log M / (p d log t) between consecutive accepted times.
inline ExponentEstimate transport_exponents(const BlockJacobiOperator& op, const WavePacket& psi, double p,
                                            const std::vector<double>& times, long window = 0) {
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1]) || times[i - 1] <= 0.0) {
      fail(ErrorKind::InvalidSpec, "times must be positive and increasing");
    }
  }
  ExponentEstimate est;
  est.trajectory = moment_trajectory(op, psi, p, times, window);
  std::vector<MomentSample> used;
  for (const auto& s : est.trajectory.samples) {
    if (s.accepted && s.value > 0.0) used.push_back(s);
  }
  if (used.size() < 2) {
    fail_numerical(ErrorKind::WindowTooSmall, "fewer than two accepted moment samples");
  }
  est.t_first = used.front().t;
  est.t_last = used.back().t;
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < used.size(); ++i) {
    const double slope =
        (std::log(used[i].value) - std::log(used[i - 1].value)) / (p * (std::log(used[i].t) - std::log(used[i - 1].t)));
    est.running_slopes.push_back(slope);
    hi = std::max(hi, slope);
    lo = std::min(lo, slope);
  }
  est.beta_plus = std::clamp(hi, 0.0, 1.2);
  est.beta_minus = std::clamp(lo, 0.0, 1.2);

  const double n = static_cast<double>(used.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& s : used) {
    const double x = p * std::log(s.t);
    const double y = std::log(s.value);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  for (const auto& s : used) {
    const double r = std::log(s.value) - (intercept + slope * p * std::log(s.t));
    est.residual += r * r;
  }
  return est;
}

struct BallisticCheck {
  std::vector<double> times;
  std::vector<double> errors;  // || (1/t) e^{itJ} X e^{-itJ} psi - Q psi ||
  QApplication q;
  long window = 0;
};

inline BallisticCheck check_ballistic_limit(const BlockJacobiOperator& op, const WavePacket& psi,
                                            const std::vector<double>& times, int grid = 512, long window = 0) {
  BallisticCheck out;
  out.times = times;
  if (psi.empty() || psi.norm() == 0.0) {
    out.errors.assign(times.size(), 0.0);
    return out;
  }
  double t_max = 0.0;
  for (double t : times) {
    if (t <= 0.0) fail(ErrorKind::InvalidSpec, "ballistic check needs positive times");
    t_max = std::max(t_max, t);
  }
  out.window = window > 0 ? window : auto_window(op, t_max, psi.support_radius(kSupportThreshold));
  out.q = apply_Q(op, psi, grid);
  const auto h = truncate(op, out.window);
  for (double t : times) {
    const WavePacket state = evolve(h, psi, t);
    const CVector pulled = h.propagate(h.apply_position(state.coeffs()), -t) / t;
    out.errors.push_back(distance(h.restrict(pulled), out.q.result));
  }
  return out;
}

/// || X(T) psi - X psi - int_0^T A(t) psi dt || with composite Simpson
/// quadrature of A(t) psi = e^{itJ} A e^{-itJ} psi on the window.
inline double check_derivative_identity(const BlockJacobiOperator& op, const WavePacket& psi, double T, int steps,
                                        long window = 0) {
  if (T == 0.0 || psi.empty()) return 0.0;
  if (steps < 2) steps = 2;
  if (steps % 2 != 0) ++steps;
  const long n_half = window > 0 ? window : auto_window(op, T, psi.support_radius(kSupportThreshold));
  const auto h = truncate(op, n_half);
  const auto current = truncate_current(op, -n_half, n_half);
  const CVector v = h.embed(psi);
  (void)evolve(h, psi, T);  // margin check

  const auto& eig = h.spectrum();
  const CMatrix& U = eig.vectors;
  const CVector v_hat = U.adjoint() * v;
  auto phases = [&](double t, double sign) {
    CVector ph(eig.values.size());
    for (Eigen::Index k = 0; k < ph.size(); ++k) ph(k) = std::exp(cplx(0.0, sign * t * eig.values(k)));
    return ph;
  };

  CVector integral_hat = CVector::Zero(v.size());
  const double step = T / steps;
  for (int i = 0; i <= steps; ++i) {
    const double t = i * step;
    const double weight = (i == 0 || i == steps) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    const CVector forward = U * phases(t, -1.0).cwiseProduct(v_hat);
    const CVector back = (U.adjoint() * (current.matrix() * forward)).cwiseProduct(phases(t, 1.0));
    integral_hat += weight * back;
  }
  integral_hat *= step / 3.0;

  const CVector evolved = h.propagate(v, T);
  const CVector heisenberg = h.propagate(h.apply_position(evolved), -T);
  const CVector lhs = heisenberg - h.apply_position(v);
  return (lhs - U * integral_hat).norm();
}

struct CorollaryRecord {
  double T = 0.0;
  long n = 0;  // scalar index of the maximizing site
  long k = 0;  // scalar index of the initial delta
  double mass = 0.0;
  bool threshold_ok = false;
};

struct CorollaryProbe {
  std::vector<CorollaryRecord> records;
  double q_norm = 0.0;
  double c_tilde = 0.0;  // geometric-mean fit of mass ~ C/T
  bool ok = false;
  long window = 0;
};

/// For each T, the largest |<delta_n, e^{-iTJ} delta_k>|^2 over
/// m(||Q|| - eps) T <= |n| <= m ||Q|| T + m - 1 and |k| <= K (scalar indices).
inline CorollaryProbe corollary_probe(const BlockJacobiOperator& op, double epsilon, const std::vector<double>& T_grid,
                                      long K, long window = 0, int grid = 512) {
  if (epsilon <= 0.0) fail(ErrorKind::InvalidSpec, "epsilon must be positive");
  if (K < 0) fail(ErrorKind::InvalidSpec, "K must be non-negative");
  const int m = op.block_dim();
  CorollaryProbe out;
  out.q_norm = q_norm(op, grid).value;
  double t_max = 0.0;
  for (double t : T_grid) t_max = std::max(t_max, t);
  const long k_sites = floor_div(K, m) + 1;
  out.window = window > 0 ? window : auto_window(op, t_max, k_sites) + 1;
  const auto h = truncate(op, out.window);

  std::vector<WavePacket> starts;
  for (long k = -K; k <= K; ++k) starts.push_back(WavePacket::delta(m, k));

  for (double T : T_grid) {
    CorollaryRecord rec;
    rec.T = T;
    const long lo = static_cast<long>(std::ceil(std::max(0.0, m * (out.q_norm - epsilon) * T) - 1e-9));
    const long hi = static_cast<long>(std::floor(m * out.q_norm * T + m - 1 + 1e-9));
    for (std::size_t i = 0; i < starts.size(); ++i) {
      const CVector state = h.propagate(h.embed(starts[i]), T);
      for (long a = lo; a <= hi; ++a) {
        for (long n : {a, -a}) {
          const double mass = std::norm(state(h.scalar_row(n)));
          if (mass > rec.mass) {
            rec.mass = mass;
            rec.n = n;
            rec.k = -K + static_cast<long>(i);
          }
        }
      }
    }
    out.records.push_back(rec);
  }
  double log_acc = 0.0;
  bool positive = true;
  for (const auto& r : out.records) {
    if (r.mass <= 0.0) positive = false;
    log_acc += std::log(std::max(r.mass, std::numeric_limits<double>::min()) * r.T);
  }
  out.c_tilde = positive && !out.records.empty() ? std::exp(log_acc / out.records.size()) : 0.0;
  out.ok = out.c_tilde > 0.0;
  for (auto& r : out.records) {
    r.threshold_ok = r.mass >= out.c_tilde / (2.0 * r.T);
    out.ok = out.ok && r.threshold_ok;
  }
  return out;
}

struct LocalizationRow {
  long l = 0;
  long r = 0;
  double sup = 0.0;
};

struct LocalizationReport {
  std::vector<LocalizationRow> rows;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int fitted_points = 0;
  bool localized = false;
};

inline constexpr double kLocalizationFloor = 1e-12;

/// sup over t_grid of |<delta_l, e^{-itJ} delta_r>| for each pair, and a
/// least-squares fit of log sup against |r - l|. Amplitudes below 1e-12 are
/// left out of the fit. The verdict is "localized" when the slope is below
/// -0.05 with R^2 above 0.9.
inline LocalizationReport localization_diagnostic(const TruncatedOperator& h,
                                                  const std::vector<std::pair<long, long>>& pairs,
                                                  const std::vector<double>& t_grid) {
  const double max_step = 0.1 * kTwoPi / std::max(h.norm(), 1e-300);
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    if (std::abs(t_grid[i] - t_grid[i - 1]) > max_step * (1.0 + 1e-12)) {
      fail(ErrorKind::GridTooCoarse, "time grid step exceeds 0.2*pi/||J||");
    }
  }
  const auto& eig = h.spectrum();
  const Eigen::Index d = eig.values.size();
  LocalizationReport rep;
  rep.rows.resize(pairs.size());
  const Eigen::Index n_pairs = static_cast<Eigen::Index>(pairs.size());
  CMatrix weights(n_pairs, d);
  for (Eigen::Index i = 0; i < n_pairs; ++i) {
    const auto [l, r] = pairs[static_cast<std::size_t>(i)];
    const Eigen::Index row_l = h.scalar_row(l);
    const Eigen::Index row_r = h.scalar_row(r);
    for (Eigen::Index k = 0; k < d; ++k) weights(i, k) = eig.vectors(row_l, k) * std::conj(eig.vectors(row_r, k));
  }
  // Amplitudes for a block of times at once: weights * phases.
  constexpr std::size_t chunk = 256;
  const std::size_t n_chunks = (t_grid.size() + chunk - 1) / chunk;
  std::vector<RVector> chunk_sup(n_chunks, RVector::Zero(n_pairs));
  parallel_for(n_chunks, [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(t_grid.size(), begin + chunk);
    CMatrix phases(d, static_cast<Eigen::Index>(end - begin));
    for (std::size_t j = begin; j < end; ++j) {
      for (Eigen::Index k = 0; k < d; ++k) {
        phases(k, static_cast<Eigen::Index>(j - begin)) = std::exp(cplx(0.0, -t_grid[j] * eig.values(k)));
      }
    }
    chunk_sup[c] = (weights * phases).cwiseAbs().rowwise().maxCoeff();
  });
  for (Eigen::Index i = 0; i < n_pairs; ++i) {
    double sup = 0.0;
    for (const auto& cs : chunk_sup) sup = std::max(sup, cs(i));
    const auto [l, r] = pairs[static_cast<std::size_t>(i)];
    rep.rows[static_cast<std::size_t>(i)] = {l, r, sup};
  }

  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (const auto& row : rep.rows) {
    if (row.sup <= kLocalizationFloor) continue;
    const double x = static_cast<double>(std::abs(row.r - row.l));
    const double y = std::log(row.sup);
    n += 1;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  rep.fitted_points = static_cast<int>(n);
  if (n >= 3 && n * sxx - sx * sx > 0) {
    rep.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    rep.intercept = (sy - rep.slope * sx) / n;
    const double ss_tot = syy - sy * sy / n;
    double ss_res = 0.0;
    for (const auto& row : rep.rows) {
      if (row.sup <= kLocalizationFloor) continue;
      const double x = static_cast<double>(std::abs(row.r - row.l));
      const double e = std::log(row.sup) - (rep.intercept + rep.slope * x);
      ss_res += e * e;
    }
    rep.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
    rep.localized = rep.slope < -0.05 && rep.r_squared > 0.9;
  }
  return rep;
}

}  // namespace transport
