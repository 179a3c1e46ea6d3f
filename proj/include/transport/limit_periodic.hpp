#pragma once

// Transfer matrices and Lyapunov exponents for u_{n+1} + u_{n-1} + w_n u_n = E u_n,
// the Thouless-formula cross-check, the Damanik-Tcheremchantsev integral and
// finite-stage stability probes for generic limit-periodic transport.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "transport/block_jacobi.hpp"
#include "transport/dynamics.hpp"
#include "transport/floquet.hpp"

namespace transport {

using Mat2 = Eigen::Matrix2cd;

/// Phi(n, E, w) = T_{n-1} ... T_0 with T_j = [[E - w_j, -1], [1, 0]], kept as
/// e^{log_scale} * matrix so that long products do not overflow.
struct TransferProduct {
  long n = 0;
  cplx energy{0.0, 0.0};
  Mat2 matrix = Mat2::Identity();
  double log_scale = 0.0;

  /// The product itself; overflows once log_scale passes ~700.
  Mat2 value() const { return std::exp(log_scale) * matrix; }
  double log_norm() const;
  /// |det Phi - 1| / ||Phi||^2, the determinant defect relative to the size of the entries.
  double relative_det_defect() const;
  double log_spectral_radius() const;
};

inline double spectral_norm2(const Mat2& m) {
  const Eigen::Matrix2cd g = m.adjoint() * m;
  const double tr = g(0, 0).real() + g(1, 1).real();
  const double det = (g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0)).real();
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  return std::sqrt(std::max(0.0, tr / 2.0 + disc));
}

inline double TransferProduct::log_norm() const { return log_scale + std::log(spectral_norm2(matrix)); }

inline double TransferProduct::relative_det_defect() const {
  const cplx det = matrix(0, 0) * matrix(1, 1) - matrix(0, 1) * matrix(1, 0);
  const double nrm = spectral_norm2(matrix);
  return std::abs(det - std::exp(-2.0 * log_scale)) / (nrm * nrm);
}

inline double TransferProduct::log_spectral_radius() const {
  const cplx tr = matrix.trace();
  const cplx det = matrix(0, 0) * matrix(1, 1) - matrix(0, 1) * matrix(1, 0);
  const cplx root = std::sqrt(tr * tr - 4.0 * det);
  const double rho = std::max(std::abs(tr + root), std::abs(tr - root)) / 2.0;
  return log_scale + std::log(rho);
}

namespace detail {

inline void step(TransferProduct& phi, double w) {
  Mat2 t;
  t << phi.energy - w, -1.0, 1.0, 0.0;
  phi.matrix = t * phi.matrix;
  ++phi.n;
  const double big = phi.matrix.cwiseAbs().maxCoeff();
  if (big > 1e64) {
    phi.matrix /= big;
    phi.log_scale += std::log(big);
  }
}

}  // namespace detail

inline TransferProduct transfer_matrix(long n, cplx energy, const std::vector<double>& w) {
  if (n < 1) fail(ErrorKind::InvalidSpec, "transfer matrix needs n >= 1");
  if (static_cast<long>(w.size()) < n) {
    fail(ErrorKind::WindowTooShort, "potential window has " + std::to_string(w.size()) + " values, need " +
                                        std::to_string(n));
  }
  TransferProduct phi;
  phi.energy = energy;
  for (long j = 0; j < n; ++j) detail::step(phi, w[static_cast<std::size_t>(j)]);
  return phi;
}

/// L(n, E, w) = (1/n) log ||Phi(n, E, w)||
inline double finite_lyapunov(long n, cplx energy, const std::vector<double>& w) {
  return std::max(0.0, transfer_matrix(n, energy, w).log_norm() / static_cast<double>(n));
}

inline double family_lyapunov(long n, cplx energy, const std::vector<std::vector<double>>& family) {
  if (family.empty()) fail(ErrorKind::InvalidSpec, "empty potential family");
  double acc = 0.0;
  for (const auto& w : family) acc += finite_lyapunov(n, energy, w);
  return acc / static_cast<double>(family.size());
}

/// lim L(n, E, w) for w periodic with period w.size(), via the spectral
/// radius of the one-period product.
inline double asymptotic_lyapunov(cplx energy, const std::vector<double>& w) {
  if (w.empty()) fail(ErrorKind::InvalidSpec, "empty period");
  const auto phi = transfer_matrix(static_cast<long>(w.size()), energy, w);
  return std::max(0.0, phi.log_spectral_radius() / static_cast<double>(w.size()));
}

struct ThoulessCheck {
  double lhs = 0.0;  // (1/p) log rho(Phi(p, z, w))
  double rhs = 0.0;  // (1/2 pi p) int sum_j ln|z - lambda_j(theta)| dtheta
  double gap = 0.0;
};

inline ThoulessCheck thouless_check(cplx z, const std::vector<double>& w, int points = 2048) {
  if (z.imag() < 0.05) fail(ErrorKind::InvalidSpec, "Thouless check needs Im z >= 0.05");
  if (points < 16) fail(ErrorKind::GridTooCoarse, "at least 16 quadrature points required");
  const auto op = scalar_jacobi(w);
  const double p = static_cast<double>(w.size());
  auto log_potential = [&](int g) {
    const auto thetas = uniform_theta_grid(g);
    std::vector<double> values(thetas.size());
    parallel_for(thetas.size(), [&](std::size_t k) {
      const RVector ev = hermitian_eigenvalues(fiber_matrix(op, thetas[k]));
      double acc = 0.0;
      for (Eigen::Index j = 0; j < ev.size(); ++j) acc += std::log(std::abs(z - ev(j)));
      values[k] = acc;
    });
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc / (g * p);
  };
  ThoulessCheck out;
  out.lhs = asymptotic_lyapunov(z, w);
  out.rhs = log_potential(points);
  const double coarse = log_potential(points / 2);
  if (std::abs(out.rhs - coarse) > 1e-6) {
    fail_numerical(ErrorKind::QuadratureNotConverged, "density-of-states quadrature did not settle");
  }
  out.gap = std::abs(out.lhs - out.rhs);
  return out;
}

/// (max_{1 <= n <= T^alpha} ||Phi(n, E + i/T, lambda w)||^2)^{-1}, w periodic.
inline double dt_integrand(double energy, const std::vector<double>& w, double lambda, double T, double alpha) {
  const long n_max = std::max(1L, static_cast<long>(std::floor(std::pow(T, alpha) + 1e-9)));
  TransferProduct phi;
  phi.energy = cplx(energy, 1.0 / T);
  double best = 0.0;
  for (long n = 0; n < n_max; ++n) {
    detail::step(phi, lambda * w[static_cast<std::size_t>(n % static_cast<long>(w.size()))]);
    best = std::max(best, phi.log_norm());
  }
  return std::exp(-2.0 * best);
}

namespace detail {

struct SimpsonState {
  std::function<double(double)> f;
  double eps = 0.0;
  int max_depth = 40;
  bool converged = true;
};

inline double adaptive_simpson(SimpsonState& st, double a, double b, double fa, double fm, double fb, double whole,
                               int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = st.f(lm);
  const double frm = st.f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * st.eps * (b - a)) return left + right + delta / 15.0;
  if (depth >= st.max_depth) {
    st.converged = false;
    return left + right + delta / 15.0;
  }
  return adaptive_simpson(st, a, m, fa, flm, fm, left, depth + 1) +
         adaptive_simpson(st, m, b, fm, frm, fb, right, depth + 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature with relative tolerance `rel_tol`, seeded by
/// 64 uniform panels.
inline double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol = 1e-4) {
  constexpr int panels = 64;
  const double h = (b - a) / panels;
  std::vector<double> x(2 * panels + 1), fx(2 * panels + 1);
  for (int i = 0; i <= 2 * panels; ++i) {
    x[i] = a + 0.5 * h * i;
    fx[i] = f(x[i]);
  }
  double coarse = 0.0;
  for (int i = 0; i < panels; ++i) coarse += h / 6.0 * (fx[2 * i] + 4.0 * fx[2 * i + 1] + fx[2 * i + 2]);
  detail::SimpsonState st{f, rel_tol * std::max(std::abs(coarse), std::numeric_limits<double>::min()) / (b - a)};
  double total = 0.0;
  for (int i = 0; i < panels; ++i) {
    const double whole = h / 6.0 * (fx[2 * i] + 4.0 * fx[2 * i + 1] + fx[2 * i + 2]);
    total += detail::adaptive_simpson(st, x[2 * i], x[2 * i + 2], fx[2 * i], fx[2 * i + 1], fx[2 * i + 2], whole, 0);
  }
  if (!st.converged) fail_numerical(ErrorKind::QuadratureNotConverged, "adaptive Simpson hit its depth limit");
  return total;
}

/// int_{-K}^{K} (max_{1 <= n <= T^alpha} ||Phi(n, E + i/T, lambda w)||^2)^{-1} dE
inline double dt_criterion(const std::vector<double>& w, double lambda, double K, double T, double alpha = 1.0) {
  if (w.empty()) fail(ErrorKind::InvalidSpec, "empty potential period");
  if (!(K > 0.0) || !(T > 0.0)) fail(ErrorKind::InvalidSpec, "K and T must be positive");
  if (!(alpha > 0.0) || alpha > 1.0) fail(ErrorKind::InvalidSpec, "alpha must lie in (0, 1]");
  if (lambda < 0.0) fail(ErrorKind::InvalidSpec, "lambda must be non-negative");
  return integrate([&](double e) { return dt_integrand(e, w, lambda, T, alpha); }, -K, K);
}

/// A periodic background plus a finitely supported deviation.
struct Potential {
  std::vector<double> periodic{0.0};
  long first = 0;
  std::vector<double> deviation;

  double at(long n) const {
    double v = periodic[static_cast<std::size_t>(floor_mod(n, static_cast<long>(periodic.size())))];
    const long k = n - first;
    if (k >= 0 && k < static_cast<long>(deviation.size())) v += deviation[static_cast<std::size_t>(k)];
    return v;
  }

  double sup_norm() const {
    double s = 0.0;
    for (double x : periodic) s = std::max(s, std::abs(x));
    double d = 0.0;
    for (double x : deviation) d = std::max(d, std::abs(x));
    return s + d;
  }
};

/// Delta + V on the block sites [-N, N].
inline TruncatedOperator schrodinger_truncation(const Potential& v, long half_width) {
  detail::check_window(1, -half_width, half_width);
  const Eigen::Index d = 2 * half_width + 1;
  CMatrix h = CMatrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    h(i, i) = v.at(-half_width + i);
    if (i + 1 < d) h(i, i + 1) = h(i + 1, i) = 1.0;
  }
  return TruncatedOperator(1, -half_width, half_width, std::move(h));
}

inline long schrodinger_window(double sup_v, double t, long radius) {
  const double norm = 2.0 + sup_v;
  return margin_rule(norm, t) + std::max(radius, 0L) + static_cast<long>(std::ceil(10.0 * std::cbrt(norm * std::abs(t))));
}

/// Checks |psi(n)| <= m e^{-|n|/m}.
inline void check_envelope(const WavePacket& psi, double m_env) {
  if (psi.block_dim() != 1) fail(ErrorKind::DimensionMismatch, "Schrodinger packets are scalar");
  for (long s = 0; s < psi.sites(); ++s) {
    const long n = psi.base() + s;
    const double bound = m_env * std::exp(-std::abs(static_cast<double>(n)) / m_env);
    if (std::abs(psi.coeffs()(s)) > bound * (1.0 + 1e-12)) {
      fail(ErrorKind::PsiEnvelopeViolated, "|psi(" + std::to_string(n) + ")| exceeds the envelope");
    }
  }
}

/// <psi, |X(t)|^p psi> for Delta + V on a window sized for t.
inline double schrodinger_moment(const Potential& v, const WavePacket& psi, double t, double p, long window = 0) {
  const long n = window > 0 ? window : schrodinger_window(v.sup_norm(), t, psi.support_radius(kSupportThreshold));
  const auto h = schrodinger_truncation(v, n);
  return moment(evolve(h, psi, t), p);
}

/// |<psi, |X(t)|^p psi>_V - <psi, |X(t)|^p psi>_W| on a common window.
inline double perturbation_stability(const Potential& w, const Potential& v, const WavePacket& psi, double t, double p,
                                     double m_env = 1.0) {
  if (m_env < 1.0) fail(ErrorKind::InvalidSpec, "envelope parameter must be >= 1");
  check_envelope(psi, m_env);
  const long n =
      schrodinger_window(std::max(v.sup_norm(), w.sup_norm()), t, psi.support_radius(kSupportThreshold));
  return std::abs(schrodinger_moment(v, psi, t, p, n) - schrodinger_moment(w, psi, t, p, n));
}

enum class Battery { DeltaOnly, Full };

inline std::string to_string(Battery b) { return b == Battery::DeltaOnly ? "delta0" : "delta0+exponential"; }

/// delta_0, and with Battery::Full also the two-sided profiles m e^{-|n|/m}
/// and sign(n) m e^{-|n|/m} cut off where they drop below 1e-12.
inline std::vector<WavePacket> envelope_battery(double m_env, Battery battery) {
  std::vector<WavePacket> out{WavePacket::delta(1, 0)};
  if (battery == Battery::Full) {
    const long r = static_cast<long>(std::ceil(m_env * std::log(m_env * 1e12)));
    CVector even(2 * r + 1), odd(2 * r + 1);
    for (long n = -r; n <= r; ++n) {
      const double e = m_env * std::exp(-std::abs(static_cast<double>(n)) / m_env);
      even(n + r) = e;
      odd(n + r) = n == 0 ? 0.0 : (n > 0 ? e : -e);
    }
    out.emplace_back(1, -r, even);
    out.emplace_back(1, -r, odd);
  }
  return out;
}

struct Lest2Certificate {
  double T = 0.0;
  double delta = 0.0;
  double p = 0.0;
  double m_env = 1.0;
  double min_moment = 0.0;  // worst battery moment at T for the unperturbed W
  double threshold = 0.0;   // 2 T^p / log T
  Battery battery = Battery::DeltaOnly;
  int samples = 8;
};

struct Lest2Options {
  Battery battery = Battery::DeltaOnly;
  double max_T = 4096.0;
  int samples = 8;
  int refine_steps = 6;
  unsigned long long seed = 20240601ULL;
};

/// Smallest dyadic T >= m_env at which every battery packet has moment above
/// 2 T^p / log T under W, then the largest delta (halving from 1, then
/// bisection) for which sampled l-infinity perturbations of size delta keep
/// every moment above T^p / log T.
inline Lest2Certificate lest2_probe(const std::vector<double>& w, double p, double m_env, const Lest2Options& opt = {}) {
  if (w.empty()) fail(ErrorKind::InvalidSpec, "empty periodic potential");
  if (!(p > 0.0)) fail(ErrorKind::InvalidSpec, "p must be positive");
  if (m_env < 1.0) fail(ErrorKind::InvalidSpec, "envelope parameter must be >= 1");
  const auto battery = envelope_battery(m_env, opt.battery);
  long radius = 0;
  for (const auto& psi : battery) radius = std::max(radius, psi.support_radius(kSupportThreshold));
  const Potential base{w, 0, {}};

  auto min_moment = [&](const Potential& v, double T, long window) {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& psi : battery) worst = std::min(worst, schrodinger_moment(v, psi, T, p, window));
    return worst;
  };

  Lest2Certificate cert;
  cert.p = p;
  cert.m_env = m_env;
  cert.battery = opt.battery;
  cert.samples = opt.samples;
  double T = std::exp2(std::ceil(std::log2(m_env)));
  for (; T <= opt.max_T; T *= 2.0) {
    if (std::log(T) <= 0.0) continue;
    const double threshold = 2.0 * std::pow(T, p) / std::log(T);
    const double worst = min_moment(base, T, schrodinger_window(base.sup_norm(), T, radius));
    if (worst > threshold) {
      cert.T = T;
      cert.min_moment = worst;
      cert.threshold = threshold;
      break;
    }
  }
  if (cert.T == 0.0) fail_numerical(ErrorKind::NoCertificateFound, "no dyadic T up to the search budget certifies");

  // A fixed window and fixed sample directions for every delta keep the search monotone in practice.
  const long window = schrodinger_window(base.sup_norm() + 1.0, cert.T, radius);
  const long first = -window;
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<std::vector<double>> directions(static_cast<std::size_t>(opt.samples),
                                              std::vector<double>(static_cast<std::size_t>(2 * window + 1)));
  for (auto& d : directions) {
    for (auto& x : d) x = unit(rng);
  }
  const double keep = std::pow(cert.T, p) / std::log(cert.T);
  auto admissible = [&](double delta) {
    std::vector<char> ok(directions.size(), 0);
    parallel_for(directions.size(), [&](std::size_t i) {
      Potential v{w, first, directions[i]};
      for (auto& x : v.deviation) x *= delta;
      ok[i] = min_moment(v, cert.T, window) > keep;
    });
    return std::all_of(ok.begin(), ok.end(), [](char c) { return c != 0; });
  };

  double good = 1.0;
  double bad = 0.0;
  int halvings = 0;
  while (!admissible(good)) {
    bad = good;
    good *= 0.5;
    if (++halvings > 40) fail_numerical(ErrorKind::NoCertificateFound, "no admissible perturbation radius found");
  }
  if (bad > 0.0) {
    for (int i = 0; i < opt.refine_steps; ++i) {
      const double mid = 0.5 * (good + bad);
      if (admissible(mid)) {
        good = mid;
      } else {
        bad = mid;
      }
    }
  }
  cert.delta = good;
  return cert;
}

struct StageRecord {
  int stage = 1;
  long period = 1;
  std::vector<double> W;
  double epsilon = 0.0;  // size of the perturbation added at this stage
  double delta = 0.0;
  double T = 0.0;
  double p = 0.0;
  double m_env = 1.0;
};

struct StageVerification {
  int stage = 1;
  double T = 0.0;
  double moment = 0.0;     // <delta_0, |X(T)|^p delta_0> for the final V
  double threshold = 0.0;  // T^p / log T
  double distance = 0.0;   // ||V - W_k||_inf
  bool ok = false;
};

struct GenericConstruction {
  std::vector<StageRecord> stages;
  std::vector<StageVerification> checks;
  std::vector<double> V;  // final periodic potential
};

/// W_1 = 0, W_k = W_{k-1} + eps_k s_k with eps_k = delta_{k-1}/4 and s_k the
/// +-1 square wave of period p_k = 2 p_{k-1}. Each stage is certified with
/// lest2_probe, and the final V is re-checked at every T_k.
inline GenericConstruction generic_builder(int stages, double p, double m_env, const Lest2Options& opt = {}) {
  if (stages < 1 || stages > 5) fail(ErrorKind::InvalidSpec, "stages must lie in 1..5");
  GenericConstruction out;
  std::vector<double> w{0.0};
  double epsilon = 0.0;
  for (int k = 1; k <= stages; ++k) {
    if (k > 1) {
      const std::size_t period = 2 * w.size();
      std::vector<double> next(period);
      epsilon = out.stages.back().delta / 4.0;
      for (std::size_t n = 0; n < period; ++n) {
        next[n] = w[n % w.size()] + (n < period / 2 ? epsilon : -epsilon);
      }
      w = std::move(next);
    }
    const auto cert = lest2_probe(w, p, m_env, opt);
    StageRecord rec;
    rec.stage = k;
    rec.period = static_cast<long>(w.size());
    rec.W = w;
    rec.epsilon = epsilon;
    rec.delta = k == 1 ? cert.delta : std::min(cert.delta, 0.49 * out.stages.back().delta);
    rec.T = cert.T;
    rec.p = p;
    rec.m_env = m_env;
    out.stages.push_back(std::move(rec));
  }
  out.V = w;
  const Potential final_v{w, 0, {}};
  const auto psi = WavePacket::delta(1, 0);
  for (const auto& rec : out.stages) {
    StageVerification row;
    row.stage = rec.stage;
    row.T = rec.T;
    row.moment = schrodinger_moment(final_v, psi, rec.T, p);
    row.threshold = std::pow(rec.T, p) / std::log(rec.T);
    for (std::size_t n = 0; n < out.V.size(); ++n) {
      row.distance = std::max(row.distance, std::abs(out.V[n] - rec.W[n % rec.W.size()]));
    }
    row.ok = row.moment > row.threshold && row.distance < rec.delta;
    out.checks.push_back(row);
  }
  return out;
}

}  // namespace transport
