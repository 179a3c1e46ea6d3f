#pragma once

// Anisotropic XY chain
//   H = sum_j mu_j [(1+gamma_j) sx_j sx_{j+1} + (1-gamma_j) sy_j sy_{j+1}] + sum_j nu_j sz_j
// its one-particle matrix M (a 2x2 block Jacobi operator) and brute-force
// checks of the commutator bounds on small chains.
//
// Spin site j corresponds to block site j of M: component 0 is c_j (matrix
// row 2j-1 in 1-based numbering), component 1 is c_j^* (row 2j).

#include <cmath>
#include <memory>
#include <mutex>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "transport/block_jacobi.hpp"
#include "transport/floquet.hpp"

namespace transport {

inline constexpr int kMaxChainLength = 12;

struct XYChainSpec {
  std::vector<double> mu;
  std::vector<double> gamma;
  std::vector<double> nu;

  double mu_at(long j) const { return mu[static_cast<std::size_t>(floor_mod(j, static_cast<long>(mu.size())))]; }
  double gamma_at(long j) const {
    return gamma[static_cast<std::size_t>(floor_mod(j, static_cast<long>(gamma.size())))];
  }
  double nu_at(long j) const { return nu[static_cast<std::size_t>(floor_mod(j, static_cast<long>(nu.size())))]; }

  int period() const {
    return static_cast<int>(std::lcm(std::lcm(mu.size(), gamma.size()), nu.size()));
  }
};

/// Non-empty, finite couplings: enough for the spin Hamiltonian.
inline void validate_couplings(const XYChainSpec& spec) {
  if (spec.mu.empty() || spec.gamma.empty() || spec.nu.empty()) {
    fail(ErrorKind::InvalidSpec, "mu, gamma and nu must be non-empty");
  }
  for (const auto* list : {&spec.mu, &spec.gamma, &spec.nu})
    for (double x : *list)
      if (!std::isfinite(x)) fail(ErrorKind::InvalidSpec, "couplings must be finite");
}

/// Couplings for which M has invertible hopping blocks.
inline void validate(const XYChainSpec& spec) {
  validate_couplings(spec);
  for (double x : spec.mu) {
    if (std::abs(x) <= 1e-12) fail(ErrorKind::InvalidSpec, "mu_j must be non-zero");
  }
  for (double g : spec.gamma) {
    if (std::abs(g * g - 1.0) <= 1e-12) fail(ErrorKind::InvalidSpec, "gamma_j must avoid +-1");
  }
}

/// Gamma_{j+1} = 2 [[-mu_j, -mu_j gamma_j], [mu_j gamma_j, mu_j]].
inline CMatrix xy_hopping_block(double mu, double gamma) {
  CMatrix g(2, 2);
  g << -mu, -mu * gamma, mu * gamma, mu;
  return 2.0 * g;
}

inline CMatrix xy_diagonal_block(double nu) {
  CMatrix j = CMatrix::Zero(2, 2);
  j(0, 0) = 2.0 * nu;
  j(1, 1) = -2.0 * nu;
  return j;
}

inline BlockJacobiOperator build_M(const XYChainSpec& spec) {
  validate(spec);
  BlockSpec bs;
  bs.m = 2;
  bs.q = spec.period();
  for (int n = 0; n < bs.q; ++n) {
    bs.a.push_back(xy_hopping_block(spec.mu_at(n), spec.gamma_at(n)));
    bs.b.push_back(xy_diagonal_block(spec.nu_at(n)));
  }
  return build_operator(std::move(bs));
}

/// Lower bound v0 = ||Q|| on the Lieb-Robinson velocity.
inline double lr_velocity_bound(const XYChainSpec& spec, int points = 512) { return q_norm(build_M(spec), points).value; }

/// 1-based rows of c_j and c_j^* in M.
inline long c_row(long j) { return 2 * j - 1; }
inline long c_dag_row(long j) { return 2 * j; }
/// Scalar index of M (block site floor(n/2), component n mod 2) for a 1-based row.
inline long row_to_scalar(long row) { return row + 1; }

/// e^{-itM} restricted to Lambda = [first, last], with rows and columns in
/// the order c_first, c_first^*, ..., c_last, c_last^*.
inline CMatrix m_propagator(const XYChainSpec& spec, long first, long last, double t) {
  const auto h = truncate_range(build_M(spec), first, last);
  const auto& eig = h.spectrum();
  CVector ph(eig.values.size());
  for (Eigen::Index k = 0; k < ph.size(); ++k) ph(k) = std::exp(cplx(0.0, -t * eig.values(k)));
  return eig.vectors * ph.asDiagonal() * eig.vectors.adjoint();
}

/// Exact diagonalization of the chain on Lambda = [first, last]. Site
/// `first` is the leftmost (most significant) tensor factor.
class SpinChain {
 public:
  SpinChain(const XYChainSpec& spec, long first, long last) : spec_(spec), first_(first), last_(last) {
    validate_couplings(spec_);
    if (last < first) fail(ErrorKind::InvalidSpec, "empty lattice");
    if (last - first + 1 > kMaxChainLength) {
      fail(ErrorKind::ChainTooLong, "chains are limited to " + std::to_string(kMaxChainLength) + " sites");
    }
    const Eigen::Index d = dim();
    h_ = CMatrix::Zero(d, d);
    for (long j = first_; j <= last_; ++j) {
      h_ += spec_.nu_at(j) * sigma('z', j);
      if (j < last_) {
        const double mu = spec_.mu_at(j);
        const double g = spec_.gamma_at(j);
        h_ += mu * (1.0 + g) * product({{j, pauli('x')}, {j + 1, pauli('x')}});
        h_ += mu * (1.0 - g) * product({{j, pauli('y')}, {j + 1, pauli('y')}});
      }
    }
  }

  long first() const noexcept { return first_; }
  long last() const noexcept { return last_; }
  int length() const noexcept { return static_cast<int>(last_ - first_ + 1); }
  Eigen::Index dim() const noexcept { return Eigen::Index{1} << length(); }
  const CMatrix& hamiltonian() const noexcept { return h_; }
  const XYChainSpec& spec() const noexcept { return spec_; }

  /// A single-site 2x2 operator placed at site j.
  CMatrix local(const CMatrix& op, long j) const { return product({{j, op}}); }

  /// Tensor product of 2x2 factors at the listed sites, identity elsewhere.
  CMatrix product(const std::vector<std::pair<long, CMatrix>>& factors) const {
    std::vector<CMatrix> per_site(static_cast<std::size_t>(length()), CMatrix::Identity(2, 2));
    for (const auto& [j, op] : factors) {
      check_site(j);
      per_site[static_cast<std::size_t>(j - first_)] = per_site[static_cast<std::size_t>(j - first_)] * op;
    }
    CMatrix out = per_site.front();
    for (std::size_t i = 1; i < per_site.size(); ++i) out = kron(out, per_site[i]);
    return out;
  }

  static CMatrix pauli(char axis) {
    CMatrix s = CMatrix::Zero(2, 2);
    switch (axis) {
      case 'x': s << 0, 1, 1, 0; break;
      case 'y': s << 0, cplx(0, -1), cplx(0, 1), 0; break;
      case 'z': s << 1, 0, 0, -1; break;
      default: fail(ErrorKind::InvalidSpec, std::string("unknown Pauli axis ") + axis);
    }
    return s;
  }

  CMatrix sigma(char axis, long j) const { return local(pauli(axis), j); }
  /// a_j = (sx - i sy)/2
  CMatrix lowering(long j) const { return local(0.5 * (pauli('x') - kI * pauli('y')), j); }
  /// a_j^* = (sx + i sy)/2
  CMatrix raising(long j) const { return local(0.5 * (pauli('x') + kI * pauli('y')), j); }

  CMatrix c(long j) const { return jordan_wigner(j, 0.5 * (pauli('x') - kI * pauli('y'))); }
  CMatrix c_dag(long j) const { return jordan_wigner(j, 0.5 * (pauli('x') + kI * pauli('y'))); }

  /// Component k (1-based, in the order c_first, c_first^*, ...) of the vector C.
  CMatrix c_component(long k) const {
    const long j = first_ + (k - 1) / 2;
    return (k - 1) % 2 == 0 ? c(j) : c_dag(j);
  }

  const EigenDecomposition& spectrum() const {
    std::call_once(cache_->once, [&] { cache_->eig = hermitian_eigen(h_); });
    return cache_->eig;
  }

  /// tau_t(A) = e^{itH} A e^{-itH}
  CMatrix tau(const CMatrix& a, double t) const {
    if (a.rows() != dim() || a.cols() != dim()) fail(ErrorKind::DimensionMismatch, "observable size mismatch");
    if (t == 0.0) return a;
    const auto& eig = spectrum();
    CVector ph(eig.values.size());
    for (Eigen::Index k = 0; k < ph.size(); ++k) ph(k) = std::exp(cplx(0.0, t * eig.values(k)));
    if (!is_real(eig.vectors)) {
      const CMatrix inner = eig.vectors.adjoint() * a * eig.vectors;
      return eig.vectors * (ph.asDiagonal() * inner * ph.conjugate().asDiagonal()) * eig.vectors.adjoint();
    }
    // H is real for every chain, so the conjugations split into real products.
    const RMatrix v = eig.vectors.real();
    auto conjugate = [](const RMatrix& left, const CMatrix& x, const RMatrix& right) {
      CMatrix out(left.rows(), right.cols());
      out.real() = left * x.real() * right;
      out.imag() = left * x.imag() * right;
      return out;
    };
    const CMatrix inner = conjugate(v.transpose(), a, v);
    return conjugate(v, ph.asDiagonal() * inner * ph.conjugate().asDiagonal(), v.transpose());
  }

  static CMatrix kron(const CMatrix& x, const CMatrix& y) {
    CMatrix out(x.rows() * y.rows(), x.cols() * y.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) out.block(i * y.rows(), j * y.cols(), y.rows(), y.cols()) = x(i, j) * y;
    }
    return out;
  }

 private:
  void check_site(long j) const {
    if (j < first_ || j > last_) fail(ErrorKind::InvalidSpec, "site " + std::to_string(j) + " outside the chain");
  }

  CMatrix jordan_wigner(long j, const CMatrix& op) const {
    std::vector<std::pair<long, CMatrix>> factors;
    for (long i = first_; i < j; ++i) factors.emplace_back(i, pauli('z'));
    factors.emplace_back(j, op);
    return product(factors);
  }

  struct Cache {
    std::once_flag once;
    EigenDecomposition eig;
  };

  XYChainSpec spec_;
  long first_;
  long last_;
  CMatrix h_;
  std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

inline SpinChain build_spin_hamiltonian(const XYChainSpec& spec, long first, long last) {
  return SpinChain(spec, first, last);
}

/// P_t(A, B) = ||[tau_t(A), B]||
inline double commutator_norm(const SpinChain& chain, const CMatrix& a, const CMatrix& b, double t) {
  if (b.rows() != chain.dim() || b.cols() != chain.dim()) fail(ErrorKind::DimensionMismatch, "observable size mismatch");
  const CMatrix ta = chain.tau(a, t);
  return spectral_norm(ta * b - b * ta);
}

/// || tau_t(c_j) - sum_k M(t)_{2j-1,k} C^{(k)} || on the chain's lattice.
inline double verify_free_fermion(const SpinChain& chain, long j, double t) {
  const CMatrix mt = m_propagator(chain.spec(), chain.first(), chain.last(), t);
  const long row = 2 * (j - chain.first());
  CMatrix rhs = CMatrix::Zero(chain.dim(), chain.dim());
  for (long k = 0; k < mt.cols(); ++k) {
    if (mt(row, k) != cplx(0.0)) rhs += mt(row, k) * chain.c_component(k + 1);
  }
  return spectral_norm(chain.tau(chain.c(j), t) - rhs);
}

struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool ok = false;
};

enum class LowerBoundPairing { Proof, Literal };

/// Cases 1..4 select the entries (2l-1, 2r-1), (2l-1, 2r), (2l, 2r-1), (2l, 2r)
/// of M(t); A is c_l for the odd rows and c_l^* for the even rows. With
/// LowerBoundPairing::Proof, B is a_r^* against an odd column and a_r against
/// an even column. With
/// LowerBoundPairing::Literal the four pairs are (c_l, a_r^*), (c_l, a_r),
/// (c_l^*, a_r), (c_l^*, a_r^*).
/// lhs is P_t(A, B), rhs the modulus of the entry.
inline BoundCheck verify_lower_bound(const SpinChain& chain, long l, long r, double t, int which,
                                     LowerBoundPairing pairing = LowerBoundPairing::Proof) {
  if (!(l < r) || l < chain.first() || r > chain.last()) fail(ErrorKind::InvalidSpec, "need first <= l < r <= last");
  if (which < 1 || which > 4) fail(ErrorKind::InvalidSpec, "case must be 1..4");
  const bool a_is_dag = which >= 3;
  const bool odd_column = which == 1 || which == 3;
  const bool b_is_dag = pairing == LowerBoundPairing::Proof ? odd_column : (which == 1 || which == 4);
  const CMatrix a = a_is_dag ? chain.c_dag(l) : chain.c(l);
  const CMatrix b = b_is_dag ? chain.raising(r) : chain.lowering(r);
  const long row = (a_is_dag ? c_dag_row(l) : c_row(l)) - c_row(chain.first());
  const long col = (odd_column ? c_row(r) : c_dag_row(r)) - c_row(chain.first());
  const CMatrix mt = m_propagator(chain.spec(), chain.first(), chain.last(), t);
  BoundCheck out;
  out.lhs = commutator_norm(chain, a, b, t);
  out.rhs = std::abs(mt(row, col));
  out.ok = out.lhs >= out.rhs - 1e-8;
  return out;
}

/// ||[tau_t(a_s), B]|| <= 8 ||B|| sum_{k <= 2s-1} sum_{k' >= 2r-1} |M(t)_{k,k'}|
/// for an observable B supported on [r, last].
inline BoundCheck verify_upper_bound(const SpinChain& chain, long s, long r, const CMatrix& b, double t) {
  if (!(s < r) || s < chain.first() || r > chain.last()) fail(ErrorKind::InvalidSpec, "need first <= s < r <= last");
  const CMatrix mt = m_propagator(chain.spec(), chain.first(), chain.last(), t);
  const long row_max = c_row(s) - c_row(chain.first());
  const long col_min = c_row(r) - c_row(chain.first());
  double sum = 0.0;
  for (long k = 0; k <= row_max; ++k) {
    for (long kk = col_min; kk < mt.cols(); ++kk) sum += std::abs(mt(k, kk));
  }
  BoundCheck out;
  out.lhs = commutator_norm(chain, chain.lowering(s), b, t);
  out.rhs = 8.0 * spectral_norm(b) * sum;
  out.ok = out.lhs <= out.rhs + 1e-8;
  return out;
}

}  // namespace transport
