#pragma once

// Periodic block Jacobi operators
//
//   (J u)_n = a_{n-1}^* u_{n-1} + b_n u_n + a_n u_{n+1}
//
// on l^2(Z)^m, together with the current operator A = i[J, X], finite
// wave packets and dense truncations to a window of block sites.
//
// Site n uses the blocks a[n mod q], b[n mod q] (0-based storage), so site 0
// carries the first block of each period. A scalar index k addresses block
// site floor(k/m), component k mod m.

#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "transport/linalg.hpp"

namespace transport {

inline constexpr double kDetTolerance = 1e-12;
inline constexpr double kHermitianTolerance = 1e-12;
inline constexpr Eigen::Index kMaxDenseDimension = 8192;

struct BlockSpec {
  int m = 1;
  int q = 1;
  std::vector<CMatrix> a;
  std::vector<CMatrix> b;
};

class BlockJacobiOperator {
 public:
  explicit BlockJacobiOperator(BlockSpec spec) : spec_(std::move(spec)) {
    if (spec_.m < 1 || spec_.q < 1) {
      fail(ErrorKind::DimensionMismatch, "block dimension and period must be positive");
    }
    if (static_cast<int>(spec_.a.size()) != spec_.q || static_cast<int>(spec_.b.size()) != spec_.q) {
      fail(ErrorKind::DimensionMismatch, "expected " + std::to_string(spec_.q) +
                                             " off-diagonal and diagonal blocks");
    }
    for (int j = 0; j < spec_.q; ++j) {
      const auto& a = spec_.a[j];
      const auto& b = spec_.b[j];
      if (a.rows() != spec_.m || a.cols() != spec_.m || b.rows() != spec_.m || b.cols() != spec_.m) {
        fail(ErrorKind::DimensionMismatch, "block " + std::to_string(j + 1) + " is not " +
                                               std::to_string(spec_.m) + "x" + std::to_string(spec_.m));
      }
      if (std::abs(a.determinant()) <= kDetTolerance) {
        fail(ErrorKind::SingularOffDiagonal, "|det a_" + std::to_string(j + 1) + "| <= 1e-12");
      }
      if (hermiticity_defect(b) >= kHermitianTolerance) {
        fail(ErrorKind::NonHermitianDiagonal, "b_" + std::to_string(j + 1) + " is not Hermitian");
      }
    }
    for (int j = 0; j < spec_.q; ++j) {
      max_a_norm_ = std::max(max_a_norm_, spectral_norm(spec_.a[j]));
      max_b_norm_ = std::max(max_b_norm_, spectral_norm(spec_.b[j]));
    }
  }

  int block_dim() const noexcept { return spec_.m; }
  int period() const noexcept { return spec_.q; }
  const BlockSpec& spec() const noexcept { return spec_; }

  const CMatrix& a(long site) const { return spec_.a[static_cast<std::size_t>(floor_mod(site, spec_.q))]; }
  const CMatrix& b(long site) const { return spec_.b[static_cast<std::size_t>(floor_mod(site, spec_.q))]; }

  double max_hopping_norm() const noexcept { return max_a_norm_; }
  double max_diagonal_norm() const noexcept { return max_b_norm_; }

  /// max_j ||b_j|| + 2 max_j ||a_j||, an upper bound for ||J||.
  double norm_bound() const noexcept { return max_b_norm_ + 2.0 * max_a_norm_; }

  /// The same operator written with period k*q.
  BlockJacobiOperator with_period_multiple(int k) const {
    BlockSpec s;
    s.m = spec_.m;
    s.q = spec_.q * k;
    for (int r = 0; r < k; ++r) {
      s.a.insert(s.a.end(), spec_.a.begin(), spec_.a.end());
      s.b.insert(s.b.end(), spec_.b.begin(), spec_.b.end());
    }
    return BlockJacobiOperator(std::move(s));
  }

 private:
  BlockSpec spec_;
  double max_a_norm_ = 0.0;
  double max_b_norm_ = 0.0;
};

inline BlockJacobiOperator build_operator(BlockSpec spec) { return BlockJacobiOperator(std::move(spec)); }

/// Scalar Jacobi operator with unit off-diagonal and diagonal b (period b.size()).
inline BlockJacobiOperator scalar_jacobi(const std::vector<double>& b, double a = 1.0) {
  BlockSpec s;
  s.m = 1;
  s.q = static_cast<int>(b.size());
  for (double v : b) {
    s.a.push_back(CMatrix::Constant(1, 1, a));
    s.b.push_back(CMatrix::Constant(1, 1, v));
  }
  return BlockJacobiOperator(std::move(s));
}

/// Finitely supported vector in l^2(Z)^m, stored from block site `base` on.
class WavePacket {
 public:
  explicit WavePacket(int m = 1) : m_(m) {}
  WavePacket(int m, long base, CVector coeffs) : m_(m), base_(base), coeffs_(std::move(coeffs)) {
    if (m_ < 1 || coeffs_.size() % m_ != 0) {
      fail(ErrorKind::DimensionMismatch, "coefficient count must be a multiple of the block size");
    }
  }

  static WavePacket delta(int m, long scalar_index) {
    const long site = floor_div(scalar_index, m);
    CVector c = CVector::Zero(m);
    c(floor_mod(scalar_index, m)) = 1.0;
    return WavePacket(m, site, std::move(c));
  }

  static WavePacket block_delta(int m, long site, int component) { return delta(m, site * m + component); }

  int block_dim() const noexcept { return m_; }
  long base() const noexcept { return base_; }
  long sites() const noexcept { return static_cast<long>(coeffs_.size()) / m_; }
  long last() const noexcept { return base_ + sites() - 1; }
  bool empty() const noexcept { return coeffs_.size() == 0; }
  const CVector& coeffs() const noexcept { return coeffs_; }

  CVector block(long site) const {
    if (site < base_ || site > last()) return CVector::Zero(m_);
    return coeffs_.segment((site - base_) * m_, m_);
  }

  cplx scalar(long n) const {
    const long site = floor_div(n, m_);
    if (site < base_ || site > last()) return 0.0;
    return coeffs_((site - base_) * m_ + floor_mod(n, m_));
  }

  double norm() const { return coeffs_.norm(); }

  /// Largest |site| carrying an entry above `threshold`; -1 for a null packet.
  long support_radius(double threshold = 0.0) const {
    long r = -1;
    for (long s = 0; s < sites(); ++s) {
      if (coeffs_.segment(s * m_, m_).cwiseAbs().maxCoeff() > threshold) {
        r = std::max(r, std::abs(base_ + s));
      }
    }
    return r;
  }

  /// Drops leading and trailing sites whose entries are all <= threshold.
  WavePacket trimmed(double threshold = 0.0) const {
    long lo = 0;
    long hi = sites() - 1;
    auto small = [&](long s) { return coeffs_.segment(s * m_, m_).cwiseAbs().maxCoeff() <= threshold; };
    while (lo <= hi && small(lo)) ++lo;
    while (hi >= lo && small(hi)) --hi;
    if (lo > hi) return WavePacket(m_);
    return WavePacket(m_, base_ + lo, coeffs_.segment(lo * m_, (hi - lo + 1) * m_));
  }

  /// Copy extended with zeros so that it covers [first, last].
  WavePacket covering(long first, long last_site) const {
    if (!empty()) {
      first = std::min(first, base_);
      last_site = std::max(last_site, last());
    }
    CVector c = CVector::Zero((last_site - first + 1) * m_);
    if (!empty()) c.segment((base_ - first) * m_, coeffs_.size()) = coeffs_;
    return WavePacket(m_, first, std::move(c));
  }

  WavePacket& operator*=(cplx s) {
    coeffs_ *= s;
    return *this;
  }

  friend WavePacket operator+(const WavePacket& x, const WavePacket& y) {
    if (x.empty()) return y;
    if (y.empty()) return x;
    const long first = std::min(x.base_, y.base_);
    const long last_site = std::max(x.last(), y.last());
    WavePacket out = x.covering(first, last_site);
    out.coeffs_.segment((y.base_ - first) * y.m_, y.coeffs_.size()) += y.coeffs_;
    return out;
  }

  friend WavePacket operator*(cplx s, WavePacket x) {
    x *= s;
    return x;
  }

  friend WavePacket operator-(const WavePacket& x, const WavePacket& y) { return x + cplx(-1.0) * y; }

 private:
  int m_;
  long base_ = 0;
  CVector coeffs_;
};

inline double distance(const WavePacket& x, const WavePacket& y) { return (x - y).norm(); }

inline WavePacket apply(const BlockJacobiOperator& op, const WavePacket& u) {
  const int m = op.block_dim();
  if (u.block_dim() != m) fail(ErrorKind::DimensionMismatch, "packet block size differs from operator");
  if (u.empty()) return WavePacket(m);
  const long first = u.base() - 1;
  const long sites = u.sites() + 2;
  CVector out = CVector::Zero(sites * m);
  for (long n = first; n < first + sites; ++n) {
    CVector v = op.b(n) * u.block(n);
    v += op.a(n - 1).adjoint() * u.block(n - 1);
    v += op.a(n) * u.block(n + 1);
    out.segment((n - first) * m, m) = v;
  }
  return WavePacket(m, first, std::move(out));
}

/// Current operator (A u)_n = -i a_{n-1}^* u_{n-1} + i a_n u_{n+1}.
inline WavePacket apply_A(const BlockJacobiOperator& op, const WavePacket& u) {
  const int m = op.block_dim();
  if (u.block_dim() != m) fail(ErrorKind::DimensionMismatch, "packet block size differs from operator");
  if (u.empty()) return WavePacket(m);
  const long first = u.base() - 1;
  const long sites = u.sites() + 2;
  CVector out = CVector::Zero(sites * m);
  for (long n = first; n < first + sites; ++n) {
    CVector v = -kI * (op.a(n - 1).adjoint() * u.block(n - 1));
    v += kI * (op.a(n) * u.block(n + 1));
    out.segment((n - first) * m, m) = v;
  }
  return WavePacket(m, first, std::move(out));
}

/// Position operator: multiplies block site n by n.
inline WavePacket apply_X(const WavePacket& u) {
  CVector c = u.coeffs();
  const int m = u.block_dim();
  for (long s = 0; s < u.sites(); ++s) c.segment(s * m, m) *= static_cast<double>(u.base() + s);
  return WavePacket(m, u.base(), std::move(c));
}

/// Dense restriction of a Hermitian block operator to block sites
/// [first_site, last_site] with open boundaries. The spectral decomposition
/// is computed on first use and shared between copies.
class TruncatedOperator {
 public:
  TruncatedOperator(int m, long first_site, long last_site, CMatrix h)
      : m_(m), first_(first_site), last_(last_site), h_(std::move(h)), cache_(std::make_shared<Cache>()) {
    if (h_.rows() != dim() || h_.cols() != dim()) {
      fail(ErrorKind::DimensionMismatch, "matrix size does not match window");
    }
  }

  int block_dim() const noexcept { return m_; }
  long first_site() const noexcept { return first_; }
  long last_site() const noexcept { return last_; }
  long sites() const noexcept { return last_ - first_ + 1; }
  Eigen::Index dim() const noexcept { return sites() * m_; }
  const CMatrix& matrix() const noexcept { return h_; }

  bool contains(long site) const noexcept { return site >= first_ && site <= last_; }

  Eigen::Index index(long site, int component) const { return (site - first_) * m_ + component; }

  /// Row of scalar index n (block floor(n/m), component n mod m).
  Eigen::Index scalar_row(long n) const {
    const long site = floor_div(n, m_);
    if (!contains(site)) fail(ErrorKind::SupportOutsideWindow, "scalar index " + std::to_string(n) + " outside window");
    return index(site, static_cast<int>(floor_mod(n, m_)));
  }

  const EigenDecomposition& spectrum() const {
    std::call_once(cache_->once, [this] { cache_->eig = hermitian_eigen(h_); });
    return cache_->eig;
  }

  /// Largest |eigenvalue|.
  double norm() const {
    const auto& ev = spectrum().values;
    return ev.size() == 0 ? 0.0 : std::max(std::abs(ev.minCoeff()), std::abs(ev.maxCoeff()));
  }

  CVector embed(const WavePacket& u) const {
    if (u.block_dim() != m_) fail(ErrorKind::DimensionMismatch, "packet block size differs from window");
    CVector v = CVector::Zero(dim());
    for (long s = 0; s < u.sites(); ++s) {
      const long site = u.base() + s;
      const CVector blk = u.coeffs().segment(s * m_, m_);
      if (!contains(site)) {
        if (blk.cwiseAbs().maxCoeff() > 0.0) {
          fail(ErrorKind::SupportOutsideWindow, "packet has support at site " + std::to_string(site));
        }
        continue;
      }
      v.segment(index(site, 0), m_) = blk;
    }
    return v;
  }

  WavePacket restrict(const CVector& v) const { return WavePacket(m_, first_, v); }

  /// e^{-itH} v through the cached spectral decomposition.
  CVector propagate(const CVector& v, double t) const {
    const auto& eig = spectrum();
    CVector w = eig.vectors.adjoint() * v;
    for (Eigen::Index k = 0; k < w.size(); ++k) w(k) *= std::exp(cplx(0.0, -t * eig.values(k)));
    return eig.vectors * w;
  }

  CVector apply_position(const CVector& v) const {
    CVector out = v;
    for (long s = 0; s < sites(); ++s) out.segment(s * m_, m_) *= static_cast<double>(first_ + s);
    return out;
  }

 private:
  struct Cache {
    std::once_flag once;
    EigenDecomposition eig;
  };

  int m_;
  long first_;
  long last_;
  CMatrix h_;
  std::shared_ptr<Cache> cache_;
};

namespace detail {

inline void check_window(int m, long first, long last) {
  if (last < first) fail(ErrorKind::DimensionMismatch, "empty window");
  if ((last - first + 1) * static_cast<long>(m) > kMaxDenseDimension) {
    fail(ErrorKind::SizeLimitExceeded, "window of " + std::to_string(last - first + 1) +
                                           " sites exceeds the dense limit of 8192 rows");
  }
}

}  // namespace detail

/// Restriction of J to block sites [first, last].
inline TruncatedOperator truncate_range(const BlockJacobiOperator& op, long first, long last) {
  const int m = op.block_dim();
  detail::check_window(m, first, last);
  const long sites = last - first + 1;
  CMatrix h = CMatrix::Zero(sites * m, sites * m);
  for (long s = 0; s < sites; ++s) {
    const long n = first + s;
    const CMatrix& b = op.b(n);
    h.block(s * m, s * m, m, m) = 0.5 * (b + b.adjoint());
    if (s + 1 < sites) {
      h.block(s * m, (s + 1) * m, m, m) = op.a(n);
      h.block((s + 1) * m, s * m, m, m) = op.a(n).adjoint();
    }
  }
  return TruncatedOperator(m, first, last, std::move(h));
}

/// Restriction of J to block sites [-N, N].
inline TruncatedOperator truncate(const BlockJacobiOperator& op, long half_width) {
  if (half_width < 1) fail(ErrorKind::DimensionMismatch, "window half-width must be positive");
  return truncate_range(op, -half_width, half_width);
}

/// Restriction of the current operator A to block sites [first, last]; equals
/// i[J_N, X_N] for the truncated J_N.
inline TruncatedOperator truncate_current(const BlockJacobiOperator& op, long first, long last) {
  const int m = op.block_dim();
  detail::check_window(m, first, last);
  const long sites = last - first + 1;
  CMatrix h = CMatrix::Zero(sites * m, sites * m);
  for (long s = 0; s + 1 < sites; ++s) {
    const long n = first + s;
    h.block(s * m, (s + 1) * m, m, m) = kI * op.a(n);
    h.block((s + 1) * m, s * m, m, m) = -kI * op.a(n).adjoint();
  }
  return TruncatedOperator(m, first, last, std::move(h));
}

}  // namespace transport
