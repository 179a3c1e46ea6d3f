#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include "transport/error.hpp"

namespace transport {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr cplx kI{0.0, 1.0};

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// stored column-wise.
struct EigenDecomposition {
  RVector values;
  CMatrix vectors;
};

inline double max_abs(const CMatrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline double hermiticity_defect(const CMatrix& a) {
  return max_abs(a - a.adjoint());
}

inline bool is_real(const CMatrix& a) {
  return a.size() == 0 || a.imag().cwiseAbs().maxCoeff() == 0.0;
}

namespace detail {

inline void check_lapack(lapack_int info, const char* routine) {
  if (info != 0) {
    fail_numerical(ErrorKind::EigensolverFailed,
                   std::string(routine) + " failed with info=" + std::to_string(info));
  }
}

}  // namespace detail

/// Dense Hermitian eigensolver. Real symmetric input is routed through the
/// real divide-and-conquer driver, which is roughly twice as fast.
inline EigenDecomposition hermitian_eigen(const CMatrix& h) {
  const auto n = static_cast<lapack_int>(h.rows());
  if (h.rows() != h.cols()) fail(ErrorKind::DimensionMismatch, "eigensolver needs a square matrix");
  EigenDecomposition out;
  out.values.resize(n);
  if (n == 0) return out;
  if (is_real(h)) {
    RMatrix work = h.real();
    detail::check_lapack(
        LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, work.data(), n, out.values.data()),
        "dsyevd");
    out.vectors = work.cast<cplx>();
  } else {
    out.vectors = h;
    detail::check_lapack(
        LAPACKE_zheevd(LAPACK_COL_MAJOR, 'V', 'L', n, out.vectors.data(), n, out.values.data()),
        "zheevd");
  }
  return out;
}

inline RVector hermitian_eigenvalues(const CMatrix& h) {
  const auto n = static_cast<lapack_int>(h.rows());
  RVector values(n);
  if (n == 0) return values;
  if (is_real(h)) {
    RMatrix work = h.real();
    detail::check_lapack(
        LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'L', n, work.data(), n, values.data()), "dsyevd");
  } else {
    CMatrix work = h;
    detail::check_lapack(
        LAPACKE_zheevd(LAPACK_COL_MAJOR, 'N', 'L', n, work.data(), n, values.data()), "zheevd");
  }
  return values;
}

/// Largest singular value. Up to 1024 columns this is exact (eigenvalues of
/// the Gram matrix); beyond that, power iteration on the Gram matrix.
inline double spectral_norm(const CMatrix& a) {
  if (a.size() == 0) return 0.0;
  if (a.cols() <= 1024) {
    const CMatrix gram = a.adjoint() * a;
    const RVector ev = hermitian_eigenvalues(gram);
    return std::sqrt(std::max(0.0, ev.maxCoeff()));
  }
  CVector x = CVector::Ones(a.cols()) / std::sqrt(static_cast<double>(a.cols()));
  double estimate = 0.0;
  for (int it = 0; it < 10000; ++it) {
    CVector y = a.adjoint() * (a * x);
    const double next = std::sqrt(y.norm());
    if (y.norm() == 0.0) return 0.0;
    x = y / y.norm();
    if (std::abs(next - estimate) <= 1e-9 * std::max(1.0, next)) return next;
    estimate = next;
  }
  return estimate;
}

/// Maximum of |x| over the spectrum of a Hermitian matrix.
inline double hermitian_norm(const CMatrix& h) {
  const RVector ev = hermitian_eigenvalues(h);
  return ev.size() == 0 ? 0.0 : std::max(std::abs(ev.minCoeff()), std::abs(ev.maxCoeff()));
}

inline long floor_div(long a, long b) {
  long q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline long floor_mod(long a, long b) { return a - b * floor_div(a, b); }

}  // namespace transport
