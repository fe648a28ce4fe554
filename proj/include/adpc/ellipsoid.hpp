#pragma once

#include "adpc/common.hpp"

#include <optional>

namespace adpc {

/// @brief Set of matrices Z with Z'EZ + Z'F + F'Z + G ⪯ 0, E ≻ 0.
///
/// Built only through make_ellipsoid, which validates boundedness and
/// non-degeneracy; instances are immutable afterwards.
template <typename Scalar> class MatrixEllipsoid {
public:
  const Mat<Scalar> &E() const { return E_; }
  const Mat<Scalar> &F() const { return F_; }
  const Mat<Scalar> &G() const { return G_; }
  Index p() const { return E_.rows(); }
  Index q() const { return G_.rows(); }
  /// F'E⁻¹F − G, positive definite by construction.
  const Mat<Scalar> &Gc() const { return Gc_; }
  /// −E⁻¹F.
  const Mat<Scalar> &center() const { return Zc_; }

private:
  template <typename S>
  friend MatrixEllipsoid<S> make_ellipsoid(const Mat<S> &, const Mat<S> &,
                                           const Mat<S> &, PsdTolerance);
  Mat<Scalar> E_, F_, G_, Gc_, Zc_;
};

template <typename Scalar>
MatrixEllipsoid<Scalar> make_ellipsoid(const Mat<Scalar> &E,
                                       const Mat<Scalar> &F,
                                       const Mat<Scalar> &G,
                                       PsdTolerance tol = {}) {
  const Index p = E.rows();
  const Index q = G.rows();
  if (p == 0 || q == 0)
    throw Error(ErrorCode::InvalidArgument, "ellipsoid dimensions must be positive");
  if (E.cols() != p || G.cols() != q || F.rows() != p || F.cols() != q)
    throw Error(ErrorCode::InvalidArgument, "ellipsoid blocks are not conformable");

  MatrixEllipsoid<Scalar> ell;
  ell.E_ = symmetrized(E);
  ell.F_ = F;
  ell.G_ = symmetrized(G);
  if (!is_pd(ell.E_, Scalar(tol.tol_psd)))
    throw Error(ErrorCode::NotPositiveDefinite, "E is not positive definite");

  Eigen::LLT<Mat<Scalar>> llt(ell.E_);
  Mat<Scalar> EinvF = llt.solve(ell.F_);
  ell.Zc_ = -EinvF;
  ell.Gc_ = symmetrized((ell.F_.transpose() * EinvF - ell.G_).eval());
  // Positive definiteness of G_c is judged against the size of the terms it
  // is formed from, so cancellation down to round-off counts as degenerate.
  const Scalar scale = std::max(psd_scale<Scalar>(ell.G_),
                                psd_scale<Scalar>(ell.F_.transpose() * EinvF));
  if (lambda_min(ell.Gc_) <= Scalar(tol.tol_psd) * scale)
    throw Error(ErrorCode::DegenerateSet, "F'E^-1F - G is not positive definite");
  return ell;
}

template <typename Scalar>
Mat<Scalar> center(const MatrixEllipsoid<Scalar> &ell) {
  return ell.center();
}

/// Quadratic form Z'EZ + Z'F + F'Z + G.
template <typename Scalar>
Mat<Scalar> quadratic_form(const MatrixEllipsoid<Scalar> &ell,
                           const Mat<Scalar> &Z) {
  Mat<Scalar> ZF = Z.transpose() * ell.F();
  return symmetrized((Z.transpose() * ell.E() * Z + ZF + ZF.transpose() + ell.G()).eval());
}

template <typename Scalar>
bool contains(const MatrixEllipsoid<Scalar> &ell, const Mat<Scalar> &Z,
              PsdTolerance tol = {}) {
  if (Z.rows() != ell.p() || Z.cols() != ell.q())
    throw Error(ErrorCode::InvalidArgument, "contains: Z is not conformable");
  Mat<Scalar> ZF = Z.transpose() * ell.F();
  Mat<Scalar> ZEZ = Z.transpose() * ell.E() * Z;
  const Scalar scale = spectral_norm(ZEZ) + Scalar(2) * spectral_norm(ZF) +
                       spectral_norm(ell.G());
  return lambda_max<Scalar>(quadratic_form(ell, Z)) <= Scalar(tol.tol_psd) * scale;
}

/// log of β·det(G_c)^{p/2}·det(E⁻¹)^{q/2}.
template <typename Scalar>
Scalar log_volume(const MatrixEllipsoid<Scalar> &ell, Scalar beta = Scalar(1)) {
  if (!(beta > Scalar(0)))
    throw Error(ErrorCode::InvalidArgument, "volume: beta must be positive");
  const Scalar p = Scalar(ell.p());
  const Scalar q = Scalar(ell.q());
  return std::log(beta) + p / Scalar(2) * log_det_pd(ell.Gc()) -
         q / Scalar(2) * log_det_pd(ell.E());
}

template <typename Scalar>
Scalar volume(const MatrixEllipsoid<Scalar> &ell, Scalar beta = Scalar(1)) {
  return std::exp(log_volume(ell, beta));
}

/// λ_min(outer − α·inner), the objective of the S-lemma multiplier search.
template <typename Scalar>
Scalar multiplier_margin(const Mat<Scalar> &inner, const Mat<Scalar> &outer,
                         Scalar alpha) {
  return lambda_min<Scalar>(outer - alpha * inner);
}

/// Concave 1-D search over α ≥ 0 maximising λ_min(outer − α·inner).
template <typename Scalar>
std::optional<Scalar> one_parameter_search(const Mat<Scalar> &inner,
                                           const Mat<Scalar> &outer,
                                           PsdTolerance tol = {}) {
  auto f = [&](Scalar a) { return multiplier_margin(inner, outer, a); };
  auto accept = [&](Scalar a) {
    Mat<Scalar> m = outer - a * inner;
    Scalar scale = std::max(psd_scale<Scalar>(outer), a * psd_scale<Scalar>(inner));
    return lambda_min<Scalar>(m) >= -Scalar(tol.tol_psd) * scale;
  };

  if (accept(Scalar(0)))
    return Scalar(0);
  const Scalar f0 = f(Scalar(0));
  Scalar hi = Scalar(1);
  Scalar f_hi = f(hi);
  if (f_hi > f0) {
    bool bracketed = false;
    for (int doubling = 0; doubling < 60; ++doubling) {
      const Scalar f_next = f(Scalar(2) * hi);
      hi *= Scalar(2);
      if (f_next <= f_hi) {
        bracketed = true;
        break;
      }
      f_hi = f_next;
    }
    if (!bracketed) {
      if (accept(hi))
        return hi;
      return std::nullopt;
    }
  }

  const Scalar ratio = (std::sqrt(Scalar(5)) - Scalar(1)) / Scalar(2);
  Scalar lo = Scalar(0);
  Scalar x1 = hi - ratio * (hi - lo);
  Scalar x2 = lo + ratio * (hi - lo);
  Scalar f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 200 && (hi - lo) > std::numeric_limits<Scalar>::epsilon() * (Scalar(1) + hi); ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + ratio * (hi - lo);
      f2 = f(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - ratio * (hi - lo);
      f1 = f(x1);
    }
  }
  Scalar best = f1 >= f2 ? x1 : x2;
  if (f0 >= f(best))
    best = Scalar(0);
  if (accept(best))
    return best;
  return std::nullopt;
}

/// @brief Multiplier α ≥ 0 with outer − α·inner ⪰ 0, if one is found.
///
/// The returned α certifies that the set {Z : [I;Z]'·inner·[I;Z] ⪰ 0} is
/// contained in {Z : [I;Z]'·outer·[I;Z] ⪰ 0}. Throws SlaterViolated when
/// [I;Z̄]'·inner·[I;Z̄] is not positive definite. A std::nullopt means no
/// certificate was found inside the search bracket, not a proof of
/// non-inclusion.
template <typename Scalar>
std::optional<Scalar> inclusion_certificate(const Mat<Scalar> &inner,
                                            const Mat<Scalar> &outer,
                                            const Mat<Scalar> &slater_point,
                                            PsdTolerance tol = {}) {
  const Index n = inner.rows();
  if (inner.cols() != n || outer.rows() != n || outer.cols() != n)
    throw Error(ErrorCode::InvalidArgument, "inclusion_certificate: size mismatch");
  const Index na = slater_point.cols();
  if (slater_point.rows() + na != n)
    throw Error(ErrorCode::InvalidArgument, "inclusion_certificate: bad slater point");
  Mat<Scalar> stacked(n, na);
  stacked << Mat<Scalar>::Identity(na, na), slater_point;
  Mat<Scalar> at_slater = stacked.transpose() * inner * stacked;
  if (!is_pd(at_slater, Scalar(tol.tol_psd)))
    throw Error(ErrorCode::SlaterViolated,
                "inner matrix is not strictly positive at the supplied point");

  return one_parameter_search(inner, outer, tol);
}

} // namespace adpc
