#pragma once

#include "adpc/ellipsoid.hpp"

#include <utility>

namespace adpc {

/// @brief Regressor/successor pairs with nonnegative weights and a noise bound.
///
/// Column i of H is h(i) = [x(i); u(i)], column i of Xdot the successor
/// state x(i+1). The disturbance satisfies w'w ≤ delta.
template <typename Scalar> struct DataSet {
  Mat<Scalar> H;       ///< n_h × n
  Mat<Scalar> Xdot;    ///< n_x × n
  Vec<Scalar> lambda;  ///< n weights, all ≥ 0
  Scalar delta = Scalar(1);
  Index n_x = 0;
  Index n_u = 0;

  Index n_h() const { return n_x + n_u; }
  Index size() const { return H.cols(); }
  Scalar trace() const { return lambda.sum(); }
};

template <typename Scalar>
DataSet<Scalar> empty_dataset(Index n_x, Index n_u, Scalar delta) {
  DataSet<Scalar> ds;
  ds.n_x = n_x;
  ds.n_u = n_u;
  ds.delta = delta;
  ds.H.resize(n_x + n_u, 0);
  ds.Xdot.resize(n_x, 0);
  ds.lambda.resize(0);
  return ds;
}

template <typename Scalar> void validate(const DataSet<Scalar> &ds) {
  if (ds.n_x <= 0 || ds.n_u < 0)
    throw Error(ErrorCode::InvalidArgument, "dataset dimensions must be positive");
  if (ds.H.rows() != ds.n_h() || ds.Xdot.rows() != ds.n_x)
    throw Error(ErrorCode::InvalidArgument, "dataset row counts do not match n_x, n_u");
  if (ds.H.cols() != ds.Xdot.cols() || ds.lambda.size() != ds.H.cols())
    throw Error(ErrorCode::InvalidArgument, "dataset column counts differ");
  if (!(ds.delta > Scalar(0)))
    throw Error(ErrorCode::InvalidArgument, "noise bound delta must be positive");
  if (ds.lambda.size() > 0 && ds.lambda.minCoeff() < Scalar(0))
    throw Error(ErrorCode::InvalidArgument, "dataset weights must be nonnegative");
}

template <typename Scalar>
void append_column(DataSet<Scalar> &ds, const Vec<Scalar> &h,
                   const Vec<Scalar> &xdot, Scalar weight) {
  const Index n = ds.size();
  ds.H.conservativeResize(Eigen::NoChange, n + 1);
  ds.H.col(n) = h;
  ds.Xdot.conservativeResize(Eigen::NoChange, n + 1);
  ds.Xdot.col(n) = xdot;
  ds.lambda.conservativeResize(n + 1);
  ds.lambda(n) = weight;
}

/// ξ(h, ẋ) = [δI − ẋẋ', ẋh'; hẋ', −hh'].
template <typename Scalar>
Mat<Scalar> xi_single(const Vec<Scalar> &h, const Vec<Scalar> &xdot,
                      Scalar delta) {
  const Index nx = xdot.size();
  const Index nh = h.size();
  Mat<Scalar> xi(nx + nh, nx + nh);
  xi.topLeftCorner(nx, nx) =
      delta * Mat<Scalar>::Identity(nx, nx) - xdot * xdot.transpose();
  xi.topRightCorner(nx, nh) = xdot * h.transpose();
  xi.bottomLeftCorner(nh, nx) = h * xdot.transpose();
  xi.bottomRightCorner(nh, nh) = -h * h.transpose();
  return xi;
}

/// Ξ(H, Ẋ, Λ) = [tr(Λ)δI − ẊΛẊ', ẊΛH'; HΛẊ', −HΛH'].
template <typename Scalar> Mat<Scalar> xi_matrix(const DataSet<Scalar> &ds) {
  const Index nx = ds.n_x;
  const Index nh = ds.n_h();
  const auto L = ds.lambda.asDiagonal();
  Mat<Scalar> XL = ds.Xdot * L;
  Mat<Scalar> HL = ds.H * L;
  Mat<Scalar> xi(nx + nh, nx + nh);
  xi.topLeftCorner(nx, nx) = ds.trace() * ds.delta * Mat<Scalar>::Identity(nx, nx) -
                             XL * ds.Xdot.transpose();
  xi.topRightCorner(nx, nh) = XL * ds.H.transpose();
  xi.bottomLeftCorner(nh, nx) = xi.topRightCorner(nx, nh).transpose();
  xi.bottomRightCorner(nh, nh) = -HL * ds.H.transpose();
  return symmetrized(xi);
}

/// Σ λ_i ξ(h_i, ẋ_i), the column-wise form of xi_matrix.
template <typename Scalar> Mat<Scalar> xi_sum(const DataSet<Scalar> &ds) {
  const Index dim = ds.n_x + ds.n_h();
  Mat<Scalar> acc = Mat<Scalar>::Zero(dim, dim);
  for (Index i = 0; i < ds.size(); ++i)
    acc += ds.lambda(i) *
           xi_single<Scalar>(ds.H.col(i), ds.Xdot.col(i), ds.delta);
  return acc;
}

/// HΛH'.
template <typename Scalar>
Mat<Scalar> weighted_gram(const Mat<Scalar> &H, const Vec<Scalar> &lambda) {
  return symmetrized((H * lambda.asDiagonal() * H.transpose()).eval());
}

/// Positive definiteness of a Gram matrix HΛH' (numerical nonsingularity).
///
/// Open-loop data from unstable plants gives Gram matrices with condition
/// numbers far beyond 1/tol_psd, so only round-off level singularity counts.
template <typename Scalar>
bool gram_is_pd(const Mat<Scalar> &gram, PsdTolerance = {}) {
  if (gram.rows() == 0)
    return false;
  Eigen::LLT<Mat<Scalar>> llt(gram);
  if (llt.info() != Eigen::Success)
    return false;
  const auto d = llt.matrixLLT().diagonal().cwiseAbs();
  return d.minCoeff() > Scalar(1e3) * std::numeric_limits<Scalar>::epsilon() * d.maxCoeff();
}

/// The ASE as a matrix ellipsoid over Z = Δ' (n_h × n_x).
template <typename Scalar>
MatrixEllipsoid<Scalar> to_ellipsoid(const DataSet<Scalar> &ds,
                                     PsdTolerance tol = {}) {
  validate(ds);
  Mat<Scalar> E = weighted_gram(ds.H, ds.lambda);
  if (!gram_is_pd(E, tol))
    throw Error(ErrorCode::NotAnAse, "H*Lambda*H' is not positive definite");
  Mat<Scalar> F = -(ds.H * ds.lambda.asDiagonal() * ds.Xdot.transpose());
  Mat<Scalar> G = ds.Xdot * ds.lambda.asDiagonal() * ds.Xdot.transpose() -
                  ds.trace() * ds.delta * Mat<Scalar>::Identity(ds.n_x, ds.n_x);
  try {
    return make_ellipsoid<Scalar>(E, F, G, tol);
  } catch (const Error &err) {
    throw Error(ErrorCode::NotAnAse, err.what());
  }
}

/// log μ̂ = log β + (n_x n_h / 2)·log(tr(Λ)δ) − (n_x / 2)·log det(HΛH').
template <typename Scalar>
Scalar log_mu_hat(const Mat<Scalar> &H, const Vec<Scalar> &lambda, Scalar delta,
                  Index n_x, Scalar beta = Scalar(1), PsdTolerance tol = {}) {
  Mat<Scalar> gram = weighted_gram(H, lambda);
  if (!gram_is_pd(gram, tol))
    throw Error(ErrorCode::NotAnAse, "mu_hat: H*Lambda*H' is not positive definite");
  const Scalar nx = Scalar(n_x);
  const Scalar nh = Scalar(H.rows());
  return std::log(beta) + nx * nh / Scalar(2) * std::log(lambda.sum() * delta) -
         nx / Scalar(2) * log_det_pd(gram);
}

template <typename Scalar>
Scalar mu_hat(const Mat<Scalar> &H, const Vec<Scalar> &lambda, Scalar delta,
              Index n_x, Scalar beta = Scalar(1), PsdTolerance tol = {}) {
  return std::exp(log_mu_hat(H, lambda, delta, n_x, beta, tol));
}

template <typename Scalar>
Scalar mu_hat(const DataSet<Scalar> &ds, Scalar beta = Scalar(1)) {
  return mu_hat(ds.H, ds.lambda, ds.delta, ds.n_x, beta);
}

/// @brief Square-data surrogate (H_s, Ẋ_s) whose ASE, weighted by
/// (tr(Λ)/n_h)·I, contains the ASE of ds.
template <typename Scalar>
std::pair<Mat<Scalar>, Mat<Scalar>> overapprox_square(const DataSet<Scalar> &ds,
                                                      PsdTolerance tol = {}) {
  validate(ds);
  const Index nh = ds.n_h();
  if (!gram_is_pd(weighted_gram(ds.H, ds.lambda), tol))
    throw Error(ErrorCode::NotAnAse, "overapprox_square: not an ASE");
  Vec<Scalar> sqrt_l = ds.lambda.cwiseSqrt();
  Mat<Scalar> HL = ds.H * sqrt_l.asDiagonal();
  Eigen::JacobiSVD<Mat<Scalar>> svd(HL, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Scalar c = std::sqrt(Scalar(nh) / ds.trace());
  Mat<Scalar> Hs = c * svd.matrixU() * svd.singularValues().asDiagonal();
  Mat<Scalar> Xs = c * ds.Xdot * sqrt_l.asDiagonal() * svd.matrixV().leftCols(nh);
  return {Hs, Xs};
}

/// @brief Well-conditioned coordinates of an ASE.
///
/// With E = R'R (R upper triangular), center Δ̄ and G_c, the congruence
/// T = [[I, 0], [Δ̄', I]]·diag(G_c^{-1/2}, R⁻¹) maps Ξ to diag(I, −I).
/// Everything is computed from residuals ẋ_i − Δ̄h_i, which stay small
/// even when the regressors themselves are large.
template <typename Scalar> struct AseFrame {
  Index n_x = 0;
  Index n_h = 0;
  Mat<Scalar> center;       ///< Δ̄, n_x × n_h
  Mat<Scalar> gc;           ///< G_c
  Mat<Scalar> gc_inv_sqrt;  ///< G_c^{-1/2}
  Mat<Scalar> r_factor;     ///< R with E = R'R

  /// [G_c^{-1/2}(ẋ − Δ̄h); −R^{-T}h]; T'ξ(h,ẋ)T = δ·diag(G_c⁻¹, 0) − ṽṽ'.
  Vec<Scalar> transform(const Vec<Scalar> &h, const Vec<Scalar> &xdot) const {
    Vec<Scalar> v(n_x + n_h);
    v.head(n_x) = gc_inv_sqrt * (xdot - center * h);
    v.tail(n_h) = -r_factor.transpose().template triangularView<Eigen::Lower>().solve(h);
    return v;
  }

  Mat<Scalar> transformed_xi_single(const Vec<Scalar> &h, const Vec<Scalar> &xdot,
                                    Scalar delta) const {
    Vec<Scalar> v = transform(h, xdot);
    Mat<Scalar> out = -v * v.transpose();
    out.topLeftCorner(n_x, n_x) += delta * gc_inv_sqrt * gc_inv_sqrt;
    return out;
  }

  Mat<Scalar> transformed_xi(const DataSet<Scalar> &ds) const {
    Mat<Scalar> acc = Mat<Scalar>::Zero(n_x + n_h, n_x + n_h);
    for (Index i = 0; i < ds.size(); ++i)
      if (ds.lambda(i) != Scalar(0))
        acc += ds.lambda(i) *
               transformed_xi_single(ds.H.col(i), ds.Xdot.col(i), ds.delta);
    return symmetrized(acc);
  }

  /// The congruence T itself.
  Mat<Scalar> congruence() const {
    Mat<Scalar> S = Mat<Scalar>::Identity(n_x + n_h, n_x + n_h);
    S.bottomLeftCorner(n_h, n_x) = center.transpose();
    Mat<Scalar> D = Mat<Scalar>::Zero(n_x + n_h, n_x + n_h);
    D.topLeftCorner(n_x, n_x) = gc_inv_sqrt;
    D.bottomRightCorner(n_h, n_h) =
        r_factor.template triangularView<Eigen::Upper>().solve(Mat<Scalar>::Identity(n_h, n_h));
    return S * D;
  }

  Scalar log_det_e() const {
    return Scalar(2) * r_factor.diagonal().cwiseAbs().array().log().sum();
  }
  Scalar lambda_min_e() const {
    Eigen::JacobiSVD<Mat<Scalar>> svd(r_factor);
    const Scalar s = svd.singularValues()(n_h - 1);
    return s * s;
  }
  /// sup ‖Δ − Δ̄‖₂ over the set.
  Scalar radius_bound() const {
    return std::sqrt(lambda_max<Scalar>(gc) / lambda_min_e());
  }
  /// λ_min([I Δ]Ξ[I;Δ']) / ‖G_c‖, evaluated as G_c − (Δ−Δ̄)E(Δ−Δ̄)'.
  Scalar membership_margin(const Mat<Scalar> &Delta) const {
    Mat<Scalar> D = (Delta - center) * r_factor.transpose();
    Mat<Scalar> q = gc - D * D.transpose();
    return lambda_min<Scalar>(q) / lambda_max<Scalar>(gc);
  }
};

/// Frame of the ASE of a weighted dataset (QR of Λ^{1/2}H').
template <typename Scalar>
AseFrame<Scalar> frame_from_dataset(const DataSet<Scalar> &ds, PsdTolerance tol = {}) {
  validate(ds);
  const Index nx = ds.n_x;
  const Index nh = ds.n_h();
  if (ds.size() < nh)
    throw Error(ErrorCode::NotAnAse, "fewer columns than regressor dimension");
  Vec<Scalar> sl = ds.lambda.cwiseSqrt();
  Mat<Scalar> A = sl.asDiagonal() * ds.H.transpose();      // n × n_h
  Mat<Scalar> B = sl.asDiagonal() * ds.Xdot.transpose();   // n × n_x
  Eigen::HouseholderQR<Mat<Scalar>> qr(A);
  Mat<Scalar> R = qr.matrixQR().topRows(nh).template triangularView<Eigen::Upper>();
  Mat<Scalar> QtB = qr.householderQ().transpose() * B;
  const Scalar rmax = R.diagonal().cwiseAbs().maxCoeff();
  const Scalar rmin = R.diagonal().cwiseAbs().minCoeff();
  if (!(rmin > Scalar(1e3) * std::numeric_limits<Scalar>::epsilon() * rmax) ||
      !(rmin > Scalar(0)))
    throw Error(ErrorCode::NotAnAse, "H*Lambda*H' is not positive definite");

  AseFrame<Scalar> f;
  f.n_x = nx;
  f.n_h = nh;
  f.r_factor = R;
  // Least-squares coefficients Z_c = R⁻¹(Q'B)_{top}; residual rows below.
  Mat<Scalar> Zc = R.template triangularView<Eigen::Upper>().solve(QtB.topRows(nh));
  f.center = Zc.transpose();
  Mat<Scalar> res = QtB.bottomRows(ds.size() - nh);
  f.gc = symmetrized((ds.trace() * ds.delta * Mat<Scalar>::Identity(nx, nx) -
                      res.transpose() * res).eval());
  if (!is_pd(f.gc, Scalar(tol.tol_psd)))
    throw Error(ErrorCode::NotAnAse, "G_c is not positive definite");
  f.gc_inv_sqrt = pd_inv_sqrt(f.gc);
  return f;
}

/// Frame of the set {Δ : [I Δ]Ξ[I;Δ'] ⪰ 0} for an explicit Ξ.
template <typename Scalar>
AseFrame<Scalar> frame_from_xi(const Mat<Scalar> &xi, Index n_x, PsdTolerance tol = {}) {
  const Index nh = xi.rows() - n_x;
  MatrixEllipsoid<Scalar> ell = make_ellipsoid<Scalar>(
      -xi.bottomRightCorner(nh, nh), -xi.bottomLeftCorner(nh, n_x),
      -xi.topLeftCorner(n_x, n_x), tol);
  AseFrame<Scalar> f;
  f.n_x = n_x;
  f.n_h = nh;
  f.center = ell.center().transpose();
  f.gc = ell.Gc();
  f.gc_inv_sqrt = pd_inv_sqrt(f.gc);
  Eigen::LLT<Mat<Scalar>> llt(ell.E());
  f.r_factor = llt.matrixU();
  return f;
}

/// @brief Information matrix of a dataset together with its ellipsoid summaries.
template <typename Scalar> struct AseState {
  Mat<Scalar> xi;         ///< Ξ, (n_x + n_h) square
  DataSet<Scalar> dataset;
  bool is_ase = false;    ///< HΛH' ≻ 0 and the set is bounded and non-degenerate
  AseFrame<Scalar> frame; ///< valid when is_ase
  Mat<Scalar> center;     ///< Δ̄ = ẊΛH'(HΛH')⁻¹, n_x × n_h
  Scalar radius_bound = std::numeric_limits<Scalar>::infinity();
  Scalar vol_bound = std::numeric_limits<Scalar>::infinity();
  Scalar log_vol_bound = std::numeric_limits<Scalar>::infinity();
};

template <typename Scalar>
AseState<Scalar> make_ase_state(DataSet<Scalar> ds, PsdTolerance tol = {}) {
  validate(ds);
  AseState<Scalar> st;
  st.xi = xi_matrix(ds);
  st.dataset = std::move(ds);
  try {
    st.frame = frame_from_dataset(st.dataset, tol);
    st.center = st.frame.center;
    st.radius_bound = st.frame.radius_bound();
    const Scalar nx = Scalar(st.dataset.n_x);
    const Scalar nh = Scalar(st.dataset.n_h());
    st.log_vol_bound =
        nx * nh / Scalar(2) * std::log(st.dataset.trace() * st.dataset.delta) -
        nx / Scalar(2) * st.frame.log_det_e();
    st.vol_bound = std::exp(st.log_vol_bound);
    st.is_ase = true;
  } catch (const Error &) {
    st.is_ase = false;
  }
  return st;
}

/// @brief λ_min([I Δ]Ξ[I;Δ']) / max(1, ‖Ξ‖): nonnegative iff Δ = [A B] is admissible.
template <typename Scalar>
Scalar membership_margin(const Mat<Scalar> &xi, const Mat<Scalar> &Delta) {
  const Index nx = Delta.rows();
  Mat<Scalar> left(nx, xi.rows());
  left << Mat<Scalar>::Identity(nx, nx), Delta;
  Mat<Scalar> q = left * xi * left.transpose();
  return lambda_min<Scalar>(q) / std::max(Scalar(1), psd_scale<Scalar>(xi));
}

/// Stack [A B] into Δ.
template <typename Scalar>
Mat<Scalar> stack_delta(const Mat<Scalar> &A, const Mat<Scalar> &B) {
  Mat<Scalar> D(A.rows(), A.cols() + B.cols());
  D << A, B;
  return D;
}

} // namespace adpc
