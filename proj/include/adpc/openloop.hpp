#pragma once

#include "adpc/ase.hpp"

#include <concepts>
#include <cstdint>
#include <random>
#include <vector>

namespace adpc {

template <typename Scalar> struct InputBall {
  Scalar radius = Scalar(1);
  Index dim = 1;
};

/// Anything that exposes its current state and advances under an input.
template <typename P>
concept Plant = requires(P p, const Vec<typename P::Scalar> &u) {
  typename P::Scalar;
  { p.state() } -> std::convertible_to<Vec<typename P::Scalar>>;
  { p.apply(u) } -> std::convertible_to<Vec<typename P::Scalar>>;
  { p.n_x() } -> std::convertible_to<Index>;
  { p.n_u() } -> std::convertible_to<Index>;
  { p.delta() } -> std::convertible_to<typename P::Scalar>;
};

template <typename Scalar> struct QuadraticMax {
  Vec<Scalar> u;
  Scalar value;
};

namespace detail {

/// Unit vector with its first nonzero component made positive.
template <typename Scalar> Vec<Scalar> canonical_sign(Vec<Scalar> v) {
  for (Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > Scalar(1e3) * std::numeric_limits<Scalar>::epsilon()) {
      if (v(i) < Scalar(0))
        v = -v;
      break;
    }
  }
  return v;
}

} // namespace detail

/// @brief Global maximiser of u'Mu + 2b'u over ‖u‖ ≤ radius for M ⪰ 0.
///
/// The maximum lies on the sphere; the multiplier ν ≥ λ_max(M) solves the
/// secular equation ‖(νI − M)⁻¹b‖ = radius in the eigenbasis of M.
template <typename Scalar>
QuadraticMax<Scalar> max_quadratic_over_ball(const Mat<Scalar> &M,
                                             const Vec<Scalar> &b, Scalar radius) {
  const Index n = M.rows();
  if (M.cols() != n || b.size() != n || n == 0)
    throw Error(ErrorCode::InvalidArgument, "max_quadratic_over_ball: size mismatch");
  if (!(radius > Scalar(0)))
    throw Error(ErrorCode::InvalidArgument, "max_quadratic_over_ball: radius must be positive");

  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(symmetrized(M));
  Vec<Scalar> lam = es.eigenvalues().cwiseMax(Scalar(0));
  const Mat<Scalar> &Q = es.eigenvectors();
  Vec<Scalar> bt = Q.transpose() * b;
  const Scalar lmax = lam(n - 1);
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  const Scalar top_gap = Scalar(1e3) * eps * std::max(Scalar(1), lmax);
  const Scalar bnorm = b.norm();

  auto evaluate = [&](const Vec<Scalar> &u) {
    return Scalar((u.transpose() * M * u)(0, 0) + Scalar(2) * b.dot(u));
  };

  // First (lowest-index) eigenvector of the top eigenspace.
  Index first_top = n - 1;
  for (Index i = 0; i < n; ++i) {
    if (lam(i) >= lmax - top_gap) {
      first_top = i;
      break;
    }
  }
  Scalar top_mass = Scalar(0);
  for (Index i = first_top; i < n; ++i)
    top_mass += bt(i) * bt(i);

  auto u_of = [&](Scalar nu) {
    Vec<Scalar> c(n);
    for (Index i = 0; i < n; ++i)
      c(i) = (nu - lam(i) > Scalar(0)) ? bt(i) / (nu - lam(i)) : Scalar(0);
    return c;
  };

  Vec<Scalar> coeff;
  if (std::sqrt(top_mass) <= Scalar(1e3) * eps * std::max(Scalar(1), bnorm)) {
    // Hard case: b has no component along the top eigenspace.
    Vec<Scalar> c0 = Vec<Scalar>::Zero(n);
    for (Index i = 0; i < first_top; ++i)
      c0(i) = bt(i) / (lmax - lam(i));
    const Scalar r0 = c0.norm();
    if (r0 <= radius) {
      Vec<Scalar> v = detail::canonical_sign<Scalar>(Q.col(first_top));
      Vec<Scalar> u = Q * c0 + std::sqrt(std::max(Scalar(0), radius * radius - r0 * r0)) * v;
      return {u, evaluate(u)};
    }
  }

  // Bisection on ν ∈ (λ_max, λ_max + ‖b‖/radius]; ‖u(ν)‖ is decreasing in ν.
  Scalar lo = lmax;
  Scalar hi = lmax + bnorm / radius + eps;
  for (int it = 0; it < 400; ++it) {
    const Scalar mid = Scalar(0.5) * (lo + hi);
    if (mid <= lo || mid >= hi)
      break;
    if (u_of(mid).norm() > radius)
      lo = mid;
    else
      hi = mid;
  }
  coeff = u_of(hi);
  Vec<Scalar> u = Q * coeff;
  const Scalar un = u.norm();
  if (un > Scalar(0))
    u *= radius / un;
  else
    u = radius * detail::canonical_sign<Scalar>(Q.col(first_top));
  return {u, evaluate(u)};
}

/// Projector onto range(H)ᗮ (pseudo-inverse based, so rank deficiency is allowed).
template <typename Scalar>
Mat<Scalar> residual_projector(const Mat<Scalar> &H, Index n_h) {
  Mat<Scalar> I = Mat<Scalar>::Identity(n_h, n_h);
  if (H.cols() == 0)
    return I;
  return symmetrized((I - H * pinv(H)).eval());
}

/// J_F = ‖h − H(H'H)⁻¹H'h‖ with h = [x; u].
template <typename Scalar>
Scalar residual_criterion_jf(const Mat<Scalar> &H, const Vec<Scalar> &x,
                             const Vec<Scalar> &u) {
  Vec<Scalar> h(x.size() + u.size());
  h << x, u;
  return (residual_projector(H, h.size()) * h).norm();
}

/// Input maximising J_F over the ball.
template <typename Scalar>
Vec<Scalar> design_formation_input(const Mat<Scalar> &H, const Vec<Scalar> &x,
                                   const InputBall<Scalar> &ball) {
  const Index nx = x.size();
  const Index nu = ball.dim;
  Mat<Scalar> R = residual_projector(H, nx + nu);
  Mat<Scalar> Muu = R.bottomRightCorner(nu, nu);
  Vec<Scalar> b = R.bottomLeftCorner(nu, nx) * x;
  return max_quadratic_over_ball(Muu, b, ball.radius).u;
}

/// m = h'(HΛH')⁻¹h.
template <typename Scalar>
Scalar contraction_gain(const Mat<Scalar> &H, const Vec<Scalar> &lambda,
                        const Vec<Scalar> &x, const Vec<Scalar> &u,
                        PsdTolerance tol = {}) {
  Mat<Scalar> gram = weighted_gram(H, lambda);
  if (!gram_is_pd(gram, tol))
    throw Error(ErrorCode::NotAnAse, "contraction_gain: H*Lambda*H' is not positive definite");
  Vec<Scalar> h(x.size() + u.size());
  h << x, u;
  return h.dot(gram.llt().solve(h));
}

/// λ* = (tr(Λ)·m − n_h) / ((n_h − 1)·m).
template <typename Scalar>
Scalar optimal_lambda(Scalar m, Scalar lambda_trace, Index n_h) {
  if (n_h < 2)
    throw Error(ErrorCode::InvalidArgument, "optimal_lambda requires n_h >= 2");
  if (!(m > Scalar(n_h) / lambda_trace))
    throw Error(ErrorCode::CriterionNotMet, "m <= n_h / tr(Lambda)");
  return (lambda_trace * m - Scalar(n_h)) / (Scalar(n_h - 1) * m);
}

/// log of the μ̂ ratio after appending h with weight λ, via det update (1 + λm).
template <typename Scalar>
Scalar log_contraction_ratio(Scalar m, Scalar lambda_trace, Index n_x, Index n_h,
                             Scalar lambda) {
  const Scalar nx = Scalar(n_x);
  const Scalar nh = Scalar(n_h);
  return nx * nh / Scalar(2) * std::log1p(lambda / lambda_trace) -
         nx / Scalar(2) * std::log1p(lambda * m);
}

/// f_p = μ̂(H₊, Λ₊) / μ̂(H, Λ).
template <typename Scalar>
Scalar contraction_ratio_fp(const Mat<Scalar> &H, const Vec<Scalar> &lambda,
                            const Vec<Scalar> &h, Scalar weight, Index n_x,
                            PsdTolerance tol = {}) {
  Mat<Scalar> gram = weighted_gram(H, lambda);
  if (!gram_is_pd(gram, tol))
    throw Error(ErrorCode::NotAnAse, "contraction_ratio_fp: not an ASE");
  const Scalar m = h.dot(gram.llt().solve(h));
  return std::exp(log_contraction_ratio(m, lambda.sum(), n_x, H.rows(), weight));
}

/// Input maximising [x;u]'(HΛH')⁻¹[x;u] over the ball.
template <typename Scalar>
Vec<Scalar> design_contraction_input(const Mat<Scalar> &H, const Vec<Scalar> &lambda,
                                     const Vec<Scalar> &x,
                                     const InputBall<Scalar> &ball,
                                     PsdTolerance tol = {}) {
  Mat<Scalar> gram = weighted_gram(H, lambda);
  if (!gram_is_pd(gram, tol))
    throw Error(ErrorCode::NotAnAse, "design_contraction_input: not an ASE");
  const Index nx = x.size();
  const Index nu = ball.dim;
  Mat<Scalar> W = symmetrized(gram.llt().solve(Mat<Scalar>::Identity(nx + nu, nx + nu)).eval());
  Mat<Scalar> Wuu = W.bottomRightCorner(nu, nu);
  Vec<Scalar> b = W.bottomLeftCorner(nu, nx) * x;
  return max_quadratic_over_ball(Wuu, b, ball.radius).u;
}

/// |det A| as the product of Gram–Schmidt residual norms of its columns.
template <typename Scalar>
Scalar det_via_projections(const Mat<Scalar> &A,
                           Scalar tol = Scalar(1e3) * std::numeric_limits<Scalar>::epsilon()) {
  const Index n = A.rows();
  if (A.cols() != n || n == 0)
    throw Error(ErrorCode::InvalidArgument, "det_via_projections: matrix must be square");
  Mat<Scalar> basis(n, n);
  Scalar det = Scalar(1);
  for (Index i = 0; i < n; ++i) {
    Vec<Scalar> r = A.col(i);
    const Scalar col_norm = r.norm();
    // Two passes of modified Gram–Schmidt keep the residual orthogonal.
    for (int pass = 0; pass < 2; ++pass)
      for (Index j = 0; j < i; ++j)
        r -= basis.col(j).dot(r) * basis.col(j);
    const Scalar rn = r.norm();
    if (rn <= tol * std::max(col_norm, Scalar(1e-300)))
      throw Error(ErrorCode::SingularMatrix, "det_via_projections: dependent column");
    basis.col(i) = r / rn;
    det *= rn;
  }
  return det;
}

/// Uniform sample on the sphere of the given radius.
template <typename Scalar, typename Rng>
Vec<Scalar> random_on_sphere(Index dim, Scalar radius, Rng &rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec<Scalar> v(dim);
  do {
    for (Index i = 0; i < dim; ++i)
      v(i) = Scalar(gauss(rng));
  } while (v.norm() == Scalar(0));
  return radius * v / v.norm();
}

template <typename Scalar> struct InputRecord {
  Index step = 0;
  bool accepted = false;
  Vec<Scalar> u;
  Vec<Scalar> x;        ///< state at which u was applied
  Scalar mu_hat = std::numeric_limits<Scalar>::quiet_NaN();
};

/// @brief Record of an open-loop learning run.
template <typename Scalar> struct OpenLoopRun {
  DataSet<Scalar> dataset;
  std::vector<InputRecord<Scalar>> input_log;
  std::vector<Scalar> vol_trace; ///< μ̂ after each accepted contraction sample
  Index steps = 0;               ///< plant steps taken so far
};

template <typename Scalar> Scalar innovation_threshold(const Vec<Scalar> &x) {
  return Scalar(1e-9) * (Scalar(1) + x.norm());
}

/// @brief Formation phase: collect n_h samples with a nonsingular data matrix.
///
/// Non-innovative steps apply a random boundary input without collecting.
template <Plant P>
OpenLoopRun<typename P::Scalar>
phase_formation(P &plant, const InputBall<typename P::Scalar> &ball,
                std::uint64_t rng_seed) {
  using Scalar = typename P::Scalar;
  const Index nx = plant.n_x();
  const Index nu = plant.n_u();
  const Index nh = nx + nu;
  const Index max_steps = 50 * nh;
  std::mt19937_64 rng(rng_seed);

  OpenLoopRun<Scalar> run;
  run.dataset = empty_dataset<Scalar>(nx, nu, plant.delta());
  while (run.dataset.size() < nh) {
    if (run.steps >= max_steps)
      throw Error(ErrorCode::FormationStalled,
                  "formation did not collect n_h samples within 50*n_h steps");
    Vec<Scalar> x = plant.state();
    Vec<Scalar> u;
    bool accept = false;
    if (run.dataset.size() == 0) {
      Mat<Scalar> I = Mat<Scalar>::Identity(nu, nu);
      u = max_quadratic_over_ball<Scalar>(I, Vec<Scalar>::Zero(nu), ball.radius).u;
      Vec<Scalar> h(nh);
      h << x, u;
      accept = h.norm() > innovation_threshold(x);
    } else {
      u = design_formation_input(run.dataset.H, x, ball);
      accept = residual_criterion_jf(run.dataset.H, x, u) > innovation_threshold(x);
    }
    if (!accept)
      u = random_on_sphere<Scalar>(nu, ball.radius, rng);
    Vec<Scalar> x_next = plant.apply(u);
    if (accept) {
      Vec<Scalar> h(nh);
      h << x, u;
      append_column(run.dataset, h, x_next, Scalar(1));
    }
    run.input_log.push_back({run.steps, accept, u, x, std::numeric_limits<Scalar>::quiet_NaN()});
    ++run.steps;
  }
  const Scalar mh = mu_hat(run.dataset);
  run.input_log.back().mu_hat = mh;
  run.vol_trace.push_back(mh);
  return run;
}

/// One contraction step; returns true when the sample was collected.
template <Plant P>
bool contraction_step(OpenLoopRun<typename P::Scalar> &run, P &plant,
                      const InputBall<typename P::Scalar> &ball,
                      std::mt19937_64 &rng) {
  using Scalar = typename P::Scalar;
  DataSet<Scalar> &ds = run.dataset;
  const Index nh = ds.n_h();
  Vec<Scalar> x = plant.state();
  Vec<Scalar> u = design_contraction_input(ds.H, ds.lambda, x, ball);
  const Scalar m = contraction_gain(ds.H, ds.lambda, x, u);
  const bool accept = m > Scalar(nh) / ds.trace();
  Scalar weight = Scalar(0);
  if (accept)
    weight = optimal_lambda(m, ds.trace(), nh);
  else
    u = random_on_sphere<Scalar>(ball.dim, ball.radius, rng);
  Vec<Scalar> x_next = plant.apply(u);
  InputRecord<Scalar> rec{run.steps, accept, u, x, std::numeric_limits<Scalar>::quiet_NaN()};
  if (accept) {
    Vec<Scalar> h(nh);
    h << x, u;
    append_column(ds, h, x_next, weight);
    rec.mu_hat = mu_hat(ds);
    run.vol_trace.push_back(rec.mu_hat);
  }
  run.input_log.push_back(rec);
  ++run.steps;
  return accept;
}

/// @brief Contraction phase: T_L steps of volume-contracting input design.
template <Plant P>
OpenLoopRun<typename P::Scalar>
phase_contraction(OpenLoopRun<typename P::Scalar> run, P &plant,
                  const InputBall<typename P::Scalar> &ball, Index T_L,
                  std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  for (Index t = 0; t < T_L; ++t)
    contraction_step(run, plant, ball, rng);
  return run;
}

} // namespace adpc
