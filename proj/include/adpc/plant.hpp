#pragma once

#include "adpc/common.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace adpc {

/// Uniform sample from the Euclidean ball of the given radius.
template <typename Scalar, typename Rng>
Vec<Scalar> uniform_in_ball(Index dim, Scalar radius, Rng &rng) {
  std::normal_distribution<Scalar> gauss(Scalar(0), Scalar(1));
  std::uniform_real_distribution<Scalar> unif(Scalar(0), Scalar(1));
  Vec<Scalar> v(dim);
  do {
    for (Index i = 0; i < dim; ++i)
      v(i) = gauss(rng);
  } while (v.norm() == Scalar(0));
  const Scalar r = radius * std::pow(unif(rng), Scalar(1) / Scalar(dim));
  return r * v / v.norm();
}

/// @brief x⁺ = A x + B u + w with ‖w‖² < δ.
template <typename S = double> class LinearPlant {
public:
  using Scalar = S;

  LinearPlant(Mat<S> A, Mat<S> B, S delta, Vec<S> x0, std::uint64_t seed)
      : A_(std::move(A)), B_(std::move(B)), delta_(delta), x_(std::move(x0)), rng_(seed) {
    if (A_.rows() != A_.cols() || B_.rows() != A_.rows() || x_.size() != A_.rows())
      throw Error(ErrorCode::InvalidArgument, "plant dimensions do not match");
    if (!(delta_ > S(0)))
      throw Error(ErrorCode::InvalidArgument, "plant noise bound must be positive");
  }

  const Vec<S> &state() const { return x_; }
  Index n_x() const { return A_.rows(); }
  Index n_u() const { return B_.cols(); }
  S delta() const { return delta_; }
  const Mat<S> &A() const { return A_; }
  const Mat<S> &B() const { return B_; }
  const Vec<S> &last_disturbance() const { return w_; }

  /// Disturbance radius actually used: 0.999·sqrt(δ).
  S noise_radius() const { return S(0.999) * std::sqrt(delta_); }

  Vec<S> apply(const Vec<S> &u) {
    w_ = uniform_in_ball<S>(n_x(), noise_radius(), rng_);
    x_ = A_ * x_ + B_ * u + w_;
    return x_;
  }

  void reset(const Vec<S> &x0) { x_ = x0; }

private:
  Mat<S> A_, B_;
  S delta_;
  Vec<S> x_;
  Vec<S> w_;
  std::mt19937_64 rng_;
};

} // namespace adpc
