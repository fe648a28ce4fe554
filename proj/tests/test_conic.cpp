#include "adpc/conic.hpp"
#include "adpc/plant.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace adpc;
using oracle::randn;

namespace {

DataSet<double> simulate(const MatrixXd &A, const MatrixXd &B, double delta, Index n,
                         std::uint64_t seed, double input_scale = 1.0) {
  std::mt19937_64 rng(seed);
  LinearPlant<double> plant(A, B, delta, VectorXd::Zero(A.rows()), seed + 1);
  DataSet<double> ds = empty_dataset<double>(A.rows(), B.cols(), delta);
  for (Index k = 0; k < n; ++k) {
    const VectorXd u = input_scale * randn(B.cols(), 1, rng);
    VectorXd h(A.rows() + B.cols());
    h << plant.state(), u;
    append_column<double>(ds, h, plant.apply(u), 1.0);
  }
  return ds;
}

MatrixXd diag_top(Index n, Index nx, double p) {
  MatrixXd D = MatrixXd::Zero(n, n);
  D.topLeftCorner(nx, nx) = p * MatrixXd::Identity(nx, nx);
  return D;
}

} // namespace

TEST(OneParam, ZeroAgainstNegative) {
  MatrixXd N = -MatrixXd::Identity(2, 2);
  N(1, 1) = -3;
  auto a = one_param_psd_feasible(MatrixXd::Zero(2, 2), N);
  ASSERT_TRUE(a.has_value());
  EXPECT_EQ(*a, 0.0);
}

TEST(OneParam, SelfWithIndefinite) {
  MatrixXd N = MatrixXd::Identity(2, 2);
  N(1, 1) = -1;
  auto a = one_param_psd_feasible(N, N);
  ASSERT_TRUE(a.has_value());
  EXPECT_GE(lambda_min<double>(MatrixXd(N - *a * N)), -1e-8);
}

TEST(OneParam, AgreesWithGridScan) {
  std::mt19937_64 rng(5);
  int agree = 0, total = 0;
  for (int t = 0; t < 200; ++t) {
    // Random pairs built so that some are feasible and some are not.
    MatrixXd G = randn(3, 3, rng);
    MatrixXd N = G + G.transpose();
    MatrixXd H = randn(3, 3, rng);
    MatrixXd M = (0.5 + 0.01 * t) * N + 0.3 * (H + H.transpose()) + 1.5 * MatrixXd::Identity(3, 3);
    bool grid = false;
    for (int i = 0; i <= 10000 && !grid; ++i) {
      const double a = 1000.0 * i / 10000.0;
      grid = lambda_min<double>(MatrixXd(M - a * N)) >= -1e-8 * std::max(M.norm(), a * N.norm());
    }
    const bool got = one_param_psd_feasible(M, N).has_value();
    ++total;
    agree += grid == got;
    if (!grid)
      continue;
    EXPECT_TRUE(got);
  }
  EXPECT_EQ(agree, total);
}

TEST(SigmaMax, OwnDatasetIsFeasible) {
  MatrixXd A(2, 2), B(2, 1);
  A << 0.9, 0.3, -0.2, 0.8;
  B << 0.5, 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DataSet<double> ds = simulate(A, B, 0.1, 6, seed);
    AseState<double> st = make_ase_state(ds);
    ASSERT_TRUE(st.is_ase);
    SigmaMaxResult r = sigma_max(st, ds);
    EXPECT_GE(r.sigma_star, 0.0);
    EXPECT_GE(r.residual, -1e-7);
    EXPECT_TRUE(sigma_feasible(st, ds, 0.0));
    // Nesting: Ξ_prev − Ξ(Λ_s) ⪰ σ*·diag(I, 0) up to the solver slack.
    DataSet<double> next = ds;
    next.lambda = r.lambda_s;
    const MatrixXd gap = st.xi - xi_matrix(next) - diag_top(5, 2, r.sigma_star);
    EXPECT_GE(lambda_min<double>(gap), -1e-6 * psd_scale<double>(st.xi));
  }
}

TEST(SigmaMax, AppendedColumnNeverLowersOptimum) {
  MatrixXd A(1, 1), B(1, 1);
  A << 1.0;
  B << 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    DataSet<double> full = simulate(A, B, 0.5, 5, seed, 3.0);
    DataSet<double> prev = full;
    prev.H.conservativeResize(Eigen::NoChange, 4);
    prev.Xdot.conservativeResize(Eigen::NoChange, 4);
    prev.lambda.conservativeResize(4);
    AseState<double> st = make_ase_state(prev);
    ASSERT_TRUE(st.is_ase);
    full.lambda(4) = 0.0;
    const double without = sigma_max(st, prev).sigma_star;
    const double with = sigma_max(st, full).sigma_star;
    EXPECT_GE(with, without - 1e-6 * std::max(1.0, without));
  }
}

TEST(SigmaMax, ScalarTwoColumnsMatchGridOracle) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(0.3, 2.0), P(0.0, 2.0);
  for (int t = 0; t < 15; ++t) {
    DataSet<double> ds = empty_dataset<double>(1, 1, 0.5);
    ds.H = randn(2, 2, rng);
    ds.Xdot = randn(1, 2, rng);
    ds.lambda = Eigen::Vector2d(U(rng), U(rng));
    const MatrixXd xi_prev = xi_matrix(ds) + diag_top(3, 1, P(rng));
    DataSet<double> cand = ds;
    const double got = sigma_max(xi_prev, cand).sigma_star;
    const double ref = oracle::sigma_max_grid(xi_prev, cand);
    EXPECT_NEAR(got, ref, 1e-4 * std::max(1.0, ref)) << "instance " << t;
  }
}

TEST(SigmaMax, RankDeficientCandidateIsInfeasible) {
  MatrixXd A(2, 2), B(2, 1);
  A << 0.9, 0.3, -0.2, 0.8;
  B << 0.5, 1.0;
  DataSet<double> ds = simulate(A, B, 0.1, 6, 3);
  AseState<double> st = make_ase_state(ds);
  DataSet<double> one = ds;
  one.H = ds.H.leftCols(1);
  one.Xdot = ds.Xdot.leftCols(1);
  one.lambda = ds.lambda.head(1);
  try {
    sigma_max(st, one);
    FAIL() << "expected Infeasible";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::Infeasible);
  }
}

TEST(SigmaPlus, DuplicateColumnAddsNothing) {
  MatrixXd A(2, 2), B(2, 1);
  A << 0.7, 0.2, 0.1, 0.9;
  B << 1.0, 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DataSet<double> ds = simulate(A, B, 0.2, 5, seed);
    AseState<double> st = make_ase_state(ds);
    DataSet<double> plus = ds;
    append_column<double>(plus, ds.H.col(2), ds.Xdot.col(2), 0.0);
    const double s = sigma_max(st, ds).sigma_star;
    const double sp = sigma_plus(st, plus).sigma_star;
    EXPECT_NEAR(sp, s, 1e-6 * std::max(1.0, s));
  }
}

TEST(Synthesis, TinyAseAroundStableSystem) {
  MatrixXd A(2, 2), B(2, 1);
  A << 0.8, 0.2, 0.0, 0.7;
  B << 0.0, 1.0;
  DataSet<double> ds = simulate(A, B, 1e-8, 30, 4);
  AseState<double> st = make_ase_state(ds);
  ASSERT_TRUE(st.is_ase);
  ASSERT_LT(st.radius_bound, 1e-3);
  const MatrixXd Q = MatrixXd::Identity(2, 2), R = 0.1 * MatrixXd::Identity(1, 1);
  SynthesisResult s = terminal_synthesis(st, Q, R);
  EXPECT_TRUE(is_pd<double>(s.Y));
  EXPECT_GE(s.alpha, 0.0);
  EXPECT_LT((s.P_T * s.Y - MatrixXd::Identity(2, 2)).norm(), 1e-8);
  EXPECT_LT((s.K - s.L * s.P_T).norm(), 1e-8 * (1 + s.K.norm()));
  EXPECT_GE(lambda_min<double>(synthesis_schur_block(s.Y, s.L, Q, R)), -1e-8);
  EXPECT_GE(lambda_min<double>(synthesis_lmi(s.Y, s.L, s.alpha, st.xi, Q, R)),
            -1e-6 * psd_scale<double>(st.xi) * std::max(1.0, s.alpha));
  EXPECT_LT(s.contraction, 1.0);

  // The Lyapunov decrease with stage cost holds across sampled members, and
  // V_f dominates the infinite-horizon optimal cost of the true system.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const MatrixXd D = oracle::ase_member(st.frame, U(rng), rng);
    const MatrixXd Acl = D.leftCols(2) + D.rightCols(1) * s.K;
    const MatrixXd gap = s.P_T - Acl.transpose() * s.P_T * Acl - Q - s.K.transpose() * R * s.K;
    EXPECT_GE(lambda_min<double>(gap), -1e-7 * s.P_T.norm());
  }
  const MatrixXd P_opt = oracle::dare(A, B, Q, R);
  EXPECT_GE(lambda_min<double>(MatrixXd(s.P_T - P_opt)), -1e-6 * P_opt.norm());
}

TEST(Synthesis, TerminalDecreaseOnLevelSetBoundary) {
  MatrixXd A(2, 2), B(2, 2);
  A << 1.1, 0.3, 0.0, 0.9;
  B << 1.0, 0.0, 0.2, 1.0;
  DataSet<double> ds = simulate(A, B, 1e-4, 20, 6);
  AseState<double> st = make_ase_state(ds);
  const MatrixXd Q = MatrixXd::Identity(2, 2), R = MatrixXd::Identity(2, 2);
  SynthesisResult s = terminal_synthesis(st, Q, R);
  std::mt19937_64 rng(10);
  for (int i = 0; i < 200; ++i) {
    const MatrixXd D = oracle::ase_member(st.frame, 1.0, rng);
    VectorXd x = randn(2, 1, rng);
    x /= std::sqrt(x.dot(s.P_T * x));
    const VectorXd u = s.K * x;
    const VectorXd xn = D.leftCols(2) * x + D.rightCols(2) * u;
    const double decrease = xn.dot(s.P_T * xn) - x.dot(s.P_T * x);
    EXPECT_LE(decrease, -(x.dot(Q * x) + u.dot(R * u)) + 1e-7);
  }
}

TEST(Synthesis, UncontrollableUnstableIsInfeasible) {
  const MatrixXd A = 2.0 * MatrixXd::Identity(2, 2);
  const MatrixXd B = MatrixXd::Zero(2, 1);
  DataSet<double> ds = simulate(A, B, 1e-6, 12, 3);
  AseState<double> st = make_ase_state(ds);
  ASSERT_TRUE(st.is_ase);
  try {
    terminal_synthesis(st, MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1));
    FAIL() << "expected Infeasible";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::Infeasible);
  }
}

TEST(Synthesis, ExplicitXiMatchesAseOverload) {
  MatrixXd A(1, 1), B(1, 1);
  A << 0.9;
  B << 1.0;
  DataSet<double> ds = simulate(A, B, 0.01, 8, 2);
  AseState<double> st = make_ase_state(ds);
  const MatrixXd Q = MatrixXd::Identity(1, 1), R = MatrixXd::Identity(1, 1);
  SynthesisResult a = terminal_synthesis(st, Q, R);
  SynthesisResult b = terminal_synthesis(st.xi, 1, Q, R);
  EXPECT_NEAR(a.P_T(0, 0), b.P_T(0, 0), 1e-5 * a.P_T(0, 0));
  EXPECT_NEAR(a.K(0, 0), b.K(0, 0), 1e-5 * (1 + std::abs(a.K(0, 0))));
}

TEST(Synthesis, RejectsBadWeights) {
  MatrixXd A(1, 1), B(1, 1);
  A << 0.9;
  B << 1.0;
  AseState<double> st = make_ase_state(simulate(A, B, 0.01, 4, 2));
  EXPECT_THROW(terminal_synthesis(st, -MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1)), Error);
  EXPECT_THROW(terminal_synthesis(st, MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1)), Error);
}
