#include "adpc/harness.hpp"
#include "adpc/plant.hpp"
#include "adpc/tubempc.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace adpc;
using oracle::randn;

namespace {

DataSet<double> simulate(const MatrixXd &A, const MatrixXd &B, double delta, Index n,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LinearPlant<double> plant(A, B, delta, VectorXd::Zero(A.rows()), seed + 1);
  DataSet<double> ds = empty_dataset<double>(A.rows(), B.cols(), delta);
  for (Index k = 0; k < n; ++k) {
    const VectorXd u = randn(B.cols(), 1, rng);
    VectorXd h(A.rows() + B.cols());
    h << plant.state(), u;
    append_column<double>(ds, h, plant.apply(u), 1.0);
  }
  return ds;
}

struct SmallSystem {
  MatrixXd A, B;
  SmallSystem() : A(2, 2), B(2, 1) {
    A << 0.6, 0.2, -0.1, 0.5;
    B << 0.5, 1.0;
  }
};

VectorXd random_in_ball(Index n, double radius, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  VectorXd v = randn(n, 1, rng);
  return v * (radius * std::pow(u01(rng), 1.0 / double(n)) / v.norm());
}

/// Finite-horizon LQR by backward Riccati recursion: (cost, first input).
std::pair<double, VectorXd> riccati(const MatrixXd &A, const MatrixXd &B, const MatrixXd &Q,
                                    const MatrixXd &R, const MatrixXd &P, Index N,
                                    const VectorXd &x0) {
  MatrixXd Pk = P;
  MatrixXd K0;
  for (Index i = N - 1; i >= 0; --i) {
    const MatrixXd S = R + B.transpose() * Pk * B;
    const MatrixXd K = -S.ldlt().solve(B.transpose() * Pk * A);
    Pk = Q + A.transpose() * Pk * A + A.transpose() * Pk * B * K;
    Pk = 0.5 * (Pk + Pk.transpose()).eval();
    K0 = K;
  }
  return {x0.dot(Pk * x0), K0 * x0};
}

OcpProblem unconstrained(const MatrixXd &A, const MatrixXd &B, const MatrixXd &Q,
                         const MatrixXd &R, const MatrixXd &P, Index N, const VectorXd &x0,
                         double bound = 1e6) {
  OcpProblem p;
  p.A = A;
  p.B = B;
  p.Q = Q;
  p.R = R;
  p.P = P;
  p.x0 = x0;
  p.N = N;
  p.x_s = VectorXd::Zero(A.rows());
  p.u_s = VectorXd::Zero(B.cols());
  p.state_bound.assign(std::size_t(N + 1), bound);
  p.input_bound.assign(std::size_t(N), bound);
  return p;
}

} // namespace

TEST(TubeRadii, RecursionIsExact) {
  const auto r = tube_radii(0.7, 0.3, 2.0, 30);
  ASSERT_EQ(r.size(), 31u);
  EXPECT_EQ(r[0], 2.0);
  const double r_inf = 0.3 / (1.0 - 0.7);
  for (std::size_t i = 1; i < r.size(); ++i) {
    EXPECT_EQ(r[i], 0.7 * r[i - 1] + 0.3);
    EXPECT_LE(r[i], std::max(2.0, r_inf) + 1e-15);
  }
}

TEST(TubeRadii, ShiftedRadiiNeverGrowUnderSmallerCoefficients) {
  // After one step the error bound becomes r_1, so radii from the next step
  // equal (or, with smaller coefficients, undercut) the shifted old radii.
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const double a = 0.95 * u01(rng), b = u01(rng), e0 = 2.0 * u01(rng);
    const double a2 = a * u01(rng), b2 = b * u01(rng);
    const auto before = tube_radii(a, b, e0, 10);
    const auto after = tube_radii(a2, b2, a * e0 + b, 10);
    for (std::size_t i = 0; i + 1 < before.size(); ++i)
      EXPECT_LE(after[i], before[i + 1] + 1e-14);
  }
}

TEST(TubeParams, NearlyExactAseGivesNominalContraction) {
  SmallSystem s;
  const AseState<double> ase = make_ase_state(simulate(s.A, s.B, 1e-14, 60, 4));
  ASSERT_TRUE(ase.is_ase);
  MatrixXd K(1, 2);
  K << -0.1, -0.2;
  MatrixXd IK(3, 2);
  IK << MatrixXd::Identity(2, 2), K;
  const TubeParams tp = tube_params(ase, K, 5.0, 2.0, 1e-14);
  const double nominal = spectral_norm(MatrixXd(ase.center * IK));
  EXPECT_GE(tp.a, nominal - 1e-12);
  EXPECT_NEAR(tp.a, nominal, 1e-5);
  EXPECT_LT(tp.b, 1e-5);
  EXPECT_NEAR(tp.r_inf, tp.b / (1.0 - tp.a), 1e-15);
}

TEST(TubeParams, MonteCarloSoundness) {
  SmallSystem s;
  const double delta = 1e-3, R_x = 4.0, R_u = 2.0;
  const AseState<double> ase = make_ase_state(simulate(s.A, s.B, delta, 40, 7));
  ASSERT_TRUE(ase.is_ase);
  MatrixXd K(1, 2);
  K << -0.2, -0.3;
  MatrixXd IK(3, 2);
  IK << MatrixXd::Identity(2, 2), K;

  std::mt19937_64 rng(8);
  const MatrixXd G = randn(2, 2, rng);
  const MatrixXd P = G * G.transpose() + MatrixXd::Identity(2, 2);
  for (const MatrixXd &W : {MatrixXd(MatrixXd::Identity(2, 2)), P}) {
    const TubeParams tp = tube_params(ase, K, R_x, R_u, delta, W);
    const MatrixXd Ws = psd_sqrt<double>(W);
    const MatrixXd Wis = pd_inv_sqrt<double>(W);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double worst = -1e300;
    for (int t = 0; t < 100000; ++t) {
      const MatrixXd D = oracle::ase_member(ase.frame, t % 2 ? 1.0 : u01(rng), rng);
      const double r = 3.0 * u01(rng);
      VectorXd e = Wis * randn(2, 1, rng);
      e *= r / std::sqrt(e.dot(W * e));
      VectorXd h(3);
      h << random_in_ball(2, R_x, rng), random_in_ball(1, R_u, rng);
      const VectorXd w = random_in_ball(2, std::sqrt(delta), rng);
      const VectorXd next = D * IK * e + (D - ase.center) * h + w;
      worst = std::max(worst, (Ws * next).norm() - (tp.a * r + tp.b));
    }
    EXPECT_LE(worst, 1e-12);
  }
}

TEST(TubeParams, UnstableOpenLoopDiverges) {
  MatrixXd A(2, 2), B(2, 1);
  A << 1.5, 0.0, 0.0, 1.2;
  B << 1.0, 0.0;
  const AseState<double> ase = make_ase_state(simulate(A, B, 1e-4, 30, 3));
  ASSERT_TRUE(ase.is_ase);
  try {
    tube_params(ase, MatrixXd::Zero(1, 2), 5.0, 2.0, 1e-4);
    FAIL() << "expected TubeDiverges";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::TubeDiverges);
  }
}

TEST(TubeParams, RateBoundCapsContraction) {
  SmallSystem s;
  const AseState<double> ase = make_ase_state(simulate(s.A, s.B, 1e-3, 40, 9));
  const MatrixXd K = MatrixXd::Zero(1, 2);
  const TubeParams free = tube_params(ase, K, 4.0, 2.0, 1e-3);
  const TubeParams capped =
      tube_params(ase, K, 4.0, 2.0, 1e-3, MatrixXd::Identity(2, 2), 0.5 * free.a, 5);
  EXPECT_DOUBLE_EQ(capped.a, 0.5 * free.a);
  EXPECT_DOUBLE_EQ(capped.b, free.b);
  EXPECT_EQ(capped.radii.size(), 6u);
}

TEST(TerminalLevel, ClosedFormInputLimited) {
  TubeParams tp;
  tp.r_inf = 1.0;
  tp.state_gain = 1.0;
  tp.input_gain = 1.0;
  const MatrixXd I = MatrixXd::Identity(2, 2);
  EXPECT_NEAR(terminal_level(I, I, 10.0, 2.0, tp), 1.0, 1e-14);
}

TEST(TerminalLevel, NoTubeFormula) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 20; ++t) {
    const MatrixXd G = randn(3, 3, rng);
    const MatrixXd P = G * G.transpose() + 0.1 * MatrixXd::Identity(3, 3);
    const MatrixXd K = randn(2, 3, rng);
    TubeParams tp;
    const MatrixXd Pinv = P.inverse();
    const double expected =
        std::min(9.0 / lambda_max<double>(MatrixXd(K * Pinv * K.transpose())),
                 25.0 / lambda_max<double>(Pinv));
    EXPECT_NEAR(terminal_level(P, K, 5.0, 3.0, tp), expected, 1e-10 * expected);
  }
}

TEST(TerminalLevel, LevelSetFitsTightenedBalls) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    const MatrixXd G = randn(2, 2, rng);
    const MatrixXd P = G * G.transpose() + 0.2 * MatrixXd::Identity(2, 2);
    const MatrixXd K = randn(1, 2, rng);
    TubeParams tp;
    tp.r_inf = 0.3 * u01(rng);
    tp.state_gain = 1.0 + u01(rng);
    tp.input_gain = K.norm();
    const double R_x = 4.0, R_u = 2.0;
    const double L = terminal_level(P, K, R_x, R_u, tp);
    const double u_lim = R_u - tp.input_gain * tp.r_inf;
    const double x_lim = R_x - tp.state_gain * tp.r_inf;
    // Eigen-analysis of the level set.
    const MatrixXd Pinv = P.inverse();
    EXPECT_LE(std::sqrt(L * lambda_max<double>(MatrixXd(K * Pinv * K.transpose()))),
              u_lim + 1e-9);
    EXPECT_LE(std::sqrt(L * lambda_max<double>(Pinv)), x_lim + 1e-9);
    // Boundary samples x = sqrt(L)·P^{-1/2}v, ‖v‖ = 1.
    const MatrixXd Pis = pd_inv_sqrt<double>(P);
    double max_u = 0.0, max_x = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double th = 2.0 * std::numbers::pi * i / 10000.0;
      const VectorXd x = std::sqrt(L) * Pis * Eigen::Vector2d(std::cos(th), std::sin(th));
      max_u = std::max(max_u, (K * x).norm());
      max_x = std::max(max_x, x.norm());
    }
    EXPECT_LE(max_u, u_lim + 1e-9);
    EXPECT_LE(max_x, x_lim + 1e-9);
    // One of the two limits is attained.
    EXPECT_GT(std::max(max_u / u_lim, max_x / x_lim), 1.0 - 1e-6);
  }
}

TEST(TerminalLevel, EmptyWhenTubeEatsInputBall) {
  TubeParams tp;
  tp.r_inf = 3.0;
  tp.input_gain = 1.0;
  const MatrixXd I = MatrixXd::Identity(2, 2);
  try {
    terminal_level(I, I, 10.0, 2.0, tp);
    FAIL() << "expected EmptyTerminalSet";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyTerminalSet);
  }
}

TEST(SteadyTarget, OriginMapsToOrigin) {
  MatrixXd C(2, 3);
  C << 0.9, 0.1, 1.0, 0.0, 0.8, 0.5;
  const auto [xs, us] = steady_target(C, VectorXd::Zero(2));
  EXPECT_LT(xs.norm(), 1e-14);
  EXPECT_LT(us.norm(), 1e-14);
}

TEST(SteadyTarget, ScalarSteadyState) {
  MatrixXd C(1, 2);
  C << 0.5, 1.0;
  const auto [xs, us] = steady_target(C, VectorXd::Ones(1));
  EXPECT_NEAR(xs(0), 1.0, 1e-12);
  EXPECT_NEAR(us(0), 0.5, 1e-12);
}

TEST(SteadyTarget, UnreachableReferenceIsProjected) {
  // x₂ must vanish at steady state; x₁ is free with u = x₁/2.
  MatrixXd C(2, 3);
  C << 0.5, 0.0, 1.0, 0.0, 0.5, 0.0;
  const auto [xs, us] = steady_target(C, Eigen::Vector2d(1.0, 1.0));
  EXPECT_NEAR(xs(0), 1.0, 1e-12);
  EXPECT_NEAR(xs(1), 0.0, 1e-12);
  EXPECT_NEAR(us(0), 0.5, 1e-12);
}

TEST(SteadyTarget, MinimisesDistanceOverSteadyManifold) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 50; ++t) {
    const MatrixXd C = randn(3, 4 + t % 2, rng);
    const VectorXd ref = randn(3, 1, rng);
    const auto [xs, us] = steady_target(C, ref);
    const MatrixXd Am = C.leftCols(3) - MatrixXd::Identity(3, 3);
    const MatrixXd Bm = C.rightCols(C.cols() - 3);
    EXPECT_LT((Am * xs + Bm * us).norm(), 1e-10);
    // Random steady pairs are never closer to the reference.
    MatrixXd M(3, C.cols());
    M << Am, Bm;
    const MatrixXd Z = Eigen::FullPivLU<MatrixXd>(M).kernel();
    for (int i = 0; i < 200; ++i) {
      const VectorXd z = Z * randn(Z.cols(), 1, rng);
      const VectorXd cand = xs + z.head(3);
      EXPECT_GE((cand - ref).norm(), (xs - ref).norm() - 1e-10);
    }
  }
}

TEST(Ocp, UnconstrainedMatchesRiccati) {
  const MatrixXd A = MatrixXd::Constant(1, 1, 0.5), B = MatrixXd::Ones(1, 1);
  const MatrixXd Q = MatrixXd::Ones(1, 1), R = MatrixXd::Ones(1, 1);
  const VectorXd x0 = VectorXd::Ones(1);
  for (Index N : {1, 3, 8}) {
    const OcpProblem p = unconstrained(A, B, Q, R, Q, N, x0);
    const OcpSolution s = solve_ocp(p);
    const auto [cost, u0] = riccati(A, B, Q, R, Q, N, x0);
    EXPECT_NEAR(s.cost, cost, 1e-8);
    EXPECT_NEAR(s.u_bar(0, 0), u0(0), 1e-8);
    EXPECT_LE(s.kkt_residual, 1e-6);
  }
}

TEST(Ocp, UnconstrainedMultiInputMatchesRiccati) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 10; ++t) {
    const MatrixXd A = 0.5 * randn(3, 3, rng), B = randn(3, 2, rng);
    const MatrixXd G = randn(3, 3, rng);
    const MatrixXd Q = G * G.transpose() + MatrixXd::Identity(3, 3);
    const MatrixXd R = MatrixXd::Identity(2, 2);
    const VectorXd x0 = randn(3, 1, rng);
    const OcpProblem p = unconstrained(A, B, Q, R, 2.0 * Q, 6, x0);
    const OcpSolution s = solve_ocp(p);
    const auto [cost, u0] = riccati(A, B, Q, R, 2.0 * Q, 6, x0);
    EXPECT_NEAR(s.cost, cost, 1e-8 * (1.0 + cost));
    EXPECT_LT((s.u_bar.col(0) - u0).norm(), 1e-6 * (1.0 + u0.norm()));
  }
}

TEST(Ocp, AgreesWithConicSolverOnActiveInstances) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int active_cases = 0;
  for (int t = 0; t < 12; ++t) {
    const MatrixXd A = 1.1 * randn(2, 2, rng) / 1.5, B = randn(2, 1, rng);
    const MatrixXd Q = MatrixXd::Identity(2, 2), R = 0.1 * MatrixXd::Identity(1, 1);
    const MatrixXd P = oracle::dare(0.9 * A, B, Q, R);
    OcpProblem p = unconstrained(A, B, Q, R, P, 5, 2.0 * randn(2, 1, rng));
    for (auto &b : p.input_bound)
      b = 0.8 + 0.5 * u01(rng);
    for (auto &b : p.state_bound)
      b = 5.0;
    p.terminal_bound = 2.0;
    OcpSolution s;
    try {
      s = solve_ocp(p);
    } catch (const Error &e) {
      ASSERT_EQ(e.code(), ErrorCode::OcpInfeasible);
      EXPECT_THROW(solve_ocp_conic(p), Error);
      continue;
    }
    const OcpSolution c = solve_ocp_conic(p);
    EXPECT_NEAR(s.cost, c.cost, 1e-5 * std::max(1.0, std::abs(c.cost)));
    EXPECT_LE(s.kkt_residual, 1e-6);
    bool active = false;
    for (Index i = 0; i < p.N; ++i) {
      EXPECT_LE(s.u_bar.col(i).norm(), p.input_bound[std::size_t(i)] + 1e-9);
      active = active || s.u_bar.col(i).norm() > p.input_bound[std::size_t(i)] - 1e-4;
    }
    for (Index i = 1; i <= p.N; ++i)
      EXPECT_LE(s.x_bar.col(i).norm(), p.state_bound[std::size_t(i)] + 1e-9);
    const VectorXd dN = s.x_bar.col(p.N);
    EXPECT_LE(std::sqrt(dN.dot(P * dN)), *p.terminal_bound + 1e-9);
    active_cases += active;
  }
  EXPECT_GT(active_cases, 0);
}

TEST(Ocp, TerminalIngredientsBoundTheCost) {
  // With the infinite-horizon LQR pair as terminal ingredients and u = Kx
  // feasible, the optimal cost never exceeds V_f(x0).
  const SmallSystem s;
  const MatrixXd Q = MatrixXd::Identity(2, 2), R = MatrixXd::Identity(1, 1);
  const MatrixXd P = oracle::dare(s.A, s.B, Q, R);
  const MatrixXd K =
      -(R + s.B.transpose() * P * s.B).ldlt().solve(MatrixXd(s.B.transpose() * P * s.A));
  std::mt19937_64 rng(51);
  for (int t = 0; t < 20; ++t) {
    const VectorXd x0 = randn(2, 1, rng);
    OcpProblem p = unconstrained(s.A, s.B, Q, R, P, 4, x0);
    double worst_u = 0.0;
    VectorXd x = x0;
    for (Index i = 0; i < 4; ++i) {
      worst_u = std::max(worst_u, (K * x).norm());
      x = (s.A + s.B * K) * x;
    }
    for (auto &b : p.input_bound)
      b = worst_u * 1.01;
    const OcpSolution sol = solve_ocp(p);
    EXPECT_LE(sol.cost, x0.dot(P * x0) + 1e-8);
  }
}

TEST(Ocp, InfeasibleTighteningThrows) {
  OcpProblem p = unconstrained(MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1),
                               MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1), 2,
                               VectorXd::Ones(1));
  p.state_bound = {0.0, 0.1, 0.1};
  p.input_bound = {0.1, 0.1};
  try {
    solve_ocp(p);
    FAIL() << "expected OcpInfeasible";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::OcpInfeasible);
  }
  p.input_bound = {0.1, -1.0};
  EXPECT_THROW(solve_ocp(p), Error);
}

TEST(Ocp, WarmStartDoesNotChangeTheOptimum) {
  const SmallSystem s;
  const MatrixXd Q = MatrixXd::Identity(2, 2), R = MatrixXd::Identity(1, 1);
  OcpProblem p = unconstrained(s.A, s.B, Q, R, Q, 6, Eigen::Vector2d(3.0, -2.0));
  for (auto &b : p.input_bound)
    b = 0.6;
  const OcpSolution cold = solve_ocp(p);
  p.warm_start = MatrixXd::Constant(1, 6, 5.0); // infeasible guess
  const OcpSolution warm = solve_ocp(p);
  EXPECT_NEAR(cold.cost, warm.cost, 1e-7 * cold.cost);
  p.warm_start = cold.u_bar;
  const OcpSolution exact = solve_ocp(p);
  EXPECT_NEAR(cold.cost, exact.cost, 1e-7 * cold.cost);
}

TEST(Controller, ZeroErrorAppliesNominalInput) {
  SmallSystem s;
  const AseState<double> ase = make_ase_state(simulate(s.A, s.B, 1e-4, 40, 61));
  const SynthesisResult g = terminal_synthesis(ase, MatrixXd::Identity(2, 2),
                                               MatrixXd::Identity(1, 1));
  ControllerConfig cc;
  cc.R_x = 8.0;
  cc.R_u = 3.0;
  cc.N = 5;
  cc.Q = MatrixXd::Identity(2, 2);
  cc.R = MatrixXd::Identity(1, 1);
  const VectorXd x0 = Eigen::Vector2d(1.0, -1.0);
  ControllerState st = make_controller(ase, g, cc, x0);
  const StepOutcome o = control_step(st, x0);
  EXPECT_LT((o.u - o.u_bar).norm(), 1e-15);
  EXPECT_EQ(o.tube_radius, 0.0);
  const MatrixXd C = ase.center;
  EXPECT_LT((st.nominal_x - (C.leftCols(2) * x0 + C.rightCols(1) * o.u_bar)).norm(), 1e-14);
  EXPECT_NEAR(st.error_bound, st.tube.b, 1e-15);
}

TEST(Controller, RegulationStaysInsideTheTube) {
  ExperimentConfig cfg = tracking_config();
  cfg.delta = 1e-4;
  const MatrixXd Q = cfg.Q(), R = cfg.R();
  ControllerConfig cc;
  cc.R_x = cfg.R_x;
  cc.R_u = cfg.R_u;
  cc.N = cfg.horizon;
  cc.Q = Q;
  cc.R = R;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const AseState<double> ase =
        make_ase_state(collect_data(cfg, Method::Proposed, cfg.samples, seed));
    ASSERT_TRUE(ase.is_ase);
    const SynthesisResult g = terminal_synthesis(ase, Q, R);
    ControllerState st = make_controller(ase, g, cc, cfg.x0);
    const MatrixXd W = g.P_T;
    LinearPlant<double> plant(cfg.A, cfg.B, cfg.delta, cfg.x0, derive_seed(seed, 99));
    double prev_value = std::numeric_limits<double>::infinity();
    const Index steps = 200;
    for (Index k = 0; k < steps; ++k) {
      const VectorXd x = plant.state();
      const VectorXd e = x - st.nominal_x;
      EXPECT_LE(std::sqrt(e.dot(W * e)), st.error_bound + 1e-9) << "k = " << k;
      EXPECT_LE(st.error_bound, st.tube.r_inf + 1e-9);
      const double nominal_norm = st.nominal_x.norm();
      StepOutcome o;
      ASSERT_NO_THROW(o = control_step(st, x)) << "seed " << seed << " k = " << k;
      EXPECT_LE(o.kkt_residual, 1e-6);
      EXPECT_LE(o.u.norm(), cfg.R_u + 1e-9);
      EXPECT_LE(x.norm(), cfg.R_x + 1e-9);
      if (nominal_norm > 1e-6)
        EXPECT_LE(o.value, prev_value + 1e-9) << "k = " << k;
      prev_value = o.value;
      plant.apply(o.u);
      if (k >= steps - 50)
        EXPECT_LE(plant.state().norm(), st.tube.state_gain * st.tube.r_inf + 1e-6);
    }
  }
}
