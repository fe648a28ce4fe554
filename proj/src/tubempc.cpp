#include "adpc/tubempc.hpp"

#include <cmath>

namespace adpc {

std::vector<double> tube_radii(double a, double b, double r0, Index N) {
  std::vector<double> r(std::size_t(N + 1));
  r[0] = r0;
  for (Index i = 1; i <= N; ++i)
    r[std::size_t(i)] = a * r[std::size_t(i - 1)] + b;
  return r;
}

TubeParams tube_params(const AseState<double> &ase, const MatrixXd &K, double R_x,
                       double R_u, double delta, const MatrixXd &W,
                       std::optional<double> rate_bound, Index N, double r0) {
  if (!ase.is_ase)
    throw Error(ErrorCode::NotAnAse, "tube_params needs a valid ASE");
  const AseFrame<double> &f = ase.frame;
  const Index nx = f.n_x, nh = f.n_h, nu = nh - nx;
  if (K.rows() != nu || K.cols() != nx || W.rows() != nx || W.cols() != nx)
    throw Error(ErrorCode::InvalidArgument, "tube_params: dimension mismatch");
  if (!is_pd<double>(W))
    throw Error(ErrorCode::NotPositiveDefinite, "tube weight must be positive definite");

  const MatrixXd Ws = psd_sqrt<double>(W);
  const MatrixXd Wis = pd_inv_sqrt<double>(W);
  MatrixXd IK(nh, nx);
  IK << MatrixXd::Identity(nx, nx), K;
  // Δ − Δ̄ = G_c^{1/2} V R^{-T} with ‖V‖ ≤ 1 over the ASE.
  const MatrixXd Rit = f.r_factor.transpose().triangularView<Eigen::Lower>().solve(
      MatrixXd::Identity(nh, nh));
  const double g = spectral_norm(Ws * psd_sqrt<double>(f.gc));

  TubeParams tp;
  tp.weight = W;
  tp.a = spectral_norm(Ws * f.center * IK * Wis) + g * spectral_norm(Rit * IK * Wis);
  if (rate_bound)
    tp.a = std::min(tp.a, *rate_bound);
  const double sup_h =
      std::min(spectral_norm(Rit) * std::sqrt(R_x * R_x + R_u * R_u),
               spectral_norm(Rit.leftCols(nx)) * R_x + spectral_norm(Rit.rightCols(nu)) * R_u);
  tp.b = g * sup_h + std::sqrt(delta * lambda_max<double>(W));
  tp.state_gain = spectral_norm(Wis);
  tp.input_gain = spectral_norm(K * Wis);
  if (tp.a >= 1.0)
    throw Error(ErrorCode::TubeDiverges, "tube contraction factor a = " +
                                             std::to_string(tp.a) + " is not below 1");
  tp.r_inf = tp.b / (1.0 - tp.a);
  tp.radii = tube_radii(tp.a, tp.b, r0, N);
  return tp;
}

TubeParams tube_params(const AseState<double> &ase, const MatrixXd &K, double R_x,
                       double R_u, double delta, Index N, double r0) {
  return tube_params(ase, K, R_x, R_u, delta,
                     MatrixXd::Identity(ase.frame.n_x, ase.frame.n_x), std::nullopt, N, r0);
}

double terminal_level(const MatrixXd &P_T, const MatrixXd &K, double R_x, double R_u,
                      const TubeParams &tube) {
  const MatrixXd Pinv = P_T.inverse();
  const double nu_num = R_u - tube.input_gain * tube.r_inf;
  const double nx_num = R_x - tube.state_gain * tube.r_inf;
  if (!(nu_num > 0.0) || !(nx_num > 0.0))
    throw Error(ErrorCode::EmptyTerminalSet, "tightened constraints leave no terminal set");
  const double ku = lambda_max<double>(MatrixXd(K * Pinv * K.transpose()));
  double level = nx_num * nx_num / lambda_max<double>(Pinv);
  if (ku > 0.0)
    level = std::min(level, nu_num * nu_num / ku);
  return level;
}

std::pair<VectorXd, VectorXd> steady_target(const MatrixXd &center, const VectorXd &x_ref) {
  const Index nx = center.rows();
  const Index nu = center.cols() - nx;
  const MatrixXd A = center.leftCols(nx);
  const MatrixXd B = center.rightCols(nu);
  // Parametrise the steady manifold as the null space of [A − I, B].
  MatrixXd M(nx, nx + nu);
  M << A - MatrixXd::Identity(nx, nx), B;
  Eigen::FullPivLU<MatrixXd> lu(M);
  const MatrixXd Z = lu.kernel();
  if (Z.cols() == 0 || (Z.cols() == 1 && Z.norm() == 0.0))
    return {VectorXd::Zero(nx), VectorXd::Zero(nu)};
  // min ‖Z_x θ − x_ref‖, smallest ‖θ‖ on ties; θ ↦ u_s ties resolved by minimum norm.
  const MatrixXd Zx = Z.topRows(nx);
  const VectorXd theta = pinv<double>(Zx) * x_ref;
  VectorXd xs = Zx * theta;
  // Among θ with the same Z_x θ, pick the one with the smallest input.
  Eigen::FullPivLU<MatrixXd> lux(Zx);
  VectorXd th = theta;
  const MatrixXd Nx = lux.kernel();
  if (lux.rank() < Zx.cols() && Nx.norm() > 0.0) {
    const MatrixXd Zu = Z.bottomRows(nu);
    const VectorXd c = pinv<double>(MatrixXd(Zu * Nx)) * (Zu * theta);
    th = theta - Nx * c;
  }
  return {xs, Z.bottomRows(nu) * th};
}

ControllerState make_controller(const AseState<double> &ase, const SynthesisResult &gains,
                                const ControllerConfig &cfg, const VectorXd &x0) {
  ControllerState st;
  st.cfg = cfg;
  st.gains = gains;
  st.ase = ase;
  st.tube = tube_params(ase, gains.K, cfg.R_x, cfg.R_u, ase.dataset.delta, gains.P_T,
                        gains.contraction, cfg.N, 0.0);
  st.terminal_level = terminal_level(gains.P_T, gains.K, cfg.R_x, cfg.R_u, st.tube);
  st.nominal_x = x0;
  st.error_bound = 0.0;
  return st;
}

void update_model(ControllerState &st, const AseState<double> &ase) {
  // The previous coefficients remain valid for any certified sub-ASE, so the
  // running minimum is sound.
  TubeParams fresh;
  try {
    fresh = tube_params(ase, st.gains.K, st.cfg.R_x, st.cfg.R_u, ase.dataset.delta,
                        st.gains.P_T, st.gains.contraction, st.cfg.N, 0.0);
  } catch (const Error &e) {
    if (e.code() != ErrorCode::TubeDiverges)
      throw;
    fresh = st.tube;
  }
  st.ase = ase;
  st.tube.a = std::min(st.tube.a, fresh.a);
  st.tube.b = std::min(st.tube.b, fresh.b);
  st.tube.r_inf = st.tube.b / (1.0 - st.tube.a);
  st.tube.radii = tube_radii(st.tube.a, st.tube.b, 0.0, st.cfg.N);
  st.error_bound = std::min(st.error_bound, st.tube.r_inf);
  try {
    st.terminal_level = terminal_level(st.gains.P_T, st.gains.K, st.cfg.R_x, st.cfg.R_u,
                                       st.tube);
  } catch (const Error &) {
    // The level only grows as the tube shrinks; keep the previous one.
  }
}

StepOutcome control_step(ControllerState &st, const VectorXd &x_now,
                         const std::optional<std::pair<VectorXd, VectorXd>> &target) {
  const Index nx = st.ase.frame.n_x;
  const Index nu = st.ase.frame.n_h - nx;
  const Index N = st.cfg.N;
  const TubeParams &tp = st.tube;
  const std::vector<double> r = tube_radii(tp.a, tp.b, st.error_bound, N);

  OcpProblem p;
  p.A = st.ase.center.leftCols(nx);
  p.B = st.ase.center.rightCols(nu);
  p.Q = st.cfg.Q;
  p.R = st.cfg.R;
  p.P = st.gains.P_T;
  p.x0 = st.nominal_x;
  p.N = N;
  p.x_s = target ? target->first : VectorXd::Zero(nx);
  p.u_s = target ? target->second : VectorXd::Zero(nu);
  p.state_bound.resize(std::size_t(N + 1));
  p.input_bound.resize(std::size_t(N));
  for (Index i = 0; i <= N; ++i)
    p.state_bound[std::size_t(i)] = st.cfg.R_x - tp.state_gain * r[std::size_t(i)];
  for (Index i = 0; i < N; ++i)
    p.input_bound[std::size_t(i)] = st.cfg.R_u - tp.input_gain * r[std::size_t(i)];
  if (st.last && st.last->u_bar.cols() == N && st.last->u_bar.rows() == nu) {
    // Shifted previous plan closed with the terminal feedback.
    MatrixXd ws(nu, N);
    ws.leftCols(N - 1) = st.last->u_bar.rightCols(N - 1);
    ws.col(N - 1) = p.u_s + st.gains.K * (st.last->x_bar.col(N) - p.x_s);
    p.warm_start = ws;
  }

  StepOutcome out;
  // Terminal set around the target: shrink the level so that it stays inside
  // the tightened constraints when shifted to (x_s, u_s).
  double level = st.terminal_level;
  if (target) {
    TubeParams shifted = tp;
    const double rx = st.cfg.R_x - p.x_s.norm();
    const double ru = st.cfg.R_u - p.u_s.norm();
    try {
      level = terminal_level(st.gains.P_T, st.gains.K, rx, ru, shifted);
    } catch (const Error &) {
      level = -1.0;
    }
  }
  const double tb = level > 0.0 ? std::sqrt(level) - r[std::size_t(N)] : -1.0;
  if (tb > 0.0)
    p.terminal_bound = tb;
  else
    out.terminal_dropped = true;

  OcpSolution sol = solve_ocp(p);
  out.u_bar = sol.u_bar.col(0);
  out.value = sol.cost;
  out.kkt_residual = sol.kkt_residual;
  out.tube_radius = st.error_bound;
  out.u = st.gains.K * (x_now - st.nominal_x) + out.u_bar;
  st.nominal_x = p.A * st.nominal_x + p.B * out.u_bar;
  st.error_bound = tp.a * st.error_bound + tp.b;
  st.last = std::move(sol);
  return out;
}

} // namespace adpc
