#include "adpc/sdp.hpp"
#include "adpc/tubempc.hpp"

#include <cmath>
#include <limits>

namespace adpc {

namespace {

/// ‖(G z + g)‖ ≤ c, stored pre-divided by c.
struct NormConstraint {
  MatrixXd G;
  VectorXd g;
  double c = 1.0;
};

/// x̄ = Φ x0 + Γ z over the horizon, z = [ū_0; …; ū_{N−1}].
struct Condensed {
  Index nx = 0, nu = 0, N = 0;
  std::vector<MatrixXd> Gamma; ///< i = 0 … N, each n_x × N·n_u
  std::vector<VectorXd> free;  ///< Φ_i x0
  MatrixXd H;                  ///< cost Hessian (cost = ½z'Hz + f'z + c0)
  VectorXd f;
  double c0 = 0.0;
  std::vector<NormConstraint> cons;
  bool trivially_infeasible = false;
};

Condensed condense(const OcpProblem &p) {
  Condensed c;
  c.nx = p.A.rows();
  c.nu = p.B.cols();
  c.N = p.N;
  const Index nz = c.N * c.nu;
  c.Gamma.assign(std::size_t(c.N + 1), MatrixXd::Zero(c.nx, nz));
  c.free.assign(std::size_t(c.N + 1), p.x0);
  for (Index i = 0; i < c.N; ++i) {
    c.free[std::size_t(i + 1)] = p.A * c.free[std::size_t(i)];
    c.Gamma[std::size_t(i + 1)] = p.A * c.Gamma[std::size_t(i)];
    c.Gamma[std::size_t(i + 1)].middleCols(i * c.nu, c.nu) += p.B;
  }

  c.H = MatrixXd::Zero(nz, nz);
  c.f = VectorXd::Zero(nz);
  auto add_quad = [&](const MatrixXd &G, const VectorXd &g, const MatrixXd &W) {
    // (G z + g)'W(G z + g)
    c.H += 2.0 * G.transpose() * W * G;
    c.f += 2.0 * G.transpose() * W * g;
    c.c0 += g.dot(W * g);
  };
  for (Index i = 0; i < c.N; ++i) {
    add_quad(c.Gamma[std::size_t(i)], c.free[std::size_t(i)] - p.x_s, p.Q);
    MatrixXd S = MatrixXd::Zero(c.nu, nz);
    S.middleCols(i * c.nu, c.nu).setIdentity();
    add_quad(S, -p.u_s, p.R);
  }
  add_quad(c.Gamma[std::size_t(c.N)], c.free[std::size_t(c.N)] - p.x_s, p.P);
  c.H = symmetrized(c.H);

  auto push = [&](MatrixXd G, VectorXd g, double bound) {
    if (!(bound > 0.0)) {
      c.trivially_infeasible = true;
      return;
    }
    c.cons.push_back({G / bound, g / bound, bound});
  };
  for (Index i = 0; i < c.N; ++i) {
    MatrixXd S = MatrixXd::Zero(c.nu, nz);
    S.middleCols(i * c.nu, c.nu).setIdentity();
    push(S, VectorXd::Zero(c.nu), p.input_bound[std::size_t(i)]);
  }
  for (Index i = 1; i <= c.N; ++i)
    push(c.Gamma[std::size_t(i)], c.free[std::size_t(i)], p.state_bound[std::size_t(i)]);
  if (p.terminal_bound) {
    const MatrixXd Ps = psd_sqrt<double>(p.P);
    push(Ps * c.Gamma[std::size_t(c.N)], Ps * (c.free[std::size_t(c.N)] - p.x_s),
         *p.terminal_bound);
  }
  return c;
}

void validate_problem(const OcpProblem &p) {
  const Index nx = p.A.rows();
  if (p.A.cols() != nx || p.B.rows() != nx || p.x0.size() != nx || p.N < 1 ||
      p.Q.rows() != nx || p.P.rows() != nx || p.R.rows() != p.B.cols() ||
      p.x_s.size() != nx || p.u_s.size() != p.B.cols() ||
      Index(p.state_bound.size()) != p.N + 1 || Index(p.input_bound.size()) != p.N)
    throw Error(ErrorCode::InvalidArgument, "malformed OCP");
}

/// φ_j(z) = ‖G̃_j z + g̃_j‖² − 1 ≤ 0.
double phi(const NormConstraint &k, const VectorXd &z) {
  return (k.G * z + k.g).squaredNorm() - 1.0;
}

struct Barrier {
  double value = 0.0;
  VectorXd grad;
  MatrixXd hess;
  bool interior = false;
};

/// t·(½z'Hz + f'z) − Σ log(s − φ_j(z)); s = 0 in phase II.
/// With with_slack the last coordinate of y is s and the objective is t·s.
Barrier barrier(const Condensed &c, const VectorXd &y, double t, bool with_slack,
                bool derivatives) {
  Barrier b;
  const Index nz = c.N * c.nu;
  const Index ny = y.size();
  const VectorXd z = y.head(nz);
  const double s = with_slack ? y(nz) : 0.0;
  if (derivatives) {
    b.grad = VectorXd::Zero(ny);
    b.hess = MatrixXd::Zero(ny, ny);
  }
  if (with_slack) {
    b.value = t * s;
    if (derivatives)
      b.grad(nz) = t;
  } else {
    b.value = t * (0.5 * z.dot(c.H * z) + c.f.dot(z));
    if (derivatives) {
      b.grad.head(nz) = t * (c.H * z + c.f);
      b.hess.topLeftCorner(nz, nz) = t * c.H;
    }
  }
  for (const NormConstraint &k : c.cons) {
    const VectorXd r = k.G * z + k.g;
    const double slack = s - (r.squaredNorm() - 1.0);
    if (!(slack > 0.0))
      return b;
    b.value -= std::log(slack);
    if (!derivatives)
      continue;
    VectorXd dphi = VectorXd::Zero(ny); // gradient of (φ − s)
    dphi.head(nz) = 2.0 * k.G.transpose() * r;
    if (with_slack)
      dphi(nz) = -1.0;
    b.grad += dphi / slack;
    b.hess += dphi * dphi.transpose() / (slack * slack);
    b.hess.topLeftCorner(nz, nz) += 2.0 * k.G.transpose() * k.G / slack;
  }
  b.interior = true;
  return b;
}

/// Damped Newton centering; returns false on numerical breakdown.
template <typename Stop>
bool newton_center(const Condensed &c, VectorXd &y, double t, bool with_slack, int &iters,
                   Stop &&stop, bool *centered = nullptr) {
  if (centered)
    *centered = false;
  for (int it = 0; it < 200; ++it) {
    Barrier b = barrier(c, y, t, with_slack, true);
    if (!b.interior)
      return false;
    Eigen::LDLT<MatrixXd> ldlt(b.hess);
    VectorXd dy = -ldlt.solve(b.grad);
    if (!dy.allFinite())
      return false;
    const double slope = b.grad.dot(dy);
    ++iters;
    if (-slope / 2.0 < 1e-12) {
      if (centered)
        *centered = true;
      return true;
    }
    double step = 1.0;
    bool moved = false;
    while (step > 1e-16) {
      VectorXd yn = y + step * dy;
      Barrier bn = barrier(c, yn, t, with_slack, false);
      if (bn.interior && bn.value <= b.value + 0.25 * step * slope) {
        y = yn;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved || stop(y))
      return true;
  }
  return true;
}

OcpSolution finish(const OcpProblem &p, const Condensed &c, const VectorXd &z) {
  OcpSolution sol;
  sol.u_bar = Eigen::Map<const MatrixXd>(z.data(), c.nu, c.N);
  sol.x_bar.resize(c.nx, c.N + 1);
  for (Index i = 0; i <= c.N; ++i)
    sol.x_bar.col(i) = c.free[std::size_t(i)] + c.Gamma[std::size_t(i)] * z;
  double cost = 0.0;
  for (Index i = 0; i < c.N; ++i) {
    const VectorXd dx = sol.x_bar.col(i) - p.x_s;
    const VectorXd du = sol.u_bar.col(i) - p.u_s;
    cost += dx.dot(p.Q * dx) + du.dot(p.R * du);
  }
  const VectorXd dN = sol.x_bar.col(c.N) - p.x_s;
  sol.cost = cost + dN.dot(p.P * dN);
  return sol;
}

} // namespace

OcpSolution solve_ocp(const OcpProblem &p) {
  validate_problem(p);
  Condensed c = condense(p);
  if (c.trivially_infeasible)
    throw Error(ErrorCode::OcpInfeasible, "a tightened constraint bound is not positive");
  const Index nz = c.N * c.nu;
  const double m = double(c.cons.size());
  int iters = 0;

  // Phase I: min s subject to φ_j(z) ≤ s, started from the warm start if any.
  VectorXd y = VectorXd::Zero(nz + 1);
  if (p.warm_start && p.warm_start->rows() == c.nu && p.warm_start->cols() == c.N)
    y.head(nz) = Eigen::Map<const VectorXd>(p.warm_start->data(), nz);
  double worst = -std::numeric_limits<double>::infinity();
  for (const NormConstraint &k : c.cons)
    worst = std::max(worst, phi(k, y.head(nz)));
  if (!(worst < -1e-6)) {
    y(nz) = std::max(worst, 0.0) + 1.0;
    auto done = [&](const VectorXd &yy) { return yy(nz) < -1e-3; };
    double t = 1.0 / (1.0 + std::abs(y(nz)));
    bool found = false;
    for (int outer = 0; outer < 80; ++outer) {
      bool centered = false;
      if (!newton_center(c, y, t, true, iters, done, &centered))
        break;
      if (y(nz) < -1e-6) {
        found = true;
        break;
      }
      // s − m/t bounds the slack optimum from below only at a central point.
      if (centered && y(nz) - m / t > -1e-9)
        break;
      t *= 10.0;
    }
    if (!found)
      throw Error(ErrorCode::OcpInfeasible, "tightened OCP has no strictly feasible point");
  }

  // Phase II: barrier path on the quadratic cost.
  VectorXd z = y.head(nz);
  auto never = [](const VectorXd &) { return false; };
  const double scale = 1.0 + std::abs(0.5 * z.dot(c.H * z) + c.f.dot(z) + c.c0);
  double t = 1.0 / scale;
  for (int outer = 0; outer < 80; ++outer) {
    if (!newton_center(c, z, t, false, iters, never))
      throw Error(ErrorCode::OcpInfeasible, "OCP barrier iteration broke down");
    if (m / t < 1e-9 * scale)
      break;
    t *= 20.0;
  }

  OcpSolution sol = finish(p, c, z);
  sol.iterations = iters;
  // KKT residual: the better of the barrier multipliers μ_j = 1/(t·(−φ_j)) and
  // nonnegative least-squares multipliers on the nearly active constraints.
  const VectorXd grad0 = c.H * z + c.f;
  const double stat_scale = 1.0 + c.f.norm() + c.H.norm() * z.norm();
  auto residual = [&](const VectorXd &mu) {
    VectorXd stat = grad0;
    double comp = 0.0;
    for (std::size_t j = 0; j < c.cons.size(); ++j) {
      const NormConstraint &k = c.cons[j];
      const VectorXd r = k.G * z + k.g;
      stat += mu(Index(j)) * 2.0 * k.G.transpose() * r;
      comp = std::max(comp, mu(Index(j)) * (1.0 - r.squaredNorm()));
    }
    return std::max(stat.norm() / stat_scale, comp / scale);
  };
  VectorXd mu_barrier(c.cons.size());
  for (std::size_t j = 0; j < c.cons.size(); ++j)
    mu_barrier(Index(j)) = 1.0 / (t * (-phi(c.cons[j], z)));
  double kkt = residual(mu_barrier);

  std::vector<Index> active;
  for (std::size_t j = 0; j < c.cons.size(); ++j)
    if (-phi(c.cons[j], z) < 1e-4)
      active.push_back(Index(j));
  while (!active.empty()) {
    MatrixXd J(nz, Index(active.size()));
    for (std::size_t a = 0; a < active.size(); ++a) {
      const NormConstraint &k = c.cons[std::size_t(active[a])];
      J.col(Index(a)) = 2.0 * k.G.transpose() * (k.G * z + k.g);
    }
    const VectorXd m_act = J.completeOrthogonalDecomposition().solve(-grad0);
    Index worst_idx = -1;
    double worst_val = 0.0;
    for (Index a = 0; a < m_act.size(); ++a)
      if (m_act(a) < worst_val) {
        worst_val = m_act(a);
        worst_idx = a;
      }
    if (worst_idx < 0) {
      VectorXd mu = VectorXd::Zero(Index(c.cons.size()));
      for (std::size_t a = 0; a < active.size(); ++a)
        mu(active[a]) = m_act(Index(a));
      kkt = std::min(kkt, residual(mu));
      break;
    }
    active.erase(active.begin() + worst_idx);
  }
  if (active.empty())
    kkt = std::min(kkt, residual(VectorXd::Zero(Index(c.cons.size()))));
  sol.kkt_residual = kkt;
  return sol;
}

OcpSolution solve_ocp_conic(const OcpProblem &p) {
  validate_problem(p);
  Condensed c = condense(p);
  if (c.trivially_infeasible)
    throw Error(ErrorCode::OcpInfeasible, "a tightened constraint bound is not positive");
  const Index nz = c.N * c.nu;

  sdp::Problem prob;
  for (Index i = 0; i < nz; ++i)
    prob.add_var();
  const Index tau = prob.add_var();

  // ‖C z‖² + f'z + c0 ≤ τ with ½H = C'C, as [[τ − f'z − c0, (Cz)'], [Cz, I]] ⪰ 0.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * c.H);
  const MatrixXd C = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                     es.eigenvectors().transpose();
  {
    sdp::LmiBlock b;
    b.constant = MatrixXd::Identity(nz + 1, nz + 1);
    b.constant(0, 0) = -c.c0;
    for (Index i = 0; i < nz; ++i) {
      MatrixXd T = MatrixXd::Zero(nz + 1, nz + 1);
      T(0, 0) = -c.f(i);
      T.block(1, 0, nz, 1) = C.col(i);
      T.block(0, 1, 1, nz) = C.col(i).transpose();
      b.terms.push_back({i, T});
    }
    MatrixXd Tt = MatrixXd::Zero(nz + 1, nz + 1);
    Tt(0, 0) = 1.0;
    b.terms.push_back({tau, Tt});
    prob.lmis.push_back(std::move(b));
  }
  for (const NormConstraint &k : c.cons) {
    const Index r = k.G.rows();
    sdp::LmiBlock b;
    b.constant = MatrixXd::Identity(r + 1, r + 1);
    b.constant.block(1, 0, r, 1) = k.g;
    b.constant.block(0, 1, 1, r) = k.g.transpose();
    for (Index i = 0; i < nz; ++i) {
      MatrixXd T = MatrixXd::Zero(r + 1, r + 1);
      T.block(1, 0, r, 1) = k.G.col(i);
      T.block(0, 1, 1, r) = k.G.col(i).transpose();
      b.terms.push_back({i, T});
    }
    prob.lmis.push_back(std::move(b));
  }
  // The input bounds confine z, which caps τ; without the cap the phase I
  // barrier is unbounded below along τ.
  double z_max = 0.0;
  for (double b : p.input_bound)
    z_max += b * b;
  z_max = std::sqrt(z_max);
  const double tau_max = 0.5 * lambda_max<double>(c.H) * z_max * z_max + c.f.norm() * z_max +
                         std::abs(c.c0);
  prob.add_bound(tau, -1.0, 2.0 * tau_max + 1.0);
  prob.cost = VectorXd::Zero(prob.num_vars);
  prob.cost(tau) = 1.0;

  VectorXd start = VectorXd::Zero(prob.num_vars);
  start(tau) = c.c0 + 1.0;
  sdp::Options opts;
  opts.gap_tol = 1e-11;
  sdp::Result r = sdp::solve(prob, opts, start);
  if (r.status != sdp::Status::Solved)
    throw Error(ErrorCode::OcpInfeasible,
                std::string("conic OCP: ") + sdp::to_string(r.status));
  OcpSolution sol = finish(p, c, r.y.head(nz));
  sol.iterations = r.newton_steps;
  return sol;
}

} // namespace adpc
