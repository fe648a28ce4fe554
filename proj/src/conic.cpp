#include "adpc/conic.hpp"

#include "adpc/ellipsoid.hpp"

#include <cmath>

namespace adpc {

std::optional<double> one_param_psd_feasible(const MatrixXd &M, const MatrixXd &N,
                                             PsdTolerance tol) {
  return one_parameter_search<double>(N, M, tol);
}

namespace {

/// Ξ_prev in the coordinates of a frame together with that frame.
struct FramedPrev {
  AseFrame<double> frame;
  MatrixXd xi_prev; ///< T'Ξ_prev T
};

FramedPrev framed(const AseState<double> &prev) {
  if (!prev.is_ase)
    throw Error(ErrorCode::NotAnAse, "previous dataset does not define an ASE");
  FramedPrev fp{prev.frame, MatrixXd()};
  const Index n = prev.frame.n_x + prev.frame.n_h;
  fp.xi_prev = MatrixXd::Identity(n, n);
  fp.xi_prev.bottomRightCorner(prev.frame.n_h, prev.frame.n_h) *= -1.0;
  return fp;
}

FramedPrev framed(const MatrixXd &xi_prev, Index n_x) {
  FramedPrev fp{frame_from_xi<double>(xi_prev, n_x), MatrixXd()};
  const MatrixXd T = fp.frame.congruence();
  fp.xi_prev = symmetrized(MatrixXd(T.transpose() * xi_prev * T));
  return fp;
}

struct SigmaProgram {
  sdp::Problem problem;
  Index sigma_var = 0;
  double sigma_scale = 1.0; ///< σ = sigma_scale·y[sigma_var]
  std::vector<MatrixXd> column_terms;
  MatrixXd sigma_term;
};

/// Frame-coordinate program: X_prev + εI − Σλ_i X_i − σ̃·c·diag(G_c⁻¹, 0) ⪰ 0.
SigmaProgram build_sigma_program(const FramedPrev &fp, const DataSet<double> &ds,
                                 double eps, std::optional<double> fixed_sigma) {
  const AseFrame<double> &f = fp.frame;
  const Index n = f.n_x + f.n_h;
  SigmaProgram sp;
  sp.sigma_scale = lambda_min<double>(f.gc);
  sdp::LmiBlock main;
  main.constant = fp.xi_prev + eps * MatrixXd::Identity(n, n);
  for (Index i = 0; i < ds.size(); ++i) {
    MatrixXd xi = f.transformed_xi_single(ds.H.col(i), ds.Xdot.col(i), ds.delta);
    const Index v = sp.problem.add_var();
    main.terms.push_back({v, -xi});
    sp.column_terms.push_back(xi);
    sp.problem.add_bound(v, 1.0, 0.0);
  }
  sp.sigma_term = MatrixXd::Zero(n, n);
  sp.sigma_term.topLeftCorner(f.n_x, f.n_x) =
      sp.sigma_scale * f.gc_inv_sqrt * f.gc_inv_sqrt;
  if (fixed_sigma) {
    main.constant -= (*fixed_sigma / sp.sigma_scale) * sp.sigma_term;
  } else {
    sp.sigma_var = sp.problem.add_var();
    main.terms.push_back({sp.sigma_var, -sp.sigma_term});
    sp.problem.add_bound(sp.sigma_var, 1.0, 0.0);
    sp.problem.cost = VectorXd::Zero(sp.problem.num_vars);
    sp.problem.cost(sp.sigma_var) = -1.0;
  }
  sp.problem.lmis.insert(sp.problem.lmis.begin(), std::move(main));
  return sp;
}

/// λ_min(X_prev − Σλ_i X_i − σ·diag(G_c⁻¹, 0)) in frame coordinates.
double sigma_residual(const FramedPrev &fp, const SigmaProgram &sp,
                      const VectorXd &lambda, double sigma) {
  MatrixXd m = fp.xi_prev;
  for (Index i = 0; i < lambda.size(); ++i)
    m -= lambda(i) * sp.column_terms[std::size_t(i)];
  m -= (sigma / sp.sigma_scale) * sp.sigma_term;
  return lambda_min<double>(m);
}

VectorXd start_point(const DataSet<double> &ds, Index num_vars) {
  VectorXd y = VectorXd::Zero(num_vars);
  y.head(ds.size()) = ds.lambda.cwiseMax(0.0);
  return y;
}

SigmaMaxResult sigma_max_framed(const FramedPrev &fp, const DataSet<double> &ds,
                                PsdTolerance tol) {
  validate(ds);
  if (ds.n_x != fp.frame.n_x || ds.n_h() != fp.frame.n_h)
    throw Error(ErrorCode::InvalidArgument, "dataset dimensions differ from the ASE");
  sdp::Options opts;
  opts.gap_tol = 1e-8;
  opts.mu = 40.0;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const double eps = attempt == 0 ? tol.tol_psd : 10.0 * tol.tol_psd;
    SigmaProgram sp = build_sigma_program(fp, ds, eps, std::nullopt);
    sdp::Result r = sdp::solve(sp.problem, opts, start_point(ds, sp.problem.num_vars));
    if (r.status != sdp::Status::Solved)
      continue;
    SigmaMaxResult out;
    out.lambda_s = r.y.head(ds.size()).cwiseMax(0.0);
    out.sigma_star = std::max(0.0, sp.sigma_scale * r.y(sp.sigma_var));
    out.residual = sigma_residual(fp, sp, out.lambda_s, out.sigma_star);
    out.relaxed = attempt > 0;
    return out;
  }
  throw Error(ErrorCode::Infeasible, "sigma-max program has no admissible point");
}

} // namespace

SigmaMaxResult sigma_max(const AseState<double> &prev, const DataSet<double> &ds,
                         PsdTolerance tol) {
  return sigma_max_framed(framed(prev), ds, tol);
}

SigmaMaxResult sigma_max(const MatrixXd &xi_prev, const DataSet<double> &ds,
                         PsdTolerance tol) {
  return sigma_max_framed(framed(xi_prev, ds.n_x), ds, tol);
}

SigmaMaxResult sigma_plus(const AseState<double> &prev,
                          const DataSet<double> &ds_with_forced_column, PsdTolerance tol) {
  return sigma_max_framed(framed(prev), ds_with_forced_column, tol);
}

bool sigma_feasible(const AseState<double> &prev, const DataSet<double> &ds, double sigma,
                    PsdTolerance tol) {
  const FramedPrev fp = framed(prev);
  SigmaProgram sp = build_sigma_program(fp, ds, tol.tol_psd, sigma);
  sdp::Options opts;
  opts.feasibility_only = true;
  sdp::Result r = sdp::find_feasible(sp.problem, opts, start_point(ds, sp.problem.num_vars));
  return r.status == sdp::Status::Solved;
}

// ---------------------------------------------------------------------------
// Terminal synthesis

namespace {

struct BlockLayout {
  Index nx, nu;
  Index off(int block) const { // block columns [n_x|n_x|n_u|n_u|n_x|n_x], 1-based
    const Index w[6] = {nx, nx, nu, nu, nx, nx};
    Index o = 0;
    for (int b = 1; b < block; ++b)
      o += w[b - 1];
    return o;
  }
  Index size() const { return 4 * nx + 2 * nu; }
};

MatrixXd lmi_coupling(const MatrixXd &Y, const MatrixXd &L, const MatrixXd *Rinv,
                      const MatrixXd *Qinv) {
  const Index nx = Y.rows(), nu = L.rows();
  BlockLayout b{nx, nu};
  MatrixXd M = MatrixXd::Zero(b.size(), b.size());
  auto put = [&](int r, int c, const MatrixXd &X) {
    M.block(b.off(r), b.off(c), X.rows(), X.cols()) += X;
  };
  put(1, 1, Y);
  put(2, 5, Y);
  put(3, 5, L);
  put(4, 5, L);
  put(5, 2, Y.transpose());
  put(5, 3, L.transpose());
  put(5, 4, L.transpose());
  put(5, 5, Y);
  put(5, 6, Y);
  put(6, 5, Y);
  if (Rinv)
    put(4, 4, *Rinv);
  if (Qinv)
    put(6, 6, *Qinv);
  return M;
}

MatrixXd schur_block(const MatrixXd &Y, const MatrixXd &L, const MatrixXd *Rinv,
                     const MatrixXd *Qinv) {
  const Index nx = Y.rows(), nu = L.rows();
  MatrixXd M = MatrixXd::Zero(nu + 2 * nx, nu + 2 * nx);
  if (Rinv)
    M.topLeftCorner(nu, nu) = *Rinv;
  M.block(0, nu, nu, nx) = L;
  M.block(nu, 0, nx, nu) = L.transpose();
  M.block(nu, nu, nx, nx) = Y;
  M.block(nu, nu + nx, nx, nx) = Y;
  M.block(nu + nx, nu, nx, nx) = Y;
  if (Qinv)
    M.bottomRightCorner(nx, nx) = *Qinv;
  return M;
}

SynthesisResult synthesize(const FramedPrev &fp, const MatrixXd &Q, const MatrixXd &R,
                           const SynthesisOptions &opts) {
  const Index nx = fp.frame.n_x;
  const Index nu = fp.frame.n_h - nx;
  if (Q.rows() != nx || Q.cols() != nx || R.rows() != nu || R.cols() != nu)
    throw Error(ErrorCode::InvalidArgument, "cost weights have wrong dimensions");
  if (!is_pd<double>(Q, opts.tol.tol_psd) || !is_pd<double>(R, opts.tol.tol_psd))
    throw Error(ErrorCode::NotPositiveDefinite, "cost weights must be positive definite");
  const MatrixXd Rinv = R.inverse();
  const MatrixXd Qinv = Q.inverse();
  const Index nxi = nx + fp.frame.n_h;

  // T̂ = blkdiag(T, I): only the leading n_x + n_h rows/cols change.
  const MatrixXd T = fp.frame.congruence();
  const Index big = 4 * nx + 2 * nu;
  auto to_frame = [&](const MatrixXd &M) {
    MatrixXd out = M;
    out.topRows(nxi) = T.transpose() * M.topRows(nxi);
    out.leftCols(nxi) = out.leftCols(nxi) * T;
    return symmetrized(out);
  };

  sdp::Problem prob;
  sdp::LmiBlock b1, b2, logdet;
  b1.constant = schur_block(MatrixXd::Zero(nx, nx), MatrixXd::Zero(nu, nx), &Rinv, &Qinv) -
                opts.eps_lmi * MatrixXd::Identity(nu + 2 * nx, nu + 2 * nx);
  b2.constant = to_frame(lmi_coupling(MatrixXd::Zero(nx, nx), MatrixXd::Zero(nu, nx), &Rinv,
                                      &Qinv));
  logdet.constant = MatrixXd::Zero(nx, nx);

  std::vector<std::pair<Index, Index>> y_index;
  for (Index j = 0; j < nx; ++j)
    for (Index i = j; i < nx; ++i) {
      MatrixXd E = MatrixXd::Zero(nx, nx);
      E(i, j) = 1.0;
      E(j, i) = 1.0;
      const Index v = prob.add_var();
      y_index.emplace_back(i, j);
      b1.terms.push_back({v, schur_block(E, MatrixXd::Zero(nu, nx), nullptr, nullptr)});
      b2.terms.push_back({v, to_frame(lmi_coupling(E, MatrixXd::Zero(nu, nx), nullptr, nullptr))});
      logdet.terms.push_back({v, E});
    }
  const Index l_first = prob.num_vars;
  for (Index j = 0; j < nx; ++j)
    for (Index i = 0; i < nu; ++i) {
      MatrixXd E = MatrixXd::Zero(nu, nx);
      E(i, j) = 1.0;
      const Index v = prob.add_var();
      b1.terms.push_back({v, schur_block(MatrixXd::Zero(nx, nx), E, nullptr, nullptr)});
      b2.terms.push_back({v, to_frame(lmi_coupling(MatrixXd::Zero(nx, nx), E, nullptr, nullptr))});
    }
  const Index a_var = prob.add_var();
  {
    MatrixXd A = MatrixXd::Zero(big, big);
    A.topLeftCorner(nxi, nxi) = -fp.xi_prev;
    b2.terms.push_back({a_var, A});
  }
  prob.lmis.push_back(std::move(b1));
  prob.lmis.push_back(std::move(b2));
  prob.add_bound(a_var, 1.0, 0.0);
  prob.logdet_objective.push_back(std::move(logdet));
  prob.logdet_weights.push_back(1.0);

  sdp::Options sopts;
  sopts.gap_tol = 1e-8;
  sdp::Result r = sdp::solve(prob, sopts);
  if (r.status != sdp::Status::Solved)
    throw Error(ErrorCode::Infeasible, std::string("terminal synthesis: ") +
                                           sdp::to_string(r.status));

  SynthesisResult out;
  out.Y = MatrixXd::Zero(nx, nx);
  for (std::size_t k = 0; k < y_index.size(); ++k) {
    const auto [i, j] = y_index[k];
    out.Y(i, j) = r.y(Index(k));
    out.Y(j, i) = r.y(Index(k));
  }
  out.L = MatrixXd::Zero(nu, nx);
  for (Index j = 0; j < nx; ++j)
    for (Index i = 0; i < nu; ++i)
      out.L(i, j) = r.y(l_first + j * nu + i);
  out.alpha = std::max(0.0, r.y(a_var));
  if (!is_pd<double>(out.Y, opts.tol.tol_psd))
    throw Error(ErrorCode::Infeasible, "terminal synthesis returned a singular Y");
  Eigen::LLT<MatrixXd> ychol(out.Y);
  out.P_T = symmetrized(MatrixXd(ychol.solve(MatrixXd::Identity(nx, nx))));
  out.K = out.L * out.P_T;
  const MatrixXd Pis = pd_inv_sqrt<double>(out.P_T);
  const MatrixXd W = symmetrized(MatrixXd(Pis * (Q + out.K.transpose() * R * out.K) * Pis));
  out.contraction = std::sqrt(std::clamp(1.0 - lambda_min<double>(W), 0.0, 1.0));
  return out;
}

} // namespace

SynthesisResult terminal_synthesis(const AseState<double> &ase, const MatrixXd &Q,
                                   const MatrixXd &R, SynthesisOptions opts) {
  return synthesize(framed(ase), Q, R, opts);
}

SynthesisResult terminal_synthesis(const MatrixXd &xi0, Index n_x, const MatrixXd &Q,
                                   const MatrixXd &R, SynthesisOptions opts) {
  return synthesize(framed(xi0, n_x), Q, R, opts);
}

MatrixXd synthesis_lmi(const MatrixXd &Y, const MatrixXd &L, double alpha,
                       const MatrixXd &xi, const MatrixXd &Q, const MatrixXd &R) {
  const MatrixXd Rinv = R.inverse();
  const MatrixXd Qinv = Q.inverse();
  MatrixXd M = lmi_coupling(Y, L, &Rinv, &Qinv);
  M.topLeftCorner(xi.rows(), xi.cols()) -= alpha * xi;
  return M;
}

MatrixXd synthesis_schur_block(const MatrixXd &Y, const MatrixXd &L, const MatrixXd &Q,
                               const MatrixXd &R) {
  const MatrixXd Rinv = R.inverse();
  const MatrixXd Qinv = Q.inverse();
  return schur_block(Y, L, &Rinv, &Qinv);
}

} // namespace adpc
