#include "adpc/sdp.hpp"

#include <cmath>
#include <limits>

namespace adpc::sdp {

MatrixXd LmiBlock::evaluate(const VectorXd &y) const {
  MatrixXd m = constant;
  for (const Term &t : terms)
    m.noalias() += y(t.var) * t.coeff;
  return m;
}

void Problem::add_bound(Index var, double scale, double offset) {
  LmiBlock b;
  b.constant = MatrixXd::Constant(1, 1, offset);
  b.terms.push_back({var, MatrixXd::Constant(1, 1, scale)});
  lmis.push_back(std::move(b));
}

const char *to_string(Status s) {
  switch (s) {
  case Status::Solved: return "Solved";
  case Status::Infeasible: return "Infeasible";
  case Status::Marginal: return "Marginal";
  case Status::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

namespace {

double block_norm(const LmiBlock &b) {
  double s = b.constant.norm();
  for (const Term &t : b.terms)
    s = std::max(s, t.coeff.norm());
  return std::max(s, 1e-300);
}

struct BarrierState {
  double value = 0.0;
  VectorXd grad;
  MatrixXd hess;
  bool interior = false;
};

/// Accumulates −w·log det(B(z)) into value/grad/hess; false if B(z) ⊁ 0.
bool add_logdet(const LmiBlock &b, const VectorXd &z, double w, BarrierState &st,
                bool derivatives) {
  if (b.size() == 1) {
    double f = b.constant(0, 0);
    for (const Term &t : b.terms)
      f += z(t.var) * t.coeff(0, 0);
    if (!(f > 0.0) || !std::isfinite(f))
      return false;
    st.value -= w * std::log(f);
    if (derivatives)
      for (const Term &t : b.terms) {
        const double gk = t.coeff(0, 0) / f;
        st.grad(t.var) -= w * gk;
        for (const Term &s : b.terms)
          st.hess(t.var, s.var) += w * gk * s.coeff(0, 0) / f;
      }
    return true;
  }
  MatrixXd F = b.evaluate(z);
  Eigen::LLT<MatrixXd> llt(F);
  if (llt.info() != Eigen::Success)
    return false;
  const MatrixXd &L = llt.matrixLLT();
  double logdet = 0.0;
  for (Index i = 0; i < F.rows(); ++i) {
    const double d = L(i, i);
    if (!(d > 0.0) || !std::isfinite(d))
      return false;
    logdet += 2.0 * std::log(d);
  }
  st.value -= w * logdet;
  if (!derivatives)
    return true;

  // tr(G_k G_l) with G_k = L⁻¹C_kL⁻ᵀ symmetric is the inner product of vec(G_k).
  const Index nt = Index(b.terms.size());
  const Index m = F.rows();
  MatrixXd V(m * m, nt);
  for (Index k = 0; k < nt; ++k) {
    MatrixXd tmp = llt.matrixL().solve(b.terms[std::size_t(k)].coeff);
    MatrixXd G = llt.matrixL().solve(tmp.transpose());
    st.grad(b.terms[std::size_t(k)].var) -= w * G.trace();
    V.col(k) = Eigen::Map<const VectorXd>(G.data(), m * m);
  }
  MatrixXd HV = MatrixXd::Zero(nt, nt);
  HV.selfadjointView<Eigen::Lower>().rankUpdate(V.transpose(), w);
  for (Index k = 0; k < nt; ++k) {
    const Index vk = b.terms[std::size_t(k)].var;
    for (Index l = 0; l < nt; ++l) {
      const Index vl = b.terms[std::size_t(l)].var;
      st.hess(vk, vl) += k >= l ? HV(k, l) : HV(l, k);
    }
  }
  return true;
}

BarrierState evaluate(const Problem &p, const VectorXd &z, double t,
                      bool derivatives) {
  BarrierState st;
  const Index n = p.num_vars;
  if (derivatives) {
    st.grad = VectorXd::Zero(n);
    st.hess = MatrixXd::Zero(n, n);
  }
  if (p.cost.size() == n) {
    st.value += t * p.cost.dot(z);
    if (derivatives)
      st.grad += t * p.cost;
  }
  for (std::size_t o = 0; o < p.logdet_objective.size(); ++o) {
    if (!add_logdet(p.logdet_objective[o], z, t * p.logdet_weights[o], st, derivatives))
      return st;
  }
  for (const LmiBlock &b : p.lmis) {
    if (!add_logdet(b, z, 1.0, st, derivatives))
      return st;
  }
  st.interior = true;
  return st;
}

double objective_value(const Problem &p, const VectorXd &z) {
  double v = 0.0;
  if (p.cost.size() == p.num_vars)
    v += p.cost.dot(z);
  for (std::size_t o = 0; o < p.logdet_objective.size(); ++o) {
    MatrixXd G = p.logdet_objective[o].evaluate(z);
    Eigen::LLT<MatrixXd> llt(G);
    double ld = 0.0;
    for (Index i = 0; i < G.rows(); ++i)
      ld += 2.0 * std::log(llt.matrixLLT()(i, i));
    v -= p.logdet_weights[o] * ld;
  }
  return v;
}

double barrier_degree(const Problem &p) {
  double nu = 0.0;
  for (const LmiBlock &b : p.lmis)
    nu += double(b.size());
  for (std::size_t o = 0; o < p.logdet_objective.size(); ++o)
    nu += p.logdet_weights[o] * double(p.logdet_objective[o].size());
  return nu;
}

/// Damped Newton minimisation of the barrier at fixed t. The optional stop
/// predicate is checked after every accepted step.
template <typename Stop>
bool center(const Problem &p, VectorXd &z, double t, int max_newton,
            int &newton_steps, Stop &&stop) {
  for (int it = 0; it < max_newton; ++it) {
    BarrierState st = evaluate(p, z, t, true);
    if (!st.interior)
      return false;
    VectorXd d = st.hess.diagonal().cwiseAbs().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    MatrixXd Hs = d.asDiagonal() * st.hess * d.asDiagonal();
    Hs.diagonal().array() += 1e-13;
    Eigen::LDLT<MatrixXd> ldlt(Hs);
    VectorXd dz = -(d.asDiagonal() * ldlt.solve(d.asDiagonal() * st.grad));
    if (!dz.allFinite())
      return false;
    const double slope = st.grad.dot(dz);
    ++newton_steps;
    if (-slope / 2.0 < 1e-8)
      return true;
    double step = 1.0;
    bool moved = false;
    while (step > 1e-14) {
      VectorXd zn = z + step * dz;
      BarrierState sn = evaluate(p, zn, t, false);
      if (sn.interior && sn.value <= st.value + 0.25 * step * slope) {
        z = zn;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved)
      return true;
    if (stop(z))
      return true;
  }
  return true;
}

} // namespace

double min_margin(const Problem &p, const VectorXd &y) {
  double m = std::numeric_limits<double>::infinity();
  for (const LmiBlock &b : p.lmis) {
    MatrixXd F = b.evaluate(y);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrized(F), Eigen::EigenvaluesOnly);
    m = std::min(m, es.eigenvalues().minCoeff() / block_norm(b));
  }
  return m;
}

Result find_feasible(const Problem &p, const Options &opts,
                     std::optional<VectorXd> start) {
  Result res;
  VectorXd y0 = start ? *start : VectorXd::Zero(p.num_vars);
  if (y0.size() != p.num_vars)
    y0 = VectorXd::Zero(p.num_vars);

  // Normalised blocks with a common shift variable s: F_j/‖F_j‖ + s·I ⪰ 0.
  Problem aux;
  aux.num_vars = p.num_vars + 1;
  const Index s_var = p.num_vars;
  for (const LmiBlock &b : p.lmis) {
    const double nb = block_norm(b);
    LmiBlock nbk;
    nbk.constant = b.constant / nb;
    for (const Term &t : b.terms)
      nbk.terms.push_back({t.var, t.coeff / nb});
    nbk.terms.push_back({s_var, MatrixXd::Identity(b.size(), b.size())});
    aux.lmis.push_back(std::move(nbk));
  }
  aux.add_bound(s_var, 1.0, 1.0); // s ≥ −1
  aux.cost = VectorXd::Zero(aux.num_vars);
  aux.cost(s_var) = 1.0;

  const double m0 = min_margin(p, y0);
  if (m0 > opts.phase1_target) {
    res.status = Status::Solved;
    res.y = y0;
    res.margin = m0;
    return res;
  }
  VectorXd z(aux.num_vars);
  z.head(p.num_vars) = y0;
  z(s_var) = std::max(0.0, -m0) + 1.0;

  const double nu = barrier_degree(aux);
  double t = 1.0;
  auto reached = [&](const VectorXd &zz) { return -zz(s_var) > opts.phase1_target; };
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    if (!center(aux, z, t, opts.max_newton, res.newton_steps, reached)) {
      res.status = Status::NumericalFailure;
      break;
    }
    const double s = z(s_var);
    if (-s > opts.phase1_target) {
      res.status = Status::Solved;
      break;
    }
    if (s - nu / t > -opts.phase1_target) {
      res.status = Status::Infeasible;
      break;
    }
    if (nu / t < 1e-12) {
      res.status = Status::Marginal;
      break;
    }
    t *= opts.mu;
  }
  res.y = z.head(p.num_vars);
  res.margin = min_margin(p, res.y);
  res.objective = objective_value(p, res.y);
  return res;
}

Result solve(const Problem &p, const Options &opts, std::optional<VectorXd> start) {
  Options p1 = opts;
  p1.phase1_target = std::max(opts.phase1_target, 0.0);
  Result feas = find_feasible(p, p1, start);
  if (feas.status != Status::Solved || opts.feasibility_only)
    return feas;

  Result res;
  res.newton_steps = feas.newton_steps;
  VectorXd z = feas.y;
  const double nu = barrier_degree(p);
  auto never = [](const VectorXd &) { return false; };
  double t = 1.0 / std::max(1e-8, std::abs(objective_value(p, z)) + 1.0);
  bool ok = true;
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    if (!center(p, z, t, opts.max_newton, res.newton_steps, never)) {
      ok = false;
      break;
    }
    const double obj = objective_value(p, z);
    if (nu / t <= opts.gap_tol * std::max(1.0, std::abs(obj)))
      break;
    t *= opts.mu;
  }
  res.status = ok ? Status::Solved : Status::NumericalFailure;
  res.y = z;
  res.objective = objective_value(p, z);
  res.margin = min_margin(p, z);
  return res;
}

} // namespace adpc::sdp
