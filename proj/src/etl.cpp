#include "adpc/etl.hpp"

#include "adpc/ellipsoid.hpp"

#include <sstream>

namespace adpc {

namespace {

MatrixXd frame_identity(const AseFrame<double> &f) {
  MatrixXd X = MatrixXd::Identity(f.n_x + f.n_h, f.n_x + f.n_h);
  X.bottomRightCorner(f.n_h, f.n_h) *= -1.0;
  return X;
}

} // namespace

std::optional<double> trigger_check(const AseState<double> &prev, const VectorXd &h_last,
                                    const VectorXd &x_next, PsdTolerance tol) {
  if (!prev.is_ase)
    throw Error(ErrorCode::NotAnAse, "trigger_check needs a valid ASE");
  const MatrixXd M =
      prev.frame.transformed_xi_single(h_last, x_next, prev.dataset.delta);
  return one_param_psd_feasible(M, frame_identity(prev.frame), tol);
}

std::optional<double> trigger_check(const MatrixXd &xi_prev, const VectorXd &h_last,
                                    const VectorXd &x_next, double delta, PsdTolerance tol) {
  return one_param_psd_feasible(xi_single<double>(h_last, x_next, delta), xi_prev, tol);
}

void prune_dataset(DataSet<double> &ds, Index max_columns) {
  if (ds.size() <= max_columns)
    return;
  const double top = ds.lambda.maxCoeff();
  std::vector<Index> keep;
  Index excess = ds.size() - max_columns;
  for (Index i = 0; i < ds.size(); ++i) {
    if (excess > 0 && ds.lambda(i) <= 1e-12 * top) {
      --excess;
      continue;
    }
    keep.push_back(i);
  }
  DataSet<double> out = ds;
  out.H.resize(ds.H.rows(), Index(keep.size()));
  out.Xdot.resize(ds.Xdot.rows(), Index(keep.size()));
  out.lambda.resize(Index(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    out.H.col(Index(j)) = ds.H.col(keep[j]);
    out.Xdot.col(Index(j)) = ds.Xdot.col(keep[j]);
    out.lambda(Index(j)) = ds.lambda(keep[j]);
  }
  ds = std::move(out);
}

TriggerRecord learn_step(AseState<double> &ase, const VectorXd &h_last,
                         const VectorXd &x_next, Index k, LearnOptions opts) {
  TriggerRecord rec;
  rec.k = k;
  rec.alpha = trigger_check(ase, h_last, x_next, opts.tol);
  if (rec.alpha) {
    rec.dataset_size = ase.dataset.size();
    return rec;
  }
  rec.triggered = true;
  DataSet<double> ds = ase.dataset;
  append_column(ds, h_last, x_next, 0.0);
  const SigmaMaxResult res = sigma_max(ase, ds, opts.tol);
  ds.lambda = res.lambda_s;
  prune_dataset(ds, opts.max_columns);
  AseState<double> next = make_ase_state(std::move(ds), opts.tol);
  if (!next.is_ase)
    throw Error(ErrorCode::NotAnAse, "learning update lost positive definiteness");
  ase = std::move(next);
  rec.sigma_star = res.sigma_star;
  rec.residual = res.residual;
  rec.relaxed = res.relaxed;
  rec.dataset_size = ase.dataset.size();
  return rec;
}

ForcedSampleCheck forced_sample_check(const AseState<double> &ase, const VectorXd &h_last,
                                      const VectorXd &x_next, PsdTolerance tol) {
  ForcedSampleCheck out;
  out.sigma_star = sigma_max(ase, ase.dataset, tol).sigma_star;
  DataSet<double> plus = ase.dataset;
  append_column(plus, h_last, x_next, 0.0);
  out.sigma_plus = sigma_plus(ase, plus, tol).sigma_star;
  return out;
}

std::string trigger_log_csv(const std::vector<TriggerRecord> &log) {
  std::ostringstream os;
  os.precision(12);
  os << "k,triggered,alpha,sigma_star,dataset_size\n";
  for (const TriggerRecord &r : log) {
    os << r.k << ',' << (r.triggered ? 1 : 0) << ',';
    if (r.alpha)
      os << *r.alpha;
    os << ',';
    if (r.sigma_star)
      os << *r.sigma_star;
    os << ',' << r.dataset_size << '\n';
  }
  return os.str();
}

} // namespace adpc
