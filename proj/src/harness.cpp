#include "adpc/harness.hpp"

#include "adpc/conic.hpp"
#include "adpc/etl.hpp"
#include "adpc/pool.hpp"
#include "adpc/tubempc.hpp"

#include <cmath>
#include <numbers>

namespace adpc {

const char *to_string(Method m) {
  switch (m) {
  case Method::Proposed: return "proposed";
  case Method::IdPe: return "idpe";
  case Method::IdAlphaPe: return "idalphape";
  }
  return "unknown";
}

Method method_from_string(const std::string &s) {
  if (s == "proposed")
    return Method::Proposed;
  if (s == "idpe")
    return Method::IdPe;
  if (s == "idalphape")
    return Method::IdAlphaPe;
  throw Error(ErrorCode::ConfigError, "unknown method '" + s + "'");
}

std::vector<std::uint64_t> ExperimentConfig::seed_list() const {
  std::vector<std::uint64_t> s;
  for (Index i = 0; i < trials; ++i)
    s.push_back(seed + std::uint64_t(i));
  return s;
}

VectorXd ExperimentConfig::reference_at(Index k) const {
  for (const ReferenceSegment &seg : reference)
    if (k >= seg.from && k <= seg.to)
      return seg.x_f;
  return VectorXd::Zero(n_x());
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser over the pair.
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + stream * 0xBF58476D1CE4E5B9ULL + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

ExperimentConfig scalar_volume_config() {
  ExperimentConfig c;
  c.A = MatrixXd::Constant(1, 1, 1.0);
  c.B = MatrixXd::Constant(1, 1, 1.0);
  c.delta = 1.0;
  c.x0 = VectorXd::Constant(1, 1.0);
  c.input_radius = 5.0;
  c.Q_diag = VectorXd::Ones(1);
  c.R_diag = VectorXd::Ones(1);
  c.T_min = 2;
  c.T_max = 16;
  c.trials = 100;
  return c;
}

ExperimentConfig three_state_config() {
  ExperimentConfig c;
  c.A.resize(3, 3);
  c.A << 0.850, -0.038, -0.038, 0.735, 0.815, 1.594, -0.664, 0.697, -0.064;
  c.B.resize(3, 2);
  c.B << 1.431, 0.705, 1.62, -1.129, 0.913, 0.369;
  c.delta = 0.16;
  c.x0.resize(3);
  c.x0 << 2.0, 1.0, -1.0;
  c.input_radius = 2.0;
  c.R_x = 8.0;
  c.R_u = 3.0;
  c.Q_diag = VectorXd::Ones(3);
  c.R_diag = VectorXd::Constant(2, 0.1);
  c.T_min = 5;
  c.T_max = 24;
  c.trials = 100;
  return c;
}

ExperimentConfig tracking_config() {
  ExperimentConfig c = three_state_config();
  c.samples = 10;
  c.steps = 100;
  c.trials = 50;
  ReferenceSegment first{13, 24, VectorXd(3)};
  first.x_f << 5.9144, 5.1550, 0.1472;
  ReferenceSegment second{61, 72, VectorXd(3)};
  second.x_f << -1.2742, -5.1937, -2.7653;
  c.reference = {first, second};
  return c;
}

DataSet<double> prefix(const DataSet<double> &ds, Index n) {
  DataSet<double> out = ds;
  out.H = ds.H.leftCols(n);
  out.Xdot = ds.Xdot.leftCols(n);
  out.lambda = ds.lambda.head(n);
  return out;
}

namespace {

LinearPlant<double> make_plant(const ExperimentConfig &cfg, std::uint64_t seed) {
  return LinearPlant<double>(cfg.A, cfg.B, cfg.delta, cfg.x0, derive_seed(seed, 1));
}

DataSet<double> collect_with(LinearPlant<double> &plant, const ExperimentConfig &cfg,
                             Method m, Index T, std::uint64_t seed) {
  const InputBall<double> ball{cfg.input_radius, cfg.n_u()};
  switch (m) {
  case Method::Proposed: return proposed_collect(plant, ball, T, seed).dataset;
  case Method::IdPe: return baseline_idpe(plant, ball, T, derive_seed(seed, 21));
  case Method::IdAlphaPe: return baseline_idalphape(plant, ball, T, derive_seed(seed, 31));
  }
  throw Error(ErrorCode::InvalidArgument, "unknown method");
}

MatrixXd true_delta(const ExperimentConfig &cfg) { return stack_delta<double>(cfg.A, cfg.B); }

void observe_membership(MembershipTracker &t, const AseState<double> &ase, const MatrixXd &D) {
  if (ase.is_ase)
    t.observe(ase.frame.membership_margin(D));
}

/// Boundary of a scalar-plant ASE: Δ̄ + sqrt(G_c)·(R⁻¹θ)' for unit θ.
MatrixXd ase_boundary(const AseState<double> &ase, Index points) {
  const AseFrame<double> &f = ase.frame;
  MatrixXd out(f.n_h, points);
  const MatrixXd Rinv =
      f.r_factor.triangularView<Eigen::Upper>().solve(MatrixXd::Identity(f.n_h, f.n_h));
  const double g = std::sqrt(f.gc(0, 0));
  for (Index i = 0; i < points; ++i) {
    const double t = 2.0 * std::numbers::pi * double(i) / double(points);
    VectorXd theta(f.n_h);
    theta.setZero();
    theta(0) = std::cos(t);
    if (f.n_h > 1)
      theta(1) = std::sin(t);
    out.col(i) = f.center.row(0).transpose() + g * Rinv * theta;
  }
  return out;
}

} // namespace

DataSet<double> collect_data(const ExperimentConfig &cfg, Method m, Index T,
                             std::uint64_t seed) {
  LinearPlant<double> plant = make_plant(cfg, seed);
  return collect_with(plant, cfg, m, T, seed);
}

double FeasibilityResult::fraction(Method m, Index t) const {
  const auto it = feasible.find(m);
  if (it == feasible.end())
    return 0.0;
  for (std::size_t j = 0; j < T.size(); ++j)
    if (T[j] == t)
      return double(it->second.col(Index(j)).sum()) / double(it->second.rows());
  return 0.0;
}

ScalarVolumeResult exp_scalar_volume(const ExperimentConfig &cfg) {
  ScalarVolumeResult res;
  res.seeds = cfg.seed_list();
  for (Index t = cfg.T_min; t <= cfg.T_max; ++t)
    res.T.push_back(t);
  const Index nT = Index(res.T.size());
  const Index nS = Index(res.seeds.size());
  const MatrixXd D = true_delta(cfg);
  const std::vector<Index> shown{2, 4, 8, 16};

  for (Method m : cfg.methods) {
    MatrixXd table = MatrixXd::Constant(nS, nT, std::numeric_limits<double>::quiet_NaN());
    std::vector<MembershipTracker> member(static_cast<std::size_t>(nS));
    std::vector<std::map<Index, MatrixXd>> shapes(static_cast<std::size_t>(nS));
    parallel_for(std::size_t(nS), [&](std::size_t s) {
      const std::uint64_t seed = res.seeds[s];
      auto record = [&](const DataSet<double> &ds, Index j) {
        AseState<double> ase = make_ase_state(ds);
        if (!ase.is_ase)
          return;
        table(Index(s), j) = mu_hat(ds);
        observe_membership(member[s], ase, D);
        if (s == 0 && ds.n_x == 1)
          for (Index t : shown)
            if (t == ds.size())
              shapes[s][t] = ase_boundary(ase, 64);
      };
      if (m == Method::IdAlphaPe) {
        for (Index j = 0; j < nT; ++j)
          record(collect_data(cfg, m, res.T[std::size_t(j)], seed), j);
      } else {
        const DataSet<double> full = collect_data(cfg, m, cfg.T_max, seed);
        for (Index j = 0; j < nT; ++j)
          if (res.T[std::size_t(j)] <= full.size())
            record(prefix(full, res.T[std::size_t(j)]), j);
      }
    });
    res.mu_hat[m] = table;
    for (const auto &mt : member)
      res.membership.merge(mt);
    if (!shapes.empty())
      res.boundary[m] = shapes[0];
  }
  return res;
}

FeasibilityResult exp_feasibility(const ExperimentConfig &cfg) {
  FeasibilityResult res;
  res.seeds = cfg.seed_list();
  for (Index t = cfg.T_min; t <= cfg.T_max; ++t)
    res.T.push_back(t);
  const Index nT = Index(res.T.size());
  const Index nS = Index(res.seeds.size());
  const MatrixXd D = true_delta(cfg);
  const MatrixXd Q = cfg.Q(), R = cfg.R();

  for (Method m : cfg.methods) {
    Eigen::MatrixXi table = Eigen::MatrixXi::Zero(nS, nT);
    std::vector<MembershipTracker> member(static_cast<std::size_t>(nS));
    parallel_for(std::size_t(nS), [&](std::size_t s) {
      const std::uint64_t seed = res.seeds[s];
      auto attempt = [&](const DataSet<double> &ds, Index j) {
        AseState<double> ase = make_ase_state(ds);
        if (!ase.is_ase)
          return;
        observe_membership(member[s], ase, D);
        try {
          terminal_synthesis(ase, Q, R);
          table(Index(s), j) = 1;
        } catch (const Error &e) {
          if (e.code() != ErrorCode::Infeasible && e.code() != ErrorCode::NotAnAse)
            throw;
        }
      };
      if (m == Method::IdAlphaPe) {
        for (Index j = 0; j < nT; ++j)
          attempt(collect_data(cfg, m, res.T[std::size_t(j)], seed), j);
      } else {
        const DataSet<double> full = collect_data(cfg, m, cfg.T_max, seed);
        for (Index j = 0; j < nT; ++j)
          if (res.T[std::size_t(j)] <= full.size())
            attempt(prefix(full, res.T[std::size_t(j)]), j);
      }
    });
    res.feasible[m] = table;
    for (const auto &mt : member)
      res.membership.merge(mt);
  }
  return res;
}

namespace {

VectorXd saturate(VectorXd u, double radius) {
  const double n = u.norm();
  if (n > radius)
    u *= radius / n;
  return u;
}

} // namespace

TrackingRun tracking_run(const ExperimentConfig &cfg, Method m, std::uint64_t seed,
                         const TrackingOptions &opts) {
  TrackingRun run;
  run.method = m;
  run.seed = seed;
  const Index nx = cfg.n_x();
  const MatrixXd Q = cfg.Q(), R = cfg.R();
  const MatrixXd D = true_delta(cfg);
  const double tol = 1e-9;

  LinearPlant<double> plant = make_plant(cfg, seed);
  DataSet<double> ds = collect_with(plant, cfg, m, cfg.samples, seed);
  AseState<double> ase = make_ase_state(ds);
  plant.reset(cfg.x0);

  std::optional<SynthesisResult> gains;
  std::optional<ControllerState> ctl;
  ControllerConfig ccfg;
  ccfg.R_x = cfg.R_x;
  ccfg.R_u = cfg.R_u;
  ccfg.N = cfg.horizon;
  ccfg.Q = Q;
  ccfg.R = R;
  if (!ase.is_ase) {
    run.start_failure = "data do not define an ASE";
  } else {
    observe_membership(run.membership, ase, D);
    try {
      gains = terminal_synthesis(ase, Q, R);
      ctl = make_controller(ase, *gains, ccfg, cfg.x0);
      run.mpc_started = true;
    } catch (const Error &e) {
      run.start_failure = e.what();
    }
  }
  const bool learn = m == Method::Proposed && ase.is_ase;
  const MatrixXd W = gains ? gains->P_T : MatrixXd::Identity(nx, nx);

  for (Index k = 0; k < cfg.steps; ++k) {
    const VectorXd x = plant.state();
    const VectorXd x_f = cfg.reference_at(k);
    TrackingStep step;
    step.k = k;
    step.x = x;
    step.x_f = x_f;
    std::optional<std::pair<VectorXd, VectorXd>> target;
    if (x_f.norm() > 0.0 && ase.is_ase)
      target = steady_target(ase.center, x_f);

    VectorXd u;
    bool used_mpc = false;
    if (ctl) {
      step.x_bar = ctl->nominal_x;
      const VectorXd e = x - ctl->nominal_x;
      step.error_norm = std::sqrt(e.dot(W * e));
      step.tube_radius = ctl->error_bound;
      if (step.error_norm > step.tube_radius + tol)
        ++run.tube_violations;
      run.max_tube_excess = std::max(run.max_tube_excess, step.error_norm - step.tube_radius);
      try {
        StepOutcome o = control_step(*ctl, x, target);
        u = o.u;
        step.u_bar = o.u_bar;
        step.value = o.value;
        step.terminal_dropped = o.terminal_dropped;
        run.max_kkt = std::max(run.max_kkt, o.kkt_residual);
        used_mpc = true;
      } catch (const Error &e) {
        if (e.code() != ErrorCode::OcpInfeasible)
          throw;
        ++run.ocp_infeasible;
      }
    }
    if (!used_mpc) {
      // Saturated terminal feedback about the steady pair.
      VectorXd xs = target ? target->first : VectorXd::Zero(nx);
      VectorXd us = target ? target->second : VectorXd::Zero(cfg.n_u());
      const MatrixXd K = gains ? gains->K : MatrixXd::Zero(cfg.n_u(), nx);
      u = saturate(us + K * (x - xs), cfg.R_u);
      if (ctl) {
        // Restart the nominal system one step ahead of the measured state.
        ctl->nominal_x = ctl->ase.center * (VectorXd(nx + cfg.n_u()) << x, u).finished();
        ctl->error_bound = ctl->tube.b;
      }
    }
    step.mpc = used_mpc;
    step.u = u;
    if (x.norm() > cfg.R_x + tol)
      ++run.state_violations;
    if (u.norm() > cfg.R_u + tol)
      ++run.input_violations;
    const VectorXd dx = x - x_f;
    run.cost += dx.dot(Q * dx) + u.dot(R * u);

    const VectorXd x_next = plant.apply(u);
    if (learn) {
      VectorXd h(nx + cfg.n_u());
      h << x, u;
      try {
        TriggerRecord rec = learn_step(ase, h, x_next, k, LearnOptions{cfg.max_columns, {}});
        if (rec.triggered) {
          ++run.triggers;
          step.triggered = true;
          step.sigma_star = *rec.sigma_star;
          if (ctl)
            update_model(*ctl, ase);
        } else if (opts.forced_sample_checks) {
          const ForcedSampleCheck fc = forced_sample_check(ase, h, x_next);
          ++run.forced_checks;
          const double gap = fc.sigma_plus - fc.sigma_star;
          run.max_forced_gap = std::max(run.max_forced_gap, gap);
          if (gap > 1e-6)
            ++run.forced_violations;
        }
        run.trigger_log.push_back(rec);
      } catch (const Error &e) {
        if (e.code() != ErrorCode::Infeasible)
          throw;
        ++run.sigma_failures;
      }
      observe_membership(run.membership, ase, D);
    }
    if (ase.is_ase)
      step.mu_hat = mu_hat(ase.dataset);
    if (opts.keep_steps)
      run.steps.push_back(std::move(step));
  }
  const VectorXd dx = plant.state() - cfg.reference_at(cfg.steps);
  run.cost += dx.dot(Q * dx);
  return run;
}

std::vector<TrackingRun> exp_tracking(const ExperimentConfig &cfg,
                                      const TrackingOptions &opts) {
  const std::vector<std::uint64_t> seeds = cfg.seed_list();
  std::vector<std::pair<Method, std::uint64_t>> jobs;
  for (Method m : cfg.methods)
    for (std::uint64_t s : seeds)
      jobs.emplace_back(m, s);
  std::vector<TrackingRun> runs(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    runs[i] = tracking_run(cfg, jobs[i].first, jobs[i].second, opts);
  });
  return runs;
}

} // namespace adpc
