#pragma once

#include "adpc/ase.hpp"
#include "adpc/etl.hpp"
#include "adpc/openloop.hpp"
#include "adpc/plant.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace adpc {

enum class Method { Proposed, IdPe, IdAlphaPe };

const char *to_string(Method m);
Method method_from_string(const std::string &s);

/// A reference value held over the closed time interval [from, to].
struct ReferenceSegment {
  Index from = 0;
  Index to = 0;
  VectorXd x_f;
};

/// @brief Everything an experiment needs; see docs/config.schema.json.
struct ExperimentConfig {
  MatrixXd A, B;
  double delta = 0.16;
  VectorXd x0;
  double input_radius = 2.0; ///< open-loop input ball
  double R_x = 8.0;
  double R_u = 3.0;
  Index horizon = 10;
  VectorXd Q_diag, R_diag;
  Index T_min = 5, T_max = 24;
  Index samples = 10;        ///< columns collected before closed-loop tracking
  Index steps = 100;         ///< closed-loop length
  Index max_columns = 200;
  std::vector<ReferenceSegment> reference;
  std::vector<Method> methods{Method::Proposed, Method::IdPe, Method::IdAlphaPe};
  std::uint64_t seed = 1;
  Index trials = 100;

  Index n_x() const { return A.rows(); }
  Index n_u() const { return B.cols(); }
  MatrixXd Q() const { return Q_diag.asDiagonal(); }
  MatrixXd R() const { return R_diag.asDiagonal(); }
  std::vector<std::uint64_t> seed_list() const;
  VectorXd reference_at(Index k) const;
};

/// Scalar plant 𝒜 = ℬ = δ = 1 with ‖u‖ ≤ 5, T = 2 … 16.
ExperimentConfig scalar_volume_config();
/// Three-state plant with δ = 0.16, ‖u‖ ≤ 2 open loop, T = 5 … 24.
ExperimentConfig three_state_config();
/// Three-state tracking scenario (100 steps, 10 samples, reference schedule).
ExperimentConfig tracking_config();

/// Derived per-purpose seeds so that methods sharing a trial seed are paired.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// ---------------------------------------------------------------------------
// Data collection

/// @brief Random boundary inputs; a sample is kept only while it raises the
/// rank of H, after which every sample is kept. Λ = I.
template <Plant P>
DataSet<typename P::Scalar> baseline_idpe(P &plant, const InputBall<typename P::Scalar> &ball,
                                          Index T, std::uint64_t seed) {
  using Scalar = typename P::Scalar;
  const Index nx = plant.n_x(), nu = plant.n_u(), nh = nx + nu;
  if (T < nh)
    throw Error(ErrorCode::InvalidArgument, "baseline_idpe needs T >= n_h");
  std::mt19937_64 rng(seed);
  DataSet<Scalar> ds = empty_dataset<Scalar>(nx, nu, plant.delta());
  Index steps = 0;
  while (ds.size() < T) {
    if (ds.size() < nh && steps >= 50 * nh)
      throw Error(ErrorCode::FormationStalled, "random inputs did not reach full rank");
    const Vec<Scalar> x = plant.state();
    const Vec<Scalar> u = random_on_sphere<Scalar>(nu, ball.radius, rng);
    Vec<Scalar> h(nh);
    h << x, u;
    bool keep = true;
    if (ds.size() > 0 && ds.size() < nh)
      keep = residual_criterion_jf<Scalar>(ds.H, x, u) > innovation_threshold<Scalar>(x);
    const Vec<Scalar> x_next = plant.apply(u);
    if (keep)
      append_column(ds, h, x_next, Scalar(1));
    ++steps;
  }
  return ds;
}

/// @brief Offline multisine with T frequencies per channel at full amplitude. Λ = I.
template <Plant P>
DataSet<typename P::Scalar>
baseline_idalphape(P &plant, const InputBall<typename P::Scalar> &ball, Index T,
                   std::uint64_t seed) {
  using Scalar = typename P::Scalar;
  const Index nx = plant.n_x(), nu = plant.n_u(), nh = nx + nu;
  if (T < nh)
    throw Error(ErrorCode::InvalidArgument, "baseline_idalphape needs T >= n_h");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> phase(Scalar(0), Scalar(2) * std::numbers::pi_v<Scalar>);
  Mat<Scalar> phases(nu, T);
  for (Index j = 0; j < nu; ++j)
    for (Index f = 0; f < T; ++f)
      phases(j, f) = phase(rng);
  Mat<Scalar> U = Mat<Scalar>::Zero(nu, T);
  const Scalar period = Scalar(2 * T + 1);
  for (Index k = 0; k < T; ++k)
    for (Index j = 0; j < nu; ++j)
      for (Index f = 0; f < T; ++f)
        U(j, k) += std::sin(Scalar(2) * std::numbers::pi_v<Scalar> * Scalar(f + 1) *
                                Scalar(k) / period + phases(j, f));
  Scalar peak = Scalar(0);
  for (Index k = 0; k < T; ++k)
    peak = std::max(peak, U.col(k).norm());
  if (peak > Scalar(0))
    U *= ball.radius / peak;

  DataSet<Scalar> ds = empty_dataset<Scalar>(nx, nu, plant.delta());
  for (Index k = 0; k < T; ++k) {
    Vec<Scalar> h(nh);
    h << plant.state(), U.col(k);
    const Vec<Scalar> x_next = plant.apply(U.col(k));
    append_column(ds, h, x_next, Scalar(1));
  }
  return ds;
}

/// Proposed open-loop learning: formation, then contraction until T columns
/// are collected or 50·T contraction steps have passed.
template <Plant P>
OpenLoopRun<typename P::Scalar>
proposed_collect(P &plant, const InputBall<typename P::Scalar> &ball, Index T,
                 std::uint64_t seed) {
  OpenLoopRun<typename P::Scalar> run =
      phase_formation(plant, ball, derive_seed(seed, 11));
  std::mt19937_64 rng(derive_seed(seed, 12));
  const Index cap = 50 * std::max<Index>(T, 1);
  for (Index s = 0; s < cap && run.dataset.size() < T; ++s)
    contraction_step(run, plant, ball, rng);
  return run;
}

/// Collects T columns with the given method from a fresh plant at cfg.x0.
DataSet<double> collect_data(const ExperimentConfig &cfg, Method m, Index T,
                             std::uint64_t seed);

/// First n columns of a dataset (weights kept).
DataSet<double> prefix(const DataSet<double> &ds, Index n);

// ---------------------------------------------------------------------------
// Experiments

/// Smallest relative membership margin of the true system seen so far.
struct MembershipTracker {
  double min_margin = std::numeric_limits<double>::infinity();
  Index checks = 0;
  void observe(double margin) {
    min_margin = std::min(min_margin, margin);
    ++checks;
  }
  void merge(const MembershipTracker &o) {
    min_margin = std::min(min_margin, o.min_margin);
    checks += o.checks;
  }
};

struct ScalarVolumeResult {
  std::vector<Index> T;
  std::vector<std::uint64_t> seeds;
  std::map<Method, MatrixXd> mu_hat; ///< seeds × T
  /// ASE boundary (rows: A, B) for the first seed at T ∈ {2, 4, 8, 16}.
  std::map<Method, std::map<Index, MatrixXd>> boundary;
  MembershipTracker membership;
};

struct FeasibilityResult {
  std::vector<Index> T;
  std::vector<std::uint64_t> seeds;
  std::map<Method, Eigen::MatrixXi> feasible; ///< seeds × T, 1 when synthesis succeeded
  MembershipTracker membership;
  double fraction(Method m, Index t) const;
};

struct TrackingStep {
  Index k = 0;
  VectorXd x, x_bar, u, u_bar, x_f;
  double tube_radius = 0.0; ///< bound on ‖x − x̄‖ in the tube norm
  double error_norm = 0.0;  ///< actual ‖x − x̄‖ in the tube norm
  double value = 0.0;
  bool triggered = false;
  double sigma_star = std::numeric_limits<double>::quiet_NaN();
  double mu_hat = std::numeric_limits<double>::quiet_NaN();
  bool mpc = false;
  bool terminal_dropped = false;
};

struct TrackingRun {
  Method method = Method::Proposed;
  std::uint64_t seed = 0;
  double cost = 0.0; ///< J_t
  bool mpc_started = false;
  std::string start_failure;
  Index ocp_infeasible = 0;
  Index state_violations = 0;
  Index input_violations = 0;
  Index tube_violations = 0;
  double max_tube_excess = -std::numeric_limits<double>::infinity();
  Index sigma_failures = 0;
  Index forced_checks = 0;
  Index forced_violations = 0;
  double max_forced_gap = -std::numeric_limits<double>::infinity();
  Index triggers = 0;
  double max_kkt = 0.0;
  MembershipTracker membership;
  std::vector<TrackingStep> steps;
  std::vector<TriggerRecord> trigger_log;
};

struct TrackingOptions {
  bool forced_sample_checks = true; ///< evaluate σ⁺ ≤ σ* at skipped samples
  bool keep_steps = true;
};

/// One closed-loop tracking run.
TrackingRun tracking_run(const ExperimentConfig &cfg, Method m, std::uint64_t seed,
                         const TrackingOptions &opts = {});

ScalarVolumeResult exp_scalar_volume(const ExperimentConfig &cfg);
FeasibilityResult exp_feasibility(const ExperimentConfig &cfg);
std::vector<TrackingRun> exp_tracking(const ExperimentConfig &cfg,
                                      const TrackingOptions &opts = {});

} // namespace adpc
