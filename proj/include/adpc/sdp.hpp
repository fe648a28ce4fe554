#pragma once

#include "adpc/common.hpp"

#include <optional>
#include <vector>

namespace adpc::sdp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Term {
  Index var;
  MatrixXd coeff;
};

/// @brief Affine matrix constant + Σ y[var]·coeff constrained to be ⪰ 0.
struct LmiBlock {
  MatrixXd constant;
  std::vector<Term> terms;

  Index size() const { return constant.rows(); }
  MatrixXd evaluate(const VectorXd &y) const;
};

/// @brief minimise c'y − Σ_o w_o·log det G_o(y) subject to F_j(y) ⪰ 0.
///
/// The log-det objective blocks G_o are optional; when present they must
/// be bounded above on the feasible set.
struct Problem {
  Index num_vars = 0;
  VectorXd cost;                 ///< empty means zero
  std::vector<LmiBlock> lmis;
  std::vector<LmiBlock> logdet_objective;
  std::vector<double> logdet_weights;

  Index add_var() { return num_vars++; }
  /// Scalar inequality a'y + b ≥ 0 on a single variable: y[var]·scale + offset ≥ 0.
  void add_bound(Index var, double scale, double offset);
};

enum class Status { Solved, Infeasible, Marginal, NumericalFailure };

const char *to_string(Status s);

struct Options {
  double gap_tol = 1e-9;       ///< stop when ν/t ≤ gap_tol·max(1, |objective|)
  double mu = 15.0;            ///< barrier parameter growth
  int max_newton = 100;        ///< per centering step
  int max_outer = 80;
  double phase1_target = 0.0;  ///< phase I stops once the margin exceeds this
  bool feasibility_only = false;
};

struct Result {
  Status status = Status::NumericalFailure;
  VectorXd y;
  double objective = 0.0;
  /// Largest s with F_j(y) ⪰ s·‖F_j‖·I over the blocks (normalised margin of
  /// the returned point); negative values measure infeasibility.
  double margin = 0.0;
  int newton_steps = 0;
};

/// Normalised minimum eigenvalue over all blocks at y.
double min_margin(const Problem &p, const VectorXd &y);

/// Phase I: maximise the normalised margin; stops once it exceeds
/// opts.phase1_target or when the maximum is proven below zero.
Result find_feasible(const Problem &p, const Options &opts = {},
                     std::optional<VectorXd> start = std::nullopt);

/// Phase I followed by the barrier path for the objective.
Result solve(const Problem &p, const Options &opts = {},
             std::optional<VectorXd> start = std::nullopt);

} // namespace adpc::sdp
