#pragma once

#include "adpc/ase.hpp"
#include "adpc/conic.hpp"

#include <optional>
#include <vector>

namespace adpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// @brief Scalar error-tube recursion r⁺ = a·r + b in the W-weighted norm.
///
/// Radii are measured in ‖e‖_W = sqrt(e'We). W = I gives Euclidean balls.
struct TubeParams {
  double a = 0.0;
  double b = 0.0;
  double r_inf = 0.0;
  std::vector<double> radii; ///< r_0 … r_N
  MatrixXd weight;           ///< W
  double state_gain = 1.0;   ///< ‖W^{-1/2}‖: Euclidean state deviation per unit radius
  double input_gain = 0.0;   ///< ‖K·W^{-1/2}‖: input deviation per unit radius
};

/// @brief Coefficients (a, b) bounding ‖Δ[I;K]e + (Δ−Δ̄)[x̄;ū] + w‖_W ≤ a‖e‖_W + b.
///
/// Holds for every Δ in the ASE, ‖x̄‖ ≤ R_x, ‖ū‖ ≤ R_u and ‖w‖² < δ. A known
/// rate bound (e.g. the terminal synthesis contraction in the P_T norm) may cap
/// a. Radii r_0 … r_N start at r0. Throws TubeDiverges when a ≥ 1.
TubeParams tube_params(const AseState<double> &ase, const MatrixXd &K, double R_x,
                       double R_u, double delta, const MatrixXd &W,
                       std::optional<double> rate_bound = std::nullopt, Index N = 0,
                       double r0 = 0.0);

/// Euclidean-ball version (W = I, no rate cap).
TubeParams tube_params(const AseState<double> &ase, const MatrixXd &K, double R_x,
                       double R_u, double delta, Index N = 0, double r0 = 0.0);

/// r_i = a^i·r0 + b·(1 − a^i)/(1 − a), i = 0 … N.
std::vector<double> tube_radii(double a, double b, double r0, Index N);

/// @brief Largest level L with {x'P_T x ≤ L} inside the tightened state and input balls.
///
/// L_T = min((R_u − ‖K W^{-1/2}‖ r_inf)² / λ_max(K P_T⁻¹ K'),
///           (R_x − ‖W^{-1/2}‖ r_inf)² / λ_max(P_T⁻¹)).
/// Throws EmptyTerminalSet if either numerator is not positive.
double terminal_level(const MatrixXd &P_T, const MatrixXd &K, double R_x, double R_u,
                      const TubeParams &tube);

struct OcpProblem {
  MatrixXd A, B;          ///< nominal model
  MatrixXd Q, R, P;       ///< stage and terminal weights
  VectorXd x0;            ///< initial nominal state
  VectorXd x_s, u_s;      ///< target
  Index N = 1;
  std::vector<double> state_bound; ///< ‖x̄_i‖ ≤ state_bound[i], i = 1 … N (index 0 unused)
  std::vector<double> input_bound; ///< ‖ū_i‖ ≤ input_bound[i], i = 0 … N−1
  std::optional<double> terminal_bound; ///< ‖P^{1/2}(x̄_N − x_s)‖ ≤ terminal_bound
  std::optional<MatrixXd> warm_start;   ///< n_u × N input guess for phase I
};

struct OcpSolution {
  MatrixXd u_bar;        ///< n_u × N
  MatrixXd x_bar;        ///< n_x × (N+1)
  double cost = 0.0;
  double kkt_residual = 0.0; ///< max of scaled stationarity and complementarity
  int iterations = 0;
};

/// Condensed log-barrier interior point for the tightened problem.
/// Throws OcpInfeasible when no strictly feasible input sequence exists.
OcpSolution solve_ocp(const OcpProblem &p);

/// The same problem as a conic program for the semidefinite solver (slow;
/// used to cross-check solve_ocp).
OcpSolution solve_ocp_conic(const OcpProblem &p);

/// @brief Steady pair closest to x_ref: min ‖x_s − x_ref‖ s.t. (A − I)x_s + B u_s = 0.
std::pair<VectorXd, VectorXd> steady_target(const MatrixXd &center, const VectorXd &x_ref);

struct ControllerConfig {
  double R_x = 8.0;
  double R_u = 3.0;
  Index N = 10;
  MatrixXd Q, R;
};

/// @brief Run-local state of the adaptive tube controller.
struct ControllerState {
  ControllerConfig cfg;
  SynthesisResult gains;
  AseState<double> ase;
  TubeParams tube;
  double terminal_level = 0.0;
  VectorXd nominal_x;
  double error_bound = 0.0; ///< current tube radius around x̄
  std::optional<OcpSolution> last;
};

/// Builds the controller from the ASE and its terminal ingredients, with
/// x̄(t₀) = x0. Throws TubeDiverges or EmptyTerminalSet.
ControllerState make_controller(const AseState<double> &ase, const SynthesisResult &gains,
                                const ControllerConfig &cfg, const VectorXd &x0);

/// Recomputes the tube after a learning update. Coefficients never grow.
void update_model(ControllerState &st, const AseState<double> &ase);

struct StepOutcome {
  VectorXd u;
  VectorXd u_bar;
  double value = 0.0;        ///< optimal nominal cost V_s
  double tube_radius = 0.0;  ///< bound on ‖x − x̄‖_W before the step
  bool terminal_dropped = false;
  double kkt_residual = 0.0;
};

/// @brief u = K(x − x̄) + ū₀, then x̄ ← Ā x̄ + B̄ ū₀.
///
/// The optional target shifts the cost to a steady pair; the terminal
/// constraint is dropped when the shifted terminal set is empty.
StepOutcome control_step(ControllerState &st, const VectorXd &x_now,
                         const std::optional<std::pair<VectorXd, VectorXd>> &target =
                             std::nullopt);

} // namespace adpc
