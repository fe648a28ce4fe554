#pragma once

#include "adpc/ase.hpp"
#include "adpc/sdp.hpp"

#include <optional>

namespace adpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// α ≥ 0 with M − α·N ⪰ 0 (within tol_psd), if one exists.
std::optional<double> one_param_psd_feasible(const MatrixXd &M, const MatrixXd &N,
                                             PsdTolerance tol = {});

struct SigmaMaxResult {
  double sigma_star = 0.0;
  VectorXd lambda_s;
  /// λ_min of Ξ_prev − Ξ(H, Ẋ, Λ_s) − σ*·diag(I, 0), relative to ‖Ξ_prev‖.
  double residual = 0.0;
  /// true when the solve needed the relaxed tolerance (10·tol_psd).
  bool relaxed = false;
};

/// @brief max σ s.t. Ξ_prev − Ξ(H, Ẋ, Λ_s) ⪰ σ·diag(I, 0), Λ_s ⪰ 0, σ ≥ 0.
///
/// prev is the ASE whose Ξ is Ξ_prev; ds holds the candidate columns (its
/// weights are used as the starting point). Throws Infeasible when no
/// admissible (Λ_s, σ) is found.
SigmaMaxResult sigma_max(const AseState<double> &prev, const DataSet<double> &ds,
                         PsdTolerance tol = {});

/// Variant for an explicit Ξ_prev (well-conditioned data only).
SigmaMaxResult sigma_max(const MatrixXd &xi_prev, const DataSet<double> &ds,
                         PsdTolerance tol = {});

/// Same program over a dataset that force-includes an extra column.
SigmaMaxResult sigma_plus(const AseState<double> &prev,
                          const DataSet<double> &ds_with_forced_column,
                          PsdTolerance tol = {});

/// Whether the σ-max constraint admits some Λ_s ⪰ 0 at a fixed σ.
bool sigma_feasible(const AseState<double> &prev, const DataSet<double> &ds,
                    double sigma, PsdTolerance tol = {});

/// @brief Terminal ingredients: u = Kx, V_f(x) = x'P_T x.
struct SynthesisResult {
  MatrixXd Y;
  MatrixXd L;
  double alpha = 0.0;
  MatrixXd K;   ///< L·Y⁻¹
  MatrixXd P_T; ///< Y⁻¹
  /// Guaranteed one-step contraction of ‖·‖_{P_T} over the ASE under u = Kx:
  /// sqrt(1 − λ_min(P_T^{-1/2}(Q + K'RK)P_T^{-1/2})).
  double contraction = 1.0;
};

struct SynthesisOptions {
  double eps_lmi = 1e-7;
  PsdTolerance tol{};
};

/// @brief Robust terminal ingredients over the ASE of ase.
///
/// Solves the Schur-complement form [[R⁻¹, L, 0], [L', Y, Y], [0, Y, Q⁻¹]] ⪰
/// ε·I together with the S-lemma LMI coupling Y, L and α·Ξ, maximising
/// log det Y. Throws Infeasible when no certificate exists.
SynthesisResult terminal_synthesis(const AseState<double> &ase, const MatrixXd &Q,
                                   const MatrixXd &R, SynthesisOptions opts = {});

/// Variant for an explicit Ξ (well-conditioned data only).
SynthesisResult terminal_synthesis(const MatrixXd &xi0, Index n_x, const MatrixXd &Q,
                                   const MatrixXd &R, SynthesisOptions opts = {});

/// The verbatim S-lemma matrix of the synthesis at (Y, L, α) for a given Ξ.
MatrixXd synthesis_lmi(const MatrixXd &Y, const MatrixXd &L, double alpha,
                       const MatrixXd &xi, const MatrixXd &Q, const MatrixXd &R);

/// [[R⁻¹, L, 0], [L', Y, Y], [0, Y, Q⁻¹]].
MatrixXd synthesis_schur_block(const MatrixXd &Y, const MatrixXd &L, const MatrixXd &Q,
                               const MatrixXd &R);

} // namespace adpc
