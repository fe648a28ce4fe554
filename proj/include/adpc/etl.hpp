#pragma once

#include "adpc/ase.hpp"
#include "adpc/conic.hpp"

#include <optional>
#include <string>
#include <vector>

namespace adpc {

/// @brief Outcome of one event-triggered learning check.
struct TriggerRecord {
  Index k = 0;
  bool triggered = false;            ///< true: the sample was informative and learning ran
  std::optional<double> alpha;       ///< certificate when learning was skipped
  std::optional<double> sigma_star;  ///< σ* when learning ran
  Index dataset_size = 0;
  double residual = 0.0;             ///< nesting residual of the update (frame coordinates)
  bool relaxed = false;
};

/// @brief α ≥ 0 with ξ(h, ẋ) − α·Ξ_prev ⪰ 0, or none when the sample is informative.
///
/// Evaluated in the congruence frame of the previous ASE.
std::optional<double> trigger_check(const AseState<double> &prev, const VectorXd &h_last,
                                    const VectorXd &x_next, PsdTolerance tol = {});

/// Same test against an explicit Ξ_prev (well-conditioned data only).
std::optional<double> trigger_check(const MatrixXd &xi_prev, const VectorXd &h_last,
                                    const VectorXd &x_next, double delta,
                                    PsdTolerance tol = {});

struct LearnOptions {
  Index max_columns = 200; ///< zero-weight columns beyond this are dropped oldest-first
  PsdTolerance tol{};
};

/// @brief Trigger check followed, when informative, by the σ-max reweighting.
///
/// On a skipped step the state is left untouched.
TriggerRecord learn_step(AseState<double> &ase, const VectorXd &h_last,
                         const VectorXd &x_next, Index k, LearnOptions opts = {});

/// σ* over the current dataset and σ⁺ with the sample forced in, both against
/// the current Ξ. Whenever the trigger skips the sample, σ⁺ ≤ σ* is expected.
struct ForcedSampleCheck {
  double sigma_star = 0.0;
  double sigma_plus = 0.0;
};
ForcedSampleCheck forced_sample_check(const AseState<double> &ase, const VectorXd &h_last,
                                      const VectorXd &x_next, PsdTolerance tol = {});

/// Drops zero-weight columns oldest-first until at most max_columns remain.
void prune_dataset(DataSet<double> &ds, Index max_columns);

/// Trigger log as CSV: k, triggered, alpha, sigma_star, dataset_size.
std::string trigger_log_csv(const std::vector<TriggerRecord> &log);

} // namespace adpc
