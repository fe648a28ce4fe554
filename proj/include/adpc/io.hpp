#pragma once

#include "adpc/harness.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace adpc {

using json = nlohmann::json;

/// @brief Overlays a JSON document on a base configuration.
///
/// Keys that are absent keep the base value. Throws ConfigError on unknown
/// keys, wrong types, non-conformable dimensions or violated invariants.
ExperimentConfig config_from_json(const json &doc, ExperimentConfig base);

ExperimentConfig load_config(const std::filesystem::path &path, ExperimentConfig base);

json config_to_json(const ExperimentConfig &cfg);

/// Throws ConfigError unless radii and δ are positive, dimensions agree and
/// reference intervals are disjoint.
void validate_config(const ExperimentConfig &cfg);

/// 64-bit FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig &cfg);

/// Output of `git describe` captured at configure time.
const char *build_version();

// CSV writers. Each writes one file and throws Error(InvalidArgument) when the
// file cannot be opened.
void write_mu_hat_csv(const std::filesystem::path &path, const ScalarVolumeResult &r);
void write_mu_hat_mean_csv(const std::filesystem::path &path, const ScalarVolumeResult &r);
void write_boundary_csv(const std::filesystem::path &path, const ScalarVolumeResult &r);
void write_feasibility_csv(const std::filesystem::path &path, const FeasibilityResult &r);
void write_tracking_runs_csv(const std::filesystem::path &path,
                             const std::vector<TrackingRun> &runs);
void write_tracking_steps_csv(const std::filesystem::path &path,
                              const std::vector<TrackingRun> &runs);
void write_trigger_log_csv(const std::filesystem::path &path,
                           const std::vector<TrackingRun> &runs);
void write_openloop_csv(const std::filesystem::path &path, const OpenLoopRun<double> &run);

/// Dataset as H.csv, Xdot.csv (one column per row of the file) and a
/// {lambda, delta, n_x, n_u} sidecar.
void save_dataset(const std::filesystem::path &stem, const DataSet<double> &ds);
DataSet<double> load_dataset(const std::filesystem::path &stem);

void write_json(const std::filesystem::path &path, const json &doc);

/// manifest.json: command, config hash, seed list, git describe, file list.
void write_manifest(const std::filesystem::path &dir, const std::string &command,
                    const ExperimentConfig &cfg, const std::vector<std::string> &files);

} // namespace adpc
