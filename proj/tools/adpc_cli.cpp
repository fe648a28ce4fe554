#include "adpc/io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace adpc;

namespace {

constexpr int kAssertionFailure = 2;
constexpr int kConfigError = 3;
constexpr double kMarginTol = 1e-8;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<Index> trials;
  std::string out = "out";
};

void add_common(CLI::App *sub, Common &c) {
  sub->add_option("--config", c.config, "JSON configuration overlaid on the built-in defaults")
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "first trial seed");
  sub->add_option("--trials", c.trials, "number of trials (seeds)")->check(CLI::PositiveNumber);
  sub->add_option("--out", c.out, "output directory");
}

ExperimentConfig resolve(const Common &c, ExperimentConfig base) {
  ExperimentConfig cfg = c.config.empty() ? std::move(base) : load_config(c.config, std::move(base));
  if (c.seed)
    cfg.seed = *c.seed;
  if (c.trials)
    cfg.trials = *c.trials;
  validate_config(cfg);
  return cfg;
}

/// Named pass/fail checks that end up in the summary and decide the exit code.
struct Checks {
  json list = json::array();
  bool ok = true;
  void add(const std::string &name, bool pass, const std::string &detail) {
    list.push_back({{"name", name}, {"pass", pass}, {"detail", detail}});
    ok = ok && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << '\n';
  }
};

void check_membership(Checks &c, const MembershipTracker &m) {
  c.add("true system inside every ASE", !(m.min_margin < -kMarginTol),
        "min margin " + std::to_string(m.min_margin) + " over " + std::to_string(m.checks) +
            " checks");
}

int finish(const fs::path &dir, const std::string &command, const ExperimentConfig &cfg,
           std::vector<std::string> files, json summary, const Checks &checks, double seconds) {
  summary["command"] = command;
  summary["config_hash"] = config_hash(cfg);
  summary["wall_seconds"] = seconds;
  summary["checks"] = checks.list;
  summary["all_checks_pass"] = checks.ok;
  write_json(dir / "summary.json", summary);
  files.push_back("summary.json");
  write_manifest(dir, command, cfg, files);
  std::cout << "wrote " << files.size() + 1 << " files to " << dir.string() << '\n';
  return checks.ok ? 0 : kAssertionFailure;
}

int run_openloop(const ExperimentConfig &cfg, const fs::path &dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const ScalarVolumeResult r = exp_scalar_volume(cfg);
  std::vector<std::string> files{"mu_hat.csv", "mu_hat_mean.csv", "boundary.csv",
                                 "openloop_first_seed.csv"};
  write_mu_hat_csv(dir / files[0], r);
  write_mu_hat_mean_csv(dir / files[1], r);
  write_boundary_csv(dir / files[2], r);
  {
    LinearPlant<double> plant(cfg.A, cfg.B, cfg.delta, cfg.x0, derive_seed(cfg.seed, 1));
    const InputBall<double> ball{cfg.input_radius, cfg.n_u()};
    write_openloop_csv(dir / files[3], proposed_collect(plant, ball, cfg.T_max, cfg.seed));
  }

  Checks checks;
  check_membership(checks, r.membership);
  json means;
  for (const auto &[m, table] : r.mu_hat) {
    json row = json::array();
    for (Index j = 0; j < table.cols(); ++j)
      row.push_back(table.col(j).mean());
    means[to_string(m)] = row;
  }
  if (r.mu_hat.count(Method::Proposed)) {
    const MatrixXd &p = r.mu_hat.at(Method::Proposed);
    bool mono = true;
    for (Index j = 1; j < p.cols(); ++j)
      mono = mono && p.col(j).mean() <= p.col(j - 1).mean() * (1.0 + 1e-12);
    checks.add("proposed mean volume non-increasing in T", mono, "over " +
                                                                     std::to_string(p.cols()) +
                                                                     " values of T");
  }
  json summary{{"T", r.T}, {"mean_mu_hat", means}};
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return finish(dir, "openloop", cfg, files, summary, checks, secs);
}

int run_feasibility(const ExperimentConfig &cfg, const fs::path &dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const FeasibilityResult r = exp_feasibility(cfg);
  std::vector<std::string> files{"feasibility.csv"};
  write_feasibility_csv(dir / files[0], r);

  Checks checks;
  check_membership(checks, r.membership);
  json fractions;
  for (const auto &[m, table] : r.feasible) {
    json row = json::array();
    for (Index t : r.T)
      row.push_back(r.fraction(m, t));
    fractions[to_string(m)] = row;
  }
  json summary{{"T", r.T}, {"feasible_fraction", fractions}};
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return finish(dir, "feasibility", cfg, files, summary, checks, secs);
}

int run_track(const ExperimentConfig &cfg, const fs::path &dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<TrackingRun> runs = exp_tracking(cfg);
  std::vector<std::string> files{"tracking_runs.csv", "tracking_steps.csv", "trigger_log.csv"};
  write_tracking_runs_csv(dir / files[0], runs);
  write_tracking_steps_csv(dir / files[1], runs);
  write_trigger_log_csv(dir / files[2], runs);

  Checks checks;
  MembershipTracker membership;
  Index started = 0, infeasible = 0, tube = 0, state = 0, input = 0, sigma = 0, forced = 0;
  json costs;
  for (const TrackingRun &r : runs) {
    membership.merge(r.membership);
    started += r.mpc_started;
    if (r.mpc_started) {
      infeasible += r.ocp_infeasible;
      tube += r.tube_violations;
    }
    state += r.state_violations;
    input += r.input_violations;
    if (r.method == Method::Proposed) {
      sigma += r.sigma_failures;
      forced += r.forced_violations;
    }
    costs[to_string(r.method)].push_back(r.cost);
  }
  check_membership(checks, membership);
  checks.add("event trigger never skipped an informative sample", sigma == 0 && forced == 0,
             std::to_string(sigma) + " update failures, " + std::to_string(forced) +
                 " skipped samples that would have shrunk the set");
  checks.add("MPC started", started > 0,
             std::to_string(started) + " of " + std::to_string(runs.size()) + " runs");
  checks.add("no infeasible OCP once started", infeasible == 0, std::to_string(infeasible));
  checks.add("error stays inside the tube", tube == 0, std::to_string(tube) + " violations");
  checks.add("state and input constraints hold", state == 0 && input == 0,
             std::to_string(state) + " state, " + std::to_string(input) + " input violations");

  json mean_cost;
  for (const auto &[name, list] : costs.items()) {
    double s = 0.0;
    for (const json &v : list)
      s += v.get<double>();
    mean_cost[name] = s / double(list.size());
  }
  json summary{{"runs", runs.size()}, {"mpc_started", started}, {"mean_cost", mean_cost}};
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return finish(dir, "track", cfg, files, summary, checks, secs);
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Set-membership learning and adaptive tube MPC experiments"};
  app.require_subcommand(1);
  Common c_open, c_feas, c_track;
  CLI::App *open = app.add_subcommand("openloop", "ASE volume versus data length");
  CLI::App *feas = app.add_subcommand("feasibility", "terminal synthesis feasibility ratio");
  CLI::App *track = app.add_subcommand("track", "closed-loop tracking with tube MPC");
  add_common(open, c_open);
  add_common(feas, c_feas);
  add_common(track, c_track);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e) == 0 ? 0 : kConfigError;
  }

  try {
    const Common &c = open->parsed() ? c_open : feas->parsed() ? c_feas : c_track;
    const fs::path dir(c.out);
    fs::create_directories(dir);
    if (open->parsed())
      return run_openloop(resolve(c, scalar_volume_config()), dir);
    if (feas->parsed())
      return run_feasibility(resolve(c, three_state_config()), dir);
    return run_track(resolve(c, tracking_config()), dir);
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::ConfigError ? kConfigError : 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
