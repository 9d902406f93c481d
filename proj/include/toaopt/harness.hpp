#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "toaopt/optimizers.hpp"
#include "toaopt/scenario.hpp"

namespace toaopt {

enum class HEval { true_state, ekf_predicted };

std::string_view to_string(HEval h);
HEval parse_h_eval(std::string_view s);

struct LayoutSpec {
  int n_anchors = 4;
  std::optional<std::uint64_t> seed;  // default: derived from the master seed
  bool redraw_per_trajectory = false;
  std::vector<AnchorPos> fixed;  // non-empty: used verbatim, no random placement
};

struct ExperimentConfig {
  Scenario scenario;  // anchors are filled per trajectory from `layout`
  LayoutSpec layout;
  OptimizerParams optimizer;
  double e_max_factor = 8.0;  // E_MAX = factor * E_INIT
  Algorithm algorithm = Algorithm::none;
  GainUpdate gain_update = GainUpdate::incremental;
  HEval h_eval = HEval::true_state;
  int n_trajectories = 50;
  std::uint64_t seed = 20240601;
  double e_init = 0.0;  // <= 0: calibrate before running
  double target_outage = 0.01;
  double calibration_max = 65536.0;
  int convergence_step = 10;
  bool include_pre_convergence = false;
  double symbol_period = 1.0e-6;
  double p0_position_var = 1.0;  // P_0 = diag(v, v, sigma_w^2, sigma_w^2)
  int threads = 0;               // 0: hardware concurrency

  void validate() const;
};

/// Anchor layout for a trajectory (the same for all unless redraw_per_trajectory).
std::vector<AnchorPos> resolve_anchors(const ExperimentConfig& cfg, int trajectory_id);

/// Optimizer parameters with E_MAX bound to E_INIT.
OptimizerParams bound_params(const ExperimentConfig& cfg, double e_init);

struct StepRecord {
  int trajectory_id = 0;
  int k = 0;
  Algorithm algorithm = Algorithm::none;
  double pcrb = 0.0;
  double pcrb_pred = 0.0;
  std::vector<double> energies;
  double total_energy = 0.0;
  double energy_gain_pct = 0.0;
  std::uint64_t mult_count = 0;

  bool operator==(const StepRecord&) const = default;
};

/// Per-step invariant violations seen while running (empty when clean).
struct RunDiagnostics {
  std::uint64_t invalid_covariance = 0;
  std::uint64_t bound_violations = 0;
  std::uint64_t skipped_updates = 0;
  std::uint64_t incremental_fallbacks = 0;
  std::uint64_t infeasible_steps = 0;

  RunDiagnostics& operator+=(const RunDiagnostics& o);
};

struct TrajectoryRun {
  std::vector<StepRecord> records;
  RunDiagnostics diagnostics;
};

/// predict -> allocation decision -> update for every step of one trajectory.
TrajectoryRun run_trajectory(const ExperimentConfig& cfg, int trajectory_id, double e_init);

struct ExperimentRun {
  std::vector<StepRecord> records;  // ordered by (trajectory, k)
  RunDiagnostics diagnostics;
};

/// All trajectories on a worker pool; output order is independent of scheduling.
ExperimentRun run_experiment(const ExperimentConfig& cfg, double e_init);

struct CalibrationResult {
  double e_init = 0.0;
  double outage = 0.0;
  std::vector<std::pair<double, double>> evaluated;  // (energy, outage) in search order
};

/// Fraction of steps over all trajectories with PCRB above target, no optimizer.
double baseline_outage(const ExperimentConfig& cfg, double e_init);

/// Smallest uniform energy (doubling grid, then bisection to 1 unit) whose baseline
/// outage is <= target_outage. Throws NumericalError when calibration_max is not enough.
CalibrationResult calibrate_einit(const ExperimentConfig& cfg, int n_trajectories,
                                  double target_outage);

/// Same search with the outage pooled over the steps of several configurations
/// (e.g. one E_INIT shared by slow and fast motion). Grid cap from the first entry.
CalibrationResult calibrate_einit(std::span<const ExperimentConfig> cfgs, int n_trajectories,
                                  double target_outage);

struct AggregateOptions {
  double pcrb_target = 1.0;
  int convergence_step = 10;
  bool include_pre_convergence = false;
};

struct AlgorithmSummary {
  std::size_t n_records = 0;
  std::size_t n_trajectories = 0;
  std::vector<double> pcrb_sorted;        // empirical CDF support, all (trajectory, step)
  std::vector<double> gain_sorted;        // gain CCDF support, post-convergence cases
  std::vector<double> mean_gain_by_step;  // averaged over trajectories at fixed k
  double outage_rate = 0.0;
  double mean_gain = 0.0;                 // over gain cases
  double frac_gain_above_50 = 0.0;        // over gain cases
  double mean_total_energy = 0.0;
  std::uint64_t total_mult_count = 0;
  double mean_mult_per_step = 0.0;

  /// P(pcrb <= x)
  double pcrb_cdf(double x) const;
  /// P(gain > x)
  double gain_ccdf(double x) const;

  bool operator==(const AlgorithmSummary&) const = default;
};

struct ExperimentSummary {
  std::map<Algorithm, AlgorithmSummary> algorithms;
  bool operator==(const ExperimentSummary&) const = default;
};

ExperimentSummary aggregate(std::span<const StepRecord> records, const AggregateOptions& opts);

/// Column order: trajectory_id,k,algorithm,pcrb,pcrb_pred,E_1..E_N,total_energy,
/// energy_gain_pct,mult_count. Doubles are written in shortest round-trip form.
void write_records_csv(std::span<const StepRecord> records, std::size_t n_links,
                       std::ostream& out);
std::vector<StepRecord> read_records_csv(std::istream& in);

struct RunMetadata {
  double e_init = 0.0;
  RunDiagnostics diagnostics;
  std::vector<std::pair<double, double>> calibration;  // empty when E_INIT was given
};

/// Writes records.csv and summary.json under dir. Throws std::runtime_error with the
/// offending path on I/O failure.
void emit(const ExperimentConfig& cfg, const RunMetadata& meta, const ExperimentSummary& summary,
          std::span<const StepRecord> records, const std::filesystem::path& dir);

/// Version stamp written into summaries.
std::string_view code_version();

}  // namespace toaopt
