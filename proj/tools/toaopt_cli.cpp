// toaopt: calibrate, run and aggregate ToA tracking energy-allocation experiments.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "toaopt/config.hpp"
#include "toaopt/errors.hpp"
#include "toaopt/harness.hpp"

namespace {

using namespace toaopt;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> trajectories;
  std::optional<int> threads;
  std::optional<double> sigma_w;
  std::optional<double> rice_db;
  std::optional<int> n_anchors;
  std::optional<int> n_steps;
  std::vector<double> pool_sigma_w;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("-c,--config", o.config_path, "JSON scenario/experiment file")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "master seed");
  app->add_option("-n,--trajectories", o.trajectories, "number of trajectories")->check(CLI::PositiveNumber);
  app->add_option("--threads", o.threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  app->add_option("--sigma-w", o.sigma_w, "motion noise std, m/s");
  app->add_option("--rice-db", o.rice_db, "Rician K-factor in dB (omit for no multipath)");
  app->add_option("--anchors", o.n_anchors, "number of randomly placed anchors");
  app->add_option("--steps", o.n_steps, "steps per trajectory");
  app->add_option("--pool-sigma-w", o.pool_sigma_w,
                  "calibrate one E_INIT on the outage pooled over these sigma_w values")
      ->delimiter(',');
}

ExperimentConfig build_config(const CommonOptions& o) {
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.trajectories) cfg.n_trajectories = *o.trajectories;
  if (o.threads) cfg.threads = *o.threads;
  if (o.sigma_w) cfg.scenario.sigma_w = *o.sigma_w;
  if (o.rice_db) cfg.scenario.rice_factor_db = *o.rice_db;
  if (o.n_anchors) {
    cfg.layout.n_anchors = *o.n_anchors;
    cfg.layout.fixed.clear();
  }
  if (o.n_steps) cfg.scenario.n_steps = *o.n_steps;
  return cfg;
}

CalibrationResult calibrate(const ExperimentConfig& cfg, const CommonOptions& o) {
  if (o.pool_sigma_w.empty()) return calibrate_einit(cfg, cfg.n_trajectories, cfg.target_outage);
  std::vector<ExperimentConfig> pool;
  for (double s : o.pool_sigma_w) {
    ExperimentConfig c = cfg;
    c.scenario.sigma_w = s;
    c.validate();
    pool.push_back(std::move(c));
  }
  return calibrate_einit(pool, cfg.n_trajectories, cfg.target_outage);
}

void print_calibration(const CalibrationResult& cal) {
  for (const auto& [e, o] : cal.evaluated) std::cerr << "  E=" << e << "  outage=" << o << '\n';
  std::cerr << "E_INIT=" << cal.e_init << " (outage " << cal.outage << ")\n";
}

int run_calibrate(const CommonOptions& o, std::optional<double> target, const std::string& out) {
  ExperimentConfig cfg = build_config(o);
  if (target) cfg.target_outage = *target;
  cfg.validate();
  const CalibrationResult cal = calibrate(cfg, o);
  print_calibration(cal);
  nlohmann::json j;
  j["e_init"] = cal.e_init;
  j["outage"] = cal.outage;
  j["target_outage"] = cfg.target_outage;
  if (!o.pool_sigma_w.empty()) j["pooled_sigma_w"] = o.pool_sigma_w;
  j["evaluated"] = nlohmann::json::array();
  for (const auto& [e, oo] : cal.evaluated) j["evaluated"].push_back({{"energy", e}, {"outage", oo}});
  j["config"] = config_to_json(cfg);
  j["version"] = std::string(code_version());
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot open " + out + " for writing");
    f << j.dump(2) << '\n';
  }
  return 0;
}

struct RunOptions {
  std::string algorithm;
  std::string mode;
  std::string link;
  std::string gain_update;
  std::optional<double> e_init;
  std::string out = "out";
};

int run_run(const CommonOptions& o, const RunOptions& r) {
  ExperimentConfig cfg = build_config(o);
  if (!r.algorithm.empty()) cfg.algorithm = parse_algorithm(r.algorithm);
  if (!r.mode.empty()) cfg.optimizer.mode = parse_mode(r.mode);
  if (!r.link.empty()) cfg.optimizer.direction = parse_direction(r.link);
  if (!r.gain_update.empty()) cfg.gain_update = parse_gain_update(r.gain_update);
  if (r.e_init) cfg.e_init = *r.e_init;
  cfg.validate();

  RunMetadata meta;
  meta.e_init = cfg.e_init;
  if (!(meta.e_init > 0.0)) {
    const CalibrationResult cal = calibrate(cfg, o);
    print_calibration(cal);
    meta.e_init = cal.e_init;
    meta.calibration = cal.evaluated;
  }
  const ExperimentRun run = run_experiment(cfg, meta.e_init);
  meta.diagnostics = run.diagnostics;
  const ExperimentSummary summary =
      aggregate(run.records, {cfg.optimizer.pcrb_target, cfg.convergence_step, cfg.include_pre_convergence});
  emit(cfg, meta, summary, run.records, r.out);

  for (const auto& [alg, s] : summary.algorithms) {
    std::cerr << to_string(alg) << ": outage=" << s.outage_rate << " mean_gain=" << s.mean_gain
              << "% P(gain>50%)=" << s.frac_gain_above_50 << " mult/step=" << s.mean_mult_per_step << '\n';
  }
  const auto& d = run.diagnostics;
  if (d.invalid_covariance > 0 || d.bound_violations > 0) {
    std::cerr << "numerical failure: " << d.invalid_covariance << " invalid covariances, "
              << d.bound_violations << " bound violations\n";
    return 3;
  }
  return 0;
}

int run_aggregate(const std::vector<std::string>& inputs, const std::string& out, double target,
                  int convergence_step, bool include_pre) {
  std::vector<StepRecord> records;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    auto part = read_records_csv(in);
    records.insert(records.end(), part.begin(), part.end());
  }
  const ExperimentSummary summary = aggregate(records, {target, convergence_step, include_pre});
  const std::string text = summary_to_json(summary).dump(2);
  if (out.empty()) {
    std::cout << text << '\n';
  } else {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot open " + out + " for writing");
    f << text << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ToA tracking with PCRB-constrained anchor energy allocation"};
  app.require_subcommand(1);

  CommonOptions cal_opts;
  std::optional<double> cal_target;
  std::string cal_out;
  auto* cal = app.add_subcommand("calibrate", "find the uniform energy meeting the outage target");
  add_common(cal, cal_opts);
  cal->add_option("--target-outage", cal_target, "allowed fraction of steps above the PCRB target");
  cal->add_option("-o,--out", cal_out, "write the result JSON here instead of stdout");

  CommonOptions run_opts;
  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "run trajectories and write records.csv and summary.json");
  add_common(run_cmd, run_opts);
  run_cmd->add_option("-a,--algorithm", run.algorithm, "none | jte | ssw | ssw-benchmark");
  run_cmd->add_option("--mode", run.mode, "energy | latency");
  run_cmd->add_option("--link", run.link, "downlink | uplink");
  run_cmd->add_option("--gain-update", run.gain_update, "incremental | exact");
  run_cmd->add_option("--e-init", run.e_init, "initial per-anchor energy (calibrated when omitted)");
  run_cmd->add_option("-o,--out", run.out, "output directory")->capture_default_str();

  std::vector<std::string> agg_in;
  std::string agg_out;
  double agg_target = 1.0;
  int agg_conv = 10;
  bool agg_pre = false;
  auto* agg = app.add_subcommand("aggregate", "summarize one or more records.csv files");
  agg->add_option("-i,--in", agg_in, "records CSV files")->required()->check(CLI::ExistingFile);
  agg->add_option("-o,--out", agg_out, "write the summary JSON here instead of stdout");
  agg->add_option("--pcrb-target", agg_target, "outage threshold, m^2")->capture_default_str();
  agg->add_option("--convergence-step", agg_conv, "first step counted in gain statistics")->capture_default_str();
  agg->add_flag("--include-pre-convergence", agg_pre, "count every step in gain statistics");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cal->parsed()) return run_calibrate(cal_opts, cal_target, cal_out);
    if (run_cmd->parsed()) return run_run(run_opts, run);
    return run_aggregate(agg_in, agg_out, agg_target, agg_conv, agg_pre);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
