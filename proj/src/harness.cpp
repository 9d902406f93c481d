#include "toaopt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "toaopt/channel.hpp"
#include "toaopt/config.hpp"
#include "toaopt/errors.hpp"
#include "toaopt/motion.hpp"
#include "toaopt/pcrb.hpp"
#include "toaopt/rng.hpp"
#include "toaopt/sensitivity.hpp"

namespace toaopt {

namespace {

constexpr std::array<std::pair<std::string_view, HEval>, 2> kHEval{{
    {"true-state", HEval::true_state},
    {"ekf-predicted", HEval::ekf_predicted},
}};

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    // from_chars does not accept "inf"/"nan" spellings produced by to_chars on all platforms
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw std::runtime_error("records csv: bad number '" + std::string(s) + "'");
  }
  return v;
}

template <typename T>
T parse_integer(std::string_view s) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("records csv: bad integer '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double total_energy(const Eigen::VectorXd& e, LinkDirection dir) {
  if (e.size() == 0) return 0.0;
  return dir == LinkDirection::downlink ? e.sum() : e(0);
}

bool within_bounds(const Eigen::VectorXd& e, const OptimizerParams& p) {
  const double tol = 1e-9 * std::max(1.0, p.e_max);
  return (e.array() >= p.e_min - tol).all() && (e.array() <= p.e_max + tol).all();
}

}  // namespace

std::string_view to_string(HEval h) {
  for (const auto& [name, value] : kHEval) {
    if (value == h) return name;
  }
  return "?";
}

HEval parse_h_eval(std::string_view s) {
  for (const auto& [name, value] : kHEval) {
    if (name == s) return value;
  }
  throw ConfigError("unknown H evaluation mode '" + std::string(s) + "'");
}

std::string_view code_version() { return "toaopt 1.0.0"; }

RunDiagnostics& RunDiagnostics::operator+=(const RunDiagnostics& o) {
  invalid_covariance += o.invalid_covariance;
  bound_violations += o.bound_violations;
  skipped_updates += o.skipped_updates;
  incremental_fallbacks += o.incremental_fallbacks;
  infeasible_steps += o.infeasible_steps;
  return *this;
}

void ExperimentConfig::validate() const {
  Scenario sc = scenario;
  sc.anchors = resolve_anchors(*this, 0);
  sc.validate();
  OptimizerParams p = optimizer;
  p.e_max = std::max(e_max_factor, 1.0) * std::max(e_init, 1.0);
  p.validate();
  if (!(e_max_factor > 1.0)) throw ConfigError("optimizer: e_max_factor must be > 1");
  if (n_trajectories < 1) throw ConfigError("experiment: n_trajectories must be >= 1");
  if (!(target_outage > 0.0 && target_outage <= 1.0)) {
    throw ConfigError("experiment: target_outage must lie in (0, 1]");
  }
  if (!(calibration_max >= 1.0)) throw ConfigError("experiment: calibration_max must be >= 1");
  if (convergence_step < 0) throw ConfigError("experiment: convergence_step must be >= 0");
  if (!(symbol_period > 0.0)) throw ConfigError("experiment: symbol_period must be > 0");
  if (!(p0_position_var >= 0.0)) throw ConfigError("experiment: p0_position_var must be >= 0");
  if (algorithm == Algorithm::ssw_benchmark && layout.n_anchors > 8 && layout.fixed.empty()) {
    throw ConfigError("experiment: ssw-benchmark supports at most 8 anchors");
  }
}

std::vector<AnchorPos> resolve_anchors(const ExperimentConfig& cfg, int trajectory_id) {
  if (!cfg.layout.fixed.empty()) return cfg.layout.fixed;
  const std::uint64_t base = cfg.layout.seed ? *cfg.layout.seed : derive_seed(cfg.seed, Stream::anchors);
  const std::uint64_t seed =
      cfg.layout.redraw_per_trajectory
          ? derive_seed(base, Stream::anchors, static_cast<std::uint64_t>(trajectory_id) + 1)
          : base;
  return place_anchors_random(cfg.layout.n_anchors, cfg.scenario.area_side, seed);
}

OptimizerParams bound_params(const ExperimentConfig& cfg, double e_init) {
  OptimizerParams p = cfg.optimizer;
  p.e_max = cfg.e_max_factor * e_init;
  return p;
}

TrajectoryRun run_trajectory(const ExperimentConfig& cfg, int trajectory_id, double e_init) {
  if (!(e_init > 0.0)) throw ConfigError("run_trajectory: E_INIT must be > 0");
  Scenario sc = cfg.scenario;
  sc.anchors = resolve_anchors(cfg, trajectory_id);
  sc.validate();
  const OptimizerParams params = bound_params(cfg, e_init);
  const auto tid = static_cast<std::uint64_t>(trajectory_id);

  const Trajectory traj = generate_trajectory(sc, derive_seed(cfg.seed, Stream::motion, tid));
  Rng fading_rng = make_rng(cfg.seed, Stream::fading, tid);
  Rng meas_rng = make_rng(cfg.seed, Stream::measurement, tid);
  std::normal_distribution<double> normal(0.0, 1.0);
  const MotionModel model = build_motion_model(sc.t_est, sc.sigma_w);

  const auto n = static_cast<Eigen::Index>(sc.n_anchors());
  CovMatrix p_post = CovMatrix::Zero();
  p_post(0, 0) = p_post(1, 1) = cfg.p0_position_var;
  p_post(2, 2) = p_post(3, 3) = sc.sigma_w * sc.sigma_w;
  Eigen::VectorXd energies = Eigen::VectorXd::Constant(n, e_init);
  const double baseline_total = total_energy(energies, params.direction);

  Eigen::VectorXd amp2 = Eigen::VectorXd::Ones(n);
  auto draw_fading = [&] {
    for (Eigen::Index j = 0; j < n; ++j) amp2(j) = sample_rice_amp2(sc.rice_factor_db, fading_rng);
  };
  if (sc.fading_mode == FadingMode::per_trajectory) draw_fading();

  StateVec estimate = traj.states.front();

  TrajectoryRun run;
  run.records.reserve(traj.states.size());
  for (std::size_t step = 0; step < traj.states.size(); ++step) {
    const StateVec& truth = traj.states[step];
    if (sc.fading_mode == FadingMode::per_step) draw_fading();

    const CovMatrix p_prior = predict(p_post, model);
    Point2 eval = truth.position();
    if (cfg.h_eval == HEval::ekf_predicted) {
      eval = Point2{estimate.x + sc.t_est * estimate.vx, estimate.y + sc.t_est * estimate.vy};
    }
    const Eigen::MatrixXd H = jacobian_h(eval, sc.anchors);

    Eigen::VectorXd unit(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = distance(truth.position(), sc.anchors[static_cast<std::size_t>(j)]);
      unit(j) = crb_unit(make_link_gain(d, amp2(j), true, sc), sc);
    }
    TrackState track = make_track_state(static_cast<int>(step), p_prior, H, unit, energies);

    AllocDecision decision;
    switch (cfg.algorithm) {
      case Algorithm::none:
        break;
      case Algorithm::jte:
        decision = jte_step(track, params, track_sensitivity(track, params.revive_muted));
        break;
      case Algorithm::ssw:
        decision = ssw_step(track, params, track_sensitivity(track, params.revive_muted));
        break;
      case Algorithm::ssw_benchmark:
        decision = ssw_benchmark_step(track, params);
        break;
    }
    if (!decision.feasible) ++run.diagnostics.infeasible_steps;
    track = apply_decision(track, decision, cfg.gain_update);

    if (track.incremental_fallback) ++run.diagnostics.incremental_fallbacks;
    if (track.meas.skipped) ++run.diagnostics.skipped_updates;
    if (!is_valid_covariance(track.p_post)) ++run.diagnostics.invalid_covariance;
    if (cfg.algorithm != Algorithm::none && !within_bounds(track.energies, params)) {
      ++run.diagnostics.bound_violations;
    }

    if (cfg.h_eval == HEval::ekf_predicted) {
      const Eigen::Vector4d x_pred = model.F * Eigen::Vector4d(estimate.x, estimate.y, estimate.vx, estimate.vy);
      const Eigen::VectorXd h = measurement_h(Point2{x_pred(0), x_pred(1)}, sc.anchors);
      Eigen::VectorXd innovation = Eigen::VectorXd::Zero(n);
      for (Eigen::Index j = 0; j < n; ++j) {
        const double noise = normal(meas_rng);
        if (track.meas.active[static_cast<std::size_t>(j)]) {
          const double z = distance(truth.position(), sc.anchors[static_cast<std::size_t>(j)]) +
                           std::sqrt(track.meas.r_diag(j)) * noise;
          innovation(j) = z - h(j);
        }
      }
      const Eigen::Vector4d x_new = x_pred + track.meas.K * innovation;
      estimate = StateVec{x_new(0), x_new(1), x_new(2), x_new(3)};
      estimate.x = std::clamp(estimate.x, 0.0, sc.area_side);
      estimate.y = std::clamp(estimate.y, 0.0, sc.area_side);
    }

    StepRecord rec;
    rec.trajectory_id = trajectory_id;
    rec.k = track.k;
    rec.algorithm = cfg.algorithm;
    rec.pcrb = track.pcrb;
    rec.pcrb_pred = track.pcrb_pred;
    rec.energies.assign(track.energies.data(), track.energies.data() + n);
    rec.total_energy = total_energy(track.energies, params.direction);
    rec.energy_gain_pct = 100.0 * (baseline_total - rec.total_energy) / baseline_total;
    rec.mult_count = decision.mult_count;
    run.records.push_back(std::move(rec));

    p_post = track.p_post;
    energies = track.energies;
  }
  return run;
}

ExperimentRun run_experiment(const ExperimentConfig& cfg, double e_init) {
  const int n_traj = cfg.n_trajectories;
  std::vector<TrajectoryRun> runs(static_cast<std::size_t>(n_traj));
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const int t = next.fetch_add(1);
      if (t >= n_traj) return;
      try {
        runs[static_cast<std::size_t>(t)] = run_trajectory(cfg, t, e_init);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  unsigned n_threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                       : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(n_traj));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  ExperimentRun out;
  for (auto& r : runs) {
    out.diagnostics += r.diagnostics;
    out.records.insert(out.records.end(), std::make_move_iterator(r.records.begin()),
                       std::make_move_iterator(r.records.end()));
  }
  return out;
}

double baseline_outage(const ExperimentConfig& cfg, double e_init) {
  ExperimentConfig base = cfg;
  base.algorithm = Algorithm::none;
  const ExperimentRun run = run_experiment(base, e_init);
  std::size_t out = 0;
  for (const auto& r : run.records) out += r.pcrb > cfg.optimizer.pcrb_target ? 1 : 0;
  return run.records.empty() ? 0.0 : static_cast<double>(out) / static_cast<double>(run.records.size());
}

CalibrationResult calibrate_einit(const ExperimentConfig& cfg, int n_trajectories, double target_outage) {
  return calibrate_einit(std::span<const ExperimentConfig>(&cfg, 1), n_trajectories, target_outage);
}

CalibrationResult calibrate_einit(std::span<const ExperimentConfig> cfgs, int n_trajectories,
                                  double target_outage) {
  if (!(target_outage > 0.0 && target_outage <= 1.0)) {
    throw ConfigError("calibrate: target outage must lie in (0, 1]");
  }
  if (cfgs.empty()) throw ConfigError("calibrate: no configuration given");
  if (n_trajectories < 1) throw ConfigError("calibrate: n_trajectories must be >= 1");
  const ExperimentConfig& cfg = cfgs.front();
  CalibrationResult res;
  auto eval = [&](double e) {
    // pooled over all steps of all entries
    double outages = 0.0;
    double steps = 0.0;
    for (const auto& c : cfgs) {
      ExperimentConfig base = c;
      base.n_trajectories = n_trajectories;
      const double n = static_cast<double>(n_trajectories) * static_cast<double>(c.scenario.n_steps);
      outages += baseline_outage(base, e) * n;
      steps += n;
    }
    const double o = outages / steps;
    res.evaluated.emplace_back(e, o);
    return o;
  };

  double lo = 0.0;  // largest known failing energy
  double hi = 1.0;
  double hi_outage = eval(hi);
  while (hi_outage > target_outage) {
    lo = hi;
    hi *= 2.0;
    if (hi > cfg.calibration_max) {
      throw NumericalError("calibrate: outage target " + fmt_double(target_outage) +
                           " not reached up to energy " + fmt_double(cfg.calibration_max));
    }
    hi_outage = eval(hi);
  }
  while (hi - lo > 1.0) {
    const double mid = std::floor((lo + hi) / 2.0);
    const double o = eval(mid);
    if (o <= target_outage) {
      hi = mid;
      hi_outage = o;
    } else {
      lo = mid;
    }
  }
  res.e_init = hi;
  res.outage = hi_outage;
  return res;
}

double AlgorithmSummary::pcrb_cdf(double x) const {
  if (pcrb_sorted.empty()) return 0.0;
  const auto it = std::upper_bound(pcrb_sorted.begin(), pcrb_sorted.end(), x);
  return static_cast<double>(it - pcrb_sorted.begin()) / static_cast<double>(pcrb_sorted.size());
}

double AlgorithmSummary::gain_ccdf(double x) const {
  if (gain_sorted.empty()) return 0.0;
  const auto it = std::upper_bound(gain_sorted.begin(), gain_sorted.end(), x);
  return 1.0 - static_cast<double>(it - gain_sorted.begin()) / static_cast<double>(gain_sorted.size());
}

ExperimentSummary aggregate(std::span<const StepRecord> records, const AggregateOptions& opts) {
  ExperimentSummary summary;
  std::map<Algorithm, std::vector<const StepRecord*>> groups;
  for (const auto& r : records) groups[r.algorithm].push_back(&r);

  for (const auto& [alg, recs] : groups) {
    AlgorithmSummary s;
    s.n_records = recs.size();
    std::set<int> trajectories;
    std::vector<double> gain_sum;
    std::vector<std::size_t> gain_n;
    std::size_t outages = 0;
    double energy_sum = 0.0;
    for (const StepRecord* r : recs) {
      trajectories.insert(r->trajectory_id);
      s.pcrb_sorted.push_back(r->pcrb);
      if (r->pcrb > opts.pcrb_target) ++outages;
      if (opts.include_pre_convergence || r->k >= opts.convergence_step) {
        s.gain_sorted.push_back(r->energy_gain_pct);
      }
      const auto k = static_cast<std::size_t>(r->k);
      if (gain_sum.size() <= k) {
        gain_sum.resize(k + 1, 0.0);
        gain_n.resize(k + 1, 0);
      }
      gain_sum[k] += r->energy_gain_pct;
      ++gain_n[k];
      s.total_mult_count += r->mult_count;
      energy_sum += r->total_energy;
    }
    s.n_trajectories = trajectories.size();
    std::sort(s.pcrb_sorted.begin(), s.pcrb_sorted.end());
    std::sort(s.gain_sorted.begin(), s.gain_sorted.end());
    s.mean_gain_by_step.resize(gain_sum.size());
    for (std::size_t k = 0; k < gain_sum.size(); ++k) {
      s.mean_gain_by_step[k] = gain_n[k] ? gain_sum[k] / static_cast<double>(gain_n[k]) : 0.0;
    }
    const auto nr = static_cast<double>(s.n_records);
    s.outage_rate = static_cast<double>(outages) / nr;
    s.mean_total_energy = energy_sum / nr;
    s.mean_mult_per_step = static_cast<double>(s.total_mult_count) / nr;
    if (!s.gain_sorted.empty()) {
      double g = 0.0;
      std::size_t above = 0;
      for (double v : s.gain_sorted) {
        g += v;
        above += v > 50.0 ? 1 : 0;
      }
      s.mean_gain = g / static_cast<double>(s.gain_sorted.size());
      s.frac_gain_above_50 = static_cast<double>(above) / static_cast<double>(s.gain_sorted.size());
    }
    summary.algorithms.emplace(alg, std::move(s));
  }
  return summary;
}

void write_records_csv(std::span<const StepRecord> records, std::size_t n_links, std::ostream& out) {
  out << "trajectory_id,k,algorithm,pcrb,pcrb_pred";
  for (std::size_t j = 1; j <= n_links; ++j) out << ",E_" << j;
  out << ",total_energy,energy_gain_pct,mult_count\n";
  for (const auto& r : records) {
    if (r.energies.size() != n_links) {
      throw std::runtime_error("records csv: record has " + std::to_string(r.energies.size()) +
                               " energies, expected " + std::to_string(n_links));
    }
    out << r.trajectory_id << ',' << r.k << ',' << to_string(r.algorithm) << ',' << fmt_double(r.pcrb)
        << ',' << fmt_double(r.pcrb_pred);
    for (double e : r.energies) out << ',' << fmt_double(e);
    out << ',' << fmt_double(r.total_energy) << ',' << fmt_double(r.energy_gain_pct) << ','
        << r.mult_count << '\n';
  }
}

std::vector<StepRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("records csv: missing header");
  const auto header = split(line, ',');
  if (header.size() < 8 || header[0] != "trajectory_id" || header[1] != "k" || header[2] != "algorithm" ||
      header[3] != "pcrb" || header[4] != "pcrb_pred" || header[header.size() - 3] != "total_energy" ||
      header[header.size() - 2] != "energy_gain_pct" || header.back() != "mult_count") {
    throw std::runtime_error("records csv: unexpected header '" + line + "'");
  }
  const std::size_t n_links = header.size() - 8;
  for (std::size_t j = 0; j < n_links; ++j) {
    if (header[5 + j] != "E_" + std::to_string(j + 1)) {
      throw std::runtime_error("records csv: unexpected energy column '" + std::string(header[5 + j]) + "'");
    }
  }
  std::vector<StepRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != header.size()) {
      throw std::runtime_error("records csv: line " + std::to_string(line_no) + " has " +
                               std::to_string(f.size()) + " fields");
    }
    StepRecord r;
    r.trajectory_id = parse_integer<int>(f[0]);
    r.k = parse_integer<int>(f[1]);
    r.algorithm = parse_algorithm(f[2]);
    r.pcrb = parse_double(f[3]);
    r.pcrb_pred = parse_double(f[4]);
    for (std::size_t j = 0; j < n_links; ++j) r.energies.push_back(parse_double(f[5 + j]));
    r.total_energy = parse_double(f[5 + n_links]);
    r.energy_gain_pct = parse_double(f[6 + n_links]);
    r.mult_count = parse_integer<std::uint64_t>(f[7 + n_links]);
    out.push_back(std::move(r));
  }
  return out;
}

void emit(const ExperimentConfig& cfg, const RunMetadata& meta, const ExperimentSummary& summary,
          std::span<const StepRecord> records, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());

  const auto csv_path = dir / "records.csv";
  {
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot open " + csv_path.string() + " for writing");
    const std::size_t n_links = records.empty() ? static_cast<std::size_t>(cfg.layout.fixed.empty()
                                                                              ? cfg.layout.n_anchors
                                                                              : static_cast<int>(cfg.layout.fixed.size()))
                                                : records.front().energies.size();
    write_records_csv(records, n_links, csv);
    if (!csv) throw std::runtime_error("write failed: " + csv_path.string());
  }

  ExperimentConfig echo = cfg;
  echo.e_init = meta.e_init;
  nlohmann::json j;
  j["version"] = std::string(code_version());
  j["config"] = config_to_json(echo);
  j["seeds"] = {{"master", cfg.seed},
                {"anchors", cfg.layout.seed ? *cfg.layout.seed : derive_seed(cfg.seed, Stream::anchors)}};
  j["anchors"] = nlohmann::json::array();
  for (const auto& a : resolve_anchors(cfg, 0)) j["anchors"].push_back({a.id, a.x, a.y});
  j["e_init"] = meta.e_init;
  j["e_max"] = cfg.e_max_factor * meta.e_init;
  j["p0"] = {cfg.p0_position_var, cfg.p0_position_var, cfg.scenario.sigma_w * cfg.scenario.sigma_w,
             cfg.scenario.sigma_w * cfg.scenario.sigma_w};
  j["diagnostics"] = {{"invalid_covariance", meta.diagnostics.invalid_covariance},
                      {"bound_violations", meta.diagnostics.bound_violations},
                      {"skipped_updates", meta.diagnostics.skipped_updates},
                      {"incremental_fallbacks", meta.diagnostics.incremental_fallbacks},
                      {"infeasible_steps", meta.diagnostics.infeasible_steps}};
  if (!meta.calibration.empty()) {
    j["calibration"] = nlohmann::json::array();
    for (const auto& [e, o] : meta.calibration) j["calibration"].push_back({{"energy", e}, {"outage", o}});
  }
  nlohmann::json algs = summary_to_json(summary);
  if (cfg.optimizer.mode == AllocMode::latency) {
    for (const auto& [alg, stats] : summary.algorithms) {
      algs[std::string(to_string(alg))]["mean_latency_s"] = stats.mean_total_energy * cfg.symbol_period;
    }
  }
  j["summary"] = std::move(algs);

  const auto json_path = dir / "summary.json";
  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("cannot open " + json_path.string() + " for writing");
  js << j.dump(2) << '\n';
  if (!js) throw std::runtime_error("write failed: " + json_path.string());
}

}  // namespace toaopt
