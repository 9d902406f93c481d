#include "toaopt/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "toaopt/errors.hpp"

namespace toaopt {

namespace {

using nlohmann::json;

void reject_unknown(const json& section, std::string_view name, const std::set<std::string>& known) {
  if (!section.is_object()) throw ConfigError(std::string(name) + ": expected an object");
  for (const auto& [key, _] : section.items()) {
    if (!known.contains(key)) throw ConfigError(std::string(name) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& section, std::string_view sec, const char* key, T& out) {
  if (!section.contains(key)) return;
  try {
    out = section.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(sec) + "." + key + ": " + e.what());
  }
}

std::string read_string(const json& section, std::string_view sec, const char* key) {
  std::string s;
  read(section, sec, key, s);
  return s;
}

FadingMode parse_fading_mode(std::string_view s) {
  if (s == "per-step") return FadingMode::per_step;
  if (s == "per-trajectory") return FadingMode::per_trajectory;
  throw ConfigError("scenario.fading_mode: expected 'per-step' or 'per-trajectory', got '" +
                    std::string(s) + "'");
}

std::string_view fading_mode_name(FadingMode m) {
  return m == FadingMode::per_step ? "per-step" : "per-trajectory";
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j, "config", {"scenario", "layout", "optimizer", "experiment"});
  ExperimentConfig cfg;

  if (j.contains("scenario")) {
    const json& s = j.at("scenario");
    reject_unknown(s, "scenario",
                   {"area_side", "bandwidth", "snr_ref_db", "ref_distance", "pathloss_alpha",
                    "pathloss_beta", "pathloss_d0", "rice_factor_db", "fading_mode", "chi", "t_est",
                    "n_steps", "sigma_w", "speed_of_light"});
    Scenario& sc = cfg.scenario;
    read(s, "scenario", "area_side", sc.area_side);
    read(s, "scenario", "bandwidth", sc.bandwidth);
    read(s, "scenario", "snr_ref_db", sc.snr_ref_db);
    read(s, "scenario", "ref_distance", sc.ref_distance);
    read(s, "scenario", "pathloss_alpha", sc.pathloss_alpha);
    read(s, "scenario", "pathloss_beta", sc.pathloss_beta);
    read(s, "scenario", "pathloss_d0", sc.pathloss_d0);
    if (s.contains("rice_factor_db")) {
      const json& k = s.at("rice_factor_db");
      if (k.is_null() || (k.is_string() && k.get<std::string>() == "none")) {
        sc.rice_factor_db.reset();
      } else if (k.is_number()) {
        sc.rice_factor_db = k.get<double>();
      } else {
        throw ConfigError("scenario.rice_factor_db: expected a number or \"none\"");
      }
    }
    if (s.contains("fading_mode")) sc.fading_mode = parse_fading_mode(read_string(s, "scenario", "fading_mode"));
    read(s, "scenario", "chi", sc.chi);
    read(s, "scenario", "t_est", sc.t_est);
    read(s, "scenario", "n_steps", sc.n_steps);
    read(s, "scenario", "sigma_w", sc.sigma_w);
    read(s, "scenario", "speed_of_light", sc.speed_of_light);
  }

  if (j.contains("layout")) {
    const json& l = j.at("layout");
    reject_unknown(l, "layout", {"n_anchors", "seed", "redraw_per_trajectory", "anchors"});
    read(l, "layout", "n_anchors", cfg.layout.n_anchors);
    if (l.contains("seed") && !l.at("seed").is_null()) {
      std::uint64_t seed = 0;
      read(l, "layout", "seed", seed);
      cfg.layout.seed = seed;
    }
    read(l, "layout", "redraw_per_trajectory", cfg.layout.redraw_per_trajectory);
    if (l.contains("anchors")) {
      const json& a = l.at("anchors");
      if (!a.is_array()) throw ConfigError("layout.anchors: expected an array of [x, y] pairs");
      int id = 1;
      for (const auto& p : a) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
          throw ConfigError("layout.anchors: expected an array of [x, y] pairs");
        }
        cfg.layout.fixed.push_back(AnchorPos{id++, p[0].get<double>(), p[1].get<double>()});
      }
      if (!cfg.layout.fixed.empty()) cfg.layout.n_anchors = static_cast<int>(cfg.layout.fixed.size());
    }
  }

  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    reject_unknown(o, "optimizer",
                   {"algorithm", "pcrb_target", "e_min", "e_max_factor", "de_max", "dpcrb_thr",
                    "e_ssw_step", "m_ssw", "reference", "link", "mode", "revive_muted", "gain_update"});
    OptimizerParams& p = cfg.optimizer;
    if (o.contains("algorithm")) cfg.algorithm = parse_algorithm(read_string(o, "optimizer", "algorithm"));
    read(o, "optimizer", "pcrb_target", p.pcrb_target);
    read(o, "optimizer", "e_min", p.e_min);
    read(o, "optimizer", "e_max_factor", cfg.e_max_factor);
    read(o, "optimizer", "de_max", p.de_max);
    read(o, "optimizer", "dpcrb_thr", p.dpcrb_thr);
    read(o, "optimizer", "e_ssw_step", p.e_ssw_step);
    read(o, "optimizer", "m_ssw", p.m_ssw);
    if (o.contains("reference")) p.reference = parse_reference(read_string(o, "optimizer", "reference"));
    if (o.contains("link")) p.direction = parse_direction(read_string(o, "optimizer", "link"));
    if (o.contains("mode")) p.mode = parse_mode(read_string(o, "optimizer", "mode"));
    read(o, "optimizer", "revive_muted", p.revive_muted);
    if (o.contains("gain_update")) {
      cfg.gain_update = parse_gain_update(read_string(o, "optimizer", "gain_update"));
    }
  }

  if (j.contains("experiment")) {
    const json& e = j.at("experiment");
    reject_unknown(e, "experiment",
                   {"n_trajectories", "seed", "e_init", "target_outage", "calibration_max",
                    "convergence_step", "include_pre_convergence", "symbol_period", "p0_position_var",
                    "threads", "h_eval"});
    read(e, "experiment", "n_trajectories", cfg.n_trajectories);
    read(e, "experiment", "seed", cfg.seed);
    read(e, "experiment", "e_init", cfg.e_init);
    read(e, "experiment", "target_outage", cfg.target_outage);
    read(e, "experiment", "calibration_max", cfg.calibration_max);
    read(e, "experiment", "convergence_step", cfg.convergence_step);
    read(e, "experiment", "include_pre_convergence", cfg.include_pre_convergence);
    read(e, "experiment", "symbol_period", cfg.symbol_period);
    read(e, "experiment", "p0_position_var", cfg.p0_position_var);
    read(e, "experiment", "threads", cfg.threads);
    if (e.contains("h_eval")) cfg.h_eval = parse_h_eval(read_string(e, "experiment", "h_eval"));
  }

  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  const Scenario& sc = cfg.scenario;
  const OptimizerParams& p = cfg.optimizer;
  json j;
  j["scenario"] = {{"area_side", sc.area_side},
                   {"bandwidth", sc.bandwidth},
                   {"snr_ref_db", sc.snr_ref_db},
                   {"ref_distance", sc.ref_distance},
                   {"pathloss_alpha", sc.pathloss_alpha},
                   {"pathloss_beta", sc.pathloss_beta},
                   {"pathloss_d0", sc.pathloss_d0},
                   {"rice_factor_db", sc.rice_factor_db ? json(*sc.rice_factor_db) : json("none")},
                   {"fading_mode", fading_mode_name(sc.fading_mode)},
                   {"chi", sc.chi},
                   {"t_est", sc.t_est},
                   {"n_steps", sc.n_steps},
                   {"sigma_w", sc.sigma_w},
                   {"speed_of_light", sc.speed_of_light}};
  json layout = {{"n_anchors", cfg.layout.n_anchors},
                 {"redraw_per_trajectory", cfg.layout.redraw_per_trajectory}};
  if (cfg.layout.seed) layout["seed"] = *cfg.layout.seed;
  if (!cfg.layout.fixed.empty()) {
    layout["anchors"] = json::array();
    for (const auto& a : cfg.layout.fixed) layout["anchors"].push_back({a.x, a.y});
  }
  j["layout"] = std::move(layout);
  j["optimizer"] = {{"algorithm", to_string(cfg.algorithm)},
                    {"pcrb_target", p.pcrb_target},
                    {"e_min", p.e_min},
                    {"e_max_factor", cfg.e_max_factor},
                    {"de_max", p.de_max},
                    {"dpcrb_thr", p.dpcrb_thr},
                    {"e_ssw_step", p.e_ssw_step},
                    {"m_ssw", p.m_ssw},
                    {"reference", to_string(p.reference)},
                    {"link", to_string(p.direction)},
                    {"mode", to_string(p.mode)},
                    {"revive_muted", p.revive_muted},
                    {"gain_update", to_string(cfg.gain_update)}};
  j["experiment"] = {{"n_trajectories", cfg.n_trajectories},
                     {"seed", cfg.seed},
                     {"e_init", cfg.e_init},
                     {"target_outage", cfg.target_outage},
                     {"calibration_max", cfg.calibration_max},
                     {"convergence_step", cfg.convergence_step},
                     {"include_pre_convergence", cfg.include_pre_convergence},
                     {"symbol_period", cfg.symbol_period},
                     {"p0_position_var", cfg.p0_position_var},
                     {"threads", cfg.threads},
                     {"h_eval", to_string(cfg.h_eval)}};
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

nlohmann::json summary_to_json(const ExperimentSummary& summary) {
  auto percentiles = [](const std::vector<double>& sorted) {
    json q = json::array();
    if (sorted.empty()) return q;
    for (int i = 0; i <= 100; ++i) {
      const double pos = i / 100.0 * static_cast<double>(sorted.size() - 1);
      q.push_back(sorted[static_cast<std::size_t>(std::llround(pos))]);
    }
    return q;
  };
  json out = json::object();
  for (const auto& [alg, s] : summary.algorithms) {
    out[std::string(to_string(alg))] = {{"n_records", s.n_records},
                                        {"n_trajectories", s.n_trajectories},
                                        {"outage_rate", s.outage_rate},
                                        {"mean_gain_pct", s.mean_gain},
                                        {"frac_gain_above_50", s.frac_gain_above_50},
                                        {"mean_total_energy", s.mean_total_energy},
                                        {"total_mult_count", s.total_mult_count},
                                        {"mean_mult_per_step", s.mean_mult_per_step},
                                        {"pcrb_percentiles", percentiles(s.pcrb_sorted)},
                                        {"gain_percentiles", percentiles(s.gain_sorted)},
                                        {"mean_gain_by_step", s.mean_gain_by_step}};
  }
  return out;
}

}  // namespace toaopt
