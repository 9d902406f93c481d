#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "toaopt/pcrb.hpp"

namespace toaopt {

enum class Algorithm { none, jte, ssw, ssw_benchmark };
enum class LinkDirection { downlink, uplink };
enum class AllocMode { energy, latency };
/// Zeroth-order term the first-order model is expanded around.
enum class Reference { posterior, prior };
enum class GainUpdate { incremental, exact };

std::string_view to_string(Algorithm a);
std::string_view to_string(LinkDirection d);
std::string_view to_string(AllocMode m);
std::string_view to_string(Reference r);
std::string_view to_string(GainUpdate g);
Algorithm parse_algorithm(std::string_view s);
LinkDirection parse_direction(std::string_view s);
AllocMode parse_mode(std::string_view s);
Reference parse_reference(std::string_view s);
GainUpdate parse_gain_update(std::string_view s);

struct OptimizerParams {
  double pcrb_target = 1.0;   // m^2
  double e_min = 0.0;
  double e_max = 256.0;
  double de_max = 5.0;        // JTE per-anchor change cap per step
  double dpcrb_thr = 0.05;    // JTE activation threshold, m^2
  double e_ssw_step = 5.0;
  int m_ssw = 10;
  Reference reference = Reference::posterior;
  LinkDirection direction = LinkDirection::downlink;
  AllocMode mode = AllocMode::energy;
  bool revive_muted = true;

  /// SSW per-anchor window, m * E_SSW_STEP.
  double ssw_window() const { return m_ssw * e_ssw_step; }
  void validate() const;
};

struct AllocDecision {
  Eigen::VectorXd dE;              // per link
  double predicted_dpcrb = 0.0;    // change of PCRB w.r.t. the reference value
  std::uint64_t mult_count = 0;    // scalar multiplications (and divisions) spent deciding
  bool feasible = true;            // SSW: a combination met the target
  std::int64_t combination = -1;   // SSW: selected index in enumeration order
  std::optional<UpdateResult> exact_update;  // SSW-benchmark: update already computed
  AllocMode mode = AllocMode::energy;        // latency: resulting energies are whole symbols

  bool is_noop() const { return dE.size() == 0 || dE.isZero(0.0); }
};

/// PCRB value the allocation is expanded around: the posterior trace at the current
/// energies (default) or the prior trace.
double reference_pcrb(const TrackState& track, const OptimizerParams& params);

/// q_j for every link at the current energies. Muted links that still have LoS get
/// the E_j -> 0+ limit when revive_muted is set, 0 otherwise.
Eigen::VectorXd track_sensitivity(const TrackState& track, bool revive_muted);

/// Greedy ordered allocation (JTE): reduce from the least sensitive anchors first or add
/// to the most sensitive ones first, per-anchor change capped at de_max.
AllocDecision jte_step(const TrackState& track, const OptimizerParams& params,
                       const Eigen::VectorXd& q);

/// Window search (SSW) over E_SSW_STEP * {-m..m} per control scored with the first-order
/// model; min total change among combinations meeting the target, otherwise min PCRB.
/// Ties go to the lowest index in enumeration order (control 1 varies fastest).
AllocDecision ssw_step(const TrackState& track, const OptimizerParams& params,
                       const Eigen::VectorXd& q);

/// Same search with the exact covariance update for every combination.
AllocDecision ssw_benchmark_step(const TrackState& track, const OptimizerParams& params);

/// (2m + 1)^n
std::uint64_t ssw_combination_count(int m, int n_controls);

/// New track state after the decision. Incremental mode applies K + dK (first-order
/// gain change) and P = (I - (K + dK) H) P_prior; exact mode recomputes the update from
/// the new R. A benchmark decision carries its exact update and always uses it.
/// An incremental result that is not a valid covariance falls back to the exact update.
TrackState apply_decision(const TrackState& track, const AllocDecision& decision,
                          GainUpdate mode);

struct LatencyMap {
  std::vector<int> symbols;  // M_j = ceil(E_j); 0 mutes the anchor
  double t_lat = 0.0;        // T_S * sum M_j
};

LatencyMap latency_map(const Eigen::VectorXd& energies, double symbol_period);

}  // namespace toaopt
