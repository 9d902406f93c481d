#include "toaopt/optimizers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "toaopt/errors.hpp"
#include "toaopt/sensitivity.hpp"

namespace toaopt {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<std::string_view, E>, N>& table,
             std::string_view what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw ConfigError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

constexpr std::array<std::pair<std::string_view, Algorithm>, 4> kAlgorithms{{
    {"none", Algorithm::none},
    {"jte", Algorithm::jte},
    {"ssw", Algorithm::ssw},
    {"ssw-benchmark", Algorithm::ssw_benchmark},
}};
constexpr std::array<std::pair<std::string_view, LinkDirection>, 2> kDirections{{
    {"downlink", LinkDirection::downlink},
    {"uplink", LinkDirection::uplink},
}};
constexpr std::array<std::pair<std::string_view, AllocMode>, 2> kModes{{
    {"energy", AllocMode::energy},
    {"latency", AllocMode::latency},
}};
constexpr std::array<std::pair<std::string_view, Reference>, 2> kReferences{{
    {"posterior", Reference::posterior},
    {"prior", Reference::prior},
}};
constexpr std::array<std::pair<std::string_view, GainUpdate>, 2> kGainUpdates{{
    {"incremental", GainUpdate::incremental},
    {"exact", GainUpdate::exact},
}};

template <typename E, std::size_t N>
std::string_view name_of(E v, const std::array<std::pair<std::string_view, E>, N>& table) {
  for (const auto& [name, value] : table) {
    if (value == v) return name;
  }
  return "?";
}

// Decision variables: one per link (downlink) or a single shared energy (uplink).
struct Controls {
  Eigen::VectorXd energy;
  Eigen::VectorXd q;
  std::vector<bool> usable;  // at least one link with line of sight behind it

  Eigen::Index size() const { return energy.size(); }
};

Controls make_controls(const TrackState& track, const OptimizerParams& params,
                       const Eigen::VectorXd& q) {
  Controls c;
  const Eigen::Index n = track.energies.size();
  if (params.direction == LinkDirection::downlink) {
    c.energy = track.energies;
    c.q = q;
    c.usable.resize(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
      c.usable[static_cast<std::size_t>(j)] = std::isfinite(track.crb_unit(j));
    }
  } else {
    c.energy = Eigen::VectorXd::Constant(1, n > 0 ? track.energies(0) : 0.0);
    c.q = Eigen::VectorXd::Constant(1, q.sum());
    bool any = false;
    for (Eigen::Index j = 0; j < n; ++j) any = any || std::isfinite(track.crb_unit(j));
    c.usable = {any};
  }
  return c;
}

Eigen::VectorXd expand(const Eigen::VectorXd& d_ctrl, const OptimizerParams& params,
                       Eigen::Index n_links) {
  if (params.direction == LinkDirection::downlink) return d_ctrl;
  return Eigen::VectorXd::Constant(n_links, d_ctrl(0));
}

// Energies after a change, with round-off that crosses a bound snapped onto it.
Eigen::VectorXd apply_delta(const Eigen::VectorXd& e, const Eigen::VectorXd& de, AllocMode mode) {
  Eigen::VectorXd out = e + de;
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    if (std::abs(out(j)) < 1e-9 * std::max(1.0, std::abs(e(j)))) out(j) = 0.0;
    if (mode == AllocMode::latency) out(j) = std::round(out(j));
  }
  return out;
}

struct Odometer {
  std::vector<int> idx;
  int m;

  Odometer(Eigen::Index n, int m_) : idx(static_cast<std::size_t>(n), -m_), m(m_) {}

  // Control 0 varies fastest.
  void next() {
    for (auto& v : idx) {
      if (v < m) {
        ++v;
        return;
      }
      v = -m;
    }
  }
};

// Exact position trace of the posterior for one energy vector, on fixed-size storage.
// Literal S_i -> K_i -> P_i sequence; multiplications are tallied into `mults`.
class SmallExactUpdate {
public:
  static constexpr int kMaxLinks = 8;

  SmallExactUpdate(const CovMatrix& p_prior, const Eigen::MatrixXd& H)
      : p_(p_prior), n_(static_cast<int>(H.rows())) {
    if (n_ > kMaxLinks) {
      throw ConfigError("ssw-benchmark supports at most " + std::to_string(kMaxLinks) + " links");
    }
    const Eigen::MatrixXd pht = p_prior * H.transpose();
    const Eigen::MatrixXd hpht = H * pht;
    for (int i = 0; i < n_; ++i) {
      for (int r = 0; r < kStateDim; ++r) pht_[r][i] = pht(r, i);
      for (int j = 0; j < n_; ++j) hpht_[i][j] = hpht(i, j);
    }
  }

  // Returns NaN when S_i is numerically singular.
  double pcrb(const double* r_diag, std::uint64_t& mults) {
    int act[kMaxLinks];
    int na = 0;
    for (int j = 0; j < n_; ++j) {
      if (std::isfinite(r_diag[j])) act[na++] = j;
    }
    if (na == 0) return p_(0, 0) + p_(1, 1);

    // (a) S_i
    double L[kMaxLinks][kMaxLinks];
    for (int a = 0; a < na; ++a) {
      for (int b = 0; b <= a; ++b) L[a][b] = hpht_[act[a]][act[b]];
      L[a][a] += r_diag[act[a]];
    }
    // Cholesky in place (lower). A pivot that lost nearly all of its diagonal entry
    // marks S_i as singular; the test is invariant to per-link scaling.
    for (int j = 0; j < na; ++j) {
      const double diag = L[j][j];
      double s = diag;
      for (int k = 0; k < j; ++k) s -= L[j][k] * L[j][k];
      mults += static_cast<std::uint64_t>(j);
      if (!(s > 1e-12 * diag)) return std::numeric_limits<double>::quiet_NaN();
      const double d = std::sqrt(s);
      L[j][j] = d;
      for (int i = j + 1; i < na; ++i) {
        double t = L[i][j];
        for (int k = 0; k < j; ++k) t -= L[i][k] * L[j][k];
        L[i][j] = t / d;
      }
      mults += static_cast<std::uint64_t>((na - j - 1) * (j + 1));
    }

    // (b) K_i = P H^T S_i^-1, one row of K per state component
    double K[kStateDim][kMaxLinks];
    for (int r = 0; r < kStateDim; ++r) {
      double y[kMaxLinks];
      for (int a = 0; a < na; ++a) {
        double t = pht_[r][act[a]];
        for (int k = 0; k < a; ++k) t -= L[a][k] * y[k];
        y[a] = t / L[a][a];
      }
      for (int a = na - 1; a >= 0; --a) {
        double t = y[a];
        for (int k = a + 1; k < na; ++k) t -= L[k][a] * K[r][k];
        K[r][a] = t / L[a][a];
      }
      mults += static_cast<std::uint64_t>(na * (na + 1));
    }

    // (c) P_i = P - K_i (H P)
    for (int r = 0; r < kStateDim; ++r) {
      for (int c = 0; c < kStateDim; ++c) {
        double t = p_(r, c);
        for (int a = 0; a < na; ++a) t -= K[r][a] * pht_[c][act[a]];
        post_[r][c] = t;
      }
    }
    mults += static_cast<std::uint64_t>(kStateDim * kStateDim * na);

    // (d)
    return post_[0][0] + post_[1][1];
  }

private:
  CovMatrix p_;
  int n_;
  double pht_[kStateDim][kMaxLinks]{};
  double hpht_[kMaxLinks][kMaxLinks]{};
  double post_[kStateDim][kStateDim]{};
};

}  // namespace

std::string_view to_string(Algorithm a) { return name_of(a, kAlgorithms); }
std::string_view to_string(LinkDirection d) { return name_of(d, kDirections); }
std::string_view to_string(AllocMode m) { return name_of(m, kModes); }
std::string_view to_string(Reference r) { return name_of(r, kReferences); }
std::string_view to_string(GainUpdate g) { return name_of(g, kGainUpdates); }
Algorithm parse_algorithm(std::string_view s) { return parse_enum(s, kAlgorithms, "algorithm"); }
LinkDirection parse_direction(std::string_view s) { return parse_enum(s, kDirections, "link direction"); }
AllocMode parse_mode(std::string_view s) { return parse_enum(s, kModes, "mode"); }
Reference parse_reference(std::string_view s) { return parse_enum(s, kReferences, "reference"); }
GainUpdate parse_gain_update(std::string_view s) { return parse_enum(s, kGainUpdates, "gain update"); }

void OptimizerParams::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("optimizer: " + msg); };
  if (!(pcrb_target > 0.0)) fail("pcrb_target must be > 0");
  if (!(e_min >= 0.0)) fail("e_min must be >= 0");
  if (!(e_max > e_min)) fail("e_max must exceed e_min");
  if (!(de_max > 0.0)) fail("de_max must be > 0");
  if (!(dpcrb_thr >= 0.0)) fail("dpcrb_thr must be >= 0");
  if (!(e_ssw_step > 0.0)) fail("e_ssw_step must be > 0");
  if (m_ssw < 1) fail("m_ssw must be >= 1");
  if (mode == AllocMode::latency && e_ssw_step != std::round(e_ssw_step)) {
    fail("latency mode needs an integer e_ssw_step (whole symbols)");
  }
}

double reference_pcrb(const TrackState& track, const OptimizerParams& params) {
  return params.reference == Reference::posterior ? track.pcrb : track.pcrb_pred;
}

Eigen::VectorXd track_sensitivity(const TrackState& track, bool revive_muted) {
  Eigen::VectorXd q = q_vector(track.meas.K, track.meas.r_diag, track.energies);
  if (revive_muted) {
    for (Eigen::Index j = 0; j < q.size(); ++j) {
      if (track.energies(j) <= 0.0 && std::isfinite(track.crb_unit(j))) {
        q(j) = muted_link_sensitivity(track.p_post, track.meas.H.row(j), track.crb_unit(j));
      }
    }
  }
  return q;
}

AllocDecision jte_step(const TrackState& track, const OptimizerParams& params,
                       const Eigen::VectorXd& q) {
  const Eigen::Index n_links = track.energies.size();
  AllocDecision d;
  d.mode = params.mode;
  d.dE = Eigen::VectorXd::Zero(n_links);

  const double diff = reference_pcrb(track, params) - params.pcrb_target;
  if (std::abs(diff) < params.dpcrb_thr || diff == 0.0) return d;

  const Controls c = make_controls(track, params, q);
  std::vector<Eigen::Index> order;
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    if (c.usable[static_cast<std::size_t>(j)]) order.push_back(j);
  }
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(c.q(a)) < std::abs(c.q(b));
  });

  const bool decrease = diff < 0.0;
  const bool latency = params.mode == AllocMode::latency;
  const auto n = order.size();
  Eigen::VectorXd d_ctrl = Eigen::VectorXd::Zero(c.size());
  double residual = std::abs(diff);
  double dpcrb = 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Index a = decrease ? order[i] : order[n - 1 - i];
    const double aq = std::abs(c.q(a));
    double step = 0.0;
    if (decrease) {
      step = params.de_max;
      if (aq > 0.0) {
        step = std::min(step, residual / aq);
        ++d.mult_count;
      }
      step = std::clamp(c.energy(a) - params.e_min, 0.0, step);
      if (latency) step = std::floor(step);
      d_ctrl(a) = -step;
    } else if (aq > 0.0) {
      step = std::min(params.de_max, residual / aq);
      ++d.mult_count;
      if (latency) step = std::ceil(step);
      step = std::clamp(params.e_max - c.energy(a), 0.0, step);
      d_ctrl(a) = step;
    }
    const double moved = step * aq;
    ++d.mult_count;
    residual -= moved;
    dpcrb += decrease ? moved : -moved;
    if (residual < params.dpcrb_thr) break;
  }

  d.dE = expand(d_ctrl, params, n_links);
  d.predicted_dpcrb = dpcrb;
  return d;
}

std::uint64_t ssw_combination_count(int m, int n_controls) {
  std::uint64_t n = 1;
  for (int i = 0; i < n_controls; ++i) n *= static_cast<std::uint64_t>(2 * m + 1);
  return n;
}

AllocDecision ssw_step(const TrackState& track, const OptimizerParams& params,
                       const Eigen::VectorXd& q) {
  const Eigen::Index n_links = track.energies.size();
  const Controls c = make_controls(track, params, q);
  const Eigen::Index nc = c.size();
  const double step = params.e_ssw_step;
  const double ref = reference_pcrb(track, params);
  const std::uint64_t n_comb = ssw_combination_count(params.m_ssw, static_cast<int>(nc));

  // Per-control admissible index range from the energy bounds.
  std::vector<int> lo(static_cast<std::size_t>(nc)), hi(static_cast<std::size_t>(nc));
  for (Eigen::Index a = 0; a < nc; ++a) {
    const auto s = static_cast<std::size_t>(a);
    lo[s] = -params.m_ssw;
    hi[s] = params.m_ssw;
    while (lo[s] < 0 && c.energy(a) + lo[s] * step < params.e_min - 1e-9) ++lo[s];
    while (hi[s] > 0 && c.energy(a) + hi[s] * step > params.e_max + 1e-9) --hi[s];
  }

  AllocDecision d;
  d.mode = params.mode;
  std::int64_t best = -1;
  long best_sum = std::numeric_limits<long>::max();
  double best_dp = 0.0;
  std::int64_t fallback = -1;
  double fallback_pcrb = std::numeric_limits<double>::infinity();
  double fallback_dp = 0.0;
  std::vector<int> best_idx, fallback_idx;

  Odometer odo(nc, params.m_ssw);
  for (std::uint64_t comb = 0; comb < n_comb; ++comb, odo.next()) {
    bool in_bounds = true;
    long sum = 0;
    for (Eigen::Index a = 0; a < nc; ++a) {
      const int v = odo.idx[static_cast<std::size_t>(a)];
      if (v < lo[static_cast<std::size_t>(a)] || v > hi[static_cast<std::size_t>(a)]) {
        in_bounds = false;
        break;
      }
      sum += v;
    }
    if (!in_bounds) continue;
    double dp = 0.0;
    for (Eigen::Index a = 0; a < nc; ++a) dp += c.q(a) * (odo.idx[static_cast<std::size_t>(a)] * step);
    d.mult_count += static_cast<std::uint64_t>(nc);
    const double pcrb_i = ref + dp;
    if (pcrb_i <= params.pcrb_target && sum < best_sum) {
      best_sum = sum;
      best = static_cast<std::int64_t>(comb);
      best_dp = dp;
      best_idx = odo.idx;
    }
    if (pcrb_i < fallback_pcrb) {
      fallback_pcrb = pcrb_i;
      fallback = static_cast<std::int64_t>(comb);
      fallback_dp = dp;
      fallback_idx = odo.idx;
    }
  }

  d.feasible = best >= 0;
  const std::vector<int>& chosen = d.feasible ? best_idx : fallback_idx;
  d.combination = d.feasible ? best : fallback;
  d.predicted_dpcrb = d.feasible ? best_dp : fallback_dp;
  Eigen::VectorXd d_ctrl = Eigen::VectorXd::Zero(nc);
  if (!chosen.empty()) {
    for (Eigen::Index a = 0; a < nc; ++a) d_ctrl(a) = chosen[static_cast<std::size_t>(a)] * step;
  }
  d.dE = expand(d_ctrl, params, n_links);
  return d;
}

AllocDecision ssw_benchmark_step(const TrackState& track, const OptimizerParams& params) {
  const Eigen::Index n_links = track.energies.size();
  const Controls c = make_controls(track, params, Eigen::VectorXd::Zero(n_links));
  const Eigen::Index nc = c.size();
  const double step = params.e_ssw_step;
  const std::uint64_t n_comb = ssw_combination_count(params.m_ssw, static_cast<int>(nc));

  std::vector<int> lo(static_cast<std::size_t>(nc)), hi(static_cast<std::size_t>(nc));
  for (Eigen::Index a = 0; a < nc; ++a) {
    const auto s = static_cast<std::size_t>(a);
    lo[s] = -params.m_ssw;
    hi[s] = params.m_ssw;
    while (lo[s] < 0 && c.energy(a) + lo[s] * step < params.e_min - 1e-9) ++lo[s];
    while (hi[s] > 0 && c.energy(a) + hi[s] * step > params.e_max + 1e-9) --hi[s];
  }

  SmallExactUpdate exact(track.p_prior, track.meas.H);
  const double base_exact = track.pcrb;
  double r[SmallExactUpdate::kMaxLinks];
  Eigen::VectorXd d_ctrl(nc);

  AllocDecision d;
  d.mode = params.mode;
  std::int64_t best = -1;
  long best_sum = std::numeric_limits<long>::max();
  double best_pcrb = 0.0;
  std::int64_t fallback = -1;
  double fallback_pcrb = std::numeric_limits<double>::infinity();
  std::vector<int> best_idx, fallback_idx;

  Odometer odo(nc, params.m_ssw);
  for (std::uint64_t comb = 0; comb < n_comb; ++comb, odo.next()) {
    bool in_bounds = true;
    long sum = 0;
    for (Eigen::Index a = 0; a < nc; ++a) {
      const int v = odo.idx[static_cast<std::size_t>(a)];
      if (v < lo[static_cast<std::size_t>(a)] || v > hi[static_cast<std::size_t>(a)]) {
        in_bounds = false;
        break;
      }
      sum += v;
    }
    if (!in_bounds) continue;
    for (Eigen::Index a = 0; a < nc; ++a) d_ctrl(a) = odo.idx[static_cast<std::size_t>(a)] * step;
    for (Eigen::Index j = 0; j < n_links; ++j) {
      const double e = c.energy(params.direction == LinkDirection::downlink ? j : 0) +
                       d_ctrl(params.direction == LinkDirection::downlink ? j : 0);
      r[j] = (e > 1e-12 && std::isfinite(track.crb_unit(j))) ? track.crb_unit(j) / e
                                                              : std::numeric_limits<double>::infinity();
    }
    const double pcrb_i = exact.pcrb(r, d.mult_count);
    if (std::isnan(pcrb_i)) continue;  // singular S_i: infeasible
    if (pcrb_i <= params.pcrb_target && sum < best_sum) {
      best_sum = sum;
      best = static_cast<std::int64_t>(comb);
      best_pcrb = pcrb_i;
      best_idx = odo.idx;
    }
    if (pcrb_i < fallback_pcrb) {
      fallback_pcrb = pcrb_i;
      fallback = static_cast<std::int64_t>(comb);
      fallback_idx = odo.idx;
    }
  }

  d.feasible = best >= 0;
  const std::vector<int>& chosen = d.feasible ? best_idx : fallback_idx;
  d.combination = d.feasible ? best : fallback;
  d_ctrl.setZero();
  if (!chosen.empty()) {
    for (Eigen::Index a = 0; a < nc; ++a) d_ctrl(a) = chosen[static_cast<std::size_t>(a)] * step;
  }
  d.dE = expand(d_ctrl, params, n_links);
  const double chosen_pcrb = chosen.empty() ? base_exact : (d.feasible ? best_pcrb : fallback_pcrb);
  d.predicted_dpcrb = chosen_pcrb - reference_pcrb(track, params);

  const Eigen::VectorXd e_new = apply_delta(track.energies, d.dE, params.mode);
  d.exact_update = update(track.p_prior, track.meas.H, r_from_energies(track.crb_unit, e_new));
  return d;
}

TrackState apply_decision(const TrackState& track, const AllocDecision& decision, GainUpdate mode) {
  TrackState out = track;
  if (decision.dE.size() == 0) return out;
  out.energies = apply_delta(track.energies, decision.dE, decision.mode);

  auto finish = [&out](UpdateResult up) {
    out.meas = std::move(up.meas);
    out.p_post = up.p_post;
    out.pcrb = pcrb_value(out.p_post);
  };

  if (decision.exact_update) {
    finish(*decision.exact_update);
    return out;
  }
  if (decision.is_noop()) return out;

  const Eigen::VectorXd r_new = r_from_energies(track.crb_unit, out.energies);
  if (mode == GainUpdate::exact) {
    finish(update(track.p_prior, track.meas.H, r_new));
    return out;
  }

  const MeasModel& m = track.meas;
  const auto n = static_cast<int>(m.n_links());
  Eigen::MatrixXd dS = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    if (m.active[static_cast<std::size_t>(j)] && decision.dE(j) != 0.0) {
      dS(j, j) = delta_S(j, n, m.r_diag(j), decision.dE(j), track.energies(j))(j, j);
    }
  }
  Eigen::MatrixXd K = m.K + delta_K(track.p_prior, m.H, m.S_inv, dS);
  CovMatrix p = track.p_prior - K * m.H * track.p_prior;

  // Links switched on from zero energy: first-order term of the information they add,
  // expanded around the current posterior.
  std::vector<bool> active = m.active;
  for (int j = 0; j < n; ++j) {
    const auto s = static_cast<std::size_t>(j);
    if (!m.active[s] && track.energies(j) <= 0.0 && decision.dE(j) > 0.0 &&
        std::isfinite(track.crb_unit(j))) {
      const Eigen::Vector4d g = track.p_post * m.H.row(j).transpose();
      const double w = decision.dE(j) / track.crb_unit(j);
      K.col(j) = w * g;
      p -= w * g * g.transpose();
      active[s] = true;
    }
    if (out.energies(j) <= 0.0) active[s] = false;
  }
  p = 0.5 * (p + p.transpose());

  if (!is_valid_covariance(p) || pcrb_value(p) < 0.0) {
    finish(update(track.p_prior, track.meas.H, r_new));
    out.incremental_fallback = true;
    return out;
  }

  out.meas.K = K;
  out.meas.S = m.S + dS;
  out.meas.r_diag = r_new;
  out.meas.active = active;
  out.p_post = p;
  out.pcrb = pcrb_value(p);
  return out;
}

LatencyMap latency_map(const Eigen::VectorXd& energies, double symbol_period) {
  LatencyMap out;
  out.symbols.reserve(static_cast<std::size_t>(energies.size()));
  long total = 0;
  for (Eigen::Index j = 0; j < energies.size(); ++j) {
    const double e = energies(j);
    const int mj = e <= 0.0 ? 0 : static_cast<int>(std::ceil(e - 1e-9 * std::max(1.0, e)));
    out.symbols.push_back(mj);
    total += mj;
  }
  out.t_lat = symbol_period * static_cast<double>(total);
  return out;
}

}  // namespace toaopt
