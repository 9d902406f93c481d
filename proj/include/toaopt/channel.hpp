#pragma once

#include <limits>
#include <optional>

#include "toaopt/rng.hpp"
#include "toaopt/scenario.hpp"

namespace toaopt {

inline constexpr double kInfiniteCrb = std::numeric_limits<double>::infinity();

/// Per-link channel state at one tracking step.
struct LinkGain {
  double gamma = 0.0;        // SNR per unit energy, fading and (1 - chi) included
  double fading_amp2 = 1.0;  // |LoS amplitude|^2 relative to the mean
  bool los_present = true;   // false: link muted regardless of energy
};

/// alpha + beta * log10(d / d0). Throws DomainError for d <= 0.
double pathloss_db(double d, const Scenario& sc);

/// SNR per unit energy for a link at distance d. Anchored so that E = 1 at
/// ref_distance without fading gives snr_ref_db.
double link_gamma(double d, double fading_amp2, const Scenario& sc);

LinkGain make_link_gain(double d, double fading_amp2, bool los_present, const Scenario& sc);

/// SNR = E * gamma(d, fading).
double link_snr(double energy, double d, double fading_amp2, const Scenario& sc);

/// ToA ranging bound c^2 / (8 pi^2 B^2 SNR), in m^2. Returns kInfiniteCrb for snr <= 0:
/// the link carries no information.
double crb_distance(double snr, const Scenario& sc);

/// CRB of a link at unit energy, so that CRB(E) = crb_unit / E. Infinite for muted links.
double crb_unit(const LinkGain& link, const Scenario& sc);

/// Squared magnitude of a unit-mean-power Rician gain. rice_factor_db = nullopt
/// (or +inf) is the pure LoS limit and returns exactly 1; -inf dB is Rayleigh.
double sample_rice_amp2(std::optional<double> rice_factor_db, Rng& rng);

}  // namespace toaopt
