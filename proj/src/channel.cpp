#include "toaopt/channel.hpp"

#include <cmath>
#include <numbers>

#include "toaopt/errors.hpp"

namespace toaopt {

double pathloss_db(double d, const Scenario& sc) {
  if (!(d > 0.0)) {
    throw DomainError("pathloss_db: distance must be > 0");
  }
  return sc.pathloss_alpha + sc.pathloss_beta * std::log10(d / sc.pathloss_d0);
}

double link_gamma(double d, double fading_amp2, const Scenario& sc) {
  const double rel_db = sc.snr_ref_db + pathloss_db(sc.ref_distance, sc) - pathloss_db(d, sc);
  return std::pow(10.0, rel_db / 10.0) * (1.0 - sc.chi) * fading_amp2;
}

LinkGain make_link_gain(double d, double fading_amp2, bool los_present, const Scenario& sc) {
  LinkGain g;
  g.fading_amp2 = fading_amp2;
  g.los_present = los_present;
  g.gamma = los_present ? link_gamma(d, fading_amp2, sc) : 0.0;
  return g;
}

double link_snr(double energy, double d, double fading_amp2, const Scenario& sc) {
  if (energy <= 0.0) {
    // still validate the geometry
    (void)pathloss_db(d, sc);
    return 0.0;
  }
  return energy * link_gamma(d, fading_amp2, sc);
}

double crb_distance(double snr, const Scenario& sc) {
  if (!(snr > 0.0)) return kInfiniteCrb;
  const double c = sc.speed_of_light;
  const double b = sc.bandwidth;
  return c * c / (8.0 * std::numbers::pi * std::numbers::pi * b * b * snr);
}

double crb_unit(const LinkGain& link, const Scenario& sc) {
  if (!link.los_present) return kInfiniteCrb;
  return crb_distance(link.gamma, sc);
}

double sample_rice_amp2(std::optional<double> rice_factor_db, Rng& rng) {
  if (!rice_factor_db || (std::isinf(*rice_factor_db) && *rice_factor_db > 0.0)) {
    return 1.0;
  }
  const double k = std::pow(10.0, *rice_factor_db / 10.0);  // 0 for -inf dB
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  const double los = std::sqrt(k / (k + 1.0));
  const double scatter = std::sqrt(1.0 / (k + 1.0));
  const double re = los + scatter * n(rng);
  const double im = scatter * n(rng);
  return re * re + im * im;
}

}  // namespace toaopt
