#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace toaopt {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct AnchorPos {
  int id = 0;  // 1-based, contiguous
  double x = 0.0;
  double y = 0.0;
};

enum class FadingMode { per_step, per_trajectory };

/// Immutable world description: geometry, channel constants, motion statistics, timing.
/// Defaults are the reference scenario (420 m square, 10 MHz, 0 dB at 420 m, 40 + 30 log10 d).
struct Scenario {
  double area_side = 420.0;
  std::vector<AnchorPos> anchors;
  double bandwidth = 10.0e6;
  double snr_ref_db = 0.0;     // single-symbol SNR at ref_distance
  double ref_distance = 420.0;
  double pathloss_alpha = 40.0;
  double pathloss_beta = 30.0;
  double pathloss_d0 = 1.0;
  std::optional<double> rice_factor_db;  // nullopt: no multipath fading
  FadingMode fading_mode = FadingMode::per_step;
  double chi = 0.0;
  double t_est = 1.0;
  int n_steps = 532;
  double sigma_w = 0.025;
  double speed_of_light = 299792458.0;

  std::size_t n_anchors() const { return anchors.size(); }

  /// Throws ConfigError on violated invariants.
  void validate() const;

  /// Non-fatal geometry diagnostics (collinear or coincident anchors). Empty when clean.
  std::vector<std::string> layout_warnings() const;
};

double distance(Point2 p, const AnchorPos& anchor);
double distance(Point2 a, Point2 b);

/// n anchors i.i.d. uniform on [0, side]^2, ids 1..n. Deterministic in seed.
std::vector<AnchorPos> place_anchors_random(int n, double area_side, std::uint64_t seed);

}  // namespace toaopt
