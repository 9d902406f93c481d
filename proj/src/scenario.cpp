#include "toaopt/scenario.hpp"

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "toaopt/errors.hpp"

namespace toaopt {

double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

double distance(Point2 p, const AnchorPos& anchor) { return distance(p, Point2{anchor.x, anchor.y}); }

std::vector<AnchorPos> place_anchors_random(int n, double area_side, std::uint64_t seed) {
  if (n < 3) {
    throw ConfigError("at least 3 anchors are required for 2D positioning, got " + std::to_string(n));
  }
  if (!(area_side > 0.0)) {
    throw ConfigError("area_side must be positive");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(0.0, area_side);
  std::vector<AnchorPos> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double x = coord(rng);
    const double y = coord(rng);
    out.push_back({i + 1, x, y});
  }
  return out;
}

void Scenario::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("scenario: " + msg); };
  if (!(area_side > 0.0)) fail("area_side must be > 0");
  if (anchors.size() < 3) fail("at least 3 anchors required");
  if (!(bandwidth > 0.0)) fail("bandwidth must be > 0");
  if (!(t_est > 0.0)) fail("t_est must be > 0");
  if (!(chi >= 0.0 && chi < 1.0)) fail("chi must satisfy 0 <= chi < 1");
  if (!(ref_distance > 0.0)) fail("ref_distance must be > 0");
  if (!(pathloss_d0 > 0.0)) fail("pathloss_d0 must be > 0");
  if (n_steps < 1) fail("n_steps must be >= 1");
  if (!(sigma_w >= 0.0)) fail("sigma_w must be >= 0");
  if (!(speed_of_light > 0.0)) fail("speed_of_light must be > 0");
  if (rice_factor_db && std::isnan(*rice_factor_db)) fail("rice_factor_db is NaN");
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto& a = anchors[i];
    if (a.id != static_cast<int>(i) + 1) fail("anchor ids must be contiguous from 1");
    if (a.x < 0.0 || a.x > area_side || a.y < 0.0 || a.y > area_side) {
      fail("anchor " + std::to_string(a.id) + " lies outside the area");
    }
  }
}

std::vector<std::string> Scenario::layout_warnings() const {
  std::vector<std::string> out;
  const double tol = 1e-9 * area_side * area_side;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    for (std::size_t j = i + 1; j < anchors.size(); ++j) {
      if (distance(Point2{anchors[i].x, anchors[i].y}, Point2{anchors[j].x, anchors[j].y}) <
          1e-9 * area_side) {
        std::ostringstream os;
        os << "anchors " << anchors[i].id << " and " << anchors[j].id << " coincide";
        out.push_back(os.str());
      }
    }
  }
  if (anchors.size() >= 3) {
    bool collinear = true;
    const auto& a = anchors[0];
    for (std::size_t i = 1; i + 1 < anchors.size() && collinear; ++i) {
      for (std::size_t j = i + 1; j < anchors.size(); ++j) {
        const double cross = (anchors[i].x - a.x) * (anchors[j].y - a.y) -
                             (anchors[i].y - a.y) * (anchors[j].x - a.x);
        if (std::abs(cross) > tol) {
          collinear = false;
          break;
        }
      }
    }
    if (collinear) out.emplace_back("all anchors are collinear");
  }
  return out;
}

}  // namespace toaopt
