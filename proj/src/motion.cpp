#include "toaopt/motion.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include "toaopt/rng.hpp"

namespace toaopt {

namespace {

// Mirror about the violated wall until inside; negate the velocity per bounce.
void reflect(double& pos, double& vel, double side) {
  while (pos < 0.0 || pos > side) {
    if (pos < 0.0) {
      pos = -pos;
    } else {
      pos = 2.0 * side - pos;
    }
    vel = -vel;
  }
}

}  // namespace

StateVec motion_step(const StateVec& s, double sigma_w, std::pair<double, double> noise,
                     double t_est, double area_side) {
  StateVec out = s;
  out.x = s.x + s.vx * t_est;
  out.y = s.y + s.vy * t_est;
  reflect(out.x, out.vx, area_side);
  reflect(out.y, out.vy, area_side);
  out.vx += sigma_w * noise.first;
  out.vy += sigma_w * noise.second;
  return out;
}

Trajectory generate_trajectory(const Scenario& sc, std::uint64_t seed) {
  Trajectory traj;
  traj.seed = seed;
  traj.states.reserve(static_cast<std::size_t>(sc.n_steps));
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  StateVec s{sc.area_side / 2.0, sc.area_side / 2.0, 0.0, 0.0};
  traj.states.push_back(s);
  for (int k = 1; k < sc.n_steps; ++k) {
    const double dx = normal(rng);
    const double dy = normal(rng);
    s = motion_step(s, sc.sigma_w, {dx, dy}, sc.t_est, sc.area_side);
    traj.states.push_back(s);
  }
  return traj;
}

double rms_velocity(std::span<const Trajectory> trajectories) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& t : trajectories) {
    for (const auto& s : t.states) {
      acc += s.vx * s.vx + s.vy * s.vy;
      ++n;
    }
  }
  return n == 0 ? 0.0 : std::sqrt(acc / static_cast<double>(n));
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  out << "step,x,y,vx,vy\n";
  const auto old_prec = out.precision(17);
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const auto& s = traj.states[k];
    out << k << ',' << s.x << ',' << s.y << ',' << s.vx << ',' << s.vy << '\n';
  }
  out.precision(old_prec);
}

}  // namespace toaopt
