#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "toaopt/scenario.hpp"

namespace toaopt {

struct StateVec {
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;

  Point2 position() const { return {x, y}; }
};

struct Trajectory {
  std::vector<StateVec> states;  // states[0] is the initial state at the area centre
  std::uint64_t seed = 0;
};

/// One step of the random walk on velocity: position advances with the previous
/// velocity (x_k = x_{k-1} + T v_{k-1}), then v_k = v_{k-1} + sigma_w * noise.
/// Boundary crossings are mirrored back inside with the velocity component negated.
StateVec motion_step(const StateVec& s, double sigma_w, std::pair<double, double> noise,
                     double t_est, double area_side);

Trajectory generate_trajectory(const Scenario& sc, std::uint64_t seed);

/// sqrt(mean of vx^2 + vy^2) over every state of every trajectory.
double rms_velocity(std::span<const Trajectory> trajectories);

/// CSV with header step,x,y,vx,vy.
void write_trajectory_csv(const Trajectory& traj, std::ostream& out);

}  // namespace toaopt
