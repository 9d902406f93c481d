#pragma once

// Shared fixtures: random filter instances and the exact-recomputation PCRB oracle.

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "toaopt/channel.hpp"
#include "toaopt/pcrb.hpp"
#include "toaopt/scenario.hpp"

namespace toaopt::testing {

struct Instance {
  Scenario sc;
  Point2 target;
  CovMatrix p_prior;
  Eigen::MatrixXd H;
  Eigen::VectorXd crb_unit;
  Eigen::VectorXd energies;
};

// Random SPD prior with position variances of order 0.1..10 m^2.
inline CovMatrix random_prior(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> scale(-1.0, 1.0);
  Eigen::Matrix4d a;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) a(i, j) = n(rng);
  const Eigen::Vector4d s(std::pow(10.0, scale(rng)) , std::pow(10.0, scale(rng)), 0.3, 0.3);
  CovMatrix p = s.asDiagonal() * (a * a.transpose() + 0.1 * Eigen::Matrix4d::Identity()) * s.asDiagonal();
  return 0.5 * (p + p.transpose());
}

inline Instance random_instance(std::mt19937_64& rng, int n_anchors = 4) {
  std::uniform_real_distribution<double> pos(0.0, 420.0);
  std::uniform_real_distribution<double> log_e(0.0, std::log(256.0));
  Instance in;
  in.sc.anchors = place_anchors_random(n_anchors, 420.0, rng());
  do {
    in.target = {pos(rng), pos(rng)};
  } while ([&] {
    for (const auto& a : in.sc.anchors)
      if (distance(in.target, a) < 5.0) return true;
    return false;
  }());
  in.p_prior = random_prior(rng);
  in.H = jacobian_h(in.target, in.sc.anchors);
  in.crb_unit.resize(n_anchors);
  in.energies.resize(n_anchors);
  for (int j = 0; j < n_anchors; ++j) {
    const double d = distance(in.target, in.sc.anchors[static_cast<std::size_t>(j)]);
    in.crb_unit(j) = crb_unit(make_link_gain(d, 1.0, true, in.sc), in.sc);
    in.energies(j) = std::exp(log_e(rng));
  }
  return in;
}

// PCRB after a fresh covariance update with R rebuilt from the energies.
inline double exact_pcrb(const CovMatrix& p_prior, const Eigen::MatrixXd& H,
                         const Eigen::VectorXd& crb_unit, const Eigen::VectorXd& energies) {
  return pcrb_value(update(p_prior, H, r_from_energies(crb_unit, energies)).p_post);
}

// Same quantity from scratch in quadruple precision, P_post = P - P H^T S^-1 H P, with a
// plain pivoted elimination. Finite differences of the PCRB at relative step 1e-6 cancel
// up to ~15 digits on weak links, which double and long double cannot resolve.
using Quad = __float128;

inline Quad exact_pcrb_quad(const CovMatrix& p_prior, const Eigen::MatrixXd& H,
                            const Eigen::VectorXd& crb_unit, const Eigen::VectorXd& energies) {
  const int n = static_cast<int>(H.rows());
  std::vector<Quad> ph(static_cast<std::size_t>(4 * n), 0);  // P H^T, 4 x n
  for (int r = 0; r < 4; ++r)
    for (int j = 0; j < n; ++j)
      for (int c = 0; c < 4; ++c) ph[static_cast<std::size_t>(r * n + j)] += Quad(p_prior(r, c)) * Quad(H(j, c));
  // augmented [S | (P H^T)^T restricted to the two position rows]
  const int w = n + 2;
  std::vector<Quad> a(static_cast<std::size_t>(n * w), 0);
  auto at = [&](int i, int j) -> Quad& { return a[static_cast<std::size_t>(i * w + j)]; };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      for (int c = 0; c < 4; ++c) at(i, j) += Quad(H(i, c)) * ph[static_cast<std::size_t>(c * n + j)];
    at(i, i) += Quad(crb_unit(i)) / Quad(energies(i));
    at(i, n) = ph[static_cast<std::size_t>(0 * n + i)];
    at(i, n + 1) = ph[static_cast<std::size_t>(1 * n + i)];
  }
  auto qabs = [](Quad x) { return x < 0 ? -x : x; };
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (qabs(at(r, c)) > qabs(at(piv, c))) piv = r;
    for (int j = 0; j < w; ++j) std::swap(at(c, j), at(piv, j));
    for (int r = 0; r < n; ++r) {
      if (r == c) continue;
      const Quad f = at(r, c) / at(c, c);
      for (int j = c; j < w; ++j) at(r, j) -= f * at(c, j);
    }
  }
  Quad trace = Quad(p_prior(0, 0)) + Quad(p_prior(1, 1));
  for (int i = 0; i < n; ++i) {
    trace -= ph[static_cast<std::size_t>(0 * n + i)] * at(i, n) / at(i, i);
    trace -= ph[static_cast<std::size_t>(1 * n + i)] * at(i, n + 1) / at(i, i);
  }
  return trace;
}

// Gain recomputed from scratch with an explicit R.
inline Eigen::MatrixXd exact_gain(const CovMatrix& p, const Eigen::MatrixXd& H, const Eigen::VectorXd& r) {
  const Eigen::MatrixXd S = H * p * H.transpose() + Eigen::MatrixXd(r.asDiagonal());
  return p * H.transpose() * S.inverse();
}

}  // namespace toaopt::testing
