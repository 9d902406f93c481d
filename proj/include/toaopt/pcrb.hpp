#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "toaopt/motion.hpp"
#include "toaopt/scenario.hpp"

namespace toaopt {

inline constexpr int kStateDim = 4;

using CovMatrix = Eigen::Matrix4d;
using StateMatrix = Eigen::Matrix4d;

struct MotionModel {
  StateMatrix F;
  StateMatrix Q;
};

/// Measurement-side quantities of one update. All matrices are full size (N_A rows or
/// columns); rows and columns of muted links are zero in S, S_inv and K.
struct MeasModel {
  Eigen::MatrixXd H;       // N_A x 4
  Eigen::VectorXd r_diag;  // N_A ranging CRBs, +inf for muted links
  Eigen::MatrixXd S;       // N_A x N_A innovation covariance
  Eigen::MatrixXd S_inv;   // inverse over the active block
  Eigen::MatrixXd K;       // 4 x N_A gain
  std::vector<bool> active;
  bool skipped = false;  // S singular or no active link: P_post = P_prior

  std::size_t n_links() const { return static_cast<std::size_t>(H.rows()); }
  std::size_t n_active() const;
};

struct UpdateResult {
  MeasModel meas;
  CovMatrix p_post;
};

/// Evolving filter state at step k.
struct TrackState {
  int k = 0;
  CovMatrix p_prior = CovMatrix::Zero();
  CovMatrix p_post = CovMatrix::Zero();
  MeasModel meas;
  Eigen::VectorXd energies;   // per link, units of the per-symbol energy
  Eigen::VectorXd crb_unit;   // per-link CRB at unit energy (+inf when no LoS)
  double pcrb = 0.0;          // position trace of p_post
  double pcrb_pred = 0.0;     // position trace of p_prior
  bool incremental_fallback = false;  // last incremental update was replaced by the exact one
};

/// F with T_est coupling of position and velocity; Q = diag(0, 0, sigma_w^2, sigma_w^2).
MotionModel build_motion_model(double t_est, double sigma_w);

/// F P F^T + Q, symmetrised.
CovMatrix predict(const CovMatrix& p_post, const MotionModel& model);

/// Row j = [(x - x_j)/d_j, (y - y_j)/d_j, 0, 0]. Throws DomainError when the point sits
/// on an anchor.
Eigen::MatrixXd jacobian_h(Point2 p, std::span<const AnchorPos> anchors);

/// Distances from p to every anchor.
Eigen::VectorXd measurement_h(Point2 p, std::span<const AnchorPos> anchors);

/// Covariance update with diagonal R. Links whose R entry is infinite (or non-positive
/// energy upstream) are removed from H, R and S before factorisation. A numerically
/// singular S (reciprocal condition below 1e-12) skips the update.
UpdateResult update(const CovMatrix& p_prior, const Eigen::MatrixXd& H,
                    const Eigen::VectorXd& r_diag);

/// Sum of the two position variances.
inline double pcrb_value(const CovMatrix& p) { return p(0, 0) + p(1, 1); }

/// Symmetric and positive semidefinite to tolerance (on the symmetrised eigenvalues).
bool is_valid_covariance(const CovMatrix& p, double tol = 1e-9);

/// Per-link R diagonal for the given energies: crb_unit / E, +inf where E <= 0.
Eigen::VectorXd r_from_energies(const Eigen::VectorXd& crb_unit, const Eigen::VectorXd& energies);

/// Track state after the provisional update at the current energies.
TrackState make_track_state(int k, const CovMatrix& p_prior, const Eigen::MatrixXd& H,
                            const Eigen::VectorXd& crb_unit, const Eigen::VectorXd& energies);

struct EkfResult {
  StateVec state;
  CovMatrix p_post;
  MeasModel meas;
};

/// One extended-Kalman step. H and h(x) are evaluated at the predicted state; links
/// with infinite R are ignored.
EkfResult ekf_step(const StateVec& estimate, const CovMatrix& p_post,
                   const Eigen::VectorXd& measurements, const MotionModel& model,
                   std::span<const AnchorPos> anchors, const Eigen::VectorXd& r_diag);

}  // namespace toaopt
