#include "toaopt/pcrb.hpp"

#include <cmath>

#include "toaopt/errors.hpp"

namespace toaopt {

namespace {

constexpr double kMinRcond = 1e-12;

CovMatrix symmetrize(const CovMatrix& p) { return 0.5 * (p + p.transpose()); }

}  // namespace

std::size_t MeasModel::n_active() const {
  std::size_t n = 0;
  for (bool a : active) n += a ? 1 : 0;
  return n;
}

MotionModel build_motion_model(double t_est, double sigma_w) {
  if (!(t_est > 0.0)) throw DomainError("build_motion_model: t_est must be > 0");
  MotionModel m;
  m.F = StateMatrix::Identity();
  m.F(0, 2) = t_est;
  m.F(1, 3) = t_est;
  m.Q = StateMatrix::Zero();
  m.Q(2, 2) = sigma_w * sigma_w;
  m.Q(3, 3) = sigma_w * sigma_w;
  return m;
}

CovMatrix predict(const CovMatrix& p_post, const MotionModel& model) {
  return symmetrize(model.F * p_post * model.F.transpose() + model.Q);
}

Eigen::MatrixXd jacobian_h(Point2 p, std::span<const AnchorPos> anchors) {
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(anchors.size()), kStateDim);
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    const double d = distance(p, anchors[j]);
    if (!(d > 0.0)) {
      throw DomainError("jacobian_h: target coincides with anchor " + std::to_string(anchors[j].id));
    }
    const auto row = static_cast<Eigen::Index>(j);
    H(row, 0) = (p.x - anchors[j].x) / d;
    H(row, 1) = (p.y - anchors[j].y) / d;
  }
  return H;
}

Eigen::VectorXd measurement_h(Point2 p, std::span<const AnchorPos> anchors) {
  Eigen::VectorXd z(static_cast<Eigen::Index>(anchors.size()));
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    z(static_cast<Eigen::Index>(j)) = distance(p, anchors[j]);
  }
  return z;
}

Eigen::VectorXd r_from_energies(const Eigen::VectorXd& crb_unit, const Eigen::VectorXd& energies) {
  Eigen::VectorXd r(crb_unit.size());
  for (Eigen::Index j = 0; j < crb_unit.size(); ++j) {
    const double e = energies(j);
    r(j) = (e > 0.0 && std::isfinite(crb_unit(j))) ? crb_unit(j) / e
                                                   : std::numeric_limits<double>::infinity();
  }
  return r;
}

UpdateResult update(const CovMatrix& p_prior, const Eigen::MatrixXd& H, const Eigen::VectorXd& r_diag) {
  const Eigen::Index n = H.rows();
  UpdateResult out;
  MeasModel& m = out.meas;
  m.H = H;
  m.r_diag = r_diag;
  m.S = Eigen::MatrixXd::Zero(n, n);
  m.S_inv = Eigen::MatrixXd::Zero(n, n);
  m.K = Eigen::MatrixXd::Zero(kStateDim, n);
  m.active.assign(static_cast<std::size_t>(n), false);

  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::isfinite(r_diag(j)) && r_diag(j) > 0.0) {
      idx.push_back(j);
      m.active[static_cast<std::size_t>(j)] = true;
    }
  }
  const auto na = static_cast<Eigen::Index>(idx.size());
  if (na == 0) {
    m.skipped = true;
    out.p_post = p_prior;
    return out;
  }

  Eigen::MatrixXd Ha(na, kStateDim);
  for (Eigen::Index a = 0; a < na; ++a) Ha.row(a) = H.row(idx[static_cast<std::size_t>(a)]);
  const Eigen::MatrixXd PHt = p_prior * Ha.transpose();
  Eigen::MatrixXd Sa = Ha * PHt;
  for (Eigen::Index a = 0; a < na; ++a) Sa(a, a) += r_diag(idx[static_cast<std::size_t>(a)]);
  Sa = 0.5 * (Sa + Sa.transpose());

  // Singularity is judged on the unit-diagonal scaling of S, so a link with a huge R
  // (nearly muted) does not by itself look like a degenerate geometry.
  const Eigen::VectorXd d_inv = Sa.diagonal().cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd Sa_unit = d_inv.asDiagonal() * Sa * d_inv.asDiagonal();
  Eigen::LLT<Eigen::MatrixXd> llt_unit(Sa_unit);
  Eigen::LLT<Eigen::MatrixXd> llt(Sa);
  if (llt_unit.info() != Eigen::Success || llt_unit.rcond() < kMinRcond || llt.info() != Eigen::Success) {
    m.skipped = true;
    m.active.assign(static_cast<std::size_t>(n), false);
    out.p_post = p_prior;
    return out;
  }
  const Eigen::MatrixXd Sa_inv = llt.solve(Eigen::MatrixXd::Identity(na, na));
  const Eigen::MatrixXd Ka = PHt * Sa_inv;
  out.p_post = symmetrize(p_prior - Ka * PHt.transpose());

  for (Eigen::Index a = 0; a < na; ++a) {
    const Eigen::Index ja = idx[static_cast<std::size_t>(a)];
    m.K.col(ja) = Ka.col(a);
    for (Eigen::Index b = 0; b < na; ++b) {
      const Eigen::Index jb = idx[static_cast<std::size_t>(b)];
      m.S(ja, jb) = Sa(a, b);
      m.S_inv(ja, jb) = Sa_inv(a, b);
    }
  }
  return out;
}

bool is_valid_covariance(const CovMatrix& p, double tol) {
  if (!p.allFinite()) return false;
  const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > tol * scale) return false;
  Eigen::SelfAdjointEigenSolver<CovMatrix> es(symmetrize(p), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol * scale;
}

EkfResult ekf_step(const StateVec& estimate, const CovMatrix& p_post,
                   const Eigen::VectorXd& measurements, const MotionModel& model,
                   std::span<const AnchorPos> anchors, const Eigen::VectorXd& r_diag) {
  Eigen::Vector4d x(estimate.x, estimate.y, estimate.vx, estimate.vy);
  const Eigen::Vector4d x_pred = model.F * x;
  const CovMatrix p_prior = predict(p_post, model);
  const Point2 p_eval{x_pred(0), x_pred(1)};
  const Eigen::MatrixXd H = jacobian_h(p_eval, anchors);
  const Eigen::VectorXd h = measurement_h(p_eval, anchors);

  UpdateResult up = update(p_prior, H, r_diag);
  Eigen::VectorXd innovation = Eigen::VectorXd::Zero(h.size());
  for (Eigen::Index j = 0; j < h.size(); ++j) {
    if (up.meas.active[static_cast<std::size_t>(j)]) innovation(j) = measurements(j) - h(j);
  }
  const Eigen::Vector4d x_new = x_pred + up.meas.K * innovation;
  return {StateVec{x_new(0), x_new(1), x_new(2), x_new(3)}, up.p_post, std::move(up.meas)};
}

TrackState make_track_state(int k, const CovMatrix& p_prior, const Eigen::MatrixXd& H,
                            const Eigen::VectorXd& crb_unit, const Eigen::VectorXd& energies) {
  TrackState t;
  t.k = k;
  t.p_prior = p_prior;
  t.pcrb_pred = pcrb_value(p_prior);
  t.energies = energies;
  t.crb_unit = crb_unit;
  UpdateResult u = update(p_prior, H, r_from_energies(crb_unit, energies));
  t.meas = std::move(u.meas);
  t.p_post = u.p_post;
  t.pcrb = pcrb_value(t.p_post);
  return t;
}

}  // namespace toaopt
