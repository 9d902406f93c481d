#include "toaopt/sensitivity.hpp"

#include <cmath>

#include "toaopt/errors.hpp"

namespace toaopt {

Eigen::VectorXd q_vector(const Eigen::MatrixXd& K, const Eigen::VectorXd& crb_dis,
                         const Eigen::VectorXd& energies) {
  const Eigen::Index n = crb_dis.size();
  Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!std::isfinite(crb_dis(j))) continue;
    if (!(energies(j) > 0.0)) {
      throw DomainError("q_vector: link " + std::to_string(j + 1) +
                        " has a finite CRB but no energy; mute it instead");
    }
    const double k2 = K(0, j) * K(0, j) + K(1, j) * K(1, j);
    q(j) = -k2 * crb_dis(j) / energies(j);
  }
  return q;
}

double muted_link_sensitivity(const CovMatrix& p_post, const Eigen::RowVector4d& h_row,
                              double crb_unit) {
  if (!std::isfinite(crb_unit) || !(crb_unit > 0.0)) return 0.0;
  const Eigen::Vector4d g = p_post * h_row.transpose();
  return -(g(0) * g(0) + g(1) * g(1)) / crb_unit;
}

double delta_pcrb_linear(const Eigen::VectorXd& q, const Eigen::VectorXd& dE) { return q.dot(dE); }

double delta_pcrb_uplink(const Eigen::VectorXd& q, double dE) { return dE * q.sum(); }

Eigen::MatrixXd delta_S(int j, int n_links, double crb_dis_j, double dE_j, double E_j) {
  if (!(E_j > 0.0)) throw DomainError("delta_S: E_j must be > 0");
  Eigen::MatrixXd dS = Eigen::MatrixXd::Zero(n_links, n_links);
  dS(j, j) = -(crb_dis_j / E_j) * dE_j;
  return dS;
}

Eigen::MatrixXd delta_K(const CovMatrix& p_prior, const Eigen::MatrixXd& H,
                        const Eigen::MatrixXd& S_inv, const Eigen::MatrixXd& dS) {
  return -(p_prior * H.transpose() * S_inv) * dS * S_inv;
}

}  // namespace toaopt
