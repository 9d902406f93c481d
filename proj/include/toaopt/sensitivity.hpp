#pragma once

#include <Eigen/Dense>

#include "toaopt/pcrb.hpp"

namespace toaopt {

/// First-order PCRB sensitivity to each link energy:
///   q_j = -(K(1,j)^2 + K(2,j)^2) * CRB_j / E_j.
/// Zero for links whose CRB is infinite (muted). Throws DomainError when a link with a
/// finite CRB has E_j <= 0.
Eigen::VectorXd q_vector(const Eigen::MatrixXd& K, const Eigen::VectorXd& crb_dis,
                         const Eigen::VectorXd& energies);

/// Sensitivity of a currently muted link in the limit E_j -> 0+:
///   -|P_post(pos,:) h_j|^2 / crb_unit_j,
/// which is what q_j tends to as the link is switched on with vanishing energy.
double muted_link_sensitivity(const CovMatrix& p_post, const Eigen::RowVector4d& h_row,
                              double crb_unit);

/// sum_j q_j dE_j
double delta_pcrb_linear(const Eigen::VectorXd& q, const Eigen::VectorXd& dE);

/// Single transmitter (uplink): dE * sum_j q_j
double delta_pcrb_uplink(const Eigen::VectorXd& q, double dE);

/// First-order change of S from a change dE_j of link j: a single diagonal entry
/// -(CRB_j / E_j) dE_j. Throws DomainError for E_j <= 0.
Eigen::MatrixXd delta_S(int j, int n_links, double crb_dis_j, double dE_j, double E_j);

/// dK ~= -P H^T S^-1 dS S^-1
Eigen::MatrixXd delta_K(const CovMatrix& p_prior, const Eigen::MatrixXd& H,
                        const Eigen::MatrixXd& S_inv, const Eigen::MatrixXd& dS);

}  // namespace toaopt
