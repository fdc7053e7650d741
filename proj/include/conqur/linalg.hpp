#pragma once

#include <Eigen/Dense>

namespace conqur {

/// Dense solve by partial-pivot LU followed by iterative refinement until
/// the max-norm residual is at most `tol` (or refinement stops helping).
/// Throws InternalError when the matrix is numerically singular.
Eigen::VectorXd solve_refined(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                              double tol = 1e-10);

}  // namespace conqur
