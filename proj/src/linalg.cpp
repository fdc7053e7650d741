#include "conqur/linalg.hpp"

#include <cmath>

#include "conqur/error.hpp"

namespace conqur {

Eigen::VectorXd solve_refined(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double tol) {
    if (a.rows() != a.cols() || a.rows() != b.size())
        throw ArgumentError("solve_refined: shape mismatch");
    if (a.rows() == 0) return Eigen::VectorXd(0);

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    const double pivot_floor = 1e-14 * std::max(1.0, a.cwiseAbs().maxCoeff());
    if (lu.matrixLU().diagonal().cwiseAbs().minCoeff() <= pivot_floor)
        throw InternalError("solve_refined: singular system");

    Eigen::VectorXd x = lu.solve(b);
    Eigen::VectorXd residual = b - a * x;
    double res = residual.cwiseAbs().maxCoeff();
    for (int iter = 0; iter < 8 && res > tol; ++iter) {
        Eigen::VectorXd candidate = x + lu.solve(residual);
        Eigen::VectorXd next_residual = b - a * candidate;
        const double next_res = next_residual.cwiseAbs().maxCoeff();
        if (!(next_res < res)) break;
        x = std::move(candidate);
        residual = std::move(next_residual);
        res = next_res;
    }
    if (!std::isfinite(res)) throw InternalError("solve_refined: non-finite solution");
    return x;
}

}  // namespace conqur
