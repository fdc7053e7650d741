#include "conqur/simplex.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "conqur/error.hpp"

namespace conqur {

namespace {

constexpr double kPivotEps = 1e-11;
constexpr double kCostEps = 1e-11;

}  // namespace

FeasibilityResult find_feasible_point(const Eigen::MatrixXd& g, const Eigen::VectorXd& h) {
    if (g.rows() != h.size()) throw ArgumentError("find_feasible_point: shape mismatch");
    const Eigen::Index rows = g.rows();
    const Eigen::Index d = g.cols();
    FeasibilityResult out;
    if (rows == 0) {
        out.feasible = true;
        out.point = Eigen::VectorXd::Zero(d);
        return out;
    }

    // Columns: x+ (d) | x- (d) | surplus (rows) | artificial (rows) | rhs.
    // Row i reads  G_i x+ - G_i x- - s_i + art_i = h_i, sign-flipped when
    // h_i < 0 so the artificial basis starts feasible.
    const Eigen::Index n_struct = 2 * d + rows;
    const Eigen::Index n_cols = n_struct + rows;
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(rows + 1, n_cols + 1);
    std::vector<Eigen::Index> basis(static_cast<std::size_t>(rows));
    for (Eigen::Index i = 0; i < rows; ++i) {
        // Unit rows keep the pivots tame; positive scaling leaves the feasible set alone.
        const double norm = g.row(i).cwiseAbs().maxCoeff();
        const double sign = (h(i) < 0.0 ? -1.0 : 1.0) / (norm > 0.0 ? norm : 1.0);
        t.block(i, 0, 1, d) = sign * g.row(i);
        t.block(i, d, 1, d) = -sign * g.row(i);
        t(i, 2 * d + i) = -sign;
        t(i, n_struct + i) = 1.0;
        t(i, n_cols) = sign * h(i);
        basis[i] = n_struct + i;
    }
    // Objective row holds reduced costs of "minimize sum of artificials".
    for (Eigen::Index i = 0; i < rows; ++i) t.row(rows) -= t.row(i);
    for (Eigen::Index i = 0; i < rows; ++i) t(rows, n_struct + i) = 0.0;

    const double scale = std::max(1.0, t.topRows(rows).cwiseAbs().maxCoeff());
    const int max_pivots = 50 * static_cast<int>(rows + n_cols) + 1000;
    for (;;) {
        Eigen::Index enter = -1;
        Eigen::Index leave = -1;
        for (Eigen::Index j = 0; j < n_cols && leave < 0; ++j) {
            // Relative to the column too: after many pivots a tiny negative
            // cost next to huge entries is rounding, not a direction.
            const double col = t.col(j).head(rows).cwiseAbs().maxCoeff();
            if (!(t(rows, j) < -kCostEps * std::max(scale, col))) continue;
            double best_ratio = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < rows; ++i) {
                const double coef = t(i, j);
                if (coef <= kPivotEps * std::max(scale, col)) continue;
                const double ratio = t(i, n_cols) / coef;
                if (leave < 0) {
                    best_ratio = ratio;
                    leave = i;
                    continue;
                }
                const double tol = 1e-14 * std::max(1.0, std::abs(best_ratio));
                if (ratio < best_ratio - tol || (std::abs(ratio - best_ratio) <= tol && basis[i] < basis[leave])) {
                    best_ratio = ratio;
                    leave = i;
                }
            }
            // The objective is bounded below by 0, so a ray here is rounding; try the next column.
            if (leave >= 0) enter = j;
        }
        if (enter < 0) break;

        t.row(leave) /= t(leave, enter);
        for (Eigen::Index i = 0; i <= rows; ++i) {
            if (i == leave) continue;
            const double f = t(i, enter);
            if (f != 0.0) t.row(i) -= f * t.row(leave);
        }
        basis[leave] = enter;
        if (++out.pivots > max_pivots) throw InternalError("phase-1 simplex: pivot limit exceeded");
    }

    out.phase1_objective = std::max(0.0, -t(rows, n_cols));
    Eigen::VectorXd x = Eigen::VectorXd::Zero(2 * d);
    for (Eigen::Index i = 0; i < rows; ++i)
        if (basis[i] < 2 * d) x(basis[i]) = t(i, n_cols);
    out.point = x.head(d) - x.tail(d);

    const double slack = (g * out.point - h).minCoeff();
    const double g_scale = std::max(1.0, g.cwiseAbs().maxCoeff());
    out.feasible = out.phase1_objective <= 1e-9 * scale && slack >= -1e-7 * g_scale;
    return out;
}

}  // namespace conqur
