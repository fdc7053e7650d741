#pragma once

#include <Eigen/Dense>

namespace conqur {

struct FeasibilityResult {
    bool feasible = false;
    Eigen::VectorXd point;          // valid when feasible
    double phase1_objective = 0.0;  // sum of artificials at the phase-1 optimum
    int pivots = 0;
};

/// Phase-1 dense tableau simplex with Bland's rule for the system
/// G x >= h with x free. Infeasibility is certified by a strictly positive
/// phase-1 optimum.
FeasibilityResult find_feasible_point(const Eigen::MatrixXd& g, const Eigen::VectorXd& h);

}  // namespace conqur
