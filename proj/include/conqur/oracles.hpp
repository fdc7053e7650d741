#pragma once

#include <cstddef>
#include <span>

#include <boost/multiprecision/cpp_int.hpp>

#include "conqur/consistency.hpp"
#include "conqur/features.hpp"
#include "conqur/mdp.hpp"

namespace conqur {

using BigInt = boost::multiprecision::cpp_int;

struct BoundInputs {
    long long n = 1;       // distinct backed-up states
    long long m = 1;       // actions
    long long vcdim = 1;   // d for a linear class
};

struct TreeBound {
    BigInt value;
    bool degenerate = false;  // m = 1: the formula gives 0, reported as 1
};

/// n * m * (C(m,2) * n)^vcdim in exact arithmetic (hidden constant 1).
TreeBound tree_size_bound(const BoundInputs& b);

struct BoundCheck {
    std::size_t count = 0;
    BigInt bound;
    bool ok = false;
};

/// Counts consistent assignments over `states` and compares with the bound
/// for n = |states|, m = n_actions, vcdim = d.
BoundCheck verify_bound(std::span<const State> states, const FeatureMap& fm);

struct RepresentablePolicy {
    Policy policy;
    double value = 0.0;
    LinearQ witness;
    std::size_t candidates = 0;  // consistent full assignments evaluated
};

/// Best policy in the greedy class G(Theta): exhaustive enumeration of
/// consistent assignments over the non-terminal states, each scored by
/// exact policy evaluation. Ties go to the lexicographically first policy.
RepresentablePolicy best_representable_policy(const Mdp& mdp, const FeatureMap& fm,
                                              std::size_t cap = kDefaultEnumerationCap);

/// Policy over all states from an assignment on the non-terminal states;
/// terminal entries take the given fill action.
Policy policy_from_assignment(const Mdp& mdp, const Assignment& sigma, Action fill = 0);

}  // namespace conqur
