#include "conqur/oracles.hpp"

#include <vector>

#include "conqur/error.hpp"

namespace conqur {

TreeBound tree_size_bound(const BoundInputs& b) {
    if (b.n < 1 || b.m < 1 || b.vcdim < 1) throw ArgumentError("tree_size_bound: inputs must be >= 1");
    TreeBound out;
    const BigInt pairs = BigInt(b.m) * (b.m - 1) / 2;
    const BigInt base = pairs * b.n;
    BigInt power = 1;
    for (long long i = 0; i < b.vcdim; ++i) power *= base;
    out.value = BigInt(b.n) * b.m * power;
    if (out.value == 0) {
        out.value = 1;
        out.degenerate = true;
    }
    return out;
}

BoundCheck verify_bound(std::span<const State> states, const FeatureMap& fm) {
    BoundCheck out;
    out.count = enumerate_consistent_assignments(states, fm).size();
    const auto bound = tree_size_bound({static_cast<long long>(std::max<std::size_t>(states.size(), 1)),
                                        fm.n_actions(), fm.dim()});
    out.bound = bound.value;
    out.ok = BigInt(out.count) <= out.bound;
    return out;
}

Policy policy_from_assignment(const Mdp& mdp, const Assignment& sigma, Action fill) {
    Policy p;
    p.action_of.assign(static_cast<std::size_t>(mdp.n_states), fill);
    for (const auto& [s, a] : sigma.pairs()) p.action_of[s] = a;
    return p;
}

RepresentablePolicy best_representable_policy(const Mdp& mdp, const FeatureMap& fm, std::size_t cap) {
    if (fm.n_states() != mdp.n_states || fm.n_actions() != mdp.n_actions)
        throw ArgumentError("best_representable_policy: feature map does not match the MDP");
    std::vector<State> states;
    for (State s = 0; s < mdp.n_states; ++s)
        if (!mdp.is_terminal(s)) states.push_back(s);

    const auto candidates = enumerate_consistent_assignments(states, fm, {}, cap);
    if (candidates.empty()) throw InternalError("best_representable_policy: no consistent assignment");

    RepresentablePolicy out;
    out.candidates = candidates.size();
    const Assignment* best = nullptr;
    for (const auto& sigma : candidates) {
        const double v = policy_value(mdp, policy_from_assignment(mdp, sigma));
        // Values closer than 1e-12 are ties; the earlier (lexicographic) one wins.
        if (best == nullptr || v > out.value + 1e-12) {
            best = &sigma;
            out.value = v;
        }
    }
    const auto check = is_consistent(*best, fm);
    if (!check.consistent || !check.witness) throw InternalError("best_representable_policy: lost witness");
    out.witness = *check.witness;
    out.policy = policy_from_assignment(mdp, *best);
    for (State s = 0; s < mdp.n_states; ++s)
        if (mdp.is_terminal(s)) out.policy.action_of[s] = greedy_action(out.witness, fm, s);
    return out;
}

}  // namespace conqur
