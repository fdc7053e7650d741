#include "conqur/features.hpp"

#include <vector>

#include <fmt/format.h>

#include "conqur/error.hpp"

namespace conqur {

namespace {

void check_ids(const FeatureMap& fm, State s, Action a) {
    if (s < 0 || s >= fm.n_states() || a < 0 || a >= fm.n_actions())
        throw ArgumentError(fmt::format("feature lookup ({},{}) out of range", s, a));
}

void check_dims(const LinearQ& q, const FeatureMap& fm) {
    if (q.dim() != fm.dim())
        throw ArgumentError(fmt::format("weight dimension {} does not match feature dimension {}", q.dim(),
                                        fm.dim()));
}

}  // namespace

FeatureMap::FeatureMap(int n_states, int n_actions, int dim)
    : n_states_(n_states),
      n_actions_(n_actions),
      dim_(dim),
      table_(Eigen::MatrixXd::Zero(dim, static_cast<Eigen::Index>(n_states) * n_actions)) {
    if (n_states < 1 || n_actions < 1 || dim < 1) throw ArgumentError("FeatureMap: sizes must be positive");
}

FeatureMap FeatureMap::one_hot(int n_states, int n_actions) {
    FeatureMap fm(n_states, n_actions, n_states * n_actions);
    fm.table_.setIdentity();
    return fm;
}

double q_value(const LinearQ& q, const FeatureMap& fm, State s, Action a) {
    check_dims(q, fm);
    check_ids(fm, s, a);
    return q.theta.dot(fm.phi(s, a));
}

Eigen::VectorXd q_row(const LinearQ& q, const FeatureMap& fm, State s) {
    check_dims(q, fm);
    check_ids(fm, s, 0);
    Eigen::VectorXd row(fm.n_actions());
    for (Action a = 0; a < fm.n_actions(); ++a) row(a) = q.theta.dot(fm.phi(s, a));
    return row;
}

Action greedy_action(const LinearQ& q, const FeatureMap& fm, State s, TieRule rule, Rng* rng) {
    const Eigen::VectorXd row = q_row(q, fm, s);
    const double best = row.maxCoeff();
    if (rule == TieRule::LowestIndex) {
        for (Action a = 0; a < fm.n_actions(); ++a)
            if (row(a) == best) return a;
    }
    if (rng == nullptr) throw ArgumentError("seeded-random tie rule needs a random stream");
    std::vector<Action> ties;
    for (Action a = 0; a < fm.n_actions(); ++a)
        if (row(a) == best) ties.push_back(a);
    return ties[rng->below(ties.size())];
}

Policy greedy_policy(const LinearQ& q, const FeatureMap& fm, TieRule rule, Rng* rng) {
    Policy p;
    p.action_of.resize(static_cast<std::size_t>(fm.n_states()));
    for (State s = 0; s < fm.n_states(); ++s) p.action_of[s] = greedy_action(q, fm, s, rule, rng);
    return p;
}

QTable tabulate(const LinearQ& q, const FeatureMap& fm) {
    check_dims(q, fm);
    QTable t(fm.n_states(), fm.n_actions());
    for (State s = 0; s < fm.n_states(); ++s)
        for (Action a = 0; a < fm.n_actions(); ++a) t(s, a) = q.theta.dot(fm.phi(s, a));
    return t;
}

}  // namespace conqur
