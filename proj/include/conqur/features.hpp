#pragma once

#include <Eigen/Dense>

#include "conqur/mdp.hpp"
#include "conqur/rng.hpp"

namespace conqur {

/// Dense feature table: column (s * n_actions + a) holds phi(s, a).
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(int n_states, int n_actions, int dim);

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    int dim() const { return dim_; }

    auto phi(State s, Action a) const { return table_.col(index(s, a)); }
    auto phi(State s, Action a) { return table_.col(index(s, a)); }

    const Eigen::MatrixXd& table() const { return table_; }

    /// One-hot features over all (s, a) pairs (the unrestricted class).
    static FeatureMap one_hot(int n_states, int n_actions);

    bool operator==(const FeatureMap& other) const {
        return n_states_ == other.n_states_ && n_actions_ == other.n_actions_ && table_ == other.table_;
    }

private:
    Eigen::Index index(State s, Action a) const { return static_cast<Eigen::Index>(s) * n_actions_ + a; }

    int n_states_ = 0;
    int n_actions_ = 0;
    int dim_ = 0;
    Eigen::MatrixXd table_;  // dim x (n_states * n_actions)
};

/// Weights of a linear Q-function, Q(s,a) = theta . phi(s,a).
struct LinearQ {
    Eigen::VectorXd theta;

    LinearQ() = default;
    explicit LinearQ(int dim) : theta(Eigen::VectorXd::Zero(dim)) {}
    explicit LinearQ(Eigen::VectorXd weights) : theta(std::move(weights)) {}

    int dim() const { return static_cast<int>(theta.size()); }
};

enum class TieRule { LowestIndex, SeededRandom };

double q_value(const LinearQ& q, const FeatureMap& fm, State s, Action a);

/// Q_theta(s, .) as a vector over actions.
Eigen::VectorXd q_row(const LinearQ& q, const FeatureMap& fm, State s);

/// Greedy action. SeededRandom draws uniformly among exact ties from `rng`
/// (required for that rule).
Action greedy_action(const LinearQ& q, const FeatureMap& fm, State s,
                     TieRule rule = TieRule::LowestIndex, Rng* rng = nullptr);

/// Pointwise greedy_action over states 0..n_states-1.
Policy greedy_policy(const LinearQ& q, const FeatureMap& fm, TieRule rule = TieRule::LowestIndex,
                     Rng* rng = nullptr);

/// Q_theta tabulated over every (s, a).
QTable tabulate(const LinearQ& q, const FeatureMap& fm);

}  // namespace conqur
