#pragma once

#include <span>
#include <string>
#include <vector>

#include "conqur/rng.hpp"

namespace conqur {

using State = int;
using Action = int;

/// Finite discounted MDP with dense tables.
///
/// Transition probabilities are stored row-major as P[s][a][s'], expected
/// rewards as R[s][a]. Terminal states are absorbing: every action loops
/// back with probability 1 and reward 0.
struct Mdp {
    int n_states = 0;
    int n_actions = 0;
    double gamma = 0.0;
    std::vector<double> transition;  // n_states * n_actions * n_states
    std::vector<double> reward;      // n_states * n_actions
    std::vector<double> initial;     // n_states
    std::vector<char> terminal;      // n_states

    Mdp() = default;
    /// Zero-filled tables of the given shape.
    Mdp(int states, int actions, double discount);

    double p(State s, Action a, State next) const {
        return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + next];
    }
    double& p(State s, Action a, State next) {
        return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + next];
    }
    std::span<const double> row(State s, Action a) const {
        return {transition.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_states,
                static_cast<std::size_t>(n_states)};
    }
    double r(State s, Action a) const { return reward[static_cast<std::size_t>(s) * n_actions + a]; }
    double& r(State s, Action a) { return reward[static_cast<std::size_t>(s) * n_actions + a]; }
    bool is_terminal(State s) const { return terminal[s] != 0; }

    /// Marks `s` terminal and rewrites its rows into zero-reward self-loops.
    void make_terminal(State s);

    bool valid_state(State s) const { return s >= 0 && s < n_states; }
    bool valid_action(Action a) const { return a >= 0 && a < n_actions; }
};

struct Transition {
    State s = 0;
    Action a = 0;
    double r = 0.0;
    State s_next = 0;
    bool done = false;  // s_next is terminal: no bootstrap term

    bool operator==(const Transition&) const = default;
};

/// Deterministic policy, one action per state (terminal entries are ignored).
struct Policy {
    std::vector<Action> action_of;

    Action operator()(State s) const { return action_of[s]; }
    bool operator==(const Policy&) const = default;
};

struct QTable {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> q;

    QTable() = default;
    QTable(int states, int actions)
        : n_states(states), n_actions(actions), q(static_cast<std::size_t>(states) * actions, 0.0) {}

    double operator()(State s, Action a) const { return q[static_cast<std::size_t>(s) * n_actions + a]; }
    double& operator()(State s, Action a) { return q[static_cast<std::size_t>(s) * n_actions + a]; }
    double max_at(State s) const;
    Action argmax_at(State s) const;  // lowest index on ties
};

/// Empty iff every invariant holds. Messages name the offending index.
std::vector<std::string> validate_mdp(const Mdp& mdp);

struct StepResult {
    double reward;
    State next;
};

/// Samples one transition. Terminal states return (0, s).
StepResult step(const Mdp& mdp, State s, Action a, Rng& rng);

/// Samples a state from p0.
State sample_initial(const Mdp& mdp, Rng& rng);

/// One application of the Bellman optimality operator.
QTable bellman_optimality(const Mdp& mdp, const QTable& q);

/// max |Q - TQ| over all entries.
double bellman_residual(const Mdp& mdp, const QTable& q);

struct ValueIterationResult {
    QTable q;
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
};

/// Iterates Q <- TQ from zero. The returned table has Bellman residual
/// at most `tol`. Throws ConvergenceError (with the last residual) if
/// `max_iter` sweeps are not enough.
ValueIterationResult value_iteration(const Mdp& mdp, double tol, int max_iter);

/// Solves (I - gamma P_pi) V = R_pi directly.
std::vector<double> policy_evaluation_exact(const Mdp& mdp, const Policy& policy);

/// Iterative evaluation V <- R_pi + gamma P_pi V until the update is below tol.
std::vector<double> policy_evaluation_iterative(const Mdp& mdp, const Policy& policy, double tol,
                                                int max_iter);

/// p0 . V_pi
double policy_value(const Mdp& mdp, const Policy& policy);

/// Greedy policy of a table (lowest-index ties).
Policy greedy_policy(const QTable& q);

}  // namespace conqur
