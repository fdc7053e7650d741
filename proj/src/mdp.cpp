#include "conqur/mdp.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "conqur/error.hpp"
#include "conqur/linalg.hpp"

namespace conqur {

namespace {

constexpr double kSumTol = 1e-12;

void require_state(const Mdp& mdp, State s) {
    if (!mdp.valid_state(s)) throw ArgumentError(fmt::format("invalid state id {}", s));
}

void require_action(const Mdp& mdp, Action a) {
    if (!mdp.valid_action(a)) throw ArgumentError(fmt::format("invalid action id {}", a));
}

void require_policy(const Mdp& mdp, const Policy& policy) {
    if (policy.action_of.size() != static_cast<std::size_t>(mdp.n_states))
        throw ArgumentError("policy is not total over the state space");
    for (State s = 0; s < mdp.n_states; ++s) {
        if (mdp.is_terminal(s)) continue;
        require_action(mdp, policy(s));
    }
}

Action policy_action(const Mdp& mdp, const Policy& policy, State s) {
    // Terminal rows are identical for every action.
    return mdp.is_terminal(s) ? 0 : policy(s);
}

}  // namespace

Mdp::Mdp(int states, int actions, double discount)
    : n_states(states),
      n_actions(actions),
      gamma(discount),
      transition(static_cast<std::size_t>(states) * actions * states, 0.0),
      reward(static_cast<std::size_t>(states) * actions, 0.0),
      initial(static_cast<std::size_t>(states), 0.0),
      terminal(static_cast<std::size_t>(states), 0) {
    if (states < 1 || actions < 1) throw ArgumentError("Mdp needs at least one state and action");
}

void Mdp::make_terminal(State s) {
    terminal[s] = 1;
    for (Action a = 0; a < n_actions; ++a) {
        for (State t = 0; t < n_states; ++t) p(s, a, t) = (t == s) ? 1.0 : 0.0;
        r(s, a) = 0.0;
    }
}

double QTable::max_at(State s) const {
    double best = (*this)(s, 0);
    for (Action a = 1; a < n_actions; ++a) best = std::max(best, (*this)(s, a));
    return best;
}

Action QTable::argmax_at(State s) const {
    Action best = 0;
    for (Action a = 1; a < n_actions; ++a)
        if ((*this)(s, a) > (*this)(s, best)) best = a;
    return best;
}

std::vector<std::string> validate_mdp(const Mdp& mdp) {
    std::vector<std::string> out;
    if (mdp.n_states < 1) out.push_back("n_states must be positive");
    if (mdp.n_actions < 1) out.push_back("n_actions must be positive");
    if (!out.empty()) return out;

    const auto ns = static_cast<std::size_t>(mdp.n_states);
    const auto na = static_cast<std::size_t>(mdp.n_actions);
    if (mdp.transition.size() != ns * na * ns)
        out.push_back(fmt::format("transition table has {} entries, expected {}", mdp.transition.size(),
                                  ns * na * ns));
    if (mdp.reward.size() != ns * na)
        out.push_back(fmt::format("reward table has {} entries, expected {}", mdp.reward.size(), ns * na));
    if (mdp.initial.size() != ns)
        out.push_back(fmt::format("p0 has {} entries, expected {}", mdp.initial.size(), ns));
    if (mdp.terminal.size() != ns)
        out.push_back(fmt::format("terminal has {} entries, expected {}", mdp.terminal.size(), ns));
    if (!out.empty()) return out;

    if (!(mdp.gamma >= 0.0 && mdp.gamma < 1.0)) out.push_back(fmt::format("gamma {} outside [0,1)", mdp.gamma));

    for (State s = 0; s < mdp.n_states; ++s) {
        for (Action a = 0; a < mdp.n_actions; ++a) {
            double sum = 0.0;
            bool in_range = true;
            for (State t = 0; t < mdp.n_states; ++t) {
                const double v = mdp.p(s, a, t);
                if (!(v >= 0.0 && v <= 1.0)) {
                    in_range = false;
                    out.push_back(fmt::format("P[{}][{}][{}] = {:.12g} outside [0,1]", s, a, t, v));
                }
                sum += v;
            }
            if (in_range && std::abs(sum - 1.0) > kSumTol)
                out.push_back(fmt::format("row ({},{}) sums to {:.12g}", s, a, sum));
            if (!std::isfinite(mdp.r(s, a))) out.push_back(fmt::format("R[{}][{}] is not finite", s, a));
            if (mdp.is_terminal(s)) {
                if (mdp.p(s, a, s) != 1.0)
                    out.push_back(fmt::format("terminal state {} action {} is not a self-loop", s, a));
                if (mdp.r(s, a) != 0.0)
                    out.push_back(fmt::format("terminal state {} action {} has nonzero reward", s, a));
            }
        }
    }

    double p0_sum = 0.0;
    for (State s = 0; s < mdp.n_states; ++s) {
        const double v = mdp.initial[s];
        if (!(v >= 0.0 && v <= 1.0))
            out.push_back(fmt::format("p0[{}] = {:.12g} outside [0,1]", s, v));
        p0_sum += v;
    }
    if (std::abs(p0_sum - 1.0) > kSumTol) out.push_back(fmt::format("p0 sums to {:.12g}", p0_sum));
    return out;
}

StepResult step(const Mdp& mdp, State s, Action a, Rng& rng) {
    require_state(mdp, s);
    require_action(mdp, a);
    if (mdp.is_terminal(s)) return {0.0, s};

    const auto row = mdp.row(s, a);
    const double u = rng.uniform();
    double acc = 0.0;
    State last_positive = s;
    for (State t = 0; t < mdp.n_states; ++t) {
        if (row[t] <= 0.0) continue;
        last_positive = t;
        acc += row[t];
        if (u < acc) return {mdp.r(s, a), t};
    }
    // Rounding left u beyond the accumulated mass.
    return {mdp.r(s, a), last_positive};
}

State sample_initial(const Mdp& mdp, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    State last_positive = 0;
    for (State s = 0; s < mdp.n_states; ++s) {
        if (mdp.initial[s] <= 0.0) continue;
        last_positive = s;
        acc += mdp.initial[s];
        if (u < acc) return s;
    }
    return last_positive;
}

QTable bellman_optimality(const Mdp& mdp, const QTable& q) {
    std::vector<double> v(static_cast<std::size_t>(mdp.n_states));
    for (State s = 0; s < mdp.n_states; ++s) v[s] = q.max_at(s);
    QTable out(mdp.n_states, mdp.n_actions);
    for (State s = 0; s < mdp.n_states; ++s) {
        for (Action a = 0; a < mdp.n_actions; ++a) {
            const auto row = mdp.row(s, a);
            double ev = 0.0;
            for (State t = 0; t < mdp.n_states; ++t) ev += row[t] * v[t];
            out(s, a) = mdp.r(s, a) + mdp.gamma * ev;
        }
    }
    return out;
}

double bellman_residual(const Mdp& mdp, const QTable& q) {
    const QTable tq = bellman_optimality(mdp, q);
    double res = 0.0;
    for (std::size_t i = 0; i < q.q.size(); ++i) res = std::max(res, std::abs(tq.q[i] - q.q[i]));
    return res;
}

ValueIterationResult value_iteration(const Mdp& mdp, double tol, int max_iter) {
    if (!(tol > 0.0)) throw ArgumentError("value_iteration: tol must be positive");
    ValueIterationResult out;
    QTable q(mdp.n_states, mdp.n_actions);
    double res = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        QTable next = bellman_optimality(mdp, q);
        res = 0.0;
        for (std::size_t i = 0; i < q.q.size(); ++i) res = std::max(res, std::abs(next.q[i] - q.q[i]));
        q = std::move(next);
        // |TQ' - Q'| <= gamma |Q' - Q|, so the returned table meets tol.
        if (mdp.gamma * res <= tol) {
            out.q = std::move(q);
            out.converged = true;
            out.iterations = it + 1;
            out.residual = bellman_residual(mdp, out.q);
            return out;
        }
    }
    throw ConvergenceError(fmt::format("value_iteration did not converge in {} sweeps (residual {:.3e})",
                                       max_iter, res),
                           res);
}

std::vector<double> policy_evaluation_exact(const Mdp& mdp, const Policy& policy) {
    require_policy(mdp, policy);
    const int n = mdp.n_states;
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b(n);
    for (State s = 0; s < n; ++s) {
        const Action act = policy_action(mdp, policy, s);
        const auto row = mdp.row(s, act);
        for (State t = 0; t < n; ++t) a(s, t) -= mdp.gamma * row[t];
        b(s) = mdp.r(s, act);
    }
    const Eigen::VectorXd v = solve_refined(a, b, 1e-10);
    return {v.data(), v.data() + n};
}

std::vector<double> policy_evaluation_iterative(const Mdp& mdp, const Policy& policy, double tol,
                                                int max_iter) {
    require_policy(mdp, policy);
    std::vector<double> v(static_cast<std::size_t>(mdp.n_states), 0.0), next(v.size());
    for (int it = 0; it < max_iter; ++it) {
        double delta = 0.0;
        for (State s = 0; s < mdp.n_states; ++s) {
            const Action act = policy_action(mdp, policy, s);
            const auto row = mdp.row(s, act);
            double ev = 0.0;
            for (State t = 0; t < mdp.n_states; ++t) ev += row[t] * v[t];
            next[s] = mdp.r(s, act) + mdp.gamma * ev;
            delta = std::max(delta, std::abs(next[s] - v[s]));
        }
        v.swap(next);
        if (delta <= tol * (1.0 - mdp.gamma)) return v;
    }
    throw ConvergenceError("policy_evaluation_iterative did not converge", tol);
}

double policy_value(const Mdp& mdp, const Policy& policy) {
    const auto v = policy_evaluation_exact(mdp, policy);
    double total = 0.0;
    for (State s = 0; s < mdp.n_states; ++s) total += mdp.initial[s] * v[s];
    return total;
}

Policy greedy_policy(const QTable& q) {
    Policy p;
    p.action_of.resize(static_cast<std::size_t>(q.n_states));
    for (State s = 0; s < q.n_states; ++s) p.action_of[s] = q.argmax_at(s);
    return p;
}

}  // namespace conqur
