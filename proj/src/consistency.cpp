#include "conqur/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "conqur/error.hpp"
#include "conqur/simplex.hpp"

namespace conqur {

Assignment::Assignment(std::vector<Pair> pairs) : pairs_(std::move(pairs)) {
    std::sort(pairs_.begin(), pairs_.end());
}

void Assignment::add(State s, Action a) {
    const Pair p{s, a};
    pairs_.insert(std::upper_bound(pairs_.begin(), pairs_.end(), p), p);
}

bool Assignment::is_multi() const {
    for (std::size_t i = 1; i < pairs_.size(); ++i)
        if (pairs_[i].first == pairs_[i - 1].first && pairs_[i].second != pairs_[i - 1].second) return true;
    return false;
}

std::vector<State> Assignment::states() const {
    std::vector<State> out;
    for (const auto& [s, a] : pairs_)
        if (out.empty() || out.back() != s) out.push_back(s);
    return out;
}

std::optional<Action> Assignment::action_for(State s) const {
    auto it = std::lower_bound(pairs_.begin(), pairs_.end(), Pair{s, std::numeric_limits<Action>::min()});
    if (it == pairs_.end() || it->first != s) return std::nullopt;
    return it->second;
}

Assignment Assignment::deduplicated() const {
    Assignment out;
    out.pairs_ = pairs_;
    out.pairs_.erase(std::unique(out.pairs_.begin(), out.pairs_.end()), out.pairs_.end());
    return out;
}

Assignment union_assignments(const Assignment& a, const Assignment& b) {
    std::vector<Assignment::Pair> merged;
    merged.reserve(a.size() + b.size());
    std::merge(a.pairs().begin(), a.pairs().end(), b.pairs().begin(), b.pairs().end(),
               std::back_inserter(merged));
    return Assignment(std::move(merged));
}

std::vector<State> successor_states(std::span<const Transition> batch) {
    std::vector<State> out;
    out.reserve(batch.size());
    for (const auto& t : batch) out.push_back(t.s_next);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<State> bootstrap_states(std::span<const Transition> batch) {
    std::vector<State> out;
    for (const auto& t : batch)
        if (!t.done) out.push_back(t.s_next);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

ConsistencyBuffer::ConsistencyBuffer(BufferPolicy policy, std::size_t window, double rate)
    : policy_(policy), window_(window), rate_(rate) {
    if (policy == BufferPolicy::Window && window == 0) throw ArgumentError("buffer window must be positive");
    if (policy == BufferPolicy::Subsample && !(rate > 0.0 && rate <= 1.0))
        throw ArgumentError("buffer subsample rate must lie in (0,1]");
}

void ConsistencyBuffer::push(const Assignment& sigma, double weight, Rng* rng) {
    if (!(weight >= 0.0)) throw ArgumentError("buffer weights must be nonnegative");
    if (policy_ == BufferPolicy::Subsample && rng == nullptr)
        throw ArgumentError("subsampling buffer needs a random stream");
    for (const auto& [s, a] : sigma.pairs()) {
        if (policy_ == BufferPolicy::Subsample && !(rng->uniform() < rate_)) continue;
        entries_.push_back({s, a, weight});
    }
    trim();
}

void ConsistencyBuffer::push(State s, Action a, double weight) {
    if (!(weight >= 0.0)) throw ArgumentError("buffer weights must be nonnegative");
    entries_.push_back({s, a, weight});
    trim();
}

void ConsistencyBuffer::trim() {
    if (policy_ != BufferPolicy::Window) return;
    while (entries_.size() > window_) entries_.pop_front();
}

std::vector<ConsistencyBuffer::Entry> ConsistencyBuffer::aggregated() const {
    std::map<std::pair<State, Action>, double> acc;
    for (const auto& e : entries_) acc[{e.s, e.a}] += e.weight;
    std::vector<Entry> out;
    out.reserve(acc.size());
    for (const auto& [key, w] : acc) out.push_back({key.first, key.second, w});
    return out;
}

Assignment ConsistencyBuffer::as_assignment() const {
    std::vector<Assignment::Pair> pairs;
    pairs.reserve(entries_.size());
    for (const auto& e : entries_) pairs.emplace_back(e.s, e.a);
    return Assignment(std::move(pairs));
}

double soft_penalty_state(const LinearQ& q, const FeatureMap& fm, State s, Action a, double margin) {
    const Eigen::VectorXd row = q_row(q, fm, s);
    if (a < 0 || a >= fm.n_actions()) throw ArgumentError(fmt::format("invalid action id {}", a));
    double total = 0.0;
    for (Action other = 0; other < fm.n_actions(); ++other) {
        if (margin > 0.0 && other == a) continue;
        total += std::max(0.0, row(other) - row(a) + margin);
    }
    return total;
}

double soft_penalty_buffer(const LinearQ& q, const FeatureMap& fm, const ConsistencyBuffer& buf, double margin) {
    double total = 0.0;
    for (const auto& e : buf.entries()) total += e.weight * soft_penalty_state(q, fm, e.s, e.a, margin);
    return total;
}

Eigen::VectorXd penalty_subgradient(const LinearQ& q, const FeatureMap& fm, const ConsistencyBuffer& buf,
                                    double margin) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(fm.dim());
    for (const auto& e : buf.aggregated()) {
        if (e.weight == 0.0) continue;
        const Eigen::VectorXd row = q_row(q, fm, e.s);
        for (Action other = 0; other < fm.n_actions(); ++other) {
            if (other == e.a) continue;
            if (row(other) - row(e.a) + margin > 0.0) grad += e.weight * (fm.phi(e.s, other) - fm.phi(e.s, e.a));
        }
    }
    return grad;
}

namespace {

// Rows phi(s,sigma(s)) - phi(s,a') for every assigned state and a' != sigma(s).
Eigen::MatrixXd greedy_constraints(const Assignment& sigma, const FeatureMap& fm) {
    const Assignment unique = sigma.deduplicated();
    const Eigen::Index rows = static_cast<Eigen::Index>(unique.size()) * (fm.n_actions() - 1);
    Eigen::MatrixXd g(rows, fm.dim());
    Eigen::Index r = 0;
    for (const auto& [s, a] : unique.pairs()) {
        if (s < 0 || s >= fm.n_states() || a < 0 || a >= fm.n_actions())
            throw ArgumentError(fmt::format("assignment pair ({},{}) out of range", s, a));
        for (Action other = 0; other < fm.n_actions(); ++other) {
            if (other == a) continue;
            g.row(r++) = (fm.phi(s, a) - fm.phi(s, other)).transpose();
        }
    }
    return g;
}

}  // namespace

ConsistencyCheck is_consistent(const Assignment& sigma, const FeatureMap& fm, double margin) {
    if (!(margin > 0.0)) throw ArgumentError("is_consistent: margin must be positive");
    if (sigma.is_multi()) throw ArgumentError("is_consistent: multi-assignments are never consistent");

    ConsistencyCheck out;
    const Eigen::MatrixXd g = greedy_constraints(sigma, fm);
    if (g.rows() == 0) {
        out.consistent = true;
        out.witness = LinearQ(fm.dim());
        return out;
    }
    const FeasibilityResult lp = find_feasible_point(g, Eigen::VectorXd::Constant(g.rows(), margin));
    out.phase1_objective = lp.phase1_objective;
    out.consistent = lp.feasible;
    if (lp.feasible) {
        LinearQ witness(lp.point);
        // The greedy action must agree strictly; anything else is a solver defect.
        for (const auto& [s, a] : sigma.pairs())
            if (soft_penalty_state(witness, fm, s, a) != 0.0 || greedy_action(witness, fm, s) != a)
                throw InternalError("is_consistent: witness does not realize the assignment");
        out.witness = std::move(witness);
    }
    return out;
}

std::vector<Assignment> enumerate_consistent_assignments(std::span<const State> states, const FeatureMap& fm,
                                                         const Assignment& prior, std::size_t cap) {
    const std::size_t m = static_cast<std::size_t>(fm.n_actions());
    std::size_t total = 1;
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (total > cap / m) throw SizeError(fmt::format("{}^{} assignments exceed the enumeration cap {}", m,
                                                          states.size(), cap));
        total *= m;
    }
    if (total > cap)
        throw SizeError(fmt::format("{}^{} assignments exceed the enumeration cap {}", m, states.size(), cap));
    if (prior.is_multi()) return {};

    std::vector<Assignment> out;
    // Depth-first over prefixes: an inconsistent prefix prunes its subtree
    // and lexicographic order is preserved.
    std::vector<Action> current(states.size(), 0);
    auto recurse = [&](auto&& self, std::size_t depth, const Assignment& partial) -> void {
        if (depth == states.size()) {
            out.push_back(Assignment([&] {
                std::vector<Assignment::Pair> pairs;
                for (std::size_t i = 0; i < states.size(); ++i) pairs.emplace_back(states[i], current[i]);
                return pairs;
            }()));
            return;
        }
        for (Action a = 0; a < fm.n_actions(); ++a) {
            Assignment next = partial;
            next.add(states[depth], a);
            if (next.is_multi()) continue;
            if (!is_consistent(next, fm).consistent) continue;
            current[depth] = a;
            self(self, depth + 1, next);
        }
    };
    if (!is_consistent(prior, fm).consistent) return {};
    recurse(recurse, 0, prior);
    return out;
}

bool dominates(const Assignment& sigma_a, const Assignment& sigma_b, const LinearQ& q_prev,
               const FeatureMap& fm) {
    if (sigma_a.is_multi() || sigma_b.is_multi())
        throw ArgumentError("dominates: multi-assignments are not comparable");
    const Assignment a = sigma_a.deduplicated();
    const Assignment b = sigma_b.deduplicated();
    if (a.states() != b.states()) throw ArgumentError("dominates: assignments cover different states");
    bool strict = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const State s = a.pairs()[i].first;
        const double qa = q_value(q_prev, fm, s, a.pairs()[i].second);
        const double qb = q_value(q_prev, fm, s, b.pairs()[i].second);
        if (qa < qb) return false;
        if (qa > qb) strict = true;
    }
    return strict;
}

PenaltyMinimum minimize_soft_penalty(const ConsistencyBuffer& buf, const FeatureMap& fm, double margin,
                                     int iterations, double step0) {
    PenaltyMinimum out;
    out.theta = LinearQ(fm.dim());
    out.value = soft_penalty_buffer(out.theta, fm, buf, margin);
    if (buf.empty() || out.value == 0.0) return out;

    // no step0: Polyak steps aimed at -margin, in the metric of the constraint
    // Gram matrix so thin consistent cones are not crossed by zig-zagging
    const bool polyak = !(step0 > 0.0);
    const int d = fm.dim();
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
    if (polyak) {
        for (const auto& e : buf.aggregated())
            for (Action other = 0; other < fm.n_actions(); ++other) {
                if (other == e.a) continue;
                const Eigen::VectorXd x = fm.phi(e.s, other) - fm.phi(e.s, e.a);
                gram.noalias() += x * x.transpose();
            }
        gram.diagonal().array() += 1e-9 * std::max(gram.trace() / d, 1e-12);
    }
    const Eigen::LDLT<Eigen::MatrixXd> metric(gram);
    const double target = std::max(margin, 0.0);

    LinearQ theta = out.theta;
    double value = out.value;
    for (int t = 1; t <= iterations; ++t) {
        const Eigen::VectorXd g = penalty_subgradient(theta, fm, buf, margin);
        if (g.squaredNorm() == 0.0) break;
        if (polyak) {
            const Eigen::VectorXd dir = metric.solve(g);
            const double gg = g.dot(dir);
            if (!(gg > 0.0)) break;
            theta.theta -= ((value + target) / gg) * dir;
        } else {
            theta.theta -= (step0 / std::sqrt(static_cast<double>(t))) * g;
        }
        value = soft_penalty_buffer(theta, fm, buf, margin);
        out.iterations = t;
        if (value < out.value) {
            out.value = value;
            out.theta = theta;
            if (value == 0.0) break;
        }
    }
    return out;
}

}  // namespace conqur
