#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "conqur/features.hpp"
#include "conqur/mdp.hpp"
#include "conqur/rng.hpp"

namespace conqur {

/// Multiset of (state, action) pairs, kept sorted. A state may carry more
/// than one distinct action, in which case the assignment is a
/// multi-assignment.
class Assignment {
public:
    using Pair = std::pair<State, Action>;

    Assignment() = default;
    explicit Assignment(std::vector<Pair> pairs);

    void add(State s, Action a);

    const std::vector<Pair>& pairs() const { return pairs_; }
    bool empty() const { return pairs_.empty(); }
    std::size_t size() const { return pairs_.size(); }

    /// True iff some state maps to two or more distinct actions.
    bool is_multi() const;

    /// Distinct states, ascending.
    std::vector<State> states() const;

    /// The (first) action assigned to `s`, if any.
    std::optional<Action> action_for(State s) const;

    /// Same pairs with duplicates removed.
    Assignment deduplicated() const;

    bool operator==(const Assignment&) const = default;

private:
    std::vector<Pair> pairs_;
};

Assignment union_assignments(const Assignment& a, const Assignment& b);

/// Distinct successor states of a batch, ascending.
std::vector<State> successor_states(std::span<const Transition> batch);

/// Distinct non-terminal successor states, the ones whose labels bootstrap.
std::vector<State> bootstrap_states(std::span<const Transition> batch);

enum class BufferPolicy { AllHistory, Window, Subsample };

/// Multiset of penalized (state, assigned action) pairs with optional
/// weights, in insertion order.
class ConsistencyBuffer {
public:
    struct Entry {
        State s;
        Action a;
        double weight;
    };

    ConsistencyBuffer() = default;
    /// `window` applies to BufferPolicy::Window, `rate` to Subsample.
    ConsistencyBuffer(BufferPolicy policy, std::size_t window, double rate);

    /// Appends pairs with the given weight, then applies the capacity policy.
    /// Subsampling draws from `rng` (required for that policy).
    void push(const Assignment& sigma, double weight = 1.0, Rng* rng = nullptr);
    void push(State s, Action a, double weight = 1.0);

    const std::deque<Entry>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

    BufferPolicy policy() const { return policy_; }
    std::size_t window() const { return window_; }
    double rate() const { return rate_; }

    /// Pairs merged by (s, a) with summed weights, sorted.
    std::vector<Entry> aggregated() const;

    /// The buffer's pairs as an assignment (weights dropped).
    Assignment as_assignment() const;

private:
    void trim();

    BufferPolicy policy_ = BufferPolicy::AllHistory;
    std::size_t window_ = 0;
    double rate_ = 1.0;
    std::deque<Entry> entries_;
};

/// sum_{a'} [Q(s,a') - Q(s,a) + margin]_+ . With margin 0 this is the
/// literal soft penalty (the a' = a term is 0). With a positive margin the
/// a' = a term is skipped, giving a hinge whose zero set is exactly the
/// margin-strict greedy region.
double soft_penalty_state(const LinearQ& q, const FeatureMap& fm, State s, Action a, double margin = 0.0);

/// Weighted sum of soft_penalty_state over buffer pairs.
double soft_penalty_buffer(const LinearQ& q, const FeatureMap& fm, const ConsistencyBuffer& buf,
                           double margin = 0.0);

/// A subgradient of soft_penalty_buffer in theta: active terms (strictly
/// positive hinge argument) contribute phi(s,a') - phi(s,a); exact ties
/// contribute nothing.
Eigen::VectorXd penalty_subgradient(const LinearQ& q, const FeatureMap& fm, const ConsistencyBuffer& buf,
                                    double margin = 0.0);

struct ConsistencyCheck {
    bool consistent = false;
    std::optional<LinearQ> witness;
    double phase1_objective = 0.0;  // > 0 certifies infeasibility
};

/// Exact Theta-consistency by linear feasibility:
/// theta . (phi(s,sigma(s)) - phi(s,a')) >= margin for all assigned s, a' != sigma(s).
/// Throws ArgumentError on multi-assignments or a non-positive margin.
ConsistencyCheck is_consistent(const Assignment& sigma, const FeatureMap& fm, double margin = 1.0);

inline constexpr std::size_t kDefaultEnumerationCap = 1'000'000;

/// All full assignments over `states` (in the given order, first state most
/// significant, actions ascending) whose union with `prior` is consistent.
/// Throws SizeError when n_actions^|states| exceeds `cap`.
std::vector<Assignment> enumerate_consistent_assignments(std::span<const State> states, const FeatureMap& fm,
                                                         const Assignment& prior = {},
                                                         std::size_t cap = kDefaultEnumerationCap);

/// sigma_a dominates sigma_b under q_prev: >= at every state, > at one.
/// Throws ArgumentError for mismatched state sets or multi-assignments.
bool dominates(const Assignment& sigma_a, const Assignment& sigma_b, const LinearQ& q_prev,
               const FeatureMap& fm);

struct PenaltyMinimum {
    double value = 0.0;
    LinearQ theta;
    int iterations = 0;
};

/// min_theta C(B) by subgradient descent from theta = 0 with steps
/// step0 / sqrt(t). A non-positive step0 selects Polyak steps aimed at
/// -margin, preconditioned by the Gram matrix of phi(s,a') - phi(s,a).
/// Returns the best iterate; on inconsistent buffers its value is only an
/// upper bound on the minimum.
PenaltyMinimum minimize_soft_penalty(const ConsistencyBuffer& buf, const FeatureMap& fm, double margin,
                                     int iterations = 10'000, double step0 = 0.0);

}  // namespace conqur
