#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"

#include "conqur/consistency.hpp"
#include "conqur/error.hpp"
#include "conqur/oracles.hpp"
#include "conqur/rng.hpp"
#include "conqur/simplex.hpp"

using namespace conqur;

namespace {

FeatureMap random_features(int n, int m, int d, std::uint64_t seed) {
    Rng rng(seed);
    FeatureMap fm(n, m, d);
    for (State s = 0; s < n; ++s)
        for (Action a = 0; a < m; ++a)
            for (int i = 0; i < d; ++i) fm.phi(s, a)(i) = rng.normal();
    return fm;
}

// Q(s, .) = (1, 3) with d = 1 and theta = 1.
FeatureMap one_three() {
    FeatureMap fm(1, 2, 1);
    fm.phi(0, 0)(0) = 1.0;
    fm.phi(0, 1)(0) = 3.0;
    return fm;
}

double central_difference(const LinearQ& q, const FeatureMap& fm, const ConsistencyBuffer& buf, int i, double h) {
    LinearQ up = q, down = q;
    up.theta(i) += h;
    down.theta(i) -= h;
    return (soft_penalty_buffer(up, fm, buf) - soft_penalty_buffer(down, fm, buf)) / (2 * h);
}

}  // namespace

TEST_CASE("successor states") {
    CHECK(successor_states({}).empty());
    const std::vector<Transition> two{{0, 0, 0.0, 3, false}, {1, 1, 0.0, 3, false}};
    CHECK(successor_states(two) == std::vector<State>{3});

    Rng rng(4);
    std::vector<Transition> batch;
    for (int i = 0; i < 5; ++i)
        batch.push_back({0, 0, 0.0, static_cast<State>(rng.below(4)), false});
    std::set<State> seen;
    for (const auto& t : batch) seen.insert(t.s_next);
    CHECK(successor_states(batch) == std::vector<State>(seen.begin(), seen.end()));
}

TEST_CASE("bootstrap states skip terminal successors") {
    const std::vector<Transition> batch{{0, 0, 0.0, 1, false}, {0, 1, 0.0, 2, true}};
    CHECK(bootstrap_states(batch) == std::vector<State>{1});
}

TEST_CASE("union of assignments") {
    const Assignment s({{0, 1}, {2, 0}});
    CHECK(union_assignments(s, {}) == s);
    const Assignment same = union_assignments(Assignment({{0, 0}}), Assignment({{0, 0}}));
    CHECK(same.size() == 2);
    CHECK(!same.is_multi());
    CHECK(same.deduplicated().size() == 1);
    CHECK(union_assignments(Assignment({{0, 0}}), Assignment({{0, 1}})).is_multi());
}

TEST_CASE("soft penalty by hand") {
    const FeatureMap fm = one_three();
    const LinearQ q(Eigen::VectorXd::Ones(1));
    CHECK(soft_penalty_state(q, fm, 0, 0) == 2.0);
    CHECK(soft_penalty_state(q, fm, 0, 1) == 0.0);
    FeatureMap single(1, 1, 1);
    single.phi(0, 0)(0) = 4.0;
    CHECK(soft_penalty_state(q, single, 0, 0) == 0.0);
}

TEST_CASE("soft penalty is zero exactly at the maximizing action") {
    const FeatureMap fm = random_features(3, 3, 2, 17);
    Rng rng(2);
    for (int k = 0; k < 30; ++k) {
        const LinearQ q(Eigen::Vector2d(rng.normal(), rng.normal()));
        for (State s = 0; s < 3; ++s) {
            const Eigen::VectorXd row = q_row(q, fm, s);
            for (Action a = 0; a < 3; ++a) {
                const double p = soft_penalty_state(q, fm, s, a);
                CHECK(p >= 0.0);
                CHECK((p == 0.0) == (row(a) == row.maxCoeff()));
            }
        }
    }
}

TEST_CASE("buffer penalty is additive") {
    const FeatureMap fm = random_features(3, 3, 2, 5);
    const LinearQ q(Eigen::Vector2d(0.3, -1.2));
    CHECK(soft_penalty_buffer(q, fm, ConsistencyBuffer()) == 0.0);

    ConsistencyBuffer one, twice;
    one.push(1, 2);
    twice.push(1, 2);
    twice.push(1, 2);
    CHECK(soft_penalty_buffer(q, fm, twice) == doctest::Approx(2 * soft_penalty_buffer(q, fm, one)));

    ConsistencyBuffer three;
    three.push(Assignment({{0, 1}, {1, 0}, {2, 2}}));
    const double sum = soft_penalty_state(q, fm, 0, 1) + soft_penalty_state(q, fm, 1, 0) +
                       soft_penalty_state(q, fm, 2, 2);
    CHECK(soft_penalty_buffer(q, fm, three) == doctest::Approx(sum).epsilon(1e-15));
}

TEST_CASE("buffer capacity policies") {
    ConsistencyBuffer window(BufferPolicy::Window, 2, 1.0);
    window.push(Assignment({{0, 0}, {1, 1}, {2, 0}}));
    CHECK(window.size() == 2);
    CHECK(window.entries().front().s == 1);

    ConsistencyBuffer weighted;
    weighted.push(0, 1, 0.5);
    weighted.push(0, 1, 0.25);
    const auto agg = weighted.aggregated();
    REQUIRE(agg.size() == 1);
    CHECK(agg[0].weight == 0.75);
}

TEST_CASE("soft penalty is convex") {
    const FeatureMap fm = random_features(4, 3, 3, 8);
    ConsistencyBuffer buf;
    buf.push(Assignment({{0, 1}, {1, 0}, {2, 2}, {3, 1}}));
    Rng rng(6);
    for (int k = 0; k < 200; ++k) {
        Eigen::Vector3d a(rng.normal(), rng.normal(), rng.normal());
        Eigen::Vector3d b(rng.normal(), rng.normal(), rng.normal());
        const double t = rng.uniform();
        const double mid = soft_penalty_buffer(LinearQ(Eigen::VectorXd(t * a + (1 - t) * b)), fm, buf);
        const double chord = t * soft_penalty_buffer(LinearQ(Eigen::VectorXd(a)), fm, buf) +
                             (1 - t) * soft_penalty_buffer(LinearQ(Eigen::VectorXd(b)), fm, buf);
        CHECK(mid <= chord + 1e-12);
    }
}

TEST_CASE("penalty subgradient") {
    const FeatureMap fm = random_features(4, 3, 3, 12);
    const auto all = enumerate_consistent_assignments(std::vector<State>{0, 1, 3}, fm);
    REQUIRE(!all.empty());
    ConsistencyBuffer buf;
    buf.push(all.back());
    CHECK(penalty_subgradient(LinearQ(3), fm, ConsistencyBuffer()).isZero());

    // Inside the consistent region the penalty is flat.
    const auto check = is_consistent(buf.as_assignment(), fm);
    REQUIRE(check.consistent);
    CHECK(penalty_subgradient(*check.witness, fm, buf).isZero());

    Rng rng(31);
    for (int k = 0; k < 50; ++k) {
        const LinearQ q(Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()));
        const Eigen::VectorXd g = penalty_subgradient(q, fm, buf);
        for (int i = 0; i < 3; ++i) {
            const double fd = central_difference(q, fm, buf, i, 1e-6);
            CHECK(std::abs(g(i) - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("is_consistent examples") {
    const FeatureMap fm = random_features(2, 2, 2, 1);
    const auto empty = is_consistent(Assignment(), fm);
    CHECK(empty.consistent);

    FeatureMap line(1, 2, 1);
    line.phi(0, 0)(0) = 1.0;
    line.phi(0, 1)(0) = -1.0;
    const auto one = is_consistent(Assignment({{0, 0}}), line);
    REQUIRE(one.consistent);
    CHECK(one.witness->theta(0) > 0.0);
    CHECK(greedy_action(*one.witness, line, 0) == 0);

    FeatureMap twins(2, 2, 2);
    twins.phi(0, 0) = Eigen::Vector2d(1, 0);
    twins.phi(0, 1) = Eigen::Vector2d(0, 1);
    twins.phi(1, 0) = twins.phi(0, 0);
    twins.phi(1, 1) = twins.phi(0, 1);
    const auto split = is_consistent(Assignment({{0, 0}, {1, 1}}), twins);
    CHECK(!split.consistent);
    CHECK(split.phase1_objective > 0.0);

    CHECK_THROWS_AS(is_consistent(Assignment({{0, 0}, {0, 1}}), fm), ArgumentError);
    CHECK_THROWS_AS(is_consistent(Assignment({{0, 0}}), fm, 0.0), ArgumentError);
}

TEST_CASE("witness zeroes the penalty and realizes the assignment") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const FeatureMap fm = random_features(4, 3, 3, 100 + seed);
        Rng rng(seed);
        Assignment sigma;
        for (State s = 0; s < 4; ++s) sigma.add(s, static_cast<Action>(rng.below(3)));
        const auto check = is_consistent(sigma, fm);
        if (!check.consistent) continue;
        ConsistencyBuffer buf;
        buf.push(sigma);
        CHECK(soft_penalty_buffer(*check.witness, fm, buf) == 0.0);
        for (const auto& [s, a] : sigma.pairs()) CHECK(greedy_action(*check.witness, fm, s) == a);
    }
}

TEST_CASE("simplex feasibility on small systems") {
    Eigen::MatrixXd g(2, 1);
    g << 1, -1;
    Eigen::VectorXd h(2);
    h << 1, -3;  // 1 <= x <= 3
    const auto ok = find_feasible_point(g, h);
    REQUIRE(ok.feasible);
    CHECK(ok.point(0) >= 1.0 - 1e-9);
    CHECK(ok.point(0) <= 3.0 + 1e-9);
    h << 4, -3;  // 4 <= x <= 3
    const auto bad = find_feasible_point(g, h);
    CHECK(!bad.feasible);
    CHECK(bad.phase1_objective > 0.0);
}

TEST_CASE("enumeration of consistent assignments") {
    const std::vector<State> states{0, 1};
    const auto all = enumerate_consistent_assignments(states, FeatureMap::one_hot(2, 3));
    CHECK(all.size() == 9);

    FeatureMap twins(2, 2, 1);
    twins.phi(0, 0)(0) = 1.0;
    twins.phi(0, 1)(0) = -1.0;
    twins.phi(1, 0)(0) = 1.0;
    twins.phi(1, 1)(0) = -1.0;
    const auto agree = enumerate_consistent_assignments(states, twins);
    REQUIRE(agree.size() == 2);
    CHECK(agree[0] == Assignment({{0, 0}, {1, 0}}));
    CHECK(agree[1] == Assignment({{0, 1}, {1, 1}}));

    const FeatureMap generic = random_features(2, 2, 1, 77);
    const auto g = enumerate_consistent_assignments(states, generic);
    CHECK(g.size() <= 8);

    CHECK_THROWS_AS(enumerate_consistent_assignments(std::vector<State>{0, 1}, FeatureMap::one_hot(2, 3), {}, 8),
                    SizeError);
}

TEST_CASE("enumeration is closed under the witness check") {
    const FeatureMap fm = random_features(3, 3, 2, 9);
    const std::vector<State> states{0, 1, 2};
    const auto kept = enumerate_consistent_assignments(states, fm);
    std::set<std::vector<Assignment::Pair>> kept_set;
    for (const auto& a : kept) kept_set.insert(a.pairs());
    for (int code = 0; code < 27; ++code) {
        Assignment sigma({{0, code / 9}, {1, (code / 3) % 3}, {2, code % 3}});
        const auto check = is_consistent(sigma, fm);
        CHECK(check.consistent == (kept_set.count(sigma.pairs()) == 1));
        if (!check.consistent) CHECK(check.phase1_objective > 0.0);
    }
}

TEST_CASE("enumeration respects a prior") {
    const FeatureMap fm = random_features(3, 2, 2, 14);
    const Assignment prior({{2, 1}});
    for (const auto& a : enumerate_consistent_assignments(std::vector<State>{0, 1}, fm, prior))
        CHECK(is_consistent(union_assignments(a, prior), fm).consistent);
}

TEST_CASE("dominance") {
    const FeatureMap fm = random_features(3, 3, 2, 3);
    const LinearQ q(Eigen::Vector2d(0.7, -0.4));
    const Assignment argmax({{0, greedy_action(q, fm, 0)}, {1, greedy_action(q, fm, 1)}, {2, greedy_action(q, fm, 2)}});
    CHECK(!dominates(argmax, argmax, q, fm));

    Rng rng(10);
    for (int k = 0; k < 50; ++k) {
        Assignment a, b;
        for (State s = 0; s < 3; ++s) {
            a.add(s, static_cast<Action>(rng.below(3)));
            b.add(s, static_cast<Action>(rng.below(3)));
        }
        if (!(b == argmax)) CHECK(dominates(argmax, b, q, fm));
        bool ge = true, gt = false;
        for (State s = 0; s < 3; ++s) {
            const double qa = q_value(q, fm, s, *a.action_for(s));
            const double qb = q_value(q, fm, s, *b.action_for(s));
            ge = ge && qa >= qb;
            gt = gt || qa > qb;
        }
        CHECK(dominates(a, b, q, fm) == (ge && gt));
    }
    CHECK_THROWS_AS(dominates(Assignment({{0, 0}}), Assignment({{1, 0}}), q, fm), ArgumentError);
}

TEST_CASE("minimized penalty vanishes on consistent buffers") {
    const FeatureMap fm = random_features(3, 2, 2, 40);
    const auto all = enumerate_consistent_assignments(std::vector<State>{0, 1, 2}, fm);
    REQUIRE(!all.empty());
    ConsistencyBuffer buf;
    buf.push(all.front());
    CHECK(minimize_soft_penalty(buf, fm, 1.0).value <= 1e-6);
}
