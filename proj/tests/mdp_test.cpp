#include <cmath>

#include "doctest.h"

#include "conqur/error.hpp"
#include "conqur/instances.hpp"
#include "conqur/mdp.hpp"
#include "conqur/oracles.hpp"
#include "conqur/rng.hpp"

using namespace conqur;

namespace {

// Two live states, one terminal. From s0: a0 stays (r=1), a1 ends (r=5).
// s1 is never reached but keeps the table honest.
Mdp two_state() {
    Mdp m(3, 2, 0.5);
    m.p(0, 0, 0) = 1.0;
    m.r(0, 0) = 1.0;
    m.p(0, 1, 2) = 1.0;
    m.r(0, 1) = 5.0;
    m.p(1, 0, 2) = 1.0;
    m.p(1, 1, 2) = 1.0;
    m.initial[0] = 1.0;
    m.make_terminal(2);
    return m;
}

}  // namespace

TEST_CASE("validate_mdp accepts a well formed table and names bad entries") {
    Mdp m = two_state();
    CHECK(validate_mdp(m).empty());
    m.p(0, 0, 0) = 0.7;
    const auto bad = validate_mdp(m);
    REQUIRE(!bad.empty());
    CHECK(bad.front().find("0") != std::string::npos);
}

TEST_CASE("terminal states loop with zero reward") {
    const Mdp m = two_state();
    for (Action a = 0; a < 2; ++a) {
        CHECK(m.p(2, a, 2) == 1.0);
        CHECK(m.r(2, a) == 0.0);
    }
}

TEST_CASE("policy values by hand") {
    const Mdp m = two_state();
    // Staying forever: 1 / (1 - 0.5) = 2. Ending at once: 5.
    CHECK(policy_value(m, Policy{{0, 0, 0}}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(policy_value(m, Policy{{1, 0, 0}}) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("value iteration reaches the hand optimum with a small residual") {
    const Mdp m = two_state();
    const auto vi = value_iteration(m, 1e-12, 10000);
    CHECK(vi.converged);
    CHECK(vi.residual <= 1e-12);
    CHECK(bellman_residual(m, vi.q) <= 1e-12);
    // Q*(s0,a0) = 1 + 0.5 * 5 = 3.5, Q*(s0,a1) = 5.
    CHECK(vi.q(0, 0) == doctest::Approx(3.5).epsilon(1e-10));
    CHECK(vi.q(0, 1) == doctest::Approx(5.0).epsilon(1e-10));
}

TEST_CASE("value iteration out of sweeps raises a convergence error") {
    const Mdp m = two_state();
    CHECK_THROWS_AS(value_iteration(m, 1e-15, 1), ConvergenceError);
}

TEST_CASE("exact and iterative evaluation agree on 50 random MDPs") {
    const double tol = 1e-10;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto inst = make_random_mdp(6, 3, 4, seed);
        Rng rng(seed);
        Policy pi{std::vector<Action>(6)};
        for (auto& a : pi.action_of) a = static_cast<Action>(rng.below(3));
        const auto exact = policy_evaluation_exact(inst.mdp, pi);
        const auto iter = policy_evaluation_iterative(inst.mdp, pi, tol, 100000);
        for (std::size_t s = 0; s < exact.size(); ++s) CHECK(std::abs(exact[s] - iter[s]) <= 10 * tol);
    }
}

TEST_CASE("no policy beats the optimal value") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto inst = make_random_mdp(5, 2, 3, seed);
        const auto vi = value_iteration(inst.mdp, 1e-12, 100000);
        double v_star = 0.0;
        for (State s = 0; s < inst.mdp.n_states; ++s) v_star += inst.mdp.initial[s] * vi.q.max_at(s);
        // All 2^5 policies.
        for (int bits = 0; bits < 32; ++bits) {
            Policy pi{std::vector<Action>(5)};
            for (int s = 0; s < 5; ++s) pi.action_of[s] = (bits >> s) & 1;
            CHECK(policy_value(inst.mdp, pi) <= v_star + 1e-9);
        }
    }
}

TEST_CASE("bellman operator against a direct scan") {
    const auto inst = make_random_mdp(4, 2, 2, 7);
    QTable q(4, 2);
    Rng rng(3);
    for (auto& x : q.q) x = rng.uniform();
    const QTable tq = bellman_optimality(inst.mdp, q);
    for (State s = 0; s < 4; ++s) {
        for (Action a = 0; a < 2; ++a) {
            double expect = inst.mdp.r(s, a);
            for (State t = 3; t >= 0; --t)
                expect += inst.mdp.gamma * inst.mdp.p(s, a, t) * std::max(q(t, 0), q(t, 1));
            CHECK(tq(s, a) == doctest::Approx(expect).epsilon(1e-13));
        }
    }
}

TEST_CASE("step follows the transition table") {
    const Mdp m = two_state();
    Rng rng(1);
    const auto r = step(m, 0, 1, rng);
    CHECK(r.next == 2);
    CHECK(r.reward == 5.0);
    const auto t = step(m, 2, 0, rng);
    CHECK(t.next == 2);
    CHECK(t.reward == 0.0);
    CHECK(sample_initial(m, rng) == 0);
}

TEST_CASE("random MDPs are valid and deterministic") {
    const auto a = make_random_mdp(8, 3, 3, 42);
    const auto b = make_random_mdp(8, 3, 3, 42);
    CHECK(validate_mdp(a.mdp).empty());
    CHECK(a.mdp.transition == b.mdp.transition);
    CHECK(a.mdp.reward == b.mdp.reward);
    CHECK(a.fm == b.fm);
    const auto c = make_random_mdp(8, 3, 3, 43);
    CHECK(a.mdp.reward != c.mdp.reward);
    CHECK_THROWS_AS(make_random_mdp(1, 3, 1, 0), ArgumentError);
    CHECK_THROWS_AS(make_random_mdp(4, 2, 9, 0), ArgumentError);
}

TEST_CASE("delusion-prone sampling keeps only instances with a gap") {
    const auto inst = make_delusion_prone_mdp(6, 2, 2, 5, 0.01);
    CHECK(delusion_gap(inst, 0.01).prone());
}

TEST_CASE("delusion chain certification") {
    const Instance inst = make_delusion_chain();
    const auto cert = certify_delusion_chain(inst);
    CHECK(cert.ok());
    CHECK(cert.optimal_is_all_a2);
    CHECK(cert.all_a2_inconsistent);
    CHECK(cert.best_feasible_value == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(cert.compromise_value == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(cert.fqi_reaches_compromise);
    CHECK(validate_mdp(inst.mdp).empty());
}

TEST_CASE("a broken chain fails certification") {
    auto params = delusion_chain_params();
    params.r42 = 0.0;
    const auto cert = certify_delusion_chain(build_delusion_chain(params));
    CHECK(!cert.ok());
}
