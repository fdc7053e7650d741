#include <cmath>

#include "doctest.h"

#include "conqur/consistency.hpp"
#include "conqur/features.hpp"
#include "conqur/instances.hpp"
#include "conqur/rng.hpp"

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

Eigen::VectorXd random_theta(int d, Rng& rng) {
    Eigen::VectorXd t(d);
    for (int i = 0; i < d; ++i) t(i) = rng.normal();
    return t;
}

}  // namespace

TEST_CASE("q_value basics") {
    FeatureMap fm(1, 1, 1);
    fm.phi(0, 0)(0) = 3.0;
    CHECK(q_value(LinearQ(Eigen::VectorXd::Constant(1, 2.0)), fm, 0, 0) == 6.0);
    CHECK(q_value(LinearQ(1), fm, 0, 0) == 0.0);
}

TEST_CASE("q_value against a reversed-order dot product") {
    const FeatureMap fm = random_features(3, 2, 4, 11);
    Rng rng(5);
    const LinearQ q(random_theta(4, rng));
    for (State s = 0; s < 3; ++s) {
        for (Action a = 0; a < 2; ++a) {
            double dot = 0.0;
            for (int i = 3; i >= 0; --i) dot += q.theta(i) * fm.phi(s, a)(i);
            CHECK(q_value(q, fm, s, a) == doctest::Approx(dot).epsilon(1e-15));
        }
    }
}

TEST_CASE("q_value is linear in theta") {
    const FeatureMap fm = random_features(4, 3, 3, 2);
    Rng rng(9);
    for (int k = 0; k < 20; ++k) {
        const Eigen::VectorXd t1 = random_theta(3, rng), t2 = random_theta(3, rng);
        for (State s = 0; s < 4; ++s)
            for (Action a = 0; a < 3; ++a)
                CHECK(std::abs(q_value(LinearQ(t1 + t2), fm, s, a) - q_value(LinearQ(t1), fm, s, a) -
                               q_value(LinearQ(t2), fm, s, a)) <= 1e-12);
    }
}

TEST_CASE("q_value rejects mismatched dimensions") {
    const FeatureMap fm = random_features(2, 2, 3, 1);
    CHECK_THROWS(q_value(LinearQ(2), fm, 0, 0));
}

TEST_CASE("greedy action ties and dominance") {
    const FeatureMap fm = random_features(3, 3, 2, 4);
    const LinearQ zero(2);
    for (State s = 0; s < 3; ++s) CHECK(greedy_action(zero, fm, s) == 0);
    CHECK(greedy_policy(zero, fm).action_of == std::vector<Action>{0, 0, 0});

    FeatureMap dom(1, 3, 1);
    dom.phi(0, 0)(0) = 1.0;
    dom.phi(0, 1)(0) = 5.0;
    dom.phi(0, 2)(0) = 2.0;
    const LinearQ one(Eigen::VectorXd::Ones(1));
    Rng rng(2);
    CHECK(greedy_action(one, dom, 0) == 1);
    CHECK(greedy_action(one, dom, 0, TieRule::SeededRandom, &rng) == 1);
}

TEST_CASE("seeded random ties draw among tied actions only") {
    FeatureMap fm(1, 3, 1);
    fm.phi(0, 0)(0) = 1.0;
    fm.phi(0, 1)(0) = 1.0;
    fm.phi(0, 2)(0) = 0.0;
    const LinearQ q(Eigen::VectorXd::Ones(1));
    Rng rng(8);
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < 2000; ++i) ++counts[greedy_action(q, fm, 0, TieRule::SeededRandom, &rng)];
    CHECK(counts[2] == 0);
    CHECK(counts[0] > 800);
    CHECK(counts[1] > 800);
}

TEST_CASE("greedy policy is invariant under positive scaling") {
    const FeatureMap fm = random_features(5, 3, 3, 21);
    Rng rng(4);
    for (int k = 0; k < 20; ++k) {
        const Eigen::VectorXd t = random_theta(3, rng);
        const double c = 0.01 + 10.0 * rng.uniform();
        CHECK(greedy_policy(LinearQ(t), fm) == greedy_policy(LinearQ(c * t), fm));
    }
}

TEST_CASE("single-action MDP has one policy") {
    const FeatureMap fm = random_features(3, 1, 2, 3);
    Rng rng(1);
    CHECK(greedy_policy(LinearQ(random_theta(2, rng)), fm).action_of == std::vector<Action>{0, 0, 0});
}

TEST_CASE("witness of the chain's best feasible assignment is greedy for it") {
    const Instance inst = make_delusion_chain();
    // s1:a1, s2:a2, s3:a2, s4:a2 or any completion; ask the LP for s1:a1 and s4:a2.
    const Assignment sigma({{0, 0}, {3, 1}});
    const auto check = is_consistent(sigma, inst.fm);
    REQUIRE(check.consistent);
    const Policy pi = greedy_policy(*check.witness, inst.fm);
    CHECK(pi(0) == 0);
    CHECK(pi(3) == 1);
}

TEST_CASE("one-hot features and tabulation") {
    const FeatureMap fm = FeatureMap::one_hot(2, 2);
    CHECK(fm.dim() == 4);
    const LinearQ q(Eigen::Vector4d(1, 2, 3, 4));
    const QTable t = tabulate(q, fm);
    CHECK(t(0, 0) == 1.0);
    CHECK(t(0, 1) == 2.0);
    CHECK(t(1, 0) == 3.0);
    CHECK(t(1, 1) == 4.0);
}
