#include "conqur/instances.hpp"

#include <cmath>

#include <fmt/format.h>

#include "conqur/consistency.hpp"
#include "conqur/error.hpp"
#include "conqur/linalg.hpp"
#include "conqur/oracles.hpp"

namespace conqur {

Instance make_random_mdp(int n_states, int n_actions, int feature_dim, std::uint64_t seed) {
    if (n_states < 2 || n_actions < 2)
        throw ArgumentError("make_random_mdp: need at least 2 states and 2 actions");
    if (feature_dim < 1 || feature_dim > n_states * n_actions)
        throw ArgumentError(fmt::format("make_random_mdp: feature_dim {} outside [1, {}]", feature_dim,
                                        n_states * n_actions));

    Rng rng = split_stream(seed, "random-mdp", 0);
    Mdp mdp(n_states, n_actions, 0.9);
    const State end = n_states - 1;
    const int live = n_states - 1;
    for (State s = 0; s < live; ++s) {
        for (Action a = 0; a < n_actions; ++a) {
            double weights[3];
            State targets[3];
            double total = 0.0;
            for (int k = 0; k < 3; ++k) {
                targets[k] = static_cast<State>(rng.below(static_cast<std::uint64_t>(live)));
                weights[k] = 0.1 + rng.uniform();
                total += weights[k];
            }
            for (int k = 0; k < 3; ++k) mdp.p(s, a, targets[k]) += 0.9 * weights[k] / total;
            mdp.p(s, a, end) += 0.1;
            // Renormalize so the row sums to 1 to the last ulp.
            double sum = 0.0;
            for (State t = 0; t < n_states; ++t) sum += mdp.p(s, a, t);
            mdp.p(s, a, end) += 1.0 - sum;
            mdp.r(s, a) = rng.uniform();
        }
        mdp.initial[s] = 1.0 / live;
    }
    double p0_sum = 0.0;
    for (State s = 0; s + 1 < live; ++s) p0_sum += mdp.initial[s];
    mdp.initial[live - 1] = 1.0 - p0_sum;
    mdp.make_terminal(end);

    FeatureMap fm = feature_dim == n_states * n_actions ? FeatureMap::one_hot(n_states, n_actions)
                                                        : FeatureMap(n_states, n_actions, feature_dim);
    if (feature_dim < n_states * n_actions) {
        Rng frng = split_stream(seed, "random-features", 0);
        for (State s = 0; s < live; ++s)
            for (Action a = 0; a < n_actions; ++a)
                for (int i = 0; i < feature_dim; ++i) fm.phi(s, a)(i) = frng.normal();
    }
    return {std::move(mdp), std::move(fm)};
}

Instance build_delusion_chain(const DelusionChainParams& params) {
    constexpr State s1 = 0, s2 = 1, s3 = 2, s4 = 3, end = 4;
    constexpr Action a1 = 0, a2 = 1;
    Mdp mdp(5, 2, params.gamma);
    mdp.p(s1, a1, s4) = 1.0;
    mdp.p(s1, a2, s2) = 1.0;
    mdp.r(s1, a2) = params.r12;
    mdp.p(s2, a1, end) = 1.0;
    mdp.p(s2, a2, s3) = 1.0;
    mdp.p(s3, a1, end) = 1.0;
    mdp.p(s3, a2, s4) = 1.0;
    mdp.p(s4, a1, end) = 1.0;
    mdp.r(s4, a1) = params.r41;
    mdp.p(s4, a2, end) = 1.0;
    mdp.r(s4, a2) = params.r42;
    mdp.initial[s1] = 1.0;
    mdp.make_terminal(end);

    FeatureMap fm(5, 2, params.dim);
    for (State s = 0; s < 4; ++s) {
        for (Action a = 0; a < 2; ++a) {
            const auto& v = params.phi[s][a];
            if (static_cast<int>(v.size()) != params.dim)
                throw ArgumentError("build_delusion_chain: feature vector has the wrong length");
            for (int i = 0; i < params.dim; ++i) fm.phi(s, a)(i) = v[i];
        }
    }
    (void)a2;
    return {std::move(mdp), std::move(fm)};
}

std::vector<double> occupancy(const Mdp& mdp, const Policy& policy, double eps) {
    const int n = mdp.n_states;
    const int m = mdp.n_actions;
    auto prob = [&](State s, Action a) {
        return eps / m + (a == policy(s) ? 1.0 - eps : 0.0);
    };
    // Visits v solve v = p0 + P_eps' v over live states.
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b(n);
    for (State s = 0; s < n; ++s) b(s) = mdp.is_terminal(s) ? 0.0 : mdp.initial[s];
    for (State s = 0; s < n; ++s) {
        if (mdp.is_terminal(s)) continue;
        for (Action act = 0; act < m; ++act)
            for (State t = 0; t < n; ++t)
                if (!mdp.is_terminal(t)) a(t, s) -= prob(s, act) * mdp.p(s, act, t);
    }
    const Eigen::VectorXd v = solve_refined(a, b);
    std::vector<double> out(static_cast<std::size_t>(n) * m, 0.0);
    for (State s = 0; s < n; ++s)
        if (!mdp.is_terminal(s))
            for (Action act = 0; act < m; ++act) out[static_cast<std::size_t>(s) * m + act] = v(s) * prob(s, act);
    return out;
}

ExpectedFqiResult expected_fqi(const Mdp& mdp, const FeatureMap& fm, double eps, int max_iter) {
    ExpectedFqiResult out;
    LinearQ q(fm.dim());
    const int m = mdp.n_actions;
    for (int it = 0; it < max_iter; ++it) {
        const Policy behaviour = greedy_policy(q, fm);
        const auto w = occupancy(mdp, behaviour, eps);
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(fm.dim(), fm.dim());
        Eigen::VectorXd b = Eigen::VectorXd::Zero(fm.dim());
        for (State s = 0; s < mdp.n_states; ++s) {
            for (Action a = 0; a < m; ++a) {
                const double weight = w[static_cast<std::size_t>(s) * m + a];
                if (weight <= 0.0) continue;
                double label = mdp.r(s, a);
                for (State t = 0; t < mdp.n_states; ++t) {
                    const double p = mdp.p(s, a, t);
                    if (p == 0.0 || mdp.is_terminal(t)) continue;
                    label += mdp.gamma * p * q_row(q, fm, t).maxCoeff();
                }
                h += weight * fm.phi(s, a) * fm.phi(s, a).transpose();
                b += weight * label * fm.phi(s, a);
            }
        }
        LinearQ next(h.completeOrthogonalDecomposition().solve(b));
        const double change = (next.theta - q.theta).cwiseAbs().maxCoeff();
        q = std::move(next);
        out.iterations = it + 1;
        if (change < 1e-13) {
            out.converged = true;
            break;
        }
    }
    out.q = q;
    out.greedy = greedy_policy(q, fm);
    return out;
}

DelusionCertificate certify_delusion_chain(const Instance& inst, double eps) {
    constexpr State s1 = 0, s4 = 3;
    constexpr Action a1 = 0, a2 = 1;
    const Mdp& mdp = inst.mdp;
    DelusionCertificate cert;

    const auto vi = value_iteration(mdp, 1e-12, 100000);
    const Policy optimal = greedy_policy(vi.q);
    cert.optimal_is_all_a2 = true;
    for (State s = 0; s < 4; ++s) {
        const double gap = vi.q(s, a2) - vi.q(s, a1);
        if (!(gap > 1e-9) || optimal(s) != a2) cert.optimal_is_all_a2 = false;
    }
    if (!cert.optimal_is_all_a2) cert.failures.push_back("unconstrained optimum does not take a2 everywhere");

    const Assignment all_a2({{0, a2}, {1, a2}, {2, a2}, {3, a2}});
    cert.all_a2_inconsistent = !is_consistent(all_a2, inst.fm).consistent;
    if (!cert.all_a2_inconsistent) cert.failures.push_back("all-a2 policy is representable");

    const auto best = best_representable_policy(mdp, inst.fm);
    cert.best_feasible_value = best.value;
    cert.best_takes_a1_s1_a2_s4 = best.policy(s1) == a1 && best.policy(s4) == a2;
    if (std::abs(best.value - 0.5) > 1e-9)
        cert.failures.push_back(fmt::format("best representable value {:.12g} != 0.5", best.value));
    if (!cert.best_takes_a1_s1_a2_s4) cert.failures.push_back("best representable policy is not {s1:a1, s4:a2}");

    Policy compromise{{a1, a1, a1, a1, a1}};
    cert.compromise_value = policy_value(mdp, compromise);
    if (std::abs(cert.compromise_value - 0.3) > 1e-9)
        cert.failures.push_back(fmt::format("compromise value {:.12g} != 0.3", cert.compromise_value));

    const auto fqi = expected_fqi(mdp, inst.fm, eps);
    cert.fqi_value = policy_value(mdp, fqi.greedy);
    cert.fqi_reaches_compromise = fqi.converged && fqi.greedy(s1) == a1 && fqi.greedy(s4) == a1;
    if (!cert.fqi_reaches_compromise)
        cert.failures.push_back(fmt::format("expected-data Q-learning ends at value {:.6g} (converged: {})",
                                            cert.fqi_value, fqi.converged));
    return cert;
}

DelusionGap delusion_gap(const Instance& inst, double eps) {
    DelusionGap gap;
    gap.best_value = best_representable_policy(inst.mdp, inst.fm).value;
    const auto fqi = expected_fqi(inst.mdp, inst.fm, eps);
    gap.fqi_converged = fqi.converged;
    gap.fqi_value = policy_value(inst.mdp, fqi.greedy);
    return gap;
}

Instance make_delusion_prone_mdp(int n_states, int n_actions, int feature_dim, std::uint64_t seed, double eps,
                                 int max_tries) {
    for (int k = 0; k < max_tries; ++k) {
        const std::uint64_t candidate = k == 0 ? seed : stream_key(seed, "delusion-prone", k);
        Instance inst = make_random_mdp(n_states, n_actions, feature_dim, candidate);
        if (delusion_gap(inst, eps).prone()) return inst;
    }
    throw ConstructionError(fmt::format("no delusion-prone instance in {} tries from seed {}", max_tries, seed));
}

Instance make_delusion_chain() {
    Instance inst = build_delusion_chain(delusion_chain_params());
    const auto cert = certify_delusion_chain(inst);
    if (!cert.ok()) {
        std::string msg = "delusion chain failed certification:";
        for (const auto& f : cert.failures) msg += " " + f + ";";
        throw ConstructionError(msg);
    }
    return inst;
}

}  // namespace conqur
