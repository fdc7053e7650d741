// Offline search for delusion-chain features. A candidate must pass
// certification, its sampled baseline must end at the compromise policy, and
// the beam search must recover the best representable policy.
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "conqur/instances.hpp"
#include "conqur/regression.hpp"
#include "conqur/rng.hpp"
#include "conqur/search.hpp"

using namespace conqur;

namespace {

// Projected evaluation of a fixed policy on its own eps-greedy occupancy.
LinearQ evaluate_fixed(const Mdp& mdp, const FeatureMap& fm, const Policy& pi, double eps) {
    const auto w = occupancy(mdp, pi, eps);
    LinearQ q(fm.dim());
    for (int it = 0; it < 5000; ++it) {
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(fm.dim(), fm.dim());
        Eigen::VectorXd b = Eigen::VectorXd::Zero(fm.dim());
        for (State s = 0; s < mdp.n_states; ++s)
            for (Action a = 0; a < mdp.n_actions; ++a) {
                const double weight = w[static_cast<std::size_t>(s) * mdp.n_actions + a];
                if (weight <= 0.0) continue;
                double label = mdp.r(s, a);
                for (State t = 0; t < mdp.n_states; ++t)
                    if (mdp.p(s, a, t) > 0.0 && !mdp.is_terminal(t))
                        label += mdp.gamma * mdp.p(s, a, t) * q_value(q, fm, t, pi(t));
                h += weight * fm.phi(s, a) * fm.phi(s, a).transpose();
                b += weight * label * fm.phi(s, a);
            }
        LinearQ next(h.completeOrthogonalDecomposition().solve(b));
        const double change = (next.theta - q.theta).cwiseAbs().maxCoeff();
        q = next;
        if (change < 1e-13) break;
    }
    return q;
}

}  // namespace

int main(int argc, char** argv) {
    const int tries = argc > 1 ? std::atoi(argv[1]) : 20000;
    const int range = argc > 2 ? std::atoi(argv[2]) : 2;
    Rng rng(argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 1);
    const bool run_beam = argc > 4 ? std::atoi(argv[4]) != 0 : true;
    int found = 0;
    for (int t = 0; t < tries && found < 20; ++t) {
        DelusionChainParams p;
        p.gamma = 0.9;
        p.r12 = 0.2;
        p.r41 = 0.3 / p.gamma;
        p.r42 = 0.5 / p.gamma;
        p.dim = 2;
        for (auto& st : p.phi)
            for (auto& v : st) {
                v.resize(2);
                for (auto& x : v) x = static_cast<double>(static_cast<int>(rng.below(2 * range + 1)) - range);
            }
        Instance inst = build_delusion_chain(p);
        DelusionCertificate cert;
        try {
            cert = certify_delusion_chain(inst);
        } catch (const std::exception&) {
            continue;
        }
        if (!cert.ok()) continue;

        // The target policy must be a fixed point of its own projected evaluation.
        bool fixed_point = false;
        for (Action a2 : {0, 1})
            for (Action a3 : {0, 1}) {
                Policy pi{{0, a2, a3, 1, 0}};
                const LinearQ q = evaluate_fixed(inst.mdp, inst.fm, pi, 0.01);
                const Policy g = greedy_policy(q, inst.fm);
                if (g(0) == 0 && g(3) == 1) fixed_point = true;
            }
        if (!fixed_point) continue;

        QLearningSchedule sched;
        sched.iterations = 200;
        sched.epsilon = 0.1;
        int hits = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            sched.batch_size = seed % 2 ? 64 : 512;
            try {
                auto run = batch_q_learning(inst.mdp, inst.fm, sched, seed);
                const double v = policy_value(inst.mdp, greedy_policy(run.thetas.back(), inst.fm));
                if (std::abs(v - 0.3) <= 0.05) ++hits;
            } catch (const std::exception&) {
            }
        }
        if (hits < 20) continue;

        int beam_hits = 0;
        if (run_beam) {
            for (std::uint64_t seed = 0; seed < 20; ++seed) {
                SearchConfig cfg;
                cfg.pool_cap = 8;
                cfg.frontier_cap = 8;
                cfg.expand_top = 2;
                cfg.split_factor = 2;
                cfg.lambda = 10;
                cfg.horizon = 30;
                cfg.seed = seed;
                const auto r = beam_search(inst.mdp, inst.fm, LinearQ(2), cfg);
                if (r.reached_value >= 0.5 - 1e-6) ++beam_hits;
            }
        }
        std::printf("baseline=%d beam=%d phi=", hits, beam_hits);
        for (auto& st : p.phi)
            for (auto& v : st) std::printf("(%g,%g) ", v[0], v[1]);
        std::printf("\n");
        std::fflush(stdout);
        ++found;
    }
    return 0;
}
