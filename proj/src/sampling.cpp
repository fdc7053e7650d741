#include "conqur/sampling.hpp"

#include "conqur/error.hpp"

namespace conqur {

Action epsilon_greedy(const LinearQ& q, const FeatureMap& fm, State s, double eps, Rng& rng) {
    // Both draws always happen so stream positions do not depend on eps.
    const double u = rng.uniform();
    const auto random_action = static_cast<Action>(rng.below(static_cast<std::uint64_t>(fm.n_actions())));
    return u < eps ? random_action : greedy_action(q, fm, s);
}

std::vector<Transition> collect_batch(const Mdp& env, const FeatureMap& fm, const LinearQ& q, double eps,
                                      int n, Rng& rng, int max_episode_len) {
    if (n < 1) throw ArgumentError("collect_batch: n must be at least 1");
    std::vector<Transition> batch;
    batch.reserve(static_cast<std::size_t>(n));
    State s = sample_initial(env, rng);
    int episode_len = 0;
    while (static_cast<int>(batch.size()) < n) {
        if (env.is_terminal(s) || (max_episode_len > 0 && episode_len >= max_episode_len)) {
            s = sample_initial(env, rng);
            episode_len = 0;
            if (env.is_terminal(s)) throw ArgumentError("collect_batch: p0 puts mass on a terminal state");
        }
        const Action a = epsilon_greedy(q, fm, s, eps, rng);
        const auto [r, next] = step(env, s, a, rng);
        batch.push_back({s, a, r, next, env.is_terminal(next)});
        s = next;
        ++episode_len;
    }
    return batch;
}

double rollout_return(const Mdp& env, const FeatureMap& fm, const LinearQ& q, int episodes, double eps,
                      int horizon, Rng& rng) {
    if (episodes < 1) throw ArgumentError("rollout_return: episodes must be at least 1");
    double total = 0.0;
    for (int e = 0; e < episodes; ++e) {
        State s = sample_initial(env, rng);
        double discount = 1.0;
        double ret = 0.0;
        for (int t = 0; t < horizon && !env.is_terminal(s); ++t) {
            const Action a = epsilon_greedy(q, fm, s, eps, rng);
            const auto [r, next] = step(env, s, a, rng);
            ret += discount * r;
            discount *= env.gamma;
            s = next;
        }
        total += ret;
    }
    return total / episodes;
}

}  // namespace conqur
