#pragma once

#include <vector>

#include "conqur/features.hpp"
#include "conqur/mdp.hpp"
#include "conqur/rng.hpp"

namespace conqur {

/// Greedy action with probability 1 - eps, otherwise uniform over actions.
Action epsilon_greedy(const LinearQ& q, const FeatureMap& fm, State s, double eps, Rng& rng);

/// n transitions from eps-greedy(q) episodes. Starts from p0, resets at
/// terminals and after `max_episode_len` steps. Deterministic given rng.
std::vector<Transition> collect_batch(const Mdp& env, const FeatureMap& fm, const LinearQ& q, double eps,
                                      int n, Rng& rng, int max_episode_len = 1000);

/// Mean discounted return of eps-greedy(q) over `episodes` rollouts of at
/// most `horizon` steps each.
double rollout_return(const Mdp& env, const FeatureMap& fm, const LinearQ& q, int episodes, double eps,
                      int horizon, Rng& rng);

}  // namespace conqur
