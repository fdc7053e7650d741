#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "conqur/features.hpp"
#include "conqur/mdp.hpp"

namespace conqur {

struct Instance {
    Mdp mdp;
    FeatureMap fm;
};

/// Random MDP with `n_states - 1` live states and one terminal state.
/// Each live (s, a) moves to three random successors, with an extra 0.1
/// of mass on termination; rewards are uniform on [0, 1); p0 is uniform
/// over live states; features are standard normal. feature_dim equal to
/// n_states * n_actions yields one-hot features (every assignment
/// consistent). Deterministic in `seed`.
Instance make_random_mdp(int n_states, int n_actions, int feature_dim, std::uint64_t seed);

/// Parameters of the four-state delusion chain (plus a terminal state).
///
///   s1 -a1-> s4          s1 -a2-> s2  (reward r12)
///   s2 -a1-> end         s2 -a2-> s3
///   s3 -a1-> end         s3 -a2-> s4
///   s4 -a1-> end (r41)   s4 -a2-> end (r42)
///
/// States are numbered s1..s4 = 0..3 and the terminal state is 4.
struct DelusionChainParams {
    double gamma = 0.9;
    double r12 = 0.0;  // R(s1, a2)
    double r41 = 0.0;  // R(s4, a1)
    double r42 = 0.0;  // R(s4, a2)
    int dim = 2;
    /// phi[s][a] for the four live states; the terminal state has zero features.
    std::array<std::array<std::vector<double>, 2>, 4> phi;
};

Instance build_delusion_chain(const DelusionChainParams& params);

/// The frozen parameters shipped with the library.
DelusionChainParams delusion_chain_params();

struct DelusionCertificate {
    bool optimal_is_all_a2 = false;       // unconstrained optimum takes a2 everywhere
    bool all_a2_inconsistent = false;     // (a)
    double best_feasible_value = 0.0;     // (b), must be 0.5
    bool best_takes_a1_s1_a2_s4 = false;  // (b)
    double compromise_value = 0.0;        // value of {s1->a1, s4->a1}, must be 0.3
    bool fqi_reaches_compromise = false;  // (c): expected-data batch Q-learning fixed point
    double fqi_value = 0.0;
    std::vector<std::string> failures;

    bool ok() const { return failures.empty(); }
};

/// Checks the three delusion properties with the library's exact oracles.
/// `eps` is the behaviour exploration rate used by the expected-data
/// Q-learning check.
DelusionCertificate certify_delusion_chain(const Instance& inst, double eps = 0.1);

/// The certified delusion chain. Throws ConstructionError if certification fails.
Instance make_delusion_chain();

/// Expected state-action visits per episode under eps-greedy(policy) from p0.
std::vector<double> occupancy(const Mdp& mdp, const Policy& policy, double eps);

struct ExpectedFqiResult {
    LinearQ q;
    Policy greedy;
    bool converged = false;
    int iterations = 0;
};

/// Fitted Q-iteration on expected on-policy data: every iteration refits
/// theta by occupancy-weighted least squares to max-backup labels, with the
/// occupancy of eps-greedy(current greedy policy). Runs from theta = 0.
ExpectedFqiResult expected_fqi(const Mdp& mdp, const FeatureMap& fm, double eps, int max_iter = 2000);

struct DelusionGap {
    double best_value = 0.0;  // best representable policy
    double fqi_value = 0.0;   // greedy policy where expected-data Q-learning stops
    bool fqi_converged = false;
    bool prone() const { return !fqi_converged || fqi_value < best_value - 1e-6; }
};

DelusionGap delusion_gap(const Instance& inst, double eps);

/// First random instance, over candidate seeds `seed`, then
/// stream_key(seed, "delusion-prone", k) for k = 1, 2, ..., on which
/// delusion_gap(eps) is prone. Throws ConstructionError after max_tries.
Instance make_delusion_prone_mdp(int n_states, int n_actions, int feature_dim, std::uint64_t seed, double eps,
                                 int max_tries = 200);

}  // namespace conqur
