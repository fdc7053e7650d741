#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conqur/consistency.hpp"
#include "conqur/features.hpp"
#include "conqur/mdp.hpp"
#include "conqur/regression.hpp"
#include "conqur/rng.hpp"

namespace conqur {

enum class NodeStatus { Pool, Frontier, Evicted, Expanded };
enum class ScoringMode { Loss, Rollout };
enum class ConsistencyMode { PenaltyOnly, RejectSample };

const char* to_string(NodeStatus s);
const char* to_string(ScoringMode s);
const char* to_string(ConsistencyMode s);

struct SearchNode {
    int id = 0;
    std::optional<int> parent;
    int depth = 0;
    int level = -1;                 // level that created the node, -1 for the root
    LinearQ theta;
    LinearQ target;                 // bootstrap regressor for this node's children
    Assignment own_assignment;      // assignment introduced by this node
    Assignment ancestor_assignment; // parent's ancestor_assignment plus own_assignment
    ConsistencyBuffer buffer;
    std::uint64_t digest = 0;       // FNV-1a of ancestor_assignment
    bool released = false;          // buffer and ancestor assignment dropped, digest kept
    double raw_score = 0.0;
    double score = 0.0;             // lower is better
    double policy_value = 0.0;
    double loss = 0.0;              // training objective at the returned theta
    double penalty = 0.0;
    NodeStatus status = NodeStatus::Pool;
};

struct SearchConfig {
    int pool_cap = 46;      // m
    int frontier_cap = 16;  // F
    int expand_top = 4;     // l
    int split_factor = 4;   // c
    int dive_levels = 9;    // d
    int horizon = 30;       // T; levels 0..T are run
    double tau = 1.0;       // 0 selects the argmax (lowest index on ties)
    bool adaptive_tau = true;
    double lambda = 0.0;
    int boltzmann_period = 5;  // 0 disables Boltzmann dive levels
    ScoringMode scoring = ScoringMode::Loss;
    double calibration = 2.5;
    ConsistencyMode consistency_mode = ConsistencyMode::PenaltyOnly;
    std::uint64_t seed = 0;

    int batch_size = 512;
    double eps_train = 0.01;
    double eps_eval = 0.001;
    int rollout_episodes = 200;
    int rollout_horizon = 200;
    int target_swap_period = 5;
    int max_episode_len = 1000;
    int reject_attempts = 64;    // is_consistent calls per sampled assignment
    bool backtracking = true;
    std::size_t archive_cap = 0; // evicted nodes kept whole; 0 means pool_cap
    std::size_t buffer_window = 0; // most recent buffer pairs kept; 0 keeps all history
    int threads = 1;
    OptConfig opt;
};

/// Throws ArgumentError naming the offending field.
void validate_search_config(const SearchConfig& cfg);

struct LevelRow {
    int level = 0;
    std::string phase;  // expansion | dive
    int pool_size = 0;
    int frontier_size = 0;
    double best_score = 0.0;
    double best_policy_value = 0.0;
    double tau = 0.0;
    bool backtracked = false;
};

struct SearchTree {
    std::map<int, SearchNode> nodes;
    std::vector<int> frontier;  // ordered by score, then id
    std::vector<int> pool;      // ordered by score, then id
    std::vector<int> archive;   // evicted, never expanded; oldest first
    std::vector<std::vector<Transition>> batches;  // D_0 .. D_k
    std::vector<LevelRow> levels;
    double tau = 0.0;
    long long transitions_used = 0;
    int reject_fallbacks = 0;

    const SearchNode& node(int id) const;
    SearchNode& node(int id);
};

/// Samples one action per non-terminal successor of `batch`, visiting the
/// states in a fresh random permutation. Probabilities are softmax(Q/tau)
/// under q_parent; tau = 0 takes the argmax. In reject-sample mode each
/// state samples without replacement until the partial assignment plus
/// `prior` is consistent; states already fixed by `prior` keep their
/// action. Hitting the attempt cap falls back to the parent-greedy action
/// and increments *fallbacks.
Assignment boltzmann_assignment(const LinearQ& q_parent, std::span<const Transition> batch, double tau, Rng& rng,
                                ConsistencyMode mode, const Assignment& prior, const FeatureMap& fm,
                                int attempt_cap = 64, int* fallbacks = nullptr);

/// softmax(Q(s, .) / tau); tau = 0 puts all mass on the lowest-index argmax.
Eigen::VectorXd boltzmann_probabilities(const Eigen::VectorXd& q, double tau);

/// Max-backup assignment under q; in reject-sample mode the best consistent
/// action (by Q) given `prior`.
Assignment max_assignment(const LinearQ& q, std::span<const Transition> batch, ConsistencyMode mode,
                          const Assignment& prior, const FeatureMap& fm);

/// Assignments a new child of `node` must stay consistent with in
/// reject-sample mode: the ancestor assignment, or with a buffer window the
/// pairs still in the buffer (latest action per state).
Assignment consistency_prior(const SearchNode& node, const SearchConfig& cfg);

/// Trains one child of `parent` on `batch` under assignment `sigma`.
SearchNode make_child(const SearchNode& parent, int id, int level, const Assignment& sigma,
                      std::span<const Transition> batch, const Mdp& env, const FeatureMap& fm,
                      const SearchConfig& cfg);

/// c Boltzmann children of `node`, with ids first_id, first_id + 1, ...
/// Child j draws from split_stream(cfg.seed, "child", first_id + j).
std::vector<SearchNode> generate_children(const SearchNode& node, int first_id, int level,
                                          std::span<const Transition> batch, const Mdp& env,
                                          const FeatureMap& fm, const SearchConfig& cfg, double tau,
                                          int* fallbacks = nullptr);

/// Penalized loss of the node's regressor on `batch` with max-target labels
/// from the node's bootstrap regressor and the node's own buffer.
double score_node_loss(const SearchNode& node, std::span<const Transition> batch, const FeatureMap& fm,
                       double lambda, double gamma);

/// Depth calibration: raw + calibration * delta * (frontier_depth - depth).
/// delta is mean(raw(child) - raw(parent)) over the frontier.
double calibrated_score(double raw, int depth, int frontier_depth, double delta, double calibration);

/// Mean over `pairs` of (child raw - parent raw); 0 for an empty list.
double calibration_delta(std::span<const std::pair<double, double>> child_parent_raw);

/// Negated mean discounted return of eps-greedy(theta), so lower is better.
double score_node_rollout(const SearchNode& node, const Mdp& env, const FeatureMap& fm, int episodes,
                          double eps_eval, int horizon, Rng& rng);

/// Expansion levels: 0, 1 and every multiple of d + 1 from d + 1 on.
bool is_scheduled_expansion(int level, int dive_levels);

/// Ids kept after eviction: the m lowest scores, ties to the lower id,
/// returned in that order.
std::vector<int> evict_pool(std::span<const int> pool, std::size_t m, const std::map<int, double>& scores);

struct SearchResult {
    SearchTree tree;
    int best_node = 0;        // lowest final score among pool nodes
    int best_value_node = 0;  // highest policy value among final pool nodes
    double best_value = 0.0;
    double reached_value = 0.0;  // highest policy value of any node created
    int reached_level = -1;      // first level at which reached_value was attained
};

/// Modified beam search. Levels 0..horizon each collect a batch of
/// batch_size transitions with eps_train-greedy(top pool node).
SearchResult beam_search(const Mdp& env, const FeatureMap& fm, const LinearQ& q_init, const SearchConfig& cfg);

struct DfsResult {
    LinearQ best;
    double best_value = 0.0;  // policy value, or final loss without an oracle
    std::size_t nodes_visited = 0;
    std::vector<std::size_t> nodes_per_level;
};

/// Exhaustive depth-first search over jointly consistent assignment
/// sequences. Level i trains on batches[i] with labels bootstrapped from the
/// parent's regressor. Returns the leaf maximizing policy value when `env`
/// is given, else the leaf with the lowest final loss.
DfsResult dfs_search(std::span<const std::vector<Transition>> batches, const LinearQ& q_boot, const FeatureMap& fm,
                     const Assignment& sigma_prior, double lambda, double gamma, const OptConfig& opt,
                     const Mdp* env = nullptr, std::size_t cap = 100'000);

/// Per-level CSV: level,phase,pool_size,frontier_size,best_score,best_policy_value.
std::string level_csv(const SearchTree& tree);

/// One JSON object per line: id, parent, depth, status, score, policy_value, digest.
std::string tree_dump(const SearchTree& tree);

/// Structural checks on a finished tree; returns the violations found.
std::vector<std::string> check_tree(const SearchTree& tree, const SearchConfig& cfg);

}  // namespace conqur
