#include "conqur/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include <fmt/format.h>
#include "json.hpp"

#include "conqur/error.hpp"
#include "conqur/sampling.hpp"

namespace conqur {

const char* to_string(NodeStatus s) {
    switch (s) {
        case NodeStatus::Pool: return "pool";
        case NodeStatus::Frontier: return "frontier";
        case NodeStatus::Evicted: return "evicted";
        case NodeStatus::Expanded: return "expanded";
    }
    return "?";
}

const char* to_string(ScoringMode s) { return s == ScoringMode::Loss ? "loss" : "rollout"; }

const char* to_string(ConsistencyMode s) {
    return s == ConsistencyMode::PenaltyOnly ? "penalty-only" : "reject-sample";
}

void validate_search_config(const SearchConfig& cfg) {
    auto fail = [](const char* field, const std::string& why) {
        throw ArgumentError(fmt::format("search.{}: {}", field, why));
    };
    if (cfg.pool_cap < 1) fail("pool_cap", "must be >= 1");
    if (cfg.frontier_cap < 1) fail("frontier_cap", "must be >= 1");
    if (cfg.frontier_cap > cfg.pool_cap) fail("frontier_cap", "must not exceed pool_cap");
    if (cfg.expand_top < 1) fail("expand_top", "must be >= 1");
    if (cfg.split_factor < 1) fail("split_factor", "must be >= 1");
    if (cfg.dive_levels < 0) fail("dive_levels", "must be >= 0");
    if (cfg.horizon < 0) fail("horizon", "must be >= 0");
    if (!(cfg.tau >= 0.0) || !std::isfinite(cfg.tau)) fail("tau", "must be finite and >= 0");
    if (!(cfg.lambda >= 0.0)) fail("lambda", "must be >= 0");
    if (cfg.boltzmann_period < 0) fail("boltzmann_period", "must be >= 0");
    if (!(cfg.calibration >= 0.0)) fail("calibration", "must be >= 0");
    if (cfg.batch_size < 1) fail("batch_size", "must be >= 1");
    if (!(cfg.eps_train >= 0.0 && cfg.eps_train <= 1.0)) fail("eps_train", "must lie in [0,1]");
    if (!(cfg.eps_eval >= 0.0 && cfg.eps_eval <= 1.0)) fail("eps_eval", "must lie in [0,1]");
    if (cfg.rollout_episodes < 1) fail("rollout_episodes", "must be >= 1");
    if (cfg.rollout_horizon < 1) fail("rollout_horizon", "must be >= 1");
    if (cfg.target_swap_period < 1) fail("target_swap_period", "must be >= 1");
    if (cfg.max_episode_len < 1) fail("max_episode_len", "must be >= 1");
    if (cfg.reject_attempts < 1) fail("reject_attempts", "must be >= 1");
    if (cfg.threads < 1) fail("threads", "must be >= 1");
}

const SearchNode& SearchTree::node(int id) const {
    auto it = nodes.find(id);
    if (it == nodes.end()) throw InternalError(fmt::format("search tree: no node {}", id));
    return it->second;
}

SearchNode& SearchTree::node(int id) {
    auto it = nodes.find(id);
    if (it == nodes.end()) throw InternalError(fmt::format("search tree: no node {}", id));
    return it->second;
}

namespace {

std::uint64_t assignment_digest(const Assignment& sigma) {
    std::string text;
    for (const auto& [s, a] : sigma.pairs()) text += fmt::format("{}:{};", s, a);
    return fnv1a64(text);
}

Action sample_index(const Eigen::VectorXd& p, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    Action last = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p(i) <= 0.0) continue;
        acc += p(i);
        last = static_cast<Action>(i);
        if (u < acc) return last;
    }
    return last;
}

// softmax over the actions still allowed by `mask`.
Eigen::VectorXd masked_probabilities(const Eigen::VectorXd& q, double tau, const std::vector<char>& mask) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(q.size());
    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < q.size(); ++i)
        if (mask[i] && (best < 0 || q(i) > q(best))) best = i;
    if (best < 0) return p;
    if (tau == 0.0) {
        p(best) = 1.0;
        return p;
    }
    for (Eigen::Index i = 0; i < q.size(); ++i)
        if (mask[i]) p(i) = std::exp((q(i) - q(best)) / tau);
    return p / p.sum();
}

bool consistent_with(const Assignment& partial, State s, Action a, const FeatureMap& fm) {
    Assignment next = partial;
    next.add(s, a);
    if (next.is_multi()) return false;
    return is_consistent(next, fm).consistent;
}

// The prior used by reject-sample mode: deduplicated, and dropped when it is
// already unusable.
Assignment usable_prior(const Assignment& prior, const FeatureMap& fm) {
    Assignment p = prior.deduplicated();
    if (p.is_multi() || !is_consistent(p, fm).consistent) return {};
    return p;
}

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

Eigen::VectorXd boltzmann_probabilities(const Eigen::VectorXd& q, double tau) {
    if (!(tau >= 0.0)) throw ArgumentError("boltzmann_probabilities: tau must be >= 0");
    return masked_probabilities(q, tau, std::vector<char>(static_cast<std::size_t>(q.size()), 1));
}

Assignment boltzmann_assignment(const LinearQ& q_parent, std::span<const Transition> batch, double tau, Rng& rng,
                                ConsistencyMode mode, const Assignment& prior, const FeatureMap& fm,
                                int attempt_cap, int* fallbacks) {
    if (!(tau >= 0.0)) throw ArgumentError("boltzmann_assignment: tau must be >= 0");
    std::vector<State> order = bootstrap_states(batch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    const std::size_t m = static_cast<std::size_t>(fm.n_actions());
    std::vector<Assignment::Pair> pairs;
    if (mode == ConsistencyMode::PenaltyOnly) {
        for (const State s : order) pairs.emplace_back(s, sample_index(boltzmann_probabilities(q_row(q_parent, fm, s), tau), rng));
        return Assignment(std::move(pairs));
    }

    Assignment partial = usable_prior(prior, fm);
    const Assignment fixed = partial;
    int attempts = 0;
    for (const State s : order) {
        if (auto forced = fixed.action_for(s)) {
            pairs.emplace_back(s, *forced);
            continue;
        }
        const Eigen::VectorXd q = q_row(q_parent, fm, s);
        std::vector<char> mask(m, 1);
        std::optional<Action> chosen;
        while (attempts < attempt_cap) {
            const Eigen::VectorXd p = masked_probabilities(q, tau, mask);
            if (p.sum() <= 0.0) break;
            const Action a = sample_index(p, rng);
            mask[static_cast<std::size_t>(a)] = 0;
            ++attempts;
            if (consistent_with(partial, s, a, fm)) {
                chosen = a;
                break;
            }
        }
        if (!chosen) {
            chosen = greedy_action(q_parent, fm, s);
            if (fallbacks) ++*fallbacks;
        }
        partial.add(s, *chosen);
        pairs.emplace_back(s, *chosen);
    }
    return Assignment(std::move(pairs));
}

Assignment max_assignment(const LinearQ& q, std::span<const Transition> batch, ConsistencyMode mode,
                          const Assignment& prior, const FeatureMap& fm) {
    std::vector<Assignment::Pair> pairs;
    const auto states = bootstrap_states(batch);
    if (mode == ConsistencyMode::PenaltyOnly) {
        for (const State s : states) pairs.emplace_back(s, greedy_action(q, fm, s));
        return Assignment(std::move(pairs));
    }
    Assignment partial = usable_prior(prior, fm);
    const Assignment fixed = partial;
    for (const State s : states) {
        Action chosen = greedy_action(q, fm, s);
        if (auto forced = fixed.action_for(s)) {
            chosen = *forced;
        } else {
            const Eigen::VectorXd row = q_row(q, fm, s);
            std::vector<Action> by_value(static_cast<std::size_t>(fm.n_actions()));
            std::iota(by_value.begin(), by_value.end(), 0);
            std::stable_sort(by_value.begin(), by_value.end(), [&](Action x, Action y) { return row(x) > row(y); });
            for (const Action a : by_value) {
                if (consistent_with(partial, s, a, fm)) {
                    chosen = a;
                    break;
                }
            }
        }
        partial.add(s, chosen);
        pairs.emplace_back(s, chosen);
    }
    return Assignment(std::move(pairs));
}

Assignment consistency_prior(const SearchNode& node, const SearchConfig& cfg) {
    if (cfg.buffer_window == 0) return node.ancestor_assignment;
    std::map<State, Action> latest;
    for (const auto& e : node.buffer.entries()) latest[e.s] = e.a;
    return Assignment(std::vector<Assignment::Pair>(latest.begin(), latest.end()));
}

SearchNode make_child(const SearchNode& parent, int id, int level, const Assignment& sigma,
                      std::span<const Transition> batch, const Mdp& env, const FeatureMap& fm,
                      const SearchConfig& cfg) {
    SearchNode child;
    child.id = id;
    child.parent = parent.id;
    child.depth = parent.depth + 1;
    child.level = level;
    child.own_assignment = sigma;
    child.ancestor_assignment = union_assignments(parent.ancestor_assignment, sigma);
    child.digest = assignment_digest(child.ancestor_assignment);
    child.buffer = parent.buffer;
    child.buffer.push(sigma);

    const auto labels = make_labels(batch, parent.target, parent.theta, LabelMode::assignment(sigma), fm, env.gamma);
    const TrainResult fit = train_regressor(labels, child.buffer, parent.theta, cfg.lambda, fm, cfg.opt);
    child.theta = fit.q;
    child.target = (level + 1) % cfg.target_swap_period == 0 ? fit.q : parent.target;
    child.loss = fit.loss;
    child.penalty = fit.penalty;
    child.policy_value = policy_value(env, greedy_policy(child.theta, fm));
    return child;
}

std::vector<SearchNode> generate_children(const SearchNode& node, int first_id, int level,
                                          std::span<const Transition> batch, const Mdp& env,
                                          const FeatureMap& fm, const SearchConfig& cfg, double tau,
                                          int* fallbacks) {
    const std::size_t c = static_cast<std::size_t>(cfg.split_factor);
    std::vector<SearchNode> children(c);
    std::vector<int> misses(c, 0);
    parallel_for(c, cfg.threads, [&](std::size_t j) {
        const int id = first_id + static_cast<int>(j);
        Rng rng = split_stream(cfg.seed, "child", static_cast<std::uint64_t>(id));
        const Assignment sigma = boltzmann_assignment(node.target, batch, tau, rng, cfg.consistency_mode,
                                                      consistency_prior(node, cfg), fm, cfg.reject_attempts, &misses[j]);
        children[j] = make_child(node, id, level, sigma, batch, env, fm, cfg);
    });
    if (fallbacks) *fallbacks += std::accumulate(misses.begin(), misses.end(), 0);
    return children;
}

double score_node_loss(const SearchNode& node, std::span<const Transition> batch, const FeatureMap& fm,
                       double lambda, double gamma) {
    const auto labels = make_labels(batch, node.target, node.theta, LabelMode::max_target(), fm, gamma);
    return penalized_loss(node.theta, labels, node.buffer, lambda, fm);
}

double calibration_delta(std::span<const std::pair<double, double>> child_parent_raw) {
    if (child_parent_raw.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [child, parent] : child_parent_raw) sum += child - parent;
    return sum / static_cast<double>(child_parent_raw.size());
}

double calibrated_score(double raw, int depth, int frontier_depth, double delta, double calibration) {
    return raw + calibration * delta * static_cast<double>(frontier_depth - depth);
}

double score_node_rollout(const SearchNode& node, const Mdp& env, const FeatureMap& fm, int episodes,
                          double eps_eval, int horizon, Rng& rng) {
    return -rollout_return(env, fm, node.theta, episodes, eps_eval, horizon, rng);
}

bool is_scheduled_expansion(int level, int dive_levels) {
    if (level < 0) return false;
    if (level <= 1) return true;
    return level % (dive_levels + 1) == 0;
}

std::vector<int> evict_pool(std::span<const int> pool, std::size_t m, const std::map<int, double>& scores) {
    std::vector<int> order(pool.begin(), pool.end());
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        const double sx = scores.at(x), sy = scores.at(y);
        if (sx != sy) return sx < sy;
        return x < y;
    });
    if (order.size() > m) order.resize(m);
    return order;
}

namespace {

class BeamRunner {
public:
    BeamRunner(const Mdp& env, const FeatureMap& fm, const LinearQ& q_init, const SearchConfig& cfg)
        : env_(env), fm_(fm), cfg_(cfg) {
        archive_cap_ = cfg.archive_cap == 0 ? static_cast<std::size_t>(cfg.pool_cap) : cfg.archive_cap;
        tree_.tau = cfg.tau;
        SearchNode root;
        root.id = next_id_++;
        root.theta = q_init;
        root.target = q_init;
        if (cfg.buffer_window > 0) root.buffer = ConsistencyBuffer(BufferPolicy::Window, cfg.buffer_window, 1.0);
        root.digest = assignment_digest(root.ancestor_assignment);
        root.policy_value = policy_value(env, greedy_policy(q_init, fm));
        root.status = NodeStatus::Frontier;
        reached_value_ = root.policy_value;
        tree_.nodes.emplace(root.id, std::move(root));
        tree_.pool = {0};
        tree_.frontier = {0};
    }

    SearchResult run() {
        bool previous_scheduled = false;
        for (int k = 0; k <= cfg_.horizon; ++k) {
            const bool scheduled = is_scheduled_expansion(k, cfg_.dive_levels);
            const bool extension = !scheduled && previous_scheduled && k - 1 >= cfg_.dive_levels + 1 &&
                                   tree_.frontier.size() < static_cast<std::size_t>(cfg_.frontier_cap);
            previous_scheduled = scheduled;
            level(k, scheduled || extension, extension);
        }

        SearchResult out;
        out.best_node = tree_.pool.front();
        out.best_value_node = tree_.pool.front();
        out.best_value = -std::numeric_limits<double>::infinity();
        for (const int id : tree_.pool) {
            const auto& n = tree_.node(id);
            if (n.policy_value > out.best_value || (n.policy_value == out.best_value && id < out.best_value_node)) {
                out.best_value = n.policy_value;
                out.best_value_node = id;
            }
        }
        out.reached_value = reached_value_;
        out.reached_level = reached_level_;
        out.tree = std::move(tree_);
        return out;
    }

private:
    void level(int k, bool expansion, bool extension) {
        // Data comes from the top pool node.
        Rng collect_rng = split_stream(cfg_.seed, "collect", static_cast<std::uint64_t>(k));
        auto batch = collect_batch(env_, fm_, tree_.node(tree_.pool.front()).theta, cfg_.eps_train,
                                   cfg_.batch_size, collect_rng, cfg_.max_episode_len);
        tree_.transitions_used += static_cast<long long>(batch.size());
        tree_.batches.push_back(std::move(batch));
        const auto& data = tree_.batches.back();

        LevelRow row;
        row.level = k;
        row.phase = expansion ? "expansion" : "dive";
        row.tau = tree_.tau;

        if (expansion) {
            row.backtracked = expand(k, data, extension);
        } else {
            dive(k, data);
        }
        rescore(k, data);
        evict();
        check_capacity(k);

        row.pool_size = static_cast<int>(tree_.pool.size());
        row.frontier_size = static_cast<int>(tree_.frontier.size());
        row.best_score = tree_.node(tree_.pool.front()).score;
        row.best_policy_value = -std::numeric_limits<double>::infinity();
        for (const int id : tree_.pool)
            row.best_policy_value = std::max(row.best_policy_value, tree_.node(id).policy_value);
        tree_.levels.push_back(row);
    }

    bool expand(int k, std::span<const Transition> data, bool extension) {
        std::vector<int> parents(tree_.pool.begin(),
                                 tree_.pool.begin() + std::min<std::size_t>(tree_.pool.size(), cfg_.expand_top));

        // Backtracking: after two stagnant expansion rounds, the best archived
        // node takes the last expansion slot.
        bool backtracked = false;
        const double top = tree_.node(parents.front()).score;
        if (have_last_top_) {
            const double rel = (last_top_ - top) / std::max(std::abs(last_top_), 1e-12);
            stagnant_ = rel < 1e-3 ? stagnant_ + 1 : 0;
        }
        last_top_ = top;
        have_last_top_ = true;
        if (cfg_.backtracking && stagnant_ >= 2 && !tree_.archive.empty()) {
            int best = -1;
            double best_score = 0.0;
            for (const int id : tree_.archive) {
                SearchNode& n = tree_.node(id);
                n.raw_score = raw_score(n, data, k);
                if (best < 0 || n.raw_score < best_score) {
                    best = id;
                    best_score = n.raw_score;
                }
            }
            tree_.archive.erase(std::find(tree_.archive.begin(), tree_.archive.end(), best));
            if (parents.size() == static_cast<std::size_t>(cfg_.expand_top))
                parents.back() = best;
            else
                parents.push_back(best);
            stagnant_ = 0;
            backtracked = true;
        }

        const std::size_t c = static_cast<std::size_t>(cfg_.split_factor);
        std::vector<SearchNode> children(parents.size() * c);
        std::vector<int> misses(children.size(), 0);
        const int first = next_id_;
        next_id_ += static_cast<int>(children.size());
        const double tau = tree_.tau;
        parallel_for(children.size(), cfg_.threads, [&](std::size_t i) {
            const SearchNode& parent = tree_.node(parents[i / c]);
            const int id = first + static_cast<int>(i);
            Rng rng = split_stream(cfg_.seed, "child", static_cast<std::uint64_t>(id));
            const Assignment sigma = boltzmann_assignment(parent.target, data, tau, rng, cfg_.consistency_mode,
                                                          consistency_prior(parent, cfg_), fm_, cfg_.reject_attempts,
                                                          &misses[i]);
            children[i] = make_child(parent, id, k, sigma, data, env_, fm_, cfg_);
        });
        tree_.reject_fallbacks += std::accumulate(misses.begin(), misses.end(), 0);

        if (cfg_.adaptive_tau && tree_.tau > 0.0) adapt_tau(parents, children);

        std::vector<int> frontier;
        if (extension)
            for (const int id : tree_.frontier)
                if (std::find(parents.begin(), parents.end(), id) == parents.end()) frontier.push_back(id);
        for (const int p : parents) {
            tree_.node(p).status = NodeStatus::Expanded;
            std::erase(tree_.pool, p);
        }
        for (const int id : tree_.frontier)
            if (tree_.node(id).status == NodeStatus::Frontier) tree_.node(id).status = NodeStatus::Pool;
        for (auto& child : children) {
            frontier.push_back(child.id);
            tree_.pool.push_back(child.id);
            note_value(child, k);
            tree_.nodes.emplace(child.id, std::move(child));
        }
        tree_.frontier = std::move(frontier);
        for (const int id : tree_.frontier) tree_.node(id).status = NodeStatus::Frontier;
        return backtracked;
    }

    void adapt_tau(const std::vector<int>& parents, const std::vector<SearchNode>& children) {
        const std::size_t c = static_cast<std::size_t>(cfg_.split_factor);
        double agree = 0.0, pairs = 0.0, greedy_hits = 0.0, draws = 0.0;
        for (std::size_t p = 0; p < parents.size(); ++p) {
            const SearchNode& parent = tree_.node(parents[p]);
            for (std::size_t i = 0; i < c; ++i) {
                const auto& si = children[p * c + i].own_assignment;
                for (const auto& [s, a] : si.pairs()) {
                    greedy_hits += a == greedy_action(parent.target, fm_, s) ? 1.0 : 0.0;
                    draws += 1.0;
                }
                for (std::size_t j = i + 1; j < c; ++j) {
                    const auto& sj = children[p * c + j].own_assignment;
                    if (si.empty()) continue;
                    double same = 0.0;
                    for (std::size_t t = 0; t < si.size() && t < sj.size(); ++t)
                        same += si.pairs()[t] == sj.pairs()[t] ? 1.0 : 0.0;
                    agree += same / static_cast<double>(si.size());
                    pairs += 1.0;
                }
            }
        }
        if (pairs > 0.0 && agree / pairs > 0.9)
            tree_.tau *= 1.5;
        else if (draws > 0.0 && greedy_hits / draws < 0.5)
            tree_.tau /= 4.0;
    }

    void dive(int k, std::span<const Transition> data) {
        const bool boltzmann = cfg_.boltzmann_period > 0 && k % cfg_.boltzmann_period == 0;
        const std::vector<int> parents = tree_.frontier;
        std::vector<SearchNode> children(parents.size());
        std::vector<int> misses(children.size(), 0);
        const int first = next_id_;
        next_id_ += static_cast<int>(children.size());
        const double tau = tree_.tau;
        parallel_for(children.size(), cfg_.threads, [&](std::size_t i) {
            const SearchNode& parent = tree_.node(parents[i]);
            const int id = first + static_cast<int>(i);
            Assignment sigma;
            if (boltzmann) {
                Rng rng = split_stream(cfg_.seed, "child", static_cast<std::uint64_t>(id));
                sigma = boltzmann_assignment(parent.target, data, tau, rng, cfg_.consistency_mode,
                                             consistency_prior(parent, cfg_), fm_, cfg_.reject_attempts, &misses[i]);
            } else {
                sigma = max_assignment(parent.target, data, cfg_.consistency_mode, consistency_prior(parent, cfg_), fm_);
            }
            children[i] = make_child(parent, id, k, sigma, data, env_, fm_, cfg_);
        });
        tree_.reject_fallbacks += std::accumulate(misses.begin(), misses.end(), 0);

        tree_.frontier.clear();
        for (std::size_t i = 0; i < parents.size(); ++i) {
            tree_.node(parents[i]).status = NodeStatus::Expanded;
            std::replace(tree_.pool.begin(), tree_.pool.end(), parents[i], children[i].id);
            tree_.frontier.push_back(children[i].id);
            children[i].status = NodeStatus::Frontier;
            note_value(children[i], k);
            tree_.nodes.emplace(children[i].id, std::move(children[i]));
        }
    }

    double raw_score(const SearchNode& n, std::span<const Transition> data, int k) const {
        if (cfg_.scoring == ScoringMode::Rollout) {
            Rng rng = split_stream(cfg_.seed, "rollout",
                                   (static_cast<std::uint64_t>(k) << 32) | static_cast<std::uint32_t>(n.id));
            return score_node_rollout(n, env_, fm_, cfg_.rollout_episodes, cfg_.eps_eval, cfg_.rollout_horizon, rng);
        }
        return score_node_loss(n, data, fm_, cfg_.lambda, env_.gamma);
    }

    void rescore(int k, std::span<const Transition> data) {
        std::vector<double> raw(tree_.pool.size());
        parallel_for(tree_.pool.size(), cfg_.threads,
                     [&](std::size_t i) { raw[i] = raw_score(tree_.node(tree_.pool[i]), data, k); });
        for (std::size_t i = 0; i < raw.size(); ++i) tree_.node(tree_.pool[i]).raw_score = raw[i];

        if (cfg_.scoring == ScoringMode::Rollout) {
            for (const int id : tree_.pool) tree_.node(id).score = tree_.node(id).raw_score;
            return;
        }
        std::vector<std::pair<double, double>> diffs;
        int frontier_depth = 0;
        for (const int id : tree_.frontier) {
            const SearchNode& n = tree_.node(id);
            frontier_depth = std::max(frontier_depth, n.depth);
            if (n.parent) diffs.emplace_back(n.raw_score, raw_score(tree_.node(*n.parent), data, k));
        }
        const double delta = calibration_delta(diffs);
        for (const int id : tree_.pool) {
            SearchNode& n = tree_.node(id);
            n.score = calibrated_score(n.raw_score, n.depth, frontier_depth, delta, cfg_.calibration);
        }
    }

    void evict() {
        std::map<int, double> scores;
        for (const int id : tree_.pool) scores[id] = tree_.node(id).score;
        const auto kept = evict_pool(tree_.pool, tree_.pool.size(), scores);  // full ranking
        const std::size_t m = static_cast<std::size_t>(cfg_.pool_cap);
        for (std::size_t i = m; i < kept.size(); ++i) {
            SearchNode& n = tree_.node(kept[i]);
            n.status = NodeStatus::Evicted;
            tree_.archive.push_back(n.id);
        }
        tree_.pool.assign(kept.begin(), kept.begin() + std::min(m, kept.size()));
        while (tree_.archive.size() > archive_cap_) {
            SearchNode& old = tree_.node(tree_.archive.front());
            old.buffer.clear();
            old.ancestor_assignment = Assignment();
            old.released = true;
            tree_.archive.erase(tree_.archive.begin());
        }

        std::vector<int> frontier;
        for (const int id : tree_.pool)
            if (tree_.node(id).status == NodeStatus::Frontier) frontier.push_back(id);
        const std::size_t f = static_cast<std::size_t>(cfg_.frontier_cap);
        for (std::size_t i = f; i < frontier.size(); ++i) tree_.node(frontier[i]).status = NodeStatus::Pool;
        if (frontier.size() > f) frontier.resize(f);
        tree_.frontier = std::move(frontier);
    }

    void check_capacity(int k) const {
        if (tree_.pool.size() > static_cast<std::size_t>(cfg_.pool_cap) ||
            tree_.frontier.size() > static_cast<std::size_t>(cfg_.frontier_cap) || tree_.pool.empty())
            throw InternalError(fmt::format("beam search: capacity breach at level {} (pool {}, frontier {})", k,
                                            tree_.pool.size(), tree_.frontier.size()));
    }

    void note_value(const SearchNode& n, int k) {
        if (n.policy_value > reached_value_ + 1e-12) {
            reached_value_ = n.policy_value;
            reached_level_ = k;
        }
    }

    const Mdp& env_;
    const FeatureMap& fm_;
    const SearchConfig& cfg_;
    SearchTree tree_;
    int next_id_ = 0;
    std::size_t archive_cap_ = 0;
    double last_top_ = 0.0;
    bool have_last_top_ = false;
    int stagnant_ = 0;
    double reached_value_ = 0.0;
    int reached_level_ = -1;
};

}  // namespace

SearchResult beam_search(const Mdp& env, const FeatureMap& fm, const LinearQ& q_init, const SearchConfig& cfg) {
    validate_search_config(cfg);
    if (fm.n_states() != env.n_states || fm.n_actions() != env.n_actions)
        throw ArgumentError("beam_search: feature map does not match the MDP");
    if (q_init.dim() != fm.dim()) throw ArgumentError("beam_search: q_init dimension mismatch");
    return BeamRunner(env, fm, q_init, cfg).run();
}

DfsResult dfs_search(std::span<const std::vector<Transition>> batches, const LinearQ& q_boot, const FeatureMap& fm,
                     const Assignment& sigma_prior, double lambda, double gamma, const OptConfig& opt,
                     const Mdp* env, std::size_t cap) {
    DfsResult out;
    out.nodes_per_level.assign(batches.size(), 0);
    bool have = false;
    auto consider = [&](const LinearQ& leaf, double final_loss) {
        const double v = env ? policy_value(*env, greedy_policy(leaf, fm)) : final_loss;
        const bool better = env ? v > out.best_value + 1e-12 : v < out.best_value;
        if (!have || better) {
            out.best = leaf;
            out.best_value = v;
            have = true;
        }
    };
    auto recurse = [&](auto&& self, std::size_t level, const LinearQ& parent, const Assignment& info,
                       double last_loss) -> void {
        if (level == batches.size()) {
            consider(parent, last_loss);
            return;
        }
        const auto& batch = batches[level];
        const auto states = bootstrap_states(batch);
        const auto candidates = enumerate_consistent_assignments(states, fm, info, cap);
        for (const auto& sigma : candidates) {
            if (++out.nodes_visited > cap)
                throw SizeError(fmt::format("dfs_search: more than {} nodes", cap));
            ++out.nodes_per_level[level];
            const Assignment next_info = union_assignments(info, sigma).deduplicated();
            ConsistencyBuffer buf;
            buf.push(next_info);
            const auto labels = make_labels(batch, parent, parent, LabelMode::assignment(sigma), fm, gamma);
            const TrainResult fit = train_regressor(labels, buf, parent, lambda, fm, opt);
            self(self, level + 1, fit.q, next_info, fit.loss);
        }
    };
    recurse(recurse, 0, q_boot, sigma_prior.deduplicated(), 0.0);
    if (!have) throw ConvergenceError("dfs_search: no consistent assignment sequence", 0.0);
    return out;
}

std::string level_csv(const SearchTree& tree) {
    std::string out = "level,phase,pool_size,frontier_size,best_score,best_policy_value\n";
    for (const auto& r : tree.levels)
        out += fmt::format("{},{},{},{},{:.17g},{:.17g}\n", r.level, r.phase, r.pool_size, r.frontier_size,
                           r.best_score, r.best_policy_value);
    return out;
}

std::string tree_dump(const SearchTree& tree) {
    std::string out;
    for (const auto& [id, n] : tree.nodes) {
        nlohmann::ordered_json j;
        j["id"] = id;
        j["parent"] = n.parent ? nlohmann::ordered_json(*n.parent) : nlohmann::ordered_json(nullptr);
        j["depth"] = n.depth;
        j["level"] = n.level;
        j["status"] = to_string(n.status);
        j["score"] = n.score;
        j["policy_value"] = n.policy_value;
        j["digest"] = fmt::format("{:016x}", n.digest);
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<std::string> check_tree(const SearchTree& tree, const SearchConfig& cfg) {
    std::vector<std::string> bad;
    for (const auto& [id, n] : tree.nodes) {
        if (!n.parent) {
            if (!n.own_assignment.empty() || (!n.released && !n.ancestor_assignment.empty()))
                bad.push_back(fmt::format("root {} has a non-empty assignment", id));
            continue;
        }
        auto it = tree.nodes.find(*n.parent);
        if (it == tree.nodes.end()) {
            bad.push_back(fmt::format("node {} has a missing parent {}", id, *n.parent));
            continue;
        }
        const SearchNode& p = it->second;
        if (n.depth != p.depth + 1) bad.push_back(fmt::format("node {} depth {} != parent depth + 1", id, n.depth));
        if (!n.released && !p.released &&
            !(n.ancestor_assignment == union_assignments(p.ancestor_assignment, n.own_assignment)))
            bad.push_back(fmt::format("node {} ancestor assignment differs from parent's plus its own", id));
        if (p.status != NodeStatus::Expanded)
            bad.push_back(fmt::format("node {} has parent {} that is not expanded", id, p.id));
    }
    if (tree.pool.size() > static_cast<std::size_t>(cfg.pool_cap)) bad.push_back("pool exceeds m");
    if (tree.frontier.size() > static_cast<std::size_t>(cfg.frontier_cap)) bad.push_back("frontier exceeds F");
    for (const int id : tree.frontier) {
        if (std::find(tree.pool.begin(), tree.pool.end(), id) == tree.pool.end())
            bad.push_back(fmt::format("frontier node {} is not in the pool", id));
        for (auto cur = tree.nodes.find(id); cur != tree.nodes.end() && cur->second.parent;
             cur = tree.nodes.find(*cur->second.parent))
            if (!tree.nodes.count(*cur->second.parent))
                bad.push_back(fmt::format("frontier node {} lost an ancestor", id));
    }
    for (const auto& r : tree.levels) {
        if (r.pool_size > cfg.pool_cap) bad.push_back(fmt::format("level {}: pool {} > m", r.level, r.pool_size));
        if (r.frontier_size > cfg.frontier_cap)
            bad.push_back(fmt::format("level {}: frontier {} > F", r.level, r.frontier_size));
    }
    return bad;
}

}  // namespace conqur
