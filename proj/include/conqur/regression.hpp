#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "conqur/consistency.hpp"
#include "conqur/features.hpp"
#include "conqur/mdp.hpp"
#include "conqur/record.hpp"

namespace conqur {

/// How successor actions are chosen when forming Q-labels.
struct LabelMode {
    enum class Kind {
        MaxTarget,   // argmax and value from the bootstrap regressor (DQN)
        Double,      // argmax from the current regressor, value from bootstrap (DDQN)
        Assignment,  // value at sigma(s') under the bootstrap regressor
    };

    Kind kind = Kind::MaxTarget;
    conqur::Assignment sigma;  // Assignment kind only

    static LabelMode max_target() { return {}; }
    static LabelMode double_q() { return {Kind::Double, {}}; }
    static LabelMode assignment(conqur::Assignment s) { return {Kind::Assignment, std::move(s)}; }
};

struct LabeledPair {
    State s;
    Action a;
    double target;
};

/// One label per transition: r + gamma * Q_boot(s', chosen action), or r
/// alone when s' is terminal. Throws ArgumentError when an assignment does
/// not cover a non-terminal successor.
std::vector<LabeledPair> make_labels(std::span<const Transition> batch, const LinearQ& q_boot,
                                     const LinearQ& q_current, const LabelMode& mode, const FeatureMap& fm,
                                     double gamma);

/// The action assignment the labels of `mode` commit to, over the batch's
/// non-terminal successors.
Assignment label_assignment(std::span<const Transition> batch, const LinearQ& q_boot, const LinearQ& q_current,
                            const LabelMode& mode, const FeatureMap& fm);

struct OptConfig {
    double step_size = 1.0;  // initial (and maximum) line-search step
    int max_iters = 500;
    double grad_tol = 1e-10;
};

struct AnnealSchedule {
    double lambda_final = 0.0;
    double timescale = 1.0;  // A, in environment steps
};

/// lambda_final * t / (t + A)
double anneal_lambda(double t, const AnnealSchedule& sched);

/// sum over labels of (target - Q_theta(s,a))^2 + lambda * C_theta(B).
double penalized_loss(const LinearQ& theta, std::span<const LabeledPair> labels, const ConsistencyBuffer& buf,
                      double lambda, const FeatureMap& fm);

/// Same loss with labels built from a batch and an explicit assignment.
double penalized_loss(const LinearQ& theta, std::span<const Transition> batch, const ConsistencyBuffer& buf,
                      const LinearQ& q_boot, const Assignment& sigma, double lambda, double gamma,
                      const FeatureMap& fm);

/// -2 sum delta phi + lambda * penalty_subgradient.
Eigen::VectorXd loss_gradient(const LinearQ& theta, std::span<const LabeledPair> labels,
                              const ConsistencyBuffer& buf, double lambda, const FeatureMap& fm);

enum class StopReason { GradientTolerance, NoDescent, MaxIterations };

struct TrainResult {
    LinearQ q;
    double loss = 0.0;
    double penalty = 0.0;  // C_theta(B) at the returned theta, unweighted
    int iterations = 0;
    StopReason reason = StopReason::MaxIterations;
    std::vector<double> accepted_losses;  // objective after each accepted step, starting point first
};

/// Full-batch subgradient descent with backtracking line search, started at
/// theta_init. Directions are preconditioned by the label Gram matrix.
/// With penalty_enabled = false the penalty code path is skipped entirely.
/// Throws NumericError once the loss exceeds 1e12.
TrainResult train_regressor(std::span<const LabeledPair> labels, const ConsistencyBuffer& buf,
                            const LinearQ& theta_init, double lambda, const FeatureMap& fm, const OptConfig& opt,
                            bool penalty_enabled = true);

/// Where the consistency buffer's pairs come from across iterations.
enum class BufferScope { CurrentBatch, Accumulate };

struct QLearningSchedule {
    int iterations = 200;
    int batch_size = 64;
    double epsilon = 0.1;
    LabelMode mode;
    double lambda = 0.0;
    std::optional<AnnealSchedule> anneal;  // overrides lambda; timescale <= 0 means total steps / 5
    BufferScope buffer_scope = BufferScope::CurrentBatch;
    BufferPolicy buffer_policy = BufferPolicy::AllHistory;
    std::size_t buffer_window = 0;
    double buffer_rate = 1.0;
    int target_swap_period = 5;
    bool clip_rewards = false;
    bool penalty_enabled = true;
    int max_episode_len = 1000;
    OptConfig opt;
    std::optional<LinearQ> theta_init;  // zero when absent
};

struct QLearningRun {
    std::vector<LinearQ> thetas;  // theta_0 (initial) .. theta_T
    std::vector<MetricRow> rows;
    long long transitions_used = 0;
};

/// Batch Q-learning: collect with eps-greedy(online), label from the target
/// regressor, fit, and copy online into target every target_swap_period
/// iterations. Batch k is drawn from split_stream(seed, "collect", k).
QLearningRun batch_q_learning(const Mdp& env, const FeatureMap& fm, const QLearningSchedule& schedule,
                              std::uint64_t seed);

}  // namespace conqur
