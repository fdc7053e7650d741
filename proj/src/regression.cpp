#include "conqur/regression.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "conqur/error.hpp"
#include "conqur/sampling.hpp"

namespace conqur {

namespace {

constexpr double kDivergenceLimit = 1e12;

Action chosen_action(const Transition& t, const LinearQ& q_boot, const LinearQ& q_current,
                     const LabelMode& mode, const FeatureMap& fm) {
    switch (mode.kind) {
        case LabelMode::Kind::MaxTarget:
            return greedy_action(q_boot, fm, t.s_next);
        case LabelMode::Kind::Double:
            return greedy_action(q_current, fm, t.s_next);
        case LabelMode::Kind::Assignment: {
            const auto a = mode.sigma.action_for(t.s_next);
            if (!a) throw ArgumentError(fmt::format("assignment does not cover successor state {}", t.s_next));
            return *a;
        }
    }
    throw InternalError("unknown label mode");
}

// Quadratic-plus-hinge objective compiled from labels and buffer:
//   theta' H theta - 2 b' theta + c + lambda * sum_k w_k [D_k theta]_+
struct Objective {
    Eigen::MatrixXd h;
    Eigen::VectorXd b;
    double c = 0.0;
    Eigen::MatrixXd d;  // one hinge per row
    Eigen::VectorXd w;
    double lambda = 0.0;
    bool penalty = true;

    Objective(std::span<const LabeledPair> labels, const ConsistencyBuffer& buf, double lam, const FeatureMap& fm,
              bool with_penalty)
        : lambda(lam), penalty(with_penalty) {
        const int dim = fm.dim();
        h = Eigen::MatrixXd::Zero(dim, dim);
        b = Eigen::VectorXd::Zero(dim);
        std::map<std::pair<State, Action>, std::pair<double, double>> by_pair;  // count, sum of targets
        for (const auto& l : labels) {
            auto& slot = by_pair[{l.s, l.a}];
            slot.first += 1.0;
            slot.second += l.target;
            c += l.target * l.target;
        }
        for (const auto& [key, acc] : by_pair) {
            const auto phi = fm.phi(key.first, key.second);
            h.noalias() += acc.first * phi * phi.transpose();
            b.noalias() += acc.second * phi;
        }
        if (!penalty) return;
        const auto entries = buf.aggregated();
        d.resize(static_cast<Eigen::Index>(entries.size()) * (fm.n_actions() - 1), dim);
        w.resize(d.rows());
        Eigen::Index r = 0;
        for (const auto& e : entries) {
            for (Action other = 0; other < fm.n_actions(); ++other) {
                if (other == e.a) continue;
                d.row(r) = (fm.phi(e.s, other) - fm.phi(e.s, e.a)).transpose();
                w(r) = e.weight;
                ++r;
            }
        }
    }

    double value(const Eigen::VectorXd& theta) const {
        double v = theta.dot(h * theta) - 2.0 * b.dot(theta) + c;
        if (penalty && d.rows() > 0) {
            const Eigen::VectorXd act = d * theta;
            double pen = 0.0;
            for (Eigen::Index k = 0; k < act.size(); ++k) pen += w(k) * std::max(0.0, act(k));
            v += lambda * pen;
        }
        return v;
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const {
        Eigen::VectorXd g = 2.0 * (h * theta - b);
        if (penalty && d.rows() > 0) {
            const Eigen::VectorXd act = d * theta;
            Eigen::VectorXd sub = Eigen::VectorXd::Zero(theta.size());
            for (Eigen::Index k = 0; k < act.size(); ++k)
                if (act(k) > 0.0) sub += w(k) * d.row(k).transpose();
            g += lambda * sub;
        }
        return g;
    }
};

}  // namespace

std::vector<LabeledPair> make_labels(std::span<const Transition> batch, const LinearQ& q_boot,
                                     const LinearQ& q_current, const LabelMode& mode, const FeatureMap& fm,
                                     double gamma) {
    std::vector<LabeledPair> out;
    out.reserve(batch.size());
    for (const auto& t : batch) {
        double target = t.r;
        if (!t.done) {
            const Action a = chosen_action(t, q_boot, q_current, mode, fm);
            target += gamma * q_value(q_boot, fm, t.s_next, a);
        }
        out.push_back({t.s, t.a, target});
    }
    return out;
}

Assignment label_assignment(std::span<const Transition> batch, const LinearQ& q_boot, const LinearQ& q_current,
                            const LabelMode& mode, const FeatureMap& fm) {
    std::vector<Assignment::Pair> pairs;
    for (const State s : bootstrap_states(batch)) {
        Transition probe{};
        probe.s_next = s;
        pairs.emplace_back(s, chosen_action(probe, q_boot, q_current, mode, fm));
    }
    return Assignment(std::move(pairs));
}

double anneal_lambda(double t, const AnnealSchedule& sched) {
    if (t < 0.0) throw ArgumentError("anneal_lambda: t must be nonnegative");
    if (!(sched.timescale > 0.0)) throw ArgumentError("anneal_lambda: timescale must be positive");
    return sched.lambda_final * (t / (t + sched.timescale));
}

double penalized_loss(const LinearQ& theta, std::span<const LabeledPair> labels, const ConsistencyBuffer& buf,
                      double lambda, const FeatureMap& fm) {
    double loss = 0.0;
    for (const auto& l : labels) {
        const double delta = l.target - q_value(theta, fm, l.s, l.a);
        loss += delta * delta;
    }
    if (lambda != 0.0) loss += lambda * soft_penalty_buffer(theta, fm, buf);
    return loss;
}

double penalized_loss(const LinearQ& theta, std::span<const Transition> batch, const ConsistencyBuffer& buf,
                      const LinearQ& q_boot, const Assignment& sigma, double lambda, double gamma,
                      const FeatureMap& fm) {
    const auto labels = make_labels(batch, q_boot, q_boot, LabelMode::assignment(sigma), fm, gamma);
    return penalized_loss(theta, labels, buf, lambda, fm);
}

Eigen::VectorXd loss_gradient(const LinearQ& theta, std::span<const LabeledPair> labels,
                              const ConsistencyBuffer& buf, double lambda, const FeatureMap& fm) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(fm.dim());
    for (const auto& l : labels) {
        const double delta = l.target - q_value(theta, fm, l.s, l.a);
        g -= 2.0 * delta * fm.phi(l.s, l.a);
    }
    if (lambda != 0.0) g += lambda * penalty_subgradient(theta, fm, buf);
    return g;
}

TrainResult train_regressor(std::span<const LabeledPair> labels, const ConsistencyBuffer& buf,
                            const LinearQ& theta_init, double lambda, const FeatureMap& fm, const OptConfig& opt,
                            bool penalty_enabled) {
    if (theta_init.dim() != fm.dim()) throw ArgumentError("train_regressor: theta dimension mismatch");
    if (!(opt.step_size > 0.0) || opt.max_iters < 1 || !(opt.grad_tol > 0.0))
        throw ArgumentError("train_regressor: invalid optimizer configuration");
    if (!(lambda >= 0.0)) throw ArgumentError("train_regressor: lambda must be nonnegative");

    const Objective obj(labels, buf, lambda, fm, penalty_enabled);
    const int dim = fm.dim();
    const double mu = 1e-8 * std::max(1.0, 2.0 * obj.h.trace() / dim);
    const Eigen::LDLT<Eigen::MatrixXd> precond(2.0 * obj.h + mu * Eigen::MatrixXd::Identity(dim, dim));

    TrainResult out;
    Eigen::VectorXd theta = theta_init.theta;
    double f = obj.value(theta);
    if (!std::isfinite(f) || f > kDivergenceLimit)
        throw NumericError(fmt::format("train_regressor: initial loss {:.6g} exceeds 1e12", f));
    out.accepted_losses.push_back(f);

    double step = opt.step_size;
    for (int it = 1; it <= opt.max_iters; ++it) {
        out.iterations = it;
        const Eigen::VectorXd g = obj.gradient(theta);
        if (g.norm() <= opt.grad_tol) {
            out.reason = StopReason::GradientTolerance;
            break;
        }
        const Eigen::VectorXd scaled = -precond.solve(g);
        const Eigen::VectorXd plain = -g;
        bool accepted = false;
        for (int which = 0; which < 2 && !accepted; ++which) {
            const Eigen::VectorXd& dir = which == 0 ? scaled : plain;
            const double slope = g.dot(dir);
            if (!(slope < 0.0)) continue;
            double alpha = which == 0 ? std::min(opt.step_size, 2.0 * step) : scaled.norm() / g.norm();
            for (int halving = 0; halving < 60; ++halving, alpha *= 0.5) {
                const Eigen::VectorXd candidate = theta + alpha * dir;
                const double fc = obj.value(candidate);
                if (!std::isfinite(fc)) continue;
                if (fc <= f + 1e-4 * alpha * slope && fc < f) {
                    if (fc > kDivergenceLimit)
                        throw NumericError(
                            fmt::format("train_regressor: loss {:.6g} exceeds 1e12 at step {}", fc, it));
                    theta = candidate;
                    f = fc;
                    if (which == 0) step = alpha;
                    accepted = true;
                    break;
                }
            }
        }
        if (!accepted) {
            out.reason = StopReason::NoDescent;
            break;
        }
        out.accepted_losses.push_back(f);
        if (it == opt.max_iters) out.reason = StopReason::MaxIterations;
    }

    out.q = LinearQ(theta);
    out.loss = penalized_loss(out.q, labels, buf, penalty_enabled ? lambda : 0.0, fm);
    out.penalty = penalty_enabled ? soft_penalty_buffer(out.q, fm, buf) : 0.0;
    if (!std::isfinite(out.loss)) throw NumericError("train_regressor: non-finite final loss");
    return out;
}

QLearningRun batch_q_learning(const Mdp& env, const FeatureMap& fm, const QLearningSchedule& schedule,
                              std::uint64_t seed) {
    if (schedule.iterations < 1 || schedule.batch_size < 1)
        throw ArgumentError("batch_q_learning: iterations and batch_size must be positive");
    if (schedule.target_swap_period < 1) throw ArgumentError("batch_q_learning: swap period must be positive");
    if (!(schedule.epsilon >= 0.0 && schedule.epsilon <= 1.0))
        throw ArgumentError("batch_q_learning: epsilon must lie in [0,1]");

    QLearningRun run;
    LinearQ online = schedule.theta_init.value_or(LinearQ(fm.dim()));
    LinearQ target = online;
    run.thetas.push_back(online);

    std::optional<AnnealSchedule> anneal = schedule.anneal;
    if (anneal && !(anneal->timescale > 0.0))
        anneal->timescale = static_cast<double>(schedule.iterations) * schedule.batch_size / 5.0;

    ConsistencyBuffer buffer(schedule.buffer_policy, schedule.buffer_window, schedule.buffer_rate);
    Rng buffer_rng = split_stream(seed, "buffer", 0);

    for (int k = 0; k < schedule.iterations; ++k) {
        Rng rng = split_stream(seed, "collect", static_cast<std::uint64_t>(k));
        auto batch = collect_batch(env, fm, online, schedule.epsilon, schedule.batch_size, rng,
                                   schedule.max_episode_len);
        if (schedule.clip_rewards)
            for (auto& t : batch) t.r = std::clamp(t.r, -1.0, 1.0);
        const double lambda =
            anneal ? anneal_lambda(static_cast<double>(run.transitions_used), *anneal)
                            : schedule.lambda;
        run.transitions_used += static_cast<long long>(batch.size());

        if (schedule.buffer_scope == BufferScope::CurrentBatch) buffer.clear();
        buffer.push(label_assignment(batch, target, online, schedule.mode, fm), 1.0, &buffer_rng);

        const auto labels = make_labels(batch, target, online, schedule.mode, fm, env.gamma);
        const TrainResult fit =
            train_regressor(labels, buffer, online, lambda, fm, schedule.opt, schedule.penalty_enabled);
        online = fit.q;
        if ((k + 1) % schedule.target_swap_period == 0) target = online;
        run.thetas.push_back(online);

        MetricRow row;
        row.iteration = k;
        row.phase = "train";
        row.score = fit.loss;
        row.loss = fit.loss;
        row.penalty = fit.penalty;
        row.lambda = lambda;
        row.policy_value = policy_value(env, greedy_policy(online, fm));
        run.rows.push_back(std::move(row));
    }
    return run;
}

}  // namespace conqur
