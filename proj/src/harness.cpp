#include "conqur/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <limits>
#include <map>
#include <set>

#include <fmt/format.h>

#include "conqur/error.hpp"
#include "conqur/oracles.hpp"

namespace conqur {

namespace {

constexpr std::pair<ExperimentKind, const char*> kKinds[] = {
    {ExperimentKind::DemoDelusion, "demo-delusion"}, {ExperimentKind::Baseline, "baseline"},
    {ExperimentKind::Penalized, "penalized"},        {ExperimentKind::MultiBaseline, "multi-baseline"},
    {ExperimentKind::Conqur, "conqur"},              {ExperimentKind::Verify, "verify"},
    {ExperimentKind::Compare, "compare"},
};

template <class E>
using Names = std::vector<std::pair<E, std::string>>;

const Names<LabelMode::Kind> kLabelModes = {{LabelMode::Kind::MaxTarget, "max"}, {LabelMode::Kind::Double, "double"}};
const Names<BufferScope> kScopes = {{BufferScope::CurrentBatch, "current-batch"},
                                    {BufferScope::Accumulate, "accumulate"}};
const Names<BufferPolicy> kPolicies = {
    {BufferPolicy::AllHistory, "all"}, {BufferPolicy::Window, "window"}, {BufferPolicy::Subsample, "subsample"}};
const Names<ScoringMode> kScoring = {{ScoringMode::Loss, "loss"}, {ScoringMode::Rollout, "rollout"}};
const Names<ConsistencyMode> kConsistency = {{ConsistencyMode::PenaltyOnly, "penalty-only"},
                                             {ConsistencyMode::RejectSample, "reject-sample"}};
const Names<MdpSource::Kind> kMdpKinds = {
    {MdpSource::Kind::Builtin, "builtin"}, {MdpSource::Kind::File, "file"}, {MdpSource::Kind::Random, "random"}};
const Names<FeatureSource::Kind> kFeatureKinds = {{FeatureSource::Kind::Instance, "instance"},
                                                  {FeatureSource::Kind::OneHot, "one-hot"},
                                                  {FeatureSource::Kind::File, "file"}};

template <class E>
std::string name_of(const Names<E>& names, E v) {
    for (const auto& [e, n] : names)
        if (e == v) return n;
    return "?";
}

// Reads one object of the config, collecting problems instead of throwing.
class Reader {
public:
    Reader(const Json* j, std::string path, std::string_view text, std::vector<std::string>& errors)
        : j_(j), path_(std::move(path)), text_(text), errors_(errors) {
        if (j_ && !j_->is_object()) {
            error(path_.empty() ? "config" : path_, "expected an object");
            j_ = nullptr;
        }
    }

    Reader section(const char* key) {
        seen_.insert(key);
        const Json* sub = j_ && j_->contains(key) ? &j_->at(key) : nullptr;
        return Reader(sub, qualified(key), text_, errors_);
    }

    bool has(const char* key) const { return j_ && j_->contains(key); }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!has(key)) return;
        const Json& v = j_->at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) return error(qualified(key), "expected true or false");
            out = v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) return error(qualified(key), "expected a string");
            out = v.get<std::string>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) return error(qualified(key), "expected a number");
            out = v.get<T>();
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!v.is_number_unsigned()) return error(qualified(key), "expected a non-negative integer");
            out = v.get<std::uint64_t>();
        } else if constexpr (std::is_same_v<T, std::size_t>) {
            if (!v.is_number_unsigned()) return error(qualified(key), "expected a non-negative integer");
            out = v.get<std::size_t>();
        } else {
            if (!v.is_number_integer()) return error(qualified(key), "expected an integer");
            const auto x = v.get<long long>();
            if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
                return error(qualified(key), "integer out of range");
            out = static_cast<T>(x);
        }
    }

    template <class E>
    void get_enum(const char* key, E& out, const Names<E>& names) {
        std::string text;
        const bool present = has(key);
        get(key, text);
        if (!present || text.empty()) return;
        for (const auto& [e, n] : names)
            if (n == text) {
                out = e;
                return;
            }
        std::string options;
        for (const auto& [e, n] : names) options += (options.empty() ? "" : ", ") + n;
        error(qualified(key), fmt::format("unknown value '{}' (expected one of {})", text, options));
    }

    void finish() {
        if (!j_) return;
        for (auto it = j_->begin(); it != j_->end(); ++it)
            if (!seen_.count(it.key())) error(qualified(it.key()), "unknown field");
    }

    void error(const std::string& field, const std::string& what) {
        const std::string leaf = field.substr(field.rfind('.') == std::string::npos ? 0 : field.rfind('.') + 1);
        const auto pos = text_.find("\"" + leaf + "\"");
        if (pos == std::string_view::npos)
            errors_.push_back(fmt::format("field '{}': {}", field, what));
        else
            errors_.push_back(fmt::format("line {}: field '{}': {}", line_of(text_, pos), field, what));
    }

    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    const Json* j_;
    std::string path_;
    std::string_view text_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

void read_opt(Reader r, OptConfig& opt) {
    r.get("step_size", opt.step_size);
    r.get("max_iters", opt.max_iters);
    r.get("grad_tol", opt.grad_tol);
    r.finish();
}

Json opt_json(const OptConfig& opt) {
    Json j;
    j["step_size"] = opt.step_size;
    j["max_iters"] = opt.max_iters;
    j["grad_tol"] = opt.grad_tol;
    return j;
}

}  // namespace

const char* to_string(ExperimentKind k) {
    for (const auto& [e, n] : kKinds)
        if (e == k) return n;
    return "?";
}

std::optional<ExperimentKind> kind_from_string(std::string_view s) {
    for (const auto& [e, n] : kKinds)
        if (s == n) return e;
    return std::nullopt;
}

ExperimentConfig parse_config_text(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(fmt::format("line {}: {}", line_of(text, e.byte), e.what()));
    }

    std::vector<std::string> errors;
    ExperimentConfig cfg;
    Reader top(&j, "", text, errors);

    std::string kind;
    if (!top.has("kind")) errors.push_back("field 'kind': missing");
    top.get("kind", kind);
    if (top.has("kind") && !kind.empty()) {
        if (auto k = kind_from_string(kind))
            cfg.kind = *k;
        else
            top.error("kind", fmt::format("unknown experiment kind '{}'", kind));
    }
    if (!top.has("seed")) errors.push_back("field 'seed': missing (every experiment needs a master seed)");
    top.get("seed", cfg.seed);
    top.get("runs", cfg.runs);
    top.get("output_dir", cfg.output_dir);
    top.get("threads", cfg.threads);
    top.get("regressors", cfg.regressors);

    {
        Reader r = top.section("mdp");
        r.get_enum("source", cfg.mdp.kind, kMdpKinds);
        r.get("name", cfg.mdp.name);
        r.get("path", cfg.mdp.path);
        r.get("states", cfg.mdp.states);
        r.get("actions", cfg.mdp.actions);
        r.get("feature_dim", cfg.mdp.feature_dim);
        r.get("delusion_prone", cfg.mdp.delusion_prone);
        if (r.has("seed")) {
            std::uint64_t s = 0;
            r.get("seed", s);
            cfg.mdp.seed = s;
        }
        r.finish();
    }
    {
        Reader r = top.section("features");
        r.get_enum("source", cfg.features.kind, kFeatureKinds);
        r.get("path", cfg.features.path);
        r.finish();
    }
    {
        Reader r = top.section("regression");
        auto& q = cfg.regression;
        r.get("iterations", q.iterations);
        r.get("batch_size", q.batch_size);
        r.get("epsilon", q.epsilon);
        r.get_enum("label_mode", q.mode.kind, kLabelModes);
        r.get("lambda", q.lambda);
        if (r.has("anneal")) {
            Reader a = r.section("anneal");
            AnnealSchedule sched;
            a.get("lambda_final", sched.lambda_final);
            a.get("timescale", sched.timescale);
            a.finish();
            q.anneal = sched;
        }
        r.get_enum("buffer_scope", q.buffer_scope, kScopes);
        r.get_enum("buffer_policy", q.buffer_policy, kPolicies);
        r.get("buffer_window", q.buffer_window);
        r.get("buffer_rate", q.buffer_rate);
        r.get("target_swap_period", q.target_swap_period);
        r.get("clip_rewards", q.clip_rewards);
        r.get("penalty_enabled", q.penalty_enabled);
        r.get("max_episode_len", q.max_episode_len);
        read_opt(r.section("opt"), q.opt);
        r.finish();
    }
    {
        Reader r = top.section("search");
        auto& s = cfg.search;
        r.get("pool_cap", s.pool_cap);
        r.get("frontier_cap", s.frontier_cap);
        r.get("expand_top", s.expand_top);
        r.get("split_factor", s.split_factor);
        r.get("dive_levels", s.dive_levels);
        r.get("horizon", s.horizon);
        r.get("tau", s.tau);
        r.get("adaptive_tau", s.adaptive_tau);
        r.get("lambda", s.lambda);
        r.get("boltzmann_period", s.boltzmann_period);
        r.get_enum("scoring", s.scoring, kScoring);
        r.get("calibration", s.calibration);
        r.get_enum("consistency_mode", s.consistency_mode, kConsistency);
        r.get("batch_size", s.batch_size);
        r.get("eps_train", s.eps_train);
        r.get("eps_eval", s.eps_eval);
        r.get("rollout_episodes", s.rollout_episodes);
        r.get("rollout_horizon", s.rollout_horizon);
        r.get("target_swap_period", s.target_swap_period);
        r.get("max_episode_len", s.max_episode_len);
        r.get("reject_attempts", s.reject_attempts);
        r.get("backtracking", s.backtracking);
        r.get("archive_cap", s.archive_cap);
        r.get("buffer_window", s.buffer_window);
        read_opt(r.section("opt"), s.opt);
        r.finish();
    }
    {
        Reader r = top.section("evaluation");
        r.get("episodes", cfg.eval.episodes);
        r.get("eps_eval", cfg.eval.eps_eval);
        r.get("horizon", cfg.eval.horizon);
        r.finish();
    }
    {
        Reader r = top.section("verify");
        r.get("instances", cfg.verify.instances);
        r.get("max_states", cfg.verify.max_states);
        r.get("max_actions", cfg.verify.max_actions);
        r.get("max_dim", cfg.verify.max_dim);
        r.finish();
    }
    {
        Reader r = top.section("compare");
        r.get("baseline_summary", cfg.compare.baseline_summary);
        r.get("conqur_summary", cfg.compare.conqur_summary);
        r.finish();
    }
    top.finish();

    if (errors.empty()) {
        try {
            validate_config(cfg);
        } catch (const ArgumentError& e) {
            errors.push_back(e.what());
        }
    }
    if (!errors.empty()) {
        std::string msg;
        for (const auto& e : errors) msg += (msg.empty() ? "" : "\n") + e;
        throw ParseError(msg);
    }
    return cfg;
}

ExperimentConfig parse_config(const std::string& path) { return parse_config_text(read_file(path)); }

std::string emit_config(const ExperimentConfig& cfg) {
    Json j;
    j["kind"] = to_string(cfg.kind);
    j["seed"] = cfg.seed;
    j["runs"] = cfg.runs;
    j["output_dir"] = cfg.output_dir;
    j["threads"] = cfg.threads;
    j["regressors"] = cfg.regressors;

    Json mdp;
    mdp["source"] = name_of(kMdpKinds, cfg.mdp.kind);
    mdp["name"] = cfg.mdp.name;
    mdp["path"] = cfg.mdp.path;
    mdp["states"] = cfg.mdp.states;
    mdp["actions"] = cfg.mdp.actions;
    mdp["feature_dim"] = cfg.mdp.feature_dim;
    mdp["delusion_prone"] = cfg.mdp.delusion_prone;
    if (cfg.mdp.seed) mdp["seed"] = *cfg.mdp.seed;
    j["mdp"] = mdp;

    Json features;
    features["source"] = name_of(kFeatureKinds, cfg.features.kind);
    features["path"] = cfg.features.path;
    j["features"] = features;

    const auto& q = cfg.regression;
    Json reg;
    reg["iterations"] = q.iterations;
    reg["batch_size"] = q.batch_size;
    reg["epsilon"] = q.epsilon;
    reg["label_mode"] = name_of(kLabelModes, q.mode.kind);
    reg["lambda"] = q.lambda;
    if (q.anneal) reg["anneal"] = Json{{"lambda_final", q.anneal->lambda_final}, {"timescale", q.anneal->timescale}};
    reg["buffer_scope"] = name_of(kScopes, q.buffer_scope);
    reg["buffer_policy"] = name_of(kPolicies, q.buffer_policy);
    reg["buffer_window"] = q.buffer_window;
    reg["buffer_rate"] = q.buffer_rate;
    reg["target_swap_period"] = q.target_swap_period;
    reg["clip_rewards"] = q.clip_rewards;
    reg["penalty_enabled"] = q.penalty_enabled;
    reg["max_episode_len"] = q.max_episode_len;
    reg["opt"] = opt_json(q.opt);
    j["regression"] = reg;

    const auto& s = cfg.search;
    Json search;
    search["pool_cap"] = s.pool_cap;
    search["frontier_cap"] = s.frontier_cap;
    search["expand_top"] = s.expand_top;
    search["split_factor"] = s.split_factor;
    search["dive_levels"] = s.dive_levels;
    search["horizon"] = s.horizon;
    search["tau"] = s.tau;
    search["adaptive_tau"] = s.adaptive_tau;
    search["lambda"] = s.lambda;
    search["boltzmann_period"] = s.boltzmann_period;
    search["scoring"] = name_of(kScoring, s.scoring);
    search["calibration"] = s.calibration;
    search["consistency_mode"] = name_of(kConsistency, s.consistency_mode);
    search["batch_size"] = s.batch_size;
    search["eps_train"] = s.eps_train;
    search["eps_eval"] = s.eps_eval;
    search["rollout_episodes"] = s.rollout_episodes;
    search["rollout_horizon"] = s.rollout_horizon;
    search["target_swap_period"] = s.target_swap_period;
    search["max_episode_len"] = s.max_episode_len;
    search["reject_attempts"] = s.reject_attempts;
    search["backtracking"] = s.backtracking;
    search["archive_cap"] = s.archive_cap;
    search["buffer_window"] = s.buffer_window;
    search["opt"] = opt_json(s.opt);
    j["search"] = search;

    j["evaluation"] = Json{{"episodes", cfg.eval.episodes}, {"eps_eval", cfg.eval.eps_eval},
                           {"horizon", cfg.eval.horizon}};
    j["verify"] = Json{{"instances", cfg.verify.instances},
                       {"max_states", cfg.verify.max_states},
                       {"max_actions", cfg.verify.max_actions},
                       {"max_dim", cfg.verify.max_dim}};
    j["compare"] = Json{{"baseline_summary", cfg.compare.baseline_summary},
                        {"conqur_summary", cfg.compare.conqur_summary}};
    return j.dump(2) + "\n";
}

void validate_config(const ExperimentConfig& cfg) {
    std::vector<std::string> bad;
    auto check = [&](bool ok, const char* field, const char* why) {
        if (!ok) bad.push_back(fmt::format("field '{}': {}", field, why));
    };
    check(cfg.runs >= 1, "runs", "must be >= 1");
    check(cfg.threads >= 1, "threads", "must be >= 1");
    check(cfg.regressors >= 1, "regressors", "must be >= 1");
    if (cfg.mdp.kind == MdpSource::Kind::Builtin)
        check(cfg.mdp.name == "delusion-chain", "mdp.name", "the only builtin instance is 'delusion-chain'");
    if (cfg.mdp.kind == MdpSource::Kind::File) {
        check(!cfg.mdp.path.empty(), "mdp.path", "required for a file source");
        check(cfg.mdp.path.empty() || std::filesystem::exists(cfg.mdp.path), "mdp.path", "file does not exist");
    }
    if (cfg.mdp.kind == MdpSource::Kind::Random) {
        check(cfg.mdp.states >= 2, "mdp.states", "must be >= 2");
        check(cfg.mdp.actions >= 2, "mdp.actions", "must be >= 2");
        check(cfg.mdp.feature_dim >= 1 && cfg.mdp.feature_dim <= cfg.mdp.states * cfg.mdp.actions,
              "mdp.feature_dim", "must lie in [1, states * actions]");
    }
    if (cfg.features.kind == FeatureSource::Kind::File) {
        check(!cfg.features.path.empty(), "features.path", "required for a file source");
        check(cfg.features.path.empty() || std::filesystem::exists(cfg.features.path), "features.path",
              "file does not exist");
    }
    const auto& q = cfg.regression;
    check(q.iterations >= 1, "regression.iterations", "must be >= 1");
    check(q.batch_size >= 1, "regression.batch_size", "must be >= 1");
    check(q.epsilon >= 0.0 && q.epsilon <= 1.0, "regression.epsilon", "must lie in [0,1]");
    check(q.lambda >= 0.0, "regression.lambda", "must be >= 0");
    check(q.target_swap_period >= 1, "regression.target_swap_period", "must be >= 1");
    check(q.buffer_policy != BufferPolicy::Window || q.buffer_window >= 1, "regression.buffer_window",
          "must be >= 1 for the window policy");
    check(q.buffer_rate > 0.0 && q.buffer_rate <= 1.0, "regression.buffer_rate", "must lie in (0,1]");
    check(q.opt.step_size > 0.0, "regression.opt.step_size", "must be > 0");
    check(q.opt.max_iters >= 1, "regression.opt.max_iters", "must be >= 1");
    check(q.opt.grad_tol > 0.0, "regression.opt.grad_tol", "must be > 0");
    try {
        validate_search_config(cfg.search);
    } catch (const ArgumentError& e) {
        bad.push_back(e.what());
    }
    check(cfg.search.opt.step_size > 0.0, "search.opt.step_size", "must be > 0");
    check(cfg.search.opt.max_iters >= 1, "search.opt.max_iters", "must be >= 1");
    check(cfg.search.opt.grad_tol > 0.0, "search.opt.grad_tol", "must be > 0");
    if (cfg.kind == ExperimentKind::MultiBaseline || cfg.kind == ExperimentKind::Compare)
        check(cfg.search.batch_size % cfg.regressors == 0, "regressors",
              "must divide search.batch_size so budgets match");
    if (cfg.kind == ExperimentKind::Compare)
        check(cfg.regressors == cfg.search.frontier_cap, "regressors", "must equal search.frontier_cap");
    check(cfg.eval.episodes >= 1, "evaluation.episodes", "must be >= 1");
    check(cfg.eval.horizon >= 1, "evaluation.horizon", "must be >= 1");
    check(cfg.verify.instances >= 1, "verify.instances", "must be >= 1");
    check(cfg.verify.max_states >= 1, "verify.max_states", "must be >= 1");
    check(cfg.verify.max_actions >= 1, "verify.max_actions", "must be >= 1");
    check(cfg.verify.max_dim >= 1, "verify.max_dim", "must be >= 1");
    check(cfg.compare.baseline_summary.empty() == cfg.compare.conqur_summary.empty(), "compare",
          "give both summaries or neither");
    if (!bad.empty()) {
        std::string msg;
        for (const auto& b : bad) msg += (msg.empty() ? "" : "\n") + b;
        throw ArgumentError(msg);
    }
}

Instance make_instance(const ExperimentConfig& cfg, std::uint64_t run_seed) {
    Instance inst;
    switch (cfg.mdp.kind) {
        case MdpSource::Kind::Builtin:
            inst = make_delusion_chain();
            break;
        case MdpSource::Kind::Random:
            if (cfg.mdp.delusion_prone)
                inst = make_delusion_prone_mdp(cfg.mdp.states, cfg.mdp.actions, cfg.mdp.feature_dim,
                                               cfg.mdp.seed.value_or(run_seed), cfg.search.eps_train);
            else
                inst = make_random_mdp(cfg.mdp.states, cfg.mdp.actions, cfg.mdp.feature_dim,
                                       cfg.mdp.seed.value_or(run_seed));
            break;
        case MdpSource::Kind::File: {
            auto loaded = load_instance(read_file(cfg.mdp.path));
            inst.mdp = std::move(loaded.mdp);
            if (loaded.fm)
                inst.fm = std::move(*loaded.fm);
            else if (cfg.features.kind == FeatureSource::Kind::Instance)
                throw ArgumentError("mdp file has no features section; set features.source");
            break;
        }
    }
    if (cfg.features.kind == FeatureSource::Kind::OneHot) {
        inst.fm = FeatureMap::one_hot(inst.mdp.n_states, inst.mdp.n_actions);
    } else if (cfg.features.kind == FeatureSource::Kind::File) {
        Json j;
        const std::string text = read_file(cfg.features.path);
        try {
            j = Json::parse(text);
            if (j.contains("features")) j = j["features"];
            inst.fm = features_from_json(j, inst.mdp.n_states, inst.mdp.n_actions);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(fmt::format("{}: {}", cfg.features.path, e.what()));
        }
    }
    return inst;
}

std::string rows_csv(const std::vector<MetricRow>& rows) {
    std::string out = "iteration,node_id,phase,score,loss,penalty,lambda,policy_value\n";
    for (const auto& r : rows)
        out += fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.iteration, r.node_id, r.phase,
                           r.score, r.loss, r.penalty, r.lambda, r.policy_value);
    return out;
}

namespace {

RunSummary summarize(const std::string& label, std::uint64_t seed, const std::vector<MetricRow>& rows,
                     double final_value, long long transitions) {
    RunSummary s;
    s.label = label;
    s.seed = seed;
    s.final_value = final_value;
    s.transitions_used = transitions;
    s.best_value = -std::numeric_limits<double>::infinity();
    for (const auto& r : rows)
        if (r.policy_value > s.best_value) {
            s.best_value = r.policy_value;
            s.best_node = r.node_id;
        }
    if (rows.empty()) s.best_value = final_value;
    return s;
}

struct SingleRun {
    std::vector<MetricRow> rows;
    RunSummary summary;
    std::vector<OutputFile> files;
};

SingleRun run_q_learning(const Instance& inst, QLearningSchedule sched, std::uint64_t seed, const char* label) {
    const auto run = batch_q_learning(inst.mdp, inst.fm, sched, seed);
    SingleRun out;
    out.rows = run.rows;
    out.summary = summarize(label, seed, out.rows, policy_value(inst.mdp, greedy_policy(run.thetas.back(), inst.fm)),
                            run.transitions_used);
    return out;
}

SingleRun run_multi(const Instance& inst, const ExperimentConfig& cfg, std::uint64_t seed) {
    QLearningSchedule sched;
    sched.iterations = cfg.search.horizon + 1;
    sched.batch_size = cfg.search.batch_size / cfg.regressors;
    sched.epsilon = cfg.search.eps_train;
    sched.lambda = 0.0;
    sched.penalty_enabled = false;
    sched.target_swap_period = cfg.search.target_swap_period;
    sched.max_episode_len = cfg.search.max_episode_len;
    sched.opt = cfg.search.opt;

    SingleRun out;
    std::vector<double> finals;
    long long transitions = 0;
    std::vector<QLearningRun> runs(static_cast<std::size_t>(cfg.regressors));
    for (int j = 0; j < cfg.regressors; ++j)
        runs[j] = batch_q_learning(inst.mdp, inst.fm, sched, stream_key(seed, "regressor", static_cast<std::uint64_t>(j)));
    for (int k = 0; k < sched.iterations; ++k)
        for (int j = 0; j < cfg.regressors; ++j) {
            MetricRow row = runs[j].rows[k];
            row.node_id = j;
            out.rows.push_back(row);
        }
    double final_best = -std::numeric_limits<double>::infinity();
    for (const auto& r : runs) {
        transitions += r.transitions_used;
        final_best = std::max(final_best, policy_value(inst.mdp, greedy_policy(r.thetas.back(), inst.fm)));
    }
    out.summary = summarize("multi-baseline", seed, out.rows, final_best, transitions);
    return out;
}

SingleRun run_conqur(const Instance& inst, const ExperimentConfig& cfg, std::uint64_t seed, const std::string& tag) {
    SearchConfig sc = cfg.search;
    sc.seed = seed;
    sc.threads = cfg.threads;
    const auto result = beam_search(inst.mdp, inst.fm, LinearQ(inst.fm.dim()), sc);
    SingleRun out;
    for (const auto& [id, n] : result.tree.nodes) {
        if (!n.parent) continue;
        MetricRow row;
        row.iteration = n.level;
        row.node_id = id;
        row.phase = result.tree.levels[static_cast<std::size_t>(n.level)].phase;
        row.score = n.score;
        row.loss = n.loss;
        row.penalty = n.penalty;
        row.lambda = sc.lambda;
        row.policy_value = n.policy_value;
        out.rows.push_back(row);
    }
    std::stable_sort(out.rows.begin(), out.rows.end(), [](const MetricRow& a, const MetricRow& b) {
        return a.iteration != b.iteration ? a.iteration < b.iteration : a.node_id < b.node_id;
    });
    out.summary = summarize("conqur", seed, out.rows, result.best_value, result.tree.transitions_used);
    out.files.push_back({fmt::format("levels-{}.csv", tag), level_csv(result.tree)});
    out.files.push_back({fmt::format("tree-{}.jsonl", tag), tree_dump(result.tree)});
    return out;
}

std::string runs_csv(const std::vector<RunSummary>& runs) {
    std::string out = "label,seed,best_value,best_node,final_value,transitions_used\n";
    for (const auto& r : runs)
        out += fmt::format("{},{},{:.17g},{},{:.17g},{}\n", r.label, r.seed, r.best_value, r.best_node,
                           r.final_value, r.transitions_used);
    return out;
}

void finish_record(RunRecord& rec) {
    rec.best_value = -std::numeric_limits<double>::infinity();
    rec.transitions_used = 0;
    for (const auto& r : rec.runs) {
        rec.transitions_used += r.transitions_used;
        if (r.best_value > rec.best_value) {
            rec.best_value = r.best_value;
            rec.best_node = r.best_node;
        }
    }
    if (rec.runs.empty()) rec.best_value = 0.0;
}

ExperimentResult run_verify(const ExperimentConfig& cfg) {
    ExperimentResult res;
    res.record.kind = to_string(cfg.kind);
    res.record.seed = cfg.seed;
    std::string csv = "instance,n,m,d,count,bound,ok\n";
    int failures = 0;
    for (int i = 0; i < cfg.verify.instances; ++i) {
        Rng rng = split_stream(cfg.seed, "verify", static_cast<std::uint64_t>(i));
        const int n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.verify.max_states)));
        const int m = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.verify.max_actions)));
        const int d = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.verify.max_dim)));
        FeatureMap fm(n, m, d);
        for (State s = 0; s < n; ++s)
            for (Action a = 0; a < m; ++a)
                for (int k = 0; k < d; ++k) fm.phi(s, a)(k) = rng.normal();
        std::vector<State> states(static_cast<std::size_t>(n));
        for (State s = 0; s < n; ++s) states[s] = s;
        const auto check = verify_bound(states, fm);
        if (!check.ok) ++failures;
        csv += fmt::format("{},{},{},{},{},{},{}\n", i, n, m, d, check.count, check.bound.str(),
                           check.ok ? "true" : "false");
    }
    const Instance chain = make_delusion_chain();
    const auto best = best_representable_policy(chain.mdp, chain.fm);
    res.files.push_back({"verify.csv", csv});
    res.record.best_value = best.value;
    res.summary = summary_json(res.record);
    res.summary["bound_instances"] = cfg.verify.instances;
    res.summary["bound_violations"] = failures;
    res.summary["all_ok"] = failures == 0;
    res.summary["delusion_chain_best_representable"] = best.value;
    return res;
}

}  // namespace

Json summary_json(const RunRecord& record) {
    Json j;
    j["kind"] = record.kind;
    j["seed"] = record.seed;
    j["best_value"] = record.best_value;
    j["best_node"] = record.best_node;
    j["transitions_used"] = record.transitions_used;
    j["wall_ms"] = record.wall_ms;
    Json runs = Json::array();
    for (const auto& r : record.runs)
        runs.push_back(Json{{"label", r.label},
                            {"seed", r.seed},
                            {"best_value", r.best_value},
                            {"best_node", r.best_node},
                            {"final_value", r.final_value},
                            {"transitions_used", r.transitions_used}});
    j["runs"] = runs;
    return j;
}

RunRecord record_from_summary(const Json& j) {
    RunRecord rec;
    try {
        rec.kind = j.at("kind").get<std::string>();
        rec.seed = j.at("seed").get<std::uint64_t>();
        rec.best_value = j.at("best_value").get<double>();
        rec.best_node = j.at("best_node").get<int>();
        rec.transitions_used = j.at("transitions_used").get<long long>();
        rec.wall_ms = j.value("wall_ms", 0LL);
        for (const auto& r : j.at("runs")) {
            RunSummary s;
            s.label = r.value("label", std::string());
            s.seed = r.at("seed").get<std::uint64_t>();
            s.best_value = r.at("best_value").get<double>();
            s.best_node = r.at("best_node").get<int>();
            s.final_value = r.value("final_value", s.best_value);
            s.transitions_used = r.at("transitions_used").get<long long>();
            rec.runs.push_back(s);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("summary: {}", e.what()));
    }
    return rec;
}

CompareReport compare_runs(const RunRecord& baseline, const RunRecord& conqur) {
    if (baseline.runs.empty() || conqur.runs.empty()) throw ArgumentError("compare_runs: missing run summaries");
    if (baseline.runs.size() != conqur.runs.size())
        throw ArgumentError(fmt::format("compare_runs: {} baseline runs vs {} conqur runs", baseline.runs.size(),
                                        conqur.runs.size()));
    CompareReport rep;
    rep.budget_parity = true;
    double sum = 0.0;
    int counted = 0;
    for (std::size_t i = 0; i < baseline.runs.size(); ++i) {
        const auto& b = baseline.runs[i];
        const auto& c = conqur.runs[i];
        if (b.seed != c.seed)
            throw ArgumentError(fmt::format("compare_runs: run {} seeds differ ({} vs {})", i, b.seed, c.seed));
        CompareRow row;
        row.seed = b.seed;
        row.s_b = b.best_value;
        row.s_c = c.best_value;
        row.flagged = b.best_value == 0.0;
        row.improvement = row.flagged ? c.best_value - b.best_value : (c.best_value - b.best_value) / std::abs(b.best_value);
        row.win = c.best_value >= b.best_value - 1e-9;
        if (!row.flagged) {
            sum += row.improvement;
            ++counted;
        }
        rep.wins += row.win ? 1 : 0;
        if (b.transitions_used != c.transitions_used) rep.budget_parity = false;
        rep.rows.push_back(row);
    }
    rep.mean_improvement = counted > 0 ? sum / counted : 0.0;
    rep.win_rate = static_cast<double>(rep.wins) / static_cast<double>(rep.rows.size());
    return rep;
}

std::string compare_csv(const CompareReport& report) {
    std::string out = "seed,s_b,s_c,improvement,flagged,win\n";
    for (const auto& r : report.rows)
        out += fmt::format("{},{:.17g},{:.17g},{:.17g},{},{}\n", r.seed, r.s_b, r.s_c, r.improvement,
                           r.flagged ? "true" : "false", r.win ? "true" : "false");
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const auto start = std::chrono::steady_clock::now();
    ExperimentResult res;

    if (cfg.kind == ExperimentKind::Verify) {
        res = run_verify(cfg);
    } else if (cfg.kind == ExperimentKind::Compare) {
        RunRecord base, con;
        if (!cfg.compare.baseline_summary.empty()) {
            base = record_from_summary(Json::parse(read_file(cfg.compare.baseline_summary)));
            con = record_from_summary(Json::parse(read_file(cfg.compare.conqur_summary)));
        } else {
            ExperimentConfig sub = cfg;
            sub.kind = ExperimentKind::MultiBaseline;
            auto b = run_experiment(sub);
            sub.kind = ExperimentKind::Conqur;
            auto c = run_experiment(sub);
            base = b.record;
            con = c.record;
            for (auto& f : b.files) res.files.push_back({"multi-baseline/" + f.name, f.content});
            for (auto& f : c.files) res.files.push_back({"conqur/" + f.name, f.content});
        }
        const auto rep = compare_runs(base, con);
        res.record.kind = to_string(cfg.kind);
        res.record.seed = cfg.seed;
        res.record.runs = con.runs;
        finish_record(res.record);
        res.files.push_back({"compare.csv", compare_csv(rep)});
        res.summary = summary_json(res.record);
        res.summary["mean_improvement"] = rep.mean_improvement;
        res.summary["wins"] = rep.wins;
        res.summary["win_rate"] = rep.win_rate;
        res.summary["budget_parity"] = rep.budget_parity;
        res.summary["baseline_transitions"] = base.transitions_used;
        res.summary["conqur_transitions"] = con.transitions_used;
    } else {
        RunRecord& rec = res.record;
        rec.kind = to_string(cfg.kind);
        rec.seed = cfg.seed;
        Json demo_baseline = Json::array();
        Json demo_conqur = Json::array();
        for (int i = 0; i < cfg.runs; ++i) {
            const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
            const Instance inst =
                cfg.kind == ExperimentKind::DemoDelusion ? make_delusion_chain() : make_instance(cfg, seed);
            std::vector<SingleRun> parts;
            switch (cfg.kind) {
                case ExperimentKind::Baseline: {
                    QLearningSchedule s = cfg.regression;
                    s.lambda = 0.0;
                    s.anneal.reset();
                    s.penalty_enabled = false;
                    parts.push_back(run_q_learning(inst, s, seed, "baseline"));
                    break;
                }
                case ExperimentKind::Penalized:
                    parts.push_back(run_q_learning(inst, cfg.regression, seed, "penalized"));
                    break;
                case ExperimentKind::MultiBaseline:
                    parts.push_back(run_multi(inst, cfg, seed));
                    break;
                case ExperimentKind::Conqur:
                    parts.push_back(run_conqur(inst, cfg, seed, std::to_string(i)));
                    break;
                case ExperimentKind::DemoDelusion: {
                    QLearningSchedule s = cfg.regression;
                    s.lambda = 0.0;
                    s.anneal.reset();
                    s.penalty_enabled = false;
                    parts.push_back(run_q_learning(inst, s, seed, "baseline"));
                    parts.push_back(run_conqur(inst, cfg, seed, std::to_string(i)));
                    demo_baseline.push_back(parts[0].summary.final_value);
                    demo_conqur.push_back(parts[1].summary.best_value);
                    break;
                }
                default:
                    throw InternalError("run_experiment: unhandled kind");
            }
            for (auto& p : parts) {
                const std::string name = parts.size() > 1 ? fmt::format("rows-{}-{}.csv", i, p.summary.label)
                                                          : fmt::format("rows-{}.csv", i);
                res.files.push_back({name, rows_csv(p.rows)});
                for (auto& f : p.files) res.files.push_back(std::move(f));
                rec.rows.insert(rec.rows.end(), p.rows.begin(), p.rows.end());
                rec.runs.push_back(p.summary);
            }
        }
        finish_record(rec);
        res.files.push_back({"runs.csv", runs_csv(rec.runs)});
        res.summary = summary_json(rec);
        if (cfg.kind == ExperimentKind::DemoDelusion) {
            int baseline_ok = 0, conqur_ok = 0;
            for (const auto& v : demo_baseline) baseline_ok += std::abs(v.get<double>() - 0.3) <= 0.05 ? 1 : 0;
            for (const auto& v : demo_conqur) conqur_ok += v.get<double>() >= 0.5 - 1e-6 ? 1 : 0;
            res.summary["baseline_values"] = demo_baseline;
            res.summary["conqur_values"] = demo_conqur;
            res.summary["baseline_within_tolerance"] = baseline_ok;
            res.summary["conqur_reaching_best"] = conqur_ok;
        }
    }

    res.record.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    res.summary["wall_ms"] = res.record.wall_ms;
    return res;
}

void write_outputs(const ExperimentResult& result, const ExperimentConfig& cfg, const std::string& dir) {
    namespace fs = std::filesystem;
    for (const auto& f : result.files) write_file_atomic((fs::path(dir) / f.name).string(), f.content);
    write_file_atomic((fs::path(dir) / "summary.json").string(), result.summary.dump(2) + "\n");
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    Json meta;
    meta["finished_at"] = stamp;
    meta["wall_ms"] = result.record.wall_ms;
    meta["threads"] = cfg.threads;
    meta["config"] = Json::parse(emit_config(cfg));
    write_file_atomic((fs::path(dir) / "metadata.json").string(), meta.dump(2) + "\n");
}

}  // namespace conqur
