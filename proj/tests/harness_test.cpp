#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"

#include "conqur/error.hpp"
#include "conqur/harness.hpp"
#include "conqur/instances.hpp"
#include "conqur/io.hpp"

using namespace conqur;
namespace fs = std::filesystem;

namespace {

std::string error_of(std::string_view text) {
    try {
        parse_config_text(text);
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("conqur-test-" + name);
    fs::remove_all(dir);
    return dir;
}

ExperimentConfig small_conqur(ExperimentKind kind) {
    ExperimentConfig cfg = parse_config_text(R"({"kind": "conqur", "seed": 7, "runs": 2,
        "mdp": {"source": "random", "states": 5, "actions": 2, "feature_dim": 2},
        "regressors": 2,
        "search": {"pool_cap": 4, "frontier_cap": 2, "expand_top": 2, "split_factor": 2,
                   "horizon": 6, "dive_levels": 2, "batch_size": 64, "lambda": 1.0}})");
    cfg.kind = kind;
    return cfg;
}

RunRecord record_of(std::vector<std::pair<double, long long>> runs) {
    RunRecord r;
    std::uint64_t seed = 100;
    for (const auto& [v, t] : runs) r.runs.push_back({"x", seed++, v, 0, v, t});
    return r;
}

}  // namespace

TEST_CASE("a minimal config fills defaults") {
    const auto cfg = parse_config_text(R"({"kind": "demo-delusion", "seed": 3})");
    CHECK(cfg.kind == ExperimentKind::DemoDelusion);
    CHECK(cfg.seed == 3);
    CHECK(cfg.runs == 1);
    CHECK(cfg.search.pool_cap == SearchConfig().pool_cap);
    CHECK(cfg.regression.iterations == QLearningSchedule().iterations);
    CHECK(cfg.mdp.kind == MdpSource::Kind::Builtin);
}

TEST_CASE("a missing seed is reported by name") {
    const std::string err = error_of(R"({"kind": "verify"})");
    CHECK(err.find("seed") != std::string::npos);
}

TEST_CASE("every field error is reported with its line") {
    const std::string err = error_of("{\n  \"kind\": \"bogus\",\n  \"seed\": 1,\n  \"runs\": \"many\",\n  \"colour\": 2\n}");
    CHECK(err.find("kind") != std::string::npos);
    CHECK(err.find("runs") != std::string::npos);
    CHECK(err.find("colour") != std::string::npos);
    CHECK(err.find("line 2") != std::string::npos);
    CHECK(err.find("line 4") != std::string::npos);
    CHECK(err.find("line 5") != std::string::npos);
    CHECK_THROWS_AS(parse_config_text("{\"kind\": "), ParseError);
}

TEST_CASE("canonical form round-trips") {
    ExperimentConfig cfg = small_conqur(ExperimentKind::Compare);
    cfg.search.consistency_mode = ConsistencyMode::RejectSample;
    cfg.search.scoring = ScoringMode::Rollout;
    cfg.regression.anneal = AnnealSchedule{4.0, 50.0};
    cfg.mdp.seed = 99;
    cfg.mdp.delusion_prone = true;
    const std::string text = emit_config(cfg);
    const std::string again = emit_config(parse_config_text(text));
    CHECK(text == again);
}

TEST_CASE("validation catches cross-field problems") {
    ExperimentConfig cfg = small_conqur(ExperimentKind::Compare);
    cfg.regressors = 3;
    CHECK_THROWS_AS(validate_config(cfg), ArgumentError);
    cfg = small_conqur(ExperimentKind::Conqur);
    cfg.search.frontier_cap = 10;
    CHECK_THROWS_AS(validate_config(cfg), ArgumentError);
    cfg = small_conqur(ExperimentKind::Conqur);
    cfg.mdp.kind = MdpSource::Kind::File;
    cfg.mdp.path = "/nonexistent/mdp.json";
    CHECK_THROWS_AS(validate_config(cfg), ArgumentError);
}

TEST_CASE("compare arithmetic") {
    const auto rep = compare_runs(record_of({{2.0, 10}, {0.0, 10}, {1.0, 10}}), record_of({{3.0, 10}, {0.5, 10}, {1.0, 10}}));
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.rows[0].improvement == 0.5);
    CHECK(rep.rows[1].flagged);
    CHECK(rep.rows[1].improvement == 0.5);
    CHECK(rep.rows[2].improvement == 0.0);
    CHECK(rep.wins == 3);
    CHECK(rep.mean_improvement == 0.25);  // flagged row excluded
    CHECK(rep.budget_parity);

    const auto same = compare_runs(record_of({{1.5, 4}}), record_of({{1.5, 4}}));
    CHECK(same.rows[0].improvement == 0.0);
    CHECK(!compare_runs(record_of({{1.0, 4}}), record_of({{1.0, 5}})).budget_parity);
    CHECK_THROWS_AS(compare_runs(RunRecord(), record_of({{1.0, 1}})), ArgumentError);
}

TEST_CASE("experiments are deterministic and summaries agree with rows") {
    for (const auto kind : {ExperimentKind::Baseline, ExperimentKind::Penalized, ExperimentKind::MultiBaseline,
                            ExperimentKind::Conqur}) {
        ExperimentConfig cfg = small_conqur(kind);
        cfg.regression.iterations = 10;
        cfg.regression.lambda = 0.5;
        const auto a = run_experiment(cfg);
        const auto b = run_experiment(cfg);
        REQUIRE(a.files.size() == b.files.size());
        for (std::size_t i = 0; i < a.files.size(); ++i) {
            CHECK(a.files[i].name == b.files[i].name);
            CHECK(a.files[i].content == b.files[i].content);
        }
        double best = -1e300;
        for (const auto& r : a.record.rows) best = std::max(best, r.policy_value);
        CHECK(a.record.best_value == best);
        // Runs are concatenated: per node, iterations only go back when a new run starts.
        std::map<int, int> last, resets;
        for (const auto& r : a.record.rows) {
            auto it = last.find(r.node_id);
            if (it != last.end() && r.iteration < it->second) ++resets[r.node_id];
            last[r.node_id] = r.iteration;
        }
        for (const auto& [node, n] : resets) CHECK(n <= static_cast<int>(a.record.runs.size()) - 1);
        CHECK(a.record.runs.size() == 2);
        CHECK(a.record.runs[1].seed == 8);
    }
}

TEST_CASE("comparison keeps budgets equal") {
    const auto res = run_experiment(small_conqur(ExperimentKind::Compare));
    CHECK(res.summary["budget_parity"].get<bool>());
    CHECK(res.summary["baseline_transitions"] == res.summary["conqur_transitions"]);
}

TEST_CASE("outputs land on disk and summaries reload") {
    const fs::path dir = scratch_dir("outputs");
    const ExperimentConfig cfg = small_conqur(ExperimentKind::Conqur);
    const auto res = run_experiment(cfg);
    write_outputs(res, cfg, dir.string());
    for (const auto& name : {"summary.json", "metadata.json", "runs.csv", "rows-0.csv", "levels-0.csv", "tree-0.jsonl"})
        CHECK(fs::exists(dir / name));
    const std::string rows = read_file((dir / "rows-0.csv").string());
    CHECK(rows.rfind("iteration,node_id,phase,score,loss,penalty,lambda,policy_value\n", 0) == 0);
    const RunRecord back = record_from_summary(Json::parse(read_file((dir / "summary.json").string())));
    CHECK(back.best_value == res.record.best_value);
    CHECK(back.runs.size() == res.record.runs.size());
    const Json summary = Json::parse(read_file((dir / "summary.json").string()));
    for (const char* key : {"kind", "seed", "best_value", "best_node", "transitions_used", "wall_ms"})
        CHECK(summary.contains(key));
    fs::remove_all(dir);
}

TEST_CASE("verify kind reports every bound satisfied") {
    ExperimentConfig cfg = parse_config_text(R"({"kind": "verify", "seed": 1, "verify": {"instances": 25}})");
    const auto res = run_experiment(cfg);
    CHECK(res.summary["all_ok"].get<bool>());
    CHECK(std::abs(res.summary["delusion_chain_best_representable"].get<double>() - 0.5) <= 1e-9);
    REQUIRE(res.files.size() >= 1);
    CHECK(res.files[0].name == "verify.csv");
}

TEST_CASE("MDP documents round-trip losslessly") {
    const Instance inst = make_random_mdp(6, 3, 4, 12);
    const std::string text = save_instance(inst.mdp, &inst.fm);
    const auto back = load_instance(text);
    CHECK(back.mdp.transition == inst.mdp.transition);
    CHECK(back.mdp.reward == inst.mdp.reward);
    CHECK(back.mdp.initial == inst.mdp.initial);
    CHECK(back.mdp.terminal == inst.mdp.terminal);
    CHECK(back.mdp.gamma == inst.mdp.gamma);
    REQUIRE(back.fm.has_value());
    CHECK(*back.fm == inst.fm);
    CHECK(save_instance(back.mdp, &*back.fm) == text);
    CHECK(exact_decimal(0.1) == "0.10000000000000001");
}

TEST_CASE("bad MDP documents are rejected") {
    CHECK_THROWS_AS(load_instance("{\"n_states\": 2"), ParseError);
    const Instance inst = make_random_mdp(3, 2, 2, 1);
    Json j = Json::parse(save_instance(inst.mdp, nullptr));
    j["gamma"] = 1.5;
    CHECK_THROWS_AS(load_instance(j.dump()), ArgumentError);
}

TEST_CASE("file-backed instances run through the harness") {
    const fs::path dir = scratch_dir("file-mdp");
    fs::create_directories(dir);
    const Instance chain = make_delusion_chain();
    write_file_atomic((dir / "chain.json").string(), save_instance(chain.mdp, &chain.fm));
    ExperimentConfig cfg = small_conqur(ExperimentKind::Conqur);
    cfg.mdp.kind = MdpSource::Kind::File;
    cfg.mdp.path = (dir / "chain.json").string();
    cfg.runs = 1;
    const Instance loaded = make_instance(cfg, 0);
    CHECK(loaded.fm == chain.fm);
    CHECK(run_experiment(cfg).record.runs.size() == 1);
    fs::remove_all(dir);
}

TEST_CASE("line_of counts newlines") {
    CHECK(line_of("a\nb\nc", 0) == 1);
    CHECK(line_of("a\nb\nc", 2) == 2);
    CHECK(line_of("a\nb\nc", 4) == 3);
}
