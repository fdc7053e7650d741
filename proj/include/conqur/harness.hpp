#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "conqur/instances.hpp"
#include "conqur/io.hpp"
#include "conqur/record.hpp"
#include "conqur/regression.hpp"
#include "conqur/search.hpp"

namespace conqur {

enum class ExperimentKind { DemoDelusion, Baseline, Penalized, MultiBaseline, Conqur, Verify, Compare };

const char* to_string(ExperimentKind k);
std::optional<ExperimentKind> kind_from_string(std::string_view s);

struct MdpSource {
    enum class Kind { Builtin, File, Random };
    Kind kind = Kind::Builtin;
    std::string name = "delusion-chain";  // builtin
    std::string path;                     // file
    int states = 8;                       // random
    int actions = 3;
    int feature_dim = 3;
    std::optional<std::uint64_t> seed;  // random; absent means one instance per run seed
    bool delusion_prone = false;        // random; resample until expected-data Q-learning falls short
};

struct FeatureSource {
    enum class Kind { Instance, OneHot, File };
    Kind kind = Kind::Instance;  // builtin or random features, or the MDP file's own section
    std::string path;
};

struct EvalConfig {
    int episodes = 200;
    double eps_eval = 0.001;
    int horizon = 200;
};

struct VerifyConfig {
    int instances = 100;
    int max_states = 4;
    int max_actions = 3;
    int max_dim = 3;
};

struct CompareConfig {
    std::string baseline_summary;  // both empty: run multi-baseline and conqur here
    std::string conqur_summary;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::DemoDelusion;
    std::uint64_t seed = 0;
    int runs = 1;  // run i uses seed + i
    MdpSource mdp;
    FeatureSource features;
    QLearningSchedule regression;
    SearchConfig search;
    int regressors = 8;  // multi-baseline
    EvalConfig eval;
    VerifyConfig verify;
    CompareConfig compare;
    std::string output_dir = "out";
    int threads = 1;
};

/// Parses a config document. Every field-level problem is collected; a
/// non-empty list is thrown as one ParseError, one problem per line.
ExperimentConfig parse_config_text(std::string_view text);
ExperimentConfig parse_config(const std::string& path);

/// Canonical form: every field, defaults filled.
std::string emit_config(const ExperimentConfig& cfg);

/// Throws ArgumentError listing every inconsistency between fields.
void validate_config(const ExperimentConfig& cfg);

struct OutputFile {
    std::string name;
    std::string content;
};

struct ExperimentResult {
    RunRecord record;
    Json summary;
    std::vector<OutputFile> files;  // deterministic artifacts
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Writes the artifacts, summary.json and metadata.json (timestamps) into `dir`.
void write_outputs(const ExperimentResult& result, const ExperimentConfig& cfg, const std::string& dir);

/// CSV with the RunRecord columns.
std::string rows_csv(const std::vector<MetricRow>& rows);

Json summary_json(const RunRecord& record);
/// Rebuilds the summary part of a record (runs, best value, budget).
RunRecord record_from_summary(const Json& j);

struct CompareRow {
    std::uint64_t seed = 0;
    double s_b = 0.0;
    double s_c = 0.0;
    double improvement = 0.0;  // (s_C - s_B) / |s_B|, or s_C - s_B when flagged
    bool flagged = false;      // s_B = 0
    bool win = false;          // s_C >= s_B - 1e-9
};

struct CompareReport {
    std::vector<CompareRow> rows;
    double mean_improvement = 0.0;  // over unflagged rows
    double win_rate = 0.0;
    int wins = 0;
    bool budget_parity = false;
};

/// Pairs the runs of the two records by position; seeds must match.
CompareReport compare_runs(const RunRecord& baseline, const RunRecord& conqur);
std::string compare_csv(const CompareReport& report);

/// The instance a run uses, built from the config's sources.
Instance make_instance(const ExperimentConfig& cfg, std::uint64_t run_seed);

}  // namespace conqur
