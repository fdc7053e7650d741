#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace conqur {

/// One logged row: an iteration (or search level) for one regressor/node.
struct MetricRow {
    int iteration = 0;
    int node_id = 0;
    std::string phase;  // train | expansion | dive | eval
    double score = 0.0;
    double loss = 0.0;
    double penalty = 0.0;
    double lambda = 0.0;
    double policy_value = 0.0;
};

/// Result of one seeded run inside an experiment.
struct RunSummary {
    std::string label;  // which procedure produced the run
    std::uint64_t seed = 0;
    double best_value = 0.0;   // max greedy policy value over the run's rows
    int best_node = 0;         // node (or regressor) attaining it
    double final_value = 0.0;  // greedy policy value at the end of the run
    long long transitions_used = 0;
};

struct RunRecord {
    std::string kind;
    std::uint64_t seed = 0;  // master seed
    std::vector<MetricRow> rows;
    std::vector<RunSummary> runs;
    double best_value = 0.0;
    int best_node = 0;
    long long transitions_used = 0;
    long long wall_ms = 0;
};

}  // namespace conqur
