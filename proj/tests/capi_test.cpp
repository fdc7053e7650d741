#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>

#include "doctest.h"

#include "conqur/conqur.h"

namespace fs = std::filesystem;

namespace {

const char* kSmall = R"({"kind": "conqur", "seed": 3, "runs": 2, "regressors": 2,
  "mdp": {"source": "random", "states": 5, "actions": 2, "feature_dim": 2},
  "search": {"pool_cap": 4, "frontier_cap": 2, "expand_top": 2, "split_factor": 2,
             "horizon": 4, "dive_levels": 2, "batch_size": 32}})";

std::string take(char* s) {
    std::string out = s ? s : "";
    conqur_string_free(s);
    return out;
}

}  // namespace

TEST_CASE("status names and version") {
    CHECK(std::string(conqur_status_name(CONQUR_OK)) == "ok");
    CHECK(std::string(conqur_status_name(CONQUR_E_VALIDATION)) == "validation");
    CHECK(std::strlen(conqur_version()) > 0);
}

TEST_CASE("config errors map to status codes") {
    conqur_config* cfg = nullptr;
    CHECK(conqur_config_from_string("{\"kind\": ", &cfg) == CONQUR_E_PARSE);
    CHECK(cfg == nullptr);
    CHECK(std::strlen(conqur_last_error()) > 0);

    CHECK(conqur_config_from_string(R"({"kind": "verify"})", &cfg) == CONQUR_E_PARSE);
    CHECK(std::string(conqur_last_error()).find("seed") != std::string::npos);

    CHECK(conqur_config_load("/nonexistent/config.json", &cfg) == CONQUR_E_IO);
    CHECK(conqur_config_from_string(nullptr, &cfg) == CONQUR_E_ARGUMENT);

    REQUIRE(conqur_config_from_string(kSmall, &cfg) == CONQUR_OK);
    CHECK(conqur_config_set_kind(cfg, "nonsense") == CONQUR_E_ARGUMENT);
    CHECK(conqur_config_set_threads(cfg, 0) == CONQUR_E_ARGUMENT);
    CHECK(conqur_config_set_kind(cfg, "compare") == CONQUR_OK);
    CHECK(conqur_config_set_seed(cfg, 11) == CONQUR_OK);
    char* text = nullptr;
    REQUIRE(conqur_config_to_string(cfg, &text) == CONQUR_OK);
    const std::string canonical = take(text);
    CHECK(canonical.find("\"compare\"") != std::string::npos);
    CHECK(canonical.find("11") != std::string::npos);
    conqur_config_free(cfg);

    // regressors must divide the batch; caught at parse time, or at run time after a kind change
    CHECK(conqur_config_from_string(R"({"kind": "multi-baseline", "seed": 1, "regressors": 3,
        "search": {"batch_size": 32}})", &cfg) == CONQUR_E_PARSE);
    CHECK(cfg == nullptr);
    REQUIRE(conqur_config_from_string(R"({"kind": "conqur", "seed": 1, "regressors": 3,
        "search": {"batch_size": 32}})", &cfg) == CONQUR_OK);
    REQUIRE(conqur_config_set_kind(cfg, "multi-baseline") == CONQUR_OK);
    conqur_record* rec = nullptr;
    CHECK(conqur_run(cfg, 0, &rec) == CONQUR_E_VALIDATION);
    CHECK(rec == nullptr);
    conqur_config_free(cfg);
}

TEST_CASE("runs, records and comparisons") {
    const fs::path dir = fs::temp_directory_path() / "conqur-capi";
    fs::remove_all(dir);
    conqur_config* cfg = nullptr;
    REQUIRE(conqur_config_from_string(kSmall, &cfg) == CONQUR_OK);
    REQUIRE(conqur_config_set_output_dir(cfg, (dir / "conqur").c_str()) == CONQUR_OK);
    conqur_record* con = nullptr;
    REQUIRE(conqur_run(cfg, 1, &con) == CONQUR_OK);
    CHECK(fs::exists(dir / "conqur" / "summary.json"));

    REQUIRE(conqur_config_set_kind(cfg, "multi-baseline") == CONQUR_OK);
    REQUIRE(conqur_config_set_output_dir(cfg, (dir / "base").c_str()) == CONQUR_OK);
    conqur_record* base = nullptr;
    REQUIRE(conqur_run(cfg, 1, &base) == CONQUR_OK);

    double best = 0.0;
    int64_t used_c = 0, used_b = 0;
    CHECK(conqur_record_best_value(con, &best) == CONQUR_OK);
    CHECK(std::isfinite(best));
    CHECK(conqur_record_transitions(con, &used_c) == CONQUR_OK);
    CHECK(conqur_record_transitions(base, &used_b) == CONQUR_OK);
    CHECK(used_c == used_b);

    char* json = nullptr;
    REQUIRE(conqur_record_summary_json(con, &json) == CONQUR_OK);
    CHECK(take(json).find("\"best_value\"") != std::string::npos);

    conqur_record* loaded = nullptr;
    REQUIRE(conqur_record_load((dir / "conqur" / "summary.json").c_str(), &loaded) == CONQUR_OK);
    double loaded_best = 0.0;
    CHECK(conqur_record_best_value(loaded, &loaded_best) == CONQUR_OK);
    CHECK(loaded_best == best);

    char* report = nullptr;
    const std::string csv = (dir / "compare.csv").string();
    REQUIRE(conqur_compare(base, loaded, csv.c_str(), &report) == CONQUR_OK);
    CHECK(take(report).find("mean_improvement") != std::string::npos);
    CHECK(fs::exists(csv));

    CHECK(conqur_record_best_value(nullptr, &best) == CONQUR_E_ARGUMENT);
    conqur_record_free(loaded);
    conqur_record_free(base);
    conqur_record_free(con);
    conqur_config_free(cfg);
    fs::remove_all(dir);
}

TEST_CASE("MDP handles") {
    conqur_mdp* chain = nullptr;
    REQUIRE(conqur_mdp_builtin("delusion-chain", &chain) == CONQUR_OK);
    int n = 0, m = 0, d = 0;
    CHECK(conqur_mdp_shape(chain, &n, &m, &d) == CONQUR_OK);
    CHECK(n == 5);
    CHECK(m == 2);
    CHECK(d == 2);
    double value = 0.0;
    int policy[5] = {};
    REQUIRE(conqur_mdp_best_representable(chain, &value, policy) == CONQUR_OK);
    CHECK(std::abs(value - 0.5) <= 1e-9);
    CHECK(policy[0] == 0);
    CHECK(policy[3] == 1);
    double optimal = 0.0;
    REQUIRE(conqur_mdp_optimal_value(chain, &optimal) == CONQUR_OK);
    CHECK(optimal > 0.5);

    const fs::path path = fs::temp_directory_path() / "conqur-capi-chain.json";
    REQUIRE(conqur_mdp_save(chain, path.c_str()) == CONQUR_OK);
    conqur_mdp* back = nullptr;
    REQUIRE(conqur_mdp_load(path.c_str(), &back) == CONQUR_OK);
    double back_value = 0.0;
    CHECK(conqur_mdp_best_representable(back, &back_value, nullptr) == CONQUR_OK);
    CHECK(back_value == value);
    char* problems = nullptr;
    REQUIRE(conqur_mdp_validate(back, &problems) == CONQUR_OK);
    CHECK(take(problems).empty());
    conqur_mdp_free(back);
    fs::remove(path);

    conqur_mdp* other = nullptr;
    CHECK(conqur_mdp_builtin("no-such-instance", &other) == CONQUR_E_ARGUMENT);
    CHECK(conqur_mdp_random(1, 2, 1, 0, &other) == CONQUR_E_ARGUMENT);
    REQUIRE(conqur_mdp_random(5, 2, 3, 9, &other) == CONQUR_OK);
    CHECK(conqur_mdp_shape(other, &n, &m, &d) == CONQUR_OK);
    CHECK(d == 3);
    conqur_mdp_free(other);
    conqur_mdp_free(chain);
}
