#include "conqur/conqur.h"

#include <cstring>
#include <string>

#include "conqur/error.hpp"
#include "conqur/harness.hpp"
#include "conqur/oracles.hpp"

struct conqur_config {
    conqur::ExperimentConfig cfg;
};

struct conqur_record {
    conqur::RunRecord record;
    conqur::Json summary;
};

struct conqur_mdp {
    conqur::Mdp mdp;
    std::optional<conqur::FeatureMap> fm;
};

namespace {

thread_local std::string g_last_error;

conqur_status fail(conqur_status s, const std::string& msg) {
    g_last_error = msg;
    return s;
}

template <class Fn>
conqur_status guarded(Fn&& fn) {
    g_last_error.clear();
    try {
        fn();
        return CONQUR_OK;
    } catch (const conqur::ParseError& e) {
        return fail(CONQUR_E_PARSE, e.what());
    } catch (const conqur::ArgumentError& e) {
        return fail(CONQUR_E_ARGUMENT, e.what());
    } catch (const conqur::SizeError& e) {
        return fail(CONQUR_E_SIZE, e.what());
    } catch (const conqur::NumericError& e) {
        return fail(CONQUR_E_NUMERIC, e.what());
    } catch (const conqur::ConvergenceError& e) {
        return fail(CONQUR_E_CONVERGENCE, e.what());
    } catch (const conqur::ConstructionError& e) {
        return fail(CONQUR_E_VALIDATION, e.what());
    } catch (const conqur::IoError& e) {
        return fail(CONQUR_E_IO, e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(CONQUR_E_PARSE, e.what());
    } catch (const std::bad_alloc&) {
        return fail(CONQUR_E_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(CONQUR_E_INTERNAL, e.what());
    } catch (...) {
        return fail(CONQUR_E_INTERNAL, "unknown error");
    }
}

char* dup(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

#define REQUIRE(cond, msg)                                          \
    do {                                                            \
        if (!(cond)) return fail(CONQUR_E_ARGUMENT, (msg));         \
    } while (0)

}  // namespace

extern "C" {

const char* conqur_last_error(void) { return g_last_error.c_str(); }

const char* conqur_status_name(conqur_status status) {
    switch (status) {
        case CONQUR_OK: return "ok";
        case CONQUR_E_ARGUMENT: return "argument";
        case CONQUR_E_PARSE: return "parse";
        case CONQUR_E_VALIDATION: return "validation";
        case CONQUR_E_SIZE: return "size";
        case CONQUR_E_NUMERIC: return "numeric";
        case CONQUR_E_CONVERGENCE: return "convergence";
        case CONQUR_E_IO: return "io";
        case CONQUR_E_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* conqur_version(void) { return "0.1.0"; }

void conqur_string_free(char* s) { std::free(s); }

conqur_status conqur_config_load(const char* path, conqur_config** out) {
    REQUIRE(path && out, "conqur_config_load: null argument");
    *out = nullptr;
    return guarded([&] { *out = new conqur_config{conqur::parse_config(path)}; });
}

conqur_status conqur_config_from_string(const char* text, conqur_config** out) {
    REQUIRE(text && out, "conqur_config_from_string: null argument");
    *out = nullptr;
    return guarded([&] { *out = new conqur_config{conqur::parse_config_text(text)}; });
}

conqur_status conqur_config_set_kind(conqur_config* cfg, const char* kind) {
    REQUIRE(cfg && kind, "conqur_config_set_kind: null argument");
    const auto k = conqur::kind_from_string(kind);
    if (!k) return fail(CONQUR_E_ARGUMENT, std::string("unknown experiment kind '") + kind + "'");
    cfg->cfg.kind = *k;
    return CONQUR_OK;
}

conqur_status conqur_config_set_seed(conqur_config* cfg, uint64_t seed) {
    REQUIRE(cfg, "conqur_config_set_seed: null config");
    cfg->cfg.seed = seed;
    return CONQUR_OK;
}

conqur_status conqur_config_set_output_dir(conqur_config* cfg, const char* dir) {
    REQUIRE(cfg && dir, "conqur_config_set_output_dir: null argument");
    REQUIRE(*dir, "conqur_config_set_output_dir: empty directory");
    cfg->cfg.output_dir = dir;
    return CONQUR_OK;
}

conqur_status conqur_config_set_threads(conqur_config* cfg, int threads) {
    REQUIRE(cfg, "conqur_config_set_threads: null config");
    REQUIRE(threads >= 1, "conqur_config_set_threads: threads must be >= 1");
    cfg->cfg.threads = threads;
    return CONQUR_OK;
}

conqur_status conqur_config_to_string(const conqur_config* cfg, char** out) {
    REQUIRE(cfg && out, "conqur_config_to_string: null argument");
    *out = nullptr;
    return guarded([&] { *out = dup(conqur::emit_config(cfg->cfg)); });
}

void conqur_config_free(conqur_config* cfg) { delete cfg; }

conqur_status conqur_run(const conqur_config* cfg, int write_outputs, conqur_record** out) {
    REQUIRE(cfg && out, "conqur_run: null argument");
    *out = nullptr;
    if (guarded([&] { conqur::validate_config(cfg->cfg); }) != CONQUR_OK)
        return fail(CONQUR_E_VALIDATION, std::string(g_last_error));
    return guarded([&] {
        auto result = conqur::run_experiment(cfg->cfg);
        if (write_outputs) conqur::write_outputs(result, cfg->cfg, cfg->cfg.output_dir);
        *out = new conqur_record{std::move(result.record), std::move(result.summary)};
    });
}

conqur_status conqur_record_best_value(const conqur_record* rec, double* out) {
    REQUIRE(rec && out, "conqur_record_best_value: null argument");
    *out = rec->record.best_value;
    return CONQUR_OK;
}

conqur_status conqur_record_transitions(const conqur_record* rec, int64_t* out) {
    REQUIRE(rec && out, "conqur_record_transitions: null argument");
    *out = rec->record.transitions_used;
    return CONQUR_OK;
}

conqur_status conqur_record_summary_json(const conqur_record* rec, char** out) {
    REQUIRE(rec && out, "conqur_record_summary_json: null argument");
    *out = nullptr;
    return guarded([&] { *out = dup(rec->summary.dump(2)); });
}

conqur_status conqur_record_load(const char* summary_path, conqur_record** out) {
    REQUIRE(summary_path && out, "conqur_record_load: null argument");
    *out = nullptr;
    return guarded([&] {
        const std::string text = conqur::read_file(summary_path);
        conqur::Json j;
        try {
            j = conqur::Json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw conqur::ParseError(std::string(summary_path) + ": " + e.what());
        }
        *out = new conqur_record{conqur::record_from_summary(j), j};
    });
}

void conqur_record_free(conqur_record* rec) { delete rec; }

conqur_status conqur_compare(const conqur_record* baseline, const conqur_record* conqur, const char* csv_path,
                             char** out_json) {
    REQUIRE(baseline && conqur && out_json, "conqur_compare: null argument");
    *out_json = nullptr;
    return guarded([&] {
        const auto rep = conqur::compare_runs(baseline->record, conqur->record);
        if (csv_path) conqur::write_file_atomic(csv_path, conqur::compare_csv(rep));
        conqur::Json j;
        j["mean_improvement"] = rep.mean_improvement;
        j["wins"] = rep.wins;
        j["win_rate"] = rep.win_rate;
        j["budget_parity"] = rep.budget_parity;
        conqur::Json rows = conqur::Json::array();
        for (const auto& r : rep.rows)
            rows.push_back(conqur::Json{{"seed", r.seed},
                                        {"s_b", r.s_b},
                                        {"s_c", r.s_c},
                                        {"improvement", r.improvement},
                                        {"flagged", r.flagged},
                                        {"win", r.win}});
        j["rows"] = rows;
        *out_json = dup(j.dump(2));
    });
}

conqur_status conqur_mdp_load(const char* path, conqur_mdp** out) {
    REQUIRE(path && out, "conqur_mdp_load: null argument");
    *out = nullptr;
    return guarded([&] {
        auto loaded = conqur::load_instance(conqur::read_file(path));
        *out = new conqur_mdp{std::move(loaded.mdp), std::move(loaded.fm)};
    });
}

conqur_status conqur_mdp_builtin(const char* name, conqur_mdp** out) {
    REQUIRE(name && out, "conqur_mdp_builtin: null argument");
    *out = nullptr;
    if (std::string(name) != "delusion-chain")
        return fail(CONQUR_E_ARGUMENT, std::string("unknown builtin instance '") + name + "'");
    return guarded([&] {
        auto inst = conqur::make_delusion_chain();
        *out = new conqur_mdp{std::move(inst.mdp), std::move(inst.fm)};
    });
}

conqur_status conqur_mdp_random(int n_states, int n_actions, int feature_dim, uint64_t seed, conqur_mdp** out) {
    REQUIRE(out, "conqur_mdp_random: null argument");
    *out = nullptr;
    return guarded([&] {
        auto inst = conqur::make_random_mdp(n_states, n_actions, feature_dim, seed);
        *out = new conqur_mdp{std::move(inst.mdp), std::move(inst.fm)};
    });
}

conqur_status conqur_mdp_shape(const conqur_mdp* mdp, int* n_states, int* n_actions, int* dim) {
    REQUIRE(mdp, "conqur_mdp_shape: null mdp");
    if (n_states) *n_states = mdp->mdp.n_states;
    if (n_actions) *n_actions = mdp->mdp.n_actions;
    if (dim) *dim = mdp->fm ? mdp->fm->dim() : 0;
    return CONQUR_OK;
}

conqur_status conqur_mdp_validate(const conqur_mdp* mdp, char** out) {
    REQUIRE(mdp && out, "conqur_mdp_validate: null argument");
    *out = nullptr;
    return guarded([&] {
        std::string text;
        for (const auto& m : conqur::validate_mdp(mdp->mdp)) text += m + "\n";
        *out = dup(text);
    });
}

conqur_status conqur_mdp_save(const conqur_mdp* mdp, const char* path) {
    REQUIRE(mdp && path, "conqur_mdp_save: null argument");
    return guarded([&] {
        conqur::write_file_atomic(path, conqur::save_instance(mdp->mdp, mdp->fm ? &*mdp->fm : nullptr));
    });
}

conqur_status conqur_mdp_best_representable(const conqur_mdp* mdp, double* value, int* policy_out) {
    REQUIRE(mdp && value, "conqur_mdp_best_representable: null argument");
    if (!mdp->fm) return fail(CONQUR_E_ARGUMENT, "conqur_mdp_best_representable: the MDP has no features");
    return guarded([&] {
        const auto best = conqur::best_representable_policy(mdp->mdp, *mdp->fm);
        *value = best.value;
        if (policy_out)
            for (std::size_t s = 0; s < best.policy.action_of.size(); ++s) policy_out[s] = best.policy.action_of[s];
    });
}

conqur_status conqur_mdp_optimal_value(const conqur_mdp* mdp, double* value) {
    REQUIRE(mdp && value, "conqur_mdp_optimal_value: null argument");
    return guarded([&] {
        const auto vi = conqur::value_iteration(mdp->mdp, 1e-12, 1'000'000);
        *value = conqur::policy_value(mdp->mdp, conqur::greedy_policy(vi.q));
    });
}

void conqur_mdp_free(conqur_mdp* mdp) { delete mdp; }

}  // extern "C"
