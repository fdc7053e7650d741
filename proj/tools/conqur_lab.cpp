// conqur-lab: command-line front end over the C interface.
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "conqur/conqur.h"

namespace {

struct Options {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
};

int report(conqur_status s) {
    std::fprintf(stderr, "conqur-lab: error [%s]: %s\n", conqur_status_name(s), conqur_last_error());
    return static_cast<int>(s);
}

int run(const char* kind, const Options& opt) {
    conqur_config* cfg = nullptr;
    conqur_status s = conqur_config_load(opt.config.c_str(), &cfg);
    if (s != CONQUR_OK) return report(s);
    if ((s = conqur_config_set_kind(cfg, kind)) != CONQUR_OK ||
        (opt.seed_set && (s = conqur_config_set_seed(cfg, opt.seed)) != CONQUR_OK) ||
        (!opt.out.empty() && (s = conqur_config_set_output_dir(cfg, opt.out.c_str())) != CONQUR_OK) ||
        (opt.threads > 0 && (s = conqur_config_set_threads(cfg, opt.threads)) != CONQUR_OK)) {
        conqur_config_free(cfg);
        return report(s);
    }
    conqur_record* rec = nullptr;
    s = conqur_run(cfg, 1, &rec);
    conqur_config_free(cfg);
    if (s != CONQUR_OK) return report(s);
    char* summary = nullptr;
    s = conqur_record_summary_json(rec, &summary);
    conqur_record_free(rec);
    if (s != CONQUR_OK) return report(s);
    std::printf("%s\n", summary);
    conqur_string_free(summary);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Consistent Q-update regression lab on finite MDPs", "conqur-lab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(conqur_version()));

    const std::vector<std::pair<const char*, const char*>> commands = {
        {"demo-delusion", "demo-delusion"},  {"run-baseline", "baseline"},
        {"run-penalized", "penalized"},      {"run-multi-baseline", "multi-baseline"},
        {"run-conqur", "conqur"},            {"verify-oracles", "verify"},
        {"compare", "compare"},
    };
    const std::vector<const char*> help = {
        "Baseline vs ConQUR on the delusion chain",
        "Batch Q-learning without the consistency penalty",
        "Batch Q-learning with the consistency penalty",
        "Independent regressors sharing ConQUR's transition budget",
        "Modified beam search",
        "Tree-size bound and representable-policy oracles",
        "Improvement of ConQUR over the multi-regressor baseline",
    };

    Options opt;
    std::vector<std::pair<CLI::App*, const char*>> subs;
    for (std::size_t i = 0; i < commands.size(); ++i) {
        CLI::App* sub = app.add_subcommand(commands[i].first, help[i]);
        sub->add_option("--config", opt.config, "Experiment config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out, "Output directory (overrides the config)");
        sub->add_option_function<std::uint64_t>(
            "--seed", [&opt](const std::uint64_t& v) { opt.seed = v, opt.seed_set = true; }, "Master seed");
        sub->add_option("--threads", opt.threads, "Worker threads")->check(CLI::PositiveNumber);
        subs.emplace_back(sub, commands[i].second);
    }

    CLI11_PARSE(app, argc, argv);
    for (const auto& [sub, kind] : subs)
        if (sub->parsed()) return run(kind, opt);
    return 1;
}
