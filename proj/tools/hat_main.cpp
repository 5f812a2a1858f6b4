// hat: train a small hashing model, build a Hamming index, generate targeted
// adversarial queries, and score the attacks (t-MAP / MAP / PR curves).

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hat/experiment.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    std::string out_dir = "out";
    // optional overrides
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::vector<std::string> methods;
    std::size_t bits = 0;
    int n_t = 0;
    double epsilon = -1.0;
    int iterations = 0;
};

hat::ExperimentConfig load_config(const CliOptions& opts) {
    hat::ExperimentConfig cfg = hat::ExperimentConfig::load(opts.config_path);
    if (opts.seed_set) cfg.seed = opts.seed;
    if (!opts.methods.empty()) {
        cfg.methods.clear();
        for (const auto& name : opts.methods) cfg.methods.push_back(hat::method_from_name(name));
    }
    if (opts.bits != 0) cfg.bits = {opts.bits};
    if (opts.n_t != 0) cfg.attack.n_t = opts.n_t;
    if (opts.epsilon >= 0.0) cfg.attack.epsilon = opts.epsilon;
    if (opts.iterations != 0) cfg.attack.iterations = opts.iterations;
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"targeted attacks on hashing-based similarity retrieval"};
    app.require_subcommand(1);

    CliOptions opts;
    app.add_option("--config", opts.config_path, "experiment config (JSON)")->required();
    app.add_option("--out", opts.out_dir, "output directory (default: out)");
    app.add_option("--seed", opts.seed, "override the master seed")->each([&](const std::string&) {
        opts.seed_set = true;
    });
    app.add_option("--method", opts.methods, "override method list (original|noise|p2p|dhta)")->delimiter(',');
    app.add_option("--bits", opts.bits, "restrict to a single code length");
    app.add_option("--nt", opts.n_t, "override n_t");
    app.add_option("--epsilon", opts.epsilon, "override the l-inf budget");
    app.add_option("--iters", opts.iterations, "override the iteration count");

    auto* generate = app.add_subcommand("generate", "synthesize the labeled dataset");
    auto* train = app.add_subcommand("train", "train one hashing model per code length");
    auto* index = app.add_subcommand("index", "hash the database split into a code file");
    auto* attack = app.add_subcommand("attack", "generate adversarial queries per method");
    auto* evaluate = app.add_subcommand("evaluate", "score attacks: t-MAP, MAP, PR curves");
    auto* report = app.add_subcommand("report", "consolidate per-run scores into report tables");
    for (auto* sub : {generate, train, index, attack, evaluate, report}) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        const hat::ExperimentConfig cfg = load_config(opts);
        const std::filesystem::path out = opts.out_dir;
        if (generate->parsed()) hat::cmd_generate(cfg, out);
        if (train->parsed()) hat::cmd_train(cfg, out);
        if (index->parsed()) hat::cmd_index(cfg, out);
        if (attack->parsed()) hat::cmd_attack(cfg, out);
        if (evaluate->parsed()) hat::cmd_evaluate(cfg, out);
        if (report->parsed()) hat::cmd_report(cfg, out);
    } catch (const hat::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
