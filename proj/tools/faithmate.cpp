#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "faithmate/config.hpp"
#include "faithmate/error.hpp"
#include "faithmate/pipeline.hpp"
#include "faithmate/wire.hpp"

using namespace faithmate;

int main(int argc, char** argv) {
    CLI::App app{"CoT faithfulness pipeline: sample, score, pair, train, transfer, merge"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand name

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--override", overrides, "config override, key.path=value (repeatable)");

    // Per-invocation knobs that shadow the config file.
    std::optional<uint64_t> seed_opt;
    std::optional<int> jobs_opt;
    std::optional<std::string> out_dir_opt;
    app.add_option("--seed", seed_opt, "run seed");
    app.add_option("--jobs", jobs_opt, "worker threads (0 = library default)");
    app.add_option("--out-dir", out_dir_opt, "artifact directory");

    auto* sample = app.add_subcommand("sample", "sample m CoTs per instance");

    std::string metric, cots_path, out_path, backend_override, mode;
    auto* score = app.add_subcommand("score", "score sampled CoTs with one metric");
    score->add_option("--metric", metric, "metric id")->required();
    score->add_option("--cots", cots_path, "cots artifact (default <out-dir>/cots.jsonl)");
    score->add_option("--out", out_path, "output path");
    score->add_option("--backend", backend_override,
                      "backend spec or .fmpd delta applied over the configured subject");

    auto* pairs = app.add_subcommand("pairs", "build preference pairs from scores");
    pairs->add_option("--metric", metric, "metric id")->required();

    auto* train = app.add_subcommand("train", "train a low-rank adapter on pairs");
    train->add_option("--mode", mode, "sft | dpo")->required();
    train->add_option("--metric", metric, "metric the pairs were ranked by")->required();

    std::string base_scores, opt_scores;
    auto* transfer = app.add_subcommand("transfer", "delta between two score files");
    transfer->add_option("--base", base_scores, "base-model scores")->required();
    transfer->add_option("--opt", opt_scores, "optimized-model scores")->required();
    transfer->add_option("--out", out_path, "output path");

    std::vector<std::string> delta_paths;
    std::vector<double> weights;
    double lambda = 1.0;
    auto* merge = app.add_subcommand("merge", "combine task vectors");
    merge->add_option("deltas", delta_paths, "adapter delta files")->required();
    merge->add_option("--weights", weights, "per-vector weights (default uniform)");
    merge->add_option("--lambda", lambda, "scaling of the combined vector");
    merge->add_option("--out", out_path, "output path");

    auto* analyze = app.add_subcommand("analyze", "task-vector similarity and PCA");
    analyze->add_option("deltas", delta_paths, "adapter delta files")->required();
    analyze->add_option("--out", out_path, "output path");

    auto* accuracy = app.add_subcommand("accuracy", "greedy task accuracy without CoT");
    accuracy->add_option("--backend", backend_override,
                         "backend spec or .fmpd delta applied over the configured subject");

    std::string fixture_path;
    auto* report = app.add_subcommand("report", "aggregate published transfer numbers");
    report->add_option("--fixture", fixture_path, "fixture JSON")->required();

    std::string serve_spec = "toy:random:1234";
    auto* serve = app.add_subcommand("serve", "serve a backend over stdio (NDJSON)");
    serve->add_option("--backend", serve_spec, "backend spec to serve");

    CLI11_PARSE(app, argc, argv);

    try {
        Config cfg = config_path.empty() ? Config{} : load_config(config_path);
        for (const auto& kv : overrides) apply_override(cfg, kv);
        if (seed_opt) cfg.seed = *seed_opt;
        if (jobs_opt) cfg.jobs = *jobs_opt;
        if (out_dir_opt) cfg.out_dir = *out_dir_opt;

        if (sample->parsed()) return cmd_sample(cfg);
        if (score->parsed())
            return cmd_score(cfg, metric, cots_path, out_path, backend_override);
        if (pairs->parsed()) return cmd_pairs(cfg, metric);
        if (train->parsed()) return cmd_train(cfg, mode, metric);
        if (transfer->parsed()) return cmd_transfer(cfg, base_scores, opt_scores, out_path);
        if (merge->parsed()) return cmd_merge(cfg, delta_paths, weights, lambda, out_path);
        if (analyze->parsed()) return cmd_analyze(cfg, delta_paths, out_path);
        if (accuracy->parsed()) return cmd_accuracy(cfg, backend_override);
        if (report->parsed()) return cmd_report(cfg, fixture_path);
        if (serve->parsed()) {
            BackendPtr backend = make_backend(serve_spec);
            serve_backend(*backend, std::cin, std::cout);
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
