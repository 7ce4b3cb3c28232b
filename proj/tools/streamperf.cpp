#include <CLI11.hpp>

#include "streamperf/commands.hpp"

using namespace streamperf;

int main(int argc, char** argv) {
    CLI::App app{"streamperf: streaming-perception configuration study toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string corpus_dir, dataset_dir, models_dir, out_dir;
    std::string grid_override, variant_override, mode_override;
    double latency_scale_override = -1.0;
    std::int64_t seed_override = -1;
    int jobs_override = 0;
    bool force = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config JSON")->required();
        cmd->add_option("--seed", seed_override, "override config seed");
        cmd->add_option("--grid", grid_override, "override grid: default|extended");
        cmd->add_option("--latency-scale", latency_scale_override, "override latency scale");
        cmd->add_option("--jobs", jobs_override, "worker threads");
        cmd->add_flag("--force", force, "overwrite existing outputs");
    };

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic scenario corpus");
    add_common(gen);
    gen->add_option("--out", out_dir, "corpus output directory")->required();

    CLI::App* sweep = app.add_subcommand("sweep", "run every config on every segment");
    add_common(sweep);
    sweep->add_option("--corpus", corpus_dir, "corpus directory")->required();
    sweep->add_option("--out", out_dir, "dataset output directory")->required();

    CLI::App* train = app.add_subcommand("train", "train a policy model");
    add_common(train);
    train->add_option("--dataset", dataset_dir, "dataset directory")->required();
    train->add_option("--out", out_dir, "models output directory")->required();
    train->add_option("--variant", variant_override,
                      "relative|absolute|classify-joint|classify-independent");

    CLI::App* eval = app.add_subcommand("eval", "evaluate policies (Table-2 style report)");
    add_common(eval);
    eval->add_option("--dataset", dataset_dir, "dataset directory")->required();
    eval->add_option("--corpus", corpus_dir, "corpus directory (closed-loop features)")->required();
    eval->add_option("--models", models_dir, "models directory")->required();
    eval->add_option("--out", out_dir, "reports output directory")->required();
    eval->add_option("--mode", mode_override, "restrict to one mode: gt-current|gt-previous|closed-loop");

    CLI::App* analyze = app.add_subcommand("analyze", "score-space, clusters, heatmaps, pareto, importances");
    add_common(analyze);
    analyze->add_option("--dataset", dataset_dir, "dataset directory")->required();
    analyze->add_option("--corpus", corpus_dir, "corpus directory");
    analyze->add_option("--models", models_dir, "models directory");
    analyze->add_option("--out", out_dir, "reports output directory")->required();

    CLI::App* bench = app.add_subcommand("bench", "benchmark policy inference latency");
    add_common(bench);
    bench->add_option("--models", models_dir, "models directory")->required();
    bench->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg = load_experiment_config(config_path);
        if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
        if (!grid_override.empty()) cfg.grid = grid_override;
        if (latency_scale_override > 0.0) cfg.latency_scale = latency_scale_override;
        if (jobs_override > 0) cfg.jobs = jobs_override;
        if (!variant_override.empty()) cfg.variant = variant_override;
        if (!mode_override.empty()) cfg.eval_modes = {mode_override};

        if (gen->parsed()) {
            cmd_gen(cfg, out_dir, force);
        } else if (sweep->parsed()) {
            cmd_sweep(cfg, corpus_dir, out_dir, force);
        } else if (train->parsed()) {
            cmd_train(cfg, dataset_dir, out_dir, cfg.variant);
        } else if (eval->parsed()) {
            cmd_eval(cfg, dataset_dir, corpus_dir, models_dir, out_dir);
        } else if (analyze->parsed()) {
            cmd_analyze(cfg, dataset_dir, corpus_dir, models_dir, out_dir);
        } else if (bench->parsed()) {
            cmd_bench(models_dir, out_dir);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
