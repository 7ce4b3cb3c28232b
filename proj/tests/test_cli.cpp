#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>

#include "streamperf/commands.hpp"

using namespace streamperf;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.seed = 77;
    cfg.corpus.entries = {{"ego-turn", 2}, {"intersection-stop", 2}, {"mixed", 1}};
    cfg.corpus.duration = 6.0;
    cfg.corpus.test_fraction = 0.5;
    cfg.profile_path = std::string(STREAMPERF_SOURCE_DIR) + "/configs/detector_profiles.json";
    cfg.forest_regression.n_estimators = 10;
    cfg.forest_regression.max_depth = 8;
    cfg.forest_cls_joint.n_estimators = 10;
    cfg.forest_cls_indep.n_estimators = 10;
    return cfg;
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("streamperf_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string dir_digest(const fs::path& dir) {
    std::vector<std::string> entries;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        entries.push_back(fs::relative(e.path(), dir).string() + ":" + hash_file_hex(e.path()));
    }
    std::sort(entries.begin(), entries.end());
    std::string acc;
    for (const auto& s : entries) acc += s + "\n";
    return acc;
}

int count_lines(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    int n = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

}  // namespace

TEST_CASE("gen is deterministic and refuses to overwrite without force") {
    ExperimentConfig cfg = small_config();
    fs::path a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
    cmd_gen(cfg, a, false);
    cmd_gen(cfg, b, false);
    REQUIRE(dir_digest(a) == dir_digest(b));
    REQUIRE_THROWS_AS(cmd_gen(cfg, a, false), IoError);
    REQUIRE_NOTHROW(cmd_gen(cfg, a, true));

    nlohmann::json manifest = nlohmann::json::parse(read_file(a / "manifest.json"));
    REQUIRE(manifest.at("scenarios").size() == 5);
    std::set<std::string> ids;
    for (const auto& je : manifest.at("scenarios")) ids.insert(je.at("id").get<std::string>());
    REQUIRE(ids.size() == 5);
    REQUIRE(fs::exists(a / "resolved_config.json"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("gen with zero scenarios is an error") {
    ExperimentConfig cfg = small_config();
    cfg.corpus.entries = {{"mixed", 0}};
    REQUIRE_THROWS_AS(cmd_gen(cfg, fresh_dir("gen_zero"), false), ValidationError);
    cfg.corpus.entries.clear();
    REQUIRE_THROWS_AS(cmd_gen(cfg, fresh_dir("gen_zero"), false), ValidationError);
}

TEST_CASE("sweep writes the dataset, records the grid, and resumes from parts") {
    ExperimentConfig cfg = small_config();
    fs::path corpus_dir = fresh_dir("sw_corpus"), out = fresh_dir("sw_out");
    cmd_gen(cfg, corpus_dir, false);
    OctopusDataset ds = cmd_sweep(cfg, corpus_dir, out, false);
    REQUIRE(ds.grid_size() == 18);
    nlohmann::json manifest = nlohmann::json::parse(read_file(out / "manifest.json"));
    REQUIRE(manifest.at("grid_size").get<int>() == 18);
    REQUIRE(manifest.at("grid_configs").size() == 18);
    REQUIRE(count_lines(out / "records.jsonl") == static_cast<int>(ds.records.size()));
    REQUIRE(fs::exists(out / "features_train.csv"));
    REQUIRE(fs::exists(out / "features_gt.csv"));

    // resume: re-running with records removed must reuse every part file
    std::string before = read_file(out / "records.jsonl");
    auto part_time = fs::last_write_time(out / "parts" / "ego-turn-000__cfg000.jsonl");
    fs::remove(out / "records.jsonl");
    OctopusDataset ds2 = cmd_sweep(cfg, corpus_dir, out, false);
    REQUIRE(read_file(out / "records.jsonl") == before);
    REQUIRE(fs::last_write_time(out / "parts" / "ego-turn-000__cfg000.jsonl") == part_time);
    // a second sweep over existing records requires --force
    REQUIRE_THROWS_AS(cmd_sweep(cfg, corpus_dir, out, false), IoError);
    fs::remove_all(corpus_dir);
    fs::remove_all(out);
}

TEST_CASE("extended grid sweep records 486 configurations") {
    ExperimentConfig cfg = small_config();
    cfg.corpus.entries = {{"mixed", 1}};
    cfg.corpus.duration = 3.0;
    cfg.grid = "extended";
    fs::path corpus_dir = fresh_dir("ext_corpus"), out = fresh_dir("ext_out");
    cmd_gen(cfg, corpus_dir, false);
    OctopusDataset ds = cmd_sweep(cfg, corpus_dir, out, false);
    REQUIRE(ds.grid_size() == 486);
    nlohmann::json manifest = nlohmann::json::parse(read_file(out / "manifest.json"));
    REQUIRE(manifest.at("grid_size").get<int>() == 486);
    fs::remove_all(corpus_dir);
    fs::remove_all(out);
}

TEST_CASE("train, eval, analyze and bench produce the documented artifacts") {
    ExperimentConfig cfg = small_config();
    fs::path corpus_dir = fresh_dir("e2e_corpus"), dataset = fresh_dir("e2e_dataset"),
             models = fresh_dir("e2e_models"), reports = fresh_dir("e2e_reports"),
             analysis = fresh_dir("e2e_analysis");
    cmd_gen(cfg, corpus_dir, false);
    OctopusDataset swept = cmd_sweep(cfg, corpus_dir, dataset, false);
    REQUIRE(!swept.profile_hash.empty());
    nlohmann::json ds_manifest = nlohmann::json::parse(read_file(dataset / "manifest.json"));
    REQUIRE(ds_manifest.at("profile_hash").get<std::string>() == swept.profile_hash);
    for (const char* variant : {"relative", "absolute", "classify-joint", "classify-independent",
                                "classify-joint-single"})
        cmd_train(cfg, dataset, models, variant);
    REQUIRE(fs::exists(models / "model_relative.json"));
    REQUIRE(fs::exists(models / "model_absolute.json"));
    REQUIRE(fs::exists(models / "model_classify-joint.json"));
    REQUIRE(fs::exists(models / "model_classify-independent.json"));
    ClassifyPolicy single = load_classifier(models / "model_classify-joint-single.json");
    REQUIRE(single.single_model);
    REQUIRE(single.per_field.size() == 1);
    REQUIRE_THROWS_AS(cmd_train(cfg, dataset, models, "bogus"), ValidationError);

    cmd_eval(cfg, dataset, corpus_dir, models, reports);
    std::ifstream rep(reports / "eval_report.csv");
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(rep, line))
        if (!line.empty()) lines.push_back(line);
    REQUIRE(lines.size() == 7);  // header + 6 method rows
    REQUIRE(lines[0] == "method,s_mota,s_motp,s_fp,s_fn,s_idsw");
    REQUIRE(lines[1].rfind("global_best,", 0) == 0);
    REQUIRE(lines[2].rfind("optimal,", 0) == 0);
    REQUIRE(lines[3].rfind("optimal_prev,", 0) == 0);
    REQUIRE(lines[4].rfind("octopus_gt-current,", 0) == 0);
    REQUIRE(lines[5].rfind("octopus_gt-previous,", 0) == 0);
    REQUIRE(lines[6].rfind("octopus_closed-loop,", 0) == 0);
    REQUIRE(fs::exists(reports / "decisions_octopus_closed-loop.jsonl"));

    cmd_analyze(cfg, dataset, corpus_dir, models, analysis);
    for (const char* f : {"opportunity_gap.csv", "hybrid_table.csv", "score_space.csv", "heatmap_optimal.csv",
                          "heatmap_learned.csv", "feature_importance.csv", "pareto.csv", "ablations.csv",
                          "metaparameter_single.csv"})
        REQUIRE(fs::exists(analysis / f));
    // importances in the report sum to 1
    std::ifstream imp(analysis / "feature_importance.csv");
    double total = 0.0;
    std::getline(imp, line);  // header
    while (std::getline(imp, line)) {
        if (line.rfind("config,", 0) != 0 && line.rfind("feature,", 0) != 0) continue;
        auto pos = line.rfind(',');
        total += std::strtod(line.c_str() + pos + 1, nullptr);
    }
    REQUIRE(total == Catch::Approx(1.0).margin(1e-6));

    LatencyStats st = cmd_bench(models, reports, 200);
    REQUIRE(st.trials == 200);
    REQUIRE(fs::exists(reports / "bench.json"));

    // analyzing with a scaled latency triggers the Appendix-J style rerun
    ExperimentConfig scaled = cfg;
    scaled.latency_scale = 0.5;
    fs::path analysis2 = fresh_dir("e2e_analysis_scaled");
    cmd_analyze(scaled, dataset, corpus_dir, models, analysis2);
    REQUIRE(fs::exists(analysis2 / "latency_scaling.csv"));
    std::ifstream ls(analysis2 / "latency_scaling.csv");
    int ls_lines = 0;
    while (std::getline(ls, line))
        if (!line.empty()) ++ls_lines;
    REQUIRE(ls_lines >= 1 + 12 + 3);  // header + two 6-row reports + gap summary

    for (const auto& d : {corpus_dir, dataset, models, reports, analysis, analysis2}) fs::remove_all(d);
}

TEST_CASE("the CLI binary wires the subcommands end to end") {
    ExperimentConfig cfg = small_config();
    cfg.corpus.entries = {{"mixed", 2}};
    cfg.corpus.duration = 5.0;
    cfg.corpus.test_fraction = 0.5;
    fs::path root = fresh_dir("binary");
    fs::create_directories(root);
    fs::path cfg_path = root / "config.json";
    write_file(cfg_path, experiment_config_to_json(cfg).dump(2));

    std::string bin = STREAMPERF_CLI_PATH;
    auto run = [&](const std::string& args) {
        std::string cmd = bin + " " + args + " >/dev/null 2>&1";
        return std::system(cmd.c_str());
    };
    REQUIRE(run("gen --config " + cfg_path.string() + " --out " + (root / "corpus").string()) == 0);
    REQUIRE(run("gen --config " + cfg_path.string() + " --out " + (root / "corpus").string()) != 0);  // no --force
    REQUIRE(run("gen --config " + cfg_path.string() + " --out " + (root / "corpus").string() + " --force") == 0);
    REQUIRE(run("sweep --config " + cfg_path.string() + " --corpus " + (root / "corpus").string() + " --out " +
                (root / "dataset").string()) == 0);
    REQUIRE(run("train --config " + cfg_path.string() + " --dataset " + (root / "dataset").string() + " --out " +
                (root / "models").string()) == 0);
    REQUIRE(run("eval --config " + cfg_path.string() + " --dataset " + (root / "dataset").string() + " --corpus " +
                (root / "corpus").string() + " --models " + (root / "models").string() + " --out " +
                (root / "reports").string() + " --mode gt-current") == 0);
    REQUIRE(fs::exists(root / "reports" / "eval_report.csv"));
    REQUIRE(run("bench --config " + cfg_path.string() + " --models " + (root / "models").string() + " --out " +
                (root / "reports").string()) == 0);
    REQUIRE(run("definitely-not-a-subcommand") != 0);
    fs::remove_all(root);
}
