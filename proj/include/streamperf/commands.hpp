#pragma once

#include "streamperf/experiment.hpp"

namespace streamperf {

// Subcommand bodies shared by the CLI binary and the test suite. Each writes
// its resolved config and input hashes into the output directory and returns
// only on full success.

inline void cmd_gen(const ExperimentConfig& cfg, const fs::path& out_dir, bool force) {
    Corpus corpus = generate_corpus(cfg.corpus, cfg.seed);
    save_corpus(corpus, out_dir, cfg.seed, force);
    write_resolved_config(out_dir, cfg, {});
    log(LogLevel::info, "gen: wrote %zu scenarios to %s", corpus.size(), out_dir.string().c_str());
}

inline OctopusDataset cmd_sweep(const ExperimentConfig& cfg, const fs::path& corpus_dir, const fs::path& out_dir,
                                bool force) {
    if (fs::exists(out_dir / "records.jsonl") && !force)
        throw IoError("dataset already exists at " + out_dir.string() + " (use --force to overwrite)");
    if (force) {
        fs::remove_all(out_dir / "parts");
        fs::remove(out_dir / "records.jsonl");
    }
    Corpus corpus = load_corpus(corpus_dir);
    ProfileSet profiles = load_profile_set(cfg.profile_path);
    GridKind grid = parse_grid_kind(cfg.grid);
    OctopusDataset ds = sweep_with_resume(corpus, grid, profiles, cfg.delta_tau, cfg.latency_scale, cfg.seed,
                                          cfg.iou_threshold, cfg.jobs, out_dir / "parts");
    ds.profile_hash = hash_file_hex(cfg.profile_path);
    attach_features(ds, corpus, profiles, cfg.jobs);
    save_dataset(ds, out_dir);
    write_resolved_config(out_dir, cfg, {cfg.profile_path, corpus_dir / "manifest.json"});
    log(LogLevel::info, "sweep: %zu records over %d configs", ds.records.size(), ds.grid_size());
    return ds;
}

inline void cmd_train(const ExperimentConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir,
                      const std::string& variant) {
    OctopusDataset ds = load_dataset(dataset_dir);
    fs::create_directories(out_dir);
    if (variant == "relative" || variant == "absolute") {
        ForestHyperparams hp = cfg.forest_regression;
        hp.seed = cfg.seed;
        PolicyVariant pv = variant == "relative" ? PolicyVariant::relative : PolicyVariant::absolute;
        PolicyModel model = train_policy(ds, hp, pv, cfg.epsilon, cfg.one_sided_clip, cfg.jobs);
        write_file(out_dir / ("model_" + variant + ".json"), model.to_json().dump() + "\n");
    } else if (variant == "classify-joint" || variant == "classify-independent" ||
               variant == "classify-joint-single") {
        bool joint = variant != "classify-independent";
        bool single = variant == "classify-joint-single";  // one |grid|-way classifier
        ForestHyperparams hp = joint ? cfg.forest_cls_joint : cfg.forest_cls_indep;
        hp.seed = cfg.seed;
        ClassifyPolicy cp =
            train_classifier(ds, hp, joint ? ClassifyVariant::joint : ClassifyVariant::independent, single, cfg.jobs);
        nlohmann::json j;
        j["schema_version"] = 1;
        j["variant"] = variant;
        j["single_model"] = single;
        j["h_global"] = cp.h_global;
        j["grid"] = grid_kind_name(cp.grid_kind);
        nlohmann::json forests = nlohmann::json::array();
        for (const auto& f : cp.per_field) forests.push_back(f.to_json());
        j["forests"] = std::move(forests);
        write_file(out_dir / ("model_" + variant + ".json"), j.dump() + "\n");
    } else {
        throw ValidationError("unknown training variant: '" + variant + "'");
    }
    write_resolved_config(out_dir, cfg, {dataset_dir / "manifest.json"});
    log(LogLevel::info, "train: variant %s done", variant.c_str());
}

inline ClassifyPolicy load_classifier(const fs::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path));
    ClassifyPolicy cp;
    cp.variant = j.at("variant").get<std::string>().rfind("classify-joint", 0) == 0 ? ClassifyVariant::joint
                                                                                    : ClassifyVariant::independent;
    if (j.contains("single_model")) cp.single_model = j.at("single_model").get<bool>();
    cp.h_global = j.at("h_global").get<int>();
    cp.grid_kind = parse_grid_kind(j.at("grid").get<std::string>());
    cp.grid = make_grid(cp.grid_kind);
    for (const auto& jf : j.at("forests")) cp.per_field.push_back(Forest::from_json(jf));
    return cp;
}

inline void cmd_eval(const ExperimentConfig& cfg, const fs::path& dataset_dir, const fs::path& corpus_dir,
                     const fs::path& models_dir, const fs::path& out_dir) {
    OctopusDataset ds = load_dataset(dataset_dir);
    PolicyModel model = PolicyModel::from_json(nlohmann::json::parse(read_file(models_dir / "model_relative.json")));
    if (model.feature_layout_version != kFeatureLayoutVersion) throw ValidationError("model feature layout mismatch");
    Corpus corpus = load_corpus(corpus_dir);
    ProfileSet profiles = load_profile_set(cfg.profile_path);
    ClosedLoopRunner runner(corpus, profiles, ds);
    std::vector<EvalMode> modes;
    for (const auto& m : cfg.eval_modes) modes.push_back(parse_eval_mode(m));
    auto rows = evaluate_all(ds, model, modes, &runner);
    fs::create_directories(out_dir);
    write_eval_report_csv(out_dir / "eval_report.csv", rows);
    for (const auto& row : rows)
        if (!row.decisions.empty())
            write_decisions_jsonl(out_dir / ("decisions_" + row.method + ".jsonl"), row.decisions);
    write_resolved_config(out_dir, cfg,
                          {dataset_dir / "manifest.json", models_dir / "model_relative.json", cfg.profile_path});
    log(LogLevel::info, "eval: %zu report rows", rows.size());
}

// Appendix-J style latency scaling: rebuild the dataset at a scaled latency,
// rerun the policy, and report the opportunity gap against the unscaled
// baseline.
struct LatencyScalingReport {
    double scale = 1.0;
    double baseline_gap = 0.0;
    double scaled_gap = 0.0;
    OpportunityGapReport baseline;
    OpportunityGapReport scaled;
    std::vector<EvalReportRow> baseline_rows;  // Table-2 style, when the policy rerun is requested
    std::vector<EvalReportRow> scaled_rows;
};

inline LatencyScalingReport latency_scaling_report(const Corpus& corpus, GridKind grid, const ProfileSet& profiles,
                                                   double delta_tau, std::uint64_t seed, double iou_threshold,
                                                   double scale, bool with_policy = false,
                                                   ForestHyperparams hp = regression_defaults(), int jobs = 1) {
    if (scale <= 0.0) throw ValidationError("latency scale must be > 0");
    LatencyScalingReport rep;
    rep.scale = scale;
    auto run_at = [&](double s, OpportunityGapReport* gap, std::vector<EvalReportRow>* rows) {
        OctopusDataset ds = build_dataset(corpus, grid, profiles, delta_tau, s, seed, iou_threshold, jobs);
        *gap = opportunity_gap(ds);
        if (!with_policy) return;
        attach_features(ds, corpus, profiles, jobs);
        PolicyModel model = train_policy(ds, hp, PolicyVariant::relative, 100.0, false, jobs);
        ClosedLoopRunner runner(corpus, profiles, ds);
        *rows = evaluate_all(ds, model, {EvalMode::gt_current, EvalMode::gt_previous, EvalMode::closed_loop}, &runner);
        for (auto& r : *rows) r.decisions.clear();
    };
    run_at(1.0, &rep.baseline, &rep.baseline_rows);
    run_at(scale, &rep.scaled, &rep.scaled_rows);
    rep.baseline_gap = rep.baseline.gap;
    rep.scaled_gap = rep.scaled.gap;
    return rep;
}

inline void write_latency_scaling_csv(const fs::path& path, const LatencyScalingReport& rep) {
    std::ostringstream out;
    out << "scale,method,s_mota,s_motp,s_fp,s_fn,s_idsw\n";
    auto dump_rows = [&](double scale, const std::vector<EvalReportRow>& rows) {
        for (const auto& r : rows)
            out << format_double(scale) << "," << r.method << "," << format_double(r.s_mota) << ","
                << format_double(r.s_motp) << "," << r.s_fp << "," << r.s_fn << "," << r.s_idsw << "\n";
    };
    dump_rows(1.0, rep.baseline_rows);
    dump_rows(rep.scale, rep.scaled_rows);
    out << "1,opportunity_gap," << format_double(rep.baseline_gap) << ",,,,\n";
    out << format_double(rep.scale) << ",opportunity_gap," << format_double(rep.scaled_gap) << ",,,,\n";
    out << format_double(rep.scale) << ",gap_delta_vs_scale1," << format_double(rep.scaled_gap - rep.baseline_gap)
        << ",,,,\n";
    write_file(path, out.str());
}

inline void cmd_analyze(const ExperimentConfig& cfg, const fs::path& dataset_dir, const fs::path& corpus_dir,
                        const fs::path& models_dir, const fs::path& out_dir) {
    OctopusDataset ds = load_dataset(dataset_dir);
    fs::create_directories(out_dir);

    write_opportunity_gap_csv(out_dir / "opportunity_gap.csv", opportunity_gap(ds));
    write_hybrid_table_csv(out_dir / "hybrid_table.csv", hybrid_policy_table(ds));

    ScoreSpaceMatrix space = build_score_space(ds);
    write_score_space_csv(out_dir / "score_space.csv", space);
    std::vector<std::vector<double>> points;
    for (std::size_t i = 0; i < space.rows.size(); ++i)
        if (!space.flagged[i]) points.push_back(space.rows[i]);
    if (static_cast<int>(points.size()) >= cfg.kmeans_k) {
        KMeansResult km = kmeans(points, cfg.kmeans_k, cfg.seed, cfg.kmeans_restarts);
        std::ostringstream out;
        out << "cluster";
        for (const auto& n : space.column_names()) out << "," << n;
        out << "\n";
        for (int c = 0; c < cfg.kmeans_k; ++c) {
            out << c;
            for (double v : km.centroids[c]) out << "," << format_double(v);
            out << "\n";
        }
        write_file(out_dir / "centroids.csv", out.str());
    }

    auto star = optimal_per_segment(ds);
    std::vector<int> optimal_decisions;
    for (const auto& k : ds.defined_segments(Split::test)) optimal_decisions.push_back(star.at(k));
    write_heatmap_csv(out_dir / "heatmap_optimal.csv", action_heatmap(optimal_decisions, ds.grid));

    fs::path model_path = models_dir / "model_relative.json";
    if (fs::exists(model_path)) {
        PolicyModel model = PolicyModel::from_json(nlohmann::json::parse(read_file(model_path)));
        EvalReportRow row = evaluate_policy(ds, model, EvalMode::gt_current);
        std::vector<int> learned;
        for (const auto& d : row.decisions)
            if (ds.is_defined(d.segment)) learned.push_back(d.chosen);
        write_heatmap_csv(out_dir / "heatmap_learned.csv", action_heatmap(learned, ds.grid));
        write_importance_csv(out_dir / "feature_importance.csv", model.forest.feature_importances());

        // ablation rows (gt-current) for whichever variants were trained
        std::vector<EvalReportRow> ablation;
        row.method = "regression_relative";
        ablation.push_back(row);
        if (fs::exists(models_dir / "model_absolute.json")) {
            PolicyModel abs_model =
                PolicyModel::from_json(nlohmann::json::parse(read_file(models_dir / "model_absolute.json")));
            EvalReportRow abs_row = evaluate_policy(ds, abs_model, EvalMode::gt_current);
            abs_row.method = "regression_absolute";
            ablation.push_back(abs_row);
        }
        for (const char* v : {"classify-joint", "classify-independent"}) {
            fs::path p = models_dir / (std::string("model_") + v + ".json");
            if (!fs::exists(p)) continue;
            ablation.push_back(evaluate_classifier(ds, load_classifier(p)));
        }
        for (auto& r : ablation) r.decisions.clear();
        write_eval_report_csv(out_dir / "ablations.csv", ablation);
    }

    write_pareto_csv(out_dir / "pareto.csv", pareto_weighted_optimal(ds, cfg.pareto_lambdas));
    write_single_knob_csv(out_dir / "metaparameter_single.csv", metaparameter_single_table(ds));
    if (ds.grid_kind == GridKind::extended)
        write_contribution_csv(out_dir / "metaparameter_contribution.csv", metaparameter_contribution(ds));

    // Appendix-J style rerun, requested by analyzing with --latency-scale != 1
    if (cfg.latency_scale != 1.0 && !corpus_dir.empty()) {
        Corpus corpus = load_corpus(corpus_dir);
        ProfileSet profiles = load_profile_set(cfg.profile_path);
        ForestHyperparams hp = cfg.forest_regression;
        hp.seed = cfg.seed;
        LatencyScalingReport rep = latency_scaling_report(corpus, ds.grid_kind, profiles, cfg.delta_tau, cfg.seed,
                                                          cfg.iou_threshold, cfg.latency_scale, true, hp, cfg.jobs);
        write_latency_scaling_csv(out_dir / "latency_scaling.csv", rep);
    }
    write_resolved_config(out_dir, cfg, {dataset_dir / "manifest.json"});
    log(LogLevel::info, "analyze: reports written to %s", out_dir.string().c_str());
}

inline LatencyStats cmd_bench(const fs::path& models_dir, const fs::path& out_dir, int trials = 2000) {
    PolicyModel model = PolicyModel::from_json(nlohmann::json::parse(read_file(models_dir / "model_relative.json")));
    LatencyStats st = benchmark_inference(model, trials);
    nlohmann::json j{{"grid_size", model.grid.size()},
                     {"trials", st.trials},
                     {"p50_ms", st.p50_ms},
                     {"p99_ms", st.p99_ms},
                     {"mean_ms", st.mean_ms}};
    fs::create_directories(out_dir);
    write_file(out_dir / "bench.json", j.dump(2) + "\n");
    std::printf("policy inference over %zu configs: p50 %.3f ms, p99 %.3f ms (%d trials)\n", model.grid.size(),
                st.p50_ms, st.p99_ms, st.trials);
    return st;
}

}  // namespace streamperf
