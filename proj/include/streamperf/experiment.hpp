#pragma once

#include <cinttypes>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "streamperf/analysis.hpp"
#include "streamperf/policy.hpp"

namespace streamperf {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Experiment configuration (fully serializable; a run stores the resolved
// form plus content hashes of its file inputs next to its outputs).

struct CorpusEntrySpec {
    std::string archetype = "mixed";
    int count = 0;
};

struct CorpusSpec {
    std::vector<CorpusEntrySpec> entries;
    double duration = 20.0;
    double frame_rate = 10.0;
    int image_w = 1920;
    int image_h = 1280;
    int min_objects = 6;
    int max_objects = 12;
    double test_fraction = 0.3;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    CorpusSpec corpus;
    std::string grid = "default";
    std::string profile_path = "configs/detector_profiles.json";
    double delta_tau = 1.0;
    double epsilon = 100.0;
    double latency_scale = 1.0;
    double iou_threshold = 0.4;
    ForestHyperparams forest_regression = regression_defaults();
    ForestHyperparams forest_cls_joint = classification_joint_defaults();
    ForestHyperparams forest_cls_indep = classification_independent_defaults();
    std::vector<std::string> eval_modes = {"gt-current", "gt-previous", "closed-loop"};
    int kmeans_k = 8;
    int kmeans_restarts = 10;
    std::vector<double> pareto_lambdas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    int jobs = 1;
    std::string variant = "relative";
    bool one_sided_clip = false;
};

inline nlohmann::json hyperparams_to_json(const ForestHyperparams& hp) {
    return {{"max_depth", hp.max_depth},
            {"max_features", hp.max_features},
            {"n_estimators", hp.n_estimators},
            {"min_impurity_decrease", hp.min_impurity_decrease}};
}

inline ForestHyperparams hyperparams_from_json(const nlohmann::json& j, ForestHyperparams base) {
    if (j.contains("max_depth")) base.max_depth = j.at("max_depth").get<int>();
    if (j.contains("max_features")) base.max_features = j.at("max_features").get<int>();
    if (j.contains("n_estimators")) base.n_estimators = j.at("n_estimators").get<int>();
    if (j.contains("min_impurity_decrease")) base.min_impurity_decrease = j.at("min_impurity_decrease").get<double>();
    return base;
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : c.corpus.entries) entries.push_back({{"archetype", e.archetype}, {"count", e.count}});
    j["corpus"] = {{"entries", entries},
                   {"duration", c.corpus.duration},
                   {"frame_rate", c.corpus.frame_rate},
                   {"image_size", {{"W", c.corpus.image_w}, {"H", c.corpus.image_h}}},
                   {"min_objects", c.corpus.min_objects},
                   {"max_objects", c.corpus.max_objects},
                   {"test_fraction", c.corpus.test_fraction}};
    j["grid"] = c.grid;
    j["profile_path"] = c.profile_path;
    j["delta_tau"] = c.delta_tau;
    j["epsilon"] = c.epsilon;
    j["latency_scale"] = c.latency_scale;
    j["iou_threshold"] = c.iou_threshold;
    j["forest"] = {{"regression", hyperparams_to_json(c.forest_regression)},
                   {"classification_joint", hyperparams_to_json(c.forest_cls_joint)},
                   {"classification_independent", hyperparams_to_json(c.forest_cls_indep)}};
    j["eval_modes"] = c.eval_modes;
    j["kmeans_k"] = c.kmeans_k;
    j["kmeans_restarts"] = c.kmeans_restarts;
    j["pareto_lambdas"] = c.pareto_lambdas;
    j["jobs"] = c.jobs;
    j["variant"] = c.variant;
    j["one_sided_clip"] = c.one_sided_clip;
    return j;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("corpus")) {
        const auto& jc = j.at("corpus");
        if (jc.contains("entries"))
            for (const auto& je : jc.at("entries"))
                c.corpus.entries.push_back(
                    CorpusEntrySpec{je.at("archetype").get<std::string>(), je.at("count").get<int>()});
        if (jc.contains("duration")) c.corpus.duration = jc.at("duration").get<double>();
        if (jc.contains("frame_rate")) c.corpus.frame_rate = jc.at("frame_rate").get<double>();
        if (jc.contains("image_size")) {
            c.corpus.image_w = jc.at("image_size").at("W").get<int>();
            c.corpus.image_h = jc.at("image_size").at("H").get<int>();
        }
        if (jc.contains("min_objects")) c.corpus.min_objects = jc.at("min_objects").get<int>();
        if (jc.contains("max_objects")) c.corpus.max_objects = jc.at("max_objects").get<int>();
        if (jc.contains("test_fraction")) c.corpus.test_fraction = jc.at("test_fraction").get<double>();
    }
    if (j.contains("grid")) c.grid = j.at("grid").get<std::string>();
    if (j.contains("profile_path")) c.profile_path = j.at("profile_path").get<std::string>();
    if (j.contains("delta_tau")) c.delta_tau = j.at("delta_tau").get<double>();
    if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
    if (j.contains("latency_scale")) c.latency_scale = j.at("latency_scale").get<double>();
    if (j.contains("iou_threshold")) c.iou_threshold = j.at("iou_threshold").get<double>();
    if (j.contains("forest")) {
        const auto& jf = j.at("forest");
        if (jf.contains("regression")) c.forest_regression = hyperparams_from_json(jf.at("regression"), c.forest_regression);
        if (jf.contains("classification_joint"))
            c.forest_cls_joint = hyperparams_from_json(jf.at("classification_joint"), c.forest_cls_joint);
        if (jf.contains("classification_independent"))
            c.forest_cls_indep = hyperparams_from_json(jf.at("classification_independent"), c.forest_cls_indep);
    }
    if (j.contains("eval_modes")) c.eval_modes = j.at("eval_modes").get<std::vector<std::string>>();
    if (j.contains("kmeans_k")) c.kmeans_k = j.at("kmeans_k").get<int>();
    if (j.contains("kmeans_restarts")) c.kmeans_restarts = j.at("kmeans_restarts").get<int>();
    if (j.contains("pareto_lambdas")) c.pareto_lambdas = j.at("pareto_lambdas").get<std::vector<double>>();
    if (j.contains("jobs")) c.jobs = j.at("jobs").get<int>();
    if (j.contains("variant")) c.variant = j.at("variant").get<std::string>();
    if (j.contains("one_sided_clip")) c.one_sided_clip = j.at("one_sided_clip").get<bool>();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    nlohmann::json j;
    in >> j;
    return experiment_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Small file helpers

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
}

inline std::string hash_file_hex(const fs::path& path) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a64(read_file(path)));
    return buf;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Resolved config + input hashes written alongside every command's outputs.
inline void write_resolved_config(const fs::path& out_dir, const ExperimentConfig& cfg,
                                  const std::vector<fs::path>& inputs) {
    nlohmann::json j;
    j["config"] = experiment_config_to_json(cfg);
    nlohmann::json hashes = nlohmann::json::object();
    for (const auto& p : inputs)
        if (fs::exists(p)) hashes[p.string()] = hash_file_hex(p);
    j["input_hashes"] = std::move(hashes);
    write_file(out_dir / "resolved_config.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Corpus generation and on-disk layout: scenarios/<id>.json + manifest.json

inline Corpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed) {
    if (spec.entries.empty()) throw ValidationError("corpus spec has no entries");
    int total = 0;
    for (const auto& e : spec.entries) total += e.count;
    if (total <= 0) throw ValidationError("corpus spec generates zero scenarios");
    Corpus corpus;
    for (const auto& entry : spec.entries) {
        Archetype a = parse_archetype(entry.archetype);
        int assigned_test = 0;
        for (int i = 0; i < entry.count; ++i) {
            ScenarioSpec ss;
            char idbuf[96];
            std::snprintf(idbuf, sizeof(idbuf), "%s-%03d", entry.archetype.c_str(), i);
            ss.id = idbuf;
            ss.archetype = a;
            ss.duration = spec.duration;
            ss.frame_rate = spec.frame_rate;
            ss.image_w = spec.image_w;
            ss.image_h = spec.image_h;
            ss.min_objects = spec.min_objects;
            ss.max_objects = spec.max_objects;
            CorpusScenario cs;
            cs.scenario = generate_scenario(ss, seed);
            cs.archetype = entry.archetype;
            // evenly interleaved split with exact per-archetype proportions
            int want = static_cast<int>(std::floor((i + 1) * spec.test_fraction));
            cs.split = want > assigned_test ? Split::test : Split::train;
            if (cs.split == Split::test) ++assigned_test;
            corpus.push_back(std::move(cs));
        }
    }
    return corpus;
}

inline void save_corpus(const Corpus& corpus, const fs::path& dir, std::uint64_t seed, bool force) {
    if (fs::exists(dir / "manifest.json") && !force)
        throw IoError("corpus already exists at " + dir.string() + " (use --force to overwrite)");
    fs::create_directories(dir / "scenarios");
    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    manifest["seed"] = seed;
    nlohmann::json list = nlohmann::json::array();
    for (const auto& cs : corpus) {
        std::string file = "scenarios/" + cs.scenario.id + ".json";
        write_file(dir / file, to_json(cs.scenario).dump(2) + "\n");
        list.push_back({{"id", cs.scenario.id},
                        {"file", file},
                        {"split", cs.split == Split::test ? "test" : "train"},
                        {"archetype", cs.archetype}});
    }
    manifest["scenarios"] = std::move(list);
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline Corpus load_corpus(const fs::path& dir) {
    nlohmann::json manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
    Corpus corpus;
    for (const auto& je : manifest.at("scenarios")) {
        CorpusScenario cs;
        cs.scenario = scenario_from_json(nlohmann::json::parse(read_file(dir / je.at("file").get<std::string>())));
        cs.split = je.at("split").get<std::string>() == "test" ? Split::test : Split::train;
        cs.archetype = je.at("archetype").get<std::string>();
        corpus.push_back(std::move(cs));
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// Dataset persistence: records.jsonl (exact published schema) + manifest +
// feature CSVs.

inline nlohmann::json record_to_json(const SegmentRecord& r) {
    return {{"scenario", r.scenario}, {"tau", r.tau},     {"config_index", r.config_index},
            {"mota", r.mota},         {"smota", r.smota}, {"d", r.d},
            {"fp", r.fp},             {"fn", r.fn},       {"idsw", r.idsw},
            {"s_fp", r.s_fp},         {"s_fn", r.s_fn},   {"s_idsw", r.s_idsw},
            {"motp", r.motp},         {"s_motp", r.smotp}, {"defined", r.defined}};
}

inline SegmentRecord record_from_json(const nlohmann::json& j) {
    SegmentRecord r;
    r.scenario = j.at("scenario").get<std::string>();
    r.tau = j.at("tau").get<int>();
    r.config_index = j.at("config_index").get<int>();
    r.mota = j.at("mota").get<double>();
    r.smota = j.at("smota").get<double>();
    r.d = j.at("d").get<double>();
    r.fp = j.at("fp").get<long long>();
    r.fn = j.at("fn").get<long long>();
    r.idsw = j.at("idsw").get<long long>();
    r.s_fp = j.at("s_fp").get<long long>();
    r.s_fn = j.at("s_fn").get<long long>();
    r.s_idsw = j.at("s_idsw").get<long long>();
    r.motp = j.at("motp").get<double>();
    r.smotp = j.at("s_motp").get<double>();
    r.defined = j.at("defined").get<bool>();
    return r;
}

inline void write_features_csv(const fs::path& path,
                               const std::map<SegmentKey, std::vector<double>>& features,
                               const std::vector<std::string>& scenario_order) {
    std::ostringstream out;
    out << "scenario,tau";
    for (const auto& name : feature_names()) out << "," << name;
    out << "\n";
    for (const auto& sid : scenario_order) {
        for (const auto& [key, vec] : features) {
            if (key.first != sid) continue;
            out << key.first << "," << key.second;
            for (double v : vec) out << "," << format_double(v);
            out << "\n";
        }
    }
    write_file(path, out.str());
}

inline std::map<SegmentKey, std::vector<double>> read_features_csv(const fs::path& path) {
    std::map<SegmentKey, std::vector<double>> out;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 2 + static_cast<std::size_t>(kFeatureCount))
            throw IoError("feature CSV row width mismatch in " + path.string());
        SegmentKey key{cells[0], std::stoi(cells[1])};
        std::vector<double> vec(kFeatureCount);
        for (int i = 0; i < kFeatureCount; ++i) vec[i] = std::strtod(cells[2 + i].c_str(), nullptr);
        out[key] = std::move(vec);
    }
    return out;
}

inline void save_dataset(const OctopusDataset& ds, const fs::path& dir) {
    fs::create_directories(dir);
    std::ostringstream records;
    for (const auto& r : ds.records) records << record_to_json(r).dump() << "\n";
    write_file(dir / "records.jsonl", records.str());
    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    manifest["grid"] = grid_kind_name(ds.grid_kind);
    manifest["grid_size"] = ds.grid_size();
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& c : ds.grid) grid.push_back(config_to_json(c));
    manifest["grid_configs"] = std::move(grid);
    manifest["seed"] = ds.seed;
    manifest["delta_tau"] = ds.delta_tau;
    manifest["latency_scale"] = ds.latency_scale;
    manifest["iou_threshold"] = ds.iou_threshold;
    manifest["profile_hash"] = ds.profile_hash;
    manifest["h_global"] = ds.h_global;
    manifest["feature_layout_version"] = kFeatureLayoutVersion;
    nlohmann::json scen = nlohmann::json::array();
    for (const auto& sid : ds.scenario_order)
        scen.push_back({{"id", sid},
                        {"split", ds.split.at(sid) == Split::test ? "test" : "train"},
                        {"segments", ds.segment_count.at(sid)}});
    manifest["scenarios"] = std::move(scen);
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    if (!ds.features_train.empty()) write_features_csv(dir / "features_train.csv", ds.features_train, ds.scenario_order);
    if (!ds.features_gt.empty()) write_features_csv(dir / "features_gt.csv", ds.features_gt, ds.scenario_order);
}

inline OctopusDataset load_dataset(const fs::path& dir) {
    nlohmann::json manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
    OctopusDataset ds;
    ds.grid_kind = parse_grid_kind(manifest.at("grid").get<std::string>());
    ds.grid = make_grid(ds.grid_kind);
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    ds.delta_tau = manifest.at("delta_tau").get<double>();
    ds.latency_scale = manifest.at("latency_scale").get<double>();
    ds.iou_threshold = manifest.at("iou_threshold").get<double>();
    if (manifest.contains("profile_hash")) ds.profile_hash = manifest.at("profile_hash").get<std::string>();
    ds.h_global = manifest.at("h_global").get<int>();
    if (manifest.at("feature_layout_version").get<int>() != kFeatureLayoutVersion)
        throw IoError("dataset feature layout version mismatch");
    for (const auto& js : manifest.at("scenarios")) {
        std::string sid = js.at("id").get<std::string>();
        ds.scenario_order.push_back(sid);
        ds.split[sid] = js.at("split").get<std::string>() == "test" ? Split::test : Split::train;
        ds.segment_count[sid] = js.at("segments").get<int>();
    }
    std::istringstream in(read_file(dir / "records.jsonl"));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ds.records.push_back(record_from_json(nlohmann::json::parse(line)));
    }
    ds.rebuild_index();
    // a segment counts as defined only when every config's record is defined
    std::map<SegmentKey, bool> defined;
    for (const auto& r : ds.records) {
        SegmentKey k{r.scenario, r.tau};
        auto it = defined.find(k);
        if (it == defined.end())
            defined[k] = r.defined;
        else
            it->second = it->second && r.defined;
    }
    ds.segment_defined = std::move(defined);
    if (fs::exists(dir / "features_train.csv")) ds.features_train = read_features_csv(dir / "features_train.csv");
    if (fs::exists(dir / "features_gt.csv")) ds.features_gt = read_features_csv(dir / "features_gt.csv");
    return ds;
}

// ---------------------------------------------------------------------------
// Feature attachment (global-best provenance for training, GT for eval)

inline void attach_features(OctopusDataset& ds, const Corpus& corpus, const ProfileSet& profiles, int jobs = 1) {
    ds.h_global = global_best(ds);
    std::vector<std::map<SegmentKey, std::vector<double>>> gt_slots(corpus.size()), train_slots(corpus.size());
    parallel_for(corpus.size(), jobs, [&](std::size_t si) {
        const Scenario& sc = corpus[si].scenario;
        FrameSequence fseq = make_frame_sequence(sc);
        auto segments = slice_segments(sc, ds.delta_tau);
        TrackView gt_view = track_view_from_gt(fseq);
        Rng rng(derive_seed(ds.seed, sc.id, static_cast<std::uint64_t>(ds.h_global)));
        auto outputs = run_pipeline(fseq, ds.grid[ds.h_global], profiles, ds.latency_scale, rng);
        TrackView out_view = track_view_from_outputs(outputs, fseq.frame_count());
        for (const auto& seg : segments) {
            SegmentKey key{sc.id, seg.tau};
            gt_slots[si][key] = extract_features(gt_view, seg.start_frame, seg.end_frame, fseq.ego, fseq.time_of_day);
            train_slots[si][key] =
                extract_features(out_view, seg.start_frame, seg.end_frame, fseq.ego, fseq.time_of_day);
        }
    });
    for (std::size_t si = 0; si < corpus.size(); ++si) {
        for (auto& [k, v] : gt_slots[si]) ds.features_gt[k] = std::move(v);
        for (auto& [k, v] : train_slots[si]) ds.features_train[k] = std::move(v);
    }
}

// ---------------------------------------------------------------------------
// Sweep with per-(scenario, config) resume parts

inline std::vector<SegmentRecord> sweep_task(const CorpusScenario& cs, const std::vector<PipelineConfig>& grid,
                                             int config_index, const ProfileSet& profiles, double delta_tau,
                                             double latency_scale, std::uint64_t seed, double iou_threshold) {
    FrameSequence fseq = make_frame_sequence(cs.scenario);
    auto segments = slice_segments(cs.scenario, delta_tau);
    Rng rng(derive_seed(seed, cs.scenario.id, static_cast<std::uint64_t>(config_index)));
    auto outputs = run_pipeline(fseq, grid[config_index], profiles, latency_scale, rng);
    auto scores = score_segments(segments, outputs, fseq, iou_threshold);
    std::vector<SegmentRecord> recs;
    recs.reserve(scores.size());
    for (const auto& sc : scores) recs.push_back(make_record(cs.scenario.id, config_index, sc));
    return recs;
}

// Dataset build that persists one part file per (scenario, config) and skips
// parts that already exist, so an interrupted sweep resumes cheaply.
inline OctopusDataset sweep_with_resume(const Corpus& corpus, GridKind grid_kind, const ProfileSet& profiles,
                                        double delta_tau, double latency_scale, std::uint64_t seed,
                                        double iou_threshold, int jobs, const fs::path& parts_dir) {
    if (corpus.empty()) throw ValidationError("corpus is empty");
    fs::create_directories(parts_dir);
    OctopusDataset ds;
    ds.grid_kind = grid_kind;
    ds.grid = make_grid(grid_kind);
    ds.seed = seed;
    ds.delta_tau = delta_tau;
    ds.latency_scale = latency_scale;
    ds.iou_threshold = iou_threshold;
    for (const auto& cs : corpus) {
        auto segments = slice_segments(cs.scenario, delta_tau);
        if (segments.empty()) throw ValidationError("scenario '" + cs.scenario.id + "' yields zero segments");
        ds.scenario_order.push_back(cs.scenario.id);
        ds.split[cs.scenario.id] = cs.split;
        ds.segment_count[cs.scenario.id] = static_cast<int>(segments.size());
    }
    const int n_cfg = ds.grid_size();
    std::vector<std::vector<SegmentRecord>> slots(corpus.size() * n_cfg);
    parallel_for(slots.size(), jobs, [&](std::size_t task) {
        std::size_t si = task / n_cfg;
        int ci = static_cast<int>(task % n_cfg);
        char name[160];
        std::snprintf(name, sizeof(name), "%s__cfg%03d.jsonl", corpus[si].scenario.id.c_str(), ci);
        fs::path part = parts_dir / name;
        if (fs::exists(part)) {
            std::istringstream in(read_file(part));
            std::string line;
            std::vector<SegmentRecord> recs;
            while (std::getline(in, line))
                if (!line.empty()) recs.push_back(record_from_json(nlohmann::json::parse(line)));
            if (static_cast<int>(recs.size()) == ds.segment_count.at(corpus[si].scenario.id)) {
                log(LogLevel::debug, "sweep: reusing part %s", name);
                slots[task] = std::move(recs);
                return;
            }
        }
        auto recs = sweep_task(corpus[si], ds.grid, ci, profiles, delta_tau, latency_scale, seed, iou_threshold);
        std::ostringstream out;
        for (const auto& r : recs) out << record_to_json(r).dump() << "\n";
        write_file(part, out.str());
        slots[task] = std::move(recs);
    });
    for (std::size_t si = 0; si < corpus.size(); ++si) {
        const std::string& sid = corpus[si].scenario.id;
        int n_tau = ds.segment_count.at(sid);
        for (int tau = 0; tau < n_tau; ++tau) {
            bool all_defined = true;
            for (int ci = 0; ci < n_cfg; ++ci) {
                const SegmentRecord& r = slots[si * n_cfg + ci][tau];
                ds.records.push_back(r);
                all_defined = all_defined && r.defined;
            }
            ds.segment_defined[SegmentKey{sid, tau}] = all_defined;
        }
    }
    ds.rebuild_index();
    return ds;
}

// ---------------------------------------------------------------------------
// Report writers

inline void write_eval_report_csv(const fs::path& path, const std::vector<EvalReportRow>& rows) {
    std::ostringstream out;
    out << "method,s_mota,s_motp,s_fp,s_fn,s_idsw\n";
    for (const auto& r : rows)
        out << r.method << "," << format_double(r.s_mota) << "," << format_double(r.s_motp) << "," << r.s_fp << ","
            << r.s_fn << "," << r.s_idsw << "\n";
    write_file(path, out.str());
}

inline void write_decisions_jsonl(const fs::path& path, const std::vector<Decision>& decisions) {
    std::ostringstream out;
    for (const auto& d : decisions) {
        nlohmann::json j{{"scenario", d.segment.first},
                         {"tau", d.segment.second},
                         {"chosen_config", d.chosen},
                         {"rhat", d.rhat},
                         {"imputed", d.imputed}};
        if (d.feature_source_config >= 0) j["feature_source_config"] = d.feature_source_config;
        out << j.dump() << "\n";
    }
    write_file(path, out.str());
}

inline void write_opportunity_gap_csv(const fs::path& path, const OpportunityGapReport& rep) {
    std::ostringstream out;
    out << "block,method,acc_mean,prec_mean,fp,fn,idsw\n";
    for (const auto& r : rep.offline_rows)
        out << "offline," << r.method << "," << format_double(r.acc_mean) << "," << format_double(r.prec_mean) << ","
            << r.fp << "," << r.fn << "," << r.idsw << "\n";
    for (const auto& r : rep.streaming_rows)
        out << "streaming," << r.method << "," << format_double(r.acc_mean) << "," << format_double(r.prec_mean)
            << "," << r.fp << "," << r.fn << "," << r.idsw << "\n";
    out << "gap,streaming," << format_double(rep.gap) << ",,,,\n";
    out << "gap,offline," << format_double(rep.mota_gap) << ",,,,\n";
    write_file(path, out.str());
}

inline void write_hybrid_table_csv(const fs::path& path, const HybridPolicyTable& t) {
    std::ostringstream out;
    out << ",dD_true,dD_mean\n";
    out << "dS_true," << format_double(t.true_s_true_d) << "," << format_double(t.true_s_mean_d) << "\n";
    out << "dS_mean," << format_double(t.mean_s_true_d) << "," << format_double(t.mean_s_mean_d) << "\n";
    write_file(path, out.str());
}

inline void write_score_space_csv(const fs::path& path, const ScoreSpaceMatrix& m) {
    std::ostringstream out;
    out << "scenario,tau,flagged";
    for (const auto& n : m.column_names()) out << "," << n;
    out << "\n";
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        out << m.keys[i].first << "," << m.keys[i].second << "," << static_cast<int>(m.flagged[i]);
        for (double v : m.rows[i]) out << "," << format_double(v);
        out << "\n";
    }
    write_file(path, out.str());
}

inline void write_heatmap_csv(const fs::path& path, const ActionHeatmap& hm) {
    std::ostringstream out;
    out << "model";
    for (int age : max_age_values()) out << ",age_" << age;
    out << "\n";
    for (int m = 0; m < kNumModels; ++m) {
        out << model_name(static_cast<Model>(m));
        for (std::size_t c = 0; c < max_age_values().size(); ++c) out << "," << format_double(hm.freq[m][c]);
        out << "\n";
    }
    write_file(path, out.str());
}

inline void write_pareto_csv(const fs::path& path, const std::vector<ParetoPoint>& curve) {
    std::ostringstream out;
    out << "lambda,mean_smota,mean_smotp\n";
    for (const auto& p : curve)
        out << format_double(p.lambda) << "," << format_double(p.mean_smota) << "," << format_double(p.mean_smotp)
            << "\n";
    write_file(path, out.str());
}

inline void write_contribution_csv(const fs::path& path, const std::vector<ContributionRow>& rows) {
    std::ostringstream out;
    out << "dynamic_metaparameters,s_mota,score_increase\n";
    for (const auto& r : rows) out << r.label << "," << format_double(r.score) << "," << format_double(r.increase) << "\n";
    write_file(path, out.str());
}

// Raw per-index importances plus aggregations by feature family and by bin.
inline void write_importance_csv(const fs::path& path, const std::vector<double>& importances) {
    const auto names = feature_names();
    std::ostringstream out;
    out << "kind,name,importance\n";
    std::vector<std::pair<std::string, double>> config_block = {{"config_model_onehot", 0.0},
                                                                {"config_numeric", 0.0}};
    for (int i = 0; i < kConfigEncodingWidth && i < static_cast<int>(importances.size()); ++i)
        (i < kNumModels ? config_block[0].second : config_block[1].second) += importances[i];
    for (const auto& [name, v] : config_block) out << "config," << name << "," << format_double(v) << "\n";
    std::map<std::string, double> family, bins;
    for (std::size_t i = kConfigEncodingWidth; i < importances.size(); ++i) {
        std::size_t fi = i - kConfigEncodingWidth;
        if (fi >= names.size()) break;
        const std::string& n = names[fi];
        out << "feature," << n << "," << format_double(importances[i]) << "\n";
        auto underscore = n.find('_');
        std::string bin = n.substr(0, underscore);
        std::string rest = underscore == std::string::npos ? n : n.substr(underscore + 1);
        if (bin.rfind("bin", 0) == 0 || bin == "all") {
            if (rest.rfind("speed", 0) == 0) family["bbox_speed"] += importances[i];
            else if (rest.rfind("self_iou", 0) == 0) family["bbox_self_iou"] += importances[i];
            else if (rest.rfind("count", 0) == 0) family["bbox_count"] += importances[i];
            bins[bin] += importances[i];
        } else if (n.rfind("mask_", 0) == 0) {
            family["mask"] += importances[i];
            bins[n.substr(5)] += importances[i];
        } else if (n.rfind("num_objects", 0) == 0) family["num_objects"] += importances[i];
        else if (n.rfind("longevity", 0) == 0) family["longevity"] += importances[i];
        else if (n.rfind("ego_speed", 0) == 0) family["ego_speed"] += importances[i];
        else if (n.rfind("ego_turn", 0) == 0) family["ego_turn"] += importances[i];
        else if (n == "time_of_day") family["time_of_day"] += importances[i];
    }
    for (const auto& [name, v] : family) out << "family," << name << "," << format_double(v) << "\n";
    for (const auto& [name, v] : bins) out << "bin," << name << "," << format_double(v) << "\n";
    write_file(path, out.str());
}

inline void write_single_knob_csv(const fs::path& path, const std::vector<SingleKnobRow>& rows) {
    std::ostringstream out;
    out << "metaparameter,s_mota\n";
    for (const auto& r : rows) out << r.label << "," << format_double(r.score) << "\n";
    write_file(path, out.str());
}

}  // namespace streamperf
