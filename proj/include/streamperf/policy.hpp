#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "streamperf/featext.hpp"
#include "streamperf/forest.hpp"
#include "streamperf/sweep.hpp"

namespace streamperf {

enum class PolicyVariant { relative, absolute };

inline const char* policy_variant_name(PolicyVariant v) {
    return v == PolicyVariant::relative ? "relative" : "absolute";
}

// model one-hot + numeric (max_age, conf_threshold, min_match_iou, reinit_freq)
inline constexpr int kConfigEncodingWidth = kNumModels + 4;

inline std::vector<double> encode_config(const PipelineConfig& c) {
    std::vector<double> enc(kConfigEncodingWidth, 0.0);
    enc[static_cast<int>(c.model)] = 1.0;
    enc[kNumModels + 0] = static_cast<double>(c.max_age);
    enc[kNumModels + 1] = c.conf_threshold;
    enc[kNumModels + 2] = c.min_match_iou;
    enc[kNumModels + 3] = static_cast<double>(c.reinit_freq);
    return enc;
}

struct PolicyModel {
    Forest forest;
    PolicyVariant variant = PolicyVariant::relative;
    int h_global = -1;
    double epsilon = 100.0;
    bool one_sided_clip = false;
    GridKind grid_kind = GridKind::defaults;
    std::vector<PipelineConfig> grid;
    int feature_layout_version = kFeatureLayoutVersion;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["schema_version"] = 1;
        j["variant"] = policy_variant_name(variant);
        j["h_global"] = h_global;
        j["epsilon"] = epsilon;
        j["one_sided_clip"] = one_sided_clip;
        j["grid"] = grid_kind_name(grid_kind);
        j["feature_layout_version"] = feature_layout_version;
        j["config_encoding"] = {{"width", kConfigEncodingWidth},
                                {"blocks", {"model_onehot6", "max_age", "conf_threshold", "min_match_iou", "reinit_freq"}}};
        j["forest"] = forest.to_json();
        return j;
    }

    static PolicyModel from_json(const nlohmann::json& j) {
        if (j.at("schema_version").get<int>() != 1) throw IoError("unsupported policy schema version");
        PolicyModel m;
        m.variant = j.at("variant").get<std::string>() == "relative" ? PolicyVariant::relative : PolicyVariant::absolute;
        m.h_global = j.at("h_global").get<int>();
        m.epsilon = j.at("epsilon").get<double>();
        m.one_sided_clip = j.at("one_sided_clip").get<bool>();
        m.grid_kind = parse_grid_kind(j.at("grid").get<std::string>());
        m.grid = make_grid(m.grid_kind);
        m.feature_layout_version = j.at("feature_layout_version").get<int>();
        m.forest = Forest::from_json(j.at("forest"));
        return m;
    }
};

// ---------------------------------------------------------------------------
// Training targets: y = clip(s^h - s^global, epsilon) per Eq. 2, symmetric by
// default; the one-sided flag keeps only the lower bound from the equation's
// prose. The absolute variant (ablation) regresses raw s.

inline double clip_target(double v, double epsilon, bool one_sided) {
    if (one_sided) return std::max(v, -epsilon);
    return std::clamp(v, -epsilon, epsilon);
}

struct TrainingRows {
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    std::vector<std::pair<SegmentKey, int>> keys;  // (segment, config index)
};

inline TrainingRows make_targets(const OctopusDataset& ds, int h_global, double epsilon,
                                 PolicyVariant variant = PolicyVariant::relative, bool one_sided = false) {
    if (epsilon <= 0.0) throw ValidationError("epsilon must be > 0");
    TrainingRows rows;
    auto train_keys = ds.defined_segments(Split::train);
    if (train_keys.empty()) throw ValidationError("make_targets: no defined train segments");
    for (const auto& key : train_keys) {
        auto feat_it = ds.features_train.find(key);
        if (feat_it == ds.features_train.end())
            throw ValidationError("make_targets: missing train features for segment (" + key.first + ", " +
                                  std::to_string(key.second) + ")");
        double s_global = ds.at(key.first, key.second, h_global).smota;
        for (int ci = 0; ci < ds.grid_size(); ++ci) {
            std::vector<double> x = encode_config(ds.grid[ci]);
            x.insert(x.end(), feat_it->second.begin(), feat_it->second.end());
            double s = ds.at(key.first, key.second, ci).smota;
            rows.x.push_back(std::move(x));
            rows.y.push_back(variant == PolicyVariant::relative ? clip_target(s - s_global, epsilon, one_sided) : s);
            rows.keys.emplace_back(key, ci);
        }
    }
    return rows;
}

inline PolicyModel train_policy(const OctopusDataset& ds, const ForestHyperparams& hp,
                                PolicyVariant variant = PolicyVariant::relative, double epsilon = 100.0,
                                bool one_sided = false, int jobs = 1) {
    if (ds.h_global < 0) throw ValidationError("train_policy: dataset has no global best configured");
    PolicyModel m;
    m.variant = variant;
    m.h_global = ds.h_global;
    m.epsilon = epsilon;
    m.one_sided_clip = one_sided;
    m.grid_kind = ds.grid_kind;
    m.grid = ds.grid;
    TrainingRows rows = make_targets(ds, ds.h_global, epsilon, variant, one_sided);
    m.forest = Forest::fit(rows.x, rows.y, hp, ForestTask::regression, jobs);
    return m;
}

// ---------------------------------------------------------------------------
// Ranking

struct Decision {
    SegmentKey segment;
    int chosen = -1;
    std::vector<double> rhat;       // predicted score per grid config
    bool imputed = false;           // first/undefined segment rule
    int feature_source_config = -1;  // closed-loop provenance trace
};

// Predicts r-hat for every grid config and picks the argmax. Ties prefer
// h_global, then the grid tie-break order, so an uninformative model behaves
// like the global best policy.
inline Decision rank(const PolicyModel& m, const std::vector<double>& features) {
    if (static_cast<int>(features.size()) != kFeatureCount || m.feature_layout_version != kFeatureLayoutVersion)
        throw ValidationError("rank: feature layout mismatch");
    Decision d;
    d.rhat.resize(m.grid.size());
    std::vector<double> x;
    for (std::size_t ci = 0; ci < m.grid.size(); ++ci) {
        x = encode_config(m.grid[ci]);
        x.insert(x.end(), features.begin(), features.end());
        d.rhat[ci] = m.forest.predict(x);
    }
    double best = d.rhat[0];
    for (double v : d.rhat) best = std::max(best, v);
    if (m.h_global >= 0 && d.rhat[m.h_global] == best) {
        d.chosen = m.h_global;
    } else {
        for (std::size_t ci = 0; ci < d.rhat.size(); ++ci) {
            if (d.rhat[ci] == best) {
                d.chosen = static_cast<int>(ci);
                break;
            }
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// Evaluation

enum class EvalMode { gt_current, gt_previous, closed_loop };

inline const char* eval_mode_name(EvalMode m) {
    switch (m) {
        case EvalMode::gt_current: return "gt-current";
        case EvalMode::gt_previous: return "gt-previous";
        case EvalMode::closed_loop: return "closed-loop";
    }
    return "?";
}

inline EvalMode parse_eval_mode(const std::string& s) {
    if (s == "gt-current") return EvalMode::gt_current;
    if (s == "gt-previous") return EvalMode::gt_previous;
    if (s == "closed-loop") return EvalMode::closed_loop;
    throw ValidationError("unknown eval mode: '" + s + "'");
}

struct EvalReportRow {
    std::string method;
    double s_mota = 0.0;
    double s_motp = 0.0;
    long long s_fp = 0, s_fn = 0, s_idsw = 0;
    std::vector<Decision> decisions;
};

namespace detail {

// Aggregates over defined test segments given a per-segment selection.
inline EvalReportRow aggregate_selection(const OctopusDataset& ds, const std::string& method,
                                         const std::function<int(const SegmentKey&)>& select) {
    auto keys = ds.defined_segments(Split::test);
    if (keys.empty()) throw ValidationError("evaluate: empty test split");
    EvalReportRow row;
    row.method = method;
    double acc = 0.0, prec = 0.0;
    for (const auto& k : keys) {
        const SegmentRecord& r = ds.at(k.first, k.second, select(k));
        acc += r.smota;
        prec += r.smotp;
        row.s_fp += r.s_fp;
        row.s_fn += r.s_fn;
        row.s_idsw += r.s_idsw;
    }
    row.s_mota = acc / static_cast<double>(keys.size());
    row.s_motp = prec / static_cast<double>(keys.size());
    return row;
}

}  // namespace detail

// Per-scenario output cache for closed-loop feature extraction; reruns are
// bitwise identical to the sweep because rng streams are (seed, id, config).
class ClosedLoopRunner {
public:
    ClosedLoopRunner(const Corpus& corpus, const ProfileSet& profiles, const OctopusDataset& ds)
        : profiles_(profiles), ds_(ds) {
        for (const auto& cs : corpus) scenarios_[cs.scenario.id] = &cs.scenario;
    }

    const TrackView& outputs_view(const std::string& scenario_id, int config_index) {
        auto key = std::make_pair(scenario_id, config_index);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        auto sit = scenarios_.find(scenario_id);
        if (sit == scenarios_.end()) throw ValidationError("closed-loop: scenario '" + scenario_id + "' not in corpus");
        FrameSequence fs = make_frame_sequence(*sit->second);
        Rng rng(derive_seed(ds_.seed, scenario_id, static_cast<std::uint64_t>(config_index)));
        auto outputs = run_pipeline(fs, ds_.grid[config_index], profiles_, ds_.latency_scale, rng);
        TrackView tv = track_view_from_outputs(outputs, fs.frame_count());
        return cache_.emplace(key, std::move(tv)).first->second;
    }

    const Scenario& scenario(const std::string& id) const { return *scenarios_.at(id); }

private:
    const ProfileSet& profiles_;
    const OctopusDataset& ds_;
    std::map<std::string, const Scenario*> scenarios_;
    std::map<std::pair<std::string, int>, TrackView> cache_;
};

// Sequential per-scenario decision chain (Markov over segments). First
// segments in previous-segment modes and undefined segments fall back to
// h_global; undefined segments are excluded from the aggregate.
inline EvalReportRow evaluate_policy(const OctopusDataset& ds, const PolicyModel& model, EvalMode mode,
                                     ClosedLoopRunner* runner = nullptr) {
    if (mode == EvalMode::closed_loop && runner == nullptr)
        throw ValidationError("closed-loop evaluation needs a corpus-backed runner");
    std::vector<Decision> decisions;
    std::map<SegmentKey, int> chosen;
    int seg_len = 0;
    for (const auto& sid : ds.scenario_order) {
        if (ds.split.at(sid) != Split::test) continue;
        int n_tau = ds.segment_count.at(sid);
        int prev_choice = model.h_global;
        for (int tau = 0; tau < n_tau; ++tau) {
            SegmentKey key{sid, tau};
            Decision d;
            d.segment = key;
            // first and undefined segments fall back to the global best in
            // every mode
            bool impute = tau == 0 || !ds.is_defined(key);
            switch (mode) {
                case EvalMode::gt_current: {
                    if (!impute) {
                        auto it = ds.features_gt.find(key);
                        if (it == ds.features_gt.end())
                            throw ValidationError("evaluate: missing GT features for " + sid);
                        d = rank(model, it->second);
                        d.segment = key;
                    }
                    break;
                }
                case EvalMode::gt_previous: {
                    if (!impute) {
                        auto it = ds.features_gt.find(SegmentKey{sid, tau - 1});
                        if (it == ds.features_gt.end())
                            throw ValidationError("evaluate: missing GT features for " + sid);
                        d = rank(model, it->second);
                        d.segment = key;
                    }
                    break;
                }
                case EvalMode::closed_loop: {
                    if (!impute) {
                        const TrackView& tv = runner->outputs_view(sid, prev_choice);
                        const Scenario& sc = runner->scenario(sid);
                        int seg_frames = static_cast<int>(std::lround(ds.delta_tau * sc.frame_rate));
                        seg_len = seg_frames;
                        std::vector<double> feats =
                            extract_features(tv, (tau - 1) * seg_frames, tau * seg_frames, sc.ego, sc.time_of_day);
                        d = rank(model, feats);
                        d.segment = key;
                        d.feature_source_config = prev_choice;
                    }
                    break;
                }
            }
            if (impute) {
                d.chosen = model.h_global;
                d.imputed = true;
            }
            chosen[key] = d.chosen;
            prev_choice = d.chosen;
            decisions.push_back(std::move(d));
        }
    }
    (void)seg_len;
    EvalReportRow row = detail::aggregate_selection(ds, std::string("octopus_") + eval_mode_name(mode),
                                                    [&](const SegmentKey& k) { return chosen.at(k); });
    row.decisions = std::move(decisions);
    return row;
}

// The six Table-2-style rows: static baseline, oracle, stale oracle, and the
// Octopus policy under the three feature provenances.
inline std::vector<EvalReportRow> evaluate_all(const OctopusDataset& ds, const PolicyModel& model,
                                               const std::vector<EvalMode>& modes, ClosedLoopRunner* runner) {
    std::vector<EvalReportRow> rows;
    rows.push_back(detail::aggregate_selection(ds, "global_best", [&](const SegmentKey&) { return ds.h_global; }));
    auto star = optimal_per_segment(ds);
    rows.push_back(detail::aggregate_selection(ds, "optimal", [&](const SegmentKey& k) { return star.at(k); }));
    rows.push_back(detail::aggregate_selection(ds, "optimal_prev", [&](const SegmentKey& k) {
        SegmentKey prev{k.first, k.second - 1};
        auto it = star.find(prev);
        return k.second == 0 || it == star.end() ? ds.h_global : it->second;
    }));
    for (EvalMode mode : modes) rows.push_back(evaluate_policy(ds, model, mode, runner));
    return rows;
}

// ---------------------------------------------------------------------------
// Classification ablations (Appendix-B style)

enum class ClassifyVariant { joint, independent };

struct MetaparameterField {
    std::string name;
    int count = 0;  // number of values in the grid
    std::function<int(const PipelineConfig&)> value_index;
    std::function<void(PipelineConfig&, int)> assign;
};

inline std::vector<MetaparameterField> metaparameter_fields(GridKind kind) {
    std::vector<MetaparameterField> fields;
    fields.push_back({"model", kNumModels, [](const PipelineConfig& c) { return static_cast<int>(c.model); },
                      [](PipelineConfig& c, int v) { c.model = static_cast<Model>(v); }});
    fields.push_back({"max_age", 3,
                      [](const PipelineConfig& c) {
                          const auto& vals = max_age_values();
                          return static_cast<int>(std::find(vals.begin(), vals.end(), c.max_age) - vals.begin());
                      },
                      [](PipelineConfig& c, int v) { c.max_age = max_age_values()[v]; }});
    if (kind == GridKind::extended) {
        fields.push_back({"conf_threshold", 3,
                          [](const PipelineConfig& c) {
                              const auto& vals = conf_threshold_values();
                              return static_cast<int>(std::find(vals.begin(), vals.end(), c.conf_threshold) -
                                                      vals.begin());
                          },
                          [](PipelineConfig& c, int v) { c.conf_threshold = conf_threshold_values()[v]; }});
        fields.push_back({"min_match_iou", 3,
                          [](const PipelineConfig& c) {
                              const auto& vals = min_match_iou_values();
                              return static_cast<int>(std::find(vals.begin(), vals.end(), c.min_match_iou) -
                                                      vals.begin());
                          },
                          [](PipelineConfig& c, int v) { c.min_match_iou = min_match_iou_values()[v]; }});
        fields.push_back({"reinit_freq", 3,
                          [](const PipelineConfig& c) {
                              const auto& vals = reinit_freq_values();
                              return static_cast<int>(std::find(vals.begin(), vals.end(), c.reinit_freq) - vals.begin());
                          },
                          [](PipelineConfig& c, int v) { c.reinit_freq = reinit_freq_values()[v]; }});
    }
    return fields;
}

inline int config_index_in_grid(const std::vector<PipelineConfig>& grid, const PipelineConfig& c) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const PipelineConfig& g = grid[i];
        if (g.model == c.model && g.max_age == c.max_age && g.conf_threshold == c.conf_threshold &&
            g.min_match_iou == c.min_match_iou && g.reinit_freq == c.reinit_freq)
            return static_cast<int>(i);
    }
    throw ValidationError("config not found in grid: " + c.label());
}

struct ClassifyPolicy {
    ClassifyVariant variant = ClassifyVariant::joint;
    bool single_model = false;  // flag: one |grid|-way classifier instead of m per-metaparameter ones
    int h_global = -1;
    GridKind grid_kind = GridKind::defaults;
    std::vector<PipelineConfig> grid;
    std::vector<Forest> per_field;  // or one forest when single_model
};

// Joint: each per-metaparameter classifier predicts that metaparameter's
// value in h*_tau. Independent: labels are per-metaparameter argmaxes with
// the other metaparameters pinned to the global best values.
inline ClassifyPolicy train_classifier(const OctopusDataset& ds, const ForestHyperparams& hp, ClassifyVariant variant,
                                       bool single_model = false, int jobs = 1) {
    if (ds.h_global < 0) throw ValidationError("train_classifier: dataset has no global best configured");
    ClassifyPolicy cp;
    cp.variant = variant;
    cp.single_model = single_model;
    cp.h_global = ds.h_global;
    cp.grid_kind = ds.grid_kind;
    cp.grid = ds.grid;
    auto fields = metaparameter_fields(ds.grid_kind);
    auto train_keys = ds.defined_segments(Split::train);
    if (train_keys.empty()) throw ValidationError("train_classifier: no defined train segments");

    std::vector<std::vector<double>> x;
    x.reserve(train_keys.size());
    for (const auto& key : train_keys) {
        auto it = ds.features_train.find(key);
        if (it == ds.features_train.end())
            throw ValidationError("train_classifier: missing train features for segment (" + key.first + ", " +
                                  std::to_string(key.second) + ")");
        x.push_back(it->second);
    }
    auto star = optimal_per_segment(ds);

    if (single_model) {
        if (variant != ClassifyVariant::joint)
            throw ValidationError("single-model classification only supports the joint variant");
        std::vector<double> y;
        for (const auto& key : train_keys) y.push_back(static_cast<double>(star.at(key)));
        cp.per_field.push_back(Forest::fit(x, y, hp, ForestTask::classification, jobs));
        return cp;
    }

    for (std::size_t fi = 0; fi < fields.size(); ++fi) {
        std::vector<double> y;
        y.reserve(train_keys.size());
        for (const auto& key : train_keys) {
            if (variant == ClassifyVariant::joint) {
                y.push_back(static_cast<double>(fields[fi].value_index(ds.grid[star.at(key)])));
            } else {
                int best_v = 0;
                double best_s = 0.0;
                for (int v = 0; v < fields[fi].count; ++v) {
                    PipelineConfig c = ds.grid[ds.h_global];
                    fields[fi].assign(c, v);
                    double s = ds.at(key.first, key.second, config_index_in_grid(ds.grid, c)).smota;
                    if (v == 0 || s > best_s) {
                        best_s = s;
                        best_v = v;
                    }
                }
                y.push_back(static_cast<double>(best_v));
            }
        }
        ForestHyperparams hp_f = hp;
        hp_f.seed = derive_seed(hp.seed, "field", fi);
        cp.per_field.push_back(Forest::fit(x, y, hp_f, ForestTask::classification, jobs));
    }
    return cp;
}

inline int classify_decide(const ClassifyPolicy& cp, const std::vector<double>& features) {
    if (cp.single_model) return static_cast<int>(cp.per_field[0].predict(features));
    auto fields = metaparameter_fields(cp.grid_kind);
    PipelineConfig c = cp.grid[cp.h_global];
    for (std::size_t fi = 0; fi < fields.size(); ++fi)
        fields[fi].assign(c, static_cast<int>(cp.per_field[fi].predict(features)));
    return config_index_in_grid(cp.grid, c);
}

// gt-current evaluation of a classification policy.
inline EvalReportRow evaluate_classifier(const OctopusDataset& ds, const ClassifyPolicy& cp) {
    std::map<SegmentKey, int> chosen;
    for (const auto& key : ds.defined_segments(Split::test)) {
        auto it = ds.features_gt.find(key);
        if (it == ds.features_gt.end()) throw ValidationError("evaluate_classifier: missing GT features");
        chosen[key] = classify_decide(cp, it->second);
    }
    std::string name = cp.variant == ClassifyVariant::joint ? "classification_joint" : "classification_independent";
    return detail::aggregate_selection(ds, name, [&](const SegmentKey& k) { return chosen.at(k); });
}

// ---------------------------------------------------------------------------
// Policy inference latency

struct LatencyStats {
    double p50_ms = 0.0;
    double p99_ms = 0.0;
    double mean_ms = 0.0;
    int trials = 0;
};

inline LatencyStats benchmark_inference(const PolicyModel& model, int trials = 1000, std::uint64_t seed = 12345) {
    if (trials < 10) throw ValidationError("benchmark_inference: need at least 10 trials");
    Rng rng(seed);
    std::vector<std::vector<double>> pool;
    for (int i = 0; i < 16; ++i) {
        std::vector<double> f(kFeatureCount);
        for (double& v : f) v = rng.uniform(0.0, 20.0);
        pool.push_back(std::move(f));
    }
    volatile double sink = 0.0;
    // warmup
    for (int i = 0; i < 20; ++i) sink += rank(model, pool[i % pool.size()]).rhat[0];
    std::vector<double> times_ms;
    times_ms.reserve(trials);
    for (int i = 0; i < trials; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        Decision d = rank(model, pool[i % pool.size()]);
        auto t1 = std::chrono::steady_clock::now();
        sink += d.rhat[0];
        times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    (void)sink;
    std::sort(times_ms.begin(), times_ms.end());
    LatencyStats st;
    st.trials = trials;
    st.p50_ms = times_ms[static_cast<std::size_t>(0.50 * (trials - 1))];
    st.p99_ms = times_ms[static_cast<std::size_t>(0.99 * (trials - 1))];
    double acc = 0.0;
    for (double t : times_ms) acc += t;
    st.mean_ms = acc / trials;
    return st;
}

}  // namespace streamperf
