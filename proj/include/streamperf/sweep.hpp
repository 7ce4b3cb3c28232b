#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "streamperf/scenegen.hpp"
#include "streamperf/streameval.hpp"

namespace streamperf {

enum class Split { train, test };

struct CorpusScenario {
    Scenario scenario;
    Split split = Split::train;
    std::string archetype;
};

using Corpus = std::vector<CorpusScenario>;

struct SegmentRecord {
    std::string scenario;
    int tau = 0;
    int config_index = 0;
    double mota = 0.0;
    double smota = 0.0;
    double d = 0.0;
    double motp = 0.0;
    double smotp = 0.0;
    long long fp = 0, fn = 0, idsw = 0;
    long long s_fp = 0, s_fn = 0, s_idsw = 0;
    bool defined = false;
};

using SegmentKey = std::pair<std::string, int>;  // (scenario id, tau)

struct OctopusDataset {
    GridKind grid_kind = GridKind::defaults;
    std::vector<PipelineConfig> grid;
    std::vector<std::string> scenario_order;
    std::map<std::string, Split> split;
    std::map<std::string, int> segment_count;  // per scenario
    std::vector<SegmentRecord> records;        // (scenario, tau, config) in canonical order
    std::map<SegmentKey, bool> segment_defined;

    std::uint64_t seed = 0;
    double delta_tau = 1.0;
    double latency_scale = 1.0;
    double iou_threshold = 0.4;
    std::string profile_hash;  // content hash of the detector profile file

    // features per provenance mode (fixed featext layout)
    std::map<SegmentKey, std::vector<double>> features_train;  // global-best outputs, same segment
    std::map<SegmentKey, std::vector<double>> features_gt;     // GT tracks, same segment
    int h_global = -1;

    int grid_size() const { return static_cast<int>(grid.size()); }

    const SegmentRecord& at(const std::string& scenario, int tau, int config_index) const {
        auto it = record_index.find(std::make_tuple(scenario, tau, config_index));
        if (it == record_index.end())
            throw ValidationError("no record for (" + scenario + ", " + std::to_string(tau) + ", cfg " +
                                  std::to_string(config_index) + ")");
        return records[it->second];
    }

    bool is_defined(const SegmentKey& k) const {
        auto it = segment_defined.find(k);
        return it != segment_defined.end() && it->second;
    }

    // Defined segments in canonical (corpus, tau) order, optionally filtered
    // by split. All means are accumulated in this order so that independent
    // recomputations agree bitwise.
    std::vector<SegmentKey> defined_segments(std::optional<Split> filter = std::nullopt) const {
        std::vector<SegmentKey> keys;
        for (const auto& sid : scenario_order) {
            if (filter && split.at(sid) != *filter) continue;
            int n = segment_count.at(sid);
            for (int tau = 0; tau < n; ++tau) {
                SegmentKey k{sid, tau};
                if (is_defined(k)) keys.push_back(std::move(k));
            }
        }
        return keys;
    }

    void rebuild_index() {
        record_index.clear();
        for (std::size_t i = 0; i < records.size(); ++i)
            record_index[std::make_tuple(records[i].scenario, records[i].tau, records[i].config_index)] = i;
    }

private:
    std::map<std::tuple<std::string, int, int>, std::size_t> record_index;
};

inline SegmentRecord make_record(const std::string& scenario_id, int config_index, const SegmentScore& sc) {
    SegmentRecord r;
    r.scenario = scenario_id;
    r.tau = sc.segment.tau;
    r.config_index = config_index;
    r.mota = sc.offline.mota();
    r.smota = sc.streaming.mota();
    r.d = sc.d;
    r.motp = sc.offline.motp();
    r.smotp = sc.streaming.motp();
    r.fp = sc.offline.fp;
    r.fn = sc.offline.fn;
    r.idsw = sc.offline.idsw;
    r.s_fp = sc.streaming.fp;
    r.s_fn = sc.streaming.fn;
    r.s_idsw = sc.streaming.idsw;
    r.defined = sc.defined;
    return r;
}

// Runs every (scenario, config) pipeline once and records per-segment scores.
// Deterministic for a fixed seed: each task draws from a stream derived from
// (seed, scenario id, config index), so execution order cannot matter.
inline OctopusDataset build_dataset(const Corpus& corpus, GridKind grid_kind, const ProfileSet& profiles,
                                    double delta_tau, double latency_scale, std::uint64_t seed,
                                    double iou_threshold = 0.4, int jobs = 1) {
    if (corpus.empty()) throw ValidationError("corpus is empty");
    OctopusDataset ds;
    ds.grid_kind = grid_kind;
    ds.grid = make_grid(grid_kind);
    ds.seed = seed;
    ds.delta_tau = delta_tau;
    ds.latency_scale = latency_scale;
    ds.iou_threshold = iou_threshold;

    std::vector<FrameSequence> sequences(corpus.size());
    std::vector<std::vector<Segment>> segments(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const Scenario& s = corpus[i].scenario;
        segments[i] = slice_segments(s, delta_tau);
        if (segments[i].empty()) throw ValidationError("scenario '" + s.id + "' yields zero segments");
        sequences[i] = make_frame_sequence(s);
        ds.scenario_order.push_back(s.id);
        ds.split[s.id] = corpus[i].split;
        ds.segment_count[s.id] = static_cast<int>(segments[i].size());
    }

    const int n_cfg = ds.grid_size();
    std::vector<std::vector<SegmentRecord>> slots(corpus.size() * n_cfg);
    parallel_for(slots.size(), jobs, [&](std::size_t task) {
        std::size_t si = task / n_cfg;
        int ci = static_cast<int>(task % n_cfg);
        Rng rng(derive_seed(seed, corpus[si].scenario.id, static_cast<std::uint64_t>(ci)));
        auto outputs = run_pipeline(sequences[si], ds.grid[ci], profiles, latency_scale, rng);
        auto scores = score_segments(segments[si], outputs, sequences[si], iou_threshold);
        std::vector<SegmentRecord> recs;
        recs.reserve(scores.size());
        for (const auto& sc : scores) recs.push_back(make_record(corpus[si].scenario.id, ci, sc));
        slots[task] = std::move(recs);
    });

    // merge in canonical (scenario, tau, config) order; a segment counts as
    // defined only when every config's record is defined
    for (std::size_t si = 0; si < corpus.size(); ++si) {
        const std::string& sid = corpus[si].scenario.id;
        int n_tau = static_cast<int>(segments[si].size());
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
// Policies over the dataset

inline double mean_over(const OctopusDataset& ds, const std::vector<SegmentKey>& keys,
                        const std::function<double(const SegmentKey&)>& value) {
    if (keys.empty()) throw ValidationError("mean over empty segment set");
    double acc = 0.0;
    for (const auto& k : keys) acc += value(k);
    return acc / static_cast<double>(keys.size());
}

// Grid enumeration order coincides with the tie-break order (lower latency,
// then lower max_age, then the extended knobs), so an ascending strict-argmax
// scan implements the tie rule.
inline int argmax_config(const OctopusDataset& ds, const std::function<double(int)>& score,
                         const std::vector<int>* allowed = nullptr) {
    int best = -1;
    double best_score = 0.0;
    auto consider = [&](int ci) {
        double v = score(ci);
        if (best < 0 || v > best_score) {
            best = ci;
            best_score = v;
        }
    };
    if (allowed) {
        for (int ci : *allowed) consider(ci);
    } else {
        for (int ci = 0; ci < ds.grid_size(); ++ci) consider(ci);
    }
    if (best < 0) throw ValidationError("argmax over empty config set");
    return best;
}

// Configuration with the highest mean S-MOTA over defined train segments.
inline int global_best(const OctopusDataset& ds, Split split = Split::train) {
    auto keys = ds.defined_segments(split);
    if (keys.empty()) throw ValidationError("global_best: no defined segments in split");
    return argmax_config(ds, [&](int ci) {
        return mean_over(ds, keys, [&](const SegmentKey& k) { return ds.at(k.first, k.second, ci).smota; });
    });
}

// Per-segment S-MOTA argmax (h*_tau) over all defined segments.
inline std::map<SegmentKey, int> optimal_per_segment(const OctopusDataset& ds) {
    std::map<SegmentKey, int> out;
    for (const auto& k : ds.defined_segments())
        out[k] = argmax_config(ds, [&](int ci) { return ds.at(k.first, k.second, ci).smota; });
    return out;
}

struct GapRow {
    std::string method;  // "global_best" | "optimal"
    double acc_mean = 0.0;
    double prec_mean = 0.0;
    long long fp = 0, fn = 0, idsw = 0;
};

struct OpportunityGapReport {
    double s_global_test = 0.0;
    double s_star_test = 0.0;
    double gap = 0.0;  // streaming opportunity gap, >= 0
    double mota_global_test = 0.0;
    double mota_star_test = 0.0;
    double mota_gap = 0.0;
    std::vector<GapRow> offline_rows;
    std::vector<GapRow> streaming_rows;
};

// Test-split gap between the optimal dynamic policy and the global best, for
// streaming scores and their offline companions.
inline OpportunityGapReport opportunity_gap(const OctopusDataset& ds) {
    auto test_keys = ds.defined_segments(Split::test);
    if (test_keys.empty()) throw ValidationError("opportunity_gap: empty test split");
    int h_g = global_best(ds);
    int h_g_mota = argmax_config(ds, [&](int ci) {
        return mean_over(ds, ds.defined_segments(Split::train),
                         [&](const SegmentKey& k) { return ds.at(k.first, k.second, ci).mota; });
    });

    auto sum_counts = [&](const std::function<const SegmentRecord&(const SegmentKey&)>& rec, bool streaming) {
        GapRow row;
        double acc = 0.0, prec = 0.0;
        for (const auto& k : test_keys) {
            const SegmentRecord& r = rec(k);
            acc += streaming ? r.smota : r.mota;
            prec += streaming ? r.smotp : r.motp;
            row.fp += streaming ? r.s_fp : r.fp;
            row.fn += streaming ? r.s_fn : r.fn;
            row.idsw += streaming ? r.s_idsw : r.idsw;
        }
        row.acc_mean = acc / static_cast<double>(test_keys.size());
        row.prec_mean = prec / static_cast<double>(test_keys.size());
        return row;
    };

    OpportunityGapReport rep;
    auto global_rec = [&](const SegmentKey& k) -> const SegmentRecord& { return ds.at(k.first, k.second, h_g); };
    auto global_mota_rec = [&](const SegmentKey& k) -> const SegmentRecord& {
        return ds.at(k.first, k.second, h_g_mota);
    };
    auto star_smota_rec = [&](const SegmentKey& k) -> const SegmentRecord& {
        int ci = argmax_config(ds, [&](int c) { return ds.at(k.first, k.second, c).smota; });
        return ds.at(k.first, k.second, ci);
    };
    auto star_mota_rec = [&](const SegmentKey& k) -> const SegmentRecord& {
        int ci = argmax_config(ds, [&](int c) { return ds.at(k.first, k.second, c).mota; });
        return ds.at(k.first, k.second, ci);
    };

    GapRow g_off = sum_counts(global_mota_rec, false);
    g_off.method = "global_best";
    GapRow o_off = sum_counts(star_mota_rec, false);
    o_off.method = "optimal";
    GapRow g_str = sum_counts(global_rec, true);
    g_str.method = "global_best";
    GapRow o_str = sum_counts(star_smota_rec, true);
    o_str.method = "optimal";
    rep.offline_rows = {g_off, o_off};
    rep.streaming_rows = {g_str, o_str};
    rep.s_global_test = g_str.acc_mean;
    rep.s_star_test = o_str.acc_mean;
    rep.gap = rep.s_star_test - rep.s_global_test;
    rep.mota_global_test = g_off.acc_mean;
    rep.mota_star_test = o_off.acc_mean;
    rep.mota_gap = rep.mota_star_test - rep.mota_global_test;
    return rep;
}

struct HybridPolicyTable {
    // mean test S-MOTA of the four selectors over (dS, dD) x (true, train-mean)
    double true_s_true_d = 0.0;  // == optimal policy
    double true_s_mean_d = 0.0;
    double mean_s_true_d = 0.0;
    double mean_s_mean_d = 0.0;  // == global best policy
};

// 2x2 selector table: per segment argmax_c of (dS - dD) where each component
// is either the segment's true value or the per-config train mean.
inline HybridPolicyTable hybrid_policy_table(const OctopusDataset& ds) {
    auto train_keys = ds.defined_segments(Split::train);
    auto test_keys = ds.defined_segments(Split::test);
    if (train_keys.empty() || test_keys.empty()) throw ValidationError("hybrid_policy_table: empty split");
    const int n_cfg = ds.grid_size();
    std::vector<double> mean_s(n_cfg), mean_d(n_cfg);
    for (int ci = 0; ci < n_cfg; ++ci) {
        mean_s[ci] = mean_over(ds, train_keys, [&](const SegmentKey& k) { return ds.at(k.first, k.second, ci).mota; });
        mean_d[ci] = mean_over(ds, train_keys, [&](const SegmentKey& k) { return ds.at(k.first, k.second, ci).d; });
    }
    // argmax_c (mean_s_c - mean_s_g) - (mean_d_c - mean_d_g) drops the
    // segment-constant g terms, i.e. it is the global best selection.
    int static_choice = global_best(ds);

    auto eval_selector = [&](const std::function<int(const SegmentKey&)>& select) {
        return mean_over(ds, test_keys,
                         [&](const SegmentKey& k) { return ds.at(k.first, k.second, select(k)).smota; });
    };

    HybridPolicyTable t;
    t.true_s_true_d = eval_selector([&](const SegmentKey& k) {
        return argmax_config(ds, [&](int ci) { return ds.at(k.first, k.second, ci).smota; });
    });
    t.true_s_mean_d = eval_selector([&](const SegmentKey& k) {
        return argmax_config(ds, [&](int ci) { return ds.at(k.first, k.second, ci).mota - mean_d[ci]; });
    });
    t.mean_s_true_d = eval_selector([&](const SegmentKey& k) {
        return argmax_config(ds, [&](int ci) { return mean_s[ci] - ds.at(k.first, k.second, ci).d; });
    });
    t.mean_s_mean_d = eval_selector([&](const SegmentKey&) { return static_choice; });
    return t;
}

struct ContributionRow {
    std::string label;
    double score = 0.0;
    double increase = 0.0;
};

// Table-5-style nesting: optimal-policy score as metaparameters are allowed
// to vary one at a time (others pinned to the global best values).
inline std::vector<ContributionRow> metaparameter_contribution(const OctopusDataset& ds) {
    if (ds.grid_kind != GridKind::extended)
        throw ValidationError("metaparameter_contribution requires the extended-grid dataset");
    auto test_keys = ds.defined_segments(Split::test);
    if (test_keys.empty()) throw ValidationError("metaparameter_contribution: empty test split");
    int h_g = global_best(ds);
    const PipelineConfig& g = ds.grid[h_g];

    // Table 5 nesting order
    const std::vector<std::string> labels = {"none (global best policy)", "+detection model", "+tracking max age",
                                             "+tracking reinit frequency", "+tracking min match iou",
                                             "+detection confidence threshold"};
    auto field_matches = [&](const PipelineConfig& c, int field) {
        switch (field) {
            case 0: return c.model == g.model;
            case 1: return c.max_age == g.max_age;
            case 2: return c.reinit_freq == g.reinit_freq;
            case 3: return c.min_match_iou == g.min_match_iou;
            default: return c.conf_threshold == g.conf_threshold;
        }
    };

    std::vector<ContributionRow> rows;
    double prev = 0.0;
    for (int k = 0; k <= 5; ++k) {
        std::vector<int> allowed;
        for (int ci = 0; ci < ds.grid_size(); ++ci) {
            bool ok = true;
            for (int field = k; field < 5; ++field) ok = ok && field_matches(ds.grid[ci], field);
            if (ok) allowed.push_back(ci);
        }
        double score = mean_over(ds, test_keys, [&](const SegmentKey& key) {
            int ci = argmax_config(
                ds, [&](int c) { return ds.at(key.first, key.second, c).smota; }, &allowed);
            return ds.at(key.first, key.second, ci).smota;
        });
        ContributionRow row;
        row.label = labels[k];
        row.score = score;
        row.increase = k == 0 ? 0.0 : score - prev;
        prev = score;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace streamperf
