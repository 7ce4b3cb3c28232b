#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "streamperf/policy.hpp"
#include "streamperf/sweep.hpp"

namespace streamperf {

// Per-segment score-space vector: (S_c - S_g) for every config, then
// (D_c - D_g), z-scored per row. Rows with no variance are flagged and left
// un-normalized; clustering skips them.
struct ScoreSpaceMatrix {
    std::vector<SegmentKey> keys;
    std::vector<std::vector<double>> rows;  // width 2 * |grid|
    std::vector<char> flagged;
    int grid_size = 0;

    std::vector<std::string> column_names() const {
        std::vector<std::string> names;
        for (int c = 0; c < grid_size; ++c) names.push_back("dS_c" + std::to_string(c));
        for (int c = 0; c < grid_size; ++c) names.push_back("dD_c" + std::to_string(c));
        return names;
    }
};

inline ScoreSpaceMatrix build_score_space(const OctopusDataset& ds) {
    if (ds.h_global < 0) throw ValidationError("build_score_space: dataset has no global best configured");
    ScoreSpaceMatrix m;
    m.grid_size = ds.grid_size();
    for (const auto& key : ds.defined_segments()) {
        const SegmentRecord& g = ds.at(key.first, key.second, ds.h_global);
        std::vector<double> row;
        row.reserve(2 * ds.grid_size());
        for (int ci = 0; ci < ds.grid_size(); ++ci) row.push_back(ds.at(key.first, key.second, ci).mota - g.mota);
        for (int ci = 0; ci < ds.grid_size(); ++ci) row.push_back(ds.at(key.first, key.second, ci).d - g.d);
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= static_cast<double>(row.size());
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(row.size());
        bool flag = var < 1e-18;
        if (!flag) {
            double sd = std::sqrt(var);
            for (double& v : row) v = (v - mean) / sd;
        }
        m.keys.push_back(key);
        m.rows.push_back(std::move(row));
        m.flagged.push_back(flag ? 1 : 0);
    }
    return m;
}

// ---------------------------------------------------------------------------
// K-means (Lloyd with k-means++ seeding, best of `restarts` by inertia)

struct KMeansResult {
    std::vector<std::vector<double>> centroids;
    std::vector<int> assignment;
    double inertia = 0.0;
    std::vector<double> inertia_trace;  // per Lloyd iteration of the best run
};

namespace detail {

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace detail

inline KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                           int restarts = 10, int max_iters = 100) {
    if (k <= 0 || k > static_cast<int>(points.size()))
        throw ValidationError("kmeans: k must be in [1, #points]");
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int run = 0; run < restarts; ++run) {
        Rng rng(derive_seed(seed, "kmeans", run));
        // k-means++ seeding
        std::vector<std::vector<double>> centroids;
        centroids.push_back(points[rng.uniform_int(0, static_cast<int>(points.size()) - 1)]);
        std::vector<double> d2(points.size());
        while (static_cast<int>(centroids.size()) < k) {
            double total = 0.0;
            for (std::size_t i = 0; i < points.size(); ++i) {
                double d = std::numeric_limits<double>::infinity();
                for (const auto& c : centroids) d = std::min(d, detail::sq_dist(points[i], c));
                d2[i] = d;
                total += d;
            }
            std::size_t pick = 0;
            if (total > 0.0) {
                double r = rng.uniform() * total;
                double acc = 0.0;
                for (std::size_t i = 0; i < points.size(); ++i) {
                    acc += d2[i];
                    if (acc >= r) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = rng.uniform_int(0, static_cast<int>(points.size()) - 1);
            }
            centroids.push_back(points[pick]);
        }

        std::vector<int> assign(points.size(), -1);
        std::vector<double> trace;
        for (int iter = 0; iter < max_iters; ++iter) {
            bool changed = false;
            double inertia = 0.0;
            for (std::size_t i = 0; i < points.size(); ++i) {
                int bc = 0;
                double bd = detail::sq_dist(points[i], centroids[0]);
                for (int c = 1; c < k; ++c) {
                    double d = detail::sq_dist(points[i], centroids[c]);
                    if (d < bd) {
                        bd = d;
                        bc = c;
                    }
                }
                if (assign[i] != bc) {
                    assign[i] = bc;
                    changed = true;
                }
                inertia += bd;
            }
            trace.push_back(inertia);
            if (!changed && iter > 0) break;
            std::vector<std::vector<double>> sums(k, std::vector<double>(points[0].size(), 0.0));
            std::vector<int> counts(k, 0);
            for (std::size_t i = 0; i < points.size(); ++i) {
                counts[assign[i]] += 1;
                for (std::size_t j = 0; j < points[i].size(); ++j) sums[assign[i]][j] += points[i][j];
            }
            for (int c = 0; c < k; ++c) {
                if (counts[c] == 0) {
                    // reseed an empty cluster at the farthest point
                    std::size_t far = 0;
                    double fd = -1.0;
                    for (std::size_t i = 0; i < points.size(); ++i) {
                        double d = detail::sq_dist(points[i], centroids[assign[i]]);
                        if (d > fd) {
                            fd = d;
                            far = i;
                        }
                    }
                    centroids[c] = points[far];
                    continue;
                }
                for (std::size_t j = 0; j < sums[c].size(); ++j) centroids[c][j] = sums[c][j] / counts[c];
            }
        }
        double final_inertia = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) final_inertia += detail::sq_dist(points[i], centroids[assign[i]]);
        if (final_inertia < best.inertia) {
            best.centroids = centroids;
            best.assignment = assign;
            best.inertia = final_inertia;
            best.inertia_trace = trace;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Policy action heatmap: decision frequency over model x max_age.

struct ActionHeatmap {
    // rows = models (D3..D7x), cols = max_age values {1,3,7}; sums to 1
    std::vector<std::vector<double>> freq;
};

inline ActionHeatmap action_heatmap(const std::vector<int>& decisions, const std::vector<PipelineConfig>& grid) {
    if (decisions.empty()) throw ValidationError("action_heatmap: no decisions");
    ActionHeatmap hm;
    hm.freq.assign(kNumModels, std::vector<double>(max_age_values().size(), 0.0));
    for (int ci : decisions) {
        const PipelineConfig& c = grid.at(ci);
        const auto& ages = max_age_values();
        int col = static_cast<int>(std::find(ages.begin(), ages.end(), c.max_age) - ages.begin());
        hm.freq[static_cast<int>(c.model)][col] += 1.0;
    }
    for (auto& row : hm.freq)
        for (double& v : row) v /= static_cast<double>(decisions.size());
    return hm;
}

// ---------------------------------------------------------------------------
// S-MOTA / S-MOTP pareto via weighted optimal policies (test split)

struct ParetoPoint {
    double lambda = 0.0;
    double mean_smota = 0.0;
    double mean_smotp = 0.0;
};

inline std::vector<ParetoPoint> pareto_weighted_optimal(const OctopusDataset& ds, const std::vector<double>& lambdas) {
    auto keys = ds.defined_segments(Split::test);
    if (keys.empty()) throw ValidationError("pareto: empty test split");
    std::vector<ParetoPoint> curve;
    for (double lambda : lambdas) {
        if (lambda < 0.0 || lambda > 1.0) throw ValidationError("pareto: lambda must be in [0,1]");
        double acc_a = 0.0, acc_p = 0.0;
        for (const auto& k : keys) {
            int ci = argmax_config(ds, [&](int c) {
                const SegmentRecord& r = ds.at(k.first, k.second, c);
                return lambda * r.smota + (1.0 - lambda) * r.smotp;
            });
            const SegmentRecord& r = ds.at(k.first, k.second, ci);
            acc_a += r.smota;
            acc_p += r.smotp;
        }
        curve.push_back(ParetoPoint{lambda, acc_a / static_cast<double>(keys.size()),
                                    acc_p / static_cast<double>(keys.size())});
    }
    return curve;
}

// Default-grid analog of the metaparameter importance table: optimal score
// when only one metaparameter may vary, others pinned to the global best.
struct SingleKnobRow {
    std::string label;
    double score = 0.0;
};

inline std::vector<SingleKnobRow> metaparameter_single_table(const OctopusDataset& ds) {
    auto keys = ds.defined_segments(Split::test);
    if (keys.empty()) throw ValidationError("metaparameter_single_table: empty test split");
    int h_g = ds.h_global >= 0 ? ds.h_global : global_best(ds);
    const PipelineConfig& g = ds.grid[h_g];
    auto eval_allowed = [&](const std::vector<int>& allowed) {
        return mean_over(ds, keys, [&](const SegmentKey& key) {
            int ci = argmax_config(
                ds, [&](int c) { return ds.at(key.first, key.second, c).smota; }, &allowed);
            return ds.at(key.first, key.second, ci).smota;
        });
    };
    std::vector<SingleKnobRow> rows;
    rows.push_back({"global_best", mean_over(ds, keys, [&](const SegmentKey& k) {
                        return ds.at(k.first, k.second, h_g).smota;
                    })});
    auto allowed_if = [&](const std::function<bool(const PipelineConfig&)>& pred) {
        std::vector<int> out;
        for (int ci = 0; ci < ds.grid_size(); ++ci)
            if (pred(ds.grid[ci])) out.push_back(ci);
        return out;
    };
    auto same_but_model = allowed_if([&](const PipelineConfig& c) {
        return c.max_age == g.max_age && c.conf_threshold == g.conf_threshold &&
               c.min_match_iou == g.min_match_iou && c.reinit_freq == g.reinit_freq;
    });
    auto same_but_age = allowed_if([&](const PipelineConfig& c) {
        return c.model == g.model && c.conf_threshold == g.conf_threshold && c.min_match_iou == g.min_match_iou &&
               c.reinit_freq == g.reinit_freq;
    });
    auto both = allowed_if([&](const PipelineConfig& c) {
        return c.conf_threshold == g.conf_threshold && c.min_match_iou == g.min_match_iou &&
               c.reinit_freq == g.reinit_freq;
    });
    rows.push_back({"detection_model", eval_allowed(same_but_model)});
    rows.push_back({"tracking_max_age", eval_allowed(same_but_age)});
    rows.push_back({"both", eval_allowed(both)});
    return rows;
}

}  // namespace streamperf
