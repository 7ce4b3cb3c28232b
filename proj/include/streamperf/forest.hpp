#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "streamperf/common.hpp"
#include "streamperf/rng.hpp"

namespace streamperf {

struct ForestHyperparams {
    int max_depth = 20;
    int max_features = 18;  // clamped to the actual width at fit time
    int n_estimators = 400;
    double min_impurity_decrease = 0.000186;
    std::uint64_t seed = 0;
    bool bootstrap = true;  // test-only escape hatch to make oracle checks exact
};

// Table-6 settings.
inline ForestHyperparams regression_defaults() { return ForestHyperparams{20, 18, 400, 0.000186, 0, true}; }
inline ForestHyperparams classification_joint_defaults() { return ForestHyperparams{8, 3, 400, 0.000285, 0, true}; }
inline ForestHyperparams classification_independent_defaults() {
    return ForestHyperparams{7, 4, 200, 0.000529, 0, true};
}

enum class ForestTask { regression, classification };

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // mean (regression) or class index (classification)
};

class Forest {
public:
    static Forest fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                      const ForestHyperparams& hp, ForestTask task, int jobs = 1) {
        if (x.empty() || y.size() != x.size()) throw ValidationError("forest fit: empty data or |X| != |y|");
        const int n_features = static_cast<int>(x[0].size());
        if (n_features == 0) throw ValidationError("forest fit: zero-width X");
        for (const auto& row : x) {
            if (static_cast<int>(row.size()) != n_features) throw ValidationError("forest fit: ragged X");
            for (double v : row)
                if (!std::isfinite(v)) throw ValidationError("forest fit: non-finite feature value");
        }
        for (double v : y)
            if (!std::isfinite(v)) throw ValidationError("forest fit: non-finite target");
        if (hp.max_depth < 1 || hp.n_estimators < 1 || hp.max_features < 1 || hp.min_impurity_decrease < 0)
            throw ValidationError("forest fit: hyperparameters must be positive");

        Forest f;
        f.task_ = task;
        f.hp_ = hp;
        f.n_features_ = n_features;
        if (task == ForestTask::classification) {
            int max_label = 0;
            for (double v : y) {
                if (v < 0 || v != std::floor(v)) throw ValidationError("forest fit: labels must be indices >= 0");
                max_label = std::max(max_label, static_cast<int>(v));
            }
            f.n_classes_ = max_label + 1;
        }
        const int mf = std::min(hp.max_features, n_features);
        f.trees_.resize(hp.n_estimators);
        std::vector<std::vector<double>> tree_importances(hp.n_estimators);
        parallel_for(hp.n_estimators, jobs, [&](std::size_t t) {
            Rng rng(derive_seed(hp.seed, "tree", t));
            std::vector<int> idx(x.size());
            if (hp.bootstrap) {
                for (std::size_t i = 0; i < x.size(); ++i) idx[i] = rng.uniform_int(0, static_cast<int>(x.size()) - 1);
            } else {
                for (std::size_t i = 0; i < x.size(); ++i) idx[i] = static_cast<int>(i);
            }
            tree_importances[t].assign(n_features, 0.0);
            f.trees_[t] = build_tree(x, y, idx, f, mf, rng, tree_importances[t]);
        });
        // mean of per-tree normalized importances over trees that split at all
        f.importances_.assign(n_features, 0.0);
        int contributing = 0;
        for (auto& imp : tree_importances) {
            double total = 0.0;
            for (double v : imp) total += v;
            if (total <= 0.0) continue;
            ++contributing;
            for (int k = 0; k < n_features; ++k) f.importances_[k] += imp[k] / total;
        }
        if (contributing > 0)
            for (double& v : f.importances_) v /= static_cast<double>(contributing);
        return f;
    }

    double predict(const std::vector<double>& x) const {
        if (static_cast<int>(x.size()) != n_features_)
            throw ValidationError("forest predict: expected " + std::to_string(n_features_) + " features, got " +
                                  std::to_string(x.size()));
        if (task_ == ForestTask::regression) {
            double acc = 0.0;
            for (const auto& tree : trees_) acc += run_tree(tree, x);
            return acc / static_cast<double>(trees_.size());
        }
        std::vector<int> votes(n_classes_, 0);
        for (const auto& tree : trees_) votes[static_cast<int>(run_tree(tree, x))] += 1;
        int best = 0;
        for (int c = 1; c < n_classes_; ++c)
            if (votes[c] > votes[best]) best = c;
        return static_cast<double>(best);
    }

    std::vector<double> predict_batch(const std::vector<std::vector<double>>& xs) const {
        std::vector<double> out;
        out.reserve(xs.size());
        for (const auto& x : xs) out.push_back(predict(x));
        return out;
    }

    const std::vector<double>& feature_importances() const { return importances_; }
    ForestTask task() const { return task_; }
    int n_features() const { return n_features_; }
    int n_classes() const { return n_classes_; }
    const ForestHyperparams& hyperparams() const { return hp_; }
    std::size_t tree_count() const { return trees_.size(); }

    // Truncated view used by the inference-latency scaling benchmark.
    Forest with_first_trees(int count) const {
        Forest f = *this;
        f.trees_.resize(std::min<std::size_t>(count, trees_.size()));
        return f;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["schema_version"] = 1;
        j["task"] = task_ == ForestTask::regression ? "regression" : "classification";
        j["n_features"] = n_features_;
        j["n_classes"] = n_classes_;
        j["hyperparams"] = {{"max_depth", hp_.max_depth},
                            {"max_features", hp_.max_features},
                            {"n_estimators", hp_.n_estimators},
                            {"min_impurity_decrease", hp_.min_impurity_decrease},
                            {"seed", hp_.seed},
                            {"bootstrap", hp_.bootstrap}};
        j["importances"] = importances_;
        nlohmann::json trees = nlohmann::json::array();
        for (const auto& tree : trees_) {
            nlohmann::json nodes = nlohmann::json::array();
            for (const auto& n : tree) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
            trees.push_back(std::move(nodes));
        }
        j["trees"] = std::move(trees);
        return j;
    }

    static Forest from_json(const nlohmann::json& j) {
        if (j.at("schema_version").get<int>() != 1) throw IoError("unsupported forest schema version");
        Forest f;
        f.task_ = j.at("task").get<std::string>() == "regression" ? ForestTask::regression : ForestTask::classification;
        f.n_features_ = j.at("n_features").get<int>();
        f.n_classes_ = j.at("n_classes").get<int>();
        const auto& jh = j.at("hyperparams");
        f.hp_ = ForestHyperparams{jh.at("max_depth").get<int>(),       jh.at("max_features").get<int>(),
                                  jh.at("n_estimators").get<int>(),    jh.at("min_impurity_decrease").get<double>(),
                                  jh.at("seed").get<std::uint64_t>(),  jh.at("bootstrap").get<bool>()};
        f.importances_ = j.at("importances").get<std::vector<double>>();
        for (const auto& jt : j.at("trees")) {
            std::vector<TreeNode> tree;
            for (const auto& jn : jt)
                tree.push_back(TreeNode{jn.at(0).get<int>(), jn.at(1).get<double>(), jn.at(2).get<int>(),
                                        jn.at(3).get<int>(), jn.at(4).get<double>()});
            f.trees_.push_back(std::move(tree));
        }
        return f;
    }

private:
    static double run_tree(const std::vector<TreeNode>& tree, const std::vector<double>& x) {
        int node = 0;
        while (tree[node].feature >= 0) node = x[tree[node].feature] <= tree[node].threshold ? tree[node].left : tree[node].right;
        return tree[node].value;
    }

    struct SplitResult {
        int feature = -1;
        double threshold = 0.0;
        double weighted_decrease = -1.0;
    };

    static double node_impurity(const Forest& f, const std::vector<double>& y, const std::vector<int>& idx,
                                double* leaf_value) {
        if (f.task_ == ForestTask::regression) {
            double mean = 0.0;
            for (int i : idx) mean += y[i];
            mean /= static_cast<double>(idx.size());
            double var = 0.0;
            for (int i : idx) {
                double d = y[i] - mean;
                var += d * d;
            }
            *leaf_value = mean;
            return var / static_cast<double>(idx.size());
        }
        std::vector<int> counts(f.n_classes_, 0);
        for (int i : idx) counts[static_cast<int>(y[i])] += 1;
        int best = 0;
        double gini = 1.0;
        for (int c = 0; c < f.n_classes_; ++c) {
            double p = static_cast<double>(counts[c]) / static_cast<double>(idx.size());
            gini -= p * p;
            if (counts[c] > counts[best]) best = c;  // tie keeps the lowest class index
        }
        *leaf_value = static_cast<double>(best);
        return gini;
    }

    static bool is_pure(const Forest& f, const std::vector<double>& y, const std::vector<int>& idx) {
        for (std::size_t i = 1; i < idx.size(); ++i)
            if (y[idx[i]] != y[idx[0]]) return false;
        return true;
    }

    // Exact split search over midpoints of consecutive distinct values of the
    // sampled features. The impurity decrease is weighted by n_node/n_total,
    // matching the scikit-learn min_impurity_decrease convention.
    static SplitResult best_split(const Forest& f, const std::vector<std::vector<double>>& x,
                                  const std::vector<double>& y, const std::vector<int>& idx, int mf, double n_total,
                                  double node_imp, Rng& rng) {
        const int n_features = f.n_features_;
        std::vector<int> feats(n_features);
        for (int k = 0; k < n_features; ++k) feats[k] = k;
        for (int k = 0; k < mf; ++k) {
            int j = rng.uniform_int(k, n_features - 1);
            std::swap(feats[k], feats[j]);
        }
        const double n_node = static_cast<double>(idx.size());
        SplitResult best;
        std::vector<std::pair<double, double>> vals;  // (x, y)
        vals.reserve(idx.size());
        for (int k = 0; k < mf; ++k) {
            const int feat = feats[k];
            vals.clear();
            for (int i : idx) vals.emplace_back(x[i][feat], y[i]);
            std::sort(vals.begin(), vals.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            if (vals.front().first == vals.back().first) continue;
            if (f.task_ == ForestTask::regression) {
                double total_sum = 0.0;
                for (const auto& v : vals) total_sum += v.second;
                double left_sum = 0.0, left_sq = 0.0, total_sq = 0.0;
                for (const auto& v : vals) total_sq += v.second * v.second;
                for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
                    left_sum += vals[i].second;
                    left_sq += vals[i].second * vals[i].second;
                    if (vals[i].first == vals[i + 1].first) continue;
                    double thr = 0.5 * (vals[i].first + vals[i + 1].first);
                    if (!(thr < vals[i + 1].first)) thr = vals[i].first;  // adjacent floats
                    double nl = static_cast<double>(i + 1), nr = n_node - nl;
                    double imp_l = std::max(0.0, left_sq / nl - (left_sum / nl) * (left_sum / nl));
                    double rs = total_sum - left_sum, rq = total_sq - left_sq;
                    double imp_r = std::max(0.0, rq / nr - (rs / nr) * (rs / nr));
                    double decrease = (n_node / n_total) * (node_imp - (nl / n_node) * imp_l - (nr / n_node) * imp_r);
                    if (decrease > best.weighted_decrease) best = SplitResult{feat, thr, decrease};
                }
            } else {
                std::vector<int> left_counts(f.n_classes_, 0), total_counts(f.n_classes_, 0);
                for (const auto& v : vals) total_counts[static_cast<int>(v.second)] += 1;
                for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
                    left_counts[static_cast<int>(vals[i].second)] += 1;
                    if (vals[i].first == vals[i + 1].first) continue;
                    double thr = 0.5 * (vals[i].first + vals[i + 1].first);
                    if (!(thr < vals[i + 1].first)) thr = vals[i].first;
                    double nl = static_cast<double>(i + 1), nr = n_node - nl;
                    double gini_l = 1.0, gini_r = 1.0;
                    for (int c = 0; c < f.n_classes_; ++c) {
                        double pl = left_counts[c] / nl;
                        double pr = (total_counts[c] - left_counts[c]) / nr;
                        gini_l -= pl * pl;
                        gini_r -= pr * pr;
                    }
                    double decrease = (n_node / n_total) * (node_imp - (nl / n_node) * gini_l - (nr / n_node) * gini_r);
                    if (decrease > best.weighted_decrease) best = SplitResult{feat, thr, decrease};
                }
            }
        }
        return best;
    }

    static std::vector<TreeNode> build_tree(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                                            const std::vector<int>& root_idx, const Forest& f, int mf, Rng& rng,
                                            std::vector<double>& importance) {
        std::vector<TreeNode> nodes;
        const double n_total = static_cast<double>(root_idx.size());
        struct Item {
            std::vector<int> idx;
            int depth;
            int slot;
        };
        std::vector<Item> stack;
        nodes.emplace_back();
        stack.push_back(Item{root_idx, 0, 0});
        while (!stack.empty()) {
            Item item = std::move(stack.back());
            stack.pop_back();
            double leaf_value = 0.0;
            double imp = node_impurity(f, y, item.idx, &leaf_value);
            TreeNode& node = nodes[item.slot];
            node.value = leaf_value;
            if (item.depth >= f.hp_.max_depth || item.idx.size() < 2 || is_pure(f, y, item.idx)) continue;
            SplitResult split = best_split(f, x, y, item.idx, mf, n_total, imp, rng);
            if (split.feature < 0 || split.weighted_decrease < f.hp_.min_impurity_decrease) continue;
            std::vector<int> left_idx, right_idx;
            for (int i : item.idx) (x[i][split.feature] <= split.threshold ? left_idx : right_idx).push_back(i);
            if (left_idx.empty() || right_idx.empty()) continue;
            importance[split.feature] += split.weighted_decrease;
            int left_slot = static_cast<int>(nodes.size());
            nodes.emplace_back();
            int right_slot = static_cast<int>(nodes.size());
            nodes.emplace_back();
            TreeNode& nd = nodes[item.slot];  // reference may have moved
            nd.feature = split.feature;
            nd.threshold = split.threshold;
            nd.left = left_slot;
            nd.right = right_slot;
            stack.push_back(Item{std::move(right_idx), item.depth + 1, right_slot});
            stack.push_back(Item{std::move(left_idx), item.depth + 1, left_slot});
        }
        return nodes;
    }

    ForestTask task_ = ForestTask::regression;
    ForestHyperparams hp_;
    int n_features_ = 0;
    int n_classes_ = 0;
    std::vector<std::vector<TreeNode>> trees_;
    std::vector<double> importances_;
};

}  // namespace streamperf
