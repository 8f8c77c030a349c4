#pragma once

// Binary decision trees over binary presence features, split by gain ratio
// (information gain normalized by split information).  No pruning: trees over
// token features stay naturally shallow, and determinism matters more than
// squeezing generalization here.

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "piiscan/core.hpp"
#include "piiscan/features.hpp"

namespace piiscan {

struct LabeledSample {
    FeatureVector features;
    bool positive = false;
};

struct TrainConfig {
    double min_gain_ratio = 1e-6;
    size_t min_samples_split = 4;
    size_t max_depth = 32;
    // Ties on gain ratio resolve to the lexicographically smallest feature
    // literal.  Vocabulary ids are assigned in sorted-literal order, so the
    // smallest id wins; training is therefore independent of sample order.
};

struct TreeNode {
    bool is_leaf = true;
    // leaf
    bool positive = false;
    double confidence = 1.0;   // fraction of training samples in the majority class
    // internal
    int32_t feature_id = -1;
    int32_t absent = -1;       // child index when the feature is absent
    int32_t present = -1;      // child index when the feature is present
    bool operator==(const TreeNode&) const = default;
};

class DecisionTree {
public:
    const std::vector<TreeNode>& nodes() const { return nodes_; }
    const TreeNode& root() const { return nodes_.front(); }
    bool empty() const { return nodes_.empty(); }

    int32_t add_node(TreeNode n) {
        nodes_.push_back(n);
        return static_cast<int32_t>(nodes_.size()) - 1;
    }
    TreeNode& node(int32_t i) { return nodes_[static_cast<size_t>(i)]; }
    const TreeNode& node(int32_t i) const { return nodes_[static_cast<size_t>(i)]; }

    size_t depth() const { return empty() ? 0 : depth_below(0); }

    bool operator==(const DecisionTree&) const = default;

private:
    size_t depth_below(int32_t i) const {
        const TreeNode& n = nodes_[static_cast<size_t>(i)];
        if (n.is_leaf) return 0;
        return 1 + std::max(depth_below(n.absent), depth_below(n.present));
    }
    std::vector<TreeNode> nodes_;  // root at index 0
};

inline double binary_entropy(size_t pos, size_t total) {
    if (total == 0 || pos == 0 || pos == total) return 0.0;
    double p = static_cast<double>(pos) / static_cast<double>(total);
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

// Gain ratio of splitting on presence of one feature.  A feature present in
// all samples or none has zero split information and scores 0.
inline double gain_ratio(const std::vector<LabeledSample>& samples, int32_t feature_id) {
    size_t n = samples.size();
    size_t pos = 0, present = 0, present_pos = 0;
    for (const auto& s : samples) {
        bool has = s.features.contains(feature_id);
        if (s.positive) ++pos;
        if (has) {
            ++present;
            if (s.positive) ++present_pos;
        }
    }
    if (n == 0 || present == 0 || present == n) return 0.0;
    size_t absent = n - present;
    size_t absent_pos = pos - present_pos;
    double h = binary_entropy(pos, n);
    double h_split = (static_cast<double>(present) / n) * binary_entropy(present_pos, present) +
                     (static_cast<double>(absent) / n) * binary_entropy(absent_pos, absent);
    double info_gain = h - h_split;
    double split_info = binary_entropy(present, n);
    if (split_info <= 0.0) return 0.0;
    return info_gain / split_info;
}

namespace detail {

struct SplitCounts {
    size_t present = 0;
    size_t present_pos = 0;
};

inline int32_t train_node(DecisionTree& tree, const std::vector<LabeledSample>& samples,
                          const std::vector<size_t>& idx, const TrainConfig& cfg, size_t depth) {
    size_t n = idx.size();
    size_t pos = 0;
    for (size_t i : idx)
        if (samples[i].positive) ++pos;

    auto make_leaf = [&]() {
        TreeNode leaf;
        leaf.is_leaf = true;
        size_t neg = n - pos;
        // Class ties break to negative.
        leaf.positive = pos > neg;
        size_t majority = std::max(pos, neg);
        leaf.confidence = n == 0 ? 1.0 : static_cast<double>(majority) / static_cast<double>(n);
        return tree.add_node(leaf);
    };

    if (pos == 0 || pos == n || n < cfg.min_samples_split || depth >= cfg.max_depth)
        return make_leaf();

    // Presence counts per feature occurring in this node's samples; features
    // absent everywhere can't split, features present everywhere score 0.
    std::map<int32_t, SplitCounts> counts;
    for (size_t i : idx) {
        for (int32_t f : samples[i].features.ids) {
            SplitCounts& c = counts[f];
            ++c.present;
            if (samples[i].positive) ++c.present_pos;
        }
    }

    double h = binary_entropy(pos, n);
    double best_gain = 0.0;
    int32_t best_feature = -1;
    for (const auto& [f, c] : counts) {
        if (c.present == n) continue;
        size_t absent = n - c.present;
        size_t absent_pos = pos - c.present_pos;
        double h_split =
            (static_cast<double>(c.present) / n) * binary_entropy(c.present_pos, c.present) +
            (static_cast<double>(absent) / n) * binary_entropy(absent_pos, absent);
        double split_info = binary_entropy(c.present, n);
        if (split_info <= 0.0) continue;
        double gr = (h - h_split) / split_info;
        // Strict >: equal gain keeps the earlier (lexicographically smaller) feature.
        if (gr > best_gain) {
            best_gain = gr;
            best_feature = f;
        }
    }
    if (best_feature < 0 || best_gain <= cfg.min_gain_ratio) return make_leaf();

    std::vector<size_t> absent_idx, present_idx;
    for (size_t i : idx) {
        if (samples[i].features.contains(best_feature))
            present_idx.push_back(i);
        else
            absent_idx.push_back(i);
    }

    int32_t self = tree.add_node(TreeNode{});
    int32_t a = train_node(tree, samples, absent_idx, cfg, depth + 1);
    int32_t p = train_node(tree, samples, present_idx, cfg, depth + 1);
    TreeNode& node = tree.node(self);
    node.is_leaf = false;
    node.feature_id = best_feature;
    node.absent = a;
    node.present = p;
    return self;
}

}  // namespace detail

inline DecisionTree train_tree(const std::vector<LabeledSample>& samples,
                               const TrainConfig& cfg = {}) {
    DecisionTree tree;
    std::vector<size_t> idx(samples.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (samples.empty()) {
        tree.add_node(TreeNode{});  // negative leaf, confidence 1
        return tree;
    }
    detail::train_node(tree, samples, idx, cfg, 0);
    return tree;
}

struct Prediction {
    bool positive = false;
    double confidence = 1.0;
};

inline Prediction predict_tree(const DecisionTree& tree, const FeatureVector& fv) {
    int32_t i = 0;
    while (!tree.node(i).is_leaf)
        i = fv.contains(tree.node(i).feature_id) ? tree.node(i).present : tree.node(i).absent;
    const TreeNode& leaf = tree.node(i);
    return {leaf.positive, leaf.confidence};
}

// Feature ids appearing in internal nodes.  Predictions depend only on these.
inline std::set<int32_t> tree_feature_ids(const DecisionTree& tree) {
    std::set<int32_t> out;
    for (const auto& n : tree.nodes())
        if (!n.is_leaf) out.insert(n.feature_id);
    return out;
}

// ---------------------------------------------------------------------------
// Serialization: nested {"f", "a", "p"} internals and {"leaf", "conf"} leaves.

inline json tree_node_to_json(const DecisionTree& tree, int32_t i) {
    const TreeNode& n = tree.node(i);
    json j;
    if (n.is_leaf) {
        j["leaf"] = n.positive;
        j["conf"] = n.confidence;
    } else {
        j["f"] = n.feature_id;
        j["a"] = tree_node_to_json(tree, n.absent);
        j["p"] = tree_node_to_json(tree, n.present);
    }
    return j;
}

inline json tree_to_json(const DecisionTree& tree) { return tree_node_to_json(tree, 0); }

inline int32_t tree_node_from_json(DecisionTree& tree, const json& j) {
    if (j.contains("leaf")) {
        TreeNode n;
        n.is_leaf = true;
        n.positive = j.at("leaf").get<bool>();
        n.confidence = j.at("conf").get<double>();
        return tree.add_node(n);
    }
    int32_t self = tree.add_node(TreeNode{});
    int32_t a = tree_node_from_json(tree, j.at("a"));
    int32_t p = tree_node_from_json(tree, j.at("p"));
    TreeNode& n = tree.node(self);
    n.is_leaf = false;
    n.feature_id = j.at("f").get<int32_t>();
    n.absent = a;
    n.present = p;
    return self;
}

inline DecisionTree tree_from_json(const json& j) {
    DecisionTree tree;
    tree_node_from_json(tree, j);
    return tree;
}

}  // namespace piiscan
