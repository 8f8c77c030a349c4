#pragma once

// Multi-label classification as binary relevance: one independent decision
// tree per PII type over a shared feature vector.  Also the feature-reduction
// step: a trained model only ever reads the features its trees test, so the
// vocabulary can be cut down to that union and the model retrained without
// changing a single prediction.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "piiscan/core.hpp"
#include "piiscan/decision_tree.hpp"
#include "piiscan/features.hpp"

namespace piiscan {

class EmptyLabelSetError : public Error {
public:
    EmptyLabelSetError() : Error("multi-label training requires at least one label") {}
};

class EmptyReducedVocabularyError : public Error {
public:
    EmptyReducedVocabularyError()
        : Error("model uses no features; nothing to reduce to") {}
};

struct BinaryRelevanceModel {
    Vocabulary vocab;
    std::map<PiiType, DecisionTree> label_trees;

    bool operator==(const BinaryRelevanceModel&) const = default;
};

inline std::vector<FeatureVector> extract_all(const Dataset& data, const Vocabulary& vocab) {
    std::vector<FeatureVector> out;
    out.reserve(data.records.size());
    for (const auto& r : data.records) out.push_back(extract_parse(r.payload, vocab));
    return out;
}

// Train one tree per label; a record is positive for a label iff its label set
// contains it.  All trees share the same extracted vectors.
inline BinaryRelevanceModel train_binary_relevance(const Dataset& train,
                                                   const std::set<PiiType>& labels,
                                                   Vocabulary vocab,
                                                   const TrainConfig& cfg = {}) {
    if (labels.empty()) throw EmptyLabelSetError();
    std::vector<FeatureVector> vectors = extract_all(train, vocab);
    BinaryRelevanceModel model;
    model.vocab = std::move(vocab);
    for (const auto& label : labels) {
        std::vector<LabeledSample> samples(vectors.size());
        for (size_t i = 0; i < vectors.size(); ++i) {
            samples[i].features = vectors[i];
            samples[i].positive = train.records[i].labels.count(label) > 0;
        }
        model.label_trees.emplace(label, train_tree(samples, cfg));
    }
    return model;
}

inline std::set<PiiType> predict_multilabel(const BinaryRelevanceModel& model,
                                            const FeatureVector& fv) {
    std::set<PiiType> out;
    for (const auto& [label, tree] : model.label_trees)
        if (predict_tree(tree, fv).positive) out.insert(label);
    return out;
}

inline std::set<PiiType> predict_multilabel(const BinaryRelevanceModel& model,
                                            std::string_view payload) {
    return predict_multilabel(model, extract_parse(payload, model.vocab));
}

// Union of feature ids tested anywhere in the model.
inline std::set<int32_t> tree_features(const BinaryRelevanceModel& model) {
    std::set<int32_t> out;
    for (const auto& [label, tree] : model.label_trees)
        for (int32_t f : tree_feature_ids(tree)) out.insert(f);
    return out;
}

struct ReducedModel {
    Vocabulary vocab;
    BinaryRelevanceModel model;
};

// Restrict the vocabulary to the features the model actually tests, re-densify
// ids (restriction of a literal-sorted list stays literal-sorted), and retrain
// from scratch.  Greedy gain-ratio training picks the same splits over the
// restricted candidate set, so the reduced model predicts identically; tests
// pin that property.
inline ReducedModel reduce_and_retrain(const BinaryRelevanceModel& model, const Dataset& train,
                                       const TrainConfig& cfg = {}) {
    std::set<int32_t> used = tree_features(model);
    if (used.empty()) throw EmptyReducedVocabularyError();
    std::vector<VocabEntry> entries;
    for (int32_t f : used) {
        VocabEntry e = model.vocab.entry(f);
        e.id = static_cast<int32_t>(entries.size());
        entries.push_back(std::move(e));
    }
    Vocabulary reduced(model.vocab.mode(), model.vocab.delims(), std::move(entries));
    std::set<PiiType> labels;
    for (const auto& [label, tree] : model.label_trees) labels.insert(label);
    ReducedModel out{reduced, train_binary_relevance(train, labels, reduced, cfg)};
    return out;
}

// ---------------------------------------------------------------------------
// Serialization: {"vocab_ref", "labels": [{"type", "tree"}]}.  The vocabulary
// itself is stored separately under the name given in vocab_ref.

inline json model_to_json(const BinaryRelevanceModel& model, const std::string& vocab_ref) {
    json j;
    j["vocab_ref"] = vocab_ref;
    json labels = json::array();
    for (const auto& [label, tree] : model.label_trees) {
        json jl;
        jl["type"] = label.name();
        jl["tree"] = tree_to_json(tree);
        labels.push_back(std::move(jl));
    }
    j["labels"] = std::move(labels);
    return j;
}

inline BinaryRelevanceModel model_from_json(const json& j, Vocabulary vocab,
                                            const PiiDictionary& dict) {
    BinaryRelevanceModel model;
    model.vocab = std::move(vocab);
    for (const auto& jl : j.at("labels")) {
        PiiType t = resolve_pii_label(jl.at("type").get<std::string>(), dict);
        model.label_trees.emplace(t, tree_from_json(jl.at("tree")));
    }
    return model;
}

}  // namespace piiscan
