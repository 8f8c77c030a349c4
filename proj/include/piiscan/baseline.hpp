#pragma once

// Reference extraction heuristic used for comparison: a binary "does this
// packet expose anything" tree gates a per-key conditional-probability lookup.
// P(type|key) is estimated from training counts over bare word features; a
// per-type threshold, calibrated on a grid, decides which probabilities are
// trusted.  Its structural weakness — a key shared by several types fires all
// of them or none — is exactly what per-label trees avoid.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "piiscan/core.hpp"
#include "piiscan/decision_tree.hpp"
#include "piiscan/features.hpp"
#include "piiscan/multilabel.hpp"

namespace piiscan {

struct KeyProbabilityTable {
    // type -> key word -> P(type | key present); raw ratios, no smoothing.
    std::map<PiiType, std::map<std::string, double>> probs;
    std::map<PiiType, double> thresholds;

    bool operator==(const KeyProbabilityTable&) const = default;
};

inline constexpr double kDefaultKeyThreshold = 0.5;

// Missing entries mean the key never co-occurred with the type: probability 0.
inline double key_probability(const KeyProbabilityTable& table, const PiiType& type,
                              const std::string& word) {
    auto row = table.probs.find(type);
    if (row == table.probs.end()) return 0.0;
    auto it = row->second.find(word);
    return it == row->second.end() ? 0.0 : it->second;
}

// Count-based estimate over a Bare-mode vocabulary: for every key (vocabulary
// word) and every type appearing in train, P = #(records with key and type) /
// #(records with key).  Keys the vocabulary dropped never enter the table.
inline KeyProbabilityTable build_key_table(const Dataset& train, const Vocabulary& vocab) {
    std::vector<FeatureVector> vectors = extract_all(train, vocab);
    std::vector<size_t> key_docs(vocab.size(), 0);
    std::map<PiiType, std::vector<size_t>> joint;
    std::set<PiiType> types;
    for (const auto& r : train.records)
        for (const auto& t : r.labels) types.insert(t);
    for (const auto& t : types) joint[t].assign(vocab.size(), 0);
    for (size_t i = 0; i < vectors.size(); ++i) {
        for (int32_t f : vectors[i].ids) {
            ++key_docs[static_cast<size_t>(f)];
            for (const auto& t : train.records[i].labels) ++joint[t][static_cast<size_t>(f)];
        }
    }
    KeyProbabilityTable table;
    for (const auto& t : types) {
        auto& row = table.probs[t];
        for (size_t f = 0; f < vocab.size(); ++f) {
            if (key_docs[f] == 0) continue;
            double p = static_cast<double>(joint[t][f]) / static_cast<double>(key_docs[f]);
            if (p > 0.0) row[vocab.entry(static_cast<int32_t>(f)).word] = p;
        }
        table.thresholds[t] = kDefaultKeyThreshold;
    }
    return table;
}

// Untrusted-key extraction core: the types whose table row has some present
// key above that type's threshold.
inline std::set<PiiType> keys_above_threshold(const KeyProbabilityTable& table,
                                              const std::set<std::string>& present_words) {
    std::set<PiiType> out;
    for (const auto& [type, row] : table.probs) {
        double threshold = kDefaultKeyThreshold;
        if (auto it = table.thresholds.find(type); it != table.thresholds.end())
            threshold = it->second;
        for (const auto& [word, p] : row) {
            if (p > threshold && present_words.count(word)) {
                out.insert(type);
                break;
            }
        }
    }
    return out;
}

inline std::set<std::string> present_words(std::string_view payload, const Vocabulary& vocab) {
    std::set<std::string> words;
    for (int32_t f : extract_parse(payload, vocab).ids)
        words.insert(vocab.entry(f).word);
    return words;
}

// Per-type threshold calibration: grid {0.1..0.9}, pick the value maximizing
// that type's F1 over the validation records; ties resolve to the highest
// threshold.  A type with no positive validation record keeps the default.
inline void calibrate_thresholds(KeyProbabilityTable& table, const Dataset& validation,
                                 const Vocabulary& vocab) {
    std::vector<std::set<std::string>> words;
    words.reserve(validation.records.size());
    for (const auto& r : validation.records) words.push_back(present_words(r.payload, vocab));

    for (auto& [type, row] : table.probs) {
        size_t positives = 0;
        for (const auto& r : validation.records)
            if (r.labels.count(type)) ++positives;
        if (positives == 0) {
            table.thresholds[type] = kDefaultKeyThreshold;
            continue;
        }
        double best_f1 = -1.0;
        double best_threshold = kDefaultKeyThreshold;
        for (int step = 1; step <= 9; ++step) {
            double threshold = 0.1 * step;
            size_t tp = 0, fp = 0, fn = 0;
            for (size_t i = 0; i < validation.records.size(); ++i) {
                bool truth = validation.records[i].labels.count(type) > 0;
                bool pred = false;
                for (const auto& [word, p] : row) {
                    if (p > threshold && words[i].count(word)) {
                        pred = true;
                        break;
                    }
                }
                if (pred && truth) ++tp;
                else if (pred) ++fp;
                else if (truth) ++fn;
            }
            double f1 = (2 * tp + fp + fn) == 0
                            ? 0.0
                            : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
            if (f1 >= best_f1) {  // >= : the highest maximizer wins
                best_f1 = f1;
                best_threshold = threshold;
            }
        }
        table.thresholds[type] = best_threshold;
    }
}

// Full heuristic: the binary gate first, then thresholded key lookup.
inline std::set<PiiType> heuristic_extract(std::string_view payload,
                                           const DecisionTree& binary_gate,
                                           const KeyProbabilityTable& table,
                                           const Vocabulary& vocab) {
    FeatureVector fv = extract_parse(payload, vocab);
    if (!predict_tree(binary_gate, fv).positive) return {};
    std::set<std::string> words;
    for (int32_t f : fv.ids) words.insert(vocab.entry(f).word);
    return keys_above_threshold(table, words);
}

// ---------------------------------------------------------------------------
// Serialization: {"probs": {type: {key: p}}, "thresholds": {type: t}}.

inline json key_table_to_json(const KeyProbabilityTable& table) {
    json probs = json::object();
    for (const auto& [type, row] : table.probs) {
        json jrow = json::object();
        for (const auto& [word, p] : row) jrow[word] = p;
        probs[type.name()] = std::move(jrow);
    }
    json thresholds = json::object();
    for (const auto& [type, t] : table.thresholds) thresholds[type.name()] = t;
    json j;
    j["probs"] = std::move(probs);
    j["thresholds"] = std::move(thresholds);
    return j;
}

inline KeyProbabilityTable key_table_from_json(const json& j, const PiiDictionary& dict) {
    KeyProbabilityTable table;
    for (const auto& [name, row] : j.at("probs").items()) {
        PiiType t = resolve_pii_label(name, dict);
        for (const auto& [word, p] : row.items()) table.probs[t][word] = p.get<double>();
    }
    for (const auto& [name, th] : j.at("thresholds").items())
        table.thresholds[resolve_pii_label(name, dict)] = th.get<double>();
    return table;
}

}  // namespace piiscan
