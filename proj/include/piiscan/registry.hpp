#pragma once

// Model registry: one specialized classifier per app (or per destination
// domain) where the training slice supports it, plus a reduced general model
// as the fallback for everything else.  Specialization is what keeps
// individual trees tiny; the general model is trained on everything and then
// cut down to the features its trees actually use.

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "piiscan/core.hpp"
#include "piiscan/features.hpp"
#include "piiscan/multilabel.hpp"

namespace piiscan {

class NoGeneralTrainingDataError : public DataError {
public:
    NoGeneralTrainingDataError() : DataError("no records to train the general model on") {}
};

enum class ClassifierScope { PerApp, PerDomain };

inline std::string to_string(ClassifierScope s) {
    return s == ClassifierScope::PerApp ? "per-app" : "per-domain";
}

inline ClassifierScope scope_from_string(const std::string& s) {
    if (s == "per-app") return ClassifierScope::PerApp;
    if (s == "per-domain") return ClassifierScope::PerDomain;
    throw DataError("unknown scope '" + s + "'");
}

inline std::string to_string(LabelPolicy p) {
    return p == LabelPolicy::AllPii ? "all" : "unknown";
}

inline LabelPolicy label_policy_from_string(const std::string& s) {
    if (s == "all") return LabelPolicy::AllPii;
    if (s == "unknown") return LabelPolicy::UnknownOnly;
    throw DataError("unknown label policy '" + s + "'");
}

// A record's dispatch key under a scope; nullopt when it has none (e.g. no
// destination domain on plain TCP/UDP flows), which always routes to general.
inline std::optional<std::string> entity_key(const PacketRecord& r, ClassifierScope scope) {
    if (scope == ClassifierScope::PerApp) return r.app_id;
    return r.domain;
}

struct RegistryConfig {
    VocabConfig vocab;
    TrainConfig tree;
};

struct ModelRegistry {
    ClassifierScope scope = ClassifierScope::PerApp;
    LabelPolicy label_policy = LabelPolicy::AllPii;
    std::map<std::string, BinaryRelevanceModel> specialized;
    BinaryRelevanceModel general;
    size_t general_original_features = 0;  // before reduction
    // Entities seen in training but not specialized (one-class slice or no
    // usable vocabulary), for reporting.
    std::vector<std::string> skipped_entities;
};

struct SelectedModel {
    const BinaryRelevanceModel* model = nullptr;
    std::string name;  // "general" or "app:<id>" / "domain:<id>"
    bool specialized = false;
};

inline SelectedModel select_model(const ModelRegistry& reg, const PacketRecord& r) {
    if (auto key = entity_key(r, reg.scope)) {
        auto it = reg.specialized.find(*key);
        if (it != reg.specialized.end()) {
            std::string prefix = reg.scope == ClassifierScope::PerApp ? "app:" : "domain:";
            return {&it->second, prefix + *key, true};
        }
    }
    return {&reg.general, "general", false};
}

// Eligibility: at least one record with a counted label and one without, in
// the entity's slice.
inline bool eligible_slice(const std::vector<const PacketRecord*>& slice, LabelPolicy policy) {
    bool pos = false, neg = false;
    for (const auto* r : slice) {
        if (counted_labels(r->labels, policy).empty())
            neg = true;
        else
            pos = true;
        if (pos && neg) return true;
    }
    return false;
}

namespace detail {

inline Dataset slice_dataset(const std::vector<const PacketRecord*>& slice,
                             const PiiDictionary& dict) {
    Dataset d;
    d.pii_dictionary = dict;
    d.records.reserve(slice.size());
    for (const auto* r : slice) d.records.push_back(*r);
    return d;
}

inline std::set<PiiType> counted_types(const Dataset& data, LabelPolicy policy) {
    std::set<PiiType> out;
    for (const auto& r : data.records)
        for (const auto& t : r.labels)
            if (label_counted(t, policy)) out.insert(t);
    return out;
}

}  // namespace detail

inline ModelRegistry train_registry(const Dataset& train, ClassifierScope scope,
                                    LabelPolicy policy, const RegistryConfig& cfg = {}) {
    if (train.records.empty()) throw NoGeneralTrainingDataError();
    ModelRegistry reg;
    reg.scope = scope;
    reg.label_policy = policy;

    std::map<std::string, std::vector<const PacketRecord*>> slices;
    for (const auto& r : train.records)
        if (auto key = entity_key(r, scope)) slices[*key].push_back(&r);

    for (const auto& [key, slice] : slices) {
        if (!eligible_slice(slice, policy)) {
            reg.skipped_entities.push_back(key);
            continue;
        }
        Dataset sub = detail::slice_dataset(slice, train.pii_dictionary);
        std::set<PiiType> labels = detail::counted_types(sub, policy);
        try {
            Vocabulary vocab = build_vocabulary(sub, DelimiterSet(), cfg.vocab);
            reg.specialized.emplace(
                key, train_binary_relevance(filter_labels(sub, policy), labels, std::move(vocab),
                                            cfg.tree));
        } catch (const EmptyVocabularyError&) {
            reg.skipped_entities.push_back(key);
        }
    }

    Vocabulary general_vocab = build_vocabulary(train, DelimiterSet(), cfg.vocab);
    reg.general_original_features = general_vocab.size();
    std::set<PiiType> general_labels = detail::counted_types(train, policy);
    if (general_labels.empty()) {
        // Leak-free training data: a general model that predicts nothing.
        reg.general.vocab = std::move(general_vocab);
    } else {
        BinaryRelevanceModel full = train_binary_relevance(filter_labels(train, policy),
                                                           general_labels, general_vocab, cfg.tree);
        try {
            reg.general = reduce_and_retrain(full, filter_labels(train, policy), cfg.tree).model;
        } catch (const EmptyReducedVocabularyError&) {
            // All trees are leaves; nothing to cut down to.  Keep the full model.
            reg.general = std::move(full);
        }
    }
    return reg;
}

struct CoverageStats {
    size_t specialized_count = 0;
    double traffic_fraction = 0.0;      // records dispatched to a specialized model
    double leak_packet_fraction = 0.0;  // same, among records with counted labels
};

inline CoverageStats coverage_stats(const ModelRegistry& reg, const Dataset& data) {
    CoverageStats st;
    st.specialized_count = reg.specialized.size();
    size_t total = 0, covered = 0, leak_total = 0, leak_covered = 0;
    for (const auto& r : data.records) {
        ++total;
        bool spec = select_model(reg, r).specialized;
        if (spec) ++covered;
        if (!counted_labels(r.labels, reg.label_policy).empty()) {
            ++leak_total;
            if (spec) ++leak_covered;
        }
    }
    if (total > 0) st.traffic_fraction = static_cast<double>(covered) / total;
    if (leak_total > 0) st.leak_packet_fraction = static_cast<double>(leak_covered) / leak_total;
    return st;
}

// ---------------------------------------------------------------------------
// Directory layout: registry.json (index) + general.json + one file per
// specialized entity.  Bytes are canonical, so retraining with the same seed
// and data rewrites identical files.

namespace detail {

inline std::string sanitize_filename(const std::string& name) {
    std::string out;
    for (char c : name)
        out.push_back((std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-')
                          ? c
                          : '_');
    return out;
}

inline json model_file_json(const std::string& entity, const BinaryRelevanceModel& model) {
    json j;
    j["entity"] = entity;
    j["vocab"] = vocabulary_to_json(model.vocab);
    j["model"] = model_to_json(model, entity);
    return j;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string(), "cannot open for writing");
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) throw IoError(path.string(), "write failed");
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string(), "cannot open for reading");
    try {
        return json::parse(in);
    } catch (const std::exception& e) {
        throw DataError("bad json in '" + path.string() + "': " + e.what());
    }
}

}  // namespace detail

inline void save_registry(const ModelRegistry& reg, const std::string& dir,
                          const PiiDictionary& dict) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    json index;
    index["scope"] = to_string(reg.scope);
    index["label_policy"] = to_string(reg.label_policy);
    index["general_file"] = "general.json";
    index["general_original_features"] = reg.general_original_features;
    index["skipped_entities"] = reg.skipped_entities;
    json dict_json = json::object();
    for (const auto& [t, lits] : dict) dict_json[t.name()] = lits;
    index["pii_dictionary"] = dict_json;
    json entities = json::array();
    size_t i = 0;
    for (const auto& [key, model] : reg.specialized) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "m%04zu_", i++);
        std::string file = std::string(buf) + detail::sanitize_filename(key) + ".json";
        json e;
        e["entity"] = key;
        e["file"] = file;
        entities.push_back(std::move(e));
        detail::write_json_file(fs::path(dir) / file, detail::model_file_json(key, model));
    }
    index["entities"] = std::move(entities);
    detail::write_json_file(fs::path(dir) / "general.json",
                            detail::model_file_json("general", reg.general));
    detail::write_json_file(fs::path(dir) / "registry.json", index);
}

struct LoadedRegistry {
    ModelRegistry registry;
    PiiDictionary pii_dictionary;
};

inline LoadedRegistry load_registry(const std::string& dir) {
    namespace fs = std::filesystem;
    json index = detail::read_json_file(fs::path(dir) / "registry.json");
    LoadedRegistry out;
    try {
        for (const auto& [name, lits] : index.at("pii_dictionary").items()) {
            PiiType t = PiiType::builtin(name).value_or(PiiType::custom(name));
            out.pii_dictionary[t] = lits.get<std::vector<std::string>>();
        }
        ModelRegistry& reg = out.registry;
        reg.scope = scope_from_string(index.at("scope").get<std::string>());
        reg.label_policy = label_policy_from_string(index.at("label_policy").get<std::string>());
        reg.general_original_features = index.at("general_original_features").get<size_t>();
        reg.skipped_entities = index.at("skipped_entities").get<std::vector<std::string>>();
        auto load_model = [&](const std::string& file) {
            json j = detail::read_json_file(fs::path(dir) / file);
            Vocabulary vocab = vocabulary_from_json(j.at("vocab"));
            return model_from_json(j.at("model"), std::move(vocab), out.pii_dictionary);
        };
        reg.general = load_model(index.at("general_file").get<std::string>());
        for (const auto& e : index.at("entities"))
            reg.specialized.emplace(e.at("entity").get<std::string>(),
                                    load_model(e.at("file").get<std::string>()));
    } catch (const DataError&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError("bad registry index: " + std::string(e.what()));
    }
    return out;
}

}  // namespace piiscan
