#pragma once

// The online detection engine: source-port connection tracking, a single
// merged automaton holding PII literals and every model's feature literals so
// each outgoing packet is scanned exactly once, hybrid merge of exact matches
// with classifier predictions, and the allow / block / hash-replace policy
// layer with remembered per-(app, type) decisions.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "piiscan/aho_corasick.hpp"
#include "piiscan/core.hpp"
#include "piiscan/features.hpp"
#include "piiscan/multilabel.hpp"
#include "piiscan/registry.hpp"
#include "piiscan/rng.hpp"

namespace piiscan {

class EngineNotLoadedError : public Error {
public:
    EngineNotLoadedError() : Error("detection engine has no loaded models") {}
};

class PromptUnavailableError : public Error {
public:
    PromptUnavailableError(const std::string& app, const std::string& type)
        : Error("no policy rule for (" + app + ", " + type + ") and no prompt available") {}
};

// ---------------------------------------------------------------------------
// Source-port to app mapping.  Workers may register and look up concurrently;
// writes are last-writer-wins per port.

class ConnectionTable {
public:
    void register_connection(int src_port, std::string app_id) {
        check(src_port);
        std::lock_guard lock(mu_);
        entries_[src_port] = std::move(app_id);
    }

    std::optional<std::string> lookup_app(int src_port) const {
        check(src_port);
        std::lock_guard lock(mu_);
        auto it = entries_.find(src_port);
        return it == entries_.end() ? std::nullopt : std::make_optional(it->second);
    }

    void close_connection(int src_port) {
        check(src_port);
        std::lock_guard lock(mu_);
        entries_.erase(src_port);
    }

    size_t size() const {
        std::lock_guard lock(mu_);
        return entries_.size();
    }

private:
    static void check(int port) {
        if (port < 0 || port > 65535) throw PortOutOfRangeError(port);
    }
    mutable std::mutex mu_;
    std::map<int, std::string> entries_;
};

// ---------------------------------------------------------------------------
// Detections.

enum class DetectMethod { StringMatch, Classifier };

inline std::string to_string(DetectMethod m) {
    return m == DetectMethod::StringMatch ? "string" : "classifier";
}

struct Detection {
    int64_t packet_id = 0;
    std::string app_id;
    // Exact matches carry StringMatch; model predictions carry Classifier.
    // For a type found both ways the exact method wins.
    std::set<std::pair<PiiType, DetectMethod>> pii_found;
    std::string model_used;  // "general", "app:<id>", "domain:<id>", or "" when skipped
    int64_t elapsed_micros = 0;

    bool empty() const { return pii_found.empty(); }
    std::set<PiiType> types() const {
        std::set<PiiType> out;
        for (const auto& [t, _] : pii_found) out.insert(t);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Engine: one automaton over the PII dictionary plus the union of feature
// literals from every model in the registry.  A scan yields exact PII hits
// and the set of matched feature literals; each model then reads its own
// feature ids out of that set, so adding models never adds scan passes.

struct DetectionEngine {
    ModelRegistry registry;
    PiiDictionary dictionary;
    Automaton automaton;
    // Feature-pattern id -> shared literal table index.
    std::vector<VocabEntry> feature_literals;
    bool loaded = false;
};

inline DetectionEngine build_engine(ModelRegistry registry, PiiDictionary dictionary) {
    DetectionEngine e;
    e.registry = std::move(registry);
    e.dictionary = std::move(dictionary);

    // Literal union across models.  Flank openness is a property of the
    // literal itself, so entries agree across vocabularies.
    std::map<std::string, VocabEntry> literals;
    auto add_vocab = [&](const Vocabulary& v) {
        for (const VocabEntry& entry : v.entries()) literals.emplace(entry.literal, entry);
    };
    add_vocab(e.registry.general.vocab);
    for (const auto& [_, model] : e.registry.specialized) add_vocab(model.vocab);

    PatternSet set;
    int32_t next_id = 0;
    // Only predefined-category types are string-matchable: their values are
    // known up front.  Unknown-category values in a dictionary exist for
    // dataset tooling, not for detection.
    for (const auto& [type, values] : e.dictionary) {
        if (type.category() != PiiCategory::Predefined) continue;
        for (const std::string& v : values)
            if (!v.empty()) set.add_pii(next_id++, v, type);
    }
    e.feature_literals.reserve(literals.size());
    for (const auto& [lit, entry] : literals) {
        int32_t idx = int32_t(e.feature_literals.size());
        VocabEntry shared = entry;
        shared.id = idx;
        e.feature_literals.push_back(shared);
        set.add_feature(next_id++, lit, idx);
    }
    if (set.size() > 0) e.automaton = build_automaton(set);
    e.loaded = true;
    return e;
}

struct PacketMeta {
    int64_t packet_id = 0;
    int src_port = 0;
    std::optional<std::string> domain;
    Protocol protocol = Protocol::HTTP;
    Direction direction = Direction::Outgoing;
    std::optional<std::string> app_hint;  // used when the port is unmapped
};

inline PacketMeta meta_of(const PacketRecord& r) {
    return {r.id, r.src_port, r.domain, r.protocol, r.direction, r.app_id};
}

inline Detection inspect_packet(const DetectionEngine& engine, std::string_view payload,
                                const PacketMeta& meta, const ConnectionTable& connections) {
    if (!engine.loaded) throw EngineNotLoadedError();
    auto t0 = std::chrono::steady_clock::now();
    Detection det;
    det.packet_id = meta.packet_id;
    if (auto app = connections.lookup_app(meta.src_port)) det.app_id = *app;
    else if (meta.app_hint) det.app_id = *meta.app_hint;

    // Exposure is outbound by definition; incoming traffic passes untouched.
    if (meta.direction == Direction::Incoming) {
        det.elapsed_micros =
            std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0)
                .count();
        return det;
    }

    // One search pass: exact PII hits plus matched feature literals.
    std::set<PiiType> exact;
    std::set<size_t> matched_literals;
    if (engine.automaton.pattern_count() > 0) {
        engine.automaton.scan(payload, [&](int32_t pattern_id, size_t end) {
            const Pattern& p = engine.automaton.pattern(pattern_id);
            if (p.kind == PatternKind::Pii) {
                exact.insert(p.pii_type);
                return;
            }
            const VocabEntry& entry = engine.feature_literals[size_t(p.feature_id)];
            size_t start = end + 1 - p.literal.size();
            if (entry.open_left && start != 0) return;
            if (entry.open_right && end + 1 != payload.size()) return;
            matched_literals.insert(size_t(p.feature_id));
        });
    }

    PacketRecord probe;
    probe.app_id = det.app_id;
    probe.domain = meta.domain;
    SelectedModel sel = select_model(engine.registry, probe);
    det.model_used = sel.name;

    std::set<int32_t> feature_ids;
    for (size_t idx : matched_literals)
        if (auto id = sel.model->vocab.lookup(engine.feature_literals[idx].literal))
            feature_ids.insert(*id);
    FeatureVector fv = to_feature_vector(feature_ids);
    std::set<PiiType> predicted = predict_multilabel(*sel.model, fv);

    for (const PiiType& t : exact) det.pii_found.insert({t, DetectMethod::StringMatch});
    for (const PiiType& t : predicted)
        if (!exact.count(t)) det.pii_found.insert({t, DetectMethod::Classifier});

    det.elapsed_micros =
        std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0)
            .count();
    return det;
}

inline Detection inspect_packet(const DetectionEngine& engine, const PacketRecord& r,
                                const ConnectionTable& connections) {
    return inspect_packet(engine, r.payload, meta_of(r), connections);
}

// ---------------------------------------------------------------------------
// Policy.

enum class Action { Allow, Block, HashReplace };

inline std::string to_string(Action a) {
    switch (a) {
        case Action::Allow: return "allow";
        case Action::Block: return "block";
        case Action::HashReplace: return "hash";
    }
    return "?";
}

inline Action action_from_string(const std::string& s) {
    if (s == "allow") return Action::Allow;
    if (s == "block") return Action::Block;
    if (s == "hash") return Action::HashReplace;
    throw DataError("unknown action '" + s + "' (use allow|block|hash)");
}

using PromptFn = std::function<Action(const std::string& app, const PiiType& type)>;

// Remembered per-(app, type) decisions.  Streaming mode forwards undecided
// packets and queues the question instead of blocking a worker on a prompt.
class PolicyStore {
public:
    explicit PolicyStore(uint64_t seed = 0x9e3779b97f4a7c15ull) : rng_(seed) {}

    void set_rule(const std::string& app, const PiiType& type, Action a) {
        std::lock_guard lock(mu_);
        rules_[{app, type.name()}] = a;
    }

    std::optional<Action> rule(const std::string& app, const PiiType& type) const {
        std::lock_guard lock(mu_);
        auto it = rules_.find({app, type.name()});
        return it == rules_.end() ? std::nullopt : std::make_optional(it->second);
    }

    void set_default(std::optional<Action> a) {
        std::lock_guard lock(mu_);
        default_ = a;
    }
    std::optional<Action> default_action() const {
        std::lock_guard lock(mu_);
        return default_;
    }

    void set_streaming(bool on) {
        std::lock_guard lock(mu_);
        streaming_ = on;
    }
    bool streaming() const {
        std::lock_guard lock(mu_);
        return streaming_;
    }

    // (app, type-name) pairs awaiting a human decision, deduplicated, FIFO.
    std::vector<std::pair<std::string, std::string>> pending() const {
        std::lock_guard lock(mu_);
        return pending_;
    }
    void clear_pending() {
        std::lock_guard lock(mu_);
        pending_.clear();
    }

    size_t rule_count() const {
        std::lock_guard lock(mu_);
        return rules_.size();
    }

    std::string random_replacement(size_t len) {
        static constexpr char chars[] = "abcdefghijklmnopqrstuvwxyz0123456789";
        std::lock_guard lock(mu_);
        std::string out(len, 'x');
        for (char& c : out) c = chars[rng_.bounded(sizeof chars - 1)];
        return out;
    }

private:
    friend struct PolicyAccess;
    void queue_pending(const std::string& app, const std::string& type) {
        std::lock_guard lock(mu_);
        for (const auto& [a, t] : pending_)
            if (a == app && t == type) return;
        pending_.emplace_back(app, type);
    }

    mutable std::mutex mu_;
    std::map<std::pair<std::string, std::string>, Action> rules_;
    std::optional<Action> default_;
    bool streaming_ = false;
    std::vector<std::pair<std::string, std::string>> pending_;
    Rng rng_;
};

struct PolicyAccess {
    static void queue(PolicyStore& s, const std::string& app, const std::string& type) {
        s.queue_pending(app, type);
    }
};

struct ActionOutcome {
    bool dropped = false;
    std::string payload;     // forwarded bytes (possibly rewritten); empty when dropped
    bool modified = false;
    bool undecided = false;  // streaming mode forwarded before a rule existed
    // Action applied per detected type, for logging.
    std::map<PiiType, Action> applied;
};

inline ActionOutcome apply_policy(std::string_view payload, const Detection& detection,
                                  const DetectionEngine& engine, PolicyStore& store,
                                  const PromptFn& prompt = nullptr) {
    ActionOutcome out;
    out.payload.assign(payload.data(), payload.size());
    if (detection.empty()) return out;

    // Resolve every detected type first so each missing rule prompts exactly
    // once and the decision is remembered even when another type blocks.
    std::map<PiiType, Action> resolved;
    bool undecided = false;
    for (const auto& [type, method] : detection.pii_found) {
        if (auto a = store.rule(detection.app_id, type)) {
            resolved[type] = *a;
            continue;
        }
        if (prompt) {
            Action a = prompt(detection.app_id, type);
            store.set_rule(detection.app_id, type, a);
            resolved[type] = a;
            continue;
        }
        if (auto d = store.default_action()) {
            resolved[type] = *d;
            continue;
        }
        if (store.streaming()) {
            PolicyAccess::queue(store, detection.app_id, type.name());
            resolved[type] = Action::Allow;  // forwarded pending a decision
            undecided = true;
            continue;
        }
        throw PromptUnavailableError(detection.app_id, type.name());
    }

    // A classifier-only detection has no byte span to rewrite, so a
    // hash-replace rule degrades to block for that type.
    std::map<PiiType, DetectMethod> methods;
    for (const auto& [type, method] : detection.pii_found) methods[type] = method;
    for (auto& [type, action] : resolved)
        if (action == Action::HashReplace && methods[type] == DetectMethod::Classifier)
            action = Action::Block;
    out.applied = resolved;
    out.undecided = undecided;

    for (const auto& [type, action] : resolved) {
        if (action == Action::Block) {
            out.dropped = true;
            out.payload.clear();
            out.modified = false;
            return out;
        }
    }

    for (const auto& [type, action] : resolved) {
        if (action != Action::HashReplace) continue;
        auto it = engine.dictionary.find(type);
        if (it == engine.dictionary.end()) continue;
        for (const std::string& literal : it->second) {
            if (literal.empty()) continue;
            size_t pos;
            while ((pos = out.payload.find(literal)) != std::string::npos) {
                std::string repl = store.random_replacement(literal.size());
                while (repl == literal) repl = store.random_replacement(literal.size());
                out.payload.replace(pos, literal.size(), repl);
                out.modified = true;
            }
        }
    }
    return out;
}

// JSONL log line for one inspected packet.
inline json detection_to_json(const Detection& det, const ActionOutcome* outcome = nullptr) {
    json j;
    j["packet_id"] = det.packet_id;
    j["app"] = det.app_id;
    j["types"] = json::array();
    for (const auto& [type, method] : det.pii_found)
        j["types"].push_back({{"type", type.name()}, {"method", to_string(method)}});
    j["model"] = det.model_used;
    if (outcome) {
        if (outcome->dropped) j["action"] = "block";
        else if (outcome->modified) j["action"] = "hash";
        else j["action"] = "allow";
        if (outcome->undecided) j["undecided"] = true;
    }
    j["us"] = det.elapsed_micros;
    return j;
}

}  // namespace piiscan
