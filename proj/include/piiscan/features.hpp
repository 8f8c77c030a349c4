#pragma once

// Feature extraction.  A payload is tokenized into delimiter-free words; a
// vocabulary maps frequent words to dense feature ids.  Two extraction paths
// must agree: extract_parse walks tokens, extract_dpi runs the single-pass
// matcher over the raw bytes.  The trick making them equivalent is storing
// each feature literal *with its flanking delimiter bytes* (DelimiterWrapped
// mode): "/profile?" can then never be confused with "video_profile", because
// the flanks are part of the searched bytes.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "piiscan/aho_corasick.hpp"
#include "piiscan/core.hpp"

namespace piiscan {

class EmptyVocabularyError : public Error {
public:
    EmptyVocabularyError() : Error("no token survives the vocabulary filters") {}
};

class AutomatonVocabMismatchError : public Error {
public:
    AutomatonVocabMismatchError() : Error("automaton does not match this vocabulary") {}
};

// ---------------------------------------------------------------------------
// Delimiters and tokenization.

class DelimiterSet {
public:
    DelimiterSet() : DelimiterSet(std::string("?=:&/ ,;\r\n\"")) {}

    explicit DelimiterSet(const std::string& bytes) {
        table_.fill(false);
        for (char c : bytes) table_[static_cast<uint8_t>(c)] = true;
        bytes_ = bytes;
        std::sort(bytes_.begin(), bytes_.end());
        bytes_.erase(std::unique(bytes_.begin(), bytes_.end()), bytes_.end());
    }

    bool contains(char c) const { return table_[static_cast<uint8_t>(c)]; }
    const std::string& bytes() const { return bytes_; }  // sorted, deduplicated
    bool operator==(const DelimiterSet& o) const { return bytes_ == o.bytes_; }

private:
    std::array<bool, 256> table_{};
    std::string bytes_;
};

// A maximal delimiter-free run plus its flanking bytes.  A missing flank means
// the token touches the payload boundary.
struct Token {
    std::string word;
    std::optional<char> left;
    std::optional<char> right;
    bool operator==(const Token&) const = default;
};

inline std::vector<Token> tokenize(std::string_view payload, const DelimiterSet& delims) {
    std::vector<Token> out;
    size_t i = 0;
    while (i < payload.size()) {
        if (delims.contains(payload[i])) {
            ++i;
            continue;
        }
        size_t j = i;
        while (j < payload.size() && !delims.contains(payload[j])) ++j;
        Token t;
        t.word.assign(payload.substr(i, j - i));
        if (i > 0) t.left = payload[i - 1];
        if (j < payload.size()) t.right = payload[j];
        out.push_back(std::move(t));
        i = j;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Vocabulary.

// Bare: feature literal is the word alone (token-equality semantics; a raw
// substring search over bare words is what produces /profile-vs-video_profile
// style false positives).  DelimiterWrapped: the literal carries the flanking
// delimiter bytes, so a substring search is token-exact.
enum class VocabMode { Bare, DelimiterWrapped };

struct VocabConfig {
    size_t min_count = 2;        // min document frequency
    double max_doc_frac = 0.9;   // drop near-ubiquitous tokens
    VocabMode mode = VocabMode::DelimiterWrapped;
};

struct VocabEntry {
    int32_t id = 0;
    std::string literal;    // searchable bytes (word, possibly with flanks)
    std::string word;       // the delimiter-free core
    bool open_left = false;   // literal lacks a left flank (token touched start)
    bool open_right = false;  // literal lacks a right flank (token touched end)
    bool operator==(const VocabEntry&) const = default;
};

class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(VocabMode mode, DelimiterSet delims, std::vector<VocabEntry> entries)
        : mode_(mode), delims_(std::move(delims)), entries_(std::move(entries)) {
        for (const auto& e : entries_) index_.emplace(e.literal, e.id);
    }

    VocabMode mode() const { return mode_; }
    const DelimiterSet& delims() const { return delims_; }
    const std::vector<VocabEntry>& entries() const { return entries_; }
    size_t size() const { return entries_.size(); }
    const VocabEntry& entry(int32_t id) const { return entries_[static_cast<size_t>(id)]; }

    std::optional<int32_t> lookup(const std::string& literal) const {
        auto it = index_.find(literal);
        return it == index_.end() ? std::nullopt : std::make_optional(it->second);
    }

    bool operator==(const Vocabulary& o) const {
        return mode_ == o.mode_ && delims_ == o.delims_ && entries_ == o.entries_;
    }

private:
    VocabMode mode_ = VocabMode::DelimiterWrapped;
    DelimiterSet delims_;
    std::vector<VocabEntry> entries_;  // sorted by literal; ids dense in that order
    std::unordered_map<std::string, int32_t> index_;
};

// Render the literal a token contributes in the given mode.  In wrapped mode a
// boundary flank is simply absent from the literal (the matcher compensates by
// accepting such entries only at the payload edge).
inline std::string token_literal(const Token& t, VocabMode mode) {
    if (mode == VocabMode::Bare) return t.word;
    std::string lit;
    if (t.left) lit.push_back(*t.left);
    lit += t.word;
    if (t.right) lit.push_back(*t.right);
    return lit;
}

// Build a vocabulary from training payloads.  Document frequency is the number
// of records containing the literal at least once.  Tokens equal to any PII
// literal from the dataset dictionary never become features.
inline Vocabulary build_vocabulary(const Dataset& train, const DelimiterSet& delims,
                                   const VocabConfig& cfg = {}) {
    struct Info {
        size_t doc_freq = 0;
        std::string word;
        bool open_left = false, open_right = false;
    };
    std::unordered_set<std::string> pii_words;
    for (const auto& [type, lits] : train.pii_dictionary)
        for (const auto& lit : lits) pii_words.insert(lit);

    std::map<std::string, Info> counts;  // ordered: literal order == id order
    for (const auto& r : train.records) {
        std::set<std::string> seen;
        for (const auto& t : tokenize(r.payload, delims)) {
            if (pii_words.count(t.word)) continue;
            std::string lit = token_literal(t, cfg.mode);
            if (!seen.insert(lit).second) continue;
            Info& info = counts[lit];
            ++info.doc_freq;
            info.word = t.word;
            info.open_left = !t.left;
            info.open_right = !t.right;
        }
    }

    const double max_docs = cfg.max_doc_frac * static_cast<double>(train.records.size());
    std::vector<VocabEntry> entries;
    for (const auto& [lit, info] : counts) {
        if (info.doc_freq < cfg.min_count) continue;
        if (static_cast<double>(info.doc_freq) > max_docs) continue;
        VocabEntry e;
        e.id = static_cast<int32_t>(entries.size());
        e.literal = lit;
        e.word = info.word;
        if (cfg.mode == VocabMode::DelimiterWrapped) {
            e.open_left = info.open_left;
            e.open_right = info.open_right;
        }
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw EmptyVocabularyError();
    return Vocabulary(cfg.mode, delims, std::move(entries));
}

// ---------------------------------------------------------------------------
// Extraction.

// Binary presence vector, stored sparse as a sorted id set.
struct FeatureVector {
    std::vector<int32_t> ids;  // sorted ascending, unique

    bool contains(int32_t id) const {
        return std::binary_search(ids.begin(), ids.end(), id);
    }
    bool operator==(const FeatureVector&) const = default;
};

inline FeatureVector to_feature_vector(std::set<int32_t>& s) {
    FeatureVector fv;
    fv.ids.assign(s.begin(), s.end());
    return fv;
}

// Token-walk extraction: feature present iff some token renders exactly the
// entry literal (word equality in Bare mode; word plus flanks in wrapped mode).
inline FeatureVector extract_parse(std::string_view payload, const Vocabulary& vocab) {
    std::set<int32_t> ids;
    for (const auto& t : tokenize(payload, vocab.delims())) {
        if (auto id = vocab.lookup(token_literal(t, vocab.mode()))) ids.insert(*id);
    }
    return to_feature_vector(ids);
}

// Automaton whose FeaturePattern ids are the vocabulary's feature ids.
inline Automaton build_feature_automaton(const Vocabulary& vocab) {
    PatternSet set;
    for (const auto& e : vocab.entries()) set.add_feature(e.id, e.literal, e.id);
    return build_automaton(set);
}

// Single-pass extraction over raw bytes.  In wrapped mode an entry missing a
// flank (its token touched the payload boundary when the vocabulary was
// built) only counts when the occurrence sits at the same payload edge, which
// keeps this bit-for-bit equal to extract_parse.
inline FeatureVector extract_dpi(std::string_view payload, const Vocabulary& vocab,
                                 const Automaton& automaton) {
    if (automaton.pattern_count() != vocab.size()) throw AutomatonVocabMismatchError();
    std::set<int32_t> ids;
    const bool wrapped = vocab.mode() == VocabMode::DelimiterWrapped;
    automaton.scan(payload, [&](int32_t pattern_id, size_t end) {
        const Pattern& p = automaton.pattern(pattern_id);
        const VocabEntry& e = vocab.entry(p.feature_id);
        if (wrapped) {
            size_t start = end + 1 - p.literal.size();
            if (e.open_left && start != 0) return;
            if (e.open_right && end + 1 != payload.size()) return;
        }
        ids.insert(p.feature_id);
    });
    return to_feature_vector(ids);
}

// ---------------------------------------------------------------------------
// Serialization: {"mode", "delims_b64", "entries": [{"id", "literal_b64"}]}.
// Flank flags are re-derived from literal + delimiters on load.

inline json vocabulary_to_json(const Vocabulary& vocab) {
    json j;
    j["mode"] = vocab.mode() == VocabMode::Bare ? "bare" : "delimiter_wrapped";
    j["delims_b64"] = base64_encode(vocab.delims().bytes());
    json entries = json::array();
    for (const auto& e : vocab.entries()) {
        json je;
        je["id"] = e.id;
        je["literal_b64"] = base64_encode(e.literal);
        entries.push_back(std::move(je));
    }
    j["entries"] = std::move(entries);
    return j;
}

inline Vocabulary vocabulary_from_json(const json& j) {
    std::string mode_s = j.at("mode").get<std::string>();
    VocabMode mode;
    if (mode_s == "bare")
        mode = VocabMode::Bare;
    else if (mode_s == "delimiter_wrapped")
        mode = VocabMode::DelimiterWrapped;
    else
        throw DataError("unknown vocabulary mode '" + mode_s + "'");
    DelimiterSet delims(base64_decode(j.at("delims_b64").get<std::string>()));
    std::vector<VocabEntry> entries;
    for (const auto& je : j.at("entries")) {
        VocabEntry e;
        e.id = je.at("id").get<int32_t>();
        e.literal = base64_decode(je.at("literal_b64").get<std::string>());
        if (e.literal.empty()) throw DataError("vocabulary entry with empty literal");
        if (mode == VocabMode::Bare) {
            e.word = e.literal;
        } else {
            size_t b = delims.contains(e.literal.front()) ? 1 : 0;
            size_t len = e.literal.size();
            size_t trail = (len > b && delims.contains(e.literal.back())) ? 1 : 0;
            e.open_left = b == 0;
            e.open_right = trail == 0;
            e.word = e.literal.substr(b, len - b - trail);
        }
        if (e.id != static_cast<int32_t>(entries.size()))
            throw DataError("vocabulary entry ids must be dense and ordered");
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw EmptyVocabularyError();
    return Vocabulary(mode, std::move(delims), std::move(entries));
}

}  // namespace piiscan
