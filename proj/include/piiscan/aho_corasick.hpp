#pragma once

// Multi-pattern byte matcher.  All patterns (PII literals and feature
// literals) are compiled into one automaton so a payload is inspected in a
// single pass regardless of how many patterns are loaded.  Matching is
// case-sensitive over raw bytes; overlapping occurrences are all reported.

#include <algorithm>
#include <array>
#include <atomic>
#include <utility>
#include <cstdint>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "piiscan/core.hpp"

namespace piiscan {

class EmptyPatternError : public Error {
public:
    EmptyPatternError() : Error("pattern literal must be non-empty") {}
};

class DuplicatePatternIdError : public Error {
public:
    explicit DuplicatePatternIdError(int32_t id)
        : Error("duplicate or non-dense pattern id " + std::to_string(id)) {}
};

enum class PatternKind { Pii, Feature };

struct Pattern {
    int32_t id = 0;            // dense, 0..n-1
    std::string literal;       // raw bytes, non-empty
    PatternKind kind = PatternKind::Feature;
    PiiType pii_type;          // meaningful when kind == Pii
    int32_t feature_id = 0;    // meaningful when kind == Feature
};

class PatternSet {
public:
    void add_pii(int32_t id, std::string literal, PiiType type) {
        Pattern p;
        p.id = id;
        p.literal = std::move(literal);
        p.kind = PatternKind::Pii;
        p.pii_type = std::move(type);
        patterns_.push_back(std::move(p));
    }

    void add_feature(int32_t id, std::string literal, int32_t feature_id) {
        Pattern p;
        p.id = id;
        p.literal = std::move(literal);
        p.kind = PatternKind::Feature;
        p.feature_id = feature_id;
        patterns_.push_back(std::move(p));
    }

    const std::vector<Pattern>& patterns() const { return patterns_; }
    size_t size() const { return patterns_.size(); }

    // ids must be exactly 0..n-1 with no gaps or repeats, literals non-empty.
    void validate() const {
        std::vector<char> seen(patterns_.size(), 0);
        for (const auto& p : patterns_) {
            if (p.literal.empty()) throw EmptyPatternError();
            if (p.id < 0 || static_cast<size_t>(p.id) >= patterns_.size() || seen[p.id])
                throw DuplicatePatternIdError(p.id);
            seen[p.id] = 1;
        }
    }

private:
    std::vector<Pattern> patterns_;
};

struct Match {
    int32_t pattern_id = 0;
    size_t end_offset = 0;     // offset of the last byte of the occurrence
    bool operator==(const Match&) const = default;
};

class Automaton {
public:
    Automaton() = default;
    Automaton(Automaton&& o) noexcept { *this = std::move(o); }
    Automaton& operator=(Automaton&& o) noexcept {
        next_ = std::move(o.next_);
        out_head_ = std::move(o.out_head_);
        out_next_ = std::move(o.out_next_);
        out_pattern_ = std::move(o.out_pattern_);
        patterns_ = std::move(o.patterns_);
        scan_count_.store(o.scan_count_.load(std::memory_order_relaxed),
                          std::memory_order_relaxed);
        return *this;
    }

    // Single scan over the payload; on_match(pattern_id, end_offset) fires for
    // every occurrence of every pattern, overlapping ones included.
    template <typename F>
    void scan(std::string_view payload, F&& on_match) const {
        scan_count_.fetch_add(1, std::memory_order_relaxed);
        int32_t state = 0;
        for (size_t i = 0; i < payload.size(); ++i) {
            state = next_[static_cast<size_t>(state) * 256 + static_cast<uint8_t>(payload[i])];
            for (int32_t oi = out_head_[state]; oi >= 0; oi = out_next_[oi])
                on_match(out_pattern_[oi], i);
        }
    }

    // All matches ordered by (end_offset, pattern_id).
    std::vector<Match> search(std::string_view payload) const {
        std::vector<Match> ms;
        scan(payload, [&](int32_t id, size_t end) { ms.push_back({id, end}); });
        // Output lists follow suffix-link order, not id order, so normalize.
        std::sort(ms.begin(), ms.end(), [](const Match& a, const Match& b) {
            return a.end_offset != b.end_offset ? a.end_offset < b.end_offset
                                                : a.pattern_id < b.pattern_id;
        });
        return ms;
    }

    size_t pattern_count() const { return patterns_.size(); }
    const Pattern& pattern(int32_t id) const { return patterns_[static_cast<size_t>(id)]; }

    // Scans performed since construction; lets tests assert the one-pass rule.
    uint64_t scan_count() const { return scan_count_.load(std::memory_order_relaxed); }

    friend Automaton build_automaton(const PatternSet& set);

private:
    std::vector<int32_t> next_;        // node * 256 + byte -> node
    std::vector<int32_t> out_head_;    // node -> first output index or -1
    std::vector<int32_t> out_next_;    // output chain
    std::vector<int32_t> out_pattern_; // output -> pattern id
    std::vector<Pattern> patterns_;    // indexed by id
    mutable std::atomic<uint64_t> scan_count_{0};
};

inline Automaton build_automaton(const PatternSet& set) {
    set.validate();
    Automaton a;
    a.patterns_.resize(set.size());
    for (const auto& p : set.patterns()) a.patterns_[static_cast<size_t>(p.id)] = p;

    // Trie construction.
    std::vector<std::array<int32_t, 256>> go(1);
    go[0].fill(-1);
    std::vector<int32_t> fail(1, 0);
    a.out_head_.assign(1, -1);
    auto add_output = [&](int32_t node, int32_t pattern_id) {
        a.out_pattern_.push_back(pattern_id);
        a.out_next_.push_back(a.out_head_[node]);
        a.out_head_[node] = static_cast<int32_t>(a.out_pattern_.size()) - 1;
    };
    for (const auto& p : a.patterns_) {
        int32_t node = 0;
        for (char ch : p.literal) {
            uint8_t b = static_cast<uint8_t>(ch);
            if (go[node][b] < 0) {
                go[node][b] = static_cast<int32_t>(go.size());
                go.emplace_back();
                go.back().fill(-1);
                fail.push_back(0);
                a.out_head_.push_back(-1);
            }
            node = go[node][b];
        }
        add_output(node, p.id);
    }

    // BFS: suffix links, merged output lists, and the dense transition table.
    std::queue<int32_t> q;
    for (int b = 0; b < 256; ++b) {
        if (go[0][b] < 0) {
            go[0][b] = 0;
        } else {
            fail[go[0][b]] = 0;
            q.push(go[0][b]);
        }
    }
    while (!q.empty()) {
        int32_t u = q.front();
        q.pop();
        // Append the fail node's outputs so every suffix match is reported.
        for (int32_t oi = a.out_head_[fail[u]]; oi >= 0; oi = a.out_next_[oi])
            add_output(u, a.out_pattern_[oi]);
        for (int b = 0; b < 256; ++b) {
            int32_t v = go[u][b];
            if (v < 0) {
                go[u][b] = go[fail[u]][b];
            } else {
                fail[v] = go[fail[u]][b];
                q.push(v);
            }
        }
    }

    a.next_.resize(go.size() * 256);
    for (size_t n = 0; n < go.size(); ++n)
        for (int b = 0; b < 256; ++b) a.next_[n * 256 + static_cast<size_t>(b)] = go[n][b];
    return a;
}

// Distinct PII types whose literals occur in the payload.
inline std::set<PiiType> match_pii(const Automaton& a, std::string_view payload) {
    std::set<PiiType> out;
    a.scan(payload, [&](int32_t id, size_t) {
        const Pattern& p = a.pattern(id);
        if (p.kind == PatternKind::Pii) out.insert(p.pii_type);
    });
    return out;
}

// Automaton over a PII dictionary (one pattern per literal).
inline Automaton build_pii_automaton(const PiiDictionary& dict) {
    PatternSet set;
    int32_t id = 0;
    for (const auto& [type, lits] : dict)
        for (const auto& lit : lits) set.add_pii(id++, lit, type);
    return build_automaton(set);
}

}  // namespace piiscan
