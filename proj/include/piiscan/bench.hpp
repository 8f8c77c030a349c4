#pragma once

// Microbenchmarks for the hot per-packet operations: single-pass (automaton)
// feature extraction, parse-based extraction, and multi-label prediction.
// Workloads are synthesized deterministically from a seed so runs are
// comparable; reported numbers are per-call microseconds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "piiscan/core.hpp"
#include "piiscan/features.hpp"
#include "piiscan/multilabel.hpp"
#include "piiscan/rng.hpp"

namespace piiscan {

struct BenchConfig {
    size_t payload_size = 1500;  // bytes per synthesized payload
    size_t patterns = 500;       // vocabulary entries in the automaton
    size_t iters = 10000;        // timed calls per row
    uint64_t seed = 42;
};

struct BenchRow {
    std::string name;
    double median_us = 0.0;
    double mean_us = 0.0;
    double stddev_us = 0.0;  // sample (n-1)
    size_t iters = 0;
};

struct BenchReport {
    BenchConfig config;
    std::vector<BenchRow> rows;  // dpi-extract, parse-extract, ml-predict

    const BenchRow* row(const std::string& name) const {
        for (const auto& r : rows)
            if (r.name == name) return &r;
        return nullptr;
    }
};

namespace detail {

inline BenchRow summarize_timings(std::string name, std::vector<double> us) {
    BenchRow row;
    row.name = std::move(name);
    row.iters = us.size();
    std::sort(us.begin(), us.end());
    size_t n = us.size();
    row.median_us = n % 2 ? us[n / 2] : 0.5 * (us[n / 2 - 1] + us[n / 2]);
    double sum = 0.0;
    for (double v : us) sum += v;
    row.mean_us = sum / double(n);
    if (n > 1) {
        double ss = 0.0;
        for (double v : us) ss += (v - row.mean_us) * (v - row.mean_us);
        row.stddev_us = std::sqrt(ss / double(n - 1));
    }
    return row;
}

template <typename Fn>
inline BenchRow time_calls(const std::string& name, size_t iters, Fn&& fn) {
    std::vector<double> us;
    us.reserve(iters);
    for (size_t i = 0; i < iters; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        auto t1 = std::chrono::steady_clock::now();
        us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    }
    return summarize_timings(name, std::move(us));
}

}  // namespace detail

inline BenchReport run_bench(const BenchConfig& cfg) {
    if (cfg.iters == 0) throw DataError("bench iteration count must be positive");
    if (cfg.payload_size == 0 || cfg.patterns == 0)
        throw DataError("bench payload size and pattern count must be positive");

    Rng rng(cfg.seed);

    // Vocabulary of '&key=' literals, closed on both flanks.
    std::vector<VocabEntry> entries;
    entries.reserve(cfg.patterns);
    std::vector<std::string> words;
    for (size_t i = 0; i < cfg.patterns; ++i) {
        char buf[24];
        std::snprintf(buf, sizeof buf, "k%05zu", i);
        words.push_back(buf);
    }
    std::sort(words.begin(), words.end());
    for (size_t i = 0; i < words.size(); ++i) {
        VocabEntry e;
        e.word = words[i];
        e.literal = "&" + e.word + "=";
        e.id = int32_t(i);
        entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(),
              [](const VocabEntry& a, const VocabEntry& b) { return a.literal < b.literal; });
    for (size_t i = 0; i < entries.size(); ++i) entries[i].id = int32_t(i);
    Vocabulary vocab(VocabMode::DelimiterWrapped, DelimiterSet{}, entries);

    // Payload of exactly payload_size bytes: key=value pairs over a random
    // subset of the vocabulary words, padded with inert filler.
    std::string payload = "GET /data?start=1";
    while (true) {
        const std::string& w = words[rng.bounded(words.size())];
        std::string pair = "&" + w + "=v" + std::to_string(rng.bounded(10000));
        if (payload.size() + pair.size() > cfg.payload_size) break;
        payload += pair;
    }
    if (payload.size() < cfg.payload_size) payload += '&';
    while (payload.size() < cfg.payload_size) payload += 'x';
    payload.resize(cfg.payload_size);

    Automaton automaton = build_feature_automaton(vocab);

    // Training set for the prediction row: each label fires on one key word.
    const size_t n_labels = std::min<size_t>(16, cfg.patterns);
    Dataset train;
    std::set<PiiType> labels;
    std::vector<PiiType> label_types;
    for (size_t i = 0; i < n_labels; ++i) {
        PiiType t = PiiType::custom("bench_label_" + std::to_string(i));
        labels.insert(t);
        label_types.push_back(t);
    }
    for (size_t i = 0; i < 64 * n_labels; ++i) {
        PacketRecord r;
        r.id = int64_t(i);
        r.app_id = "bench";
        size_t label = i % n_labels;
        bool positive = (i / n_labels) % 2 == 0;
        r.payload = "GET /data?start=1";
        if (positive) {
            r.payload += "&" + words[label] + "=v1";
            r.labels.insert(label_types[label]);
        }
        r.payload += "&" + words[n_labels + rng.bounded(words.size() - n_labels)] + "=v2";
        train.records.push_back(std::move(r));
    }
    BinaryRelevanceModel model = train_binary_relevance(train, labels, vocab, TrainConfig{});
    FeatureVector fv = extract_parse(payload, vocab);

    BenchReport report;
    report.config = cfg;
    volatile size_t sink = 0;  // keep the timed calls observable
    report.rows.push_back(detail::time_calls("dpi-extract", cfg.iters, [&] {
        sink = sink + extract_dpi(payload, vocab, automaton).ids.size();
    }));
    report.rows.push_back(detail::time_calls("parse-extract", cfg.iters, [&] {
        sink = sink + extract_parse(payload, vocab).ids.size();
    }));
    report.rows.push_back(detail::time_calls("ml-predict", cfg.iters, [&] {
        sink = sink + predict_multilabel(model, fv).size();
    }));
    (void)sink;
    return report;
}

inline std::string render_bench(const BenchReport& r) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "payload %zu B, %zu patterns, %zu iters\n",
                  r.config.payload_size, r.config.patterns, r.config.iters);
    out << line;
    std::snprintf(line, sizeof line, "%-16s %12s %12s %12s\n", "operation", "median_us",
                  "mean_us", "stddev_us");
    out << line;
    for (const auto& row : r.rows) {
        std::snprintf(line, sizeof line, "%-16s %12.3f %12.3f %12.3f\n", row.name.c_str(),
                      row.median_us, row.mean_us, row.stddev_us);
        out << line;
    }
    return out.str();
}

inline json bench_to_json(const BenchReport& r) {
    json j;
    j["payload_size"] = r.config.payload_size;
    j["patterns"] = r.config.patterns;
    j["iters"] = r.config.iters;
    j["seed"] = r.config.seed;
    j["rows"] = json::array();
    for (const auto& row : r.rows)
        j["rows"].push_back({{"name", row.name},
                             {"median_us", row.median_us},
                             {"mean_us", row.mean_us},
                             {"stddev_us", row.stddev_us},
                             {"iters", row.iters}});
    return j;
}

}  // namespace piiscan
