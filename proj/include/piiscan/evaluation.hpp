#pragma once

// Metrics and the six-method comparison harness: three evaluation schemes
// (binary exposure flag, exposed-records-only multi-label, combined
// multi-label with no-leak as the empty set), example-based multi-label
// metrics, stratified k-fold cross-validation, and the 6-method by 3-scheme
// by 2-dispatch-scope comparison table.
//
// Methods: 1 heuristic on all types; 2 heuristic on unknown-category types;
// 3 string matching for predefined plus heuristic for unknown; 4 per-label
// trees on all types; 5 trees on unknown; 6 string matching plus trees on
// unknown.  The string-matching component is parameterless, so it is applied
// to each fold's test records directly rather than cross-validated.  Stored
// datasets carry scrubbed payloads whose labels are by construction exactly
// what the matcher finds on the original payload, so the predefined-category
// subset of the true labels *is* the matcher output for that record.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "piiscan/baseline.hpp"
#include "piiscan/core.hpp"
#include "piiscan/registry.hpp"
#include "piiscan/rng.hpp"

namespace piiscan {

class LengthMismatchError : public DataError {
public:
    LengthMismatchError(size_t preds, size_t truths)
        : DataError("prediction/truth length mismatch: " + std::to_string(preds) + " vs " +
                    std::to_string(truths)) {}
};

enum class EvalScheme { Binary, Leak, Combined };

inline std::string to_string(EvalScheme s) {
    switch (s) {
        case EvalScheme::Binary: return "binary";
        case EvalScheme::Leak: return "leak";
        case EvalScheme::Combined: return "combined";
    }
    return "?";
}

inline EvalScheme eval_scheme_from_string(const std::string& s) {
    if (s == "binary") return EvalScheme::Binary;
    if (s == "leak") return EvalScheme::Leak;
    if (s == "combined") return EvalScheme::Combined;
    throw DataError("unknown evaluation scheme '" + s + "'");
}

// ---------------------------------------------------------------------------
// Example-based multi-label metrics (means over examples).

struct MultilabelMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;

    bool operator==(const MultilabelMetrics&) const = default;
};

inline MultilabelMetrics multilabel_metrics(const std::vector<std::set<PiiType>>& preds,
                                            const std::vector<std::set<PiiType>>& truths) {
    if (preds.size() != truths.size()) throw LengthMismatchError(preds.size(), truths.size());
    if (preds.empty()) throw DataError("multilabel_metrics: empty input");
    MultilabelMetrics m;
    for (size_t i = 0; i < preds.size(); ++i) {
        const std::set<PiiType>& p = preds[i];
        const std::set<PiiType>& t = truths[i];
        std::vector<PiiType> inter;
        std::set_intersection(p.begin(), p.end(), t.begin(), t.end(), std::back_inserter(inter));
        size_t un = p.size() + t.size() - inter.size();
        // Empty denominator scores 1 when both sides are empty, else 0.
        m.accuracy += un == 0 ? 1.0 : double(inter.size()) / double(un);
        m.precision += p.empty() ? (t.empty() ? 1.0 : 0.0) : double(inter.size()) / double(p.size());
        m.recall += t.empty() ? (p.empty() ? 1.0 : 0.0) : double(inter.size()) / double(t.size());
    }
    m.accuracy /= double(preds.size());
    m.precision /= double(preds.size());
    m.recall /= double(preds.size());
    return m;
}

// ---------------------------------------------------------------------------
// Confusion-matrix metrics for the binary scheme.

struct BinaryMetrics {
    double f_measure = 0.0;
    double specificity = 0.0;
    double recall = 0.0;
    double accuracy = 0.0;
    double precision = 0.0;
    // Names of metrics whose denominator was zero (scored 0 by convention).
    std::vector<std::string> zero_denominator;

    bool operator==(const BinaryMetrics&) const = default;
};

inline BinaryMetrics binary_metrics(const std::vector<bool>& preds,
                                    const std::vector<bool>& truths) {
    if (preds.size() != truths.size()) throw LengthMismatchError(preds.size(), truths.size());
    if (preds.empty()) throw DataError("binary_metrics: empty input");
    size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] && truths[i]) ++tp;
        else if (preds[i]) ++fp;
        else if (truths[i]) ++fn;
        else ++tn;
    }
    BinaryMetrics m;
    auto ratio = [&](size_t num, size_t den, const char* name) {
        if (den == 0) {
            m.zero_denominator.push_back(name);
            return 0.0;
        }
        return double(num) / double(den);
    };
    m.recall = ratio(tp, tp + fn, "recall");
    m.specificity = ratio(tn, tn + fp, "specificity");
    m.precision = ratio(tp, tp + fp, "precision");
    m.f_measure = ratio(2 * tp, 2 * tp + fp + fn, "f_measure");
    m.accuracy = double(tp + tn) / double(preds.size());
    return m;
}

// ---------------------------------------------------------------------------
// Stratified folds on the has-leak flag: positives dealt round-robin, then
// negatives continue the deal, so fold sizes differ by at most one.

inline std::vector<std::vector<size_t>> stratified_folds(const Dataset& data, size_t k,
                                                         uint64_t seed) {
    if (k < 2) throw DataError("fold count must be at least 2");
    if (data.records.size() < k) throw DataError("fewer records than folds");
    std::vector<size_t> pos, neg;
    for (size_t i = 0; i < data.records.size(); ++i)
        (data.records[i].has_leak() ? pos : neg).push_back(i);
    Rng rng(seed);
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::vector<std::vector<size_t>> folds(k);
    size_t next = 0;
    for (size_t i : pos) folds[next++ % k].push_back(i);
    for (size_t i : neg) folds[next++ % k].push_back(i);
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

// ---------------------------------------------------------------------------
// Per-method prediction pass.

namespace detail {

struct HeuristicBundle {
    Vocabulary vocab;
    DecisionTree gate;
    KeyProbabilityTable table;
};

inline HeuristicBundle train_heuristic(const Dataset& train) {
    VocabConfig vc;
    vc.mode = VocabMode::Bare;
    HeuristicBundle b{build_vocabulary(train, DelimiterSet{}, vc), {}, {}};
    std::vector<FeatureVector> vectors = extract_all(train, b.vocab);
    std::vector<LabeledSample> samples(vectors.size());
    for (size_t i = 0; i < vectors.size(); ++i)
        samples[i] = {vectors[i], train.records[i].has_leak()};
    b.gate = train_tree(samples, TrainConfig{});
    b.table = build_key_table(train, b.vocab);
    calibrate_thresholds(b.table, train, b.vocab);
    return b;
}

struct PredictionItem {
    size_t record_idx = 0;
    std::optional<std::string> entity;  // present when a specialized model served it
    std::set<PiiType> pred;
    std::set<PiiType> truth;  // under the method's truth view
};

struct MethodPredictions {
    int method_id = 0;
    ClassifierScope scope = ClassifierScope::PerApp;
    std::vector<PredictionItem> items;       // one per record, folds pooled
    std::vector<std::string> flagged;        // entities with < k positives
};

inline bool method_uses_trees(int method_id) { return method_id >= 4; }
inline bool method_unknown_only(int method_id) { return method_id == 2 || method_id == 5; }
inline bool method_string_match(int method_id) { return method_id == 3 || method_id == 6; }

inline std::set<PiiType> predefined_subset(const std::set<PiiType>& labels) {
    std::set<PiiType> out;
    for (const auto& t : labels)
        if (t.category() == PiiCategory::Predefined) out.insert(t);
    return out;
}

inline std::set<PiiType> unknown_subset(const std::set<PiiType>& labels) {
    std::set<PiiType> out;
    for (const auto& t : labels)
        if (t.category() == PiiCategory::Unknown) out.insert(t);
    return out;
}

inline MethodPredictions compute_method_predictions(const Dataset& data, int method_id,
                                                    ClassifierScope scope, size_t k,
                                                    uint64_t seed) {
    if (method_id < 1 || method_id > 6)
        throw DataError("method_id must be in 1..6, got " + std::to_string(method_id));
    if (data.records.empty()) throw DataError("cannot evaluate an empty dataset");

    MethodPredictions out;
    out.method_id = method_id;
    out.scope = scope;

    // Truth view: methods 2 and 5 work in the unknown-only label universe;
    // 3 and 6 add the string-matched predefined part to a tree/heuristic that
    // itself only handles unknown types.
    const bool unknown_view = method_unknown_only(method_id) || method_string_match(method_id);
    const LabelPolicy policy = unknown_view ? LabelPolicy::UnknownOnly : LabelPolicy::AllPii;

    // Entities with fewer positives than folds cannot be cross-validated;
    // they still contribute training data.
    {
        std::map<std::string, size_t> positives;
        for (const auto& r : data.records) {
            auto key = entity_key(r, scope);
            if (!key) continue;
            std::set<PiiType> counted =
                policy == LabelPolicy::UnknownOnly ? unknown_subset(r.labels) : r.labels;
            size_t& n = positives[*key];  // entities with zero positives count too
            if (!counted.empty()) ++n;
        }
        for (const auto& [entity, n] : positives)
            if (n < k)
                out.flagged.push_back(entity + ": " + std::to_string(n) +
                                      " positive records for " + std::to_string(k) + " folds");
    }

    std::vector<std::vector<size_t>> folds = stratified_folds(data, k, seed);
    for (size_t f = 0; f < folds.size(); ++f) {
        Dataset train;
        train.pii_dictionary = data.pii_dictionary;
        for (size_t g = 0; g < folds.size(); ++g) {
            if (g == f) continue;
            for (size_t idx : folds[g]) train.records.push_back(data.records[idx]);
        }

        if (method_uses_trees(method_id)) {
            ModelRegistry reg = train_registry(train, scope, policy, RegistryConfig{});
            for (size_t idx : folds[f]) {
                const PacketRecord& r = data.records[idx];
                SelectedModel sel = select_model(reg, r);
                PredictionItem item;
                item.record_idx = idx;
                if (sel.specialized) item.entity = *entity_key(r, scope);
                item.pred = predict_multilabel(*sel.model, r.payload);
                item.truth = unknown_view ? unknown_subset(r.labels) : r.labels;
                if (method_string_match(method_id)) {
                    std::set<PiiType> predef = predefined_subset(r.labels);
                    item.pred.insert(predef.begin(), predef.end());
                    item.truth = r.labels;
                }
                out.items.push_back(std::move(item));
            }
        } else {
            Dataset view = policy == LabelPolicy::UnknownOnly
                               ? filter_labels(train, LabelPolicy::UnknownOnly)
                               : train;
            HeuristicBundle bundle = train_heuristic(view);
            for (size_t idx : folds[f]) {
                const PacketRecord& r = data.records[idx];
                PredictionItem item;
                item.record_idx = idx;
                item.entity = entity_key(r, scope);  // grouping only; model is global
                item.pred = heuristic_extract(r.payload, bundle.gate, bundle.table, bundle.vocab);
                item.truth = unknown_view ? unknown_subset(r.labels) : r.labels;
                if (method_string_match(method_id)) {
                    std::set<PiiType> predef = predefined_subset(r.labels);
                    item.pred.insert(predef.begin(), predef.end());
                    item.truth = r.labels;
                }
                out.items.push_back(std::move(item));
            }
        }
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Report assembly.

struct MetricRow {
    std::string entity;
    size_t records = 0;  // records entering the metrics after scheme filtering
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::optional<double> f_measure;    // binary scheme only
    std::optional<double> specificity;  // binary scheme only
    std::vector<std::string> zero_denominator;

    bool operator==(const MetricRow&) const = default;
};

struct MetricsAggregate {
    size_t rows = 0;
    double accuracy_mean = 0.0, accuracy_std = 0.0;
    double precision_mean = 0.0, precision_std = 0.0;
    double recall_mean = 0.0, recall_std = 0.0;

    bool operator==(const MetricsAggregate&) const = default;
};

struct MetricsReport {
    int method_id = 0;
    EvalScheme scheme = EvalScheme::Combined;
    ClassifierScope scope = ClassifierScope::PerApp;
    std::vector<MetricRow> rows;       // per-entity, entity-name order
    std::optional<MetricRow> general;  // general model (or global heuristic) on all records
    MetricsAggregate aggregate;        // across per-entity rows; sample (n-1) std
    std::vector<std::string> flagged;  // entities with too few positives to cross-validate

    bool operator==(const MetricsReport&) const = default;
};

namespace detail {

inline std::optional<MetricRow> score_group(const std::string& entity,
                                            const std::vector<const PredictionItem*>& items,
                                            EvalScheme scheme) {
    MetricRow row;
    row.entity = entity;
    if (scheme == EvalScheme::Binary) {
        std::vector<bool> preds, truths;
        for (const PredictionItem* it : items) {
            preds.push_back(!it->pred.empty());
            truths.push_back(!it->truth.empty());
        }
        if (preds.empty()) return std::nullopt;
        BinaryMetrics m = binary_metrics(preds, truths);
        row.records = preds.size();
        row.accuracy = m.accuracy;
        row.precision = m.precision;
        row.recall = m.recall;
        row.f_measure = m.f_measure;
        row.specificity = m.specificity;
        row.zero_denominator = m.zero_denominator;
        return row;
    }
    std::vector<std::set<PiiType>> preds, truths;
    for (const PredictionItem* it : items) {
        if (scheme == EvalScheme::Leak && it->truth.empty()) continue;
        preds.push_back(it->pred);
        truths.push_back(it->truth);
    }
    if (preds.empty()) return std::nullopt;
    MultilabelMetrics m = multilabel_metrics(preds, truths);
    row.records = preds.size();
    row.accuracy = m.accuracy;
    row.precision = m.precision;
    row.recall = m.recall;
    return row;
}

inline MetricsReport report_from_predictions(const MethodPredictions& preds, EvalScheme scheme) {
    MetricsReport report;
    report.method_id = preds.method_id;
    report.scheme = scheme;
    report.scope = preds.scope;
    report.flagged = preds.flagged;

    std::map<std::string, std::vector<const PredictionItem*>> groups;
    std::vector<const PredictionItem*> all;
    for (const PredictionItem& item : preds.items) {
        all.push_back(&item);
        if (item.entity) groups[*item.entity].push_back(&item);
    }
    for (const auto& [entity, items] : groups)
        if (auto row = score_group(entity, items, scheme)) report.rows.push_back(*row);
    report.general = score_group("general", all, scheme);

    MetricsAggregate& agg = report.aggregate;
    agg.rows = report.rows.size();
    if (agg.rows > 0) {
        auto accumulate = [&](auto pick, double& mean, double& sd) {
            double sum = 0.0;
            for (const MetricRow& r : report.rows) sum += pick(r);
            mean = sum / double(agg.rows);
            if (agg.rows > 1) {
                double ss = 0.0;
                for (const MetricRow& r : report.rows)
                    ss += (pick(r) - mean) * (pick(r) - mean);
                sd = std::sqrt(ss / double(agg.rows - 1));
            }
        };
        accumulate([](const MetricRow& r) { return r.accuracy; }, agg.accuracy_mean,
                   agg.accuracy_std);
        accumulate([](const MetricRow& r) { return r.precision; }, agg.precision_mean,
                   agg.precision_std);
        accumulate([](const MetricRow& r) { return r.recall; }, agg.recall_mean, agg.recall_std);
    }
    return report;
}

}  // namespace detail

inline MetricsReport cross_validate(const Dataset& data, int method_id, EvalScheme scheme,
                                    ClassifierScope scope = ClassifierScope::PerApp, size_t k = 5,
                                    uint64_t seed = 1) {
    return detail::report_from_predictions(
        detail::compute_method_predictions(data, method_id, scope, k, seed), scheme);
}

// ---------------------------------------------------------------------------
// Full 6-method comparison.  Predictions are computed once per
// (method, scope); the three schemes are derived views of the same pass.

struct ComparisonReport {
    std::vector<MetricsReport> reports;  // method-major, then scope, then scheme
    size_t folds = 5;
    uint64_t seed = 1;
};

inline ComparisonReport run_method_comparison(const Dataset& data, uint64_t seed, size_t k = 5) {
    ComparisonReport out;
    out.folds = k;
    out.seed = seed;
    for (int method = 1; method <= 6; ++method) {
        for (ClassifierScope scope : {ClassifierScope::PerApp, ClassifierScope::PerDomain}) {
            detail::MethodPredictions preds =
                detail::compute_method_predictions(data, method, scope, k, seed);
            for (EvalScheme scheme :
                 {EvalScheme::Binary, EvalScheme::Leak, EvalScheme::Combined})
                out.reports.push_back(detail::report_from_predictions(preds, scheme));
        }
    }
    return out;
}

inline std::string render_metrics_report(const MetricsReport& r) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "method " << r.method_id << ", scheme " << to_string(r.scheme) << ", dispatch "
        << to_string(r.scope) << "\n";
    auto row_line = [&](const MetricRow& row) {
        out << "  " << std::left << std::setw(18) << row.entity << "n=" << std::setw(7)
            << row.records << "acc " << row.accuracy << "  prec " << row.precision << "  rec "
            << row.recall;
        if (row.f_measure) out << "  f " << *row.f_measure;
        if (row.specificity) out << "  spec " << *row.specificity;
        if (!row.zero_denominator.empty()) {
            out << "  [zero-denominator:";
            for (const auto& z : row.zero_denominator) out << ' ' << z;
            out << ']';
        }
        out << '\n';
    };
    for (const MetricRow& row : r.rows) row_line(row);
    out << "  aggregate over " << r.aggregate.rows << " rows: acc " << r.aggregate.accuracy_mean
        << " +- " << r.aggregate.accuracy_std << "  prec " << r.aggregate.precision_mean
        << " +- " << r.aggregate.precision_std << "  rec " << r.aggregate.recall_mean << " +- "
        << r.aggregate.recall_std << '\n';
    if (r.general) row_line(*r.general);
    for (const auto& f : r.flagged) out << "  flagged: " << f << '\n';
    return out.str();
}

inline json metrics_report_to_json(const MetricsReport& r) {
    json j;
    j["method"] = r.method_id;
    j["scheme"] = to_string(r.scheme);
    j["scope"] = to_string(r.scope);
    auto row_json = [](const MetricRow& row) {
        json x;
        x["entity"] = row.entity;
        x["records"] = row.records;
        x["accuracy"] = row.accuracy;
        x["precision"] = row.precision;
        x["recall"] = row.recall;
        if (row.f_measure) x["f_measure"] = *row.f_measure;
        if (row.specificity) x["specificity"] = *row.specificity;
        if (!row.zero_denominator.empty()) x["zero_denominator"] = row.zero_denominator;
        return x;
    };
    j["rows"] = json::array();
    for (const MetricRow& row : r.rows) j["rows"].push_back(row_json(row));
    if (r.general) j["general"] = row_json(*r.general);
    j["aggregate"] = {{"rows", r.aggregate.rows},
                      {"accuracy_mean", r.aggregate.accuracy_mean},
                      {"accuracy_std", r.aggregate.accuracy_std},
                      {"precision_mean", r.aggregate.precision_mean},
                      {"precision_std", r.aggregate.precision_std},
                      {"recall_mean", r.aggregate.recall_mean},
                      {"recall_std", r.aggregate.recall_std}};
    if (!r.flagged.empty()) j["flagged"] = r.flagged;
    return j;
}

inline json comparison_to_json(const ComparisonReport& c) {
    json j;
    j["folds"] = c.folds;
    j["seed"] = c.seed;
    j["reports"] = json::array();
    for (const MetricsReport& r : c.reports) j["reports"].push_back(metrics_report_to_json(r));
    return j;
}

inline std::string render_comparison(const ComparisonReport& c, bool per_entity_rows = false) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    auto fmt_pm = [&](double mean, double sd) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(4) << mean << " +- " << sd;
        return s.str();
    };
    for (ClassifierScope scope : {ClassifierScope::PerApp, ClassifierScope::PerDomain}) {
        for (EvalScheme scheme : {EvalScheme::Binary, EvalScheme::Leak, EvalScheme::Combined}) {
            out << "== scheme " << to_string(scheme) << ", dispatch " << to_string(scope)
                << " ==\n";
            out << std::left << std::setw(8) << "method" << std::setw(6) << "rows"
                << std::setw(20) << "accuracy" << std::setw(20) << "precision" << std::setw(20)
                << "recall" << "general\n";
            for (const MetricsReport& r : c.reports) {
                if (r.scope != scope || r.scheme != scheme) continue;
                out << std::left << std::setw(8) << r.method_id << std::setw(6)
                    << r.aggregate.rows << std::setw(20)
                    << fmt_pm(r.aggregate.accuracy_mean, r.aggregate.accuracy_std)
                    << std::setw(20)
                    << fmt_pm(r.aggregate.precision_mean, r.aggregate.precision_std)
                    << std::setw(20) << fmt_pm(r.aggregate.recall_mean, r.aggregate.recall_std);
                if (r.general)
                    out << "acc " << r.general->accuracy << " prec " << r.general->precision
                        << " rec " << r.general->recall;
                out << '\n';
                if (per_entity_rows) {
                    for (const MetricRow& row : r.rows) {
                        out << "    " << std::left << std::setw(18) << row.entity << "n="
                            << std::setw(6) << row.records << "acc " << row.accuracy << " prec "
                            << row.precision << " rec " << row.recall;
                        if (row.f_measure) out << " f " << *row.f_measure;
                        if (row.specificity) out << " spec " << *row.specificity;
                        out << '\n';
                    }
                }
            }
            out << '\n';
        }
    }
    return out.str();
}

}  // namespace piiscan
