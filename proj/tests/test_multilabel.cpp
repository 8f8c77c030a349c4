// One-vs-rest multi-label models: per-label independence, prediction as the
// union of positive trees, feature usage, and vocabulary reduction.
#include <catch2/catch_amalgamated.hpp>

#include "piiscan/multilabel.hpp"
#include "piiscan/rng.hpp"
#include "piiscan/trace_gen.hpp"

using namespace piiscan;

namespace {

PiiType T(const char* name) { return *PiiType::builtin(name); }

PacketRecord rec(int64_t id, std::string payload, std::set<PiiType> labels = {}) {
    PacketRecord r;
    r.id = id;
    r.app_id = "app";
    r.dst_ip = "10.0.0.1";
    r.dst_port = 443;
    r.src_port = 40000;
    r.payload = std::move(payload);
    r.labels = std::move(labels);
    return r;
}

// Training corpus where "user=..." marks Username, "pw=..." marks Password,
// and "city=..." marks City, independently.
Dataset labeled_corpus(Rng& rng, size_t n) {
    Dataset d;
    for (size_t i = 0; i < n; ++i) {
        std::string payload = "GET /sync?v=1";
        std::set<PiiType> labels;
        if (rng.chance(0.4)) {
            payload += "&user=u" + std::to_string(rng.bounded(5));
            labels.insert(T("Username"));
        }
        if (rng.chance(0.4)) {
            payload += "&pw=s" + std::to_string(rng.bounded(5));
            labels.insert(T("Password"));
        }
        if (rng.chance(0.3)) {
            payload += "&city=c" + std::to_string(rng.bounded(5));
            labels.insert(T("City"));
        }
        payload += "&pad=" + std::to_string(rng.bounded(3));
        d.records.push_back(rec(static_cast<int64_t>(i + 1), payload, labels));
    }
    return d;
}

FeatureVector random_fv(Rng& rng, int32_t n_features, double density = 0.4) {
    std::set<int32_t> s;
    for (int32_t f = 0; f < n_features; ++f)
        if (rng.chance(density)) s.insert(f);
    return to_feature_vector(s);
}

}  // namespace

TEST_CASE("per-label trees equal independently trained binary trees") {
    Rng rng(1001);
    Dataset train = labeled_corpus(rng, 120);
    Vocabulary vocab = build_vocabulary(train, DelimiterSet(), VocabConfig{});
    std::set<PiiType> labels = {T("Username"), T("Password"), T("City")};
    BinaryRelevanceModel model = train_binary_relevance(train, labels, vocab);

    REQUIRE(model.label_trees.size() == 3);
    std::vector<FeatureVector> vectors = extract_all(train, vocab);
    for (const auto& label : labels) {
        std::vector<LabeledSample> samples;
        for (size_t i = 0; i < vectors.size(); ++i)
            samples.push_back({vectors[i], train.records[i].labels.count(label) > 0});
        DecisionTree solo = train_tree(samples);
        CAPTURE(label.name());
        REQUIRE(tree_to_json(model.label_trees.at(label)) == tree_to_json(solo));
    }
}

TEST_CASE("adding an unrelated label leaves existing trees unchanged") {
    Rng rng(1002);
    Dataset train = labeled_corpus(rng, 120);
    Vocabulary vocab = build_vocabulary(train, DelimiterSet(), VocabConfig{});
    BinaryRelevanceModel two =
        train_binary_relevance(train, {T("Username"), T("Password")}, vocab);
    BinaryRelevanceModel three =
        train_binary_relevance(train, {T("Username"), T("Password"), T("City")}, vocab);
    CHECK(tree_to_json(two.label_trees.at(T("Username"))) ==
          tree_to_json(three.label_trees.at(T("Username"))));
    CHECK(tree_to_json(two.label_trees.at(T("Password"))) ==
          tree_to_json(three.label_trees.at(T("Password"))));
}

TEST_CASE("prediction is the union of individually positive trees") {
    Rng rng(1003);
    Dataset train = labeled_corpus(rng, 150);
    Vocabulary vocab = build_vocabulary(train, DelimiterSet(), VocabConfig{});
    std::set<PiiType> labels = {T("Username"), T("Password"), T("City")};
    BinaryRelevanceModel model = train_binary_relevance(train, labels, vocab);

    for (int probe = 0; probe < 200; ++probe) {
        FeatureVector v = random_fv(rng, static_cast<int32_t>(vocab.size()), 0.2);
        std::set<PiiType> want;
        for (const auto& [label, tree] : model.label_trees)
            if (predict_tree(tree, v).positive) want.insert(label);
        REQUIRE(predict_multilabel(model, v) == want);
    }
}

TEST_CASE("payload prediction equals extract-then-predict") {
    Rng rng(1004);
    Dataset train = labeled_corpus(rng, 100);
    Vocabulary vocab = build_vocabulary(train, DelimiterSet(), VocabConfig{});
    BinaryRelevanceModel model =
        train_binary_relevance(train, {T("Username"), T("Password")}, vocab);
    std::string payload = "GET /sync?v=1&user=u2&pad=0";
    CHECK(predict_multilabel(model, payload) ==
          predict_multilabel(model, extract_parse(payload, model.vocab)));
}

TEST_CASE("the trained model recovers planted per-label keys") {
    Rng rng(1005);
    Dataset train = labeled_corpus(rng, 200);
    Vocabulary vocab = build_vocabulary(train, DelimiterSet(), VocabConfig{});
    std::set<PiiType> labels = {T("Username"), T("Password"), T("City")};
    BinaryRelevanceModel model = train_binary_relevance(train, labels, vocab);

    CHECK(predict_multilabel(model, "GET /sync?v=1&user=u9&pad=1") ==
          std::set<PiiType>{T("Username")});
    CHECK(predict_multilabel(model, "GET /sync?v=1&user=u9&pw=s9&pad=1") ==
          std::set<PiiType>{T("Username"), T("Password")});
    CHECK(predict_multilabel(model, "GET /sync?v=1&pad=2").empty());
}

TEST_CASE("an empty label set cannot be trained") {
    Rng rng(1006);
    Dataset train = labeled_corpus(rng, 20);
    Vocabulary vocab = build_vocabulary(train, DelimiterSet(), VocabConfig{});
    CHECK_THROWS_AS(train_binary_relevance(train, {}, vocab), EmptyLabelSetError);
}

TEST_CASE("model feature set is the union over all trees' internal nodes") {
    Rng rng(1007);
    Dataset train = labeled_corpus(rng, 150);
    Vocabulary vocab = build_vocabulary(train, DelimiterSet(), VocabConfig{});
    std::set<PiiType> labels = {T("Username"), T("Password"), T("City")};
    BinaryRelevanceModel model = train_binary_relevance(train, labels, vocab);

    std::set<int32_t> want;
    for (const auto& [label, tree] : model.label_trees)
        for (const auto& n : tree.nodes())
            if (!n.is_leaf) want.insert(n.feature_id);
    CHECK(tree_features(model) == want);
    CHECK_FALSE(want.empty());
}

TEST_CASE("projection invariance: features outside the trees never matter") {
    Rng rng(1008);
    Dataset train = labeled_corpus(rng, 150);
    Vocabulary vocab = build_vocabulary(train, DelimiterSet(), VocabConfig{});
    std::set<PiiType> labels = {T("Username"), T("Password"), T("City")};
    BinaryRelevanceModel model = train_binary_relevance(train, labels, vocab);
    std::set<int32_t> used = tree_features(model);

    for (int probe = 0; probe < 300; ++probe) {
        FeatureVector full = random_fv(rng, static_cast<int32_t>(vocab.size()), 0.3);
        std::set<int32_t> kept;
        for (int32_t f : full.ids)
            if (used.count(f)) kept.insert(f);
        FeatureVector projected = to_feature_vector(kept);
        REQUIRE(predict_multilabel(model, full) == predict_multilabel(model, projected));
    }
}

TEST_CASE("vocabulary reduction keeps only tested features and predictions") {
    Rng rng(1009);
    Dataset train = labeled_corpus(rng, 200);
    Vocabulary vocab = build_vocabulary(train, DelimiterSet(), VocabConfig{});
    std::set<PiiType> labels = {T("Username"), T("Password"), T("City")};
    BinaryRelevanceModel model = train_binary_relevance(train, labels, vocab);

    ReducedModel reduced = reduce_and_retrain(model, train);
    CHECK(reduced.vocab.size() <= tree_features(model).size());
    CHECK(reduced.vocab.size() < vocab.size());

    // Reduced entries keep their literals, re-id'd densely in literal order.
    for (size_t i = 0; i < reduced.vocab.size(); ++i)
        CHECK(reduced.vocab.entries()[i].id == static_cast<int32_t>(i));
    for (size_t i = 1; i < reduced.vocab.size(); ++i)
        CHECK(reduced.vocab.entries()[i - 1].literal < reduced.vocab.entries()[i].literal);

    // Greedy training over the restricted candidate set re-derives the same
    // splits, so the reduced model agrees on every training payload...
    for (const auto& r : train.records) {
        CAPTURE(r.id);
        REQUIRE(predict_multilabel(reduced.model, r.payload) ==
                predict_multilabel(model, r.payload));
    }
    // ...and on unseen payloads drawn from the same shape.
    Dataset fresh = labeled_corpus(rng, 100);
    for (const auto& r : fresh.records)
        REQUIRE(predict_multilabel(reduced.model, r.payload) ==
                predict_multilabel(model, r.payload));
}

TEST_CASE("a model with no internal nodes cannot be reduced") {
    Dataset train;
    for (int i = 0; i < 10; ++i) train.records.push_back(rec(i + 1, "ping=1&pong=2"));
    VocabConfig vcfg;
    vcfg.max_doc_frac = 1.0;  // identical docs: keep the tokens, the label is constant
    Vocabulary vocab = build_vocabulary(train, DelimiterSet(), vcfg);
    BinaryRelevanceModel model = train_binary_relevance(train, {T("Username")}, vocab);
    CHECK_THROWS_AS(reduce_and_retrain(model, train), EmptyReducedVocabularyError);
}

TEST_CASE("model serialization round trips through json") {
    Rng rng(1010);
    Dataset train = labeled_corpus(rng, 150);
    Vocabulary vocab = build_vocabulary(train, DelimiterSet(), VocabConfig{});
    std::set<PiiType> labels = {T("Username"), T("Password")};
    BinaryRelevanceModel model = train_binary_relevance(train, labels, vocab);

    json j = model_to_json(model, "general");
    CHECK(j["vocab_ref"] == "general");
    BinaryRelevanceModel back = model_from_json(j, model.vocab, train.pii_dictionary);
    CHECK(back == model);

    for (int probe = 0; probe < 50; ++probe) {
        FeatureVector v = random_fv(rng, static_cast<int32_t>(vocab.size()), 0.25);
        REQUIRE(predict_multilabel(back, v) == predict_multilabel(model, v));
    }
}

TEST_CASE("multi-label training on generated traces recovers exposures") {
    GenConfig cfg;
    cfg.num_apps = 6;
    cfg.num_domains = 10;
    cfg.packets_per_app = 80;
    cfg.seed = 77;
    Dataset data = generate(cfg);

    // Split 80/20 by record index.
    Dataset train, test;
    train.pii_dictionary = test.pii_dictionary = data.pii_dictionary;
    for (size_t i = 0; i < data.records.size(); ++i)
        (i % 5 == 4 ? test : train).records.push_back(data.records[i]);

    Vocabulary vocab = build_vocabulary(train, DelimiterSet(), VocabConfig{});
    std::set<PiiType> labels;
    for (const auto& r : train.records) labels.insert(r.labels.begin(), r.labels.end());
    REQUIRE_FALSE(labels.empty());
    BinaryRelevanceModel model = train_binary_relevance(train, labels, vocab);

    size_t agree = 0;
    for (const auto& r : test.records)
        if ((predict_multilabel(model, r.payload).empty()) == r.labels.empty()) ++agree;
    double acc = static_cast<double>(agree) / static_cast<double>(test.records.size());
    CHECK(acc >= 0.85);  // exposure flag accuracy on held-out records
}
