// Tokenization, vocabulary construction thresholds, and the two extraction
// paths (token walk vs. single-pass scan), which must agree bit for bit.
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "piiscan/features.hpp"
#include "piiscan/rng.hpp"
#include "piiscan/trace_gen.hpp"

using namespace piiscan;

namespace {

PiiType T(const char* name) { return *PiiType::builtin(name); }

Dataset docs(const std::vector<std::string>& payloads) {
    Dataset d;
    int64_t id = 1;
    for (const auto& p : payloads) {
        PacketRecord r;
        r.id = id++;
        r.app_id = "app";
        r.dst_ip = "10.0.0.1";
        r.dst_port = 80;
        r.src_port = 40000;
        r.payload = p;
        d.records.push_back(std::move(r));
    }
    return d;
}

std::string random_query(Rng& rng) {
    static const std::vector<std::string> words = {"user",  "bob",   "alice", "id",  "42",
                                                   "token", "abc",   "lat",   "lon", "profile",
                                                   "video", "x",     "yy",    "zzz", "v1"};
    std::string out = rng.chance(0.5) ? "GET /" : "";
    size_t n = 1 + rng.bounded(8);
    static const std::string delims = "?=&/: ,";
    for (size_t i = 0; i < n; ++i) {
        out += words[rng.bounded(words.size())];
        out.push_back(delims[rng.bounded(delims.size())]);
    }
    if (rng.chance(0.5)) out += words[rng.bounded(words.size())];
    return out;
}

}  // namespace

TEST_CASE("tokenize splits on delimiters and records one-byte flanks") {
    DelimiterSet delims;

    CHECK(tokenize("", delims).empty());
    CHECK(tokenize("?=&&", delims).empty());  // all delimiters

    SECTION("query string") {
        auto toks = tokenize("a=1&b=2", delims);
        REQUIRE(toks.size() == 4);
        CHECK(toks[0] == Token{"a", std::nullopt, '='});
        CHECK(toks[1] == Token{"1", '=', '&'});
        CHECK(toks[2] == Token{"b", '&', '='});
        CHECK(toks[3] == Token{"2", '=', std::nullopt});
    }

    SECTION("request line") {
        auto toks = tokenize("GET /profile?user=bob", delims);
        REQUIRE(toks.size() == 4);
        CHECK(toks[0] == Token{"GET", std::nullopt, ' '});
        CHECK(toks[1] == Token{"profile", '/', '?'});
        CHECK(toks[2] == Token{"user", '?', '='});
        CHECK(toks[3] == Token{"bob", '=', std::nullopt});
    }

    SECTION("consecutive delimiters produce no empty tokens") {
        auto toks = tokenize("a==&&b", delims);
        REQUIRE(toks.size() == 2);
        CHECK(toks[0].word == "a");
        CHECK(toks[1].word == "b");
        CHECK(toks[1].left == '&');
    }
}

TEST_CASE("token literals carry flanks only in wrapped mode") {
    Token mid{"profile", '/', '?'};
    CHECK(token_literal(mid, VocabMode::Bare) == "profile");
    CHECK(token_literal(mid, VocabMode::DelimiterWrapped) == "/profile?");

    Token left_open{"GET", std::nullopt, ' '};
    CHECK(token_literal(left_open, VocabMode::DelimiterWrapped) == "GET ");

    Token both_open{"solo", std::nullopt, std::nullopt};
    CHECK(token_literal(both_open, VocabMode::DelimiterWrapped) == "solo");
}

TEST_CASE("vocabulary thresholds: min count and ubiquity cap") {
    // "common" in every doc (10/10), "rare" once, "mid" in half.
    std::vector<std::string> payloads;
    for (int i = 0; i < 10; ++i) {
        std::string p = "common=1";
        if (i == 0) p += "&rare=x";
        if (i % 2 == 0) p += "&mid=y";
        payloads.push_back(p);
    }
    VocabConfig cfg;
    cfg.mode = VocabMode::Bare;
    Vocabulary v = build_vocabulary(docs(payloads), DelimiterSet(), cfg);

    CHECK_FALSE(v.lookup("common").has_value());  // 100% > 90% cap
    CHECK_FALSE(v.lookup("rare").has_value());    // df 1 < min_count 2
    CHECK(v.lookup("mid").has_value());           // df 5 passes both
    CHECK_FALSE(v.lookup("1").has_value());       // rides along in every doc: capped
    CHECK(v.lookup("y").has_value());             // df 5
}

TEST_CASE("tokens equal to dictionary literals never become features") {
    Dataset d = docs({"imei=356938035643809&k=1", "imei=356938035643809&k=2",
                      "imei=356938035643809&k=3"});
    d.pii_dictionary[T("IMEI")] = {"356938035643809"};
    VocabConfig cfg;
    cfg.mode = VocabMode::Bare;
    cfg.max_doc_frac = 1.0;  // every doc carries the key tokens by design
    Vocabulary v = build_vocabulary(d, DelimiterSet(), cfg);
    CHECK(v.lookup("imei").has_value());
    CHECK_FALSE(v.lookup("356938035643809").has_value());
}

TEST_CASE("wrapped vocabulary stores flanked literals, not bare words") {
    Dataset d = docs({"GET /profile?user=bob&z=1", "GET /profile?user=eve&z=2"});
    VocabConfig cfg;
    cfg.max_doc_frac = 1.0;  // two docs share every token by design
    Vocabulary v = build_vocabulary(d, DelimiterSet(), cfg);
    CHECK(v.mode() == VocabMode::DelimiterWrapped);
    CHECK(v.lookup("/profile?").has_value());
    CHECK_FALSE(v.lookup("profile").has_value());
    CHECK(v.lookup("?user=").has_value());

    auto id = v.lookup("/profile?");
    const VocabEntry& e = v.entry(*id);
    CHECK(e.word == "profile");
    CHECK_FALSE(e.open_left);
    CHECK_FALSE(e.open_right);
}

TEST_CASE("boundary-touching tokens keep their open flanks") {
    // "GET" always starts the payload; "tail" always ends it.
    Dataset d = docs({"GET a=1&tail", "GET b=2&tail"});
    VocabConfig cfg;
    cfg.max_doc_frac = 1.0;  // both docs carry the boundary tokens
    Vocabulary v = build_vocabulary(d, DelimiterSet(), cfg);
    auto get_id = v.lookup("GET ");
    REQUIRE(get_id.has_value());
    CHECK(v.entry(*get_id).open_left);
    CHECK_FALSE(v.entry(*get_id).open_right);

    auto tail_id = v.lookup("&tail");
    REQUIRE(tail_id.has_value());
    CHECK(v.entry(*tail_id).open_right);
}

TEST_CASE("vocabulary ids are dense and sorted by literal") {
    Dataset d = docs({"b=1&a=2&c=3", "b=4&a=5&c=6"});
    VocabConfig cfg;
    cfg.mode = VocabMode::Bare;
    cfg.max_doc_frac = 1.0;  // the keys appear in both docs by design
    Vocabulary v = build_vocabulary(d, DelimiterSet(), cfg);
    REQUIRE(v.size() > 0);
    for (size_t i = 0; i < v.size(); ++i)
        CHECK(v.entries()[i].id == static_cast<int32_t>(i));
    for (size_t i = 1; i < v.size(); ++i)
        CHECK(v.entries()[i - 1].literal < v.entries()[i].literal);
}

TEST_CASE("an empty candidate pool is an error") {
    CHECK_THROWS_AS(build_vocabulary(docs({"a", "b"}), DelimiterSet(), VocabConfig{}),
                    EmptyVocabularyError);
}

TEST_CASE("token-walk extraction matches a brute-force membership oracle") {
    Rng rng(515);
    std::vector<std::string> train_payloads;
    for (int i = 0; i < 60; ++i) train_payloads.push_back(random_query(rng));
    Dataset train = docs(train_payloads);

    for (VocabMode mode : {VocabMode::Bare, VocabMode::DelimiterWrapped}) {
        VocabConfig cfg;
        cfg.mode = mode;
        Vocabulary v = build_vocabulary(train, DelimiterSet(), cfg);

        for (int trial = 0; trial < 200; ++trial) {
            std::string payload = random_query(rng);
            FeatureVector got = extract_parse(payload, v);

            // Oracle: an entry is present iff some token renders its literal.
            std::set<int32_t> want;
            auto toks = tokenize(payload, v.delims());
            for (const auto& e : v.entries())
                for (const auto& t : toks)
                    if (token_literal(t, mode) == e.literal) want.insert(e.id);

            CAPTURE(payload, static_cast<int>(mode));
            REQUIRE(got.ids == std::vector<int32_t>(want.begin(), want.end()));
            CHECK(std::is_sorted(got.ids.begin(), got.ids.end()));
        }
    }
}

TEST_CASE("scan extraction equals token-walk extraction on generated traffic") {
    GenConfig gcfg;
    gcfg.num_apps = 8;
    gcfg.num_domains = 12;
    gcfg.packets_per_app = 50;
    gcfg.seed = 33;
    Dataset train = generate(gcfg);
    Vocabulary v = build_vocabulary(train, DelimiterSet(), VocabConfig{});
    Automaton a = build_feature_automaton(v);

    GenConfig other = gcfg;
    other.seed = 34;
    Dataset fresh = generate(other);

    size_t checked = 0;
    for (const auto& r : fresh.records) {
        FeatureVector dpi = extract_dpi(r.payload, v, a);
        FeatureVector parse = extract_parse(r.payload, v);
        CAPTURE(r.id);
        REQUIRE(dpi == parse);
        ++checked;
    }
    CHECK(checked >= 400);
}

TEST_CASE("scan extraction equals token-walk extraction on adversarial strings") {
    Dataset train = docs({"GET /profile?user=bob&z=1", "GET /profile?user=eve&z=1",
                          "start=1&mid=2&end", "start=3&mid=4&end"});
    Vocabulary v = build_vocabulary(train, DelimiterSet(), VocabConfig{});
    Automaton a = build_feature_automaton(v);

    const std::vector<std::string> payloads = {
        "",
        "GET /profile?user=bob",
        "video_profile",                    // substring, not a token
        "GET /api/video_profile&x=1",
        "xstart=9",                         // open-left literal not at start
        "start=9",                          // at start: matches
        "a&end",                            // open-right literal at end
        "a&endx",                           // not at end
        "?user=?user=",
        "GET GET /profile?/profile?",
        "&z=1&z=1&z=1",
    };
    for (const auto& p : payloads) {
        CAPTURE(p);
        REQUIRE(extract_dpi(p, v, a) == extract_parse(p, v));
    }

    // The wrapped literal must not fire inside a larger word.
    auto pid = v.lookup("/profile?");
    REQUIRE(pid.has_value());
    CHECK_FALSE(extract_dpi("GET /api/video_profile&x=1", v, a).contains(*pid));
    CHECK(extract_dpi("GET /profile?user=zed", v, a).contains(*pid));
}

TEST_CASE("scan extraction rejects an automaton built for a different vocabulary") {
    // The guard is the entry-count comparison, so the two vocabularies must
    // genuinely differ in size (two surviving keys vs three).
    Dataset d1 = docs({"a=1&b=2", "a=3&b=4"});
    Dataset d2 = docs({"c=1&d=2&e=5", "c=3&d=4&e=6"});
    VocabConfig cfg;
    cfg.max_doc_frac = 1.0;  // two-doc corpora: keep the shared keys
    Vocabulary v1 = build_vocabulary(d1, DelimiterSet(), cfg);
    Vocabulary v2 = build_vocabulary(d2, DelimiterSet(), cfg);
    REQUIRE(v1.size() != v2.size());
    Automaton a2 = build_feature_automaton(v2);
    CHECK_THROWS_AS(extract_dpi("a=1", v1, a2), AutomatonVocabMismatchError);
}

TEST_CASE("feature vectors store sorted unique ids") {
    std::set<int32_t> s = {5, 1, 3};
    FeatureVector fv = to_feature_vector(s);
    CHECK(fv.ids == std::vector<int32_t>{1, 3, 5});
    CHECK(fv.contains(3));
    CHECK_FALSE(fv.contains(2));
    CHECK_FALSE(fv.contains(99));
}

TEST_CASE("vocabulary serialization round trips") {
    Dataset d = docs({"GET /profile?user=bob&z=1", "GET /profile?user=eve&z=2"});
    VocabConfig cfg;
    cfg.max_doc_frac = 1.0;  // two docs share every token by design
    Vocabulary v = build_vocabulary(d, DelimiterSet(), cfg);
    Vocabulary back = vocabulary_from_json(vocabulary_to_json(v));
    CHECK(back.mode() == v.mode());
    CHECK(back.size() == v.size());
    REQUIRE(back.entries() == v.entries());

    std::string probe = "GET /profile?user=sam&z=9";
    CHECK(extract_parse(probe, back) == extract_parse(probe, v));
}
