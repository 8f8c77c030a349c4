// End-to-end tests for the command-line tool.  Each test shells out to the
// built binary (path injected via PIISCAN_CLI_PATH), captures stdout/stderr,
// and checks the documented exit-code contract: 0 success, 1 usage error,
// 2 data/config error, 3 internal error.
#include <catch2/catch_amalgamated.hpp>

#include <piiscan/core.hpp>
#include <piiscan/graph.hpp>
#include <piiscan/pipeline.hpp>
#include <piiscan/registry.hpp>
#include <piiscan/trace_gen.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifndef PIISCAN_CLI_PATH
#error "PIISCAN_CLI_PATH must be defined to the built binary"
#endif

namespace fs = std::filesystem;
using namespace piiscan;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    REQUIRE(out.good());
    out << content;
}

fs::path fresh_dir(const std::string& tag) {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() /
                   ("piiscan_cli_" + tag + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Runs `cli <args>` through the shell.  stdin is /dev/null unless a file is
// given, so interactive prompts fail fast instead of hanging the suite.
RunResult run_cli(const fs::path& dir, const std::string& args,
                  const std::string& stdin_file = "") {
    fs::path out_file = dir / "stdout.txt";
    fs::path err_file = dir / "stderr.txt";
    std::string redirect_in = stdin_file.empty() ? "</dev/null" : "<\"" + stdin_file + "\"";
    std::string cmd = std::string("\"") + PIISCAN_CLI_PATH + "\" " + args + " >\"" +
                      out_file.string() + "\" 2>\"" + err_file.string() + "\" " + redirect_in;
    int raw = std::system(cmd.c_str());
    RunResult r;
    r.code = (raw == -1) ? -1 : WEXITSTATUS(raw);
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

size_t count_occurrences(const std::string& haystack, const std::string& needle) {
    size_t n = 0;
    for (size_t pos = haystack.find(needle); pos != std::string::npos;
         pos = haystack.find(needle, pos + needle.size()))
        ++n;
    return n;
}

GenConfig small_config(uint64_t seed, bool scrub, size_t apps = 4, size_t packets = 40) {
    GenConfig cfg;
    cfg.num_apps = apps;
    cfg.num_domains = 6;
    cfg.packets_per_app = packets;
    cfg.leak_prob = 0.3;
    cfg.seed = seed;
    cfg.scrub = scrub;
    return cfg;
}

fs::path write_config(const fs::path& dir, const GenConfig& cfg,
                      const std::string& name = "config.json") {
    fs::path p = dir / name;
    spit(p, gen_config_to_json(cfg).dump(2) + "\n");
    return p;
}

// Generates a dataset through the CLI and returns the trace path.
fs::path gen_trace(const fs::path& dir, const GenConfig& cfg, bool raw,
                   const std::string& name = "trace.jsonl") {
    fs::path config = write_config(dir, cfg, name + ".config.json");
    fs::path trace = dir / name;
    std::string args = "gen --config \"" + config.string() + "\" --out \"" + trace.string() + "\"";
    if (raw) args += " --raw";
    RunResult r = run_cli(dir, args);
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    return trace;
}

fs::path train_registry_dir(const fs::path& dir, const fs::path& trace,
                            const std::string& name = "models") {
    fs::path models = dir / name;
    RunResult r = run_cli(dir, "train --data \"" + trace.string() + "\" --out \"" +
                                   models.string() + "\"");
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    return models;
}

std::vector<json> parse_jsonl(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::vector<json> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        lines.push_back(json::parse(line));
    }
    return lines;
}

}  // namespace

TEST_CASE("cli usage errors exit with code 1") {
    fs::path dir = fresh_dir("usage");
    SECTION("no subcommand") {
        RunResult r = run_cli(dir, "");
        CHECK(r.code == 1);
        CHECK_FALSE(r.err.empty());
    }
    SECTION("gen without required --config") {
        RunResult r = run_cli(dir, "gen --out x.jsonl");
        CHECK(r.code == 1);
    }
    SECTION("bench rejects zero iterations") {
        RunResult r = run_cli(dir, "bench --iters 0");
        CHECK(r.code == 1);
    }
    SECTION("unknown subcommand") {
        RunResult r = run_cli(dir, "frobnicate");
        CHECK(r.code == 1);
    }
    SECTION("eval rejects unknown scheme") {
        RunResult r = run_cli(dir, "eval --data x.jsonl --scheme sideways");
        CHECK(r.code == 1);
    }
}

TEST_CASE("cli data errors exit with code 2") {
    fs::path dir = fresh_dir("dataerr");
    SECTION("train on a missing dataset") {
        RunResult r = run_cli(dir, "train --data \"" + (dir / "absent.jsonl").string() +
                                       "\" --out \"" + (dir / "m").string() + "\"");
        CHECK(r.code == 2);
        CHECK(r.err.find("error:") != std::string::npos);
    }
    SECTION("gen with a missing config file") {
        RunResult r = run_cli(dir, "gen --config \"" + (dir / "absent.json").string() +
                                       "\" --out \"" + (dir / "t.jsonl").string() + "\"");
        CHECK(r.code == 2);
    }
    SECTION("gen with an invalid config value") {
        GenConfig cfg = small_config(1, true);
        fs::path config = write_config(dir, cfg);
        json j = json::parse(slurp(config));
        j["leak_prob"] = 1.5;
        spit(config, j.dump());
        RunResult r = run_cli(dir, "gen --config \"" + config.string() + "\" --out \"" +
                                       (dir / "t.jsonl").string() + "\"");
        CHECK(r.code == 2);
    }
    SECTION("detect with a malformed dataset") {
        fs::path trace = gen_trace(dir, small_config(3, true), false);
        fs::path models = train_registry_dir(dir, trace);
        fs::path bad = dir / "bad.jsonl";
        spit(bad, "{not json\n");
        RunResult r = run_cli(dir, "detect --data \"" + bad.string() + "\" --models \"" +
                                       models.string() + "\" --policy allow");
        CHECK(r.code == 2);
    }
}

TEST_CASE("cli gen writes a parseable trace and reports a summary") {
    fs::path dir = fresh_dir("gen");
    GenConfig cfg = small_config(11, true);
    fs::path config = write_config(dir, cfg);
    fs::path trace = dir / "trace.jsonl";
    RunResult r = run_cli(dir, "gen --config \"" + config.string() + "\" --out \"" +
                                   trace.string() + "\"");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("packets") != std::string::npos);
    CHECK(r.out.find("wrote") != std::string::npos);

    Dataset data = parse_dataset_file(trace.string());
    CHECK(data.records.size() == summarize(data).packets);
    // The CLI summary counts match an in-process generation with the same config.
    Dataset reference = generate(cfg);
    CHECK(data == reference);
}

TEST_CASE("cli gen is byte-identical for a fixed seed and differs for another") {
    fs::path dir = fresh_dir("genseed");
    GenConfig cfg = small_config(21, true);
    fs::path config = write_config(dir, cfg);
    fs::path a = dir / "a.jsonl";
    fs::path b = dir / "b.jsonl";
    fs::path c = dir / "c.jsonl";
    REQUIRE(run_cli(dir, "gen --config \"" + config.string() + "\" --out \"" + a.string() + "\"")
                .code == 0);
    REQUIRE(run_cli(dir, "gen --config \"" + config.string() + "\" --out \"" + b.string() + "\"")
                .code == 0);
    REQUIRE(run_cli(dir, "gen --config \"" + config.string() + "\" --seed 99 --out \"" +
                             c.string() + "\"")
                .code == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a) != slurp(c));
}

TEST_CASE("cli train writes a registry and reports vocabulary reduction") {
    fs::path dir = fresh_dir("train");
    fs::path trace = gen_trace(dir, small_config(31, true), false);
    fs::path models = dir / "models";
    RunResult r = run_cli(dir, "train --data \"" + trace.string() + "\" --out \"" +
                                   models.string() + "\"");
    REQUIRE(r.code == 0);
    CHECK(fs::exists(models / "registry.json"));
    CHECK(fs::exists(models / "general.json"));
    CHECK(r.out.find("reduced from") != std::string::npos);
    CHECK(r.out.find("x reduction") != std::string::npos);
    CHECK(r.out.find("registry written to") != std::string::npos);

    LoadedRegistry lr = load_registry(models.string());
    CHECK(lr.registry.scope == ClassifierScope::PerApp);
    CHECK_FALSE(lr.pii_dictionary.empty());
}

TEST_CASE("cli train is reproducible: two runs write identical model files") {
    fs::path dir = fresh_dir("retrain");
    fs::path trace = gen_trace(dir, small_config(41, true), false);
    fs::path m1 = train_registry_dir(dir, trace, "models1");
    fs::path m2 = train_registry_dir(dir, trace, "models2");

    std::set<std::string> names1, names2;
    for (const auto& e : fs::directory_iterator(m1)) names1.insert(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(m2)) names2.insert(e.path().filename().string());
    REQUIRE(names1 == names2);
    REQUIRE_FALSE(names1.empty());
    for (const auto& name : names1) CHECK(slurp(m1 / name) == slurp(m2 / name));
}

TEST_CASE("cli detect on an exposure-free trace logs zero detections") {
    fs::path dir = fresh_dir("clean");
    // A trace generated with exposure probability zero carries no labels, so
    // training on it yields a registry whose classifiers never fire; string
    // matching has nothing to find either because no literal was planted.
    GenConfig clean_cfg = small_config(52, true);
    clean_cfg.leak_prob = 0.0;
    fs::path clean_trace = gen_trace(dir, clean_cfg, false, "clean.jsonl");
    fs::path models = train_registry_dir(dir, clean_trace);

    fs::path log = dir / "log.jsonl";
    RunResult r = run_cli(dir, "detect --data \"" + clean_trace.string() + "\" --models \"" +
                                   models.string() + "\" --policy allow --log \"" + log.string() +
                                   "\"");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("0 with detections") != std::string::npos);
    CHECK(r.out.find("0 blocked") != std::string::npos);

    std::vector<json> lines = parse_jsonl(log);
    Dataset clean = parse_dataset_file(clean_trace.string());
    CHECK(lines.size() == clean.records.size());
    for (const auto& line : lines) {
        CAPTURE(line.dump());
        CHECK(line.at("types").empty());
    }
}

TEST_CASE("cli detect flags every planted literal as a string match") {
    fs::path dir = fresh_dir("detraw");
    fs::path trace = gen_trace(dir, small_config(61, false), true);  // raw payloads
    fs::path models = train_registry_dir(dir, trace);

    fs::path log = dir / "log.jsonl";
    RunResult r = run_cli(dir, "detect --data \"" + trace.string() + "\" --models \"" +
                                   models.string() + "\" --policy allow --log \"" + log.string() +
                                   "\"");
    REQUIRE(r.code == 0);

    Dataset data = parse_dataset_file(trace.string());
    std::map<int64_t, const PacketRecord*> by_id;
    for (const auto& rec : data.records) by_id[rec.id] = &rec;

    size_t predefined_records = 0;
    for (const auto& line : parse_jsonl(log)) {
        const PacketRecord* rec = by_id.at(line.at("packet_id").get<int64_t>());
        std::set<std::string> string_hits;
        for (const auto& t : line.at("types"))
            if (t.at("method").get<std::string>() == "string")
                string_hits.insert(t.at("type").get<std::string>());
        bool has_predefined = false;
        for (const auto& label : rec->labels)
            if (label.category() == PiiCategory::Predefined) {
                has_predefined = true;
                CAPTURE(rec->id, label.name());
                CHECK(string_hits.count(label.name()) == 1);
            }
        if (has_predefined) ++predefined_records;
    }
    // The raw trace must actually exercise the exact-match path.
    CHECK(predefined_records > 10);
}

TEST_CASE("cli detect interactive prompts once per app/type pair and hash-replace scrubs") {
    fs::path dir = fresh_dir("interactive");
    fs::path trace = gen_trace(dir, small_config(71, false, 3, 50), true);
    fs::path models = train_registry_dir(dir, trace);

    // Script 1000 "h" (hash) answers; far more than the distinct pair count.
    fs::path answers = dir / "answers.txt";
    {
        std::string all;
        for (int i = 0; i < 1000; ++i) all += "h\n";
        spit(answers, all);
    }

    fs::path out_trace = dir / "forwarded.jsonl";
    RunResult r = run_cli(dir,
                          "detect --data \"" + trace.string() + "\" --models \"" +
                              models.string() + "\" --interactive --out \"" + out_trace.string() +
                              "\"",
                          answers.string());
    REQUIRE(r.code == 0);

    size_t prompts = count_occurrences(r.err, "[a]llow/[b]lock/[h]ash for ");
    REQUIRE(prompts > 0);

    // Distinct app/type pairs in the prompt stream: each must appear exactly once.
    std::set<std::string> pairs;
    std::string marker = "[a]llow/[b]lock/[h]ash for ";
    for (size_t pos = r.err.find(marker); pos != std::string::npos;
         pos = r.err.find(marker, pos + marker.size())) {
        size_t start = pos + marker.size();
        size_t end = r.err.find('?', start);
        REQUIRE(end != std::string::npos);
        pairs.insert(r.err.substr(start, end - start));
    }
    CHECK(pairs.size() == prompts);

    // The remembered-rule count equals the number of prompts that were answered.
    std::string needle = "policy rules remembered: " + std::to_string(prompts) + ";";
    CAPTURE(r.out, prompts);
    CHECK(r.out.find(needle) != std::string::npos);
    CHECK(r.out.find("pending prompts: 0") != std::string::npos);

    // Forwarded trace: dropped records are gone, surviving payloads keep their
    // length, and no predefined literal survives hash replacement.
    Dataset input = parse_dataset_file(trace.string());
    Dataset forwarded = parse_dataset_file(out_trace.string());
    REQUIRE(forwarded.records.size() <= input.records.size());
    REQUIRE_FALSE(forwarded.records.empty());

    std::map<int64_t, const PacketRecord*> by_id;
    for (const auto& rec : input.records) by_id[rec.id] = &rec;

    std::vector<std::string> predefined_literals;
    for (const auto& [type, literals] : input.pii_dictionary)
        if (type.category() == PiiCategory::Predefined)
            for (const auto& lit : literals) predefined_literals.push_back(lit);
    REQUIRE_FALSE(predefined_literals.empty());

    size_t rewritten = 0;
    for (const auto& rec : forwarded.records) {
        const PacketRecord* original = by_id.at(rec.id);
        CHECK(rec.payload.size() == original->payload.size());
        if (rec.payload != original->payload) ++rewritten;
        for (const auto& lit : predefined_literals) {
            CAPTURE(rec.id, lit);
            CHECK(rec.payload.find(lit) == std::string::npos);
        }
    }
    // Hash replacement actually rewrote the exact-match packets.
    CHECK(rewritten > 0);
    CHECK(r.out.find(" hashed,") != std::string::npos);
}

TEST_CASE("cli detect block policy drops every exposure packet from the output trace") {
    fs::path dir = fresh_dir("blockall");
    fs::path trace = gen_trace(dir, small_config(81, false), true);
    fs::path models = train_registry_dir(dir, trace);
    fs::path out_trace = dir / "forwarded.jsonl";
    RunResult r = run_cli(dir, "detect --data \"" + trace.string() + "\" --models \"" +
                                   models.string() + "\" --policy block --out \"" +
                                   out_trace.string() + "\"");
    REQUIRE(r.code == 0);

    Dataset input = parse_dataset_file(trace.string());
    Dataset forwarded = parse_dataset_file(out_trace.string());
    std::set<int64_t> forwarded_ids;
    for (const auto& rec : forwarded.records) forwarded_ids.insert(rec.id);
    for (const auto& rec : input.records) {
        bool has_predefined = false;
        for (const auto& label : rec.labels)
            if (label.category() == PiiCategory::Predefined) has_predefined = true;
        if (has_predefined) {
            CAPTURE(rec.id);
            CHECK(forwarded_ids.count(rec.id) == 0);
        }
    }
    CHECK(forwarded.records.size() < input.records.size());
}

TEST_CASE("cli eval single-method run is reproducible and writes a report") {
    fs::path dir = fresh_dir("eval");
    fs::path trace = gen_trace(dir, small_config(91, true), false);
    fs::path report1 = dir / "r1.json";
    fs::path report2 = dir / "r2.json";
    std::string base = "eval --data \"" + trace.string() +
                       "\" --method 6 --scheme leak --seed 7 --folds 5 --out \"";
    RunResult r1 = run_cli(dir, base + report1.string() + "\"");
    RunResult r2 = run_cli(dir, base + report2.string() + "\"");
    REQUIRE(r1.code == 0);
    REQUIRE(r2.code == 0);
    CHECK(r1.out == r2.out);
    CHECK(slurp(report1) == slurp(report2));

    json j = json::parse(slurp(report1));
    CHECK(j.at("method") == 6);
    CHECK(j.at("scheme") == "leak");
    CHECK(r1.out.find("method 6") != std::string::npos);
}

TEST_CASE("cli eval all-methods table covers every scheme and method") {
    fs::path dir = fresh_dir("evalall");
    fs::path trace = gen_trace(dir, small_config(101, true), false);
    RunResult r = run_cli(dir, "eval --data \"" + trace.string() +
                                   "\" --method all --scheme all --seed 3");
    REQUIRE(r.code == 0);
    for (const char* scheme : {"binary", "leak", "combined"})
        for (const char* scope : {"per-app", "per-domain"}) {
            std::string header =
                std::string("== scheme ") + scheme + ", dispatch " + scope + " ==";
            CAPTURE(header);
            CHECK(r.out.find(header) != std::string::npos);
        }
    // Data rows start with the bare method id in a left-aligned column.
    for (int m = 1; m <= 6; ++m) {
        std::string row = "\n" + std::to_string(m) + "   ";
        CAPTURE(m);
        CHECK(r.out.find(row) != std::string::npos);
    }
}

TEST_CASE("cli graph exports a projection that round-trips through json") {
    fs::path dir = fresh_dir("graph");
    fs::path trace = gen_trace(dir, small_config(111, true), false);
    fs::path out = dir / "graph.json";
    RunResult r = run_cli(dir, "graph --data \"" + trace.string() + "\" --format json --out \"" +
                                   out.string() + "\"");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("bipartite:") != std::string::npos);
    CHECK(r.out.find("projection:") != std::string::npos);

    Dataset data = parse_dataset_file(trace.string());
    DomainSimilarityGraph expected = project_domains(build_bipartite(data));
    DomainSimilarityGraph loaded = graph_from_json(json::parse(slurp(out)));
    CHECK(loaded == expected);
}

TEST_CASE("cli graph dot export annotates communities only when asked") {
    fs::path dir = fresh_dir("graphdot");
    fs::path trace = gen_trace(dir, small_config(121, true), false);
    fs::path plain = dir / "plain.dot";
    fs::path annotated = dir / "annotated.dot";
    REQUIRE(run_cli(dir, "graph --data \"" + trace.string() + "\" --format dot --out \"" +
                             plain.string() + "\"")
                .code == 0);
    RunResult r = run_cli(dir, "graph --data \"" + trace.string() +
                                   "\" --format dot --communities --out \"" + annotated.string() +
                                   "\"");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("communities:") != std::string::npos);
    CHECK(r.out.find("modularity") != std::string::npos);

    std::string plain_dot = slurp(plain);
    std::string annotated_dot = slurp(annotated);
    CHECK(plain_dot.find("graph ") == 0);
    CHECK(plain_dot.find("community=") == std::string::npos);
    CHECK(annotated_dot.find("community=") != std::string::npos);
}

TEST_CASE("cli bench prints one row per measured operation") {
    fs::path dir = fresh_dir("bench");
    RunResult r = run_cli(dir, "bench --payload-size 256 --patterns 50 --iters 200 --seed 5");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("dpi-extract") != std::string::npos);
    CHECK(r.out.find("parse-extract") != std::string::npos);
    CHECK(r.out.find("ml-predict") != std::string::npos);
    CHECK(r.out.find("median_us") != std::string::npos);
}
