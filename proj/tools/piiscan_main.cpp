// piiscan command-line tool: generate synthetic labeled traces, train model
// registries, run detection with policy actions, evaluate the six-method
// comparison, export leak-behavior graphs, and micro-benchmark the hot paths.
//
// Exit codes: 0 success, 1 usage error, 2 data/input error, 3 internal error.

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "piiscan/bench.hpp"
#include "piiscan/evaluation.hpp"
#include "piiscan/graph.hpp"
#include "piiscan/pipeline.hpp"
#include "piiscan/trace_gen.hpp"

namespace {

using namespace piiscan;

json read_json_or_throw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open for reading");
    try {
        return json::parse(in);
    } catch (const std::exception& e) {
        throw DataError("bad json in '" + path + "': " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    out << text;
    out.flush();
    if (!out) throw IoError(path, "write failed");
}

PiiDictionary dictionary_from_json(const json& j) {
    PiiDictionary dict;
    for (const auto& [name, lits] : j.items()) {
        PiiType t = PiiType::builtin(name).value_or(PiiType::custom(name));
        dict[t] = lits.get<std::vector<std::string>>();
    }
    return dict;
}

// --------------------------------------------------------------------- gen

struct GenArgs {
    std::string config;
    std::string out;
    std::optional<uint64_t> seed;
    bool raw = false;
};

int cmd_gen(const GenArgs& a) {
    GenConfig cfg = gen_config_from_json(read_json_or_throw(a.config));
    if (a.seed) cfg.seed = *a.seed;
    if (a.raw) cfg.scrub = false;
    Dataset data = generate(cfg);
    write_dataset_file(data, a.out);
    std::cout << render_summary(summarize(data));
    std::cout << "wrote " << data.records.size() << " records to " << a.out << "\n";
    return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    std::string data;
    std::string scope = "per-app";
    std::string labels = "all";
    std::string out;
};

int cmd_train(const TrainArgs& a) {
    Dataset data = parse_dataset_file(a.data);
    ClassifierScope scope = scope_from_string(a.scope);
    LabelPolicy policy = label_policy_from_string(a.labels);
    ModelRegistry reg = train_registry(data, scope, policy, RegistryConfig{});
    save_registry(reg, a.out, data.pii_dictionary);

    CoverageStats st = coverage_stats(reg, data);
    std::printf("trained %zu specialized %s classifiers (+1 general) on %zu records\n",
                st.specialized_count, a.scope.c_str(), data.records.size());
    std::printf("specialized coverage: %.1f%% of traffic, %.1f%% of exposure packets\n",
                100.0 * st.traffic_fraction, 100.0 * st.leak_packet_fraction);
    if (!reg.skipped_entities.empty()) {
        std::printf("skipped entities (no specialized model):");
        for (const auto& e : reg.skipped_entities) std::printf(" %s", e.c_str());
        std::printf("\n");
    }
    size_t reduced = reg.general.vocab.size();
    size_t original = reg.general_original_features;
    double factor = reduced > 0 ? double(original) / double(reduced) : 0.0;
    std::printf("general classifier: %zu features (reduced from %zu, %.1fx reduction)\n",
                reduced, original, factor);
    std::printf("registry written to %s\n", a.out.c_str());
    return 0;
}

// ------------------------------------------------------------------ detect

struct DetectArgs {
    std::string data;
    std::string models;
    std::string pii;
    bool interactive = false;
    std::string policy;
    std::string log;
    std::string out;
    int workers = 1;
};

void configure_policy(PolicyStore& store, const std::string& value) {
    auto set_default = [&](Action a) { store.set_default(a); };
    if (value == "allow" || value == "all-allow") return set_default(Action::Allow);
    if (value == "block" || value == "all-block") return set_default(Action::Block);
    if (value == "hash" || value == "all-hash") return set_default(Action::HashReplace);
    json j = read_json_or_throw(value);
    if (j.contains("default") && !j["default"].is_null())
        store.set_default(action_from_string(j["default"].get<std::string>()));
    if (j.contains("rules"))
        for (const auto& r : j["rules"]) {
            std::string name = r.at("type").get<std::string>();
            PiiType t = PiiType::builtin(name).value_or(PiiType::custom(name));
            store.set_rule(r.at("app").get<std::string>(), t,
                           action_from_string(r.at("action").get<std::string>()));
        }
}

int cmd_detect(const DetectArgs& a) {
    Dataset data = parse_dataset_file(a.data);
    LoadedRegistry lr = load_registry(a.models);
    PiiDictionary dict =
        a.pii.empty() ? lr.pii_dictionary : dictionary_from_json(read_json_or_throw(a.pii));
    DetectionEngine engine = build_engine(std::move(lr.registry), std::move(dict));

    PolicyStore store;
    PromptFn prompt;
    if (a.interactive) {
        prompt = [](const std::string& app, const PiiType& type) {
            std::cerr << "[a]llow/[b]lock/[h]ash for " << app << "/" << type.name() << "? "
                      << std::flush;
            std::string line;
            if (!std::getline(std::cin, line) || line.empty())
                throw DataError("interactive prompt got no answer");
            switch (line[0]) {
                case 'a': return Action::Allow;
                case 'b': return Action::Block;
                case 'h': return Action::HashReplace;
                default: throw DataError("unrecognized answer '" + line + "'");
            }
        };
    } else if (!a.policy.empty()) {
        configure_policy(store, a.policy);
    } else {
        store.set_streaming(true);  // forward undecided packets, queue the question
    }

    size_t workers = a.interactive ? 1 : size_t(std::max(1, a.workers));
    const size_t n = data.records.size();
    std::vector<Detection> detections(n);
    std::vector<ActionOutcome> outcomes(n);
    ConnectionTable conns;

    auto process = [&](size_t i) {
        const PacketRecord& r = data.records[i];
        conns.register_connection(r.src_port, r.app_id);
        detections[i] = inspect_packet(engine, r, conns);
        outcomes[i] = apply_policy(r.payload, detections[i], engine, store, prompt);
    };
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) process(i);
    } else {
        std::atomic<size_t> cursor{0};
        std::vector<std::thread> pool;
        for (size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (size_t i = cursor.fetch_add(1); i < n; i = cursor.fetch_add(1)) process(i);
            });
        for (auto& t : pool) t.join();
    }

    if (!a.log.empty()) {
        std::ofstream log(a.log, std::ios::binary | std::ios::trunc);
        if (!log) throw IoError(a.log, "cannot open for writing");
        for (size_t i = 0; i < n; ++i)
            log << detection_to_json(detections[i], &outcomes[i]).dump() << '\n';
        log.flush();
        if (!log) throw IoError(a.log, "write failed");
    }
    if (!a.out.empty()) {
        Dataset forwarded;
        forwarded.pii_dictionary = data.pii_dictionary;
        for (size_t i = 0; i < n; ++i) {
            if (outcomes[i].dropped) continue;
            PacketRecord r = data.records[i];
            r.payload = outcomes[i].payload;
            forwarded.records.push_back(std::move(r));
        }
        write_dataset_file(forwarded, a.out);
    }

    size_t detected = 0, dropped = 0, modified = 0, undecided = 0;
    size_t by_string = 0, by_classifier = 0;
    for (size_t i = 0; i < n; ++i) {
        if (!detections[i].empty()) ++detected;
        if (outcomes[i].dropped) ++dropped;
        if (outcomes[i].modified) ++modified;
        if (outcomes[i].undecided) ++undecided;
        for (const auto& [type, method] : detections[i].pii_found)
            (method == DetectMethod::StringMatch ? by_string : by_classifier) += 1;
    }
    std::printf("inspected %zu packets: %zu with detections (%zu string, %zu classifier)\n", n,
                detected, by_string, by_classifier);
    std::printf("actions: %zu forwarded, %zu hashed, %zu blocked, %zu undecided\n",
                n - dropped, modified, dropped, undecided);
    std::printf("policy rules remembered: %zu; pending prompts: %zu\n", store.rule_count(),
                store.pending().size());
    return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
    std::string data;
    std::string method = "all";
    std::string scheme = "all";
    std::string scope = "per-app";
    uint64_t seed = 1;
    size_t folds = 5;
    std::string out;
    bool per_entity = false;
};

int cmd_eval(const EvalArgs& a) {
    Dataset data = parse_dataset_file(a.data);
    if (a.method == "all" || a.scheme == "all") {
        ComparisonReport full = run_method_comparison(data, a.seed, a.folds);
        ComparisonReport view;
        view.folds = full.folds;
        view.seed = full.seed;
        for (const MetricsReport& r : full.reports) {
            if (a.method != "all" && std::to_string(r.method_id) != a.method) continue;
            if (a.scheme != "all" && to_string(r.scheme) != a.scheme) continue;
            view.reports.push_back(r);
        }
        std::cout << render_comparison(view, a.per_entity);
        if (!a.out.empty()) write_text_file(a.out, comparison_to_json(view).dump(2) + "\n");
        return 0;
    }
    int method = 0;
    try {
        method = std::stoi(a.method);
    } catch (const std::exception&) {
        throw DataError("method must be 1..6 or 'all', got '" + a.method + "'");
    }
    MetricsReport report = cross_validate(data, method, eval_scheme_from_string(a.scheme),
                                          scope_from_string(a.scope), a.folds, a.seed);
    std::cout << render_metrics_report(report);
    if (!a.out.empty()) write_text_file(a.out, metrics_report_to_json(report).dump(2) + "\n");
    return 0;
}

// ------------------------------------------------------------------- graph

struct GraphArgs {
    std::string data;
    std::string format = "dot";
    bool communities = false;
    std::string out;
    uint64_t seed = 1;
};

int cmd_graph(const GraphArgs& a) {
    Dataset data = parse_dataset_file(a.data);
    BipartiteLeakGraph bg = build_bipartite(data);
    DomainSimilarityGraph g = project_domains(bg);
    std::optional<CommunityAssignment> comm;
    if (a.communities && !g.nodes.empty()) comm = detect_communities(g, a.seed);
    export_graph(g, comm ? &*comm : nullptr, graph_format_from_string(a.format), a.out);
    std::printf("bipartite: %zu apps, %zu domains, %zu edges\n", bg.app_nodes.size(),
                bg.domain_nodes.size(), bg.edges.size());
    std::printf("projection: %zu domains, %zu edges\n", g.nodes.size(), g.edges.size());
    if (comm) {
        std::set<int> ids;
        for (const auto& [_, c] : comm->membership) ids.insert(c);
        std::printf("communities: %zu, modularity %.6f\n", ids.size(), comm->modularity);
    }
    std::printf("wrote %s\n", a.out.c_str());
    return 0;
}

// ------------------------------------------------------------------- bench

int cmd_bench(const BenchConfig& cfg) {
    BenchReport r = run_bench(cfg);
    std::cout << render_bench(r);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PII exposure detection toolkit"};
    app.require_subcommand(1);

    GenArgs gen_args;
    uint64_t gen_seed = 0;
    auto* gen = app.add_subcommand("gen", "generate a synthetic labeled trace");
    gen->add_option("--config", gen_args.config, "generator config json")->required();
    auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "override config seed");
    gen->add_option("--out", gen_args.out, "output dataset path (jsonl)")->required();
    gen->add_flag("--raw", gen_args.raw, "keep original payloads (no scrubbing)");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train a model registry");
    train->add_option("--data", train_args.data, "training dataset (jsonl)")->required();
    train->add_option("--scope", train_args.scope, "per-app|per-domain")
        ->check(CLI::IsMember({"per-app", "per-domain"}));
    train->add_option("--labels", train_args.labels, "all|unknown")
        ->check(CLI::IsMember({"all", "unknown"}));
    train->add_option("--out", train_args.out, "registry output directory")->required();

    DetectArgs detect_args;
    auto* detect = app.add_subcommand("detect", "run detection and policy over a trace");
    detect->add_option("--data", detect_args.data, "dataset to inspect (jsonl)")->required();
    detect->add_option("--models", detect_args.models, "registry directory")->required();
    detect->add_option("--pii", detect_args.pii, "pii dictionary json (defaults to registry's)");
    auto* inter = detect->add_flag("--interactive", detect_args.interactive,
                                   "prompt on stdin for each new (app, type)");
    detect->add_option("--policy", detect_args.policy,
                       "default action (allow|block|hash) or policy json path")
        ->excludes(inter);
    detect->add_option("--log", detect_args.log, "detection jsonl output");
    detect->add_option("--out", detect_args.out, "forwarded-trace output (jsonl)");
    detect->add_option("--workers", detect_args.workers, "worker threads")
        ->check(CLI::Range(1, 64));

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "cross-validated method comparison");
    eval->add_option("--data", eval_args.data, "dataset (jsonl)")->required();
    eval->add_option("--method", eval_args.method, "1..6 or all");
    eval->add_option("--scheme", eval_args.scheme, "binary|leak|combined|all")
        ->check(CLI::IsMember({"binary", "leak", "combined", "all"}));
    eval->add_option("--scope", eval_args.scope, "per-app|per-domain (single-method runs)")
        ->check(CLI::IsMember({"per-app", "per-domain"}));
    eval->add_option("--seed", eval_args.seed, "fold seed");
    eval->add_option("--folds", eval_args.folds, "fold count")->check(CLI::Range(2, 100));
    eval->add_option("--out", eval_args.out, "write report json here");
    eval->add_flag("--per-entity", eval_args.per_entity, "print per-entity rows in tables");

    GraphArgs graph_args;
    auto* graph = app.add_subcommand("graph", "export the leak-behavior graph");
    graph->add_option("--data", graph_args.data, "dataset (jsonl)")->required();
    graph->add_option("--format", graph_args.format, "dot|json")
        ->check(CLI::IsMember({"dot", "json"}));
    graph->add_flag("--communities", graph_args.communities, "annotate modularity communities");
    graph->add_option("--out", graph_args.out, "output path")->required();
    graph->add_option("--seed", graph_args.seed, "community detection seed");

    BenchConfig bench_cfg;
    auto* bench = app.add_subcommand("bench", "micro-benchmark extraction and prediction");
    bench->add_option("--payload-size", bench_cfg.payload_size, "payload bytes")
        ->check(CLI::Range(size_t(16), size_t(1 << 20)));
    bench->add_option("--patterns", bench_cfg.patterns, "vocabulary patterns")
        ->check(CLI::Range(size_t(1), size_t(100000)));
    bench->add_option("--iters", bench_cfg.iters, "timed iterations")
        ->check(CLI::Range(size_t(1), size_t(10000000)));
    bench->add_option("--seed", bench_cfg.seed, "workload seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) {
            if (gen_seed_opt->count() > 0) gen_args.seed = gen_seed;
            return cmd_gen(gen_args);
        }
        if (train->parsed()) return cmd_train(train_args);
        if (detect->parsed()) return cmd_detect(detect_args);
        if (eval->parsed()) return cmd_eval(eval_args);
        if (graph->parsed()) return cmd_graph(graph_args);
        if (bench->parsed()) return cmd_bench(bench_cfg);
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
