#pragma once

// Leak-behavior graph analysis: the bipartite app-to-domain exposure graph,
// its weighted domain-similarity projection (edge weight = number of apps
// leaking to both domains), greedy modularity community detection with local
// moves and aggregation, and DOT / JSON export.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "piiscan/core.hpp"
#include "piiscan/rng.hpp"

namespace piiscan {

class EmptyGraphError : public DataError {
public:
    EmptyGraphError() : DataError("graph has no nodes") {}
};

struct BipartiteLeakGraph {
    std::set<std::string> app_nodes;
    std::set<std::string> domain_nodes;
    // (app, domain) -> PII types observed leaking on that pair.
    std::map<std::pair<std::string, std::string>, std::set<PiiType>> edges;

    bool operator==(const BipartiteLeakGraph&) const = default;
};

inline BipartiteLeakGraph build_bipartite(const Dataset& data) {
    BipartiteLeakGraph g;
    for (const PacketRecord& r : data.records) {
        if (!r.has_leak() || !r.domain) continue;
        g.app_nodes.insert(r.app_id);
        g.domain_nodes.insert(*r.domain);
        auto& ann = g.edges[{r.app_id, *r.domain}];
        ann.insert(r.labels.begin(), r.labels.end());
    }
    return g;
}

struct DomainSimilarityGraph {
    // domain -> PII types it receives (union over incoming bipartite edges).
    std::map<std::string, std::set<PiiType>> nodes;
    // Unordered pair stored with first < second; weight = common leaking apps.
    std::map<std::pair<std::string, std::string>, uint32_t> edges;

    bool operator==(const DomainSimilarityGraph&) const = default;
};

inline DomainSimilarityGraph project_domains(const BipartiteLeakGraph& bg) {
    DomainSimilarityGraph g;
    std::map<std::string, std::set<std::string>> apps_of;
    for (const auto& [edge, types] : bg.edges) {
        apps_of[edge.second].insert(edge.first);
        auto& ann = g.nodes[edge.second];
        ann.insert(types.begin(), types.end());
    }
    for (const std::string& d : bg.domain_nodes) g.nodes.try_emplace(d);
    for (auto a = g.nodes.begin(); a != g.nodes.end(); ++a) {
        for (auto b = std::next(a); b != g.nodes.end(); ++b) {
            const auto& sa = apps_of[a->first];
            const auto& sb = apps_of[b->first];
            uint32_t w = 0;
            for (const auto& app : sa) w += sb.count(app) ? 1 : 0;
            if (w > 0) g.edges[{a->first, b->first}] = w;
        }
    }
    return g;
}

struct CommunityAssignment {
    std::map<std::string, int> membership;  // domain -> dense community id
    double modularity = 0.0;
    // Modularity of the flattened membership after each local-move sweep
    // (first entry: the initial all-singletons partition).  Non-decreasing.
    std::vector<double> trace;
};

// Weighted modularity Q = (1/2m) * sum_ij [A_ij - k_i*k_j/2m] * delta(c_i,c_j)
// evaluated directly on a membership; returns 0 when the graph has no edges.
inline double evaluate_modularity(const DomainSimilarityGraph& g,
                                  const std::map<std::string, int>& membership) {
    double m = 0.0;
    std::map<std::string, double> degree;
    for (const auto& [e, w] : g.edges) {
        m += w;
        degree[e.first] += w;
        degree[e.second] += w;
    }
    if (m <= 0.0) return 0.0;
    std::map<int, double> w_in, deg;
    for (const auto& [e, w] : g.edges) {
        int ca = membership.at(e.first);
        int cb = membership.at(e.second);
        if (ca == cb) w_in[ca] += w;
    }
    for (const auto& [node, k] : degree) deg[membership.at(node)] += k;
    double q = 0.0;
    for (const auto& [c, k] : deg) {
        double frac = k / (2.0 * m);
        q += w_in[c] / m - frac * frac;
    }
    return q;
}

inline CommunityAssignment detect_communities(const DomainSimilarityGraph& g, uint64_t seed = 1) {
    if (g.nodes.empty()) throw EmptyGraphError();

    std::vector<std::string> names;
    names.reserve(g.nodes.size());
    for (const auto& [d, _] : g.nodes) names.push_back(d);
    std::map<std::string, size_t> index;
    for (size_t i = 0; i < names.size(); ++i) index[names[i]] = i;

    const size_t n = names.size();
    // orig_comm[i]: community of original node i in terms of current-level nodes.
    std::vector<size_t> orig_comm(n);
    for (size_t i = 0; i < n; ++i) orig_comm[i] = i;

    struct Level {
        std::vector<std::map<size_t, double>> adj;  // neighbor -> weight (no self)
        std::vector<double> self;                   // self-loop weight (stored once)
    };
    Level lvl;
    lvl.adj.resize(n);
    lvl.self.assign(n, 0.0);
    double total_w = 0.0;
    for (const auto& [e, w] : g.edges) {
        size_t a = index[e.first], b = index[e.second];
        lvl.adj[a][b] += w;
        lvl.adj[b][a] += w;
        total_w += w;
    }

    CommunityAssignment out;
    auto flatten_q = [&](const std::vector<size_t>& comm) {
        std::map<std::string, int> member;
        for (size_t i = 0; i < n; ++i) member[names[i]] = int(comm[orig_comm[i]]);
        return evaluate_modularity(g, member);
    };

    std::vector<size_t> identity(n);
    for (size_t i = 0; i < n; ++i) identity[i] = i;
    out.trace.push_back(flatten_q(identity));

    Rng rng(seed);
    if (total_w > 0.0) {
        const double m2 = 2.0 * total_w;
        while (true) {
            const size_t ln = lvl.adj.size();
            std::vector<double> k(ln);
            for (size_t i = 0; i < ln; ++i) {
                k[i] = 2.0 * lvl.self[i];
                for (const auto& [_, w] : lvl.adj[i]) k[i] += w;
            }
            std::vector<size_t> comm(ln);
            std::vector<double> tot(k);
            for (size_t i = 0; i < ln; ++i) comm[i] = i;

            // Node order: shuffled once per level, then fixed across sweeps.
            std::vector<size_t> order(ln);
            for (size_t i = 0; i < ln; ++i) order[i] = i;
            rng.shuffle(order);

            bool level_moved = false;
            bool sweep_moved = true;
            while (sweep_moved) {
                sweep_moved = false;
                for (size_t i : order) {
                    size_t c_old = comm[i];
                    tot[c_old] -= k[i];
                    std::map<size_t, double> neigh;  // community -> link weight
                    neigh[c_old];                    // staying is always a candidate
                    for (const auto& [j, w] : lvl.adj[i]) neigh[comm[j]] += w;
                    size_t best = c_old;
                    double best_gain = neigh[c_old] - tot[c_old] * k[i] / m2;
                    for (const auto& [c, w] : neigh) {
                        double gain = w - tot[c] * k[i] / m2;
                        if (gain > best_gain + 1e-12) {
                            best_gain = gain;
                            best = c;
                        }
                    }
                    tot[best] += k[i];
                    comm[i] = best;
                    if (best != c_old) sweep_moved = level_moved = true;
                }
                out.trace.push_back(flatten_q(comm));
            }

            // Renumber communities densely, ascending by old id.
            std::map<size_t, size_t> remap;
            for (size_t i = 0; i < ln; ++i) remap.emplace(comm[i], remap.size());
            size_t nc = remap.size();
            if (!level_moved || nc == ln) {
                for (size_t& c : orig_comm) c = remap[comm[c]];
                break;
            }

            Level next;
            next.adj.resize(nc);
            next.self.assign(nc, 0.0);
            for (size_t i = 0; i < ln; ++i) {
                size_t ci = remap[comm[i]];
                next.self[ci] += lvl.self[i];
                for (const auto& [j, w] : lvl.adj[i]) {
                    size_t cj = remap[comm[j]];
                    if (ci == cj) {
                        if (i < j) next.self[ci] += w;  // each undirected edge once
                    } else {
                        next.adj[ci][cj] += w;
                    }
                }
            }
            for (size_t& c : orig_comm) c = remap[comm[c]];
            lvl = std::move(next);
        }
    }

    // Dense final ids in order of first appearance over sorted domain names.
    std::map<size_t, int> dense;
    for (size_t i = 0; i < n; ++i) dense.emplace(orig_comm[i], int(dense.size()));
    for (size_t i = 0; i < n; ++i) out.membership[names[i]] = dense[orig_comm[i]];
    out.modularity = evaluate_modularity(g, out.membership);
    return out;
}

// ---------------------------------------------------------------------------
// Export.

enum class GraphFormat { Dot, JsonGraph };

inline GraphFormat graph_format_from_string(const std::string& s) {
    if (s == "dot") return GraphFormat::Dot;
    if (s == "json") return GraphFormat::JsonGraph;
    throw DataError("unknown graph format '" + s + "'");
}

namespace detail {

// Node fill color keyed by the PII-type set: stable hash of the sorted names,
// folded into a light RGB so labels stay readable.
inline std::string pii_set_color(const std::set<PiiType>& types) {
    uint64_t h = 1469598103934665603ull;
    for (const PiiType& t : types) {
        for (char c : t.name()) {
            h ^= uint8_t(c);
            h *= 1099511628211ull;
        }
        h ^= uint8_t(';');
        h *= 1099511628211ull;
    }
    uint32_t rgb = (uint32_t(h) & 0x7f7f7f) | 0x808080;
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%06x", rgb);
    return buf;
}

}  // namespace detail

inline std::string render_dot(const DomainSimilarityGraph& g,
                              const CommunityAssignment* communities = nullptr) {
    std::ostringstream out;
    out << "graph domains {\n  node [style=filled];\n";
    for (const auto& [d, types] : g.nodes) {
        out << "  \"" << d << "\" [fillcolor=\"" << detail::pii_set_color(types) << "\"";
        if (communities) {
            auto it = communities->membership.find(d);
            if (it != communities->membership.end()) out << " community=" << it->second;
        }
        out << "];\n";
    }
    for (const auto& [e, w] : g.edges)
        out << "  \"" << e.first << "\" -- \"" << e.second << "\" [penwidth=" << w << "];\n";
    out << "}\n";
    return out.str();
}

inline json graph_to_json(const DomainSimilarityGraph& g,
                          const CommunityAssignment* communities = nullptr) {
    json j;
    j["nodes"] = json::array();
    for (const auto& [d, types] : g.nodes) {
        json node;
        node["id"] = d;
        node["pii"] = json::array();
        for (const PiiType& t : types) node["pii"].push_back(t.name());
        if (communities) {
            auto it = communities->membership.find(d);
            if (it != communities->membership.end()) node["community"] = it->second;
        }
        j["nodes"].push_back(std::move(node));
    }
    j["edges"] = json::array();
    for (const auto& [e, w] : g.edges)
        j["edges"].push_back({{"a", e.first}, {"b", e.second}, {"w", w}});
    return j;
}

inline DomainSimilarityGraph graph_from_json(const json& j) {
    DomainSimilarityGraph g;
    try {
        for (const auto& node : j.at("nodes")) {
            std::set<PiiType> types;
            for (const auto& name : node.at("pii")) {
                std::string n = name.get<std::string>();
                if (auto b = PiiType::builtin(n)) types.insert(*b);
                else types.insert(PiiType::custom(n));
            }
            g.nodes[node.at("id").get<std::string>()] = std::move(types);
        }
        for (const auto& edge : j.at("edges")) {
            std::string a = edge.at("a").get<std::string>();
            std::string b = edge.at("b").get<std::string>();
            if (b < a) std::swap(a, b);
            g.edges[{a, b}] = edge.at("w").get<uint32_t>();
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed graph json: ") + e.what());
    }
    return g;
}

inline void export_graph(const DomainSimilarityGraph& g, const CommunityAssignment* communities,
                         GraphFormat format, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path, "cannot open for writing");
    if (format == GraphFormat::Dot) out << render_dot(g, communities);
    else out << graph_to_json(g, communities).dump(2) << '\n';
    out.flush();
    if (!out) throw IoError(path, "write failed");
}

}  // namespace piiscan
