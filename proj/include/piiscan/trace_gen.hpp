#pragma once

// Synthetic labeled-trace generator.  Produces HTTP-like key=value traffic
// with planted exposures, decoy keys and background noise, deterministic per
// seed.  Two planting styles per exposure:
//   - specific: a type-owned key ("user=<value>"), learnable by anything;
//   - ambiguous (rate = ambiguity_level): a generic key shared across types
//     ("id=<value>") plus a per-type signal word ("sig=<word>").  For every
//     ambiguous exposure, two decoy packets elsewhere in the same app's
//     traffic carry the identical signal word next to a cancel word
//     ("sig=<word>&chk=non<word>") and expose nothing, pinning
//     P(type | signal) at 1/3 — below any threshold a calibrator would keep —
//     while "signal present and cancel absent" identifies the type exactly,
//     which a two-level tree expresses directly.  Unknown-category values
//     also share one scrub length, so the X-run word cannot say *which*
//     unknown type leaked (predefined values keep distinctive lengths).
// Noise keys and values draw from small fixed sets so every noise-derived
// feature is common; rare one-off tokens never enter a vocabulary and cannot
// outscore the signal conjunction on a handful of chance alignments.
// Labels are produced by scrubbing, so ground truth corresponds to actual
// payload occurrences by construction.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "piiscan/core.hpp"
#include "piiscan/rng.hpp"

namespace piiscan {

class InvalidGenConfigError : public DataError {
public:
    explicit InvalidGenConfigError(const std::string& detail)
        : DataError("invalid generator config: " + detail) {}
};

struct GenConfig {
    size_t num_apps = 20;
    size_t num_domains = 40;
    size_t packets_per_app = 250;
    double leak_prob = 0.25;
    double multi_leak_prob = 0.3;
    double background_prob = 0.25;
    double ambiguity_level = 0.3;
    double fan_out = 5.0;  // mean domains contacted per app
    std::map<Protocol, double> protocol_mix = {{Protocol::HTTP, 0.55},
                                               {Protocol::HTTPS_DECRYPTED, 0.30},
                                               {Protocol::TCP, 0.10},
                                               {Protocol::UDP, 0.05}};
    std::map<PiiType, std::vector<std::string>> key_templates;  // defaults filled below
    std::vector<std::string> decoy_keys = {"q",  "page",   "cb",     "sdk", "bundle",
                                           "lang", "tz", "screen", "net", "cpu"};
    uint64_t seed = 42;
    bool scrub = true;  // store X-run payloads (false keeps literals on the wire)
};

inline PiiDictionary default_pii_values() {
    PiiDictionary d;
    auto set = [&](const char* name, std::vector<std::string> vals) {
        d[*PiiType::builtin(name)] = std::move(vals);
    };
    set("IMEI", {"356938035643809"});
    set("AndroidId", {"9774d56d682e549c"});
    set("PhoneNumber", {"19495550134"});
    set("SerialNumber", {"R58MA1B2C3D"});
    set("ICCID", {"89014103211118510720"});
    set("MacAddress", {"02:00:4c:4f:4f:50"});
    set("AdvertiserId", {"38400000-8cf0-11bd-b23e-10b96e40000d"});
    set("Email", {"t.reyes88@example.org"});
    set("Location", {"33.6846", "-117.8265"});
    // Unknown-category values deliberately share one length (8) so their
    // scrubbed X-runs collide; Zipcode shares its length with the longitude.
    set("Username", {"ksmith92"});
    set("Password", {"hunter22"});
    set("FirstName", {"Gabriela"});
    set("LastName", {"Thornton"});
    set("Gender", {"declined"});
    set("Zipcode", {"926173042"});
    set("City", {"Portland"});
    return d;
}

inline std::map<PiiType, std::vector<std::string>> default_key_templates() {
    std::map<PiiType, std::vector<std::string>> k;
    auto set = [&](const char* name, std::vector<std::string> keys) {
        k[*PiiType::builtin(name)] = std::move(keys);
    };
    set("IMEI", {"imei", "device_imei"});
    set("AndroidId", {"android_id", "aid"});
    set("PhoneNumber", {"phone", "msisdn"});
    set("SerialNumber", {"serial", "sn"});
    set("ICCID", {"iccid", "sim_id"});
    set("MacAddress", {"mac", "wifi_mac"});
    set("AdvertiserId", {"adid", "idfa", "ad_uuid"});
    set("Email", {"email", "contact"});
    set("Location", {"lat", "lng"});
    set("Username", {"user", "login", "uname"});
    set("Password", {"pass", "pwd", "secret"});
    set("FirstName", {"fname", "first_name"});
    set("LastName", {"lname", "last_name"});
    set("Gender", {"gender", "sex"});
    set("Zipcode", {"zip", "postal_code"});
    set("City", {"city", "locality"});
    return k;
}

namespace detail {

// Context word per type, used by ambiguous plantings.
inline const std::map<std::string, std::string>& ctx_words() {
    static const std::map<std::string, std::string> m = {
        {"IMEI", "hwinfo"},        {"AndroidId", "osbuild"}, {"PhoneNumber", "dialer"},
        {"SerialNumber", "assembly"}, {"ICCID", "simcard"},  {"MacAddress", "netif"},
        {"AdvertiserId", "campaign"}, {"Email", "mailbox"},  {"Location", "geofix"},
        {"Username", "member"},    {"Password", "vault"},    {"FirstName", "given"},
        {"LastName", "family"},    {"Gender", "persona"},    {"Zipcode", "region"},
        {"City", "metro"}};
    return m;
}

// Single generic key for ambiguous plantings: with several generic keys an
// app's handful of ambiguous packets splits into per-key subsets small enough
// for chance type alignments to look learnable.
inline const std::string& shared_key() {
    static const std::string k = "id";
    return k;
}

inline std::string signal_word(const PiiType& type) {
    auto it = ctx_words().find(type.name());
    if (it != ctx_words().end()) return it->second;
    std::string w = "cx";  // configs may add types beyond the builtin table
    for (char c : type.name())
        if (std::isalnum(static_cast<unsigned char>(c)))
            w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return w;
}

// Fixed word pool for decoy values: small enough that each word repeats often
// (high document frequency), never collides with keys, signal words or PII
// values.
inline const std::vector<std::string>& word_pool() {
    static const std::vector<std::string> pool = [] {
        static const char* syl[16] = {"ba", "de", "ki", "lo", "mu", "na", "po", "re",
                                      "si", "tu", "va", "zo", "ch", "fa", "ge", "hi"};
        std::vector<std::string> p;
        for (size_t i = 0; i < 25; ++i)
            p.push_back(std::string(syl[(i * 7 + 3) % 16]) + syl[(i * 5 + 1) % 16] + syl[i % 16]);
        return p;
    }();
    return pool;
}

inline std::string noise_value(Rng& rng) {
    static const char alpha[] = "abcdefghijklmnopqrstuvwxyz0123456789";
    std::string v;
    v.push_back(static_cast<char>('0' + rng.bounded(10)));
    size_t len = 5 + rng.bounded(4);
    for (size_t i = 0; i < len; ++i) v.push_back(alpha[rng.bounded(36)]);
    return v;
}

inline std::string noise_pair(Rng& rng, const std::vector<std::string>& decoys) {
    std::string key = decoys.empty() ? "q" : rng.pick(decoys);
    std::string value = rng.chance(0.5) ? rng.pick(word_pool()) : noise_value(rng);
    return key + "=" + value;
}

struct AppProfile {
    std::string app_id;
    std::string version;
    std::vector<std::string> domains;
    std::vector<PiiType> types;                  // sorted by name
    std::map<PiiType, std::string> chosen_key;   // stable per app
};

struct PacketPlan {
    std::vector<std::pair<PiiType, bool>> leaks;  // (type, ambiguous)
    std::vector<PiiType> decoys;                  // signal+cancel plantings
};

}  // namespace detail

inline void validate(const GenConfig& cfg) {
    if (cfg.num_apps == 0) throw InvalidGenConfigError("num_apps must be positive");
    if (cfg.num_domains == 0) throw InvalidGenConfigError("num_domains must be positive");
    if (cfg.packets_per_app == 0) throw InvalidGenConfigError("packets_per_app must be positive");
    for (double p : {cfg.leak_prob, cfg.multi_leak_prob, cfg.background_prob, cfg.ambiguity_level})
        if (p < 0.0 || p > 1.0) throw InvalidGenConfigError("probabilities must be in [0,1]");
    if (cfg.fan_out <= 0.0) throw InvalidGenConfigError("fan_out must be positive");
    double sum = 0.0;
    for (const auto& [proto, w] : cfg.protocol_mix) {
        if (w < 0.0) throw InvalidGenConfigError("protocol weights must be non-negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw InvalidGenConfigError("protocol_mix must sum to 1");
}

inline Dataset generate(GenConfig cfg) {
    if (cfg.key_templates.empty()) cfg.key_templates = default_key_templates();
    validate(cfg);
    for (const auto& [type, keys] : cfg.key_templates)
        if (keys.empty())
            throw InvalidGenConfigError("empty key template for '" + type.name() + "'");

    Dataset data;
    data.pii_dictionary = default_pii_values();

    std::vector<PiiType> predefined_pool, unknown_pool;
    for (const auto& [type, keys] : cfg.key_templates) {
        if (!data.pii_dictionary.count(type)) continue;
        (type.category() == PiiCategory::Predefined ? predefined_pool : unknown_pool)
            .push_back(type);
    }
    if (predefined_pool.empty() && unknown_pool.empty())
        throw InvalidGenConfigError("no plantable pii types");

    Rng master(cfg.seed);

    std::vector<std::string> domains;
    for (size_t d = 0; d < cfg.num_domains; ++d) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "dom%02zu.example", d);
        domains.push_back(buf);
    }

    // App profiles.
    std::vector<detail::AppProfile> apps;
    for (size_t a = 0; a < cfg.num_apps; ++a) {
        Rng rng = master.fork(a + 1);
        detail::AppProfile ap;
        char buf[32];
        std::snprintf(buf, sizeof buf, "app%02zu", a);
        ap.app_id = buf;
        ap.version = "1." + std::to_string(a % 5) + ".0";

        size_t want = std::max<size_t>(
            1, std::min(cfg.num_domains,
                        static_cast<size_t>(std::llround(cfg.fan_out)) + rng.bounded(3) - 1));
        // The biased draw below cannot produce the top index (u*v/D tops out
        // at D-2), so cap the target at its reachable support.
        if (cfg.num_domains > 1) want = std::min(want, cfg.num_domains - 1);
        // Popularity-biased domain choice: low indices get picked more often,
        // so domains are shared across apps.
        std::set<std::string> chosen;
        while (chosen.size() < want) {
            size_t idx = std::min<size_t>(rng.bounded(cfg.num_domains) *
                                              rng.bounded(cfg.num_domains) / cfg.num_domains,
                                          cfg.num_domains - 1);
            chosen.insert(domains[idx]);
        }
        ap.domains.assign(chosen.begin(), chosen.end());

        std::set<PiiType> types;
        if (!predefined_pool.empty()) {
            std::vector<PiiType> pool = predefined_pool;
            rng.shuffle(pool);
            size_t n = std::min(pool.size(), 1 + rng.bounded(3));
            types.insert(pool.begin(), pool.begin() + static_cast<long>(n));
        }
        if (!unknown_pool.empty() && rng.chance(0.7)) {
            std::vector<PiiType> pool = unknown_pool;
            rng.shuffle(pool);
            size_t n = std::min(pool.size(), 3 + rng.bounded(3));
            types.insert(pool.begin(), pool.begin() + static_cast<long>(n));
        }
        ap.types.assign(types.begin(), types.end());
        for (const auto& t : ap.types)
            ap.chosen_key[t] = cfg.key_templates.at(t)[rng.bounded(cfg.key_templates.at(t).size())];
        apps.push_back(std::move(ap));
    }

    // Packets.  Per app: first plan which packets expose what, then spread the
    // matched decoys over exposure-free packets, then assemble payloads.
    int64_t next_id = 1;
    size_t global_idx = 0;
    for (size_t a = 0; a < cfg.num_apps; ++a) {
        const detail::AppProfile& ap = apps[a];

        Rng plan_rng = master.fork(0x10000 + a);
        std::vector<detail::PacketPlan> plans(cfg.packets_per_app);
        std::map<PiiType, size_t> ambiguous_count;
        std::vector<size_t> quiet;
        for (size_t p = 0; p < cfg.packets_per_app; ++p) {
            if (!ap.types.empty() && plan_rng.chance(cfg.leak_prob)) {
                size_t n = 1;
                if (plan_rng.chance(cfg.multi_leak_prob)) n = 2 + plan_rng.bounded(2);
                n = std::min(n, ap.types.size());
                std::vector<PiiType> pool = ap.types;
                plan_rng.shuffle(pool);
                for (size_t i = 0; i < n; ++i) {
                    bool ambiguous = plan_rng.chance(cfg.ambiguity_level);
                    plans[p].leaks.emplace_back(pool[i], ambiguous);
                    if (ambiguous) ++ambiguous_count[pool[i]];
                }
            } else {
                quiet.push_back(p);
            }
        }
        Rng decoy_rng = master.fork(0x20000 + a);
        if (!quiet.empty()) {
            std::vector<size_t> slots = quiet;
            decoy_rng.shuffle(slots);
            size_t cursor = 0;
            for (const auto& [type, count] : ambiguous_count)
                for (size_t i = 0; i < 2 * count; ++i)
                    plans[slots[cursor++ % slots.size()]].decoys.push_back(type);
        }

        Rng rng = master.fork(0x30000 + a);
        for (size_t p = 0; p < cfg.packets_per_app; ++p, ++global_idx) {
            PacketRecord r;
            r.id = next_id++;
            r.app_id = ap.app_id;
            r.app_version = ap.version;
            r.direction = Direction::Outgoing;
            r.background = rng.chance(cfg.background_prob);
            r.ts_ms = 1700000000000ll + static_cast<int64_t>(global_idx) * 37;
            r.src_port = static_cast<int>(1024 + (global_idx * 13) % 64500);

            double roll = rng.unit(), acc = 0.0;
            r.protocol = Protocol::HTTP;
            for (const auto& [proto, w] : cfg.protocol_mix) {
                acc += w;
                if (roll < acc) {
                    r.protocol = proto;
                    break;
                }
            }
            bool http_like =
                r.protocol == Protocol::HTTP || r.protocol == Protocol::HTTPS_DECRYPTED;
            if (http_like) {
                r.domain = ap.domains[rng.bounded(ap.domains.size())];
                r.dst_port = r.protocol == Protocol::HTTP ? 80 : 443;
            } else {
                r.dst_port = r.protocol == Protocol::TCP ? static_cast<int>(8080 + rng.bounded(3))
                                                         : static_cast<int>(53 + rng.bounded(2));
            }
            if (r.domain) {
                uint64_t h = 1469598103934665603ull;
                for (char c : *r.domain) h = (h ^ static_cast<uint8_t>(c)) * 1099511628211ull;
                char ip[32];
                std::snprintf(ip, sizeof ip, "10.%u.%u.%u", unsigned(h >> 16 & 127),
                              unsigned(h >> 8 & 255), unsigned(1 + (h & 253)));
                r.dst_ip = ip;
            } else {
                r.dst_ip = "198.51.100." + std::to_string(1 + rng.bounded(250));
            }

            const detail::PacketPlan& plan = plans[p];
            std::vector<std::string> middle;
            for (const auto& [type, ambiguous] : plan.leaks) {
                const std::vector<std::string>& lits = data.pii_dictionary.at(type);
                if (!ambiguous) {
                    const std::string& key = ap.chosen_key.at(type);
                    const std::vector<std::string>& tmpl = cfg.key_templates.at(type);
                    for (size_t li = 0; li < lits.size(); ++li) {
                        const std::string& k =
                            li == 0 ? key : tmpl[std::min(li, tmpl.size() - 1)];
                        middle.push_back(k + "=" + lits[li]);
                    }
                } else {
                    for (size_t li = 0; li < lits.size(); ++li)
                        middle.push_back(detail::shared_key() + "=" + lits[li]);
                    middle.push_back("sig=" + detail::signal_word(type));
                }
            }
            for (const auto& type : plan.decoys) {
                std::string w = detail::signal_word(type);
                middle.push_back("sig=" + w);
                middle.push_back("chk=non" + w);
            }
            size_t extra = 2 + rng.bounded(3);
            for (size_t i = 0; i < extra; ++i)
                middle.push_back(detail::noise_pair(rng, cfg.decoy_keys));
            rng.shuffle(middle);

            std::string query = detail::noise_pair(rng, cfg.decoy_keys);
            for (const auto& part : middle) query += "&" + part;
            // Fixed trailer: planted pairs never sit at the payload edge, and
            // the edge token stays too common to be mistaken for a signal.
            query += "&v=1";

            std::string payload;
            if (http_like) {
                payload = "POST /api/data?" + query + " HTTP/1.1\r\nhost: " + *r.domain +
                          "\r\nagent: " + ap.app_id + "/" + ap.version + "\r\n\r\n";
            } else {
                payload = query;
            }

            ScrubResult scrubbed = scrub_packet(payload, data.pii_dictionary);
            for (const auto& [t, amb] : plan.leaks)
                if (!scrubbed.labels.count(t))
                    throw Error("generator invariant: planted type not found by scrub");
            r.labels = scrubbed.labels;
            r.payload = cfg.scrub ? scrubbed.payload : payload;
            data.records.push_back(std::move(r));
        }
    }
    return data;
}

// ---------------------------------------------------------------------------
// Summary counts (leak figures are label instances; packet figures packets).

struct TraceSummary {
    size_t packets = 0;
    size_t apps = 0;
    size_t domains = 0;
    size_t leak_instances = 0;
    size_t leak_packets = 0;
    size_t unknown_leak_instances = 0;
    size_t encrypted_leak_instances = 0;
    size_t multi_leak_packets = 0;
    size_t background_leak_instances = 0;
    std::map<Protocol, size_t> packets_by_protocol;
    std::map<Protocol, size_t> leaks_by_protocol;

    bool operator==(const TraceSummary&) const = default;
};

inline TraceSummary summarize(const Dataset& data) {
    TraceSummary s;
    std::set<std::string> apps, doms;
    for (const auto& r : data.records) {
        ++s.packets;
        apps.insert(r.app_id);
        if (r.domain) doms.insert(*r.domain);
        ++s.packets_by_protocol[r.protocol];
        size_t n = r.labels.size();
        s.leak_instances += n;
        s.leaks_by_protocol[r.protocol] += n;
        if (n > 0) ++s.leak_packets;
        if (n > 1) ++s.multi_leak_packets;
        if (r.background) s.background_leak_instances += n;
        if (r.protocol == Protocol::HTTPS_DECRYPTED) s.encrypted_leak_instances += n;
        for (const auto& t : r.labels)
            if (t.category() == PiiCategory::Unknown) ++s.unknown_leak_instances;
    }
    s.apps = apps.size();
    s.domains = doms.size();
    return s;
}

inline std::string render_summary(const TraceSummary& s) {
    std::ostringstream out;
    auto row = [&](const std::string& k, size_t v) {
        out << "  " << k;
        for (size_t i = k.size(); i < 37; ++i) out << ' ';
        out << v << '\n';
    };
    out << "trace summary\n";
    row("packets", s.packets);
    row("apps", s.apps);
    row("domains", s.domains);
    row("exposure instances", s.leak_instances);
    row("packets with exposure", s.leak_packets);
    row("unknown-category instances", s.unknown_leak_instances);
    row("instances on decrypted traffic", s.encrypted_leak_instances);
    row("multi-exposure packets", s.multi_leak_packets);
    row("instances on background traffic", s.background_leak_instances);
    for (const auto& [proto, n] : s.packets_by_protocol) {
        size_t leaks = 0;
        if (auto it = s.leaks_by_protocol.find(proto); it != s.leaks_by_protocol.end())
            leaks = it->second;
        std::string k = to_string(proto) + " packets / instances";
        out << "  " << k;
        for (size_t i = k.size(); i < 37; ++i) out << ' ';
        out << n << " / " << leaks << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Config file round-trip; missing keys fall back to defaults.

inline json gen_config_to_json(const GenConfig& cfg) {
    json j;
    j["num_apps"] = cfg.num_apps;
    j["num_domains"] = cfg.num_domains;
    j["packets_per_app"] = cfg.packets_per_app;
    j["leak_prob"] = cfg.leak_prob;
    j["multi_leak_prob"] = cfg.multi_leak_prob;
    j["background_prob"] = cfg.background_prob;
    j["ambiguity_level"] = cfg.ambiguity_level;
    j["fan_out"] = cfg.fan_out;
    j["seed"] = cfg.seed;
    j["scrub"] = cfg.scrub;
    json mix = json::object();
    for (const auto& [proto, w] : cfg.protocol_mix) mix[to_string(proto)] = w;
    j["protocol_mix"] = mix;
    json templates = json::object();
    for (const auto& [type, keys] : cfg.key_templates) templates[type.name()] = keys;
    j["key_templates"] = templates;
    j["decoy_keys"] = cfg.decoy_keys;
    return j;
}

inline GenConfig gen_config_from_json(const json& j) {
    GenConfig cfg;
    cfg.key_templates = default_key_templates();
    try {
        if (j.contains("num_apps")) cfg.num_apps = j["num_apps"].get<size_t>();
        if (j.contains("num_domains")) cfg.num_domains = j["num_domains"].get<size_t>();
        if (j.contains("packets_per_app"))
            cfg.packets_per_app = j["packets_per_app"].get<size_t>();
        if (j.contains("leak_prob")) cfg.leak_prob = j["leak_prob"].get<double>();
        if (j.contains("multi_leak_prob"))
            cfg.multi_leak_prob = j["multi_leak_prob"].get<double>();
        if (j.contains("background_prob"))
            cfg.background_prob = j["background_prob"].get<double>();
        if (j.contains("ambiguity_level"))
            cfg.ambiguity_level = j["ambiguity_level"].get<double>();
        if (j.contains("fan_out")) cfg.fan_out = j["fan_out"].get<double>();
        if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
        if (j.contains("scrub")) cfg.scrub = j["scrub"].get<bool>();
        if (j.contains("protocol_mix")) {
            cfg.protocol_mix.clear();
            for (const auto& [name, w] : j["protocol_mix"].items())
                cfg.protocol_mix[protocol_from_string(name)] = w.get<double>();
        }
        if (j.contains("key_templates")) {
            cfg.key_templates.clear();
            for (const auto& [name, keys] : j["key_templates"].items()) {
                PiiType t = PiiType::builtin(name).value_or(PiiType::custom(name));
                cfg.key_templates[t] = keys.get<std::vector<std::string>>();
            }
        }
        if (j.contains("decoy_keys"))
            cfg.decoy_keys = j["decoy_keys"].get<std::vector<std::string>>();
    } catch (const DataError&) {
        throw;
    } catch (const std::exception& e) {
        throw InvalidGenConfigError(e.what());
    }
    return cfg;
}

}  // namespace piiscan
