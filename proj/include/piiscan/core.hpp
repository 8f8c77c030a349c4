#pragma once

// Core data model: PII taxonomy, packet records, datasets (JSONL), payload
// scrubbing.  Everything downstream builds on the types in this header.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace piiscan {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Anything wrong with input data or files (CLI exit code 2).
class DataError : public Error {
public:
    using Error::Error;
};

class IoError : public DataError {
public:
    explicit IoError(const std::string& path, const std::string& detail)
        : DataError("i/o failure on '" + path + "': " + detail) {}
};

class MalformedLineError : public DataError {
public:
    MalformedLineError(size_t line_no, const std::string& detail)
        : DataError("line " + std::to_string(line_no) + ": " + detail), line_no(line_no) {}
    size_t line_no;
};

class UnknownPiiLabelError : public DataError {
public:
    explicit UnknownPiiLabelError(const std::string& label)
        : DataError("unknown pii label '" + label + "'"), label(label) {}
    std::string label;
};

class PortOutOfRangeError : public DataError {
public:
    explicit PortOutOfRangeError(int64_t port)
        : DataError("port out of range: " + std::to_string(port)), port(port) {}
    int64_t port;
};

// ---------------------------------------------------------------------------
// Base64 (standard alphabet, padded) for payload bytes in JSONL.

inline std::string base64_encode(std::string_view bytes) {
    static constexpr char tbl[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        uint32_t v = (static_cast<uint8_t>(bytes[i]) << 16) |
                     (static_cast<uint8_t>(bytes[i + 1]) << 8) |
                     static_cast<uint8_t>(bytes[i + 2]);
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out.push_back(tbl[(v >> 6) & 63]);
        out.push_back(tbl[v & 63]);
    }
    if (i + 1 == bytes.size()) {
        uint32_t v = static_cast<uint8_t>(bytes[i]) << 16;
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out += "==";
    } else if (i + 2 == bytes.size()) {
        uint32_t v = (static_cast<uint8_t>(bytes[i]) << 16) |
                     (static_cast<uint8_t>(bytes[i + 1]) << 8);
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out.push_back(tbl[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

inline std::string base64_decode(std::string_view text) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (text.size() % 4 != 0) throw DataError("base64: length not a multiple of 4");
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (size_t i = 0; i < text.size(); i += 4) {
        int pad = 0;
        uint32_t v = 0;
        for (size_t j = 0; j < 4; ++j) {
            char c = text[i + j];
            if (c == '=') {
                if (i + 4 != text.size() || j < 2) throw DataError("base64: bad padding");
                ++pad;
                v <<= 6;
            } else {
                if (pad > 0) throw DataError("base64: data after padding");
                int d = val(c);
                if (d < 0) throw DataError("base64: invalid character");
                v = (v << 6) | static_cast<uint32_t>(d);
            }
        }
        out.push_back(static_cast<char>((v >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<char>((v >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<char>(v & 0xff));
    }
    return out;
}

// ---------------------------------------------------------------------------
// PII taxonomy.
//
// Two categories: Predefined types have device-known literal values and are
// detectable by exact string matching; Unknown types are user-entered values a
// matcher cannot know up front and are the classifier's job.  User-defined
// custom types (declared through a dataset's pii dictionary) behave like
// predefined ones: they carry literals.

enum class PiiCategory { Predefined, Unknown };

class PiiType {
public:
    PiiType() = default;

    static std::optional<PiiType> builtin(std::string_view name);
    static PiiType custom(std::string name) { return PiiType(std::move(name), PiiCategory::Predefined); }

    const std::string& name() const { return name_; }
    PiiCategory category() const { return category_; }

    // Identity is the name; category is derived from it.
    bool operator==(const PiiType& o) const { return name_ == o.name_; }
    std::strong_ordering operator<=>(const PiiType& o) const { return name_ <=> o.name_; }

private:
    PiiType(std::string name, PiiCategory cat) : name_(std::move(name)), category_(cat) {}
    std::string name_;
    PiiCategory category_ = PiiCategory::Predefined;
};

inline const std::vector<std::pair<std::string, PiiCategory>>& builtin_pii_table() {
    static const std::vector<std::pair<std::string, PiiCategory>> table = {
        {"IMEI", PiiCategory::Predefined},
        {"AndroidId", PiiCategory::Predefined},
        {"PhoneNumber", PiiCategory::Predefined},
        {"SerialNumber", PiiCategory::Predefined},
        {"ICCID", PiiCategory::Predefined},
        {"MacAddress", PiiCategory::Predefined},
        {"AdvertiserId", PiiCategory::Predefined},
        {"Email", PiiCategory::Predefined},
        {"Location", PiiCategory::Predefined},
        {"Username", PiiCategory::Unknown},
        {"Password", PiiCategory::Unknown},
        {"FirstName", PiiCategory::Unknown},
        {"LastName", PiiCategory::Unknown},
        {"Gender", PiiCategory::Unknown},
        {"Zipcode", PiiCategory::Unknown},
        {"City", PiiCategory::Unknown},
    };
    return table;
}

inline std::optional<PiiType> PiiType::builtin(std::string_view name) {
    for (const auto& [n, cat] : builtin_pii_table())
        if (n == name) return PiiType(std::string(n), cat);
    return std::nullopt;
}

inline std::vector<PiiType> builtin_pii_types() {
    std::vector<PiiType> out;
    for (const auto& [n, cat] : builtin_pii_table()) out.push_back(*PiiType::builtin(n));
    return out;
}

inline std::vector<PiiType> builtin_types_of(PiiCategory cat) {
    std::vector<PiiType> out;
    for (const auto& t : builtin_pii_types())
        if (t.category() == cat) out.push_back(t);
    return out;
}

// type name -> literal values.  For Location this is two entries (latitude and
// longitude); custom types must carry at least one literal.
using PiiDictionary = std::map<PiiType, std::vector<std::string>>;

// Resolve a label name against the builtins plus a dataset's dictionary.
inline PiiType resolve_pii_label(const std::string& name, const PiiDictionary& dict) {
    if (auto b = PiiType::builtin(name)) return *b;
    PiiType cand = PiiType::custom(name);
    if (dict.count(cand)) return cand;
    throw UnknownPiiLabelError(name);
}

// ---------------------------------------------------------------------------
// Packet records.

enum class Protocol { HTTP, HTTPS_DECRYPTED, TCP, UDP };
enum class Direction { Outgoing, Incoming };

inline std::string to_string(Protocol p) {
    switch (p) {
        case Protocol::HTTP: return "HTTP";
        case Protocol::HTTPS_DECRYPTED: return "HTTPS_DECRYPTED";
        case Protocol::TCP: return "TCP";
        case Protocol::UDP: return "UDP";
    }
    return "?";
}

inline Protocol protocol_from_string(const std::string& s) {
    if (s == "HTTP") return Protocol::HTTP;
    if (s == "HTTPS_DECRYPTED") return Protocol::HTTPS_DECRYPTED;
    if (s == "TCP") return Protocol::TCP;
    if (s == "UDP") return Protocol::UDP;
    throw DataError("unknown protocol '" + s + "'");
}

inline std::string to_string(Direction d) { return d == Direction::Outgoing ? "OUT" : "IN"; }

inline Direction direction_from_string(const std::string& s) {
    if (s == "OUT") return Direction::Outgoing;
    if (s == "IN") return Direction::Incoming;
    throw DataError("unknown direction '" + s + "'");
}

struct PacketRecord {
    int64_t id = 0;
    std::string app_id;
    std::optional<std::string> app_version;
    std::optional<std::string> domain;
    std::string dst_ip;
    int dst_port = 0;
    int src_port = 0;
    Protocol protocol = Protocol::HTTP;
    Direction direction = Direction::Outgoing;
    bool background = false;
    int64_t ts_ms = 0;
    std::string payload;            // raw bytes
    std::set<PiiType> labels;       // ground-truth exposure types

    bool has_leak() const { return !labels.empty(); }
    bool operator==(const PacketRecord&) const = default;
};

struct Dataset {
    std::vector<PacketRecord> records;
    PiiDictionary pii_dictionary;

    bool operator==(const Dataset&) const = default;
};

// Which ground-truth labels count for a given training/evaluation task.
enum class LabelPolicy { AllPii, UnknownOnly };

inline bool label_counted(const PiiType& t, LabelPolicy policy) {
    return policy == LabelPolicy::AllPii || t.category() == PiiCategory::Unknown;
}

inline std::set<PiiType> counted_labels(const std::set<PiiType>& labels, LabelPolicy policy) {
    if (policy == LabelPolicy::AllPii) return labels;
    std::set<PiiType> out;
    for (const auto& t : labels)
        if (label_counted(t, policy)) out.insert(t);
    return out;
}

// Copy of the dataset with every record's label set restricted by the policy.
// Payloads and the dictionary are untouched.
inline Dataset filter_labels(const Dataset& data, LabelPolicy policy) {
    Dataset out;
    out.pii_dictionary = data.pii_dictionary;
    out.records.reserve(data.records.size());
    for (const auto& r : data.records) {
        PacketRecord c = r;
        c.labels = counted_labels(r.labels, policy);
        out.records.push_back(std::move(c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scrubbing.  Replaces every occurrence of every dictionary literal with an
// 'X' run of identical length and reports which types were present.  Stored
// datasets keep payload length and structure but no live values.

struct ScrubResult {
    std::string payload;
    std::set<PiiType> labels;
};

inline ScrubResult scrub_packet(const std::string& payload, const PiiDictionary& dict) {
    for (const auto& [type, lits] : dict)
        for (const auto& lit : lits)
            if (lit.empty()) throw DataError("pii dictionary literal for '" + type.name() + "' is empty");
    ScrubResult res;
    std::vector<char> mask(payload.size(), 0);
    for (const auto& [type, lits] : dict) {
        for (const auto& lit : lits) {
            for (size_t pos = payload.find(lit); pos != std::string::npos;
                 pos = payload.find(lit, pos + 1)) {
                res.labels.insert(type);
                std::fill(mask.begin() + static_cast<long>(pos),
                          mask.begin() + static_cast<long>(pos + lit.size()), 1);
            }
        }
    }
    res.payload = payload;
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) res.payload[i] = 'X';
    return res;
}

// ---------------------------------------------------------------------------
// JSONL serialization.
//
// One record per line; an optional first line {"pii_dictionary": {...}}
// declares literal values (and any custom types).  Key order inside a line is
// alphabetical, so serialization is canonical: parse(write(d)) == d and
// write(parse(write(d))) is byte-identical to write(d).

inline void check_port(int64_t port) {
    if (port < 0 || port > 65535) throw PortOutOfRangeError(port);
}

inline json record_to_json(const PacketRecord& r) {
    json j;
    j["id"] = r.id;
    j["app"] = r.app_id;
    j["app_version"] = r.app_version ? json(*r.app_version) : json(nullptr);
    j["domain"] = r.domain ? json(*r.domain) : json(nullptr);
    j["dst_ip"] = r.dst_ip;
    j["dst_port"] = r.dst_port;
    j["src_port"] = r.src_port;
    j["protocol"] = to_string(r.protocol);
    j["direction"] = to_string(r.direction);
    j["background"] = r.background;
    j["ts_ms"] = r.ts_ms;
    j["payload_b64"] = base64_encode(r.payload);
    json labels = json::array();
    for (const auto& t : r.labels) labels.push_back(t.name());
    j["labels"] = labels;
    return j;
}

inline PacketRecord record_from_json(const json& j, const PiiDictionary& dict, size_t line_no) {
    auto need = [&](const char* key) -> const json& {
        auto it = j.find(key);
        if (it == j.end()) throw MalformedLineError(line_no, std::string("missing key '") + key + "'");
        return *it;
    };
    PacketRecord r;
    try {
        r.id = j.contains("id") ? need("id").get<int64_t>() : static_cast<int64_t>(line_no);
        r.app_id = need("app").get<std::string>();
        const json& ver = need("app_version");
        if (!ver.is_null()) r.app_version = ver.get<std::string>();
        const json& dom = need("domain");
        if (!dom.is_null()) r.domain = dom.get<std::string>();
        r.dst_ip = need("dst_ip").get<std::string>();
        int64_t dst_port = need("dst_port").get<int64_t>();
        int64_t src_port = need("src_port").get<int64_t>();
        check_port(dst_port);
        check_port(src_port);
        r.dst_port = static_cast<int>(dst_port);
        r.src_port = static_cast<int>(src_port);
        r.protocol = protocol_from_string(need("protocol").get<std::string>());
        r.direction = direction_from_string(need("direction").get<std::string>());
        r.background = need("background").get<bool>();
        r.ts_ms = need("ts_ms").get<int64_t>();
        r.payload = base64_decode(need("payload_b64").get<std::string>());
        for (const auto& l : need("labels"))
            r.labels.insert(resolve_pii_label(l.get<std::string>(), dict));
    } catch (const MalformedLineError&) {
        throw;
    } catch (const PortOutOfRangeError&) {
        throw;
    } catch (const UnknownPiiLabelError&) {
        throw;
    } catch (const std::exception& e) {
        throw MalformedLineError(line_no, e.what());
    }
    if (!r.labels.empty() && r.payload.empty())
        throw MalformedLineError(line_no, "labeled record with empty payload");
    if (r.direction == Direction::Incoming && !r.labels.empty())
        throw MalformedLineError(line_no, "incoming record cannot carry labels");
    return r;
}

inline Dataset parse_dataset(std::istream& in) {
    Dataset data;
    std::string line;
    size_t line_no = 0;
    std::set<int64_t> seen_ids;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw MalformedLineError(line_no, std::string("invalid json: ") + e.what());
        }
        if (!j.is_object()) throw MalformedLineError(line_no, "line is not a json object");
        if (first && j.contains("pii_dictionary")) {
            first = false;
            try {
                for (const auto& [name, lits] : j["pii_dictionary"].items()) {
                    PiiType t = PiiType::builtin(name).value_or(PiiType::custom(name));
                    std::vector<std::string> vals;
                    for (const auto& v : lits) vals.push_back(v.get<std::string>());
                    if (vals.empty())
                        throw MalformedLineError(line_no, "dictionary entry '" + name + "' has no literals");
                    data.pii_dictionary[t] = std::move(vals);
                }
            } catch (const MalformedLineError&) {
                throw;
            } catch (const std::exception& e) {
                throw MalformedLineError(line_no, e.what());
            }
            continue;
        }
        first = false;
        PacketRecord r = record_from_json(j, data.pii_dictionary, line_no);
        if (!seen_ids.insert(r.id).second)
            throw MalformedLineError(line_no, "duplicate record id " + std::to_string(r.id));
        data.records.push_back(std::move(r));
    }
    return data;
}

inline Dataset parse_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open for reading");
    return parse_dataset(in);
}

inline void write_dataset(const Dataset& data, std::ostream& out) {
    if (!data.pii_dictionary.empty()) {
        json dict = json::object();
        for (const auto& [t, lits] : data.pii_dictionary) dict[t.name()] = lits;
        json header;
        header["pii_dictionary"] = dict;
        out << header.dump() << '\n';
    }
    for (const auto& r : data.records) out << record_to_json(r).dump() << '\n';
}

inline void write_dataset_file(const Dataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    write_dataset(data, out);
    out.flush();
    if (!out) throw IoError(path, "write failed");
}

inline std::string dataset_to_string(const Dataset& data) {
    std::ostringstream ss;
    write_dataset(data, ss);
    return ss.str();
}

}  // namespace piiscan
