// Server descriptor format: a tool server's manifest (tools, parameter
// schemas, descriptions) plus per-tool source facts, normalized into one
// JSON document. This is the unit the analyzer and the arena consume.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pitlab/errors.hpp"
#include "pitlab/text.hpp"

namespace pitlab {

using json = nlohmann::json;

enum class ValueType { String, Integer, Number, Boolean, Array, Object };

inline std::string to_string(ValueType t) {
    switch (t) {
        case ValueType::String: return "string";
        case ValueType::Integer: return "integer";
        case ValueType::Number: return "number";
        case ValueType::Boolean: return "boolean";
        case ValueType::Array: return "array";
        case ValueType::Object: return "object";
    }
    return "string";
}

inline ValueType value_type_from_string(const std::string& s, const std::string& where) {
    if (s == "string") return ValueType::String;
    if (s == "integer") return ValueType::Integer;
    if (s == "number") return ValueType::Number;
    if (s == "boolean") return ValueType::Boolean;
    if (s == "array") return ValueType::Array;
    if (s == "object") return ValueType::Object;
    throw ValidationError(where + ": unknown type \"" + s + "\"");
}

struct ParamSpec {
    std::string name;
    ValueType value_type = ValueType::String;
    std::optional<std::vector<std::string>> enum_values;
    std::optional<std::string> pattern;
    std::optional<int> max_length;
    std::string description;

    bool has_schema_constraint() const {
        return enum_values.has_value() || pattern.has_value() || max_length.has_value();
    }

    friend bool operator==(const ParamSpec&, const ParamSpec&) = default;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ParamSpec> params;
    std::optional<std::string> source_text;
    bool is_sink = false;
    bool is_source = false;

    friend bool operator==(const ToolSpec&, const ToolSpec&) = default;
};

enum class Variant { Baseline, Hardened };

inline std::string to_string(Variant v) {
    return v == Variant::Baseline ? "baseline" : "hardened";
}

// Scenario ids: the three bundled workflows plus free-form names for
// anything else (puppet servers register under their own name).
namespace scenario {
inline constexpr const char* kEmailSystem = "emailsystem";
inline constexpr const char* kDocumentSystem = "documentsystem";
inline constexpr const char* kEthPriceServer = "ethpriceserver";
inline bool is_builtin(const std::string& s) {
    return s == kEmailSystem || s == kDocumentSystem || s == kEthPriceServer;
}
}  // namespace scenario

inline const std::vector<std::string>& pitfall_classes() {
    static const std::vector<std::string> k = {"P1", "P2", "P3", "P4", "P5", "P6"};
    return k;
}

struct ServerDescriptor {
    std::string server_id;
    Variant variant = Variant::Baseline;
    std::string scenario;
    std::vector<ToolSpec> tools;
    std::optional<std::map<std::string, bool>> ground_truth_labels;

    const ToolSpec* find_tool(const std::string& name) const {
        for (const auto& t : tools)
            if (t.name == name) return &t;
        return nullptr;
    }

    friend bool operator==(const ServerDescriptor&, const ServerDescriptor&) = default;
};

// Lexicon driving the high-risk-parameter and policy-directive checks. The
// word lists are versioned here; matching is case-insensitive over
// lowercase entries.
struct DirectivePhrase {
    std::string phrase;              // lowercase
    bool requires_destination = false;  // only a directive when a literal destination follows

    friend bool operator==(const DirectivePhrase&, const DirectivePhrase&) = default;
};

struct HighRiskLexicon {
    std::vector<std::string> param_keywords;
    std::vector<DirectivePhrase> directive_phrases;

    friend bool operator==(const HighRiskLexicon&, const HighRiskLexicon&) = default;
};

inline HighRiskLexicon default_lexicon() {
    HighRiskLexicon lex;
    lex.param_keywords = {"recipient", "to",     "channel", "destination", "address",
                          "url",       "path",   "transfer_to", "wallet",  "target"};
    lex.directive_phrases = {
        {"always send", false},     {"always forward", false},
        {"must send", false},       {"automatically forward", false},
        {"without asking", false},  {"do not ask", false},
        {"without user approval", false},
        {"send to", true},          {"forward to", true},
    };
    return lex;
}

// Destination literals: email addresses, #channels, 0x wallet addresses and
// absolute paths. Used to gate "send to"/"forward to" directives and reused
// by the narrative claim extractor.
inline const std::vector<std::string>& destination_literal_patterns() {
    static const std::vector<std::string> k = {
        R"([A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,})",  // email-like
        R"(#[A-Za-z0-9_-]+)",                                 // channel-like
        R"(0x[0-9a-fA-F]{8,})",                               // wallet-like
        R"((?:/[A-Za-z0-9._-]+){2,}/?)",                      // path-like
    };
    return k;
}

inline bool contains_destination_literal(std::string_view s) {
    for (const auto& pat : destination_literal_patterns()) {
        if (text::search_ci(s, pat)) return true;
    }
    return false;
}

// Params whose lowercase name contains any lexicon keyword, order preserved.
inline std::vector<ParamSpec> high_risk_params(const ToolSpec& tool, const HighRiskLexicon& lexicon) {
    std::vector<ParamSpec> out;
    for (const auto& p : tool.params) {
        std::string lower = text::to_lower(p.name);
        for (const auto& kw : lexicon.param_keywords) {
            if (lower.find(kw) != std::string::npos) {
                out.push_back(p);
                break;
            }
        }
    }
    return out;
}

namespace detail {

inline void reject_unknown_fields(const json& obj, const std::vector<std::string>& allowed,
                                  const std::string& where, bool lenient) {
    if (lenient) return;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const auto& a : allowed)
            if (it.key() == a) { known = true; break; }
        if (!known)
            throw ValidationError(where + ": unknown field \"" + it.key() + "\"");
    }
}

inline std::string line_of_offset(const std::string& raw, size_t byte) {
    size_t line = 1;
    for (size_t i = 0; i < byte && i < raw.size(); ++i)
        if (raw[i] == '\n') ++line;
    return std::to_string(line);
}

inline ParamSpec parse_param(const json& j, const std::string& where, bool lenient) {
    if (!j.is_object()) throw ValidationError(where + ": param must be an object");
    reject_unknown_fields(j, {"name", "type", "enum", "pattern", "max_length", "description"},
                          where, lenient);
    ParamSpec p;
    if (!j.contains("name") || !j["name"].is_string() || j["name"].get<std::string>().empty())
        throw ValidationError(where + ".name: required non-empty string");
    p.name = j["name"].get<std::string>();
    if (!j.contains("type") || !j["type"].is_string())
        throw ValidationError(where + ".type: required string");
    p.value_type = value_type_from_string(j["type"].get<std::string>(), where + ".type");
    if (j.contains("enum")) {
        if (!j["enum"].is_array()) throw ValidationError(where + ".enum: must be an array");
        p.enum_values = std::vector<std::string>{};
        for (const auto& e : j["enum"]) p.enum_values->push_back(e.is_string() ? e.get<std::string>() : e.dump());
    }
    if (j.contains("pattern")) {
        if (!j["pattern"].is_string()) throw ValidationError(where + ".pattern: must be a string");
        p.pattern = j["pattern"].get<std::string>();
    }
    if (j.contains("max_length")) {
        if (!j["max_length"].is_number_integer())
            throw ValidationError(where + ".max_length: must be an integer");
        p.max_length = j["max_length"].get<int>();
        if (*p.max_length <= 0) throw ValidationError(where + ".max_length: must be > 0");
    }
    if (j.contains("description")) {
        if (!j["description"].is_string())
            throw ValidationError(where + ".description: must be a string");
        p.description = j["description"].get<std::string>();
    }

    if (p.value_type != ValueType::String && p.has_schema_constraint())
        throw ValidationError(where + ": enum/pattern/max_length only permitted for string params");
    return p;
}

inline ToolSpec parse_tool(const json& j, const std::string& where, bool lenient) {
    if (!j.is_object()) throw ValidationError(where + ": tool must be an object");
    reject_unknown_fields(j, {"name", "description", "params", "source_text", "is_sink", "is_source"},
                          where, lenient);
    ToolSpec t;
    if (!j.contains("name") || !j["name"].is_string() || j["name"].get<std::string>().empty())
        throw ValidationError(where + ".name: required non-empty string");
    t.name = j["name"].get<std::string>();
    if (j.contains("description")) {
        if (!j["description"].is_string())
            throw ValidationError(where + ".description: must be a string");
        t.description = j["description"].get<std::string>();
    }
    if (j.contains("params")) {
        if (!j["params"].is_array()) throw ValidationError(where + ".params: must be an array");
        size_t i = 0;
        for (const auto& pj : j["params"]) {
            t.params.push_back(parse_param(pj, where + ".params[" + std::to_string(i) + "]", lenient));
            ++i;
        }
    }
    for (size_t a = 0; a < t.params.size(); ++a)
        for (size_t b = a + 1; b < t.params.size(); ++b)
            if (t.params[a].name == t.params[b].name)
                throw ValidationError(where + ": duplicate param name \"" + t.params[a].name + "\"");
    if (j.contains("source_text")) {
        if (!j["source_text"].is_string())
            throw ValidationError(where + ".source_text: must be a string");
        t.source_text = j["source_text"].get<std::string>();
    }
    if (j.contains("is_sink")) {
        if (!j["is_sink"].is_boolean()) throw ValidationError(where + ".is_sink: must be a boolean");
        t.is_sink = j["is_sink"].get<bool>();
    }
    if (j.contains("is_source")) {
        if (!j["is_source"].is_boolean())
            throw ValidationError(where + ".is_source: must be a boolean");
        t.is_source = j["is_source"].get<bool>();
    }
    return t;
}

}  // namespace detail

inline ServerDescriptor descriptor_from_json(const json& j, bool lenient = false) {
    if (!j.is_object()) throw ValidationError("descriptor: top level must be an object");
    detail::reject_unknown_fields(j, {"server_id", "variant", "scenario", "tools", "labels"},
                                  "descriptor", lenient);
    ServerDescriptor d;
    if (!j.contains("server_id") || !j["server_id"].is_string() || j["server_id"].get<std::string>().empty())
        throw ValidationError("descriptor.server_id: required non-empty string");
    d.server_id = j["server_id"].get<std::string>();
    if (j.contains("variant")) {
        if (!j["variant"].is_string())
            throw ValidationError("descriptor.variant: must be \"baseline\" or \"hardened\"");
        std::string v = j["variant"].get<std::string>();
        if (v == "baseline") d.variant = Variant::Baseline;
        else if (v == "hardened") d.variant = Variant::Hardened;
        else throw ValidationError("descriptor.variant: must be \"baseline\" or \"hardened\"");
    }
    if (!j.contains("scenario") || !j["scenario"].is_string() || j["scenario"].get<std::string>().empty())
        throw ValidationError("descriptor.scenario: required non-empty string");
    d.scenario = j["scenario"].get<std::string>();
    if (!j.contains("tools") || !j["tools"].is_array() || j["tools"].empty())
        throw ValidationError("descriptor.tools: at least one tool required");
    size_t i = 0;
    for (const auto& tj : j["tools"]) {
        d.tools.push_back(detail::parse_tool(tj, "descriptor.tools[" + std::to_string(i) + "]", lenient));
        ++i;
    }
    for (size_t a = 0; a < d.tools.size(); ++a)
        for (size_t b = a + 1; b < d.tools.size(); ++b)
            if (d.tools[a].name == d.tools[b].name)
                throw ValidationError("descriptor.tools: duplicate tool name \"" + d.tools[a].name + "\"");
    if (j.contains("labels")) {
        if (!j["labels"].is_object()) throw ValidationError("descriptor.labels: must be an object");
        std::map<std::string, bool> labels;
        for (const auto& cls : pitfall_classes()) {
            if (!j["labels"].contains(cls) || !j["labels"][cls].is_boolean())
                throw ValidationError("descriptor.labels: missing boolean label for " + cls);
            labels[cls] = j["labels"][cls].get<bool>();
        }
        detail::reject_unknown_fields(j["labels"], pitfall_classes(), "descriptor.labels", lenient);
        d.ground_truth_labels = std::move(labels);
    }
    return d;
}

inline ServerDescriptor parse_descriptor(const std::string& raw, bool lenient = false) {
    json j;
    try {
        j = json::parse(raw);
    } catch (const json::parse_error& e) {
        throw ParseError("descriptor: malformed JSON at line " +
                         detail::line_of_offset(raw, e.byte) + ": " + e.what());
    }
    return descriptor_from_json(j, lenient);
}

inline json descriptor_to_json(const ServerDescriptor& d) {
    json j;
    j["server_id"] = d.server_id;
    j["variant"] = to_string(d.variant);
    j["scenario"] = d.scenario;
    j["tools"] = json::array();
    for (const auto& t : d.tools) {
        json tj;
        tj["name"] = t.name;
        tj["description"] = t.description;
        tj["params"] = json::array();
        for (const auto& p : t.params) {
            json pj;
            pj["name"] = p.name;
            pj["type"] = to_string(p.value_type);
            if (p.enum_values) pj["enum"] = *p.enum_values;
            if (p.pattern) pj["pattern"] = *p.pattern;
            if (p.max_length) pj["max_length"] = *p.max_length;
            if (!p.description.empty()) pj["description"] = p.description;
            tj["params"].push_back(pj);
        }
        if (t.source_text) tj["source_text"] = *t.source_text;
        if (t.is_sink) tj["is_sink"] = true;
        if (t.is_source) tj["is_source"] = true;
        j["tools"].push_back(tj);
    }
    if (d.ground_truth_labels) {
        json lj;
        for (const auto& [k, v] : *d.ground_truth_labels) lj[k] = v;
        j["labels"] = lj;
    }
    return j;
}

inline std::string serialize_descriptor(const ServerDescriptor& d) {
    return descriptor_to_json(d).dump(2) + "\n";
}

}  // namespace pitlab
