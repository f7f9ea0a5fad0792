// Protocol-level event trace: ordered discovery/call/result/artifact/
// narrative/verdict events for one agent run, stored as JSONL. Traces are
// append-only with contiguous sequence numbers, and provenance between
// source outputs and later sink-call arguments is established by verbatim
// substring matching.
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "pitlab/descriptor.hpp"
#include "pitlab/errors.hpp"
#include "pitlab/text.hpp"

namespace pitlab {

enum class AttackFamily { TP, PA, MM, None };

inline std::string to_string(AttackFamily f) {
    switch (f) {
        case AttackFamily::TP: return "TP";
        case AttackFamily::PA: return "PA";
        case AttackFamily::MM: return "MM";
        case AttackFamily::None: return "none";
    }
    return "none";
}

inline AttackFamily attack_family_from_string(const std::string& s) {
    if (s == "TP") return AttackFamily::TP;
    if (s == "PA") return AttackFamily::PA;
    if (s == "MM") return AttackFamily::MM;
    if (s == "none") return AttackFamily::None;
    throw ValidationError("unknown attack family \"" + s + "\"");
}

enum class EventKind { Discovery, ToolCall, ToolResult, Artifact, Narrative, Verdict };

inline std::string to_string(EventKind k) {
    switch (k) {
        case EventKind::Discovery: return "discovery";
        case EventKind::ToolCall: return "tool_call";
        case EventKind::ToolResult: return "tool_result";
        case EventKind::Artifact: return "artifact";
        case EventKind::Narrative: return "narrative";
        case EventKind::Verdict: return "verdict";
    }
    return "discovery";
}

struct DiscoveryTool {
    std::string name;
    std::string description_digest;
    friend bool operator==(const DiscoveryTool&, const DiscoveryTool&) = default;
};

struct DiscoveryPayload {
    std::string server_id;
    std::vector<DiscoveryTool> tools;
    friend bool operator==(const DiscoveryPayload&, const DiscoveryPayload&) = default;
};

struct ToolCallPayload {
    std::string tool;
    std::map<std::string, std::string> args;  // values normalized to strings
    std::string call_id;
    friend bool operator==(const ToolCallPayload&, const ToolCallPayload&) = default;
};

struct ToolResultPayload {
    std::string call_id;
    bool ok = true;
    std::string content;
    std::optional<std::string> error;
    friend bool operator==(const ToolResultPayload&, const ToolResultPayload&) = default;
};

struct ArtifactPayload {
    std::string artifact_id;
    std::string medium;  // "image" or "file"
    std::string provenance;
    std::string extracted_text;
    friend bool operator==(const ArtifactPayload&, const ArtifactPayload&) = default;
};

struct NarrativePayload {
    std::string text;
    friend bool operator==(const NarrativePayload&, const NarrativePayload&) = default;
};

struct VerdictPayload {
    std::string objective;  // "conf" or "int"
    bool hit = false;
    std::vector<uint64_t> evidence_refs;
    friend bool operator==(const VerdictPayload&, const VerdictPayload&) = default;
};

using EventPayload = std::variant<DiscoveryPayload, ToolCallPayload, ToolResultPayload,
                                  ArtifactPayload, NarrativePayload, VerdictPayload>;

struct TraceEvent {
    std::string run_id;
    uint64_t seq = 0;
    int turn = 1;
    EventKind kind = EventKind::Discovery;
    EventPayload payload;

    friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

struct Trace {
    std::string run_id;
    std::string scenario;
    AttackFamily attack_family = AttackFamily::None;
    std::vector<TraceEvent> events;

    uint64_t last_seq() const { return events.empty() ? 0 : events.back().seq; }

    const ToolCallPayload* find_call(const std::string& call_id) const {
        for (const auto& e : events)
            if (e.kind == EventKind::ToolCall) {
                const auto& c = std::get<ToolCallPayload>(e.payload);
                if (c.call_id == call_id) return &c;
            }
        return nullptr;
    }

    friend bool operator==(const Trace&, const Trace&) = default;
};

// ---------------------------------------------------------------------------
// Recording. Every append revalidates the trace invariants so a trace built
// through record() is valid by construction.

inline void record(Trace& trace, TraceEvent event) {
    if (event.seq != trace.last_seq() + 1)
        throw ValidationError("trace " + trace.run_id + ": out-of-order seq " +
                              std::to_string(event.seq) + " (expected " +
                              std::to_string(trace.last_seq() + 1) + ")");
    if (event.turn < 1)
        throw ValidationError("trace " + trace.run_id + ": turn must be >= 1");
    if (trace.run_id.empty())
        trace.run_id = event.run_id;
    else if (event.run_id != trace.run_id)
        throw ValidationError("trace " + trace.run_id + ": event run_id mismatch \"" +
                              event.run_id + "\"");

    if (event.kind == EventKind::ToolCall) {
        const auto& c = std::get<ToolCallPayload>(event.payload);
        if (c.call_id.empty())
            throw ValidationError("trace " + trace.run_id + ": tool_call requires a call_id");
        if (trace.find_call(c.call_id))
            throw ValidationError("trace " + trace.run_id + ": duplicate call_id \"" + c.call_id + "\"");
    }
    if (event.kind == EventKind::ToolResult) {
        const auto& r = std::get<ToolResultPayload>(event.payload);
        if (!trace.find_call(r.call_id))
            throw ValidationError("trace " + trace.run_id + ": tool_result references unknown call_id \"" +
                                  r.call_id + "\"");
        for (const auto& e : trace.events)
            if (e.kind == EventKind::ToolResult &&
                std::get<ToolResultPayload>(e.payload).call_id == r.call_id)
                throw ValidationError("trace " + trace.run_id + ": duplicate tool_result for call_id \"" +
                                      r.call_id + "\"");
    }
    if (event.kind == EventKind::Narrative) {
        for (const auto& e : trace.events)
            if (e.kind == EventKind::Narrative)
                throw ValidationError("trace " + trace.run_id + ": at most one narrative event per run");
    }
    if (event.kind == EventKind::Verdict) {
        const auto& v = std::get<VerdictPayload>(event.payload);
        for (uint64_t ref : v.evidence_refs)
            if (ref >= event.seq)
                throw ValidationError("trace " + trace.run_id +
                                      ": verdict evidence_refs must reference prior events");
    }
    trace.events.push_back(std::move(event));
}

// ---------------------------------------------------------------------------
// JSONL serialization. One event per line; the first line additionally
// carries the trace-level scenario and attack_family so a file round-trips
// to an identical Trace value.

inline json event_to_json(const TraceEvent& e) {
    json j;
    j["run_id"] = e.run_id;
    j["seq"] = e.seq;
    j["turn"] = e.turn;
    j["kind"] = to_string(e.kind);
    json p;
    switch (e.kind) {
        case EventKind::Discovery: {
            const auto& d = std::get<DiscoveryPayload>(e.payload);
            p["server_id"] = d.server_id;
            p["tools"] = json::array();
            for (const auto& t : d.tools)
                p["tools"].push_back({{"name", t.name}, {"description_digest", t.description_digest}});
            break;
        }
        case EventKind::ToolCall: {
            const auto& c = std::get<ToolCallPayload>(e.payload);
            p["tool"] = c.tool;
            p["args"] = c.args;
            p["call_id"] = c.call_id;
            break;
        }
        case EventKind::ToolResult: {
            const auto& r = std::get<ToolResultPayload>(e.payload);
            p["call_id"] = r.call_id;
            p["ok"] = r.ok;
            p["content"] = r.content;
            if (r.error) p["error"] = *r.error;
            break;
        }
        case EventKind::Artifact: {
            const auto& a = std::get<ArtifactPayload>(e.payload);
            p["artifact_id"] = a.artifact_id;
            p["medium"] = a.medium;
            p["provenance"] = a.provenance;
            p["extracted_text"] = a.extracted_text;
            break;
        }
        case EventKind::Narrative:
            p["text"] = std::get<NarrativePayload>(e.payload).text;
            break;
        case EventKind::Verdict: {
            const auto& v = std::get<VerdictPayload>(e.payload);
            p["objective"] = v.objective;
            p["hit"] = v.hit;
            p["evidence_refs"] = v.evidence_refs;
            break;
        }
    }
    j["payload"] = p;
    return j;
}

namespace detail {

inline TraceEvent event_from_json(const json& j, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k != "run_id" && k != "seq" && k != "turn" && k != "kind" && k != "payload" &&
            k != "scenario" && k != "attack_family")
            throw ValidationError(where + ": unknown field \"" + k + "\"");
    }
    TraceEvent e;
    e.run_id = j.at("run_id").get<std::string>();
    e.seq = j.at("seq").get<uint64_t>();
    e.turn = j.at("turn").get<int>();
    std::string kind = j.at("kind").get<std::string>();
    const json& p = j.at("payload");
    if (kind == "discovery") {
        e.kind = EventKind::Discovery;
        DiscoveryPayload d;
        d.server_id = p.at("server_id").get<std::string>();
        for (const auto& t : p.at("tools"))
            d.tools.push_back({t.at("name").get<std::string>(),
                               t.at("description_digest").get<std::string>()});
        e.payload = std::move(d);
    } else if (kind == "tool_call") {
        e.kind = EventKind::ToolCall;
        ToolCallPayload c;
        c.tool = p.at("tool").get<std::string>();
        for (auto it = p.at("args").begin(); it != p.at("args").end(); ++it)
            c.args[it.key()] = it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
        c.call_id = p.at("call_id").get<std::string>();
        e.payload = std::move(c);
    } else if (kind == "tool_result") {
        e.kind = EventKind::ToolResult;
        ToolResultPayload r;
        r.call_id = p.at("call_id").get<std::string>();
        r.ok = p.at("ok").get<bool>();
        r.content = p.at("content").get<std::string>();
        if (p.contains("error")) r.error = p["error"].get<std::string>();
        e.payload = std::move(r);
    } else if (kind == "artifact") {
        e.kind = EventKind::Artifact;
        ArtifactPayload a;
        a.artifact_id = p.at("artifact_id").get<std::string>();
        a.medium = p.at("medium").get<std::string>();
        if (a.medium != "image" && a.medium != "file")
            throw ValidationError(where + ": artifact medium must be \"image\" or \"file\"");
        a.provenance = p.at("provenance").get<std::string>();
        a.extracted_text = p.at("extracted_text").get<std::string>();
        e.payload = std::move(a);
    } else if (kind == "narrative") {
        e.kind = EventKind::Narrative;
        e.payload = NarrativePayload{p.at("text").get<std::string>()};
    } else if (kind == "verdict") {
        e.kind = EventKind::Verdict;
        VerdictPayload v;
        v.objective = p.at("objective").get<std::string>();
        if (v.objective != "conf" && v.objective != "int")
            throw ValidationError(where + ": verdict objective must be \"conf\" or \"int\"");
        v.hit = p.at("hit").get<bool>();
        for (const auto& r : p.at("evidence_refs")) v.evidence_refs.push_back(r.get<uint64_t>());
        e.payload = std::move(v);
    } else {
        throw ValidationError(where + ": unknown event kind \"" + kind + "\"");
    }
    return e;
}

}  // namespace detail

inline std::string serialize_trace(const Trace& t) {
    std::string out;
    bool first = true;
    for (const auto& e : t.events) {
        json j = event_to_json(e);
        if (first) {
            if (!t.scenario.empty()) j["scenario"] = t.scenario;
            if (t.attack_family != AttackFamily::None)
                j["attack_family"] = to_string(t.attack_family);
            first = false;
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

inline Trace parse_trace(const std::string& raw) {
    Trace t;
    size_t line_no = 0;
    size_t start = 0;
    while (start < raw.size()) {
        auto nl = raw.find('\n', start);
        std::string line = raw.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
        start = nl == std::string::npos ? raw.size() : nl + 1;
        ++line_no;
        if (text::trim(line).empty()) continue;
        std::string where = "trace line " + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(where + ": malformed JSON: " + e.what());
        }
        try {
            TraceEvent e = detail::event_from_json(j, where);
            if (j.contains("scenario") && t.scenario.empty())
                t.scenario = j["scenario"].get<std::string>();
            if (j.contains("attack_family") && t.attack_family == AttackFamily::None)
                t.attack_family = attack_family_from_string(j["attack_family"].get<std::string>());
            record(t, std::move(e));
        } catch (const json::exception& e) {
            throw ParseError(where + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Provenance: verbatim data flow from source outputs (tool results, artifact
// extracted text) into later tool-call arguments.

struct ProvenanceChain {
    uint64_t source_seq = 0;
    uint64_t sink_seq = 0;
    std::string matched_content;

    friend bool operator==(const ProvenanceChain&, const ProvenanceChain&) = default;
};

inline std::vector<ProvenanceChain> provenance_chains(const Trace& trace, int min_match_len = 16) {
    if (min_match_len < 8)
        throw UsageError("provenance_chains: min_match_len must be >= 8");
    struct Source {
        uint64_t seq;
        const std::string* content;
    };
    std::vector<Source> sources;
    std::vector<ProvenanceChain> out;
    for (const auto& e : trace.events) {
        if (e.kind == EventKind::ToolResult) {
            sources.push_back({e.seq, &std::get<ToolResultPayload>(e.payload).content});
        } else if (e.kind == EventKind::Artifact) {
            sources.push_back({e.seq, &std::get<ArtifactPayload>(e.payload).extracted_text});
        } else if (e.kind == EventKind::ToolCall) {
            const auto& c = std::get<ToolCallPayload>(e.payload);
            for (const auto& src : sources) {
                for (const auto& [arg, value] : c.args) {
                    std::string match = text::longest_common_substring(*src.content, value);
                    if (static_cast<int>(match.size()) >= min_match_len)
                        out.push_back({src.seq, e.seq, std::move(match)});
                }
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const ProvenanceChain& a, const ProvenanceChain& b) {
        return a.source_seq != b.source_seq ? a.source_seq < b.source_seq
                                            : a.sink_seq < b.sink_seq;
    });
    return out;
}

// Ordered tool_call events whose tool is a registered sink. Calls to tools
// unknown to the registry are an error: incomplete registries would silently
// hide sink actions.
inline std::vector<TraceEvent> sink_actions(const Trace& trace,
                                            const std::vector<ServerDescriptor>& registry) {
    std::vector<TraceEvent> out;
    for (const auto& e : trace.events) {
        if (e.kind != EventKind::ToolCall) continue;
        const auto& c = std::get<ToolCallPayload>(e.payload);
        const ToolSpec* spec = nullptr;
        for (const auto& d : registry)
            if ((spec = d.find_tool(c.tool))) break;
        if (!spec)
            throw ValidationError("sink_actions: tool \"" + c.tool + "\" not found in registry");
        if (spec->is_sink) out.push_back(e);
    }
    return out;
}

}  // namespace pitlab
