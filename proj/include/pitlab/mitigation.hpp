// Baseline-vs-hardened comparison: risk delta, logging and validation
// coverage gains, added lines of code, cost-effectiveness, and the M1-M10
// mitigation checklist audit.
#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pitlab/analyzer.hpp"
#include "pitlab/config.hpp"
#include "pitlab/descriptor.hpp"
#include "pitlab/errors.hpp"

namespace pitlab {

struct ChecklistItem {
    std::string id;     // M1..M10
    std::string label;
    bool present = false;
    bool applicable = false;
};

struct HardeningDelta {
    std::string scenario;
    double risk_base = 0.0;
    double risk_hard = 0.0;
    double delta_risk = 0.0;
    double delta_log_pct = 0.0;  // percentage points
    double delta_val_pct = 0.0;  // percentage points
    int delta_loc = 0;
    double ce = 0.0;
    std::vector<ChecklistItem> checklist;
};

// ---------------------------------------------------------------------------

namespace detail {

inline bool is_comment_line(const std::string& trimmed, const LocConfig& cfg) {
    for (const auto& prefix : cfg.comment_prefixes)
        if (trimmed.rfind(prefix, 0) == 0) return true;
    return false;
}

inline std::set<std::string> code_line_set(const std::string& source, const LocConfig& cfg) {
    std::set<std::string> out;
    for (const auto& raw : text::split_lines(source)) {
        std::string t = text::trim(raw);
        if (t.empty() || is_comment_line(t, cfg)) continue;
        out.insert(std::move(t));
    }
    return out;
}

}  // namespace detail

using ToolSources = std::map<std::string, std::string>;

inline ToolSources tool_sources(const ServerDescriptor& d) {
    ToolSources out;
    for (const auto& t : d.tools) out[t.name] = t.source_text.value_or("");
    return out;
}

// Non-comment, non-blank lines present in the hardened body and absent from
// the baseline body, per tool, summed. Lines compare after trimming.
inline int loc_delta(const ToolSources& base, const ToolSources& hard,
                     const LocConfig& cfg = default_loc_config()) {
    int added = 0;
    for (const auto& [tool, hard_src] : hard) {
        auto hard_lines = detail::code_line_set(hard_src, cfg);
        auto it = base.find(tool);
        if (it == base.end()) {
            added += static_cast<int>(hard_lines.size());
            continue;
        }
        auto base_lines = detail::code_line_set(it->second, cfg);
        for (const auto& line : hard_lines)
            if (!base_lines.count(line)) ++added;
    }
    return added;
}

// Fraction of sink tools whose source carries a structured-log marker.
inline double logging_coverage(const ServerDescriptor& server, const AnalyzerConfig& cfg) {
    int sinks = 0, logged = 0;
    for (const auto& t : server.tools) {
        if (!t.is_sink) continue;
        ++sinks;
        if (has_structured_log_marker(t, cfg)) ++logged;
    }
    return sinks ? static_cast<double>(logged) / sinks : 0.0;
}

// Fraction of all tool parameters covered by a server-side validation guard.
inline double validation_coverage(const ServerDescriptor& server, const AnalyzerConfig& cfg) {
    int params = 0, guarded = 0;
    for (const auto& t : server.tools) {
        for (const auto& p : t.params) {
            ++params;
            if (has_validation_guard(t, p.name, cfg)) ++guarded;
        }
    }
    return params ? static_cast<double>(guarded) / params : 0.0;
}

// CE = delta_risk / (1 + log10(delta_loc)). log10 is undefined at 0 and the
// denominator is exactly 1 at delta_loc = 1, so both degenerate cases return
// delta_risk unchanged.
inline double cost_effectiveness(double delta_risk, int delta_loc) {
    if (delta_loc < 0) throw UsageError("cost_effectiveness: delta_loc must be non-negative");
    if (delta_risk < 0) throw UsageError("cost_effectiveness: delta_risk must be non-negative");
    if (delta_loc < 2) return delta_risk;
    return delta_risk / (1.0 + std::log10(static_cast<double>(delta_loc)));
}

// ---------------------------------------------------------------------------
// Mitigation checklist.

namespace detail {

inline bool any_source_matches(const ServerDescriptor& server,
                               const std::vector<std::string>& patterns) {
    for (const auto& t : server.tools) {
        if (!t.source_text) continue;
        for (const auto& pat : patterns)
            if (text::search_ci(*t.source_text, pat)) return true;
    }
    return false;
}

}  // namespace detail

inline std::vector<ChecklistItem> audit_checklist(const ServerDescriptor& server,
                                                  const AnalyzerConfig& cfg) {
    bool any_high_risk = false, enum_seen = false, pattern_seen = false, maxlen_seen = false;
    bool any_recipient = false, all_recipient_guarded = true;
    bool artifact_channel = false, provenance_logged = false;
    bool log_call = false, log_marker = false;
    int p1_findings = 0;

    for (const auto& t : server.tools) {
        for (const auto& p : high_risk_params(t, cfg.lexicon)) {
            any_high_risk = true;
            if (p.enum_values) enum_seen = true;
            if (p.pattern) pattern_seen = true;
            if (p.max_length) maxlen_seen = true;
        }
        for (const auto& p : t.params) {
            std::string lower = text::to_lower(p.name);
            for (const auto& kw : cfg.recipient_keywords) {
                if (lower.find(kw) == std::string::npos) continue;
                any_recipient = true;
                if (!has_validation_guard(t, p.name, cfg)) all_recipient_guarded = false;
                break;
            }
        }
        if (references_artifact_channel(t, cfg)) artifact_channel = true;
        if (t.source_text) {
            if (has_log_call(*t.source_text, cfg)) log_call = true;
            if (has_provenance_log(*t.source_text, cfg)) provenance_logged = true;
        }
        if (has_structured_log_marker(t, cfg)) log_marker = true;
        p1_findings += static_cast<int>(detect_p1(t, cfg.lexicon).size());
    }

    bool allowlist = detail::any_source_matches(server, cfg.allowlist_patterns);
    bool raise_guard = detail::any_source_matches(server, cfg.raise_guard_patterns);

    auto item = [](const char* id, const char* label, bool applicable, bool present) {
        return ChecklistItem{id, label, applicable && present, applicable};
    };
    return {
        item("M1", "enum allowlist", any_high_risk, enum_seen),
        item("M2", "pattern constraint", any_high_risk, pattern_seen),
        item("M3", "maxLength", any_high_risk, maxlen_seen),
        item("M4", "server-side allowlist", true, allowlist),
        item("M5", "raise-on-invalid guard", true, raise_guard),
        item("M6", "structured logging", true, log_call),
        item("M7", "audit log args", true, log_marker),
        item("M8", "policy-free description", true, p1_findings == 0),
        item("M9", "recipient validation", any_recipient, all_recipient_guarded),
        item("M10", "image provenance log", artifact_channel, provenance_logged),
    };
}

// ---------------------------------------------------------------------------

inline HardeningDelta compare_variants(const ServerDescriptor& base, const ServerDescriptor& hard,
                                       const AnalyzerConfig& cfg,
                                       const LocConfig& loc_cfg = default_loc_config()) {
    if (base.scenario != hard.scenario)
        throw ValidationError("compare_variants: scenario mismatch (" + base.scenario + " vs " +
                              hard.scenario + ")");
    if (base.variant != Variant::Baseline || hard.variant != Variant::Hardened)
        throw ValidationError("compare_variants: expected a baseline and a hardened descriptor");

    HardeningDelta d;
    d.scenario = base.scenario;
    d.risk_base = analyze_server(base, cfg).risk_score;
    d.risk_hard = analyze_server(hard, cfg).risk_score;
    d.delta_risk = d.risk_base - d.risk_hard;
    d.delta_log_pct = (logging_coverage(hard, cfg) - logging_coverage(base, cfg)) * 100.0;
    d.delta_val_pct = (validation_coverage(hard, cfg) - validation_coverage(base, cfg)) * 100.0;
    d.delta_loc = loc_delta(tool_sources(base), tool_sources(hard), loc_cfg);
    d.ce = cost_effectiveness(d.delta_risk, d.delta_loc);
    d.checklist = audit_checklist(hard, cfg);
    return d;
}

inline json checklist_to_json(const std::vector<ChecklistItem>& checklist) {
    json arr = json::array();
    for (const auto& c : checklist)
        arr.push_back({{"id", c.id},
                       {"label", c.label},
                       {"present", c.present},
                       {"applicable", c.applicable}});
    return arr;
}

inline json delta_to_json(const HardeningDelta& d) {
    json j;
    j["scenario"] = d.scenario;
    j["risk_base"] = d.risk_base;
    j["risk_hard"] = d.risk_hard;
    j["delta_risk"] = d.delta_risk;
    j["delta_log_pct"] = d.delta_log_pct;
    j["delta_val_pct"] = d.delta_val_pct;
    j["delta_loc"] = d.delta_loc;
    j["ce"] = d.ce;
    j["checklist"] = checklist_to_json(d.checklist);
    return j;
}

// Report covering several scenario pairs plus their mean row.
inline json hardening_report_to_json(const std::vector<HardeningDelta>& deltas) {
    json j;
    j["pairs"] = json::array();
    json mean = {{"risk_base", 0.0}, {"risk_hard", 0.0}, {"delta_risk", 0.0},
                 {"delta_log_pct", 0.0}, {"delta_val_pct", 0.0}, {"delta_loc", 0.0}, {"ce", 0.0}};
    for (const auto& d : deltas) {
        j["pairs"].push_back(delta_to_json(d));
        mean["risk_base"] = mean["risk_base"].get<double>() + d.risk_base;
        mean["risk_hard"] = mean["risk_hard"].get<double>() + d.risk_hard;
        mean["delta_risk"] = mean["delta_risk"].get<double>() + d.delta_risk;
        mean["delta_log_pct"] = mean["delta_log_pct"].get<double>() + d.delta_log_pct;
        mean["delta_val_pct"] = mean["delta_val_pct"].get<double>() + d.delta_val_pct;
        mean["delta_loc"] = mean["delta_loc"].get<double>() + d.delta_loc;
        mean["ce"] = mean["ce"].get<double>() + d.ce;
    }
    if (!deltas.empty()) {
        for (auto& [k, v] : mean.items()) v = v.get<double>() / deltas.size();
    }
    j["mean"] = mean;
    return j;
}

}  // namespace pitlab
