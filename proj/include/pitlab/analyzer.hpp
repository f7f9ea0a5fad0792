// Static pitfall analysis. Four classes are decided from schema metadata
// and local source patterns (P1 policy-bearing descriptions, P2 permissive
// schemas, P5 missing audit logs, P6 unvalidated high-risk inputs);
// cross-tool forwarding (P3) and image-to-tool leakage (P4) are
// trace/dataflow questions, so they are only ever *flagged* for the trace
// validators, never reported as detections.
#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pitlab/config.hpp"
#include "pitlab/descriptor.hpp"
#include "pitlab/errors.hpp"
#include "pitlab/text.hpp"

namespace pitlab {

enum class Severity { High, Medium, Low };

inline std::string to_string(Severity s) {
    switch (s) {
        case Severity::High: return "HIGH";
        case Severity::Medium: return "MEDIUM";
        case Severity::Low: return "LOW";
    }
    return "LOW";
}

inline double severity_weight(Severity s) {
    switch (s) {
        case Severity::High: return 2.0;
        case Severity::Medium: return 1.0;
        case Severity::Low: return 0.5;
    }
    return 0.5;
}

enum class FindingStatus { Detected, Flagged, Indeterminate };

inline std::string to_string(FindingStatus s) {
    switch (s) {
        case FindingStatus::Detected: return "detected";
        case FindingStatus::Flagged: return "flagged";
        case FindingStatus::Indeterminate: return "indeterminate";
    }
    return "detected";
}

struct Evidence {
    std::string matched;  // verbatim text the rule fired on
    size_t offset = 0;

    friend bool operator==(const Evidence&, const Evidence&) = default;
};

struct Finding {
    std::string pitfall;  // P1..P6
    Severity severity = Severity::Medium;
    FindingStatus status = FindingStatus::Detected;
    std::string tool;
    std::optional<std::string> param;
    Evidence evidence;
    std::string message;
    std::string remediation;  // M1..M10

    friend bool operator==(const Finding&, const Finding&) = default;
};

struct AnalysisReport {
    std::string server_id;
    Variant variant = Variant::Baseline;
    std::vector<Finding> findings;
    std::map<std::string, int> counts_by_severity;  // detected findings only
    double risk_score = 0.0;
    double analysis_time_ms = 0.0;
};

// ---------------------------------------------------------------------------
// Source-pattern predicates shared with the mitigation auditor.

namespace detail {

inline std::string regex_escape(const std::string& s) {
    static const std::string meta = R"(\.^$|()[]{}*+?)";
    std::string out;
    for (char c : s) {
        if (meta.find(c) != std::string::npos) out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

inline std::string instantiate_guard(const std::string& pattern, const std::string& param) {
    std::string out = pattern;
    const std::string token = R"(\{param\})";
    size_t pos;
    while ((pos = out.find(token)) != std::string::npos)
        out.replace(pos, token.size(), regex_escape(param));
    return out;
}

}  // namespace detail

// Any structured-log call site in the source.
inline bool has_log_call(const std::string& source, const AnalyzerConfig& cfg) {
    for (const auto& pat : cfg.log_call_patterns)
        if (text::search_ci(source, pat)) return true;
    return false;
}

// A structured log that names the tool and carries at least one of its
// arguments (vacuously just the name for parameterless tools).
inline bool has_structured_log_marker(const ToolSpec& tool, const AnalyzerConfig& cfg) {
    if (!tool.source_text) return false;
    for (const auto& line : text::split_lines(*tool.source_text)) {
        bool is_log = false;
        for (const auto& pat : cfg.log_call_patterns)
            if (text::search_ci(line, pat)) { is_log = true; break; }
        if (!is_log) continue;
        if (!text::contains_ci(line, tool.name)) continue;
        if (tool.params.empty()) return true;
        for (const auto& p : tool.params)
            if (text::contains_ci(line, p.name)) return true;
    }
    return false;
}

// Server-side validation guard referencing the parameter: an allowlist
// membership test or a conditional raise naming it.
inline bool has_validation_guard(const ToolSpec& tool, const std::string& param,
                                 const AnalyzerConfig& cfg) {
    if (!tool.source_text) return false;
    for (const auto& pat : cfg.guard_patterns) {
        if (text::search_ci(*tool.source_text, detail::instantiate_guard(pat, param)))
            return true;
    }
    return false;
}

inline bool has_provenance_log(const std::string& source, const AnalyzerConfig& cfg) {
    for (const auto& line : text::split_lines(source)) {
        bool is_log = false;
        for (const auto& pat : cfg.log_call_patterns)
            if (text::search_ci(line, pat)) { is_log = true; break; }
        if (!is_log) continue;
        for (const auto& kw : cfg.provenance_keywords)
            if (text::contains_ci(line, kw)) return true;
    }
    return false;
}

inline bool references_artifact_channel(const ToolSpec& tool, const AnalyzerConfig& cfg) {
    for (const auto& kw : cfg.artifact_keywords) {
        if (text::contains_ci(tool.description, kw)) return true;
        for (const auto& p : tool.params)
            if (text::contains_ci(p.name, kw)) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Detectors. Each returns zero or more findings for one tool.

// P1: policy directives embedded in the tool description. One finding per
// directive-bearing sentence; a sentence with several directive phrases is
// still a single instance, evidenced by its earliest match.
inline std::vector<Finding> detect_p1(const ToolSpec& tool, const HighRiskLexicon& lexicon) {
    std::vector<Finding> out;
    for (const auto& sentence : text::split_sentences(tool.description)) {
        std::optional<size_t> best_pos;
        size_t best_len = 0;
        std::string lower = text::to_lower(sentence.body);
        for (const auto& dp : lexicon.directive_phrases) {
            size_t pos = lower.find(dp.phrase);
            if (pos == std::string::npos) continue;
            if (dp.requires_destination &&
                !contains_destination_literal(sentence.body.substr(pos + dp.phrase.size())))
                continue;
            if (!best_pos || pos < *best_pos) {
                best_pos = pos;
                best_len = dp.phrase.size();
            }
        }
        if (!best_pos) continue;
        Finding f;
        f.pitfall = "P1";
        f.severity = Severity::High;
        f.status = FindingStatus::Detected;
        f.tool = tool.name;
        f.evidence = {sentence.body.substr(*best_pos, best_len), sentence.offset + *best_pos};
        f.message = "tool description encodes a routing/approval policy directive";
        f.remediation = "M8";
        out.push_back(std::move(f));
    }
    return out;
}

// P2: high-risk string parameter with no schema constraint (enum, pattern,
// maxLength) and no server-side guard compensating for it.
inline std::vector<Finding> detect_p2(const ToolSpec& tool, const AnalyzerConfig& cfg) {
    std::vector<Finding> out;
    size_t idx = 0;
    for (const auto& p : tool.params) {
        size_t param_index = idx++;
        bool high_risk = false;
        std::string lower = text::to_lower(p.name);
        for (const auto& kw : cfg.lexicon.param_keywords)
            if (lower.find(kw) != std::string::npos) { high_risk = true; break; }
        if (!high_risk) continue;
        if (p.value_type != ValueType::String) continue;
        if (p.has_schema_constraint()) continue;
        if (has_validation_guard(tool, p.name, cfg)) continue;
        Finding f;
        f.pitfall = "P2";
        f.severity = Severity::High;
        f.status = FindingStatus::Detected;
        f.tool = tool.name;
        f.param = p.name;
        f.evidence = {p.name + ": string (unconstrained)", param_index};
        f.message = "high-risk parameter accepts arbitrary strings without enum/pattern/maxLength";
        f.remediation = "M1";
        out.push_back(std::move(f));
    }
    return out;
}

// P5: sink tool without a structured, argument-bearing audit log. Missing
// source text cannot pass silently, so it degrades to indeterminate.
inline std::vector<Finding> detect_p5(const ToolSpec& tool, const AnalyzerConfig& cfg) {
    if (!tool.is_sink) return {};
    Finding f;
    f.pitfall = "P5";
    f.severity = Severity::Medium;
    f.tool = tool.name;
    f.remediation = "M6";
    if (!tool.source_text) {
        f.status = FindingStatus::Indeterminate;
        f.message = "sink tool has no source text; audit logging cannot be verified";
        return {f};
    }
    if (has_structured_log_marker(tool, cfg)) return {};
    f.status = FindingStatus::Detected;
    auto lines = text::split_lines(*tool.source_text);
    std::string anchor;
    for (const auto& l : lines) {
        anchor = text::trim(l);
        if (!anchor.empty()) break;
    }
    f.evidence = {anchor, 0};
    f.message = "sink tool performs a high-impact action without a structured audit log";
    return {f};
}

// P6: high-risk parameter on a sink tool with no server-side validation
// guard. Source-less tools degrade to indeterminate, one per parameter.
inline std::vector<Finding> detect_p6(const ToolSpec& tool, const AnalyzerConfig& cfg) {
    if (!tool.is_sink) return {};
    std::vector<Finding> out;
    size_t idx = 0;
    for (const auto& p : high_risk_params(tool, cfg.lexicon)) {
        size_t param_index = idx++;
        Finding f;
        f.pitfall = "P6";
        f.severity = Severity::High;
        f.tool = tool.name;
        f.param = p.name;
        f.remediation = "M4";
        if (!tool.source_text) {
            f.status = FindingStatus::Indeterminate;
            f.message = "sink tool has no source text; validation of " + p.name + " cannot be verified";
            out.push_back(std::move(f));
            continue;
        }
        if (has_validation_guard(tool, p.name, cfg)) continue;
        f.status = FindingStatus::Detected;
        f.evidence = {p.name, param_index};
        f.message = "high-risk parameter " + p.name + " is not checked against an allowlist or guard";
        out.push_back(std::move(f));
    }
    return out;
}

// P3/P4 flags: advisory only, severity MEDIUM, zero risk contribution.
inline std::vector<Finding> flag_dataflow_pitfalls(const ServerDescriptor& server,
                                                   const AnalyzerConfig& cfg) {
    std::vector<Finding> out;
    const ToolSpec* source = nullptr;
    const ToolSpec* sink = nullptr;
    for (const auto& t : server.tools) {
        if (t.is_source && !source) source = &t;
        if (t.is_sink && !sink) sink = &t;
    }
    if (source && sink) {
        Finding f;
        f.pitfall = "P3";
        f.severity = Severity::Medium;
        f.status = FindingStatus::Flagged;
        f.tool = sink->name;
        f.evidence = {"source tool " + source->name + " feeds sink tool " + sink->name, 0};
        f.message = "possible cross-tool forwarding path; verify with trace validators";
        f.remediation = "M4";
        out.push_back(std::move(f));
    }
    for (const auto& t : server.tools) {
        if (!references_artifact_channel(t, cfg)) continue;
        Finding f;
        f.pitfall = "P4";
        f.severity = Severity::Medium;
        f.status = FindingStatus::Flagged;
        f.tool = t.name;
        f.evidence = {"tool references an image/attachment channel", 0};
        f.message = "possible image-to-tool pathway; verify with trace validators";
        f.remediation = "M10";
        out.push_back(std::move(f));
        break;  // one flag per server
    }
    return out;
}

// Capped severity-weighted score over detected findings; flagged and
// indeterminate findings contribute nothing.
inline double risk_score(const std::vector<Finding>& findings) {
    double raw = 0.0;
    for (const auto& f : findings)
        if (f.status == FindingStatus::Detected) raw += severity_weight(f.severity);
    return raw > 10.0 ? 10.0 : raw;
}

inline AnalysisReport analyze_server(const ServerDescriptor& server, const AnalyzerConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    AnalysisReport report;
    report.server_id = server.server_id;
    report.variant = server.variant;
    for (const auto& tool : server.tools) {
        for (auto& f : detect_p1(tool, cfg.lexicon)) report.findings.push_back(std::move(f));
        for (auto& f : detect_p2(tool, cfg)) report.findings.push_back(std::move(f));
        for (auto& f : detect_p5(tool, cfg)) report.findings.push_back(std::move(f));
        for (auto& f : detect_p6(tool, cfg)) report.findings.push_back(std::move(f));
    }
    for (auto& f : flag_dataflow_pitfalls(server, cfg)) report.findings.push_back(std::move(f));
    report.counts_by_severity = {{"HIGH", 0}, {"MEDIUM", 0}, {"LOW", 0}};
    for (const auto& f : report.findings)
        if (f.status == FindingStatus::Detected) report.counts_by_severity[to_string(f.severity)]++;
    report.risk_score = risk_score(report.findings);
    report.analysis_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// ---------------------------------------------------------------------------
// Detector quality scoring against server-level ground-truth labels.

struct ClassScore {
    int tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct ScoreReport {
    std::map<std::string, ClassScore> per_class;
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    int total_tp = 0, total_fp = 0, total_fn = 0;
};

// Predicted label for class p is "a detected finding of class p exists";
// flagged and indeterminate findings are not predictions.
inline ScoreReport score_against_labels(const std::vector<AnalysisReport>& reports,
                                        const std::vector<ServerDescriptor>& labeled) {
    std::map<std::string, const ServerDescriptor*> by_id;
    for (const auto& d : labeled) by_id[d.server_id] = &d;

    ScoreReport out;
    for (const auto& cls : pitfall_classes()) out.per_class[cls] = ClassScore{};

    for (const auto& r : reports) {
        auto it = by_id.find(r.server_id);
        if (it == by_id.end() || !it->second->ground_truth_labels)
            throw ValidationError("score_against_labels: no ground-truth labels for server \"" +
                                  r.server_id + "\"");
        const auto& labels = *it->second->ground_truth_labels;
        for (const auto& cls : pitfall_classes()) {
            bool predicted = false;
            for (const auto& f : r.findings)
                if (f.status == FindingStatus::Detected && f.pitfall == cls) { predicted = true; break; }
            bool actual = labels.at(cls);
            auto& s = out.per_class[cls];
            if (predicted && actual) s.tp++;
            else if (predicted && !actual) s.fp++;
            else if (!predicted && actual) s.fn++;
        }
    }
    for (auto& [cls, s] : out.per_class) {
        s.precision = (s.tp + s.fp) ? static_cast<double>(s.tp) / (s.tp + s.fp) : 0.0;
        s.recall = (s.tp + s.fn) ? static_cast<double>(s.tp) / (s.tp + s.fn) : 0.0;
        s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
        out.macro_precision += s.precision;
        out.macro_recall += s.recall;
        out.macro_f1 += s.f1;
        out.total_tp += s.tp;
        out.total_fp += s.fp;
        out.total_fn += s.fn;
    }
    size_t n = out.per_class.size();
    out.macro_precision /= n;
    out.macro_recall /= n;
    out.macro_f1 /= n;
    return out;
}

// ---------------------------------------------------------------------------
// JSON report shapes.

inline json finding_to_json(const Finding& f) {
    json j;
    j["class"] = f.pitfall;
    j["severity"] = to_string(f.severity);
    j["status"] = to_string(f.status);
    j["tool"] = f.tool;
    if (f.param) j["param"] = *f.param;
    j["evidence"] = {{"text", f.evidence.matched}, {"offset", f.evidence.offset}};
    j["message"] = f.message;
    j["remediation"] = f.remediation;
    return j;
}

inline json report_to_json(const AnalysisReport& r) {
    json j;
    j["server_id"] = r.server_id;
    j["variant"] = to_string(r.variant);
    j["risk_score"] = r.risk_score;
    j["findings"] = json::array();
    for (const auto& f : r.findings) j["findings"].push_back(finding_to_json(f));
    j["counts"] = r.counts_by_severity;
    j["analysis_time_ms"] = r.analysis_time_ms;
    return j;
}

inline json score_report_to_json(const ScoreReport& s) {
    json j;
    j["per_class"] = json::object();
    for (const auto& [cls, c] : s.per_class) {
        j["per_class"][cls] = {{"tp", c.tp},           {"fp", c.fp},
                               {"fn", c.fn},           {"precision", c.precision},
                               {"recall", c.recall},   {"f1", c.f1}};
    }
    j["macro"] = {{"precision", s.macro_precision},
                  {"recall", s.macro_recall},
                  {"f1", s.macro_f1}};
    j["aggregate"] = {{"tp", s.total_tp}, {"fp", s.total_fp}, {"fn", s.total_fn}};
    return j;
}

}  // namespace pitlab
