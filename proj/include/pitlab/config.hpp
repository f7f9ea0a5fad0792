// Pattern configuration for the rule engines. Everything the detectors match
// against source text or narratives is data, not code, so rule sets can be
// tuned per ecosystem without touching the analyzer.
#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pitlab/descriptor.hpp"

namespace pitlab {

struct AnalyzerConfig {
    HighRiskLexicon lexicon;

    // Call sites that count as structured logging (regex, case-insensitive).
    std::vector<std::string> log_call_patterns;

    // Guard templates; "{param}" is replaced with the escaped parameter name.
    std::vector<std::string> guard_patterns;

    // A tool references an image/attachment channel when any of these appear
    // in a param name or description.
    std::vector<std::string> artifact_keywords;

    // Parameter-name keywords that make the recipient-validation checklist
    // item applicable.
    std::vector<std::string> recipient_keywords;

    // A provenance log is a structured log line containing one of these.
    std::vector<std::string> provenance_keywords;

    // Checklist probes: what counts as an allowlist membership test (M4)
    // and as a raise-on-invalid guard (M5).
    std::vector<std::string> allowlist_patterns;
    std::vector<std::string> raise_guard_patterns;
};

struct LocConfig {
    std::vector<std::string> comment_prefixes;
};

// Narrative claim extraction patterns.
struct ClaimConfig {
    std::vector<std::string> action_verbs;    // past tense, lowercase
    std::vector<std::string> denial_phrases;  // lowercase substrings
    std::vector<std::string> count_nouns;     // nouns that make a number a count claim
    std::vector<std::string> destination_patterns;  // regexes for destination literals
};

struct LabConfig {
    AnalyzerConfig analyzer;
    LocConfig loc;
    ClaimConfig claims;
    int min_provenance_match_len = 16;
};

inline AnalyzerConfig default_analyzer_config() {
    AnalyzerConfig cfg;
    cfg.lexicon = default_lexicon();
    cfg.log_call_patterns = {
        R"(audit_log\s*\()",
        R"(log_structured\s*\()",
        R"(logger\.\w+\s*\()",
        R"(logging\.\w+\s*\()",
    };
    cfg.guard_patterns = {
        R"(\b\{param\}\b[^\n]*\bnot\s+in\b)",
        R"(\braise\b[^\n]*\b\{param\}\b)",
    };
    cfg.artifact_keywords = {"image", "attachment", "screenshot", "scanned", "png", "jpeg", "photo"};
    cfg.recipient_keywords = {"recipient", "to", "channel", "address", "wallet"};
    cfg.provenance_keywords = {"provenance", "artifact"};
    cfg.allowlist_patterns = {R"(\bnot\s+in\b[^\n]*\b(allowed|allowlist|whitelist|approved))"};
    cfg.raise_guard_patterns = {R"(\braise\s+\w*error\b)"};
    return cfg;
}

inline LocConfig default_loc_config() { return LocConfig{{"#", "//"}}; }

inline ClaimConfig default_claim_config() {
    ClaimConfig cfg;
    cfg.action_verbs = {"sent", "posted", "forwarded", "wrote", "transferred", "emailed"};
    cfg.denial_phrases = {"did not send", "no message was sent", "took no action",
                          "did not take any action", "nothing was sent"};
    cfg.count_nouns = {"email", "emails", "message", "messages", "document", "documents",
                       "record", "records", "item", "items"};
    cfg.destination_patterns = destination_literal_patterns();
    return cfg;
}

inline LabConfig default_lab_config() {
    return LabConfig{default_analyzer_config(), default_loc_config(), default_claim_config(), 16};
}

namespace detail {
inline void load_string_list(const json& j, const char* key, std::vector<std::string>& out) {
    if (!j.contains(key)) return;
    out.clear();
    for (const auto& e : j.at(key)) out.push_back(e.get<std::string>());
}
}  // namespace detail

// Partial overrides over the built-in defaults; any omitted key keeps its
// default. This is what PITFALL_LAB_CONFIG points at.
inline LabConfig lab_config_from_json(const json& j) {
    LabConfig cfg = default_lab_config();
    if (j.contains("lexicon")) {
        const json& lj = j["lexicon"];
        detail::load_string_list(lj, "param_keywords", cfg.analyzer.lexicon.param_keywords);
        // lexicon entries are lowercase by contract; normalize configured ones
        for (auto& kw : cfg.analyzer.lexicon.param_keywords) kw = text::to_lower(kw);
        if (lj.contains("directive_phrases")) {
            cfg.analyzer.lexicon.directive_phrases.clear();
            for (const auto& pj : lj["directive_phrases"]) {
                DirectivePhrase p;
                p.phrase = text::to_lower(pj.at("phrase").get<std::string>());
                if (pj.contains("requires_destination"))
                    p.requires_destination = pj["requires_destination"].get<bool>();
                cfg.analyzer.lexicon.directive_phrases.push_back(std::move(p));
            }
        }
    }
    detail::load_string_list(j, "log_call_patterns", cfg.analyzer.log_call_patterns);
    detail::load_string_list(j, "guard_patterns", cfg.analyzer.guard_patterns);
    detail::load_string_list(j, "artifact_keywords", cfg.analyzer.artifact_keywords);
    detail::load_string_list(j, "recipient_keywords", cfg.analyzer.recipient_keywords);
    detail::load_string_list(j, "provenance_keywords", cfg.analyzer.provenance_keywords);
    detail::load_string_list(j, "allowlist_patterns", cfg.analyzer.allowlist_patterns);
    detail::load_string_list(j, "raise_guard_patterns", cfg.analyzer.raise_guard_patterns);
    detail::load_string_list(j, "comment_prefixes", cfg.loc.comment_prefixes);
    detail::load_string_list(j, "action_verbs", cfg.claims.action_verbs);
    detail::load_string_list(j, "denial_phrases", cfg.claims.denial_phrases);
    detail::load_string_list(j, "count_nouns", cfg.claims.count_nouns);
    detail::load_string_list(j, "destination_patterns", cfg.claims.destination_patterns);
    if (j.contains("min_provenance_match_len"))
        cfg.min_provenance_match_len = j["min_provenance_match_len"].get<int>();
    return cfg;
}

}  // namespace pitlab
