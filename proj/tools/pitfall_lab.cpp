// pitfall-lab: command-line front end for the whole lab. Subcommands cover
// static analysis, hardening diffs, detector scoring, trace validation,
// divergence auditing, attack-corpus generation, and arena runs.
//
// Exit codes: 0 clean/pass, 1 security gate failed (findings above the
// threshold or a validator hit), 2 usage or config error, 3 internal error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pitlab/analyzer.hpp"
#include "pitlab/arena.hpp"
#include "pitlab/attackgen.hpp"
#include "pitlab/config.hpp"
#include "pitlab/descriptor.hpp"
#include "pitlab/divergence.hpp"
#include "pitlab/mitigation.hpp"
#include "pitlab/trace.hpp"
#include "pitlab/validators.hpp"

namespace fs = std::filesystem;
using pitlab::json;

namespace {

constexpr int kExitClean = 0;
constexpr int kExitGateFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw pitlab::UsageError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw pitlab::UsageError("cannot write file: " + path.string());
    out << content;
}

// Lab config resolution: --config flag, then PITFALL_LAB_CONFIG, then defaults.
pitlab::LabConfig resolve_config(const std::string& config_flag) {
    std::string path = config_flag;
    if (path.empty()) {
        if (const char* env = std::getenv("PITFALL_LAB_CONFIG")) path = env;
    }
    if (path.empty()) return pitlab::default_lab_config();
    return pitlab::lab_config_from_json(json::parse(read_file(path)));
}

std::vector<pitlab::ServerDescriptor> load_registry(const std::vector<std::string>& paths,
                                                    bool lenient) {
    std::vector<pitlab::ServerDescriptor> out;
    for (const auto& p : paths) {
        if (fs::is_directory(p)) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(p))
                if (e.path().extension() == ".json") files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files)
                out.push_back(pitlab::parse_descriptor(read_file(f.string()), lenient));
        } else {
            out.push_back(pitlab::parse_descriptor(read_file(p), lenient));
        }
    }
    return out;
}

pitlab::AgentPolicy resolve_policy(const std::string& name) {
    if (name.empty() || name == "susceptible") return pitlab::susceptible_policy();
    if (name == "resistant") return pitlab::resistant_policy();
    if (name == "susceptible-tool-naming") {
        auto p = pitlab::susceptible_policy();
        p.narrative_style = pitlab::NarrativeStyle::ToolNaming;
        return p;
    }
    return pitlab::policy_from_json(json::parse(read_file(name)));
}

// ---------------------------------------------------------------------------
// Table renderers for the --format table views.

void print_findings_table(const pitlab::AnalysisReport& report) {
    std::cout << "server " << report.server_id << " (" << to_string(report.variant)
              << ")  risk " << std::fixed << std::setprecision(1) << report.risk_score << "/10\n";
    std::cout << std::left << std::setw(6) << "class" << std::setw(9) << "sev" << std::setw(15)
              << "status" << std::setw(26) << "tool" << std::setw(14) << "param"
              << "message\n";
    for (const auto& f : report.findings) {
        std::cout << std::left << std::setw(6) << f.pitfall << std::setw(9)
                  << to_string(f.severity) << std::setw(15) << to_string(f.status) << std::setw(26)
                  << f.tool << std::setw(14) << (f.param ? *f.param : "-") << f.message << "\n";
    }
    std::cout << "counts: HIGH=" << report.counts_by_severity.at("HIGH")
              << " MEDIUM=" << report.counts_by_severity.at("MEDIUM")
              << " LOW=" << report.counts_by_severity.at("LOW") << "\n";
}

void print_score_table(const pitlab::ScoreReport& s) {
    std::cout << std::left << std::setw(7) << "class" << std::setw(5) << "tp" << std::setw(5)
              << "fp" << std::setw(5) << "fn" << std::setw(11) << "precision" << std::setw(9)
              << "recall" << "f1\n";
    for (const auto& [cls, c] : s.per_class) {
        std::cout << std::left << std::setw(7) << cls << std::setw(5) << c.tp << std::setw(5)
                  << c.fp << std::setw(5) << c.fn << std::setw(11) << std::fixed
                  << std::setprecision(2) << c.precision << std::setw(9) << c.recall << c.f1
                  << "\n";
    }
    std::cout << "macro   precision=" << std::fixed << std::setprecision(2) << s.macro_precision
              << " recall=" << s.macro_recall << " f1=" << s.macro_f1 << "\n";
}

void print_delta_table(const std::vector<pitlab::HardeningDelta>& deltas) {
    std::cout << std::left << std::setw(16) << "scenario" << std::setw(7) << "base" << std::setw(7)
              << "hard" << std::setw(8) << "dlog%" << std::setw(8) << "dval%" << std::setw(6)
              << "dloc" << "ce\n";
    for (const auto& d : deltas) {
        std::cout << std::left << std::setw(16) << d.scenario << std::fixed
                  << std::setprecision(1) << std::setw(7) << d.risk_base << std::setw(7)
                  << d.risk_hard << std::showpos << std::setw(8) << d.delta_log_pct << std::setw(8)
                  << d.delta_val_pct << std::noshowpos << std::setw(6) << d.delta_loc
                  << std::setprecision(2) << d.ce << "\n";
    }
    for (const auto& d : deltas) {
        std::cout << "checklist " << d.scenario << ": ";
        for (const auto& c : d.checklist)
            std::cout << c.id << (c.present ? "+" : (c.applicable ? "-" : ".")) << " ";
        std::cout << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Protocol-aware security lab for tool-server pitfalls"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path,
                   "lab config JSON (default: $PITFALL_LAB_CONFIG or built-in)");

    // -- analyze ------------------------------------------------------------
    auto* analyze = app.add_subcommand("analyze", "statically analyze a server descriptor");
    std::string analyze_path, analyze_lexicon, analyze_fail_on = "HIGH", analyze_format = "json";
    bool analyze_lenient = false;
    analyze->add_option("descriptor", analyze_path, "descriptor JSON file")->required();
    analyze->add_option("--lexicon", analyze_lexicon, "lexicon override JSON");
    analyze->add_option("--fail-on", analyze_fail_on, "gate threshold: HIGH or MEDIUM")
        ->check(CLI::IsMember({"HIGH", "MEDIUM"}));
    analyze->add_option("--format", analyze_format)->check(CLI::IsMember({"json", "table"}));
    analyze->add_flag("--lenient", analyze_lenient, "allow unknown descriptor fields");

    // -- diff ---------------------------------------------------------------
    auto* diff = app.add_subcommand("diff", "compare a baseline and a hardened descriptor");
    std::string diff_base, diff_hard, diff_format = "json";
    bool diff_lenient = false;
    diff->add_option("baseline", diff_base)->required();
    diff->add_option("hardened", diff_hard)->required();
    diff->add_option("--format", diff_format)->check(CLI::IsMember({"json", "table"}));
    diff->add_flag("--lenient", diff_lenient);

    // -- score-detectors ----------------------------------------------------
    auto* score = app.add_subcommand("score-detectors",
                                     "score the analyzer against a labeled descriptor corpus");
    std::string score_dir, score_format = "json";
    bool score_lenient = false;
    score->add_option("corpus", score_dir, "directory of labeled descriptor JSON files")->required();
    score->add_option("--format", score_format)->check(CLI::IsMember({"json", "table"}));
    score->add_flag("--lenient", score_lenient);

    // -- validate -------------------------------------------------------------
    auto* validate = app.add_subcommand("validate", "run an objective validator over a trace");
    std::string val_trace, val_objective, val_config, val_state;
    std::vector<std::string> val_registry;
    bool val_strict = false;
    validate->add_option("trace", val_trace, "JSONL trace file")->required();
    validate->add_option("--objective", val_objective)->required()
        ->check(CLI::IsMember({"conf", "int"}));
    validate->add_option("--config", val_config, "objective config JSON")->required();
    validate->add_option("--state", val_state, "directory containing state.json");
    validate->add_option("--registry", val_registry, "descriptor file or directory (repeatable)");
    validate->add_flag("--strict-invocation", val_strict,
                       "count rejected attacker-directed calls as integrity hits");

    // -- diverge --------------------------------------------------------------
    auto* diverge = app.add_subcommand("diverge", "detect trace-vs-narrative divergences");
    std::string div_input, div_fail_on = "HIGH", div_format = "json";
    std::vector<std::string> div_registry;
    diverge->add_option("input", div_input, "trace JSONL file or corpus directory")->required();
    diverge->add_option("--registry", div_registry, "descriptor file or directory (repeatable)")
        ->required();
    diverge->add_option("--fail-on", div_fail_on)->check(CLI::IsMember({"HIGH", "MEDIUM"}));
    diverge->add_option("--format", div_format)->check(CLI::IsMember({"json", "table"}));

    // -- gen-attacks ----------------------------------------------------------
    auto* gen = app.add_subcommand("gen-attacks", "render the attack submission corpus");
    std::string gen_templates, gen_out;
    gen->add_option("--templates", gen_templates, "directory of template JSON files")->required();
    gen->add_option("--out", gen_out, "output directory")->required();

    // -- run --------------------------------------------------------------------
    auto* run = app.add_subcommand("run", "execute one scenario/attack configuration");
    std::string run_scenario, run_family, run_template, run_variant = "baseline";
    std::string run_policy = "susceptible", run_out, run_fixtures = "fixtures", run_templates;
    int run_trials = 3;
    run->add_option("--scenario", run_scenario)->required()
        ->check(CLI::IsMember({"emailsystem", "documentsystem", "ethpriceserver"}));
    run->add_option("--family", run_family)->required()->check(CLI::IsMember({"TP", "PA", "MM"}));
    run->add_option("--template", run_template, "template id, e.g. t01")->required();
    run->add_option("--variant", run_variant)->check(CLI::IsMember({"baseline", "hardened"}));
    run->add_option("--policy", run_policy, "susceptible | resistant | susceptible-tool-naming | file");
    run->add_option("--trials", run_trials, "odd trial count");
    run->add_option("--out", run_out, "output directory")->required();
    run->add_option("--fixtures", run_fixtures, "fixtures root directory");
    run->add_option("--templates", run_templates, "template directory (default <fixtures>/attack_templates)");

    // -- run-matrix ---------------------------------------------------------------
    auto* matrix = app.add_subcommand("run-matrix", "execute the full scenario x family x template matrix");
    std::string mx_out, mx_policy = "susceptible", mx_fixtures = "fixtures", mx_templates,
                mx_variant = "baseline";
    int mx_trials = 3;
    matrix->add_option("--out", mx_out, "output directory")->required();
    matrix->add_option("--policy", mx_policy);
    matrix->add_option("--trials", mx_trials);
    matrix->add_option("--fixtures", mx_fixtures);
    matrix->add_option("--templates", mx_templates);
    matrix->add_option("--variant", mx_variant)->check(CLI::IsMember({"baseline", "hardened"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitClean : kExitUsage;
    }

    try {
        pitlab::LabConfig lab = resolve_config(config_path);

        if (*analyze) {
            auto cfg = lab.analyzer;
            if (!analyze_lexicon.empty()) {
                json lex = json::parse(read_file(analyze_lexicon));
                cfg.lexicon = pitlab::lab_config_from_json(json{{"lexicon", lex}}).analyzer.lexicon;
            }
            auto descriptor = pitlab::parse_descriptor(read_file(analyze_path), analyze_lenient);
            auto report = pitlab::analyze_server(descriptor, cfg);
            if (analyze_format == "table") print_findings_table(report);
            else std::cout << pitlab::report_to_json(report).dump(2) << "\n";

            bool gate_failed = false;
            for (const auto& f : report.findings) {
                if (f.status != pitlab::FindingStatus::Detected) continue;
                if (f.severity == pitlab::Severity::High ||
                    (analyze_fail_on == "MEDIUM" && f.severity == pitlab::Severity::Medium))
                    gate_failed = true;
            }
            return gate_failed ? kExitGateFailed : kExitClean;
        }

        if (*diff) {
            auto base = pitlab::parse_descriptor(read_file(diff_base), diff_lenient);
            auto hard = pitlab::parse_descriptor(read_file(diff_hard), diff_lenient);
            auto delta = pitlab::compare_variants(base, hard, lab.analyzer, lab.loc);
            if (diff_format == "table") print_delta_table({delta});
            else std::cout << pitlab::hardening_report_to_json({delta}).dump(2) << "\n";
            return kExitClean;
        }

        if (*score) {
            std::vector<pitlab::ServerDescriptor> corpus = load_registry({score_dir}, score_lenient);
            std::vector<pitlab::AnalysisReport> reports;
            for (const auto& d : corpus) reports.push_back(pitlab::analyze_server(d, lab.analyzer));
            auto result = pitlab::score_against_labels(reports, corpus);
            if (score_format == "table") print_score_table(result);
            else std::cout << pitlab::score_report_to_json(result).dump(2) << "\n";
            return kExitClean;
        }

        if (*validate) {
            auto cfg = pitlab::objective_config_from_json(json::parse(read_file(val_config)));
            if (cfg.objective != val_objective)
                throw pitlab::UsageError("config objective \"" + cfg.objective +
                                         "\" does not match --objective " + val_objective);
            cfg.strict_invocation = val_strict || cfg.strict_invocation;
            auto trace = pitlab::parse_trace(read_file(val_trace));
            pitlab::StateStore state;
            if (!val_state.empty())
                state = pitlab::state_from_json(
                    json::parse(read_file((fs::path(val_state) / "state.json").string())));
            auto registry = load_registry(val_registry, false);
            auto verdict = pitlab::validate_objective(trace, cfg, state, registry);
            std::cout << pitlab::verdict_to_json(verdict).dump(2) << "\n";
            return verdict.hit ? kExitGateFailed : kExitClean;
        }

        if (*diverge) {
            auto registry = load_registry(div_registry, false);
            std::vector<fs::path> inputs;
            if (fs::is_directory(div_input)) {
                for (const auto& e : fs::directory_iterator(div_input))
                    if (e.path().extension() == ".jsonl") inputs.push_back(e.path());
                std::sort(inputs.begin(), inputs.end());
            } else {
                inputs.push_back(div_input);
            }

            std::vector<pitlab::RunDivergence> runs;
            json reports = json::array();
            bool gate_failed = false;
            for (const auto& path : inputs) {
                auto trace = pitlab::parse_trace(read_file(path.string()));
                pitlab::RunDivergence rd;
                rd.run_id = trace.run_id;
                rd.has_sink_action = !pitlab::sink_actions(trace, registry).empty();
                rd.records = pitlab::detect_divergences(trace, registry, lab.claims,
                                                        lab.analyzer.lexicon,
                                                        lab.min_provenance_match_len);
                for (const auto& r : rd.records) {
                    if (r.severity == pitlab::Severity::High ||
                        (div_fail_on == "MEDIUM" && r.severity == pitlab::Severity::Medium))
                        gate_failed = true;
                }
                reports.push_back(pitlab::divergence_report_to_json(rd.run_id, rd.records));
                runs.push_back(std::move(rd));
            }
            auto summary = pitlab::summarize(runs);
            if (div_format == "table") {
                for (const auto& r : runs)
                    std::cout << r.run_id << ": " << r.records.size() << " divergence(s)"
                              << (r.has_sink_action ? " [sink run]" : "") << "\n";
                std::cout << "divergent " << summary.runs_divergent << "/" << summary.runs_total;
                if (summary.div_rate)
                    std::cout << " (" << std::fixed << std::setprecision(1)
                              << *summary.div_rate * 100 << "%)";
                std::cout << "\n";
            } else {
                json out = {{"runs", reports}, {"summary", pitlab::summary_to_json(summary)}};
                std::cout << out.dump(2) << "\n";
            }
            return gate_failed ? kExitGateFailed : kExitClean;
        }

        if (*gen) {
            auto templates = pitlab::load_templates(gen_templates);
            std::vector<std::string> scenarios = {pitlab::scenario::kEmailSystem,
                                                  pitlab::scenario::kDocumentSystem,
                                                  pitlab::scenario::kEthPriceServer};
            std::map<std::string, pitlab::TokenMap> profiles;
            for (const auto& s : scenarios) profiles[s] = pitlab::default_token_profile(s);
            auto corpus = pitlab::generate_corpus(templates, scenarios, profiles);
            for (const auto& e : corpus) write_file(fs::path(gen_out) / e.path, e.content);
            write_file(fs::path(gen_out) / "manifest.json",
                       pitlab::corpus_manifest_to_json(corpus).dump(2) + "\n");
            std::cout << "wrote " << corpus.size() << " submissions to " << gen_out << "\n";
            return kExitClean;
        }

        if (*run) {
            auto scen = pitlab::load_scenario(run_scenario, run_fixtures);
            std::string tmpl_dir =
                run_templates.empty() ? run_fixtures + "/attack_templates" : run_templates;
            pitlab::AttackTemplate tmpl;
            bool found = false;
            for (const auto& t : pitlab::load_templates(tmpl_dir))
                if (t.template_id == run_template) { tmpl = t; found = true; }
            if (!found) throw pitlab::UsageError("unknown template id: " + run_template);

            auto submission = pitlab::render_submission(
                tmpl, pitlab::attack_family_from_string(run_family),
                pitlab::default_token_profile(run_scenario));
            auto variant = run_variant == "baseline" ? pitlab::Variant::Baseline
                                                     : pitlab::Variant::Hardened;
            auto inst = pitlab::inject_attack(scen, variant, submission);
            auto result = pitlab::run_submission(inst, resolve_policy(run_policy), run_trials, lab);
            json out = json::array();
            for (auto& r : result.reports) {
                pitlab::write_run_outputs(r, run_out);
                out.push_back(pitlab::run_report_to_json(r));
            }
            std::cout << json{{"reports", out}, {"majority_hit", result.majority}}.dump(2) << "\n";
            return kExitClean;
        }

        if (*matrix) {
            std::string tmpl_dir =
                mx_templates.empty() ? mx_fixtures + "/attack_templates" : mx_templates;
            auto templates = pitlab::load_templates(tmpl_dir);
            auto variant = mx_variant == "baseline" ? pitlab::Variant::Baseline
                                                    : pitlab::Variant::Hardened;
            auto summary = pitlab::run_matrix(mx_fixtures, templates, resolve_policy(mx_policy),
                                              mx_trials, mx_out, variant, lab);
            write_file(fs::path(mx_out) / "summary.json",
                       pitlab::matrix_summary_to_json(summary).dump(2) + "\n");
            std::cout << pitlab::matrix_summary_to_json(summary).dump(2) << "\n";
            return kExitClean;
        }
    } catch (const pitlab::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const pitlab::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const pitlab::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitClean;
}
