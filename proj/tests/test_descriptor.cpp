#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fixture_util.hpp"
#include "pitlab/descriptor.hpp"

using namespace pitlab;

TEST_CASE("emailsystem baseline fixture parses with the expected tools") {
    auto d = testutil::load_descriptor("emailsystem_baseline");
    CHECK(d.server_id == "emailsystem-baseline");
    CHECK(d.variant == Variant::Baseline);
    CHECK(d.scenario == scenario::kEmailSystem);
    CHECK(d.find_tool("read_emails") != nullptr);
    CHECK(d.find_tool("send_teams_message") != nullptr);
    REQUIRE(d.ground_truth_labels.has_value());
    CHECK(d.ground_truth_labels->size() == 6);
}

TEST_CASE("parsing is total over the bundled corpus") {
    for (const char* name :
         {"emailsystem_baseline", "emailsystem_hardened", "documentsystem_baseline",
          "documentsystem_hardened", "ethpriceserver_baseline", "ethpriceserver_hardened"}) {
        CHECK_NOTHROW(testutil::load_descriptor(name));
    }
}

TEST_CASE("descriptor validation rejects malformed documents") {
    SECTION("zero tools") {
        CHECK_THROWS_AS(parse_descriptor(R"({"server_id":"s","scenario":"emailsystem","tools":[]})"),
                        ValidationError);
    }
    SECTION("duplicate tool names are named in the error") {
        try {
            parse_descriptor(R"({"server_id":"s","scenario":"x","tools":[
                {"name":"a","params":[]},{"name":"a","params":[]}]})");
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("\"a\"") != std::string::npos);
        }
    }
    SECTION("malformed JSON reports a line number") {
        try {
            parse_descriptor("{\n  \"server_id\": \"s\",\n  oops\n}");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("line") != std::string::npos);
        }
    }
    SECTION("constraints on non-string params are rejected") {
        CHECK_THROWS_AS(parse_descriptor(R"({"server_id":"s","scenario":"x","tools":[
            {"name":"a","params":[{"name":"n","type":"integer","max_length":4}]}]})"),
                        ValidationError);
    }
    SECTION("max_length must be positive") {
        CHECK_THROWS_AS(parse_descriptor(R"({"server_id":"s","scenario":"x","tools":[
            {"name":"a","params":[{"name":"n","type":"string","max_length":0}]}]})"),
                        ValidationError);
    }
    SECTION("unknown fields rejected in strict mode, allowed in lenient mode") {
        std::string doc = R"({"server_id":"s","scenario":"x","bogus":1,"tools":[{"name":"a","params":[]}]})";
        CHECK_THROWS_AS(parse_descriptor(doc), ValidationError);
        CHECK_NOTHROW(parse_descriptor(doc, /*lenient=*/true));
    }
    SECTION("labels must cover all six classes") {
        CHECK_THROWS_AS(parse_descriptor(R"({"server_id":"s","scenario":"x",
            "tools":[{"name":"a","params":[]}],"labels":{"P1":true}})"),
                        ValidationError);
    }
}

TEST_CASE("defaults are applied") {
    auto d = parse_descriptor(R"({"server_id":"s","scenario":"puppet","tools":[{"name":"a","params":[]}]})");
    CHECK(d.variant == Variant::Baseline);
    CHECK_FALSE(d.tools[0].is_sink);
    CHECK_FALSE(d.tools[0].is_source);
    CHECK_FALSE(d.tools[0].source_text.has_value());
    CHECK_FALSE(scenario::is_builtin(d.scenario));
}

TEST_CASE("high_risk_params selects by lexicon keyword, order preserved") {
    auto lex = default_lexicon();

    ToolSpec send;
    send.name = "send_teams_message";
    send.params = {{"channel", ValueType::String, {}, {}, {}, ""},
                   {"message", ValueType::String, {}, {}, {}, ""}};
    auto risky = high_risk_params(send, lex);
    REQUIRE(risky.size() == 1);
    CHECK(risky[0].name == "channel");

    ToolSpec read;
    read.name = "read_emails";
    read.params = {{"limit", ValueType::Integer, {}, {}, {}, ""}};
    CHECK(high_risk_params(read, lex).empty());

    ToolSpec transfer;
    transfer.name = "transfer_eth";
    transfer.params = {{"transfer_to", ValueType::String, {}, {}, {}, ""},
                       {"amount", ValueType::Number, {}, {}, {}, ""}};
    risky = high_risk_params(transfer, lex);
    REQUIRE(risky.size() == 1);
    CHECK(risky[0].name == "transfer_to");
}

TEST_CASE("high_risk_params is monotone in the lexicon") {
    std::mt19937 rng(20240801);
    const std::vector<std::string> name_pool = {"channel",  "limit",   "note",  "dest_path",
                                                "amount",   "payload", "url",   "wallet_index",
                                                "severity", "body",    "query", "recipient_id"};
    const std::vector<std::string> extra_keywords = {"body", "query", "note", "amount", "sev"};
    for (int iter = 0; iter < 200; ++iter) {
        ToolSpec t;
        t.name = "t";
        std::uniform_int_distribution<size_t> names(0, name_pool.size() - 1);
        std::uniform_int_distribution<int> count(0, 6);
        int n = count(rng);
        for (int i = 0; i < n; ++i) {
            std::string nm = name_pool[names(rng)] + std::to_string(i);
            t.params.push_back({nm, ValueType::String, {}, {}, {}, ""});
        }
        HighRiskLexicon lex = default_lexicon();
        auto before = high_risk_params(t, lex);
        std::uniform_int_distribution<size_t> kw(0, extra_keywords.size() - 1);
        lex.param_keywords.push_back(extra_keywords[kw(rng)]);
        auto after = high_risk_params(t, lex);
        // adding a keyword never removes a param from the result
        for (const auto& p : before) {
            bool still = false;
            for (const auto& q : after) still |= (q.name == p.name);
            CHECK(still);
        }
    }
}

TEST_CASE("descriptor round-trips through serialization") {
    for (const char* name : {"emailsystem_baseline", "documentsystem_hardened",
                             "ethpriceserver_baseline"}) {
        auto d = testutil::load_descriptor(name);
        auto again = parse_descriptor(serialize_descriptor(d));
        CHECK(again == d);
    }

    // Synthetic descriptor exercising optional fields.
    ServerDescriptor d;
    d.server_id = "synthetic";
    d.variant = Variant::Hardened;
    d.scenario = "somethingelse";
    ToolSpec t;
    t.name = "tool";
    t.description = "does things";
    ParamSpec p;
    p.name = "target_id";
    p.value_type = ValueType::String;
    p.pattern = "^[a-z]+$";
    p.max_length = 12;
    p.enum_values = std::vector<std::string>{"a", "b"};
    t.params.push_back(p);
    t.source_text = "def tool(target_id):\n    pass\n";
    t.is_sink = true;
    t.is_source = true;
    d.tools.push_back(t);
    d.ground_truth_labels = std::map<std::string, bool>{{"P1", true},  {"P2", false}, {"P3", false},
                                                        {"P4", false}, {"P5", true},  {"P6", false}};
    CHECK(parse_descriptor(serialize_descriptor(d)) == d);
}

TEST_CASE("random descriptors round-trip") {
    std::mt19937 rng(8675309);
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_int_distribution<int> n_tools(1, 5);
    std::uniform_int_distribution<int> n_params(0, 4);
    std::uniform_int_distribution<int> type_pick(0, 5);
    const std::vector<std::string> words = {"alpha", "beta", "gamma", "delta", "path", "channel"};
    std::uniform_int_distribution<size_t> w(0, words.size() - 1);

    for (int iter = 0; iter < 100; ++iter) {
        ServerDescriptor d;
        d.server_id = "srv" + std::to_string(iter);
        d.variant = coin(rng) ? Variant::Hardened : Variant::Baseline;
        d.scenario = coin(rng) ? "emailsystem" : ("custom-" + words[w(rng)]);
        int tools = n_tools(rng);
        for (int t = 0; t < tools; ++t) {
            ToolSpec tool;
            tool.name = "tool_" + std::to_string(t);
            if (coin(rng)) tool.description = words[w(rng)] + " " + words[w(rng)];
            int params = n_params(rng);
            for (int p = 0; p < params; ++p) {
                ParamSpec ps;
                ps.name = "p" + std::to_string(p);
                ps.value_type = static_cast<ValueType>(type_pick(rng));
                if (ps.value_type == ValueType::String) {
                    if (coin(rng)) ps.enum_values = std::vector<std::string>{words[w(rng)]};
                    if (coin(rng)) ps.pattern = "^[a-z]+$";
                    if (coin(rng)) ps.max_length = 1 + p;
                }
                if (coin(rng)) ps.description = words[w(rng)];
                tool.params.push_back(std::move(ps));
            }
            if (coin(rng)) tool.source_text = "def " + tool.name + "():\n    pass\n";
            tool.is_sink = coin(rng);
            tool.is_source = coin(rng);
            d.tools.push_back(std::move(tool));
        }
        if (coin(rng)) {
            std::map<std::string, bool> labels;
            for (const auto& cls : pitfall_classes()) labels[cls] = coin(rng);
            d.ground_truth_labels = std::move(labels);
        }
        CHECK(parse_descriptor(serialize_descriptor(d)) == d);
    }
}
