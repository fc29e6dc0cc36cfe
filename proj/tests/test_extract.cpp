#include <doctest.h>

#include <atomic>
#include <chrono>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include <autoquery/dataset.hpp>
#include <autoquery/errors.hpp>
#include <autoquery/extract.hpp>

using namespace autoquery;
using nlohmann::json;

namespace {

std::string error_kind(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return "";
}

// Random JSON object off a seeded generator; strings lean on braces, quotes
// and backslashes since those are what the brace matcher has to survive.
json random_object(std::mt19937_64& rng, int depth) {
    const char* pieces[] = {"{", "}", "\"", "\\", "a", "b", " ", ":", ",", "[", "]", "\n"};
    auto random_string = [&] {
        std::string s;
        const std::size_t len = rng() % 12;
        for (std::size_t i = 0; i < len; ++i) s += pieces[rng() % 12];
        return s;
    };
    json obj = json::object();
    const std::size_t fields = rng() % 5;
    for (std::size_t i = 0; i < fields; ++i) {
        const std::string key = "k" + std::to_string(rng() % 8);
        switch (rng() % 6) {
            case 0: obj[key] = static_cast<std::int64_t>(rng() % 10000); break;
            case 1: obj[key] = random_string(); break;
            case 2: obj[key] = nullptr; break;
            case 3: obj[key] = rng() % 2 == 0; break;
            case 4:
                if (depth > 0) {
                    obj[key] = random_object(rng, depth - 1);
                    break;
                }
                [[fallthrough]];
            default: obj[key] = json::array({static_cast<std::int64_t>(rng() % 100)}); break;
        }
    }
    return obj;
}

// Local stub with a scripted reply, for exercising extract_entities paths
// the pool-driven mock never produces on its own.
struct ScriptedBackend : ChatBackend {
    std::string reply;
    std::atomic<int> calls{0};
    explicit ScriptedBackend(std::string r) : reply(std::move(r)) {}
    std::string send(const ChatRequest&) override {
        ++calls;
        return reply;
    }
};

struct ThrowingBackend : ChatBackend {
    std::string send(const ChatRequest&) override {
        throw Error("Transport", "wire unplugged");
    }
};

}  // namespace

TEST_SUITE("extract") {

TEST_CASE("parse_structured takes a bare object verbatim as clean") {
    ParsedJson out = parse_structured(R"({"make": "Toyota", "year": 2015})");
    CHECK(out.status == ParseStatus::clean);
    CHECK(out.object["make"] == "Toyota");
    CHECK(out.object["year"] == 2015);

    // surrounding whitespace alone does not demote the parse
    out = parse_structured("\n  {\"a\": 1}  \n");
    CHECK(out.status == ParseStatus::clean);
}

TEST_CASE("parse_structured strips fences and prose as repaired") {
    const std::string body = R"({"make": null, "issue": "stalling"})";
    for (const std::string raw : {
             "```json\n" + body + "\n```",
             "```\n" + body + "\n```",
             "Sure, here you go:\n" + body,
             body + "\nHope that helps!",
             "Answer: " + body + " (let me know)",
         }) {
        CAPTURE(raw);
        ParsedJson out = parse_structured(raw);
        CHECK(out.status == ParseStatus::repaired);
        CHECK(out.object == json::parse(body));
    }
}

TEST_CASE("parse_structured ignores braces inside string literals") {
    ParsedJson out = parse_structured(R"({"a": "right } brace", "b": "quote \" and {"})");
    CHECK(out.status == ParseStatus::clean);
    CHECK(out.object["a"] == "right } brace");

    // a second object after the first is trailing prose
    out = parse_structured(R"({"first": 1} {"second": 2})");
    CHECK(out.status == ParseStatus::repaired);
    CHECK(out.object == json::parse(R"({"first": 1})"));
}

TEST_CASE("parse_structured failure kinds") {
    CHECK(error_kind([] { parse_structured("no structured answer at all"); }) == "NoJsonFound");
    CHECK(error_kind([] { parse_structured(""); }) == "NoJsonFound");
    CHECK(error_kind([] { parse_structured(R"({"open": {"inner": 1})"); }) ==
          "UnbalancedBraces");
    CHECK(error_kind([] { parse_structured(R"({"open": "never closed)"); }) ==
          "UnbalancedBraces");
    CHECK(error_kind([] { parse_structured("{not json}") ; }) == "ParseError");

    try {
        parse_structured("xx {bad}");
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.kind() == "ParseError");
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
}

TEST_CASE("parse_structured round-trips 1000 fuzzed objects") {
    std::mt19937_64 rng(2024);
    const char* prefixes[] = {"", "```json\n", "Sure thing:\n", "Reply: ", "\n\n"};
    const char* suffixes[] = {"", "\n```", "\nAnything else?", " {trailing", "\n"};
    for (int i = 0; i < 1000; ++i) {
        const json obj = random_object(rng, 2);
        const std::string dumped = obj.dump();
        const std::string prefix = prefixes[rng() % 5];
        const std::string suffix = suffixes[rng() % 5];
        const std::string raw = prefix + dumped + suffix;
        CAPTURE(raw);
        ParsedJson out = parse_structured(raw);
        CHECK(out.object == obj);
        auto whitespace_only = [](const std::string& s) {
            return s.find_first_not_of(" \t\r\n") == std::string::npos;
        };
        const ParseStatus expected = (whitespace_only(prefix) && whitespace_only(suffix))
                                         ? ParseStatus::clean
                                         : ParseStatus::repaired;
        CHECK(out.status == expected);
    }
}

TEST_CASE("inference settings guard rails") {
    InferenceSettings s;
    CHECK(s.temperature == doctest::Approx(0.01));
    CHECK(s.max_tokens == 1024);
    CHECK_NOTHROW(s.check());

    s.temperature = -0.1;
    CHECK(error_kind([&] { s.check(); }) == "InvalidConfig");
    s.temperature = 0.5;
    s.max_tokens = 0;
    CHECK(error_kind([&] { s.check(); }) == "InvalidConfig");
}

TEST_CASE("mock extractor reproduces the canonical gold entities") {
    Registry registry;
    DeskDataset desk = load_desk_dataset(std::string(AUTOQUERY_DATA_DIR) + "/desk", registry);
    for (const DatasetSample& s : desk.canonical) {
        if (s.tool == Tool::others) continue;
        CAPTURE(s.query);
        EntityMap got = mock_extract(s.query, s.tool, registry);
        CHECK(got == s.gold);
    }
}

TEST_CASE("mock extractor agrees with every bundled few-shot exemplar") {
    Registry registry;
    PromptPool pool = PromptPool::bundled(registry);
    for (const PromptTemplate* tmpl : pool.templates()) {
        for (const FewshotExample& fs : tmpl->fewshot) {
            CAPTURE(fs.query);
            EntityMap got = mock_extract(fs.query, tmpl->tool, registry);
            CHECK(got == fs.entities);
        }
    }
}

TEST_CASE("mock extractor worked examples") {
    Registry registry;
    const std::string query = "Replace brake pads for my Toyota Corolla 2015.";

    EntityMap repair = mock_extract(query, Tool::repair_to_parts, registry);
    CHECK(repair.to_json().dump() ==
          R"({"make":"Toyota","model":"Corolla","year":2015,)"
          R"("labor_action":"replace","component":"brake pads"})");

    // the same sentence under techdoc reads as a how-to
    EntityMap techdoc = mock_extract("How to " + query, Tool::techdoc, registry);
    CHECK(*techdoc.find("query_type") == EntityValue{std::string("procedure")});
    CHECK(*techdoc.find("component") == EntityValue{std::string("brake pads")});
    CHECK(is_null(*techdoc.find("system")));

    // nothing recognizable: every schema field present, every value null
    EntityMap blank = mock_extract("hello", Tool::tsb, registry);
    CHECK(blank.keys() == std::vector<std::string>{"make", "model", "year", "issue"});
    for (const auto& [name, value] : blank) CHECK(is_null(value));

    CHECK(mock_extract("anything at all", Tool::others, registry).empty());
}

TEST_CASE("mock extractor field rules") {
    Registry registry;
    auto field = [&](const std::string& query, Tool tool, const char* name) {
        return mock_extract(query, tool, registry).to_json()[name];
    };

    SUBCASE("year bounds and lookalikes") {
        CHECK(field("running rough since 1950", Tool::tsb, "year") == 1950);
        CHECK(field("a 1949 pickup", Tool::tsb, "year").is_null());
        CHECK(field("my 2036 concept car", Tool::tsb, "year").is_null());
        // part codes and mileage groups are not years
        CHECK(field("PNC 04465-33471 quote", Tool::parts_catalog, "year").is_null());
        CHECK(field("at 30,000 miles", Tool::nhtsa, "year").is_null());
    }

    SUBCASE("model needs a make or a year to anchor to") {
        json got = mock_extract("Brake pads for a Ram 1500.", Tool::parts_catalog,
                                registry).to_json();
        CHECK(got["make"] == "Ram");
        CHECK(got["model"] == "1500");  // gazetteer hit right after the make
        CHECK(got["year"].is_null());   // 1500 is a trim level, not a year
        CHECK(field("TSB for the 2019 Grand Cherokee?", Tool::tsb, "model") ==
              "Grand Cherokee");
        CHECK(field("my corolla rattles", Tool::tsb, "model").is_null());
    }

    SUBCASE("mileage keeps the unit as written") {
        CHECK(field("stalling at 85,000 miles", Tool::nhtsa, "mileage") == "85,000 miles");
        CHECK(field("noise after 120000 km", Tool::nhtsa, "mileage") == "120000 km");
        CHECK(field("the 30,000-mile service", Tool::nhtsa, "mileage").is_null());
    }

    SUBCASE("interval services vs named services") {
        json interval = mock_extract("Parts for the 60,000-mile service?",
                                     Tool::service_to_parts, registry).to_json();
        CHECK(interval["service_name"] == "60,000-mile service");
        CHECK(interval["service_type"] == "scheduled");
        CHECK(interval["service_unit"] == "miles");

        json monthly = mock_extract("What goes into the 6-month maintenance?",
                                    Tool::service_to_parts, registry).to_json();
        CHECK(monthly["service_name"] == "6-month maintenance");
        CHECK(monthly["service_unit"] == "months");

        json named = mock_extract("Everything for an oil change on a 2015 Civic?",
                                  Tool::service_to_parts, registry).to_json();
        CHECK(named["service_name"] == "oil change");
        CHECK(named["service_type"].is_null());
        CHECK(named["service_unit"].is_null());
    }

    SUBCASE("warranty and pnc") {
        CHECK(field("Is the alternator under warranty?", Tool::parts_catalog, "warranty") ==
              "yes");
        CHECK(field("Is the alternator pricey?", Tool::parts_catalog, "warranty").is_null());
        CHECK(field("brake pad set with PNC 04465-33471", Tool::parts_catalog, "pnc") ==
              "04465-33471");
        CHECK(field("part number for pads", Tool::parts_catalog, "pnc").is_null());
    }

    SUBCASE("labor verbs map inflections to base form") {
        CHECK(field("Replacing the struts on my Golf", Tool::repair_to_parts,
                    "labor_action") == "replace");
        CHECK(field("parts for changing brake pads", Tool::repair_to_parts,
                    "labor_action") == "change");
        CHECK(field("I admired the struts", Tool::repair_to_parts, "labor_action").is_null());
    }

    SUBCASE("deterministic across calls") {
        const std::string q = "Any TSB for AC compressor noise on a Mazda CX-9?";
        CHECK(mock_extract(q, Tool::tsb, registry) == mock_extract(q, Tool::tsb, registry));
    }
}

TEST_CASE("extract_entities round-trips canonical queries through the mock backend") {
    Registry registry;
    PromptPool pool = PromptPool::bundled(registry);
    DeskDataset desk = load_desk_dataset(std::string(AUTOQUERY_DATA_DIR) + "/desk", registry);
    MockBackend backend(pool, registry);

    std::size_t expected_served = 0;
    for (const DatasetSample& s : desk.canonical) {
        if (s.tool == Tool::others) continue;
        CAPTURE(s.query);
        ExtractionResult out = extract_entities(s.query, s.tool, pool, registry, backend);
        CHECK(out.tool == s.tool);
        CHECK(out.status == ParseStatus::clean);
        CHECK(out.entities == s.gold);
        CHECK(out.violations.empty());
        CHECK(!out.error.has_value());
        CHECK(!out.raw_text.empty());
        // exactly one backend request per extraction
        CHECK(backend.requests_served() == ++expected_served);
    }

    // `others` has no prompt; routing short-circuits before extraction
    CHECK(error_kind([&] {
              extract_entities("whatever", Tool::others, pool, registry, backend);
          }) == "NoPromptForOthers");
    CHECK(backend.requests_served() == expected_served);
}

TEST_CASE("decorated mock replies are deterministic per prompt and seed") {
    Registry registry;
    PromptPool pool = PromptPool::bundled(registry);
    const PromptTemplate& tsb = pool.select(Tool::tsb);

    MockBackend a(pool, registry, 7);
    MockBackend b(pool, registry, 7);
    MockBackend c(pool, registry, 8);
    a.set_decorate_responses(true);
    b.set_decorate_responses(true);
    c.set_decorate_responses(true);

    bool any_decorated = false;
    bool any_seed_difference = false;
    DeskDataset desk = load_desk_dataset(std::string(AUTOQUERY_DATA_DIR) + "/desk", registry);
    for (const DatasetSample& s : desk.canonical) {
        ChatRequest req{render(tsb, s.query), {}, "t"};
        const std::string first = a.send(req);
        CHECK(first == a.send(req));   // same backend, same prompt
        CHECK(first == b.send(req));   // same seed elsewhere
        if (first != c.send(req)) any_seed_difference = true;
        if (first.front() != '{') any_decorated = true;

        // decoration never changes the parsed payload
        ExtractionResult out = extract_entities(s.query, Tool::tsb, pool, registry, a);
        CHECK((out.status == ParseStatus::clean || out.status == ParseStatus::repaired));
        CHECK(out.entities == mock_extract(s.query, Tool::tsb, registry));
    }
    CHECK(any_decorated);
    CHECK(any_seed_difference);
}

TEST_CASE("mock backend answers composite prompts via the classifier") {
    Registry registry;
    PromptPool pool = PromptPool::bundled(registry);

    MockBackend bare(pool, registry);
    CHECK(error_kind([&] {
              bare.send({composite_prompt(pool, registry, "Any TSB for stalling?"), {}, "c"});
          }) == "NoClassifier");
    CHECK(error_kind([&] { bare.send({"freeform prompt", {}, "x"}); }) == "UnknownPrompt");

    // tiny two-class model is enough to drive the composite reply shape
    std::vector<LabeledExample> mini;
    for (int i = 0; i < 4; ++i) {
        mini.push_back({"tsb bulletin lookup number " + std::to_string(i), Tool::tsb});
        mini.push_back({"idle chatter about weekend plans " + std::to_string(i), Tool::others});
    }
    auto model = std::make_shared<ClassifierModel>(train(mini, TrainConfig{}));
    MockBackend backend(pool, registry);
    backend.set_classifier(model);

    const std::string reply =
        backend.send({composite_prompt(pool, registry, "tsb bulletin lookup please"), {}, "c"});
    const json parsed = json::parse(reply);
    REQUIRE(parsed.contains("tool_category"));
    REQUIRE(parsed.contains("entities"));
    CHECK(tool_from_id(parsed["tool_category"].get<std::string>()).has_value());
    CHECK(parsed["entities"].is_object());
    CHECK(reply == backend.send({composite_prompt(pool, registry,
                                                  "tsb bulletin lookup please"), {}, "c"}));
}

TEST_CASE("extract_entities degrades on bad replies instead of throwing") {
    Registry registry;
    PromptPool pool = PromptPool::bundled(registry);

    SUBCASE("reply with no JSON") {
        ScriptedBackend backend("I could not find anything useful.");
        ExtractionResult out = extract_entities("q", Tool::tsb, pool, registry, backend);
        CHECK(out.status == ParseStatus::failed);
        CHECK(out.entities.empty());
        REQUIRE(out.error.has_value());
        CHECK(out.error->find("NoJsonFound") != std::string::npos);
        CHECK(backend.calls == 1);
    }

    SUBCASE("reply violating the schema") {
        ScriptedBackend backend(R"({"make": 3, "model": null, "year": null, "issue": null})");
        ExtractionResult out = extract_entities("q", Tool::tsb, pool, registry, backend);
        CHECK(out.status == ParseStatus::failed);
        CHECK(out.entities.empty());
        CHECK(!out.violations.empty());
        REQUIRE(out.error.has_value());
        CHECK(out.error->find("SchemaViolation") != std::string::npos);
    }

    SUBCASE("fenced but valid reply is repaired, not failed") {
        ScriptedBackend backend(
            "```json\n{\"make\": \"Kia\", \"model\": null, \"year\": null, "
            "\"issue\": null}\n```");
        ExtractionResult out = extract_entities("q", Tool::tsb, pool, registry, backend);
        CHECK(out.status == ParseStatus::repaired);
        CHECK(*out.entities.find("make") == EntityValue{std::string("Kia")});
    }

    SUBCASE("backend delivery errors propagate") {
        ThrowingBackend backend;
        CHECK(error_kind([&] {
                  extract_entities("q", Tool::tsb, pool, registry, backend);
              }) == "Transport");
    }
}

TEST_CASE("http backend retries 5xx, honors the wire format, never retries 4xx") {
    struct Stub {
        httplib::Server server;
        std::thread thread;
        int port = 0;
        ~Stub() {
            server.stop();
            if (thread.joinable()) thread.join();
        }
        void start() {
            port = server.bind_to_any_port("127.0.0.1");
            REQUIRE(port > 0);
            thread = std::thread([this] { server.listen_after_bind(); });
            server.wait_until_ready();
        }
        HttpEndpointConfig endpoint() const {
            HttpEndpointConfig cfg;
            cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
            cfg.model = "stub-model";
            cfg.backoff_ms = 5;
            return cfg;
        }
    };

    SUBCASE("two 500s then success") {
        Stub stub;
        std::atomic<int> hits{0};
        json seen_body;
        std::string seen_auth;
        stub.server.Post("/v1/chat/completions",
                         [&](const httplib::Request& req, httplib::Response& res) {
                             const int n = ++hits;
                             if (n <= 2) {
                                 res.status = 500;
                                 res.set_content("overloaded", "text/plain");
                                 return;
                             }
                             seen_body = json::parse(req.body);
                             seen_auth = req.get_header_value("Authorization");
                             res.set_content(
                                 json{{"choices",
                                       json::array({{{"message", {{"role", "assistant"},
                                                                  {"content", "pong"}}}}})}}
                                     .dump(),
                                 "application/json");
                         });
        stub.start();

        HttpEndpointConfig cfg = stub.endpoint();
        cfg.api_key = "sekrit";
        ChatRequest request{"ping prompt", {}, "req-1"};
        CHECK(http_backend_send(cfg, request) == "pong");
        CHECK(hits == 3);
        CHECK(seen_body["model"] == "stub-model");
        CHECK(seen_body["messages"][0]["role"] == "user");
        CHECK(seen_body["messages"][0]["content"] == "ping prompt");
        CHECK(seen_body["temperature"] == doctest::Approx(0.01));
        CHECK(seen_body["max_tokens"] == 1024);
        CHECK(seen_auth == "Bearer sekrit");
    }

    SUBCASE("4xx is terminal on the first attempt") {
        Stub stub;
        std::atomic<int> hits{0};
        stub.server.Post("/v1/chat/completions",
                         [&](const httplib::Request&, httplib::Response& res) {
                             ++hits;
                             res.status = 401;
                             res.set_content("{\"error\": \"bad key\"}", "application/json");
                         });
        stub.start();

        try {
            http_backend_send(stub.endpoint(), {"p", {}, "r"});
            FAIL("expected HttpStatus");
        } catch (const Error& e) {
            CHECK(e.kind() == "HttpStatus");
            CHECK(std::string(e.what()).find("401") != std::string::npos);
        }
        CHECK(hits == 1);
    }

    SUBCASE("persistent 5xx exhausts retries") {
        Stub stub;
        std::atomic<int> hits{0};
        stub.server.Post("/v1/chat/completions",
                         [&](const httplib::Request&, httplib::Response& res) {
                             ++hits;
                             res.status = 503;
                         });
        stub.start();

        HttpEndpointConfig cfg = stub.endpoint();
        cfg.max_retries = 3;
        try {
            http_backend_send(cfg, {"p", {}, "r"});
            FAIL("expected HttpStatus");
        } catch (const Error& e) {
            CHECK(e.kind() == "HttpStatus");
            CHECK(std::string(e.what()).find("4 attempts") != std::string::npos);
        }
        CHECK(hits == 4);
    }

    SUBCASE("malformed success body") {
        Stub stub;
        stub.server.Post("/v1/chat/completions",
                         [&](const httplib::Request&, httplib::Response& res) {
                             res.set_content("{\"nope\": true}", "application/json");
                         });
        stub.start();
        CHECK(error_kind([&] { http_backend_send(stub.endpoint(), {"p", {}, "r"}); }) ==
              "MalformedResponse");
    }

    SUBCASE("slow server surfaces as a timeout") {
        Stub stub;
        stub.server.Post("/v1/chat/completions",
                         [&](const httplib::Request&, httplib::Response& res) {
                             std::this_thread::sleep_for(std::chrono::milliseconds(400));
                             res.set_content("late", "text/plain");
                         });
        stub.start();

        HttpEndpointConfig cfg = stub.endpoint();
        cfg.timeout_ms = 50;
        cfg.max_retries = 0;
        CHECK(error_kind([&] { http_backend_send(cfg, {"p", {}, "r"}); }) == "Timeout");
    }

    SUBCASE("nothing listening is a transport error") {
        HttpEndpointConfig cfg;
        cfg.base_url = "http://127.0.0.1:9";  // discard port, nothing there
        cfg.max_retries = 0;
        cfg.backoff_ms = 1;
        cfg.timeout_ms = 200;
        const std::string kind =
            error_kind([&] { http_backend_send(cfg, {"p", {}, "r"}); });
        CHECK((kind == "Transport" || kind == "Timeout"));
    }
}

}  // TEST_SUITE
