#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "autoquery/data_paths.hpp"
#include "autoquery/datagen.hpp"
#include "autoquery/errors.hpp"
#include "autoquery/text.hpp"

using namespace autoquery;

namespace {

std::string error_kind(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return std::string(e.kind());
    }
    return "";
}

SeedSample make_seed(std::string query, Tool tool, nlohmann::json entities,
                     std::optional<std::string> reasoning = std::nullopt) {
    Registry registry;
    SeedSample seed;
    seed.query = std::move(query);
    seed.tool = tool;
    seed.raw_entities = entities;
    seed.gold = registry.validate_entities(tool, entities).entities;
    seed.reasoning = std::move(reasoning);
    return seed;
}

std::vector<SeedSample> desk_seeds() {
    Registry registry;
    static const DeskDataset desk =
        load_desk_dataset(std::string(AUTOQUERY_DATA_DIR) + "/desk", registry);
    return desk.train;
}

GeneratedSample make_generated(std::string query, Tool tool = Tool::tsb) {
    GeneratedSample sample;
    sample.query = std::move(query);
    sample.tool = tool;
    return sample;
}

}  // namespace

TEST_SUITE_BEGIN("datagen");

TEST_CASE("generation prompt embeds the seeds and the requested count") {
    std::vector<SeedSample> seeds = {
        make_seed("TSB for a 2016 Honda Civic with stalling.", Tool::tsb,
                  {{"make", "Honda"}, {"model", "Civic"}, {"year", 2016}, {"issue", "stalling"}},
                  "bulletin lookup")};

    const std::string prompt = build_generation_prompt(seeds, Tool::tsb, 5);
    CHECK(prompt.find("TSB for a 2016 Honda Civic with stalling.") != std::string::npos);
    CHECK(prompt.find("5 new samples") != std::string::npos);
    CHECK(prompt.find("tsb") != std::string::npos);
    CHECK(prompt.find("bulletin lookup") != std::string::npos);
    // schema keys surfaced so the model knows the entity shape
    CHECK(prompt.find("make, model, year, issue") != std::string::npos);

    CHECK(build_generation_prompt(seeds, Tool::tsb, 5) == prompt);

    SUBCASE("others seeds describe an empty entity object") {
        std::vector<SeedSample> chatter = {make_seed("hello there", Tool::others, {})};
        const std::string p = build_generation_prompt(chatter, Tool::others, 2);
        CHECK(p.find("entities object stays empty") != std::string::npos);
    }
}

TEST_CASE("generation prompt rejects empty or mixed seed lists") {
    CHECK(error_kind([] { build_generation_prompt({}, Tool::tsb, 3); }) == "EmptySeeds");

    std::vector<SeedSample> mixed = {
        make_seed("TSB for a Civic.", Tool::tsb, {{"make", "Honda"}, {"model", "Civic"}}),
        make_seed("hello", Tool::others, {})};
    CHECK(error_kind([&] { build_generation_prompt(mixed, Tool::tsb, 3); }) == "MixedSeeds");
}

TEST_CASE("mock generation meets requested counts with pending provenance-stamped samples") {
    Registry registry;
    std::vector<SeedSample> seeds = desk_seeds();
    GenerationMockBackend backend;

    GenerationConfig config;
    config.generator_id = "paraphrase-mock-v1";
    config.timestamp = "2024-05-01T12:00:00Z";

    std::map<Tool, std::size_t> counts = {
        {Tool::tsb, 6}, {Tool::parts_catalog, 4}, {Tool::others, 3}};
    GenerationResult result = generate(backend, seeds, counts, registry, config);

    REQUIRE(result.samples.size() == 13);
    REQUIRE(result.log.size() == 3);
    for (const auto& row : result.log) {
        CHECK(row.kept == row.requested);
        CHECK(row.dropped_malformed == 0);
        CHECK(row.dropped_invalid == 0);
        CHECK(row.dropped_duplicate == 0);
        CHECK(!row.error.has_value());
    }

    // merged output follows tool registry order, tsb before parts before others
    CHECK(result.samples.front().tool == Tool::tsb);
    CHECK(result.samples.back().tool == Tool::others);
    std::size_t tsb_count = 0;
    for (const auto& sample : result.samples) {
        CHECK(sample.review_status == ReviewStatus::pending);
        CHECK(sample.provenance.generator == "paraphrase-mock-v1");
        CHECK(sample.provenance.timestamp == "2024-05-01T12:00:00Z");
        CHECK(!sample.provenance.seed_indices.empty());
        CHECK(registry.validate_entities(sample.tool, sample.entities.to_json()).ok());
        if (sample.tool == Tool::tsb) ++tsb_count;
        for (std::size_t idx : sample.provenance.seed_indices) {
            REQUIRE(idx < seeds.size());
            CHECK(seeds[idx].tool == sample.tool);
        }
    }
    CHECK(tsb_count == 6);

    SUBCASE("a fixed config reproduces the run byte for byte") {
        GenerationResult again = generate(backend, seeds, counts, registry, config);
        REQUIRE(again.samples.size() == result.samples.size());
        for (std::size_t i = 0; i < result.samples.size(); ++i)
            CHECK(generated_to_json(again.samples[i]) == generated_to_json(result.samples[i]));
    }

    SUBCASE("a different prompt-selection seed can pick different seed samples") {
        GenerationConfig other = config;
        other.seed = 99;
        GenerationResult shifted = generate(backend, seeds, counts, registry, other);
        CHECK(shifted.samples.size() == result.samples.size());
        // still deterministic under the new seed
        GenerationResult shifted_again = generate(backend, seeds, counts, registry, other);
        for (std::size_t i = 0; i < shifted.samples.size(); ++i)
            CHECK(generated_to_json(shifted_again.samples[i]) ==
                  generated_to_json(shifted.samples[i]));
    }
}

TEST_CASE("malformed reply lines are dropped and counted, never kept") {
    Registry registry;
    GenerationMockBackend backend;
    backend.set_malformed_every(3);  // every third line is garbage

    GenerationResult result =
        generate(backend, desk_seeds(), {{Tool::nhtsa, 9}}, registry, {});
    REQUIRE(result.log.size() == 1);
    const GenerationLog& row = result.log.front();
    CHECK(row.requested == 9);
    CHECK(row.dropped_malformed == 3);
    CHECK(row.kept == 6);
    CHECK(result.samples.size() == 6);
    for (const auto& sample : result.samples)
        CHECK(registry.validate_entities(sample.tool, sample.entities.to_json()).ok());
}

TEST_CASE("duplicate replies undershoot the request with the drops reported") {
    Registry registry;
    GenerationMockBackend backend;
    backend.set_repeat_first(true);  // every line repeats the first paraphrase

    GenerationResult result =
        generate(backend, desk_seeds(), {{Tool::techdoc, 5}}, registry, {});
    REQUIRE(result.log.size() == 1);
    CHECK(result.log.front().kept == 1);
    CHECK(result.log.front().dropped_duplicate == 4);
    CHECK(result.samples.size() == 1);
}

TEST_CASE("per-tool failures keep the other tools' results") {
    Registry registry;
    std::vector<SeedSample> seeds = desk_seeds();
    // strip every smart_insights seed so that tool has nothing to prompt with
    std::erase_if(seeds, [](const SeedSample& s) { return s.tool == Tool::smart_insights; });

    GenerationMockBackend backend;
    GenerationResult result = generate(
        backend, seeds, {{Tool::tsb, 3}, {Tool::smart_insights, 3}}, registry, {});

    REQUIRE(result.log.size() == 2);
    CHECK(result.log[0].tool == Tool::tsb);
    CHECK(result.log[0].kept == 3);
    CHECK(!result.log[0].error.has_value());
    CHECK(result.log[1].tool == Tool::smart_insights);
    CHECK(result.log[1].kept == 0);
    REQUIRE(result.log[1].error.has_value());
    CHECK(result.log[1].error->find("EmptySeeds") != std::string::npos);
    CHECK(result.samples.size() == 3);
}

TEST_CASE("a backend that cannot answer generation prompts fails per tool, not globally") {
    Registry registry;
    struct Refusing : ChatBackend {
        std::string send(const ChatRequest&) override {
            throw Error("Timeout", "no reply within deadline");
        }
    } backend;

    GenerationResult result = generate(
        backend, desk_seeds(), {{Tool::tsb, 2}, {Tool::repair_to_parts, 2}}, registry, {});
    REQUIRE(result.log.size() == 2);
    for (const auto& row : result.log) {
        CHECK(row.kept == 0);
        REQUIRE(row.error.has_value());
        CHECK(row.error->find("Timeout") != std::string::npos);
    }
    CHECK(result.samples.empty());
}

TEST_CASE("zero requested samples produce an empty result") {
    Registry registry;
    GenerationMockBackend backend;
    GenerationResult result = generate(backend, desk_seeds(), {}, registry, {});
    CHECK(result.samples.empty());
    CHECK(result.log.empty());

    GenerationResult zeros =
        generate(backend, desk_seeds(), {{Tool::tsb, 0}, {Tool::nhtsa, 0}}, registry, {});
    CHECK(zeros.samples.empty());
    CHECK(zeros.log.empty());
}

TEST_CASE("dedup keys on the normalized query") {
    std::vector<GeneratedSample> samples = {
        make_generated("Brake pads for a 2019 Camry"),
        make_generated("  brake pads for a 2019 CAMRY!! "),
        make_generated("Brake pads, for a 2019 Camry."),
        make_generated("Rotors for a 2019 Camry")};

    std::vector<GeneratedSample> kept = dedup(samples);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].query == "Brake pads for a 2019 Camry");
    CHECK(kept[1].query == "Rotors for a 2019 Camry");

    SUBCASE("seed collisions are removed too") {
        std::vector<SeedSample> seeds = {
            make_seed("ROTORS for a 2019 Camry?", Tool::parts_catalog,
                      {{"model", "Camry"}, {"year", 2019}, {"component", "rotors"}})};
        std::vector<GeneratedSample> vs_seed = dedup(samples, seeds);
        REQUIRE(vs_seed.size() == 1);
        CHECK(vs_seed[0].query == "Brake pads for a 2019 Camry");
    }

    SUBCASE("idempotent") {
        std::vector<GeneratedSample> once = dedup(samples);
        std::vector<GeneratedSample> twice = dedup(once);
        REQUIRE(twice.size() == once.size());
        for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i].query == once[i].query);
    }

    SUBCASE("distinct queries all survive") {
        std::vector<GeneratedSample> distinct;
        for (int i = 0; i < 100; ++i)
            distinct.push_back(make_generated("query number " + std::to_string(i)));
        CHECK(dedup(distinct).size() == 100);
    }
}

TEST_CASE("generated samples round-trip through JSONL") {
    Registry registry;
    GenerationMockBackend backend;
    GenerationConfig config;
    config.generator_id = "roundtrip-mock";
    config.timestamp = "2024-06-15T08:30:00Z";

    GenerationResult result = generate(
        backend, desk_seeds(), {{Tool::service_to_parts, 4}, {Tool::others, 2}}, registry,
        config);
    REQUIRE(result.samples.size() == 6);
    result.samples[0].review_status = ReviewStatus::approved;
    result.samples[1].review_status = ReviewStatus::rejected;

    const std::filesystem::path path =
        std::filesystem::temp_directory_path() / "autoquery_generated_roundtrip.jsonl";
    save_generated_jsonl(result.samples, path);
    std::vector<GeneratedSample> loaded = load_generated_jsonl(path, registry);
    std::filesystem::remove(path);

    REQUIRE(loaded.size() == result.samples.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].query == result.samples[i].query);
        CHECK(loaded[i].tool == result.samples[i].tool);
        CHECK(loaded[i].entities == result.samples[i].entities);
        CHECK(loaded[i].reasoning == result.samples[i].reasoning);
        CHECK(loaded[i].review_status == result.samples[i].review_status);
        CHECK(loaded[i].provenance == result.samples[i].provenance);
    }
}

TEST_CASE("loading rejects malformed generated rows with file and line") {
    Registry registry;
    const std::filesystem::path path =
        std::filesystem::temp_directory_path() / "autoquery_generated_bad.jsonl";

    SUBCASE("broken JSON") {
        {
            std::ofstream out(path);
            out << R"({"query": "ok", "tool_category": "others", "entities": {}})" << "\n";
            out << "{ not json\n";
        }
        try {
            load_generated_jsonl(path, registry);
            FAIL("expected MalformedSample");
        } catch (const Error& e) {
            CHECK(std::string(e.kind()) == "MalformedSample");
            CHECK(std::string(e.what()).find(":2") != std::string::npos);
        }
    }

    SUBCASE("unknown review status") {
        {
            std::ofstream out(path);
            out << R"({"query": "ok", "tool_category": "others", "entities": {}, "review_status": "maybe"})"
                << "\n";
        }
        CHECK(error_kind([&] { load_generated_jsonl(path, registry); }) == "MalformedSample");
    }

    SUBCASE("entities that break the schema") {
        {
            std::ofstream out(path);
            out << R"({"query": "ok", "tool_category": "tsb", "entities": {"year": "soon"}})"
                << "\n";
        }
        CHECK(error_kind([&] { load_generated_jsonl(path, registry); }) == "MalformedSample");
    }

    std::filesystem::remove(path);
}

TEST_CASE("review status names round-trip") {
    for (ReviewStatus status :
         {ReviewStatus::pending, ReviewStatus::approved, ReviewStatus::rejected}) {
        auto parsed = review_status_from_name(review_status_name(status));
        REQUIRE(parsed.has_value());
        CHECK(*parsed == status);
    }
    CHECK(!review_status_from_name("unknown").has_value());
}

TEST_SUITE_END();
