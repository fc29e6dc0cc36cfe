#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <autoquery/dataset.hpp>
#include <autoquery/errors.hpp>
#include <autoquery/prompts.hpp>

using namespace autoquery;

namespace {

std::string pool_dir() { return std::string(AUTOQUERY_DATA_DIR) + "/prompts"; }

struct ScratchPool {
    std::filesystem::path dir;
    ScratchPool() {
        static int counter = 0;
        dir = std::filesystem::temp_directory_path() /
              ("autoquery-pool-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(dir);
        for (const auto& entry : std::filesystem::directory_iterator(pool_dir()))
            std::filesystem::copy_file(entry.path(), dir / entry.path().filename());
    }
    ~ScratchPool() {
        std::error_code ec;
        std::filesystem::remove_all(dir, ec);
    }
    void write(const std::string& name, const std::string& content) {
        std::ofstream out(dir / name, std::ios::trunc);
        out << content;
    }
};

}  // namespace

TEST_SUITE("prompts") {

TEST_CASE("bundled pool is complete over the seven entity-bearing tools") {
    Registry registry;
    PromptPool pool = PromptPool::bundled(registry);
    for (Tool tool : all_tools()) {
        if (tool == Tool::others) {
            CHECK_THROWS_WITH_AS(pool.select(tool), doctest::Contains("skips extraction"), Error);
            continue;
        }
        const PromptTemplate& tmpl = pool.select(tool);
        CHECK(tmpl.tool == tool);
        CHECK(tmpl.fewshot.size() == 2);
        // Exemplar entities come back normalized: all schema fields present.
        for (const auto& example : tmpl.fewshot)
            CHECK(example.entities.size() == registry.schema_for(tool).fields.size());
    }
    CHECK(pool.has_composite());
    CHECK(pool.templates().size() == 7);
}

TEST_CASE("render splices the query into the placeholder exactly once") {
    PromptTemplate tmpl;
    tmpl.text = "Intro text.\nQ: {{query}}\nA:";
    CHECK(render(tmpl, "hi") == "Intro text.\nQ: hi\nA:");

    SUBCASE("braces in the query are inserted verbatim, no re-expansion") {
        std::string tricky = "what does {{query}} mean in {json}?";
        std::string out = render(tmpl, tricky);
        CHECK(out == "Intro text.\nQ: " + tricky + "\nA:");
    }
    SUBCASE("empty query is rejected") {
        CHECK_THROWS_AS(render(tmpl, "   "), Error);
    }
}

TEST_CASE("render is length-additive over the bundled pool") {
    Registry registry;
    PromptPool pool = PromptPool::bundled(registry);
    const std::vector<std::string> queries = {
        "Replace brake pads for my Toyota Corolla 2015.",
        "q",
        "a query that is quite a bit longer than the placeholder it replaces",
    };
    for (const PromptTemplate* tmpl : pool.templates()) {
        for (const auto& query : queries) {
            std::string out = render(*tmpl, query);
            CHECK(out.size() ==
                  tmpl->text.size() - std::string(kQueryPlaceholder).size() + query.size());
        }
    }
}

TEST_CASE("selecting from an incomplete pool names the missing tool") {
    ScratchPool scratch;
    std::filesystem::remove(scratch.dir / "tsb.prompt");
    Registry registry;
    PromptPool pool = PromptPool::from_directory(scratch.dir.string(), registry);
    CHECK_FALSE(pool.has(Tool::tsb));
    CHECK_THROWS_WITH_AS(pool.select(Tool::tsb), doctest::Contains("no template for tsb"), Error);
    CHECK_NOTHROW(pool.select(Tool::nhtsa));
}

TEST_CASE("composite prompt mentions every tool id and is deterministic") {
    Registry registry;
    PromptPool pool = PromptPool::bundled(registry);
    std::string text = composite_prompt(pool, registry, "any query");
    for (Tool tool : all_tools())
        CHECK(text.find("- " + std::string(tool_id(tool)) + ":") != std::string::npos);
    CHECK(text.find("any query") != std::string::npos);
    CHECK(text == composite_prompt(pool, registry, "any query"));
    // The worked example of the single-step output shape is present for others.
    CHECK(text.find(R"("tool_category":"others","entities":{}})") != std::string::npos);
}

TEST_CASE("composite prompt strictly dominates per-tool prompts on the probe set") {
    Registry registry;
    PromptPool pool = PromptPool::bundled(registry);
    DeskDataset data = load_desk_dataset();
    auto probes = probe_queries(data);
    REQUIRE(probes.size() == 50);
    for (const auto& query : probes) {
        std::size_t composite_tokens = token_count(composite_prompt(pool, registry, query));
        for (const PromptTemplate* tmpl : pool.templates())
            CHECK(token_count(render(*tmpl, query)) < composite_tokens);
    }
}

TEST_CASE("token_count counts whitespace-delimited tokens") {
    CHECK(token_count("") == 0);
    CHECK(token_count("a b  c") == 3);
    CHECK(token_count("  leading and trailing  ") == 3);
    CHECK(token_count("line\nbreaks\tcount too") == 4);
}

TEST_CASE("malformed template files are rejected at load") {
    Registry registry;
    SUBCASE("missing front-matter divider") {
        ScratchPool scratch;
        scratch.write("tsb.prompt", "{\"tool\": \"tsb\", \"fewshot\": []}\nno divider {{query}}");
        CHECK_THROWS_WITH_AS(PromptPool::from_directory(scratch.dir.string(), registry),
                             doctest::Contains("front-matter divider"), Error);
    }
    SUBCASE("front matter tool does not match filename") {
        ScratchPool scratch;
        scratch.write("tsb.prompt",
                      "{\"tool\": \"nhtsa\", \"fewshot\": [{\"query\": \"q\"}]}\n---\n"
                      "{{examples}}\n{{query}}\n");
        CHECK_THROWS_WITH_AS(PromptPool::from_directory(scratch.dir.string(), registry),
                             doctest::Contains("filename implies"), Error);
    }
    SUBCASE("fewshot entities must fit the schema") {
        ScratchPool scratch;
        scratch.write("tsb.prompt",
                      "{\"tool\": \"tsb\", \"fewshot\": [{\"query\": \"q\", "
                      "\"entities\": {\"mileage\": \"40k\"}}]}\n---\n{{examples}}\n{{query}}\n");
        CHECK_THROWS_WITH_AS(PromptPool::from_directory(scratch.dir.string(), registry),
                             doctest::Contains("do not fit the tsb schema"), Error);
    }
    SUBCASE("query placeholder must appear exactly once") {
        ScratchPool scratch;
        scratch.write("tsb.prompt",
                      "{\"tool\": \"tsb\", \"fewshot\": [{\"query\": \"q\"}]}\n---\n"
                      "{{examples}}\n{{query}} and again {{query}}\n");
        CHECK_THROWS_WITH_AS(PromptPool::from_directory(scratch.dir.string(), registry),
                             doctest::Contains("{{query}} exactly once"), Error);
    }
    SUBCASE("examples placeholder is required") {
        ScratchPool scratch;
        scratch.write("tsb.prompt",
                      "{\"tool\": \"tsb\", \"fewshot\": [{\"query\": \"q\"}]}\n---\n{{query}}\n");
        CHECK_THROWS_WITH_AS(PromptPool::from_directory(scratch.dir.string(), registry),
                             doctest::Contains("{{examples}} exactly once"), Error);
    }
}

TEST_CASE("fewshot section renders queries with their normalized JSON") {
    Registry registry;
    PromptPool pool = PromptPool::bundled(registry);
    const PromptTemplate& tsb = pool.select(Tool::tsb);
    // First exemplar is fully specified, second demonstrates a null year.
    CHECK(tsb.text.find("Query: " + tsb.fewshot[0].query) != std::string::npos);
    CHECK(tsb.text.find(R"("year":2018)") != std::string::npos);
    CHECK(tsb.text.find(R"("year":null)") != std::string::npos);
    // Rendered prompt contains the query exactly once more than the template.
    std::string out = render(tsb, "zzz-unique-token");
    CHECK(out.find("zzz-unique-token") != std::string::npos);
    CHECK(tsb.text.find("zzz-unique-token") == std::string::npos);
}

}  // TEST_SUITE
