#include <benchmark/benchmark.h>

#include <memory>
#include <string>
#include <vector>

#include "autoquery/classifier.hpp"
#include "autoquery/dataset.hpp"
#include "autoquery/embed.hpp"
#include "autoquery/extract.hpp"
#include "autoquery/pipeline.hpp"
#include "autoquery/prompts.hpp"
#include "autoquery/registry.hpp"

using namespace autoquery;

namespace {

// Everything immutable the hot paths need, built once for the process.
struct Fixture {
    Registry registry;
    PromptPool pool;
    DeskDataset desk;
    ClassifierModel model;
    std::shared_ptr<MockBackend> backend;

    Fixture()
        : pool(PromptPool::bundled(registry)),
          desk(load_desk_dataset(std::string(AUTOQUERY_DATA_DIR) + "/desk", registry)),
          model(train(to_labeled(desk.train), TrainConfig{})) {
        backend = std::make_shared<MockBackend>(pool, registry);
        backend->set_classifier(std::make_shared<const ClassifierModel>(model));
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

const std::string kRepairQuery = "Replace brake pads for my Toyota Corolla 2015.";

}  // namespace

static void BM_embed(benchmark::State& state) {
    Embedder embedder = Embedder::from_config(EmbedderConfig{});
    for (auto _ : state) {
        Embedding e = embedder.embed(kRepairQuery);
        benchmark::DoNotOptimize(e.values.data());
    }
}
BENCHMARK(BM_embed);

static void BM_predict(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state) {
        Prediction p = predict(f.model, kRepairQuery);
        benchmark::DoNotOptimize(p.probabilities.data());
    }
}
BENCHMARK(BM_predict);

static void BM_parse_structured_clean(benchmark::State& state) {
    const std::string reply =
        R"({"make": "Toyota", "model": "Corolla", "year": 2015, )"
        R"("labor_action": "replace", "component": "brake pads"})";
    for (auto _ : state) {
        ParsedJson parsed = parse_structured(reply);
        benchmark::DoNotOptimize(&parsed.object);
    }
}
BENCHMARK(BM_parse_structured_clean);

static void BM_parse_structured_fenced(benchmark::State& state) {
    const std::string reply =
        "Here is the extraction you asked for:\n```json\n"
        R"({"make": "Toyota", "model": "Corolla", "year": 2015})" "\n```\nLet me know!";
    for (auto _ : state) {
        ParsedJson parsed = parse_structured(reply);
        benchmark::DoNotOptimize(&parsed.object);
    }
}
BENCHMARK(BM_parse_structured_fenced);

static void BM_mock_extract(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state) {
        EntityMap entities = mock_extract(kRepairQuery, Tool::repair_to_parts, f.registry);
        benchmark::DoNotOptimize(&entities);
    }
}
BENCHMARK(BM_mock_extract);

static void BM_route_two_step(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state) {
        RouteResult result =
            route_two_step(kRepairQuery, f.model, f.pool, f.registry, *f.backend);
        benchmark::DoNotOptimize(&result.entities);
    }
}
BENCHMARK(BM_route_two_step);

static void BM_route_single_step(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state) {
        RouteResult result =
            route_single_step(kRepairQuery, f.pool, f.registry, *f.backend);
        benchmark::DoNotOptimize(&result.entities);
    }
}
BENCHMARK(BM_route_single_step);

static void BM_prompt_render(benchmark::State& state) {
    const Fixture& f = fixture();
    const PromptTemplate& tmpl = f.pool.select(Tool::repair_to_parts);
    for (auto _ : state) {
        std::string prompt = render(tmpl, kRepairQuery);
        benchmark::DoNotOptimize(prompt.data());
    }
}
BENCHMARK(BM_prompt_render);

BENCHMARK_MAIN();
