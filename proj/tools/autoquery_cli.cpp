#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "autoquery/classifier.hpp"
#include "autoquery/datagen.hpp"
#include "autoquery/dataset.hpp"
#include "autoquery/errors.hpp"
#include "autoquery/eval.hpp"
#include "autoquery/extract.hpp"
#include "autoquery/pipeline.hpp"
#include "autoquery/prompts.hpp"
#include "autoquery/registry.hpp"
#include "autoquery/service.hpp"

using namespace autoquery;

namespace {

// Config file (--config), then AUTOQUERY_* environment variables, then
// explicit flags. Flags win.
struct ConfigFlags {
    std::string config_file;
    std::string model_path;
    std::string prompt_dir;
    std::string backend_kind;
    std::string base_url;
    std::string api_key;
    std::string log_level;
    std::size_t parallelism = 0;

    CLI::Option* model_opt = nullptr;
    CLI::Option* prompt_opt = nullptr;
    CLI::Option* backend_opt = nullptr;
    CLI::Option* url_opt = nullptr;
    CLI::Option* key_opt = nullptr;
    CLI::Option* log_opt = nullptr;
    CLI::Option* par_opt = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "JSON config file")->check(CLI::ExistingFile);
        model_opt = cmd->add_option("--model", model_path,
                                    "classifier artifact path (trained on the bundled "
                                    "dataset when missing)");
        prompt_opt = cmd->add_option("--prompts", prompt_dir, "prompt pool directory");
        backend_opt = cmd->add_option("--backend", backend_kind, "mock or http");
        url_opt = cmd->add_option("--base-url", base_url, "http backend base URL");
        key_opt = cmd->add_option("--api-key", api_key, "http backend API key");
        par_opt = cmd->add_option("--parallelism", parallelism, "request/evaluation worker bound");
        log_opt = cmd->add_option("--log-level", log_level, "error, warn, info or debug");
    }

    AppConfig resolve() const {
        AppConfig config;
        if (!config_file.empty()) config = AppConfig::from_file(config_file);
        config.apply_env();
        if (model_opt->count()) config.model_path = model_path;
        if (prompt_opt->count()) config.prompt_dir = prompt_dir;
        if (backend_opt->count()) config.backend_kind = backend_kind;
        if (url_opt->count()) config.endpoint.base_url = base_url;
        if (key_opt->count()) config.endpoint.api_key = api_key;
        if (par_opt->count()) config.parallelism = parallelism;
        if (log_opt->count()) config.log_level = log_level;
        config.check();
        return config;
    }
};

PromptPool load_pool(const AppConfig& config, const Registry& registry) {
    if (config.prompt_dir.empty()) return PromptPool::bundled(registry);
    return PromptPool::from_directory(config.prompt_dir, registry);
}

// Loads the artifact when it exists; otherwise trains on the bundled desk
// dataset (and saves to the configured path so the next run reuses it).
std::shared_ptr<const ClassifierModel> obtain_model(const AppConfig& config) {
    if (!config.model_path.empty() && std::filesystem::exists(config.model_path))
        return std::make_shared<const ClassifierModel>(load_model(config.model_path));

    DeskDataset desk = load_desk_dataset();
    auto model = std::make_shared<const ClassifierModel>(train(to_labeled(desk.train), TrainConfig{}));
    if (!config.model_path.empty()) save_model(*model, config.model_path);
    return model;
}

std::shared_ptr<ChatBackend> make_route_backend(const AppConfig& config, const PromptPool& pool,
                                                const Registry& registry,
                                                std::shared_ptr<const ClassifierModel> model) {
    if (config.backend_kind == "http") return std::make_shared<HttpBackend>(config.endpoint);
    auto mock = std::make_shared<MockBackend>(pool, registry);
    if (model) mock->set_classifier(std::move(model));
    return mock;
}

std::shared_ptr<ChatBackend> make_generation_backend(const AppConfig& config) {
    if (config.backend_kind == "http") return std::make_shared<HttpBackend>(config.endpoint);
    return std::make_shared<GenerationMockBackend>();
}

void print_json(const nlohmann::ordered_json& doc) { std::cout << doc.dump(2) << "\n"; }

std::string utc_now_iso8601() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm parts{};
    gmtime_r(&now, &parts);
    char buffer[32];
    std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &parts);
    return buffer;
}

void run_train(const std::string& data, const std::string& out, const TrainConfig& train_config) {
    Registry registry;
    std::vector<DatasetSample> samples = load_samples_jsonl(data, registry);
    ClassifierModel model = train(to_labeled(samples), train_config);
    save_model(model, out);

    std::size_t correct = 0;
    for (const auto& sample : samples)
        if (predict(model, sample.query).tool == sample.tool) ++correct;

    nlohmann::ordered_json doc;
    doc["model"] = out;
    doc["samples"] = samples.size();
    doc["train_accuracy"] = samples.empty() ? 0.0 : double(correct) / double(samples.size());
    doc["seed"] = train_config.seed;
    print_json(doc);
}

void run_classify(const ConfigFlags& flags, const std::string& query) {
    AppConfig config = flags.resolve();
    auto model = obtain_model(config);
    Prediction prediction = predict(*model, query);

    nlohmann::ordered_json probabilities;
    for (std::size_t i = 0; i < kToolCount; ++i)
        probabilities[std::string(tool_id(all_tools()[i]))] = prediction.probabilities[i];

    nlohmann::ordered_json doc;
    doc["query"] = query;
    doc["tool_category"] = std::string(tool_id(prediction.tool));
    doc["probabilities"] = probabilities;
    print_json(doc);
}

void run_route(const ConfigFlags& flags, const std::string& query, const std::string& mode,
               bool with_timings) {
    AppConfig config = flags.resolve();
    Registry registry;
    PromptPool pool = load_pool(config, registry);
    auto model = obtain_model(config);
    auto backend = make_route_backend(config, pool, registry, model);

    RouteResult result =
        mode == "single-step"
            ? route_single_step(query, pool, registry, *backend, config.settings)
            : route_two_step(query, *model, pool, registry, *backend, config.settings);

    nlohmann::ordered_json doc = route_result_to_json(result, with_timings);
    if (result.error) doc["error"] = *result.error;
    print_json(doc);
}

void run_evaluate(const ConfigFlags& flags, const std::string& data, const std::string& mode,
                  const std::string& format) {
    AppConfig config = flags.resolve();
    Registry registry;
    PromptPool pool = load_pool(config, registry);
    auto model = obtain_model(config);
    auto backend = make_route_backend(config, pool, registry, model);

    std::vector<DatasetSample> samples;
    if (data.empty()) {
        samples = load_desk_dataset().holdout;
    } else {
        samples = load_samples_jsonl(data, registry);
    }

    RouteFn route_fn;
    if (mode == "single-step") {
        route_fn = [&](const std::string& query) {
            return route_single_step(query, pool, registry, *backend, config.settings);
        };
    } else {
        route_fn = [&](const std::string& query) {
            return route_two_step(query, *model, pool, registry, *backend, config.settings);
        };
    }

    SynonymTable synonyms = SynonymTable::bundled();
    ExtractionReport extraction =
        evaluate_extraction(samples, route_fn, registry, &synonyms, config.parallelism);

    std::vector<std::pair<Tool, Tool>> pairs;
    pairs.reserve(extraction.per_sample.size());
    for (const auto& score : extraction.per_sample)
        pairs.emplace_back(score.gold_tool, score.routed_tool);
    ClassificationReport classification = evaluate_classification(pairs);

    if (format == "text") {
        std::cout << classification.to_table() << "\n" << extraction.to_table();
        return;
    }
    nlohmann::ordered_json doc;
    doc["mode"] = mode;
    doc["n"] = samples.size();
    doc["accuracy"] = classification.accuracy;
    doc["extraction_pass_rate"] = extraction.pass_rate;
    doc["classification"] = classification.to_json();
    doc["extraction"] = extraction.to_json();
    print_json(doc);
}

void run_gen_data(const ConfigFlags& flags, const std::string& seeds_path,
                  const std::string& out, const std::vector<std::string>& count_specs,
                  std::size_t count_all, GenerationConfig gen_config) {
    AppConfig config = flags.resolve();
    Registry registry;

    std::vector<SeedSample> seeds;
    if (seeds_path.empty()) {
        seeds = load_desk_dataset().train;
    } else {
        seeds = load_samples_jsonl(seeds_path, registry);
    }

    std::map<Tool, std::size_t> counts;
    for (const std::string& spec : count_specs) {
        const std::size_t eq = spec.find('=');
        if (eq == std::string::npos)
            throw Error("InvalidConfig", "--counts takes tool=N, got '" + spec + "'");
        auto tool = tool_from_id(spec.substr(0, eq));
        if (!tool)
            throw Error("InvalidConfig",
                        "unknown tool category in --counts: '" + spec.substr(0, eq) + "'");
        counts[*tool] = std::stoull(spec.substr(eq + 1));
    }
    if (count_all > 0) {
        for (const auto& seed : seeds)
            if (!counts.count(seed.tool)) counts[seed.tool] = count_all;
    }
    if (counts.empty())
        throw Error("InvalidConfig", "nothing to generate - pass --counts tool=N or --count N");

    if (gen_config.timestamp.empty()) gen_config.timestamp = utc_now_iso8601();
    if (config.backend_kind == "http") gen_config.generator_id = config.endpoint.model;

    auto backend = make_generation_backend(config);
    GenerationResult result = generate(*backend, seeds, counts, registry, gen_config);
    save_generated_jsonl(result.samples, out);

    nlohmann::ordered_json log = nlohmann::ordered_json::array();
    for (const auto& row : result.log) log.push_back(row.to_json());
    nlohmann::ordered_json doc;
    doc["out"] = out;
    doc["kept"] = result.samples.size();
    doc["log"] = log;
    print_json(doc);
}

void run_compare(const ConfigFlags& flags, double base_ms, double per_token_ms) {
    AppConfig config = flags.resolve();
    Registry registry;
    PromptPool pool = load_pool(config, registry);
    auto model = obtain_model(config);
    auto backend = make_route_backend(config, pool, registry, model);

    DeskDataset desk = load_desk_dataset();
    LatencyModel latency{base_ms / 1000.0, per_token_ms / 1000.0};
    ModeComparison comparison = compare_modes(probe_queries(desk), *model, pool, registry,
                                              *backend, latency, config.settings);
    print_json(comparison.to_json());
}

void run_serve(const ConfigFlags& flags, const std::string& bind_flag, int port_flag,
               bool bind_set, bool port_set) {
    AppConfig config = flags.resolve();
    if (bind_set) config.bind_address = bind_flag;
    if (port_set) config.port = port_flag;
    config.check();

    Registry registry;
    PromptPool pool = load_pool(config, registry);
    auto model = obtain_model(config);
    auto backend = make_route_backend(config, pool, registry, model);

    Service service;
    service.load(model, pool, registry, backend, config.settings);

    httplib::Server server;
    service.attach(server, config.parallelism);

    std::cerr << "serving on http://" << config.bind_address << ":" << config.port << "\n";
    if (!server.listen(config.bind_address, config.port))
        throw Error("IoError", "cannot bind " + config.bind_address + ":" +
                                   std::to_string(config.port));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-step automotive query router: classify, then extract"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a classifier from labeled JSONL");
    std::string train_data, train_out;
    TrainConfig train_config;
    train_cmd->add_option("--data", train_data, "labeled JSONL input")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--out", train_out, "model artifact output path")->required();
    train_cmd->add_option("--seed", train_config.seed, "RNG seed");
    train_cmd->add_option("--iterations", train_config.iterations, "contrastive iterations");
    train_cmd->callback([&] { run_train(train_data, train_out, train_config); });

    // classify
    auto* classify_cmd = app.add_subcommand("classify", "Pick the tool category for one query");
    ConfigFlags classify_flags;
    classify_flags.attach(classify_cmd);
    std::string classify_query;
    classify_cmd->add_option("--query", classify_query, "query text")->required();
    classify_cmd->callback([&] { run_classify(classify_flags, classify_query); });

    // route
    auto* route_cmd = app.add_subcommand("route", "Classify and extract entities for one query");
    ConfigFlags route_flags;
    route_flags.attach(route_cmd);
    std::string route_query, route_mode = "two-step";
    bool route_timings = false;
    route_cmd->add_option("--query", route_query, "query text")->required();
    route_cmd->add_option("--mode", route_mode, "two-step or single-step")
        ->check(CLI::IsMember({"two-step", "single-step"}));
    route_cmd->add_flag("--timings", route_timings, "include stage timings in the output");
    route_cmd->callback([&] { run_route(route_flags, route_query, route_mode, route_timings); });

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Score routing over a labeled dataset");
    ConfigFlags eval_flags;
    eval_flags.attach(eval_cmd);
    std::string eval_data, eval_mode = "two-step", eval_format = "json";
    eval_cmd->add_option("--data", eval_data, "labeled JSONL (default: bundled holdout set)")
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--mode", eval_mode, "two-step or single-step")
        ->check(CLI::IsMember({"two-step", "single-step"}));
    eval_cmd->add_option("--format", eval_format, "json or text")
        ->check(CLI::IsMember({"json", "text"}));
    eval_cmd->callback([&] { run_evaluate(eval_flags, eval_data, eval_mode, eval_format); });

    // gen-data
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate pending training samples from seeds");
    ConfigFlags gen_flags;
    gen_flags.attach(gen_cmd);
    std::string gen_seeds, gen_out;
    std::vector<std::string> gen_counts;
    std::size_t gen_count_all = 0;
    GenerationConfig gen_config;
    gen_cmd->add_option("--seeds", gen_seeds, "seed JSONL (default: bundled training set)")
        ->check(CLI::ExistingFile);
    gen_cmd->add_option("--out", gen_out, "output JSONL path")->required();
    gen_cmd->add_option("--counts", gen_counts, "per-tool request, e.g. tsb=5 (repeatable)");
    gen_cmd->add_option("--count", gen_count_all, "request N samples for every seeded tool");
    gen_cmd->add_option("--generator", gen_config.generator_id, "provenance generator id");
    gen_cmd->add_option("--timestamp", gen_config.timestamp,
                        "provenance timestamp (default: now, UTC)");
    gen_cmd->add_option("--seeds-per-prompt", gen_config.seeds_per_prompt,
                        "seeds embedded per prompt (0 = all)");
    gen_cmd->add_option("--gen-seed", gen_config.seed, "seed-selection RNG seed");
    gen_cmd->callback([&] {
        run_gen_data(gen_flags, gen_seeds, gen_out, gen_counts, gen_count_all, gen_config);
    });

    // compare
    auto* compare_cmd =
        app.add_subcommand("compare", "Compare two-step vs single-step on the probe set");
    ConfigFlags compare_flags;
    compare_flags.attach(compare_cmd);
    double base_ms = 5.0, per_token_ms = 0.5;
    compare_cmd->add_option("--base-ms", base_ms, "simulated per-call latency floor");
    compare_cmd->add_option("--per-token-ms", per_token_ms, "simulated per-token latency");
    compare_cmd->callback([&] { run_compare(compare_flags, base_ms, per_token_ms); });

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP routing service");
    ConfigFlags serve_flags;
    serve_flags.attach(serve_cmd);
    std::string serve_bind;
    int serve_port = 0;
    auto* bind_opt = serve_cmd->add_option("--bind", serve_bind, "bind address");
    auto* port_opt = serve_cmd->add_option("--port", serve_port, "listen port");
    serve_cmd->callback([&] {
        run_serve(serve_flags, serve_bind, serve_port, bind_opt->count() > 0,
                  port_opt->count() > 0);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        std::cerr << nlohmann::ordered_json{
                         {"error", {{"kind", "UsageError"}, {"message", e.what()}}}}
                         .dump()
                  << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << nlohmann::ordered_json{
                         {"error", {{"kind", std::string(e.kind())}, {"message", e.what()}}}}
                         .dump()
                  << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::ordered_json{
                         {"error", {{"kind", "Internal"}, {"message", e.what()}}}}
                         .dump()
                  << "\n";
        return 1;
    }
    return 0;
}
