#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <shared_mutex>
#include <string>

#include <json.hpp>

#include "autoquery/classifier.hpp"
#include "autoquery/extract.hpp"
#include "autoquery/prompts.hpp"
#include "autoquery/registry.hpp"

namespace httplib {
class Server;
}

namespace autoquery {

// Runtime configuration shared by the CLI and the HTTP service. Precedence
// when assembling one: config file, then AUTOQUERY_* environment variables,
// then command-line flags (flags win).
struct AppConfig {
    std::string model_path;             // classifier artifact; empty = train in memory
    std::string prompt_dir;             // prompt pool directory; empty = bundled pool
    std::string backend_kind = "mock";  // "mock" or "http"
    HttpEndpointConfig endpoint;
    InferenceSettings settings;
    std::string bind_address = "127.0.0.1";
    int port = 8080;
    std::size_t parallelism = 8;   // request-handling thread bound
    std::string log_level = "info";  // error | warn | info | debug

    // Throws Error("InvalidConfig") naming the offending field.
    void check() const;

    nlohmann::ordered_json to_json() const;
    static AppConfig from_json(const nlohmann::json& doc);
    static AppConfig from_file(const std::string& path);

    // Overrides fields from AUTOQUERY_MODEL_PATH, AUTOQUERY_PROMPT_DIR,
    // AUTOQUERY_BACKEND, AUTOQUERY_BASE_URL, AUTOQUERY_API_KEY,
    // AUTOQUERY_BIND_ADDRESS, AUTOQUERY_PORT, AUTOQUERY_PARALLELISM and
    // AUTOQUERY_LOG_LEVEL. The lookup hook exists for tests; the default
    // reads the process environment.
    using EnvLookup = std::function<const char*(const char*)>;
    void apply_env(const EnvLookup& lookup = {});
};

// HTTP routing service. Handlers can be attached before the model exists so
// /healthz honestly reports 503 until load() has run; after that every
// handler works off an immutable snapshot (a restart, or another load(), is
// the only way to change the served model).
//
//   POST /v1/route    {"query": ...} -> tool_category + entities + timings
//   POST /v1/classify {"query": ...} -> tool_category + probabilities
//   GET  /healthz     -> 200 once loaded, 503 before
//
// Status codes: 400 empty/oversized query (4 KiB limit), 422 malformed JSON
// body, 502 when routing degraded (tool_category still populated when
// classification succeeded), 503 before load.
class Service {
public:
    Service() = default;

    void load(std::shared_ptr<const ClassifierModel> model, PromptPool pool, Registry registry,
              std::shared_ptr<ChatBackend> backend, InferenceSettings settings = {});
    bool ready() const;

    // Mounts the endpoints and caps the handler pool at `parallelism`.
    void attach(httplib::Server& server, std::size_t parallelism = 8) const;

private:
    struct Loaded {
        std::shared_ptr<const ClassifierModel> model;
        PromptPool pool;
        Registry registry;
        std::shared_ptr<ChatBackend> backend;
        InferenceSettings settings;
    };

    std::shared_ptr<const Loaded> snapshot() const;

    mutable std::shared_mutex mutex_;
    std::shared_ptr<const Loaded> loaded_;
};

}  // namespace autoquery
