#include "autoquery/service.hpp"

#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>

#include <httplib.h>

#include "autoquery/errors.hpp"
#include "autoquery/pipeline.hpp"
#include "autoquery/text.hpp"

namespace autoquery {
namespace {

constexpr std::size_t kMaxQueryBytes = 4096;

nlohmann::ordered_json error_body(std::string_view kind, std::string_view message) {
    nlohmann::ordered_json doc;
    doc["error"] = {{"kind", std::string(kind)}, {"message", std::string(message)}};
    return doc;
}

void reply(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

bool valid_log_level(const std::string& level) {
    return level == "error" || level == "warn" || level == "info" || level == "debug";
}

void require_keys(const nlohmann::json& doc, std::initializer_list<const char*> allowed,
                  const char* where) {
    for (const auto& item : doc.items()) {
        bool known = false;
        for (const char* key : allowed)
            if (item.key() == key) known = true;
        if (!known)
            throw Error("InvalidConfig", std::string("unknown ") + where + " key '" + item.key() +
                                             "' - check spelling against the documented set");
    }
}

}  // namespace

void AppConfig::check() const {
    if (backend_kind != "mock" && backend_kind != "http")
        throw Error("InvalidConfig",
                    "backend must be 'mock' or 'http', got '" + backend_kind + "'");
    if (backend_kind == "http" && endpoint.base_url.empty())
        throw Error("InvalidConfig", "http backend needs endpoint.base_url");
    if (!valid_log_level(log_level))
        throw Error("InvalidConfig",
                    "log level must be error, warn, info or debug, got '" + log_level + "'");
    if (parallelism == 0) throw Error("InvalidConfig", "parallelism must be at least 1");
    if (port < 1 || port > 65535)
        throw Error("InvalidConfig", "port must be in [1, 65535], got " + std::to_string(port));
    settings.check();
}

nlohmann::ordered_json AppConfig::to_json() const {
    nlohmann::ordered_json doc;
    doc["model_path"] = model_path;
    doc["prompt_dir"] = prompt_dir;
    doc["backend"] = backend_kind;
    nlohmann::ordered_json ep;
    ep["base_url"] = endpoint.base_url;
    ep["path"] = endpoint.path;
    ep["model"] = endpoint.model;
    if (endpoint.api_key) ep["api_key"] = *endpoint.api_key;
    ep["timeout_ms"] = endpoint.timeout_ms;
    ep["max_retries"] = endpoint.max_retries;
    ep["backoff_ms"] = endpoint.backoff_ms;
    doc["endpoint"] = ep;
    doc["settings"] = {{"temperature", settings.temperature}, {"max_tokens", settings.max_tokens}};
    doc["bind_address"] = bind_address;
    doc["port"] = port;
    doc["parallelism"] = parallelism;
    doc["log_level"] = log_level;
    return doc;
}

AppConfig AppConfig::from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw Error("InvalidConfig", "config must be a JSON object");
    require_keys(doc,
                 {"model_path", "prompt_dir", "backend", "endpoint", "settings", "bind_address",
                  "port", "parallelism", "log_level"},
                 "config");

    AppConfig config;
    config.model_path = doc.value("model_path", config.model_path);
    config.prompt_dir = doc.value("prompt_dir", config.prompt_dir);
    config.backend_kind = doc.value("backend", config.backend_kind);
    if (doc.contains("endpoint")) {
        const nlohmann::json& ep = doc["endpoint"];
        if (!ep.is_object()) throw Error("InvalidConfig", "'endpoint' must be an object");
        require_keys(ep,
                     {"base_url", "path", "model", "api_key", "timeout_ms", "max_retries",
                      "backoff_ms"},
                     "endpoint");
        config.endpoint.base_url = ep.value("base_url", config.endpoint.base_url);
        config.endpoint.path = ep.value("path", config.endpoint.path);
        config.endpoint.model = ep.value("model", config.endpoint.model);
        if (ep.contains("api_key")) config.endpoint.api_key = ep["api_key"].get<std::string>();
        config.endpoint.timeout_ms = ep.value("timeout_ms", config.endpoint.timeout_ms);
        config.endpoint.max_retries = ep.value("max_retries", config.endpoint.max_retries);
        config.endpoint.backoff_ms = ep.value("backoff_ms", config.endpoint.backoff_ms);
    }
    if (doc.contains("settings")) {
        const nlohmann::json& s = doc["settings"];
        if (!s.is_object()) throw Error("InvalidConfig", "'settings' must be an object");
        require_keys(s, {"temperature", "max_tokens"}, "settings");
        config.settings.temperature = s.value("temperature", config.settings.temperature);
        config.settings.max_tokens = s.value("max_tokens", config.settings.max_tokens);
    }
    config.bind_address = doc.value("bind_address", config.bind_address);
    config.port = doc.value("port", config.port);
    if (doc.contains("parallelism"))
        config.parallelism = doc["parallelism"].get<std::size_t>();
    config.log_level = doc.value("log_level", config.log_level);
    config.check();
    return config;
}

AppConfig AppConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open config file " + path);
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw Error("InvalidConfig", path + " is not valid JSON");
    return from_json(doc);
}

void AppConfig::apply_env(const EnvLookup& lookup) {
    const EnvLookup& env =
        lookup ? lookup : EnvLookup([](const char* name) { return std::getenv(name); });

    auto read = [&](const char* name) -> std::optional<std::string> {
        const char* value = env(name);
        if (!value || !*value) return std::nullopt;
        return std::string(value);
    };
    auto read_int = [&](const char* name) -> std::optional<long> {
        auto raw = read(name);
        if (!raw) return std::nullopt;
        try {
            std::size_t used = 0;
            long value = std::stol(*raw, &used);
            if (used != raw->size()) throw std::invalid_argument("trailing characters");
            return value;
        } catch (const std::exception&) {
            throw Error("InvalidConfig",
                        std::string(name) + " must be an integer, got '" + *raw + "'");
        }
    };

    if (auto v = read("AUTOQUERY_MODEL_PATH")) model_path = *v;
    if (auto v = read("AUTOQUERY_PROMPT_DIR")) prompt_dir = *v;
    if (auto v = read("AUTOQUERY_BACKEND")) backend_kind = *v;
    if (auto v = read("AUTOQUERY_BASE_URL")) endpoint.base_url = *v;
    if (auto v = read("AUTOQUERY_API_KEY")) endpoint.api_key = *v;
    if (auto v = read("AUTOQUERY_BIND_ADDRESS")) bind_address = *v;
    if (auto v = read_int("AUTOQUERY_PORT")) port = static_cast<int>(*v);
    if (auto v = read_int("AUTOQUERY_PARALLELISM")) {
        if (*v < 0) throw Error("InvalidConfig", "AUTOQUERY_PARALLELISM cannot be negative");
        parallelism = static_cast<std::size_t>(*v);
    }
    if (auto v = read("AUTOQUERY_LOG_LEVEL")) log_level = *v;
}

void Service::load(std::shared_ptr<const ClassifierModel> model, PromptPool pool,
                   Registry registry, std::shared_ptr<ChatBackend> backend,
                   InferenceSettings settings) {
    settings.check();
    auto loaded = std::make_shared<Loaded>();
    loaded->model = std::move(model);
    loaded->pool = std::move(pool);
    loaded->registry = std::move(registry);
    loaded->backend = std::move(backend);
    loaded->settings = settings;

    std::unique_lock lock(mutex_);
    loaded_ = std::move(loaded);
}

bool Service::ready() const { return snapshot() != nullptr; }

std::shared_ptr<const Service::Loaded> Service::snapshot() const {
    std::shared_lock lock(mutex_);
    return loaded_;
}

void Service::attach(httplib::Server& server, std::size_t parallelism) const {
    if (parallelism == 0) throw Error("InvalidConfig", "parallelism must be at least 1");
    server.new_task_queue = [parallelism] {
        return new httplib::ThreadPool(parallelism);
    };

    // Pulls "query" out of a request body; fills `res` and returns nullopt
    // when the body does not hold a usable one.
    auto read_query = [](const httplib::Request& req,
                         httplib::Response& res) -> std::optional<std::string> {
        nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
        if (body.is_discarded()) {
            reply(res, 422, error_body("ParseError", "request body is not valid JSON"));
            return std::nullopt;
        }
        if (!body.is_object() || !body.contains("query") || !body["query"].is_string()) {
            reply(res, 400, error_body("InvalidQuery", "body must be {\"query\": \"...\"}"));
            return std::nullopt;
        }
        std::string query = body["query"].get<std::string>();
        if (text::collapse_whitespace(query).empty()) {
            reply(res, 400, error_body("InvalidQuery", "query is empty"));
            return std::nullopt;
        }
        if (query.size() > kMaxQueryBytes) {
            reply(res, 400,
                  error_body("InvalidQuery", "query exceeds the 4 KiB limit (" +
                                                 std::to_string(query.size()) + " bytes)"));
            return std::nullopt;
        }
        return query;
    };

    server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
        if (ready())
            reply(res, 200, nlohmann::ordered_json{{"status", "ok"}});
        else
            reply(res, 503, nlohmann::ordered_json{{"status", "loading"}});
    });

    server.Post("/v1/route", [this, read_query](const httplib::Request& req,
                                                httplib::Response& res) {
        auto state = snapshot();
        if (!state) {
            reply(res, 503, error_body("NotReady", "model not loaded yet"));
            return;
        }
        auto query = read_query(req, res);
        if (!query) return;
        try {
            RouteResult result = route_two_step(*query, *state->model, state->pool,
                                                state->registry, *state->backend,
                                                state->settings);
            nlohmann::ordered_json body = route_result_to_json(result, /*include_timings=*/true);
            if (result.error) {
                body["error"] = *result.error;
                reply(res, 502, body);
            } else {
                reply(res, 200, body);
            }
        } catch (const Error& e) {
            reply(res, 500, error_body(e.kind(), e.what()));
        } catch (const std::exception& e) {
            reply(res, 500, error_body("Internal", e.what()));
        }
    });

    server.Post("/v1/classify", [this, read_query](const httplib::Request& req,
                                                   httplib::Response& res) {
        auto state = snapshot();
        if (!state) {
            reply(res, 503, error_body("NotReady", "model not loaded yet"));
            return;
        }
        auto query = read_query(req, res);
        if (!query) return;
        try {
            Prediction prediction = predict(*state->model, *query);
            nlohmann::ordered_json probabilities;
            for (std::size_t i = 0; i < kToolCount; ++i)
                probabilities[std::string(tool_id(all_tools()[i]))] = prediction.probabilities[i];
            reply(res, 200,
                  nlohmann::ordered_json{{"tool_category", std::string(tool_id(prediction.tool))},
                                         {"probabilities", probabilities}});
        } catch (const Error& e) {
            reply(res, 500, error_body(e.kind(), e.what()));
        } catch (const std::exception& e) {
            reply(res, 500, error_body("Internal", e.what()));
        }
    });
}

}  // namespace autoquery
