#include <chrono>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "autoquery/errors.hpp"
#include "autoquery/extract.hpp"

namespace autoquery {

namespace {

std::string body_excerpt(const std::string& body) {
    constexpr std::size_t kMax = 200;
    if (body.size() <= kMax) return body;
    return body.substr(0, kMax) + "...";
}

bool is_timeout(httplib::Error err) {
    return err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
           err == httplib::Error::Write;
}

std::string pick_content(const std::string& body) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
        throw Error("MalformedResponse", "completion body is not JSON: " + body_excerpt(body));
    }
    const auto& choices = doc.find("choices");
    if (choices == doc.end() || !choices->is_array() || choices->empty())
        throw Error("MalformedResponse", "completion body has no choices: " + body_excerpt(body));
    const auto& message = (*choices)[0].find("message");
    if (message == (*choices)[0].end() || !message->is_object() ||
        !message->contains("content") || !(*message)["content"].is_string())
        throw Error("MalformedResponse",
                    "completion choice has no message content: " + body_excerpt(body));
    return (*message)["content"].get<std::string>();
}

}  // namespace

std::string http_backend_send(const HttpEndpointConfig& endpoint, const ChatRequest& request) {
    if (endpoint.base_url.empty())
        throw Error("InvalidConfig", "http backend needs a base_url");
    request.settings.check();

    nlohmann::ordered_json payload;
    payload["model"] = endpoint.model;
    payload["messages"] = nlohmann::ordered_json::array(
        {nlohmann::ordered_json{{"role", "user"}, {"content", request.prompt}}});
    payload["temperature"] = request.settings.temperature;
    payload["max_tokens"] = request.settings.max_tokens;
    const std::string body = payload.dump();

    httplib::Headers headers;
    if (endpoint.api_key) headers.emplace("Authorization", "Bearer " + *endpoint.api_key);
    if (!request.request_id.empty()) headers.emplace("X-Request-Id", request.request_id);

    const int attempts = endpoint.max_retries + 1;
    std::string last_kind = "Transport";
    std::string last_detail = "no attempt made";
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(static_cast<long long>(endpoint.backoff_ms)
                                          << (attempt - 1)));

        httplib::Client client(endpoint.base_url);
        client.set_connection_timeout(std::chrono::milliseconds(endpoint.timeout_ms));
        client.set_read_timeout(std::chrono::milliseconds(endpoint.timeout_ms));
        client.set_write_timeout(std::chrono::milliseconds(endpoint.timeout_ms));

        auto res = client.Post(endpoint.path, headers, body, "application/json");
        if (!res) {
            last_kind = is_timeout(res.error()) ? "Timeout" : "Transport";
            last_detail = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {  // server-side; worth retrying
            last_kind = "HttpStatus";
            last_detail =
                "status " + std::to_string(res->status) + ": " + body_excerpt(res->body);
            continue;
        }
        if (res->status >= 400)  // our fault; retrying cannot help
            throw Error("HttpStatus", "POST " + endpoint.path + " returned " +
                                          std::to_string(res->status) + ": " +
                                          body_excerpt(res->body));
        return pick_content(res->body);
    }
    throw Error(last_kind, "POST " + endpoint.path + " failed after " +
                               std::to_string(attempts) + " attempts: " + last_detail);
}

}  // namespace autoquery
