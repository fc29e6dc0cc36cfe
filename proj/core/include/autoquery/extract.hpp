#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "autoquery/classifier.hpp"
#include "autoquery/prompts.hpp"
#include "autoquery/registry.hpp"

namespace autoquery {

struct InferenceSettings {
    double temperature = 0.01;
    int max_tokens = 1024;

    void check() const;  // throws Error("InvalidConfig")

    friend bool operator==(const InferenceSettings&, const InferenceSettings&) = default;
};

struct ChatRequest {
    std::string prompt;
    InferenceSettings settings;
    std::string request_id;
};

// One chat completion round-trip. Implementations must tolerate concurrent
// send() calls. Delivery failures are thrown as Error with kind "Timeout",
// "Transport" or "HttpStatus"; everything the model actually said comes back
// as the raw completion text, garbage included.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    virtual std::string send(const ChatRequest& request) = 0;
};

enum class ParseStatus : std::uint8_t { clean, repaired, failed };

std::string_view parse_status_name(ParseStatus status);

struct ParsedJson {
    nlohmann::json object;
    ParseStatus status = ParseStatus::clean;  // never `failed`; failures throw
};

// Pulls the first balanced top-level {...} block out of a model reply and
// parses it. String literals and escapes are honored while matching braces.
// `clean` means the whole reply (modulo surrounding whitespace) was the
// object; anything ignored around it - code fences, prose, a second object -
// downgrades to `repaired`. Throws Error kinds:
//   NoJsonFound      - no '{' anywhere in the reply
//   UnbalancedBraces - an object opens but never closes
//   ParseError       - the block is not valid JSON (byte offset in message)
ParsedJson parse_structured(std::string_view raw);

struct ExtractionResult {
    Tool tool = Tool::others;
    EntityMap entities;  // empty whenever status == failed
    std::string raw_text;
    ParseStatus status = ParseStatus::clean;
    std::vector<SchemaViolation> violations;
    std::optional<std::string> error;  // set iff status == failed
};

// Renders the tool's few-shot prompt, makes exactly one backend request,
// parses the reply and validates it against the tool schema. Parse failures
// and schema violations degrade to status `failed` with empty entities and
// the reason recorded; backend delivery errors propagate as thrown Error.
// `others` has no prompt, so routing must short-circuit before calling this
// (select() throws NoPromptForOthers otherwise).
ExtractionResult extract_entities(const std::string& query, Tool tool, const PromptPool& pool,
                                  const Registry& registry, ChatBackend& backend,
                                  const InferenceSettings& settings = {});

// Deterministic rule-driven extractor used as the reference LLM stand-in.
// Rules are keyed by schema field name, so custom schemas reusing the bundled
// field names work unchanged:
//   year           first standalone 4-digit token in [1950, 2035]
//   make           leftmost-longest gazetteer match (surface form kept)
//   model          gazetteer token(s) right after the make, else right after
//                  the year, else null
//   mileage        "<number> <miles|mi|km|...>" with the unit kept
//   issue/component/system/brand/driving_pattern
//                  leftmost-longest phrase-lexicon match
//   labor_action   first of replace/install/remove/repair/change (inflected
//                  forms map to the base verb)
//   query_type     "procedure" for how-to queries, "specification" for
//                  what-is queries
//   service_*      "<N>-<mile|month> <service|maintenance|...>" intervals
//                  (type "scheduled", unit from the interval) or a named
//                  service from the lexicon
//   warranty       "yes" when the query mentions warranty
//   pnc            digit-bearing token following "pnc"
// Anything unmatched is null. The result always validates against the tool
// schema by construction.
EntityMap mock_extract(const std::string& query, Tool tool, const Registry& registry);

// Backend that answers prompts rendered from a known pool: it recognizes the
// template by the text around {{query}}, recovers the query and runs
// mock_extract. Composite prompts additionally need a classifier to pick the
// tool. Replies are deterministic per (prompt, seed); with decoration on, the
// seed picks whether a given reply is bare JSON, fenced or wrapped in prose,
// which exercises the repair path. Thread-safe.
class MockBackend : public ChatBackend {
public:
    MockBackend(PromptPool pool, Registry registry, std::uint64_t seed = 0);

    void set_classifier(std::shared_ptr<const ClassifierModel> model);
    void set_decorate_responses(bool on) { decorate_ = on; }

    // Throws Error("UnknownPrompt") for prompts not rendered from the pool
    // and Error("NoClassifier") for composite prompts without a model.
    std::string send(const ChatRequest& request) override;

    std::size_t requests_served() const { return served_.load(); }

private:
    struct Slot {
        Tool tool = Tool::others;
        bool composite = false;
        std::string prefix;
        std::string suffix;
    };

    std::string answer(const Slot& slot, const std::string& query) const;

    Registry registry_;
    std::vector<Slot> slots_;
    std::shared_ptr<const ClassifierModel> classifier_;
    std::uint64_t seed_ = 0;
    bool decorate_ = false;
    std::atomic<std::size_t> served_{0};
};

struct HttpEndpointConfig {
    std::string base_url;  // scheme://host[:port]
    std::string path = "/v1/chat/completions";
    std::string model = "default";
    std::optional<std::string> api_key;
    int timeout_ms = 30000;
    int max_retries = 2;  // retries beyond the first attempt
    int backoff_ms = 100;  // doubles after each failed attempt
};

// POSTs the request in chat-completions wire format and returns
// choices[0].message.content. Transport failures and 5xx responses are
// retried with exponential backoff; 4xx responses are thrown immediately as
// Error("HttpStatus") with a body excerpt. Timeouts surface as
// Error("Timeout"), other delivery failures as Error("Transport"), and a 200
// whose body is not the expected shape as Error("MalformedResponse").
std::string http_backend_send(const HttpEndpointConfig& endpoint, const ChatRequest& request);

class HttpBackend : public ChatBackend {
public:
    explicit HttpBackend(HttpEndpointConfig config) : config_(std::move(config)) {}

    std::string send(const ChatRequest& request) override {
        return http_backend_send(config_, request);
    }

    const HttpEndpointConfig& config() const { return config_; }

private:
    HttpEndpointConfig config_;
};

}  // namespace autoquery
