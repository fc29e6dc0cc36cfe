#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "autoquery/classifier.hpp"
#include "autoquery/extract.hpp"
#include "autoquery/prompts.hpp"
#include "autoquery/registry.hpp"

namespace autoquery {

enum class RouteMode : std::uint8_t { two_step, single_step };

std::string_view route_mode_name(RouteMode mode);

// Stage timings off a monotonic clock. Single-step mode charges its one
// joint backend call to classify_seconds, so tool == others always implies
// extract_seconds == 0 in either mode.
struct StageTimings {
    double classify_seconds = 0.0;
    double extract_seconds = 0.0;
    double total_seconds = 0.0;
};

struct RouteResult {
    Tool tool = Tool::others;
    EntityMap entities;  // empty when parse_status == failed or tool == others
    StageTimings timings;
    RouteMode mode = RouteMode::two_step;

    // diagnostics
    ParseStatus parse_status = ParseStatus::clean;
    std::vector<double> probabilities;  // classifier scores; empty in single-step
    std::vector<SchemaViolation> violations;
    std::optional<std::string> error;  // degraded-mode reason, kind-prefixed
};

// The public serialized shape: {"tool_category": ..., "entities": {...}},
// plus a "_timings" diagnostic block when asked for.
nlohmann::ordered_json route_result_to_json(const RouteResult& result,
                                            bool include_timings = false);

// Classify, then extract with the tool's own prompt. `others` short-circuits
// with no backend call. Extraction-stage errors (delivery included) degrade
// to a failed-but-classified result - the tool label survives, entities stay
// empty and the reason is recorded - so classification output is never lost
// to a downstream failure. Throws Error("InvalidQuery") on an empty query.
RouteResult route_two_step(const std::string& query, const ClassifierModel& model,
                           const PromptPool& pool, const Registry& registry,
                           ChatBackend& backend, const InferenceSettings& settings = {});

// One composite-prompt call that must name the tool and its entities in the
// same reply. Unparseable replies and unknown tool labels fall back to
// `others` with the reason recorded (kind UnknownToolLabel for bad labels);
// schema violations keep the named tool but empty the entities. Backend
// delivery errors propagate. Throws Error("InvalidQuery") on an empty query.
RouteResult route_single_step(const std::string& query, const PromptPool& pool,
                              const Registry& registry, ChatBackend& backend,
                              const InferenceSettings& settings = {});

// Synthetic per-request inference cost: delay = base + per_token * tokens of
// the prompt actually sent. Stands in for LLM decode time when the backend
// is the instant local mock.
struct LatencyModel {
    double base_seconds = 0.005;
    double per_token_seconds = 0.0005;

    double delay_seconds(std::string_view prompt) const {
        return base_seconds + per_token_seconds * static_cast<double>(token_count(prompt));
    }
};

struct ComparisonRow {
    std::string query;
    Tool two_step_tool = Tool::others;
    Tool single_step_tool = Tool::others;
    double two_step_seconds = 0.0;
    double single_step_seconds = 0.0;
};

struct ModeComparison {
    std::vector<ComparisonRow> rows;
    double two_step_mean_seconds = 0.0;
    double single_step_mean_seconds = 0.0;
    double agreement_rate = 1.0;  // vacuously perfect on an empty query list

    nlohmann::ordered_json to_json() const;
};

// Runs both modes over the query set against the same backend, adding the
// latency model's simulated delay for every backend call each mode makes.
// Reports per-query rows, mean latency per mode and tool-label agreement.
ModeComparison compare_modes(const std::vector<std::string>& queries,
                             const ClassifierModel& model, const PromptPool& pool,
                             const Registry& registry, ChatBackend& backend,
                             const LatencyModel& latency = {},
                             const InferenceSettings& settings = {});

}  // namespace autoquery
