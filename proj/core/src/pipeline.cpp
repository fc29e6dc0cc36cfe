#include "autoquery/pipeline.hpp"

#include <atomic>
#include <chrono>

#include "autoquery/errors.hpp"
#include "autoquery/text.hpp"

namespace autoquery {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_nonempty(const std::string& query) {
    if (text::collapse_whitespace(query).empty())
        throw Error("InvalidQuery", "query is empty");
}

std::string next_composite_id() {
    static std::atomic<std::uint64_t> counter{0};
    return "composite-" + std::to_string(++counter);
}

std::string join_violations(const std::vector<SchemaViolation>& violations) {
    std::string out;
    for (const auto& v : violations) {
        if (!out.empty()) out += "; ";
        out += v.field + ": " + v.reason;
    }
    return out;
}

// Counts simulated inference cost for each request that passes through.
class TalliedBackend : public ChatBackend {
public:
    TalliedBackend(ChatBackend& inner, const LatencyModel& model)
        : inner_(inner), model_(model) {}

    std::string send(const ChatRequest& request) override {
        tally_ += model_.delay_seconds(request.prompt);
        return inner_.send(request);
    }

    double take() {
        const double v = tally_;
        tally_ = 0.0;
        return v;
    }

private:
    ChatBackend& inner_;
    LatencyModel model_;
    double tally_ = 0.0;
};

}  // namespace

std::string_view route_mode_name(RouteMode mode) {
    return mode == RouteMode::two_step ? "two_step" : "single_step";
}

nlohmann::ordered_json route_result_to_json(const RouteResult& result, bool include_timings) {
    nlohmann::ordered_json out;
    out["tool_category"] = std::string(tool_id(result.tool));
    out["entities"] = result.entities.to_json();
    if (include_timings) {
        out["_timings"] = {
            {"classify_seconds", result.timings.classify_seconds},
            {"extract_seconds", result.timings.extract_seconds},
            {"total_seconds", result.timings.total_seconds},
        };
    }
    return out;
}

RouteResult route_two_step(const std::string& query, const ClassifierModel& model,
                           const PromptPool& pool, const Registry& registry,
                           ChatBackend& backend, const InferenceSettings& settings) {
    require_nonempty(query);
    const auto start = Clock::now();

    Prediction pred = predict(model, query);
    RouteResult result;
    result.mode = RouteMode::two_step;
    result.tool = pred.tool;
    result.probabilities = std::move(pred.probabilities);
    result.timings.classify_seconds = seconds_since(start);

    if (result.tool != Tool::others) {
        const auto extract_start = Clock::now();
        try {
            ExtractionResult extracted =
                extract_entities(query, result.tool, pool, registry, backend, settings);
            result.entities = std::move(extracted.entities);
            result.parse_status = extracted.status;
            result.violations = std::move(extracted.violations);
            result.error = std::move(extracted.error);
        } catch (const Error& e) {
            // classification survives a dead extraction stage
            result.parse_status = ParseStatus::failed;
            result.error = e.kind() + ": " + e.what();
        }
        result.timings.extract_seconds = seconds_since(extract_start);
    }
    result.timings.total_seconds = seconds_since(start);
    return result;
}

RouteResult route_single_step(const std::string& query, const PromptPool& pool,
                              const Registry& registry, ChatBackend& backend,
                              const InferenceSettings& settings) {
    require_nonempty(query);
    settings.check();
    const auto start = Clock::now();

    RouteResult result;
    result.mode = RouteMode::single_step;

    ChatRequest request;
    request.prompt = composite_prompt(pool, registry, query);
    request.settings = settings;
    request.request_id = next_composite_id();
    const std::string raw = backend.send(request);  // delivery errors propagate

    auto finish = [&](RouteResult&& r) {
        r.timings.classify_seconds = seconds_since(start);
        r.timings.total_seconds = r.timings.classify_seconds;
        return std::move(r);
    };

    ParsedJson parsed;
    try {
        parsed = parse_structured(raw);
    } catch (const Error& e) {
        result.parse_status = ParseStatus::failed;
        result.error = e.kind() + ": " + e.what();
        return finish(std::move(result));
    }

    const nlohmann::json& object = parsed.object;
    if (!object.contains("tool_category") || !object["tool_category"].is_string()) {
        result.parse_status = ParseStatus::failed;
        result.violations.push_back({"tool_category", "missing or not a string"});
        result.error = "UnknownToolLabel: reply names no tool category";
        return finish(std::move(result));
    }
    const std::string label = object["tool_category"].get<std::string>();
    const std::optional<Tool> tool = tool_from_id(label);
    if (!tool) {
        result.parse_status = ParseStatus::failed;
        result.violations.push_back({"tool_category", "unknown tool category '" + label + "'"});
        result.error = "UnknownToolLabel: '" + label + "' is not a tool category";
        return finish(std::move(result));
    }
    result.tool = *tool;

    if (!object.contains("entities") || !object["entities"].is_object()) {
        result.parse_status = ParseStatus::failed;
        result.violations.push_back({"entities", "missing or not an object"});
        result.error = "SchemaViolation: " + join_violations(result.violations);
        return finish(std::move(result));
    }
    ValidationResult checked = registry.validate_entities(*tool, object["entities"]);
    if (!checked.ok()) {
        result.parse_status = ParseStatus::failed;
        result.violations = std::move(checked.violations);
        result.error = "SchemaViolation: " + join_violations(result.violations);
        return finish(std::move(result));
    }
    result.entities = std::move(checked.entities);
    result.parse_status = parsed.status;
    return finish(std::move(result));
}

nlohmann::ordered_json ModeComparison::to_json() const {
    nlohmann::ordered_json out;
    out["queries"] = rows.size();
    out["two_step_mean_seconds"] = two_step_mean_seconds;
    out["single_step_mean_seconds"] = single_step_mean_seconds;
    out["agreement_rate"] = agreement_rate;
    nlohmann::ordered_json table = nlohmann::ordered_json::array();
    for (const ComparisonRow& row : rows) {
        table.push_back({
            {"query", row.query},
            {"two_step_tool", std::string(tool_id(row.two_step_tool))},
            {"single_step_tool", std::string(tool_id(row.single_step_tool))},
            {"two_step_seconds", row.two_step_seconds},
            {"single_step_seconds", row.single_step_seconds},
        });
    }
    out["rows"] = std::move(table);
    return out;
}

ModeComparison compare_modes(const std::vector<std::string>& queries,
                             const ClassifierModel& model, const PromptPool& pool,
                             const Registry& registry, ChatBackend& backend,
                             const LatencyModel& latency, const InferenceSettings& settings) {
    ModeComparison comparison;
    if (queries.empty()) return comparison;

    TalliedBackend tallied(backend, latency);
    double two_step_sum = 0.0;
    double single_step_sum = 0.0;
    std::size_t agreed = 0;
    for (const std::string& query : queries) {
        ComparisonRow row;
        row.query = query;

        RouteResult two = route_two_step(query, model, pool, registry, tallied, settings);
        row.two_step_tool = two.tool;
        row.two_step_seconds = two.timings.total_seconds + tallied.take();

        RouteResult one = route_single_step(query, pool, registry, tallied, settings);
        row.single_step_tool = one.tool;
        row.single_step_seconds = one.timings.total_seconds + tallied.take();

        two_step_sum += row.two_step_seconds;
        single_step_sum += row.single_step_seconds;
        if (row.two_step_tool == row.single_step_tool) ++agreed;
        comparison.rows.push_back(std::move(row));
    }
    const double n = static_cast<double>(comparison.rows.size());
    comparison.two_step_mean_seconds = two_step_sum / n;
    comparison.single_step_mean_seconds = single_step_sum / n;
    comparison.agreement_rate = static_cast<double>(agreed) / n;
    return comparison;
}

}  // namespace autoquery
