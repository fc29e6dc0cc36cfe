#include "autoquery/extract.hpp"

#include <atomic>
#include <utility>

#include "autoquery/errors.hpp"
#include "autoquery/text.hpp"

namespace autoquery {

namespace {

constexpr std::string_view kWhitespace = " \t\r\n";

std::string format_violations(const std::vector<SchemaViolation>& violations) {
    std::string out;
    for (const auto& v : violations) {
        if (!out.empty()) out += "; ";
        out += v.field + ": " + v.reason;
    }
    return out;
}

std::string next_request_id(Tool tool) {
    static std::atomic<std::uint64_t> counter{0};
    return std::string(tool_id(tool)) + "-" + std::to_string(++counter);
}

}  // namespace

void InferenceSettings::check() const {
    if (!(temperature >= 0.0) || temperature > 2.0)
        throw Error("InvalidConfig", "temperature must be in [0, 2], got " +
                                         std::to_string(temperature));
    if (max_tokens < 1)
        throw Error("InvalidConfig",
                    "max_tokens must be positive, got " + std::to_string(max_tokens));
}

std::string_view parse_status_name(ParseStatus status) {
    switch (status) {
        case ParseStatus::clean: return "clean";
        case ParseStatus::repaired: return "repaired";
        case ParseStatus::failed: return "failed";
    }
    return "failed";
}

ParsedJson parse_structured(std::string_view raw) {
    const std::size_t open = raw.find('{');
    if (open == std::string_view::npos)
        throw Error("NoJsonFound",
                    "no JSON object in a reply of " + std::to_string(raw.size()) + " bytes");

    // Walk to the matching close brace, skipping braces inside string
    // literals.
    std::size_t close = std::string_view::npos;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < raw.size(); ++i) {
        const char c = raw[i];
        if (in_string) {
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) {
                close = i;
                break;
            }
        }
    }
    if (close == std::string_view::npos)
        throw Error("UnbalancedBraces", "object opened at byte " + std::to_string(open) +
                                            " never closes (depth " + std::to_string(depth) +
                                            " at end of reply)");

    const std::string_view block = raw.substr(open, close - open + 1);
    nlohmann::json object;
    try {
        object = nlohmann::json::parse(block);
    } catch (const nlohmann::json::parse_error& e) {
        // e.byte is 1-based within the block; report the offset in the reply.
        const std::size_t at = open + (e.byte > 0 ? e.byte - 1 : 0);
        throw Error("ParseError", "invalid JSON at byte " + std::to_string(at));
    }

    const std::size_t first = raw.find_first_not_of(kWhitespace);
    const std::size_t last = raw.find_last_not_of(kWhitespace);
    ParsedJson out;
    out.object = std::move(object);
    out.status = (first == open && last == close) ? ParseStatus::clean : ParseStatus::repaired;
    return out;
}

ExtractionResult extract_entities(const std::string& query, Tool tool, const PromptPool& pool,
                                  const Registry& registry, ChatBackend& backend,
                                  const InferenceSettings& settings) {
    settings.check();
    const PromptTemplate& tmpl = pool.select(tool);

    ChatRequest request;
    request.prompt = render(tmpl, query);
    request.settings = settings;
    request.request_id = next_request_id(tool);

    ExtractionResult result;
    result.tool = tool;
    result.raw_text = backend.send(request);

    ParsedJson parsed;
    try {
        parsed = parse_structured(result.raw_text);
    } catch (const Error& e) {
        result.status = ParseStatus::failed;
        result.error = e.kind() + ": " + e.what();
        return result;
    }

    ValidationResult checked = registry.validate_entities(tool, parsed.object);
    if (!checked.ok()) {
        result.status = ParseStatus::failed;
        result.violations = std::move(checked.violations);
        result.error = "SchemaViolation: " + format_violations(result.violations);
        return result;
    }

    result.entities = std::move(checked.entities);
    result.status = parsed.status;
    return result;
}

MockBackend::MockBackend(PromptPool pool, Registry registry, std::uint64_t seed)
    : registry_(std::move(registry)), seed_(seed) {
    for (const PromptTemplate* tmpl : pool.templates()) {
        const std::size_t at = tmpl->text.find(kQueryPlaceholder);
        Slot slot;
        slot.tool = tmpl->tool;
        slot.prefix = tmpl->text.substr(0, at);
        slot.suffix = tmpl->text.substr(at + kQueryPlaceholder.size());
        slots_.push_back(std::move(slot));
    }
    if (pool.has_composite()) {
        const std::string text = composite_template_text(pool, registry_);
        const std::size_t at = text.find(kQueryPlaceholder);
        Slot slot;
        slot.composite = true;
        slot.prefix = text.substr(0, at);
        slot.suffix = text.substr(at + kQueryPlaceholder.size());
        slots_.push_back(std::move(slot));
    }
}

void MockBackend::set_classifier(std::shared_ptr<const ClassifierModel> model) {
    classifier_ = std::move(model);
}

std::string MockBackend::send(const ChatRequest& request) {
    ++served_;
    const std::string& prompt = request.prompt;
    for (const Slot& slot : slots_) {
        if (prompt.size() < slot.prefix.size() + slot.suffix.size()) continue;
        if (prompt.compare(0, slot.prefix.size(), slot.prefix) != 0) continue;
        if (prompt.compare(prompt.size() - slot.suffix.size(), slot.suffix.size(),
                           slot.suffix) != 0)
            continue;
        const std::string query = prompt.substr(
            slot.prefix.size(), prompt.size() - slot.prefix.size() - slot.suffix.size());
        std::string body = answer(slot, query);
        if (!decorate_) return body;
        switch ((text::fnv1a64(prompt) ^ seed_) % 3) {
            case 1: return "```json\n" + body + "\n```";
            case 2:
                return "Sure - here is the JSON you asked for:\n" + body +
                       "\nLet me know if anything looks off.";
            default: return body;
        }
    }
    throw Error("UnknownPrompt",
                "prompt does not match any template this backend knows how to answer");
}

std::string MockBackend::answer(const Slot& slot, const std::string& query) const {
    if (!slot.composite) return mock_extract(query, slot.tool, registry_).to_json().dump();

    if (!classifier_)
        throw Error("NoClassifier",
                    "composite prompts need a classifier to pick the tool category");
    const Tool tool = predict(*classifier_, query).tool;
    nlohmann::ordered_json reply;
    reply["tool_category"] = std::string(tool_id(tool));
    reply["entities"] = tool == Tool::others
                            ? nlohmann::ordered_json::object()
                            : mock_extract(query, tool, registry_).to_json();
    return reply.dump();
}

}  // namespace autoquery
