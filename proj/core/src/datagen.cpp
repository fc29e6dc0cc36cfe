#include "autoquery/datagen.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>
#include <unordered_set>

#include "autoquery/errors.hpp"
#include "autoquery/text.hpp"

namespace autoquery {
namespace {

std::string dedup_key(std::string_view query) { return text::normalize_strip_punct(query); }

nlohmann::ordered_json seed_line(const SeedSample& seed) {
    nlohmann::ordered_json line;
    line["query"] = seed.query;
    line["tool_category"] = std::string(tool_id(seed.tool));
    line["entities"] = seed.gold.to_json();
    if (seed.reasoning) line["reasoning"] = *seed.reasoning;
    return line;
}

}  // namespace

std::string_view review_status_name(ReviewStatus status) {
    switch (status) {
        case ReviewStatus::pending: return "pending";
        case ReviewStatus::approved: return "approved";
        case ReviewStatus::rejected: return "rejected";
    }
    return "pending";
}

std::optional<ReviewStatus> review_status_from_name(std::string_view name) {
    if (name == "pending") return ReviewStatus::pending;
    if (name == "approved") return ReviewStatus::approved;
    if (name == "rejected") return ReviewStatus::rejected;
    return std::nullopt;
}

std::string build_generation_prompt(const std::vector<SeedSample>& seeds, Tool tool,
                                    std::size_t count) {
    if (seeds.empty())
        throw Error("EmptySeeds", "generation prompts need at least one seed sample");
    for (const auto& seed : seeds) {
        if (seed.tool != tool)
            throw Error("MixedSeeds", "seed '" + seed.query + "' is labeled " +
                                          std::string(tool_id(seed.tool)) + ", not " +
                                          std::string(tool_id(tool)));
    }

    std::ostringstream out;
    out << "You write labeled training samples for an automotive query engine.\n"
        << "Tool category: " << tool_id(tool) << " - " << tool_description(tool) << "\n"
        << "Each sample is one JSON object on its own line with keys \"query\", "
           "\"tool_category\" and \"entities\"";
    std::vector<std::string> fields = seeds.front().gold.keys();
    if (fields.empty()) {
        out << "; the entities object stays empty.\n";
    } else {
        out << "; entity fields: ";
        for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? ", " : "") << fields[i];
        out << ".\n";
    }
    out << "Existing samples:\n";
    for (const auto& seed : seeds) out << seed_line(seed).dump() << "\n";
    out << "Write " << count << " new samples for the " << tool_id(tool)
        << " tool category. Vary the vehicles, wording and specifics; never reuse an "
           "existing query. Respond with exactly "
        << count << " JSON lines and nothing else.\n";
    return out.str();
}

GenerationResult generate(ChatBackend& backend, const std::vector<SeedSample>& seeds,
                          const std::map<Tool, std::size_t>& per_tool_counts,
                          const Registry& registry, const GenerationConfig& config) {
    config.settings.check();

    GenerationResult result;
    std::unordered_set<std::string> taken;
    for (const auto& seed : seeds) taken.insert(dedup_key(seed.query));

    for (Tool tool : all_tools()) {
        auto want = per_tool_counts.find(tool);
        if (want == per_tool_counts.end() || want->second == 0) continue;

        GenerationLog log;
        log.tool = tool;
        log.requested = want->second;

        std::vector<std::size_t> indices;
        for (std::size_t i = 0; i < seeds.size(); ++i)
            if (seeds[i].tool == tool) indices.push_back(i);

        try {
            if (indices.empty())
                throw Error("EmptySeeds", "no seeds cover the " + std::string(tool_id(tool)) +
                                              " tool category");
            if (config.seeds_per_prompt > 0 && indices.size() > config.seeds_per_prompt) {
                std::mt19937_64 rng(config.seed ^ text::fnv1a64(tool_id(tool)));
                std::shuffle(indices.begin(), indices.end(), rng);
                indices.resize(config.seeds_per_prompt);
                std::sort(indices.begin(), indices.end());
            }

            std::vector<SeedSample> chosen;
            chosen.reserve(indices.size());
            for (std::size_t i : indices) chosen.push_back(seeds[i]);

            ChatRequest request;
            request.prompt = build_generation_prompt(chosen, tool, log.requested);
            request.settings = config.settings;
            request.request_id = "gen-" + std::string(tool_id(tool));

            std::istringstream reply(backend.send(request));
            std::string line;
            while (log.kept < log.requested && std::getline(reply, line)) {
                if (text::collapse_whitespace(line).empty()) continue;
                ++log.produced_lines;

                nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
                if (doc.is_discarded() || !doc.is_object() || !doc.contains("query") ||
                    !doc["query"].is_string()) {
                    ++log.dropped_malformed;
                    continue;
                }
                std::string query = doc["query"].get<std::string>();
                if (text::collapse_whitespace(query).empty()) {
                    ++log.dropped_malformed;
                    continue;
                }
                if (doc.value("tool_category", std::string(tool_id(tool))) != tool_id(tool)) {
                    ++log.dropped_invalid;
                    continue;
                }
                ValidationResult checked = registry.validate_entities(
                    tool, doc.value("entities", nlohmann::json::object()));
                if (!checked.ok()) {
                    ++log.dropped_invalid;
                    continue;
                }
                if (!taken.insert(dedup_key(query)).second) {
                    ++log.dropped_duplicate;
                    continue;
                }

                GeneratedSample sample;
                sample.query = std::move(query);
                sample.tool = tool;
                sample.entities = std::move(checked.entities);
                if (doc.contains("reasoning") && doc["reasoning"].is_string())
                    sample.reasoning = doc["reasoning"].get<std::string>();
                sample.provenance = {config.generator_id, indices, config.timestamp};
                result.samples.push_back(std::move(sample));
                ++log.kept;
            }
        } catch (const Error& e) {
            log.error = std::string(e.kind()) + ": " + e.what();
        }
        result.log.push_back(std::move(log));
    }
    return result;
}

std::vector<GeneratedSample> dedup(const std::vector<GeneratedSample>& samples,
                                   const std::vector<SeedSample>& seeds) {
    std::unordered_set<std::string> taken;
    for (const auto& seed : seeds) taken.insert(dedup_key(seed.query));

    std::vector<GeneratedSample> out;
    for (const auto& sample : samples)
        if (taken.insert(dedup_key(sample.query)).second) out.push_back(sample);
    return out;
}

std::string GenerationMockBackend::send(const ChatRequest& request) {
    static const std::regex kAsk(R"(Write (\d+) new samples for the ([a-z_]+) tool category)");
    std::smatch m;
    if (!std::regex_search(request.prompt, m, kAsk))
        throw Error("UnknownPrompt", "reply requested for a prompt this mock cannot answer");
    const std::size_t count = std::stoull(m[1].str());

    // The seed samples ride along inside the prompt, one JSON line each.
    std::vector<nlohmann::json> seeds;
    std::istringstream lines(request.prompt);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty() || line.front() != '{') continue;
        nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
        if (!doc.is_discarded() && doc.is_object() && doc.contains("query")) seeds.push_back(doc);
    }
    if (seeds.empty())
        throw Error("UnknownPrompt", "generation prompt carries no seed samples");

    static constexpr std::array<const char*, 5> kLead = {
        "Quick question - ", "", "Asking for a friend: ", "Need advice: ", "Follow-up: "};
    static constexpr std::array<const char*, 5> kTail = {
        "", " Thanks in advance!", "", " Any pointers?", ""};

    std::ostringstream out;
    std::string first_query;
    for (std::size_t n = 0; n < count; ++n) {
        if (malformed_every_ && (n + 1) % malformed_every_ == 0) {
            out << "this line is not json {\n";
            continue;
        }
        const nlohmann::json& seed = seeds[n % seeds.size()];
        const std::size_t variant = (n / seeds.size() + seed_) % kLead.size();
        const std::size_t round = n / (seeds.size() * kLead.size());

        std::string query = std::string(kLead[variant]) +
                            seed["query"].get<std::string>() + kTail[variant];
        if (round > 0) query += " (take " + std::to_string(round + 1) + ")";
        if (repeat_first_) {
            if (first_query.empty())
                first_query = query;
            else
                query = first_query;
        }

        nlohmann::ordered_json doc;
        doc["query"] = query;
        doc["tool_category"] = seed.value("tool_category", "others");
        doc["entities"] = seed.value("entities", nlohmann::json::object());
        if (seed.contains("reasoning")) doc["reasoning"] = seed["reasoning"];
        out << doc.dump() << "\n";
    }
    return out.str();
}

nlohmann::ordered_json GenerationLog::to_json() const {
    nlohmann::ordered_json doc;
    doc["tool_category"] = std::string(tool_id(tool));
    doc["requested"] = requested;
    doc["produced_lines"] = produced_lines;
    doc["dropped_malformed"] = dropped_malformed;
    doc["dropped_invalid"] = dropped_invalid;
    doc["dropped_duplicate"] = dropped_duplicate;
    doc["kept"] = kept;
    if (error) doc["error"] = *error;
    return doc;
}

nlohmann::ordered_json generated_to_json(const GeneratedSample& sample) {
    nlohmann::ordered_json doc;
    doc["query"] = sample.query;
    doc["tool_category"] = std::string(tool_id(sample.tool));
    doc["entities"] = sample.entities.to_json();
    if (sample.reasoning) doc["reasoning"] = *sample.reasoning;
    doc["review_status"] = std::string(review_status_name(sample.review_status));
    nlohmann::ordered_json prov;
    prov["generator"] = sample.provenance.generator;
    prov["seed_indices"] = sample.provenance.seed_indices;
    prov["timestamp"] = sample.provenance.timestamp;
    doc["provenance"] = prov;
    return doc;
}

GeneratedSample generated_from_json(const nlohmann::json& doc, const Registry& registry) {
    if (!doc.is_object() || !doc.contains("query") || !doc["query"].is_string())
        throw Error("MalformedSample", "generated sample needs a string 'query'");

    GeneratedSample sample;
    sample.query = doc["query"].get<std::string>();

    const std::string label = doc.value("tool_category", "");
    auto tool = tool_from_id(label);
    if (!tool) throw Error("MalformedSample", "unknown tool category '" + label + "'");
    sample.tool = *tool;

    ValidationResult checked =
        registry.validate_entities(sample.tool, doc.value("entities", nlohmann::json::object()));
    if (!checked.ok()) {
        std::ostringstream msg;
        msg << "entities do not fit the " << tool_id(sample.tool) << " schema:";
        for (const auto& v : checked.violations) msg << " " << v.field << " (" << v.reason << ")";
        throw Error("MalformedSample", msg.str());
    }
    sample.entities = std::move(checked.entities);

    if (doc.contains("reasoning")) {
        if (!doc["reasoning"].is_string())
            throw Error("MalformedSample", "'reasoning' must be a string");
        sample.reasoning = doc["reasoning"].get<std::string>();
    }
    if (doc.contains("review_status")) {
        if (!doc["review_status"].is_string())
            throw Error("MalformedSample", "'review_status' must be a string");
        auto status = review_status_from_name(doc["review_status"].get<std::string>());
        if (!status)
            throw Error("MalformedSample", "unknown review status '" +
                                               doc["review_status"].get<std::string>() + "'");
        sample.review_status = *status;
    }
    if (doc.contains("provenance")) {
        const nlohmann::json& prov = doc["provenance"];
        if (!prov.is_object()) throw Error("MalformedSample", "'provenance' must be an object");
        sample.provenance.generator = prov.value("generator", "");
        if (prov.contains("seed_indices"))
            sample.provenance.seed_indices = prov["seed_indices"].get<std::vector<std::size_t>>();
        sample.provenance.timestamp = prov.value("timestamp", "");
    }
    return sample;
}

void save_generated_jsonl(const std::vector<GeneratedSample>& samples,
                          const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot open " + path.string() + " for writing");
    for (const auto& sample : samples) out << generated_to_json(sample).dump() << "\n";
    if (!out) throw Error("IoError", "failed writing " + path.string());
}

std::vector<GeneratedSample> load_generated_jsonl(const std::filesystem::path& path,
                                                  const Registry& registry) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open " + path.string());

    std::vector<GeneratedSample> samples;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::collapse_whitespace(line).empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded())
            throw Error("MalformedSample", where + ": line is not valid JSON");
        try {
            samples.push_back(generated_from_json(doc, registry));
        } catch (const Error& e) {
            throw Error("MalformedSample", where + ": " + e.what());
        }
    }
    return samples;
}

}  // namespace autoquery
