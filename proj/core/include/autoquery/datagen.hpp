#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "autoquery/dataset.hpp"
#include "autoquery/extract.hpp"
#include "autoquery/registry.hpp"

// Synthetic-sample scaffolding: few-shot generation prompts built from seed
// samples, parsing/validation/dedup of what the model sends back, and
// review bookkeeping. Review itself stays human work; the status field and
// JSONL round-trip just make it auditable.
namespace autoquery {

// Seeds are ordinary labeled samples; the desk dataset loaders produce them.
using SeedSample = DatasetSample;

enum class ReviewStatus : std::uint8_t { pending, approved, rejected };

std::string_view review_status_name(ReviewStatus status);
std::optional<ReviewStatus> review_status_from_name(std::string_view name);

struct Provenance {
    std::string generator;            // model id that produced the sample
    std::vector<std::size_t> seed_indices;  // indices into the seed list used
    std::string timestamp;            // caller-supplied, kept verbatim

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct GeneratedSample {
    std::string query;
    Tool tool = Tool::others;
    EntityMap entities;
    std::optional<std::string> reasoning;
    ReviewStatus review_status = ReviewStatus::pending;
    Provenance provenance;
};

// Deterministic few-shot prompt: the seed samples as labeled JSON lines plus
// a request for `count` new ones in the same one-line-per-sample format.
// Throws Error("EmptySeeds") with no seeds and Error("MixedSeeds") when a
// seed's tool differs from `tool`.
std::string build_generation_prompt(const std::vector<SeedSample>& seeds, Tool tool,
                                    std::size_t count);

struct GenerationConfig {
    std::string generator_id = "mock-paraphraser";
    std::string timestamp;        // recorded verbatim in provenance
    std::size_t seeds_per_prompt = 4;  // 0 = all available seeds
    std::uint64_t seed = 0;       // rotates which seeds land in the prompt
    InferenceSettings settings;
};

struct GenerationLog {
    Tool tool = Tool::others;
    std::size_t requested = 0;
    std::size_t produced_lines = 0;
    std::size_t dropped_malformed = 0;
    std::size_t dropped_invalid = 0;
    std::size_t dropped_duplicate = 0;
    std::size_t kept = 0;
    std::optional<std::string> error;  // backend/precondition failure for this tool

    nlohmann::ordered_json to_json() const;
};

struct GenerationResult {
    std::vector<GeneratedSample> samples;  // tool registry order, then generation order
    std::vector<GenerationLog> log;        // one row per requested tool
};

// Per requested tool: build the prompt from that tool's seeds, make one
// backend call, parse each reply line, drop candidates that fail schema
// validation or duplicate a seed/earlier sample, and mark the rest pending.
// Counts may undershoot the request - drops are reported, never papered
// over. A tool whose backend call or preconditions fail gets its error
// recorded in the log while the other tools' results survive.
GenerationResult generate(ChatBackend& backend, const std::vector<SeedSample>& seeds,
                          const std::map<Tool, std::size_t>& per_tool_counts,
                          const Registry& registry, const GenerationConfig& config = {});

// Drops samples whose normalized query (lowercase, collapsed, punctuation
// stripped) duplicates an earlier sample or any seed. Idempotent.
std::vector<GeneratedSample> dedup(const std::vector<GeneratedSample>& samples,
                                   const std::vector<SeedSample>& seeds = {});

// Backend that answers generation prompts with deterministic paraphrases of
// the embedded seed samples (entities copied from the seed, so every line
// validates). Knobs let tests inject malformed or duplicate lines.
class GenerationMockBackend : public ChatBackend {
public:
    explicit GenerationMockBackend(std::uint64_t seed = 0) : seed_(seed) {}

    void set_malformed_every(std::size_t n) { malformed_every_ = n; }  // 0 = never
    void set_repeat_first(bool on) { repeat_first_ = on; }

    // Throws Error("UnknownPrompt") for anything but a generation prompt.
    std::string send(const ChatRequest& request) override;

private:
    std::uint64_t seed_ = 0;
    std::size_t malformed_every_ = 0;
    bool repeat_first_ = false;
};

nlohmann::ordered_json generated_to_json(const GeneratedSample& sample);
GeneratedSample generated_from_json(const nlohmann::json& doc, const Registry& registry);

void save_generated_jsonl(const std::vector<GeneratedSample>& samples,
                          const std::filesystem::path& path);
// Throws Error("MalformedSample") naming file:line on bad rows.
std::vector<GeneratedSample> load_generated_jsonl(const std::filesystem::path& path,
                                                  const Registry& registry);

}  // namespace autoquery
