#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <autoquery/registry.hpp>
#include <autoquery/text.hpp>

// Few-shot extraction prompts, one per entity-bearing tool, stored as editable
// files: a JSON front-matter block {tool, fewshot:[{query, entities}...]}
// terminated by a line of `---`, then the instruction body. The body carries
// two placeholders: {{examples}} (expanded once at load into the rendered
// few-shot section) and {{query}} (spliced at render time). The composite
// header used by single-step mode lives in `_composite.prompt` with a
// {{tools}} placeholder instead of {{examples}}; its single fewshot entry is
// the `others` exemplar shown in the tool list.
namespace autoquery {

inline constexpr std::string_view kQueryPlaceholder = "{{query}}";
inline constexpr std::string_view kExamplesPlaceholder = "{{examples}}";
inline constexpr std::string_view kToolsPlaceholder = "{{tools}}";

struct FewshotExample {
    std::string query;
    EntityMap entities;  // normalized against the tool schema at load
};

struct PromptTemplate {
    Tool tool = Tool::others;
    std::string instruction;  // body as authored, placeholders intact
    std::vector<FewshotExample> fewshot;
    std::string text;  // instruction with {{examples}} expanded; {{query}} remains
};

struct CompositeHeader {
    std::string instruction;        // body as authored ({{tools}}, {{query}})
    FewshotExample others_example;  // exemplar for the `others` row of the tool list
};

class PromptPool {
public:
    // Reads every `<tool>.prompt` present in `dir` plus `_composite.prompt`.
    // Missing files leave gaps that select()/composite accessors report;
    // present files are validated (front-matter tool matches the filename,
    // fewshot entities fit the schema, placeholders occur exactly once).
    static PromptPool from_directory(const std::string& dir, const Registry& registry);
    static PromptPool bundled(const Registry& registry);

    const PromptTemplate& select(Tool tool) const;
    bool has(Tool tool) const;

    const CompositeHeader& composite() const;  // MissingTemplate if absent
    bool has_composite() const { return composite_.has_value(); }

    // All loaded templates in registry order (used by the mock backend to
    // recognize which prompt a request was rendered from).
    std::vector<const PromptTemplate*> templates() const;

private:
    std::array<std::optional<PromptTemplate>, kToolCount> by_tool_;
    std::optional<CompositeHeader> composite_;
};

// Single-pass placeholder splice; text inserted verbatim, no re-expansion.
std::string splice(std::string_view template_text, std::string_view placeholder,
                   std::string_view value);

// Renders a per-tool extraction prompt: template text with {{query}} replaced
// by the raw query. Length-additive:
//   len(out) == len(template.text) - len("{{query}}") + len(query).
std::string render(const PromptTemplate& tmpl, const std::string& query);

// The single-step prompt body: every tool description, schema and one example,
// with {{query}} still unexpanded. Deterministic for fixed pool + registry.
std::string composite_template_text(const PromptPool& pool, const Registry& registry);

// composite_template_text with the query spliced in.
std::string composite_prompt(const PromptPool& pool, const Registry& registry,
                             const std::string& query);

// Whitespace-delimited token count, the size proxy used by the latency model.
inline std::size_t token_count(std::string_view text) { return text::token_count(text); }

// Renders the `Query:`/`JSON:` block for one exemplar, shared by template
// expansion and the composite tool list.
std::string format_fewshot(const FewshotExample& example);

}  // namespace autoquery
