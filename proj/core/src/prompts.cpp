#include <autoquery/prompts.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <autoquery/data_paths.hpp>
#include <autoquery/errors.hpp>

namespace autoquery {

namespace {

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
    std::size_t count = 0;
    for (std::size_t pos = text.find(needle); pos != std::string_view::npos;
         pos = text.find(needle, pos + needle.size()))
        ++count;
    return count;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open prompt file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct RawPromptFile {
    nlohmann::json front;
    std::string body;
};

// Front matter is a JSON object on the lines before the first `---` line.
RawPromptFile split_front_matter(const std::string& content, const std::string& path) {
    std::istringstream in(content);
    std::string line;
    std::string front_text;
    bool found_divider = false;
    std::string body;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!found_divider && line == "---") {
            found_divider = true;
            continue;
        }
        if (found_divider)
            body += line + "\n";
        else
            front_text += line + "\n";
    }
    if (!found_divider)
        throw Error("InvalidTemplate", path + ": missing `---` front-matter divider");
    RawPromptFile raw;
    try {
        raw.front = nlohmann::json::parse(front_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("InvalidTemplate", path + ": front matter is not valid JSON: " + e.what());
    }
    if (!raw.front.is_object())
        throw Error("InvalidTemplate", path + ": front matter must be a JSON object");
    raw.body = std::move(body);
    return raw;
}

std::vector<FewshotExample> parse_fewshot(const nlohmann::json& front, Tool tool,
                                          const Registry& registry, const std::string& path) {
    if (!front.contains("fewshot") || !front["fewshot"].is_array())
        throw Error("InvalidTemplate", path + ": front matter needs a `fewshot` array");
    std::vector<FewshotExample> out;
    for (const auto& entry : front["fewshot"]) {
        if (!entry.is_object() || !entry.contains("query") || !entry["query"].is_string())
            throw Error("InvalidTemplate", path + ": each fewshot entry needs a string `query`");
        FewshotExample example;
        example.query = entry["query"].get<std::string>();
        ValidationResult checked =
            registry.validate_entities(tool, entry.value("entities", nlohmann::json::object()));
        if (!checked.ok()) {
            std::string msg = path + ": fewshot entities do not fit the " +
                              std::string(tool_id(tool)) + " schema:";
            for (const auto& v : checked.violations) msg += " [" + v.field + ": " + v.reason + "]";
            throw Error("InvalidTemplate", msg);
        }
        example.entities = std::move(checked.entities);
        out.push_back(std::move(example));
    }
    return out;
}

std::string expected_front_tool(const nlohmann::json& front, const std::string& path) {
    if (!front.contains("tool") || !front["tool"].is_string())
        throw Error("InvalidTemplate", path + ": front matter needs a string `tool`");
    return front["tool"].get<std::string>();
}

PromptTemplate load_template(const std::string& path, Tool tool, const Registry& registry) {
    RawPromptFile raw = split_front_matter(read_file(path), path);
    std::string declared = expected_front_tool(raw.front, path);
    if (declared != tool_id(tool))
        throw Error("InvalidTemplate", path + ": front matter declares tool '" + declared +
                                           "' but the filename implies '" +
                                           std::string(tool_id(tool)) + "'");

    PromptTemplate tmpl;
    tmpl.tool = tool;
    tmpl.instruction = raw.body;
    tmpl.fewshot = parse_fewshot(raw.front, tool, registry, path);
    if (tmpl.fewshot.empty())
        throw Error("InvalidTemplate", path + ": needs at least one fewshot entry");

    if (count_occurrences(tmpl.instruction, kExamplesPlaceholder) != 1)
        throw Error("InvalidTemplate",
                    path + ": body must contain {{examples}} exactly once");
    std::string section;
    for (std::size_t i = 0; i < tmpl.fewshot.size(); ++i) {
        if (i) section += "\n\n";
        section += format_fewshot(tmpl.fewshot[i]);
    }
    tmpl.text = splice(tmpl.instruction, kExamplesPlaceholder, section);
    if (count_occurrences(tmpl.text, kQueryPlaceholder) != 1)
        throw Error("InvalidTemplate",
                    path + ": expanded body must contain {{query}} exactly once");
    return tmpl;
}

CompositeHeader load_composite(const std::string& path, const Registry& registry) {
    RawPromptFile raw = split_front_matter(read_file(path), path);
    std::string declared = expected_front_tool(raw.front, path);
    if (declared != "_composite")
        throw Error("InvalidTemplate", path + ": front matter must declare tool \"_composite\"");

    auto fewshot = parse_fewshot(raw.front, Tool::others, registry, path);
    if (fewshot.size() != 1)
        throw Error("InvalidTemplate",
                    path + ": composite front matter needs exactly one fewshot entry "
                           "(the `others` exemplar)");

    if (count_occurrences(raw.body, kToolsPlaceholder) != 1)
        throw Error("InvalidTemplate", path + ": body must contain {{tools}} exactly once");
    if (count_occurrences(raw.body, kQueryPlaceholder) != 1)
        throw Error("InvalidTemplate", path + ": body must contain {{query}} exactly once");

    CompositeHeader header;
    header.instruction = raw.body;
    header.others_example = std::move(fewshot.front());
    return header;
}

}  // namespace

std::string splice(std::string_view template_text, std::string_view placeholder,
                   std::string_view value) {
    std::size_t pos = template_text.find(placeholder);
    if (pos == std::string_view::npos)
        throw Error("InvalidTemplate",
                    "placeholder " + std::string(placeholder) + " not present");
    std::string out;
    out.reserve(template_text.size() - placeholder.size() + value.size());
    out.append(template_text.substr(0, pos));
    out.append(value);
    out.append(template_text.substr(pos + placeholder.size()));
    return out;
}

std::string format_fewshot(const FewshotExample& example) {
    return "Query: " + example.query + "\nJSON: " + example.entities.to_json().dump();
}

PromptPool PromptPool::from_directory(const std::string& dir, const Registry& registry) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
        throw Error("IoError", "prompt pool directory not found: " + dir);

    PromptPool pool;
    for (Tool tool : all_tools()) {
        if (tool == Tool::others) continue;
        std::string path = dir + "/" + std::string(tool_id(tool)) + ".prompt";
        if (std::filesystem::exists(path))
            pool.by_tool_[static_cast<std::size_t>(tool)] = load_template(path, tool, registry);
    }
    std::string composite_path = dir + "/_composite.prompt";
    if (std::filesystem::exists(composite_path))
        pool.composite_ = load_composite(composite_path, registry);
    return pool;
}

PromptPool PromptPool::bundled(const Registry& registry) {
    return from_directory(default_data_dir() + "/prompts", registry);
}

const PromptTemplate& PromptPool::select(Tool tool) const {
    if (tool == Tool::others)
        throw Error("NoPromptForOthers",
                    "the fallback category has no entity schema and skips extraction");
    const auto& slot = by_tool_[static_cast<std::size_t>(tool)];
    if (!slot)
        throw Error("MissingTemplate",
                    "prompt pool has no template for " + std::string(tool_id(tool)));
    return *slot;
}

bool PromptPool::has(Tool tool) const {
    return tool != Tool::others && by_tool_[static_cast<std::size_t>(tool)].has_value();
}

const CompositeHeader& PromptPool::composite() const {
    if (!composite_) throw Error("MissingTemplate", "prompt pool has no composite header");
    return *composite_;
}

std::vector<const PromptTemplate*> PromptPool::templates() const {
    std::vector<const PromptTemplate*> out;
    for (const auto& slot : by_tool_)
        if (slot) out.push_back(&*slot);
    return out;
}

std::string render(const PromptTemplate& tmpl, const std::string& query) {
    if (text::normalize(query).empty())
        throw Error("InvalidQuery", "cannot render a prompt for an empty query");
    return splice(tmpl.text, kQueryPlaceholder, query);
}

std::string composite_template_text(const PromptPool& pool, const Registry& registry) {
    const CompositeHeader& header = pool.composite();

    std::string tools_section;
    for (Tool tool : all_tools()) {
        if (!tools_section.empty()) tools_section += "\n";
        tools_section += "- " + std::string(tool_id(tool)) + ": " +
                         std::string(tool_description(tool)) + "\n";
        const EntitySchema& schema = registry.schema_for(tool);
        tools_section += "  fields: ";
        if (schema.fields.empty()) {
            tools_section += "(none — entities must be an empty object)";
        } else {
            for (std::size_t i = 0; i < schema.fields.size(); ++i) {
                if (i) tools_section += ", ";
                tools_section += schema.fields[i].name + " (" +
                                 std::string(value_kind_name(schema.fields[i].kind)) + ")";
            }
        }
        tools_section += "\n";

        const FewshotExample& example =
            tool == Tool::others ? header.others_example : pool.select(tool).fewshot.at(0);
        nlohmann::ordered_json out;
        out["tool_category"] = std::string(tool_id(tool));
        out["entities"] = example.entities.to_json();
        tools_section +=
            "  example: Query: " + example.query + "\n  JSON: " + out.dump() + "\n";
    }

    return splice(header.instruction, kToolsPlaceholder, tools_section);
}

std::string composite_prompt(const PromptPool& pool, const Registry& registry,
                             const std::string& query) {
    if (text::normalize(query).empty())
        throw Error("InvalidQuery", "cannot render a prompt for an empty query");
    return splice(composite_template_text(pool, registry), kQueryPlaceholder, query);
}

}  // namespace autoquery
