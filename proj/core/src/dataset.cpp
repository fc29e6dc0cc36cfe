#include <autoquery/dataset.hpp>

#include <array>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <autoquery/errors.hpp>
#include <autoquery/text.hpp>

namespace autoquery {

namespace {

DatasetSample parse_sample(const nlohmann::json& obj, const Registry& registry,
                           const std::string& where) {
    if (!obj.is_object()) throw Error("MalformedSample", where + ": expected a JSON object");
    if (!obj.contains("query") || !obj["query"].is_string())
        throw Error("MalformedSample", where + ": missing string field 'query'");
    if (!obj.contains("tool_category") || !obj["tool_category"].is_string())
        throw Error("MalformedSample", where + ": missing string field 'tool_category'");

    DatasetSample sample;
    sample.query = obj["query"].get<std::string>();
    if (text::normalize(sample.query).empty())
        throw Error("MalformedSample", where + ": empty query");
    std::string label = obj["tool_category"].get<std::string>();
    auto tool = tool_from_id(label);
    if (!tool) throw Error("MalformedSample", where + ": unknown tool category '" + label + "'");
    sample.tool = *tool;
    sample.raw_entities = obj.value("entities", nlohmann::json::object());
    if (!sample.raw_entities.is_object())
        throw Error("MalformedSample", where + ": 'entities' must be an object");
    if (obj.contains("reasoning")) {
        if (!obj["reasoning"].is_string())
            throw Error("MalformedSample", where + ": 'reasoning' must be a string");
        sample.reasoning = obj["reasoning"].get<std::string>();
    }

    ValidationResult checked = registry.validate_entities(sample.tool, sample.raw_entities);
    if (!checked.ok()) {
        std::ostringstream msg;
        msg << where << ": gold entities do not fit the " << std::string(tool_id(sample.tool))
            << " schema:";
        for (const auto& violation : checked.violations)
            msg << " [" << violation.field << ": " << violation.reason << "]";
        throw Error("MalformedSample", msg.str());
    }
    sample.gold = std::move(checked.entities);
    return sample;
}

}  // namespace

std::vector<DatasetSample> load_samples_jsonl(const std::string& path, const Registry& registry) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open dataset file: " + path);

    std::vector<DatasetSample> samples;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::normalize(line).empty()) continue;
        std::string where = path + ":" + std::to_string(line_no);
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error("MalformedSample", where + ": " + e.what());
        }
        samples.push_back(parse_sample(obj, registry, where));
    }
    return samples;
}

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw Error("CorruptBundle", "desk dataset: " + what);
}

std::array<size_t, kToolCount> class_counts(const std::vector<DatasetSample>& samples) {
    std::array<size_t, kToolCount> counts{};
    for (const auto& sample : samples) counts[static_cast<size_t>(sample.tool)]++;
    return counts;
}

}  // namespace

DeskDataset load_desk_dataset(const std::string& dir, const Registry& registry) {
    DeskDataset data;
    try {
        data.train = load_samples_jsonl(dir + "/train.jsonl", registry);
        data.holdout = load_samples_jsonl(dir + "/holdout.jsonl", registry);
        data.canonical = load_samples_jsonl(dir + "/canonical.jsonl", registry);
    } catch (const Error& e) {
        throw Error("CorruptBundle", std::string("desk dataset: ") + e.what());
    }

    require(data.train.size() == 160,
            "expected 160 training samples, found " + std::to_string(data.train.size()));
    require(data.holdout.size() == 40,
            "expected 40 holdout samples, found " + std::to_string(data.holdout.size()));
    require(data.canonical.size() == 8,
            "expected 8 canonical samples, found " + std::to_string(data.canonical.size()));

    auto train_counts = class_counts(data.train);
    auto holdout_counts = class_counts(data.holdout);
    auto canonical_counts = class_counts(data.canonical);
    for (Tool tool : all_tools()) {
        auto i = static_cast<size_t>(tool);
        std::string id{tool_id(tool)};
        require(train_counts[i] == 20, "train split has " + std::to_string(train_counts[i]) +
                                           " samples for " + id + ", expected 20");
        require(holdout_counts[i] == 5, "holdout split has " + std::to_string(holdout_counts[i]) +
                                            " samples for " + id + ", expected 5");
        require(canonical_counts[i] == 1, "canonical split must contain exactly one " + id + " sample");
    }

    std::set<std::string> train_keys;
    for (const auto& sample : data.train) {
        auto [it, inserted] = train_keys.insert(text::normalize(sample.query));
        (void)it;
        require(inserted, "duplicate training query: " + sample.query);
    }
    for (const auto& sample : data.holdout)
        require(train_keys.count(text::normalize(sample.query)) == 0,
                "holdout query also appears in train: " + sample.query);

    return data;
}

DeskDataset load_desk_dataset() {
    Registry registry;
    return load_desk_dataset(default_data_dir() + "/desk", registry);
}

std::vector<LabeledExample> to_labeled(const std::vector<DatasetSample>& samples) {
    std::vector<LabeledExample> out;
    out.reserve(samples.size());
    for (const auto& sample : samples) out.push_back({sample.query, sample.tool});
    return out;
}

std::vector<std::string> probe_queries(const DeskDataset& data) {
    std::vector<std::string> out;
    out.reserve(50);
    for (const auto& sample : data.canonical) out.push_back(sample.query);
    for (const auto& sample : data.holdout) out.push_back(sample.query);
    for (size_t i = 0; i < 2 && i < data.train.size(); ++i) out.push_back(data.train[i].query);
    return out;
}

}  // namespace autoquery
