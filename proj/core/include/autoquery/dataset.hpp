#pragma once

#include <optional>
#include <string>
#include <vector>

#include <autoquery/classifier.hpp>
#include <autoquery/data_paths.hpp>
#include <autoquery/registry.hpp>

// Bundled desk dataset: a small hand-labeled corpus used for training the
// default classifier, for regression fixtures and for seeding data generation.
// Layout on disk: <dir>/train.jsonl, <dir>/holdout.jsonl, <dir>/canonical.jsonl,
// one JSON object per line with keys:
//   query (string), tool_category (string), entities (object, optional),
//   reasoning (string, optional)
namespace autoquery {

struct DatasetSample {
    std::string query;
    Tool tool = Tool::others;
    nlohmann::json raw_entities;  // as authored (may omit null fields)
    EntityMap gold;               // normalized: schema order, missing fields null
    std::optional<std::string> reasoning;
};

struct DeskDataset {
    std::vector<DatasetSample> train;
    std::vector<DatasetSample> holdout;
    std::vector<DatasetSample> canonical;
};

// Generic JSONL loader. Throws Error("MalformedSample") naming file and line on
// bad JSON, unknown tool ids, or entities that do not validate cleanly.
std::vector<DatasetSample> load_samples_jsonl(const std::string& path, const Registry& registry);

// Loads the three bundle files and verifies the bundle invariants:
// 160/40/8 samples, 20 train + 5 holdout per tool, exactly one canonical per
// tool, schema-clean gold entities, no duplicate or train/holdout-shared
// queries under normalization. Any damage throws Error("CorruptBundle").
DeskDataset load_desk_dataset(const std::string& dir, const Registry& registry);
DeskDataset load_desk_dataset();  // bundled data, default registry

std::vector<LabeledExample> to_labeled(const std::vector<DatasetSample>& samples);

// Fixed 50-query probe set used when comparing routing modes: the 8 canonical
// queries, the 40 holdout queries, and the first 2 training queries.
std::vector<std::string> probe_queries(const DeskDataset& data);

}  // namespace autoquery
