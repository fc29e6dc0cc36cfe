#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "autoquery/dataset.hpp"
#include "autoquery/pipeline.hpp"
#include "autoquery/registry.hpp"

namespace autoquery {

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

// rows = gold, cols = predicted, both in registry order
using ConfusionMatrix = std::array<std::array<std::size_t, kToolCount>, kToolCount>;

struct ClassificationReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;     // unweighted mean over classes with support
    double weighted_f1 = 0.0;  // support-weighted mean
    std::array<ClassMetrics, kToolCount> per_class{};
    ConfusionMatrix confusion{};
    std::size_t total = 0;

    nlohmann::ordered_json to_json() const;
    std::string to_table() const;
};

// Standard multi-class metrics over (gold, predicted) pairs. Per-class
// F1 = 2PR/(P+R), defined as 0 when P+R == 0. Throws Error("EmptyInput")
// on an empty list.
ClassificationReport evaluate_classification(const std::vector<std::pair<Tool, Tool>>& pairs);

// Undirected word/phrase equivalence groups applied after normalization,
// e.g. "chevy" ~ "chevrolet". Loaded from a JSON array of string arrays.
class SynonymTable {
public:
    SynonymTable() = default;

    static SynonymTable from_json(const nlohmann::json& doc);
    static SynonymTable from_json_file(const std::filesystem::path& path);
    // core/data/synonyms.json (AUTOQUERY_DATA_DIR override honored)
    static SynonymTable bundled();

    void add_group(const std::vector<std::string>& words);

    // true when the normalized forms are equal or share a group
    bool same(std::string_view a, std::string_view b) const;

    std::size_t size() const { return canon_of_.size(); }

private:
    std::unordered_map<std::string, std::string> canon_of_;
};

struct FieldDiff {
    std::string field;
    std::string gold;       // rendered value; "null" for absent
    std::string predicted;

    friend bool operator==(const FieldDiff&, const FieldDiff&) = default;
};

struct MatchResult {
    bool pass = false;
    std::vector<FieldDiff> field_diffs;
};

// A grader's binary verdict, made deterministic: per-field compare with
// strings normalized (lowercase, trim, collapse) and optionally routed
// through the synonym table; integers numerically; null matches only null.
// pass iff every field matches. Throws Error("SchemaMismatch") when either
// map's key set is not exactly the schema's fields. Without a synonym table
// the verdict is symmetric in gold/predicted.
MatchResult semantic_match(const EntityMap& gold, const EntityMap& predicted,
                           const EntitySchema& schema,
                           const SynonymTable* synonyms = nullptr);

struct SampleScore {
    std::string id;  // the query
    bool pass = false;
    Tool gold_tool = Tool::others;
    Tool routed_tool = Tool::others;
    std::vector<FieldDiff> field_diffs;
};

struct ExtractionReport {
    double pass_rate = 0.0;  // passes / n; 0 when n == 0
    std::size_t n = 0;
    bool empty_input = false;  // flags the degenerate n == 0 report
    std::vector<SampleScore> per_sample;
    std::map<std::string, std::size_t> per_field_mismatch_counts;

    nlohmann::ordered_json to_json() const;
    std::string to_table() const;
};

using RouteFn = std::function<RouteResult(const std::string& query)>;

// Routes every sample and scores it against the gold entities under the gold
// tool's schema. A sample routed to the wrong tool fails outright (diff
// recorded under "tool_category"); a right-tool result whose entities never
// materialized (failed extraction) fails under "_extraction". Failures are
// data, not exceptions. `parallelism` bounds concurrent route calls; the
// report is identical for any bound.
ExtractionReport evaluate_extraction(const std::vector<DatasetSample>& samples,
                                     const RouteFn& route_fn, const Registry& registry,
                                     const SynonymTable* synonyms = nullptr,
                                     std::size_t parallelism = 1);

struct LatencyReport {
    double mean_seconds = 0.0;
    double p50_seconds = 0.0;
    double p95_seconds = 0.0;
    std::size_t n = 0;

    nlohmann::ordered_json to_json() const;
};

// Mean plus nearest-rank percentiles: the ceil(q*n)-th smallest sample.
// Throws Error("EmptyInput") on an empty list.
LatencyReport latency_stats(const std::vector<double>& seconds);

}  // namespace autoquery
