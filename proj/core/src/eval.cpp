#include "autoquery/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numeric>

#include "autoquery/data_paths.hpp"
#include "autoquery/errors.hpp"
#include "autoquery/text.hpp"

namespace autoquery {

namespace {

double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

std::string render_value(const EntityValue* v) {
    if (v == nullptr || is_null(*v)) return "null";
    if (const auto* s = std::get_if<std::string>(v)) return *s;
    return std::to_string(std::get<std::int64_t>(*v));
}

}  // namespace

ClassificationReport evaluate_classification(
    const std::vector<std::pair<Tool, Tool>>& pairs) {
    if (pairs.empty()) throw Error("EmptyInput", "no (gold, predicted) pairs to score");

    ClassificationReport report;
    report.total = pairs.size();
    for (const auto& [gold, predicted] : pairs)
        ++report.confusion[static_cast<std::size_t>(gold)][static_cast<std::size_t>(predicted)];

    std::size_t trace = 0;
    double macro_sum = 0.0;
    std::size_t supported = 0;
    double weighted_sum = 0.0;
    for (std::size_t c = 0; c < kToolCount; ++c) {
        std::size_t tp = report.confusion[c][c];
        std::size_t row = 0, col = 0;
        for (std::size_t k = 0; k < kToolCount; ++k) {
            row += report.confusion[c][k];
            col += report.confusion[k][c];
        }
        ClassMetrics& m = report.per_class[c];
        m.support = row;
        m.precision = safe_div(static_cast<double>(tp), static_cast<double>(col));
        m.recall = safe_div(static_cast<double>(tp), static_cast<double>(row));
        m.f1 = safe_div(2.0 * m.precision * m.recall, m.precision + m.recall);
        trace += tp;
        if (m.support > 0) {
            macro_sum += m.f1;
            ++supported;
        }
        weighted_sum += m.f1 * static_cast<double>(m.support);
    }
    report.accuracy = static_cast<double>(trace) / static_cast<double>(report.total);
    report.macro_f1 = safe_div(macro_sum, static_cast<double>(supported));
    report.weighted_f1 = weighted_sum / static_cast<double>(report.total);
    return report;
}

nlohmann::ordered_json ClassificationReport::to_json() const {
    nlohmann::ordered_json out;
    out["accuracy"] = accuracy;
    out["macro_f1"] = macro_f1;
    out["weighted_f1"] = weighted_f1;
    out["total"] = total;
    nlohmann::ordered_json classes;
    for (Tool tool : all_tools()) {
        const ClassMetrics& m = per_class[static_cast<std::size_t>(tool)];
        classes[std::string(tool_id(tool))] = {{"precision", m.precision},
                                               {"recall", m.recall},
                                               {"f1", m.f1},
                                               {"support", m.support}};
    }
    out["per_class"] = std::move(classes);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : confusion) rows.push_back(row);
    out["confusion"] = std::move(rows);
    return out;
}

std::string ClassificationReport::to_table() const {
    char line[160];
    std::string out;
    std::snprintf(line, sizeof line,
                  "accuracy %.4f  macro_f1 %.4f  weighted_f1 %.4f  n %zu\n\n", accuracy,
                  macro_f1, weighted_f1, total);
    out += line;
    std::snprintf(line, sizeof line, "%-18s %9s %9s %9s %9s\n", "tool", "precision",
                  "recall", "f1", "support");
    out += line;
    for (Tool tool : all_tools()) {
        const ClassMetrics& m = per_class[static_cast<std::size_t>(tool)];
        std::snprintf(line, sizeof line, "%-18s %9.4f %9.4f %9.4f %9zu\n",
                      std::string(tool_id(tool)).c_str(), m.precision, m.recall, m.f1,
                      m.support);
        out += line;
    }
    out += "\nconfusion (rows gold, cols predicted)\n";
    for (std::size_t r = 0; r < kToolCount; ++r) {
        std::string row = "  ";
        for (std::size_t c = 0; c < kToolCount; ++c) {
            std::snprintf(line, sizeof line, "%5zu", confusion[r][c]);
            row += line;
        }
        out += row + "\n";
    }
    return out;
}

SynonymTable SynonymTable::from_json(const nlohmann::json& doc) {
    if (!doc.is_array())
        throw Error("InvalidSynonyms", "expected a JSON array of synonym groups");
    SynonymTable table;
    for (const auto& group : doc) {
        if (!group.is_array())
            throw Error("InvalidSynonyms", "each synonym group must be an array");
        std::vector<std::string> words;
        for (const auto& w : group) {
            if (!w.is_string())
                throw Error("InvalidSynonyms", "synonym entries must be strings");
            words.push_back(w.get<std::string>());
        }
        table.add_group(words);
    }
    return table;
}

SynonymTable SynonymTable::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot read synonym table " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("InvalidSynonyms", path.string() + ": " + e.what());
    }
    return from_json(doc);
}

SynonymTable SynonymTable::bundled() {
    return from_json_file(std::filesystem::path(default_data_dir()) / "synonyms.json");
}

void SynonymTable::add_group(const std::vector<std::string>& words) {
    if (words.size() < 2)
        throw Error("InvalidSynonyms", "a synonym group needs at least two entries");
    const std::string canon = text::normalize(words.front());
    for (const std::string& w : words) canon_of_[text::normalize(w)] = canon;
}

bool SynonymTable::same(std::string_view a, std::string_view b) const {
    const std::string na = text::normalize(a);
    const std::string nb = text::normalize(b);
    if (na == nb) return true;
    auto canon = [&](const std::string& w) {
        auto it = canon_of_.find(w);
        return it == canon_of_.end() ? w : it->second;
    };
    return canon(na) == canon(nb);
}

MatchResult semantic_match(const EntityMap& gold, const EntityMap& predicted,
                           const EntitySchema& schema, const SynonymTable* synonyms) {
    auto sorted_keys = [](std::vector<std::string> keys) {
        std::sort(keys.begin(), keys.end());
        return keys;
    };
    std::vector<std::string> expected;
    for (const EntityFieldSpec& f : schema.fields) expected.push_back(f.name);
    expected = sorted_keys(std::move(expected));
    if (sorted_keys(gold.keys()) != expected || sorted_keys(predicted.keys()) != expected)
        throw Error("SchemaMismatch", "entity key sets differ from the schema");

    MatchResult result;
    for (const EntityFieldSpec& f : schema.fields) {
        const EntityValue* g = gold.find(f.name);
        const EntityValue* p = predicted.find(f.name);
        bool match = false;
        if (is_null(*g) && is_null(*p)) {
            match = true;
        } else if (!is_null(*g) && !is_null(*p) && g->index() == p->index()) {
            if (const auto* gs = std::get_if<std::string>(g)) {
                const std::string& ps = std::get<std::string>(*p);
                match = text::normalize(*gs) == text::normalize(ps) ||
                        (synonyms != nullptr && synonyms->same(*gs, ps));
            } else {
                match = std::get<std::int64_t>(*g) == std::get<std::int64_t>(*p);
            }
        }
        if (!match) result.field_diffs.push_back({f.name, render_value(g), render_value(p)});
    }
    result.pass = result.field_diffs.empty();
    return result;
}

ExtractionReport evaluate_extraction(const std::vector<DatasetSample>& samples,
                                     const RouteFn& route_fn, const Registry& registry,
                                     const SynonymTable* synonyms, std::size_t parallelism) {
    ExtractionReport report;
    report.n = samples.size();
    if (samples.empty()) {
        report.empty_input = true;
        return report;
    }

    std::vector<SampleScore> scores(samples.size());
    auto score_one = [&](std::size_t i) {
        const DatasetSample& s = samples[i];
        SampleScore sc;
        sc.id = s.query;
        sc.gold_tool = s.tool;
        try {
            RouteResult r = route_fn(s.query);
            sc.routed_tool = r.tool;
            if (r.tool != s.tool) {
                sc.field_diffs.push_back({"tool_category", std::string(tool_id(s.tool)),
                                          std::string(tool_id(r.tool))});
            } else {
                try {
                    MatchResult m = semantic_match(s.gold, r.entities,
                                                   registry.schema_for(s.tool), synonyms);
                    sc.pass = m.pass;
                    sc.field_diffs = std::move(m.field_diffs);
                } catch (const Error&) {
                    // right tool but no schema-shaped entities (failed extraction)
                    sc.field_diffs.push_back(
                        {"_extraction", "entities", r.error.value_or("missing entities")});
                }
            }
        } catch (const Error& e) {
            sc.field_diffs.push_back({"_route", "", e.kind() + ": " + e.what()});
        }
        scores[i] = std::move(sc);
    };

    const std::size_t bound = std::max<std::size_t>(1, parallelism);
    if (bound == 1) {
        for (std::size_t i = 0; i < samples.size(); ++i) score_one(i);
    } else {
        for (std::size_t start = 0; start < samples.size(); start += bound) {
            std::vector<std::future<void>> inflight;
            const std::size_t stop = std::min(samples.size(), start + bound);
            for (std::size_t i = start; i < stop; ++i)
                inflight.push_back(std::async(std::launch::async, score_one, i));
            for (auto& f : inflight) f.get();
        }
    }

    std::size_t passes = 0;
    for (SampleScore& sc : scores) {
        if (sc.pass) ++passes;
        for (const FieldDiff& d : sc.field_diffs) ++report.per_field_mismatch_counts[d.field];
        report.per_sample.push_back(std::move(sc));
    }
    report.pass_rate = static_cast<double>(passes) / static_cast<double>(report.n);
    return report;
}

nlohmann::ordered_json ExtractionReport::to_json() const {
    nlohmann::ordered_json out;
    out["pass_rate"] = pass_rate;
    out["n"] = n;
    out["empty_input"] = empty_input;
    nlohmann::ordered_json counts;
    for (const auto& [field, count] : per_field_mismatch_counts) counts[field] = count;
    out["per_field_mismatch_counts"] = std::move(counts);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const SampleScore& sc : per_sample) {
        nlohmann::ordered_json diffs = nlohmann::ordered_json::array();
        for (const FieldDiff& d : sc.field_diffs)
            diffs.push_back(
                {{"field", d.field}, {"gold", d.gold}, {"predicted", d.predicted}});
        rows.push_back({{"id", sc.id},
                        {"pass", sc.pass},
                        {"gold_tool", std::string(tool_id(sc.gold_tool))},
                        {"routed_tool", std::string(tool_id(sc.routed_tool))},
                        {"field_diffs", std::move(diffs)}});
    }
    out["per_sample"] = std::move(rows);
    return out;
}

std::string ExtractionReport::to_table() const {
    char line[256];
    std::size_t passes = 0;
    for (const SampleScore& sc : per_sample) passes += sc.pass ? 1 : 0;
    std::snprintf(line, sizeof line, "pass %zu/%zu (rate %.4f)%s\n", passes, n, pass_rate,
                  empty_input ? "  [empty input]" : "");
    std::string out = line;
    for (const SampleScore& sc : per_sample) {
        std::snprintf(line, sizeof line, "  [%s] %-16s %s\n", sc.pass ? "pass" : "FAIL",
                      std::string(tool_id(sc.gold_tool)).c_str(), sc.id.c_str());
        out += line;
        for (const FieldDiff& d : sc.field_diffs) {
            std::snprintf(line, sizeof line, "         %s: gold '%s' vs '%s'\n",
                          d.field.c_str(), d.gold.c_str(), d.predicted.c_str());
            out += line;
        }
    }
    return out;
}

LatencyReport latency_stats(const std::vector<double>& seconds) {
    if (seconds.empty()) throw Error("EmptyInput", "no latency samples");
    LatencyReport report;
    report.n = seconds.size();
    report.mean_seconds =
        std::accumulate(seconds.begin(), seconds.end(), 0.0) / static_cast<double>(report.n);

    std::vector<double> sorted = seconds;
    std::sort(sorted.begin(), sorted.end());
    auto nearest_rank = [&](double q) {
        std::size_t rank = static_cast<std::size_t>(
            std::ceil(q * static_cast<double>(sorted.size())));
        if (rank < 1) rank = 1;
        return sorted[rank - 1];
    };
    report.p50_seconds = nearest_rank(0.50);
    report.p95_seconds = nearest_rank(0.95);
    return report;
}

nlohmann::ordered_json LatencyReport::to_json() const {
    return {{"mean_seconds", mean_seconds},
            {"p50_seconds", p50_seconds},
            {"p95_seconds", p95_seconds},
            {"n", n}};
}

}  // namespace autoquery
