#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "autoquery/errors.hpp"

namespace autoquery {

// The closed set of routing targets. Order is fixed and used everywhere a
// deterministic tool ordering is needed (label lists, confusion matrices,
// argmax tie-breaking).
enum class Tool : std::uint8_t {
    tsb,
    nhtsa,
    techdoc,
    smart_insights,
    parts_catalog,
    repair_to_parts,
    service_to_parts,
    others,
};

inline constexpr std::size_t kToolCount = 8;

// All 8 categories in registry order; `others` is always last and is the
// fallback category.
std::span<const Tool> all_tools();

std::string_view tool_id(Tool tool);
std::optional<Tool> tool_from_id(std::string_view id);
std::string_view tool_description(Tool tool);

enum class ValueKind : std::uint8_t { string_kind, integer_kind };

std::string_view value_kind_name(ValueKind kind);

// One entity field. Every field is nullable; `year` is the only
// integer-kind field in the bundled schemas.
struct EntityFieldSpec {
    std::string name;
    ValueKind kind = ValueKind::string_kind;
    std::string description;
};

struct EntitySchema {
    Tool tool = Tool::others;
    std::vector<EntityFieldSpec> fields;

    const EntityFieldSpec* find(std::string_view name) const;
};

// Scalar entity value: null, string or integer.
using EntityValue = std::variant<std::monostate, std::string, std::int64_t>;

bool is_null(const EntityValue& v);

// Insertion-ordered field-name -> value map. After validation the key
// order equals the schema order.
class EntityMap {
public:
    using Item = std::pair<std::string, EntityValue>;

    EntityMap() = default;

    void set(std::string name, EntityValue value);
    const EntityValue* find(std::string_view name) const;

    bool empty() const noexcept { return items_.empty(); }
    std::size_t size() const noexcept { return items_.size(); }
    auto begin() const noexcept { return items_.begin(); }
    auto end() const noexcept { return items_.end(); }

    std::vector<std::string> keys() const;

    nlohmann::ordered_json to_json() const;

    // Accepts an object of scalar values. Non-scalar values are rejected
    // here; use Registry::validate_entities(tool, json) when violations
    // should be collected instead of thrown.
    static EntityMap from_json(const nlohmann::json& object);

    friend bool operator==(const EntityMap&, const EntityMap&) = default;

private:
    std::vector<Item> items_;
};

struct SchemaViolation {
    std::string field;
    std::string reason;

    friend bool operator==(const SchemaViolation&, const SchemaViolation&) = default;
};

// Outcome of validate_entities. `entities` always contains exactly the
// schema fields in schema order; fields implicated in a violation are null.
struct ValidationResult {
    EntityMap entities;
    std::vector<SchemaViolation> violations;

    bool ok() const noexcept { return violations.empty(); }
};

struct ToolCategory {
    Tool id;
    std::string description;
};

// Owns the tool categories and their entity schemas. Immutable after
// construction; safe for unrestricted concurrent reads.
class Registry {
public:
    // Bundled defaults: tsb={make,model,year,issue}, ...,
    // service_to_parts={make,model,year,service_name,service_type,
    // service_unit,driving_pattern}, others={}.
    Registry();

    // Load schemas from the documented JSON format
    //   { "<tool>": [ {"name":..., "value_kind":..., "description":...}, ... ] }
    // Tool ids outside the closed 8-category set are rejected. Tools absent
    // from the file keep an empty schema; `others` must be empty if present.
    static Registry from_json(const nlohmann::json& doc);
    static Registry from_json_file(const std::filesystem::path& path);

    std::span<const ToolCategory> tools() const noexcept { return categories_; }

    // Throws Error("UnknownCategory") only via deserialization paths that
    // produce an out-of-range enum value.
    const EntitySchema& schema_for(Tool tool) const;

    // Normalization rules: unknown keys are violations, missing keys become
    // null, `year` accepts integers and 4-digit strings, strings are
    // trimmed and empty strings become null. All violations are collected.
    ValidationResult validate_entities(Tool tool, const nlohmann::json& raw) const;
    ValidationResult validate_entities(Tool tool, const EntityMap& raw) const;

    nlohmann::ordered_json schemas_to_json() const;

private:
    std::vector<ToolCategory> categories_;
    std::vector<EntitySchema> schemas_;  // indexed by Tool value
};

}  // namespace autoquery
