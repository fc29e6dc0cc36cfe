#include "autoquery/registry.hpp"

#include <algorithm>
#include <array>
#include <fstream>

#include "autoquery/text.hpp"

namespace autoquery {

namespace {

constexpr std::array<Tool, kToolCount> kAllTools = {
    Tool::tsb,           Tool::nhtsa,         Tool::techdoc,
    Tool::smart_insights, Tool::parts_catalog, Tool::repair_to_parts,
    Tool::service_to_parts, Tool::others,
};

constexpr std::array<std::string_view, kToolCount> kToolIds = {
    "tsb",           "nhtsa",         "techdoc",          "smart_insights",
    "parts_catalog", "repair_to_parts", "service_to_parts", "others",
};

constexpr std::array<std::string_view, kToolCount> kToolDescriptions = {
    "Fetches official technical service bulletins (TSB) issued by OEMs for "
    "known issues associated with a specific vehicle.",
    "Returns government-reported safety recalls and customer complaints "
    "related to a specific issue for a vehicle.",
    "Provides OEM repair procedures and technical specifications (e.g., "
    "torque, capacity) for specific components or systems, based on user "
    "queries about \"how to\" perform a task or \"what is\" the "
    "specification from the service manual.",
    "Offers diagnostic insights, causes, and possible repairs based on "
    "symptoms described by the user.",
    "Retrieves parts information such as part numbers, prices, images, and "
    "PNC for a specified vehicle component.",
    "Determines the parts needed for performing a specific repair on a "
    "vehicle.",
    "Identifies parts required for routine maintenance services based on "
    "time or mileage intervals.",
    "Handles queries that fall outside the scope of all defined tool "
    "capabilities, including vague, irrelevant, or unsupported requests.",
};

std::size_t tool_index(Tool tool) {
    auto idx = static_cast<std::size_t>(tool);
    if (idx >= kToolCount) throw Error("UnknownCategory", "tool enum value out of range");
    return idx;
}

EntityFieldSpec str_field(std::string name, std::string description) {
    return EntityFieldSpec{std::move(name), ValueKind::string_kind, std::move(description)};
}

std::vector<EntitySchema> default_schemas() {
    std::vector<EntitySchema> schemas(kToolCount);
    for (std::size_t i = 0; i < kToolCount; ++i) schemas[i].tool = kAllTools[i];

    const EntityFieldSpec year{"year", ValueKind::integer_kind, "model year of the vehicle"};
    const auto make = str_field("make", "vehicle manufacturer");
    const auto model = str_field("model", "vehicle model name");
    const auto issue = str_field("issue", "problem or symptom described by the user");
    const auto mileage = str_field("mileage", "odometer reading or mileage mentioned");
    const auto component = str_field("component", "vehicle part or component");

    schemas[tool_index(Tool::tsb)].fields = {make, model, year, issue};
    schemas[tool_index(Tool::nhtsa)].fields = {make, model, year, mileage, issue};
    schemas[tool_index(Tool::techdoc)].fields = {
        make, model, year,
        str_field("query_type", "kind of request, e.g. procedure vs specification"),
        component,
        str_field("system", "vehicle system the request concerns"),
    };
    schemas[tool_index(Tool::smart_insights)].fields = {make, model, year, mileage, issue};
    schemas[tool_index(Tool::parts_catalog)].fields = {
        make, model, year, component,
        str_field("brand", "preferred parts brand"),
        str_field("warranty", "warranty requirement mentioned"),
        str_field("pnc", "part number code"),
    };
    schemas[tool_index(Tool::repair_to_parts)].fields = {
        make, model, year,
        str_field("labor_action", "repair action to perform"),
        component,
    };
    schemas[tool_index(Tool::service_to_parts)].fields = {
        make, model, year,
        str_field("service_name", "name of the maintenance service"),
        str_field("service_type", "type of service"),
        str_field("service_unit", "interval unit, e.g. miles or months"),
        str_field("driving_pattern", "driving conditions mentioned"),
    };
    // others carries an empty schema: extraction is skipped for it.
    return schemas;
}

std::string trimmed(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

bool is_four_digit(std::string_view s) {
    return s.size() == 4 && std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isdigit(c) != 0;
    });
}

}  // namespace

std::span<const Tool> all_tools() { return kAllTools; }

std::string_view tool_id(Tool tool) { return kToolIds[tool_index(tool)]; }

std::optional<Tool> tool_from_id(std::string_view id) {
    for (std::size_t i = 0; i < kToolCount; ++i) {
        if (kToolIds[i] == id) return kAllTools[i];
    }
    return std::nullopt;
}

std::string_view tool_description(Tool tool) { return kToolDescriptions[tool_index(tool)]; }

std::string_view value_kind_name(ValueKind kind) {
    return kind == ValueKind::integer_kind ? "integer" : "string";
}

const EntityFieldSpec* EntitySchema::find(std::string_view name) const {
    for (const auto& f : fields) {
        if (f.name == name) return &f;
    }
    return nullptr;
}

bool is_null(const EntityValue& v) { return std::holds_alternative<std::monostate>(v); }

void EntityMap::set(std::string name, EntityValue value) {
    for (auto& [k, v] : items_) {
        if (k == name) {
            v = std::move(value);
            return;
        }
    }
    items_.emplace_back(std::move(name), std::move(value));
}

const EntityValue* EntityMap::find(std::string_view name) const {
    for (const auto& [k, v] : items_) {
        if (k == name) return &v;
    }
    return nullptr;
}

std::vector<std::string> EntityMap::keys() const {
    std::vector<std::string> out;
    out.reserve(items_.size());
    for (const auto& [k, v] : items_) out.push_back(k);
    return out;
}

nlohmann::ordered_json EntityMap::to_json() const {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (const auto& [k, v] : items_) {
        if (is_null(v)) {
            obj[k] = nullptr;
        } else if (const auto* s = std::get_if<std::string>(&v)) {
            obj[k] = *s;
        } else {
            obj[k] = std::get<std::int64_t>(v);
        }
    }
    return obj;
}

EntityMap EntityMap::from_json(const nlohmann::json& object) {
    if (!object.is_object()) throw Error("SchemaViolation", "entity payload is not a JSON object");
    EntityMap out;
    for (const auto& [key, val] : object.items()) {
        if (val.is_null()) {
            out.set(key, EntityValue{});
        } else if (val.is_string()) {
            out.set(key, val.get<std::string>());
        } else if (val.is_number_integer() || val.is_number_unsigned()) {
            out.set(key, val.get<std::int64_t>());
        } else {
            throw Error("SchemaViolation", "non-scalar value for field '" + key + "'");
        }
    }
    return out;
}

Registry::Registry() : schemas_(default_schemas()) {
    categories_.reserve(kToolCount);
    for (std::size_t i = 0; i < kToolCount; ++i) {
        categories_.push_back(ToolCategory{kAllTools[i], std::string(kToolDescriptions[i])});
    }
}

Registry Registry::from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw Error("MalformedSchemaFile", "schema document must be a JSON object");
    Registry reg;
    // Replace every schema mentioned in the file; unmentioned tools get an
    // empty field list so the file is the single source of truth.
    for (auto& schema : reg.schemas_) schema.fields.clear();
    for (const auto& [key, fields] : doc.items()) {
        auto tool = tool_from_id(key);
        if (!tool) throw Error("UnknownCategory", "unknown tool id '" + key + "' in schema file");
        if (!fields.is_array())
            throw Error("MalformedSchemaFile", "schema for '" + key + "' must be an array");
        if (*tool == Tool::others && !fields.empty())
            throw Error("MalformedSchemaFile", "'others' must have an empty schema");
        auto& schema = reg.schemas_[tool_index(*tool)];
        for (const auto& f : fields) {
            EntityFieldSpec spec;
            if (!f.is_object() || !f.contains("name") || !f["name"].is_string())
                throw Error("MalformedSchemaFile", "field spec for '" + key + "' missing name");
            spec.name = f["name"].get<std::string>();
            if (schema.find(spec.name))
                throw Error("MalformedSchemaFile",
                            "duplicate field '" + spec.name + "' in schema for '" + key + "'");
            std::string kind = f.value("value_kind", "string");
            if (kind == "integer") {
                spec.kind = ValueKind::integer_kind;
            } else if (kind == "string") {
                spec.kind = ValueKind::string_kind;
            } else {
                throw Error("MalformedSchemaFile",
                            "unknown value_kind '" + kind + "' for field '" + spec.name + "'");
            }
            spec.description = f.value("description", "");
            schema.fields.push_back(std::move(spec));
        }
    }
    return reg;
}

Registry Registry::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open schema file: " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("MalformedSchemaFile", std::string("schema file parse error: ") + e.what());
    }
    return from_json(doc);
}

const EntitySchema& Registry::schema_for(Tool tool) const { return schemas_[tool_index(tool)]; }

ValidationResult Registry::validate_entities(Tool tool, const nlohmann::json& raw) const {
    const EntitySchema& schema = schema_for(tool);
    ValidationResult result;

    if (!raw.is_object()) {
        result.violations.push_back({"", "entity payload is not a JSON object"});
        for (const auto& f : schema.fields) result.entities.set(f.name, EntityValue{});
        return result;
    }

    // Unknown keys first, in input order.
    for (const auto& [key, val] : raw.items()) {
        (void)val;
        if (!schema.find(key)) result.violations.push_back({key, "unknown field for this tool"});
    }

    for (const auto& f : schema.fields) {
        EntityValue value{};  // null unless the raw value normalizes
        auto it = raw.find(f.name);
        if (it != raw.end() && !it->is_null()) {
            const nlohmann::json& v = *it;
            if (v.is_array() || v.is_object()) {
                result.violations.push_back({f.name, "non-scalar value"});
            } else if (v.is_boolean()) {
                result.violations.push_back({f.name, "boolean value not allowed"});
            } else if (f.kind == ValueKind::integer_kind) {
                if (v.is_number_integer() || v.is_number_unsigned()) {
                    value = v.get<std::int64_t>();
                } else if (v.is_number_float()) {
                    double d = v.get<double>();
                    if (d == static_cast<std::int64_t>(d)) {
                        value = static_cast<std::int64_t>(d);
                    } else {
                        result.violations.push_back({f.name, "non-integral number for integer field"});
                    }
                } else {
                    // String form: coerce only clean 4-digit strings.
                    std::string s = trimmed(v.get<std::string>());
                    if (s.empty()) {
                        // stays null
                    } else if (is_four_digit(s)) {
                        value = static_cast<std::int64_t>(std::stol(s));
                    } else {
                        result.violations.push_back(
                            {f.name, "cannot coerce '" + s + "' to integer"});
                    }
                }
            } else {
                if (v.is_string()) {
                    std::string s = trimmed(v.get<std::string>());
                    if (!s.empty()) value = std::move(s);
                } else {
                    result.violations.push_back({f.name, "expected string value"});
                }
            }
        }
        result.entities.set(f.name, std::move(value));
    }
    return result;
}

ValidationResult Registry::validate_entities(Tool tool, const EntityMap& raw) const {
    return validate_entities(tool, static_cast<const nlohmann::json&>(raw.to_json()));
}

nlohmann::ordered_json Registry::schemas_to_json() const {
    nlohmann::ordered_json doc = nlohmann::ordered_json::object();
    for (const auto& schema : schemas_) {
        nlohmann::ordered_json fields = nlohmann::ordered_json::array();
        for (const auto& f : schema.fields) {
            fields.push_back({{"name", f.name},
                              {"value_kind", std::string(value_kind_name(f.kind))},
                              {"description", f.description}});
        }
        doc[std::string(tool_id(schema.tool))] = std::move(fields);
    }
    return doc;
}

}  // namespace autoquery
