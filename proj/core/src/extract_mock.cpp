// Rule tables and matching for the reference extractor. Matching happens on
// normalized tokens (lowercase, hyphens/commas kept inside tokens so "cx-5"
// and "60,000" survive); emitted values are the gazetteer surface forms.

#include <algorithm>
#include <cctype>
#include <initializer_list>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "autoquery/extract.hpp"
#include "autoquery/text.hpp"

namespace autoquery {

namespace {

bool token_char(char c) {
    const unsigned char u = static_cast<unsigned char>(c);
    return std::isalnum(u) != 0 || c == '-' || c == ',' || c == '&';
}

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::vector<std::string> tokenize(const std::string& norm) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < norm.size()) {
        if (!token_char(norm[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < norm.size() && token_char(norm[j])) ++j;
        std::string tok = norm.substr(i, j - i);
        // punctuation that touched the word, e.g. "f-150," or ",and"
        while (!tok.empty() && !is_alnum(tok.front())) tok.erase(tok.begin());
        while (!tok.empty() && !is_alnum(tok.back())) tok.pop_back();
        if (!tok.empty()) out.push_back(std::move(tok));
        i = j;
    }
    return out;
}

struct LexEntry {
    std::string display;
    std::vector<std::string> toks;
};

std::vector<LexEntry> build(std::initializer_list<const char*> displays) {
    std::vector<LexEntry> out;
    out.reserve(displays.size());
    for (const char* d : displays) out.push_back({d, tokenize(text::normalize(d))});
    std::sort(out.begin(), out.end(), [](const LexEntry& a, const LexEntry& b) {
        if (a.toks.size() != b.toks.size()) return a.toks.size() > b.toks.size();
        if (a.display.size() != b.display.size()) return a.display.size() > b.display.size();
        return a.display < b.display;
    });
    return out;
}

const std::vector<LexEntry>& makes() {
    static const auto v = build({
        "Toyota", "Honda", "Ford", "Chevrolet", "Chevy", "GMC", "Ram", "Dodge", "Chrysler",
        "Jeep", "Subaru", "Nissan", "Mazda", "Kia", "Hyundai", "Genesis", "Volkswagen", "VW",
        "Audi", "BMW", "Mercedes", "Mercedes-Benz", "Lexus", "Acura", "Infiniti", "Tesla",
        "Buick", "Cadillac", "Lincoln", "Volvo", "Porsche", "Jaguar", "Land Rover", "Mini",
        "Fiat", "Mitsubishi", "Suzuki", "Alfa Romeo",
    });
    return v;
}

const std::vector<LexEntry>& models() {
    static const auto v = build({
        // Honda / Toyota
        "Accord", "Civic", "CR-V", "Pilot", "Odyssey", "Fit", "Ridgeline", "Camry", "Corolla",
        "RAV4", "Prius", "Highlander", "Tacoma", "Tundra", "Sienna", "4Runner", "Avalon",
        // Ford / GM
        "F-150", "F-250", "Fusion", "Escape", "Explorer", "Focus", "Edge", "Mustang", "Ranger",
        "Expedition", "Fiesta", "Taurus", "Malibu", "Silverado", "Equinox", "Cruze", "Tahoe",
        "Impala", "Colorado", "Traverse", "Suburban", "Camaro", "Bolt", "Volt", "Sierra",
        "Acadia", "Terrain", "Yukon", "Canyon", "Enclave", "Encore", "Verano", "LaCrosse",
        "Regal", "Escalade", "XT5", "CTS",
        // Subaru
        "Outback", "Forester", "Impreza", "Legacy", "WRX", "Crosstrek", "Ascent", "BRZ",
        // Kia / Hyundai
        "Optima", "Sorento", "Sportage", "Soul", "Forte", "Niro", "Telluride", "Rio",
        "Stinger", "Elantra", "Sonata", "Tucson", "Santa Fe", "Kona", "Palisade", "Accent",
        "Veloster",
        // Nissan
        "Altima", "Sentra", "Rogue", "Maxima", "Murano", "Pathfinder", "Frontier", "Leaf",
        "Titan", "Versa",
        // Mazda / VW / German
        "CX-5", "CX-9", "CX-30", "Mazda3", "Mazda6", "Miata", "Jetta", "Golf", "Passat",
        "Tiguan", "Atlas", "GTI", "Beetle", "A3", "A4", "A6", "Q5", "Q7", "X3", "X5",
        "3 Series", "5 Series",
        // Stellantis
        "Wrangler", "Grand Cherokee", "Cherokee", "Compass", "Renegade", "Gladiator",
        "Durango", "Charger", "Challenger", "Journey", "Dart", "1500", "2500", "Pacifica",
        "300",
        // Tesla / luxury / misc
        "Model 3", "Model Y", "Model S", "Model X", "Navigator", "MKZ", "RX", "ES", "IS",
        "NX", "GX", "MDX", "RDX", "TLX", "ILX", "Q50", "QX60", "XC90", "XC60", "S60",
    });
    return v;
}

const std::vector<LexEntry>& issues() {
    static const auto v = build({
        "spark plug fouling", "spark plug misfires", "spark plug misfire",
        "rough idle and stalling", "rough idle", "sudden stalling", "stalling",
        "stalls at red lights", "transmission shudder", "transmission slipping",
        "AC compressor noise", "check engine light", "shakes when braking",
        "excessive oil consumption", "oil consumption", "burning oil", "coolant leak",
        "coolant intrusion", "oil leak", "brake noise", "grinding noise", "squealing brakes",
        "battery drain", "battery dies overnight", "blower motor failure",
        "water pump failure", "hard shifting", "delayed shifting", "engine knock",
        "knocking noise", "hesitation when accelerating", "loss of power", "overheating",
        "misfires", "misfire", "vibration at highway speeds", "steering wheel shake",
        "pulling to one side", "infotainment freezing", "touchscreen freezing",
        "paint peeling", "clear coat peeling", "headlight condensation", "door lock failure",
        "window rattle", "wind noise", "suspension clunk", "clunking noise", "whining noise",
        "rattling noise", "won't start", "hard starting",
    });
    return v;
}

const std::vector<LexEntry>& components() {
    static const auto v = build({
        "spark plugs", "spark plug", "spark plug wires", "front brake pads",
        "rear brake pads", "brake pad set", "brake pads", "brake pad", "brake rotors",
        "brake rotor", "rotors", "brake calipers", "calipers", "brake master cylinder",
        "brake lines", "battery", "alternator", "starter motor", "starter", "radiator",
        "radiator fan", "water pump", "fuel pump", "fuel filter", "fuel injectors",
        "fuel injector", "cabin air filter", "engine air filter", "air filter", "oil filter",
        "oxygen sensor", "o2 sensor", "ignition coils", "ignition coil", "serpentine belt",
        "timing belt", "timing chain", "thermostat", "catalytic converter", "muffler",
        "exhaust manifold", "headlight assembly", "headlight bulbs", "headlights",
        "headlight", "tail light", "taillight", "wiper blades", "wiper blade",
        "windshield wipers", "shock absorbers", "shocks", "struts", "strut mounts",
        "coil springs", "control arms", "ball joints", "tie rods", "wheel bearings",
        "wheel bearing", "lug nuts", "clutch", "flywheel", "motor mounts",
        "valve cover gasket", "valve cover", "head gasket", "oil pan gasket", "oil pan",
        "pcv valve", "egr valve", "mass airflow sensor", "maf sensor", "throttle body",
        "ac compressor", "condenser", "heater core", "blower motor", "power steering pump",
        "steering rack", "side mirror", "rearview mirror", "backup camera", "door handle",
        "window regulator", "sunroof drain", "trailer hitch", "tow hitch", "roof rack",
        "coolant",
    });
    return v;
}

const std::vector<LexEntry>& systems() {
    static const auto v = build({
        "cooling system", "braking system", "brake system", "fuel system",
        "electrical system", "exhaust system", "ignition system", "suspension", "drivetrain",
        "air conditioning", "hvac", "infotainment system", "infotainment", "climate control",
    });
    return v;
}

const std::vector<LexEntry>& brands() {
    static const auto v = build({
        "Denso", "Bosch", "NGK", "ACDelco", "Motorcraft", "Brembo", "Mopar", "Monroe", "KYB",
        "Gates", "Aisin", "Akebono", "Wagner", "Moog", "Fram", "K&N", "Castrol", "Valvoline",
        "Mobil 1", "Michelin", "Goodyear", "Bridgestone", "Continental", "Pirelli",
    });
    return v;
}

const std::vector<LexEntry>& services() {
    static const auto v = build({
        "oil change", "coolant flush", "radiator flush", "brake fluid flush",
        "transmission fluid service", "transmission fluid change", "differential fluid service",
        "tire rotation", "tune-up", "air filter service", "cabin air filter service",
        "fuel system cleaning", "annual service", "brake service", "brake inspection",
        "battery service", "wheel alignment", "multi-point inspection", "state inspection",
        "emissions test", "spark plug service", "coolant change",
    });
    return v;
}

const std::vector<LexEntry>& driving_patterns() {
    static const auto v = build({
        "mostly highway driving", "highway driving", "mostly city driving", "city driving",
        "stop-and-go traffic", "stop and go traffic", "heavy towing", "towing",
        "off-road driving", "mostly short trips", "short trips",
    });
    return v;
}

struct Match {
    const LexEntry* entry = nullptr;
    std::size_t begin = 0;
    std::size_t end = 0;  // one past the last matched token
};

bool tokens_equal_at(const std::vector<std::string>& toks, std::size_t at,
                     const std::vector<std::string>& needle) {
    if (at + needle.size() > toks.size()) return false;
    for (std::size_t k = 0; k < needle.size(); ++k)
        if (toks[at + k] != needle[k]) return false;
    return true;
}

std::optional<Match> match_at(const std::vector<std::string>& toks,
                              const std::vector<LexEntry>& lex, std::size_t at) {
    for (const LexEntry& e : lex)  // sorted longest-first
        if (tokens_equal_at(toks, at, e.toks)) return Match{&e, at, at + e.toks.size()};
    return std::nullopt;
}

std::optional<Match> leftmost_longest(const std::vector<std::string>& toks,
                                      const std::vector<LexEntry>& lex) {
    for (std::size_t i = 0; i < toks.size(); ++i)
        if (auto m = match_at(toks, lex, i)) return m;
    return std::nullopt;
}

struct Cues {
    std::string norm;
    std::string padded;  // norm with sentinel spaces for substring-with-boundary tests
    std::vector<std::string> toks;
    std::optional<std::string> make;
    std::optional<std::string> model;
    std::optional<std::int64_t> year;
};

Cues scan(const std::string& query) {
    Cues c;
    c.norm = text::normalize(query);
    c.padded = " " + c.norm + " ";
    c.toks = tokenize(c.norm);

    std::optional<std::size_t> year_at;
    for (std::size_t i = 0; i < c.toks.size(); ++i) {
        const std::string& t = c.toks[i];
        if (t.size() != 4 || !std::all_of(t.begin(), t.end(), is_alnum) ||
            !std::all_of(t.begin(), t.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
            continue;
        const long value = std::stol(t);
        if (value >= 1950 && value <= 2035) {
            c.year = value;
            year_at = i;
            break;
        }
    }

    if (auto mk = leftmost_longest(c.toks, makes())) {
        c.make = mk->entry->display;
        if (auto md = match_at(c.toks, models(), mk->end)) c.model = md->entry->display;
    }
    if (!c.model && year_at)
        if (auto md = match_at(c.toks, models(), *year_at + 1)) c.model = md->entry->display;
    return c;
}

nlohmann::json lex_value(const std::vector<std::string>& toks, const std::vector<LexEntry>& lex) {
    if (auto m = leftmost_longest(toks, lex)) return m->entry->display;
    return nullptr;
}

nlohmann::json mileage_value(const std::string& norm) {
    static const std::regex re(R"((\d{1,3}(?:,\d{3})+|\d+) (miles|mi|km|kilometers|kilometres)\b)");
    std::smatch m;
    if (std::regex_search(norm, m, re)) return m.str(0);
    return nullptr;
}

struct ServiceInfo {
    nlohmann::json name = nullptr;
    nlohmann::json type = nullptr;
    nlohmann::json unit = nullptr;
};

ServiceInfo service_info(const Cues& c) {
    ServiceInfo out;
    static const std::regex re(
        R"((\d{1,3}(?:,\d{3})*|\d+)[- ](mile|month|km|year)[- ](service|maintenance|checkup|inspection))");
    std::smatch m;
    if (std::regex_search(c.norm, m, re)) {
        out.name = m.str(0);
        out.type = "scheduled";
        const std::string unit = m.str(2);
        if (unit == "mile")
            out.unit = "miles";
        else if (unit == "month")
            out.unit = "months";
        else if (unit == "year")
            out.unit = "years";
        else
            out.unit = unit;
        return out;
    }
    out.name = lex_value(c.toks, services());
    return out;
}

nlohmann::json labor_value(const std::vector<std::string>& toks) {
    struct Verb {
        std::string_view form;
        const char* base;
    };
    static constexpr Verb kVerbs[] = {
        {"replace", "replace"},   {"replaces", "replace"}, {"replacing", "replace"},
        {"replaced", "replace"},  {"install", "install"},  {"installs", "install"},
        {"installing", "install"},{"installed", "install"},{"remove", "remove"},
        {"removes", "remove"},    {"removing", "remove"},  {"removed", "remove"},
        {"repair", "repair"},     {"repairs", "repair"},   {"repairing", "repair"},
        {"repaired", "repair"},   {"change", "change"},    {"changes", "change"},
        {"changing", "change"},   {"changed", "change"},
    };
    for (const std::string& t : toks)
        for (const Verb& v : kVerbs)
            if (t == v.form) return v.base;
    return nullptr;
}

nlohmann::json pnc_value(const std::vector<std::string>& toks) {
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
        if (toks[i] != "pnc") continue;
        const std::string& code = toks[i + 1];
        if (code.size() >= 3 && std::any_of(code.begin(), code.end(), [](char ch) {
                return ch >= '0' && ch <= '9';
            })) {
            std::string upper = code;
            for (char& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            return upper;
        }
    }
    return nullptr;
}

nlohmann::json query_type_value(const Cues& c) {
    if (c.padded.find(" how to ") != std::string::npos) return "procedure";
    if (c.padded.find(" what is ") != std::string::npos) return "specification";
    return nullptr;
}

nlohmann::json optional_string(const std::optional<std::string>& v) {
    if (v) return *v;
    return nullptr;
}

nlohmann::json field_value(const std::string& field, const Cues& c, const ServiceInfo& svc) {
    if (field == "make") return optional_string(c.make);
    if (field == "model") return optional_string(c.model);
    if (field == "year") return c.year ? nlohmann::json(*c.year) : nlohmann::json(nullptr);
    if (field == "mileage") return mileage_value(c.norm);
    if (field == "issue") return lex_value(c.toks, issues());
    if (field == "component") return lex_value(c.toks, components());
    if (field == "system") return lex_value(c.toks, systems());
    if (field == "brand") return lex_value(c.toks, brands());
    if (field == "driving_pattern") return lex_value(c.toks, driving_patterns());
    if (field == "labor_action") return labor_value(c.toks);
    if (field == "query_type") return query_type_value(c);
    if (field == "warranty") {
        for (const std::string& t : c.toks)
            if (t == "warranty" || t == "warranties") return "yes";
        return nullptr;
    }
    if (field == "pnc") return pnc_value(c.toks);
    if (field == "service_name") return svc.name;
    if (field == "service_type") return svc.type;
    if (field == "service_unit") return svc.unit;
    return nullptr;  // custom field without a rule
}

}  // namespace

EntityMap mock_extract(const std::string& query, Tool tool, const Registry& registry) {
    const EntitySchema& schema = registry.schema_for(tool);
    const Cues cues = scan(query);
    const ServiceInfo svc = service_info(cues);

    nlohmann::ordered_json raw = nlohmann::ordered_json::object();
    for (const EntityFieldSpec& field : schema.fields)
        raw[field.name] = field_value(field.name, cues, svc);
    return registry.validate_entities(tool, raw).entities;
}

}  // namespace autoquery
