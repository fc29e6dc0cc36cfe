#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "autoquery/errors.hpp"

namespace autoquery {

enum class EmbedderKind : std::uint8_t { hashed_ngram, external };

// Deterministic embedder configuration. `hashed_ngram` needs no external
// state; `external` reads precomputed vectors from a JSONL file at `path`.
struct EmbedderConfig {
    EmbedderKind kind = EmbedderKind::hashed_ngram;
    std::size_t dim = 512;
    std::size_t char_ngram_min = 3;
    std::size_t char_ngram_max = 5;
    bool use_word_unigrams = true;
    std::string hash_algorithm = "fnv1a64";
    std::string path;  // external kind only

    void check() const;  // throws Error("InvalidConfig") on bad bounds

    nlohmann::ordered_json to_json() const;
    static EmbedderConfig from_json(const nlohmann::json& doc);

    friend bool operator==(const EmbedderConfig&, const EmbedderConfig&) = default;
};

// Unit-norm vector, or the all-zero vector when the input had no features.
struct Embedding {
    std::vector<double> values;
    double norm = 0.0;

    bool is_zero() const noexcept { return norm == 0.0; }
    std::size_t dim() const noexcept { return values.size(); }
};

// Cosine similarity; 0.0 by convention when either vector is all-zero.
// Throws Error("DimensionMismatch") on unequal dims.
double cosine(const Embedding& a, const Embedding& b);

// Embedding backend selected by config. Pure for hashed_ngram; external
// holds an in-memory table loaded once at construction.
class Embedder {
public:
    static Embedder from_config(EmbedderConfig config);

    const EmbedderConfig& config() const noexcept { return config_; }

    Embedding embed(std::string_view text) const;
    std::vector<Embedding> embed_batch(const std::vector<std::string>& texts) const;

private:
    explicit Embedder(EmbedderConfig config) : config_(std::move(config)) {}

    Embedding embed_hashed(std::string_view text) const;
    Embedding embed_external(std::string_view text) const;

    EmbedderConfig config_;
    std::unordered_map<std::string, std::vector<double>> external_;
};

// Convenience form matching the one-shot use sites; constructs the backend
// per call, so prefer an Embedder instance for the external kind.
Embedding embed(const EmbedderConfig& config, std::string_view text);

}  // namespace autoquery
