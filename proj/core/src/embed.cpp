#include "autoquery/embed.hpp"

#include <cmath>
#include <fstream>

#include "autoquery/text.hpp"

namespace autoquery {

void EmbedderConfig::check() const {
    if (dim < 8) throw Error("InvalidConfig", "embedder dim must be >= 8");
    if (char_ngram_min == 0 || char_ngram_min > char_ngram_max)
        throw Error("InvalidConfig", "char n-gram range must be non-empty");
    if (hash_algorithm != "fnv1a64")
        throw Error("InvalidConfig", "unsupported hash algorithm: " + hash_algorithm);
    if (kind == EmbedderKind::external && path.empty())
        throw Error("InvalidConfig", "external embedder requires a path");
}

nlohmann::ordered_json EmbedderConfig::to_json() const {
    return {
        {"kind", kind == EmbedderKind::external ? "external" : "hashed_ngram"},
        {"dim", dim},
        {"char_ngram_min", char_ngram_min},
        {"char_ngram_max", char_ngram_max},
        {"use_word_unigrams", use_word_unigrams},
        {"hash_algorithm", hash_algorithm},
        {"path", path},
    };
}

EmbedderConfig EmbedderConfig::from_json(const nlohmann::json& doc) {
    EmbedderConfig cfg;
    std::string kind = doc.value("kind", "hashed_ngram");
    if (kind == "external") {
        cfg.kind = EmbedderKind::external;
    } else if (kind == "hashed_ngram") {
        cfg.kind = EmbedderKind::hashed_ngram;
    } else {
        throw Error("InvalidConfig", "unknown embedder kind: " + kind);
    }
    cfg.dim = doc.value("dim", std::size_t{512});
    cfg.char_ngram_min = doc.value("char_ngram_min", std::size_t{3});
    cfg.char_ngram_max = doc.value("char_ngram_max", std::size_t{5});
    cfg.use_word_unigrams = doc.value("use_word_unigrams", true);
    cfg.hash_algorithm = doc.value("hash_algorithm", "fnv1a64");
    cfg.path = doc.value("path", "");
    cfg.check();
    return cfg;
}

double cosine(const Embedding& a, const Embedding& b) {
    if (a.dim() != b.dim())
        throw Error("DimensionMismatch", "cosine over vectors of different dims");
    if (a.is_zero() || b.is_zero()) return 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
    return dot / (a.norm * b.norm);
}

Embedder Embedder::from_config(EmbedderConfig config) {
    config.check();
    Embedder embedder(std::move(config));
    if (embedder.config_.kind == EmbedderKind::external) {
        std::ifstream in(embedder.config_.path);
        if (!in)
            throw Error("IoError", "cannot open embeddings file: " + embedder.config_.path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            nlohmann::json row;
            try {
                row = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw Error("MalformedEmbeddingsFile",
                            "line " + std::to_string(line_no) + ": " + e.what());
            }
            if (!row.contains("text") || !row.contains("vector"))
                throw Error("MalformedEmbeddingsFile",
                            "line " + std::to_string(line_no) + ": need text and vector");
            auto vec = row["vector"].get<std::vector<double>>();
            if (vec.size() != embedder.config_.dim)
                throw Error("MalformedEmbeddingsFile",
                            "line " + std::to_string(line_no) + ": vector dim " +
                                std::to_string(vec.size()) + " != " +
                                std::to_string(embedder.config_.dim));
            embedder.external_[text::normalize(row["text"].get<std::string>())] = std::move(vec);
        }
    }
    return embedder;
}

Embedding Embedder::embed(std::string_view input) const {
    return config_.kind == EmbedderKind::external ? embed_external(input) : embed_hashed(input);
}

Embedding Embedder::embed_hashed(std::string_view input) const {
    const std::string normalized = text::normalize(input);
    Embedding out;
    out.values.assign(config_.dim, 0.0);

    auto add_feature = [&](std::string_view feature) {
        std::uint64_t h = text::fnv1a64(feature);
        std::size_t index = static_cast<std::size_t>(h % config_.dim);
        double sign = (h >> 63) ? -1.0 : 1.0;
        out.values[index] += sign;
    };

    bool any = false;
    for (const std::string& word : text::split_whitespace(normalized)) {
        if (config_.use_word_unigrams) {
            add_feature(word);
            any = true;
        }
        for (std::size_t n = config_.char_ngram_min; n <= config_.char_ngram_max; ++n) {
            if (word.size() < n) break;
            for (std::size_t i = 0; i + n <= word.size(); ++i) {
                add_feature(std::string_view(word).substr(i, n));
                any = true;
            }
        }
    }
    if (!any) return out;  // zero vector for featureless input

    double sq = 0.0;
    for (double v : out.values) sq += v * v;
    if (sq == 0.0) return out;  // signed counts can cancel exactly
    double norm = std::sqrt(sq);
    for (double& v : out.values) v /= norm;
    out.norm = 1.0;
    return out;
}

Embedding Embedder::embed_external(std::string_view input) const {
    auto it = external_.find(text::normalize(input));
    if (it == external_.end())
        throw Error("EmbeddingMiss",
                    "no precomputed embedding for text: " + std::string(input));
    Embedding out;
    out.values = it->second;
    double sq = 0.0;
    for (double v : out.values) sq += v * v;
    out.norm = sq == 0.0 ? 0.0 : std::sqrt(sq);
    return out;
}

std::vector<Embedding> Embedder::embed_batch(const std::vector<std::string>& texts) const {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(t));
    return out;
}

Embedding embed(const EmbedderConfig& config, std::string_view input) {
    return Embedder::from_config(config).embed(input);
}

}  // namespace autoquery
