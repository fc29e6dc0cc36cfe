#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "autoquery/embed.hpp"
#include "autoquery/registry.hpp"

namespace autoquery {

struct LabeledExample {
    std::string query;
    Tool tool = Tool::others;
};

// Two training-set indices plus a similarity target: 1.0 when the examples
// share a class, 0.0 otherwise.
struct ContrastivePair {
    std::size_t anchor_index = 0;
    std::size_t other_index = 0;
    double label = 0.0;
};

struct TrainConfig {
    std::size_t iterations = 30;    // contrastive examples generated per training instance
    double learning_rate = 2e-5;    // conservative, typical of transformer fine-tuning;
                                    // the linear projection tolerates much larger values
    double warmup_ratio = 0.1;
    std::size_t batch_size = 16;
    std::size_t epochs = 1;
    std::size_t projection_dim = 256;
    std::size_t head_iterations = 500;
    double head_learning_rate = 0.1;
    std::uint64_t seed = 15;

    void check() const;  // throws Error("InvalidConfig")

    nlohmann::ordered_json to_json() const;
    static TrainConfig from_json(const nlohmann::json& doc);

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Minimal row-major dense matrix; enough for the projection and head math.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    // y = M * x
    std::vector<double> apply(const std::vector<double>& x) const;

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

// Frozen embedder config + trained projection + logistic head. Immutable
// once trained/loaded; predict is safe to call concurrently.
struct ClassifierModel {
    static constexpr int kArtifactVersion = 1;

    EmbedderConfig embedder;
    Matrix projection;          // projection_dim x embed_dim
    Matrix head_weights;        // num_classes x projection_dim
    std::vector<double> head_bias;
    std::vector<Tool> labels;   // distinct training tools in registry order
    TrainConfig train_config;
};

struct Prediction {
    Tool tool = Tool::others;
    std::vector<double> probabilities;  // aligned with model.labels
};

// For each of `iterations` rounds and each example, emit one positive and
// one negative pair; |result| == 2 * iterations * |examples|. Sampling is
// uniform with replacement across rounds and never pairs an example with
// itself. Throws Error("InsufficientClassData") when fewer than 2 classes
// are present or any class has fewer than 2 examples.
std::vector<ContrastivePair> generate_pairs(const std::vector<LabeledExample>& examples,
                                            std::size_t iterations, std::uint64_t seed);

struct LossAndGradient {
    double loss = 0.0;
    Matrix gradient;  // same shape as the projection
};

// Mean over the batch of (cosine(P e_a, P e_b) - label)^2 with its analytic
// gradient with respect to P. `embeddings` is indexed by the pair indices.
LossAndGradient contrastive_loss(const Matrix& projection,
                                 const std::vector<ContrastivePair>& batch,
                                 const std::vector<Embedding>& embeddings);

// Phase 1: seeded init + minibatch gradient descent over contrastive pairs
// with linear warmup. Phase 2: frozen projection, softmax cross-entropy
// head by full-batch gradient descent. Deterministic under fixed seed.
// Throws Error("NonFiniteLoss") with the failing step in the message.
ClassifierModel train(const std::vector<LabeledExample>& examples, const TrainConfig& config,
                      const EmbedderConfig& embedder_config);
ClassifierModel train(const std::vector<LabeledExample>& examples, const TrainConfig& config);

// softmax(head(P * embed(query))); argmax ties break toward the earlier
// label in registry order. Zero-embedding queries score on bias alone.
Prediction predict(const ClassifierModel& model, std::string_view query);

nlohmann::ordered_json model_to_json(const ClassifierModel& model);
ClassifierModel model_from_json(const nlohmann::json& doc);

void save_model(const ClassifierModel& model, const std::filesystem::path& path);
// Throws Error("VersionMismatch") / Error("MalformedArtifact").
ClassifierModel load_model(const std::filesystem::path& path);

}  // namespace autoquery
