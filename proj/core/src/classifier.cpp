#include "autoquery/classifier.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>

#include "autoquery/text.hpp"

namespace autoquery {

namespace {

// All randomness below goes through mt19937_64 raw outputs so that models
// are reproducible across standard library implementations.
std::size_t bounded(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
}

double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);  // [0,1), 53 bits
}

template <typename T>
void shuffle_in_place(std::vector<T>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[bounded(rng, i)]);
    }
}

std::vector<double> softmax(const std::vector<double>& logits) {
    double max_logit = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - max_logit);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

}  // namespace

void TrainConfig::check() const {
    if (iterations == 0) throw Error("InvalidConfig", "iterations must be positive");
    if (learning_rate <= 0.0) throw Error("InvalidConfig", "learning_rate must be positive");
    if (warmup_ratio < 0.0 || warmup_ratio > 1.0)
        throw Error("InvalidConfig", "warmup_ratio must lie in [0,1]");
    if (batch_size == 0) throw Error("InvalidConfig", "batch_size must be positive");
    if (epochs == 0) throw Error("InvalidConfig", "epochs must be positive");
    if (projection_dim == 0) throw Error("InvalidConfig", "projection_dim must be positive");
    if (head_iterations == 0) throw Error("InvalidConfig", "head_iterations must be positive");
    if (head_learning_rate <= 0.0)
        throw Error("InvalidConfig", "head_learning_rate must be positive");
}

nlohmann::ordered_json TrainConfig::to_json() const {
    return {
        {"iterations", iterations},
        {"learning_rate", learning_rate},
        {"warmup_ratio", warmup_ratio},
        {"batch_size", batch_size},
        {"epochs", epochs},
        {"projection_dim", projection_dim},
        {"head_iterations", head_iterations},
        {"head_learning_rate", head_learning_rate},
        {"seed", seed},
    };
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
    TrainConfig cfg;
    cfg.iterations = doc.value("iterations", cfg.iterations);
    cfg.learning_rate = doc.value("learning_rate", cfg.learning_rate);
    cfg.warmup_ratio = doc.value("warmup_ratio", cfg.warmup_ratio);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.epochs = doc.value("epochs", cfg.epochs);
    cfg.projection_dim = doc.value("projection_dim", cfg.projection_dim);
    cfg.head_iterations = doc.value("head_iterations", cfg.head_iterations);
    cfg.head_learning_rate = doc.value("head_learning_rate", cfg.head_learning_rate);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.check();
    return cfg;
}

std::vector<double> Matrix::apply(const std::vector<double>& x) const {
    std::vector<double> y(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = data.data() + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

std::vector<ContrastivePair> generate_pairs(const std::vector<LabeledExample>& examples,
                                            std::size_t iterations, std::uint64_t seed) {
    const std::size_t n = examples.size();
    std::vector<std::vector<std::size_t>> by_class(kToolCount);
    for (std::size_t i = 0; i < n; ++i) {
        by_class[static_cast<std::size_t>(examples[i].tool)].push_back(i);
    }
    std::size_t classes_present = 0;
    for (const auto& members : by_class) {
        if (members.empty()) continue;
        ++classes_present;
        if (members.size() < 2)
            throw Error("InsufficientClassData",
                        "class '" + std::string(tool_id(examples[members[0]].tool)) +
                            "' has fewer than 2 examples");
    }
    if (classes_present < 2)
        throw Error("InsufficientClassData", "need at least 2 classes to form negative pairs");

    std::mt19937_64 rng(seed);
    std::vector<ContrastivePair> pairs;
    pairs.reserve(2 * iterations * n);
    for (std::size_t round = 0; round < iterations; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto& same = by_class[static_cast<std::size_t>(examples[i].tool)];
            // positive: uniform over same-class members excluding i
            std::size_t pos = bounded(rng, same.size() - 1);
            std::size_t my_rank =
                static_cast<std::size_t>(std::find(same.begin(), same.end(), i) - same.begin());
            if (pos >= my_rank) ++pos;
            pairs.push_back({i, same[pos], 1.0});
            // negative: uniform over all other-class members
            std::size_t neg = bounded(rng, n - same.size());
            for (std::size_t j = 0; j < n; ++j) {
                if (examples[j].tool == examples[i].tool) continue;
                if (neg == 0) {
                    pairs.push_back({i, j, 0.0});
                    break;
                }
                --neg;
            }
        }
    }
    return pairs;
}

LossAndGradient contrastive_loss(const Matrix& projection,
                                 const std::vector<ContrastivePair>& batch,
                                 const std::vector<Embedding>& embeddings) {
    const std::size_t p = projection.rows;
    const std::size_t d = projection.cols;
    LossAndGradient out;
    out.gradient = Matrix(p, d);
    if (batch.empty()) return out;

    std::vector<double> u(p), v(p), du(p), dv(p);
    for (const auto& pair : batch) {
        const auto& a = embeddings[pair.anchor_index].values;
        const auto& b = embeddings[pair.other_index].values;
        u = projection.apply(a);
        v = projection.apply(b);

        double uu = 0.0, vv = 0.0, uv = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            uu += u[i] * u[i];
            vv += v[i] * v[i];
            uv += u[i] * v[i];
        }
        double nu = std::sqrt(uu);
        double nv = std::sqrt(vv);
        if (nu == 0.0 || nv == 0.0) {
            // cosine defined as 0 for a zero image; no gradient contribution
            out.loss += pair.label * pair.label;
            continue;
        }
        double c = uv / (nu * nv);
        double err = c - pair.label;
        out.loss += err * err;

        double s = 2.0 * err;
        for (std::size_t i = 0; i < p; ++i) {
            du[i] = s * (v[i] / (nu * nv) - c * u[i] / uu);
            dv[i] = s * (u[i] / (nu * nv) - c * v[i] / vv);
        }
        for (std::size_t r = 0; r < p; ++r) {
            double* grow = out.gradient.data.data() + r * d;
            const double dur = du[r];
            const double dvr = dv[r];
            for (std::size_t col = 0; col < d; ++col) {
                grow[col] += dur * a[col] + dvr * b[col];
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.loss *= inv;
    for (double& g : out.gradient.data) g *= inv;
    return out;
}

ClassifierModel train(const std::vector<LabeledExample>& examples, const TrainConfig& config,
                      const EmbedderConfig& embedder_config) {
    config.check();
    embedder_config.check();
    if (examples.empty()) throw Error("InsufficientClassData", "no training examples");

    ClassifierModel model;
    model.embedder = embedder_config;
    model.train_config = config;

    // labels: distinct training tools in registry order
    std::array<bool, kToolCount> seen{};
    for (const auto& ex : examples) seen[static_cast<std::size_t>(ex.tool)] = true;
    for (Tool t : all_tools()) {
        if (seen[static_cast<std::size_t>(t)]) model.labels.push_back(t);
    }

    const Embedder embedder = Embedder::from_config(embedder_config);
    std::vector<Embedding> embeddings;
    embeddings.reserve(examples.size());
    for (const auto& ex : examples) embeddings.push_back(embedder.embed(ex.query));

    const std::size_t d = embedder_config.dim;
    const std::size_t p = config.projection_dim;

    std::mt19937_64 rng(config.seed);
    model.projection = Matrix(p, d);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& w : model.projection.data) w = (2.0 * uniform_unit(rng) - 1.0) * scale;

    auto pairs = generate_pairs(examples, config.iterations, rng());

    // Phase 1: contrastive minibatch descent with global linear warmup.
    const std::size_t batches_per_epoch = (pairs.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = batches_per_epoch * config.epochs;
    const std::size_t warmup_steps =
        static_cast<std::size_t>(config.warmup_ratio * static_cast<double>(total_steps));
    std::size_t step = 0;
    std::vector<ContrastivePair> batch;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_in_place(pairs, rng);
        for (std::size_t start = 0; start < pairs.size(); start += config.batch_size) {
            const std::size_t stop = std::min(start + config.batch_size, pairs.size());
            batch.assign(pairs.begin() + start, pairs.begin() + stop);
            auto lg = contrastive_loss(model.projection, batch, embeddings);
            if (!std::isfinite(lg.loss))
                throw Error("NonFiniteLoss",
                            "contrastive loss non-finite at step " + std::to_string(step));
            double lr = config.learning_rate;
            if (warmup_steps > 0 && step < warmup_steps)
                lr *= static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
            for (std::size_t i = 0; i < model.projection.data.size(); ++i)
                model.projection.data[i] -= lr * lg.gradient.data[i];
            ++step;
        }
    }

    // Phase 2: frozen projection, multinomial logistic head by full-batch
    // gradient descent on softmax cross-entropy.
    const std::size_t num_classes = model.labels.size();
    std::vector<std::size_t> label_index(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        auto it = std::find(model.labels.begin(), model.labels.end(), examples[i].tool);
        label_index[i] = static_cast<std::size_t>(it - model.labels.begin());
    }
    std::vector<std::vector<double>> projected;
    projected.reserve(examples.size());
    for (const auto& e : embeddings) projected.push_back(model.projection.apply(e.values));

    model.head_weights = Matrix(num_classes, p);
    model.head_bias.assign(num_classes, 0.0);
    Matrix grad_w(num_classes, p);
    std::vector<double> grad_b(num_classes);
    std::vector<double> logits(num_classes);
    for (std::size_t iter = 0; iter < config.head_iterations; ++iter) {
        std::fill(grad_w.data.begin(), grad_w.data.end(), 0.0);
        std::fill(grad_b.begin(), grad_b.end(), 0.0);
        double loss = 0.0;
        for (std::size_t i = 0; i < examples.size(); ++i) {
            const auto& z = projected[i];
            for (std::size_t k = 0; k < num_classes; ++k) {
                const double* row = model.head_weights.data.data() + k * p;
                double acc = model.head_bias[k];
                for (std::size_t j = 0; j < p; ++j) acc += row[j] * z[j];
                logits[k] = acc;
            }
            auto probs = softmax(logits);
            loss -= std::log(std::max(probs[label_index[i]], 1e-300));
            for (std::size_t k = 0; k < num_classes; ++k) {
                double delta = probs[k] - (k == label_index[i] ? 1.0 : 0.0);
                grad_b[k] += delta;
                double* grow = grad_w.data.data() + k * p;
                for (std::size_t j = 0; j < p; ++j) grow[j] += delta * z[j];
            }
        }
        // Summed (not mean) cross-entropy, matching the objective of the
        // logistic-regression heads this mirrors; the gradient scale is what
        // lets 500 plain descent steps converge on a few hundred samples.
        if (!std::isfinite(loss))
            throw Error("NonFiniteLoss", "head loss non-finite at iteration " + std::to_string(iter));
        for (std::size_t i = 0; i < grad_w.data.size(); ++i)
            model.head_weights.data[i] -= config.head_learning_rate * grad_w.data[i];
        for (std::size_t k = 0; k < num_classes; ++k)
            model.head_bias[k] -= config.head_learning_rate * grad_b[k];
    }

    return model;
}

ClassifierModel train(const std::vector<LabeledExample>& examples, const TrainConfig& config) {
    return train(examples, config, EmbedderConfig{});
}

Prediction predict(const ClassifierModel& model, std::string_view query) {
    const Embedder embedder = Embedder::from_config(model.embedder);
    Embedding e = embedder.embed(query);
    std::vector<double> z = model.projection.apply(e.values);
    std::vector<double> logits(model.labels.size());
    for (std::size_t k = 0; k < model.labels.size(); ++k) {
        const double* row = model.head_weights.data.data() + k * model.head_weights.cols;
        double acc = model.head_bias[k];
        for (std::size_t j = 0; j < model.head_weights.cols; ++j) acc += row[j] * z[j];
        logits[k] = acc;
    }
    Prediction out;
    out.probabilities = softmax(logits);
    // labels are in registry order, so first-max keeps the earlier label on ties
    std::size_t best = 0;
    for (std::size_t k = 1; k < out.probabilities.size(); ++k) {
        if (out.probabilities[k] > out.probabilities[best]) best = k;
    }
    out.tool = model.labels[best];
    return out;
}

nlohmann::ordered_json model_to_json(const ClassifierModel& model) {
    nlohmann::ordered_json labels = nlohmann::ordered_json::array();
    for (Tool t : model.labels) labels.push_back(std::string(tool_id(t)));
    return {
        {"artifact_version", ClassifierModel::kArtifactVersion},
        {"embedder", model.embedder.to_json()},
        {"labels", std::move(labels)},
        {"projection", model.projection.data},
        {"head_weights", model.head_weights.data},
        {"head_bias", model.head_bias},
        {"train_config", model.train_config.to_json()},
    };
}

namespace {

const nlohmann::json& require_field(const nlohmann::json& doc, const char* name) {
    auto it = doc.find(name);
    if (it == doc.end())
        throw Error("MalformedArtifact", std::string("missing field: ") + name);
    return *it;
}

}  // namespace

ClassifierModel model_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw Error("MalformedArtifact", "artifact root is not an object");
    const auto& version = require_field(doc, "artifact_version");
    if (!version.is_number_integer())
        throw Error("MalformedArtifact", "artifact_version: not an integer");
    if (version.get<int>() != ClassifierModel::kArtifactVersion)
        throw Error("VersionMismatch",
                    "artifact version " + version.dump() + " unsupported (expected " +
                        std::to_string(ClassifierModel::kArtifactVersion) + ")");

    ClassifierModel model;
    try {
        model.embedder = EmbedderConfig::from_json(require_field(doc, "embedder"));
        model.train_config = TrainConfig::from_json(require_field(doc, "train_config"));
    } catch (const Error& e) {
        if (e.kind() == "InvalidConfig")
            throw Error("MalformedArtifact", std::string("embedder/train_config: ") + e.what());
        throw;
    }

    for (const auto& id : require_field(doc, "labels")) {
        if (!id.is_string()) throw Error("MalformedArtifact", "labels: entry is not a string");
        auto tool = tool_from_id(id.get<std::string>());
        if (!tool)
            throw Error("MalformedArtifact", "labels: unknown tool id '" + id.get<std::string>() + "'");
        model.labels.push_back(*tool);
    }
    if (model.labels.empty()) throw Error("MalformedArtifact", "labels: empty");

    const std::size_t p = model.train_config.projection_dim;
    const std::size_t d = model.embedder.dim;
    auto load_matrix = [&](const char* name, std::size_t rows, std::size_t cols) {
        const auto& arr = require_field(doc, name);
        if (!arr.is_array())
            throw Error("MalformedArtifact", std::string(name) + ": not an array");
        Matrix m(rows, cols);
        if (arr.size() != rows * cols)
            throw Error("MalformedArtifact", std::string(name) + ": expected " +
                                                 std::to_string(rows * cols) + " numbers, got " +
                                                 std::to_string(arr.size()));
        for (std::size_t i = 0; i < arr.size(); ++i) {
            if (!arr[i].is_number())
                throw Error("MalformedArtifact", std::string(name) + "[" + std::to_string(i) +
                                                     "]: not a number");
            m.data[i] = arr[i].get<double>();
        }
        return m;
    };
    model.projection = load_matrix("projection", p, d);
    model.head_weights = load_matrix("head_weights", model.labels.size(), p);

    const auto& bias = require_field(doc, "head_bias");
    if (!bias.is_array() || bias.size() != model.labels.size())
        throw Error("MalformedArtifact", "head_bias: expected " +
                                             std::to_string(model.labels.size()) + " numbers");
    for (const auto& b : bias) model.head_bias.push_back(b.get<double>());
    return model;
}

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write model artifact: " + path.string());
    out << model_to_json(model).dump(2) << '\n';
    if (!out) throw Error("IoError", "short write to model artifact: " + path.string());
}

ClassifierModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open model artifact: " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("MalformedArtifact", std::string("artifact parse error: ") + e.what());
    }
    return model_from_json(doc);
}

}  // namespace autoquery
