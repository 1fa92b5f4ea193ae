#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "exprsaug/ingest.hpp"
#include "exprsaug/matrix.hpp"
#include "exprsaug/random.hpp"

namespace exprsaug::mlp {

enum class Activation { relu, identity, softmax };

struct HiddenLayerSpec {
    std::size_t width = 1;
    double dropout = 0.0;
    Activation activation = Activation::relu;
};

struct AdamHyper {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Architecture and training schedule. Defaults:
/// 1000/250/250 ReLU units with dropout 0.5/0.4/0.4, 50 epochs, batches of 30.
struct MlpConfig {
    std::size_t input_dim = 0;
    std::vector<HiddenLayerSpec> hidden = {{1000, 0.5}, {250, 0.4}, {250, 0.4}};
    std::size_t output_dim = 2;
    std::size_t epochs = 50;
    std::size_t batch_size = 30;
    AdamHyper adam;
    std::uint64_t seed = 0;

    /// Throws UsageError on zero widths, dropout outside [0, 1) or empty batches.
    void validate() const;
};

struct DenseLayer {
    Matrix weights;  // out x in
    std::vector<double> bias;
    Activation activation = Activation::relu;
    double dropout = 0.0;

    std::size_t in_dim() const noexcept { return weights.cols(); }
    std::size_t out_dim() const noexcept { return weights.rows(); }
};

/// Hidden layers followed by a softmax output layer.
struct MlpModel {
    MlpConfig config;
    std::vector<std::string> class_names;
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.back().out_dim(); }
};

enum class Mode { train, infer };

/// Per-layer values of one forward pass. `pre` holds affine outputs (the last
/// entry are the logits); `post` holds hidden activations after dropout.
struct ForwardCache {
    std::vector<Matrix> pre;
    std::vector<Matrix> post;
    std::vector<Matrix> masks;  // empty matrix when the layer had no dropout
    Matrix probabilities;

    const Matrix& logits() const { return pre.back(); }
};

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> bias;
};

/// Adam moment buffers, one pair per parameter tensor, plus the step counter.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t t = 0;

    static AdamState zeros(std::span<const std::size_t> tensor_sizes);
    static AdamState for_model(const MlpModel& model);
};

struct TrainResult {
    MlpModel model;
    std::vector<double> loss_history;  // mean training loss per epoch
};

struct Prediction {
    Matrix probabilities;
    std::vector<int> labels;
};

/// Glorot-uniform weights and zero biases drawn from `seed`.
MlpModel init_model(const MlpConfig& config, std::uint64_t seed);

/// Train mode requires `dropout_rng` whenever a layer has a positive dropout rate.
ForwardCache forward(const MlpModel& model, const Matrix& batch, Mode mode, Rng* dropout_rng = nullptr);

/// Mean cross-entropy with probabilities clamped to at least 1e-12.
double cross_entropy(const Matrix& probabilities, std::span<const int> labels);

/// Gradients of the mean cross-entropy of a train-mode forward pass.
Gradients backward(const MlpModel& model, const Matrix& batch, std::span<const int> labels,
                   const ForwardCache& cache);

/// One Adam step over a list of parameter tensors sharing a step counter.
void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state, const AdamHyper& hyper);
void adam_step(MlpModel& model, const Gradients& grads, AdamState& state, const AdamHyper& hyper);

/// Mini-batch training with seeded shuffling and dropout; throws NumericError on divergence.
TrainResult train(const Matrix& x, std::span<const int> labels, std::vector<std::string> class_names,
                  MlpConfig config);
TrainResult train(const AnnotatedDataset& data, MlpConfig config);

/// Inference-mode probabilities and argmax labels (ties go to the lowest class).
Prediction predict(const MlpModel& model, const Matrix& x);

int argmax(std::span<const double> row);

nlohmann::json to_json(const MlpModel& model);
MlpModel model_from_json(const nlohmann::json& doc);
std::string serialize(const MlpModel& model);
void save_model(const std::filesystem::path& path, const MlpModel& model);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace exprsaug::mlp
