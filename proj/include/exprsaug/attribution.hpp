#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exprsaug/matrix.hpp"
#include "exprsaug/mlp.hpp"

namespace exprsaug::attribution {

/// DeepLIFT contribution C[i][j][k] of input feature j to logit k for sample i,
/// measured against a reference input.
struct ContributionTensor {
    std::size_t n_samples = 0;
    std::size_t n_features = 0;
    std::size_t n_classes = 0;
    std::vector<double> scores;  // [i][j][k], k fastest
    std::vector<double> reference;
    std::string model_fingerprint;

    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return scores[(i * n_features + j) * n_classes + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return scores[(i * n_features + j) * n_classes + k];
    }
    /// Features x classes slice for one sample.
    Matrix sample(std::size_t i) const;
};

/// Multipliers of every logit w.r.t. every input (classes x features) under
/// the Linear rule for dense layers and the Rescale rule for ReLU. When a
/// ReLU's input barely moves (|dz| < 1e-7) its gradient at the reference is used.
Matrix deeplift_multipliers(const mlp::MlpModel& model, std::span<const double> x, std::span<const double> reference);

/// Contributions on pre-softmax logits for every row of `samples`. An empty
/// reference means the zero vector. Dropout is never applied.
ContributionTensor deeplift_scores(const mlp::MlpModel& model, const Matrix& samples,
                                   std::span<const double> reference = {});

/// D1[j][k]: mean over samples of class k of (own-class score minus the mean
/// score of the other classes). Features x classes.
struct ClassScoreTable {
    Matrix d1;
};

ClassScoreTable class_average_scores(const ContributionTensor& c, std::span<const int> labels);

/// Top `n` features for class k by D1, descending; ties to the lower index.
std::vector<std::size_t> top_n_features(const ClassScoreTable& table, std::size_t k, std::size_t n = 300);

/// D2[j] = C[i][j][own] - C[i][j][target]; target must differ from own.
std::vector<double> score_differences(const ContributionTensor& c, std::size_t i, int own, int target);

enum class KnockoutMode { similarity, stability };

struct KnockoutResult {
    std::vector<std::size_t> removed;  // zeroed features in removal order
    std::size_t steps = 0;
    bool flipped = false;              // false: hit max_steps without a flip
    int original_class = 0;
    int target_class = 0;              // similarity target, or the runner-up in stability mode
    int new_class = 0;
};

/// Zeroes features of `x` one at a time in descending D2 order (computed once
/// at the start) until the prediction flips: to `target` in similarity mode,
/// to any other class in stability mode. Stability mode orders by D2 against
/// the runner-up class. `max_steps` 0 means the feature count.
KnockoutResult knockout(const mlp::MlpModel& model, std::span<const double> x, KnockoutMode mode, int target = -1,
                        std::size_t max_steps = 0);

/// Average knockout steps per class (correctly predicted samples only).
/// Samples that never flip count as max_steps.
struct StabilityReport {
    std::size_t max_steps = 0;
    std::vector<std::size_t> samples_used;                       // per class
    std::vector<std::vector<std::optional<double>>> similarity;  // [k][k'], diagonal empty
    std::vector<std::optional<double>> stability;                // [k]
    std::vector<std::vector<std::size_t>> similarity_no_flip;    // counts
    std::vector<std::size_t> stability_no_flip;
    std::vector<std::size_t> missing_classes;  // no correctly predicted sample
};

StabilityReport stability_matrix(const mlp::MlpModel& model, const Matrix& x, std::span<const int> labels,
                                 std::size_t max_steps = 0);

/// Writes a labelled TSV (rows = features, columns = classes) and, when
/// `svg_path` is set, an SVG grid coloured with a diverging palette centred at 0.
void emit_heatmap(const Matrix& scores, std::span<const std::string> row_labels,
                  std::span<const std::string> col_labels, const std::filesystem::path& tsv_path,
                  const std::optional<std::filesystem::path>& svg_path = std::nullopt);

std::string render_svg(const Matrix& scores, std::span<const std::string> row_labels,
                       std::span<const std::string> col_labels);

std::string model_fingerprint(const mlp::MlpModel& model);

}  // namespace exprsaug::attribution
