#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exprsaug/ingest.hpp"
#include "exprsaug/matrix.hpp"
#include "exprsaug/mlp.hpp"
#include "exprsaug/rf.hpp"

namespace exprsaug::validation {

/// Disjoint folds covering every sample; sizes differ by at most one.
struct FoldPlan {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::size_t>> folds;  // sample indices, ascending

    std::vector<std::size_t> training_indices(std::size_t fold) const;
};

/// Seeded permutation dealt round-robin into k folds.
FoldPlan kfold_split(std::size_t n_samples, std::size_t k, std::uint64_t seed);

struct EvalReport {
    std::vector<std::string> class_names;
    double accuracy = 0.0;
    std::vector<std::optional<double>> precision;  // empty when never predicted
    std::vector<std::optional<double>> recall;     // empty when class absent
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::vector<double> fold_accuracies;
    std::optional<double> mean_fold_accuracy;

    std::vector<std::string> sample_ids;  // pooled held-out samples, in evaluation order
    std::vector<int> truth;
    std::vector<int> predicted;

    /// Samples the scaler was fitted on, per fold (fold-safe scaling only).
    std::vector<std::vector<std::string>> scaler_fit_samples;

    // One-dataset-out summaries.
    std::vector<std::string> held_out_datasets;
    std::vector<double> dataset_accuracies;
    std::optional<double> mean_dataset_accuracy;
    std::optional<double> mean_class_recall;
    std::vector<std::string> skipped_datasets;
};

/// Accuracy, per-class precision/recall and the confusion matrix.
EvalReport metrics(std::span<const int> truth, std::span<const int> predicted,
                   const std::vector<std::string>& class_names);

class Classifier {
public:
    virtual ~Classifier() = default;
    virtual std::vector<int> predict(const Matrix& x) const = 0;
};

/// Something that can be fitted on a samples x features matrix.
class Learner {
public:
    virtual ~Learner() = default;
    virtual std::string name() const = 0;
    virtual std::unique_ptr<Classifier> fit(const Matrix& x, std::span<const int> labels,
                                            const std::vector<std::string>& class_names,
                                            const std::vector<std::string>& feature_ids, std::uint64_t seed) const = 0;
};

class MlpLearner final : public Learner {
public:
    explicit MlpLearner(mlp::MlpConfig config = {}) : config_(std::move(config)) {}
    std::string name() const override { return "mlp"; }
    std::unique_ptr<Classifier> fit(const Matrix& x, std::span<const int> labels,
                                    const std::vector<std::string>& class_names,
                                    const std::vector<std::string>& feature_ids, std::uint64_t seed) const override;

private:
    mlp::MlpConfig config_;
};

/// Two-stage forest; downsampling (if enabled) applies to the training portion only.
class ForestLearner final : public Learner {
public:
    explicit ForestLearner(rf::TwoStageOptions options = {.downsample = true}) : options_(options) {}
    std::string name() const override { return "rf"; }
    std::unique_ptr<Classifier> fit(const Matrix& x, std::span<const int> labels,
                                    const std::vector<std::string>& class_names,
                                    const std::vector<std::string>& feature_ids, std::uint64_t seed) const override;

private:
    rf::TwoStageOptions options_;
};

struct PipelineOptions {
    /// Fit MinMax on each training portion instead of expecting pre-scaled input.
    bool fold_safe_scaling = false;
    std::uint64_t seed = 0;
    std::size_t max_plan_attempts = 20;
};

/// Draws a k-fold plan whose training portions contain every class,
/// re-seeding up to `max_plan_attempts` times; throws DataError otherwise.
FoldPlan plan_folds(const AnnotatedDataset& data, std::size_t k, const PipelineOptions& options);

EvalReport cross_validate(const Learner& learner, const AnnotatedDataset& data, const FoldPlan& plan,
                          const PipelineOptions& options);
EvalReport cross_validate(const Learner& learner, const AnnotatedDataset& data, std::size_t k,
                          const PipelineOptions& options);

/// Train on every dataset except `held_out`, test on `held_out` only.
EvalReport one_dataset_out(const Learner& learner, const AnnotatedDataset& data, const std::string& held_out,
                           const PipelineOptions& options);
/// Runs one_dataset_out for every dataset in turn and pools the predictions.
/// Datasets whose classes are missing elsewhere are skipped and listed.
EvalReport one_dataset_out_all(const Learner& learner, const AnnotatedDataset& data, const PipelineOptions& options);

struct SyntheticSpec {
    std::size_t n_classes = 5;
    std::size_t n_features = 200;
    std::size_t n_informative = 20;  // per class, disjoint blocks
    std::size_t samples_per_class = 60;
    double shift = 5.0;
    std::size_t n_datasets = 1;
    double noise_scale = 1.0;
    double bias_sigma = 2.0;  // log-scale spread of per-dataset feature bias
    std::uint64_t seed = 0;
};

struct SyntheticCohort {
    AnnotatedDataset data;
    std::vector<std::vector<std::size_t>> informative;  // per class, feature indices
};

/// Absolute-Gaussian noise plus a per-class shift on that class's informative
/// block. With several datasets, each dataset scales every feature by its own
/// log-normal factor, so held-out datasets look shifted.
SyntheticCohort generate_synthetic(const SyntheticSpec& spec);

std::string format_summary(const EvalReport& report, std::string_view title);
/// Writes <prefix>_confusion.tsv, <prefix>_per_class.tsv and <prefix>_summary.tsv.
void write_report(const std::filesystem::path& dir, const std::string& prefix, const EvalReport& report);

}  // namespace exprsaug::validation
