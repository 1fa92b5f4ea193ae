#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "exprsaug/ingest.hpp"
#include "exprsaug/preprocess.hpp"

namespace exprsaug::pipeline {

enum class FeatureSet { srna, contam, both };

std::string_view to_string(FeatureSet f);
FeatureSet parse_feature_set(std::string_view s);

struct InputPaths {
    std::filesystem::path srna;
    std::filesystem::path contam;
    std::filesystem::path metadata;
};

struct PreprocessConfig {
    FeatureSet feature_set = FeatureSet::srna;
    LabelField label_field = LabelField::tissue;
    int age_scheme = 2;
    bool group_tissues = true;
    bool rpm = true;
    bool minmax = true;
    double zero_threshold = 0.3;
    std::size_t min_class_size = 1;
    /// Leave MinMax to the validation folds instead of the whole dataset.
    bool defer_scaling = false;
};

/// Everything needed to map new raw matrices into a trained model's input space.
struct PipelineState {
    PreprocessConfig config;
    std::vector<std::string> feature_ids;  // kept features, model column order
    std::optional<ScalerParams> scaler;
    std::vector<std::string> class_names;
};

nlohmann::json to_json(const PipelineState& state);
PipelineState state_from_json(const nlohmann::json& doc);
void save_state(const std::filesystem::path& path, const PipelineState& state);
PipelineState load_state(const std::filesystem::path& path);

struct PreprocessReport {
    std::size_t input_samples = 0;
    std::size_t input_features = 0;
    std::size_t dropped_missing = 0;
    std::size_t dropped_unmatched = 0;
    std::size_t dropped_unbinnable = 0;
    std::size_t dropped_small_class = 0;
    std::size_t removed_zero_features = 0;
    std::size_t output_samples = 0;
    std::size_t output_features = 0;
    std::vector<std::string> class_names;
    std::vector<std::size_t> class_counts;

    std::string to_tsv() const;
};

struct Prepared {
    AnnotatedDataset data;
    PipelineState state;
    PreprocessReport report;
};

/// Loads the selected feature namespaces, RPM-normalizing each one on its own
/// library size when `rpm` is set. With both namespaces, only samples present
/// in both matrices are kept, in sRNA order.
ExpressionMatrix load_features(const InputPaths& paths, FeatureSet set, bool rpm);

/// Filters, normalizes and scales an already labeled dataset whose matrix is
/// raw (or RPM-normalized when `already_rpm`).
Prepared prepare_dataset(AnnotatedDataset data, const PreprocessConfig& config, bool already_rpm = false,
                         JoinResult counts = {});

/// Reads the inputs, joins metadata and runs prepare_dataset.
Prepared prepare(const InputPaths& paths, const PreprocessConfig& config);

/// Applies a fitted state to matrices from load_features: selects the kept
/// features by id and applies the stored scaler.
ExpressionMatrix apply_state(const ExpressionMatrix& features, const PipelineState& state);

}  // namespace exprsaug::pipeline
