#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "exprsaug/labels.hpp"
#include "exprsaug/matrix.hpp"

namespace exprsaug {

enum class FeatureNamespace { srna, contam };

std::string_view namespace_prefix(FeatureNamespace ns);

/// Features x samples matrix of non-negative expression values.
struct ExpressionMatrix {
    std::vector<std::string> feature_ids;
    std::vector<std::string> sample_ids;
    Matrix values;  // rows = features, cols = samples

    std::size_t n_features() const noexcept { return feature_ids.size(); }
    std::size_t n_samples() const noexcept { return sample_ids.size(); }

    /// Throws DataError if ids are duplicated, shapes disagree or values are negative/non-finite.
    void validate() const;

    ExpressionMatrix select_samples(std::span<const std::size_t> idx) const;
    ExpressionMatrix select_features(std::span<const std::size_t> idx) const;

    /// Samples x features copy, the layout the classifiers consume.
    Matrix design() const { return values.transposed(); }

    bool operator==(const ExpressionMatrix&) const = default;
};

enum class Sex { female, male };

std::string_view to_string(Sex s);

struct MetadataRecord {
    std::string sample_id;
    std::string dataset_id;
    std::optional<std::string> tissue;
    std::optional<Sex> sex;
    std::optional<double> age;

    bool operator==(const MetadataRecord&) const = default;
};

struct MetadataTable {
    std::vector<MetadataRecord> rows;

    const MetadataRecord* find(std::string_view sample_id) const;
    void validate() const;
};

enum class LabelField { tissue, sex, age_interval };

std::string_view to_string(LabelField f);
LabelField parse_label_field(std::string_view s);

/// Expression matrix joined with metadata and an integer-encoded label.
struct AnnotatedDataset {
    ExpressionMatrix matrix;
    MetadataTable metadata;  // one row per matrix sample, same order
    LabelField label_field = LabelField::tissue;
    std::vector<int> labels;
    std::vector<std::string> class_names;  // sorted; label k names class_names[k]

    std::size_t n_samples() const noexcept { return labels.size(); }
    std::size_t n_classes() const noexcept { return class_names.size(); }
    std::vector<std::size_t> class_counts() const;

    /// Subset of samples; class_names are kept as is.
    AnnotatedDataset select_samples(std::span<const std::size_t> idx) const;
    /// Drops classes with no samples and re-encodes labels densely.
    void compact_classes();
};

struct JoinResult {
    AnnotatedDataset dataset;
    std::size_t dropped_missing = 0;  // label field empty
    std::size_t dropped_unmatched = 0;  // no metadata row
    std::size_t dropped_unbinnable = 0;  // age outside the binning range
};

// Parsing works on streams; `source` only labels error messages.
ExpressionMatrix read_expression_matrix(std::istream& in, std::optional<FeatureNamespace> ns,
                                        std::string_view source = "<stream>");
/// Loads a matrix TSV and prefixes every feature id with the namespace.
ExpressionMatrix load_expression_matrix(const std::filesystem::path& path, FeatureNamespace ns);
/// Loads a matrix TSV whose feature ids are already namespaced.
ExpressionMatrix load_expression_matrix(const std::filesystem::path& path);
void write_expression_matrix(std::ostream& out, const ExpressionMatrix& m);
void write_expression_matrix(const std::filesystem::path& path, const ExpressionMatrix& m);

MetadataTable read_metadata(std::istream& in, std::string_view source = "<stream>");
MetadataTable load_metadata(const std::filesystem::path& path);
void write_metadata(std::ostream& out, const MetadataTable& t);
void write_metadata(const std::filesystem::path& path, const MetadataTable& t);

/// Concatenates feature axes (a then b); sample ids must match in order.
ExpressionMatrix merge_matrices(const ExpressionMatrix& a, const ExpressionMatrix& b);

/// Joins metadata onto the matrix and encodes the chosen label field.
/// age_interval requires `age_scheme`.
JoinResult join(const ExpressionMatrix& matrix, const MetadataTable& meta, LabelField field,
                const AgeBinning* age_scheme = nullptr);

}  // namespace exprsaug
