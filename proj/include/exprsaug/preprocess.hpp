#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "exprsaug/ingest.hpp"
#include "exprsaug/labels.hpp"
#include "exprsaug/random.hpp"

namespace exprsaug {

/// Per-feature range captured by fit_minmax.
struct ScalerParams {
    std::vector<std::string> feature_ids;
    std::vector<double> min;
    std::vector<double> max;
};

/// Reads per million: each sample column rescaled to sum to 1e6.
ExpressionMatrix rpm_normalize(const ExpressionMatrix& m);

ScalerParams fit_minmax(const ExpressionMatrix& m);
/// Maps each feature to [0, 1] with the fitted range. Values outside the
/// fitted range are clamped; constant features map to 0.
ExpressionMatrix apply_minmax(const ExpressionMatrix& m, const ScalerParams& params);

/// Removes features whose fraction of zero entries is strictly greater than `threshold`.
ExpressionMatrix filter_zero_features(const ExpressionMatrix& m, double threshold = 0.3);

MetadataTable group_tissues(const MetadataTable& meta, const TissueGroupMap& map);

inline const std::string& bin_age(double age, const AgeBinning& scheme) { return scheme.bin(age); }

/// Drops classes with fewer than `min_samples` samples; needs at least two survivors.
AnnotatedDataset filter_small_classes(const AnnotatedDataset& data, std::size_t min_samples);

/// Indices of a class-balanced subset: every class cut to the smallest
/// class size, chosen without replacement. Returned in ascending order.
std::vector<std::size_t> balanced_subset(std::span<const int> labels, std::size_t n_classes, Rng& rng);

AnnotatedDataset downsample_classes(const AnnotatedDataset& data, std::uint64_t seed);

}  // namespace exprsaug
