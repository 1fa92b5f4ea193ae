#include "exprsaug/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "exprsaug/errors.hpp"

namespace exprsaug {

ExpressionMatrix rpm_normalize(const ExpressionMatrix& m) {
    ExpressionMatrix out = m;
    const std::size_t nf = m.n_features();
    const long long ns = static_cast<long long>(m.n_samples());
    std::vector<double> totals(m.n_samples(), 0.0);
    for (std::size_t f = 0; f < nf; ++f) {
        auto row = m.values.row(f);
        for (std::size_t s = 0; s < row.size(); ++s) totals[s] += row[s];
    }
    for (std::size_t s = 0; s < totals.size(); ++s)
        if (!(totals[s] > 0.0))
            throw DataError("sample '" + m.sample_ids[s] + "' has zero total count; cannot RPM-normalize");

#pragma omp parallel for schedule(static)
    for (long long ss = 0; ss < ns; ++ss) {
        const std::size_t s = static_cast<std::size_t>(ss);
        for (std::size_t f = 0; f < nf; ++f) out.values(f, s) = m.values(f, s) / totals[s] * 1e6;
    }
    return out;
}

ScalerParams fit_minmax(const ExpressionMatrix& m) {
    ScalerParams p;
    p.feature_ids = m.feature_ids;
    p.min.assign(m.n_features(), 0.0);
    p.max.assign(m.n_features(), 0.0);
    for (std::size_t f = 0; f < m.n_features(); ++f) {
        auto row = m.values.row(f);
        if (row.empty()) continue;
        auto [lo, hi] = std::minmax_element(row.begin(), row.end());
        p.min[f] = *lo;
        p.max[f] = *hi;
    }
    return p;
}

ExpressionMatrix apply_minmax(const ExpressionMatrix& m, const ScalerParams& params) {
    if (params.feature_ids != m.feature_ids)
        throw DataError("scaler was fitted on a different feature set");
    ExpressionMatrix out = m;
    const long long nf = static_cast<long long>(m.n_features());
#pragma omp parallel for schedule(static)
    for (long long ff = 0; ff < nf; ++ff) {
        const std::size_t f = static_cast<std::size_t>(ff);
        const double lo = params.min[f];
        const double range = params.max[f] - lo;
        for (double& v : out.values.row(f)) {
            if (!(range > 0.0)) {
                v = 0.0;
                continue;
            }
            v = std::clamp((v - lo) / range, 0.0, 1.0);
        }
    }
    return out;
}

ExpressionMatrix filter_zero_features(const ExpressionMatrix& m, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw UsageError("zero threshold must lie in [0, 1]");
    std::vector<std::size_t> keep;
    const double n = static_cast<double>(m.n_samples());
    for (std::size_t f = 0; f < m.n_features(); ++f) {
        auto row = m.values.row(f);
        const auto zeros = std::count(row.begin(), row.end(), 0.0);
        if (n == 0.0 || static_cast<double>(zeros) / n <= threshold) keep.push_back(f);
    }
    if (keep.empty()) throw DataError("zero-fraction filter removed every feature");
    return m.select_features(keep);
}

MetadataTable group_tissues(const MetadataTable& meta, const TissueGroupMap& map) {
    MetadataTable out = meta;
    for (auto& r : out.rows)
        if (r.tissue)
            if (auto g = map.group_of(*r.tissue)) r.tissue = *g;
    return out;
}

AnnotatedDataset filter_small_classes(const AnnotatedDataset& data, std::size_t min_samples) {
    if (min_samples < 1) throw UsageError("minimum class size must be at least 1");
    auto counts = data.class_counts();
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < data.n_samples(); ++i)
        if (counts[static_cast<std::size_t>(data.labels[i])] >= min_samples) keep.push_back(i);
    AnnotatedDataset out = data.select_samples(keep);
    out.compact_classes();
    if (out.n_classes() < 2)
        throw DataError("fewer than two classes have at least " + std::to_string(min_samples) + " samples");
    return out;
}

std::vector<std::size_t> balanced_subset(std::span<const int> labels, std::size_t n_classes, Rng& rng) {
    std::vector<std::vector<std::size_t>> members(n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
    std::size_t smallest = labels.size();
    for (const auto& m : members)
        if (!m.empty()) smallest = std::min(smallest, m.size());
    std::vector<std::size_t> keep;
    for (const auto& m : members) {
        if (m.empty()) continue;
        if (m.size() == smallest) {
            keep.insert(keep.end(), m.begin(), m.end());
            continue;
        }
        for (auto pick : rng.sample_without_replacement(m.size(), smallest)) keep.push_back(m[pick]);
    }
    std::sort(keep.begin(), keep.end());
    return keep;
}

AnnotatedDataset downsample_classes(const AnnotatedDataset& data, std::uint64_t seed) {
    if (data.n_classes() < 2) throw DataError("downsampling needs at least two classes");
    Rng rng(derive_seed(seed, "downsample"));
    auto keep = balanced_subset(data.labels, data.n_classes(), rng);
    return data.select_samples(keep);
}

}  // namespace exprsaug
