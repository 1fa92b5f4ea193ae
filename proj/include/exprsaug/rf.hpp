#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "exprsaug/matrix.hpp"
#include "exprsaug/random.hpp"

namespace exprsaug::rf {

/// 1 - sum_c (counts_c / total)^2. Throws DataError for an empty node.
double gini(std::span<const std::size_t> counts);

struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double decrease = 0.0;  // weighted Gini decrease

    bool operator==(const Split&) const = default;
};

/// Best CART split of `samples` (indices into x, repeats allowed) over the
/// candidate features. Thresholds are midpoints between consecutive distinct
/// values and `value <= threshold` goes left. Ties on the decrease go to the
/// lower feature index, then the lower threshold. Returns nullopt when no
/// split has a positive decrease.
std::optional<Split> best_split(const Matrix& x, std::span<const int> labels, std::size_t n_classes,
                                std::span<const std::size_t> samples,
                                std::span<const std::size_t> candidate_features);

struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int label = 0;

    bool is_leaf() const noexcept { return feature < 0; }
    bool operator==(const Node&) const = default;
};

/// Flat node array; node 0 is the root.
struct Tree {
    std::vector<Node> nodes;

    int predict(std::span<const double> x) const;
    std::size_t depth() const;
    bool operator==(const Tree&) const = default;
};

/// Grows one unpruned tree on a bootstrap sample of x, drawing `mtry`
/// candidate features per node. Adds weighted impurity decreases per feature
/// to `importance` when given (sized to x.cols()).
Tree fit_tree(const Matrix& x, std::span<const int> labels, std::size_t n_classes, std::size_t mtry, Rng& rng,
              std::vector<double>* importance = nullptr);

struct Forest {
    std::vector<Tree> trees;
    std::size_t mtry = 1;
    std::vector<std::string> feature_ids;
    std::vector<std::string> class_names;
    std::vector<double> importances;  // mean decrease in Gini per feature
    std::uint64_t seed = 0;

    std::size_t n_trees() const noexcept { return trees.size(); }
    std::size_t n_features() const noexcept { return feature_ids.size(); }
};

/// floor(sqrt(p)), at least 1.
std::size_t default_mtry(std::size_t n_features);

/// Row permutation that sorts samples by (feature values, label). Forests are
/// fitted on this order so the result does not depend on input row order.
std::vector<std::size_t> canonical_order(const Matrix& x, std::span<const int> labels);

/// Bagged forest; tree t uses the stream derive_seed(seed, "rf.tree", t).
/// `mtry` 0 selects default_mtry.
Forest fit_forest(const Matrix& x, std::span<const int> labels, std::vector<std::string> class_names,
                  std::vector<std::string> feature_ids, std::size_t n_trees, std::size_t mtry, std::uint64_t seed);

struct ForestPrediction {
    std::vector<int> labels;
    Matrix vote_fractions;  // samples x classes
};

ForestPrediction predict_forest(const Forest& forest, const Matrix& x);

struct TwoStageOptions {
    std::size_t stage1_trees = 100;
    std::size_t keep = 1000;
    std::size_t stage2_trees = 500;
    bool downsample = false;
};

struct TwoStageResult {
    Forest forest;                       // stage-2 forest over the kept features
    std::vector<std::size_t> selected;   // kept column indices, ascending
    std::vector<double> stage1_importances;

    Matrix reduce(const Matrix& x) const { return x.select_cols(selected); }
    ForestPrediction predict(const Matrix& x_full) const { return predict_forest(forest, reduce(x_full)); }
};

/// Stage 1 ranks all features with a small forest; stage 2 refits a larger
/// forest on the top `keep` features with recomputed mtry.
TwoStageResult two_stage_fit(const Matrix& x, std::span<const int> labels, std::vector<std::string> class_names,
                             std::vector<std::string> feature_ids, const TwoStageOptions& options, std::uint64_t seed);

/// Feature indices by importance, descending; ties to the lower index.
std::vector<std::size_t> rank_features(std::span<const double> importances);

nlohmann::json to_json(const Forest& forest);
Forest forest_from_json(const nlohmann::json& doc);
std::string serialize(const Forest& forest);
void save_forest(const std::filesystem::path& path, const Forest& forest);
Forest load_forest(const std::filesystem::path& path);

}  // namespace exprsaug::rf
