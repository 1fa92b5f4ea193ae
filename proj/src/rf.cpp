#include "exprsaug/rf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "exprsaug/errors.hpp"
#include "exprsaug/preprocess.hpp"

namespace exprsaug::rf {

namespace {

using wide = __int128;

std::size_t sum_squares(const std::vector<std::size_t>& counts) {
    std::size_t s = 0;
    for (auto c : counts) s += c * c;
    return s;
}

int majority(const std::vector<std::size_t>& counts) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < counts.size(); ++k)
        if (counts[k] > counts[best]) best = k;
    return static_cast<int>(best);
}

// Candidate split scored by the rational SL/nL + SR/nR = num / den, where
// S* are sums of squared class counts. Maximizing it maximizes the Gini
// decrease; integer cross-multiplication keeps ties exact.
struct Score {
    wide num = 0;
    wide den = 1;
};

bool greater(const Score& a, const Score& b) { return a.num * b.den > b.num * a.den; }
bool equal(const Score& a, const Score& b) { return a.num * b.den == b.num * a.den; }

}  // namespace

double gini(std::span<const std::size_t> counts) {
    std::size_t total = 0;
    for (auto c : counts) total += c;
    if (total == 0) throw DataError("gini of an empty node");
    double s = 0.0;
    for (auto c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        s += p * p;
    }
    return 1.0 - s;
}

std::optional<Split> best_split(const Matrix& x, std::span<const int> labels, std::size_t n_classes,
                                std::span<const std::size_t> samples,
                                std::span<const std::size_t> candidate_features) {
    const std::size_t n = samples.size();
    if (n < 2) return std::nullopt;
    std::vector<std::size_t> total(n_classes, 0);
    for (auto s : samples) ++total[static_cast<std::size_t>(labels[s])];
    const std::size_t node_ss = sum_squares(total);
    if (node_ss == n * n) return std::nullopt;  // pure

    // A split improves the node iff n * num > node_ss * den.
    std::optional<Split> best;
    Score best_score;
    std::vector<std::size_t> order(samples.begin(), samples.end());
    std::vector<std::size_t> left(n_classes);
    for (auto f : candidate_features) {
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
        std::fill(left.begin(), left.end(), 0);
        // Running sums of squares for both sides, updated in O(1) per sample.
        std::size_t ss_left = 0;
        std::size_t ss_right = node_ss;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const auto c = static_cast<std::size_t>(labels[order[i]]);
            const std::size_t right_c = total[c] - left[c];
            ss_left += 2 * left[c] + 1;
            ss_right -= 2 * right_c - 1;
            ++left[c];
            const double lo = x(order[i], f);
            const double hi = x(order[i + 1], f);
            if (!(lo < hi)) continue;
            const std::size_t n_left = i + 1;
            const std::size_t n_right = n - n_left;
            Score score{static_cast<wide>(ss_left) * static_cast<wide>(n_right) +
                            static_cast<wide>(ss_right) * static_cast<wide>(n_left),
                        static_cast<wide>(n_left) * static_cast<wide>(n_right)};
            if (!(static_cast<wide>(n) * score.num > static_cast<wide>(node_ss) * score.den)) continue;
            double threshold = lo + (hi - lo) / 2.0;
            if (!(threshold < hi)) threshold = lo;
            bool take = false;
            if (!best || greater(score, best_score)) take = true;
            else if (equal(score, best_score))
                take = f < best->feature || (f == best->feature && threshold < best->threshold);
            if (!take) continue;
            best_score = score;
            // decrease = (n * num - node_ss * den) / (n^2 * den)
            const wide dn = static_cast<wide>(n);
            const wide numer = dn * score.num - static_cast<wide>(node_ss) * score.den;
            const wide denom = dn * dn * score.den;
            best = Split{f, threshold, static_cast<double>(numer) / static_cast<double>(denom)};
        }
    }
    return best;
}

int Tree::predict(std::span<const double> x) const {
    std::size_t at = 0;
    while (!nodes[at].is_leaf()) {
        const Node& node = nodes[at];
        at = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                                  : node.right);
    }
    return nodes[at].label;
}

std::size_t Tree::depth() const {
    std::vector<std::size_t> depth(nodes.size(), 0);
    std::size_t deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        deepest = std::max(deepest, depth[i]);
        if (!nodes[i].is_leaf()) {
            depth[static_cast<std::size_t>(nodes[i].left)] = depth[i] + 1;
            depth[static_cast<std::size_t>(nodes[i].right)] = depth[i] + 1;
        }
    }
    return deepest;
}

Tree fit_tree(const Matrix& x, std::span<const int> labels, std::size_t n_classes, std::size_t mtry, Rng& rng,
              std::vector<double>* importance) {
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();
    if (n == 0) throw DataError("cannot fit a tree on zero samples");
    mtry = std::clamp<std::size_t>(mtry, 1, std::max<std::size_t>(p, 1));

    std::vector<std::size_t> boot(n);
    for (auto& b : boot) b = rng.below(n);

    std::vector<std::size_t> pool(p);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::size_t> candidates(mtry);

    struct Pending {
        std::size_t node;
        std::vector<std::size_t> samples;
    };
    Tree tree;
    tree.nodes.emplace_back();
    std::vector<Pending> stack;
    stack.push_back({0, std::move(boot)});
    std::vector<std::size_t> counts(n_classes);
    while (!stack.empty()) {
        Pending item = std::move(stack.back());
        stack.pop_back();
        std::fill(counts.begin(), counts.end(), 0);
        for (auto s : item.samples) ++counts[static_cast<std::size_t>(labels[s])];
        tree.nodes[item.node].label = majority(counts);
        const bool pure = *std::max_element(counts.begin(), counts.end()) == item.samples.size();
        if (pure || item.samples.size() < 2) continue;

        // Partial Fisher-Yates over the persistent pool.
        for (std::size_t i = 0; i < mtry; ++i) {
            std::swap(pool[i], pool[i + rng.below(p - i)]);
            candidates[i] = pool[i];
        }
        auto split = best_split(x, labels, n_classes, item.samples, candidates);
        if (!split) continue;
        if (importance)
            (*importance)[split->feature] +=
                split->decrease * static_cast<double>(item.samples.size()) / static_cast<double>(n);

        std::vector<std::size_t> left, right;
        for (auto s : item.samples) (x(s, split->feature) <= split->threshold ? left : right).push_back(s);
        const auto left_id = tree.nodes.size();
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        Node& node = tree.nodes[item.node];
        node.feature = static_cast<int>(split->feature);
        node.threshold = split->threshold;
        node.left = static_cast<int>(left_id);
        node.right = static_cast<int>(left_id + 1);
        // Right first so the left subtree is expanded next.
        stack.push_back({left_id + 1, std::move(right)});
        stack.push_back({left_id, std::move(left)});
    }
    return tree;
}

std::size_t default_mtry(std::size_t n_features) {
    auto m = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n_features))));
    return std::max<std::size_t>(m, 1);
}

std::vector<std::size_t> canonical_order(const Matrix& x, std::span<const int> labels) {
    std::vector<std::size_t> order(x.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        auto ra = x.row(a);
        auto rb = x.row(b);
        for (std::size_t j = 0; j < ra.size(); ++j)
            if (ra[j] != rb[j]) return ra[j] < rb[j];
        return labels[a] < labels[b];
    });
    return order;
}

Forest fit_forest(const Matrix& x, std::span<const int> labels, std::vector<std::string> class_names,
                  std::vector<std::string> feature_ids, std::size_t n_trees, std::size_t mtry, std::uint64_t seed) {
    if (n_trees < 1) throw UsageError("a forest needs at least one tree");
    if (labels.size() != x.rows()) throw DataError("label count does not match sample count");
    if (feature_ids.size() != x.cols()) throw DataError("feature id count does not match matrix width");
    const std::size_t n_classes = class_names.size();
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw DataError("label out of range");

    auto order = canonical_order(x, labels);
    const Matrix xc = x.select_rows(order);
    std::vector<int> yc(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) yc[i] = labels[order[i]];

    Forest forest;
    forest.mtry = mtry == 0 ? default_mtry(x.cols()) : mtry;
    forest.seed = seed;
    forest.trees.resize(n_trees);
    std::vector<std::vector<double>> per_tree(n_trees, std::vector<double>(x.cols(), 0.0));
    const long long count = static_cast<long long>(n_trees);
#pragma omp parallel for schedule(dynamic)
    for (long long tt = 0; tt < count; ++tt) {
        const auto t = static_cast<std::size_t>(tt);
        Rng rng(derive_seed(seed, "rf.tree", t));
        forest.trees[t] = fit_tree(xc, yc, n_classes, forest.mtry, rng, &per_tree[t]);
    }
    forest.importances.assign(x.cols(), 0.0);
    for (const auto& imp : per_tree)
        for (std::size_t j = 0; j < imp.size(); ++j) forest.importances[j] += imp[j];
    for (double& v : forest.importances) v /= static_cast<double>(n_trees);
    forest.feature_ids = std::move(feature_ids);
    forest.class_names = std::move(class_names);
    return forest;
}

ForestPrediction predict_forest(const Forest& forest, const Matrix& x) {
    if (x.cols() != forest.n_features())
        throw DataError("input has " + std::to_string(x.cols()) + " features, forest expects " +
                        std::to_string(forest.n_features()));
    const std::size_t k = forest.class_names.size();
    ForestPrediction out;
    out.vote_fractions = Matrix(x.rows(), k);
    out.labels.resize(x.rows());
    const long long rows = static_cast<long long>(x.rows());
#pragma omp parallel for schedule(static)
    for (long long rr = 0; rr < rows; ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        std::vector<std::size_t> votes(k, 0);
        for (const auto& tree : forest.trees) ++votes[static_cast<std::size_t>(tree.predict(x.row(r)))];
        out.labels[r] = majority(votes);
        for (std::size_t c = 0; c < k; ++c)
            out.vote_fractions(r, c) = static_cast<double>(votes[c]) / static_cast<double>(forest.n_trees());
    }
    return out;
}

std::vector<std::size_t> rank_features(std::span<const double> importances) {
    std::vector<std::size_t> order(importances.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return importances[a] > importances[b]; });
    return order;
}

TwoStageResult two_stage_fit(const Matrix& x, std::span<const int> labels, std::vector<std::string> class_names,
                             std::vector<std::string> feature_ids, const TwoStageOptions& options,
                             std::uint64_t seed) {
    const Matrix* xs = &x;
    std::span<const int> ys = labels;
    Matrix balanced_x;
    std::vector<int> balanced_y;
    if (options.downsample) {
        Rng rng(derive_seed(seed, "rf.downsample"));
        auto keep = balanced_subset(labels, class_names.size(), rng);
        balanced_x = x.select_rows(keep);
        for (auto i : keep) balanced_y.push_back(labels[i]);
        xs = &balanced_x;
        ys = balanced_y;
    }

    TwoStageResult result;
    Forest stage1 = fit_forest(*xs, ys, class_names, feature_ids, options.stage1_trees, 0,
                               derive_seed(seed, "rf.stage1"));
    auto ranked = rank_features(stage1.importances);
    ranked.resize(std::min(options.keep, ranked.size()));
    std::sort(ranked.begin(), ranked.end());
    result.selected = std::move(ranked);
    result.stage1_importances = std::move(stage1.importances);

    std::vector<std::string> kept_ids;
    for (auto j : result.selected) kept_ids.push_back(feature_ids[j]);
    result.forest = fit_forest(xs->select_cols(result.selected), ys, std::move(class_names), std::move(kept_ids),
                               options.stage2_trees, 0, derive_seed(seed, "rf.stage2"));
    return result;
}

namespace {

nlohmann::json node_json(const Tree& tree, std::size_t at) {
    const Node& node = tree.nodes[at];
    if (node.is_leaf()) return {{"leaf", node.label}};
    return {{"feature", node.feature},
            {"threshold", node.threshold},
            {"label", node.label},
            {"left", node_json(tree, static_cast<std::size_t>(node.left))},
            {"right", node_json(tree, static_cast<std::size_t>(node.right))}};
}

void read_node(const nlohmann::json& j, Tree& tree, std::size_t at, std::size_t n_features, std::size_t n_classes) {
    if (j.contains("leaf")) {
        const int label = j.at("leaf").get<int>();
        if (label < 0 || static_cast<std::size_t>(label) >= n_classes) throw DataError("leaf label out of range");
        tree.nodes[at].label = label;
        return;
    }
    const int feature = j.at("feature").get<int>();
    if (feature < 0 || static_cast<std::size_t>(feature) >= n_features) throw DataError("split feature out of range");
    const auto left = tree.nodes.size();
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    Node& node = tree.nodes[at];
    node.feature = feature;
    node.threshold = j.at("threshold").get<double>();
    node.label = j.value("label", 0);
    node.left = static_cast<int>(left);
    node.right = static_cast<int>(left + 1);
    read_node(j.at("left"), tree, left, n_features, n_classes);
    read_node(j.at("right"), tree, left + 1, n_features, n_classes);
}

}  // namespace

nlohmann::json to_json(const Forest& forest) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : forest.trees) trees.push_back(node_json(t, 0));
    return {{"format_version", 1},
            {"kind", "forest"},
            {"n_trees", forest.n_trees()},
            {"mtry", forest.mtry},
            {"seed", forest.seed},
            {"feature_ids", forest.feature_ids},
            {"class_names", forest.class_names},
            {"importances", forest.importances},
            {"trees", std::move(trees)}};
}

Forest forest_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format_version").get<int>() != 1) throw DataError("unsupported forest format_version");
        if (doc.at("kind").get<std::string>() != "forest") throw DataError("document is not a forest");
        Forest f;
        f.mtry = doc.at("mtry").get<std::size_t>();
        f.seed = doc.at("seed").get<std::uint64_t>();
        f.feature_ids = doc.at("feature_ids").get<std::vector<std::string>>();
        f.class_names = doc.at("class_names").get<std::vector<std::string>>();
        f.importances = doc.at("importances").get<std::vector<double>>();
        if (f.importances.size() != f.feature_ids.size()) throw DataError("importance count mismatch");
        for (const auto& t : doc.at("trees")) {
            Tree tree;
            tree.nodes.emplace_back();
            read_node(t, tree, 0, f.feature_ids.size(), f.class_names.size());
            f.trees.push_back(std::move(tree));
        }
        if (f.trees.size() != doc.at("n_trees").get<std::size_t>()) throw DataError("tree count mismatch");
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed forest document: ") + e.what());
    }
}

std::string serialize(const Forest& forest) { return to_json(forest).dump(1) + "\n"; }

void save_forest(const std::filesystem::path& path, const Forest& forest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << serialize(forest);
}

Forest load_forest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return forest_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace exprsaug::rf
