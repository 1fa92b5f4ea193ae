#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "exprsaug/matrix.hpp"
#include "exprsaug/mlp.hpp"

namespace testing {

/// Logits by direct scalar loops.
inline std::vector<double> naive_logits(const exprsaug::mlp::MlpModel& model, std::vector<double> a) {
    for (const auto& layer : model.layers) {
        std::vector<double> z(layer.out_dim());
        for (std::size_t o = 0; o < z.size(); ++o) {
            z[o] = layer.bias[o];
            for (std::size_t j = 0; j < a.size(); ++j) z[o] += layer.weights(o, j) * a[j];
            if (layer.activation == exprsaug::mlp::Activation::relu) z[o] = std::max(z[o], 0.0);
        }
        a = std::move(z);
    }
    return a;
}

inline int naive_argmax(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Replays a removal order with a full forward pass after every step. Returns
/// (steps, flipped); a flip means reaching `target`, or leaving `original` when target < 0.
inline std::pair<std::size_t, bool> replay_knockout(const exprsaug::mlp::MlpModel& model, std::vector<double> x,
                                                    const std::vector<std::size_t>& order, int original, int target) {
    if (target == original) return {0, true};
    for (std::size_t step = 0; step < order.size(); ++step) {
        x[order[step]] = 0.0;
        const int now = naive_argmax(naive_logits(model, x));
        if (target >= 0 ? now == target : now != original) return {step + 1, true};
    }
    return {order.size(), false};
}

/// Indices sorted by descending score, ties to the lower index.
inline std::vector<std::size_t> descending_order(const std::vector<double>& score) {
    std::vector<std::size_t> order(score.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] > score[b]; });
    return order;
}

using wide = __int128;

/// Exhaustive split search: every candidate feature, every midpoint between
/// consecutive distinct values, partition counts recomputed from scratch.
/// The Gini decrease is kept as the exact fraction num/den.
struct OracleSplit {
    std::size_t feature;
    double threshold;
    wide num;
    wide den;
};

inline std::optional<OracleSplit> oracle_split(const exprsaug::Matrix& x, std::span<const int> y, std::size_t k,
                                               std::span<const std::size_t> samples,
                                               std::span<const std::size_t> features) {
    const auto n = static_cast<wide>(samples.size());
    std::vector<wide> total(k, 0);
    for (auto s : samples) ++total[static_cast<std::size_t>(y[s])];
    wide S = 0;
    for (auto c : total) S += c * c;

    std::optional<OracleSplit> best;
    std::vector<std::size_t> sorted_features(features.begin(), features.end());
    std::sort(sorted_features.begin(), sorted_features.end());
    for (auto f : sorted_features) {
        std::set<double> distinct;
        for (auto s : samples) distinct.insert(x(s, f));
        std::vector<double> vals(distinct.begin(), distinct.end());
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
            double t = vals[i] + (vals[i + 1] - vals[i]) / 2.0;
            if (!(t < vals[i + 1])) t = vals[i];
            std::vector<wide> left(k, 0), right(k, 0);
            for (auto s : samples) (x(s, f) <= t ? left : right)[static_cast<std::size_t>(y[s])]++;
            wide nl = 0, nr = 0, sl = 0, sr = 0;
            for (std::size_t c = 0; c < k; ++c) {
                nl += left[c];
                nr += right[c];
                sl += left[c] * left[c];
                sr += right[c] * right[c];
            }
            // Delta = (SL/nL + SR/nR - S/n) / n
            const wide num = sl * nr * n + sr * nl * n - S * nl * nr;
            const wide den = nl * nr * n * n;
            if (num <= 0) continue;
            if (!best || num * best->den > best->num * den) best = OracleSplit{f, t, num, den};
        }
    }
    return best;
}

}  // namespace testing
