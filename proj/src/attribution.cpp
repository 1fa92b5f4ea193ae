#include "exprsaug/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "exprsaug/errors.hpp"
#include "exprsaug/kernels.hpp"
#include "exprsaug/text.hpp"

namespace exprsaug::attribution {

namespace {

constexpr double kRescaleEpsilon = 1e-7;

Matrix as_row(std::span<const double> v) {
    Matrix m(1, v.size());
    std::copy(v.begin(), v.end(), m.data());
    return m;
}

// Logits of a single input, with first-layer pre-activations supplied.
std::vector<double> logits_from_first(const mlp::MlpModel& model, std::span<const double> first_pre) {
    const std::size_t n_layers = model.layers.size();
    std::vector<double> act(first_pre.begin(), first_pre.end());
    for (std::size_t l = 0;; ++l) {
        if (l + 1 == n_layers) return act;
        if (model.layers[l].activation == mlp::Activation::relu)
            for (double& v : act) v = v > 0.0 ? v : 0.0;
        const mlp::DenseLayer& next = model.layers[l + 1];
        std::vector<double> z(next.out_dim());
        for (std::size_t o = 0; o < next.out_dim(); ++o) {
            double acc = next.bias[o];
            auto w = next.weights.row(o);
            for (std::size_t i = 0; i < act.size(); ++i) acc += w[i] * act[i];
            z[o] = acc;
        }
        act = std::move(z);
    }
}

int runner_up(std::span<const double> logits, int top) {
    int best = -1;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (static_cast<int>(k) == top) continue;
        if (best < 0 || logits[k] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    }
    return best;
}

}  // namespace

Matrix ContributionTensor::sample(std::size_t i) const {
    Matrix m(n_features, n_classes);
    std::copy_n(scores.begin() + static_cast<std::ptrdiff_t>(i * n_features * n_classes), n_features * n_classes,
                m.data());
    return m;
}

Matrix deeplift_multipliers(const mlp::MlpModel& model, std::span<const double> x, std::span<const double> reference) {
    if (x.size() != model.input_dim() || reference.size() != model.input_dim())
        throw DataError("deeplift: input width does not match the model");
    const auto fx = mlp::forward(model, as_row(x), mlp::Mode::infer);
    const auto fr = mlp::forward(model, as_row(reference), mlp::Mode::infer);

    const std::size_t n_layers = model.layers.size();
    Matrix m = model.layers.back().weights;  // classes x last hidden
    Matrix next;
    for (std::size_t l = n_layers - 1; l-- > 0;) {
        const mlp::DenseLayer& layer = model.layers[l];
        if (layer.activation == mlp::Activation::relu) {
            auto zx = fx.pre[l].row(0);
            auto zr = fr.pre[l].row(0);
            for (std::size_t u = 0; u < layer.out_dim(); ++u) {
                const double dz = zx[u] - zr[u];
                double mult;
                if (std::abs(dz) < kRescaleEpsilon) {
                    mult = zr[u] > 0.0 ? 1.0 : 0.0;
                } else {
                    mult = (std::max(zx[u], 0.0) - std::max(zr[u], 0.0)) / dz;
                }
                for (std::size_t k = 0; k < m.rows(); ++k) m(k, u) *= mult;
            }
        }
        kernels::input_gradient(m, layer.weights, next);
        std::swap(m, next);
    }
    return m;
}

ContributionTensor deeplift_scores(const mlp::MlpModel& model, const Matrix& samples,
                                   std::span<const double> reference) {
    if (samples.cols() != model.input_dim())
        throw DataError("deeplift: input has " + std::to_string(samples.cols()) + " features, model expects " +
                        std::to_string(model.input_dim()));
    ContributionTensor c;
    c.n_samples = samples.rows();
    c.n_features = samples.cols();
    c.n_classes = model.output_dim();
    c.reference = reference.empty() ? std::vector<double>(c.n_features, 0.0)
                                    : std::vector<double>(reference.begin(), reference.end());
    if (c.reference.size() != c.n_features) throw DataError("deeplift: reference width mismatch");
    c.model_fingerprint = model_fingerprint(model);
    c.scores.assign(c.n_samples * c.n_features * c.n_classes, 0.0);

    const long long n = static_cast<long long>(c.n_samples);
    bool finite = true;
#pragma omp parallel for schedule(dynamic) reduction(&& : finite)
    for (long long ii = 0; ii < n; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        auto x = samples.row(i);
        Matrix mult = deeplift_multipliers(model, x, c.reference);
        for (std::size_t j = 0; j < c.n_features; ++j) {
            const double dx = x[j] - c.reference[j];
            for (std::size_t k = 0; k < c.n_classes; ++k) {
                const double v = mult(k, j) * dx;
                finite = finite && std::isfinite(v);
                c.at(i, j, k) = v;
            }
        }
    }
    if (!finite) throw NumericError("deeplift produced a non-finite contribution");
    return c;
}

ClassScoreTable class_average_scores(const ContributionTensor& c, std::span<const int> labels) {
    if (labels.size() != c.n_samples) throw DataError("label count does not match contribution samples");
    if (c.n_classes < 2) throw DataError("class scores need at least two classes");
    std::vector<std::size_t> counts(c.n_classes, 0);
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= c.n_classes) throw DataError("label out of range");
        ++counts[static_cast<std::size_t>(y)];
    }
    for (std::size_t k = 0; k < c.n_classes; ++k)
        if (counts[k] == 0) throw DataError("class " + std::to_string(k) + " has no samples");

    ClassScoreTable t;
    t.d1 = Matrix(c.n_features, c.n_classes);
    const double others = static_cast<double>(c.n_classes - 1);
    for (std::size_t i = 0; i < c.n_samples; ++i) {
        const auto k = static_cast<std::size_t>(labels[i]);
        for (std::size_t j = 0; j < c.n_features; ++j) {
            double rest = 0.0;
            for (std::size_t kk = 0; kk < c.n_classes; ++kk)
                if (kk != k) rest += c.at(i, j, kk);
            t.d1(j, k) += c.at(i, j, k) - rest / others;
        }
    }
    for (std::size_t j = 0; j < c.n_features; ++j)
        for (std::size_t k = 0; k < c.n_classes; ++k) t.d1(j, k) /= static_cast<double>(counts[k]);
    return t;
}

std::vector<std::size_t> top_n_features(const ClassScoreTable& table, std::size_t k, std::size_t n) {
    if (n < 1) throw UsageError("top-n needs n >= 1");
    if (k >= table.d1.cols()) throw DataError("class index out of range");
    std::vector<std::size_t> order(table.d1.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return table.d1(a, k) > table.d1(b, k); });
    order.resize(std::min(n, order.size()));
    return order;
}

std::vector<double> score_differences(const ContributionTensor& c, std::size_t i, int own, int target) {
    if (own == target) throw DataError("score differences need a target class different from the own class");
    if (i >= c.n_samples || own < 0 || target < 0 || static_cast<std::size_t>(own) >= c.n_classes ||
        static_cast<std::size_t>(target) >= c.n_classes)
        throw DataError("score differences: index out of range");
    std::vector<double> d2(c.n_features);
    for (std::size_t j = 0; j < c.n_features; ++j)
        d2[j] = c.at(i, j, static_cast<std::size_t>(own)) - c.at(i, j, static_cast<std::size_t>(target));
    return d2;
}

KnockoutResult knockout(const mlp::MlpModel& model, std::span<const double> x, KnockoutMode mode, int target,
                        std::size_t max_steps) {
    const std::size_t p = model.input_dim();
    if (x.size() != p) throw DataError("knockout: input width does not match the model");
    const std::size_t n_classes = model.output_dim();
    if (max_steps == 0 || max_steps > p) max_steps = p;

    const mlp::DenseLayer& first = model.layers.front();
    std::vector<double> z1(first.out_dim());
    for (std::size_t o = 0; o < z1.size(); ++o) {
        double acc = first.bias[o];
        auto w = first.weights.row(o);
        for (std::size_t j = 0; j < p; ++j) acc += w[j] * x[j];
        z1[o] = acc;
    }
    const auto logits0 = logits_from_first(model, z1);

    KnockoutResult r;
    r.original_class = mlp::argmax(logits0);
    r.new_class = r.original_class;
    if (mode == KnockoutMode::similarity) {
        if (target < 0 || static_cast<std::size_t>(target) >= n_classes)
            throw DataError("knockout: similarity target out of range");
        r.target_class = target;
        if (target == r.original_class) {
            r.flipped = true;
            return r;
        }
    } else {
        if (n_classes < 2) throw DataError("knockout: stability needs at least two classes");
        r.target_class = runner_up(logits0, r.original_class);
    }

    const std::vector<double> reference(p, 0.0);
    Matrix mult = deeplift_multipliers(model, x, reference);
    const auto own = static_cast<std::size_t>(r.original_class);
    const auto other = static_cast<std::size_t>(r.target_class);
    std::vector<double> d2(p);
    for (std::size_t j = 0; j < p; ++j) d2[j] = (mult(own, j) - mult(other, j)) * x[j];
    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d2[a] > d2[b]; });

    for (std::size_t step = 0; step < max_steps; ++step) {
        const std::size_t j = order[step];
        r.removed.push_back(j);
        const double xj = x[j];
        if (xj != 0.0)
            for (std::size_t o = 0; o < z1.size(); ++o) z1[o] -= first.weights(o, j) * xj;
        const int now = mlp::argmax(logits_from_first(model, z1));
        r.steps = step + 1;
        r.new_class = now;
        const bool done = mode == KnockoutMode::similarity ? now == r.target_class : now != r.original_class;
        if (done) {
            r.flipped = true;
            return r;
        }
    }
    return r;
}

StabilityReport stability_matrix(const mlp::MlpModel& model, const Matrix& x, std::span<const int> labels,
                                 std::size_t max_steps) {
    if (labels.size() != x.rows()) throw DataError("label count does not match sample count");
    const std::size_t n_classes = model.output_dim();
    const std::size_t p = model.input_dim();
    if (max_steps == 0 || max_steps > p) max_steps = p;
    auto pred = mlp::predict(model, x);

    struct PerSample {
        bool used = false;
        KnockoutResult stability;
        std::vector<KnockoutResult> similarity;
    };
    std::vector<PerSample> results(x.rows());
    const long long n = static_cast<long long>(x.rows());
#pragma omp parallel for schedule(dynamic)
    for (long long ii = 0; ii < n; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        if (pred.labels[i] != labels[i]) continue;
        PerSample& ps = results[i];
        ps.used = true;
        ps.stability = knockout(model, x.row(i), KnockoutMode::stability, -1, max_steps);
        ps.similarity.resize(n_classes);
        for (std::size_t k = 0; k < n_classes; ++k)
            if (static_cast<int>(k) != labels[i])
                ps.similarity[k] = knockout(model, x.row(i), KnockoutMode::similarity, static_cast<int>(k), max_steps);
    }

    StabilityReport rep;
    rep.max_steps = max_steps;
    rep.samples_used.assign(n_classes, 0);
    rep.similarity.assign(n_classes, std::vector<std::optional<double>>(n_classes));
    rep.similarity_no_flip.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
    rep.stability.assign(n_classes, std::nullopt);
    rep.stability_no_flip.assign(n_classes, 0);
    std::vector<std::vector<double>> sim_sum(n_classes, std::vector<double>(n_classes, 0.0));
    std::vector<double> stab_sum(n_classes, 0.0);
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!results[i].used) continue;
        const auto k = static_cast<std::size_t>(labels[i]);
        ++rep.samples_used[k];
        stab_sum[k] += static_cast<double>(results[i].stability.steps);
        if (!results[i].stability.flipped) ++rep.stability_no_flip[k];
        for (std::size_t kk = 0; kk < n_classes; ++kk) {
            if (kk == k) continue;
            const auto& ko = results[i].similarity[kk];
            sim_sum[k][kk] += static_cast<double>(ko.steps);
            if (!ko.flipped) ++rep.similarity_no_flip[k][kk];
        }
    }
    for (std::size_t k = 0; k < n_classes; ++k) {
        if (rep.samples_used[k] == 0) {
            rep.missing_classes.push_back(k);
            continue;
        }
        const double used = static_cast<double>(rep.samples_used[k]);
        rep.stability[k] = stab_sum[k] / used;
        for (std::size_t kk = 0; kk < n_classes; ++kk)
            if (kk != k) rep.similarity[k][kk] = sim_sum[k][kk] / used;
    }
    return rep;
}

void emit_heatmap(const Matrix& scores, std::span<const std::string> row_labels,
                  std::span<const std::string> col_labels, const std::filesystem::path& tsv_path,
                  const std::optional<std::filesystem::path>& svg_path) {
    if (scores.rows() == 0 || row_labels.empty()) throw DataError("heatmap needs at least one feature row");
    if (row_labels.size() != scores.rows() || col_labels.size() != scores.cols())
        throw DataError("heatmap labels do not match the score matrix");
    for (double v : scores.values())
        if (!std::isfinite(v)) throw NumericError("heatmap scores must be finite");
    {
        std::ofstream out(tsv_path, std::ios::binary);
        if (!out) throw DataError("cannot write " + tsv_path.string());
        out << "feature_id";
        for (const auto& c : col_labels) out << '\t' << c;
        out << '\n';
        for (std::size_t r = 0; r < scores.rows(); ++r) {
            out << row_labels[r];
            for (double v : scores.row(r)) out << '\t' << text::format_real(v);
            out << '\n';
        }
        if (!out) throw DataError("failed writing " + tsv_path.string());
    }
    if (svg_path) {
        std::ofstream out(*svg_path, std::ios::binary);
        if (!out) throw DataError("cannot write " + svg_path->string());
        out << render_svg(scores, row_labels, col_labels);
    }
}

namespace {

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

// Blue (negative) - white (0) - red (positive).
std::string diverging_color(double v, double scale) {
    const double t = scale > 0.0 ? std::clamp(v / scale, -1.0, 1.0) : 0.0;
    int r = 255, g = 255, b = 255;
    if (t > 0) {
        g = b = static_cast<int>(std::lround(255.0 * (1.0 - t)));
    } else if (t < 0) {
        r = g = static_cast<int>(std::lround(255.0 * (1.0 + t)));
    }
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace

std::string render_svg(const Matrix& scores, std::span<const std::string> row_labels,
                       std::span<const std::string> col_labels) {
    constexpr int cell = 14;
    constexpr int left = 160;
    constexpr int top = 90;
    double scale = 0.0;
    for (double v : scores.values()) scale = std::max(scale, std::abs(v));
    const auto width = left + static_cast<int>(scores.cols()) * cell + 10;
    const auto height = top + static_cast<int>(scores.rows()) * cell + 10;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
    for (std::size_t c = 0; c < col_labels.size(); ++c) {
        const int x = left + static_cast<int>(c) * cell + cell / 2;
        svg << "<text transform=\"translate(" << x << "," << top - 4 << ") rotate(-60)\">"
            << xml_escape(col_labels[c]) << "</text>\n";
    }
    for (std::size_t r = 0; r < scores.rows(); ++r) {
        const int y = top + static_cast<int>(r) * cell;
        svg << "<text x=\"" << left - 4 << "\" y=\"" << y + cell - 3 << "\" text-anchor=\"end\">"
            << xml_escape(row_labels[r]) << "</text>\n";
        for (std::size_t c = 0; c < scores.cols(); ++c) {
            svg << "<rect class=\"cell\" x=\"" << left + static_cast<int>(c) * cell << "\" y=\"" << y
                << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
                << diverging_color(scores(r, c), scale) << "\"><title>" << text::format_real(scores(r, c))
                << "</title></rect>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string model_fingerprint(const mlp::MlpModel& model) {
    const std::string doc = mlp::serialize(model);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : doc) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace exprsaug::attribution
