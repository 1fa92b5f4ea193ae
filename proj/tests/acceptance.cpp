// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "exprsaug/attribution.hpp"
#include "exprsaug/cli.hpp"
#include "exprsaug/labels.hpp"
#include "exprsaug/mlp.hpp"
#include "exprsaug/pipeline.hpp"
#include "exprsaug/preprocess.hpp"
#include "exprsaug/rf.hpp"
#include "exprsaug/validation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace exprsaug;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

mlp::MlpModel random_model(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng,
                           mlp::Activation act = mlp::Activation::relu, double dropout = 0.0) {
    mlp::MlpConfig c;
    c.input_dim = in;
    c.output_dim = out;
    c.hidden.clear();
    for (auto h : hidden) c.hidden.push_back({h, dropout, act});
    auto model = mlp::init_model(c, rng.next());
    for (auto& layer : model.layers)
        for (double& b : layer.bias) b = 0.2 * rng.normal();
    return model;
}

Matrix uniform_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (double& v : m.values()) v = rng.uniform();
    return m;
}

// 1
Outcome gradient_check() {
    const auto t0 = Clock::now();
    Rng rng(101);
    double worst = 0.0;
    std::size_t checked = 0, skipped = 0;
    for (int net = 0; net < 20; ++net) {
        const std::size_t in = 2 + rng.below(19), hid = 2 + rng.below(9), out = 2 + rng.below(4);
        auto model = random_model(in, {hid}, out, rng, mlp::Activation::relu, rng.uniform() < 0.5 ? 0.3 : 0.0);
        const std::size_t n = 4 + rng.below(5);
        auto x = uniform_matrix(n, in, rng);
        std::vector<int> y(n);
        for (int& v : y) v = static_cast<int>(rng.below(out));
        const std::uint64_t mask_seed = rng.next();
        auto pass = [&](std::vector<bool>* pattern) {
            Rng masks(mask_seed);
            auto cache = mlp::forward(model, x, mlp::Mode::train, &masks);
            if (pattern) {
                pattern->clear();
                for (std::size_t l = 0; l + 1 < cache.pre.size(); ++l)
                    for (double v : cache.pre[l].values()) pattern->push_back(v > 0.0);
            }
            return cache;
        };
        std::vector<bool> base;
        auto g = mlp::backward(model, x, y, pass(&base));
        const double h = 1e-5;
        auto probe = [&](double& param, double analytic) {
            const double keep = param;
            std::vector<bool> pu, pd;
            param = keep + h;
            const double up = mlp::cross_entropy(pass(&pu).probabilities, y);
            param = keep - h;
            const double down = mlp::cross_entropy(pass(&pd).probabilities, y);
            param = keep;
            if (pu != base || pd != base) {
                ++skipped;  // a ReLU kink lies inside the stencil
                return;
            }
            const double numeric = (up - down) / (2 * h);
            worst = std::max(worst, std::abs(numeric - analytic) /
                                        std::max({std::abs(numeric), std::abs(analytic), 1e-6}));
            ++checked;
        };
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            auto& layer = model.layers[l];
            for (std::size_t i = 0; i < layer.weights.size(); ++i) probe(layer.weights.data()[i], g.weights[l].data()[i]);
            for (std::size_t i = 0; i < layer.bias.size(); ++i) probe(layer.bias[i], g.bias[l][i]);
        }
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 30.0 && checked > 0,
            "max rel err " + fmt(worst) + " over " + std::to_string(checked) + " params (" + std::to_string(skipped) +
                " at kinks), " + fmt(secs, 3) + " s"};
}

// 2
Outcome summation_to_delta() {
    const auto t0 = Clock::now();
    Rng rng(202);
    double worst = 0.0;
    bool ok = true;
    for (int net = 0; net < 10; ++net) {
        const std::size_t in = 5 + rng.below(20);
        auto model = random_model(in, {4 + rng.below(12), 3 + rng.below(8)}, 2 + rng.below(4), rng);
        auto x = uniform_matrix(100, in, rng);
        auto c = attribution::deeplift_scores(model, x);
        const auto ref = testing::naive_logits(model, std::vector<double>(in, 0.0));
        for (std::size_t i = 0; i < 100; ++i) {
            auto row = x.row(i);
            const auto logits = testing::naive_logits(model, {row.begin(), row.end()});
            for (std::size_t k = 0; k < logits.size(); ++k) {
                double sum = 0.0;
                for (std::size_t j = 0; j < in; ++j) sum += c.at(i, j, k);
                const double delta = logits[k] - ref[k];
                const double err = std::abs(sum - delta);
                worst = std::max(worst, err);
                ok = ok && err <= std::max(1e-5, 1e-6 * std::abs(delta));
            }
        }
    }
    const double secs = seconds_since(t0);
    return {ok && secs < 30.0, "max |sum - delta| " + fmt(worst) + ", " + fmt(secs, 3) + " s"};
}

// 3
Outcome linear_equivalence() {
    Rng rng(303);
    double worst = 0.0;
    for (int net = 0; net < 10; ++net) {
        const std::size_t in = 2 + rng.below(15);
        std::vector<std::size_t> hidden(rng.below(3));
        for (auto& h : hidden) h = 2 + rng.below(10);
        auto model = random_model(in, hidden, 2 + rng.below(4), rng, mlp::Activation::identity);
        Matrix weff = model.layers[0].weights;
        for (std::size_t l = 1; l < model.layers.size(); ++l) {
            const Matrix& w = model.layers[l].weights;
            Matrix next(w.rows(), weff.cols());
            for (std::size_t r = 0; r < w.rows(); ++r)
                for (std::size_t c = 0; c < weff.cols(); ++c)
                    for (std::size_t m = 0; m < w.cols(); ++m) next(r, c) += w(r, m) * weff(m, c);
            weff = next;
        }
        auto x = uniform_matrix(20, in, rng);
        auto c = attribution::deeplift_scores(model, x);
        for (std::size_t i = 0; i < 20; ++i)
            for (std::size_t j = 0; j < in; ++j)
                for (std::size_t k = 0; k < weff.rows(); ++k)
                    worst = std::max(worst, std::abs(c.at(i, j, k) - weff(k, j) * x(i, j)));
    }
    return {worst <= 1e-10, "max abs err " + fmt(worst)};
}

// 4
Outcome knockout_oracle() {
    Rng rng(404);
    std::size_t runs = 0, mismatches = 0, flips = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t p = 2 + rng.below(9), k = 2 + rng.below(3);
        auto model = random_model(p, {3 + rng.below(6)}, k, rng);
        std::vector<double> x(p);
        for (double& v : x) v = rng.uniform();
        Matrix one(1, p);
        std::copy(x.begin(), x.end(), one.data());
        auto c = attribution::deeplift_scores(model, one);
        const auto logits = testing::naive_logits(model, x);
        const int own = testing::naive_argmax(logits);
        auto check = [&](const attribution::KnockoutResult& r, int target, bool similarity) {
            auto order = testing::descending_order(attribution::score_differences(c, 0, own, target));
            auto [steps, flipped] = testing::replay_knockout(model, x, order, own, similarity ? target : -1);
            ++runs;
            flips += flipped;
            if (r.steps != steps || r.flipped != flipped || r.original_class != own) ++mismatches;
        };
        for (int t = 0; t < static_cast<int>(k); ++t)
            if (t != own) check(attribution::knockout(model, x, attribution::KnockoutMode::similarity, t), t, true);
        auto s = attribution::knockout(model, x, attribution::KnockoutMode::stability);
        int runner = own == 0 ? 1 : 0;
        for (int q = 0; q < static_cast<int>(k); ++q)
            if (q != own && logits[static_cast<std::size_t>(q)] > logits[static_cast<std::size_t>(runner)]) runner = q;
        if (s.target_class != runner) ++mismatches;
        check(s, runner, false);
    }
    return {mismatches == 0, std::to_string(runs) + " knockouts on 60 models, " + std::to_string(flips) +
                                 " flipped, " + std::to_string(mismatches) + " mismatches"};
}

// 5
Outcome cart_oracle() {
    Rng rng(505);
    std::size_t mismatches = 0, with_split = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(49), p = 1 + rng.below(10), k = 2 + rng.below(3);
        const bool coarse = trial % 2 == 0;
        Matrix x(n, p);
        for (double& v : x.values()) v = coarse ? static_cast<double>(rng.below(4)) : rng.normal();
        std::vector<int> y(n);
        for (int& c : y) c = static_cast<int>(rng.below(k));
        std::vector<std::size_t> samples(n), features(p);
        for (std::size_t i = 0; i < n; ++i) samples[i] = i;
        for (std::size_t j = 0; j < p; ++j) features[j] = j;
        auto got = rf::best_split(x, y, k, samples, features);
        auto want = testing::oracle_split(x, y, k, samples, features);
        if (got.has_value() != want.has_value()) {
            ++mismatches;
            continue;
        }
        if (!got) continue;
        ++with_split;
        if (got->feature != want->feature || got->threshold != want->threshold ||
            got->decrease != static_cast<double>(want->num) / static_cast<double>(want->den))
            ++mismatches;
    }
    return {mismatches == 0,
            "100 datasets, " + std::to_string(with_split) + " with a split, " + std::to_string(mismatches) + " mismatches"};
}

pipeline::PreprocessConfig synthetic_preprocess() {
    pipeline::PreprocessConfig config;
    config.feature_set = pipeline::FeatureSet::srna;
    config.label_field = LabelField::tissue;
    return config;
}

validation::SyntheticSpec headline_spec(std::size_t informative) {
    validation::SyntheticSpec spec;
    spec.n_classes = 5;
    spec.n_features = 2000;
    spec.n_informative = informative;
    spec.samples_per_class = 60;
    spec.shift = 5.0;
    spec.seed = 2020;
    return spec;
}

mlp::MlpConfig headline_mlp() {
    mlp::MlpConfig config;
    config.epochs = 50;
    config.batch_size = 30;
    return config;
}

rf::TwoStageOptions headline_rf() { return {.stage1_trees = 100, .keep = 1000, .stage2_trees = 500, .downsample = true}; }

struct CvPair {
    double mlp = 0.0;
    double rf = 0.0;
    double seconds = 0.0;
};

CvPair cv_both(const validation::SyntheticSpec& spec) {
    const auto t0 = Clock::now();
    auto cohort = validation::generate_synthetic(spec);
    auto prepared = pipeline::prepare_dataset(cohort.data, synthetic_preprocess());
    validation::PipelineOptions opts;
    opts.seed = 7;
    auto plan = validation::plan_folds(prepared.data, 5, opts);
    CvPair r;
    r.mlp = validation::cross_validate(validation::MlpLearner(headline_mlp()), prepared.data, plan, opts).accuracy;
    r.rf = validation::cross_validate(validation::ForestLearner(headline_rf()), prepared.data, plan, opts).accuracy;
    r.seconds = seconds_since(t0);
    return r;
}

// 6
Outcome synthetic_cv() {
    auto r = cv_both(headline_spec(20));
    return {r.mlp >= 0.95 && r.rf >= 0.95 && r.seconds < 300.0,
            "mlp " + fmt(r.mlp) + ", rf " + fmt(r.rf) + ", " + fmt(r.seconds, 3) + " s"};
}

// 7
Outcome dataset_gap() {
    auto spec = headline_spec(20);
    spec.n_datasets = 6;
    spec.bias_sigma = 2.0;
    auto cohort = validation::generate_synthetic(spec);
    auto prepared = pipeline::prepare_dataset(cohort.data, synthetic_preprocess());
    validation::PipelineOptions opts;
    opts.seed = 7;
    validation::ForestLearner learner(headline_rf());
    const double cv = validation::cross_validate(learner, prepared.data, 5, opts).accuracy;
    auto odo = validation::one_dataset_out_all(learner, prepared.data, opts);
    return {odo.accuracy <= cv - 0.05 && odo.skipped_datasets.empty(),
            "rf cv " + fmt(cv) + ", one-dataset-out " + fmt(odo.accuracy) + " over " +
                std::to_string(odo.held_out_datasets.size()) + " datasets"};
}

// 8: 20 planted features among 2000 (4 per class).
Outcome feature_recovery() {
    auto cohort = validation::generate_synthetic(headline_spec(4));
    auto prepared = pipeline::prepare_dataset(cohort.data, synthetic_preprocess());
    const auto& d = prepared.data;
    auto fit = rf::two_stage_fit(d.matrix.design(), d.labels, d.class_names, d.matrix.feature_ids, headline_rf(), 7);
    std::set<std::string> kept;
    for (auto j : fit.selected) kept.insert(d.matrix.feature_ids[j]);
    std::size_t planted = 0, found = 0;
    for (const auto& block : cohort.informative)
        for (auto j : block) {
            ++planted;
            found += kept.count(cohort.data.matrix.feature_ids[j]);
        }
    return {planted == 20 && found == planted && kept.size() == 1000,
            std::to_string(found) + " of " + std::to_string(planted) + " planted features in the top " +
                std::to_string(kept.size())};
}

// 9
Outcome table_mappings() {
    const std::vector<std::pair<std::string, std::vector<std::string>>> groups = {
        {"blood_group",
         {"blood", "blood plasma", "blood serum", "peripheral blood", "umbilical cord blood", "serum", "buffy coat",
          "immortal human B cell", "liver", "lymphoblastoid cell"}},
        {"brain_group", {"brain", "cingulate gyrus", "motor cortex", "prefrontal cortex", "neocortex"}},
        {"epithelium_group", {"skin", "dermis", "epidermis", "breast", "oral mucosa", "larynx"}},
        {"gland_group",
         {"prostate gland", "testis", "kidney", "bladder", "uterine endometrium", "tonsil", "lymph node"}},
        {"intestine_group", {"intestine", "colon", "ileal mucosa"}},
    };
    const auto map = TissueGroupMap::builtin();
    std::size_t rows = 0, bad = 0;
    for (const auto& [group, tissues] : groups)
        for (const auto& t : tissues) {
            ++rows;
            if (map.group_of(t) != group) ++bad;
        }
    if (map.members().size() != rows) ++bad;

    const std::vector<double> ages{0, 30, 45, 60, 65, 66, 70, 80, 110};
    const std::vector<std::pair<int, std::vector<std::string>>> expected = {
        {2, {"[0;65]", "[0;65]", "[0;65]", "[0;65]", "[0;65]", "(65;110]", "(65;110]", "(65;110]", "(65;110]"}},
        {3, {"[0;45]", "[0;45]", "[0;45]", "(45;70]", "(45;70]", "(45;70]", "(45;70]", "(70;110]", "(70;110]"}},
        {4, {"[0;30]", "[0;30]", "(30;60]", "(30;60]", "(60;80]", "(60;80]", "(60;80]", "(60;80]", "(80;110]"}},
    };
    std::size_t boundaries = 0;
    for (const auto& [k, labels] : expected) {
        const auto scheme = AgeBinning::scheme(k);
        for (std::size_t i = 0; i < ages.size(); ++i) {
            ++boundaries;
            if (scheme.bin(ages[i]) != labels[i]) ++bad;
        }
    }
    return {bad == 0, std::to_string(rows) + " tissue rows and " + std::to_string(boundaries) + " age boundaries, " +
                          std::to_string(bad) + " mismatches"};
}

// 10
Outcome preprocessing_identities() {
    Rng rng(1010);
    ExpressionMatrix m;
    const std::size_t p = 50, n = 20;
    m.values = Matrix(p, n);
    for (std::size_t j = 0; j < p; ++j) m.feature_ids.push_back("srna:f" + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) m.sample_ids.push_back("s" + std::to_string(i));
    for (double& v : m.values.values()) v = rng.uniform() < 0.2 ? 0.0 : std::floor(rng.uniform() * 1e4);
    auto rpm = rpm_normalize(m);
    double worst_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < p; ++j) s += rpm.values(j, i);
        worst_sum = std::max(worst_sum, std::abs(s - 1e6) / 1e6);
    }
    auto scaled = apply_minmax(rpm, fit_minmax(rpm));
    bool in_unit = true;
    for (double v : scaled.values.values()) in_unit = in_unit && v >= 0.0 && v <= 1.0;

    ExpressionMatrix z;
    z.feature_ids = {"srna:thirty", "srna:forty"};
    for (std::size_t i = 0; i < 10; ++i) z.sample_ids.push_back("s" + std::to_string(i));
    z.values = Matrix(2, 10, 1.0);
    for (std::size_t i = 0; i < 3; ++i) z.values(0, i) = 0.0;
    for (std::size_t i = 0; i < 4; ++i) z.values(1, i) = 0.0;
    auto filtered = filter_zero_features(z, 0.3);
    const bool boundary = filtered.feature_ids == std::vector<std::string>{"srna:thirty"};
    return {worst_sum <= 1e-9 && in_unit && boundary,
            "rpm rel err " + fmt(worst_sum) + ", minmax in [0,1] " + (in_unit ? "yes" : "no") +
                ", 30% zeros kept " + (boundary ? "yes" : "no")};
}

// 11
Outcome determinism() {
    testing::TempDir dir;
    std::ostringstream sink;
    auto run = [&](const std::vector<std::string>& args) { return cli::run(args, sink, sink); };
    if (run({"synth", "--classes", "4", "--features", "300", "--informative", "10", "--per-class", "25", "--datasets",
             "3", "--seed", "3", "--out", (dir / "data").string()}) != 0)
        return {false, "synth failed"};
    const std::string srna = (dir / "data" / "srna.tsv").string(), meta = (dir / "data" / "metadata.tsv").string();
    const std::vector<std::vector<std::string>> commands = {
        {"train", "--model", "mlp", "--hidden", "64:0.5,32:0.4", "--epochs", "10"},
        {"train", "--model", "rf", "--stage1-trees", "100", "--keep", "100", "--stage2-trees", "200"},
        {"validate", "cv", "--model", "rf", "--stage1-trees", "50", "--keep", "100", "--stage2-trees", "100"},
        {"validate", "odo", "--dataset", "all", "--model", "mlp", "--hidden", "32:0.3", "--epochs", "10"},
    };
    std::size_t compared = 0, differing = 0, run_id = 0;
    for (const auto& base : commands) {
        auto args = base;
        const auto first = dir / ("run" + std::to_string(run_id++));
        args.insert(args.end(), {"--srna", srna, "--metadata", meta, "--seed", "42", "--threads", "1", "--out",
                                 first.string()});
        if (run(args) != 0) return {false, "first run failed: " + sink.str()};
        const auto manifest = nlohmann::json::parse(testing::read_file(first / "run_manifest.json"));
        for (const char* threads : {"4", "1"}) {
            auto again = manifest["argv"].get<std::vector<std::string>>();
            const auto second = dir / ("run" + std::to_string(run_id++));
            for (std::size_t i = 0; i + 1 < again.size(); ++i) {
                if (again[i] == "--threads") again[i + 1] = threads;
                if (again[i] == "--out") again[i + 1] = second.string();
            }
            if (run(again) != 0) return {false, "replay failed: " + sink.str()};
            for (const auto& entry : fs::directory_iterator(first)) {
                const auto name = entry.path().filename();
                if (name == "run_manifest.json") continue;
                ++compared;
                if (testing::read_file(entry.path()) != testing::read_file(second / name)) ++differing;
            }
        }
    }
    return {differing == 0 && compared > 0,
            std::to_string(compared) + " files compared across --threads 1/4 replays, " + std::to_string(differing) +
                " differ"};
}

// 12
Outcome chance_level() {
    auto r = cv_both(headline_spec(0));
    const double chance = 1.0 / 5.0;
    return {std::abs(r.mlp - chance) <= 0.1 && std::abs(r.rf - chance) <= 0.1,
            "mlp " + fmt(r.mlp) + ", rf " + fmt(r.rf) + " vs chance " + fmt(chance)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient correctness", gradient_check},
        {"deeplift summation-to-delta", summation_to_delta},
        {"deeplift linear equivalence", linear_equivalence},
        {"knockout oracle", knockout_oracle},
        {"cart oracle", cart_oracle},
        {"synthetic cross-validation", synthetic_cv},
        {"cross-validation vs one-dataset-out gap", dataset_gap},
        {"two-stage feature recovery", feature_recovery},
        {"tissue and age tables", table_mappings},
        {"preprocessing identities", preprocessing_identities},
        {"determinism across thread counts", determinism},
        {"chance-level floor", chance_level},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failures = 0;
    for (std::size_t c = 0; c < criteria.size(); ++c) {
        const int id = static_cast<int>(c + 1);
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = criteria[c].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[c].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
