#include "exprsaug/validation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "exprsaug/errors.hpp"
#include "exprsaug/preprocess.hpp"
#include "exprsaug/text.hpp"

namespace exprsaug::validation {

std::vector<std::size_t> FoldPlan::training_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < folds.size(); ++f)
        if (f != fold) out.insert(out.end(), folds[f].begin(), folds[f].end());
    std::sort(out.begin(), out.end());
    return out;
}

FoldPlan kfold_split(std::size_t n_samples, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw UsageError("k-fold split needs k >= 2");
    if (k > n_samples)
        throw DataError("cannot split " + std::to_string(n_samples) + " samples into " + std::to_string(k) + " folds");
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.folds.resize(k);
    Rng rng(seed);
    auto perm = rng.permutation(n_samples);
    for (std::size_t i = 0; i < perm.size(); ++i) plan.folds[i % k].push_back(perm[i]);
    for (auto& f : plan.folds) std::sort(f.begin(), f.end());
    return plan;
}

EvalReport metrics(std::span<const int> truth, std::span<const int> predicted,
                   const std::vector<std::string>& class_names) {
    if (truth.size() != predicted.size()) throw DataError("truth and prediction lengths differ");
    const std::size_t k = class_names.size();
    EvalReport r;
    r.class_names = class_names;
    r.confusion.assign(k, std::vector<std::size_t>(k, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= k || predicted[i] < 0 ||
            static_cast<std::size_t>(predicted[i]) >= k)
            throw DataError("label outside the known classes");
        ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
        if (truth[i] == predicted[i]) ++correct;
    }
    r.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
    r.truth.assign(truth.begin(), truth.end());
    r.predicted.assign(predicted.begin(), predicted.end());
    r.precision.resize(k);
    r.recall.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t col = 0, row = 0;
        for (std::size_t o = 0; o < k; ++o) {
            col += r.confusion[o][c];
            row += r.confusion[c][o];
        }
        const double tp = static_cast<double>(r.confusion[c][c]);
        if (col > 0) r.precision[c] = tp / static_cast<double>(col);
        if (row > 0) r.recall[c] = tp / static_cast<double>(row);
    }
    return r;
}

namespace {

class MlpClassifier final : public Classifier {
public:
    explicit MlpClassifier(mlp::MlpModel model) : model_(std::move(model)) {}
    std::vector<int> predict(const Matrix& x) const override { return mlp::predict(model_, x).labels; }

private:
    mlp::MlpModel model_;
};

class ForestClassifier final : public Classifier {
public:
    explicit ForestClassifier(rf::TwoStageResult fit) : fit_(std::move(fit)) {}
    std::vector<int> predict(const Matrix& x) const override { return fit_.predict(x).labels; }

private:
    rf::TwoStageResult fit_;
};

bool covers_all_classes(std::span<const int> labels, std::span<const std::size_t> idx, std::size_t n_classes) {
    std::vector<bool> seen(n_classes, false);
    for (auto i : idx) seen[static_cast<std::size_t>(labels[i])] = true;
    return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

struct FoldData {
    Matrix train_x;
    std::vector<int> train_y;
    Matrix test_x;
    std::vector<int> test_y;
    std::vector<std::string> scaler_samples;
};

FoldData split_fold(const AnnotatedDataset& data, std::span<const std::size_t> train_idx,
                    std::span<const std::size_t> test_idx, bool fold_safe) {
    FoldData fd;
    AnnotatedDataset train = data.select_samples(train_idx);
    AnnotatedDataset test = data.select_samples(test_idx);
    if (fold_safe) {
        auto params = fit_minmax(train.matrix);
        fd.scaler_samples = train.matrix.sample_ids;
        train.matrix = apply_minmax(train.matrix, params);
        test.matrix = apply_minmax(test.matrix, params);
    }
    fd.train_x = train.matrix.design();
    fd.train_y = std::move(train.labels);
    fd.test_x = test.matrix.design();
    fd.test_y = std::move(test.labels);
    return fd;
}

double mean(std::span<const double> v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::unique_ptr<Classifier> MlpLearner::fit(const Matrix& x, std::span<const int> labels,
                                            const std::vector<std::string>& class_names,
                                            const std::vector<std::string>&, std::uint64_t seed) const {
    mlp::MlpConfig config = config_;
    config.seed = seed;
    return std::make_unique<MlpClassifier>(mlp::train(x, labels, class_names, config).model);
}

std::unique_ptr<Classifier> ForestLearner::fit(const Matrix& x, std::span<const int> labels,
                                               const std::vector<std::string>& class_names,
                                               const std::vector<std::string>& feature_ids, std::uint64_t seed) const {
    return std::make_unique<ForestClassifier>(rf::two_stage_fit(x, labels, class_names, feature_ids, options_, seed));
}

FoldPlan plan_folds(const AnnotatedDataset& data, std::size_t k, const PipelineOptions& options) {
    for (std::size_t attempt = 0; attempt < options.max_plan_attempts; ++attempt) {
        FoldPlan plan = kfold_split(data.n_samples(), k, derive_seed(options.seed, "folds", attempt));
        bool ok = true;
        for (std::size_t f = 0; f < k && ok; ++f)
            ok = covers_all_classes(data.labels, plan.training_indices(f), data.n_classes());
        if (ok) return plan;
    }
    throw DataError("could not draw " + std::to_string(k) + " folds whose training portions contain every class");
}

EvalReport cross_validate(const Learner& learner, const AnnotatedDataset& data, const FoldPlan& plan,
                          const PipelineOptions& options) {
    std::vector<int> truth, predicted;
    std::vector<std::string> ids;
    std::vector<double> fold_acc;
    std::vector<std::vector<std::string>> scaler_samples;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        auto train_idx = plan.training_indices(f);
        const auto& test_idx = plan.folds[f];
        if (!covers_all_classes(data.labels, train_idx, data.n_classes()))
            throw DataError("training portion of fold " + std::to_string(f + 1) + " misses a class");
        FoldData fd = split_fold(data, train_idx, test_idx, options.fold_safe_scaling);
        auto model = learner.fit(fd.train_x, fd.train_y, data.class_names, data.matrix.feature_ids,
                                 derive_seed(options.seed, "fold", f));
        auto pred = model->predict(fd.test_x);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            correct += pred[i] == fd.test_y[i];
            ids.push_back(data.matrix.sample_ids[test_idx[i]]);
        }
        fold_acc.push_back(pred.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pred.size()));
        truth.insert(truth.end(), fd.test_y.begin(), fd.test_y.end());
        predicted.insert(predicted.end(), pred.begin(), pred.end());
        if (options.fold_safe_scaling) scaler_samples.push_back(std::move(fd.scaler_samples));
    }
    EvalReport r = metrics(truth, predicted, data.class_names);
    r.sample_ids = std::move(ids);
    r.fold_accuracies = std::move(fold_acc);
    r.mean_fold_accuracy = mean(r.fold_accuracies);
    r.scaler_fit_samples = std::move(scaler_samples);
    return r;
}

EvalReport cross_validate(const Learner& learner, const AnnotatedDataset& data, std::size_t k,
                          const PipelineOptions& options) {
    return cross_validate(learner, data, plan_folds(data, k, options), options);
}

namespace {

std::vector<std::string> orphaned_classes(const AnnotatedDataset& data, const std::string& held_out) {
    std::set<int> held, elsewhere;
    for (std::size_t i = 0; i < data.n_samples(); ++i)
        (data.metadata.rows[i].dataset_id == held_out ? held : elsewhere).insert(data.labels[i]);
    std::vector<std::string> orphans;
    for (int c : held)
        if (!elsewhere.count(c)) orphans.push_back(data.class_names[static_cast<std::size_t>(c)]);
    return orphans;
}

}  // namespace

EvalReport one_dataset_out(const Learner& learner, const AnnotatedDataset& data, const std::string& held_out,
                           const PipelineOptions& options) {
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < data.n_samples(); ++i)
        (data.metadata.rows[i].dataset_id == held_out ? test_idx : train_idx).push_back(i);
    if (test_idx.empty()) throw DataError("dataset '" + held_out + "' has no samples");
    if (train_idx.empty()) throw DataError("holding out '" + held_out + "' leaves no training samples");
    auto orphans = orphaned_classes(data, held_out);
    if (!orphans.empty()) {
        std::string names;
        for (const auto& o : orphans) names += (names.empty() ? "" : ", ") + o;
        throw DataError("dataset '" + held_out + "' is the only source of class(es): " + names);
    }
    FoldData fd = split_fold(data, train_idx, test_idx, options.fold_safe_scaling);
    auto model = learner.fit(fd.train_x, fd.train_y, data.class_names, data.matrix.feature_ids,
                             derive_seed(options.seed, "odo." + held_out));
    auto pred = model->predict(fd.test_x);
    EvalReport r = metrics(fd.test_y, pred, data.class_names);
    for (auto i : test_idx) r.sample_ids.push_back(data.matrix.sample_ids[i]);
    r.held_out_datasets = {held_out};
    r.dataset_accuracies = {r.accuracy};
    r.mean_dataset_accuracy = r.accuracy;
    if (options.fold_safe_scaling) r.scaler_fit_samples.push_back(std::move(fd.scaler_samples));
    return r;
}

EvalReport one_dataset_out_all(const Learner& learner, const AnnotatedDataset& data, const PipelineOptions& options) {
    std::set<std::string> datasets;
    for (const auto& row : data.metadata.rows) datasets.insert(row.dataset_id);
    if (datasets.size() < 2) throw DataError("one-dataset-out needs at least two datasets");
    std::vector<int> truth, predicted;
    std::vector<std::string> ids, held, skipped;
    std::vector<double> accs;
    for (const auto& d : datasets) {
        if (!orphaned_classes(data, d).empty()) {
            skipped.push_back(d);
            continue;
        }
        EvalReport one = one_dataset_out(learner, data, d, options);
        truth.insert(truth.end(), one.truth.begin(), one.truth.end());
        predicted.insert(predicted.end(), one.predicted.begin(), one.predicted.end());
        ids.insert(ids.end(), one.sample_ids.begin(), one.sample_ids.end());
        held.push_back(d);
        accs.push_back(one.accuracy);
    }
    if (held.empty()) throw DataError("no dataset can be held out without orphaning a class");
    EvalReport r = metrics(truth, predicted, data.class_names);
    r.sample_ids = std::move(ids);
    r.held_out_datasets = std::move(held);
    r.dataset_accuracies = std::move(accs);
    r.mean_dataset_accuracy = mean(r.dataset_accuracies);
    r.skipped_datasets = std::move(skipped);
    std::vector<double> recalls;
    for (const auto& rc : r.recall)
        if (rc) recalls.push_back(*rc);
    if (!recalls.empty()) r.mean_class_recall = mean(recalls);
    return r;
}

SyntheticCohort generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_classes < 2) throw UsageError("synthetic data needs at least two classes");
    if (spec.n_features < 1 || spec.samples_per_class < 1 || spec.n_datasets < 1)
        throw UsageError("synthetic sizes must be positive");
    if (spec.n_classes * spec.n_informative > spec.n_features)
        throw UsageError("informative blocks (classes x informative) exceed the feature count");
    if (!(spec.shift > 0.0)) throw UsageError("synthetic shift must be positive");
    if (!(spec.noise_scale > 0.0) || spec.bias_sigma < 0.0) throw UsageError("invalid synthetic noise settings");

    Rng rng(derive_seed(spec.seed, "synth"));
    SyntheticCohort cohort;
    auto perm = rng.permutation(spec.n_features);
    std::vector<int> owner(spec.n_features, -1);
    cohort.informative.resize(spec.n_classes);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        for (std::size_t i = 0; i < spec.n_informative; ++i) {
            const auto f = perm[c * spec.n_informative + i];
            owner[f] = static_cast<int>(c);
            cohort.informative[c].push_back(f);
        }
        std::sort(cohort.informative[c].begin(), cohort.informative[c].end());
    }

    Matrix bias(spec.n_datasets, spec.n_features, 1.0);
    if (spec.n_datasets > 1)
        for (double& b : bias.values()) b = std::exp(spec.bias_sigma * rng.normal());

    const std::size_t n = spec.n_classes * spec.samples_per_class;
    const int width = static_cast<int>(std::to_string(std::max(n, spec.n_features)).size());
    auto padded = [width](std::size_t i) {
        std::string s = std::to_string(i);
        return std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(s.size(), width), '0') + s;
    };
    const int cwidth = static_cast<int>(std::to_string(spec.n_classes).size());

    AnnotatedDataset& d = cohort.data;
    d.label_field = LabelField::tissue;
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        std::string s = std::to_string(c + 1);
        d.class_names.push_back("class_" + std::string(static_cast<std::size_t>(cwidth) - s.size(), '0') + s);
    }
    for (std::size_t f = 0; f < spec.n_features; ++f)
        d.matrix.feature_ids.push_back("srna:feat_" + padded(f + 1));
    d.matrix.values = Matrix(spec.n_features, n);
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t c = s / spec.samples_per_class;
        const std::size_t ds = s % spec.n_datasets;
        d.matrix.sample_ids.push_back("S" + padded(s + 1));
        d.labels.push_back(static_cast<int>(c));
        MetadataRecord rec;
        rec.sample_id = d.matrix.sample_ids.back();
        rec.dataset_id = "ds" + std::to_string(ds + 1);
        rec.tissue = d.class_names[c];
        d.metadata.rows.push_back(std::move(rec));
        for (std::size_t f = 0; f < spec.n_features; ++f) {
            double v = spec.noise_scale * std::abs(rng.normal());
            if (owner[f] == static_cast<int>(c)) v += spec.shift;
            d.matrix.values(f, s) = v * bias(ds, f);
        }
    }
    return cohort;
}

std::string format_summary(const EvalReport& r, std::string_view title) {
    std::ostringstream out;
    out << title << "\n";
    out << "  accuracy: " << text::format_real(r.accuracy) << " (" << r.truth.size() << " samples)\n";
    if (r.mean_fold_accuracy) {
        out << "  mean fold accuracy: " << text::format_real(*r.mean_fold_accuracy) << "\n  folds:";
        for (double a : r.fold_accuracies) out << ' ' << text::format_real(a);
        out << "\n";
    }
    if (!r.held_out_datasets.empty()) {
        for (std::size_t i = 0; i < r.held_out_datasets.size(); ++i)
            out << "  held out " << r.held_out_datasets[i] << ": " << text::format_real(r.dataset_accuracies[i]) << "\n";
        if (r.mean_dataset_accuracy)
            out << "  mean dataset accuracy: " << text::format_real(*r.mean_dataset_accuracy) << "\n";
        if (r.mean_class_recall) out << "  mean class recall: " << text::format_real(*r.mean_class_recall) << "\n";
        for (const auto& s : r.skipped_datasets) out << "  skipped " << s << " (class only present there)\n";
    }
    for (std::size_t c = 0; c < r.class_names.size(); ++c) {
        out << "  " << r.class_names[c] << ": precision "
            << (r.precision[c] ? text::format_real(*r.precision[c]) : std::string("-")) << ", recall "
            << (r.recall[c] ? text::format_real(*r.recall[c]) : std::string("-")) << "\n";
    }
    return out.str();
}

void write_report(const std::filesystem::path& dir, const std::string& prefix, const EvalReport& r) {
    auto open = [&](const std::string& name) {
        std::ofstream out(dir / (prefix + name), std::ios::binary);
        if (!out) throw DataError("cannot write " + (dir / (prefix + name)).string());
        return out;
    };
    {
        auto out = open("_confusion.tsv");
        out << "true\\predicted";
        for (const auto& c : r.class_names) out << '\t' << c;
        out << '\n';
        for (std::size_t t = 0; t < r.class_names.size(); ++t) {
            out << r.class_names[t];
            for (auto v : r.confusion[t]) out << '\t' << v;
            out << '\n';
        }
    }
    {
        auto out = open("_per_class.tsv");
        out << "class\tprecision\trecall\tsupport\n";
        for (std::size_t c = 0; c < r.class_names.size(); ++c) {
            std::size_t support = 0;
            for (auto v : r.confusion[c]) support += v;
            out << r.class_names[c] << '\t' << (r.precision[c] ? text::format_real(*r.precision[c]) : "") << '\t'
                << (r.recall[c] ? text::format_real(*r.recall[c]) : "") << '\t' << support << '\n';
        }
    }
    {
        auto out = open("_summary.tsv");
        out << "accuracy\t" << text::format_real(r.accuracy) << '\n';
        out << "samples\t" << r.truth.size() << '\n';
        if (r.mean_fold_accuracy) out << "mean_fold_accuracy\t" << text::format_real(*r.mean_fold_accuracy) << '\n';
        for (std::size_t f = 0; f < r.fold_accuracies.size(); ++f)
            out << "fold_" << f + 1 << "_accuracy\t" << text::format_real(r.fold_accuracies[f]) << '\n';
        for (std::size_t i = 0; i < r.held_out_datasets.size(); ++i)
            out << "dataset_" << r.held_out_datasets[i] << "_accuracy\t" << text::format_real(r.dataset_accuracies[i])
                << '\n';
        if (r.mean_dataset_accuracy)
            out << "mean_dataset_accuracy\t" << text::format_real(*r.mean_dataset_accuracy) << '\n';
        if (r.mean_class_recall) out << "mean_class_recall\t" << text::format_real(*r.mean_class_recall) << '\n';
    }
    {
        auto out = open("_predictions.tsv");
        out << "sample_id\ttrue\tpredicted\n";
        for (std::size_t i = 0; i < r.truth.size(); ++i)
            out << (i < r.sample_ids.size() ? r.sample_ids[i] : "") << '\t'
                << r.class_names[static_cast<std::size_t>(r.truth[i])] << '\t'
                << r.class_names[static_cast<std::size_t>(r.predicted[i])] << '\n';
    }
}

}  // namespace exprsaug::validation
