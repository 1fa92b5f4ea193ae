#include "exprsaug/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "exprsaug/attribution.hpp"
#include "exprsaug/errors.hpp"
#include "exprsaug/parallel.hpp"
#include "exprsaug/text.hpp"
#include "exprsaug/validation.hpp"

#ifndef EXPRSAUG_VERSION
#define EXPRSAUG_VERSION "0.0.0"
#endif

namespace exprsaug::cli {

namespace fs = std::filesystem;

std::vector<mlp::HiddenLayerSpec> parse_hidden(const std::string& text) {
    std::vector<mlp::HiddenLayerSpec> layers;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) throw UsageError("empty layer in --hidden '" + text + "'");
        mlp::HiddenLayerSpec spec;
        const auto colon = item.find(':');
        const std::string width = item.substr(0, colon);
        std::size_t w = 0;
        auto [ptr, ec] = std::from_chars(width.data(), width.data() + width.size(), w);
        if (ec != std::errc{} || ptr != width.data() + width.size() || w == 0)
            throw UsageError("bad layer width '" + width + "' in --hidden");
        spec.width = w;
        if (colon != std::string::npos) {
            double d = 0.0;
            if (!text::parse_real(std::string_view(item).substr(colon + 1), d) || d < 0.0 || d >= 1.0)
                throw UsageError("bad dropout rate in --hidden layer '" + item + "'");
            spec.dropout = d;
        }
        layers.push_back(spec);
    }
    return layers;
}

std::string format_hidden(const std::vector<mlp::HiddenLayerSpec>& hidden) {
    std::string out;
    for (const auto& h : hidden) {
        if (!out.empty()) out += ',';
        out += std::to_string(h.width) + ':' + text::format_real(h.dropout);
    }
    return out;
}

std::string file_checksum(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << h;
    return hex.str();
}

namespace {

struct Extras {
    std::string feature_set = "srna";
    std::string label = "tissue";
    std::string hidden;
    fs::path model_dir;
    std::size_t folds = 5;
    std::string dataset;
    std::string sample;
    bool class_scores = false;
    std::size_t top = 300;
    bool stability = false;
    bool similarity = false;
    std::size_t max_steps = 0;
    bool svg = false;
    validation::SyntheticSpec synth;
};

/// Output writer that refuses to overwrite any input file.
class Outputs {
public:
    Outputs(fs::path dir, const std::vector<fs::path>& inputs) : dir_(std::move(dir)) {
        for (const auto& p : inputs)
            if (!p.empty() && fs::exists(p)) inputs_.insert(fs::weakly_canonical(p));
    }

    fs::path path(const std::string& name) const {
        fs::path p = dir_ / name;
        if (inputs_.count(fs::weakly_canonical(p)))
            throw UsageError("output " + p.string() + " would overwrite an input file");
        return p;
    }

    void write(const std::string& name, const std::string& content) const {
        const fs::path p = path(name);
        std::ofstream out(p, std::ios::binary);
        if (!out) throw DataError("cannot write " + p.string());
        out << content;
    }

    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    std::set<fs::path> inputs_;
};

std::string strip_namespace(const std::string& id) {
    const auto colon = id.find(':');
    return colon == std::string::npos ? id : id.substr(colon + 1);
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("EXPRSAUG_THREADS")) {
        int n = 0;
        std::string_view s(env);
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
        if (ec == std::errc{} && ptr == s.data() + s.size() && n > 0) return n;
        throw UsageError("EXPRSAUG_THREADS must be a positive integer");
    }
    return 0;
}

nlohmann::json config_json(const RunConfig& c, const Extras& x, const std::string& command) {
    nlohmann::json j;
    j["srna"] = c.inputs.srna.string();
    j["contam"] = c.inputs.contam.string();
    j["metadata"] = c.inputs.metadata.string();
    j["feature-set"] = x.feature_set;
    j["label"] = x.label;
    j["age-scheme"] = c.preprocess.age_scheme;
    j["group-tissues"] = c.preprocess.group_tissues;
    j["rpm"] = c.preprocess.rpm;
    j["minmax"] = c.preprocess.minmax;
    j["zero-threshold"] = c.preprocess.zero_threshold;
    j["min-class-size"] = c.preprocess.min_class_size;
    j["fold-safe-scaling"] = c.fold_safe_scaling;
    j["model"] = c.model;
    j["hidden"] = format_hidden(c.mlp.hidden);
    j["epochs"] = c.mlp.epochs;
    j["batch-size"] = c.mlp.batch_size;
    j["learning-rate"] = c.mlp.adam.learning_rate;
    j["stage1-trees"] = c.rf.stage1_trees;
    j["keep"] = c.rf.keep;
    j["stage2-trees"] = c.rf.stage2_trees;
    j["downsample"] = c.rf.downsample;
    j["seed"] = c.seed;
    j["out"] = c.out.string();
    if (command == "predict" || command == "explain") j["model-dir"] = x.model_dir.string();
    if (command == "validate cv") j["folds"] = x.folds;
    if (command == "validate odo") j["dataset"] = x.dataset;
    if (command == "explain") {
        j["sample"] = x.sample;
        j["class-scores"] = x.class_scores;
        j["top"] = x.top;
        j["stability"] = x.stability;
        j["similarity"] = x.similarity;
        j["max-steps"] = x.max_steps;
        j["svg"] = x.svg;
    }
    if (command == "synth") {
        j["classes"] = x.synth.n_classes;
        j["features"] = x.synth.n_features;
        j["informative"] = x.synth.n_informative;
        j["per-class"] = x.synth.samples_per_class;
        j["shift"] = x.synth.shift;
        j["datasets"] = x.synth.n_datasets;
        j["bias-sigma"] = x.synth.bias_sigma;
        j["noise"] = x.synth.noise_scale;
    }
    return j;
}

void write_manifest(const Outputs& out, const RunConfig& c, const Extras& x, const std::string& command,
                    const std::vector<std::string>& args, const std::vector<fs::path>& inputs, int threads) {
    nlohmann::json m;
    m["tool"] = "exprsaug";
    m["version"] = EXPRSAUG_VERSION;
    m["command"] = command;
    m["argv"] = args;
    m["seed"] = c.seed;
    m["threads"] = threads;
    m["config"] = config_json(c, x, command);
    nlohmann::json sums = nlohmann::json::object();
    for (const auto& p : inputs)
        if (!p.empty() && fs::is_regular_file(p)) sums[p.string()] = file_checksum(p);
    m["inputs"] = sums;
    out.write("run_manifest.json", m.dump(1) + "\n");
}

std::string labels_tsv(const AnnotatedDataset& d) {
    std::string s = "sample_id\tlabel\n";
    for (std::size_t i = 0; i < d.n_samples(); ++i)
        s += d.matrix.sample_ids[i] + '\t' + d.class_names[static_cast<std::size_t>(d.labels[i])] + '\n';
    return s;
}

pipeline::PreprocessConfig preprocess_config(const RunConfig& c, const Extras& x) {
    pipeline::PreprocessConfig p = c.preprocess;
    p.feature_set = pipeline::parse_feature_set(x.feature_set);
    p.label_field = parse_label_field(x.label);
    return p;
}

void require_feature_paths(const RunConfig& c, pipeline::FeatureSet set) {
    if ((set == pipeline::FeatureSet::contam || set == pipeline::FeatureSet::both) && c.inputs.contam.empty())
        throw UsageError("feature set '" + std::string(pipeline::to_string(set)) +
                         "' needs a contaminant matrix (--contam)");
    if (set != pipeline::FeatureSet::contam && c.inputs.srna.empty())
        throw UsageError("an sRNA matrix is required (--srna)");
}

void cmd_preprocess(const RunConfig& c, const Extras& x, const Outputs& out, std::ostream& log) {
    auto pc = preprocess_config(c, x);
    require_feature_paths(c, pc.feature_set);
    auto prep = pipeline::prepare(c.inputs, pc);
    write_expression_matrix(out.path("matrix.tsv"), prep.data.matrix);
    write_metadata(out.path("metadata.tsv"), prep.data.metadata);
    out.write("labels.tsv", labels_tsv(prep.data));
    pipeline::save_state(out.path("pipeline.json"), prep.state);
    out.write("preprocess_report.tsv", prep.report.to_tsv());
    log << "preprocessed " << prep.report.output_samples << " samples x " << prep.report.output_features
        << " features into " << out.dir().string() << "\n";
}

void cmd_train(const RunConfig& c, const Extras& x, const Outputs& out, std::ostream& log) {
    auto pc = preprocess_config(c, x);
    require_feature_paths(c, pc.feature_set);
    auto prep = pipeline::prepare(c.inputs, pc);
    if (c.model == "mlp") {
        mlp::MlpConfig mc = c.mlp;
        mc.seed = c.seed;
        auto result = mlp::train(prep.data, mc);
        mlp::save_model(out.path("model.json"), result.model);
        std::string hist = "epoch\tloss\n";
        for (std::size_t e = 0; e < result.loss_history.size(); ++e)
            hist += std::to_string(e + 1) + '\t' + text::format_real(result.loss_history[e]) + '\n';
        out.write("loss_history.tsv", hist);
        log << "trained mlp on " << prep.data.n_samples() << " samples; final loss "
            << (result.loss_history.empty() ? std::string("-") : text::format_real(result.loss_history.back()))
            << "\n";
    } else {
        auto fit = rf::two_stage_fit(prep.data.matrix.design(), prep.data.labels, prep.data.class_names,
                                     prep.data.matrix.feature_ids, c.rf, c.seed);
        rf::save_forest(out.path("forest.json"), fit.forest);
        std::string imp = "rank\tfeature_id\timportance\tselected\n";
        std::vector<bool> selected(fit.stage1_importances.size(), false);
        for (auto j : fit.selected) selected[j] = true;
        auto ranked = rf::rank_features(fit.stage1_importances);
        for (std::size_t r = 0; r < ranked.size(); ++r)
            imp += std::to_string(r + 1) + '\t' + prep.data.matrix.feature_ids[ranked[r]] + '\t' +
                   text::format_real(fit.stage1_importances[ranked[r]]) + '\t' + (selected[ranked[r]] ? "1" : "0") +
                   '\n';
        out.write("importances.tsv", imp);
        log << "trained two-stage forest on " << prep.data.n_samples() << " samples; kept " << fit.selected.size()
            << " features\n";
    }
    pipeline::save_state(out.path("pipeline.json"), prep.state);
}

std::vector<std::size_t> columns_by_id(const std::vector<std::string>& have, const std::vector<std::string>& want) {
    std::unordered_map<std::string_view, std::size_t> pos;
    for (std::size_t j = 0; j < have.size(); ++j) pos.emplace(have[j], j);
    std::vector<std::size_t> idx;
    for (const auto& id : want) {
        auto it = pos.find(id);
        if (it == pos.end()) throw DataError("input lacks model feature '" + id + "'");
        idx.push_back(it->second);
    }
    return idx;
}

void cmd_predict(const RunConfig& c, const Extras& x, const Outputs& out, std::ostream& log) {
    auto state = pipeline::load_state(x.model_dir / "pipeline.json");
    require_feature_paths(c, state.config.feature_set);
    auto features = pipeline::apply_state(
        pipeline::load_features(c.inputs, state.config.feature_set, state.config.rpm), state);
    Matrix design = features.design();
    std::ostringstream tsv;
    tsv << "sample_id\tpredicted";
    if (fs::exists(x.model_dir / "model.json")) {
        auto model = mlp::load_model(x.model_dir / "model.json");
        auto pred = mlp::predict(model, design);
        for (const auto& cn : model.class_names) tsv << "\tp:" << cn;
        tsv << '\n';
        for (std::size_t i = 0; i < design.rows(); ++i) {
            tsv << features.sample_ids[i] << '\t' << model.class_names[static_cast<std::size_t>(pred.labels[i])];
            for (std::size_t k = 0; k < model.class_names.size(); ++k)
                tsv << '\t' << text::format_real(pred.probabilities(i, k));
            tsv << '\n';
        }
    } else if (fs::exists(x.model_dir / "forest.json")) {
        auto forest = rf::load_forest(x.model_dir / "forest.json");
        Matrix sub = design.select_cols(columns_by_id(features.feature_ids, forest.feature_ids));
        auto pred = rf::predict_forest(forest, sub);
        for (const auto& cn : forest.class_names) tsv << "\tvotes:" << cn;
        tsv << '\n';
        for (std::size_t i = 0; i < sub.rows(); ++i) {
            tsv << features.sample_ids[i] << '\t' << forest.class_names[static_cast<std::size_t>(pred.labels[i])];
            for (std::size_t k = 0; k < forest.class_names.size(); ++k)
                tsv << '\t' << text::format_real(pred.vote_fractions(i, k));
            tsv << '\n';
        }
    } else {
        throw DataError("no model.json or forest.json in " + x.model_dir.string());
    }
    out.write("predictions.tsv", tsv.str());
    log << "predicted " << design.rows() << " samples\n";
}

std::unique_ptr<validation::Learner> make_learner(const RunConfig& c) {
    if (c.model == "mlp") return std::make_unique<validation::MlpLearner>(c.mlp);
    return std::make_unique<validation::ForestLearner>(c.rf);
}

void cmd_validate(const RunConfig& c, const Extras& x, bool odo, const Outputs& out, std::ostream& log) {
    auto pc = preprocess_config(c, x);
    pc.defer_scaling = c.fold_safe_scaling;
    require_feature_paths(c, pc.feature_set);
    auto prep = pipeline::prepare(c.inputs, pc);
    auto learner = make_learner(c);
    validation::PipelineOptions opts;
    opts.fold_safe_scaling = c.fold_safe_scaling && pc.minmax;
    opts.seed = c.seed;
    validation::EvalReport report;
    std::string title;
    if (!odo) {
        report = validation::cross_validate(*learner, prep.data, x.folds, opts);
        title = std::to_string(x.folds) + "-fold cross-validation (" + c.model + ")";
    } else if (x.dataset == "all") {
        report = validation::one_dataset_out_all(*learner, prep.data, opts);
        title = "one-dataset-out, every dataset (" + c.model + ")";
    } else {
        report = validation::one_dataset_out(*learner, prep.data, x.dataset, opts);
        title = "one-dataset-out, holding out " + x.dataset + " (" + c.model + ")";
    }
    const std::string prefix = odo ? "odo" : "cv";
    out.path(prefix + "_summary.tsv");
    validation::write_report(out.dir(), prefix, report);
    log << validation::format_summary(report, title);
}

struct ExplainData {
    Matrix x;
    std::vector<std::string> sample_ids;
    std::vector<int> labels;  // model class indices; empty without metadata
};

ExplainData explain_data(const RunConfig& c, const pipeline::PipelineState& state, const mlp::MlpModel& model,
                         bool need_labels) {
    require_feature_paths(c, state.config.feature_set);
    auto features = pipeline::load_features(c.inputs, state.config.feature_set, state.config.rpm);
    ExplainData d;
    if (!need_labels) {
        auto m = pipeline::apply_state(features, state);
        d.x = m.design();
        d.sample_ids = m.sample_ids;
        return d;
    }
    if (c.inputs.metadata.empty()) throw UsageError("this explain mode needs labels (--metadata)");
    MetadataTable meta = load_metadata(c.inputs.metadata);
    if (state.config.group_tissues) meta = group_tissues(meta, TissueGroupMap::builtin());
    std::optional<AgeBinning> scheme;
    if (state.config.label_field == LabelField::age_interval) scheme = AgeBinning::scheme(state.config.age_scheme);
    auto joined = join(features, meta, state.config.label_field, scheme ? &*scheme : nullptr);
    std::unordered_map<std::string_view, int> model_class;
    for (std::size_t k = 0; k < model.class_names.size(); ++k)
        model_class.emplace(model.class_names[k], static_cast<int>(k));
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < joined.dataset.n_samples(); ++i) {
        const auto& name = joined.dataset.class_names[static_cast<std::size_t>(joined.dataset.labels[i])];
        auto it = model_class.find(name);
        if (it == model_class.end()) continue;
        keep.push_back(i);
        d.labels.push_back(it->second);
    }
    if (keep.empty()) throw DataError("no labelled sample belongs to a class the model knows");
    auto m = pipeline::apply_state(joined.dataset.matrix.select_samples(keep), state);
    d.x = m.design();
    d.sample_ids = m.sample_ids;
    return d;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? text::format_real(*v) : std::string(); }

void cmd_explain(const RunConfig& c, const Extras& x, const Outputs& out, std::ostream& log) {
    if (x.sample.empty() && !x.class_scores && !x.stability && !x.similarity)
        throw UsageError("explain needs --sample, --class-scores, --stability or --similarity");
    if (!fs::exists(x.model_dir / "model.json"))
        throw UsageError("explain works on neural models; no model.json in " + x.model_dir.string());
    auto state = pipeline::load_state(x.model_dir / "pipeline.json");
    auto model = mlp::load_model(x.model_dir / "model.json");
    const bool need_labels = x.class_scores || x.stability || x.similarity;
    auto d = explain_data(c, state, model, need_labels);
    const auto& features = state.feature_ids;
    const auto& classes = model.class_names;

    if (!x.sample.empty()) {
        auto it = std::find(d.sample_ids.begin(), d.sample_ids.end(), x.sample);
        if (it == d.sample_ids.end()) throw DataError("sample '" + x.sample + "' not found");
        const auto i = static_cast<std::size_t>(it - d.sample_ids.begin());
        std::vector<std::size_t> one{i};
        auto scores = attribution::deeplift_scores(model, d.x.select_rows(one));
        std::optional<fs::path> svg;
        if (x.svg) svg = out.path("contributions_" + x.sample + ".svg");
        attribution::emit_heatmap(scores.sample(0), features, classes, out.path("contributions_" + x.sample + ".tsv"),
                                  svg);
        log << "wrote contribution scores for " << x.sample << "\n";
    }
    if (x.class_scores) {
        auto scores = attribution::deeplift_scores(model, d.x);
        auto table = attribution::class_average_scores(scores, d.labels);
        attribution::emit_heatmap(table.d1, features, classes, out.path("class_scores.tsv"));
        std::string top = "class\trank\tfeature_id\tscore\n";
        std::vector<std::size_t> rows;
        std::set<std::size_t> seen;
        for (std::size_t k = 0; k < classes.size(); ++k) {
            auto best = attribution::top_n_features(table, k, x.top);
            for (std::size_t r = 0; r < best.size(); ++r) {
                top += classes[k] + '\t' + std::to_string(r + 1) + '\t' + features[best[r]] + '\t' +
                       text::format_real(table.d1(best[r], k)) + '\n';
                if (seen.insert(best[r]).second) rows.push_back(best[r]);
            }
        }
        out.write("top_features.tsv", top);
        if (x.svg) {
            std::vector<std::string> labels;
            for (auto j : rows) labels.push_back(features[j]);
            out.write("class_scores_top.svg", attribution::render_svg(table.d1.select_rows(rows), labels, classes));
        }
        log << "wrote class-average scores for " << classes.size() << " classes\n";
    }
    if (x.stability || x.similarity) {
        auto rep = attribution::stability_matrix(model, d.x, d.labels, x.max_steps);
        if (x.stability) {
            std::string s = "class\tmean_steps\tsamples\tno_flip\n";
            for (std::size_t k = 0; k < classes.size(); ++k)
                s += classes[k] + '\t' + fmt_opt(rep.stability[k]) + '\t' + std::to_string(rep.samples_used[k]) +
                     '\t' + std::to_string(rep.stability_no_flip[k]) + '\n';
            out.write("stability.tsv", s);
        }
        if (x.similarity) {
            std::string s = "class\\target";
            for (const auto& cn : classes) s += '\t' + cn;
            s += '\n';
            Matrix grid(classes.size(), classes.size());
            for (std::size_t k = 0; k < classes.size(); ++k) {
                s += classes[k];
                for (std::size_t t = 0; t < classes.size(); ++t) {
                    s += '\t' + fmt_opt(rep.similarity[k][t]);
                    if (rep.similarity[k][t]) grid(k, t) = *rep.similarity[k][t];
                }
                s += '\n';
            }
            out.write("similarity.tsv", s);
            if (x.svg) out.write("similarity.svg", attribution::render_svg(grid, classes, classes));
        }
        log << "knockout analysis on " << d.x.rows() << " samples (max steps " << rep.max_steps << ")\n";
    }
}

void cmd_synth(const RunConfig& c, const Extras& x, const Outputs& out, std::ostream& log) {
    validation::SyntheticSpec spec = x.synth;
    spec.seed = c.seed;
    auto cohort = validation::generate_synthetic(spec);
    ExpressionMatrix raw = cohort.data.matrix;
    for (auto& id : raw.feature_ids) id = strip_namespace(id);
    write_expression_matrix(out.path("srna.tsv"), raw);
    write_metadata(out.path("metadata.tsv"), cohort.data.metadata);
    std::string inf = "class\tfeature_id\n";
    for (std::size_t k = 0; k < cohort.informative.size(); ++k)
        for (auto j : cohort.informative[k])
            inf += cohort.data.class_names[k] + '\t' + cohort.data.matrix.feature_ids[j] + '\n';
    out.write("informative.tsv", inf);
    const auto abs = [](const fs::path& p) { return fs::absolute(p).lexically_normal().string(); };
    std::string toml = "srna = \"" + abs(out.dir() / "srna.tsv") + "\"\nmetadata = \"" +
                       abs(out.dir() / "metadata.tsv") + "\"\nlabel = \"tissue\"\n";
    out.write("synth.toml", toml);
    log << "wrote synthetic cohort: " << cohort.data.n_samples() << " samples x " << spec.n_features
        << " features; use --config " << (out.dir() / "synth.toml").string() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args) { return run(args, std::cout, std::cerr); }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    Extras x;
    x.hidden = format_hidden(cfg.mlp.hidden);

    CLI::App app{"Predicts missing sample metadata from small-RNA expression profiles.", "exprsaug"};
    app.set_version_flag("--version", EXPRSAUG_VERSION);
    app.set_config("--config", "", "TOML file of option values; command-line flags take precedence");
    app.require_subcommand(1);
    app.fallthrough();

    app.add_option("--srna", cfg.inputs.srna, "sRNA expression matrix (TSV)")->check(CLI::ExistingFile);
    app.add_option("--contam", cfg.inputs.contam, "contaminant expression matrix (TSV)")->check(CLI::ExistingFile);
    app.add_option("--metadata", cfg.inputs.metadata, "sample metadata table (TSV)")->check(CLI::ExistingFile);
    app.add_option("--feature-set", x.feature_set, "srna, contam or both")
        ->check(CLI::IsMember({"srna", "contam", "both"}))
        ->capture_default_str();
    app.add_option("--label", x.label, "label to predict: tissue, sex or age")
        ->check(CLI::IsMember({"tissue", "sex", "age", "age_interval"}))
        ->capture_default_str();
    app.add_option("--age-scheme", cfg.preprocess.age_scheme, "number of age intervals")
        ->check(CLI::IsMember({2, 3, 4}))
        ->capture_default_str();
    app.add_flag("--rpm,!--no-rpm", cfg.preprocess.rpm, "reads-per-million normalization");
    app.add_flag("--minmax,!--no-minmax", cfg.preprocess.minmax, "MinMax feature scaling");
    app.add_option("--zero-threshold", cfg.preprocess.zero_threshold, "drop features with more zeros than this fraction")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app.add_flag("--group-tissues,!--no-group-tissues", cfg.preprocess.group_tissues, "merge tissues into groups");
    app.add_option("--min-class-size", cfg.preprocess.min_class_size, "drop classes with fewer samples")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_flag("--fold-safe-scaling", cfg.fold_safe_scaling, "fit MinMax inside each training fold");
    app.add_option("--model", cfg.model, "mlp or rf")->check(CLI::IsMember({"mlp", "rf"}))->capture_default_str();
    app.add_option("--hidden", x.hidden, "hidden layers as width:dropout,...")->capture_default_str();
    app.add_option("--epochs", cfg.mlp.epochs, "training epochs")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--batch-size", cfg.mlp.batch_size, "mini-batch size")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--learning-rate", cfg.mlp.adam.learning_rate, "Adam step size")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--stage1-trees", cfg.rf.stage1_trees, "trees in the screening forest")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--keep", cfg.rf.keep, "features kept after screening")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--stage2-trees", cfg.rf.stage2_trees, "trees in the final forest")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_flag("--downsample,!--no-downsample", cfg.rf.downsample, "balance classes before forest fitting");
    app.add_option("--seed", cfg.seed, "master random seed")->capture_default_str();
    app.add_option("--out", cfg.out, "output directory")->capture_default_str();
    app.add_option("--threads", cfg.threads, "worker threads (default: EXPRSAUG_THREADS)")->check(CLI::PositiveNumber);

    auto* preprocess = app.add_subcommand("preprocess", "normalize, filter and scale a labelled dataset");
    auto* train = app.add_subcommand("train", "fit a model and save it with its preprocessing state");
    auto* predict = app.add_subcommand("predict", "label new samples with a saved model");
    predict->add_option("--model-dir", x.model_dir, "directory written by train")
        ->required()
        ->check(CLI::ExistingDirectory);
    auto* validate = app.add_subcommand("validate", "estimate accuracy");
    validate->require_subcommand(1);
    auto* cv = validate->add_subcommand("cv", "k-fold cross-validation");
    cv->add_option("--folds", x.folds, "number of folds")->check(CLI::Range(2, 1000))->capture_default_str();
    auto* odo = validate->add_subcommand("odo", "hold out whole datasets");
    odo->add_option("--dataset", x.dataset, "dataset id to hold out, or 'all'")->required();
    auto* explain = app.add_subcommand("explain", "DeepLIFT scores and knockout analysis");
    explain->add_option("--model-dir", x.model_dir, "directory written by train")
        ->required()
        ->check(CLI::ExistingDirectory);
    explain->add_option("--sample", x.sample, "per-feature contributions for one sample");
    explain->add_flag("--class-scores", x.class_scores, "class-average score table");
    explain->add_option("--top", x.top, "features listed per class")->check(CLI::PositiveNumber)->capture_default_str();
    explain->add_flag("--stability", x.stability, "mean knockout steps to leave each class");
    explain->add_flag("--similarity", x.similarity, "mean knockout steps between class pairs");
    explain->add_option("--max-steps", x.max_steps, "knockout step cap (0: all features)")->capture_default_str();
    explain->add_flag("--svg", x.svg, "also render SVG heatmaps");
    auto* synth = app.add_subcommand("synth", "write a synthetic cohort");
    synth->add_option("--classes", x.synth.n_classes, "classes")->capture_default_str();
    synth->add_option("--features", x.synth.n_features, "features")->capture_default_str();
    synth->add_option("--informative", x.synth.n_informative, "informative features per class")->capture_default_str();
    synth->add_option("--per-class", x.synth.samples_per_class, "samples per class")->capture_default_str();
    synth->add_option("--shift", x.synth.shift, "mean shift of informative features")->capture_default_str();
    synth->add_option("--datasets", x.synth.n_datasets, "datasets with their own feature bias")->capture_default_str();
    synth->add_option("--bias-sigma", x.synth.bias_sigma, "log-scale spread of dataset bias")->capture_default_str();
    synth->add_option("--noise", x.synth.noise_scale, "noise scale")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ExitCode::ok : ExitCode::usage;
    }

    try {
        cfg.mlp.hidden = parse_hidden(x.hidden);
        if (cfg.rf.keep == 0) throw UsageError("--keep must be positive");
        const int threads = resolve_threads(cfg.threads);
        if (threads > 0) parallel::set_threads(threads);

        std::string command;
        if (preprocess->parsed()) command = "preprocess";
        else if (train->parsed()) command = "train";
        else if (predict->parsed()) command = "predict";
        else if (cv->parsed()) command = "validate cv";
        else if (odo->parsed()) command = "validate odo";
        else if (explain->parsed()) command = "explain";
        else command = "synth";

        std::vector<fs::path> inputs{cfg.inputs.srna, cfg.inputs.contam, cfg.inputs.metadata};
        if (command == "predict" || command == "explain")
            for (const char* f : {"pipeline.json", "model.json", "forest.json"}) inputs.push_back(x.model_dir / f);

        fs::create_directories(cfg.out);
        Outputs outputs(cfg.out, inputs);
        if (command == "preprocess") cmd_preprocess(cfg, x, outputs, out);
        else if (command == "train") cmd_train(cfg, x, outputs, out);
        else if (command == "predict") cmd_predict(cfg, x, outputs, out);
        else if (command == "validate cv") cmd_validate(cfg, x, false, outputs, out);
        else if (command == "validate odo") cmd_validate(cfg, x, true, outputs, out);
        else if (command == "explain") cmd_explain(cfg, x, outputs, out);
        else cmd_synth(cfg, x, outputs, out);
        write_manifest(outputs, cfg, x, command, args, inputs, parallel::max_threads());
        return ExitCode::ok;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return ExitCode::usage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return ExitCode::numeric;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return ExitCode::data;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return ExitCode::data;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace exprsaug::cli
