#include "exprsaug/pipeline.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

#include "exprsaug/errors.hpp"
#include "exprsaug/text.hpp"

namespace exprsaug::pipeline {

std::string_view to_string(FeatureSet f) {
    switch (f) {
        case FeatureSet::srna: return "srna";
        case FeatureSet::contam: return "contam";
        case FeatureSet::both: return "both";
    }
    return "srna";
}

FeatureSet parse_feature_set(std::string_view s) {
    const std::string v = text::to_lower(s);
    if (v == "srna") return FeatureSet::srna;
    if (v == "contam") return FeatureSet::contam;
    if (v == "both") return FeatureSet::both;
    throw UsageError("unknown feature set '" + std::string(s) + "' (expected srna, contam or both)");
}

nlohmann::json to_json(const PipelineState& s) {
    nlohmann::json doc;
    doc["format_version"] = 1;
    doc["kind"] = "pipeline";
    doc["feature_set"] = to_string(s.config.feature_set);
    doc["label_field"] = to_string(s.config.label_field);
    doc["age_scheme"] = s.config.age_scheme;
    doc["group_tissues"] = s.config.group_tissues;
    doc["rpm"] = s.config.rpm;
    doc["minmax"] = s.config.minmax;
    doc["zero_threshold"] = s.config.zero_threshold;
    doc["min_class_size"] = s.config.min_class_size;
    doc["defer_scaling"] = s.config.defer_scaling;
    doc["feature_ids"] = s.feature_ids;
    doc["class_names"] = s.class_names;
    if (s.scaler)
        doc["scaler"] = {{"min", s.scaler->min}, {"max", s.scaler->max}};
    else
        doc["scaler"] = nullptr;
    return doc;
}

PipelineState state_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format_version").get<int>() != 1 || doc.at("kind").get<std::string>() != "pipeline")
            throw DataError("not a version 1 pipeline document");
        PipelineState s;
        s.config.feature_set = parse_feature_set(doc.at("feature_set").get<std::string>());
        s.config.label_field = parse_label_field(doc.at("label_field").get<std::string>());
        s.config.age_scheme = doc.at("age_scheme").get<int>();
        s.config.group_tissues = doc.at("group_tissues").get<bool>();
        s.config.rpm = doc.at("rpm").get<bool>();
        s.config.minmax = doc.at("minmax").get<bool>();
        s.config.zero_threshold = doc.at("zero_threshold").get<double>();
        s.config.min_class_size = doc.at("min_class_size").get<std::size_t>();
        s.config.defer_scaling = doc.at("defer_scaling").get<bool>();
        s.feature_ids = doc.at("feature_ids").get<std::vector<std::string>>();
        s.class_names = doc.at("class_names").get<std::vector<std::string>>();
        const auto& sc = doc.at("scaler");
        if (!sc.is_null()) {
            ScalerParams p;
            p.feature_ids = s.feature_ids;
            p.min = sc.at("min").get<std::vector<double>>();
            p.max = sc.at("max").get<std::vector<double>>();
            if (p.min.size() != p.feature_ids.size() || p.max.size() != p.feature_ids.size())
                throw DataError("scaler length does not match the feature list");
            s.scaler = std::move(p);
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed pipeline document: ") + e.what());
    }
}

void save_state(const std::filesystem::path& path, const PipelineState& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_json(state).dump(1) << '\n';
}

PipelineState load_state(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return state_from_json(doc);
}

std::string PreprocessReport::to_tsv() const {
    std::ostringstream out;
    out << "input_samples\t" << input_samples << '\n'
        << "input_features\t" << input_features << '\n'
        << "dropped_missing_label\t" << dropped_missing << '\n'
        << "dropped_no_metadata\t" << dropped_unmatched << '\n'
        << "dropped_unbinnable_age\t" << dropped_unbinnable << '\n'
        << "dropped_small_class\t" << dropped_small_class << '\n'
        << "removed_zero_features\t" << removed_zero_features << '\n'
        << "output_samples\t" << output_samples << '\n'
        << "output_features\t" << output_features << '\n';
    for (std::size_t c = 0; c < class_names.size(); ++c)
        out << "class:" << class_names[c] << '\t' << class_counts[c] << '\n';
    return out.str();
}

namespace {

ExpressionMatrix align_samples(const ExpressionMatrix& m, const std::vector<std::string>& order) {
    std::unordered_map<std::string_view, std::size_t> pos;
    for (std::size_t i = 0; i < m.sample_ids.size(); ++i) pos.emplace(m.sample_ids[i], i);
    std::vector<std::size_t> idx;
    idx.reserve(order.size());
    for (const auto& id : order) idx.push_back(pos.at(id));
    return m.select_samples(idx);
}

}  // namespace

ExpressionMatrix load_features(const InputPaths& paths, FeatureSet set, bool rpm) {
    auto load = [rpm](const std::filesystem::path& p, FeatureNamespace ns) {
        if (p.empty()) throw UsageError(std::string("missing path for the ") + std::string(namespace_prefix(ns)) + " matrix");
        ExpressionMatrix m = load_expression_matrix(p, ns);
        return rpm ? rpm_normalize(m) : m;
    };
    if (set == FeatureSet::srna) return load(paths.srna, FeatureNamespace::srna);
    if (set == FeatureSet::contam) return load(paths.contam, FeatureNamespace::contam);
    ExpressionMatrix s = load(paths.srna, FeatureNamespace::srna);
    ExpressionMatrix c = load(paths.contam, FeatureNamespace::contam);
    std::unordered_map<std::string_view, bool> in_contam;
    for (const auto& id : c.sample_ids) in_contam.emplace(id, true);
    std::vector<std::string> shared;
    for (const auto& id : s.sample_ids)
        if (in_contam.count(id)) shared.push_back(id);
    if (shared.empty()) throw DataError("the sRNA and contaminant matrices share no samples");
    return merge_matrices(align_samples(s, shared), align_samples(c, shared));
}

Prepared prepare_dataset(AnnotatedDataset data, const PreprocessConfig& config, bool already_rpm, JoinResult counts) {
    if (config.zero_threshold < 0.0 || config.zero_threshold > 1.0)
        throw UsageError("zero threshold must lie in [0, 1]");
    if (config.min_class_size < 1) throw UsageError("minimum class size must be at least 1");
    Prepared out;
    PreprocessReport& rep = out.report;
    rep.dropped_missing = counts.dropped_missing;
    rep.dropped_unmatched = counts.dropped_unmatched;
    rep.dropped_unbinnable = counts.dropped_unbinnable;
    rep.input_samples = data.n_samples() + counts.dropped_missing + counts.dropped_unmatched + counts.dropped_unbinnable;
    rep.input_features = data.matrix.n_features();

    const std::size_t before = data.n_samples();
    if (config.min_class_size > 1) data = filter_small_classes(data, config.min_class_size);
    rep.dropped_small_class = before - data.n_samples();

    if (config.rpm && !already_rpm) data.matrix = rpm_normalize(data.matrix);

    std::optional<ScalerParams> scaler;
    const bool scale_now = config.minmax && !config.defer_scaling;
    if (scale_now) {
        scaler = fit_minmax(data.matrix);
        data.matrix = apply_minmax(data.matrix, *scaler);
    }
    data.matrix = filter_zero_features(data.matrix, config.zero_threshold);
    rep.removed_zero_features = rep.input_features - data.matrix.n_features();

    if (scaler) {
        std::unordered_map<std::string_view, std::size_t> pos;
        for (std::size_t j = 0; j < scaler->feature_ids.size(); ++j) pos.emplace(scaler->feature_ids[j], j);
        ScalerParams kept;
        kept.feature_ids = data.matrix.feature_ids;
        for (const auto& id : kept.feature_ids) {
            const auto j = pos.at(id);
            kept.min.push_back(scaler->min[j]);
            kept.max.push_back(scaler->max[j]);
        }
        scaler = std::move(kept);
    }

    rep.output_samples = data.n_samples();
    rep.output_features = data.matrix.n_features();
    rep.class_names = data.class_names;
    rep.class_counts = data.class_counts();

    out.state.config = config;
    out.state.feature_ids = data.matrix.feature_ids;
    out.state.scaler = std::move(scaler);
    out.state.class_names = data.class_names;
    out.data = std::move(data);
    return out;
}

Prepared prepare(const InputPaths& paths, const PreprocessConfig& config) {
    if ((config.feature_set == FeatureSet::contam || config.feature_set == FeatureSet::both) && paths.contam.empty())
        throw UsageError("feature set '" + std::string(to_string(config.feature_set)) +
                         "' needs a contaminant matrix (--contam)");
    if (paths.metadata.empty()) throw UsageError("a metadata table is required (--metadata)");
    ExpressionMatrix features = load_features(paths, config.feature_set, config.rpm);
    MetadataTable meta = load_metadata(paths.metadata);
    if (config.group_tissues) meta = group_tissues(meta, TissueGroupMap::builtin());
    std::optional<AgeBinning> scheme;
    if (config.label_field == LabelField::age_interval) scheme = AgeBinning::scheme(config.age_scheme);
    JoinResult joined = join(features, meta, config.label_field, scheme ? &*scheme : nullptr);
    AnnotatedDataset data = std::move(joined.dataset);
    joined.dataset = {};
    return prepare_dataset(std::move(data), config, config.rpm, joined);
}

ExpressionMatrix apply_state(const ExpressionMatrix& features, const PipelineState& state) {
    std::unordered_map<std::string_view, std::size_t> pos;
    for (std::size_t j = 0; j < features.feature_ids.size(); ++j) pos.emplace(features.feature_ids[j], j);
    std::vector<std::size_t> idx;
    idx.reserve(state.feature_ids.size());
    for (const auto& id : state.feature_ids) {
        auto it = pos.find(id);
        if (it == pos.end()) throw DataError("input matrix lacks model feature '" + id + "'");
        idx.push_back(it->second);
    }
    ExpressionMatrix m = features.select_features(idx);
    if (state.scaler) m = apply_minmax(m, *state.scaler);
    return m;
}

}  // namespace exprsaug::pipeline
