#include "exprsaug/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <unordered_set>

#include "exprsaug/errors.hpp"
#include "exprsaug/text.hpp"

namespace exprsaug {

namespace {

std::string where(std::string_view source, std::size_t line) {
    return std::string(source) + ":" + std::to_string(line) + ": ";
}

bool next_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

template <typename Ids>
void require_unique(const Ids& ids, std::string_view what) {
    std::unordered_set<std::string_view> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second)
            throw DataError("duplicate " + std::string(what) + " id '" + std::string(id) + "'");
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

}  // namespace

std::string_view namespace_prefix(FeatureNamespace ns) {
    return ns == FeatureNamespace::srna ? "srna:" : "contam:";
}

void ExpressionMatrix::validate() const {
    if (values.rows() != feature_ids.size() || values.cols() != sample_ids.size())
        throw DataError("matrix shape does not match id lists");
    require_unique(feature_ids, "feature");
    require_unique(sample_ids, "sample");
    for (double v : values.values())
        if (!std::isfinite(v) || v < 0.0) throw DataError("matrix holds a negative or non-finite value");
}

ExpressionMatrix ExpressionMatrix::select_samples(std::span<const std::size_t> idx) const {
    ExpressionMatrix out;
    out.feature_ids = feature_ids;
    out.sample_ids.reserve(idx.size());
    for (auto i : idx) out.sample_ids.push_back(sample_ids[i]);
    out.values = values.select_cols(idx);
    return out;
}

ExpressionMatrix ExpressionMatrix::select_features(std::span<const std::size_t> idx) const {
    ExpressionMatrix out;
    out.sample_ids = sample_ids;
    out.feature_ids.reserve(idx.size());
    for (auto i : idx) out.feature_ids.push_back(feature_ids[i]);
    out.values = values.select_rows(idx);
    return out;
}

ExpressionMatrix read_expression_matrix(std::istream& in, std::optional<FeatureNamespace> ns,
                                        std::string_view source) {
    std::string line;
    if (!next_line(in, line)) throw DataError(where(source, 1) + "missing header");
    auto header = text::split_tabs(line);
    if (header.empty() || header[0] != "feature_id")
        throw DataError(where(source, 1) + "header must start with 'feature_id'");
    ExpressionMatrix m;
    std::unordered_set<std::string> seen_samples;
    for (std::size_t c = 1; c < header.size(); ++c) {
        std::string id(header[c]);
        if (id.empty()) throw DataError(where(source, 1) + "empty sample id in column " + std::to_string(c + 1));
        if (!seen_samples.insert(id).second)
            throw DataError(where(source, 1) + "duplicate sample id '" + id + "'");
        m.sample_ids.push_back(std::move(id));
    }
    const std::size_t n_samples = m.sample_ids.size();
    std::vector<double> data;
    std::unordered_set<std::string> seen_features;
    std::size_t lineno = 1;
    while (next_line(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = text::split_tabs(line);
        if (cells.size() != n_samples + 1)
            throw DataError(where(source, lineno) + "expected " + std::to_string(n_samples + 1) +
                            " fields, found " + std::to_string(cells.size()));
        if (cells[0].empty()) throw DataError(where(source, lineno) + "empty feature id");
        std::string id = ns ? std::string(namespace_prefix(*ns)) + std::string(cells[0])
                            : std::string(cells[0]);
        if (!seen_features.insert(id).second)
            throw DataError(where(source, lineno) + "duplicate feature id '" + id + "'");
        for (std::size_t c = 1; c < cells.size(); ++c) {
            double v = 0.0;
            if (!text::parse_real(cells[c], v) || !std::isfinite(v))
                throw DataError(where(source, lineno) + "non-numeric value '" + std::string(cells[c]) +
                                "' for sample '" + m.sample_ids[c - 1] + "'");
            if (v < 0.0)
                throw DataError(where(source, lineno) + "negative value " + std::string(cells[c]) +
                                " for sample '" + m.sample_ids[c - 1] + "'");
            data.push_back(v);
        }
        m.feature_ids.push_back(std::move(id));
    }
    m.values = Matrix(m.feature_ids.size(), n_samples);
    std::copy(data.begin(), data.end(), m.values.data());
    return m;
}

ExpressionMatrix load_expression_matrix(const std::filesystem::path& path, FeatureNamespace ns) {
    auto in = open_input(path);
    return read_expression_matrix(in, ns, path.string());
}

ExpressionMatrix load_expression_matrix(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_expression_matrix(in, std::nullopt, path.string());
}

void write_expression_matrix(std::ostream& out, const ExpressionMatrix& m) {
    out << "feature_id";
    for (const auto& s : m.sample_ids) out << '\t' << s;
    out << '\n';
    for (std::size_t f = 0; f < m.n_features(); ++f) {
        out << m.feature_ids[f];
        for (double v : m.values.row(f)) out << '\t' << text::format_real(v);
        out << '\n';
    }
}

void write_expression_matrix(const std::filesystem::path& path, const ExpressionMatrix& m) {
    auto out = open_output(path);
    write_expression_matrix(out, m);
}

std::string_view to_string(Sex s) { return s == Sex::female ? "female" : "male"; }

const MetadataRecord* MetadataTable::find(std::string_view sample_id) const {
    for (const auto& r : rows)
        if (r.sample_id == sample_id) return &r;
    return nullptr;
}

void MetadataTable::validate() const {
    std::unordered_set<std::string_view> seen;
    for (const auto& r : rows) {
        if (!seen.insert(r.sample_id).second)
            throw DataError("duplicate metadata sample id '" + r.sample_id + "'");
        if (r.age && (!std::isfinite(*r.age) || *r.age < 0.0 || *r.age > 130.0))
            throw DataError("age of sample '" + r.sample_id + "' outside [0, 130]");
    }
}

MetadataTable read_metadata(std::istream& in, std::string_view source) {
    std::string line;
    if (!next_line(in, line) || line != "sample_id\tdataset_id\ttissue\tsex\tage")
        throw DataError(where(source, 1) + "header must be 'sample_id\\tdataset_id\\ttissue\\tsex\\tage'");
    MetadataTable t;
    std::unordered_set<std::string> seen;
    std::size_t lineno = 1;
    while (next_line(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = text::split_tabs(line);
        if (cells.size() != 5)
            throw DataError(where(source, lineno) + "expected 5 fields, found " + std::to_string(cells.size()));
        MetadataRecord r;
        r.sample_id = std::string(cells[0]);
        if (r.sample_id.empty()) throw DataError(where(source, lineno) + "empty sample id");
        if (!seen.insert(r.sample_id).second)
            throw DataError(where(source, lineno) + "duplicate sample id '" + r.sample_id + "'");
        r.dataset_id = std::string(cells[1]);
        if (!cells[2].empty()) r.tissue = std::string(cells[2]);
        if (cells[3] == "male") r.sex = Sex::male;
        else if (cells[3] == "female") r.sex = Sex::female;
        else if (!cells[3].empty())
            throw DataError(where(source, lineno) + "sex must be 'male', 'female' or empty, got '" +
                            std::string(cells[3]) + "'");
        if (!cells[4].empty()) {
            double age = 0.0;
            if (!text::parse_real(cells[4], age) || !std::isfinite(age) || age < 0.0 || age > 130.0)
                throw DataError(where(source, lineno) + "invalid age '" + std::string(cells[4]) + "'");
            r.age = age;
        }
        t.rows.push_back(std::move(r));
    }
    return t;
}

MetadataTable load_metadata(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_metadata(in, path.string());
}

void write_metadata(std::ostream& out, const MetadataTable& t) {
    out << "sample_id\tdataset_id\ttissue\tsex\tage\n";
    for (const auto& r : t.rows) {
        out << r.sample_id << '\t' << r.dataset_id << '\t' << r.tissue.value_or("") << '\t'
            << (r.sex ? to_string(*r.sex) : "") << '\t' << (r.age ? text::format_real(*r.age) : "")
            << '\n';
    }
}

void write_metadata(const std::filesystem::path& path, const MetadataTable& t) {
    auto out = open_output(path);
    write_metadata(out, t);
}

std::string_view to_string(LabelField f) {
    switch (f) {
        case LabelField::tissue: return "tissue";
        case LabelField::sex: return "sex";
        case LabelField::age_interval: return "age_interval";
    }
    return "tissue";
}

LabelField parse_label_field(std::string_view s) {
    if (s == "tissue") return LabelField::tissue;
    if (s == "sex") return LabelField::sex;
    if (s == "age_interval" || s == "age") return LabelField::age_interval;
    throw UsageError("unknown label field '" + std::string(s) + "'");
}

std::vector<std::size_t> AnnotatedDataset::class_counts() const {
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

AnnotatedDataset AnnotatedDataset::select_samples(std::span<const std::size_t> idx) const {
    AnnotatedDataset out;
    out.matrix = matrix.select_samples(idx);
    out.label_field = label_field;
    out.class_names = class_names;
    out.labels.reserve(idx.size());
    out.metadata.rows.reserve(idx.size());
    for (auto i : idx) {
        out.labels.push_back(labels[i]);
        out.metadata.rows.push_back(metadata.rows[i]);
    }
    return out;
}

void AnnotatedDataset::compact_classes() {
    auto counts = class_counts();
    std::vector<int> remap(class_names.size(), -1);
    std::vector<std::string> kept;
    for (std::size_t k = 0; k < class_names.size(); ++k) {
        if (counts[k] == 0) continue;
        remap[k] = static_cast<int>(kept.size());
        kept.push_back(class_names[k]);
    }
    for (int& y : labels) y = remap[static_cast<std::size_t>(y)];
    class_names = std::move(kept);
}

ExpressionMatrix merge_matrices(const ExpressionMatrix& a, const ExpressionMatrix& b) {
    if (a.sample_ids != b.sample_ids)
        throw DataError("cannot merge matrices: sample ids differ");
    std::unordered_set<std::string_view> ids(a.feature_ids.begin(), a.feature_ids.end());
    for (const auto& id : b.feature_ids)
        if (ids.count(id)) throw DataError("cannot merge matrices: feature id '" + id + "' in both");
    ExpressionMatrix out;
    out.sample_ids = a.sample_ids;
    out.feature_ids = a.feature_ids;
    out.feature_ids.insert(out.feature_ids.end(), b.feature_ids.begin(), b.feature_ids.end());
    out.values = Matrix(out.feature_ids.size(), out.sample_ids.size());
    std::copy(a.values.values().begin(), a.values.values().end(), out.values.data());
    std::copy(b.values.values().begin(), b.values.values().end(), out.values.data() + a.values.size());
    return out;
}

JoinResult join(const ExpressionMatrix& matrix, const MetadataTable& meta, LabelField field,
                const AgeBinning* age_scheme) {
    if (field == LabelField::age_interval && age_scheme == nullptr)
        throw UsageError("label field age_interval requires an age scheme");
    std::unordered_map<std::string_view, const MetadataRecord*> by_id;
    for (const auto& r : meta.rows) by_id.emplace(r.sample_id, &r);

    JoinResult result;
    std::vector<std::size_t> keep;
    std::vector<std::string> raw_labels;
    for (std::size_t s = 0; s < matrix.n_samples(); ++s) {
        auto it = by_id.find(matrix.sample_ids[s]);
        if (it == by_id.end()) {
            ++result.dropped_unmatched;
            continue;
        }
        const MetadataRecord& r = *it->second;
        std::optional<std::string> label;
        switch (field) {
            case LabelField::tissue: label = r.tissue; break;
            case LabelField::sex:
                if (r.sex) label = std::string(to_string(*r.sex));
                break;
            case LabelField::age_interval:
                if (r.age) {
                    if (*r.age > kMaxBinnedAge) {
                        ++result.dropped_unbinnable;
                        continue;
                    }
                    label = age_scheme->bin(*r.age);
                }
                break;
        }
        if (!label) {
            ++result.dropped_missing;
            continue;
        }
        keep.push_back(s);
        raw_labels.push_back(std::move(*label));
    }
    if (keep.empty())
        throw DataError("no samples carry a value for label field '" + std::string(to_string(field)) + "'");

    std::set<std::string> names(raw_labels.begin(), raw_labels.end());
    AnnotatedDataset& d = result.dataset;
    d.class_names.assign(names.begin(), names.end());
    d.label_field = field;
    d.matrix = matrix.select_samples(keep);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        auto pos = std::lower_bound(d.class_names.begin(), d.class_names.end(), raw_labels[i]);
        d.labels.push_back(static_cast<int>(pos - d.class_names.begin()));
        d.metadata.rows.push_back(*by_id.at(matrix.sample_ids[keep[i]]));
    }
    return result;
}

}  // namespace exprsaug
