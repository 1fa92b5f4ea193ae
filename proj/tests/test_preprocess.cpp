#include <doctest.h>

#include <cmath>
#include <map>

#include "exprsaug/errors.hpp"
#include "exprsaug/pipeline.hpp"
#include "exprsaug/preprocess.hpp"
#include "support.hpp"

using namespace exprsaug;

namespace {

ExpressionMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    ExpressionMatrix m;
    const std::size_t n = rows.empty() ? 0 : rows[0].size();
    for (std::size_t f = 0; f < rows.size(); ++f) m.feature_ids.push_back("srna:f" + std::to_string(f));
    for (std::size_t s = 0; s < n; ++s) m.sample_ids.push_back("S" + std::to_string(s));
    m.values = Matrix(rows.size(), n);
    for (std::size_t f = 0; f < rows.size(); ++f)
        for (std::size_t s = 0; s < n; ++s) m.values(f, s) = rows[f][s];
    return m;
}

AnnotatedDataset dataset_with_counts(const std::map<std::string, std::size_t>& counts) {
    AnnotatedDataset d;
    std::size_t total = 0;
    for (const auto& [name, c] : counts) {
        d.class_names.push_back(name);
        for (std::size_t i = 0; i < c; ++i) {
            d.labels.push_back(static_cast<int>(d.class_names.size() - 1));
            MetadataRecord r;
            r.sample_id = "S" + std::to_string(total);
            r.dataset_id = "D";
            r.tissue = name;
            d.metadata.rows.push_back(r);
            d.matrix.sample_ids.push_back(r.sample_id);
            ++total;
        }
    }
    d.matrix.feature_ids = {"srna:a"};
    d.matrix.values = Matrix(1, total);
    for (std::size_t s = 0; s < total; ++s) d.matrix.values(0, s) = static_cast<double>(s);
    return d;
}

}  // namespace

TEST_CASE("rpm examples") {
    auto m = rpm_normalize(from_rows({{2}, {3}, {5}}));
    CHECK(m.values(0, 0) == doctest::Approx(200000.0).epsilon(1e-12));
    CHECK(m.values(1, 0) == doctest::Approx(300000.0).epsilon(1e-12));
    CHECK(m.values(2, 0) == doctest::Approx(500000.0).epsilon(1e-12));
    CHECK(rpm_normalize(from_rows({{7}})).values(0, 0) == 1e6);
    try {
        rpm_normalize(from_rows({{0, 1}, {0, 2}}));
        FAIL("expected an error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("S0") != std::string::npos);
    }
}

TEST_CASE("rpm columns sum to one million") {
    Rng rng(8);
    ExpressionMatrix m = from_rows(std::vector<std::vector<double>>(300, std::vector<double>(40)));
    for (double& v : m.values.values()) v = std::floor(rng.uniform() * 1000.0);
    auto r = rpm_normalize(m);
    for (std::size_t s = 0; s < r.n_samples(); ++s) {
        double sum = 0.0;
        for (std::size_t f = 0; f < r.n_features(); ++f) sum += r.values(f, s);
        CHECK(std::abs(sum - 1e6) <= 1e-9 * 1e6);
    }
}

TEST_CASE("minmax examples") {
    auto m = from_rows({{1, 3, 5}, {2, 2, 2}});
    auto p = fit_minmax(m);
    auto s = apply_minmax(m, p);
    CHECK(s.values(0, 0) == 0.0);
    CHECK(s.values(0, 1) == 0.5);
    CHECK(s.values(0, 2) == 1.0);
    CHECK(s.values(1, 0) == 0.0);
    CHECK(s.values(1, 2) == 0.0);

    ScalerParams ten{{"srna:f0"}, {0.0}, {10.0}};
    auto unseen = apply_minmax(from_rows({{12, -1, 5}}), ten);
    CHECK(unseen.values(0, 0) == 1.0);
    CHECK(unseen.values(0, 1) == 0.0);
    CHECK(unseen.values(0, 2) == 0.5);

    ScalerParams other{{"srna:zz"}, {0.0}, {1.0}};
    CHECK_THROWS_AS(apply_minmax(from_rows({{1}}), other), DataError);
}

TEST_CASE("minmax maps the range onto [0, 1]") {
    Rng rng(21);
    auto m = from_rows(std::vector<std::vector<double>>(50, std::vector<double>(30)));
    for (double& v : m.values.values()) v = rng.uniform() * 100.0;
    auto p = fit_minmax(m);
    auto s = apply_minmax(m, p);
    for (std::size_t f = 0; f < s.n_features(); ++f) {
        double lo = 1.0, hi = 0.0;
        for (std::size_t j = 0; j < s.n_samples(); ++j) {
            CHECK(s.values(f, j) >= 0.0);
            CHECK(s.values(f, j) <= 1.0);
            lo = std::min(lo, s.values(f, j));
            hi = std::max(hi, s.values(f, j));
        }
        CHECK(lo == 0.0);
        CHECK(hi == 1.0);
    }
    auto shifted = m;
    for (double& v : shifted.values.values()) v = v * 3.0 - 50.0;
    auto t = apply_minmax(shifted, p);
    for (double v : t.values.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("zero filter boundaries") {
    std::vector<double> four_zeros{0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
    std::vector<double> three_zeros{0, 0, 0, 1, 1, 1, 1, 1, 1, 1};
    auto m = from_rows({four_zeros, three_zeros});
    auto kept = filter_zero_features(m, 0.3);
    CHECK(kept.feature_ids == std::vector<std::string>{"srna:f1"});
    auto all = filter_zero_features(m, 1.0);
    CHECK(all.n_features() == 2);
    CHECK_THROWS_AS(filter_zero_features(from_rows({four_zeros}), 0.3), DataError);
    CHECK_THROWS(filter_zero_features(m, 1.5));
}

TEST_CASE("tissue grouping replaces mapped names only") {
    MetadataTable t;
    for (const char* tissue : {"blood plasma", "liver", "heart"}) {
        MetadataRecord r;
        r.sample_id = tissue;
        r.tissue = tissue;
        t.rows.push_back(r);
    }
    t.rows.push_back(MetadataRecord{"none", "D", std::nullopt, std::nullopt, std::nullopt});
    auto g = group_tissues(t, TissueGroupMap::builtin());
    CHECK(g.rows[0].tissue == "blood_group");
    CHECK(g.rows[1].tissue == "blood_group");
    CHECK(g.rows[2].tissue == "heart");
    CHECK_FALSE(g.rows[3].tissue.has_value());
    CHECK(group_tissues(g, TissueGroupMap::builtin()).rows == g.rows);
}

TEST_CASE("age binning examples") {
    CHECK(bin_age(65, AgeBinning::scheme(2)) == "[0;65]");
    CHECK(bin_age(66, AgeBinning::scheme(2)) == "(65;110]");
    CHECK(bin_age(30, AgeBinning::scheme(4)) == "[0;30]");
}

TEST_CASE("small class filter") {
    CHECK_THROWS_AS(filter_small_classes(dataset_with_counts({{"A", 20}, {"B", 8}}), 9), DataError);
    auto both = filter_small_classes(dataset_with_counts({{"A", 20}, {"B", 9}}), 9);
    CHECK(both.class_names.size() == 2);
    auto d = dataset_with_counts({{"A", 5}, {"B", 2}, {"C", 6}});
    auto f = filter_small_classes(d, 3);
    CHECK(f.class_names == std::vector<std::string>{"A", "C"});
    CHECK(f.n_samples() == 11);
    for (std::size_t i = 0; i < f.n_samples(); ++i) {
        CHECK(f.labels[i] >= 0);
        CHECK(f.labels[i] < 2);
        CHECK(f.metadata.rows[i].tissue == f.class_names[static_cast<std::size_t>(f.labels[i])]);
        CHECK(f.metadata.rows[i].sample_id == f.matrix.sample_ids[i]);
    }
    auto same = filter_small_classes(d, 1);
    CHECK(same.labels == d.labels);
    CHECK(same.matrix.sample_ids == d.matrix.sample_ids);
}

TEST_CASE("downsampling equalizes class sizes") {
    auto d = dataset_with_counts({{"A", 10}, {"B", 4}});
    auto a = downsample_classes(d, 77);
    auto counts = a.class_counts();
    CHECK(counts == std::vector<std::size_t>{4, 4});
    auto b = downsample_classes(d, 77);
    CHECK(a.matrix.sample_ids == b.matrix.sample_ids);

    auto balanced = dataset_with_counts({{"A", 4}, {"B", 4}});
    CHECK(downsample_classes(balanced, 1).matrix.sample_ids == balanced.matrix.sample_ids);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto x = downsample_classes(dataset_with_counts({{"A", 13}, {"B", 7}, {"C", 3}}), seed);
        CHECK(x.class_counts() == std::vector<std::size_t>{3, 3, 3});
    }
}

TEST_CASE("pipeline filters after scaling and stores a reusable state") {
    testing::TempDir dir;
    testing::write_file(dir / "srna.tsv",
                        "feature_id\tS1\tS2\tS3\tS4\n"
                        "a\t10\t20\t30\t40\n"
                        "b\t0\t0\t5\t5\n"
                        "c\t5\t5\t5\t5\n"
                        "d\t1\t2\t3\t9\n");
    testing::write_file(dir / "meta.tsv",
                        "sample_id\tdataset_id\ttissue\tsex\tage\n"
                        "S1\tD1\tliver\t\t\nS2\tD1\tbrain\t\t\nS3\tD2\tserum\t\t\nS4\tD2\tneocortex\t\t\n");
    pipeline::InputPaths paths{dir / "srna.tsv", {}, dir / "meta.tsv"};
    pipeline::PreprocessConfig config;
    auto with_rpm = pipeline::prepare(paths, config);
    CHECK(with_rpm.data.matrix.feature_ids == std::vector<std::string>{"srna:a", "srna:c", "srna:d"});

    // Without RPM the constant feature c scales to all zeros and is dropped.
    config.rpm = false;
    auto prep = pipeline::prepare(paths, config);
    CHECK(prep.data.class_names == std::vector<std::string>{"blood_group", "brain_group"});
    CHECK(prep.data.matrix.feature_ids == std::vector<std::string>{"srna:a", "srna:d"});
    CHECK(prep.report.removed_zero_features == 2);
    for (double v : prep.data.matrix.values.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    REQUIRE(prep.state.scaler.has_value());
    CHECK(prep.state.scaler->feature_ids == prep.state.feature_ids);

    pipeline::save_state(dir / "pipeline.json", prep.state);
    auto state = pipeline::load_state(dir / "pipeline.json");
    auto again = pipeline::apply_state(pipeline::load_features(paths, state.config.feature_set, state.config.rpm), state);
    CHECK(again.values == prep.data.matrix.values);

    config.feature_set = pipeline::FeatureSet::both;
    CHECK_THROWS_AS(pipeline::prepare(paths, config), UsageError);
}
