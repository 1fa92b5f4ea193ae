#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "exprsaug/errors.hpp"
#include "exprsaug/labels.hpp"
#include "exprsaug/matrix.hpp"
#include "exprsaug/random.hpp"
#include "exprsaug/text.hpp"

using namespace exprsaug;

TEST_CASE("matrix indexing, transpose and selection") {
    Matrix m(2, 3);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c) m(r, c) = static_cast<double>(10 * r + c);
    Matrix t = m.transposed();
    CHECK(t.rows() == 3);
    CHECK(t.cols() == 2);
    CHECK(t(2, 1) == 12.0);
    CHECK(t.transposed() == m);

    std::vector<std::size_t> rows{1, 1};
    Matrix rr = m.select_rows(rows);
    CHECK(rr(0, 2) == 12.0);
    CHECK(rr(1, 0) == 10.0);
    std::vector<std::size_t> cols{2, 0};
    Matrix cc = m.select_cols(cols);
    CHECK(cc(0, 0) == 2.0);
    CHECK(cc(1, 1) == 10.0);
}

TEST_CASE("parse_real accepts decimals and rejects junk") {
    double v = 0.0;
    CHECK(text::parse_real("1.5", v));
    CHECK(v == 1.5);
    CHECK(text::parse_real("+2e3", v));
    CHECK(v == 2000.0);
    CHECK(text::parse_real("-3", v));
    CHECK(v == -3.0);
    CHECK_FALSE(text::parse_real("", v));
    CHECK_FALSE(text::parse_real("1.5x", v));
    CHECK_FALSE(text::parse_real("abc", v));
}

TEST_CASE("format_real round-trips bit-exactly") {
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
        const double x = std::ldexp(rng.uniform(), static_cast<int>(rng.below(80)) - 40);
        double back = 0.0;
        REQUIRE(text::parse_real(text::format_real(x), back));
        CHECK(back == x);
    }
    CHECK(text::format_real(0.1) == "0.1");
    CHECK(text::format_real(3.0) == "3");
}

TEST_CASE("split_tabs keeps empty fields") {
    auto f = text::split_tabs("a\t\tb\t");
    REQUIRE(f.size() == 4);
    CHECK(f[0] == "a");
    CHECK(f[1].empty());
    CHECK(f[2] == "b");
    CHECK(f[3].empty());
}

TEST_CASE("derive_seed separates streams and indices") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t master : {0ULL, 1ULL, 42ULL})
        for (const char* name : {"mlp.init", "mlp.shuffle", "rf.tree", "folds"})
            for (std::uint64_t idx = 0; idx < 8; ++idx) seen.insert(derive_seed(master, name, idx));
    CHECK(seen.size() == 3 * 4 * 8);
    CHECK(derive_seed(7, "folds", 3) == derive_seed(7, "folds", 3));
}

TEST_CASE("rng helpers stay in range and are reproducible") {
    Rng a(99), b(99);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(u == b.uniform());
        const auto k = a.below(7);
        CHECK(k < 7);
        CHECK(k == b.below(7));
    }
    auto p = a.permutation(50);
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < 50; ++i) CHECK(p[i] == i);

    auto s = a.sample_without_replacement(20, 20);
    std::set<std::size_t> distinct(s.begin(), s.end());
    CHECK(distinct.size() == 20);
}

TEST_CASE("rng normal deviates have unit moments") {
    Rng rng(2024);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    const double mean = sum / n;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(sq / n - mean * mean - 1.0) < 0.02);
}

TEST_CASE("below is uniform over small ranges") {
    Rng rng(3);
    std::vector<int> counts(5, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[rng.below(5)];
    for (int c : counts) CHECK(std::abs(c - n / 5) < 800);
}

TEST_CASE("tissue grouping table") {
    const auto map = TissueGroupMap::builtin();
    CHECK(map.members().size() == 31);
    CHECK(map.group_of("blood plasma") == "blood_group");
    CHECK(map.group_of("Liver") == "blood_group");
    CHECK(map.group_of("NEOCORTEX") == "brain_group");
    CHECK_FALSE(map.group_of("heart").has_value());
    for (const auto& [tissue, group] : map.members()) CHECK_FALSE(map.group_of(group).has_value());
}

TEST_CASE("conflicting tissue groups are rejected") {
    CHECK_THROWS_AS(TissueGroupMap({{"Skin", "a"}, {"skin", "b"}}), DataError);
}

TEST_CASE("age schemes partition [0, 110]") {
    for (int k : {2, 3, 4}) {
        const auto scheme = AgeBinning::scheme(k);
        CHECK(scheme.size() == k);
        for (int half = 0; half <= 220; ++half) {
            const double age = half / 2.0;
            int accepted = 0;
            for (const auto& iv : scheme.intervals()) {
                const bool above = iv.lower_inclusive ? age >= iv.lower : age > iv.lower;
                if (above && age <= iv.upper) ++accepted;
            }
            CHECK(accepted == 1);
            CHECK_NOTHROW(scheme.bin(age));
        }
        CHECK_THROWS_AS(scheme.bin(-0.5), DataError);
        CHECK_THROWS_AS(scheme.bin(110.5), DataError);
        CHECK_THROWS_AS(scheme.bin(std::numeric_limits<double>::quiet_NaN()), DataError);
    }
    CHECK_THROWS_AS(AgeBinning::scheme(5), UsageError);
}

TEST_CASE("custom cut points") {
    const auto b = AgeBinning::from_cuts({50});
    CHECK(b.bin(50) == "[0;50]");
    CHECK(b.bin(50.5) == "(50;110]");
    CHECK_THROWS(AgeBinning::from_cuts({60, 40}));
    CHECK_THROWS(AgeBinning::from_cuts({0}));
}
