#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dentalign/evalstats.hpp"
#include "dentalign/rng.hpp"

using namespace dentalign;

namespace {

// independent set-based oracle
std::optional<double> dice_oracle(const std::vector<std::uint16_t>& pred,
                                  const std::vector<std::uint16_t>& gt, int code) {
    std::set<std::size_t> a, b;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == code) a.insert(i);
        if (gt[i] == code) b.insert(i);
    }
    if (a.empty() && b.empty()) return std::nullopt;
    std::size_t inter = 0;
    for (auto i : a) inter += b.count(i);
    return 2.0 * static_cast<double>(inter) / static_cast<double>(a.size() + b.size());
}

}  // namespace

TEST(Dice, BasicCases) {
    std::vector<std::uint16_t> a{11, 11, 0, 0}, b{11, 11, 0, 0};
    EXPECT_DOUBLE_EQ(*dice(a, b, 11), 1.0);

    std::vector<std::uint16_t> c{11, 11, 0, 0}, d{0, 0, 11, 11};
    EXPECT_DOUBLE_EQ(*dice(c, d, 11), 0.0);

    // |A|=4, |B|=4, intersection 2
    std::vector<std::uint16_t> e{11, 11, 11, 11, 0, 0}, f{11, 11, 0, 0, 11, 11};
    EXPECT_DOUBLE_EQ(*dice(e, f, 11), 0.5);

    EXPECT_FALSE(dice(a, b, 48).has_value());  // absent from both
    std::vector<std::uint16_t> short_mask{11};
    EXPECT_THROW(dice(a, short_mask, 11), ShapeError);
}

TEST(Dice, MatchesSetCountingOracle) {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        Rng rng(seed * 13 + 5);
        const std::size_t n = 1 + rng.uniform_index(40);
        std::vector<std::uint16_t> pred(n), gt(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = static_cast<std::uint16_t>(rng.uniform_index(3) == 0 ? 11 : 0);
            gt[i] = static_cast<std::uint16_t>(rng.uniform_index(3) == 0 ? 11 : 0);
        }
        EXPECT_EQ(dice(pred, gt, 11), dice_oracle(pred, gt, 11)) << seed;
        // symmetry
        EXPECT_EQ(dice(pred, gt, 11), dice(gt, pred, 11));
        // dice == 1 iff sets equal (when nonempty)
        auto v = dice(pred, gt, 11);
        if (v.has_value()) {
            bool equal_sets = true;
            for (std::size_t i = 0; i < n; ++i) equal_sets &= (pred[i] == 11) == (gt[i] == 11);
            EXPECT_EQ(*v == 1.0, equal_sets);
        }
    }
}

TEST(Groups, SpecCodes) {
    EXPECT_EQ(group_of(11).id, 1);
    EXPECT_EQ(group_of(11).name, "Central Incisor");
    EXPECT_EQ(group_of(48).id, 8);
    EXPECT_EQ(group_of(48).name, "3rd Molar");
    EXPECT_EQ(group_of(25).id, 5);
    EXPECT_EQ(group_of(25).name, "2nd Premolar");
    EXPECT_THROW(group_of(0), LabelError);
    EXPECT_THROW(group_of(99), LabelError);
}

TEST(Groups, PartitionCoversAll32CodesFourPerGroup) {
    std::map<int, int> counts;
    for (int code : fdi::all_tooth_codes()) counts[group_of(code).id]++;
    ASSERT_EQ(counts.size(), 8u);
    for (const auto& [gid, n] : counts) EXPECT_EQ(n, 4) << "group " << gid;
}

TEST(ConfidenceInterval, ZeroVariance) {
    CiResult ci = confidence_interval({0.9, 0.9, 0.9});
    EXPECT_DOUBLE_EQ(ci.mean, 0.9);
    EXPECT_DOUBLE_EQ(ci.low, 0.9);
    EXPECT_DOUBLE_EQ(ci.high, 0.9);
}

TEST(ConfidenceInterval, TwoPointGolden) {
    // golden values pinned once from an external statistics oracle
    CiResult ci = confidence_interval({0.0, 1.0});
    EXPECT_NEAR(ci.mean, 0.5, 1e-12);
    EXPECT_NEAR(ci.low, -5.8531, 1e-3);
    EXPECT_NEAR(ci.high, 6.8531, 1e-3);
}

TEST(ConfidenceInterval, QuantileGoldens) {
    EXPECT_NEAR(stats::student_t_quantile(0.975, 1), 12.7062, 1e-3);
    // analytic check: df=1 quantile is tan(pi (p - 1/2))
    EXPECT_NEAR(stats::student_t_quantile(0.975, 1), std::tan(M_PI * 0.475), 1e-8);
    EXPECT_NEAR(stats::student_t_quantile(0.975, 2), 4.302653, 1e-5);
    EXPECT_NEAR(stats::student_t_quantile(0.975, 5), 2.570582, 1e-5);
    EXPECT_NEAR(stats::student_t_quantile(0.025, 5), -2.570582, 1e-5);
}

TEST(ConfidenceInterval, WidthShrinksAsRootN) {
    // constant-variance resamples: mean width should scale ~ t_q(n-1)/sqrt(n)
    Rng rng(7);
    std::array<std::size_t, 3> sizes{4, 16, 64};
    std::array<double, 3> mean_width{};
    for (std::size_t s = 0; s < sizes.size(); ++s) {
        double acc = 0;
        for (int rep = 0; rep < 1000; ++rep) {
            std::vector<double> vals(sizes[s]);
            for (auto& v : vals) v = rng.gaussian(0.5, 0.1);
            CiResult ci = confidence_interval(vals);
            acc += ci.high - ci.low;
        }
        mean_width[s] = acc / 1000.0;
    }
    EXPECT_GT(mean_width[0], mean_width[1]);
    EXPECT_GT(mean_width[1], mean_width[2]);
    // ratio between n=16 and n=64: (t15/sqrt(16)) / (t63/sqrt(64)) ~= 2.13
    EXPECT_NEAR(mean_width[1] / mean_width[2], 2.13, 0.25);
}

TEST(ConfidenceInterval, TranslationEquivariantAndErrors) {
    std::vector<double> vals{0.2, 0.5, 0.9, 0.4};
    CiResult base = confidence_interval(vals);
    for (auto& v : vals) v += 3.25;
    CiResult shifted = confidence_interval(vals);
    EXPECT_NEAR(shifted.mean, base.mean + 3.25, 1e-12);
    EXPECT_NEAR(shifted.low, base.low + 3.25, 1e-12);
    EXPECT_NEAR(shifted.high, base.high + 3.25, 1e-12);
    EXPECT_THROW(confidence_interval({0.5}), CardinalityError);
}

TEST(PairedTTest, DegenerateAndSymmetricCases) {
    std::vector<double> a{0.5, 0.7, 0.9};
    EXPECT_THROW(paired_t_test(a, a), DegenerateTestError);

    // d = {+1, -1}
    TTestResult r = paired_t_test({1.0, 0.0}, {0.0, 1.0});
    EXPECT_DOUBLE_EQ(r.t, 0.0);
    EXPECT_DOUBLE_EQ(r.p, 1.0);

    EXPECT_THROW(paired_t_test({1.0}, {0.0}), CardinalityError);
    EXPECT_THROW(paired_t_test({1.0, 2.0}, {0.0}), CardinalityError);
}

TEST(PairedTTest, GoldenValues) {
    // d = {1,2,3}: t = 2 sqrt(3), df = 2, p pinned from an external oracle
    TTestResult r = paired_t_test({2.0, 4.0, 6.0}, {1.0, 2.0, 3.0});
    EXPECT_NEAR(r.t, 3.4641, 1e-3);
    EXPECT_NEAR(r.p, 0.0742, 1e-3);
}

TEST(PairedTTest, Antisymmetry) {
    Rng rng(9);
    std::vector<double> a(8), b(8);
    for (std::size_t i = 0; i < 8; ++i) {
        a[i] = rng.uniform(0, 1);
        b[i] = rng.uniform(0, 1);
    }
    TTestResult ab = paired_t_test(a, b);
    TTestResult ba = paired_t_test(b, a);
    EXPECT_NEAR(ab.t, -ba.t, 1e-12);
    EXPECT_NEAR(ab.p, ba.p, 1e-12);
}

TEST(Report, SingleCodeProjectsToOneGroup) {
    std::vector<CaseDice> cases(2);
    cases[0][25] = 0.8;
    cases[1][25] = 0.9;
    DiceReport r = build_report(cases);
    ASSERT_EQ(r.per_group.size(), 1u);
    EXPECT_EQ(r.per_group[0].label, "T5 (2nd Premolar)");
    ASSERT_TRUE(r.overall.has_value());
    EXPECT_NEAR(r.overall->mean, 85.0, 1e-9);
}

TEST(Report, AllPerfectPredictions) {
    std::vector<CaseDice> cases(3);
    for (auto& c : cases) {
        c[11] = 1.0;
        c[31] = 1.0;
    }
    DiceReport r = build_report(cases);
    for (const auto& row : r.per_code) {
        EXPECT_DOUBLE_EQ(row.mean, 100.0);
        EXPECT_DOUBLE_EQ(row.ci_low, 100.0);
        EXPECT_DOUBLE_EQ(row.ci_high, 100.0);
    }
}

TEST(Report, ThreeCaseGoldenFixture) {
    // hand-computed and cross-checked against an external statistics oracle
    std::vector<CaseDice> cases(3);
    cases[0][11] = 0.9;
    cases[0][12] = 0.8;
    cases[0][48] = std::nullopt;  // absent in both masks
    cases[1][11] = 0.7;
    cases[1][48] = 0.6;
    cases[2][11] = 0.8;
    cases[2][12] = 0.9;

    DiceReport r = build_report(cases);
    ASSERT_EQ(r.per_code.size(), 3u);
    const auto& c11 = r.per_code[0];
    EXPECT_EQ(c11.label, "11");
    EXPECT_EQ(c11.n, 3);
    EXPECT_NEAR(c11.mean, 80.0, 1e-9);
    EXPECT_NEAR(c11.ci_low, 55.1586, 1e-3);
    EXPECT_NEAR(c11.ci_high, 104.8414, 1e-3);

    const auto& c12 = r.per_code[1];
    EXPECT_EQ(c12.n, 2);
    EXPECT_NEAR(c12.mean, 85.0, 1e-9);
    EXPECT_NEAR(c12.ci_low, 21.4690, 1e-3);
    EXPECT_NEAR(c12.ci_high, 148.5310, 1e-3);

    const auto& c48 = r.per_code[2];
    EXPECT_EQ(c48.n, 1);
    EXPECT_NEAR(c48.mean, 60.0, 1e-9);
    EXPECT_NEAR(c48.ci_low, 60.0, 1e-9);

    ASSERT_TRUE(r.overall.has_value());
    EXPECT_EQ(r.overall->n, 6);
    EXPECT_NEAR(r.overall->mean, 78.3333, 1e-3);
    EXPECT_NEAR(r.overall->ci_low, 66.0650, 1e-3);
    EXPECT_NEAR(r.overall->ci_high, 90.6017, 1e-3);

    // display table clamps the CI, stored rows do not
    const std::string table = format_report_table(r);
    EXPECT_NE(table.find("Total"), std::string::npos);
    EXPECT_EQ(table.find("104.84"), std::string::npos);
}

TEST(Report, WarnsOnUnscorableCode) {
    std::vector<CaseDice> cases(2);
    cases[0][11] = 0.9;
    cases[1][11] = 0.8;
    cases[0][21] = std::nullopt;
    cases[1][21] = std::nullopt;
    DiceReport r = build_report(cases);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_NE(r.warnings[0].find("21"), std::string::npos);
    EXPECT_THROW(build_report({CaseDice{}}), CardinalityError);
}
