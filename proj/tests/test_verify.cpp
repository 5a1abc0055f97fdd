#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fractal_avoid/configs.hpp"
#include "fractal_avoid/verify.hpp"

namespace {

using fav::BranchingSchedule;
using fav::coord_t;
using fav::GridKind;
using fav::GridSet;

GridSet line_set(int k, coord_t D, std::vector<coord_t> coords) {
    return GridSet(1, 1, k, GridKind::DQ, D, std::move(coords));
}

TEST(AssertAvoids, EmptyBadSetCountsOrderedDistinctTuples) {
    const GridSet X = line_set(1, 32, {1, 4, 9, 16, 25});
    const auto r2 = fav::assert_avoids(X, GridSet(1, 2, 1, GridKind::DQ, 32, {}), 2);
    EXPECT_TRUE(r2.passed());
    EXPECT_EQ(r2.tuples_checked, 5u * 4u);
    const auto r3 = fav::assert_avoids(X, GridSet(1, 3, 1, GridKind::DQ, 32, {}), 3);
    EXPECT_EQ(r3.tuples_checked, 5u * 4u * 3u);
}

TEST(AssertAvoids, PlantedViolationIsReported) {
    const GridSet X = line_set(1, 32, {1, 4, 9});
    const GridSet B(1, 2, 1, GridKind::DQ, 32, {4, 9, 5, 6});
    const auto r = fav::assert_avoids(X, B, 2);
    EXPECT_FALSE(r.passed());
    ASSERT_EQ(r.violation_count, 1u);
    EXPECT_EQ(r.violations.front(), (std::vector<coord_t>{4, 9}));
}

TEST(AssertAvoids, BudgetIsExplicit) {
    std::vector<coord_t> all;
    for (coord_t i = 0; i < 200; ++i) all.push_back(i);
    const GridSet X = line_set(1, 256, all);
    fav::VerifyOptions o;
    o.budget = 1000;
    EXPECT_THROW(fav::assert_avoids(X, GridSet(1, 2, 1, GridKind::DQ, 256, {}), 2, o), fav::BudgetError);
}

TEST(AssertAvoids, ThreadCountDoesNotChangeTheReport) {
    std::mt19937_64 gen(8);
    std::vector<coord_t> xs;
    for (coord_t i = 0; i < 64; ++i) {
        if (gen() % 2) xs.push_back(i);
    }
    std::set<std::vector<coord_t>> bad;
    while (bad.size() < 300) bad.insert({static_cast<coord_t>(gen() % 64), static_cast<coord_t>(gen() % 64)});
    std::vector<coord_t> flat;
    for (const auto& b : bad) flat.insert(flat.end(), b.begin(), b.end());
    const GridSet X = line_set(1, 64, xs);
    const GridSet B(1, 2, 1, GridKind::DQ, 64, flat);
    fav::VerifyOptions one;
    fav::VerifyOptions four;
    four.threads = 4;
    const auto a = fav::assert_avoids(X, B, 2, one);
    const auto b = fav::assert_avoids(X, B, 2, four);
    EXPECT_EQ(a.violation_count, b.violation_count);
    EXPECT_EQ(a.violations, b.violations);
    EXPECT_EQ(a.tuples_checked, b.tuples_checked);
}

TEST(AssertAvoids, OracleFormAgreesWithMaterializedCover) {
    fav::ZeroSetSpec z;
    z.lipschitz = std::sqrt(2.0);
    z.g = [](const double* x, double* out) { out[0] = x[0] + x[1] - 1; };
    const auto o = fav::zero_set_cover(z);
    const GridSet X = line_set(1, 32, {0, 3, 7, 12, 20, 25, 28, 31});
    const auto a = fav::assert_avoids(X, *o);
    const auto b = fav::assert_avoids(X, o->cover(1, 32), 2);
    EXPECT_EQ(a.violation_count, b.violation_count);
    EXPECT_GT(a.violation_count, 0u);
}

TEST(DifferenceCheck, VacuousAndPlanted) {
    const GridSet few = line_set(1, 10, {0, 5});
    EXPECT_TRUE(fav::difference_check(few).passed());
    EXPECT_EQ(fav::difference_check(few).tuples_checked, 0u);
    // 1 - 0 = 3 - 2.
    const GridSet ap = line_set(1, 16, {0, 1, 2, 3});
    const auto r = fav::difference_check(ap);
    EXPECT_FALSE(r.passed());
    // A set with distinct pairwise differences is clean.
    EXPECT_TRUE(fav::difference_check(line_set(1, 16, {0, 1, 3, 7})).passed());
}

TEST(DifferenceCheck, MatchesQuadrupleEnumeration) {
    std::mt19937_64 gen(12);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<coord_t> xs;
        for (coord_t i = 0; i < 40; ++i) {
            if (gen() % 4 == 0) xs.push_back(i);
        }
        std::uint64_t expected = 0;
        const std::size_t m = xs.size();
        for (std::size_t a = 0; a < m; ++a) {
            for (std::size_t b = a + 1; b < m; ++b) {
                for (std::size_t c = b; c < m; ++c) {
                    for (std::size_t d = c + 1; d < m; ++d) {
                        if (xs[b] - xs[a] == xs[d] - xs[c]) ++expected;
                    }
                }
            }
        }
        EXPECT_EQ(fav::difference_check(line_set(1, 40, xs)).violation_count, expected);
    }
}

TEST(SumsetCheck, EmptyAndPlanted) {
    const GridSet X = line_set(1, 16, {1, 3, 6});
    EXPECT_TRUE(fav::sumset_check(X, line_set(1, 16, {})).passed());
    // 3 + 6 = 9 lands on the cover cube 9.
    EXPECT_FALSE(fav::sumset_check(X, line_set(1, 16, {9})).passed());
    // 2 * 6 = 12: the x = y branch.
    EXPECT_FALSE(fav::sumset_check(line_set(1, 16, {6}), line_set(1, 16, {12})).passed());
    // Smallest sum cube is [2, 4] / 16 for x = y = 1; cube 15 is out of reach for 1 + 6.
    EXPECT_TRUE(fav::sumset_check(line_set(1, 16, {1, 6}), line_set(1, 16, {15})).passed());
}

TEST(IsoscelesCheck, VacuousAndDegenerateLine) {
    const auto line = fav::CurveSpec::parse("0 0\n1 0\n");
    EXPECT_TRUE(fav::isosceles_check(line_set(1, 64, {3, 40}), line).passed());
    // Equally spaced parameters on a line: the middle point is equidistant from the ends.
    EXPECT_FALSE(fav::isosceles_check(line_set(1, 64, {0, 20, 40}), line).passed());
    EXPECT_TRUE(fav::isosceles_check(line_set(1, 64, {0, 10, 40}), line).passed());
}

TEST(VerifyReportJson, RoundTrip) {
    const GridSet X = line_set(1, 32, {1, 4, 9});
    const GridSet B(1, 2, 1, GridKind::DQ, 32, {4, 9});
    const auto r = fav::assert_avoids(X, B, 2);
    const auto back = fav::verify_report_from_json(fav::to_json(r));
    EXPECT_EQ(back.check, r.check);
    EXPECT_EQ(back.violation_count, r.violation_count);
    EXPECT_EQ(back.violations, r.violations);
    EXPECT_EQ(back.tuples_checked, r.tuples_checked);
}

}  // namespace
