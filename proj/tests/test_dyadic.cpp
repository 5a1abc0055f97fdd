#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "fractal_avoid/dyadic.hpp"

namespace {

using fav::BranchingSchedule;
using fav::coord_t;
using fav::GridKind;
using fav::GridSet;

GridSet line_set(int k, coord_t D, std::vector<coord_t> coords) {
    std::sort(coords.begin(), coords.end());
    coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    return GridSet(1, 1, k, GridKind::DQ, D, std::move(coords));
}

TEST(Schedule, ConstantTwoDepthFiveGivesThirtyTwo) {
    fav::ScheduleSpec spec;
    spec.mode = fav::ScheduleSpec::Mode::Constant;
    spec.constant_N = 2;
    spec.depth = 5;
    const auto r = fav::make_schedule(spec);
    EXPECT_EQ(r.schedule.D(5), 32);
    EXPECT_EQ(r.schedule.depth(), 5);
}

TEST(Schedule, SubhyperdyadicSecondEntry) {
    fav::ScheduleSpec spec;
    spec.mode = fav::ScheduleSpec::Mode::Subhyperdyadic;
    spec.depth = 2;
    spec.psi = [](int k) { return k == 1 ? 1.0 : std::log2(static_cast<double>(k)) / k; };
    const auto r = fav::make_schedule(spec);
    // 2^{floor(2^{2 psi(2)})} = 2^{floor(2)} = 4.
    EXPECT_EQ(r.schedule.N(2), 4);
}

TEST(Schedule, RapidDecayRatiosMeetTheirBound) {
    fav::ScheduleSpec spec;
    spec.mode = fav::ScheduleSpec::Mode::RapidDecay;
    spec.depth = 4;
    spec.lower_bound = [](int, coord_t Dprev) { return std::max(4.0, std::pow(static_cast<double>(Dprev), 2.0)); };
    const auto r = fav::make_schedule(spec);
    ASSERT_EQ(r.growth.size(), 3u);
    for (double g : r.growth) EXPECT_GE(g, 2.0);
}

TEST(Schedule, RejectsBadEntries) {
    EXPECT_THROW(BranchingSchedule(1, {8}, {16}), fav::ScheduleError);
    EXPECT_THROW(BranchingSchedule(1, {1}, {1}), fav::ScheduleError);
    fav::ScheduleSpec spec;
    spec.mode = fav::ScheduleSpec::Mode::Explicit;
    spec.N = {8, 12};
    spec.depth = 2;
    EXPECT_THROW(fav::make_schedule(spec), fav::ScheduleError);
}

TEST(Schedule, BudgetCapsDenominator) {
    EXPECT_THROW(BranchingSchedule(1, {1 << 20, 1 << 20}, {2, 2}, 30), fav::BudgetError);
    const BranchingSchedule ok(1, {1 << 15, 1 << 15}, {2, 2}, 30);
    EXPECT_EQ(ok.D(2), coord_t{1} << 30);
}

TEST(Schedule, BudgetBitsReadFromEnvironment) {
    ::setenv("FRACTAL_AVOID_BUDGET_BITS", "20", 1);
    EXPECT_EQ(fav::default_budget_bits(), 20);
    ::setenv("FRACTAL_AVOID_BUDGET_BITS", "garbage", 1);
    EXPECT_EQ(fav::default_budget_bits(), fav::kDefaultBudgetBits);
    ::unsetenv("FRACTAL_AVOID_BUDGET_BITS");
    EXPECT_EQ(fav::default_budget_bits(), fav::kDefaultBudgetBits);
}

TEST(Children, LineOfThree) {
    // N = 3 is not a power of two; the calibration schedule disables that requirement.
    fav::ScheduleSpec spec;
    spec.mode = fav::ScheduleSpec::Mode::Constant;
    spec.constant_N = 3;
    spec.depth = 1;
    spec.require_power_of_two = false;
    const auto s = fav::make_schedule(spec).schedule;
    const std::vector<coord_t> root{0};
    const GridSet c = fav::children(root, 0, s);
    EXPECT_EQ(c, line_set(1, 3, {0, 1, 2}));
}

TEST(Children, SquareHasFourChildren) {
    const BranchingSchedule s(2, {2}, {2});
    const std::vector<coord_t> root{0, 0};
    EXPECT_EQ(fav::children(root, 0, s).size(), 4u);
}

TEST(Children, PastDepthIsBudgetError) {
    const BranchingSchedule s(1, {4}, {2});
    const std::vector<coord_t> q{1};
    EXPECT_THROW(fav::children(q, 1, s), fav::BudgetError);
}

TEST(Parent, FloorDivision) {
    // Powers of two only: N = 16 stands in for the decimal example.
    const BranchingSchedule s(1, {16}, {4});
    const std::vector<coord_t> q{7};
    EXPECT_EQ(fav::parent_of(q, 1, GridKind::DQ, s), std::vector<coord_t>{0});
    const BranchingSchedule s2(1, {4, 8}, {4, 4});
    const std::vector<coord_t> cell{13};
    // DR_2 coordinate 13 with M_2 = 4 lies in fine cube floor(13/4) = 3 of generation 1.
    EXPECT_EQ(fav::parent_of(cell, 2, GridKind::DR, s2), std::vector<coord_t>{3});
    EXPECT_THROW(fav::parent_of(q, 0, GridKind::DQ, s), std::invalid_argument);
}

TEST(Intermediary, CountsAndDegenerateCase) {
    const BranchingSchedule s(1, {8}, {4});
    const std::vector<coord_t> root{0};
    const GridSet cells = fav::intermediary_cells(root, 0, s);
    ASSERT_EQ(cells.size(), 4u);
    std::set<coord_t> covered;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const GridSet fine = fav::cell_children(cells[i], 1, s);
        EXPECT_EQ(fine.size(), 2u);
        for (std::size_t j = 0; j < fine.size(); ++j) covered.insert(fine[j][0]);
    }
    EXPECT_EQ(covered.size(), 8u);

    const BranchingSchedule eq(1, {8}, {8});
    const GridSet same = fav::intermediary_cells(root, 0, eq);
    EXPECT_EQ(same.data(), fav::children(root, 0, eq).data());
}

class Refinement : public ::testing::TestWithParam<int> {};

TEST_P(Refinement, ParentIsLeftInverseOfChildren) {
    const int d = GetParam();
    const BranchingSchedule s(d, {4, 8}, {2, 4});
    const GridSet level1 = fav::children(fav::root_set(d), s);
    for (std::size_t i = 0; i < level1.size(); ++i) {
        const GridSet kids = fav::children(level1[i], 1, s);
        EXPECT_EQ(kids.size(), static_cast<std::size_t>(std::pow(8, d)));
        const GridSet cells = fav::intermediary_cells(level1[i], 1, s);
        EXPECT_EQ(cells.size(), static_cast<std::size_t>(std::pow(4, d)));
        for (std::size_t j = 0; j < kids.size(); ++j) {
            const auto p = fav::parent_of(kids[j], 2, GridKind::DQ, s);
            EXPECT_TRUE(std::equal(p.begin(), p.end(), level1[i].begin()));
            const auto c = fav::cell_of(kids[j], 2, s);
            EXPECT_TRUE(cells.contains(c));
            EXPECT_EQ(fav::cell_children(c, 2, s).size(), static_cast<std::size_t>(std::pow(2, d)));
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Dimensions, Refinement, ::testing::Values(1, 2));

TEST(Thicken, BoundaryPointMeetsBothNeighbours) {
    const BranchingSchedule s(1, {4}, {4});
    EXPECT_EQ(fav::thicken_points({{0.5}}, 1, s), line_set(1, 4, {1, 2}));
    EXPECT_EQ(fav::thicken_points({{0.3}}, 1, s), line_set(1, 4, {1}));
    EXPECT_TRUE(fav::thicken_points({}, 1, s).empty());
}

TEST(Thicken, FullCubeGivesWholeGrid) {
    const BranchingSchedule s(2, {4, 2}, {4, 2});
    const GridSet root = fav::root_set(2);
    EXPECT_EQ(fav::thicken(root, 2, s).size(), 64u);
}

TEST(Thicken, IdempotentAndMonotoneOnRandomSets) {
    const BranchingSchedule s(1, {4, 4, 4}, {4, 4, 4});
    std::mt19937_64 gen(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<coord_t> a;
        std::vector<coord_t> b;
        for (coord_t x = 0; x < 16; ++x) {
            if (gen() % 3 == 0) {
                a.push_back(x);
                b.push_back(x);
            } else if (gen() % 2 == 0) {
                b.push_back(x);
            }
        }
        const GridSet E = line_set(2, 16, a);
        const GridSet F = line_set(2, 16, b);
        const GridSet tE = fav::thicken(E, 3, s);
        EXPECT_EQ(fav::thicken(tE, 3, s), tE);
        EXPECT_TRUE(fav::is_subset(tE, fav::thicken(F, 3, s)));
        EXPECT_EQ(tE.size(), 4 * E.size());
    }
}

TEST(Product, SmallCases) {
    const GridSet a = line_set(1, 4, {0, 1});
    const GridSet b = line_set(1, 4, {2});
    const GridSet p = fav::product({a, b});
    EXPECT_EQ(p.data(), (std::vector<coord_t>{0, 2, 1, 2}));
    EXPECT_EQ(p.n(), 2);
    EXPECT_TRUE(fav::product({a, GridSet::empty_like(a)}).empty());
    const GridSet c = line_set(1, 4, {0, 1, 3});
    EXPECT_EQ(fav::product({a, b, c}).size(), 2u * 1u * 3u);
    EXPECT_THROW(fav::product({a, line_set(2, 16, {0})}), std::invalid_argument);
}

TEST(Nondiagonal, SmallCases) {
    const GridSet B(1, 2, 1, GridKind::DQ, 4, {0, 0, 0, 1});
    const GridSet f = fav::nondiagonal_filter(B, 2);
    EXPECT_EQ(f.data(), (std::vector<coord_t>{0, 1}));
    const GridSet diag(1, 2, 1, GridKind::DQ, 4, {0, 0, 1, 1, 3, 3});
    EXPECT_TRUE(fav::nondiagonal_filter(diag, 2).empty());
}

TEST(Nondiagonal, MatchesPerTupleScanOnRandomSets) {
    // Independent oracle: compare each pair of d-blocks directly.
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 40; ++trial) {
        const int d = 1 + static_cast<int>(gen() % 2);
        const int n = 2 + static_cast<int>(gen() % 2);
        const coord_t D = 4;
        std::set<std::vector<coord_t>> cubes;
        for (int i = 0; i < 60; ++i) {
            std::vector<coord_t> c(static_cast<std::size_t>(d * n));
            for (auto& x : c) x = static_cast<coord_t>(gen() % D);
            cubes.insert(c);
        }
        std::vector<coord_t> flat;
        std::vector<coord_t> expected;
        for (const auto& c : cubes) {
            flat.insert(flat.end(), c.begin(), c.end());
            bool distinct = true;
            for (int i = 0; i < n && distinct; ++i) {
                for (int j = i + 1; j < n && distinct; ++j) {
                    bool same = true;
                    for (int t = 0; t < d; ++t) same = same && c[static_cast<std::size_t>(i * d + t)] == c[static_cast<std::size_t>(j * d + t)];
                    distinct = !same;
                }
            }
            if (distinct) expected.insert(expected.end(), c.begin(), c.end());
        }
        const GridSet B(d, n, 1, GridKind::DQ, D, flat);
        const GridSet f = fav::nondiagonal_filter(B, n);
        EXPECT_EQ(f.data(), expected);
        EXPECT_TRUE(fav::is_subset(f, B));
        EXPECT_EQ(fav::nondiagonal_filter(f, n), f);
    }
}

TEST(GridSetValue, NormalizesOrderAndRejectsOutOfRange) {
    const GridSet g(1, 2, 1, GridKind::DQ, 4, {2, 1, 0, 3, 2, 1});
    EXPECT_EQ(g.data(), (std::vector<coord_t>{0, 3, 2, 1}));
    EXPECT_THROW(GridSet(1, 1, 1, GridKind::DQ, 4, {4}), std::out_of_range);
    EXPECT_THROW(GridSet(1, 2, 1, GridKind::DQ, 4, {1, 2, 3}), std::invalid_argument);
}

TEST(GridSetFormat, RoundTripIsBitExact) {
    const GridSet g(2, 2, 3, GridKind::DR, 64, {0, 1, 2, 3, 5, 0, 63, 1, 7, 7, 7, 8});
    const std::string text = fav::gridset_to_string(g);
    EXPECT_EQ(text.substr(0, text.find('\n')), "gridset v1 d=2 n=2 k=3 kind=DR D=64");
    const GridSet back = fav::gridset_from_string(text);
    EXPECT_EQ(back, g);
    EXPECT_EQ(fav::gridset_to_string(back), text);
}

TEST(GridSetFormat, MalformedInputIsFormatError) {
    EXPECT_THROW(fav::gridset_from_string("gridset v2 d=1 n=1 k=0 kind=DQ D=1\n"), fav::FormatError);
    EXPECT_THROW(fav::gridset_from_string("gridset v1 d=1 n=1 k=1 kind=DQ D=4\n3\n1\n"), fav::FormatError);
    EXPECT_THROW(fav::gridset_from_string("gridset v1 d=1 n=1 k=1 kind=DQ D=4\n1 2\n"), fav::FormatError);
}

}  // namespace
