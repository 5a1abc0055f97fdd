#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fractal_avoid/configs.hpp"

namespace {

using fav::coord_t;
using fav::GridKind;
using fav::GridSet;

constexpr double kPi = 3.14159265358979323846;

fav::ZeroSetSpec linear_zero_set(double a, double b, double c) {
    fav::ZeroSetSpec z;
    z.d = 1;
    z.n = 2;
    z.m = 1;
    z.lipschitz = std::hypot(a, b);
    z.g = [a, b, c](const double* x, double* out) { out[0] = a * x[0] + b * x[1] + c; };
    return z;
}

// Min over the four corners of |a x + b y + c| for the cube (i, j) at denominator D.
std::uint64_t corner_scan_count(double a, double b, double c, coord_t D) {
    const double thr = std::hypot(a, b) * std::sqrt(2.0) / static_cast<double>(D);
    std::uint64_t count = 0;
    for (coord_t i = 0; i < D; ++i) {
        for (coord_t j = 0; j < D; ++j) {
            double best = INFINITY;
            for (int ci = 0; ci < 2; ++ci) {
                for (int cj = 0; cj < 2; ++cj) {
                    const double x = static_cast<double>(i + ci) / static_cast<double>(D);
                    const double y = static_cast<double>(j + cj) / static_cast<double>(D);
                    best = std::min(best, std::abs(a * x + b * y + c));
                }
            }
            if (best <= thr) ++count;
        }
    }
    return count;
}

TEST(ExplicitCover, EmptyAndReplay) {
    const auto none = fav::explicit_cover(1, 2, 0.0, {});
    EXPECT_TRUE(none->cover(3, 8).empty());

    const GridSet g1(1, 1, 1, GridKind::DQ, 4, {2});
    const GridSet g2(1, 1, 2, GridKind::DQ, 16, {9});
    const auto single = fav::explicit_cover(1, 1, 0.0, {{1, g1}, {2, g2}});
    EXPECT_EQ(single->cover(1, 4), g1);
    EXPECT_EQ(fav::gridset_to_string(single->cover(2, 16)), fav::gridset_to_string(g2));
    EXPECT_EQ(single->cover(2, 16).size(), 1u);
    EXPECT_EQ(single->s(), 0.0);
    EXPECT_TRUE(single->cover(3, 64).empty());
}

TEST(ZeroSetCover, DiagonalBandCount) {
    const auto o = fav::zero_set_cover(linear_zero_set(1, -1, 0));
    EXPECT_EQ(o->s(), 1.0);
    for (coord_t D : {8, 16, 32, 64}) {
        const std::uint64_t count = o->cover(1, D).size();
        // Corners of (i, j) give |i - j| - 1 as the smallest |x - y| in units of 1/D; the
        // threshold is sqrt(2) * sqrt(2) = 2 units, so |i - j| <= 3.
        EXPECT_EQ(count, static_cast<std::uint64_t>(7 * D - 12)) << "D=" << D;
        EXPECT_EQ(count, corner_scan_count(1, -1, 0, D));
    }
}

TEST(ZeroSetCover, AntiDiagonalMatchesCornerScan) {
    const auto o = fav::zero_set_cover(linear_zero_set(1, 1, -1));
    const GridSet cov = o->cover(1, 8);
    EXPECT_EQ(cov.size(), corner_scan_count(1, 1, -1, 8));
    // Pairs with i + j in [4, 10]: 5 + 6 + 7 + 8 + 7 + 6 + 5.
    EXPECT_EQ(cov.size(), 44u);
}

TEST(ZeroSetCover, NoZerosGivesEmptyCover) {
    fav::ZeroSetSpec z;
    z.lipschitz = 0.5;
    z.g = [](const double*, double* out) { out[0] = 1.0; };
    EXPECT_TRUE(fav::zero_set_cover(z)->cover(1, 64).empty());
}

TEST(ZeroSetCover, MissingLipschitzIsRejected) {
    fav::ZeroSetSpec z;
    z.g = [](const double* x, double* out) { out[0] = x[0]; };
    EXPECT_THROW(fav::zero_set_cover(z), std::invalid_argument);
}

TEST(ZeroSetCover, ContainsSampledZeros) {
    const auto o = fav::zero_set_cover(linear_zero_set(1, 1, -1));
    const fav::BranchingSchedule s(1, {32}, {32});
    const GridSet cov = o->cover(1, 32);
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
        const double x = u(gen);
        const GridSet cubes = fav::thicken_points({{x, 1.0 - x}}, 1, s, 2);
        EXPECT_TRUE(fav::is_subset(cubes, cov)) << x;
    }
}

TEST(ZeroSetCover, RestrictionMatchesFullCover) {
    const auto o = fav::zero_set_cover(linear_zero_set(2, -1, 0.25));
    const GridSet cand(1, 1, 1, GridKind::DQ, 32, {0, 3, 4, 9, 10, 11, 20, 31});
    const GridSet within = o->cover_within(1, 32, cand);
    const GridSet full = o->cover(1, 32);
    std::vector<coord_t> expected;
    for (std::size_t i = 0; i < full.size(); ++i) {
        if (cand.contains(full[i].subspan(0, 1)) && cand.contains(full[i].subspan(1, 1))) {
            expected.insert(expected.end(), full[i].begin(), full[i].end());
        }
    }
    EXPECT_EQ(within.data(), expected);
}

// Parents of the finer cover lie within one cube of the coarser cover.
void expect_scale_coherent(const fav::CoverOracle& o, coord_t D) {
    const GridSet fine = o.cover(2, 2 * D);
    const GridSet coarse = o.cover(1, D);
    const int dim = o.d() * o.n();
    for (std::size_t i = 0; i < fine.size(); ++i) {
        std::vector<coord_t> p(fine[i].begin(), fine[i].end());
        for (auto& c : p) c /= 2;
        bool near = false;
        for (std::size_t j = 0; j < coarse.size() && !near; ++j) {
            bool ok = true;
            for (int t = 0; t < dim; ++t) ok = ok && std::abs(coarse[j][static_cast<std::size_t>(t)] - p[static_cast<std::size_t>(t)]) <= 1;
            near = ok;
        }
        ASSERT_TRUE(near) << "fine cube " << i;
    }
}

TEST(CoverProperties, ScaleCoherence) {
    expect_scale_coherent(*fav::zero_set_cover(linear_zero_set(1, 1, -1)), 16);
    expect_scale_coherent(*fav::sumset_cover(fav::point_set_oracle(1, {{1.0}})), 16);
    const auto curve = fav::CurveSpec::sample([](double t) { return std::vector<double>{0.25 * t * t}; }, 16);
    expect_scale_coherent(*fav::isosceles_cover(curve), 8);
}

TEST(CoverProperties, SparsityWithinConstantFactor) {
    const auto band = fav::zero_set_cover(linear_zero_set(1, -1, 0));
    const auto sum = fav::sumset_cover(fav::point_set_oracle(1, {{1.0}}));
    for (coord_t D : {64, 256, 1024}) {
        const double logD = std::log(static_cast<double>(D));
        // A count c * D^s has ratio s + log(c) / log(D); both oracles stay below c = 8.
        EXPECT_LE(std::log(static_cast<double>(band->cover(1, D).size())) / logD, band->s() + std::log(8.0) / logD);
        EXPECT_LE(std::log(static_cast<double>(sum->cover(1, D).size())) / logD, sum->s() + std::log(8.0) / logD);
    }
}

TEST(CurveSpecTest, LipschitzIsMaxSegmentSlope) {
    const auto c = fav::CurveSpec::parse("0 0\n0.5 0.25\n1 0\n");
    EXPECT_DOUBLE_EQ(c.lipschitz(), 0.5);
    EXPECT_EQ(c.codim(), 1);
    EXPECT_DOUBLE_EQ(c.eval(0.25)[0], 0.125);
    const auto sine = fav::CurveSpec::sample(
        [](double t) { return std::vector<double>{0.5 / (2 * kPi) * std::sin(2 * kPi * t)}; }, 64);
    EXPECT_LE(sine.lipschitz(), 0.5);
    EXPECT_GT(sine.lipschitz(), 0.49);
}

TEST(IsoscelesCover, LineCoversArithmeticMidpoints) {
    const auto line = fav::CurveSpec::parse("0 0\n1 0\n");
    const auto o = fav::isosceles_cover(line);
    EXPECT_EQ(o->s(), 2.0);
    const coord_t D = 16;
    const GridSet cov = o->cover(1, D);
    for (coord_t a = 0; a < D; ++a) {
        for (coord_t b = 0; b < D; ++b) {
            if ((a + b) % 2 != 0) continue;
            const std::vector<coord_t> t{a, b, (a + b) / 2};
            EXPECT_TRUE(cov.contains(t)) << a << "," << b;
            EXPECT_TRUE(o->covers(1, D, t));
        }
    }
}

TEST(IsoscelesCover, RejectsSteepCurve) {
    const auto steep = fav::CurveSpec::parse("0 0\n1 1\n");
    EXPECT_THROW(fav::isosceles_cover(steep), fav::HypothesisError);
}

TEST(IsoscelesCover, PredicateCountAndRestrictionAgree) {
    const auto curve = fav::CurveSpec::sample([](double t) { return std::vector<double>{0.3 * t * (1 - t)}; }, 32);
    const auto o = fav::isosceles_cover(curve);
    const coord_t D = 16;
    const GridSet cov = o->cover(1, D);
    EXPECT_EQ(o->cover_count(1, D), cov.size());
    std::uint64_t predicate_hits = 0;
    for (coord_t a = 0; a < D; ++a) {
        for (coord_t b = 0; b < D; ++b) {
            for (coord_t c = 0; c < D; ++c) {
                const std::vector<coord_t> t{a, b, c};
                if (o->covers(1, D, t)) ++predicate_hits;
            }
        }
    }
    EXPECT_EQ(predicate_hits, cov.size());
    const GridSet cand(1, 1, 1, GridKind::DQ, D, {1, 2, 5, 8, 13});
    const GridSet within = o->cover_within(1, D, cand);
    for (std::size_t i = 0; i < within.size(); ++i) EXPECT_TRUE(cov.contains(within[i]));
    std::uint64_t restricted = 0;
    for (std::size_t i = 0; i < cov.size(); ++i) {
        bool inside = true;
        for (int t = 0; t < 3; ++t) inside = inside && cand.contains(cov[i].subspan(static_cast<std::size_t>(t), 1));
        restricted += inside ? 1 : 0;
    }
    EXPECT_EQ(within.size(), restricted);
}

TEST(SumsetCover, EmptyY) {
    const auto y = fav::explicit_cover(1, 1, 0.0, {});
    EXPECT_TRUE(fav::sumset_cover(y)->cover(2, 32).empty());
}

TEST(SumsetCover, PointYIndexArithmetic) {
    const auto o = fav::sumset_cover(fav::point_set_oracle(1, {{1.0}}));
    EXPECT_EQ(o->s(), 1.0);
    EXPECT_EQ(o->n(), 2);
    for (coord_t D : {16, 64, 256}) {
        // Y's cover is the last cube D - 1. A pair is covered when x + y or 2y lands in
        // [D - 3, D], the closed sum cube meeting cube D - 1.
        std::uint64_t expected = 0;
        for (coord_t x = 0; x < D; ++x) {
            for (coord_t y = 0; y < D; ++y) {
                const bool c1 = x + y >= D - 3 && x + y <= D;
                const bool c2 = 2 * y >= D - 3 && 2 * y <= D;
                if (c1 || c2) ++expected;
            }
        }
        EXPECT_EQ(o->cover(1, D).size(), expected) << "D=" << D;
    }
    EXPECT_EQ(o->cover(1, 16).size(), 84u);
}

TEST(SumsetCover, RejectsPairOracle) {
    EXPECT_THROW(fav::sumset_cover(fav::translate_config()), std::invalid_argument);
}

TEST(TranslateConfig, EqualGapsCoveredLargeGapsNot) {
    const auto o = fav::translate_config();
    const std::vector<coord_t> ap{0, 5, 10, 15};
    EXPECT_TRUE(o->covers(1, 40, ap));
    const std::vector<coord_t> far{0, 5, 10, 18};
    EXPECT_FALSE(o->covers(1, 40, far));
}

TEST(TranslateConfig, AgreesWithQuadrupleEnumeration) {
    const auto o = fav::translate_config();
    const coord_t D = 40;
    const GridSet cov = o->cover(1, D);
    std::uint64_t expected = 0;
    std::size_t pos = 0;
    bool order_ok = true;
    for (coord_t a = 0; a < D; ++a) {
        for (coord_t b = 0; b < D; ++b) {
            for (coord_t c = 0; c < D; ++c) {
                for (coord_t e = 0; e < D; ++e) {
                    if (std::abs((e - c) - (b - a)) > 2) continue;
                    ++expected;
                    const std::vector<coord_t> t{a, b, c, e};
                    order_ok = order_ok && pos < cov.size() && std::equal(t.begin(), t.end(), cov[pos].begin());
                    ++pos;
                }
            }
        }
    }
    EXPECT_EQ(cov.size(), expected);
    EXPECT_EQ(o->cover_count(1, D), expected);
    EXPECT_TRUE(order_ok);
}

}  // namespace
