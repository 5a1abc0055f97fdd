#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "fractal_avoid/construct.hpp"
#include "fractal_avoid/verify.hpp"

namespace {

using fav::BranchingSchedule;
using fav::coord_t;
using fav::GridKind;
using fav::GridSet;

fav::OraclePtr linear_oracle(double a, double b, double c) {
    fav::ZeroSetSpec z;
    z.lipschitz = std::hypot(a, b);
    z.g = [a, b, c](const double* x, double* out) { out[0] = a * x[0] + b * x[1] + c; };
    return fav::zero_set_cover(z);
}

// g = 1 has no zeros, so every cover is empty.
fav::OraclePtr empty_oracle() {
    fav::ZeroSetSpec z;
    z.lipschitz = 1;
    z.g = [](const double*, double* out) { out[0] = 1; };
    return fav::zero_set_cover(z);
}

// Every cube of `fine` has its parent in `coarse`.
bool refines(const GridSet& fine, const GridSet& coarse, coord_t ratio) {
    const auto& c = coarse.data();
    const std::set<coord_t> parents(c.begin(), c.end());
    for (coord_t v : fine.data()) {
        if (!parents.count(v / ratio)) return false;
    }
    return true;
}

TEST(DefaultEps, Values) {
    EXPECT_DOUBLE_EQ(fav::default_eps(1, 1, 2, 1.0), 0.25);
    EXPECT_DOUBLE_EQ(fav::default_eps(5, 1, 2, 1.0), 1.0 / 6);
}

// Largest power of two strictly below the target that divides N.
coord_t intermediary_oracle(coord_t N, int d, int n, double s, double eps, double C) {
    const double target = std::pow(static_cast<double>(N) / C, (d * n - s - eps) / (d * (n - 1)));
    coord_t best = 1;
    for (coord_t p = 1; p <= N; p *= 2) {
        if (static_cast<double>(p) < target * (1 - 1e-12) && N % p == 0) best = p;
    }
    return best;
}

TEST(ChooseIntermediary, Values) {
    EXPECT_EQ(fav::choose_intermediary(64, 1, 2, 1.0, 0.0, 4.0), 8);
    EXPECT_EQ(fav::choose_intermediary(64, 1, 2, 1.0, 0.1, 4.0), 8);
    EXPECT_EQ(fav::choose_intermediary(4, 1, 2, 1.0, 0.25, 4.0), 1);
    EXPECT_EQ(fav::choose_intermediary(2, 1, 2, 1.0, 0.25, 4.0), 1);
    EXPECT_THROW(fav::choose_intermediary(64, 1, 2, 2.0, 0.1, 4.0), std::invalid_argument);
}

TEST(ChooseIntermediary, MatchesPowerScan) {
    for (int a = 1; a <= 30; ++a) {
        const coord_t N = coord_t{1} << a;
        for (double s : {0.5, 1.0, 1.5}) {
            for (double eps : {0.05, 0.2}) {
                EXPECT_EQ(fav::choose_intermediary(N, 1, 2, s, eps, 4.0), intermediary_oracle(N, 1, 2, s, eps, 4.0))
                    << N << " " << s << " " << eps;
            }
        }
    }
}

TEST(StrongCover, EmptyOracleGivesMinimalDecaySchedule) {
    fav::StrongCoverOptions o;
    o.depth = 2;
    const auto plan = fav::build_strong_cover({empty_oracle()}, o);
    // eps = 1/4 and C = 4: N_1 = 4, then N_2 >= 4^4.
    EXPECT_EQ(plan.schedule.N(1), 4);
    EXPECT_EQ(plan.schedule.N(2), 256);
    EXPECT_EQ(plan.schedule.M(1), 1);
    EXPECT_EQ(plan.schedule.M(2), 16);
    EXPECT_EQ(plan.bad_counts, (std::vector<long long>{0, 0}));
    for (const auto& c : plan.decay) EXPECT_TRUE(c.holds) << c.name;
    for (const auto& c : plan.sparsity) EXPECT_TRUE(c.holds) << c.name;
    EXPECT_FALSE(plan.fixed_schedule);
}

TEST(StrongCover, RoundRobinAndSparsity) {
    const auto band = linear_oracle(1, 1, -1);
    fav::StrongCoverOptions o;
    o.depth = 2;
    const auto plan = fav::build_strong_cover({band, empty_oracle()}, o);
    EXPECT_EQ(plan.interleave, (std::vector<std::size_t>{0, 1}));
    const coord_t N1 = plan.schedule.N(1);
    // The anti-diagonal cover grows like 7 D, so N_1^{1/4} must pass about 7.
    EXPECT_EQ(N1, 4096);
    EXPECT_EQ(plan.bad_counts[0], static_cast<long long>(band->cover_count(1, N1)));
    EXPECT_LE(static_cast<double>(plan.bad_counts[0]), std::pow(static_cast<double>(N1), 1.25));
    EXPECT_GT(static_cast<double>(band->cover_count(1, N1 / 2)), std::pow(static_cast<double>(N1 / 2), 1.25));
    EXPECT_EQ(plan.bad_counts[1], 0);
    for (const auto& c : plan.decay) EXPECT_TRUE(c.holds) << c.name;

    o.budget_bits = 20;
    EXPECT_THROW(fav::build_strong_cover({band, empty_oracle()}, o), fav::BudgetError);
    o.budget_bits = 62;
    o.eps = {0.2, 0.3};
    EXPECT_THROW(fav::build_strong_cover({band, empty_oracle()}, o), std::invalid_argument);
}

fav::AvoidParams main_params(std::uint64_t seed) {
    fav::AvoidParams p;
    p.seed = seed;
    return p;
}

TEST(IterateMain, EmptyCoverKeepsProductOfM) {
    const BranchingSchedule s(1, {16, 256}, {4, 16});
    const std::vector<fav::OraclePtr> oracles{empty_oracle()};
    auto st = fav::initial_state(fav::fixed_plan(oracles, s));
    fav::iterate_main(st, oracles, main_params(3), 2);
    ASSERT_EQ(st.generation(), 2);
    EXPECT_EQ(st.X[1].size(), 4u);
    EXPECT_EQ(st.X[2].size(), 64u);
    EXPECT_TRUE(refines(st.X[1], st.X[0], 16));
    EXPECT_TRUE(refines(st.X[2], st.X[1], 256));
    EXPECT_THROW(fav::iterate_main(st, oracles, main_params(3), 1), fav::ScheduleError);
}

TEST(IterateMain, AntiDiagonalIsAvoided) {
    const BranchingSchedule s(1, {64, 64}, {8, 8});
    const auto band = linear_oracle(1, 1, -1);
    const std::vector<fav::OraclePtr> oracles{band};
    auto st = fav::initial_state(fav::fixed_plan(oracles, s));
    fav::iterate_main(st, oracles, main_params(11), 2);
    EXPECT_TRUE(refines(st.X[1], st.X[0], 64));
    EXPECT_TRUE(refines(st.X[2], st.X[1], 64));
    // One cell per parent survives selection; colliding cubes are then deleted.
    EXPECT_EQ(st.X[1].size(), 8u - st.reports[0].deleted);
    EXPECT_EQ(st.X[2].size(), st.X[1].size() * 8u - st.reports[1].deleted);
    EXPECT_GE(st.reports[1].min_kept, 1u);
    EXPECT_TRUE(fav::assert_avoids(st.X[2], *band).passed());
    for (const auto& t : fav::transport_checks(st, oracles)) EXPECT_EQ(t.violations, 0u) << t.generation;
    // Fixed plans record the realized bad counts.
    EXPECT_GE(st.plan.bad_counts[1], 0);
    EXPECT_EQ(st.plan.sparsity.size(), 2u);
    EXPECT_EQ(st.reports.size(), 2u);
}

TEST(IterateMain, SameSeedSameSets) {
    const BranchingSchedule s(1, {64, 64}, {8, 8});
    const std::vector<fav::OraclePtr> oracles{linear_oracle(1, 1, -1)};
    auto a = fav::initial_state(fav::fixed_plan(oracles, s));
    auto b = fav::initial_state(fav::fixed_plan(oracles, s));
    fav::iterate_main(a, oracles, main_params(5), 2);
    fav::iterate_main(b, oracles, main_params(5), 2);
    EXPECT_EQ(a.X, b.X);
}

class KeletiQueues : public ::testing::TestWithParam<fav::KeletiQueue> {};

TEST_P(KeletiQueues, CountLawAndDifferences) {
    const BranchingSchedule s(1, {20, 40, 80}, {2, 4, 8});
    const auto st = fav::iterate_keleti(s, 3, GetParam());
    ASSERT_EQ(st.X.size(), 4u);
    // Each step keeps 2 of every 20 subintervals: |X_k| = D_k / 10^k.
    coord_t pow10 = 1;
    for (int k = 1; k <= 3; ++k) {
        pow10 *= 10;
        EXPECT_EQ(static_cast<coord_t>(st.X[static_cast<std::size_t>(k)].size()), s.D(k) / pow10) << k;
    }
    EXPECT_EQ(st.processed.size(), 3u);
    EXPECT_TRUE(fav::difference_check(st.X.back(), st.processed, s).passed());
}

INSTANTIATE_TEST_SUITE_P(BothQueues, KeletiQueues,
                         ::testing::Values(fav::KeletiQueue::Literal, fav::KeletiQueue::KeptOnly));

TEST(IterateKeleti, QueueOrder) {
    const BranchingSchedule s(1, {20, 40, 80}, {2, 4, 8});
    const auto lit = fav::iterate_keleti(s, 3, fav::KeletiQueue::Literal);
    EXPECT_EQ(lit.queue_sizes, (std::vector<std::uint64_t>{20, 819, 64818}));
    EXPECT_EQ(lit.processed[1].generation, 1);
    EXPECT_EQ(lit.processed[1].index, 0);
    EXPECT_EQ(lit.processed[2].index, 1);
    const auto kept = fav::iterate_keleti(s, 3, fav::KeletiQueue::KeptOnly);
    EXPECT_EQ(kept.queue_sizes, (std::vector<std::uint64_t>{2, 9, 72}));
    EXPECT_EQ(kept.processed[1].index, 9);
    EXPECT_EQ(kept.processed[2].index, 19);
    EXPECT_THROW(fav::iterate_keleti(s, 4), fav::ScheduleError);
}

TEST(IterateFp, AntiDiagonalCertificate) {
    const BranchingSchedule s(1, {2, 256}, {2, 4});
    const auto band = linear_oracle(1, 1, -1);
    const auto st = fav::iterate_fp(*band, s, 2);
    // Generation 1: two cubes, two ordered distinct pairs.
    EXPECT_EQ(st.enqueued.front(), 2u);
    ASSERT_EQ(st.processed.size(), 1u);
    EXPECT_TRUE(st.processed[0].applied);
    EXPECT_EQ(st.processed[0].tuple.cubes, (std::vector<coord_t>{0, 1}));
    const auto cert = fav::fp_certificate(st, *band);
    EXPECT_TRUE(cert.passed());
    EXPECT_GT(cert.tuples_checked, 0u);
    EXPECT_EQ(st.queue_remaining, 1u + st.enqueued.back());
}

TEST(IterateFp, NoZerosKeepsOneCellEach) {
    const BranchingSchedule s(1, {2, 256}, {2, 4});
    const auto st = fav::iterate_fp(*empty_oracle(), s, 2);
    ASSERT_EQ(st.X.size(), 3u);
    EXPECT_EQ(st.X[2].size(), 8u);
    EXPECT_TRUE(refines(st.X[2], st.X[1], 256));
    // 8 cubes give 8 * 7 ordered distinct pairs.
    EXPECT_EQ(st.offered.back(), 56.0);
    EXPECT_EQ(st.enqueued.back(), 56u);
    EXPECT_FALSE(st.cap_reached);
}

TEST(IterateFp, QueueCapIsRecorded) {
    const BranchingSchedule s(1, {2, 256}, {2, 4});
    fav::FpOptions o;
    o.queue_cap = 20;
    const auto st = fav::iterate_fp(*empty_oracle(), s, 2, o);
    EXPECT_TRUE(st.cap_reached);
    EXPECT_EQ(st.queue_remaining, 20u);
}

TEST(TargetDimension, Rules) {
    fav::DimensionTarget t;
    t.d = 1;
    t.n = 2;
    t.s = 1;
    EXPECT_DOUBLE_EQ(fav::target_dimension(t), 1.0);
    t.n = 3;
    t.s = 2;
    EXPECT_DOUBLE_EQ(fav::target_dimension(t), 0.5);
    t.n = 2;
    t.s = 2;
    EXPECT_DOUBLE_EQ(fav::target_dimension(t), 0.0);
    t.kind = fav::DimensionTarget::Kind::Sumset;
    t.t = 0;
    EXPECT_DOUBLE_EQ(fav::target_dimension(t), 1.0);
    t.kind = fav::DimensionTarget::Kind::Isosceles;
    EXPECT_DOUBLE_EQ(fav::target_dimension(t), 0.5);
}

TEST(DimensionReport, ShortcutSkipsTheMeasure) {
    const BranchingSchedule s(1, {4}, {2});
    fav::DimensionTarget t;
    t.s = 2;
    const auto r = fav::dimension_report({fav::root_set(1), GridSet(1, 1, 1, GridKind::DQ, 4, {0, 2})}, s, t);
    EXPECT_TRUE(r.empty_set_shortcut);
    EXPECT_EQ(r.target_rule, "s = dn");
}

}  // namespace
