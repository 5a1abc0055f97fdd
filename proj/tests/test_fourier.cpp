#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "fractal_avoid/fourier.hpp"

namespace {

using fav::BranchingSchedule;
using fav::coord_t;
using fav::cplx;
using fav::GridKind;
using fav::GridSet;

constexpr long double kTwoPi = 6.283185307179586476925286766559L;

GridSet line_set(int k, coord_t D, std::vector<coord_t> coords) {
    return GridSet(1, 1, k, GridKind::DQ, D, std::move(coords));
}

GridSet full_line(int k, coord_t D) {
    std::vector<coord_t> all;
    for (coord_t i = 0; i < D; ++i) all.push_back(i);
    return line_set(k, D, all);
}

// sum_j w_j exp(-2 pi i m a_j / D) in long double, phase reduced mod D first.
cplx direct_sum(std::int64_t m, const std::vector<coord_t>& atoms, const std::vector<double>& w, coord_t D) {
    long double re = 0, im = 0;
    for (std::size_t j = 0; j < atoms.size(); ++j) {
        const auto r = static_cast<__int128>(m) * atoms[j] % D;
        const long double ang = -kTwoPi * static_cast<long double>(r) / static_cast<long double>(D);
        re += w[j] * std::cos(ang);
        im += w[j] * std::sin(ang);
    }
    return {static_cast<double>(re), static_cast<double>(im)};
}

// (1 - e^{-2 pi i m / D}) / (2 pi i m / D), and 1 at m = 0.
cplx box_transform(std::int64_t m, coord_t D) {
    if (m == 0) return 1;
    const long double x = kTwoPi * static_cast<long double>(m) / static_cast<long double>(D);
    const std::complex<long double> num(1 - std::cos(x), std::sin(x));
    const std::complex<long double> den(0, x);
    const auto v = num / den;
    return {static_cast<double>(v.real()), static_cast<double>(v.imag())};
}

TEST(FourierCoeff, FullGridAndSingleAtom) {
    const auto full = fav::measure_of_set(full_line(3, 8));
    for (std::int64_t m = -20; m <= 20; ++m) {
        EXPECT_NEAR(std::abs(fav::fourier_coeff(m, full)), m % 8 == 0 ? 1.0 : 0.0, 1e-12) << m;
    }
    const auto atom = fav::measure_of_set(line_set(3, 8, {5}));
    for (std::int64_t m = -20; m <= 20; ++m) EXPECT_NEAR(std::abs(fav::fourier_coeff(m, atom)), 1.0, 1e-12);
    EXPECT_NEAR(full.total_mass(), 1.0, 1e-15);
}

TEST(FourierCoeff, MatchesDirectSumOnRandomMeasure) {
    std::mt19937_64 gen(31);
    const coord_t D = coord_t{1} << 40;
    fav::DiscreteMeasure mu;
    mu.generation = 10;
    mu.D = D;
    std::vector<coord_t> atoms;
    for (int i = 0; i < 20; ++i) atoms.push_back(static_cast<coord_t>(gen() % static_cast<std::uint64_t>(D)));
    std::sort(atoms.begin(), atoms.end());
    mu.atoms = atoms;
    double total = 0;
    for (int i = 0; i < 20; ++i) {
        mu.weights.push_back(static_cast<double>(gen() % 1000 + 1));
        total += mu.weights.back();
    }
    for (double& w : mu.weights) w /= total;
    std::vector<std::int64_t> ms;
    for (int i = 0; i < 50; ++i) ms.push_back(static_cast<std::int64_t>(gen() % (std::uint64_t{1} << 50)) - (std::int64_t{1} << 49));
    const auto many = fav::fourier_coeffs(ms, mu, 4);
    for (std::size_t i = 0; i < ms.size(); ++i) {
        const cplx want = direct_sum(ms[i], mu.atoms, mu.weights, D);
        EXPECT_LT(std::abs(fav::fourier_coeff(ms[i], mu) - want), 1e-12) << ms[i];
        EXPECT_EQ(many[i], fav::fourier_coeff(ms[i], mu));
        // Integer frequencies see the grid D-periodically.
        EXPECT_LT(std::abs(fav::fourier_coeff(ms[i] + static_cast<std::int64_t>(D), mu) - want), 1e-12);
    }
}

TEST(FourierCoeff, SpectrumAgreesWithDirectSum) {
    std::mt19937_64 gen(2);
    std::vector<coord_t> xs;
    for (coord_t i = 0; i < 256; ++i) {
        if (gen() % 5 == 0) xs.push_back(i);
    }
    const auto mu = fav::measure_of_set(line_set(4, 256, xs));
    const auto spec = fav::atomic_spectrum(mu);
    ASSERT_EQ(spec.size(), 256u);
    for (std::int64_t m = 0; m < 256; ++m) EXPECT_LT(std::abs(spec[static_cast<std::size_t>(m)] - fav::fourier_coeff(m, mu)), 1e-12);
}

TEST(CellTransform, FormulaEnvelopeAndProduct) {
    const coord_t D = 64;
    for (std::int64_t m = -300; m <= 300; ++m) {
        const cplx c = fav::cell_transform(m, D);
        EXPECT_LT(std::abs(c - box_transform(m, D)), 1e-12) << m;
        const double env = m == 0 ? 1.0 : std::min(1.0, static_cast<double>(D) / (3.14159265358979 * std::abs(static_cast<double>(m))));
        EXPECT_LE(std::abs(c), env + 1e-12);
        if (m != 0 && m % 64 == 0) EXPECT_LT(std::abs(c), 1e-12);
    }
    // The mollified transform is the atomic one times the cell transform.
    auto mu = fav::measure_of_set(line_set(2, 64, {3, 17, 40}), fav::Mollifier::CellUniform);
    auto atomic = mu;
    atomic.mollifier = fav::Mollifier::Atomic;
    for (std::int64_t m = -100; m <= 100; ++m) {
        EXPECT_LT(std::abs(fav::fourier_coeff(m, mu) - fav::fourier_coeff(m, atomic) * box_transform(m, 64)), 1e-12);
    }
}

TEST(CombTransform, MatchesDirectSum) {
    for (coord_t N : {1, 4, 7, 16}) {
        std::vector<coord_t> atoms;
        for (coord_t i = 0; i < N; ++i) atoms.push_back(i);
        const std::vector<double> w(static_cast<std::size_t>(N), 1.0 / static_cast<double>(N));
        for (std::int64_t m = -70; m <= 70; ++m) {
            EXPECT_LT(std::abs(fav::comb_transform(m, N, 64) - direct_sum(m, atoms, w, 64)), 1e-12) << N << " " << m;
        }
    }
}

TEST(UnitPhase, ExactReduction) {
    const coord_t D = coord_t{1} << 60;
    EXPECT_LT(std::abs(fav::unit_phase(static_cast<std::int64_t>(D / 2), D) - cplx(-1, 0)), 1e-15);
    EXPECT_LT(std::abs(fav::unit_phase(-static_cast<std::int64_t>(D / 4), D) - cplx(0, 1)), 1e-15);
}

TEST(Decay, LebesgueAndAtom) {
    const auto leb = fav::measure_of_set(full_line(5, 32), fav::Mollifier::CellUniform);
    const auto p = fav::decay_profile(leb, 0.5, 200);
    EXPECT_LT(p.sup, 1e-12);
    const auto atom = fav::measure_of_set(line_set(5, 32, {7}));
    const auto q = fav::decay_profile(atom, 0.25, 81);
    EXPECT_NEAR(q.sup, 3.0, 1e-9);
    EXPECT_EQ(q.argmax, 81);
    std::ostringstream os;
    fav::write_decay_csv(os, atom, 0.25, 3);
    std::string header;
    std::getline(std::istringstream(os.str()) >> std::ws, header);
    EXPECT_EQ(header, "m,re,im,abs,m^alpha*abs");
}

TEST(Decay, TelescopingOnFullLevelsVanishes) {
    const BranchingSchedule s(1, {4, 4}, {4, 4});
    const std::vector<GridSet> X{fav::root_set(1), full_line(1, 4), full_line(2, 16)};
    for (double v : fav::telescoping_increments(X, 0.3)) EXPECT_LT(v, 1e-12);
}

TEST(TransformDeviation, EqualBranchingIsZero) {
    const BranchingSchedule s(1, {8, 8}, {8, 8});
    const GridSet T = line_set(1, 8, {1, 4, 6});
    const GridSet S = fav::children(T, s);
    EXPECT_LT(fav::transform_deviation(S, T, s), 1e-12);
}

TEST(TransformDeviation, FftMatchesDirectDifference) {
    const BranchingSchedule s(1, {8, 16}, {8, 4});
    const GridSet T = line_set(1, 8, {0, 3, 5});
    const GridSet S = fav::random_select(T, s, 7);
    double sup = 0;
    for (std::int64_t m = 0; m < 128; ++m) sup = std::max(sup, std::abs(fav::transform_difference(m, S, T, s)));
    EXPECT_NEAR(fav::transform_deviation(S, T, s), sup, 1e-12);
    EXPECT_GT(sup, 0.0);
}

TEST(FourierStep, ToyRunAvoidsAndMeetsThreshold) {
    const BranchingSchedule s(1, {64, 64, 64}, {32, 32, 32});
    fav::FourierParams p;
    p.eps = 0.05;
    p.seed = 4;
    p.threshold = fav::FourierThreshold::Realized;
    std::vector<GridSet> bads;
    const auto run = fav::fourier_run(s, p, [&](int k1, const GridSet& T) {
        bads.push_back(fav::random_bad_set(T, s, 2, 1, fav::derive_seed(4, 99, static_cast<std::uint64_t>(k1))));
        return bads.back();
    });
    ASSERT_EQ(run.X.size(), 4u);
    for (int k = 1; k <= 3; ++k) {
        const auto& r = run.reports[static_cast<std::size_t>(k - 1)];
        EXPECT_EQ(run.X[static_cast<std::size_t>(k)].size(), run.X[static_cast<std::size_t>(k - 1)].size() * 32u);
        EXPECT_LE(r.sup_difference, r.threshold);
        EXPECT_EQ(r.threshold, r.realized_threshold);
        const GridSet& X = run.X[static_cast<std::size_t>(k)];
        const GridSet& B = bads[static_cast<std::size_t>(k - 1)];
        for (std::size_t i = 0; i < B.size(); ++i) {
            EXPECT_FALSE(X.contains(std::vector<coord_t>{B[i][0]}) && X.contains(std::vector<coord_t>{B[i][1]}));
        }
    }
}

TEST(FourierStep, RandomBadSetShape) {
    const BranchingSchedule s(1, {64, 64}, {32, 32});
    const GridSet T = line_set(1, 64, {3, 9});
    const GridSet B = fav::random_bad_set(T, s, 2, 10, 5);
    EXPECT_EQ(B.size(), 10u);
    for (std::size_t i = 0; i < B.size(); ++i) {
        EXPECT_NE(B[i][0], B[i][1]);
        EXPECT_TRUE(T.contains(std::vector<coord_t>{B[i][0] / 64}));
        EXPECT_TRUE(T.contains(std::vector<coord_t>{B[i][1] / 64}));
    }
}

TEST(FourierThreshold, Names) {
    EXPECT_EQ(fav::fourier_threshold_from_string("proof"), fav::FourierThreshold::Proof);
    EXPECT_EQ(fav::fourier_threshold_from_string("realized"), fav::FourierThreshold::Realized);
    EXPECT_STREQ(fav::to_string(fav::FourierThreshold::Realized), "realized");
    EXPECT_THROW(fav::fourier_threshold_from_string("Proof"), std::invalid_argument);
}

TEST(Hoeffding, RowsAndLargeDeviations) {
    const BranchingSchedule s(1, {64, 64}, {32, 32});
    const GridSet T = full_line(1, 64);
    const auto rows = fav::hoeffding_check(T, s, {7, 197}, {0.1, 0.5}, 200, 3);
    ASSERT_EQ(rows.size(), 4u);
    for (const auto& r : rows) {
        EXPECT_NEAR(r.bound, std::min(1.0, 2 * std::exp(-2048 * r.t * r.t / 4)), 1e-12);
        EXPECT_TRUE(r.holds) << r.m << " " << r.t;
        if (r.t == 0.5) EXPECT_EQ(r.empirical, 0.0);
    }
    const auto again = fav::hoeffding_check(T, s, {7, 197}, {0.1, 0.5}, 200, 3, 4);
    for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].empirical, again[i].empirical);
}

}  // namespace
