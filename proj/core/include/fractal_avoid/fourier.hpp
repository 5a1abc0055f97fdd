#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fractal_avoid/avoidance.hpp"
#include "fractal_avoid/dyadic.hpp"

namespace fav {

using cplx = std::complex<double>;

enum class Mollifier {
    // Point masses at startpoints.
    Atomic,
    // Each atom spread uniformly over its generation-k interval.
    CellUniform,
};

// Probability measure on the startpoints a/D of a one-dimensional grid.
struct DiscreteMeasure {
    int generation = 0;
    coord_t D = 1;
    std::vector<coord_t> atoms;  // sorted, in [0, D)
    std::vector<double> weights;
    Mollifier mollifier = Mollifier::Atomic;

    double total_mass() const;
};

// Uniform atomic measure on the startpoints of E (d = 1, n = 1, nonempty).
DiscreteMeasure measure_of_set(const GridSet& E, Mollifier mollifier = Mollifier::Atomic);

// exp(-2 pi i r / D) with r reduced mod D exactly.
cplx unit_phase(std::int64_t m, coord_t D);

// Transform of the uniform density on [0, 1/D].
cplx cell_transform(std::int64_t m, coord_t D);

// Transform of (1/N) sum_{i<N} delta(i / D).
cplx comb_transform(std::int64_t m, coord_t N, coord_t D);

// Direct summation over atoms, times the cell transform for mollified measures.
cplx fourier_coeff(std::int64_t m, const DiscreteMeasure& mu);
std::vector<cplx> fourier_coeffs(const std::vector<std::int64_t>& ms, const DiscreteMeasure& mu, int threads = 1);

// Atomic transform at m = 0..D-1 by FFT; needs D <= 2^24.
std::vector<cplx> atomic_spectrum(const DiscreteMeasure& mu);

struct DecayProfile {
    double alpha = 0;
    std::int64_t m_max = 0;
    // sup over 1 <= m <= m_max of m^alpha |mu^(m)|; the transform of a real measure is
    // conjugate-symmetric, so negative m add nothing.
    double sup = 0;
    std::int64_t argmax = 0;
};

nlohmann::json to_json(const DecayProfile& p);

DecayProfile decay_profile(const DiscreteMeasure& mu, double alpha, std::int64_t m_max);

// `m,re,im,abs,m^alpha*abs` rows for m = 1..m_max after a header.
void write_decay_csv(std::ostream& os, const DiscreteMeasure& mu, double alpha, std::int64_t m_max);

// For k = 0..K-1: sup over 1 <= m <= m_max of m^alpha |mu_{k+1}^(m) - mu_k^(m)| where mu_k is
// the cell-uniform measure of X[k]. m_max <= 0 selects D_K.
std::vector<double> telescoping_increments(const std::vector<GridSet>& X, double alpha, std::int64_t m_max = 0);

enum class FourierThreshold {
    // (D_k M_{k+1})^{-1/2} log M_{k+1}.
    Proof,
    // Smallest t with 2 D_{k+1} exp(-#cells t^2 / 4) <= 1/3, the realized Hoeffding union bound.
    Realized,
};

const char* to_string(FourierThreshold t);
FourierThreshold fourier_threshold_from_string(const std::string& s);

struct FourierParams {
    double s = 1;
    double eps = 0;
    int n = 2;
    int retry_limit = 64;
    std::uint64_t seed = 0;
    FourierThreshold threshold = FourierThreshold::Proof;
};

struct FourierStepReport {
    int generation = 0;
    int trials = 0;
    // Trials rejected for a collision with B, and for the transform bound.
    int collision_rejects = 0;
    int transform_rejects = 0;
    std::uint64_t cells = 0;
    std::uint64_t bad_count = 0;
    double sup_difference = 0;
    // The threshold applied, and both candidates.
    std::string threshold_rule;
    double threshold = 0;
    double proof_threshold = 0;
    double realized_threshold = 0;
    // #B (M/N)^n over strongly non-diagonal B: the union-bound share of collisions.
    double collision_bound = 0;
    // collision_bound <= 1/3; with the realized threshold both failure shares are then <= 1/3.
    bool realized_bounds_hold = false;
    // The size conditions behind the 1/3 + 1/3 union bound.
    std::vector<HypothesisCheck> checks;
    // "certified" when every size condition holds, otherwise "empirical".
    std::string bound_status;
};

nlohmann::json to_json(const FourierStepReport& r);

// sup over m in [0, D_{k+1}) of |nu_S^(m) - eta_{k+1}^(m) nu_T^(m)|, by one FFT of the
// difference measure.
double transform_deviation(const GridSet& S, const GridSet& T, const BranchingSchedule& s);
// The same difference at one frequency, by direct summation.
cplx transform_difference(std::int64_t m, const GridSet& S, const GridSet& T, const BranchingSchedule& s);

struct FourierStepResult {
    GridSet S;
    FourierStepReport report;
};

// Resamples one cube per intermediary cell until S^n has no strongly non-diagonal cube of
// B and the transform deviation is within threshold. Trial t uses derive_seed(seed, k+1, t).
// Throws RetryError after retry_limit trials.
FourierStepResult fourier_step(const GridSet& T, const GridSet& B, const FourierParams& p,
                               const BranchingSchedule& s);

// `count` distinct strongly non-diagonal cubes at generation k+1 whose blocks are children of T.
GridSet random_bad_set(const GridSet& T, const BranchingSchedule& s, int n, std::uint64_t count,
                       std::uint64_t seed);

// Bad set for the step that creates generation k1 from T.
using BadSetProvider = std::function<GridSet(int k1, const GridSet& T)>;

struct FourierRun {
    std::vector<GridSet> X;
    std::vector<FourierStepReport> reports;
};

FourierRun fourier_run(const BranchingSchedule& s, const FourierParams& p, const BadSetProvider& bad);

struct HoeffdingRow {
    std::int64_t m = 0;
    double t = 0;
    double empirical = 0;
    double bound = 0;
    // Three binomial standard errors at the bound.
    double tolerance = 0;
    bool holds = false;
};

nlohmann::json to_json(const HoeffdingRow& r);

// Unconditioned one-per-cell samples S of T; empirical P(|difference(m)| >= t) against
// 2 exp(-#cells t^2 / 4). Trial i uses derive_seed(seed, 0, i).
std::vector<HoeffdingRow> hoeffding_check(const GridSet& T, const BranchingSchedule& s,
                                          const std::vector<std::int64_t>& freqs, const std::vector<double>& ts,
                                          int trials, std::uint64_t seed, int threads = 1);

}  // namespace fav
