#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fractal_avoid/configs.hpp"
#include "fractal_avoid/dyadic.hpp"
#include "fractal_avoid/rng.hpp"

namespace fav {

// Raised when every resampling trial (and the exhaustive fallback, if allowed) fails.
class RetryError : public HypothesisError {
public:
    using HypothesisError::HypothesisError;
};

// A named inequality lhs <= rhs evaluated on the realized step.
struct HypothesisCheck {
    std::string name;
    double lhs = 0;
    double rhs = 0;
    bool holds = true;
};

nlohmann::json to_json(const HypothesisCheck& h);

enum class AcceptRule {
    // |K(A)| <= M^d / 2 over the whole step.
    Collisions,
    // Every parent keeps at least ceil(M^d / 2) cells after deletion.
    PerParent,
};

struct AvoidParams {
    double s = 0;
    double eps = 0;
    int d = 1;
    int n = 2;
    // Zero selects default_C(d, n, s).
    double C = 0;
    int retry_limit = 64;
    std::uint64_t seed = 0;
    // Throw HypothesisError on a violated precondition instead of recording it.
    bool enforce_hypotheses = false;
    // Search all selections when the trials fail and the search space is at most 2^20.
    bool exhaustive_fallback = true;
    AcceptRule accept = AcceptRule::Collisions;
};

// max(4d, smallest power of two >= 4^{1/(dn - s)}).
double default_C(int d, int n, double s);
double resolved_C(const AvoidParams& p);

// Smallest power of two >= C * M^{d(n-1)/(dn-s-eps)}.
coord_t min_branching(const AvoidParams& p, coord_t M);

// One uniformly chosen generation-(k+1) cube in every intermediary cell of T.
GridSet random_select(const GridSet& T, const BranchingSchedule& s, Rng& rng);
GridSet random_select(const GridSet& T, const BranchingSchedule& s, std::uint64_t seed);

// Strongly non-diagonal cubes of B whose d-blocks all lie in A.
GridSet collision_set(const GridSet& A, const GridSet& B, int n);

struct StepReport {
    int generation = 0;  // generation created by the step
    int trials = 0;
    bool used_exhaustive = false;
    std::string accept_rule;
    std::uint64_t collisions = 0;
    std::uint64_t deleted = 0;
    // Size of the bad set at the new generation, or -1 when it was not counted.
    long long bad_count = -1;
    std::uint64_t nondiagonal_bad = 0;
    std::uint64_t cells_per_parent = 0;
    std::vector<std::uint32_t> kept_per_parent;
    std::uint32_t min_kept = 0;
    std::vector<HypothesisCheck> checks;
    std::vector<std::string> notes;

    bool hypotheses_hold() const;
};

nlohmann::json to_json(const StepReport& r);

struct StepResult {
    GridSet S;
    StepReport report;
};

// Randomized single-scale avoidance: T is fine at generation k, B is the bad set in
// R^{dn} at generation k+1.
StepResult avoid_step(const GridSet& T, const GridSet& B, const AvoidParams& p, const BranchingSchedule& s);
// Same step with the bad set supplied lazily as an oracle's cover at generation k+1.
StepResult avoid_step(const GridSet& T, const CoverOracle& oracle, const AvoidParams& p,
                      const BranchingSchedule& s);

// Interval step: children of intervals inside I keep positions 10, 20, ... (1-indexed),
// all others keep positions 5, 15, .... I is `I_index` on the grid of generation I_gen.
GridSet keleti_step(const GridSet& X, int I_gen, coord_t I_index, const BranchingSchedule& s);

struct FpParams {
    // Cover constant: #B <= C_f * D_{k+1}^{dn - m}.
    double C_f = 1;
    // Codimension of the zero set.
    int m = 1;
    bool enforce_hypotheses = false;
};

struct FpStage {
    std::uint64_t bad_in = 0;
    std::uint64_t bad_out = 0;
    // 2 D_k^d (M/N)^d #B_in.
    double bound = 0;
    std::uint32_t min_kept = 0;
};

struct FpReport {
    int generation = 0;
    std::vector<FpStage> stages;
    std::uint64_t bad_initial = 0;
    std::uint64_t bad_final = 0;
    // 2^{n-1} (D_k M/N)^{d(n-1)} #B, implied by chaining the stage bounds.
    double chain_bound = 0;
    // Final-stage hypothesis with the D_k exponent d(n-1), and with 2dn.
    double stated_bound = 0;
    double consistent_bound = 0;
    HypothesisCheck precondition;
    std::vector<std::uint32_t> min_kept;
    std::uint64_t cells_per_parent = 0;
    // Kept cells with no child outside the final bad set; such cells are dropped.
    std::uint64_t hypothesis_failures = 0;
};

nlohmann::json to_json(const FpReport& r);

struct MultiResult {
    std::vector<GridSet> S;
};

struct FpResult : MultiResult {
    FpReport report;
};

// Slab and wafer reductions over T_1..T_{n-1}, then cell filtering on T_n. T_i are
// pairwise disjoint fine sets at generation k; B lives in R^{dn} at generation k+1.
FpResult fp_step(const std::vector<GridSet>& T, const GridSet& B, const BranchingSchedule& s,
                 const FpParams& p = {});

// Integer-coefficient polynomial in `vars` real variables.
struct Polynomial {
    struct Term {
        std::int64_t coeff = 0;
        std::vector<int> exps;
    };
    int vars = 0;
    std::vector<Term> terms;

    int degree() const;
    double eval(const double* x) const;
    Polynomial derivative(int var) const;
    // Sum over terms of |coeff| * total degree: a Lipschitz bound in the l^infty
    // norm on [0,1]^vars.
    double lipschitz_bound() const;
};

nlohmann::json to_json(const Polynomial& f);
Polynomial polynomial_from_json(const nlohmann::json& j);

struct MatheParams {
    double c0 = 1;
    double C0 = 1;
    // Negative selects the midpoint of the feasible interval (0, c0 / (c0 + C0)).
    double eps = -1;
    std::uint64_t budget = 10'000'000;
};

struct MatheReport {
    int generation = 0;
    double eps = 0;
    // Shift of the first family in fine units and its admissible window.
    coord_t shift = 0;
    coord_t window_lo = 0;
    coord_t window_hi = 0;
    std::uint64_t tuples = 0;
    // min over tuples of dist(f, r^m Z) / r^m at startpoints, and after the Lipschitz slack.
    double lattice_margin = 0;
    double certified_margin = 0;
    bool certified = false;
    HypothesisCheck precondition;
};

nlohmann::json to_json(const MatheReport& r);

struct MatheResult : MultiResult {
    MatheReport report;
};

// Lattice step for f with c0 <= |df/dx_1| <= C0 on T_1 x ... x T_n, where x_1 is the first
// coordinate of the first block. Every intermediary cell keeps exactly one cube.
MatheResult mathe_step(const std::vector<GridSet>& T, const Polynomial& f, const BranchingSchedule& s,
                       const MatheParams& p = {});

// Rational m x n matrix with entries num/den.
struct RationalMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<std::int64_t> num;
    std::vector<std::int64_t> den;

    std::int64_t n_at(int r, int c) const { return num[static_cast<std::size_t>(r * cols + c)]; }
    std::int64_t d_at(int r, int c) const { return den[static_cast<std::size_t>(r * cols + c)]; }
};

RationalMatrix rational_matrix(int rows, int cols, const std::vector<std::pair<std::int64_t, std::int64_t>>& entries);

struct LowRankParams {
    double s = 0;
    double eps = 0;
    bool enforce_hypotheses = false;
    // Offsets searched are {0..N/M-1}^m; the bitmap must fit this many entries.
    std::uint64_t budget = std::uint64_t{1} << 24;
};

struct LowRankReport {
    int generation = 0;
    std::int64_t A = 1;
    std::vector<int> pivots;
    std::vector<coord_t> offset;
    std::uint64_t offsets_total = 0;
    std::uint64_t offsets_forbidden = 0;
    std::uint64_t image_points = 0;
    std::vector<HypothesisCheck> checks;
};

nlohmann::json to_json(const LowRankReport& r);

struct LowRankResult : MultiResult {
    LowRankReport report;
};

// Offset search for the linear map L (columns e_j present for every row j): the image
// of S_1 x ... x S_n under L misses B, a set in R^m at generation k+1. d = 1.
LowRankResult lowrank_step(const std::vector<GridSet>& T, const RationalMatrix& L, const GridSet& B,
                           const BranchingSchedule& s, const LowRankParams& p = {});

}  // namespace fav
