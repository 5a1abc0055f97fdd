#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fractal_avoid/avoidance.hpp"
#include "fractal_avoid/configs.hpp"
#include "fractal_avoid/dyadic.hpp"
#include "fractal_avoid/measure.hpp"
#include "fractal_avoid/verify.hpp"

namespace fav {

// min((dn - s)/4, 1/(k+1)).
double default_eps(int k, int d, int n, double s);

// Largest power of two strictly below (N/C)^{(dn-s-eps)/(d(n-1))}, clamped to [1, N] and
// halved until it divides N.
coord_t choose_intermediary(coord_t N, int d, int n, double s, double eps, double C);

struct StrongCoverPlan {
    BranchingSchedule schedule;
    // Step k (creating generation k) uses oracle interleave[k-1] with slack eps[k-1].
    std::vector<std::size_t> interleave;
    std::vector<std::string> tags;
    std::vector<double> eps;
    // #B_k of the full cover at generation k; -1 when not counted (fixed plans).
    std::vector<long long> bad_counts;
    // #B_k <= N_k^{s+eps_k} and N_k >= max(C, D_{k-1}^{1/eps_k}); fixed plans fill these in
    // during iterate_main on the realized covers.
    std::vector<HypothesisCheck> sparsity;
    std::vector<HypothesisCheck> decay;
    bool fixed_schedule = false;
    std::vector<std::string> notes;
};

nlohmann::json to_json(const StrongCoverPlan& p);

struct StrongCoverOptions {
    int depth = 1;
    // Empty selects default_eps.
    std::vector<double> eps;
    // Zero selects default_C of the first oracle.
    double C = 0;
    int budget_bits = default_budget_bits();
};

// Round-robin oracles; for each k the smallest power of two N_k meeting rapid decay whose
// full cover satisfies sparsity. Throws BudgetError when D_k would pass the budget.
StrongCoverPlan build_strong_cover(const std::vector<OraclePtr>& oracles, const StrongCoverOptions& opts);

// Round-robin oracles over a fixed schedule. Sparsity and decay are recorded, not enforced.
StrongCoverPlan fixed_plan(const std::vector<OraclePtr>& oracles, const BranchingSchedule& s,
                           std::vector<double> eps = {});

struct MainState {
    BranchingSchedule schedule;
    // X[0] is the root; X[k] is fine at generation k.
    std::vector<GridSet> X;
    std::vector<StepReport> reports;
    StrongCoverPlan plan;

    int generation() const { return static_cast<int>(X.size()) - 1; }
};

MainState initial_state(const StrongCoverPlan& plan);

// Applies avoid_step with the oracle cover at each new generation, restricted to the
// children of the current set; past 2^24 candidate tuples the cover is queried
// only on each trial's selection. `base` supplies seed,
// retry limit, accept rule and C; s, eps, d and n come from the plan and oracle.
void iterate_main(MainState& state, const std::vector<OraclePtr>& oracles, const AvoidParams& base, int steps);

struct TransportCheck {
    int generation = 0;
    std::uint64_t coarse_cubes = 0;
    std::uint64_t violations = 0;
};

// For each j: the generation-j coarsening of the final set meets no strongly
// non-diagonal cube of the step-j oracle cover.
std::vector<TransportCheck> transport_checks(const MainState& state, const std::vector<OraclePtr>& oracles);

enum class KeletiQueue {
    // Every generation-(k+1) interval of [0,1] is enqueued after step k.
    Literal,
    // Only the intervals of X_{k+1} are enqueued.
    KeptOnly,
};

const char* to_string(KeletiQueue q);

struct KeletiState {
    BranchingSchedule schedule;
    KeletiQueue queue = KeletiQueue::Literal;
    std::vector<GridSet> X;
    std::vector<ProcessedInterval> processed;
    // Queue length after each step.
    std::vector<std::uint64_t> queue_sizes;
};

KeletiState iterate_keleti(const BranchingSchedule& s, int depth, KeletiQueue queue = KeletiQueue::Literal);

struct FpTuple {
    int generation = 0;
    // n blocks of d coordinates.
    std::vector<coord_t> cubes;
};

struct FpProcessed {
    FpTuple tuple;
    int created = 0;
    // False when some T_i' held no cube of X_k; the step then only subdivides.
    bool applied = false;
};

struct FpState {
    BranchingSchedule schedule;
    int n = 2;
    std::vector<GridSet> X;
    std::vector<FpReport> reports;
    std::vector<FpProcessed> processed;
    // Disjoint tuples available at each enqueue, and how many fit under the cap.
    std::vector<double> offered;
    std::vector<std::uint64_t> enqueued;
    std::uint64_t queue_remaining = 0;
    bool cap_reached = false;
};

struct FpOptions {
    std::uint64_t queue_cap = 10'000;
    FpParams params;
};

// Step 0 subdivides [0,1]^d and enqueues the tuples of distinct generation-1 cubes; each
// later step dequeues one tuple and applies fp_step to T_i = T_i' within X_k.
FpState iterate_fp(const CoverOracle& oracle, const BranchingSchedule& s, int depth, const FpOptions& opts = {});

// Every processed tuple: products of the final set's cubes inside T_1'..T_n', coarsened to
// the created generation, checked against the oracle's cube predicate there.
VerifyReport fp_certificate(const FpState& state, const CoverOracle& oracle);

struct DimensionTarget {
    enum class Kind { Main, Sumset, Isosceles };
    Kind kind = Kind::Main;
    int d = 1;
    int n = 2;
    double s = 1;
    // Dimension of Y for the sumset target.
    double t = 0;
};

double target_dimension(const DimensionTarget& t);

struct DimensionReport {
    double target = 0;
    std::string target_rule;
    bool empty_set_shortcut = false;
    int depth = 0;
    FrostmanResult frostman;
    UniformMassReport uniform_mass;
};

nlohmann::json to_json(const DimensionReport& r);

// levels[0] is the root; canonical weights of the family, checklist at the target exponent.
DimensionReport dimension_report(const std::vector<GridSet>& levels, const BranchingSchedule& s,
                                 const DimensionTarget& target);

nlohmann::json schedule_json(const BranchingSchedule& s);
nlohmann::json history_json(const MainState& state);
nlohmann::json history_json(const KeletiState& state);
nlohmann::json history_json(const FpState& state);

// Saves X_k as `X_<k>.grid` under dir and returns the relative paths.
std::vector<std::string> save_levels(const std::string& dir, const std::vector<GridSet>& X);

}  // namespace fav
