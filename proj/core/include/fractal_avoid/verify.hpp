#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fractal_avoid/configs.hpp"
#include "fractal_avoid/dyadic.hpp"

namespace fav {

// Brute-force certificates. None of these share code with the constructors.

struct VerifyReport {
    std::string check;
    std::string strategy;
    std::uint64_t tuples_checked = 0;
    std::uint64_t violation_count = 0;
    // The first kMaxListed offending tuples, as flat coordinate lists.
    std::vector<std::vector<coord_t>> violations;
    double wall_seconds = 0;

    static constexpr std::size_t kMaxListed = 1000;

    bool passed() const { return violation_count == 0; }
};

nlohmann::json to_json(const VerifyReport& r);
VerifyReport verify_report_from_json(const nlohmann::json& j);

struct VerifyOptions {
    // Upper bound on enumerated tuples; exceeding it raises BudgetError.
    std::uint64_t budget = 10'000'000;
    // Workers for tuple enumeration. Results do not depend on this value.
    int threads = 1;
};

// Every n-tuple of pairwise distinct cubes of X, checked for membership in B.
VerifyReport assert_avoids(const GridSet& X, const GridSet& B, int n, const VerifyOptions& opts = {});
// Same enumeration against an oracle's exact cube predicate at X's generation.
VerifyReport assert_avoids(const GridSet& X, const CoverOracle& oracle, const VerifyOptions& opts = {});

// An interval dequeued by the interval-queue construction: `index` on the grid of
// generation `generation`, processed by the step that created generation `created`.
struct ProcessedInterval {
    int generation = 0;
    coord_t index = 0;
    int created = 1;
};

// With processed intervals: for each one, quadruples with x1 inside and x2, x3, x4
// outside; flags exact equality of startpoint differences and separations below
// 5 units at the created generation. Without: all startpoint quadruples
// x1 < x2 <= x3 < x4 are checked for exact equality only.
VerifyReport difference_check(const GridSet& X, const std::vector<ProcessedInterval>& processed,
                              const BranchingSchedule& s, const VerifyOptions& opts = {});
VerifyReport difference_check(const GridSet& X, const VerifyOptions& opts = {});

// Unordered pairs {x, y} (x = y included) whose sum cube meets the cover of Y with
// one cube of slack per axis. Y_cover is a d-dimensional set on X's grid.
VerifyReport sumset_check(const GridSet& X, const GridSet& Y_cover, const VerifyOptions& opts = {});

// Triples of distinct cubes of X whose midpoint curve points have, for some apex,
// leg lengths within tau * l of each other.
VerifyReport isosceles_check(const GridSet& X, const CurveSpec& curve, double tau = 3.0,
                             const VerifyOptions& opts = {});

}  // namespace fav
