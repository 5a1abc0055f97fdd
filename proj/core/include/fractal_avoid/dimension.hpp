#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fractal_avoid/dyadic.hpp"

namespace fav {

// Number of generation-k cubes whose interiors meet E. Does not materialize refinements.
std::uint64_t covering_number(const GridSet& E, int k, const BranchingSchedule& s);
// Number of generation-k cubes meeting a finite point set (closed cubes).
std::uint64_t covering_number(const std::vector<std::vector<double>>& points, int k, const BranchingSchedule& s);

struct DimensionEstimate {
    std::vector<int> generation;
    std::vector<std::uint64_t> count;
    // log count / log D_k.
    std::vector<double> ratio;
    int window = 1;
    // Min and max of the ratio over the last `window` generations.
    double lower = 0;
    double upper = 0;
    // Least-squares slope of log count against log D_k; auxiliary only.
    double slope = 0;
};

nlohmann::json to_json(const DimensionEstimate& e);

// Ratios at generations k_lo..E.generation().
DimensionEstimate minkowski_estimate(const GridSet& E, const BranchingSchedule& s, int window, int k_lo = 1);
// Ratios from precomputed counts at generations k_lo, k_lo+1, ... of s.
DimensionEstimate minkowski_estimate(const std::vector<std::uint64_t>& counts, const BranchingSchedule& s,
                                     int window, int k_lo = 1);

// `k,count,ratio` lines after a header; `with_fit` appends the running slope column.
void write_dimension_csv(std::ostream& os, const DimensionEstimate& e, bool with_fit = false);

struct HyperdyadicResult {
    double c = 0;
    BranchingSchedule schedule;
    // counts[k] = #DQ_k(E_k) by enumeration, k = 0..depth.
    std::vector<std::uint64_t> counts;
    // prod_{j<=k} N_j / M_j.
    std::vector<std::uint64_t> predicted;
    bool count_identity = false;
    // l_ratio[k-1] = log #DQ_k(E_k) / log D_k for k = 1..depth.
    std::vector<double> l_ratio;
    // r_ratio[k-2] = log #DR_k(E_{k-1}) / log(D_{k-1} M_k) for k = 2..depth.
    std::vector<double> r_ratio;
    // #DR_k(E_{k-1}) by enumeration, k = 1..depth.
    std::vector<std::uint64_t> cell_counts;
    double l_limit = 0;  // 1 - c
    double r_limit = 0;  // (1 - c) / (1 - c + c 2^c)
};

nlohmann::json to_json(const HyperdyadicResult& r);

// N_k = 2^floor(2^{ck}), M_k = 2^floor(c 2^{ck}); every fine cube keeps one intermediary
// cell, chosen by `seed`. Counts come from a depth-first enumeration of the tree, which
// visits at most `node_budget` cubes.
HyperdyadicResult hyperdyadic_demo(double c, int depth, std::uint64_t seed = 0,
                                   std::uint64_t node_budget = std::uint64_t{1} << 28);

}  // namespace fav
