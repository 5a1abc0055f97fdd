#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json_fwd.hpp>

#include "fractal_avoid/dyadic.hpp"

namespace fav {

using Rational = boost::multiprecision::cpp_rational;

// Natural log of a positive rational, accurate to double precision for any size.
double log_rational(const Rational& x);

// Exact weights on the cubes of a nested family X_0 = root, X_1, ..., X_K.
class WeightTree {
public:
    WeightTree(BranchingSchedule s, std::vector<GridSet> levels, std::vector<std::vector<Rational>> weights);

    int depth() const { return static_cast<int>(levels_.size()) - 1; }
    int dim() const { return schedule_.dim(); }
    const BranchingSchedule& schedule() const { return schedule_; }
    const GridSet& level(int k) const { return levels_.at(static_cast<std::size_t>(k)); }
    const std::vector<Rational>& weights(int k) const { return weights_.at(static_cast<std::size_t>(k)); }
    // Zero for cubes outside the family.
    Rational weight(int k, std::span<const coord_t> cube) const;

    // Every stored cube's weight equals the sum over its stored children (internal levels).
    bool parent_sum_law_holds() const;

private:
    BranchingSchedule schedule_;
    std::vector<GridSet> levels_;
    std::vector<std::vector<Rational>> weights_;
};

// levels[0] is the root; levels[k] is fine at generation k and refines levels[k-1].
// Each kept cube splits its weight equally among its kept children.
WeightTree canonical_weights(const std::vector<GridSet>& levels, const BranchingSchedule& s);

struct FrostmanResult {
    // Largest s with w(Q) <= C l(Q)^s over the scanned cubes.
    double exponent = 0;
    int witness_generation = 0;
    std::vector<coord_t> witness;
    Rational witness_weight;
};

nlohmann::json to_json(const FrostmanResult& r);

// Scans generations k_lo..k_hi (k_hi < 0 means the deepest).
FrostmanResult frostman_exponent(const WeightTree& tree, int k_lo = 1, int k_hi = -1, double C = 1);

// Exact test of w(Q)^q * D_k^p <= C^q, i.e. w(Q) <= C l_k^{p/q}, over k_lo..k_hi.
bool frostman_certify(const WeightTree& tree, std::int64_t p, std::int64_t q, const Rational& C, int k_lo = 1,
                      int k_hi = -1);

struct MassWitness {
    double constant = 0;
    int generation = 0;
    std::vector<coord_t> cube;
};

struct UniformMassReport {
    double exponent = 0;
    // (1) max w(Q) / l_k^s over fine cubes.
    MassWitness discrete_bound;
    // (2) max number of kept fine cubes inside one intermediary cell.
    MassWitness controlled_scale;
    // (3) max w(R) M^d / w(parent) over intermediary cells.
    MassWitness uniform_dist;
    double limit_discrete = 1;
    double limit_controlled = 2;
    double limit_uniform = 2;
    bool discrete_ok = false;
    bool controlled_ok = false;
    bool uniform_ok = false;

    bool passed() const { return discrete_ok && controlled_ok && uniform_ok; }
};

nlohmann::json to_json(const UniformMassReport& r);

struct UniformMassOptions {
    double exponent = 0;
    double limit_discrete = 1;
    // Non-positive selects 2^d.
    double limit_controlled = 0;
    double limit_uniform = 2;
};

UniformMassReport uniform_mass_check(const WeightTree& tree, const UniformMassOptions& opts);

// Lines `k c_1 ... c_d p/q`, one per stored cube, by generation then cube order.
void write_weight_tree(std::ostream& os, const WeightTree& tree);
void save_weight_tree(const std::string& path, const WeightTree& tree);

}  // namespace fav
