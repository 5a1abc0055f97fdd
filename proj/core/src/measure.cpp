#include "fractal_avoid/measure.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace fav {

namespace {

using boost::multiprecision::cpp_int;

double log_int(const cpp_int& v) {
    if (v <= 0) throw std::domain_error("log of a non-positive integer");
    const std::size_t bits = boost::multiprecision::msb(v);
    if (bits < 60) return std::log(v.convert_to<double>());
    const std::size_t shift = bits - 60;
    const cpp_int top = v >> shift;
    return std::log(top.convert_to<double>()) + static_cast<double>(shift) * std::log(2.0);
}

Rational rpow(const Rational& x, unsigned e) {
    Rational r(1);
    for (unsigned i = 0; i < e; ++i) r *= x;
    return r;
}

std::string cube_string(std::span<const coord_t> c) {
    std::string s;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (i) s += ' ';
        s += std::to_string(c[i]);
    }
    return s;
}

std::vector<std::size_t> parent_indices(const GridSet& parents, const GridSet& kids, const BranchingSchedule& s) {
    std::vector<std::size_t> out(kids.size());
    for (std::size_t i = 0; i < kids.size(); ++i) {
        const auto p = parent_of(kids[i], kids.generation(), GridKind::DQ, s);
        out[i] = parents.find(p);
        if (out[i] == parents.size()) {
            throw std::invalid_argument("canonical_weights: cube at generation " + std::to_string(kids.generation()) +
                                        " has no parent in the previous level");
        }
    }
    return out;
}

}  // namespace

double log_rational(const Rational& x) {
    return log_int(boost::multiprecision::numerator(x)) - log_int(boost::multiprecision::denominator(x));
}

WeightTree::WeightTree(BranchingSchedule s, std::vector<GridSet> levels, std::vector<std::vector<Rational>> weights)
    : schedule_(std::move(s)), levels_(std::move(levels)), weights_(std::move(weights)) {
    if (levels_.empty()) throw std::invalid_argument("WeightTree: no levels");
    if (levels_.size() != weights_.size()) throw std::invalid_argument("WeightTree: weight levels differ from set levels");
    for (std::size_t k = 0; k < levels_.size(); ++k) {
        if (levels_[k].size() != weights_[k].size()) throw std::invalid_argument("WeightTree: weight count mismatch");
        if (levels_[k].generation() != static_cast<int>(k)) throw std::invalid_argument("WeightTree: level generation mismatch");
    }
}

Rational WeightTree::weight(int k, std::span<const coord_t> cube) const {
    const GridSet& L = level(k);
    const std::size_t i = L.find(cube);
    return i == L.size() ? Rational(0) : weights(k)[i];
}

bool WeightTree::parent_sum_law_holds() const {
    for (int k = 0; k < depth(); ++k) {
        const GridSet& P = level(k);
        const GridSet& C = level(k + 1);
        std::vector<Rational> sums(P.size(), Rational(0));
        const auto idx = parent_indices(P, C, schedule_);
        for (std::size_t i = 0; i < C.size(); ++i) sums[idx[i]] += weights(k + 1)[i];
        for (std::size_t i = 0; i < P.size(); ++i) {
            if (sums[i] != weights(k)[i]) return false;
        }
    }
    return true;
}

WeightTree canonical_weights(const std::vector<GridSet>& levels, const BranchingSchedule& s) {
    if (levels.empty()) throw std::invalid_argument("canonical_weights: no levels");
    if (levels.front().size() != 1 || levels.front().generation() != 0) {
        throw std::invalid_argument("canonical_weights: level 0 must be the root cube");
    }
    std::vector<std::vector<Rational>> w;
    w.push_back({Rational(1)});
    for (std::size_t k = 0; k + 1 < levels.size(); ++k) {
        const auto idx = parent_indices(levels[k], levels[k + 1], s);
        std::vector<std::uint64_t> kept(levels[k].size(), 0);
        for (std::size_t i : idx) ++kept[i];
        for (std::size_t i = 0; i < kept.size(); ++i) {
            if (kept[i] == 0) {
                throw std::invalid_argument("canonical_weights: cube " + cube_string(levels[k][i]) + " at generation " +
                                            std::to_string(k) + " keeps no children");
            }
        }
        std::vector<Rational> next(levels[k + 1].size());
        for (std::size_t i = 0; i < next.size(); ++i) next[i] = w[k][idx[i]] / Rational(kept[idx[i]]);
        w.push_back(std::move(next));
    }
    return WeightTree(s, levels, std::move(w));
}

nlohmann::json to_json(const FrostmanResult& r) {
    return {{"exponent", r.exponent},
            {"witness_generation", r.witness_generation},
            {"witness", r.witness},
            {"witness_weight", r.witness_weight.str()}};
}

FrostmanResult frostman_exponent(const WeightTree& tree, int k_lo, int k_hi, double C) {
    if (k_hi < 0) k_hi = tree.depth();
    k_lo = std::max(k_lo, 1);
    if (k_lo > k_hi) throw std::invalid_argument("frostman_exponent: empty generation range");
    FrostmanResult best;
    best.exponent = std::numeric_limits<double>::infinity();
    const double logC = std::log(C);
    bool any = false;
    for (int k = k_lo; k <= k_hi; ++k) {
        const double logD = std::log(static_cast<double>(tree.schedule().D(k)));
        const GridSet& L = tree.level(k);
        for (std::size_t i = 0; i < L.size(); ++i) {
            const Rational& w = tree.weights(k)[i];
            if (w <= 0) continue;
            const double sQ = (logC - log_rational(w)) / logD;
            if (!any || sQ < best.exponent) {
                any = true;
                best.exponent = sQ;
                best.witness_generation = k;
                best.witness.assign(L[i].begin(), L[i].end());
                best.witness_weight = w;
            }
        }
    }
    if (!any) throw std::invalid_argument("frostman_exponent: tree carries no mass in range");
    return best;
}

bool frostman_certify(const WeightTree& tree, std::int64_t p, std::int64_t q, const Rational& C, int k_lo, int k_hi) {
    if (q <= 0 || p < 0) throw std::invalid_argument("frostman_certify: need p >= 0 and q > 0");
    if (k_hi < 0) k_hi = tree.depth();
    const Rational Cq = rpow(C, static_cast<unsigned>(q));
    for (int k = std::max(1, k_lo); k <= k_hi; ++k) {
        const cpp_int Dp = boost::multiprecision::pow(cpp_int(tree.schedule().D(k)), static_cast<unsigned>(p));
        for (const Rational& w : tree.weights(k)) {
            if (rpow(w, static_cast<unsigned>(q)) * Rational(Dp) > Cq) return false;
        }
    }
    return true;
}

nlohmann::json to_json(const UniformMassReport& r) {
    auto wit = [](const MassWitness& m) {
        return nlohmann::json{{"constant", m.constant}, {"generation", m.generation}, {"cube", m.cube}};
    };
    return {{"exponent", r.exponent},
            {"discrete_bound", wit(r.discrete_bound)},
            {"controlled_scale", wit(r.controlled_scale)},
            {"uniform_dist", wit(r.uniform_dist)},
            {"limits", {r.limit_discrete, r.limit_controlled, r.limit_uniform}},
            {"passed", {r.discrete_ok, r.controlled_ok, r.uniform_ok}}};
}

UniformMassReport uniform_mass_check(const WeightTree& tree, const UniformMassOptions& opts) {
    const BranchingSchedule& s = tree.schedule();
    const int d = tree.dim();
    UniformMassReport rep;
    rep.exponent = opts.exponent;
    rep.limit_discrete = opts.limit_discrete;
    rep.limit_controlled = opts.limit_controlled > 0 ? opts.limit_controlled : std::pow(2.0, d);
    rep.limit_uniform = opts.limit_uniform;

    for (int k = 1; k <= tree.depth(); ++k) {
        const double logD = std::log(static_cast<double>(s.D(k)));
        const GridSet& L = tree.level(k);
        for (std::size_t i = 0; i < L.size(); ++i) {
            const Rational& w = tree.weights(k)[i];
            if (w <= 0) continue;
            const double c = std::exp(log_rational(w) + opts.exponent * logD);
            if (c > rep.discrete_bound.constant) rep.discrete_bound = {c, k, std::vector<coord_t>(L[i].begin(), L[i].end())};
        }
    }

    for (int k = 0; k < tree.depth(); ++k) {
        const GridSet& P = tree.level(k);
        const GridSet& C = tree.level(k + 1);
        const Rational Md = rpow(Rational(s.M(k + 1)), static_cast<unsigned>(d));
        // Children grouped by intermediary cell; cells are unique across parents.
        std::map<std::vector<coord_t>, std::pair<std::uint64_t, Rational>> cells;
        std::map<std::vector<coord_t>, std::size_t> owner;
        for (std::size_t i = 0; i < C.size(); ++i) {
            auto cell = cell_of(C[i], k + 1, s);
            auto& slot = cells[cell];
            slot.first += 1;
            slot.second += tree.weights(k + 1)[i];
            owner[cell] = P.find(parent_of(C[i], k + 1, GridKind::DQ, s));
        }
        for (const auto& [cell, cw] : cells) {
            const double count = static_cast<double>(cw.first);
            if (count > rep.controlled_scale.constant) rep.controlled_scale = {count, k + 1, cell};
            const Rational& wQ = tree.weights(k)[owner[cell]];
            if (wQ <= 0) continue;
            const double c = static_cast<double>(Rational(cw.second * Md / wQ).convert_to<double>());
            if (c > rep.uniform_dist.constant) rep.uniform_dist = {c, k + 1, cell};
        }
    }
    rep.discrete_ok = rep.discrete_bound.constant <= rep.limit_discrete * (1 + 1e-12);
    rep.controlled_ok = rep.controlled_scale.constant <= rep.limit_controlled;
    rep.uniform_ok = rep.uniform_dist.constant <= rep.limit_uniform * (1 + 1e-12);
    return rep;
}

void write_weight_tree(std::ostream& os, const WeightTree& tree) {
    for (int k = 0; k <= tree.depth(); ++k) {
        const GridSet& L = tree.level(k);
        for (std::size_t i = 0; i < L.size(); ++i) {
            os << k << ' ' << cube_string(L[i]) << ' ' << boost::multiprecision::numerator(tree.weights(k)[i]) << '/'
               << boost::multiprecision::denominator(tree.weights(k)[i]) << '\n';
        }
    }
}

void save_weight_tree(const std::string& path, const WeightTree& tree) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_weight_tree: cannot open " + path);
    write_weight_tree(os, tree);
}

}  // namespace fav
