#include "fractal_avoid/dimension.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fractal_avoid/rng.hpp"

namespace fav {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
    std::uint64_t out;
    if (__builtin_mul_overflow(a, b, &out)) throw BudgetError("covering count exceeds 64 bits");
    return out;
}

std::uint64_t checked_pow(std::uint64_t b, int e) {
    std::uint64_t r = 1;
    for (int i = 0; i < e; ++i) r = checked_mul(r, b);
    return r;
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y, std::size_t upto) {
    if (upto < 2) return upto == 1 && x[0] > 0 ? y[0] / x[0] : 0.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < upto; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double m = static_cast<double>(upto);
    const double den = m * sxx - sx * sx;
    return den == 0 ? 0.0 : (m * sxy - sx * sy) / den;
}

}  // namespace

std::uint64_t covering_number(const GridSet& E, int k, const BranchingSchedule& s) {
    if (E.d() != s.dim()) throw std::invalid_argument("covering_number: dimension mismatch");
    const coord_t target = s.D(k);
    const coord_t De = E.denom();
    const int dim = E.dim();
    if (target % De == 0) {
        return checked_mul(E.size(), checked_pow(static_cast<std::uint64_t>(target / De), dim));
    }
    if (De % target == 0) {
        const coord_t f = De / target;
        std::vector<coord_t> flat;
        flat.reserve(E.data().size());
        for (coord_t v : E.data()) flat.push_back(v / f);
        return GridSet(E.d(), E.n(), k, GridKind::DQ, target, std::move(flat)).size();
    }
    return regrid(E, k, GridKind::DQ, target).size();
}

std::uint64_t covering_number(const std::vector<std::vector<double>>& points, int k, const BranchingSchedule& s) {
    return thicken_points(points, k, s).size();
}

nlohmann::json to_json(const DimensionEstimate& e) {
    return {{"generation", e.generation}, {"count", e.count}, {"ratio", e.ratio}, {"window", e.window},
            {"lower", e.lower},           {"upper", e.upper}, {"slope", e.slope}};
}

DimensionEstimate minkowski_estimate(const std::vector<std::uint64_t>& counts, const BranchingSchedule& s,
                                     int window, int k_lo) {
    if (k_lo < 1) throw std::invalid_argument("minkowski_estimate: generations start at 1");
    if (window < 1 || static_cast<std::size_t>(window) > counts.size()) {
        throw std::invalid_argument("minkowski_estimate: window must lie in [1, number of generations]");
    }
    DimensionEstimate e;
    e.window = window;
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const int k = k_lo + static_cast<int>(i);
        if (counts[i] == 0) throw std::invalid_argument("minkowski_estimate: empty set at generation " + std::to_string(k));
        const double logD = std::log(static_cast<double>(s.D(k)));
        const double logN = std::log(static_cast<double>(counts[i]));
        e.generation.push_back(k);
        e.count.push_back(counts[i]);
        e.ratio.push_back(logN / logD);
        lx.push_back(logD);
        ly.push_back(logN);
    }
    const auto tail = e.ratio.end() - window;
    e.lower = *std::min_element(tail, e.ratio.end());
    e.upper = *std::max_element(tail, e.ratio.end());
    e.slope = fit_slope(lx, ly, lx.size());
    return e;
}

DimensionEstimate minkowski_estimate(const GridSet& E, const BranchingSchedule& s, int window, int k_lo) {
    std::vector<std::uint64_t> counts;
    for (int k = k_lo; k <= E.generation(); ++k) counts.push_back(covering_number(E, k, s));
    return minkowski_estimate(counts, s, window, k_lo);
}

void write_dimension_csv(std::ostream& os, const DimensionEstimate& e, bool with_fit) {
    os << (with_fit ? "k,count,ratio,slope\n" : "k,count,ratio\n");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < e.ratio.size(); ++i) {
        os << e.generation[i] << ',' << e.count[i] << ',' << e.ratio[i];
        if (with_fit) {
            ly.push_back(std::log(static_cast<double>(e.count[i])));
            lx.push_back(e.ratio[i] > 0 ? ly.back() / e.ratio[i] : 0.0);
            os << ',' << fit_slope(lx, ly, lx.size());
        }
        os << '\n';
    }
}

nlohmann::json to_json(const HyperdyadicResult& r) {
    return {{"c", r.c},
            {"N", r.schedule.N_seq()},
            {"M", r.schedule.M_seq()},
            {"counts", r.counts},
            {"predicted", r.predicted},
            {"count_identity", r.count_identity},
            {"cell_counts", r.cell_counts},
            {"l_ratio", r.l_ratio},
            {"r_ratio", r.r_ratio},
            {"l_limit", r.l_limit},
            {"r_limit", r.r_limit}};
}

HyperdyadicResult hyperdyadic_demo(double c, int depth, std::uint64_t seed, std::uint64_t node_budget) {
    if (!(c >= 0 && c < 1)) throw std::invalid_argument("hyperdyadic_demo: c must lie in [0, 1)");
    if (depth < 1) throw std::invalid_argument("hyperdyadic_demo: depth must be positive");
    std::vector<coord_t> N, M;
    int bits = 0;
    for (int k = 1; k <= depth; ++k) {
        const double g = std::pow(2.0, c * k);
        const int nb = static_cast<int>(std::floor(g));
        const int mb = static_cast<int>(std::floor(c * g));
        bits += nb;
        if (bits > default_budget_bits()) {
            throw BudgetError("hyperdyadic_demo: D_" + std::to_string(k) + " = 2^" + std::to_string(bits) +
                              " exceeds the integer budget");
        }
        N.push_back(coord_t{1} << nb);
        M.push_back(coord_t{1} << mb);
    }
    HyperdyadicResult r;
    r.c = c;
    r.schedule = BranchingSchedule(1, N, M);
    r.l_limit = 1 - c;
    r.r_limit = (1 - c) / (1 - c + c * std::pow(2.0, c));

    r.predicted.push_back(1);
    for (int k = 1; k <= depth; ++k) {
        r.predicted.push_back(checked_mul(r.predicted.back(), static_cast<std::uint64_t>(N[k - 1] / M[k - 1])));
    }
    std::uint64_t total = 0;
    for (auto v : r.predicted) total += v;
    if (total > node_budget) throw BudgetError("hyperdyadic_demo: enumeration exceeds the node budget");

    // Depth-first walk; counts[k] tallies fine cubes, cells[k] the chosen DR_{k+1} cells.
    r.counts.assign(static_cast<std::size_t>(depth) + 1, 0);
    std::vector<std::vector<coord_t>> cells(static_cast<std::size_t>(depth));
    Rng rng(seed);
    struct Frame {
        int k;
        coord_t index;
    };
    std::vector<Frame> stack{{0, 0}};
    while (!stack.empty()) {
        const Frame f = stack.back();
        stack.pop_back();
        ++r.counts[static_cast<std::size_t>(f.k)];
        if (f.k == depth) continue;
        const coord_t Nk = N[f.k];
        const coord_t Mk = M[f.k];
        const coord_t per = Nk / Mk;
        const coord_t cell = f.index * Mk + static_cast<coord_t>(rng.below(static_cast<std::uint64_t>(Mk)));
        cells[static_cast<std::size_t>(f.k)].push_back(cell);
        for (coord_t j = per - 1; j >= 0; --j) stack.push_back({f.k + 1, cell * per + j});
    }
    for (auto& level : cells) {
        std::sort(level.begin(), level.end());
        r.cell_counts.push_back(static_cast<std::uint64_t>(std::unique(level.begin(), level.end()) - level.begin()));
    }
    r.count_identity = r.counts == r.predicted;

    for (int k = 1; k <= depth; ++k) {
        r.l_ratio.push_back(std::log2(static_cast<double>(r.counts[k])) / std::log2(static_cast<double>(r.schedule.D(k))));
    }
    for (int k = 2; k <= depth; ++k) {
        const double logr = std::log2(static_cast<double>(r.schedule.D(k - 1))) + std::log2(static_cast<double>(M[k - 1]));
        r.r_ratio.push_back(std::log2(static_cast<double>(r.cell_counts[k - 1])) / logr);
    }
    return r;
}

}  // namespace fav
