#include "fractal_avoid/dyadic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace fav {

namespace {

using i128 = __int128;

constexpr coord_t kMaxCoord = coord_t{1} << 62;

coord_t checked_mul(coord_t a, coord_t b, const char* what) {
    i128 p = static_cast<i128>(a) * static_cast<i128>(b);
    if (p > static_cast<i128>(kMaxCoord)) {
        throw BudgetError(std::string(what) + ": product exceeds 2^62");
    }
    return static_cast<coord_t>(p);
}

bool lex_less(const coord_t* a, const coord_t* b, int dim) {
    for (int i = 0; i < dim; ++i) {
        if (a[i] != b[i]) return a[i] < b[i];
    }
    return false;
}

int lex_cmp(const coord_t* a, const coord_t* b, int dim) {
    for (int i = 0; i < dim; ++i) {
        if (a[i] != b[i]) return a[i] < b[i] ? -1 : 1;
    }
    return 0;
}

void require_same_grid(const GridSet& a, const GridSet& b, const char* op) {
    if (!a.same_grid(b)) {
        throw std::invalid_argument(std::string(op) + ": grid sets live on different grids");
    }
}

// Odometer over a box of per-axis ranges [lo_i, hi_i]; emits points in lex order.
template <class Emit>
void for_each_in_box(const std::vector<coord_t>& lo, const std::vector<coord_t>& hi, Emit&& emit) {
    const std::size_t dim = lo.size();
    for (std::size_t i = 0; i < dim; ++i) {
        if (lo[i] > hi[i]) return;
    }
    std::vector<coord_t> cur(lo);
    while (true) {
        emit(cur);
        std::size_t axis = dim;
        while (axis > 0) {
            --axis;
            if (cur[axis] < hi[axis]) {
                ++cur[axis];
                break;
            }
            cur[axis] = lo[axis];
            if (axis == 0) return;
        }
        if (dim == 0) return;
    }
}

}  // namespace

int default_budget_bits() {
    const char* env = std::getenv("FRACTAL_AVOID_BUDGET_BITS");
    if (env == nullptr || *env == '\0') return kDefaultBudgetBits;
    int v = 0;
    const char* end = env + std::char_traits<char>::length(env);
    auto [ptr, ec] = std::from_chars(env, end, v);
    if (ec != std::errc() || ptr != end) return kDefaultBudgetBits;
    return std::clamp(v, 2, kDefaultBudgetBits);
}

bool is_power_of_two(coord_t x) { return x > 0 && (x & (x - 1)) == 0; }

coord_t next_power_of_two(coord_t x) {
    if (x <= 1) return 1;
    coord_t p = 1;
    while (p < x) {
        if (p >= kMaxCoord) throw BudgetError("next_power_of_two: exceeds 2^62");
        p <<= 1;
    }
    return p;
}

const char* to_string(GridKind kind) { return kind == GridKind::DQ ? "DQ" : "DR"; }

GridKind grid_kind_from_string(const std::string& s) {
    if (s == "DQ") return GridKind::DQ;
    if (s == "DR") return GridKind::DR;
    throw FormatError("unknown grid kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// BranchingSchedule

BranchingSchedule::BranchingSchedule(int d, std::vector<coord_t> N, std::vector<coord_t> M,
                                     int budget_bits)
    : d_(d), budget_bits_(budget_bits), N_(std::move(N)), M_(std::move(M)) {
    if (d_ < 1) throw ScheduleError("schedule: dimension must be positive");
    if (budget_bits_ < 1 || budget_bits_ > kDefaultBudgetBits) {
        throw ScheduleError("schedule: budget bits must lie in [1, 62]");
    }
    if (N_.size() != M_.size()) throw ScheduleError("schedule: N and M lengths differ");
    const coord_t cap = coord_t{1} << budget_bits_;
    D_.assign(1, 1);
    for (std::size_t i = 0; i < N_.size(); ++i) {
        const int k = static_cast<int>(i) + 1;
        if (N_[i] < 2) throw ScheduleError("schedule: N_" + std::to_string(k) + " < 2");
        if (M_[i] < 1 || N_[i] % M_[i] != 0) {
            throw ScheduleError("schedule: M_" + std::to_string(k) + " does not divide N_" +
                                std::to_string(k));
        }
        i128 next = static_cast<i128>(D_.back()) * N_[i];
        if (next > static_cast<i128>(cap)) {
            throw BudgetError("schedule: D_" + std::to_string(k) + " exceeds the " +
                              std::to_string(budget_bits_) + "-bit budget");
        }
        D_.push_back(static_cast<coord_t>(next));
    }
}

coord_t BranchingSchedule::N(int k) const {
    if (k < 1 || k > depth()) throw BudgetError("schedule exhausted: no generation " + std::to_string(k));
    return N_[static_cast<std::size_t>(k - 1)];
}

coord_t BranchingSchedule::M(int k) const {
    if (k < 1 || k > depth()) throw BudgetError("schedule exhausted: no generation " + std::to_string(k));
    return M_[static_cast<std::size_t>(k - 1)];
}

coord_t BranchingSchedule::D(int k) const {
    if (k < 0 || k > depth()) throw BudgetError("schedule exhausted: no generation " + std::to_string(k));
    return D_[static_cast<std::size_t>(k)];
}

coord_t BranchingSchedule::R(int k) const { return D(k - 1) * M(k); }

coord_t BranchingSchedule::denom(int k, GridKind kind) const {
    return kind == GridKind::DQ ? D(k) : R(k);
}

BranchingSchedule BranchingSchedule::extended(coord_t N, coord_t M) const {
    auto n = N_;
    auto m = M_;
    n.push_back(N);
    m.push_back(M);
    return BranchingSchedule(d_, std::move(n), std::move(m), budget_bits_);
}

BranchingSchedule BranchingSchedule::truncated(int depth) const {
    if (depth < 0 || depth > this->depth()) throw std::invalid_argument("truncated: bad depth");
    return BranchingSchedule(d_, std::vector<coord_t>(N_.begin(), N_.begin() + depth),
                             std::vector<coord_t>(M_.begin(), M_.begin() + depth), budget_bits_);
}

// ---------------------------------------------------------------------------
// GridSet

GridSet::GridSet(int d, int n, int k, GridKind kind, coord_t denom, std::vector<coord_t> flat)
    : d_(d), n_(n), k_(k), kind_(kind), denom_(denom), data_(std::move(flat)) {
    if (d_ < 1 || n_ < 1) throw std::invalid_argument("GridSet: d and n must be positive");
    if (denom_ < 1) throw std::invalid_argument("GridSet: denominator must be positive");
    if (k_ < 0) throw std::invalid_argument("GridSet: negative generation");
    const int dim = d_ * n_;
    if (data_.size() % static_cast<std::size_t>(dim) != 0) {
        throw std::invalid_argument("GridSet: coordinate count not a multiple of the dimension");
    }
    for (coord_t c : data_) {
        if (c < 0 || c >= denom_) throw std::out_of_range("GridSet: coordinate outside [0, D)");
    }
    const std::size_t count = data_.size() / static_cast<std::size_t>(dim);
    if (dim == 1) {
        if (!std::is_sorted(data_.begin(), data_.end())) std::sort(data_.begin(), data_.end());
        data_.erase(std::unique(data_.begin(), data_.end()), data_.end());
        return;
    }
    bool sorted_unique = true;
    for (std::size_t i = 1; i < count && sorted_unique; ++i) {
        sorted_unique = lex_less(&data_[(i - 1) * dim], &data_[i * dim], dim);
    }
    if (sorted_unique) return;
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return lex_less(&data_[a * dim], &data_[b * dim], dim);
    });
    std::vector<coord_t> out;
    out.reserve(data_.size());
    for (std::size_t idx : order) {
        const coord_t* p = &data_[idx * dim];
        if (!out.empty() && lex_cmp(&out[out.size() - dim], p, dim) == 0) continue;
        out.insert(out.end(), p, p + dim);
    }
    data_ = std::move(out);
}

GridSet GridSet::empty_like(const GridSet& other) {
    return GridSet(other.d_, other.n_, other.k_, other.kind_, other.denom_, {});
}

std::size_t GridSet::find(std::span<const coord_t> cube) const {
    const int dim = this->dim();
    if (static_cast<int>(cube.size()) != dim) return size();
    std::size_t lo = 0;
    std::size_t hi = size();
    while (lo < hi) {
        std::size_t mid = lo + (hi - lo) / 2;
        int c = lex_cmp(&data_[mid * dim], cube.data(), dim);
        if (c == 0) return mid;
        if (c < 0) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    return size();
}

bool GridSet::contains(std::span<const coord_t> cube) const { return find(cube) != size(); }

namespace {

enum class MergeOp { Union, Difference, Intersection };

GridSet merge(const GridSet& a, const GridSet& b, MergeOp op, const char* name) {
    require_same_grid(a, b, name);
    const int dim = a.dim();
    std::vector<coord_t> out;
    std::size_t i = 0;
    std::size_t j = 0;
    const auto& da = a.data();
    const auto& db = b.data();
    while (i < a.size() || j < b.size()) {
        int c;
        if (i == a.size()) {
            c = 1;
        } else if (j == b.size()) {
            c = -1;
        } else {
            c = lex_cmp(&da[i * dim], &db[j * dim], dim);
        }
        if (c < 0) {
            if (op != MergeOp::Intersection) out.insert(out.end(), &da[i * dim], &da[i * dim] + dim);
            ++i;
        } else if (c > 0) {
            if (op == MergeOp::Union) out.insert(out.end(), &db[j * dim], &db[j * dim] + dim);
            ++j;
        } else {
            if (op != MergeOp::Difference) out.insert(out.end(), &da[i * dim], &da[i * dim] + dim);
            ++i;
            ++j;
        }
    }
    return GridSet(a.d(), a.n(), a.generation(), a.kind(), a.denom(), std::move(out));
}

}  // namespace

GridSet set_union(const GridSet& a, const GridSet& b) { return merge(a, b, MergeOp::Union, "set_union"); }
GridSet set_difference(const GridSet& a, const GridSet& b) {
    return merge(a, b, MergeOp::Difference, "set_difference");
}
GridSet set_intersection(const GridSet& a, const GridSet& b) {
    return merge(a, b, MergeOp::Intersection, "set_intersection");
}
bool is_subset(const GridSet& a, const GridSet& b) {
    return set_intersection(a, b).size() == a.size();
}

GridSet full_grid(const BranchingSchedule& s, int k) {
    const int d = s.dim();
    const coord_t D = s.D(k);
    std::vector<coord_t> lo(static_cast<std::size_t>(d), 0);
    std::vector<coord_t> hi(static_cast<std::size_t>(d), D - 1);
    std::vector<coord_t> flat;
    for_each_in_box(lo, hi, [&](const std::vector<coord_t>& p) { flat.insert(flat.end(), p.begin(), p.end()); });
    return GridSet(d, 1, k, GridKind::DQ, D, std::move(flat));
}

GridSet root_set(int d) {
    return GridSet(d, 1, 0, GridKind::DQ, 1, std::vector<coord_t>(static_cast<std::size_t>(d), 0));
}

// ---------------------------------------------------------------------------
// Tree navigation

GridSet children(std::span<const coord_t> Q, int k, const BranchingSchedule& s) {
    const int d = s.dim();
    if (static_cast<int>(Q.size()) != d) throw std::invalid_argument("children: cube dimension mismatch");
    if (k < 0 || k >= s.depth()) throw BudgetError("children: generation " + std::to_string(k + 1) + " past schedule depth");
    const coord_t N = s.N(k + 1);
    std::vector<coord_t> lo(Q.size());
    std::vector<coord_t> hi(Q.size());
    for (std::size_t i = 0; i < Q.size(); ++i) {
        if (Q[i] < 0 || Q[i] >= s.D(k)) throw std::out_of_range("children: cube outside grid");
        lo[i] = Q[i] * N;
        hi[i] = lo[i] + N - 1;
    }
    std::vector<coord_t> flat;
    for_each_in_box(lo, hi, [&](const std::vector<coord_t>& p) { flat.insert(flat.end(), p.begin(), p.end()); });
    return GridSet(d, 1, k + 1, GridKind::DQ, s.D(k + 1), std::move(flat));
}

GridSet children(const GridSet& T, const BranchingSchedule& s) {
    if (T.kind() != GridKind::DQ || T.n() != 1) throw std::invalid_argument("children: expects a fine set in R^d");
    const int k = T.generation();
    std::vector<coord_t> flat;
    for (std::size_t i = 0; i < T.size(); ++i) {
        GridSet c = children(T[i], k, s);
        flat.insert(flat.end(), c.data().begin(), c.data().end());
    }
    return GridSet(T.d(), 1, k + 1, GridKind::DQ, s.D(k + 1), std::move(flat));
}

std::vector<coord_t> parent_of(std::span<const coord_t> Q, int k, GridKind kind,
                               const BranchingSchedule& s) {
    if (k < 1) throw std::invalid_argument("parent_of: generation 0 has no parent");
    const coord_t div = kind == GridKind::DQ ? s.N(k) : s.M(k);
    std::vector<coord_t> out(Q.begin(), Q.end());
    for (auto& c : out) c /= div;
    return out;
}

std::vector<coord_t> cell_of(std::span<const coord_t> Q, int k, const BranchingSchedule& s) {
    const coord_t div = s.N(k) / s.M(k);
    std::vector<coord_t> out(Q.begin(), Q.end());
    for (auto& c : out) c /= div;
    return out;
}

GridSet intermediary_cells(std::span<const coord_t> Q, int k, const BranchingSchedule& s) {
    const int d = s.dim();
    if (static_cast<int>(Q.size()) != d) throw std::invalid_argument("intermediary_cells: dimension mismatch");
    if (k < 0 || k >= s.depth()) throw BudgetError("intermediary_cells: schedule exhausted");
    const coord_t M = s.M(k + 1);
    std::vector<coord_t> lo(Q.size());
    std::vector<coord_t> hi(Q.size());
    for (std::size_t i = 0; i < Q.size(); ++i) {
        lo[i] = Q[i] * M;
        hi[i] = lo[i] + M - 1;
    }
    std::vector<coord_t> flat;
    for_each_in_box(lo, hi, [&](const std::vector<coord_t>& p) { flat.insert(flat.end(), p.begin(), p.end()); });
    return GridSet(d, 1, k + 1, GridKind::DR, s.R(k + 1), std::move(flat));
}

GridSet intermediary_cells(const GridSet& T, const BranchingSchedule& s) {
    if (T.kind() != GridKind::DQ || T.n() != 1) throw std::invalid_argument("intermediary_cells: expects a fine set");
    const int k = T.generation();
    std::vector<coord_t> flat;
    for (std::size_t i = 0; i < T.size(); ++i) {
        GridSet c = intermediary_cells(T[i], k, s);
        flat.insert(flat.end(), c.data().begin(), c.data().end());
    }
    return GridSet(T.d(), 1, k + 1, GridKind::DR, s.R(k + 1), std::move(flat));
}

GridSet cell_children(std::span<const coord_t> R, int k, const BranchingSchedule& s) {
    const int d = s.dim();
    const coord_t ratio = s.N(k) / s.M(k);
    std::vector<coord_t> lo(R.size());
    std::vector<coord_t> hi(R.size());
    for (std::size_t i = 0; i < R.size(); ++i) {
        lo[i] = R[i] * ratio;
        hi[i] = lo[i] + ratio - 1;
    }
    std::vector<coord_t> flat;
    for_each_in_box(lo, hi, [&](const std::vector<coord_t>& p) { flat.insert(flat.end(), p.begin(), p.end()); });
    return GridSet(d, 1, k, GridKind::DQ, s.D(k), std::move(flat));
}

// ---------------------------------------------------------------------------
// Thickening and products

GridSet thicken_points(const std::vector<std::vector<double>>& points, int k,
                       const BranchingSchedule& s, int n) {
    const int d = s.dim();
    const int dim = d * n;
    const coord_t D = s.D(k);
    std::vector<coord_t> flat;
    for (const auto& pt : points) {
        if (static_cast<int>(pt.size()) != dim) throw std::invalid_argument("thicken_points: dimension mismatch");
        std::vector<coord_t> lo(static_cast<std::size_t>(dim));
        std::vector<coord_t> hi(static_cast<std::size_t>(dim));
        for (int i = 0; i < dim; ++i) {
            const double t = pt[static_cast<std::size_t>(i)];
            if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("thicken_points: point outside [0,1]");
            const double x = t * static_cast<double>(D);
            const double fl = std::floor(x);
            coord_t base = static_cast<coord_t>(fl);
            if (fl == x) {
                lo[i] = std::max<coord_t>(0, base - 1);
                hi[i] = std::min<coord_t>(D - 1, base);
            } else {
                lo[i] = hi[i] = std::min<coord_t>(D - 1, base);
            }
        }
        for_each_in_box(lo, hi, [&](const std::vector<coord_t>& p) { flat.insert(flat.end(), p.begin(), p.end()); });
    }
    return GridSet(d, n, k, GridKind::DQ, D, std::move(flat));
}

GridSet regrid(const GridSet& E, int k, GridKind kind, coord_t target_denom) {
    const int dim = E.dim();
    const i128 De = E.denom();
    const i128 Dt = target_denom;
    std::vector<coord_t> flat;
    std::vector<coord_t> lo(static_cast<std::size_t>(dim));
    std::vector<coord_t> hi(static_cast<std::size_t>(dim));
    for (std::size_t c = 0; c < E.size(); ++c) {
        auto cube = E[c];
        for (int i = 0; i < dim; ++i) {
            const i128 a = cube[static_cast<std::size_t>(i)];
            // Open intervals (a/De, (a+1)/De) and (b/Dt, (b+1)/Dt) intersect.
            const i128 l = (a * Dt) / De;
            const i128 h = ((a + 1) * Dt + De - 1) / De - 1;
            lo[i] = static_cast<coord_t>(l);
            hi[i] = static_cast<coord_t>(std::min<i128>(h, Dt - 1));
        }
        for_each_in_box(lo, hi, [&](const std::vector<coord_t>& p) { flat.insert(flat.end(), p.begin(), p.end()); });
    }
    return GridSet(E.d(), E.n(), k, kind, target_denom, std::move(flat));
}

GridSet thicken(const GridSet& E, int k, const BranchingSchedule& s) {
    return regrid(E, k, GridKind::DQ, s.D(k));
}

GridSet product(const std::vector<GridSet>& sets) {
    if (sets.empty()) throw std::invalid_argument("product: no factors");
    const GridSet& first = sets.front();
    int n_total = 0;
    for (const auto& g : sets) {
        if (g.d() != first.d() || g.generation() != first.generation() || g.kind() != first.kind() ||
            g.denom() != first.denom()) {
            throw std::invalid_argument("product: factors differ in generation or grid");
        }
        n_total += g.n();
    }
    std::vector<coord_t> flat;
    bool any_empty = std::any_of(sets.begin(), sets.end(), [](const GridSet& g) { return g.empty(); });
    if (!any_empty) {
        std::vector<std::size_t> idx(sets.size(), 0);
        while (true) {
            for (std::size_t f = 0; f < sets.size(); ++f) {
                auto c = sets[f][idx[f]];
                flat.insert(flat.end(), c.begin(), c.end());
            }
            std::size_t f = sets.size();
            bool done = true;
            while (f > 0) {
                --f;
                if (++idx[f] < sets[f].size()) {
                    done = false;
                    break;
                }
                idx[f] = 0;
            }
            if (done) break;
        }
    }
    return GridSet(first.d(), n_total, first.generation(), first.kind(), first.denom(), std::move(flat));
}

bool strongly_nondiagonal(std::span<const coord_t> cube, int d, int n) {
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (std::equal(cube.begin() + i * d, cube.begin() + (i + 1) * d, cube.begin() + j * d)) {
                return false;
            }
        }
    }
    return true;
}

GridSet nondiagonal_filter(const GridSet& B, int n) {
    if (n < 1 || B.dim() % n != 0) throw std::invalid_argument("nondiagonal_filter: dimension not divisible by n");
    const int d = B.dim() / n;
    std::vector<coord_t> flat;
    for (std::size_t i = 0; i < B.size(); ++i) {
        auto c = B[i];
        if (strongly_nondiagonal(c, d, n)) flat.insert(flat.end(), c.begin(), c.end());
    }
    return GridSet(B.d(), B.n(), B.generation(), B.kind(), B.denom(), std::move(flat));
}

// ---------------------------------------------------------------------------
// Schedules

std::vector<double> growth_diagnostics(const BranchingSchedule& s) {
    std::vector<double> out;
    for (int k = 1; k < s.depth(); ++k) {
        out.push_back(std::log(static_cast<double>(s.N(k + 1))) / std::log(static_cast<double>(s.D(k))));
    }
    return out;
}

ScheduleResult make_schedule(const ScheduleSpec& spec) {
    using Mode = ScheduleSpec::Mode;
    std::vector<coord_t> N;
    std::vector<coord_t> M;
    auto intermediary = [&](int k, coord_t n) -> coord_t {
        return spec.intermediary ? spec.intermediary(k, n) : n;
    };
    switch (spec.mode) {
        case Mode::Explicit: {
            N = spec.N;
            M = spec.M.empty() ? spec.N : spec.M;
            break;
        }
        case Mode::Constant: {
            if (spec.depth < 0) throw ScheduleError("make_schedule: negative depth");
            for (int k = 1; k <= spec.depth; ++k) {
                N.push_back(spec.constant_N);
                M.push_back(spec.constant_M == 0 ? spec.constant_N : spec.constant_M);
            }
            break;
        }
        case Mode::Subhyperdyadic: {
            if (!spec.psi) throw ScheduleError("make_schedule: subhyperdyadic mode needs psi");
            double prev = INFINITY;
            for (int k = 1; k <= spec.depth; ++k) {
                const double p = spec.psi(k);
                if (!(p > 0.0) || p > prev + 1e-12) {
                    throw ScheduleError("make_schedule: psi must be positive and non-increasing");
                }
                if (p + 1e-12 < std::log2(static_cast<double>(k)) / k) {
                    throw ScheduleError("make_schedule: psi(k) below log2(k)/k at k=" + std::to_string(k));
                }
                prev = p;
                const double e = std::floor(std::exp2(k * p) + 1e-9);
                if (e > 62.0) throw BudgetError("make_schedule: N_" + std::to_string(k) + " exceeds 2^62");
                const coord_t n = coord_t{1} << std::max(1, static_cast<int>(e));
                N.push_back(n);
                M.push_back(intermediary(k, n));
            }
            break;
        }
        case Mode::RapidDecay: {
            if (!spec.lower_bound) throw ScheduleError("make_schedule: rapid-decay mode needs lower bounds");
            coord_t D = 1;
            for (int k = 1; k <= spec.depth; ++k) {
                const double bound = std::max(2.0, spec.lower_bound(k, D));
                if (!(bound < std::ldexp(1.0, 62))) {
                    throw BudgetError("make_schedule: N_" + std::to_string(k) + " lower bound exceeds 2^62");
                }
                coord_t n = static_cast<coord_t>(std::ceil(bound - 1e-9));
                if (spec.require_power_of_two) n = next_power_of_two(n);
                N.push_back(n);
                M.push_back(intermediary(k, n));
                D = checked_mul(D, n, "make_schedule");
            }
            break;
        }
    }
    if (spec.require_power_of_two) {
        for (std::size_t i = 0; i < N.size(); ++i) {
            if (!is_power_of_two(N[i]) || !is_power_of_two(M[i])) {
                throw ScheduleError("make_schedule: entry at generation " + std::to_string(i + 1) +
                                    " is not a power of two");
            }
        }
    }
    BranchingSchedule sched(spec.d, std::move(N), std::move(M), spec.budget_bits);
    ScheduleResult out{sched, growth_diagnostics(sched)};
    return out;
}

// ---------------------------------------------------------------------------
// File format

void write_gridset(std::ostream& os, const GridSet& g) {
    os << "gridset v1 d=" << g.d() << " n=" << g.n() << " k=" << g.generation()
       << " kind=" << to_string(g.kind()) << " D=" << g.denom() << '\n';
    const int dim = g.dim();
    char buf[32];
    std::string line;
    for (std::size_t i = 0; i < g.size(); ++i) {
        line.clear();
        auto c = g[i];
        for (int j = 0; j < dim; ++j) {
            if (j) line.push_back(' ');
            auto [p, ec] = std::to_chars(buf, buf + sizeof buf, c[static_cast<std::size_t>(j)]);
            line.append(buf, p);
        }
        line.push_back('\n');
        os << line;
    }
}

namespace {

long long parse_field(const std::string& token, const std::string& key) {
    const std::string prefix = key + "=";
    if (token.rfind(prefix, 0) != 0) throw FormatError("gridset header: expected " + prefix);
    const std::string v = token.substr(prefix.size());
    long long out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw FormatError("gridset header: bad value for " + key);
    return out;
}

}  // namespace

GridSet read_gridset(std::istream& is) {
    std::string header;
    if (!std::getline(is, header)) throw FormatError("gridset: missing header");
    std::istringstream hs(header);
    std::string magic, version, td, tn, tk, tkind, tD, extra;
    hs >> magic >> version >> td >> tn >> tk >> tkind >> tD;
    if (magic != "gridset" || version != "v1") throw FormatError("gridset: bad magic");
    if (hs >> extra) throw FormatError("gridset: trailing header tokens");
    const int d = static_cast<int>(parse_field(td, "d"));
    const int n = static_cast<int>(parse_field(tn, "n"));
    const int k = static_cast<int>(parse_field(tk, "k"));
    if (tkind.rfind("kind=", 0) != 0) throw FormatError("gridset header: expected kind=");
    const GridKind kind = grid_kind_from_string(tkind.substr(5));
    const coord_t D = parse_field(tD, "D");
    if (d < 1 || n < 1) throw FormatError("gridset header: non-positive dimension");
    const int dim = d * n;
    std::vector<coord_t> flat;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const char* p = line.data();
        const char* end = p + line.size();
        int count = 0;
        while (p < end) {
            while (p < end && *p == ' ') ++p;
            if (p == end) break;
            coord_t v = 0;
            auto [q, ec] = std::from_chars(p, end, v);
            if (ec != std::errc()) throw FormatError("gridset: bad coordinate in '" + line + "'");
            flat.push_back(v);
            ++count;
            p = q;
        }
        if (count != dim) throw FormatError("gridset: wrong coordinate count in '" + line + "'");
    }
    GridSet g;
    try {
        g = GridSet(d, n, k, kind, D, flat);
    } catch (const std::exception& e) {
        throw FormatError(std::string("gridset: ") + e.what());
    }
    // Files must already be sorted and duplicate-free so that reading is bit-exact.
    if (g.data() != flat) throw FormatError("gridset: cubes not strictly increasing");
    return g;
}

std::string gridset_to_string(const GridSet& g) {
    std::ostringstream os;
    write_gridset(os, g);
    return os.str();
}

GridSet gridset_from_string(const std::string& text) {
    std::istringstream is(text);
    return read_gridset(is);
}

void save_gridset(const std::string& path, const GridSet& g) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    write_gridset(os, g);
    if (!os) throw std::runtime_error("write failed: " + path);
}

GridSet load_gridset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_gridset(is);
}

}  // namespace fav
