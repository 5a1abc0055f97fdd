#include "fractal_avoid/configs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace fav {

namespace {

constexpr std::uint64_t kEnumerationCap = std::uint64_t{1} << 24;

std::uint64_t saturating_pow(coord_t base, int exp) {
    long double v = 1;
    for (int i = 0; i < exp; ++i) v *= static_cast<long double>(base);
    return v > 1.8e19L ? ~std::uint64_t{0} : static_cast<std::uint64_t>(v);
}

void check_candidates(const CoverOracle& o, coord_t D, const GridSet& cand) {
    if (cand.d() != o.d() || cand.n() != 1 || cand.denom() != D || cand.kind() != GridKind::DQ) {
        throw std::invalid_argument("cover_within: candidates must be a d-dimensional fine set on the same grid");
    }
}

// Coordinates of a sorted 1-d candidate set within [lo, hi].
std::pair<std::size_t, std::size_t> range_1d(const std::vector<coord_t>& sorted, coord_t lo, coord_t hi) {
    auto a = std::lower_bound(sorted.begin(), sorted.end(), lo);
    auto b = std::upper_bound(sorted.begin(), sorted.end(), hi);
    if (b < a) b = a;
    return {static_cast<std::size_t>(a - sorted.begin()), static_cast<std::size_t>(b - sorted.begin())};
}

// Generation-k cubes meeting a closed point, on a grid with denominator D.
void point_cubes(const std::vector<double>& pt, coord_t D, std::vector<coord_t>& flat) {
    const std::size_t dim = pt.size();
    std::vector<coord_t> lo(dim), hi(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        const double x = pt[i] * static_cast<double>(D);
        const double fl = std::floor(x);
        const coord_t base = static_cast<coord_t>(fl);
        if (fl == x) {
            lo[i] = std::max<coord_t>(0, base - 1);
            hi[i] = std::min<coord_t>(D - 1, base);
        } else {
            lo[i] = hi[i] = std::min<coord_t>(D - 1, base);
        }
    }
    std::vector<coord_t> cur(lo);
    while (true) {
        flat.insert(flat.end(), cur.begin(), cur.end());
        std::size_t axis = dim;
        bool done = true;
        while (axis > 0) {
            --axis;
            if (cur[axis] < hi[axis]) {
                ++cur[axis];
                done = false;
                break;
            }
            cur[axis] = lo[axis];
        }
        if (done) break;
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// CoverOracle defaults

GridSet CoverOracle::empty_cover(int k, coord_t D) const {
    return GridSet(d(), n(), k, GridKind::DQ, D, {});
}

GridSet CoverOracle::cover(int k, coord_t D) const {
    const int dim = d() * n();
    if (saturating_pow(D, dim) > kEnumerationCap) {
        throw BudgetError("cover: grid too large for exhaustive enumeration in oracle " + tag());
    }
    std::vector<coord_t> cur(static_cast<std::size_t>(dim), 0);
    std::vector<coord_t> flat;
    while (true) {
        if (covers(k, D, cur)) flat.insert(flat.end(), cur.begin(), cur.end());
        int axis = dim - 1;
        while (axis >= 0 && ++cur[static_cast<std::size_t>(axis)] == D) {
            cur[static_cast<std::size_t>(axis)] = 0;
            --axis;
        }
        if (axis < 0) break;
    }
    return GridSet(d(), n(), k, GridKind::DQ, D, std::move(flat));
}

GridSet CoverOracle::cover_within(int k, coord_t D, const GridSet& cand) const {
    check_candidates(*this, D, cand);
    const int dd = d();
    const int nn = n();
    const std::uint64_t tuples = saturating_pow(static_cast<coord_t>(cand.size()), nn);
    const std::uint64_t grid = saturating_pow(D, dd * nn);
    std::vector<coord_t> flat;
    if (tuples <= grid && tuples <= kEnumerationCap * 4) {
        std::vector<std::size_t> idx(static_cast<std::size_t>(nn), 0);
        std::vector<coord_t> cube(static_cast<std::size_t>(dd * nn));
        if (cand.empty()) return empty_cover(k, D);
        while (true) {
            for (int j = 0; j < nn; ++j) {
                auto c = cand[idx[static_cast<std::size_t>(j)]];
                std::copy(c.begin(), c.end(), cube.begin() + j * dd);
            }
            if (covers(k, D, cube)) flat.insert(flat.end(), cube.begin(), cube.end());
            int j = nn - 1;
            while (j >= 0 && ++idx[static_cast<std::size_t>(j)] == cand.size()) {
                idx[static_cast<std::size_t>(j)] = 0;
                --j;
            }
            if (j < 0) break;
        }
        return GridSet(dd, nn, k, GridKind::DQ, D, std::move(flat));
    }
    GridSet full = cover(k, D);
    for (std::size_t i = 0; i < full.size(); ++i) {
        auto c = full[i];
        bool ok = true;
        for (int j = 0; j < nn && ok; ++j) ok = cand.contains(c.subspan(static_cast<std::size_t>(j * dd), static_cast<std::size_t>(dd)));
        if (ok) flat.insert(flat.end(), c.begin(), c.end());
    }
    return GridSet(dd, nn, k, GridKind::DQ, D, std::move(flat));
}

// ---------------------------------------------------------------------------
// Explicit lists

namespace {

class ExplicitOracle final : public CoverOracle {
public:
    ExplicitOracle(int d, int n, double s, std::map<int, GridSet> lists, std::string tag)
        : d_(d), n_(n), s_(s), lists_(std::move(lists)), tag_(std::move(tag)) {
        for (const auto& [k, g] : lists_) {
            if (g.d() != d_ || g.n() != n_ || g.generation() != k || g.kind() != GridKind::DQ) {
                throw std::invalid_argument("explicit_cover: list for generation " + std::to_string(k) +
                                            " does not match (d, n, k)");
            }
        }
    }
    int d() const override { return d_; }
    int n() const override { return n_; }
    double s() const override { return s_; }
    std::string tag() const override { return tag_; }

    bool covers(int k, coord_t D, std::span<const coord_t> cube) const override {
        auto it = lists_.find(k);
        if (it == lists_.end()) return false;
        check_denom(it->second, D);
        return it->second.contains(cube);
    }
    GridSet cover(int k, coord_t D) const override {
        auto it = lists_.find(k);
        if (it == lists_.end()) return empty_cover(k, D);
        check_denom(it->second, D);
        return it->second;
    }
    GridSet cover_within(int k, coord_t D, const GridSet& cand) const override {
        check_candidates(*this, D, cand);
        GridSet full = cover(k, D);
        std::vector<coord_t> flat;
        for (std::size_t i = 0; i < full.size(); ++i) {
            auto c = full[i];
            bool ok = true;
            for (int j = 0; j < n_ && ok; ++j) ok = cand.contains(c.subspan(static_cast<std::size_t>(j * d_), static_cast<std::size_t>(d_)));
            if (ok) flat.insert(flat.end(), c.begin(), c.end());
        }
        return GridSet(d_, n_, k, GridKind::DQ, D, std::move(flat));
    }

private:
    static void check_denom(const GridSet& g, coord_t D) {
        if (g.denom() != D) {
            throw std::invalid_argument("explicit_cover: stored list has D=" + std::to_string(g.denom()) +
                                        ", requested D=" + std::to_string(D));
        }
    }
    int d_, n_;
    double s_;
    std::map<int, GridSet> lists_;
    std::string tag_;
};

}  // namespace

std::shared_ptr<CoverOracle> explicit_cover(int d, int n, double s, std::map<int, GridSet> per_generation,
                                            std::string tag) {
    return std::make_shared<ExplicitOracle>(d, n, s, std::move(per_generation), std::move(tag));
}

// ---------------------------------------------------------------------------
// Zero sets

namespace {

class ZeroSetOracle final : public CoverOracle {
public:
    explicit ZeroSetOracle(ZeroSetSpec spec) : spec_(std::move(spec)) {
        if (!spec_.g) throw std::invalid_argument("zero_set_cover: missing function");
        if (!(spec_.lipschitz >= 0)) throw std::invalid_argument("zero_set_cover: missing Lipschitz bound");
        if (spec_.m < 1 || spec_.m > spec_.d * spec_.n) throw std::invalid_argument("zero_set_cover: bad codimension");
    }
    int d() const override { return spec_.d; }
    int n() const override { return spec_.n; }
    double s() const override { return spec_.d * spec_.n - spec_.m; }
    std::string tag() const override { return spec_.tag; }

    bool covers(int, coord_t D, std::span<const coord_t> cube) const override {
        return min_corner_norm(D, cube) <= threshold(D);
    }

    GridSet cover(int k, coord_t D) const override {
        std::vector<coord_t> flat;
        search(D, nullptr, flat);
        return GridSet(d(), n(), k, GridKind::DQ, D, std::move(flat));
    }

    GridSet cover_within(int k, coord_t D, const GridSet& cand) const override {
        check_candidates(*this, D, cand);
        std::vector<coord_t> flat;
        if (!cand.empty()) search(D, &cand, flat);
        return GridSet(d(), n(), k, GridKind::DQ, D, std::move(flat));
    }

private:
    double threshold(coord_t D) const {
        return spec_.lipschitz * std::sqrt(static_cast<double>(spec_.d * spec_.n)) / static_cast<double>(D);
    }

    double norm_at(const double* x) const {
        std::vector<double> out(static_cast<std::size_t>(spec_.m));
        spec_.g(x, out.data());
        double s2 = 0;
        for (double v : out) s2 += v * v;
        return std::sqrt(s2);
    }

    double min_corner_norm(coord_t D, std::span<const coord_t> cube) const {
        const int dim = spec_.d * spec_.n;
        std::vector<double> x(static_cast<std::size_t>(dim));
        double best = INFINITY;
        for (unsigned mask = 0; mask < (1u << dim); ++mask) {
            for (int i = 0; i < dim; ++i) {
                const coord_t c = cube[static_cast<std::size_t>(i)] + ((mask >> i) & 1u);
                x[static_cast<std::size_t>(i)] = static_cast<double>(c) / static_cast<double>(D);
            }
            best = std::min(best, norm_at(x.data()));
        }
        return best;
    }

    // Branch and bound over index boxes; a box is dropped when the Lipschitz bound from its
    // centre rules out every corner of every cube inside it.
    void search(coord_t D, const GridSet* cand, std::vector<coord_t>& flat) const {
        const int dim = spec_.d * spec_.n;
        const double thr = threshold(D);
        const double L = spec_.lipschitz;
        std::vector<std::vector<coord_t>> axis_values;
        if (cand != nullptr) {
            axis_values.resize(static_cast<std::size_t>(spec_.d));
            for (int a = 0; a < spec_.d; ++a) {
                for (std::size_t i = 0; i < cand->size(); ++i) axis_values[static_cast<std::size_t>(a)].push_back((*cand)[i][static_cast<std::size_t>(a)]);
                auto& v = axis_values[static_cast<std::size_t>(a)];
                std::sort(v.begin(), v.end());
                v.erase(std::unique(v.begin(), v.end()), v.end());
            }
        }
        std::vector<coord_t> lo(static_cast<std::size_t>(dim), 0), hi(static_cast<std::size_t>(dim), D - 1);
        std::vector<double> centre(static_cast<std::size_t>(dim));
        std::function<void()> rec = [&]() {
            if (cand != nullptr) {
                for (int i = 0; i < dim; ++i) {
                    const auto& v = axis_values[static_cast<std::size_t>(i % spec_.d)];
                    auto r = range_1d(v, lo[static_cast<std::size_t>(i)], hi[static_cast<std::size_t>(i)]);
                    if (r.first == r.second) return;
                }
            }
            double diag2 = 0;
            bool single = true;
            int widest = 0;
            coord_t widest_len = 0;
            for (int i = 0; i < dim; ++i) {
                const auto ui = static_cast<std::size_t>(i);
                const coord_t len = hi[ui] - lo[ui] + 1;
                if (len > 1) single = false;
                if (len > widest_len) {
                    widest_len = len;
                    widest = i;
                }
                centre[ui] = (static_cast<double>(lo[ui]) + static_cast<double>(hi[ui]) + 1.0) / (2.0 * static_cast<double>(D));
                const double side = static_cast<double>(len) / static_cast<double>(D);
                diag2 += side * side;
            }
            const double reach = L * 0.5 * std::sqrt(diag2);
            const double gc = norm_at(centre.data());
            if (gc - reach > thr + 1e-9 * (gc + reach + thr) + 1e-300) return;
            if (single) {
                if (min_corner_norm(D, lo) > thr) return;
                if (cand != nullptr) {
                    for (int j = 0; j < spec_.n; ++j) {
                        std::span<const coord_t> block(lo.data() + j * spec_.d, static_cast<std::size_t>(spec_.d));
                        if (!cand->contains(block)) return;
                    }
                }
                flat.insert(flat.end(), lo.begin(), lo.end());
                return;
            }
            const auto w = static_cast<std::size_t>(widest);
            const coord_t save_lo = lo[w];
            const coord_t save_hi = hi[w];
            const coord_t mid = save_lo + widest_len / 2;
            hi[w] = mid - 1;
            rec();
            hi[w] = save_hi;
            lo[w] = mid;
            rec();
            lo[w] = save_lo;
        };
        rec();
    }

    ZeroSetSpec spec_;
};

}  // namespace

std::shared_ptr<CoverOracle> zero_set_cover(ZeroSetSpec spec) {
    return std::make_shared<ZeroSetOracle>(std::move(spec));
}

// ---------------------------------------------------------------------------
// Curves

CurveSpec::CurveSpec(std::vector<double> t, std::vector<std::vector<double>> f) : t_(std::move(t)), f_(std::move(f)) {
    if (t_.size() < 2 || t_.size() != f_.size()) throw std::invalid_argument("curve: need at least two samples");
    if (t_.front() != 0.0 || t_.back() != 1.0) throw std::invalid_argument("curve: samples must span [0,1]");
    const std::size_t c = f_.front().size();
    if (c == 0) throw std::invalid_argument("curve: empty value rows");
    for (std::size_t i = 0; i < t_.size(); ++i) {
        if (f_[i].size() != c) throw std::invalid_argument("curve: ragged value rows");
        if (i > 0) {
            if (!(t_[i] > t_[i - 1])) throw std::invalid_argument("curve: abscissae must increase");
            double d2 = 0;
            for (std::size_t j = 0; j < c; ++j) {
                const double df = f_[i][j] - f_[i - 1][j];
                d2 += df * df;
            }
            lip_ = std::max(lip_, std::sqrt(d2) / (t_[i] - t_[i - 1]));
        }
    }
}

CurveSpec CurveSpec::parse(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::vector<double> t;
    std::vector<std::vector<double>> f;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!ls.eof()) throw FormatError("curve: non-numeric token in '" + line + "'");
        if (row.empty()) continue;
        if (row.size() < 2) throw FormatError("curve: expected 't f1 [f2 ...]'");
        t.push_back(row.front());
        f.emplace_back(row.begin() + 1, row.end());
    }
    return CurveSpec(std::move(t), std::move(f));
}

CurveSpec CurveSpec::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open curve file " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
}

CurveSpec CurveSpec::sample(const std::function<std::vector<double>(double)>& f, int samples) {
    if (samples < 1) throw std::invalid_argument("curve: need at least one segment");
    std::vector<double> t;
    std::vector<std::vector<double>> v;
    for (int i = 0; i <= samples; ++i) {
        const double x = static_cast<double>(i) / samples;
        t.push_back(x);
        v.push_back(f(x));
    }
    return CurveSpec(std::move(t), std::move(v));
}

void CurveSpec::eval(double t, double* out) const {
    auto it = std::upper_bound(t_.begin(), t_.end(), t);
    std::size_t i = it == t_.begin() ? 1 : static_cast<std::size_t>(it - t_.begin());
    i = std::min(i, t_.size() - 1);
    const double a = t_[i - 1];
    const double b = t_[i];
    const double w = (t - a) / (b - a);
    for (std::size_t j = 0; j < f_[i].size(); ++j) out[j] = f_[i - 1][j] + w * (f_[i][j] - f_[i - 1][j]);
}

std::vector<double> CurveSpec::eval(double t) const {
    std::vector<double> out(static_cast<std::size_t>(codim()));
    eval(t, out.data());
    return out;
}

// ---------------------------------------------------------------------------
// Isosceles triples

namespace {

class IsoscelesOracle final : public CoverOracle {
public:
    IsoscelesOracle(CurveSpec curve, IsoscelesCoverOptions opts) : curve_(std::move(curve)) {
        const double L = curve_.lipschitz();
        if (!(L < 1.0)) throw HypothesisError("isosceles_cover: Lipschitz constant must be < 1");
        slack_ = opts.slack > 0 ? opts.slack : 3.0 * std::sqrt(1.0 + L * L);
    }
    int d() const override { return 1; }
    int n() const override { return 3; }
    double s() const override { return 2.0; }
    std::string tag() const override { return "isosceles"; }

    // (apex, base_1, base_2) positions for the three labelings.
    static constexpr int kLabel[3][3] = {{2, 0, 1}, {1, 0, 2}, {0, 1, 2}};

    bool covers(int, coord_t D, std::span<const coord_t> cube) const override {
        const Base tables(curve_, D, false);
        for (const auto& lab : kLabel) {
            if (apex_hit(tables, cube[lab[1]], cube[lab[2]], cube[lab[0]])) return true;
        }
        return false;
    }

    GridSet cover(int k, coord_t D) const override {
        if (saturating_pow(D, 2) > kEnumerationCap) throw BudgetError("isosceles_cover: grid too large to materialize");
        const Base tables(curve_, D, true);
        std::vector<coord_t> flat;
        std::vector<coord_t> all(static_cast<std::size_t>(D));
        for (coord_t i = 0; i < D; ++i) all[static_cast<std::size_t>(i)] = i;
        emit(tables, all, flat);
        return GridSet(1, 3, k, GridKind::DQ, D, std::move(flat));
    }

    GridSet cover_within(int k, coord_t D, const GridSet& cand) const override {
        check_candidates(*this, D, cand);
        const Base tables(curve_, D, false);
        std::vector<coord_t> flat;
        emit(tables, cand.data(), flat);
        return GridSet(1, 3, k, GridKind::DQ, D, std::move(flat));
    }

    std::uint64_t cover_count(int, coord_t D) const override {
        if (saturating_pow(D, 3) > (std::uint64_t{1} << 30)) throw BudgetError("isosceles_cover: count too expensive");
        const Base tables(curve_, D, true);
        std::uint64_t count = 0;
        for (coord_t a = 0; a < D; ++a) {
            for (coord_t b = 0; b < D; ++b) {
                auto [lo, hi] = apex_range(tables, a, b);
                for (coord_t c = 0; c < D; ++c) {
                    if ((c >= lo && c <= hi) || apex_hit(tables, a, c, b) || apex_hit(tables, b, c, a)) ++count;
                }
            }
        }
        return count;
    }

private:
    // Curve values at grid points i/D and at cell midpoints (i + 1/2)/D.
    struct Base {
        Base(const CurveSpec& c, coord_t D_, bool tabulate) : curve(c), D(D_), codim(c.codim()), tab(tabulate) {
            if (tab) {
                grid.resize(static_cast<std::size_t>((D + 1) * codim));
                mid.resize(static_cast<std::size_t>(D * codim));
                for (coord_t i = 0; i <= D; ++i) c.eval(static_cast<double>(i) / static_cast<double>(D), &grid[static_cast<std::size_t>(i * codim)]);
                for (coord_t i = 0; i < D; ++i) c.eval((static_cast<double>(i) + 0.5) / static_cast<double>(D), &mid[static_cast<std::size_t>(i * codim)]);
            }
        }
        void at_grid(coord_t i, double* out) const {
            if (tab) {
                std::copy_n(&grid[static_cast<std::size_t>(i * codim)], codim, out);
            } else {
                curve.eval(static_cast<double>(i) / static_cast<double>(D), out);
            }
        }
        void at_mid(coord_t i, double* out) const {
            if (tab) {
                std::copy_n(&mid[static_cast<std::size_t>(i * codim)], codim, out);
            } else {
                curve.eval((static_cast<double>(i) + 0.5) / static_cast<double>(D), out);
            }
        }
        const CurveSpec& curve;
        coord_t D;
        int codim;
        bool tab;
        std::vector<double> grid, mid;
    };

    // Signed h at grid point i for base midpoints u, v, oriented to increase with i.
    struct Plane {
        double x1, x2, mx;
        double f1[8], f2[8], mf[8];
        double sign;
    };

    Plane plane(const Base& t, coord_t u, coord_t v) const {
        Plane p{};
        p.x1 = (static_cast<double>(u) + 0.5) / static_cast<double>(t.D);
        p.x2 = (static_cast<double>(v) + 0.5) / static_cast<double>(t.D);
        p.mx = 0.5 * (p.x1 + p.x2);
        t.at_mid(u, p.f1);
        t.at_mid(v, p.f2);
        for (int j = 0; j < t.codim; ++j) p.mf[j] = 0.5 * (p.f1[j] + p.f2[j]);
        p.sign = p.x2 > p.x1 ? 1.0 : -1.0;
        return p;
    }

    double h_at(const Base& t, const Plane& p, coord_t i) const {
        double fy[8];
        t.at_grid(i, fy);
        const double y = static_cast<double>(i) / static_cast<double>(t.D);
        double h = (y - p.mx) * (p.x2 - p.x1);
        for (int j = 0; j < t.codim; ++j) h += (fy[j] - p.mf[j]) * (p.f2[j] - p.f1[j]);
        return p.sign * h;
    }

    // Apex cells [lo, hi] for the ordered base pair (u, v); lo > hi when empty.
    std::pair<coord_t, coord_t> apex_range(const Base& t, coord_t u, coord_t v) const {
        if (u == v) return {0, t.D - 1};
        const Plane p = plane(t, u, v);
        const double tau = slack_ / static_cast<double>(t.D);
        // First grid index i in [1, D] with h(i) >= -tau.
        coord_t a = 1, b = t.D + 1;
        while (a < b) {
            coord_t m = a + (b - a) / 2;
            if (h_at(t, p, m) >= -tau) {
                b = m;
            } else {
                a = m + 1;
            }
        }
        if (a > t.D) return {1, 0};
        const coord_t lo = a - 1;
        // Last grid index i in [0, D-1] with h(i) <= tau.
        coord_t c = 0, e = t.D;
        while (c < e) {
            coord_t m = c + (e - c) / 2;
            if (h_at(t, p, m) <= tau) {
                c = m + 1;
            } else {
                e = m;
            }
        }
        if (c == 0) return {1, 0};
        return {lo, c - 1};
    }

    bool apex_hit(const Base& t, coord_t u, coord_t v, coord_t j) const {
        if (u == v) return true;
        const Plane p = plane(t, u, v);
        const double tau = slack_ / static_cast<double>(t.D);
        return h_at(t, p, j + 1) >= -tau && h_at(t, p, j) <= tau;
    }

    void emit(const Base& t, const std::vector<coord_t>& cand, std::vector<coord_t>& flat) const {
        coord_t cube[3];
        for (const auto& lab : kLabel) {
            for (coord_t u : cand) {
                for (coord_t v : cand) {
                    auto [lo, hi] = apex_range(t, u, v);
                    if (lo > hi) continue;
                    auto r = range_1d(cand, lo, hi);
                    for (std::size_t i = r.first; i < r.second; ++i) {
                        cube[lab[0]] = cand[i];
                        cube[lab[1]] = u;
                        cube[lab[2]] = v;
                        flat.insert(flat.end(), cube, cube + 3);
                    }
                }
            }
        }
    }

    CurveSpec curve_;
    double slack_;
};

}  // namespace

std::shared_ptr<CoverOracle> isosceles_cover(CurveSpec curve, IsoscelesCoverOptions opts) {
    if (curve.codim() > 8) throw std::invalid_argument("isosceles_cover: at most 8 curve components");
    return std::make_shared<IsoscelesOracle>(std::move(curve), opts);
}

// ---------------------------------------------------------------------------
// Sumsets

namespace {

class SumsetOracle final : public CoverOracle {
public:
    explicit SumsetOracle(OraclePtr Y) : Y_(std::move(Y)) {
        if (!Y_ || Y_->n() != 1) throw std::invalid_argument("sumset_cover: Y must have arity 1");
    }
    int d() const override { return Y_->d(); }
    int n() const override { return 2; }
    double s() const override { return Y_->d() + Y_->s(); }
    std::string tag() const override { return "sumset(" + Y_->tag() + ")"; }

    bool covers(int k, coord_t D, std::span<const coord_t> cube) const override {
        const GridSet yc = y_cover(k, D);
        const int dd = d();
        for (std::size_t i = 0; i < yc.size(); ++i) {
            auto c = yc[i];
            bool c1 = true, c2 = true;
            for (int a = 0; a < dd; ++a) {
                const auto ua = static_cast<std::size_t>(a);
                const coord_t sum = cube[ua] + cube[ua + static_cast<std::size_t>(dd)];
                if (c[ua] < sum - 1 || c[ua] > sum + 2) c1 = false;
                const coord_t twice = 2 * cube[ua + static_cast<std::size_t>(dd)];
                if (c[ua] < twice - 1 || c[ua] > twice + 2) c2 = false;
            }
            if (c1 || c2) return true;
        }
        return false;
    }

    GridSet cover(int k, coord_t D) const override {
        const int dd = d();
        if (saturating_pow(D, dd) > kEnumerationCap) throw BudgetError("sumset_cover: grid too large to materialize");
        std::vector<coord_t> all;
        for (coord_t i = 0; i < D; ++i) all.push_back(i);
        std::vector<coord_t> flat;
        build(k, D, nullptr, flat);
        return GridSet(dd, 2, k, GridKind::DQ, D, std::move(flat));
    }

    GridSet cover_within(int k, coord_t D, const GridSet& cand) const override {
        check_candidates(*this, D, cand);
        std::vector<coord_t> flat;
        build(k, D, &cand, flat);
        return GridSet(d(), 2, k, GridKind::DQ, D, std::move(flat));
    }

private:
    GridSet y_cover(int k, coord_t D) const {
        std::lock_guard<std::mutex> lock(mu_);
        if (!cached_ || cached_k_ != k || cached_D_ != D) {
            cache_ = Y_->cover(k, D);
            cached_ = true;
            cached_k_ = k;
            cached_D_ = D;
        }
        return cache_;
    }

    // Calls fn on every grid point of the box [lo, hi] clipped to [0, D).
    template <class Fn>
    static void box(std::vector<coord_t> lo, std::vector<coord_t> hi, coord_t D, Fn&& fn) {
        const std::size_t dim = lo.size();
        for (std::size_t i = 0; i < dim; ++i) {
            lo[i] = std::max<coord_t>(lo[i], 0);
            hi[i] = std::min<coord_t>(hi[i], D - 1);
            if (lo[i] > hi[i]) return;
        }
        std::vector<coord_t> cur(lo);
        while (true) {
            fn(cur);
            std::size_t axis = dim;
            bool done = true;
            while (axis > 0) {
                --axis;
                if (cur[axis] < hi[axis]) {
                    ++cur[axis];
                    done = false;
                    break;
                }
                cur[axis] = lo[axis];
            }
            if (done) return;
        }
    }

    void build(int k, coord_t D, const GridSet* cand, std::vector<coord_t>& flat) const {
        const GridSet yc = y_cover(k, D);
        const int dd = d();
        const auto udd = static_cast<std::size_t>(dd);
        // Enumerate x over candidates or the whole grid.
        std::vector<coord_t> xs;
        if (cand != nullptr) {
            xs = cand->data();
        } else {
            std::vector<coord_t> lo(udd, 0), hi(udd, D - 1);
            box(lo, hi, D, [&](const std::vector<coord_t>& p) { xs.insert(xs.end(), p.begin(), p.end()); });
        }
        const std::size_t nx = xs.size() / udd;
        auto push = [&](const coord_t* x, const std::vector<coord_t>& y) {
            if (cand != nullptr && !cand->contains(y)) return;
            flat.insert(flat.end(), x, x + dd);
            flat.insert(flat.end(), y.begin(), y.end());
        };
        std::vector<coord_t> lo(udd), hi(udd);
        for (std::size_t c = 0; c < yc.size(); ++c) {
            auto yv = yc[c];
            // x + y in Y: y in [c - x - 2, c - x + 1] per axis.
            for (std::size_t i = 0; i < nx; ++i) {
                const coord_t* x = &xs[i * udd];
                for (std::size_t a = 0; a < udd; ++a) {
                    lo[a] = yv[a] - x[a] - 2;
                    hi[a] = yv[a] - x[a] + 1;
                }
                box(lo, hi, D, [&](const std::vector<coord_t>& y) { push(x, y); });
            }
            // y in Y/2: 2y in [c - 2, c + 1] per axis, any x.
            for (std::size_t a = 0; a < udd; ++a) {
                lo[a] = (yv[a] - 2 + 1) / 2;
                if (yv[a] - 2 < 0) lo[a] = 0;
                hi[a] = (yv[a] + 1) / 2;
            }
            box(lo, hi, D, [&](const std::vector<coord_t>& y) {
                for (std::size_t i = 0; i < nx; ++i) push(&xs[i * udd], y);
            });
        }
    }

    OraclePtr Y_;
    mutable std::mutex mu_;
    mutable bool cached_ = false;
    mutable int cached_k_ = 0;
    mutable coord_t cached_D_ = 0;
    mutable GridSet cache_;
};

class TranslateOracle final : public CoverOracle {
public:
    int d() const override { return 1; }
    int n() const override { return 4; }
    double s() const override { return 3.0; }
    std::string tag() const override { return "translate"; }

    bool covers(int, coord_t, std::span<const coord_t> c) const override {
        const coord_t gap = (c[3] - c[2]) - (c[1] - c[0]);
        return gap >= -2 && gap <= 2;
    }

    GridSet cover(int k, coord_t D) const override {
        if (saturating_pow(D, 3) > kEnumerationCap) throw BudgetError("translate_config: grid too large to materialize");
        std::vector<coord_t> all;
        for (coord_t i = 0; i < D; ++i) all.push_back(i);
        return build(k, D, all);
    }

    GridSet cover_within(int k, coord_t D, const GridSet& cand) const override {
        check_candidates(*this, D, cand);
        return build(k, D, cand.data());
    }

    std::uint64_t cover_count(int, coord_t D) const override {
        std::uint64_t count = 0;
        for (coord_t a = 0; a < D; ++a) {
            for (coord_t b = 0; b < D; ++b) {
                for (coord_t c = 0; c < D; ++c) {
                    const coord_t lo = std::max<coord_t>(0, c + (b - a) - 2);
                    const coord_t hi = std::min<coord_t>(D - 1, c + (b - a) + 2);
                    if (hi >= lo) count += static_cast<std::uint64_t>(hi - lo + 1);
                }
            }
        }
        return count;
    }

private:
    GridSet build(int k, coord_t D, const std::vector<coord_t>& vals) const {
        std::vector<coord_t> flat;
        for (coord_t a : vals) {
            for (coord_t b : vals) {
                for (coord_t c : vals) {
                    const coord_t base = c + (b - a);
                    auto r = range_1d(vals, base - 2, base + 2);
                    for (std::size_t i = r.first; i < r.second; ++i) {
                        flat.insert(flat.end(), {a, b, c, vals[i]});
                    }
                }
            }
        }
        return GridSet(1, 4, k, GridKind::DQ, D, std::move(flat));
    }
};

class PointSetOracle final : public CoverOracle {
public:
    PointSetOracle(int d, std::vector<std::vector<double>> pts, std::string tag)
        : d_(d), pts_(std::move(pts)), tag_(std::move(tag)) {
        for (const auto& p : pts_) {
            if (static_cast<int>(p.size()) != d_) throw std::invalid_argument("point_set_oracle: dimension mismatch");
            for (double v : p) {
                if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("point_set_oracle: point outside [0,1]^d");
            }
        }
    }
    int d() const override { return d_; }
    int n() const override { return 1; }
    double s() const override { return 0.0; }
    std::string tag() const override { return tag_; }

    bool covers(int k, coord_t D, std::span<const coord_t> cube) const override { return cover(k, D).contains(cube); }

    GridSet cover(int k, coord_t D) const override {
        std::vector<coord_t> flat;
        for (const auto& p : pts_) point_cubes(p, D, flat);
        return GridSet(d_, 1, k, GridKind::DQ, D, std::move(flat));
    }

    GridSet cover_within(int k, coord_t D, const GridSet& cand) const override {
        check_candidates(*this, D, cand);
        return set_intersection(cover(k, D), cand);
    }

private:
    int d_;
    std::vector<std::vector<double>> pts_;
    std::string tag_;
};

}  // namespace

std::shared_ptr<CoverOracle> sumset_cover(OraclePtr Y) { return std::make_shared<SumsetOracle>(std::move(Y)); }

std::shared_ptr<CoverOracle> translate_config() { return std::make_shared<TranslateOracle>(); }

std::shared_ptr<CoverOracle> point_set_oracle(int d, std::vector<std::vector<double>> points, std::string tag) {
    return std::make_shared<PointSetOracle>(d, std::move(points), std::move(tag));
}

}  // namespace fav
