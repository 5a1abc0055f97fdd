#include "fractal_avoid/fourier.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fractal_avoid/rng.hpp"
#include "parallel.hpp"

namespace fav {

namespace {

using i128 = __int128;

constexpr double kTwoPi = 2 * std::numbers::pi;
constexpr coord_t kMaxSpectrum = coord_t{1} << 24;

// exp(-2 pi i (a * b mod D) / D).
cplx phase_of_product(std::int64_t a, std::int64_t b, coord_t D) {
    i128 r = (static_cast<i128>(a) * b) % D;
    if (r < 0) r += D;
    if (r == 0) return {1.0, 0.0};
    return std::polar(1.0, -kTwoPi * static_cast<double>(r) / static_cast<double>(D));
}

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

// Forward DFT, out[m] = sum_j in[j] exp(-2 pi i j m / size).
std::vector<cplx> forward_dft(std::vector<cplx> in) {
    const int size = static_cast<int>(in.size());
    std::vector<cplx> out(in.size());
    auto* pin = reinterpret_cast<fftw_complex*>(in.data());
    auto* pout = reinterpret_cast<fftw_complex*>(out.data());
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        plan = fftw_plan_dft_1d(size, pin, pout, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    if (!plan) throw std::runtime_error("FFTW could not create a plan of size " + std::to_string(size));
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    return out;
}

void require_line(const GridSet& E, const char* what) {
    if (E.d() != 1 || E.n() != 1) throw std::invalid_argument(std::string(what) + ": needs a set in [0,1]");
}

void require_spectrum_size(coord_t D, const char* what) {
    if (D > kMaxSpectrum) {
        throw BudgetError(std::string(what) + ": grid of " + std::to_string(D) + " points exceeds the FFT budget 2^24");
    }
}

cplx atomic_coeff(std::int64_t m, const DiscreteMeasure& mu) {
    cplx acc{0.0, 0.0};
    for (std::size_t j = 0; j < mu.atoms.size(); ++j) acc += mu.weights[j] * phase_of_product(m, mu.atoms[j], mu.D);
    return acc;
}

HypothesisCheck check(std::string name, double lhs, double rhs) {
    return {std::move(name), lhs, rhs, lhs <= rhs};
}

}  // namespace

double DiscreteMeasure::total_mass() const {
    double t = 0;
    for (double w : weights) t += w;
    return t;
}

DiscreteMeasure measure_of_set(const GridSet& E, Mollifier mollifier) {
    require_line(E, "measure_of_set");
    if (E.empty()) throw std::invalid_argument("measure_of_set: empty set");
    DiscreteMeasure mu;
    mu.generation = E.generation();
    mu.D = E.denom();
    mu.atoms = E.data();
    mu.weights.assign(E.size(), 1.0 / static_cast<double>(E.size()));
    mu.mollifier = mollifier;
    return mu;
}

cplx unit_phase(std::int64_t m, coord_t D) { return phase_of_product(m, 1, D); }

cplx cell_transform(std::int64_t m, coord_t D) {
    if (m == 0) return {1.0, 0.0};
    const cplx num = cplx{1.0, 0.0} - unit_phase(m, D);
    return num / cplx{0.0, kTwoPi * static_cast<double>(m) / static_cast<double>(D)};
}

cplx comb_transform(std::int64_t m, coord_t N, coord_t D) {
    const cplx q = unit_phase(m, D);
    if (q == cplx{1.0, 0.0}) return q;
    const cplx qN = phase_of_product(m, N, D);
    return (cplx{1.0, 0.0} - qN) / (static_cast<double>(N) * (cplx{1.0, 0.0} - q));
}

cplx fourier_coeff(std::int64_t m, const DiscreteMeasure& mu) {
    const cplx a = atomic_coeff(m, mu);
    return mu.mollifier == Mollifier::CellUniform ? a * cell_transform(m, mu.D) : a;
}

std::vector<cplx> fourier_coeffs(const std::vector<std::int64_t>& ms, const DiscreteMeasure& mu, int threads) {
    std::vector<cplx> out(ms.size());
    detail::chunked_for(ms.size(), threads, 64, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) out[i] = fourier_coeff(ms[i], mu);
    });
    return out;
}

std::vector<cplx> atomic_spectrum(const DiscreteMeasure& mu) {
    require_spectrum_size(mu.D, "atomic_spectrum");
    std::vector<cplx> dense(static_cast<std::size_t>(mu.D), cplx{0.0, 0.0});
    for (std::size_t j = 0; j < mu.atoms.size(); ++j) dense[static_cast<std::size_t>(mu.atoms[j])] += mu.weights[j];
    return forward_dft(std::move(dense));
}

nlohmann::json to_json(const DecayProfile& p) {
    return {{"alpha", p.alpha}, {"m_max", p.m_max}, {"sup", p.sup}, {"argmax", p.argmax}, {"set_exponent", 2 * p.alpha}};
}

DecayProfile decay_profile(const DiscreteMeasure& mu, double alpha, std::int64_t m_max) {
    if (alpha < 0) throw std::invalid_argument("decay_profile: alpha must be nonnegative");
    if (m_max < 1) throw std::invalid_argument("decay_profile: m_max must be positive");
    DecayProfile p;
    p.alpha = alpha;
    p.m_max = m_max;
    const auto spec = atomic_spectrum(mu);
    for (std::int64_t m = 1; m <= m_max; ++m) {
        cplx v = spec[static_cast<std::size_t>(m % mu.D)];
        if (mu.mollifier == Mollifier::CellUniform) v *= cell_transform(m, mu.D);
        const double val = std::pow(static_cast<double>(m), alpha) * std::abs(v);
        if (val > p.sup) {
            p.sup = val;
            p.argmax = m;
        }
    }
    return p;
}

void write_decay_csv(std::ostream& os, const DiscreteMeasure& mu, double alpha, std::int64_t m_max) {
    const auto spec = atomic_spectrum(mu);
    os << "m,re,im,abs,m^alpha*abs\n";
    for (std::int64_t m = 1; m <= m_max; ++m) {
        cplx v = spec[static_cast<std::size_t>(m % mu.D)];
        if (mu.mollifier == Mollifier::CellUniform) v *= cell_transform(m, mu.D);
        const double a = std::abs(v);
        os << m << ',' << v.real() << ',' << v.imag() << ',' << a << ',' << std::pow(static_cast<double>(m), alpha) * a
           << '\n';
    }
}

std::vector<double> telescoping_increments(const std::vector<GridSet>& X, double alpha, std::int64_t m_max) {
    if (X.size() < 2) return {};
    if (m_max <= 0) m_max = X.back().denom();
    std::vector<std::vector<cplx>> spec;
    for (const auto& Xk : X) spec.push_back(atomic_spectrum(measure_of_set(Xk)));
    std::vector<double> out;
    for (std::size_t k = 0; k + 1 < X.size(); ++k) {
        const coord_t D0 = X[k].denom();
        const coord_t D1 = X[k + 1].denom();
        double sup = 0;
        for (std::int64_t m = 1; m <= m_max; ++m) {
            const cplx a = spec[k][static_cast<std::size_t>(m % D0)] * cell_transform(m, D0);
            const cplx b = spec[k + 1][static_cast<std::size_t>(m % D1)] * cell_transform(m, D1);
            sup = std::max(sup, std::pow(static_cast<double>(m), alpha) * std::abs(b - a));
        }
        out.push_back(sup);
    }
    return out;
}

const char* to_string(FourierThreshold t) { return t == FourierThreshold::Proof ? "proof" : "realized"; }

FourierThreshold fourier_threshold_from_string(const std::string& s) {
    if (s == "proof") return FourierThreshold::Proof;
    if (s == "realized") return FourierThreshold::Realized;
    throw std::invalid_argument("unknown Fourier threshold '" + s + "' (expected proof or realized)");
}

nlohmann::json to_json(const FourierStepReport& r) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : r.checks) checks.push_back(to_json(c));
    return {{"generation", r.generation},
            {"trials", r.trials},
            {"collision_rejects", r.collision_rejects},
            {"transform_rejects", r.transform_rejects},
            {"cells", r.cells},
            {"bad_count", r.bad_count},
            {"sup_difference", r.sup_difference},
            {"threshold_rule", r.threshold_rule},
            {"threshold", r.threshold},
            {"proof_threshold", r.proof_threshold},
            {"realized_threshold", r.realized_threshold},
            {"collision_bound", r.collision_bound},
            {"realized_bounds_hold", r.realized_bounds_hold},
            {"checks", checks},
            {"bound_status", r.bound_status}};
}

double transform_deviation(const GridSet& S, const GridSet& T, const BranchingSchedule& s) {
    require_line(S, "transform_deviation");
    require_line(T, "transform_deviation");
    const int k = T.generation();
    const coord_t N = s.N(k + 1);
    const coord_t D1 = s.D(k + 1);
    require_spectrum_size(D1, "transform_deviation");
    std::vector<cplx> dense(static_cast<std::size_t>(D1), cplx{0.0, 0.0});
    const double ws = 1.0 / static_cast<double>(S.size());
    const double wt = 1.0 / (static_cast<double>(N) * static_cast<double>(T.size()));
    for (coord_t a : S.data()) dense[static_cast<std::size_t>(a)] += ws;
    for (coord_t a : T.data()) {
        for (coord_t i = 0; i < N; ++i) dense[static_cast<std::size_t>(a * N + i)] -= wt;
    }
    double sup = 0;
    for (const cplx& v : forward_dft(std::move(dense))) sup = std::max(sup, std::abs(v));
    return sup;
}

cplx transform_difference(std::int64_t m, const GridSet& S, const GridSet& T, const BranchingSchedule& s) {
    const int k = T.generation();
    const cplx nuS = atomic_coeff(m, measure_of_set(S));
    const cplx nuT = atomic_coeff(m, measure_of_set(T));
    return nuS - comb_transform(m, s.N(k + 1), s.D(k + 1)) * nuT;
}

FourierStepResult fourier_step(const GridSet& T, const GridSet& B, const FourierParams& p,
                               const BranchingSchedule& s) {
    require_line(T, "fourier_step");
    const int k = T.generation();
    if (k + 1 > s.depth()) throw ScheduleError("fourier_step: schedule ends at generation " + std::to_string(k));
    if (B.d() != 1 || B.n() != p.n || B.denom() != s.D(k + 1)) {
        throw std::invalid_argument("fourier_step: B must be a generation-(k+1) set in R^n");
    }
    const double N = static_cast<double>(s.N(k + 1));
    const double M = static_cast<double>(s.M(k + 1));
    const double n = p.n;
    const double logN = std::log(N);

    FourierStepReport rep;
    rep.generation = k + 1;
    rep.bad_count = B.size();
    const double cells = static_cast<double>(T.size()) * M;
    rep.proof_threshold = std::log(M) / std::sqrt(static_cast<double>(s.D(k)) * M);
    rep.realized_threshold = std::sqrt(4 * std::log(6 * static_cast<double>(s.D(k + 1))) / cells);
    rep.threshold_rule = to_string(p.threshold);
    rep.threshold = p.threshold == FourierThreshold::Proof ? rep.proof_threshold : rep.realized_threshold;
    rep.collision_bound = static_cast<double>(nondiagonal_filter(B, p.n).size()) * std::pow(M / N, n);
    rep.realized_bounds_hold = rep.collision_bound <= 1.0 / 3;
    const double inv_eps = p.eps > 0 ? 1.0 / p.eps : std::numeric_limits<double>::infinity();
    const double mid = std::pow(N, (n - p.s - 2 * p.eps) / n);
    rep.checks.push_back(check("sparsity", static_cast<double>(B.size()), std::pow(N, p.s + p.eps)));
    rep.checks.push_back(check("intermediary_lower", M, mid));
    rep.checks.push_back(check("intermediary_upper", mid, 2 * M));
    rep.checks.push_back(check("log_collision_size", inv_eps * std::log(3.0), logN));
    rep.checks.push_back(
        check("log_transform_size", std::pow(4 * n / (n - p.s), 4) * static_cast<double>(s.D(k)), logN));
    rep.checks.push_back(check("log_eps_size", p.eps > 0 ? inv_eps * std::log(inv_eps) : inv_eps, logN));
    const bool all = std::all_of(rep.checks.begin(), rep.checks.end(), [](const HypothesisCheck& c) { return c.holds; });
    rep.bound_status = all ? "certified" : "empirical";

    for (int t = 0; t < p.retry_limit; ++t) {
        GridSet S = random_select(T, s, derive_seed(p.seed, static_cast<std::uint64_t>(k + 1), static_cast<std::uint64_t>(t)));
        rep.trials = t + 1;
        rep.cells = S.size();
        if (!collision_set(S, B, p.n).empty()) {
            ++rep.collision_rejects;
            continue;
        }
        // Absolute slack for FFT rounding; the deviation is exactly zero when N = M.
        const double dev = transform_deviation(S, T, s);
        if (dev > rep.threshold + 1e-12) {
            ++rep.transform_rejects;
            continue;
        }
        rep.sup_difference = dev;
        return {std::move(S), std::move(rep)};
    }
    throw RetryError("fourier_step: no accepted sample at generation " + std::to_string(k + 1) + " after " +
                     std::to_string(p.retry_limit) + " trials");
}

GridSet random_bad_set(const GridSet& T, const BranchingSchedule& s, int n, std::uint64_t count, std::uint64_t seed) {
    require_line(T, "random_bad_set");
    const GridSet C = children(T, s);
    const double space = std::pow(static_cast<double>(C.size()), n);
    if (C.size() < static_cast<std::size_t>(n) || static_cast<double>(count) > space / 2) {
        throw std::invalid_argument("random_bad_set: requested count too large for the candidate grid");
    }
    Rng rng(seed);
    std::set<std::vector<coord_t>> picked;
    std::vector<coord_t> cube(static_cast<std::size_t>(n));
    while (picked.size() < count) {
        for (int j = 0; j < n; ++j) cube[static_cast<std::size_t>(j)] = C[rng.below(C.size())][0];
        if (strongly_nondiagonal(cube, 1, n)) picked.insert(cube);
    }
    std::vector<coord_t> flat;
    for (const auto& c : picked) flat.insert(flat.end(), c.begin(), c.end());
    return GridSet(1, n, C.generation(), GridKind::DQ, C.denom(), std::move(flat));
}

FourierRun fourier_run(const BranchingSchedule& s, const FourierParams& p, const BadSetProvider& bad) {
    if (s.dim() != 1) throw std::invalid_argument("fourier_run: the Fourier construction needs d = 1");
    FourierRun run;
    run.X.push_back(root_set(1));
    for (int k = 0; k < s.depth(); ++k) {
        GridSet B = bad(k + 1, run.X.back());
        auto r = fourier_step(run.X.back(), B, p, s);
        run.X.push_back(std::move(r.S));
        run.reports.push_back(std::move(r.report));
    }
    return run;
}

nlohmann::json to_json(const HoeffdingRow& r) {
    return {{"m", r.m},       {"t", r.t},
            {"empirical", r.empirical}, {"bound", r.bound},
            {"tolerance", r.tolerance}, {"holds", r.holds}};
}

std::vector<HoeffdingRow> hoeffding_check(const GridSet& T, const BranchingSchedule& s,
                                          const std::vector<std::int64_t>& freqs, const std::vector<double>& ts,
                                          int trials, std::uint64_t seed, int threads) {
    if (trials < 1) throw std::invalid_argument("hoeffding_check: need at least one trial");
    const std::size_t F = freqs.size();
    const std::size_t L = ts.size();
    constexpr std::size_t kChunks = 64;
    std::vector<std::vector<std::uint64_t>> hits(kChunks, std::vector<std::uint64_t>(F * L, 0));
    std::uint64_t cells = 0;
    {
        const int k = T.generation();
        for (std::size_t i = 0; i < T.size(); ++i) cells += intermediary_cells(T[i], k, s).size();
    }
    detail::chunked_for(static_cast<std::size_t>(trials), threads, kChunks, [&](std::size_t c, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const GridSet S = random_select(T, s, derive_seed(seed, 0, i));
            for (std::size_t f = 0; f < F; ++f) {
                const double a = std::abs(transform_difference(freqs[f], S, T, s));
                for (std::size_t l = 0; l < L; ++l) {
                    if (a >= ts[l]) ++hits[c][f * L + l];
                }
            }
        }
    });
    std::vector<HoeffdingRow> rows;
    for (std::size_t f = 0; f < F; ++f) {
        for (std::size_t l = 0; l < L; ++l) {
            std::uint64_t h = 0;
            for (const auto& ch : hits) h += ch[f * L + l];
            HoeffdingRow r;
            r.m = freqs[f];
            r.t = ts[l];
            r.empirical = static_cast<double>(h) / trials;
            r.bound = 2 * std::exp(-static_cast<double>(cells) * ts[l] * ts[l] / 4);
            const double pb = std::min(1.0, r.bound);
            r.tolerance = 3 * std::sqrt(pb * (1 - pb) / trials);
            r.holds = r.empirical <= pb + r.tolerance;
            rows.push_back(r);
        }
    }
    return rows;
}

}  // namespace fav
