#include "fractal_avoid/avoidance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace fav {

namespace {

using i128 = __int128;

std::uint64_t ipow(std::uint64_t b, int e) {
    std::uint64_t r = 1;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
}

void require_fine(const GridSet& T, const BranchingSchedule& s, const char* what) {
    if (T.kind() != GridKind::DQ || T.n() != 1 || T.d() != s.dim()) {
        throw std::invalid_argument(std::string(what) + ": T must be a fine set in R^d on the schedule");
    }
    const int k = T.generation();
    if (k >= s.depth()) throw BudgetError(std::string(what) + ": schedule exhausted at generation " + std::to_string(k));
    if (T.denom() != s.D(k)) throw std::invalid_argument(std::string(what) + ": T is not on the schedule's grid");
}

void enforce(const std::vector<HypothesisCheck>& checks, bool on, const char* what) {
    if (!on) return;
    for (const auto& c : checks) {
        if (!c.holds) {
            throw HypothesisError(std::string(what) + ": hypothesis '" + c.name + "' fails (" + std::to_string(c.lhs) +
                                  " > " + std::to_string(c.rhs) + ")");
        }
    }
}

HypothesisCheck le(std::string name, double lhs, double rhs) { return {std::move(name), lhs, rhs, lhs <= rhs}; }

// Cells of T in T-order together with the index of their parent in T.
struct CellList {
    std::vector<coord_t> flat;
    std::vector<std::size_t> parent;
};

CellList cells_of(const GridSet& T, const BranchingSchedule& s) {
    CellList out;
    for (std::size_t i = 0; i < T.size(); ++i) {
        GridSet cells = intermediary_cells(T[i], T.generation(), s);
        out.flat.insert(out.flat.end(), cells.data().begin(), cells.data().end());
        out.parent.insert(out.parent.end(), cells.size(), i);
    }
    return out;
}

// Count of fine cubes of S per parent in T, in T-order.
std::vector<std::uint32_t> kept_counts(const GridSet& T, const GridSet& S, const BranchingSchedule& s) {
    std::vector<std::uint32_t> kept(T.size(), 0);
    for (std::size_t i = 0; i < S.size(); ++i) {
        const auto par = parent_of(S[i], S.generation(), GridKind::DQ, s);
        const std::size_t j = T.find(par);
        if (j == T.size()) throw std::logic_error("step output escaped its parent set");
        ++kept[j];
    }
    return kept;
}

}  // namespace

nlohmann::json to_json(const HypothesisCheck& h) {
    return {{"name", h.name}, {"lhs", h.lhs}, {"rhs", h.rhs}, {"holds", h.holds}};
}

// ---------------------------------------------------------------------------
// Parameters

double default_C(int d, int n, double s) {
    const double gap = d * n - s;
    if (!(gap > 0)) throw std::invalid_argument("default_C: requires s < dn");
    const double need = std::ceil(std::pow(4.0, 1.0 / gap) * (1 - 1e-12));
    return std::max<double>(4.0 * d, static_cast<double>(next_power_of_two(static_cast<coord_t>(need))));
}

double resolved_C(const AvoidParams& p) { return p.C > 0 ? p.C : default_C(p.d, p.n, p.s); }

coord_t min_branching(const AvoidParams& p, coord_t M) {
    if (!is_power_of_two(M)) throw std::invalid_argument("min_branching: M must be a power of two");
    const double denom = p.d * p.n - p.s - p.eps;
    if (!(denom > 0)) throw std::invalid_argument("min_branching: exponent denominator dn - s - eps must be positive");
    const double e = p.d * (p.n - 1) / denom;
    const double v = resolved_C(p) * std::pow(static_cast<double>(M), e);
    if (!(v < 4.6e18)) throw BudgetError("min_branching: bound exceeds the integer budget");
    return next_power_of_two(std::max<coord_t>(1, static_cast<coord_t>(std::ceil(v * (1 - 1e-12)))));
}

// ---------------------------------------------------------------------------
// Randomized step

GridSet random_select(const GridSet& T, const BranchingSchedule& s, Rng& rng) {
    require_fine(T, s, "random_select");
    const int k = T.generation();
    const int d = T.d();
    const coord_t ratio = s.N(k + 1) / s.M(k + 1);
    std::vector<coord_t> flat;
    flat.reserve(T.data().size() * ipow(static_cast<std::uint64_t>(s.M(k + 1)), d));
    for (std::size_t i = 0; i < T.size(); ++i) {
        GridSet cells = intermediary_cells(T[i], k, s);
        for (std::size_t c = 0; c < cells.size(); ++c) {
            for (int a = 0; a < d; ++a) {
                flat.push_back(cells[c][static_cast<std::size_t>(a)] * ratio +
                               static_cast<coord_t>(rng.below(static_cast<std::uint64_t>(ratio))));
            }
        }
    }
    return GridSet(d, 1, k + 1, GridKind::DQ, s.D(k + 1), std::move(flat));
}

GridSet random_select(const GridSet& T, const BranchingSchedule& s, std::uint64_t seed) {
    Rng rng(seed);
    return random_select(T, s, rng);
}

GridSet collision_set(const GridSet& A, const GridSet& B, int n) {
    if (A.n() != 1 || B.dim() != A.d() * n || A.denom() != B.denom()) {
        throw std::invalid_argument("collision_set: B must live on A's grid in dimension d*n");
    }
    const int d = A.d();
    std::vector<coord_t> flat;
    for (std::size_t i = 0; i < B.size(); ++i) {
        auto cube = B[i];
        if (!strongly_nondiagonal(cube, d, n)) continue;
        bool inside = true;
        for (int j = 0; j < n && inside; ++j) inside = A.contains(cube.subspan(static_cast<std::size_t>(j * d), static_cast<std::size_t>(d)));
        if (inside) flat.insert(flat.end(), cube.begin(), cube.end());
    }
    return GridSet(A.d(), n, A.generation(), GridKind::DQ, A.denom(), std::move(flat));
}

bool StepReport::hypotheses_hold() const {
    return std::all_of(checks.begin(), checks.end(), [](const HypothesisCheck& c) { return c.holds; });
}

nlohmann::json to_json(const StepReport& r) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : r.checks) checks.push_back(to_json(c));
    return {{"generation", r.generation},
            {"trials", r.trials},
            {"used_exhaustive", r.used_exhaustive},
            {"accept_rule", r.accept_rule},
            {"collisions", r.collisions},
            {"deleted", r.deleted},
            {"bad_count", r.bad_count},
            {"nondiagonal_bad", r.nondiagonal_bad},
            {"cells_per_parent", r.cells_per_parent},
            {"kept_per_parent", r.kept_per_parent},
            {"min_kept", r.min_kept},
            {"checks", checks},
            {"notes", r.notes}};
}

namespace {

std::vector<HypothesisCheck> lemma_checks(const AvoidParams& p, coord_t N, coord_t M, long long bad) {
    std::vector<HypothesisCheck> out;
    const double gap = p.d * p.n - p.s;
    const double C = resolved_C(p);
    out.push_back({"eps < (dn - s)/2", p.eps, gap / 2, p.eps < gap / 2 && p.eps >= 0});
    out.push_back(le("max(4d, 4^(1/(dn-s))) <= C", std::max(4.0 * p.d, std::pow(4.0, 1.0 / gap)), C));
    const double e = p.d * (p.n - 1) / (gap - p.eps);
    out.push_back(le("C M^(d(n-1)/(dn-s-eps)) <= N", C * std::pow(static_cast<double>(M), e) * (1 - 1e-12),
                     static_cast<double>(N)));
    if (bad >= 0) {
        out.push_back(le("#B <= N^(s+eps)", static_cast<double>(bad),
                         std::pow(static_cast<double>(N), p.s + p.eps) * (1 + 1e-12)));
    }
    return out;
}

const char* rule_name(AcceptRule r) { return r == AcceptRule::Collisions ? "collisions" : "per-parent"; }

template <class Collide>
StepResult run_avoid(const GridSet& T, const AvoidParams& p, const BranchingSchedule& s, StepReport rep,
                     Collide&& collide) {
    const int k = T.generation();
    const int d = T.d();
    const std::uint64_t Md = ipow(static_cast<std::uint64_t>(s.M(k + 1)), d);
    rep.generation = k + 1;
    rep.accept_rule = rule_name(p.accept);
    rep.cells_per_parent = Md;

    // Deleting the first blocks of K; returns S and whether the acceptance rule holds.
    auto evaluate = [&](const GridSet& A, const GridSet& K, GridSet& S, std::vector<std::uint32_t>& kept) {
        std::vector<coord_t> first;
        first.reserve(K.size() * static_cast<std::size_t>(d));
        for (std::size_t i = 0; i < K.size(); ++i) {
            auto c = K[i];
            first.insert(first.end(), c.begin(), c.begin() + d);
        }
        GridSet del(d, 1, k + 1, GridKind::DQ, A.denom(), std::move(first));
        S = set_difference(A, del);
        kept = kept_counts(T, S, s);
        if (p.accept == AcceptRule::Collisions) return 2 * K.size() <= Md;
        const std::uint32_t need = static_cast<std::uint32_t>((Md + 1) / 2);
        return std::all_of(kept.begin(), kept.end(), [&](std::uint32_t x) { return x >= need; });
    };

    auto finish = [&](const GridSet& A, const GridSet& K, GridSet S, std::vector<std::uint32_t> kept) {
        rep.collisions = K.size();
        rep.deleted = A.size() - S.size();
        rep.kept_per_parent = std::move(kept);
        rep.min_kept = rep.kept_per_parent.empty()
                           ? 0
                           : *std::min_element(rep.kept_per_parent.begin(), rep.kept_per_parent.end());
        return StepResult{std::move(S), std::move(rep)};
    };

    GridSet S;
    std::vector<std::uint32_t> kept;
    for (int t = 0; t < p.retry_limit; ++t) {
        Rng rng(derive_seed(p.seed, static_cast<std::uint64_t>(k + 1), static_cast<std::uint64_t>(t)));
        GridSet A = random_select(T, s, rng);
        GridSet K = collide(A);
        rep.trials = t + 1;
        if (evaluate(A, K, S, kept)) return finish(A, K, std::move(S), std::move(kept));
    }

    const coord_t ratio = s.N(k + 1) / s.M(k + 1);
    const CellList cells = cells_of(T, s);
    const std::size_t digits = cells.parent.size() * static_cast<std::size_t>(d);
    const double bits = static_cast<double>(digits) * std::log2(static_cast<double>(ratio));
    if (p.exhaustive_fallback && bits <= 20) {
        rep.used_exhaustive = true;
        std::vector<coord_t> off(digits, 0);
        std::vector<coord_t> flat(digits);
        while (true) {
            for (std::size_t i = 0; i < digits; ++i) flat[i] = cells.flat[i] * ratio + off[i];
            GridSet A(d, 1, k + 1, GridKind::DQ, s.D(k + 1), flat);
            GridSet K = collide(A);
            if (evaluate(A, K, S, kept)) return finish(A, K, std::move(S), std::move(kept));
            std::size_t i = digits;
            bool done = true;
            while (i > 0) {
                --i;
                if (++off[i] < ratio) {
                    done = false;
                    break;
                }
                off[i] = 0;
            }
            if (done || digits == 0) break;
        }
    }
    throw RetryError("avoid_step: no admissible selection after " + std::to_string(rep.trials) + " trials" +
                     (rep.used_exhaustive ? " and an exhaustive search" : "") + " at generation " +
                     std::to_string(k + 1) + (rep.hypotheses_hold() ? "" : " (hypotheses violated)"));
}

}  // namespace

StepResult avoid_step(const GridSet& T, const GridSet& B, const AvoidParams& p, const BranchingSchedule& s) {
    require_fine(T, s, "avoid_step");
    const int k = T.generation();
    if (p.d != T.d()) throw std::invalid_argument("avoid_step: params.d differs from T");
    if (B.dim() != p.d * p.n || B.denom() != s.D(k + 1) || B.kind() != GridKind::DQ) {
        throw std::invalid_argument("avoid_step: B must be a generation-(k+1) set in R^{dn}");
    }
    StepReport rep;
    rep.bad_count = static_cast<long long>(B.size());
    rep.checks = lemma_checks(p, s.N(k + 1), s.M(k + 1), rep.bad_count);
    enforce(rep.checks, p.enforce_hypotheses, "avoid_step");
    const GridSet nd = nondiagonal_filter(B, p.n);
    rep.nondiagonal_bad = nd.size();
    return run_avoid(T, p, s, std::move(rep), [&](const GridSet& A) { return collision_set(A, nd, p.n); });
}

StepResult avoid_step(const GridSet& T, const CoverOracle& oracle, const AvoidParams& p,
                      const BranchingSchedule& s) {
    require_fine(T, s, "avoid_step");
    const int k = T.generation();
    if (p.d != T.d() || oracle.d() != p.d || oracle.n() != p.n) {
        throw std::invalid_argument("avoid_step: oracle shape differs from params");
    }
    const coord_t D = s.D(k + 1);
    StepReport rep;
    // Counting walks the full grid; past 2^30 cubes the size is left unreported.
    const double grid = std::pow(static_cast<double>(D), oracle.d() * oracle.n());
    try {
        if (grid > 0x1.0p30) throw BudgetError("grid too large");
        rep.bad_count = static_cast<long long>(oracle.cover_count(k + 1, D));
    } catch (const BudgetError&) {
        rep.notes.push_back("bad-set size not counted: cover too large to enumerate");
    }
    rep.checks = lemma_checks(p, s.N(k + 1), s.M(k + 1), rep.bad_count);
    enforce(rep.checks, p.enforce_hypotheses, "avoid_step");
    return run_avoid(T, p, s, std::move(rep), [&](const GridSet& A) {
        return nondiagonal_filter(oracle.cover_within(k + 1, D, A), p.n);
    });
}

// ---------------------------------------------------------------------------
// Interval step

GridSet keleti_step(const GridSet& X, int I_gen, coord_t I_index, const BranchingSchedule& s) {
    require_fine(X, s, "keleti_step");
    if (X.d() != 1) throw std::invalid_argument("keleti_step: intervals only");
    const int k = X.generation();
    const coord_t N = s.N(k + 1);
    if (N % 10 != 0) throw ScheduleError("keleti_step: N_" + std::to_string(k + 1) + " = " + std::to_string(N) +
                                         " is not a multiple of 10");
    if (I_gen < 0 || I_gen > k) throw std::invalid_argument("keleti_step: interval generation out of range");
    const coord_t width = s.D(k) / s.D(I_gen);
    std::vector<coord_t> flat;
    flat.reserve(X.size() * static_cast<std::size_t>(N / 10));
    for (coord_t J : X.data()) {
        // 1-indexed positions 10, 20, ... are 0-indexed 9, 19, ...; 5, 15, ... are 4, 14, ....
        const coord_t first = J / width == I_index ? 9 : 4;
        for (coord_t p = first; p < N; p += 10) flat.push_back(J * N + p);
    }
    return GridSet(1, 1, k + 1, GridKind::DQ, s.D(k + 1), std::move(flat));
}

// ---------------------------------------------------------------------------
// Slab and wafer step

nlohmann::json to_json(const FpReport& r) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& st : r.stages) {
        stages.push_back({{"bad_in", st.bad_in}, {"bad_out", st.bad_out}, {"bound", st.bound}, {"min_kept", st.min_kept}});
    }
    return {{"generation", r.generation},
            {"stages", stages},
            {"bad_initial", r.bad_initial},
            {"bad_final", r.bad_final},
            {"chain_bound", r.chain_bound},
            {"stated_bound", r.stated_bound},
            {"consistent_bound", r.consistent_bound},
            {"precondition", to_json(r.precondition)},
            {"min_kept", r.min_kept},
            {"cells_per_parent", r.cells_per_parent},
            {"hypothesis_failures", r.hypothesis_failures}};
}

FpResult fp_step(const std::vector<GridSet>& T, const GridSet& B, const BranchingSchedule& s, const FpParams& p) {
    const int n = static_cast<int>(T.size());
    if (n < 2) throw std::invalid_argument("fp_step: needs at least two sets");
    for (const auto& t : T) require_fine(t, s, "fp_step");
    const int k = T.front().generation();
    const int d = s.dim();
    for (int i = 0; i < n; ++i) {
        if (T[static_cast<std::size_t>(i)].generation() != k) throw std::invalid_argument("fp_step: generation mismatch");
        for (int j = i + 1; j < n; ++j) {
            if (!set_intersection(T[static_cast<std::size_t>(i)], T[static_cast<std::size_t>(j)]).empty()) {
                throw std::invalid_argument("fp_step: sets are not disjoint");
            }
        }
    }
    if (B.dim() != d * n || B.denom() != s.D(k + 1)) throw std::invalid_argument("fp_step: B must be in R^{dn} at generation k+1");

    const coord_t N = s.N(k + 1);
    const coord_t M = s.M(k + 1);
    const double Dk = static_cast<double>(s.D(k));
    const double ratio = static_cast<double>(M) / static_cast<double>(N);
    const std::uint64_t Nd = ipow(static_cast<std::uint64_t>(N), d);
    const std::uint64_t Md = ipow(static_cast<std::uint64_t>(M), d);

    FpResult res;
    FpReport& rep = res.report;
    rep.generation = k + 1;
    rep.cells_per_parent = Md;
    {
        const double lhs = (std::log(p.C_f) + n * std::log(2.0) + 2.0 * d * n * std::log(Dk)) / p.m +
                           d * (n - 1) * std::log(static_cast<double>(M)) / p.m;
        rep.precondition = le("[C 2^n D_k^(2dn)]^(1/m) M^(d(n-1)/m) <= N", std::exp(lhs), static_cast<double>(N));
        if (p.enforce_hypotheses && !rep.precondition.holds) {
            throw HypothesisError("fp_step: branching precondition fails at generation " + std::to_string(k + 1));
        }
    }

    // Restrict B to T_1 x ... x T_n: block i must have its parent in T_i.
    const auto block = [d](std::span<const coord_t> c, int i) {
        return c.subspan(static_cast<std::size_t>(i * d), static_cast<std::size_t>(d));
    };
    std::vector<coord_t> cur;
    for (std::size_t b = 0; b < B.size(); ++b) {
        bool in = true;
        for (int i = 0; i < n && in; ++i) {
            in = T[static_cast<std::size_t>(i)].contains(parent_of(block(B[b], i), k + 1, GridKind::DQ, s));
        }
        if (in) cur.insert(cur.end(), B[b].begin(), B[b].end());
    }
    GridSet Bi(d, n, k + 1, GridKind::DQ, s.D(k + 1), std::move(cur));
    rep.bad_initial = Bi.size();

    for (int i = 0; i + 1 < n; ++i) {
        const int arity = n - i;
        const GridSet& Ti = T[static_cast<std::size_t>(i)];
        // Wafer counts: B_i is sorted, so tuples sharing a first block are contiguous.
        std::map<std::vector<coord_t>, std::uint64_t> wafer;
        for (std::size_t b = 0; b < Bi.size(); ++b) {
            auto f = block(Bi[b], 0);
            ++wafer[std::vector<coord_t>(f.begin(), f.end())];
        }
        const std::uint64_t total = Bi.size();
        std::vector<coord_t> chosen;
        for (std::size_t q = 0; q < Ti.size(); ++q) {
            GridSet cells = intermediary_cells(Ti[q], k, s);
            for (std::size_t r = 0; r < cells.size(); ++r) {
                GridSet kids = cell_children(cells[r], k + 1, s);
                std::size_t best = kids.size();
                std::uint64_t best_count = 0;
                for (std::size_t c = 0; c < kids.size(); ++c) {
                    auto it = wafer.find(std::vector<coord_t>(kids[c].begin(), kids[c].end()));
                    const std::uint64_t cnt = it == wafer.end() ? 0 : it->second;
                    // Good wafer: cnt <= (2 / N^d) #B.
                    if (static_cast<i128>(cnt) * Nd > static_cast<i128>(2) * total) continue;
                    if (best == kids.size() || cnt < best_count) {
                        best = c;
                        best_count = cnt;
                    }
                }
                if (best != kids.size()) chosen.insert(chosen.end(), kids[best].begin(), kids[best].end());
            }
        }
        GridSet Si(d, 1, k + 1, GridKind::DQ, s.D(k + 1), std::move(chosen));
        std::vector<coord_t> rest;
        for (std::size_t b = 0; b < Bi.size(); ++b) {
            if (Si.contains(block(Bi[b], 0))) rest.insert(rest.end(), Bi[b].begin() + d, Bi[b].end());
        }
        GridSet next(d, arity - 1, k + 1, GridKind::DQ, s.D(k + 1), std::move(rest));
        auto kept = kept_counts(Ti, Si, s);
        FpStage st;
        st.bad_in = total;
        st.bad_out = next.size();
        st.bound = 2.0 * std::pow(Dk * ratio, d) * static_cast<double>(total);
        st.min_kept = kept.empty() ? 0 : *std::min_element(kept.begin(), kept.end());
        rep.stages.push_back(st);
        rep.min_kept.push_back(st.min_kept);
        res.S.push_back(std::move(Si));
        Bi = std::move(next);
    }

    // Final stage: keep cells holding at most (2 / M^d) #B of the remaining bad cubes.
    const GridSet& Tn = T.back();
    const std::uint64_t total = Bi.size();
    rep.bad_final = total;
    std::vector<coord_t> chosen;
    for (std::size_t q = 0; q < Tn.size(); ++q) {
        GridSet cells = intermediary_cells(Tn[q], k, s);
        for (std::size_t r = 0; r < cells.size(); ++r) {
            GridSet kids = cell_children(cells[r], k + 1, s);
            std::uint64_t inside = 0;
            std::size_t free_child = kids.size();
            for (std::size_t c = 0; c < kids.size(); ++c) {
                if (Bi.contains(kids[c])) {
                    ++inside;
                } else if (free_child == kids.size()) {
                    free_child = c;
                }
            }
            if (static_cast<i128>(inside) * Md > static_cast<i128>(2) * total) continue;
            if (free_child == kids.size()) {
                ++rep.hypothesis_failures;
                continue;
            }
            chosen.insert(chosen.end(), kids[free_child].begin(), kids[free_child].end());
        }
    }
    if (p.enforce_hypotheses && rep.hypothesis_failures > 0) {
        throw HypothesisError("fp_step: " + std::to_string(rep.hypothesis_failures) +
                              " kept cells are fully covered by the reduced bad set");
    }
    GridSet Sn(d, 1, k + 1, GridKind::DQ, s.D(k + 1), std::move(chosen));
    auto kept = kept_counts(Tn, Sn, s);
    rep.min_kept.push_back(kept.empty() ? 0 : *std::min_element(kept.begin(), kept.end()));
    res.S.push_back(std::move(Sn));

    const double dn1 = static_cast<double>(d) * (n - 1);
    const double scale = std::pow(2.0, n - 1) * std::pow(ratio, dn1);
    rep.chain_bound = scale * std::pow(Dk, dn1) * static_cast<double>(rep.bad_initial);
    const double cover = p.C_f * std::pow(static_cast<double>(s.D(k + 1)), d * n - p.m);
    rep.stated_bound = scale * std::pow(Dk, dn1) * cover;
    rep.consistent_bound = scale * std::pow(Dk, 2.0 * d * n) * cover;
    return res;
}

// ---------------------------------------------------------------------------
// Polynomials and the lattice step

int Polynomial::degree() const {
    int deg = 0;
    for (const auto& t : terms) {
        if (t.coeff != 0) deg = std::max(deg, std::accumulate(t.exps.begin(), t.exps.end(), 0));
    }
    return deg;
}

double Polynomial::eval(const double* x) const {
    double v = 0;
    for (const auto& t : terms) {
        double m = static_cast<double>(t.coeff);
        for (int i = 0; i < vars; ++i) m *= std::pow(x[i], t.exps[static_cast<std::size_t>(i)]);
        v += m;
    }
    return v;
}

Polynomial Polynomial::derivative(int var) const {
    Polynomial out;
    out.vars = vars;
    for (const auto& t : terms) {
        const int e = t.exps[static_cast<std::size_t>(var)];
        if (e == 0 || t.coeff == 0) continue;
        Term nt = t;
        nt.coeff *= e;
        nt.exps[static_cast<std::size_t>(var)] = e - 1;
        out.terms.push_back(std::move(nt));
    }
    return out;
}

double Polynomial::lipschitz_bound() const {
    double L = 0;
    for (const auto& t : terms) {
        L += std::abs(static_cast<double>(t.coeff)) * std::accumulate(t.exps.begin(), t.exps.end(), 0);
    }
    return L;
}

nlohmann::json to_json(const Polynomial& f) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : f.terms) terms.push_back({{"coeff", t.coeff}, {"exps", t.exps}});
    return {{"vars", f.vars}, {"terms", terms}};
}

Polynomial polynomial_from_json(const nlohmann::json& j) {
    Polynomial f;
    f.vars = j.at("vars").get<int>();
    if (f.vars < 1) throw std::invalid_argument("polynomial: vars must be positive");
    for (const auto& t : j.at("terms")) {
        Polynomial::Term term;
        term.coeff = t.at("coeff").get<std::int64_t>();
        term.exps = t.at("exps").get<std::vector<int>>();
        if (static_cast<int>(term.exps.size()) != f.vars) throw std::invalid_argument("polynomial: exponent arity mismatch");
        for (int e : term.exps) {
            if (e < 0) throw std::invalid_argument("polynomial: negative exponent");
        }
        f.terms.push_back(std::move(term));
    }
    return f;
}

nlohmann::json to_json(const MatheReport& r) {
    return {{"generation", r.generation},           {"eps", r.eps},
            {"shift", r.shift},                     {"window_lo", r.window_lo},
            {"window_hi", r.window_hi},             {"tuples", r.tuples},
            {"lattice_margin", r.lattice_margin},   {"certified_margin", r.certified_margin},
            {"certified", r.certified},             {"precondition", to_json(r.precondition)}};
}

namespace {

// Odometer over the product of per-factor lists of startpoint blocks.
template <class Fn>
void for_each_tuple(const std::vector<std::vector<std::vector<coord_t>>>& lists, Fn&& fn) {
    const std::size_t n = lists.size();
    for (const auto& l : lists) {
        if (l.empty()) return;
    }
    std::vector<std::size_t> idx(n, 0);
    std::vector<const std::vector<coord_t>*> cur(n);
    while (true) {
        for (std::size_t i = 0; i < n; ++i) cur[i] = &lists[i][idx[i]];
        fn(cur);
        std::size_t i = n;
        bool done = true;
        while (i > 0) {
            --i;
            if (++idx[i] < lists[i].size()) {
                done = false;
                break;
            }
            idx[i] = 0;
        }
        if (done) break;
    }
}

}  // namespace

MatheResult mathe_step(const std::vector<GridSet>& T, const Polynomial& f, const BranchingSchedule& s,
                       const MatheParams& p) {
    const int n = static_cast<int>(T.size());
    if (n < 1) throw std::invalid_argument("mathe_step: no sets");
    for (const auto& t : T) require_fine(t, s, "mathe_step");
    const int k = T.front().generation();
    const int d = s.dim();
    if (f.vars != d * n) throw std::invalid_argument("mathe_step: polynomial arity differs from dn");
    if (!(p.c0 > 0) || !(p.C0 >= p.c0)) throw std::invalid_argument("mathe_step: need 0 < c0 <= C0");
    const int m = std::max(1, f.degree());
    const coord_t N = s.N(k + 1);
    const coord_t M = s.M(k + 1);
    const coord_t ratio = N / M;
    const coord_t D = s.D(k + 1);
    const coord_t R = s.R(k + 1);

    MatheResult res;
    MatheReport& rep = res.report;
    rep.generation = k + 1;
    const double eps_hi = p.c0 / (p.c0 + p.C0);
    rep.eps = p.eps < 0 ? eps_hi / 2 : p.eps;
    if (!(rep.eps > 0 && rep.eps < eps_hi)) {
        throw HypothesisError("mathe_step: no eps with eps/c0 < (1 - eps)/C0 at eps = " + std::to_string(rep.eps));
    }
    rep.precondition = le("C D_k^(m-1) M^m <= N (C = 1)",
                          std::pow(static_cast<double>(s.D(k)), m - 1) * std::pow(static_cast<double>(M), m),
                          static_cast<double>(N));

    // r^m measured in fine units: D_{k+1} / R_{k+1}^m.
    const long double rm_fine = static_cast<long double>(D) / std::pow(static_cast<long double>(R), m);
    const long double lo = std::ceil(rep.eps / p.c0 * rm_fine - 1e-12L);
    const long double hi = std::floor((1 - rep.eps) / p.C0 * rm_fine + 1e-12L);
    rep.window_lo = static_cast<coord_t>(lo);
    rep.window_hi = static_cast<coord_t>(std::min<long double>(hi, static_cast<long double>(ratio - 1)));
    if (rep.window_lo > rep.window_hi) {
        throw HypothesisError("mathe_step: empty shift window [" + std::to_string(static_cast<double>(lo)) + ", " +
                              std::to_string(static_cast<double>(hi)) + "] fine units at generation " +
                              std::to_string(k + 1));
    }
    rep.shift = rep.window_lo + (rep.window_hi - rep.window_lo) / 2;

    // Startpoints of intermediary cells, in fine units.
    std::vector<std::vector<std::vector<coord_t>>> lists(static_cast<std::size_t>(n));
    std::uint64_t tuples = 1;
    for (int i = 0; i < n; ++i) {
        GridSet cells = intermediary_cells(T[static_cast<std::size_t>(i)], s);
        std::vector<coord_t> flat;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            std::vector<coord_t> a(cells[c].begin(), cells[c].end());
            for (auto& x : a) x *= ratio;
            if (i == 0) a[0] += rep.shift;
            flat.insert(flat.end(), a.begin(), a.end());
            lists[static_cast<std::size_t>(i)].push_back(std::move(a));
        }
        res.S.emplace_back(d, 1, k + 1, GridKind::DQ, D, std::move(flat));
        const long double next = static_cast<long double>(tuples) * static_cast<long double>(cells.size());
        tuples = next > 1.8e19L ? ~std::uint64_t{0} : static_cast<std::uint64_t>(next);
    }
    if (tuples > p.budget) throw BudgetError("mathe_step: " + std::to_string(tuples) + " tuples exceed the budget");
    if (std::pow(static_cast<long double>(D), m) > 1e36L) throw BudgetError("mathe_step: exact evaluation overflows");

    // The derivative bound is checked at the unshifted and shifted lattices.
    const Polynomial df = f.derivative(0);
    int sign = 0;
    std::vector<double> x(static_cast<std::size_t>(d * n));
    auto check_derivative = [&](const std::vector<const std::vector<coord_t>*>& tup, coord_t undo) {
        for (int i = 0; i < n; ++i) {
            for (int a = 0; a < d; ++a) {
                coord_t v = (*tup[static_cast<std::size_t>(i)])[static_cast<std::size_t>(a)];
                if (i == 0 && a == 0) v -= undo;
                x[static_cast<std::size_t>(i * d + a)] = static_cast<double>(v) / static_cast<double>(D);
            }
        }
        const double g = df.eval(x.data());
        const int sg = g > 0 ? 1 : (g < 0 ? -1 : 0);
        if (std::abs(g) < p.c0 * (1 - 1e-12) || std::abs(g) > p.C0 * (1 + 1e-12) || sg == 0 || (sign != 0 && sg != sign)) {
            throw HypothesisError("mathe_step: |df/dx_1| = " + std::to_string(g) + " outside [c0, C0] or changes sign");
        }
        sign = sg;
    };

    // f at a fine startpoint, scaled by D^m, is an integer; r^m Z becomes (N/M)^m Z.
    i128 period = 1;
    for (int i = 0; i < m; ++i) period *= ratio;
    auto scaled_value = [&](const std::vector<const std::vector<coord_t>*>& tup) {
        i128 v = 0;
        for (const auto& t : f.terms) {
            i128 mon = t.coeff;
            int deg = 0;
            for (int i = 0; i < n; ++i) {
                for (int a = 0; a < d; ++a) {
                    const int e = t.exps[static_cast<std::size_t>(i * d + a)];
                    for (int r = 0; r < e; ++r) mon *= (*tup[static_cast<std::size_t>(i)])[static_cast<std::size_t>(a)];
                    deg += e;
                }
            }
            for (int r = deg; r < m; ++r) mon *= D;
            v += mon;
        }
        return v;
    };

    const double slack = f.lipschitz_bound() / static_cast<double>(D);
    const long double rm = 1.0L / std::pow(static_cast<long double>(R), m);
    double lattice = std::numeric_limits<double>::infinity();
    for_each_tuple(lists, [&](const std::vector<const std::vector<coord_t>*>& tup) {
        check_derivative(tup, rep.shift);
        check_derivative(tup, 0);
        const i128 v = scaled_value(tup);
        i128 r = v % period;
        if (r < 0) r += period;
        const i128 dist = std::min(r, period - r);
        lattice = std::min(lattice, static_cast<double>(static_cast<long double>(dist) / static_cast<long double>(period)));
        ++rep.tuples;
    });
    rep.lattice_margin = rep.tuples == 0 ? 1.0 : lattice;
    rep.certified_margin = rep.lattice_margin - static_cast<double>(slack / rm);
    rep.certified = rep.certified_margin >= rep.eps / 2;
    return res;
}

// ---------------------------------------------------------------------------
// Low-rank offset search

RationalMatrix rational_matrix(int rows, int cols, const std::vector<std::pair<std::int64_t, std::int64_t>>& entries) {
    if (rows < 1 || cols < 1 || entries.size() != static_cast<std::size_t>(rows * cols)) {
        throw std::invalid_argument("rational_matrix: entry count differs from rows * cols");
    }
    RationalMatrix L;
    L.rows = rows;
    L.cols = cols;
    for (auto [a, b] : entries) {
        if (b == 0) throw std::invalid_argument("rational_matrix: zero denominator");
        if (b < 0) {
            a = -a;
            b = -b;
        }
        const std::int64_t g = std::gcd(a, b);
        L.num.push_back(a / (g == 0 ? 1 : g));
        L.den.push_back(b / (g == 0 ? 1 : g));
    }
    return L;
}

nlohmann::json to_json(const LowRankReport& r) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : r.checks) checks.push_back(to_json(c));
    return {{"generation", r.generation},
            {"A", r.A},
            {"pivots", r.pivots},
            {"offset", r.offset},
            {"offsets_total", r.offsets_total},
            {"offsets_forbidden", r.offsets_forbidden},
            {"image_points", r.image_points},
            {"checks", checks}};
}

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

}  // namespace

LowRankResult lowrank_step(const std::vector<GridSet>& T, const RationalMatrix& L, const GridSet& B,
                           const BranchingSchedule& s, const LowRankParams& p) {
    const int n = static_cast<int>(T.size());
    const int m = L.rows;
    if (s.dim() != 1) throw std::invalid_argument("lowrank_step: d = 1 only");
    if (L.cols != n) throw std::invalid_argument("lowrank_step: matrix columns differ from the number of sets");
    for (const auto& t : T) require_fine(t, s, "lowrank_step");
    const int k = T.front().generation();
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (!set_intersection(T[static_cast<std::size_t>(i)], T[static_cast<std::size_t>(j)]).empty()) {
                throw std::invalid_argument("lowrank_step: sets are not disjoint");
            }
        }
    }
    if (B.dim() != m || B.n() != 1 || B.denom() != s.D(k + 1)) {
        throw std::invalid_argument("lowrank_step: B must be an m-dimensional set at generation k+1");
    }

    LowRankResult res;
    LowRankReport& rep = res.report;
    rep.generation = k + 1;

    // Pivot column for each row: the unit vector e_j.
    std::vector<int> pivot_of_col(static_cast<std::size_t>(n), -1);
    for (int j = 0; j < m; ++j) {
        int found = -1;
        for (int c = 0; c < n && found < 0; ++c) {
            bool unit = pivot_of_col[static_cast<std::size_t>(c)] < 0;
            for (int r = 0; r < m && unit; ++r) unit = L.n_at(r, c) == (r == j ? 1 : 0) && L.d_at(r, c) == 1;
            if (unit) found = c;
        }
        if (found < 0) throw std::invalid_argument("lowrank_step: matrix is not normalized (no column equals e_" + std::to_string(j + 1) + ")");
        pivot_of_col[static_cast<std::size_t>(found)] = j;
        rep.pivots.push_back(found);
    }
    std::int64_t A = 1;
    for (int c = 0; c < n; ++c) {
        if (pivot_of_col[static_cast<std::size_t>(c)] >= 0) continue;
        for (int r = 0; r < m; ++r) A *= L.d_at(r, c);
    }
    rep.A = A;

    const coord_t N = s.N(k + 1);
    const coord_t M = s.M(k + 1);
    const coord_t ratio = N / M;
    if (N % A != 0) throw ScheduleError("lowrank_step: A = " + std::to_string(A) + " does not divide N");
    if (M % A != 0) throw ScheduleError("lowrank_step: A = " + std::to_string(A) + " does not divide M");

    const double gap = m - (p.s + p.eps);
    rep.checks.push_back(le("#B <= N^(s+eps)", static_cast<double>(B.size()),
                            std::pow(static_cast<double>(N), p.s + p.eps) * (1 + 1e-12)));
    rep.checks.push_back(le("M^(m/(m-s-eps)) < N (C = 1)",
                            gap > 0 ? std::pow(static_cast<double>(M), m / gap) : std::numeric_limits<double>::infinity(),
                            static_cast<double>(N)));
    enforce(rep.checks, p.enforce_hypotheses, "lowrank_step");

    // Startpoints (fine units) per column at offset zero.
    std::vector<std::vector<coord_t>> starts(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) {
        GridSet cells = intermediary_cells(T[static_cast<std::size_t>(c)], s);
        for (coord_t a : cells.data()) {
            if (pivot_of_col[static_cast<std::size_t>(c)] >= 0 || a % A == 0) {
                starts[static_cast<std::size_t>(c)].push_back(a * ratio);
            }
        }
    }

    // Image of the startpoint product at offset zero; integer because A divides every
    // free startpoint's cell index.
    std::set<std::vector<std::int64_t>> image{std::vector<std::int64_t>(static_cast<std::size_t>(m), 0)};
    for (int c = 0; c < n; ++c) {
        std::set<std::vector<std::int64_t>> next;
        for (const auto& y : image) {
            for (coord_t x : starts[static_cast<std::size_t>(c)]) {
                std::vector<std::int64_t> z(y);
                for (int r = 0; r < m; ++r) z[static_cast<std::size_t>(r)] += L.n_at(r, c) * (x / L.d_at(r, c));
                next.insert(std::move(z));
            }
        }
        image = std::move(next);
        if (image.size() > p.budget) throw BudgetError("lowrank_step: image lattice exceeds the budget");
    }
    rep.image_points = image.size();

    // The image of a product of unit cubes is y + sum_c [min(0, L_rc), max(0, L_rc)] per row,
    // kept as fractions over a common denominator.
    std::vector<std::int64_t> lo_num(static_cast<std::size_t>(m), 0), hi_num(static_cast<std::size_t>(m), 0),
        den(static_cast<std::size_t>(m), 1);
    for (int r = 0; r < m; ++r) {
        std::int64_t l = 1;
        for (int c = 0; c < n; ++c) l = std::lcm(l, L.d_at(r, c));
        den[static_cast<std::size_t>(r)] = l;
        for (int c = 0; c < n; ++c) {
            const std::int64_t v = L.n_at(r, c) * (l / L.d_at(r, c));
            (v < 0 ? lo_num : hi_num)[static_cast<std::size_t>(r)] += v;
        }
    }

    long double total = 1;
    for (int r = 0; r < m; ++r) total *= static_cast<long double>(ratio);
    if (total > static_cast<long double>(p.budget)) throw BudgetError("lowrank_step: offset space exceeds the budget");
    rep.offsets_total = static_cast<std::uint64_t>(total);
    std::vector<char> forbidden(rep.offsets_total, 0);

    // Offsets X with (y + X + box) meeting the closed cube [b, b+1] for some y and b.
    std::vector<std::int64_t> olo(static_cast<std::size_t>(m)), ohi(static_cast<std::size_t>(m));
    for (const auto& y : image) {
        for (std::size_t b = 0; b < B.size(); ++b) {
            bool empty = false;
            for (int r = 0; r < m && !empty; ++r) {
                const auto R = static_cast<std::size_t>(r);
                const std::int64_t base = B[b][R] - y[R];
                olo[R] = std::max<std::int64_t>(0, ceil_div(base * den[R] - hi_num[R], den[R]));
                ohi[R] = std::min<std::int64_t>(ratio - 1, floor_div((base + 1) * den[R] - lo_num[R], den[R]));
                empty = olo[R] > ohi[R];
            }
            if (empty) continue;
            std::vector<std::int64_t> cur(olo);
            while (true) {
                std::uint64_t idx = 0;
                for (int r = 0; r < m; ++r) idx = idx * static_cast<std::uint64_t>(ratio) + static_cast<std::uint64_t>(cur[static_cast<std::size_t>(r)]);
                forbidden[idx] = 1;
                int r = m - 1;
                while (r >= 0 && ++cur[static_cast<std::size_t>(r)] > ohi[static_cast<std::size_t>(r)]) {
                    cur[static_cast<std::size_t>(r)] = olo[static_cast<std::size_t>(r)];
                    --r;
                }
                if (r < 0) break;
            }
        }
    }
    rep.offsets_forbidden = static_cast<std::uint64_t>(std::count(forbidden.begin(), forbidden.end(), 1));
    const auto it = std::find(forbidden.begin(), forbidden.end(), 0);
    if (it == forbidden.end()) {
        throw HypothesisError("lowrank_step: all " + std::to_string(rep.offsets_total) +
                              " offsets meet the bad set (" + std::to_string(B.size()) + " cubes, " +
                              std::to_string(rep.image_points) + " image points)");
    }
    std::uint64_t idx = static_cast<std::uint64_t>(it - forbidden.begin());
    rep.offset.assign(static_cast<std::size_t>(m), 0);
    for (int r = m - 1; r >= 0; --r) {
        rep.offset[static_cast<std::size_t>(r)] = static_cast<coord_t>(idx % static_cast<std::uint64_t>(ratio));
        idx /= static_cast<std::uint64_t>(ratio);
    }

    for (int c = 0; c < n; ++c) {
        const int j = pivot_of_col[static_cast<std::size_t>(c)];
        std::vector<coord_t> flat(starts[static_cast<std::size_t>(c)]);
        if (j >= 0) {
            for (auto& x : flat) x += rep.offset[static_cast<std::size_t>(j)];
        }
        res.S.emplace_back(1, 1, k + 1, GridKind::DQ, s.D(k + 1), std::move(flat));
    }
    return res;
}

}  // namespace fav
