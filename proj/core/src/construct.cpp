#include "fractal_avoid/construct.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <stdexcept>

namespace fav {

namespace {

HypothesisCheck le(std::string name, double lhs, double rhs) { return {std::move(name), lhs, rhs, lhs <= rhs}; }

// Generation-g ancestor coordinates of a generation-k cube.
void ancestor(std::span<const coord_t> cube, coord_t factor, std::vector<coord_t>& out) {
    out.assign(cube.begin(), cube.end());
    for (auto& c : out) c /= factor;
}

GridSet coarsen(const GridSet& E, int g, const BranchingSchedule& s) {
    const coord_t f = E.denom() / s.D(g);
    std::vector<coord_t> flat;
    flat.reserve(E.data().size());
    for (coord_t v : E.data()) flat.push_back(v / f);
    return GridSet(E.d(), E.n(), g, GridKind::DQ, s.D(g), std::move(flat));
}

void check_eps(const std::vector<double>& eps, int d, int n, double s) {
    const double gap = d * n - s;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (!(eps[i] > 0 && eps[i] < gap / 2)) {
            throw std::invalid_argument("strong cover: eps_" + std::to_string(i + 1) + " outside (0, (dn - s)/2)");
        }
        if (i > 0 && eps[i] > eps[i - 1]) throw std::invalid_argument("strong cover: eps sequence must not increase");
    }
}

HypothesisCheck decay_check(int k, coord_t N, coord_t Dprev, double eps, double C) {
    // log N >= max(log C, log D_{k-1} / eps).
    const double need = std::max(std::log(C), std::log(static_cast<double>(Dprev)) / eps);
    return le("N_" + std::to_string(k) + " >= max(C, D_" + std::to_string(k - 1) + "^(1/eps))", need * (1 - 1e-12),
              std::log(static_cast<double>(N)));
}

}  // namespace

double default_eps(int k, int d, int n, double s) { return std::min((d * n - s) / 4.0, 1.0 / (k + 1)); }

coord_t choose_intermediary(coord_t N, int d, int n, double s, double eps, double C) {
    if (N < 1) throw std::invalid_argument("choose_intermediary: N must be positive");
    if (n < 2) throw std::invalid_argument("choose_intermediary: needs n >= 2");
    const double gap = d * n - s - eps;
    if (gap <= 0) throw std::invalid_argument("choose_intermediary: dn - s - eps must be positive");
    const double t = gap / (d * (n - 1)) * std::log2(static_cast<double>(N) / C);
    if (t <= 0) return 1;
    const double e = std::ceil(t - 1e-9) - 1;
    coord_t M = e >= 62 ? N : (coord_t{1} << static_cast<int>(std::max(0.0, e)));
    M = std::clamp<coord_t>(M, 1, N);
    while (N % M != 0) M /= 2;
    return M;
}

nlohmann::json to_json(const StrongCoverPlan& p) {
    nlohmann::json sp = nlohmann::json::array();
    nlohmann::json dc = nlohmann::json::array();
    for (const auto& c : p.sparsity) sp.push_back(to_json(c));
    for (const auto& c : p.decay) dc.push_back(to_json(c));
    return {{"schedule", schedule_json(p.schedule)},
            {"interleave", p.interleave},
            {"tags", p.tags},
            {"eps", p.eps},
            {"bad_counts", p.bad_counts},
            {"sparsity", sp},
            {"decay", dc},
            {"fixed_schedule", p.fixed_schedule},
            {"notes", p.notes}};
}

StrongCoverPlan build_strong_cover(const std::vector<OraclePtr>& oracles, const StrongCoverOptions& opts) {
    if (oracles.empty()) throw std::invalid_argument("build_strong_cover: no oracles");
    if (opts.depth < 1) throw std::invalid_argument("build_strong_cover: depth must be positive");
    const int d = oracles.front()->d();
    for (const auto& o : oracles) {
        if (o->d() != d) throw std::invalid_argument("build_strong_cover: oracles differ in d");
    }
    StrongCoverPlan plan;
    std::vector<coord_t> N, M;
    int bits = 0;
    for (int k = 1; k <= opts.depth; ++k) {
        const std::size_t i = static_cast<std::size_t>(k - 1) % oracles.size();
        const CoverOracle& o = *oracles[i];
        const double s = o.s();
        const double eps = opts.eps.empty() ? default_eps(k, d, o.n(), s) : opts.eps.at(static_cast<std::size_t>(k - 1));
        plan.eps.push_back(eps);
        check_eps(plan.eps, d, o.n(), s);
        const double C = opts.C > 0 ? opts.C : default_C(d, o.n(), s);
        const coord_t Dprev = coord_t{1} << bits;

        int a = std::max({1, static_cast<int>(std::ceil(std::log2(C) - 1e-9)),
                          static_cast<int>(std::ceil(bits / eps - 1e-9))});
        bool found = false;
        for (; bits + a <= opts.budget_bits; ++a) {
            const coord_t Nk = coord_t{1} << a;
            std::uint64_t count = 0;
            try {
                count = o.cover_count(k, Dprev * Nk);
            } catch (const BudgetError& e) {
                throw BudgetError("build_strong_cover: cover of '" + o.tag() + "' at generation " + std::to_string(k) +
                                  " cannot be counted: " + e.what());
            }
            const double limit = std::pow(static_cast<double>(Nk), s + eps);
            if (static_cast<double>(count) <= limit * (1 + 1e-12)) {
                N.push_back(Nk);
                M.push_back(choose_intermediary(Nk, d, o.n(), s, eps, C));
                plan.bad_counts.push_back(static_cast<long long>(count));
                plan.sparsity.push_back(le("#B_" + std::to_string(k) + " <= N^(s+eps)", static_cast<double>(count), limit));
                plan.decay.push_back(decay_check(k, Nk, Dprev, eps, C));
                bits += a;
                found = true;
                break;
            }
        }
        if (!found) {
            throw BudgetError("build_strong_cover: no admissible N_" + std::to_string(k) + " within " +
                              std::to_string(opts.budget_bits) + " bits (oracle '" + o.tag() + "')");
        }
        plan.interleave.push_back(i);
        plan.tags.push_back(o.tag());
    }
    plan.schedule = BranchingSchedule(d, N, M, opts.budget_bits);
    return plan;
}

StrongCoverPlan fixed_plan(const std::vector<OraclePtr>& oracles, const BranchingSchedule& s, std::vector<double> eps) {
    if (oracles.empty()) throw std::invalid_argument("fixed_plan: no oracles");
    StrongCoverPlan plan;
    plan.schedule = s;
    plan.fixed_schedule = true;
    for (int k = 1; k <= s.depth(); ++k) {
        const std::size_t i = static_cast<std::size_t>(k - 1) % oracles.size();
        const CoverOracle& o = *oracles[i];
        if (o.d() != s.dim()) throw std::invalid_argument("fixed_plan: oracle dimension differs from the schedule");
        plan.interleave.push_back(i);
        plan.tags.push_back(o.tag());
        if (eps.size() < static_cast<std::size_t>(k)) eps.push_back(default_eps(k, s.dim(), o.n(), o.s()));
        plan.bad_counts.push_back(-1);
    }
    plan.eps = std::move(eps);
    plan.eps.resize(static_cast<std::size_t>(s.depth()));
    return plan;
}

MainState initial_state(const StrongCoverPlan& plan) {
    MainState st;
    st.schedule = plan.schedule;
    st.plan = plan;
    st.X.push_back(root_set(plan.schedule.dim()));
    return st;
}

void iterate_main(MainState& state, const std::vector<OraclePtr>& oracles, const AvoidParams& base, int steps) {
    const BranchingSchedule& s = state.schedule;
    for (int step = 0; step < steps; ++step) {
        const int k = state.generation();
        if (k + 1 > s.depth()) throw ScheduleError("iterate_main: plan ends at generation " + std::to_string(k));
        const std::size_t i = state.plan.interleave.at(static_cast<std::size_t>(k));
        const CoverOracle& o = *oracles.at(i);
        AvoidParams p = base;
        p.d = s.dim();
        p.n = o.n();
        p.s = o.s();
        p.eps = state.plan.eps.at(static_cast<std::size_t>(k));
        const GridSet& T = state.X.back();
        const GridSet cand = children(T, s);
        if (std::pow(static_cast<double>(cand.size()), p.n) > 0x1.0p24) {
            // Too many candidate tuples to materialize B; collisions are drawn from the oracle per trial.
            StepResult r = avoid_step(T, o, p, s);
            if (state.plan.fixed_schedule) state.plan.notes.push_back("step " + std::to_string(k + 1) + ": restricted cover not materialized");
            state.X.push_back(std::move(r.S));
            state.reports.push_back(std::move(r.report));
            continue;
        }
        const GridSet B = o.cover_within(k + 1, s.D(k + 1), cand);
        StepResult r = avoid_step(T, B, p, s);
        if (state.plan.fixed_schedule) {
            const double C = resolved_C(p);
            state.plan.bad_counts[static_cast<std::size_t>(k)] = static_cast<long long>(B.size());
            state.plan.sparsity.push_back(le("#B_" + std::to_string(k + 1) + " <= N^(s+eps)", static_cast<double>(B.size()),
                                             std::pow(static_cast<double>(s.N(k + 1)), p.s + p.eps)));
            state.plan.decay.push_back(decay_check(k + 1, s.N(k + 1), s.D(k), p.eps, C));
        }
        state.X.push_back(std::move(r.S));
        state.reports.push_back(std::move(r.report));
    }
}

std::vector<TransportCheck> transport_checks(const MainState& state, const std::vector<OraclePtr>& oracles) {
    std::vector<TransportCheck> out;
    const GridSet& X = state.X.back();
    for (int j = 1; j <= state.generation(); ++j) {
        const CoverOracle& o = *oracles.at(state.plan.interleave.at(static_cast<std::size_t>(j - 1)));
        const GridSet coarse = coarsen(X, j, state.schedule);
        TransportCheck t;
        t.generation = j;
        t.coarse_cubes = coarse.size();
        t.violations = nondiagonal_filter(o.cover_within(j, state.schedule.D(j), coarse), o.n()).size();
        out.push_back(t);
    }
    return out;
}

const char* to_string(KeletiQueue q) { return q == KeletiQueue::Literal ? "literal" : "kept-only"; }

KeletiState iterate_keleti(const BranchingSchedule& s, int depth, KeletiQueue queue) {
    if (s.dim() != 1) throw std::invalid_argument("iterate_keleti: intervals only");
    if (depth < 0 || depth > s.depth()) throw ScheduleError("iterate_keleti: depth exceeds the schedule");
    constexpr std::uint64_t kQueueCap = std::uint64_t{1} << 26;
    // Blocks of queued intervals: a range [next, end) of indices, or positions in `list`.
    struct Block {
        int generation;
        coord_t next;
        coord_t end;
        std::vector<coord_t> list;
    };
    std::deque<Block> q{{0, 0, 1, {}}};
    std::uint64_t size = 1;

    KeletiState st;
    st.schedule = s;
    st.queue = queue;
    st.X.push_back(root_set(1));
    for (int k = 0; k < depth; ++k) {
        if (q.empty()) throw std::logic_error("iterate_keleti: queue ran dry");
        Block& b = q.front();
        const coord_t idx = b.list.empty() ? b.next : b.list[static_cast<std::size_t>(b.next)];
        const int gen = b.generation;
        if (++b.next == b.end) q.pop_front();
        --size;
        st.X.push_back(keleti_step(st.X.back(), gen, idx, s));
        st.processed.push_back({gen, idx, k + 1});
        if (queue == KeletiQueue::Literal) {
            size += static_cast<std::uint64_t>(s.D(k + 1));
            if (size > kQueueCap) throw BudgetError("iterate_keleti: queue exceeds 2^26 intervals");
            q.push_back({k + 1, 0, s.D(k + 1), {}});
        } else {
            const GridSet& X = st.X.back();
            size += X.size();
            if (size > kQueueCap) throw BudgetError("iterate_keleti: queue exceeds 2^26 intervals");
            if (!X.empty()) q.push_back({k + 1, 0, static_cast<coord_t>(X.size()), X.data()});
        }
        st.queue_sizes.push_back(size);
    }
    return st;
}

FpState iterate_fp(const CoverOracle& oracle, const BranchingSchedule& s, int depth, const FpOptions& opts) {
    if (depth < 0 || depth > s.depth()) throw ScheduleError("iterate_fp: depth exceeds the schedule");
    if (oracle.d() != s.dim()) throw std::invalid_argument("iterate_fp: oracle dimension differs from the schedule");
    const int d = s.dim();
    const int n = oracle.n();
    FpState st;
    st.schedule = s;
    st.n = n;
    st.X.push_back(root_set(d));
    std::deque<FpTuple> q;

    auto enqueue = [&](const GridSet& X) {
        const std::size_t m = X.size();
        double offered = 1;
        for (int j = 0; j < n; ++j) offered *= static_cast<double>(m > static_cast<std::size_t>(j) ? m - j : 0);
        st.offered.push_back(offered);
        std::uint64_t added = 0;
        if (m >= static_cast<std::size_t>(n)) {
            std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
            while (q.size() < opts.queue_cap) {
                bool distinct = true;
                for (int a = 0; a < n && distinct; ++a) {
                    for (int b = a + 1; b < n && distinct; ++b) distinct = idx[a] != idx[b];
                }
                if (distinct) {
                    FpTuple t;
                    t.generation = X.generation();
                    for (std::size_t c : idx) t.cubes.insert(t.cubes.end(), X[c].begin(), X[c].end());
                    q.push_back(std::move(t));
                    ++added;
                }
                std::size_t pos = idx.size();
                bool done = true;
                while (pos > 0) {
                    --pos;
                    if (++idx[pos] < m) {
                        done = false;
                        break;
                    }
                    idx[pos] = 0;
                }
                if (done) break;
            }
        }
        if (static_cast<double>(added) < offered) st.cap_reached = true;
        st.enqueued.push_back(added);
    };

    for (int k = 0; k < depth; ++k) {
        const GridSet& Xk = st.X.back();
        if (k == 0) {
            st.X.push_back(children(Xk, s));
            enqueue(st.X.back());
            continue;
        }
        if (q.empty()) {
            st.X.push_back(children(Xk, s));
            st.enqueued.push_back(0);
            st.offered.push_back(0);
            continue;
        }
        FpProcessed proc;
        proc.tuple = std::move(q.front());
        q.pop_front();
        proc.created = k + 1;
        const int g = proc.tuple.generation;
        const coord_t factor = s.D(k) / s.D(g);
        const coord_t factor1 = s.D(k + 1) / s.D(g);

        std::vector<std::vector<coord_t>> parts(static_cast<std::size_t>(n));
        std::vector<coord_t> rest;
        std::vector<coord_t> anc;
        for (std::size_t c = 0; c < Xk.size(); ++c) {
            ancestor(Xk[c], factor, anc);
            int owner = -1;
            for (int i = 0; i < n && owner < 0; ++i) {
                if (std::equal(anc.begin(), anc.end(), proc.tuple.cubes.begin() + i * d)) owner = i;
            }
            auto& dst = owner >= 0 ? parts[static_cast<std::size_t>(owner)] : rest;
            dst.insert(dst.end(), Xk[c].begin(), Xk[c].end());
        }
        proc.applied = std::all_of(parts.begin(), parts.end(), [](const auto& v) { return !v.empty(); });
        if (!proc.applied) {
            st.X.push_back(children(Xk, s));
        } else {
            std::vector<GridSet> T;
            std::vector<coord_t> all;
            for (auto& part : parts) {
                T.emplace_back(d, 1, k, GridKind::DQ, s.D(k), part);
                all.insert(all.end(), part.begin(), part.end());
            }
            const GridSet cand = children(GridSet(d, 1, k, GridKind::DQ, s.D(k), std::move(all)), s);
            const GridSet cover = oracle.cover_within(k + 1, s.D(k + 1), cand);
            std::vector<coord_t> bflat;
            for (std::size_t c = 0; c < cover.size(); ++c) {
                bool ok = true;
                for (int i = 0; i < n && ok; ++i) {
                    for (int a = 0; a < d && ok; ++a) {
                        ok = cover[c][static_cast<std::size_t>(i * d + a)] / factor1 ==
                             proc.tuple.cubes[static_cast<std::size_t>(i * d + a)];
                    }
                }
                if (ok) bflat.insert(bflat.end(), cover[c].begin(), cover[c].end());
            }
            const GridSet B(d, n, k + 1, GridKind::DQ, s.D(k + 1), std::move(bflat));
            FpResult r = fp_step(T, B, s, opts.params);
            GridSet next = children(GridSet(d, 1, k, GridKind::DQ, s.D(k), std::move(rest)), s);
            for (const auto& Si : r.S) next = set_union(next, Si);
            st.X.push_back(std::move(next));
            st.reports.push_back(std::move(r.report));
        }
        st.processed.push_back(std::move(proc));
        enqueue(st.X.back());
    }
    st.queue_remaining = q.size();
    return st;
}

VerifyReport fp_certificate(const FpState& state, const CoverOracle& oracle) {
    VerifyReport rep;
    rep.check = "fp_processed";
    rep.strategy = "processed-tuples";
    const BranchingSchedule& s = state.schedule;
    const int d = s.dim();
    const int n = state.n;
    const GridSet& X = state.X.back();
    constexpr std::uint64_t kBudget = 10'000'000;
    for (const auto& proc : state.processed) {
        if (!proc.applied) continue;
        const int c = proc.created;
        const GridSet coarse = coarsen(X, c, s);
        const coord_t factor = s.D(c) / s.D(proc.tuple.generation);
        std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n));
        std::vector<coord_t> anc;
        for (std::size_t q = 0; q < coarse.size(); ++q) {
            ancestor(coarse[q], factor, anc);
            for (int i = 0; i < n; ++i) {
                if (std::equal(anc.begin(), anc.end(), proc.tuple.cubes.begin() + i * d)) members[static_cast<std::size_t>(i)].push_back(q);
            }
        }
        double total = 1;
        for (const auto& m : members) total *= static_cast<double>(m.size());
        if (total == 0) continue;
        if (static_cast<double>(rep.tuples_checked) + total > kBudget) {
            throw BudgetError("fp_certificate: more than 10^7 processed tuples to scan");
        }
        std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
        std::vector<coord_t> cube(static_cast<std::size_t>(n * d));
        while (true) {
            for (int i = 0; i < n; ++i) {
                auto q = coarse[members[static_cast<std::size_t>(i)][idx[static_cast<std::size_t>(i)]]];
                std::copy(q.begin(), q.end(), cube.begin() + i * d);
            }
            ++rep.tuples_checked;
            if (oracle.covers(c, s.D(c), cube)) {
                ++rep.violation_count;
                if (rep.violations.size() < VerifyReport::kMaxListed) rep.violations.push_back(cube);
            }
            std::size_t pos = idx.size();
            bool done = true;
            while (pos > 0) {
                --pos;
                if (++idx[pos] < members[pos].size()) {
                    done = false;
                    break;
                }
                idx[pos] = 0;
            }
            if (done) break;
        }
    }
    return rep;
}

double target_dimension(const DimensionTarget& t) {
    switch (t.kind) {
        case DimensionTarget::Kind::Sumset:
            return t.d - t.t;
        case DimensionTarget::Kind::Isosceles:
            return 0.5;
        case DimensionTarget::Kind::Main:
            break;
    }
    if (t.s >= t.d * t.n) return 0;
    return (t.n * t.d - t.s) / (t.n - 1);
}

nlohmann::json to_json(const DimensionReport& r) {
    nlohmann::json j{{"target", r.target},
                     {"target_rule", r.target_rule},
                     {"empty_set_shortcut", r.empty_set_shortcut},
                     {"depth", r.depth}};
    if (!r.empty_set_shortcut) {
        j["frostman"] = to_json(r.frostman);
        j["uniform_mass"] = to_json(r.uniform_mass);
    }
    return j;
}

DimensionReport dimension_report(const std::vector<GridSet>& levels, const BranchingSchedule& s,
                                 const DimensionTarget& target) {
    DimensionReport r;
    r.target = target_dimension(target);
    r.depth = static_cast<int>(levels.size()) - 1;
    switch (target.kind) {
        case DimensionTarget::Kind::Sumset:
            r.target_rule = "d - t";
            break;
        case DimensionTarget::Kind::Isosceles:
            r.target_rule = "1/2";
            break;
        case DimensionTarget::Kind::Main:
            r.target_rule = target.s >= target.d * target.n ? "s = dn" : "(nd - s)/(n - 1)";
            break;
    }
    if (target.kind == DimensionTarget::Kind::Main && target.s >= target.d * target.n) {
        r.empty_set_shortcut = true;
        return r;
    }
    const WeightTree tree = canonical_weights(levels, s);
    if (r.depth >= 1) r.frostman = frostman_exponent(tree);
    UniformMassOptions o;
    o.exponent = r.target;
    r.uniform_mass = uniform_mass_check(tree, o);
    return r;
}

nlohmann::json schedule_json(const BranchingSchedule& s) {
    return {{"d", s.dim()}, {"N", s.N_seq()}, {"M", s.M_seq()}, {"budget_bits", s.budget_bits()}};
}

namespace {

nlohmann::json sizes_json(const std::vector<GridSet>& X) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& x : X) j.push_back(x.size());
    return j;
}

}  // namespace

nlohmann::json history_json(const MainState& st) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& r : st.reports) steps.push_back(to_json(r));
    return {{"mode", "main"},
            {"schedule", schedule_json(st.schedule)},
            {"plan", to_json(st.plan)},
            {"sizes", sizes_json(st.X)},
            {"steps", steps}};
}

nlohmann::json history_json(const KeletiState& st) {
    nlohmann::json proc = nlohmann::json::array();
    for (const auto& p : st.processed) proc.push_back({{"generation", p.generation}, {"index", p.index}, {"created", p.created}});
    return {{"mode", "keleti"},
            {"queue", to_string(st.queue)},
            {"schedule", schedule_json(st.schedule)},
            {"sizes", sizes_json(st.X)},
            {"processed", proc},
            {"queue_sizes", st.queue_sizes}};
}

nlohmann::json history_json(const FpState& st) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& r : st.reports) steps.push_back(to_json(r));
    nlohmann::json proc = nlohmann::json::array();
    for (const auto& p : st.processed) {
        proc.push_back({{"generation", p.tuple.generation},
                        {"cubes", p.tuple.cubes},
                        {"created", p.created},
                        {"applied", p.applied}});
    }
    return {{"mode", "fp"},
            {"schedule", schedule_json(st.schedule)},
            {"n", st.n},
            {"sizes", sizes_json(st.X)},
            {"steps", steps},
            {"processed", proc},
            {"offered", st.offered},
            {"enqueued", st.enqueued},
            {"queue_remaining", st.queue_remaining},
            {"cap_reached", st.cap_reached}};
}

std::vector<std::string> save_levels(const std::string& dir, const std::vector<GridSet>& X) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> names;
    for (std::size_t k = 0; k < X.size(); ++k) {
        names.push_back("X_" + std::to_string(k) + ".grid");
        save_gridset((std::filesystem::path(dir) / names.back()).string(), X[k]);
    }
    return names;
}

}  // namespace fav
