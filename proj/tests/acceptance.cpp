// Acceptance run: one PASS/FAIL line per criterion. Tolerances and runtime limits are
// fixed here; the exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fractal_avoid/construct.hpp"
#include "fractal_avoid/dimension.hpp"
#include "fractal_avoid/fourier.hpp"
#include "fractal_avoid/measure.hpp"
#include "fractal_avoid/verify.hpp"
#include "runner.hpp"

namespace {

using namespace fav;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << std::fixed << v;
    return os.str();
}

// C1: middle-thirds set, constant N = 3, depth 8.
Outcome cantor_calibration() {
    constexpr int kDepth = 8;
    constexpr double kTol = 0.02;
    ScheduleSpec spec;
    spec.mode = ScheduleSpec::Mode::Constant;
    spec.depth = kDepth;
    spec.constant_N = 3;
    spec.require_power_of_two = false;
    const BranchingSchedule s = make_schedule(spec).schedule;
    std::vector<GridSet> levels{root_set(1)};
    for (int k = 1; k <= kDepth; ++k) {
        const GridSet kids = children(levels.back(), s);
        std::vector<coord_t> keep;
        for (coord_t c : kids.data()) {
            if (c % 3 != 1) keep.push_back(c);
        }
        levels.emplace_back(1, 1, k, GridKind::DQ, s.D(k), std::move(keep));
    }
    const auto est = minkowski_estimate(levels.back(), s, 1);
    const auto fr = frostman_exponent(canonical_weights(levels, s));
    const double target = std::log(2.0) / std::log(3.0);
    Outcome o;
    o.pass = std::abs(est.ratio.back() - 0.6309) <= kTol && std::abs(fr.exponent - target) <= kTol;
    o.detail = "minkowski=" + fmt(est.ratio.back()) + " frostman=" + fmt(fr.exponent);
    return o;
}

// C2: 100 instances, N = 64, M = 8, 64 strongly non-diagonal bad pairs.
Outcome discrete_avoidance() {
    constexpr int kInstances = 100;
    constexpr int kTrials = 64;
    constexpr std::uint32_t kMinKept = 4;
    const BranchingSchedule s(1, {64}, {8});
    std::mt19937_64 gen(2024);
    int ok = 0;
    int max_trials = 0;
    std::uint32_t min_kept = 8;
    std::uint64_t violations = 0;
    for (int i = 0; i < kInstances; ++i) {
        std::set<std::pair<coord_t, coord_t>> picked;
        while (picked.size() < 64) {
            const auto a = static_cast<coord_t>(gen() % 64);
            const auto b = static_cast<coord_t>(gen() % 64);
            if (a != b) picked.insert({a, b});
        }
        std::vector<coord_t> flat;
        for (auto [a, b] : picked) flat.insert(flat.end(), {a, b});
        const GridSet B(1, 2, 1, GridKind::DQ, 64, flat);
        AvoidParams p;
        p.s = 1;
        p.eps = 0;
        p.seed = static_cast<std::uint64_t>(i);
        p.retry_limit = kTrials;
        try {
            const auto r = avoid_step(root_set(1), B, p, s);
            const auto v = assert_avoids(r.S, B, 2);
            violations += v.violation_count;
            max_trials = std::max(max_trials, r.report.trials);
            min_kept = std::min(min_kept, r.report.min_kept);
            if (!r.report.used_exhaustive && r.report.trials <= kTrials && v.passed() && r.report.min_kept >= kMinKept) ++ok;
        } catch (const std::exception&) {
        }
    }
    Outcome o;
    o.pass = ok == kInstances;
    o.detail = "succeeded=" + std::to_string(ok) + "/" + std::to_string(kInstances) + " max_trials=" +
               std::to_string(max_trials) + " violations=" + std::to_string(violations) +
               " min_kept=" + std::to_string(min_kept);
    return o;
}

// C3: one bad pair with blocks under distinct parents; P(both selected) = (M/N)^2.
Outcome collision_statistics() {
    constexpr int kSeeds = 10000;
    const BranchingSchedule s(1, {2, 64}, {2, 8});
    const GridSet T(1, 1, 1, GridKind::DQ, 2, {0, 1});
    const GridSet B(1, 2, 2, GridKind::DQ, 128, {5, 64 + 41});
    int hits = 0;
    for (int i = 0; i < kSeeds; ++i) {
        const GridSet A = random_select(T, s, derive_seed(3, 0, static_cast<std::uint64_t>(i)));
        if (!collision_set(A, B, 2).empty()) ++hits;
    }
    const double p = std::pow(8.0 / 64.0, 2);
    const double phat = static_cast<double>(hits) / kSeeds;
    const double sigma = std::sqrt(p * (1 - p) / kSeeds);
    Outcome o;
    o.pass = std::abs(phat - p) <= 3 * sigma;
    o.detail = "empirical=" + fmt(phat, 5) + " expected=" + fmt(p, 5) + " 3sigma=" + fmt(3 * sigma, 5);
    return o;
}

// C4: interval construction at depth 3 with N = 20, 40, 80, both queue readings.
Outcome keleti() {
    const BranchingSchedule s(1, {20, 40, 80}, {2, 4, 8});
    bool pass = true;
    std::string detail;
    for (KeletiQueue q : {KeletiQueue::Literal, KeletiQueue::KeptOnly}) {
        const auto st = iterate_keleti(s, 3, q);
        coord_t pow10 = 1;
        bool law = true;
        for (int k = 1; k <= 3; ++k) {
            pow10 *= 10;
            law = law && static_cast<coord_t>(st.X[static_cast<std::size_t>(k)].size()) == s.D(k) / pow10;
        }
        const auto v = difference_check(st.X.back(), st.processed, s);
        pass = pass && law && v.passed();
        detail += std::string(to_string(q)) + ": count_law=" + (law ? "exact" : "broken") + " quadruples=" +
                  std::to_string(v.tuples_checked) + " violations=" + std::to_string(v.violation_count) + " ";
    }
    return {pass, detail};
}

// C5: sumset with Y = {1}, fixed schedule, depth 3.
Outcome sumset_application() {
    constexpr double kFrostmanMin = 0.8;
    const BranchingSchedule s(1, {1024, 1024, 1024}, {128, 128, 128});
    const std::vector<OraclePtr> oracles{sumset_cover(point_set_oracle(1, {{1.0}}))};
    auto st = initial_state(fixed_plan(oracles, s));
    AvoidParams ap;
    ap.seed = 1;
    iterate_main(st, oracles, ap, 3);
    const auto check = sumset_check(st.X.back(), thicken_points({{1.0}}, 3, s));
    DimensionTarget t;
    t.kind = DimensionTarget::Kind::Sumset;
    t.d = 1;
    t.t = 0;
    const auto rep = dimension_report(st.X, s, t);
    Outcome o;
    o.pass = check.passed() && std::abs(rep.target - 1.0) < 1e-12 && rep.frostman.exponent >= kFrostmanMin;
    o.detail = "sumset_violations=" + std::to_string(check.violation_count) + " target=" + fmt(rep.target, 2) +
               " frostman=" + fmt(rep.frostman.exponent) + " (need >= " + fmt(kFrostmanMin, 2) + ")";
    return o;
}

// C6: sampled curve with Lipschitz constant 1/2, isosceles oracle, depth 3.
Outcome isosceles_application() {
    constexpr double kPi = 3.14159265358979323846;
    const auto curve = CurveSpec::sample(
        [](double t) { return std::vector<double>{0.5 / (2 * kPi) * std::sin(2 * kPi * t)}; }, 64);
    const BranchingSchedule s(1, {32, 4096, coord_t{1} << 22}, {2, 2, 2});
    const std::vector<OraclePtr> oracles{isosceles_cover(curve)};
    auto st = initial_state(fixed_plan(oracles, s));
    AvoidParams ap;
    ap.seed = 1;
    iterate_main(st, oracles, ap, 3);
    const auto check = isosceles_check(st.X.back(), curve);

    // Single C = max over k = 4..8 of #cover(k) / (k 4^k) at D = 2^k, so the bound holds at
    // every k with that C; the ratios are printed to show how C is reached.
    std::vector<double> ratio;
    for (int k = 4; k <= 8; ++k) {
        const double count = static_cast<double>(oracles[0]->cover_count(k, coord_t{1} << k));
        ratio.push_back(count / (k * std::pow(4.0, k)));
    }
    const double C = *std::max_element(ratio.begin(), ratio.end());
    const bool fit = std::isfinite(C) && C > 0;
    Outcome o;
    o.pass = check.passed() && fit;
    o.detail = "isosceles_violations=" + std::to_string(check.violation_count) + " C=" + fmt(C) + " ratios=";
    for (double r : ratio) o.detail += fmt(r) + ",";
    o.detail.pop_back();
    return o;
}

// C7: hyperdyadic schedule with c = 1/2, depth 8.
Outcome hyperdyadic() {
    constexpr double kTol = 0.05;
    const auto r = hyperdyadic_demo(0.5, 8, 1);
    const double l = r.l_ratio.back();
    const double rr = r.r_ratio.back();
    Outcome o;
    o.pass = r.count_identity && std::abs(l - 0.5) <= kTol && std::abs(rr - 0.4142) <= kTol && l - rr >= 0.05;
    o.detail = "l_ratio=" + fmt(l) + " r_ratio=" + fmt(rr) + " gap=" + fmt(l - rr) +
               " count_identity=" + (r.count_identity ? "exact" : "broken");
    return o;
}

// C8: Fourier construction, N = 64, M = 32, depth 3, one random bad pair per step.
Outcome fourier_pipeline() {
    constexpr int kSeeds = 100;
    constexpr double kEps = 0.05;
    const BranchingSchedule s(1, {64, 64, 64}, {32, 32, 32});
    long steps = 0;
    long trials = 0;
    int decreasing = 0;
    int failures = 0;
    GridSet X1;
    for (int seed = 0; seed < kSeeds; ++seed) {
        FourierParams p;
        p.s = 1;
        p.eps = kEps;
        p.n = 2;
        p.seed = static_cast<std::uint64_t>(seed);
        p.threshold = FourierThreshold::Realized;
        const auto bad = [&](int k1, const GridSet& T) {
            return random_bad_set(T, s, 2, 1, derive_seed(static_cast<std::uint64_t>(seed), 99, static_cast<std::uint64_t>(k1)));
        };
        try {
            const auto run = fourier_run(s, p, bad);
            if (seed == 0) X1 = run.X[1];
            for (const auto& r : run.reports) {
                if (!r.realized_bounds_hold) continue;
                ++steps;
                trials += r.trials;
            }
            const auto inc = telescoping_increments(run.X, 0.25 - kEps);
            bool dec = true;
            for (std::size_t i = 1; i < inc.size(); ++i) dec = dec && inc[i] < inc[i - 1];
            decreasing += dec;
        } catch (const std::exception&) {
            ++failures;
        }
    }
    const double rate = trials > 0 ? static_cast<double>(steps) / static_cast<double>(trials) : 0;
    bool envelope = !X1.empty();
    if (envelope) {
        for (const auto& row : hoeffding_check(X1, s, {7, 197, 2049}, {0.05, 0.1, 0.15, 0.2}, 1000, 5)) {
            envelope = envelope && row.holds;
        }
    }
    Outcome o;
    o.pass = failures == 0 && steps > 0 && rate >= 1.0 / 3 && decreasing == kSeeds && envelope;
    o.detail = "acceptance=" + fmt(rate, 3) + " over " + std::to_string(steps) + " steps, decreasing=" +
               std::to_string(decreasing) + "/" + std::to_string(kSeeds) + " hoeffding=" + (envelope ? "held" : "violated") +
               " failures=" + std::to_string(failures);
    return o;
}

// C9: the shipped fixture re-derives bit-identically from its config and seed.
Outcome determinism() {
    const auto r = cli::replay(std::string(FRACTAL_AVOID_FIXTURE) + "/history.json");
    return {r.passed, std::string("replay=") + (r.passed ? "identical" : "differs")};
}

struct Criterion {
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"C1 cantor calibration", 1, cantor_calibration},
        {"C2 discrete avoidance", 10, discrete_avoidance},
        {"C3 collision statistics", 30, collision_statistics},
        {"C4 keleti", 10, keleti},
        {"C5 sumset application", 30, sumset_application},
        {"C6 isosceles application", 60, isosceles_application},
        {"C7 hyperdyadic", 5, hyperdyadic},
        {"C8 fourier pipeline", 120, fourier_pipeline},
        {"C9 determinism", 60, determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = o.pass && secs < c.limit_seconds;
        failed += !pass;
        std::printf("%s %s: %s time=%.2fs limit=%.0fs\n", pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs,
                    c.limit_seconds);
        std::fflush(stdout);
    }
    return failed;
}
