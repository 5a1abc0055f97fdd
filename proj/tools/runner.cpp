#include "runner.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

#include <boost/multiprecision/cpp_int.hpp>

#include "fractal_avoid/avoidance.hpp"
#include "fractal_avoid/configs.hpp"
#include "fractal_avoid/construct.hpp"
#include "fractal_avoid/dimension.hpp"
#include "fractal_avoid/dyadic.hpp"
#include "fractal_avoid/fourier.hpp"
#include "fractal_avoid/measure.hpp"
#include "fractal_avoid/rng.hpp"
#include "fractal_avoid/verify.hpp"

namespace fav::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kHistoryFormat = "fractal-avoid/history";
constexpr int kHistoryVersion = 1;

const std::set<std::string> kCommonKeys = {"mode", "seed", "depth", "threads", "budget_bits", "output"};

// ---------------------------------------------------------------------------
// Field access

void require_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

void allow_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    require_object(j, where);
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw ConfigError(where + ": unknown field '" + key + "'");
    }
}

std::set<std::string> with_common(std::set<std::string> keys) {
    keys.insert(kCommonKeys.begin(), kCommonKeys.end());
    return keys;
}

template <class T>
T need(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + ": field '" + key + "' has the wrong type");
    }
}

template <class T>
T opt(const json& j, const std::string& key, T def, const std::string& where) {
    if (!j.contains(key)) return def;
    return need<T>(j, key, where);
}

int depth_of(const json& c) {
    const int depth = need<int>(c, "depth", "config");
    if (depth < 1) throw ConfigError("config: depth must be positive");
    return depth;
}

int budget_of(const json& c) { return opt<int>(c, "budget_bits", default_budget_bits(), "config"); }

std::uint64_t seed_of(const json& c) { return need<std::uint64_t>(c, "seed", "config"); }

VerifyOptions verify_options(const json& c, int threads) {
    VerifyOptions o;
    o.threads = threads;
    o.budget = opt<std::uint64_t>(c, "verify_budget", o.budget, "config");
    return o;
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot read " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Objects of the form {"file": path} become {"text": contents}.
void inline_files(json& j, const fs::path& base) {
    if (j.is_object()) {
        if (j.size() == 1 && j.contains("file") && j["file"].is_string()) {
            fs::path p = j["file"].get<std::string>();
            if (p.is_relative()) p = base / p;
            j = json{{"text", read_file(p.string())}};
            return;
        }
        for (auto& [_, v] : j.items()) inline_files(v, base);
    } else if (j.is_array()) {
        for (auto& v : j) inline_files(v, base);
    }
}

// ---------------------------------------------------------------------------
// Shared specs

BranchingSchedule parse_schedule(const json& j, int d, int depth, int bits, const std::string& where) {
    allow_keys(j, {"N", "M", "constant_N", "constant_M"}, where);
    std::vector<coord_t> N, M;
    if (j.contains("N")) {
        N = need<std::vector<coord_t>>(j, "N", where);
        M = opt<std::vector<coord_t>>(j, "M", N, where);
        if (static_cast<int>(N.size()) < depth) throw ConfigError(where + ": fewer than depth entries in N");
        N.resize(static_cast<std::size_t>(depth));
        if (M.size() < N.size()) throw ConfigError(where + ": fewer entries in M than in N");
        M.resize(N.size());
    } else {
        const coord_t n = need<coord_t>(j, "constant_N", where);
        const coord_t m = opt<coord_t>(j, "constant_M", n, where);
        N.assign(static_cast<std::size_t>(depth), n);
        M.assign(static_cast<std::size_t>(depth), m);
    }
    try {
        return BranchingSchedule(d, N, M, bits);
    } catch (const ScheduleError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

json schedule_to_json(const BranchingSchedule& s) { return schedule_json(s); }

BranchingSchedule schedule_from_json(const json& j) {
    return BranchingSchedule(need<int>(j, "d", "schedule"), need<std::vector<coord_t>>(j, "N", "schedule"),
                             need<std::vector<coord_t>>(j, "M", "schedule"), need<int>(j, "budget_bits", "schedule"));
}

Polynomial parse_polynomial(const json& j, const std::string& where) {
    allow_keys(j, {"vars", "terms"}, where);
    try {
        return polynomial_from_json(j);
    } catch (const json::exception& e) {
        throw ConfigError(where + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

CurveSpec parse_curve(const json& j, const std::string& where) {
    require_object(j, where);
    if (j.contains("text")) {
        allow_keys(j, {"text"}, where);
        return CurveSpec::parse(need<std::string>(j, "text", where));
    }
    if (j.contains("t")) {
        allow_keys(j, {"t", "f"}, where);
        return CurveSpec(need<std::vector<double>>(j, "t", where), need<std::vector<std::vector<double>>>(j, "f", where));
    }
    allow_keys(j, {"function", "lipschitz", "samples"}, where);
    const std::string fn = need<std::string>(j, "function", where);
    const double L = need<double>(j, "lipschitz", where);
    const int samples = opt<int>(j, "samples", 64, where);
    std::function<std::vector<double>(double)> f;
    if (fn == "sine") {
        f = [L](double t) { return std::vector<double>{L / (2 * std::numbers::pi) * std::sin(2 * std::numbers::pi * t)}; };
    } else if (fn == "line") {
        f = [L](double t) { return std::vector<double>{L * t}; };
    } else if (fn == "parabola") {
        f = [L](double t) { return std::vector<double>{0.5 * L * t * t}; };
    } else {
        throw ConfigError(where + ": unknown curve function '" + fn + "' (sine, line, parabola)");
    }
    if (samples < 1) throw ConfigError(where + ": samples must be positive");
    return CurveSpec::sample(f, samples);
}

std::vector<std::vector<double>> parse_points(const json& j, int d, const std::string& where) {
    std::vector<std::vector<double>> pts;
    try {
        pts = j.get<std::vector<std::vector<double>>>();
    } catch (const json::exception&) {
        throw ConfigError(where + ": expected a list of points");
    }
    for (const auto& p : pts) {
        if (static_cast<int>(p.size()) != d) throw ConfigError(where + ": point arity differs from d");
    }
    return pts;
}

GridSet parse_gridset(const json& j, const std::string& where) {
    std::string text;
    if (j.is_string()) {
        text = j.get<std::string>();
    } else {
        allow_keys(j, {"text"}, where);
        text = need<std::string>(j, "text", where);
    }
    try {
        return gridset_from_string(text);
    } catch (const FormatError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

struct ZeroSetOracle {
    OraclePtr oracle;
    int m = 1;
};

ZeroSetOracle parse_zero_set(const json& j, const std::string& where) {
    allow_keys(j, {"kind", "d", "n", "polynomials"}, where);
    ZeroSetSpec spec;
    spec.d = opt<int>(j, "d", 1, where);
    spec.n = opt<int>(j, "n", 2, where);
    if (!j.contains("polynomials") || !j["polynomials"].is_array() || j["polynomials"].empty()) {
        throw ConfigError(where + ": 'polynomials' must be a nonempty list");
    }
    std::vector<Polynomial> polys;
    double lip2 = 0;
    for (std::size_t i = 0; i < j["polynomials"].size(); ++i) {
        polys.push_back(parse_polynomial(j["polynomials"][i], where + ".polynomials[" + std::to_string(i) + "]"));
        if (polys.back().vars != spec.d * spec.n) throw ConfigError(where + ": polynomial arity differs from d*n");
        lip2 += polys.back().lipschitz_bound() * polys.back().lipschitz_bound();
    }
    spec.m = static_cast<int>(polys.size());
    // Per-component sup-norm bounds dominate Euclidean ones; combine in l^2.
    spec.lipschitz = std::sqrt(lip2);
    spec.g = [polys](const double* x, double* out) {
        for (std::size_t i = 0; i < polys.size(); ++i) out[i] = polys[i].eval(x);
    };
    return {zero_set_cover(std::move(spec)), static_cast<int>(polys.size())};
}

struct OracleSpec {
    OraclePtr oracle;
    std::string kind;
    // Sumset: points of Y. Isosceles: the curve.
    std::vector<std::vector<double>> points;
    std::optional<CurveSpec> curve;
};

OracleSpec parse_oracle(const json& j, const std::string& where) {
    const std::string kind = need<std::string>(j, "kind", where);
    OracleSpec o;
    o.kind = kind;
    if (kind == "sumset") {
        allow_keys(j, {"kind", "points"}, where);
        o.points = parse_points(need<json>(j, "points", where), 1, where + ".points");
        o.oracle = sumset_cover(point_set_oracle(1, o.points));
    } else if (kind == "isosceles") {
        allow_keys(j, {"kind", "curve", "slack"}, where);
        o.curve = parse_curve(need<json>(j, "curve", where), where + ".curve");
        IsoscelesCoverOptions io;
        io.slack = opt<double>(j, "slack", -1, where);
        try {
            o.oracle = isosceles_cover(*o.curve, io);
        } catch (const HypothesisError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    } else if (kind == "translate") {
        allow_keys(j, {"kind"}, where);
        o.oracle = translate_config();
    } else if (kind == "zero_set") {
        o.oracle = parse_zero_set(j, where).oracle;
    } else {
        throw ConfigError(where + ": unknown oracle kind '" + kind + "' (sumset, isosceles, translate, zero_set)");
    }
    return o;
}

std::vector<OracleSpec> parse_oracles(const json& c) {
    const json list = need<json>(c, "oracles", "config");
    if (!list.is_array() || list.empty()) throw ConfigError("config: 'oracles' must be a nonempty list");
    std::vector<OracleSpec> out;
    for (std::size_t i = 0; i < list.size(); ++i) out.push_back(parse_oracle(list[i], "oracles[" + std::to_string(i) + "]"));
    for (const auto& o : out) {
        if (o.oracle->d() != out.front().oracle->d()) throw ConfigError("config: oracles differ in d");
    }
    return out;
}

std::vector<GridSet> parse_sets(const json& c, const BranchingSchedule& s, int k) {
    const json sets = need<json>(c, "sets", "config");
    if (!sets.is_array() || sets.empty()) throw ConfigError("config: 'sets' must be a nonempty list");
    std::vector<GridSet> T;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const std::string where = "sets[" + std::to_string(i) + "]";
        std::vector<std::vector<coord_t>> cubes;
        try {
            cubes = sets[i].get<std::vector<std::vector<coord_t>>>();
        } catch (const json::exception&) {
            throw ConfigError(where + ": expected a list of cube coordinate lists");
        }
        std::sort(cubes.begin(), cubes.end());
        cubes.erase(std::unique(cubes.begin(), cubes.end()), cubes.end());
        std::vector<coord_t> flat;
        for (const auto& q : cubes) {
            if (static_cast<int>(q.size()) != s.dim()) throw ConfigError(where + ": cube arity differs from d");
            for (coord_t x : q) {
                if (x < 0 || x >= s.D(k)) throw ConfigError(where + ": coordinate outside the generation grid");
            }
            flat.insert(flat.end(), q.begin(), q.end());
        }
        T.emplace_back(s.dim(), 1, k, GridKind::DQ, s.D(k), std::move(flat));
    }
    return T;
}

// ---------------------------------------------------------------------------
// Artifact helpers

json strip_timing(json j) {
    if (j.is_object()) {
        j.erase("wall_seconds");
        for (auto& [_, v] : j.items()) v = strip_timing(v);
    } else if (j.is_array()) {
        for (auto& v : j) v = strip_timing(v);
    }
    return j;
}

json check_entry(const VerifyReport& r) { return strip_timing(to_json(r)); }

json simple_check(const std::string& name, bool passed, json detail = json::object()) {
    detail["check"] = name;
    detail["passed"] = passed;
    return detail;
}

void put_levels(std::map<std::string, std::string>& files, const std::vector<GridSet>& X, const std::string& prefix = "X_") {
    for (std::size_t k = 0; k < X.size(); ++k) files[prefix + std::to_string(k) + ".grid"] = gridset_to_string(X[k]);
}

std::vector<GridSet> get_levels(const std::map<std::string, std::string>& files, const std::string& prefix = "X_",
                                std::size_t first = 0) {
    std::vector<GridSet> X;
    for (std::size_t k = first;; ++k) {
        auto it = files.find(prefix + std::to_string(k) + ".grid");
        if (it == files.end()) break;
        try {
            X.push_back(gridset_from_string(it->second));
        } catch (const FormatError& e) {
            throw FormatError(prefix + std::to_string(k) + ".grid: " + e.what());
        }
    }
    return X;
}

const std::string& file_at(const std::map<std::string, std::string>& files, const std::string& name) {
    auto it = files.find(name);
    if (it == files.end()) throw FormatError("artifact " + name + " is missing");
    return it->second;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string dimension_csv(const std::vector<GridSet>& X, const BranchingSchedule& s) {
    std::ostringstream os;
    write_dimension_csv(os, minkowski_estimate(X.back(), s, 1), true);
    return os.str();
}

std::string weights_text(const std::vector<GridSet>& X, const BranchingSchedule& s) {
    std::ostringstream os;
    write_weight_tree(os, canonical_weights(X, s));
    return os.str();
}

struct Produced {
    std::map<std::string, std::string> files;
    json summary = json::object();
    // Checks that only the construction itself can make.
    json checks = json::array();
};

// ---------------------------------------------------------------------------
// main

DimensionTarget target_for(const OracleSpec& o) {
    DimensionTarget t;
    t.d = o.oracle->d();
    t.n = o.oracle->n();
    t.s = o.oracle->s();
    if (o.kind == "sumset") {
        t.kind = DimensionTarget::Kind::Sumset;
        t.t = 0;
    } else if (o.kind == "isosceles") {
        t.kind = DimensionTarget::Kind::Isosceles;
    }
    return t;
}

const std::set<std::string> kMainKeys = with_common({"oracles", "schedule", "eps", "C", "accept", "retry_limit", "verify_budget"});

Produced produce_main(const json& c) {
    const auto specs = parse_oracles(c);
    std::vector<OraclePtr> oracles;
    for (const auto& o : specs) oracles.push_back(o.oracle);
    const int depth = depth_of(c);
    const int bits = budget_of(c);
    const std::vector<double> eps = opt<std::vector<double>>(c, "eps", {}, "config");
    if (!eps.empty() && static_cast<int>(eps.size()) < depth) throw ConfigError("config: fewer eps entries than depth");

    StrongCoverPlan plan;
    const json sched = c.value("schedule", json("auto"));
    if (sched == json("auto")) {
        StrongCoverOptions so;
        so.depth = depth;
        so.eps = eps;
        so.C = opt<double>(c, "C", 0, "config");
        so.budget_bits = bits;
        plan = build_strong_cover(oracles, so);
    } else {
        plan = fixed_plan(oracles, parse_schedule(sched, oracles.front()->d(), depth, bits, "schedule"), eps);
    }
    AvoidParams base;
    base.seed = seed_of(c);
    base.C = opt<double>(c, "C", 0, "config");
    base.retry_limit = opt<int>(c, "retry_limit", base.retry_limit, "config");
    const std::string accept = opt<std::string>(c, "accept", "collisions", "config");
    if (accept == "per-parent") {
        base.accept = AcceptRule::PerParent;
    } else if (accept != "collisions") {
        throw ConfigError("config: accept must be 'collisions' or 'per-parent'");
    }

    MainState st = initial_state(plan);
    iterate_main(st, oracles, base, depth);

    Produced p;
    put_levels(p.files, st.X);
    p.files["schedule.json"] = dump(schedule_to_json(st.schedule));
    p.files["weights.txt"] = weights_text(st.X, st.schedule);
    p.files["dimension.csv"] = dimension_csv(st.X, st.schedule);

    // The binding target is the smallest over the interleaved oracles.
    DimensionTarget target = target_for(specs.front());
    for (const auto& o : specs) {
        if (target_dimension(target_for(o)) < target_dimension(target)) target = target_for(o);
    }
    p.summary["construction"] = history_json(st);
    p.summary["dimension"] = to_json(dimension_report(st.X, st.schedule, target));
    for (const auto& t : transport_checks(st, oracles)) {
        p.checks.push_back(simple_check("transport", t.violations == 0,
                                        {{"generation", t.generation}, {"coarse_cubes", t.coarse_cubes}, {"violations", t.violations}}));
    }
    return p;
}

json verify_main(const json& c, const std::map<std::string, std::string>& files, int threads) {
    const auto specs = parse_oracles(c);
    const BranchingSchedule s = schedule_from_json(json::parse(file_at(files, "schedule.json")));
    const auto X = get_levels(files);
    if (X.empty()) throw FormatError("no grid levels stored");
    const GridSet& final_set = X.back();
    const int K = final_set.generation();
    const VerifyOptions vo = verify_options(c, threads);
    json out = json::array();
    for (const auto& o : specs) {
        if (o.kind == "sumset") {
            out.push_back(check_entry(sumset_check(final_set, thicken_points(o.points, K, s), vo)));
        } else if (o.kind == "isosceles") {
            out.push_back(check_entry(isosceles_check(final_set, *o.curve, 3.0, vo)));
        } else {
            out.push_back(check_entry(assert_avoids(final_set, *o.oracle, vo)));
        }
    }
    for (std::size_t k = 1; k < X.size(); ++k) {
        const bool nested = is_subset(X[k], children(X[k - 1], s));
        out.push_back(simple_check("nested", nested, {{"generation", k}}));
    }
    return out;
}

// ---------------------------------------------------------------------------
// keleti

const std::set<std::string> kKeletiKeys = with_common({"schedule", "queue", "verify_budget"});

KeletiQueue parse_queue(const json& c) {
    const std::string q = opt<std::string>(c, "queue", "literal", "config");
    if (q == "literal") return KeletiQueue::Literal;
    if (q == "kept-only") return KeletiQueue::KeptOnly;
    throw ConfigError("config: queue must be 'literal' or 'kept-only'");
}

Produced produce_keleti(const json& c) {
    const int depth = depth_of(c);
    const BranchingSchedule s = parse_schedule(need<json>(c, "schedule", "config"), 1, depth, budget_of(c), "schedule");
    for (int k = 1; k <= depth; ++k) {
        if (s.N(k) % 10 != 0) throw ConfigError("schedule: every N_k must be a multiple of 10");
    }
    const KeletiState st = iterate_keleti(s, depth, parse_queue(c));
    Produced p;
    put_levels(p.files, st.X);
    p.files["schedule.json"] = dump(schedule_to_json(s));
    const json hist = history_json(st);
    p.files["processed.json"] = dump(hist.at("processed"));
    p.summary["construction"] = hist;
    return p;
}

json verify_keleti(const json& c, const std::map<std::string, std::string>& files, int threads) {
    const BranchingSchedule s = schedule_from_json(json::parse(file_at(files, "schedule.json")));
    const auto X = get_levels(files);
    if (X.empty()) throw FormatError("no grid levels stored");
    json out = json::array();
    // #X_k = D_k / 10^k.
    coord_t tens = 1;
    bool law = true;
    json sizes = json::array();
    for (std::size_t k = 0; k < X.size(); ++k) {
        if (k > 0) tens *= 10;
        const coord_t D = s.D(static_cast<int>(k));
        law = law && D % tens == 0 && static_cast<coord_t>(X[k].size()) == D / tens;
        sizes.push_back({X[k].size(), D / tens});
    }
    out.push_back(simple_check("count_law", law, {{"sizes", sizes}}));
    std::vector<ProcessedInterval> processed;
    for (const auto& e : json::parse(file_at(files, "processed.json"))) {
        processed.push_back({e.at("generation").get<int>(), e.at("index").get<coord_t>(), e.at("created").get<int>()});
    }
    out.push_back(check_entry(difference_check(X.back(), processed, s, verify_options(c, threads))));
    return out;
}

// ---------------------------------------------------------------------------
// fp

const std::set<std::string> kFpKeys = with_common({"schedule", "oracle", "queue_cap", "C_f", "verify_budget"});

Produced produce_fp(const json& c) {
    const int depth = depth_of(c);
    const ZeroSetOracle z = parse_zero_set(need<json>(c, "oracle", "config"), "oracle");
    const BranchingSchedule s = parse_schedule(need<json>(c, "schedule", "config"), z.oracle->d(), depth, budget_of(c), "schedule");
    FpOptions fo;
    fo.queue_cap = opt<std::uint64_t>(c, "queue_cap", fo.queue_cap, "config");
    fo.params.C_f = opt<double>(c, "C_f", fo.params.C_f, "config");
    fo.params.m = z.m;
    const FpState st = iterate_fp(*z.oracle, s, depth, fo);
    Produced p;
    put_levels(p.files, st.X);
    p.files["schedule.json"] = dump(schedule_to_json(s));
    const json hist = history_json(st);
    p.files["processed.json"] = dump(hist.at("processed"));
    p.summary["construction"] = hist;
    std::uint64_t failures = 0;
    for (const auto& r : st.reports) failures += r.hypothesis_failures;
    p.checks.push_back(simple_check("fp_final_stage", failures == 0, {{"cells_without_free_child", failures}}));
    return p;
}

json verify_fp(const json& c, const std::map<std::string, std::string>& files, int threads) {
    const ZeroSetOracle z = parse_zero_set(need<json>(c, "oracle", "config"), "oracle");
    FpState st;
    st.schedule = schedule_from_json(json::parse(file_at(files, "schedule.json")));
    st.n = z.oracle->n();
    st.X = get_levels(files);
    if (st.X.empty()) throw FormatError("no grid levels stored");
    for (const auto& e : json::parse(file_at(files, "processed.json"))) {
        FpProcessed pr;
        pr.tuple.generation = e.at("generation").get<int>();
        pr.tuple.cubes = e.at("cubes").get<std::vector<coord_t>>();
        pr.created = e.at("created").get<int>();
        pr.applied = e.at("applied").get<bool>();
        st.processed.push_back(std::move(pr));
    }
    (void)threads;
    return json::array({check_entry(fp_certificate(st, *z.oracle))});
}

// ---------------------------------------------------------------------------
// mathe and lowrank: one step on given sets

const std::set<std::string> kMatheKeys = with_common({"schedule", "generation", "sets", "polynomial", "c0", "C0", "eps", "budget"});
const std::set<std::string> kLowRankKeys = with_common({"schedule", "generation", "sets", "matrix", "bad", "s", "eps", "budget"});

struct StepInput {
    BranchingSchedule schedule;
    int k = 0;
    std::vector<GridSet> T;
};

StepInput step_input(const json& c) {
    StepInput in;
    in.k = need<int>(c, "generation", "config");
    if (in.k < 0) throw ConfigError("config: generation must be non-negative");
    in.schedule = parse_schedule(need<json>(c, "schedule", "config"), 1, in.k + 1, budget_of(c), "schedule");
    in.T = parse_sets(c, in.schedule, in.k);
    return in;
}

Produced produce_mathe(const json& c) {
    const StepInput in = step_input(c);
    const Polynomial f = parse_polynomial(need<json>(c, "polynomial", "config"), "polynomial");
    MatheParams mp;
    mp.c0 = opt<double>(c, "c0", mp.c0, "config");
    mp.C0 = opt<double>(c, "C0", mp.C0, "config");
    mp.eps = opt<double>(c, "eps", mp.eps, "config");
    mp.budget = opt<std::uint64_t>(c, "budget", mp.budget, "config");
    const MatheResult r = mathe_step(in.T, f, in.schedule, mp);
    Produced p;
    put_levels(p.files, r.S, "S_");
    p.files["schedule.json"] = dump(schedule_to_json(in.schedule));
    p.summary["step"] = to_json(r.report);
    p.checks.push_back(simple_check("lattice_margin_certified", r.report.certified,
                                    {{"certified_margin", r.report.certified_margin}, {"required", r.report.eps / 2}}));
    return p;
}

// Product tuples of the sets, one cube per factor, in odometer order.
template <class Fn>
std::uint64_t for_each_product(const std::vector<GridSet>& S, std::uint64_t budget, const std::string& who, Fn&& fn) {
    long double total = 1;
    for (const auto& g : S) total *= static_cast<long double>(g.size());
    if (total > static_cast<long double>(budget)) throw BudgetError(who + ": product exceeds the enumeration budget");
    if (total == 0) return 0;
    std::vector<std::size_t> idx(S.size(), 0);
    std::uint64_t count = 0;
    while (true) {
        fn(idx);
        ++count;
        std::size_t i = 0;
        while (i < S.size() && ++idx[i] == S[i].size()) idx[i++] = 0;
        if (i == S.size()) break;
    }
    return count;
}

json verify_mathe(const json& c, const std::map<std::string, std::string>& files, int) {
    const Polynomial f = parse_polynomial(need<json>(c, "polynomial", "config"), "polynomial");
    const BranchingSchedule s = schedule_from_json(json::parse(file_at(files, "schedule.json")));
    const auto S = get_levels(files, "S_");
    if (S.empty()) throw FormatError("no selected sets stored");
    const int k1 = S.front().generation();
    const int m = std::max(1, f.degree());
    const long double D = static_cast<long double>(s.D(k1));
    const long double period = std::pow(static_cast<long double>(s.R(k1)), -m);
    // Every point of a cube lies within l/2 of its midpoint in the sup norm.
    const long double reach = static_cast<long double>(f.lipschitz_bound()) / (2 * D);
    VerifyReport rep;
    rep.check = "lattice_avoidance";
    rep.strategy = "midpoint-lipschitz";
    std::vector<double> x(S.size() * static_cast<std::size_t>(s.dim()));
    rep.tuples_checked = for_each_product(S, opt<std::uint64_t>(c, "budget", 10'000'000, "config"), "lattice_avoidance",
                                          [&](const std::vector<std::size_t>& idx) {
        std::vector<coord_t> flat;
        for (std::size_t i = 0; i < S.size(); ++i) {
            const auto q = S[i][idx[i]];
            for (int a = 0; a < s.dim(); ++a) {
                x[i * static_cast<std::size_t>(s.dim()) + static_cast<std::size_t>(a)] =
                    static_cast<double>((static_cast<long double>(q[static_cast<std::size_t>(a)]) + 0.5L) / D);
                flat.push_back(q[static_cast<std::size_t>(a)]);
            }
        }
        const long double v = static_cast<long double>(f.eval(x.data())) / period;
        const long double dist = std::abs(v - std::round(v)) * period;
        if (dist <= reach) {
            ++rep.violation_count;
            if (rep.violations.size() < VerifyReport::kMaxListed) rep.violations.push_back(flat);
        }
    });
    return json::array({check_entry(rep)});
}

RationalMatrix parse_matrix(const json& c) {
    const json m = need<json>(c, "matrix", "config");
    allow_keys(m, {"rows", "cols", "entries"}, "matrix");
    std::vector<std::pair<std::int64_t, std::int64_t>> entries;
    for (const auto& e : need<json>(m, "entries", "matrix")) {
        if (e.is_array() && e.size() == 2) {
            entries.emplace_back(e[0].get<std::int64_t>(), e[1].get<std::int64_t>());
        } else if (e.is_number_integer()) {
            entries.emplace_back(e.get<std::int64_t>(), 1);
        } else {
            throw ConfigError("matrix: entries are integers or [num, den] pairs");
        }
    }
    try {
        return rational_matrix(need<int>(m, "rows", "matrix"), need<int>(m, "cols", "matrix"), entries);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("matrix: ") + e.what());
    }
}

GridSet parse_bad_image(const json& c, const BranchingSchedule& s, int k1, int rows) {
    const json b = need<json>(c, "bad", "config");
    std::vector<std::vector<coord_t>> cubes;
    try {
        cubes = b.get<std::vector<std::vector<coord_t>>>();
    } catch (const json::exception&) {
        throw ConfigError("bad: expected a list of cubes in R^m");
    }
    std::sort(cubes.begin(), cubes.end());
    cubes.erase(std::unique(cubes.begin(), cubes.end()), cubes.end());
    std::vector<coord_t> flat;
    for (const auto& q : cubes) {
        if (static_cast<int>(q.size()) != rows) throw ConfigError("bad: cube arity differs from the matrix rows");
        flat.insert(flat.end(), q.begin(), q.end());
    }
    return GridSet(1, rows, k1, GridKind::DQ, s.D(k1), std::move(flat));
}

Produced produce_lowrank(const json& c) {
    const StepInput in = step_input(c);
    const RationalMatrix L = parse_matrix(c);
    const GridSet B = parse_bad_image(c, in.schedule, in.k + 1, L.rows);
    LowRankParams lp;
    lp.s = opt<double>(c, "s", 0, "config");
    lp.eps = opt<double>(c, "eps", 0, "config");
    lp.budget = opt<std::uint64_t>(c, "budget", lp.budget, "config");
    const LowRankResult r = lowrank_step(in.T, L, B, in.schedule, lp);
    Produced p;
    put_levels(p.files, r.S, "S_");
    p.files["schedule.json"] = dump(schedule_to_json(in.schedule));
    p.files["bad.grid"] = gridset_to_string(B);
    p.summary["step"] = to_json(r.report);
    return p;
}

json verify_lowrank(const json& c, const std::map<std::string, std::string>& files, int) {
    using Q = boost::multiprecision::cpp_rational;
    const RationalMatrix L = parse_matrix(c);
    const auto S = get_levels(files, "S_");
    if (S.empty()) throw FormatError("no selected sets stored");
    const GridSet B = gridset_from_string(file_at(files, "bad.grid"));
    VerifyReport rep;
    rep.check = "image_avoidance";
    rep.strategy = "exact-startpoints-and-midpoints";
    std::vector<coord_t> cube(static_cast<std::size_t>(L.rows));
    // D times the image of a corner (offset 0) or midpoint (offset 1/2), in exact arithmetic;
    // a point strictly inside a cube of B is a violation.
    auto hits = [&](const std::vector<std::size_t>& idx, const Q& offset) {
        for (int r = 0; r < L.rows; ++r) {
            Q y = 0;
            for (int j = 0; j < L.cols; ++j) {
                y += Q(L.n_at(r, j), L.d_at(r, j)) * (Q(S[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]][0]) + offset);
            }
            const boost::multiprecision::cpp_int fl = boost::multiprecision::numerator(y) / boost::multiprecision::denominator(y);
            Q frac = y - Q(fl);
            if (frac < 0) frac += 1;
            if (frac == 0) return false;
            cube[static_cast<std::size_t>(r)] = static_cast<coord_t>(y < 0 && frac != 0 ? fl - 1 : fl);
        }
        return B.contains(cube);
    };
    if (static_cast<int>(S.size()) != L.cols) throw FormatError("selected set count differs from the matrix columns");
    rep.tuples_checked = for_each_product(S, opt<std::uint64_t>(c, "budget", 10'000'000, "config"), "image_avoidance",
                                          [&](const std::vector<std::size_t>& idx) {
        if (hits(idx, Q(0)) || hits(idx, Q(1, 2))) {
            ++rep.violation_count;
            if (rep.violations.size() < VerifyReport::kMaxListed) {
                std::vector<coord_t> flat;
                for (std::size_t i = 0; i < S.size(); ++i) flat.push_back(S[i][idx[i]][0]);
                rep.violations.push_back(flat);
            }
        }
    });
    return json::array({check_entry(rep)});
}

// ---------------------------------------------------------------------------
// fourier

const std::set<std::string> kFourierKeys =
    with_common({"schedule", "s", "eps", "n", "threshold", "retry_limit", "bad", "alpha", "m_max", "verify_budget"});

Produced produce_fourier(const json& c) {
    const int depth = depth_of(c);
    const BranchingSchedule s = parse_schedule(need<json>(c, "schedule", "config"), 1, depth, budget_of(c), "schedule");
    FourierParams fp;
    fp.seed = seed_of(c);
    fp.s = opt<double>(c, "s", fp.s, "config");
    fp.eps = opt<double>(c, "eps", fp.eps, "config");
    fp.n = opt<int>(c, "n", fp.n, "config");
    fp.retry_limit = opt<int>(c, "retry_limit", fp.retry_limit, "config");
    try {
        fp.threshold = fourier_threshold_from_string(opt<std::string>(c, "threshold", "proof", "config"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    const json bad = c.value("bad", json{{"kind", "empty"}});
    allow_keys(bad, {"kind", "count"}, "bad");
    const std::string kind = need<std::string>(bad, "kind", "bad");
    std::uint64_t count = 0;
    if (kind == "random") {
        count = need<std::uint64_t>(bad, "count", "bad");
    } else if (kind != "empty") {
        throw ConfigError("bad: kind must be 'empty' or 'random'");
    }
    std::vector<GridSet> bads;
    // Bad sets draw from stream 1000 + k so they never share a stream with the selections.
    const BadSetProvider provider = [&](int k1, const GridSet& T) {
        GridSet B = count == 0 ? GridSet(1, fp.n, k1, GridKind::DQ, s.D(k1), {})
                               : random_bad_set(T, s, fp.n, count, derive_seed(fp.seed, 1000 + static_cast<std::uint64_t>(k1)));
        bads.push_back(B);
        return B;
    };
    const FourierRun run = fourier_run(s, fp, provider);

    const double alpha = opt<double>(c, "alpha", 0.25 - fp.eps, "config");
    const std::int64_t D_K = s.D(depth);
    std::int64_t m_max = opt<std::int64_t>(c, "m_max", 0, "config");
    if (m_max <= 0) m_max = D_K;
    const std::vector<double> inc = telescoping_increments(run.X, alpha, m_max);
    bool decreasing = true;
    for (std::size_t i = 1; i < inc.size(); ++i) decreasing = decreasing && inc[i] < inc[i - 1];

    Produced p;
    put_levels(p.files, run.X);
    put_levels(p.files, std::vector<GridSet>(bads.begin(), bads.end()), "B_");
    p.files["schedule.json"] = dump(schedule_to_json(s));
    const DiscreteMeasure mu = measure_of_set(run.X.back(), Mollifier::CellUniform);
    std::ostringstream csv;
    write_decay_csv(csv, mu, alpha, std::min<std::int64_t>(m_max, 4096));
    p.files["decay.csv"] = csv.str();
    json steps = json::array();
    for (const auto& r : run.reports) steps.push_back(to_json(r));
    p.summary["schedule"] = schedule_to_json(s);
    p.summary["steps"] = steps;
    p.summary["alpha"] = alpha;
    // Per-coefficient target (n - s)/(2n) and the set-level reading 2 alpha; neither is asserted.
    p.summary["coefficient_exponent"] = (fp.n - fp.s) / (2.0 * fp.n);
    p.summary["set_level_exponent"] = 2 * alpha;
    p.summary["m_max"] = m_max;
    p.summary["increments"] = inc;
    p.summary["increments_decreasing"] = decreasing;
    p.summary["decay"] = to_json(decay_profile(mu, alpha, std::min<std::int64_t>(m_max, D_K)));
    return p;
}

json verify_fourier(const json& c, const std::map<std::string, std::string>& files, int threads) {
    const auto X = get_levels(files);
    // B_k files are numbered from 0 for the step creating generation k + 1.
    const auto B = get_levels(files, "B_");
    if (X.empty() || B.size() + 1 != X.size()) throw FormatError("grid levels and bad sets do not line up");
    json out = json::array();
    const VerifyOptions vo = verify_options(c, threads);
    for (std::size_t k = 0; k < B.size(); ++k) {
        const GridSet& S = X[k + 1];
        const int n = B[k].n();
        if (std::pow(static_cast<double>(S.size()), n) <= static_cast<double>(vo.budget)) {
            out.push_back(check_entry(assert_avoids(S, B[k], n, vo)));
            continue;
        }
        // Too many tuples to enumerate: scan the bad cubes instead, each block looked up in S.
        VerifyReport rep;
        rep.check = "assert_avoids";
        rep.strategy = "bad-scan";
        for (std::size_t i = 0; i < B[k].size(); ++i) {
            const auto cube = B[k][i];
            ++rep.tuples_checked;
            std::set<std::vector<coord_t>> blocks;
            bool inside = true;
            for (int j = 0; j < n; ++j) {
                const auto block = cube.subspan(static_cast<std::size_t>(j * S.d()), static_cast<std::size_t>(S.d()));
                blocks.emplace(block.begin(), block.end());
                inside = inside && S.contains(block);
            }
            if (inside && static_cast<int>(blocks.size()) == n) {
                ++rep.violation_count;
                if (rep.violations.size() < VerifyReport::kMaxListed) rep.violations.emplace_back(cube.begin(), cube.end());
            }
        }
        out.push_back(check_entry(rep));
    }
    return out;
}

// ---------------------------------------------------------------------------
// dimension

const std::set<std::string> kDimensionKeys = with_common({"preset", "window"});

std::vector<GridSet> cantor_levels(const BranchingSchedule& s, const std::vector<coord_t>& keep) {
    std::vector<GridSet> X{root_set(1)};
    for (int k = 1; k <= s.depth(); ++k) {
        std::vector<coord_t> flat;
        for (coord_t parent : X.back().data()) {
            for (coord_t c : keep) flat.push_back(parent * s.N(k) + c);
        }
        X.emplace_back(1, 1, k, GridKind::DQ, s.D(k), std::move(flat));
    }
    return X;
}

std::pair<BranchingSchedule, std::vector<coord_t>> parse_cantor(const json& preset, int depth, int bits) {
    allow_keys(preset, {"kind", "N", "keep"}, "preset");
    const coord_t N = opt<coord_t>(preset, "N", 3, "preset");
    std::vector<coord_t> keep = opt<std::vector<coord_t>>(preset, "keep", {0, 2}, "preset");
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    if (keep.empty() || keep.front() < 0 || keep.back() >= N) throw ConfigError("preset: keep must list cells in [0, N)");
    return {parse_schedule(json{{"constant_N", N}}, 1, depth, bits, "preset"), keep};
}

Produced produce_dimension(const json& c) {
    const int depth = depth_of(c);
    const json preset = need<json>(c, "preset", "config");
    const std::string kind = need<std::string>(preset, "kind", "preset");
    const int window = opt<int>(c, "window", 1, "config");
    Produced p;
    if (kind == "cantor") {
        const auto [s, keep] = parse_cantor(preset, depth, budget_of(c));
        const auto X = cantor_levels(s, keep);
        put_levels(p.files, X);
        p.files["schedule.json"] = dump(schedule_to_json(s));
        p.files["weights.txt"] = weights_text(X, s);
        std::vector<std::uint64_t> counts;
        for (int k = 1; k <= depth; ++k) counts.push_back(covering_number(X.back(), k, s));
        const DimensionEstimate est = minkowski_estimate(counts, s, window);
        std::ostringstream os;
        write_dimension_csv(os, est, true);
        p.files["dimension.csv"] = os.str();
        const WeightTree tree = canonical_weights(X, s);
        p.summary["estimate"] = to_json(est);
        p.summary["frostman"] = to_json(frostman_exponent(tree));
        p.checks.push_back(simple_check("parent_sum_law", tree.parent_sum_law_holds()));
    } else if (kind == "hyperdyadic") {
        allow_keys(preset, {"kind", "c", "node_budget"}, "preset");
        const double cc = need<double>(preset, "c", "preset");
        if (!(cc > 0 && cc < 1)) throw ConfigError("preset: c must lie in (0, 1)");
        const HyperdyadicResult r = hyperdyadic_demo(
            cc, depth, seed_of(c), opt<std::uint64_t>(preset, "node_budget", std::uint64_t{1} << 28, "preset"));
        std::ostringstream os;
        os << "k,count,l_ratio,cell_count,r_ratio\n" << std::setprecision(17);
        for (int k = 1; k <= depth; ++k) {
            os << k << ',' << r.counts[static_cast<std::size_t>(k)] << ',' << r.l_ratio[static_cast<std::size_t>(k - 1)] << ','
               << r.cell_counts[static_cast<std::size_t>(k - 1)] << ',';
            if (k >= 2) os << r.r_ratio[static_cast<std::size_t>(k - 2)];
            os << '\n';
        }
        p.files["dimension.csv"] = os.str();
        p.summary["hyperdyadic"] = to_json(r);
        p.checks.push_back(simple_check("count_identity", r.count_identity));
    } else {
        throw ConfigError("preset: kind must be 'cantor' or 'hyperdyadic'");
    }
    return p;
}

// ---------------------------------------------------------------------------
// verify

const std::set<std::string> kVerifyKeys = with_common({"check", "set", "bad", "n", "points", "curve", "tau", "verify_budget"});

json verify_verify(const json& c, const std::map<std::string, std::string>&, int threads) {
    const std::string check = need<std::string>(c, "check", "config");
    const GridSet X = parse_gridset(need<json>(c, "set", "config"), "set");
    const VerifyOptions vo = verify_options(c, threads);
    if (check == "avoids") {
        const GridSet B = parse_gridset(need<json>(c, "bad", "config"), "bad");
        return json::array({check_entry(assert_avoids(X, B, opt<int>(c, "n", B.n(), "config"), vo))});
    }
    if (check == "difference") return json::array({check_entry(difference_check(X, vo))});
    if (check == "sumset") {
        const auto pts = parse_points(need<json>(c, "points", "config"), X.d(), "points");
        // Cubes of X's grid meeting Y, relabelled with X's generation.
        const BranchingSchedule s(X.d(), {X.denom()}, {X.denom()});
        const GridSet thick = thicken_points(pts, 1, s);
        const GridSet Y(X.d(), 1, X.generation(), GridKind::DQ, X.denom(), thick.data());
        return json::array({check_entry(sumset_check(X, Y, vo))});
    }
    if (check == "isosceles") {
        const CurveSpec curve = parse_curve(need<json>(c, "curve", "config"), "curve");
        return json::array({check_entry(isosceles_check(X, curve, opt<double>(c, "tau", 3.0, "config"), vo))});
    }
    throw ConfigError("config: check must be avoids, difference, sumset or isosceles");
}

Produced produce_verify(const json& c) {
    // Parse eagerly so malformed inputs surface as configuration errors.
    const std::string check = need<std::string>(c, "check", "config");
    if (check != "avoids" && check != "difference" && check != "sumset" && check != "isosceles") {
        throw ConfigError("config: check must be avoids, difference, sumset or isosceles");
    }
    (void)parse_gridset(need<json>(c, "set", "config"), "set");
    return {};
}

// ---------------------------------------------------------------------------
// Dispatch

struct Mode {
    const std::set<std::string>* keys;
    bool randomized;
    std::function<Produced(const json&)> produce;
    std::function<json(const json&, const std::map<std::string, std::string>&, int)> verify;
};

const std::map<std::string, Mode>& modes() {
    static const std::map<std::string, Mode> table = {
        {"main", {&kMainKeys, true, produce_main, verify_main}},
        {"keleti", {&kKeletiKeys, false, produce_keleti, verify_keleti}},
        {"fp", {&kFpKeys, false, produce_fp, verify_fp}},
        {"mathe", {&kMatheKeys, false, produce_mathe, verify_mathe}},
        {"lowrank", {&kLowRankKeys, false, produce_lowrank, verify_lowrank}},
        {"fourier", {&kFourierKeys, true, produce_fourier, verify_fourier}},
        {"dimension", {&kDimensionKeys, false, produce_dimension, nullptr}},
        {"verify", {&kVerifyKeys, false, produce_verify, verify_verify}},
    };
    return table;
}

const Mode& mode_of(const std::string& name) {
    auto it = modes().find(name);
    if (it == modes().end()) {
        throw ConfigError("config: unknown mode '" + name + "' (main, keleti, fp, mathe, lowrank, fourier, dimension, verify)");
    }
    return it->second;
}

bool all_passed(const json& checks) {
    return std::all_of(checks.begin(), checks.end(), [](const json& e) { return e.value("passed", false); });
}

}  // namespace

bool is_randomized(const json& config) {
    const std::string mode = config.value("mode", "");
    if (mode == "dimension") {
        return config.contains("preset") && config["preset"].is_object() && config["preset"].value("kind", "") == "hyperdyadic";
    }
    auto it = modes().find(mode);
    return it != modes().end() && it->second.randomized;
}

RunConfig parse_config(const json& input, const std::string& base_dir, const Overrides& o) {
    require_object(input, "config");
    json j = input;
    inline_files(j, base_dir.empty() ? fs::path(".") : fs::path(base_dir));
    if (o.seed) j["seed"] = *o.seed;
    if (o.depth) j["depth"] = *o.depth;
    if (o.budget_bits) j["budget_bits"] = *o.budget_bits;
    if (o.output) j["output"] = *o.output;
    RunConfig c;
    c.mode = need<std::string>(j, "mode", "config");
    const Mode& m = mode_of(c.mode);
    allow_keys(j, *m.keys, "config");
    if (is_randomized(j) && !j.contains("seed")) {
        throw ConfigError("config: mode '" + c.mode + "' is randomized; a seed is required (--seed or \"seed\")");
    }
    if (j.contains("seed")) (void)need<std::uint64_t>(j, "seed", "config");
    if (j.contains("depth") && need<int>(j, "depth", "config") < 1) throw ConfigError("config: depth must be positive");
    const int bits = budget_of(j);
    if (bits < 2 || bits > kDefaultBudgetBits) throw ConfigError("config: budget_bits must lie in [2, 62]");
    c.threads = o.threads ? *o.threads : opt<int>(j, "threads", 1, "config");
    if (c.threads < 1) throw ConfigError("config: threads must be positive");
    // Thread count never changes results, so it is not part of the resolved config.
    j.erase("threads");
    c.output = opt<std::string>(j, "output", "", "config");
    j.erase("output");
    c.resolved = j;
    return c;
}

RunConfig load_config(const std::string& path, const Overrides& o) {
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(j, fs::path(path).parent_path().string(), o);
}

json verify_artifacts(const RunConfig& c, const std::map<std::string, std::string>& files, bool& passed) {
    const Mode& m = mode_of(c.mode);
    json checks = m.verify ? m.verify(c.resolved, files, c.threads) : json::array();
    passed = all_passed(checks);
    return checks;
}

Outcome execute(const RunConfig& c) {
    const Mode& m = mode_of(c.mode);
    Produced p = m.produce(c.resolved);
    bool verified = true;
    json checks = p.checks;
    for (auto& e : verify_artifacts(c, p.files, verified)) checks.push_back(std::move(e));
    Outcome out;
    out.files = std::move(p.files);
    out.checks = checks;
    out.passed = all_passed(checks);
    json report{{"mode", c.mode}, {"summary", p.summary}, {"checks", checks}, {"passed", out.passed}};
    out.files["report.json"] = dump(report);
    return out;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256: digest failed");
    }
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(md[i]);
    return os.str();
}

void write_outcome(const std::string& dir, const RunConfig& c, const Outcome& o) {
    fs::create_directories(dir);
    json hashes = json::object();
    for (const auto& [name, bytes] : o.files) {
        std::ofstream os(fs::path(dir) / name, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + (fs::path(dir) / name).string());
        os << bytes;
        hashes[name] = sha256_hex(bytes);
    }
    const json history{{"format", kHistoryFormat},
                       {"version", kHistoryVersion},
                       {"config", c.resolved},
                       {"files", hashes},
                       {"passed", o.passed}};
    std::ofstream hs(fs::path(dir) / "history.json", std::ios::binary);
    if (!hs) throw std::runtime_error("cannot write history.json in " + dir);
    hs << dump(history);
}

namespace {

struct History {
    RunConfig config;
    std::map<std::string, std::string> hashes;
    fs::path dir;
};

History load_history(const std::string& path, int threads) {
    json h;
    try {
        h = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("corrupted history " + path + ": " + e.what());
    }
    if (!h.is_object() || h.value("format", "") != kHistoryFormat || h.value("version", 0) != kHistoryVersion ||
        !h.contains("config") || !h.contains("files") || !h["files"].is_object()) {
        throw ConfigError("corrupted history " + path + ": missing format, config or file table");
    }
    History out;
    out.dir = fs::path(path).parent_path();
    Overrides o;
    o.threads = threads;
    out.config = parse_config(h["config"], out.dir.string(), o);
    for (const auto& [name, hash] : h["files"].items()) {
        if (!hash.is_string() || name.find('/') != std::string::npos) throw ConfigError("corrupted history: bad file entry");
        out.hashes[name] = hash.get<std::string>();
    }
    return out;
}

std::map<std::string, std::string> read_stored(const History& h, json& stored, bool& ok) {
    std::map<std::string, std::string> files;
    for (const auto& [name, hash] : h.hashes) {
        const fs::path p = h.dir / name;
        std::ifstream is(p, std::ios::binary);
        if (!is) {
            stored.push_back({{"file", name}, {"status", "missing"}});
            ok = false;
            continue;
        }
        std::ostringstream ss;
        ss << is.rdbuf();
        files[name] = ss.str();
        const bool match = sha256_hex(files[name]) == hash;
        stored.push_back({{"file", name}, {"status", match ? "match" : "mismatch"}});
        ok = ok && match;
    }
    return files;
}

}  // namespace

ReplayResult replay(const std::string& history_path, int threads) {
    const History h = load_history(history_path, threads);
    ReplayResult res;
    bool stored_ok = true;
    json stored = json::array();
    const auto files = read_stored(h, stored, stored_ok);

    bool derived_ok = true;
    json derived = json::array();
    const Outcome again = execute(h.config);
    std::set<std::string> names;
    for (const auto& [n, _] : h.hashes) names.insert(n);
    for (const auto& [n, _] : again.files) names.insert(n);
    for (const auto& name : names) {
        auto a = h.hashes.find(name);
        auto b = again.files.find(name);
        std::string status;
        if (a == h.hashes.end()) {
            status = "unexpected";
        } else if (b == again.files.end()) {
            status = "not-rederived";
        } else {
            status = sha256_hex(b->second) == a->second ? "match" : "mismatch";
        }
        derived_ok = derived_ok && status == "match";
        derived.push_back({{"file", name}, {"status", status}});
    }

    bool verified = true;
    json checks;
    try {
        checks = verify_artifacts(h.config, files, verified);
    } catch (const FormatError& e) {
        verified = false;
        checks = json::array({simple_check("stored_artifacts", false, {{"error", e.what()}})});
    }
    res.passed = stored_ok && derived_ok && verified;
    res.report = {{"history", history_path},
                  {"mode", h.config.mode},
                  {"stored", stored},
                  {"rederived", derived},
                  {"verifiers", checks},
                  {"determinism", stored_ok && derived_ok ? "identical" : "mismatch"},
                  {"passed", res.passed}};
    return res;
}

std::string export_csv(const std::string& history_path, const std::string& kind, double alpha, std::int64_t m_max) {
    const History h = load_history(history_path, 1);
    bool ok = true;
    json stored = json::array();
    const auto files = read_stored(h, stored, ok);
    if (!ok) throw FormatError("stored artifacts differ from the history; run replay for details");
    const auto X = get_levels(files);
    if (X.empty() || !files.count("schedule.json")) throw ConfigError("history has no grid levels to export");
    const BranchingSchedule s = schedule_from_json(json::parse(files.at("schedule.json")));
    std::ostringstream os;
    if (kind == "dimension") {
        write_dimension_csv(os, minkowski_estimate(X.back(), s, 1), true);
    } else if (kind == "decay") {
        if (s.dim() != 1) throw ConfigError("decay export needs d = 1");
        const coord_t D = X.back().denom();
        write_decay_csv(os, measure_of_set(X.back(), Mollifier::CellUniform), alpha, m_max > 0 ? m_max : std::min<coord_t>(D, 4096));
    } else if (kind == "weights") {
        write_weight_tree(os, canonical_weights(X, s));
    } else {
        throw ConfigError("export kind must be dimension, decay or weights");
    }
    return os.str();
}

int classify(const std::exception& e, json& diagnostic) {
    diagnostic = {{"message", e.what()}};
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const json::exception*>(&e)) {
        diagnostic["error"] = "config";
        return kExitConfig;
    }
    if (dynamic_cast<const RetryError*>(&e)) {
        diagnostic["error"] = "retry";
        return kExitHypothesis;
    }
    if (dynamic_cast<const HypothesisError*>(&e)) {
        diagnostic["error"] = "hypothesis";
        return kExitHypothesis;
    }
    if (dynamic_cast<const BudgetError*>(&e)) {
        diagnostic["error"] = "budget";
        return kExitHypothesis;
    }
    if (dynamic_cast<const ScheduleError*>(&e)) {
        diagnostic["error"] = "schedule";
        return kExitConfig;
    }
    if (dynamic_cast<const FormatError*>(&e)) {
        diagnostic["error"] = "format";
        return kExitConfig;
    }
    if (dynamic_cast<const std::invalid_argument*>(&e)) {
        diagnostic["error"] = "invalid-argument";
        return kExitConfig;
    }
    diagnostic["error"] = "internal";
    return kExitChecksFailed;
}

}  // namespace fav::cli
