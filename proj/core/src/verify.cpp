#include "fractal_avoid/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "parallel.hpp"

namespace fav {

namespace {

constexpr std::size_t kChunks = 64;

using Clock = std::chrono::steady_clock;

struct Partial {
    std::uint64_t checked = 0;
    std::uint64_t count = 0;
    std::vector<std::vector<coord_t>> listed;

    void flag(std::vector<coord_t> tuple) {
        ++count;
        if (listed.size() < VerifyReport::kMaxListed) listed.push_back(std::move(tuple));
    }
};

void merge_into(VerifyReport& r, std::vector<Partial>& parts) {
    for (auto& p : parts) {
        r.tuples_checked += p.checked;
        r.violation_count += p.count;
        for (auto& v : p.listed) {
            if (r.violations.size() >= VerifyReport::kMaxListed) break;
            r.violations.push_back(std::move(v));
        }
    }
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// n-th falling factorial with saturation at 2^64 - 1.
std::uint64_t falling(std::uint64_t m, int n) {
    long double v = 1;
    for (int i = 0; i < n; ++i) {
        if (m < static_cast<std::uint64_t>(i)) return 0;
        v *= static_cast<long double>(m - static_cast<std::uint64_t>(i));
    }
    return v > 1.8e19L ? ~std::uint64_t{0} : static_cast<std::uint64_t>(v);
}

void require_budget(std::uint64_t need, std::uint64_t budget, const char* what) {
    if (need > budget) {
        throw BudgetError(std::string(what) + ": " + std::to_string(need) + " tuples exceed the enumeration budget of " +
                          std::to_string(budget));
    }
}

template <class Pred>
VerifyReport enumerate_distinct(const GridSet& X, int n, const VerifyOptions& opts, const char* name, Pred&& hit) {
    const auto t0 = Clock::now();
    if (X.n() != 1 || X.kind() != GridKind::DQ) throw std::invalid_argument(std::string(name) + ": X must be a fine set in R^d");
    if (n < 1) throw std::invalid_argument(std::string(name) + ": arity must be positive");
    require_budget(falling(X.size(), n), opts.budget, name);

    VerifyReport r;
    r.check = name;
    r.strategy = "tuples";
    const int d = X.d();
    const std::size_t m = X.size();
    std::vector<Partial> parts(kChunks);
    detail::chunked_for(m, opts.threads, kChunks, [&](std::size_t c, std::size_t lo, std::size_t hi) {
        Partial& out = parts[c];
        std::vector<std::size_t> idx(static_cast<std::size_t>(n));
        std::vector<coord_t> tuple(static_cast<std::size_t>(d * n));
        for (std::size_t first = lo; first < hi; ++first) {
            idx[0] = first;
            // Odometer over the remaining slots; skip tuples with repeated indices.
            std::fill(idx.begin() + 1, idx.end(), 0);
            while (true) {
                bool distinct = true;
                for (int a = 0; a < n && distinct; ++a) {
                    for (int b = a + 1; b < n; ++b) {
                        if (idx[static_cast<std::size_t>(a)] == idx[static_cast<std::size_t>(b)]) {
                            distinct = false;
                            break;
                        }
                    }
                }
                if (distinct) {
                    for (int j = 0; j < n; ++j) {
                        auto q = X[idx[static_cast<std::size_t>(j)]];
                        std::copy(q.begin(), q.end(), tuple.begin() + j * d);
                    }
                    ++out.checked;
                    if (hit(std::span<const coord_t>(tuple))) out.flag(tuple);
                }
                int j = n - 1;
                while (j >= 1 && ++idx[static_cast<std::size_t>(j)] == m) {
                    idx[static_cast<std::size_t>(j)] = 0;
                    --j;
                }
                if (j < 1) break;
            }
        }
    });
    merge_into(r, parts);
    r.wall_seconds = seconds_since(t0);
    return r;
}

}  // namespace

nlohmann::json to_json(const VerifyReport& r) {
    return nlohmann::json{{"check", r.check},
                          {"strategy", r.strategy},
                          {"tuples_checked", r.tuples_checked},
                          {"violation_count", r.violation_count},
                          {"violations", r.violations},
                          {"wall_seconds", r.wall_seconds},
                          {"passed", r.passed()}};
}

VerifyReport verify_report_from_json(const nlohmann::json& j) {
    VerifyReport r;
    r.check = j.at("check").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.tuples_checked = j.at("tuples_checked").get<std::uint64_t>();
    r.violation_count = j.at("violation_count").get<std::uint64_t>();
    r.violations = j.at("violations").get<std::vector<std::vector<coord_t>>>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    return r;
}

VerifyReport assert_avoids(const GridSet& X, const GridSet& B, int n, const VerifyOptions& opts) {
    if (B.dim() != X.d() * n || B.denom() != X.denom() || B.kind() != GridKind::DQ) {
        throw std::invalid_argument("assert_avoids: B must live on X's grid in dimension d*n");
    }
    return enumerate_distinct(X, n, opts, "assert_avoids",
                              [&](std::span<const coord_t> t) { return B.contains(t); });
}

VerifyReport assert_avoids(const GridSet& X, const CoverOracle& oracle, const VerifyOptions& opts) {
    if (oracle.d() != X.d()) throw std::invalid_argument("assert_avoids: oracle dimension differs from X");
    const int k = X.generation();
    const coord_t D = X.denom();
    return enumerate_distinct(X, oracle.n(), opts, "assert_avoids",
                              [&](std::span<const coord_t> t) { return oracle.covers(k, D, t); });
}

VerifyReport difference_check(const GridSet& X, const std::vector<ProcessedInterval>& processed,
                              const BranchingSchedule& s, const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    if (X.d() != 1 || X.n() != 1) throw std::invalid_argument("difference_check: X must be a set of intervals");
    const int K = X.generation();
    if (X.denom() != s.D(K)) throw std::invalid_argument("difference_check: X is not on the schedule's grid");

    std::vector<coord_t> pts(X.data());
    std::uint64_t need = 0;
    struct Job {
        std::vector<coord_t> in, out;
        coord_t unit;
    };
    std::vector<Job> jobs;
    for (const auto& p : processed) {
        if (p.generation < 0 || p.created < p.generation + 1 || p.created > K) {
            throw std::invalid_argument("difference_check: processed interval generations out of order");
        }
        const coord_t width = X.denom() / s.D(p.generation);
        Job job;
        job.unit = X.denom() / s.D(p.created);
        for (coord_t a : pts) (a / width == p.index ? job.in : job.out).push_back(a);
        const auto o = static_cast<long double>(job.out.size());
        const long double cost = static_cast<long double>(job.in.size()) * o * o * o;
        need = cost > 1.8e19L ? ~std::uint64_t{0} : need + static_cast<std::uint64_t>(cost);
        jobs.push_back(std::move(job));
    }
    require_budget(need, opts.budget, "difference_check");

    VerifyReport r;
    r.check = "difference_check";
    r.strategy = "processed-intervals";
    for (const auto& job : jobs) {
        std::vector<Partial> parts(kChunks);
        detail::chunked_for(job.in.size(), opts.threads, kChunks, [&](std::size_t c, std::size_t lo, std::size_t hi) {
            Partial& out = parts[c];
            for (std::size_t i = lo; i < hi; ++i) {
                const coord_t x1 = job.in[i];
                for (coord_t x2 : job.out) {
                    for (coord_t x3 : job.out) {
                        for (coord_t x4 : job.out) {
                            ++out.checked;
                            const coord_t exact = (x4 - x3) - (x2 - x1);
                            const coord_t coarse =
                                (x4 / job.unit - x3 / job.unit) - (x2 / job.unit - x1 / job.unit);
                            if (exact == 0 || (coarse > -5 && coarse < 5)) out.flag({x1, x2, x3, x4});
                        }
                    }
                }
            }
        });
        merge_into(r, parts);
    }
    r.wall_seconds = seconds_since(t0);
    return r;
}

VerifyReport difference_check(const GridSet& X, const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    if (X.d() != 1 || X.n() != 1) throw std::invalid_argument("difference_check: X must be a set of intervals");
    const std::uint64_t m = X.size();
    // Index quadruples i1 < i2 <= i3 < i4.
    const long double cost = static_cast<long double>(m) * m * m * m / 24.0L + 1;
    require_budget(cost > 1.8e19L ? ~std::uint64_t{0} : static_cast<std::uint64_t>(cost), opts.budget,
                   "difference_check");
    const auto& a = X.data();
    VerifyReport r;
    r.check = "difference_check";
    r.strategy = "all-quadruples";
    std::vector<Partial> parts(kChunks);
    detail::chunked_for(a.size(), opts.threads, kChunks, [&](std::size_t c, std::size_t lo, std::size_t hi) {
        Partial& out = parts[c];
        for (std::size_t i1 = lo; i1 < hi; ++i1) {
            for (std::size_t i2 = i1 + 1; i2 < a.size(); ++i2) {
                for (std::size_t i3 = i2; i3 < a.size(); ++i3) {
                    for (std::size_t i4 = i3 + 1; i4 < a.size(); ++i4) {
                        ++out.checked;
                        if (a[i2] - a[i1] == a[i4] - a[i3]) out.flag({a[i1], a[i2], a[i3], a[i4]});
                    }
                }
            }
        }
    });
    merge_into(r, parts);
    r.wall_seconds = seconds_since(t0);
    return r;
}

VerifyReport sumset_check(const GridSet& X, const GridSet& Y, const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    if (X.n() != 1 || Y.n() != 1 || X.d() != Y.d() || X.denom() != Y.denom()) {
        throw std::invalid_argument("sumset_check: X and the cover of Y must share a d-dimensional grid");
    }
    const int d = X.d();
    const std::uint64_t box = std::uint64_t{1} << (2 * d);
    const std::uint64_t m = X.size();
    const std::uint64_t pair_cost = m * (m + 1) / 2 * box;
    const std::uint64_t scan_cost = m * Y.size() * box;

    VerifyReport r;
    r.check = "sumset_check";
    // Odometer over offsets in {-1, 0, 1, 2}^d (pairs) or {-2, -1, 0, 1}^d (scan).
    auto for_box = [d](std::vector<coord_t>& v, coord_t lo, auto&& fn) {
        std::vector<int> off(static_cast<std::size_t>(d), 0);
        std::vector<coord_t> base(v);
        while (true) {
            for (int a = 0; a < d; ++a) v[static_cast<std::size_t>(a)] = base[static_cast<std::size_t>(a)] + lo + off[static_cast<std::size_t>(a)];
            if (fn(v)) break;
            int a = d - 1;
            while (a >= 0 && ++off[static_cast<std::size_t>(a)] == 4) {
                off[static_cast<std::size_t>(a)] = 0;
                --a;
            }
            if (a < 0) break;
        }
        v = base;
    };

    if (pair_cost <= scan_cost) {
        require_budget(pair_cost, opts.budget, "sumset_check");
        r.strategy = "pairs";
        std::vector<Partial> parts(kChunks);
        detail::chunked_for(m, opts.threads, kChunks, [&](std::size_t c, std::size_t lo, std::size_t hi) {
            Partial& out = parts[c];
            std::vector<coord_t> sum(static_cast<std::size_t>(d));
            for (std::size_t i = lo; i < hi; ++i) {
                for (std::size_t j = i; j < m; ++j) {
                    for (int a = 0; a < d; ++a) sum[static_cast<std::size_t>(a)] = X[i][static_cast<std::size_t>(a)] + X[j][static_cast<std::size_t>(a)];
                    bool bad = false;
                    for_box(sum, -1, [&](const std::vector<coord_t>& cube) {
                        out.checked++;
                        bad = Y.contains(cube);
                        return bad;
                    });
                    if (bad) {
                        std::vector<coord_t> t(X[i].begin(), X[i].end());
                        t.insert(t.end(), X[j].begin(), X[j].end());
                        out.flag(std::move(t));
                    }
                }
            }
        });
        merge_into(r, parts);
    } else {
        require_budget(scan_cost, opts.budget, "sumset_check");
        r.strategy = "cover-scan";
        // Pairs reached from several cover cubes are reported once.
        std::set<std::pair<std::size_t, std::size_t>> bad;
        std::vector<coord_t> y(static_cast<std::size_t>(d));
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t c = 0; c < Y.size(); ++c) {
                for (int a = 0; a < d; ++a) y[static_cast<std::size_t>(a)] = Y[c][static_cast<std::size_t>(a)] - X[i][static_cast<std::size_t>(a)];
                for_box(y, -2, [&](const std::vector<coord_t>& cand) {
                    r.tuples_checked++;
                    const std::size_t j = X.find(cand);
                    if (j != X.size()) bad.insert({std::min(i, j), std::max(i, j)});
                    return false;
                });
            }
        }
        for (const auto& [i, j] : bad) {
            r.violation_count++;
            if (r.violations.size() < VerifyReport::kMaxListed) {
                std::vector<coord_t> t(X[i].begin(), X[i].end());
                t.insert(t.end(), X[j].begin(), X[j].end());
                r.violations.push_back(std::move(t));
            }
        }
    }
    r.wall_seconds = seconds_since(t0);
    return r;
}

VerifyReport isosceles_check(const GridSet& X, const CurveSpec& curve, double tau, const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    if (X.d() != 1 || X.n() != 1) throw std::invalid_argument("isosceles_check: X must be a set of intervals");
    const std::size_t m = X.size();
    require_budget(static_cast<std::uint64_t>(m) * m, opts.budget, "isosceles_check");
    const int c = curve.codim();
    const double D = static_cast<double>(X.denom());
    const double gap = tau / D;

    // Points (t, f(t)) at interval midpoints.
    std::vector<std::vector<double>> p(m, std::vector<double>(static_cast<std::size_t>(c + 1)));
    for (std::size_t i = 0; i < m; ++i) {
        const double t = (static_cast<double>(X.data()[i]) + 0.5) / D;
        p[i][0] = t;
        curve.eval(t, p[i].data() + 1);
    }

    VerifyReport r;
    r.check = "isosceles_check";
    // Per apex, legs are sorted by length so near-equal legs are adjacent.
    r.strategy = "sorted-legs";
    std::vector<Partial> parts(kChunks);
    detail::chunked_for(m, opts.threads, kChunks, [&](std::size_t ch, std::size_t lo, std::size_t hi) {
        Partial& out = parts[ch];
        std::vector<std::pair<double, std::size_t>> legs;
        for (std::size_t i = lo; i < hi; ++i) {
            legs.clear();
            for (std::size_t j = 0; j < m; ++j) {
                if (j == i) continue;
                double s2 = 0;
                for (int a = 0; a <= c; ++a) {
                    const double diff = p[i][static_cast<std::size_t>(a)] - p[j][static_cast<std::size_t>(a)];
                    s2 += diff * diff;
                }
                legs.emplace_back(std::sqrt(s2), j);
            }
            std::sort(legs.begin(), legs.end());
            const std::size_t L = legs.size();
            out.checked += L * (L - (L > 0 ? 1 : 0)) / 2;
            std::size_t left = 0;
            for (std::size_t q = 0; q < L; ++q) {
                while (legs[q].first - legs[left].first > gap) ++left;
                for (std::size_t w = left; w < q; ++w) {
                    const std::size_t j = std::min(legs[w].second, legs[q].second);
                    const std::size_t k = std::max(legs[w].second, legs[q].second);
                    out.flag({X.data()[i], X.data()[j], X.data()[k]});
                }
            }
        }
    });
    merge_into(r, parts);
    r.wall_seconds = seconds_since(t0);
    return r;
}

}  // namespace fav
