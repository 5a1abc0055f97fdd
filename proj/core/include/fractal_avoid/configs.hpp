#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fractal_avoid/dyadic.hpp"

namespace fav {

// A configuration presented through per-scale covers in R^{dn}. Covers depend only on
// (k, D); they are pure and safe to call concurrently.
class CoverOracle {
public:
    virtual ~CoverOracle() = default;

    virtual int d() const = 0;
    virtual int n() const = 0;
    virtual double s() const = 0;
    virtual std::string tag() const = 0;

    // Exact membership of one generation-k cube of the grid with denominator D.
    virtual bool covers(int k, coord_t D, std::span<const coord_t> cube) const = 0;

    // Full cover. The default enumerates the grid and needs D^{dn} <= 2^24.
    virtual GridSet cover(int k, coord_t D) const;

    // Cover cubes all of whose d-blocks lie in `candidates` (a d-dimensional set on the
    // same grid). Equals cover(k, D) restricted to candidates^n.
    virtual GridSet cover_within(int k, coord_t D, const GridSet& candidates) const;

    virtual std::uint64_t cover_count(int k, coord_t D) const { return cover(k, D).size(); }

protected:
    GridSet empty_cover(int k, coord_t D) const;
};

using OraclePtr = std::shared_ptr<const CoverOracle>;

// Replays fixed cube lists keyed by generation; generations without a list yield empty covers.
std::shared_ptr<CoverOracle> explicit_cover(int d, int n, double s, std::map<int, GridSet> per_generation,
                                            std::string tag = "explicit");

struct ZeroSetSpec {
    int d = 1;
    int n = 2;
    int m = 1;              // codimension, number of components of g
    double lipschitz = -1;  // Euclidean Lipschitz bound of g; required
    // g: [0,1]^{dn} -> R^m.
    std::function<void(const double* x, double* out)> g;
    std::string tag = "zero_set";
};

// Cubes whose minimum corner value of |g| is at most L * sqrt(dn) * l. Never misses a zero.
std::shared_ptr<CoverOracle> zero_set_cover(ZeroSetSpec spec);

// Piecewise-linear curve t -> f(t) in R^{n-1}; sample abscissae run from 0 to 1.
class CurveSpec {
public:
    CurveSpec(std::vector<double> t, std::vector<std::vector<double>> f);

    static CurveSpec load(const std::string& path);
    static CurveSpec parse(const std::string& text);
    // Samples f at `samples + 1` equispaced points.
    static CurveSpec sample(const std::function<std::vector<double>(double)>& f, int samples);

    int codim() const { return static_cast<int>(f_.front().size()); }
    double lipschitz() const { return lip_; }
    void eval(double t, double* out) const;
    std::vector<double> eval(double t) const;
    const std::vector<double>& knots() const { return t_; }
    const std::vector<std::vector<double>>& values() const { return f_; }

private:
    std::vector<double> t_;
    std::vector<std::vector<double>> f_;
    double lip_ = 0;
};

struct IsoscelesCoverOptions {
    // Threshold on |(p_apex - mid) . (p_2 - p_1)| in units of l. The default
    // 3 * sqrt(1 + L^2) makes every uncovered triple pass a distance gap of 3 l.
    double slack = -1;
};

// Triples of parameters whose curve points can form an isosceles triangle, over all three
// apex choices. Requires Lipschitz constant < 1; declared s = 2.
std::shared_ptr<CoverOracle> isosceles_cover(CurveSpec curve, IsoscelesCoverOptions opts = {});

// Cover of {(x,y): x + y in Y} union {(x,y): y in Y/2} for an arity-one oracle Y.
std::shared_ptr<CoverOracle> sumset_cover(OraclePtr Y);

// 4-tuples (d=1) with |(x4 - x3) - (x2 - x1)| <= 2 l in startpoint terms.
std::shared_ptr<CoverOracle> translate_config();

// Points of Y given as an explicit list of points in [0,1]^d; declared s = 0.
std::shared_ptr<CoverOracle> point_set_oracle(int d, std::vector<std::vector<double>> points,
                                              std::string tag = "points");

}  // namespace fav
