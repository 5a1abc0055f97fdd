#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fav {

using coord_t = std::int64_t;

class BudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class HypothesisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ScheduleError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kDefaultBudgetBits = 62;

// Reads FRACTAL_AVOID_BUDGET_BITS; falls back to 62 when unset or unparsable.
// Values are clamped to [2, 62].
int default_budget_bits();

bool is_power_of_two(coord_t x);
// Smallest power of two >= x (x >= 1); throws BudgetError past 2^62.
coord_t next_power_of_two(coord_t x);

enum class GridKind { DQ, DR };

const char* to_string(GridKind kind);
GridKind grid_kind_from_string(const std::string& s);

// Generation k runs over 1..depth(); D(0) = 1 is the root.
class BranchingSchedule {
public:
    BranchingSchedule() = default;
    BranchingSchedule(int d, std::vector<coord_t> N, std::vector<coord_t> M,
                      int budget_bits = default_budget_bits());

    int dim() const { return d_; }
    int depth() const { return static_cast<int>(N_.size()); }
    int budget_bits() const { return budget_bits_; }

    coord_t N(int k) const;
    coord_t M(int k) const;
    coord_t D(int k) const;
    coord_t R(int k) const;
    coord_t denom(int k, GridKind kind) const;
    double l(int k) const { return 1.0 / static_cast<double>(D(k)); }
    double r(int k) const { return 1.0 / static_cast<double>(R(k)); }

    const std::vector<coord_t>& N_seq() const { return N_; }
    const std::vector<coord_t>& M_seq() const { return M_; }

    // Returns a copy with one more generation appended; same validation.
    BranchingSchedule extended(coord_t N, coord_t M) const;
    BranchingSchedule truncated(int depth) const;

    bool operator==(const BranchingSchedule&) const = default;

private:
    int d_ = 1;
    int budget_bits_ = kDefaultBudgetBits;
    std::vector<coord_t> N_;
    std::vector<coord_t> M_;
    std::vector<coord_t> D_{1};
};

// A generation-k discretized set: sorted, duplicate-free cube indices.
// Each cube has dim() = d*n coordinates; n > 1 marks a set in the product space.
class GridSet {
public:
    GridSet() = default;
    GridSet(int d, int n, int k, GridKind kind, coord_t denom, std::vector<coord_t> flat);

    static GridSet empty_like(const GridSet& other);

    int d() const { return d_; }
    int n() const { return n_; }
    int dim() const { return d_ * n_; }
    int generation() const { return k_; }
    GridKind kind() const { return kind_; }
    coord_t denom() const { return denom_; }

    std::size_t size() const { return dim() == 0 ? 0 : data_.size() / static_cast<std::size_t>(dim()); }
    bool empty() const { return data_.empty(); }
    std::span<const coord_t> operator[](std::size_t i) const {
        return {data_.data() + i * static_cast<std::size_t>(dim()), static_cast<std::size_t>(dim())};
    }
    bool contains(std::span<const coord_t> cube) const;
    // Position of cube or size() when absent.
    std::size_t find(std::span<const coord_t> cube) const;
    const std::vector<coord_t>& data() const { return data_; }

    bool same_grid(const GridSet& o) const {
        return d_ == o.d_ && n_ == o.n_ && k_ == o.k_ && kind_ == o.kind_ && denom_ == o.denom_;
    }
    bool operator==(const GridSet&) const = default;

private:
    int d_ = 1;
    int n_ = 1;
    int k_ = 0;
    GridKind kind_ = GridKind::DQ;
    coord_t denom_ = 1;
    std::vector<coord_t> data_;
};

GridSet set_union(const GridSet& a, const GridSet& b);
GridSet set_difference(const GridSet& a, const GridSet& b);
GridSet set_intersection(const GridSet& a, const GridSet& b);
bool is_subset(const GridSet& a, const GridSet& b);

// The whole unit cube at generation k.
GridSet full_grid(const BranchingSchedule& s, int k);
GridSet root_set(int d);

GridSet children(std::span<const coord_t> Q, int k, const BranchingSchedule& s);
GridSet children(const GridSet& T, const BranchingSchedule& s);

// Fine or intermediary cube at generation k -> fine parent at generation k-1.
std::vector<coord_t> parent_of(std::span<const coord_t> Q, int k, GridKind kind,
                               const BranchingSchedule& s);
// Fine cube at generation k -> the DR_k cell that contains it.
std::vector<coord_t> cell_of(std::span<const coord_t> Q, int k, const BranchingSchedule& s);

GridSet intermediary_cells(std::span<const coord_t> Q, int k, const BranchingSchedule& s);
GridSet intermediary_cells(const GridSet& T, const BranchingSchedule& s);
// Fine generation-k cubes inside a DR_k cell.
GridSet cell_children(std::span<const coord_t> R, int k, const BranchingSchedule& s);

// Generation-k cubes meeting the closed points; boundary points return all incident cubes.
GridSet thicken_points(const std::vector<std::vector<double>>& points, int k,
                       const BranchingSchedule& s, int n = 1);
// Generation-k fine cubes whose interiors meet the interior of E. For a set already at
// generation k this is the identity, so the operation is idempotent and monotone.
GridSet thicken(const GridSet& E, int k, const BranchingSchedule& s);
// Same rule against an arbitrary target denominator.
GridSet regrid(const GridSet& E, int k, GridKind kind, coord_t target_denom);

GridSet product(const std::vector<GridSet>& sets);

bool strongly_nondiagonal(std::span<const coord_t> cube, int d, int n);
GridSet nondiagonal_filter(const GridSet& B, int n);

struct ScheduleSpec {
    enum class Mode { Explicit, Constant, Subhyperdyadic, RapidDecay };
    Mode mode = Mode::Constant;
    int d = 1;
    int depth = 1;
    // Explicit mode.
    std::vector<coord_t> N;
    std::vector<coord_t> M;
    // Constant mode; M defaults to N when zero.
    coord_t constant_N = 2;
    coord_t constant_M = 0;
    // Subhyperdyadic mode: N_k = 2^floor(2^(k psi(k))).
    std::function<double(int)> psi;
    // Rapid-decay mode: N_k is the smallest admissible value >= lower_bound(k, D_{k-1}).
    std::function<double(int, coord_t)> lower_bound;
    // Non-explicit modes: M_k = intermediary(k, N_k); identity when unset.
    std::function<coord_t(int, coord_t)> intermediary;
    bool require_power_of_two = true;
    int budget_bits = default_budget_bits();
};

struct ScheduleResult {
    BranchingSchedule schedule;
    // growth[k-1] = log N_{k+1} / log D_k for k = 1..depth-1.
    std::vector<double> growth;
};

ScheduleResult make_schedule(const ScheduleSpec& spec);
std::vector<double> growth_diagnostics(const BranchingSchedule& s);

void write_gridset(std::ostream& os, const GridSet& g);
GridSet read_gridset(std::istream& is);
std::string gridset_to_string(const GridSet& g);
GridSet gridset_from_string(const std::string& text);
void save_gridset(const std::string& path, const GridSet& g);
GridSet load_gridset(const std::string& path);

}  // namespace fav
