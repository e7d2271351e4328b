#pragma once

// Non-decreasing cadlag paths represented as a finite set of nodes with
// linear pieces between them and jumps at the nodes. Every process the
// engine integrates against (payoffs X, operational time G, cumulative
// investment L) is one of these.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "marketgame/types.hpp"

namespace marketgame {

struct PathNode {
    double t = 0.0;
    Vector left;         // value just before t
    Vector right;        // value at t
    Vector slope_after;  // slope on (t, next node); ignored at the last node

    friend bool operator==(const PathNode&, const PathNode&) = default;
};

class MonotonePath {
public:
    MonotonePath() = default;

    MonotonePath(std::size_t dim, std::vector<PathNode> nodes) : dim_(dim), nodes_(std::move(nodes)) {
        validate();
    }

    static MonotonePath constant(double t0, double t1, Vector value) {
        const std::size_t d = value.size();
        std::vector<PathNode> nodes;
        nodes.push_back({t0, value, value, Vector(d, 0.0)});
        if (t1 > t0) nodes.push_back({t1, value, value, Vector(d, 0.0)});
        return MonotonePath(d, std::move(nodes));
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    const std::vector<PathNode>& nodes() const { return nodes_; }
    const PathNode& node(std::size_t i) const { return nodes_.at(i); }
    double start_time() const { return nodes_.front().t; }
    double end_time() const { return nodes_.back().t; }

    std::vector<double> times() const {
        std::vector<double> ts;
        ts.reserve(nodes_.size());
        for (const auto& n : nodes_) ts.push_back(n.t);
        return ts;
    }

    /// Right-continuous value at t.
    Vector value(double t) const {
        check_domain(t);
        const std::size_t i = locate(t);
        const PathNode& n = nodes_[i];
        if (t == n.t) return n.right;
        Vector v(dim_);
        for (std::size_t k = 0; k < dim_; ++k) v[k] = n.right[k] + n.slope_after[k] * (t - n.t);
        return v;
    }

    Vector left_limit(double t) const {
        check_domain(t);
        const std::size_t i = locate(t);
        if (t == nodes_[i].t) return nodes_[i].left;
        return value(t);
    }

    Vector jump(double t) const {
        check_domain(t);
        const std::size_t i = locate(t);
        Vector j(dim_, 0.0);
        if (t != nodes_[i].t) return j;
        for (std::size_t k = 0; k < dim_; ++k) j[k] = nodes_[i].right[k] - nodes_[i].left[k];
        return j;
    }

    double scalar(double t) const { return value(t).at(0); }

    MonotonePath component(std::size_t c) const {
        if (c >= dim_) throw std::out_of_range("path component out of range");
        std::vector<PathNode> out;
        out.reserve(nodes_.size());
        for (const auto& n : nodes_) out.push_back({n.t, {n.left[c]}, {n.right[c]}, {n.slope_after[c]}});
        return MonotonePath(1, std::move(out));
    }

    /// Scalar path |X_t| (sum of components).
    MonotonePath norm() const {
        std::vector<PathNode> out;
        out.reserve(nodes_.size());
        for (const auto& n : nodes_) out.push_back({n.t, {l1(n.left)}, {l1(n.right)}, {l1(n.slope_after)}});
        return MonotonePath(1, std::move(out));
    }

    /// Same path with extra (jump-free) nodes inserted at the given times.
    MonotonePath refined(std::span<const double> grid) const {
        std::vector<double> extra(grid.begin(), grid.end());
        std::sort(extra.begin(), extra.end());
        std::vector<PathNode> out;
        out.reserve(nodes_.size() + extra.size());
        std::size_t e = 0;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const PathNode& n = nodes_[i];
            while (e < extra.size() && extra[e] <= n.t) ++e;
            out.push_back(n);
            if (i + 1 == nodes_.size()) break;
            const double t_next = nodes_[i + 1].t;
            for (; e < extra.size() && extra[e] < t_next; ++e) {
                if (!out.empty() && extra[e] == out.back().t) continue;
                Vector v(dim_);
                for (std::size_t k = 0; k < dim_; ++k) v[k] = n.right[k] + n.slope_after[k] * (extra[e] - n.t);
                out.push_back({extra[e], v, v, n.slope_after});
            }
        }
        MonotonePath p;
        p.dim_ = dim_;
        p.nodes_ = std::move(out);
        return p;
    }

    friend bool operator==(const MonotonePath&, const MonotonePath&) = default;

private:
    void check_domain(double t) const {
        if (nodes_.empty() || t < start_time() || t > end_time())
            throw std::domain_error("time " + std::to_string(t) + " outside path domain");
    }

    std::size_t locate(double t) const {
        auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t,
                                   [](double x, const PathNode& n) { return x < n.t; });
        return static_cast<std::size_t>(std::distance(nodes_.begin(), it)) - 1;
    }

    void validate() const {
        if (dim_ == 0) throw std::invalid_argument("path dimension must be positive");
        if (nodes_.empty()) throw std::invalid_argument("path needs at least one node");
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const PathNode& n = nodes_[i];
            if (n.left.size() != dim_ || n.right.size() != dim_ || n.slope_after.size() != dim_)
                throw std::invalid_argument("path node " + std::to_string(i) + " has wrong dimension");
            if (!std::isfinite(n.t)) throw std::invalid_argument("path node time must be finite");
            if (!all_nonnegative(n.left) || !all_nonnegative(n.right) || !all_nonnegative(n.slope_after))
                throw std::invalid_argument("path node " + std::to_string(i) + " has negative entries");
            for (std::size_t k = 0; k < dim_; ++k)
                if (n.left[k] > n.right[k])
                    throw std::invalid_argument("path decreases at node " + std::to_string(i));
            if (i == 0) {
                if (n.left != n.right) throw std::invalid_argument("path cannot jump at its start time");
                continue;
            }
            const PathNode& p = nodes_[i - 1];
            if (!(n.t > p.t)) throw std::invalid_argument("path node times must be strictly increasing");
            for (std::size_t k = 0; k < dim_; ++k) {
                const double expected = p.right[k] + p.slope_after[k] * (n.t - p.t);
                if (std::abs(expected - n.left[k]) > 1e-9 * std::max(1.0, std::abs(expected)))
                    throw std::invalid_argument("left limit at node " + std::to_string(i) +
                                                " inconsistent with preceding slope");
            }
        }
    }

    std::size_t dim_ = 0;
    std::vector<PathNode> nodes_;
};

/// Incremental construction of a path, left to right.
class PathBuilder {
public:
    PathBuilder(double t0, Vector x0) : dim_(x0.size()) {
        nodes_.push_back({t0, x0, x0, Vector(dim_, 0.0)});
    }

    double time() const { return nodes_.back().t; }
    const Vector& value() const { return nodes_.back().right; }

    /// Linear piece with the given slope up to t1.
    PathBuilder& advance(double t1, const Vector& slope) {
        PathNode& cur = nodes_.back();
        if (!(t1 > cur.t)) throw std::invalid_argument("advance requires a later time");
        cur.slope_after = slope;
        Vector v(dim_);
        for (std::size_t k = 0; k < dim_; ++k) v[k] = cur.right[k] + slope[k] * (t1 - cur.t);
        nodes_.push_back({t1, v, v, Vector(dim_, 0.0)});
        return *this;
    }

    /// Linear piece reaching value() + increment at t1.
    PathBuilder& advance_by(double t1, const Vector& increment) {
        PathNode& cur = nodes_.back();
        if (!(t1 > cur.t)) throw std::invalid_argument("advance requires a later time");
        Vector slope(dim_), v(dim_);
        for (std::size_t k = 0; k < dim_; ++k) {
            slope[k] = increment[k] / (t1 - cur.t);
            v[k] = cur.right[k] + increment[k];
        }
        cur.slope_after = std::move(slope);
        nodes_.push_back({t1, v, v, Vector(dim_, 0.0)});
        return *this;
    }

    /// Flat piece up to t1 (no-op when t1 equals the current time).
    PathBuilder& hold(double t1) {
        if (t1 == time()) return *this;
        return advance(t1, Vector(dim_, 0.0));
    }

    PathBuilder& jump(const Vector& size) {
        if (nodes_.size() == 1) throw std::invalid_argument("path cannot jump at its start time");
        PathNode& cur = nodes_.back();
        for (std::size_t k = 0; k < dim_; ++k) cur.right[k] += size[k];
        return *this;
    }

    MonotonePath build() const { return MonotonePath(dim_, nodes_); }

private:
    std::size_t dim_;
    std::vector<PathNode> nodes_;
};

/// Piecewise-constant function on a time grid: one value at each grid time
/// and one on each open cell between consecutive grid times. Zero off-grid.
class GridFunction {
public:
    GridFunction() = default;
    GridFunction(std::vector<double> times, Vector at_point, Vector on_cell)
        : times_(std::move(times)), at_point_(std::move(at_point)), on_cell_(std::move(on_cell)) {
        if (at_point_.size() != times_.size() ||
            on_cell_.size() != (times_.empty() ? 0 : times_.size() - 1))
            throw std::invalid_argument("grid function sizes do not match its grid");
    }

    double operator()(double t) const {
        if (times_.empty() || t < times_.front() || t > times_.back()) return 0.0;
        auto it = std::lower_bound(times_.begin(), times_.end(), t);
        const auto i = static_cast<std::size_t>(it - times_.begin());
        if (*it == t) return at_point_[i];
        return on_cell_[i - 1];
    }

    double point_value(double t) const {
        auto it = std::lower_bound(times_.begin(), times_.end(), t);
        if (it == times_.end() || *it != t) return 0.0;
        return at_point_[static_cast<std::size_t>(it - times_.begin())];
    }

    /// Value on the cell [t_i, t_{i+1}) containing t, ignoring point values.
    double cell_value(double t) const {
        if (times_.size() < 2 || t < times_.front() || t >= times_.back()) return 0.0;
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        return on_cell_[static_cast<std::size_t>(it - times_.begin()) - 1];
    }

    std::span<const double> breakpoints() const { return times_; }
    const std::vector<double>& times() const { return times_; }
    const Vector& at_point() const { return at_point_; }
    const Vector& on_cell() const { return on_cell_; }

private:

    std::vector<double> times_;
    Vector at_point_;
    Vector on_cell_;
};

/// One piece of a grid set: a single time when from == to, else the open cell (from, to).
struct GridPiece {
    double from;
    double to;
    bool is_point() const { return from == to; }
    friend bool operator==(const GridPiece&, const GridPiece&) = default;
};

/// Subset of a time grid made of grid points and open cells.
struct GridSet {
    std::vector<double> times;
    std::vector<char> point;
    std::vector<char> cell;

    bool contains(double t) const {
        if (times.empty() || t < times.front() || t > times.back()) return false;
        auto it = std::lower_bound(times.begin(), times.end(), t);
        const auto i = static_cast<std::size_t>(it - times.begin());
        if (*it == t) return point[i] != 0;
        return cell[i - 1] != 0;
    }

    bool empty() const {
        return std::none_of(point.begin(), point.end(), [](char c) { return c != 0; }) &&
               std::none_of(cell.begin(), cell.end(), [](char c) { return c != 0; });
    }

    std::vector<GridPiece> pieces() const {
        std::vector<GridPiece> out;
        for (std::size_t i = 0; i < times.size(); ++i) {
            if (point[i]) out.push_back({times[i], times[i]});
            if (i + 1 < times.size() && cell[i]) out.push_back({times[i], times[i + 1]});
        }
        return out;
    }
};

/// target = target_0 + derivative . base + 1(singular) . target, with 1(singular) . base = 0.
struct PathDecomposition {
    GridFunction derivative;
    GridSet singular;
};

struct Interval {
    double a;  // exclusive
    double b;  // inclusive
};

template <class F>
concept HasBreakpoints = requires(const F& f) {
    { f.breakpoints() } -> std::convertible_to<std::span<const double>>;
};

/// Continuous part and jump list of a path. Sum of the two reproduces the path.
struct SplitParts {
    MonotonePath continuous;
    std::vector<std::pair<double, Vector>> jumps;
};

inline SplitParts split_parts(const MonotonePath& path) {
    const std::size_t d = path.dim();
    std::vector<PathNode> cont;
    std::vector<std::pair<double, Vector>> jumps;
    cont.reserve(path.size());
    Vector c = path.node(0).left;
    for (std::size_t i = 0; i < path.size(); ++i) {
        const PathNode& n = path.node(i);
        if (i > 0) {
            const PathNode& p = path.node(i - 1);
            for (std::size_t k = 0; k < d; ++k) c[k] = c[k] + p.slope_after[k] * (n.t - p.t);
        }
        cont.push_back({n.t, c, c, n.slope_after});
        Vector j(d);
        bool nonzero = false;
        for (std::size_t k = 0; k < d; ++k) {
            j[k] = n.right[k] - n.left[k];
            nonzero = nonzero || j[k] != 0.0;
        }
        if (nonzero) jumps.emplace_back(n.t, std::move(j));
    }
    return {MonotonePath(d, std::move(cont)), std::move(jumps)};
}

namespace detail {

// 5-point Gauss-Legendre on [-1, 1]; exact for polynomials up to degree 9.
inline constexpr std::array<double, 5> kGaussNodes = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                                      0.5384693101056831, 0.9061798459386640};
inline constexpr std::array<double, 5> kGaussWeights = {0.2369268850561891, 0.4786286704993665,
                                                        0.5688888888888889, 0.4786286704993665,
                                                        0.2369268850561891};

template <class F>
double gauss_legendre(const F& f, double lo, double hi) {
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    double s = 0.0;
    for (std::size_t i = 0; i < kGaussNodes.size(); ++i) s += kGaussWeights[i] * f(mid + half * kGaussNodes[i]);
    return s * half;
}

inline std::vector<double> merge_times(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace detail

/// Pathwise Lebesgue-Stieltjes integral of f over (a, b] against |path|.
/// Atoms at t in (a, b] contribute f(t) times the jump; linear pieces are
/// integrated by Gauss-Legendre, split at f's breakpoints when it has them.
template <class F>
double stieltjes_integrate(const F& f, const MonotonePath& path, Interval iv) {
    if (path.empty() || iv.a < path.start_time() || iv.b > path.end_time() || iv.a > iv.b)
        throw std::domain_error("integration interval outside path domain");
    double total = 0.0;
    const auto& nodes = path.nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const PathNode& n = nodes[i];
        if (n.t > iv.a && n.t <= iv.b) {
            const double j = l1(n.right) - l1(n.left);
            if (j != 0.0) total += static_cast<double>(f(n.t)) * j;
        }
        if (i + 1 == nodes.size()) break;
        const double slope = l1(n.slope_after);
        if (slope == 0.0) continue;
        const double lo = std::max(n.t, iv.a);
        const double hi = std::min(nodes[i + 1].t, iv.b);
        if (!(hi > lo)) continue;
        std::vector<double> cuts{lo};
        if constexpr (HasBreakpoints<F>) {
            for (double c : f.breakpoints())
                if (c > lo && c < hi) cuts.push_back(c);
        }
        cuts.push_back(hi);
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
            total += slope * detail::gauss_legendre([&](double t) { return static_cast<double>(f(t)); },
                                                    cuts[k], cuts[k + 1]);
    }
    return total;
}

/// Pathwise Lebesgue derivative of a scalar target path with respect to a
/// scalar base path on the union of their grids. Cells and points where
/// the base carries no mass but the target does form the singular set.
inline PathDecomposition lebesgue_derivative(const MonotonePath& target, const MonotonePath& base) {
    if (target.dim() != 1 || base.dim() != 1)
        throw std::invalid_argument("lebesgue_derivative expects scalar paths");
    if (target.start_time() != base.start_time() || target.end_time() != base.end_time())
        throw std::invalid_argument("paths must share a domain");
    const auto grid = detail::merge_times(target.times(), base.times());
    const MonotonePath tg = target.refined(grid);
    const MonotonePath bs = base.refined(grid);
    const std::size_t n = grid.size();

    Vector at_point(n, 0.0), on_cell(n > 0 ? n - 1 : 0, 0.0);
    GridSet singular{grid, std::vector<char>(n, 0), std::vector<char>(n > 0 ? n - 1 : 0, 0)};
    for (std::size_t i = 0; i < n; ++i) {
        const PathNode& a = tg.node(i);
        const PathNode& b = bs.node(i);
        const double db = b.right[0] - b.left[0];
        const double da = a.right[0] - a.left[0];
        if (db > 0.0) {
            at_point[i] = da / db;
        } else if (da > 0.0) {
            singular.point[i] = 1;
        }
        if (i + 1 == n) break;
        const double sb = b.slope_after[0];
        const double sa = a.slope_after[0];
        if (sb != 0.0) {
            on_cell[i] = sa / sb;
        } else if (sa > 0.0) {
            singular.cell[i] = 1;
        }
    }
    return {GridFunction(grid, std::move(at_point), std::move(on_cell)), std::move(singular)};
}

/// Indefinite integral xi . base as a path starting at zero.
inline MonotonePath integrate_path(const GridFunction& xi, const MonotonePath& base) {
    if (base.dim() != 1) throw std::invalid_argument("integrate_path expects a scalar base");
    const auto grid = detail::merge_times(xi.times(), base.times());
    const MonotonePath bs = base.refined(grid);
    PathBuilder out(bs.start_time(), {0.0});
    for (std::size_t i = 0; i < bs.size(); ++i) {
        const PathNode& b = bs.node(i);
        if (i > 0) {
            const PathNode& p = bs.node(i - 1);
            const double mid = 0.5 * (p.t + b.t);
            out.advance(b.t, {xi(mid) * p.slope_after[0]});
            const double db = b.right[0] - b.left[0];
            if (db > 0.0) out.jump({xi.point_value(b.t) * db});
        }
    }
    return out.build();
}

/// 1(set) . path as a path starting at zero.
inline MonotonePath restrict_to(const GridSet& set, const MonotonePath& path) {
    if (path.dim() != 1) throw std::invalid_argument("restrict_to expects a scalar path");
    const auto grid = detail::merge_times(set.times, path.times());
    const MonotonePath p = path.refined(grid);
    PathBuilder out(p.start_time(), {0.0});
    for (std::size_t i = 1; i < p.size(); ++i) {
        const PathNode& prev = p.node(i - 1);
        const PathNode& cur = p.node(i);
        const double mid = 0.5 * (prev.t + cur.t);
        out.advance(cur.t, {set.contains(mid) ? prev.slope_after[0] : 0.0});
        const double dj = cur.right[0] - cur.left[0];
        if (dj > 0.0 && set.contains(cur.t)) out.jump({dj});
    }
    return out.build();
}

/// Pointwise sum of two scalar paths on the same domain, plus a constant offset.
inline MonotonePath add_paths(const MonotonePath& x, const MonotonePath& y, double offset = 0.0) {
    if (x.dim() != 1 || y.dim() != 1) throw std::invalid_argument("add_paths expects scalar paths");
    if (x.start_time() != y.start_time() || x.end_time() != y.end_time())
        throw std::invalid_argument("paths must share a domain");
    const auto grid = detail::merge_times(x.times(), y.times());
    const MonotonePath a = x.refined(grid), b = y.refined(grid);
    std::vector<PathNode> nodes;
    nodes.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const PathNode& p = a.node(i);
        const PathNode& q = b.node(i);
        nodes.push_back({grid[i], {p.left[0] + q.left[0] + offset}, {p.right[0] + q.right[0] + offset},
                         {p.slope_after[0] + q.slope_after[0]}});
    }
    return MonotonePath(1, std::move(nodes));
}

/// target_0 + xi . base + 1(singular) . target.
inline MonotonePath reconstruct(const PathDecomposition& d, const MonotonePath& base, const MonotonePath& target) {
    return add_paths(integrate_path(d.derivative, base), restrict_to(d.singular, target),
                     target.scalar(target.start_time()));
}

/// Largest difference between two same-dimension paths over left and right values at every node of either.
inline double max_abs_difference(const MonotonePath& x, const MonotonePath& y) {
    if (x.dim() != y.dim()) throw std::invalid_argument("paths differ in dimension");
    double worst = 0.0;
    for (const MonotonePath* p : {&x, &y}) {
        for (const auto& n : p->nodes()) {
            const Vector lx = x.left_limit(n.t), ly = y.left_limit(n.t);
            const Vector rx = x.value(n.t), ry = y.value(n.t);
            for (std::size_t k = 0; k < x.dim(); ++k)
                worst = std::max({worst, std::abs(lx[k] - ly[k]), std::abs(rx[k] - ry[k])});
        }
    }
    return worst;
}

}  // namespace marketgame
