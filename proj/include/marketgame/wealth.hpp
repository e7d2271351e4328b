#pragma once

// Solves the wealth equation along one scenario: exact updates at jump
// nodes and lumps, Picard iteration on continuous segments.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "marketgame/growth_optimal.hpp"
#include "marketgame/model.hpp"
#include "marketgame/strategy.hpp"
#include "marketgame/trajectory.hpp"
#include "marketgame/types.hpp"

namespace marketgame {

/// Wealth below this (but positive) is reported as a floor crossing.
inline constexpr double kWealthFloor = 1e-300;

/// Y' = Y - |l^m| + sum_n F(l)^{m,n} A^n. Spending above wealth by more than
/// the rounding slack raises BudgetViolation.
inline Vector discrete_step(std::span<const double> y, const Matrix& l, std::span<const double> payoff) {
    if (l.rows() != y.size() || l.cols() != payoff.size()) throw std::invalid_argument("discrete_step dimension mismatch");
    for (double v : l.data())
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("investments must be finite and non-negative");
    Vector out(y.begin(), y.end());
    for (std::size_t m = 0; m < y.size(); ++m) {
        const double spend = l1(l.row(m));
        const BudgetCheck b = check_spending(spend, y[m]);
        if (!b.ok) throw BudgetViolation(m, b.excess);
        out[m] -= spend;
    }
    for (std::size_t n = 0; n < payoff.size(); ++n) {
        if (payoff[n] == 0.0) continue;
        const double col = l.column_sum(n);
        if (col == 0.0) continue;  // nobody bought: payoff forfeited
        for (std::size_t m = 0; m < y.size(); ++m)
            if (l(m, n) > 0.0) out[m] += l(m, n) / col * payoff[n];
    }
    for (double& v : out)
        if (v < 0.0) v = 0.0;  // within the rounding slack
    return out;
}

/// Rates of every investor per unit of G at wealth z; frozen investors get zero rows.
inline Matrix rate_matrix(const StrategyProfile& profile, double t, const NodeCharacteristics& node,
                          std::span<const double> z, const std::vector<char>& frozen) {
    Matrix v(profile.size(), node.dim(), 0.0);
    for (std::size_t m = 0; m < profile.size(); ++m) {
        if (frozen[m] || z[m] <= 0.0) continue;
        const Vector r = profile.investors[m].rate(RateContext{t, node, z, m});
        if (r.size() != node.dim()) throw std::invalid_argument("strategy '" + profile.investors[m].rate.name +
                                                                "' returned the wrong number of assets");
        for (std::size_t n = 0; n < r.size(); ++n) {
            if (!(r[n] >= 0.0) || !std::isfinite(r[n]))
                throw std::invalid_argument("strategy '" + profile.investors[m].rate.name +
                                            "' returned a negative or non-finite rate");
            v(m, n) = r[n];
        }
    }
    return v;
}

/// Amounts spent at a jump node: rates times dG, checked against wealth.
/// Overspending within the rounding slack is scaled back to exactly z^m.
inline Matrix jump_investment(const Matrix& rates, double dG, std::span<const double> z) {
    Matrix l(rates.rows(), rates.cols());
    for (std::size_t m = 0; m < rates.rows(); ++m) {
        double spend = 0.0;
        for (std::size_t n = 0; n < rates.cols(); ++n) {
            l(m, n) = rates(m, n) * dG;
            spend += l(m, n);
        }
        const BudgetCheck b = check_spending(spend, z[m]);
        if (!b.ok) throw BudgetViolation(m, b.excess);
        if (spend > z[m])
            for (double& x : l.row(m)) x *= z[m] / spend;
    }
    return l;
}

/// dY/dG on a continuous segment for rates v.
inline Vector segment_velocity(const NodeCharacteristics& node, const Matrix& v) {
    Vector d(v.rows(), 0.0);
    for (std::size_t n = 0; n < v.cols(); ++n) {
        const double col = v.column_sum(n);
        for (std::size_t m = 0; m < v.rows(); ++m) {
            d[m] -= v(m, n);
            if (col > 0.0) d[m] += v(m, n) / col * node.b[n];
        }
    }
    return d;
}

struct PicardOptions {
    double dt = 1e-3;
    double tol = 1e-12;
    int max_iter = 200;
};

struct PicardStats {
    std::size_t windows = 0;
    std::size_t splits = 0;
    std::size_t iterations = 0;
    double max_residual = 0.0;
};

enum class RecordLevel { none, nodes, full };

enum class VisitKind { segment_step, jump_node };

/// What an observer sees just before each jump node and each segment step.
struct Visit {
    VisitKind kind;
    double t;
    std::size_t node;
    std::size_t markov_state;
    const NodeCharacteristics& chars;
    std::span<const double> wealth;
    const std::vector<char>& frozen;
};

struct SimOptions {
    PicardOptions picard;
    RecordLevel records = RecordLevel::full;
    std::function<void(const Visit&)> observer;
};

struct SimState {
    double t = 0.0;
    Vector Y;
    std::vector<char> frozen;  // bankrupt: wealth or its left limit reached 0
    std::vector<char> below_floor;
    Accumulators acc;
    PicardStats picard;
};

namespace detail {

inline void accumulate_deviation(Accumulators& acc, const Matrix& v, std::span<const double> z, double dG) {
    if (dG == 0.0 || v.rows() < 2) return;
    const std::size_t N = v.cols();
    const double w = l1(z);
    double rivals = 0.0;
    for (std::size_t m = 1; m < z.size(); ++m) rivals += z[m];
    double dev_all = 0.0, dev_rivals = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        double all = 0.0, riv = 0.0;
        for (std::size_t m = 0; m < v.rows(); ++m) {
            all += v(m, n);
            if (m > 0) riv += v(m, n);
        }
        const double l1n = z[0] > 0.0 ? v(0, n) / z[0] : 0.0;
        const double bar = w > 0.0 ? all / w : 0.0;
        const double tilde = rivals > 0.0 ? riv / rivals : 0.0;
        dev_all += (l1n - bar) * (l1n - bar);
        dev_rivals += (l1n - tilde) * (l1n - tilde);
    }
    acc.dev_all += dev_all * dG;
    acc.dev_rivals += dev_rivals * dG;
}

inline void update_solvency(SimState& s) {
    for (std::size_t m = 0; m < s.Y.size(); ++m) {
        if (s.Y[m] < 0.0) {
            ++s.acc.euler_overshoots;
            s.Y[m] = 0.0;
        }
        if (s.Y[m] == 0.0) s.frozen[m] = 1;
        const bool below = s.Y[m] > 0.0 && s.Y[m] < kWealthFloor;
        if (below && !s.below_floor[m]) ++s.acc.floor_crossings;
        s.below_floor[m] = below;
    }
}

inline StepRecord make_record(StepKind kind, double t, double dG, std::size_t node, Vector before, Vector after,
                              Matrix inv) {
    return {kind, t, dG, node, std::move(before), std::move(after), std::move(inv)};
}

}  // namespace detail

inline void jump_node_step(SimState& s, const StrategyProfile& profile, const MarketModel& model, std::size_t node,
                           std::size_t markov_state, const std::optional<Vector>& jump, const SimOptions& opt,
                           Trajectory* traj) {
    const NodeCharacteristics& c = model.characteristics(node, markov_state);
    const double t = model.node(node).t;
    if (opt.observer) opt.observer(Visit{VisitKind::jump_node, t, node, markov_state, c, s.Y, s.frozen});
    const Matrix v = rate_matrix(profile, t, c, s.Y, s.frozen);
    const Matrix l = jump_investment(v, c.dG, s.Y);
    detail::accumulate_deviation(s.acc, v, s.Y, c.dG);
    s.acc.G += c.dG;
    for (const auto& a : c.law.atoms()) {
        const double x = l1(a.x);
        s.acc.nu_trunc_sq += a.p * std::min(1.0, x * x);
    }
    const Vector payoff = jump ? *jump : Vector(model.assets(), 0.0);
    Vector before = s.Y;
    s.Y = discrete_step(before, l, payoff);
    s.t = t;
    if (traj) {
        traj->payoff_total += l1(payoff);
        if (opt.records != RecordLevel::none)
            traj->records.push_back(detail::make_record(StepKind::jump, t, c.dG, node, std::move(before), s.Y, l));
    }
    detail::update_solvency(s);
}

/// Applies all lumps scheduled at time t (a pure loss for the spender).
inline void apply_lumps(SimState& s, std::span<const LumpEvent> events, std::size_t assets, const SimOptions& opt,
                        Trajectory* traj) {
    if (events.empty()) return;
    const double t = events.front().t;
    const std::size_t M = s.Y.size();
    Matrix l(M, assets, 0.0);
    for (const auto& e : events) {
        if (e.amount.size() != assets) throw std::invalid_argument("lump has the wrong number of assets");
        if (s.frozen[e.investor]) continue;
        for (std::size_t n = 0; n < assets; ++n)
            l(e.investor, n) += e.fraction ? e.amount[n] * s.Y[e.investor] : e.amount[n];
    }
    Vector before = s.Y;
    const double w = l1(before);
    double rivals = 0.0;
    for (std::size_t m = 1; m < M; ++m) rivals += before[m];
    double spent_all = 0.0, spent_rivals = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        double spend = l1(l.row(m));
        if (spend == 0.0) continue;
        const BudgetCheck b = check_spending(spend, before[m]);
        if (!b.ok) throw BudgetViolation(m, b.excess);
        if (spend > before[m]) {
            for (double& x : l.row(m)) x *= before[m] / spend;
            spend = before[m];
        }
        s.Y[m] = before[m] - spend;
        s.acc.singular[m] += spend / before[m];
        spent_all += spend;
        if (m > 0) spent_rivals += spend;
    }
    if (w > 0.0) s.acc.singular_all += spent_all / w;
    if (rivals > 0.0) s.acc.singular_rivals += spent_rivals / rivals;
    s.t = t;
    if (traj && opt.records != RecordLevel::none)
        traj->records.push_back(detail::make_record(StepKind::lump, t, 0.0, 0, std::move(before), s.Y, std::move(l)));
    detail::update_solvency(s);
}

/// Solves the wealth equation on the segment (t0, t1] by Picard iteration of
/// the integral operator, discretized with left-point sums on a uniform grid.
/// The window of steps iterated jointly is halved when the observed
/// contraction ratio exceeds 1/2 or the iterate leaves [a/2, 2a] around the
/// window's starting wealth a; it is doubled again after each accepted window.
inline void picard_solve_segment(SimState& s, const StrategyProfile& profile, const MarketModel& model,
                                 std::size_t node, std::size_t markov_state, double t0, double t1,
                                 const SimOptions& opt, Trajectory* traj) {
    const NodeCharacteristics& c = model.characteristics(node, markov_state);
    const PicardOptions& po = opt.picard;
    if (!(po.dt > 0.0) || !(po.tol > 0.0) || po.max_iter < 1) throw std::invalid_argument("invalid Picard options");
    const std::size_t M = s.Y.size();
    const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil((t1 - t0) / po.dt - 1e-9)));
    const double h = (t1 - t0) / static_cast<double>(steps);
    const double dG = c.dG * h;
    auto time_at = [&](std::size_t k) { return k == steps ? t1 : t0 + static_cast<double>(k) * h; };

    // Operator U on a window: g_{j+1} = g_j + velocity(f_j) dG with g_0 = y0.
    // Frozen flags follow the candidate f, so bankruptcy is part of U.
    std::vector<char> frozen_f;
    Vector clamped(M);
    auto apply_U = [&](const std::vector<Vector>& f, std::size_t k0, std::vector<Vector>& g) {
        const std::size_t len = f.size();
        g.resize(len);
        g[0] = f[0];
        frozen_f = s.frozen;
        for (std::size_t j = 0; j + 1 < len; ++j) {
            for (std::size_t m = 0; m < M; ++m) {
                if (f[j][m] <= 0.0) frozen_f[m] = 1;
                clamped[m] = std::max(0.0, f[j][m]);
            }
            const Vector vel = segment_velocity(c, rate_matrix(profile, time_at(k0 + j), c, clamped, frozen_f));
            g[j + 1].resize(M);
            for (std::size_t m = 0; m < M; ++m) g[j + 1][m] = g[j][m] + (frozen_f[m] ? 0.0 : vel[m] * dG);
        }
    };
    auto sup_diff = [](const std::vector<Vector>& a, const std::vector<Vector>& b) {
        double d = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j)
            for (std::size_t m = 0; m < a[j].size(); ++m) d = std::max(d, std::abs(a[j][m] - b[j][m]));
        return d;
    };

    std::size_t k0 = 0;
    std::size_t window = steps;
    std::vector<Vector> f, g, check;
    Vector before_segment = s.Y;
    Matrix segment_investment(M, c.dim(), 0.0);
    double segment_dG = 0.0;
    while (k0 < steps) {
        window = std::min(window, steps - k0);
        const Vector a = s.Y;
        const double scale = std::max(1.0, l1(a));
        f.assign(window + 1, a);
        bool accepted = false;
        double prev = std::numeric_limits<double>::infinity();
        for (int it = 1; it <= po.max_iter; ++it) {
            ++s.picard.iterations;
            apply_U(f, k0, g);
            const double diff = sup_diff(f, g);
            bool outside = false;
            for (std::size_t j = 0; j < g.size() && !outside; ++j)
                for (std::size_t m = 0; m < M; ++m)
                    if (!s.frozen[m] && (g[j][m] > 2.0 * a[m] || g[j][m] < 0.5 * a[m])) outside = true;
            std::swap(f, g);
            if (diff <= po.tol * scale) {
                accepted = true;
                break;
            }
            if (window > 1 && (outside || (it >= 3 && diff > 0.5 * prev))) break;
            prev = diff;
        }
        if (!accepted) {
            if (window == 1) throw ConvergenceError("Picard iteration did not converge on a single step");
            window = (window + 1) / 2;
            ++s.picard.splits;
            continue;
        }
        ++s.picard.windows;
        apply_U(f, k0, check);
        s.picard.max_residual = std::max(s.picard.max_residual, sup_diff(f, check));

        // Walk the accepted window: observer, accumulators, records.
        for (std::size_t j = 0; j < window; ++j) {
            const double t = time_at(k0 + j);
            Vector z = f[j];
            for (double& x : z) x = std::max(0.0, x);
            if (opt.observer) opt.observer(Visit{VisitKind::segment_step, t, node, markov_state, c, z, s.frozen});
            const Matrix v = rate_matrix(profile, t, c, z, s.frozen);
            detail::accumulate_deviation(s.acc, v, z, dG);
            s.acc.G += dG;
            s.Y = f[j + 1];
            for (std::size_t m = 0; m < M; ++m)
                if (s.frozen[m]) s.Y[m] = z[m];
            detail::update_solvency(s);
            s.t = time_at(k0 + j + 1);
            if (traj) {
                Matrix inv(M, c.dim());
                for (std::size_t i = 0; i < v.data().size(); ++i) inv.data()[i] = v.data()[i] * dG;
                if (opt.records == RecordLevel::full) {
                    traj->records.push_back(detail::make_record(StepKind::segment, s.t, dG, node, z, s.Y, inv));
                } else if (opt.records == RecordLevel::nodes) {
                    for (std::size_t i = 0; i < inv.data().size(); ++i) segment_investment.data()[i] += inv.data()[i];
                    segment_dG += dG;
                }
            }
        }
        k0 += window;
        window *= 2;
    }
    if (traj) {
        traj->payoff_total += c.dG * (t1 - t0);
        if (opt.records == RecordLevel::nodes)
            traj->records.push_back(detail::make_record(StepKind::segment, t1, segment_dG, node,
                                                        std::move(before_segment), s.Y,
                                                        std::move(segment_investment)));
    }
    s.t = t1;
}

/// Runs the wealth equation over the whole model for one realized scenario.
inline Trajectory simulate(const MarketModel& model, const StrategyProfile& profile, const Scenario& sc,
                           const SimOptions& opt = {}) {
    profile.validate();
    if (sc.outcomes.size() != model.nodes().size()) throw std::invalid_argument("scenario does not match model");
    const std::size_t M = profile.size();
    const std::size_t N = model.assets();
    SimState s;
    s.Y = profile.y0;
    s.frozen.assign(M, 0);
    s.below_floor.assign(M, 0);
    s.acc.singular.assign(M, 0.0);

    Trajectory traj;
    traj.t_end = model.horizon();
    if (opt.records != RecordLevel::none)
        traj.records.push_back(detail::make_record(StepKind::start, 0.0, 0.0, 0, s.Y, s.Y, Matrix(M, N, 0.0)));

    const std::vector<LumpEvent> lumps = profile.lump_events();
    for (const auto& e : lumps) {
        if (!(e.t > 0.0)) throw std::invalid_argument("singular lumps must be at positive times");
        if (model.has_jump_at(e.t)) throw std::invalid_argument("singular lump scheduled at a jump node");
    }
    std::size_t li = 0;
    auto lumps_through = [&](double t, bool inclusive) {
        while (li < lumps.size() && lumps[li].t <= model.horizon() && (lumps[li].t < t || (inclusive && lumps[li].t == t))) {
            std::size_t lj = li;
            while (lj < lumps.size() && lumps[lj].t == lumps[li].t) ++lj;
            apply_lumps(s, std::span<const LumpEvent>(lumps.data() + li, lj - li), N, opt, &traj);
            li = lj;
        }
    };

    for (std::size_t i = 0; i < model.nodes().size(); ++i) {
        const ModelNode& n = model.node(i);
        const std::size_t state = sc.outcomes[i].state;
        if (n.is_jump()) {
            lumps_through(n.t, false);
            jump_node_step(s, profile, model, i, state, sc.outcomes[i].jump, opt, &traj);
            continue;
        }
        lumps_through(n.t, true);
        double a = n.t;
        while (li < lumps.size() && lumps[li].t < n.t_end) {
            const double tl = lumps[li].t;
            picard_solve_segment(s, profile, model, i, state, a, tl, opt, &traj);
            lumps_through(tl, true);
            a = tl;
        }
        picard_solve_segment(s, profile, model, i, state, a, n.t_end, opt, &traj);
    }
    lumps_through(model.horizon(), true);

    traj.final_wealth = s.Y;
    traj.bankrupt = s.frozen;
    traj.totals = s.acc;
    return traj;
}

inline Trajectory simulate(const MarketModel& model, const StrategyProfile& profile, std::uint64_t seed,
                           const SimOptions& opt = {}) {
    return simulate(model, profile, sample_scenario(model, seed), opt);
}

/// Shortest round-trip decimal representation; identical across runs and platforms.
inline std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline std::vector<std::string> trajectory_columns(std::size_t investors, std::size_t assets) {
    std::vector<std::string> cols{"t"};
    for (std::size_t m = 1; m <= investors; ++m) cols.push_back("Y_" + std::to_string(m));
    for (std::size_t m = 1; m <= investors; ++m) cols.push_back("r_" + std::to_string(m));
    cols.push_back("W");
    cols.push_back("dG");
    for (std::size_t m = 1; m <= investors; ++m)
        for (std::size_t n = 1; n <= assets; ++n) cols.push_back("lambda_" + std::to_string(m) + "_" + std::to_string(n));
    return cols;
}

/// One CSV row per record. lambda_m_n is investment per unit of G divided by
/// the investor's left-limit wealth over the increment (0 when dG = 0).
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    if (traj.records.empty()) return;
    const std::size_t M = traj.records.front().wealth.size();
    const std::size_t N = traj.records.front().investment.cols();
    const auto cols = trajectory_columns(M, N);
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << "\r\n";
    for (const auto& r : traj.records) {
        os << format_double(r.t);
        for (double y : r.wealth) os << ',' << format_double(y);
        for (double x : relative(r.wealth)) os << ',' << format_double(x);
        os << ',' << format_double(l1(r.wealth)) << ',' << format_double(r.dG);
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t n = 0; n < N; ++n) {
                const double z = r.wealth_before[m];
                const double lam = (r.dG > 0.0 && z > 0.0) ? r.investment(m, n) / (z * r.dG) : 0.0;
                os << ',' << format_double(lam);
            }
        os << "\r\n";
    }
}

}  // namespace marketgame
