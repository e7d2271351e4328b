#pragma once

// Numerical checks of the optimality, dominance and equilibrium properties:
// exact one-step drifts by enumeration, path-level metrics, Gibbs gap.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "marketgame/growth_optimal.hpp"
#include "marketgame/model.hpp"
#include "marketgame/rng.hpp"
#include "marketgame/strategy.hpp"
#include "marketgame/wealth.hpp"

namespace marketgame {

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Callers write
/// into per-index slots, so results do not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count && !failed; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

/// Drift of ln r^1 per unit of G at one state. At jump nodes h1 = 0 and h2 is
/// the enumerated expectation of the jump in ln r^1 divided by dG; on
/// segments h2 = 0 and h1 is the time derivative of ln r^1 with respect to G.
struct DriftReport {
    double t = 0.0;
    std::size_t node = 0;
    bool jump = false;
    double r = 0.0;
    double exact_drift = 0.0;
    double h1 = 0.0;
    double h2 = 0.0;
    double lower_bound = 0.0;  // (1 - r)^2 |lambda - lambda_tilde|^2 / 4
};

namespace detail {

inline double tested_lower_bound(const Matrix& v, std::span<const double> z) {
    double rivals = 0.0;
    for (std::size_t m = 1; m < z.size(); ++m) rivals += z[m];
    const double w = l1(z);
    if (!(z[0] > 0.0) || w == 0.0) return 0.0;
    const double r = z[0] / w;
    double d2 = 0.0;
    for (std::size_t n = 0; n < v.cols(); ++n) {
        double riv = 0.0;
        for (std::size_t m = 1; m < v.rows(); ++m) riv += v(m, n);
        const double lam = v(0, n) / z[0];
        const double tilde = rivals > 0.0 ? riv / rivals : 0.0;
        d2 += (lam - tilde) * (lam - tilde);
    }
    return 0.25 * (1.0 - r) * (1.0 - r) * d2;
}

}  // namespace detail

inline DriftReport exact_log_drift(const MarketModel& model, const StrategyProfile& profile, double t,
                                   std::size_t node, std::size_t markov_state, std::span<const double> z,
                                   const std::vector<char>& frozen) {
    const NodeCharacteristics& c = model.characteristics(node, markov_state);
    DriftReport rep;
    rep.t = t;
    rep.node = node;
    rep.jump = c.is_jump();
    const double w = l1(z);
    if (!(z[0] > 0.0)) throw std::invalid_argument("drift of ln r needs positive wealth for investor 1");
    rep.r = z[0] / w;
    const Matrix v = rate_matrix(profile, t, c, z, frozen);
    rep.lower_bound = detail::tested_lower_bound(v, z);
    if (c.is_jump()) {
        const Matrix l = jump_investment(v, c.dG, z);
        double e = 0.0;
        for (const Outcome& o : enumerate_outcomes(model, node, markov_state)) {
            const Vector payoff = o.jump ? *o.jump : Vector(model.assets(), 0.0);
            const Vector y = discrete_step(z, l, payoff);
            e += o.probability * (std::log(y[0] / l1(y)) - std::log(rep.r));
        }
        rep.h2 = e / c.dG;
    } else {
        const Vector d = segment_velocity(c, v);
        double dw = 0.0;
        for (double x : d) dw += x;
        rep.h1 = d[0] / z[0] - dw / w;
    }
    rep.exact_drift = rep.h1 + rep.h2;
    return rep;
}

struct AuditReport {
    std::string check;
    std::size_t nodes_tested = 0;
    double worst_violation = 0.0;  // largest amount by which the checked inequality failed (<= 0 when it holds)
    bool pass = true;
    double worst_bound_violation = -std::numeric_limits<double>::infinity();
    std::size_t paths = 0;
};

struct AuditOptions {
    std::size_t paths = 1000;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    double drift_tol = 1e-10;
    double bound_tol = 1e-8;
    double equilibrium_tol = 1e-12;
    PicardOptions picard;
};

/// Exact drift of ln r^1 at every state visited on sampled paths.
/// Passes when every drift is >= -drift_tol and >= lower bound - bound_tol.
inline AuditReport submartingale_audit(const MarketModel& model, const StrategyProfile& profile,
                                       const AuditOptions& opt) {
    struct Slot {
        std::size_t nodes = 0;
        double worst = -std::numeric_limits<double>::infinity();
        double worst_bound = -std::numeric_limits<double>::infinity();
    };
    std::vector<Slot> slots(opt.paths);
    parallel_for(opt.paths, opt.threads, [&](std::size_t i) {
        Slot& slot = slots[i];
        SimOptions so;
        so.picard = opt.picard;
        so.records = RecordLevel::none;
        so.observer = [&](const Visit& v) {
            if (!(v.wealth[0] > 0.0)) return;
            const DriftReport d = exact_log_drift(model, profile, v.t, v.node, v.markov_state, v.wealth, v.frozen);
            ++slot.nodes;
            slot.worst = std::max(slot.worst, -d.exact_drift);
            slot.worst_bound = std::max(slot.worst_bound, d.lower_bound - d.exact_drift);
        };
        simulate(model, profile, derive_seed(opt.seed, i), so);
    });
    AuditReport rep{"submartingale", 0, -std::numeric_limits<double>::infinity(), true,
                    -std::numeric_limits<double>::infinity(), opt.paths};
    for (const Slot& s : slots) {
        rep.nodes_tested += s.nodes;
        rep.worst_violation = std::max(rep.worst_violation, s.worst);
        rep.worst_bound_violation = std::max(rep.worst_bound_violation, s.worst_bound);
    }
    rep.pass = rep.nodes_tested > 0 && rep.worst_violation <= opt.drift_tol && rep.worst_bound_violation <= opt.bound_tol;
    return rep;
}

/// Path-level quantities whose finiteness or divergence decides dominance.
struct DominanceMetrics {
    double deviation_all = 0.0;     // int |lambda^1 - lambda_bar|^2 dG
    double deviation_rivals = 0.0;  // int |lambda^1 - lambda_tilde|^2 dG
    double singular_all = 0.0;
    double singular_rivals = 0.0;
    double r1 = 0.0;  // terminal relative wealth of investor 1
};

inline DominanceMetrics dominance_metrics(const Trajectory& traj) {
    const Vector r = relative(traj.final_wealth);
    return {traj.totals.dev_all, traj.totals.dev_rivals, traj.totals.singular_all, traj.totals.singular_rivals,
            r.empty() ? 0.0 : r[0]};
}

struct DominanceSummary {
    std::size_t paths = 0;
    double threshold = 0.99;
    double fraction_above = 0.0;  // share of paths with r1 > threshold
    double median_r1 = 0.0;
    double min_r1 = 0.0;
    double mean_deviation_rivals = 0.0;
    double mean_singular_rivals = 0.0;
    std::vector<DominanceMetrics> per_path;
};

inline double median_of(std::vector<double> x) {
    if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t k = x.size() / 2;
    std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(k), x.end());
    const double hi = x[k];
    if (x.size() % 2 == 1) return hi;
    const double lo = *std::max_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(k));
    return 0.5 * (lo + hi);
}

inline DominanceSummary dominance_experiment(const MarketModel& model, const StrategyProfile& profile,
                                             const AuditOptions& opt, double threshold = 0.99) {
    DominanceSummary out;
    out.paths = opt.paths;
    out.threshold = threshold;
    out.per_path.resize(opt.paths);
    parallel_for(opt.paths, opt.threads, [&](std::size_t i) {
        SimOptions so;
        so.picard = opt.picard;
        so.records = RecordLevel::none;
        out.per_path[i] = dominance_metrics(simulate(model, profile, derive_seed(opt.seed, i), so));
    });
    std::vector<double> r1;
    std::size_t above = 0;
    for (const auto& d : out.per_path) {
        r1.push_back(d.r1);
        if (d.r1 > threshold) ++above;
        out.mean_deviation_rivals += d.deviation_rivals;
        out.mean_singular_rivals += d.singular_rivals;
    }
    if (!r1.empty()) {
        const auto n = static_cast<double>(r1.size());
        out.fraction_above = static_cast<double>(above) / n;
        out.mean_deviation_rivals /= n;
        out.mean_singular_rivals /= n;
        out.min_r1 = *std::min_element(r1.begin(), r1.end());
        out.median_r1 = median_of(std::move(r1));
    }
    return out;
}

struct EquilibriumReport {
    AuditReport audit;
    double max_segment_change = 0.0;  // largest |W_after - W_before| over segment steps
    double median_terminal_wealth = 0.0;
    double mean_nu_trunc_sq = 0.0;    // mean of (1 ^ |x|^2) * nu at the horizon
    std::vector<double> terminal_wealth;
};

/// Puts every investor on lambda-hat (keeping initial wealth) and checks
/// E[1/W' | state] <= 1/W at each jump node by enumeration, and that W is
/// unchanged across continuous segments.
inline EquilibriumReport equilibrium_audit(const MarketModel& model, const Vector& y0, const AuditOptions& opt) {
    const StrategyProfile profile(std::vector<InvestorStrategy>(y0.size(), InvestorStrategy{lhat_rate(), {}}), y0);
    struct Slot {
        std::size_t nodes = 0;
        double worst = -std::numeric_limits<double>::infinity();
        double seg = 0.0;
        double wT = 0.0;
        double nu = 0.0;
    };
    std::vector<Slot> slots(opt.paths);
    parallel_for(opt.paths, opt.threads, [&](std::size_t i) {
        Slot& slot = slots[i];
        SimOptions so;
        so.picard = opt.picard;
        so.records = RecordLevel::nodes;
        so.observer = [&](const Visit& v) {
            if (v.kind != VisitKind::jump_node) return;
            const double w = l1(v.wealth);
            if (!(w > 0.0)) return;
            const Matrix rates = rate_matrix(profile, v.t, v.chars, v.wealth, v.frozen);
            const Matrix l = jump_investment(rates, v.chars.dG, v.wealth);
            double e = 0.0;
            for (const Outcome& o : enumerate_outcomes(model, v.node, v.markov_state)) {
                const Vector payoff = o.jump ? *o.jump : Vector(model.assets(), 0.0);
                e += o.probability / l1(discrete_step(v.wealth, l, payoff));
            }
            ++slot.nodes;
            slot.worst = std::max(slot.worst, e - 1.0 / w);
        };
        const Trajectory tr = simulate(model, profile, derive_seed(opt.seed, i), so);
        for (const auto& r : tr.records)
            if (r.kind == StepKind::segment) slot.seg = std::max(slot.seg, std::abs(l1(r.wealth) - l1(r.wealth_before)));
        slot.wT = l1(tr.final_wealth);
        slot.nu = tr.totals.nu_trunc_sq;
    });
    EquilibriumReport rep;
    rep.audit = {"equilibrium", 0, -std::numeric_limits<double>::infinity(), true,
                 -std::numeric_limits<double>::infinity(), opt.paths};
    for (const Slot& s : slots) {
        rep.audit.nodes_tested += s.nodes;
        rep.audit.worst_violation = std::max(rep.audit.worst_violation, s.worst);
        rep.max_segment_change = std::max(rep.max_segment_change, s.seg);
        rep.terminal_wealth.push_back(s.wT);
        rep.mean_nu_trunc_sq += s.nu;
    }
    if (!slots.empty()) rep.mean_nu_trunc_sq /= static_cast<double>(slots.size());
    rep.median_terminal_wealth = median_of(rep.terminal_wealth);
    const double seg_tol = opt.picard.tol * std::max(1.0, l1(profile.y0));
    rep.audit.pass = rep.audit.worst_violation <= opt.equilibrium_tol && rep.max_segment_change <= seg_tol;
    return rep;
}

// Normalized inputs can overshoot unit mass by a few ulps.
inline constexpr double kMassSlack = 1e-12;

/// alpha(ln alpha - ln beta) - |alpha - beta|^2 / 4 - (|alpha| - |beta|), with 0 ln 0 = 0.
inline double gibbs_gap(std::span<const double> alpha, std::span<const double> beta) {
    if (alpha.size() != beta.size()) throw std::domain_error("gibbs_gap needs vectors of equal length");
    if (!all_nonnegative(alpha) || !all_nonnegative(beta)) throw std::domain_error("gibbs_gap needs non-negative vectors");
    if (l1(alpha) > 1.0 + kMassSlack || l1(beta) > 1.0 + kMassSlack) throw std::domain_error("gibbs_gap needs |alpha|, |beta| <= 1");
    double s = 0.0;
    for (std::size_t n = 0; n < alpha.size(); ++n) {
        if (alpha[n] == 0.0) continue;
        if (beta[n] == 0.0) throw std::domain_error("gibbs_gap needs supp alpha inside supp beta");
        s += alpha[n] * (std::log(alpha[n]) - std::log(beta[n]));
    }
    return s - 0.25 * squared_distance(alpha, beta) - (l1(alpha) - l1(beta));
}

/// (1/T) ln Y_T per investor; NaN for investors with Y_T = 0 or T = 0.
inline Vector growth_rate_report(const Trajectory& traj) {
    Vector out;
    for (double y : traj.final_wealth)
        out.push_back(y > 0.0 && traj.t_end > 0.0 ? std::log(y) / traj.t_end : std::numeric_limits<double>::quiet_NaN());
    return out;
}

}  // namespace marketgame
