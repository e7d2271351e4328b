#pragma once

// Strategies as investment-rate functions v(t, z) of time and the left-limit
// wealth of all investors, plus optional singular lumps at times where G is flat.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "marketgame/model.hpp"
#include "marketgame/paths.hpp"
#include "marketgame/trajectory.hpp"
#include "marketgame/types.hpp"

namespace marketgame {

struct RateContext {
    double t;
    const NodeCharacteristics& node;
    std::span<const double> wealth;  // left limits of all investors
    std::size_t investor;
};

/// Investment per unit of operational time, one entry per asset. Must be
/// pure: the engine calls it concurrently across paths.
struct StrategyRate {
    std::string name;
    std::function<Vector(const RateContext&)> fn;

    Vector operator()(const RateContext& ctx) const { return fn(ctx); }
};

namespace builtin {

inline StrategyRate cash_only() {
    return {"cash_only", [](const RateContext& ctx) { return Vector(ctx.node.dim(), 0.0); }};
}

/// Invests z^m * pi per unit of G. Since jump nodes have dG <= 1 the budget
/// holds whenever |pi| <= 1; the cap only guards against rounding.
inline StrategyRate fixed_proportions(Vector pi) {
    if (!all_nonnegative(pi)) throw std::invalid_argument("fixed_proportions needs non-negative proportions");
    if (l1(pi) > 1.0) throw std::invalid_argument("fixed_proportions needs |pi| <= 1");
    return {"fixed_proportions", [pi = std::move(pi)](const RateContext& ctx) {
                if (pi.size() != ctx.node.dim()) throw std::invalid_argument("fixed_proportions dimension mismatch");
                const double z = ctx.wealth[ctx.investor];
                Vector v(pi.size());
                for (std::size_t n = 0; n < v.size(); ++n) v[n] = z * pi[n];
                if (ctx.node.is_jump()) {
                    const double spend = l1(v) * ctx.node.dG;
                    if (spend > z)
                        for (double& x : v) x *= z / spend;
                }
                return v;
            }};
}

inline StrategyRate payoff_proportional() {
    return {"payoff_proportional", [](const RateContext& ctx) {
                Vector v = ctx.node.h();
                const double z = ctx.wealth[ctx.investor];
                for (double& x : v) x *= z;
                return v;
            }};
}

}  // namespace builtin

/// Named builtin; fixed_proportions takes pi as params.
inline StrategyRate make_builtin(const std::string& name, const Vector& params = {}) {
    if (name == "cash_only") return builtin::cash_only();
    if (name == "fixed_proportions") return builtin::fixed_proportions(params);
    if (name == "payoff_proportional") return builtin::payoff_proportional();
    throw std::invalid_argument("unknown builtin strategy '" + name + "'");
}

/// A lump spent at time t. When `fraction` is set, amount^n is a fraction of
/// the investor's left-limit wealth. `every`/`count` repeat it periodically.
struct SingularLump {
    double t = 0.0;
    Vector amount;
    bool fraction = false;
    double every = 0.0;
    std::size_t count = 1;
};

struct LumpEvent {
    double t;
    std::size_t investor;
    Vector amount;
    bool fraction;
};

struct SingularPlan {
    std::vector<SingularLump> lumps;

    bool empty() const { return lumps.empty(); }

    std::vector<LumpEvent> expand(std::size_t investor) const {
        std::vector<LumpEvent> out;
        for (const auto& l : lumps) {
            if (!all_nonnegative(l.amount)) throw std::invalid_argument("singular lumps must be non-negative");
            if (l.fraction && l1(l.amount) > 1.0) throw std::invalid_argument("lump fractions exceed one");
            if (l.count > 1 && !(l.every > 0.0)) throw std::invalid_argument("repeated lumps need every > 0");
            for (std::size_t k = 0; k < l.count; ++k)
                out.push_back({l.t + static_cast<double>(k) * l.every, investor, l.amount, l.fraction});
        }
        return out;
    }
};

struct InvestorStrategy {
    StrategyRate rate;
    SingularPlan singular;
};

struct StrategyProfile {
    std::vector<InvestorStrategy> investors;
    Vector y0;

    StrategyProfile() = default;
    StrategyProfile(std::vector<InvestorStrategy> inv, Vector initial) : investors(std::move(inv)), y0(std::move(initial)) {
        validate();
    }

    std::size_t size() const { return investors.size(); }

    void validate() const {
        if (investors.empty()) throw std::invalid_argument("profile needs at least one investor");
        if (y0.size() != investors.size()) throw std::invalid_argument("initial wealth size differs from investor count");
        for (double y : y0)
            if (!(y > 0.0) || !std::isfinite(y)) throw std::invalid_argument("initial wealth must be strictly positive");
        for (const auto& i : investors)
            if (!i.rate.fn) throw std::invalid_argument("investor has no rate function");
    }

    /// All lump events sorted by time, then investor.
    std::vector<LumpEvent> lump_events() const {
        std::vector<LumpEvent> all;
        for (std::size_t m = 0; m < investors.size(); ++m) {
            auto e = investors[m].singular.expand(m);
            all.insert(all.end(), e.begin(), e.end());
        }
        std::stable_sort(all.begin(), all.end(), [](const LumpEvent& a, const LumpEvent& b) {
            return a.t < b.t || (a.t == b.t && a.investor < b.investor);
        });
        return all;
    }
};

struct BudgetCheck {
    bool ok = true;
    double excess = 0.0;  // spending minus wealth, when positive
};

/// Relative slack for rounding in spending computed as rate * dG.
inline constexpr double kBudgetSlack = 1e-12;

inline BudgetCheck check_spending(double spend, double wealth) {
    const double excess = spend - wealth;
    if (excess > kBudgetSlack * std::max(1.0, wealth)) return {false, excess};
    return {true, std::max(0.0, excess)};
}

/// Spending |v| dG against z^m at a jump node; continuous segments always pass.
inline BudgetCheck validate_budget(const StrategyRate& rate, std::span<const double> z, const NodeCharacteristics& node,
                                   std::size_t investor, double t = 0.0) {
    if (!node.is_jump()) return {};
    const Vector v = rate(RateContext{t, node, z, investor});
    return check_spending(l1(v) * node.dG, z[investor]);
}

/// Cumulative investment L of one investor together with G and the
/// decomposition of L with respect to G.
struct CumulativeInvestment {
    MonotonePath L;      // one component per asset
    MonotonePath G;
    std::vector<GridFunction> rate;  // dL^n/dG per asset
    GridSet singular_support;        // where L grows while G is flat
    double singular_mass = 0.0;      // Lambda^(s): sum of lumps / left-limit wealth
};

/// Rebuilds L and G from a trajectory recorded at every step.
inline CumulativeInvestment realized_cumulative(const Trajectory& traj, std::size_t investor) {
    if (traj.records.empty() || traj.records.front().kind != StepKind::start)
        throw std::invalid_argument("trajectory has no start record");
    const std::size_t assets = traj.records.front().investment.cols();
    const double t0 = traj.records.front().t;
    PathBuilder L(t0, Vector(assets, 0.0));
    PathBuilder G(t0, {0.0});
    double singular = 0.0;
    for (const auto& r : traj.records) {
        if (r.kind == StepKind::start) continue;
        const auto row = r.investment.row(investor);
        const Vector inc(row.begin(), row.end());
        switch (r.kind) {
            case StepKind::segment:
                L.advance_by(r.t, inc);
                G.advance_by(r.t, {r.dG});
                break;
            case StepKind::jump:
                L.hold(r.t).jump(inc);
                G.hold(r.t).jump({r.dG});
                break;
            case StepKind::lump:
                L.hold(r.t).jump(inc);
                G.hold(r.t);
                if (l1(inc) > 0.0) singular += l1(inc) / r.wealth_before[investor];
                break;
            case StepKind::start: break;
        }
    }
    if (traj.t_end > L.time()) {
        L.hold(traj.t_end);
        G.hold(traj.t_end);
    }
    CumulativeInvestment out{L.build(), G.build(), {}, {}, singular};
    for (std::size_t n = 0; n < assets; ++n) out.rate.push_back(lebesgue_derivative(out.L.component(n), out.G).derivative);
    out.singular_support = lebesgue_derivative(out.L.norm(), out.G).singular;
    return out;
}

}  // namespace marketgame
