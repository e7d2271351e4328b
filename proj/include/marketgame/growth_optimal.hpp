#pragma once

// The relative-growth-optimal strategy: node classification, the cash
// level zeta kept at jump nodes, and the investment proportions lambda-hat.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string_view>

#include "marketgame/model.hpp"
#include "marketgame/strategy.hpp"
#include "marketgame/types.hpp"

namespace marketgame {

enum class GammaClass { gamma0, gamma1, gamma2 };

inline std::string_view to_string(GammaClass g) {
    switch (g) {
        case GammaClass::gamma0: return "Gamma0";
        case GammaClass::gamma1: return "Gamma1";
        case GammaClass::gamma2: return "Gamma2";
    }
    return "?";
}

struct ZetaSolution {
    double zeta = 0.0;
    GammaClass gamma = GammaClass::gamma0;
    double residual = 0.0;  // value of the defining equation at zeta (Gamma1 only)
    int iterations = 0;
};

namespace detail {

/// int c/|x| nu(dx)
inline double inverse_size_mass(const JumpLaw& law, double c) {
    double s = 0.0;
    for (const auto& a : law.atoms()) s += a.p * c / l1(a.x);
    return s;
}

/// int c/(z+|x|) nu(dx) - 1 + (c/z)(1 - nu_bar), for z > 0.
inline double zeta_equation(const JumpLaw& law, double c, double z) {
    double s = 0.0;
    for (const auto& a : law.atoms()) s += a.p * c / (z + l1(a.x));
    const double miss = law.no_jump_probability();
    return s - 1.0 + (miss > 0.0 ? c / z * miss : 0.0);
}

}  // namespace detail

inline GammaClass classify_gamma(const NodeCharacteristics& node, double c) {
    if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("classify_gamma needs positive wealth");
    if (!node.is_jump() || node.law.total_mass() == 0.0) return GammaClass::gamma0;
    // Exact comparison: a node exactly on the boundary is Gamma2, which is
    // also the limit of the Gamma1 root as the sum approaches one.
    if (node.law.total_mass() == 1.0 && detail::inverse_size_mass(node.law, c) <= 1.0) return GammaClass::gamma2;
    return GammaClass::gamma1;
}

/// Root of the zeta equation on (0, c) by bisection to full double precision.
inline ZetaSolution solve_zeta(const NodeCharacteristics& node, double c) {
    ZetaSolution out;
    out.gamma = classify_gamma(node, c);
    if (out.gamma == GammaClass::gamma0) {
        out.zeta = c;
        return out;
    }
    if (out.gamma == GammaClass::gamma2) return out;

    const JumpLaw& law = node.law;
    const double at_c = detail::zeta_equation(law, c, c);
    if (at_c > 1e-12) throw ConvergenceError("zeta equation does not change sign on (0, c)");

    constexpr int kMaxIterations = 200;
    double lo = 0.0, hi = c;
    double f_hi = at_c;
    int it = 0;
    for (; it < kMaxIterations; ++it) {
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi) break;
        const double f = detail::zeta_equation(law, c, mid);
        if (f > 0.0) {
            lo = mid;
        } else {
            hi = mid;
            f_hi = f;
        }
    }
    out.iterations = it;
    out.zeta = hi;
    out.residual = f_hi;
    if (lo > 0.0) {
        const double f_lo = detail::zeta_equation(law, c, lo);
        if (std::abs(f_lo) < std::abs(f_hi)) {
            out.zeta = lo;
            out.residual = f_lo;
        }
    }
    return out;
}

/// Optimal investment proportions per unit of operational time at total wealth c.
inline Vector lambda_hat(const NodeCharacteristics& node, double c) {
    Vector out(node.dim(), 0.0);
    if (c == 0.0) return out;
    const double zeta = solve_zeta(node, c).zeta;
    for (std::size_t n = 0; n < out.size(); ++n) out[n] = node.b[n] / c;
    if (node.is_jump()) {
        for (const auto& a : node.law.atoms()) {
            const double w = a.p / ((zeta + l1(a.x)) * node.dG);
            for (std::size_t n = 0; n < out.size(); ++n) out[n] += w * a.x[n];
        }
    }
    return out;
}

/// Share of each asset's payoff received by each investor; zero columns stay zero.
inline Matrix payoff_split(const Matrix& l) {
    Matrix f(l.rows(), l.cols(), 0.0);
    for (std::size_t n = 0; n < l.cols(); ++n) {
        const double col = l.column_sum(n);
        if (col == 0.0) continue;
        for (std::size_t m = 0; m < l.rows(); ++m) f(m, n) = l(m, n) / col;
    }
    return f;
}

/// v(t, z) = z^m * lambda_hat(node, |z|).
inline StrategyRate lhat_rate() {
    return {"lambda_hat", [](const RateContext& ctx) {
                const double z = ctx.wealth[ctx.investor];
                if (z == 0.0) return Vector(ctx.node.dim(), 0.0);
                Vector v = lambda_hat(ctx.node, l1(ctx.wealth));
                for (double& x : v) x *= z;
                return v;
            }};
}

}  // namespace marketgame
