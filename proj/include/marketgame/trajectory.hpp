#pragma once

#include <cstddef>
#include <vector>

#include "marketgame/types.hpp"

namespace marketgame {

enum class StepKind { start, segment, jump, lump };

/// One recorded increment of the wealth equation. wealth_before is the left
/// limit the strategies saw; investment holds the amounts spent per investor
/// and asset over the increment (not per unit G).
struct StepRecord {
    StepKind kind = StepKind::start;
    double t = 0.0;
    double dG = 0.0;
    std::size_t node = 0;
    Vector wealth_before;
    Vector wealth;
    Matrix investment;
};

/// Running totals along one trajectory. Investor 1 is the tested investor;
/// "rivals" are investors 2..M treated as one representative investor.
struct Accumulators {
    double G = 0.0;
    double dev_all = 0.0;     // int |lambda^1 - lambda_bar|^2 dG
    double dev_rivals = 0.0;  // int |lambda^1 - lambda_tilde|^2 dG
    Vector singular;          // Lambda^(s),m per investor
    double singular_all = 0.0;
    double singular_rivals = 0.0;
    double nu_trunc_sq = 0.0;  // (1 ^ |x|^2) * nu up to now
    std::size_t floor_crossings = 0;
    std::size_t euler_overshoots = 0;
};

struct Trajectory {
    std::vector<StepRecord> records;
    Vector final_wealth;
    std::vector<char> bankrupt;
    Accumulators totals;
    double t_end = 0.0;
    double payoff_total = 0.0;  // |X_T|
};

inline double total(std::span<const double> y) { return l1(y); }

inline Vector relative(std::span<const double> y) {
    const double w = l1(y);
    Vector r(y.size(), 0.0);
    if (w > 0.0)
        for (std::size_t m = 0; m < y.size(); ++m) r[m] = y[m] / w;
    return r;
}

}  // namespace marketgame
