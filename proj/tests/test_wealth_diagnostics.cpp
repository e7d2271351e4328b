#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "marketgame/diagnostics.hpp"
#include "marketgame/wealth.hpp"
#include "oracles.hpp"
#include "test_models.hpp"

using namespace marketgame;
using namespace testing_models;
using Catch::Approx;

namespace {

Matrix column(std::initializer_list<double> v) {
    Matrix l(v.size(), 1, 0.0);
    std::size_t m = 0;
    for (double x : v) l(m++, 0) = x;
    return l;
}

SimOptions full_records(double dt = 1e-3) {
    SimOptions o;
    o.records = RecordLevel::full;
    o.picard.dt = dt;
    return o;
}

/// Largest deviation of the lambda-hat investor from sqrt(4 + 2t) - 1 against a cash-only rival.
double benchmark_error(double dt) {
    const auto tr = simulate(linear({1.0}, 2.0), pair(builtin::cash_only(), lhat_rate()), 1, full_records(dt));
    double err = 0.0;
    for (const auto& r : tr.records) err = std::max(err, std::abs(r.wealth[1] - (std::sqrt(4.0 + 2.0 * r.t) - 1.0)));
    return err;
}

MonotonePath scaled(const MonotonePath& p, double k) {
    std::vector<PathNode> nodes;
    for (auto n : p.nodes()) {
        for (double& x : n.left) x *= k;
        for (double& x : n.right) x *= k;
        for (double& x : n.slope_after) x *= k;
        nodes.push_back(std::move(n));
    }
    return MonotonePath(p.dim(), std::move(nodes));
}

const std::vector<char> kNoneFrozen(2, 0);

}  // namespace

TEST_CASE("discrete_step examples", "[wealth]") {
    CHECK(discrete_step(Vector{1.0, 2.0}, column({0.5, 1.5}), Vector{4.0}) == Vector{1.5, 3.5});
    CHECK(discrete_step(Vector{1.0, 2.0}, column({0.0, 0.0}), Vector{4.0}) == Vector{1.0, 2.0});
    CHECK(discrete_step(Vector{1.0}, column({1.0}), Vector{4.0}) == Vector{4.0});
    const auto bad = [] { return discrete_step(Vector{1.0, 2.0}, column({1.5, 0.0}), Vector{4.0}); };
    CHECK_THROWS_AS(bad(), BudgetViolation);
    CHECK_THROWS_AS(discrete_step(Vector{1.0}, column({-0.1}), Vector{4.0}), std::invalid_argument);
}

TEST_CASE("discrete_step matches the column-wise oracle and the accounting identity", "[wealth][fuzz]") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 2000; ++k) {
        const std::size_t M = 1 + k % 4, N = 1 + k % 3;
        Vector y(M), a(N);
        Matrix l(M, N, 0.0);
        std::vector<std::vector<double>> lo(M, std::vector<double>(N, 0.0));
        for (std::size_t m = 0; m < M; ++m) {
            y[m] = 0.1 + 5 * u(rng);
            double budget = y[m] * u(rng);
            for (std::size_t n = 0; n < N; ++n) {
                const double x = u(rng) < 0.3 ? 0.0 : budget * u(rng);
                budget -= x;
                l(m, n) = lo[m][n] = x;
            }
        }
        for (auto& x : a) x = u(rng) < 0.2 ? 0.0 : 3 * u(rng);
        const Vector got = discrete_step(y, l, a);
        const auto want = oracle::market_step(y, lo, a);
        double paid = 0.0, spent = 0.0;
        for (std::size_t n = 0; n < N; ++n)
            if (l.column_sum(n) > 0.0) paid += a[n];
        for (double x : l.data()) spent += x;
        for (std::size_t m = 0; m < M; ++m) CHECK(got[m] == Approx(want[m]).epsilon(1e-14).margin(1e-15));
        CHECK(l1(got) - l1(y) == Approx(paid - spent).margin(1e-13));
    }
}

TEST_CASE("jump node steps", "[wealth]") {
    SECTION("Gamma2 deterministic jumps: W goes 1, 4, 4, ...") {
        const auto tr = simulate(iid_jumps(10, {{{4.0, 0.0}, 1.0}}), pair(lhat_rate(), lhat_rate(), {0.25, 0.75}), 3,
                                 full_records());
        REQUIRE(tr.records.size() == 11);
        CHECK(l1(tr.records[0].wealth) == 1.0);
        for (std::size_t i = 1; i < tr.records.size(); ++i) CHECK(l1(tr.records[i].wealth) == 4.0);
        CHECK(tr.final_wealth == Vector{1.0, 3.0});
    }
    SECTION("point mass with zeta = 1 keeps W = 2") {
        const auto tr = simulate(iid_jumps(1, {{{1.0, 0.0}, 1.0}}), pair(lhat_rate(), lhat_rate()), 3);
        CHECK(l1(tr.final_wealth) == Approx(2.0).epsilon(1e-15));
    }
    SECTION("singular lump is a pure loss") {
        SingularPlan plan{{{0.5, {0.3, 0.0}, false, 0.0, 1}}};
        const StrategyProfile prof({plain(builtin::cash_only()), {builtin::cash_only(), plan}}, {1.0, 1.0});
        const auto tr = simulate(iid_jumps(1, {{{1.0, 0.0}, 1.0}}), prof, 3, full_records());
        REQUIRE(tr.records.size() == 3);
        CHECK(tr.records[1].kind == StepKind::lump);
        CHECK(tr.records[1].wealth == Vector{1.0, 0.7});
        CHECK(tr.totals.singular[1] == Approx(0.3));
        CHECK(tr.totals.singular_rivals == Approx(0.3));
        CHECK(tr.totals.singular_all == Approx(0.15));
    }
}

TEST_CASE("budget violations are errors", "[wealth]") {
    const StrategyRate greedy{"greedy", [](const RateContext& c) {
                                  Vector v(c.node.dim(), 0.0);
                                  v[0] = 2.0 * c.wealth[c.investor];
                                  return v;
                              }};
    const auto model = iid_jumps(2, {{{1.0, 0.0}, 1.0}});
    CHECK_THROWS_AS(simulate(model, pair(greedy, lhat_rate()), 1), BudgetViolation);

    SingularPlan too_big{{{0.5, {5.0, 0.0}, false, 0.0, 1}}};
    const StrategyProfile prof({plain(builtin::cash_only()), {builtin::cash_only(), too_big}}, {1.0, 1.0});
    CHECK_THROWS_AS(simulate(model, prof, 1), BudgetViolation);

    SingularPlan at_jump{{{1.0, {0.1, 0.0}, false, 0.0, 1}}};
    CHECK_THROWS_AS(simulate(model, StrategyProfile({plain(lhat_rate()), {lhat_rate(), at_jump}}, {1.0, 1.0}), 1),
                    std::invalid_argument);

    SingularPlan late{{{7.5, {0.1, 0.0}, false, 0.0, 1}}};
    const auto tr = simulate(model, StrategyProfile({plain(lhat_rate()), {lhat_rate(), late}}, {1.0, 1.0}), 1);
    CHECK(tr.totals.singular[1] == 0.0);
}

TEST_CASE("lump inside a segment splits it", "[wealth]") {
    SingularPlan half{{{1.0, {0.5}, true, 0.0, 1}}};
    const StrategyProfile prof({plain(lhat_rate()), {builtin::cash_only(), half}}, {1.0, 1.0});
    const auto tr = simulate(linear({1.0}, 2.0), prof, 1, full_records());
    bool seen = false;
    for (const auto& r : tr.records) {
        if (r.kind != StepKind::lump) continue;
        seen = true;
        CHECK(r.t == 1.0);
        CHECK(r.wealth[1] == 0.5 * r.wealth_before[1]);
        CHECK(r.wealth[0] == r.wealth_before[0]);
    }
    CHECK(seen);
}

TEST_CASE("Picard solver closed-form benchmark", "[picard]") {
    const double e1 = benchmark_error(1e-3);
    const double e2 = benchmark_error(5e-4);
    CHECK(e1 <= 1e-4);
    CHECK(e1 / e2 >= 1.8);

    const auto rk = oracle::rk4([](double, const std::vector<double>& y) { return std::vector<double>{1.0 / (1.0 + y[0])}; },
                                {1.0}, 0.0, 2.0, 4000);
    const auto tr = simulate(linear({1.0}, 2.0), pair(builtin::cash_only(), lhat_rate()), 1, full_records(1e-3));
    CHECK(rk[0] == Approx(std::sqrt(8.0) - 1.0).epsilon(1e-12));
    CHECK(std::abs(tr.final_wealth[1] - rk[0]) <= 1e-4);
    CHECK(tr.final_wealth[0] == 1.0);
}

TEST_CASE("continuous markets: trivial dynamics", "[picard]") {
    SECTION("all lambda-hat keeps W constant") {
        const auto tr = simulate(linear({2.0, 1.0}, 3.0), pair(lhat_rate(), lhat_rate(), {0.3, 1.7}), 1, full_records());
        for (const auto& r : tr.records) CHECK(std::abs(l1(r.wealth) - 2.0) <= 1e-12 * 2.0);
    }
    SECTION("all cash-only keeps Y constant") {
        const auto tr = simulate(linear({1.0}, 2.0), pair(builtin::cash_only(), builtin::cash_only()), 1);
        CHECK(tr.final_wealth == Vector{1.0, 1.0});
    }
}

TEST_CASE("Picard window splitting handles strongly coupled segments", "[picard]") {
    // fast drift relative to wealth forces several window halvings
    const auto model = linear({400.0}, 1.0);
    SimOptions o;
    o.picard.dt = 1e-3;
    SimState s;
    s.Y = {0.01, 0.01};
    s.frozen.assign(2, 0);
    s.below_floor.assign(2, 0);
    s.acc.singular.assign(2, 0.0);
    picard_solve_segment(s, pair(builtin::fixed_proportions({0.5}), lhat_rate()), model, 0, 0, 0.0, 1.0, o, nullptr);
    CHECK(s.picard.splits > 0);
    CHECK(s.picard.max_residual <= o.picard.tol * std::max(1.0, l1(s.Y)) * 4);
    CHECK(l1(s.Y) > 0.02);
}

TEST_CASE("simulate invariants", "[wealth]") {
    const auto model = mixed(20, {1.0, 0.5}, {{{1.0, 0.0}, 0.5}, {{0.0, 3.0}, 0.3}});
    SECTION("lambda-hat against lambda-hat keeps r constant") {
        const auto tr = simulate(model, pair(lhat_rate(), lhat_rate(), {1.0, 3.0}), 5, full_records(1e-2));
        for (const auto& r : tr.records) CHECK(std::abs(relative(r.wealth)[0] - 0.25) <= 1e-12);
    }
    SECTION("wealth never exceeds initial wealth plus payoffs") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto tr = simulate(model, pair(lhat_rate(), builtin::payoff_proportional()), seed);
            CHECK(l1(tr.final_wealth) <= 2.0 + tr.payoff_total + 1e-12);
            CHECK(tr.final_wealth[0] > 0.0);
        }
    }
    SECTION("determinism") {
        const auto prof = pair(lhat_rate(), builtin::fixed_proportions({0.4, 0.4}));
        auto csv = [&](std::uint64_t seed) {
            std::ostringstream os;
            write_trajectory_csv(os, simulate(model, prof, seed, full_records(1e-2)));
            return os.str();
        };
        CHECK(csv(9) == csv(9));
        CHECK(csv(9) != csv(10));
    }
}

TEST_CASE("bankruptcy freezes wealth and investment", "[wealth]") {
    // asset 1 never pays; the fixed investor puts everything into it at t = 1
    const auto model = iid_jumps(3, {{{0.0, 2.0}, 1.0}});
    const auto tr = simulate(model, pair(lhat_rate(), builtin::fixed_proportions({1.0, 0.0})), 1, full_records());
    CHECK(tr.bankrupt[1]);
    CHECK(tr.final_wealth[1] == 0.0);
    const auto cum = realized_cumulative(tr, 1);
    CHECK(cum.L.value(1.0) == Vector{1.0, 0.0});
    CHECK(cum.L.value(3.0) == Vector{1.0, 0.0});
    CHECK(tr.final_wealth[0] > 0.0);
}

TEST_CASE("realized_cumulative examples", "[strategy]") {
    SECTION("cash only") {
        const auto tr = simulate(two_atom(5), pair(lhat_rate(), builtin::cash_only()), 2, full_records());
        const auto cum = realized_cumulative(tr, 1);
        CHECK(cum.L.value(5.0) == Vector{0.0, 0.0});
        CHECK(cum.singular_mass == 0.0);
        CHECK(cum.singular_support.empty());
    }
    SECTION("single lump where G is flat") {
        SingularPlan plan{{{0.5, {0.5}, false, 0.0, 1}}};
        const StrategyProfile prof({plain(lhat_rate()), {lhat_rate(), plan}}, {1.0, 1.0});
        const auto tr = simulate(iid_jumps(2, {{{1.0}, 1.0}}), prof, 2, full_records());
        const auto cum = realized_cumulative(tr, 1);
        CHECK(cum.singular_mass == 0.5);
        CHECK(cum.singular_support.contains(0.5));
        CHECK_FALSE(cum.singular_support.contains(1.0));
        CHECK(cum.L.jump(0.5) == Vector{0.5});
        CHECK(cum.G.jump(0.5) == Vector{0.0});
        // absolutely continuous part at the jump nodes is the lambda-hat amount
        CHECK(cum.rate[0].point_value(1.0) == Approx(tr.records[2].investment(1, 0) / tr.records[2].dG));
    }
    SECTION("lambda-hat against cash in X_t = t") {
        const auto tr = simulate(linear({1.0}, 2.0), pair(builtin::cash_only(), lhat_rate()), 1, full_records());
        const auto cum = realized_cumulative(tr, 1);
        double sum = 0.0;
        for (const auto& r : tr.records)
            if (r.kind == StepKind::segment) sum += r.wealth_before[1] / l1(r.wealth_before) * r.dG;
        CHECK(cum.L.scalar(2.0) == Approx(sum).epsilon(1e-12));
        CHECK(cum.L.scalar(2.0) == Approx(2.0 - (std::sqrt(8.0) - 2.0)).margin(1e-4));
        CHECK(cum.singular_support.empty());
        CHECK(max_abs_difference(integrate_path(cum.rate[0], cum.G), cum.L) <= 1e-12);
    }
}

TEST_CASE("investment bookkeeping is invariant under H = 2G", "[wealth]") {
    const auto model = mixed(5, {1.0, 2.0}, {{{1.0, 0.0}, 0.5}, {{0.0, 3.0}, 0.5}});
    const auto tr = simulate(model, pair(lhat_rate(), builtin::fixed_proportions({0.3, 0.3})), 4, full_records(1e-2));
    for (std::size_t m = 0; m < 2; ++m) {
        const auto cum = realized_cumulative(tr, m);
        const MonotonePath H = scaled(cum.G, 2.0);
        for (std::size_t n = 0; n < 2; ++n) {
            const MonotonePath Ln = cum.L.component(n);
            const auto dg = lebesgue_derivative(Ln, cum.G);
            const auto dh = lebesgue_derivative(Ln, H);
            for (std::size_t i = 0; i < dg.derivative.at_point().size(); ++i)
                CHECK(dh.derivative.at_point()[i] == Approx(dg.derivative.at_point()[i] / 2).epsilon(1e-15));
            for (std::size_t i = 0; i < dg.derivative.on_cell().size(); ++i)
                CHECK(dh.derivative.on_cell()[i] == Approx(dg.derivative.on_cell()[i] / 2).epsilon(1e-15));
            const double scale = std::max(1.0, Ln.scalar(Ln.end_time()));
            CHECK(max_abs_difference(integrate_path(dh.derivative, H), Ln) <= 1e-12 * scale);
            CHECK(dh.singular.empty());
        }
    }
}

TEST_CASE("exact_log_drift worked examples", "[drift]") {
    SECTION("Gamma2 all-in against cash") {
        const auto model = iid_jumps(1, {{{4.0, 0.0}, 1.0}});
        const Vector z{0.5, 0.5};
        const auto d = exact_log_drift(model, pair(lhat_rate(), builtin::cash_only()), 1.0, 0, 0, z, kNoneFrozen);
        CHECK(d.jump);
        CHECK(d.r == 0.5);
        CHECK(d.exact_drift == Approx(std::log(16.0 / 9.0)).epsilon(1e-15));
        CHECK(d.h1 == 0.0);
        CHECK(d.lower_bound == Approx(1.0 / 16.0).epsilon(1e-15));
    }
    SECTION("lambda-hat against itself") {
        const auto model = two_atom(1);
        const auto d = exact_log_drift(model, pair(lhat_rate(), lhat_rate()), 1.0, 0, 0, Vector{0.7, 1.9}, kNoneFrozen);
        CHECK(std::abs(d.exact_drift) <= 1e-15);
        CHECK(d.lower_bound <= 1e-30);
    }
    SECTION("two-atom node against fixed proportions") {
        const auto model = iid_jumps(1, {{{1.0}, 0.5}, {{3.0}, 0.5}});
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int k = 0; k < 500; ++k) {
            const Vector z{0.05 + 4 * u(rng), 0.05 + 4 * u(rng)};
            const auto d = exact_log_drift(model, pair(lhat_rate(), builtin::fixed_proportions({u(rng)})), 1.0, 0, 0,
                                           z, kNoneFrozen);
            CHECK(d.exact_drift >= d.lower_bound - 1e-10);
            CHECK(d.exact_drift == d.h1 + d.h2);
        }
    }
}

TEST_CASE("segment drift matches the closed-form linearization", "[drift][fuzz]") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 500; ++k) {
        const Vector b{u(rng), u(rng) < 0.3 ? 0.0 : u(rng), u(rng)};
        const auto model = linear(b, 1.0);
        const auto& c = model.characteristics(0, 0);
        const Vector z{0.1 + u(rng), 0.1 + u(rng), 0.1 + u(rng)};
        const Vector pi{u(rng) / 3, u(rng) < 0.3 ? 0.0 : u(rng) / 3, u(rng) / 3};
        const StrategyProfile prof({plain(lhat_rate()), plain(builtin::fixed_proportions(pi)), plain(builtin::cash_only())}, z);
        const auto d = exact_log_drift(model, prof, 0.0, 0, 0, z, std::vector<char>(3, 0));
        const double w = l1(z);
        const double r = z[0] / w;
        const Vector lam = lambda_hat(c, w);
        Vector tilde(3);
        for (std::size_t n = 0; n < 3; ++n) tilde[n] = z[1] * pi[n] / (z[1] + z[2]);
        CHECK(d.exact_drift == Approx(oracle::segment_drift_formula(lam, tilde, c.b, r, w)).epsilon(1e-12).margin(1e-14));
        CHECK(d.exact_drift >= d.lower_bound - 1e-12);
    }
}

TEST_CASE("two-step enumeration agrees with the tower property", "[drift]") {
    const auto model = two_atom(2);
    const auto prof = pair(lhat_rate(), builtin::fixed_proportions({0.5, 0.2}), {1.0, 2.0});
    const Vector z0{1.0, 2.0};
    auto step = [&](std::size_t node, const Vector& z, const Outcome& o) {
        const auto& c = model.characteristics(node, 0);
        const Matrix l = jump_investment(rate_matrix(prof, model.node(node).t, c, z, kNoneFrozen), c.dG, z);
        return discrete_step(z, l, o.jump ? *o.jump : Vector(2, 0.0));
    };
    const double dG = model.characteristics(0, 0).dG;
    const double ln_r0 = std::log(z0[0] / l1(z0));
    double direct = 0.0, via_drift = exact_log_drift(model, prof, 1.0, 0, 0, z0, kNoneFrozen).exact_drift * dG;
    for (const auto& o1 : enumerate_outcomes(model, 0, 0)) {
        const Vector z1 = step(0, z0, o1);
        via_drift += o1.probability * exact_log_drift(model, prof, 2.0, 1, 0, z1, kNoneFrozen).exact_drift * dG;
        for (const auto& o2 : enumerate_outcomes(model, 1, 0)) {
            const Vector z2 = step(1, z1, o2);
            direct += o1.probability * o2.probability * (std::log(z2[0] / l1(z2)) - ln_r0);
        }
    }
    CHECK(direct == Approx(via_drift).epsilon(1e-13));
    CHECK(direct > 0.0);
}

TEST_CASE("submartingale audit", "[audit]") {
    AuditOptions opt;
    opt.paths = 200;
    opt.seed = 5;
    const auto model = two_atom(50);
    SECTION("lambda-hat against cash passes") {
        const auto rep = submartingale_audit(model, pair(lhat_rate(), builtin::cash_only()), opt);
        CHECK(rep.pass);
        CHECK(rep.nodes_tested == 200 * 50);
        CHECK(rep.worst_violation < 0.0);
    }
    SECTION("lambda-hat against itself has zero drift") {
        const auto rep = submartingale_audit(model, pair(lhat_rate(), lhat_rate(), {1.0, 5.0}), opt);
        CHECK(rep.pass);
        CHECK(std::abs(rep.worst_violation) <= 1e-14);
    }
    SECTION("a wrong strategy as the tested investor is reported") {
        const auto rep = submartingale_audit(model, pair(builtin::fixed_proportions({0.5, 0.2}), lhat_rate()), opt);
        CHECK_FALSE(rep.pass);
        CHECK(rep.worst_violation > 1e-3);
    }
    SECTION("thread count does not change the report") {
        const auto prof = pair(lhat_rate(), builtin::payoff_proportional());
        const auto a = submartingale_audit(model, prof, opt);
        opt.threads = 3;
        const auto b = submartingale_audit(model, prof, opt);
        CHECK(a.worst_violation == b.worst_violation);
        CHECK(a.worst_bound_violation == b.worst_bound_violation);
        CHECK(a.nodes_tested == b.nodes_tested);
    }
}

TEST_CASE("equilibrium audit", "[audit]") {
    AuditOptions opt;
    opt.paths = 100;
    opt.seed = 9;
    SECTION("Gamma2 deterministic market") {
        const auto rep = equilibrium_audit(iid_jumps(10, {{{4.0, 0.0}, 1.0}}), {0.5, 0.5}, opt);
        CHECK(rep.audit.pass);
        CHECK(rep.median_terminal_wealth == 4.0);
    }
    SECTION("two-atom market") {
        const auto rep = equilibrium_audit(two_atom(30), {1.0, 2.0, 0.5}, opt);
        CHECK(rep.audit.pass);
        CHECK(rep.audit.nodes_tested == 100 * 30);
        CHECK(rep.mean_nu_trunc_sq == Approx(30.0));
    }
    SECTION("continuous market") {
        opt.paths = 2;
        const auto rep = equilibrium_audit(linear({1.0, 1.0}, 2.0), {1.0, 2.0}, opt);
        CHECK(rep.audit.pass);
        CHECK(rep.max_segment_change <= opt.picard.tol * 3.0);
        CHECK(rep.median_terminal_wealth == Approx(3.0).epsilon(1e-12));
    }
}

TEST_CASE("dominance metrics and growth rates", "[audit]") {
    const auto model = two_atom(50);
    const auto same = simulate(model, pair(lhat_rate(), lhat_rate()), 3);
    const auto dm = dominance_metrics(same);
    CHECK(dm.deviation_rivals <= 1e-28);
    CHECK(dm.r1 == Approx(0.5).epsilon(1e-12));
    const auto g = growth_rate_report(same);
    CHECK(g[0] == Approx(g[1]).epsilon(1e-12));

    const auto gamma2 = simulate(iid_jumps(10, {{{4.0, 0.0}, 1.0}}), pair(lhat_rate(), lhat_rate(), {0.5, 0.5}), 1);
    CHECK(l1(gamma2.final_wealth) == 4.0);
    CHECK(growth_rate_report(gamma2)[0] == Approx(std::log(2.0) / 10.0));

    AuditOptions opt;
    opt.paths = 50;
    opt.seed = 1;
    const auto vs_fixed = dominance_experiment(model, pair(lhat_rate(), builtin::fixed_proportions({0.5, 0.2})), opt);
    CHECK(vs_fixed.mean_deviation_rivals > 0.0);
    CHECK(vs_fixed.median_r1 > 0.5);
    CHECK(median_of({3.0, 1.0, 2.0, 10.0}) == 2.5);
}

TEST_CASE("gibbs_gap", "[gibbs]") {
    CHECK(gibbs_gap(Vector{0.3, 0.2}, Vector{0.3, 0.2}) == 0.0);
    CHECK(gibbs_gap(Vector{0.5, 0.0}, Vector{0.25, 0.25}) == Approx(0.5 * std::log(2.0) - 0.03125).epsilon(1e-15));
    CHECK(gibbs_gap(Vector{0.5, 0.0}, Vector{0.25, 0.25}) == Approx(0.31532).margin(1e-5));
    CHECK_THROWS_AS(gibbs_gap(Vector{0.5, 0.1}, Vector{0.5, 0.0}), std::domain_error);
    CHECK_THROWS_AS(gibbs_gap(Vector{0.8, 0.3}, Vector{0.5, 0.1}), std::domain_error);
    // unit mass overshooting by one ulp after normalization
    CHECK(gibbs_gap(Vector{0.5, std::nextafter(0.5, 1.0)}, Vector{0.5, 0.5}) == Approx(0.0).margin(1e-15));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 10000; ++k) {
        Vector a(3), b(3);
        for (auto& x : b) x = u(rng);
        for (std::size_t n = 0; n < 3; ++n) a[n] = u(rng) < 0.3 ? 0.0 : u(rng);
        const double sa = l1(a) * (1 + u(rng)), sb = l1(b) * (1 + u(rng));
        for (auto& x : a) x /= std::max(sa, 1e-300);
        for (auto& x : b) x /= sb;
        CHECK(gibbs_gap(a, b) >= -1e-12);
    }
}

TEST_CASE("trajectory CSV", "[io]") {
    const auto tr = simulate(iid_jumps(2, {{{4.0, 0.0}, 1.0}}), pair(lhat_rate(), builtin::cash_only(), {0.5, 0.5}), 1,
                             full_records());
    std::ostringstream os;
    write_trajectory_csv(os, tr);
    const std::string csv = os.str();
    const std::string header = "t,Y_1,Y_2,r_1,r_2,W,dG,lambda_1_1,lambda_1_2,lambda_2_1,lambda_2_2\r\n";
    CHECK(csv.rfind(header, 0) == 0);
    CHECK(csv.find("\n", header.size()) != std::string::npos);
    CHECK(csv.find("\r\n1,4,0.5,0.8888888888888888,0.1111111111111111,4.5,1,1,0,0,0\r\n") != std::string::npos);
    std::size_t lines = 0;
    for (char ch : csv) lines += ch == '\n';
    CHECK(lines == tr.records.size() + 1);

    std::mt19937_64 rng(1);
    for (int k = 0; k < 1000; ++k) {
        const double x = std::ldexp(static_cast<double>(rng() >> 11), static_cast<int>(rng() % 200) - 150);
        CHECK(std::strtod(format_double(x).c_str(), nullptr) == x);
    }
    CHECK(format_double(0.1) == "0.1");
}
