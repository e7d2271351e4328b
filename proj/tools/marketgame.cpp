// Command-line runner: simulate, audit, zeta, lambda, decompose, dominance.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "marketgame/diagnostics.hpp"
#include "marketgame/growth_optimal.hpp"
#include "marketgame/io.hpp"
#include "marketgame/wealth.hpp"

namespace fs = std::filesystem;
using namespace marketgame;
using io::json;

namespace {

constexpr const char* kColumnHelp = R"(Trajectory CSV columns (one row per recorded increment):
  t            time at the end of the increment
  Y_m          wealth of investor m after the increment
  r_m          relative wealth Y_m / W
  W            total wealth
  dG           increment of operational time G over the row (0 for lumps)
  lambda_m_n   investment of investor m in asset n per unit of G, divided by
               the investor's wealth before the increment (0 when dG = 0))";

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<std::string> out;
    std::optional<double> tol;
    std::optional<unsigned> threads;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", c.config, "experiment config (JSON)");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "base seed (overrides config)");
    cmd->add_option("--paths", c.paths, "number of Monte Carlo paths")->check(CLI::PositiveNumber);
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--tol", c.tol, "Picard tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("--threads", c.threads, "worker threads (fallback: MARKETGAME_THREADS, then 1)");
}

io::ExperimentConfig load(const Common& c) {
    const json j = io::read_json_file(c.config);
    io::ExperimentConfig cfg = io::experiment_from_json(j, fs::path(c.config).parent_path());
    if (c.seed) cfg.seed = cfg.audit.seed = *c.seed;
    if (c.paths) cfg.paths = cfg.audit.paths = *c.paths;
    if (c.out) cfg.out = *c.out;
    if (c.tol) cfg.audit.picard.tol = *c.tol;
    if (c.threads) {
        cfg.threads = *c.threads;
    } else if (const char* env = std::getenv("MARKETGAME_THREADS")) {
        cfg.threads = static_cast<unsigned>(std::max(1L, std::strtol(env, nullptr, 10)));
    }
    cfg.audit.threads = cfg.threads;
    return cfg;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << text;
}

json schema_json(std::size_t investors, std::size_t assets) {
    json cols = json::array();
    for (const auto& name : trajectory_columns(investors, assets)) {
        std::string desc;
        if (name == "t") desc = "time at the end of the increment";
        else if (name == "W") desc = "total wealth";
        else if (name == "dG") desc = "increment of operational time over the row";
        else if (name.rfind("Y_", 0) == 0) desc = "wealth of investor " + name.substr(2);
        else if (name.rfind("r_", 0) == 0) desc = "relative wealth of investor " + name.substr(2);
        else desc = "investment per unit of G over wealth before the increment (investor_asset)";
        cols.push_back({{"name", name}, {"description", desc}});
    }
    return {{"format", "RFC 4180 CSV, UTF-8, '.' decimal, shortest round-trip doubles"}, {"columns", cols}};
}

int run_simulate(const Common& c, const std::string& records) {
    const auto cfg = load(c);
    fs::create_directories(cfg.out);
    SimOptions so;
    so.picard = cfg.audit.picard;
    so.records = records == "full" ? RecordLevel::full : RecordLevel::nodes;
    std::vector<Trajectory> trajs(cfg.paths);
    parallel_for(cfg.paths, cfg.threads,
                 [&](std::size_t i) { trajs[i] = simulate(cfg.model, cfg.profile, derive_seed(cfg.seed, i), so); });
    json summary = json::array();
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        std::ostringstream csv;
        write_trajectory_csv(csv, trajs[i]);
        write_file(fs::path(cfg.out) / ("trajectory_" + std::to_string(i) + ".csv"), csv.str());
        const DominanceMetrics d = dominance_metrics(trajs[i]);
        json rates = json::array();
        for (double g : growth_rate_report(trajs[i])) rates.push_back(std::isfinite(g) ? json(g) : json(nullptr));
        summary.push_back({{"path", i},
                           {"seed", derive_seed(cfg.seed, i)},
                           {"final_wealth", trajs[i].final_wealth},
                           {"relative_wealth", relative(trajs[i].final_wealth)},
                           {"growth_rate", rates},
                           {"G", trajs[i].totals.G},
                           {"deviation_all", d.deviation_all},
                           {"deviation_rivals", d.deviation_rivals},
                           {"singular_all", d.singular_all},
                           {"singular_rivals", d.singular_rivals},
                           {"floor_crossings", trajs[i].totals.floor_crossings},
                           {"euler_overshoots", trajs[i].totals.euler_overshoots}});
    }
    write_file(fs::path(cfg.out) / "summary.json", io::dump(summary));
    write_file(fs::path(cfg.out) / "schema.json", io::dump(schema_json(cfg.profile.size(), cfg.model.assets())));
    std::cout << "wrote " << trajs.size() << " trajectories to " << cfg.out << "\n";
    return 0;
}

json dominance_json(const DominanceSummary& s, double min_fraction) {
    return {{"check", "dominance"},          {"paths", s.paths},
            {"threshold", s.threshold},      {"fraction_above", s.fraction_above},
            {"median_r1", s.median_r1},      {"min_r1", s.min_r1},
            {"mean_deviation_rivals", s.mean_deviation_rivals},
            {"mean_singular_rivals", s.mean_singular_rivals},
            {"pass", s.fraction_above >= min_fraction}};
}

int run_audit(const Common& c, const std::string& which) {
    const auto cfg = load(c);
    fs::create_directories(cfg.out);
    bool ok = true;
    auto emit = [&](const std::string& name, const json& report) {
        std::cout << report.dump() << "\n";
        write_file(fs::path(cfg.out) / ("audit_" + name + ".json"), io::dump(report));
        ok = ok && report.at("pass").get<bool>();
    };
    if (which == "submartingale" || which == "all") emit("submartingale", io::to_json(submartingale_audit(cfg.model, cfg.profile, cfg.audit)));
    if (which == "equilibrium" || which == "all") {
        const EquilibriumReport r = equilibrium_audit(cfg.model, cfg.profile.y0, cfg.audit);
        json j = io::to_json(r.audit);
        j["max_segment_change"] = r.max_segment_change;
        j["median_terminal_wealth"] = r.median_terminal_wealth;
        j["mean_nu_trunc_sq"] = r.mean_nu_trunc_sq;
        emit("equilibrium", j);
    }
    if (which == "dominance" || which == "all") emit("dominance", dominance_json(dominance_experiment(cfg.model, cfg.profile, cfg.audit), 0.95));
    return ok ? 0 : 1;
}

const NodeCharacteristics& pick_node(const MarketModel& m, std::size_t node, std::size_t state) {
    if (node >= m.nodes().size()) throw std::invalid_argument("node index out of range");
    if (state >= m.state_count()) throw std::invalid_argument("Markov state out of range");
    return m.characteristics(node, state);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulation and verification of the short-lived asset market game"};
    app.footer(kColumnHelp);
    app.require_subcommand(1);

    Common sim_c, audit_c, dom_c;
    std::string records = "nodes";
    auto* sim = app.add_subcommand("simulate", "simulate trajectories; writes trajectory_<i>.csv, summary.json, schema.json");
    add_common(sim, sim_c);
    sim->add_option("--records", records, "record every Euler step ('full') or one row per node ('nodes')")
        ->check(CLI::IsMember({"nodes", "full"}));
    sim->footer(kColumnHelp);

    std::string which = "all";
    auto* audit = app.add_subcommand("audit", "run audits; exit status 1 if any fails");
    audit->add_option("check", which, "submartingale | equilibrium | dominance | all")
        ->check(CLI::IsMember({"submartingale", "equilibrium", "dominance", "all"}));
    add_common(audit, audit_c);

    std::string model_file;
    std::size_t node = 0, state = 0;
    double c = 1.0;
    auto* zeta = app.add_subcommand("zeta", "solve for zeta at a model node and total wealth c");
    auto* lambda = app.add_subcommand("lambda", "lambda-hat at a model node and total wealth c");
    for (auto* cmd : {zeta, lambda}) {
        cmd->add_option("--model", model_file, "model file (JSON)")->required()->check(CLI::ExistingFile);
        cmd->add_option("--node", node, "node index (0-based, after expanding repeats)");
        cmd->add_option("--state", state, "Markov state");
        cmd->add_option("--c", c, "total wealth")->required();
    }

    std::string target_file, base_file;
    auto* dec = app.add_subcommand("decompose", "Lebesgue derivative of a target path with respect to a base path");
    dec->add_option("--target", target_file, "target path (JSON)")->required()->check(CLI::ExistingFile);
    dec->add_option("--base", base_file, "base path (JSON)")->required()->check(CLI::ExistingFile);

    double min_fraction = 0.95, threshold = 0.99;
    auto* dom = app.add_subcommand("dominance", "dominance experiment: share of paths where investor 1 ends above a threshold");
    add_common(dom, dom_c);
    dom->add_option("--threshold", threshold, "relative wealth threshold for investor 1");
    dom->add_option("--min-fraction", min_fraction, "required share of paths above the threshold");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) return run_simulate(sim_c, records);
        if (*audit) return run_audit(audit_c, which);
        if (*zeta || *lambda) {
            const MarketModel m = io::model_from_json(io::read_json_file(model_file));
            const NodeCharacteristics& ch = pick_node(m, node, state);
            if (*zeta) {
                std::cout << io::to_json(solve_zeta(ch, c)).dump() << "\n";
            } else {
                const Vector lam = lambda_hat(ch, c);
                const double zeta_v = c > 0.0 ? solve_zeta(ch, c).zeta : 0.0;
                const json out{{"lambda_hat", lam}, {"invested", c * l1(lam) * (ch.is_jump() ? ch.dG : 1.0)},
                               {"zeta", zeta_v}, {"per_unit", ch.is_jump() ? "node" : "G"}};
                std::cout << out.dump() << "\n";
            }
            return 0;
        }
        if (*dec) {
            const MonotonePath target = io::path_from_json(io::read_json_file(target_file), "target");
            const MonotonePath base = io::path_from_json(io::read_json_file(base_file), "base");
            const PathDecomposition d = lebesgue_derivative(target, base);
            json pieces = json::array();
            for (const auto& p : d.singular.pieces()) pieces.push_back({p.from, p.to});
            const json out{{"times", d.derivative.times()},
                           {"xi_at_point", d.derivative.at_point()},
                           {"xi_on_cell", d.derivative.on_cell()},
                           {"singular", pieces},
                           {"reconstruction_error", max_abs_difference(reconstruct(d, base, target), target)}};
            std::cout << io::dump(out);
            return 0;
        }
        if (*dom) {
            const auto cfg = load(dom_c);
            const json report = dominance_json(dominance_experiment(cfg.model, cfg.profile, cfg.audit, threshold), min_fraction);
            std::cout << report.dump() << "\n";
            return report["pass"].get<bool>() ? 0 : 1;
        }
    } catch (const io::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
