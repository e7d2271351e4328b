#pragma once

// JSON readers and writers for paths, models, profiles and experiment
// configs. Errors name the offending field, e.g. "nodes[2].atoms[0].p".

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "marketgame/diagnostics.hpp"
#include "marketgame/growth_optimal.hpp"
#include "marketgame/model.hpp"
#include "marketgame/paths.hpp"
#include "marketgame/strategy.hpp"

namespace marketgame::io {

using nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& where, const std::string& what) : std::runtime_error(where + ": " + what) {}
};

inline std::string join(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }
inline std::string index(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

/// Numbers may be JSON numbers or strings: "0.25" or rationals such as "1/3".
inline double read_number(const json& j, const std::string& where) {
    if (j.is_number()) return j.get<double>();
    if (!j.is_string()) throw ConfigError(where, "expected a number or a rational string");
    const std::string s = j.get<std::string>();
    auto parse = [&](const std::string& part) {
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(part.c_str(), &end);
        if (part.empty() || end != part.c_str() + part.size() || errno != 0)
            throw ConfigError(where, "cannot parse '" + s + "' as a number");
        return v;
    };
    const auto slash = s.find('/');
    if (slash == std::string::npos) return parse(s);
    const double den = parse(s.substr(slash + 1));
    if (den == 0.0) throw ConfigError(where, "zero denominator in '" + s + "'");
    return parse(s.substr(0, slash)) / den;
}

inline Vector read_vector(const json& j, const std::string& where) {
    if (j.is_number() || j.is_string()) return {read_number(j, where)};
    if (!j.is_array()) throw ConfigError(where, "expected an array of numbers");
    Vector v;
    for (std::size_t i = 0; i < j.size(); ++i) v.push_back(read_number(j[i], index(where, i)));
    return v;
}

inline std::string read_string(const json& j, const std::string& where) {
    if (!j.is_string()) throw ConfigError(where, "expected a string");
    return j.get<std::string>();
}

inline std::size_t read_count(const json& j, const std::string& where) {
    if (!j.is_number_integer() || (!j.is_number_unsigned() && j.get<std::int64_t>() < 0))
        throw ConfigError(where, "expected a non-negative integer");
    return j.get<std::size_t>();
}

inline bool read_bool(const json& j, const std::string& where) {
    if (!j.is_boolean()) throw ConfigError(where, "expected true or false");
    return j.get<bool>();
}

inline const json& require(const json& j, const std::string& key, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(join(where, key), "missing required field");
    return *it;
}

inline json read_json_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError(p.string(), "cannot open file");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(p.string(), e.what());
    }
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---- paths

inline MonotonePath path_from_json(const json& j, const std::string& where = "path") {
    if (!j.is_array() || j.empty()) throw ConfigError(where, "expected a non-empty array of nodes");
    std::vector<PathNode> nodes;
    std::size_t dim = 0;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string w = index(where, i);
        PathNode n;
        n.t = read_number(require(j[i], "t", w), join(w, "t"));
        n.left = read_vector(require(j[i], "left", w), join(w, "left"));
        n.right = read_vector(require(j[i], "right", w), join(w, "right"));
        n.slope_after = j[i].contains("slope_after") ? read_vector(j[i]["slope_after"], join(w, "slope_after"))
                                                     : Vector(n.left.size(), 0.0);
        if (i == 0) dim = n.left.size();
        nodes.push_back(std::move(n));
    }
    try {
        return MonotonePath(dim, std::move(nodes));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where, e.what());
    }
}

inline json to_json(const MonotonePath& p) {
    json out = json::array();
    for (const auto& n : p.nodes()) out.push_back({{"t", n.t}, {"left", n.left}, {"right", n.right}, {"slope_after", n.slope_after}});
    return out;
}

// ---- models

inline NodeCharacteristics characteristics_from_json(const json& j, std::size_t assets, const std::string& kind,
                                                     const std::string& where) {
    if (kind == "segment") {
        const Vector b = read_vector(require(j, "b", where), join(where, "b"));
        if (b.size() != assets) throw ConfigError(join(where, "b"), "expected " + std::to_string(assets) + " entries");
        try {
            return normalize_characteristics(b, {});
        } catch (const ModelError& e) {
            throw ConfigError(where, e.what());
        }
    }
    if (kind != "jump") throw ConfigError(join(where, "kind"), "expected 'segment' or 'jump'");
    const json& atoms = require(j, "atoms", where);
    if (!atoms.is_array()) throw ConfigError(join(where, "atoms"), "expected an array");
    std::vector<JumpAtom> law;
    for (std::size_t a = 0; a < atoms.size(); ++a) {
        const std::string w = index(join(where, "atoms"), a);
        JumpAtom atom{read_vector(require(atoms[a], "x", w), join(w, "x")), read_number(require(atoms[a], "p", w), join(w, "p"))};
        if (atom.x.size() != assets) throw ConfigError(join(w, "x"), "expected " + std::to_string(assets) + " entries");
        law.push_back(std::move(atom));
    }
    try {
        return normalize_characteristics(Vector(assets, 0.0), JumpLaw(std::move(law)));
    } catch (const ModelError& e) {
        throw ConfigError(where, e.what());
    }
}

inline MarketModel model_from_json(const json& j, const std::string& where = "model") {
    const std::size_t assets = read_count(require(j, "assets", where), join(where, "assets"));
    const double horizon = read_number(require(j, "horizon", where), join(where, "horizon"));
    MarkovChain chain;
    if (j.contains("markov")) {
        const std::string w = join(where, "markov");
        const json& mk = j["markov"];
        chain.initial = mk.contains("initial") ? read_count(mk["initial"], join(w, "initial")) : 0;
        const json& tr = require(mk, "transition", w);
        if (!tr.is_array()) throw ConfigError(join(w, "transition"), "expected an array of rows");
        for (std::size_t r = 0; r < tr.size(); ++r) chain.transition.push_back(read_vector(tr[r], index(join(w, "transition"), r)));
    }
    const json& nodes = require(j, "nodes", where);
    if (!nodes.is_array()) throw ConfigError(join(where, "nodes"), "expected an array");
    std::vector<ModelNode> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string w = index(join(where, "nodes"), i);
        const json& nj = nodes[i];
        const std::string kind = read_string(require(nj, "kind", w), join(w, "kind"));
        ModelNode node;
        node.t = read_number(require(nj, "t", w), join(w, "t"));
        node.t_end = kind == "segment" ? read_number(require(nj, "t_end", w), join(w, "t_end")) : node.t;
        if (nj.contains("by_state")) {
            const json& bs = nj["by_state"];
            if (!bs.is_array()) throw ConfigError(join(w, "by_state"), "expected an array");
            for (std::size_t s = 0; s < bs.size(); ++s)
                node.by_state.push_back(characteristics_from_json(bs[s], assets, kind, index(join(w, "by_state"), s)));
        } else {
            node.by_state.push_back(characteristics_from_json(nj, assets, kind, w));
        }
        std::size_t count = 1;
        double every = 0.0;
        if (nj.contains("repeat")) {
            const std::string rw = join(w, "repeat");
            count = read_count(require(nj["repeat"], "count", rw), join(rw, "count"));
            every = read_number(require(nj["repeat"], "every", rw), join(rw, "every"));
            if (count < 1 || !(every > 0.0)) throw ConfigError(rw, "count must be >= 1 and every > 0");
        }
        for (std::size_t k = 0; k < count; ++k) {
            ModelNode copy = node;
            copy.t += static_cast<double>(k) * every;
            copy.t_end += static_cast<double>(k) * every;
            out.push_back(std::move(copy));
        }
    }
    // Repeats interleave; at equal times a jump comes before a segment starting there.
    std::stable_sort(out.begin(), out.end(), [](const ModelNode& a, const ModelNode& b) {
        if (a.t != b.t) return a.t < b.t;
        return a.is_jump() && !b.is_jump();
    });
    try {
        return MarketModel(assets, horizon, std::move(out), std::move(chain));
    } catch (const ModelError& e) {
        throw ConfigError(where, e.what());
    }
}

// ---- strategies

inline StrategyRate rate_from_json(const json& j, const std::string& where) {
    const std::string type = read_string(require(j, "type", where), join(where, "type"));
    if (type == "lambda_hat") return lhat_rate();
    const Vector params = j.contains("params") ? read_vector(j["params"], join(where, "params")) : Vector{};
    try {
        return make_builtin(type, params);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where, e.what());
    }
}

inline SingularPlan singular_from_json(const json& j, const std::string& where) {
    SingularPlan plan;
    if (!j.is_array()) throw ConfigError(where, "expected an array of lumps");
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string w = index(where, i);
        SingularLump l;
        l.t = read_number(require(j[i], "t", w), join(w, "t"));
        l.amount = read_vector(require(j[i], "lump", w), join(w, "lump"));
        if (j[i].contains("fraction")) l.fraction = read_bool(j[i]["fraction"], join(w, "fraction"));
        if (j[i].contains("every")) l.every = read_number(j[i]["every"], join(w, "every"));
        if (j[i].contains("count")) l.count = read_count(j[i]["count"], join(w, "count"));
        plan.lumps.push_back(std::move(l));
    }
    return plan;
}

inline StrategyProfile profile_from_json(const json& j, const std::string& where = "profile") {
    const Vector y0 = read_vector(require(j, "initial_wealth", where), join(where, "initial_wealth"));
    const json& inv = require(j, "investors", where);
    if (!inv.is_array()) throw ConfigError(join(where, "investors"), "expected an array");
    std::vector<InvestorStrategy> investors;
    for (std::size_t i = 0; i < inv.size(); ++i) {
        const std::string w = index(join(where, "investors"), i);
        InvestorStrategy s{rate_from_json(inv[i], w), {}};
        if (inv[i].contains("singular")) s.singular = singular_from_json(inv[i]["singular"], join(w, "singular"));
        investors.push_back(std::move(s));
    }
    try {
        return StrategyProfile(std::move(investors), y0);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where, e.what());
    }
}

// ---- experiments

struct ExperimentConfig {
    MarketModel model;
    StrategyProfile profile;
    std::uint64_t seed = 0;
    std::size_t paths = 1;
    std::string out = "out";
    std::vector<std::string> audits;
    AuditOptions audit;
    unsigned threads = 1;
};

/// `model` may be inline or a path relative to the config file's directory.
inline ExperimentConfig experiment_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
    ExperimentConfig cfg;
    const json& m = require(j, "model", "");
    if (m.is_string()) {
        const std::filesystem::path p = base_dir / m.get<std::string>();
        if (!std::filesystem::exists(p)) throw ConfigError("model", "file '" + p.string() + "' does not exist");
        cfg.model = model_from_json(read_json_file(p), "model");
    } else {
        cfg.model = model_from_json(m, "model");
    }
    if (j.contains("horizon")) {
        const double h = read_number(j["horizon"], "horizon");
        if (!(h >= 0.0) || h > cfg.model.horizon()) throw ConfigError("horizon", "must lie in [0, model horizon]");
        cfg.model = cfg.model.truncated(h);
    }
    const json& p = require(j, "profile", "");
    cfg.profile = profile_from_json(p.is_string() ? read_json_file(base_dir / p.get<std::string>()) : p, "profile");
    cfg.seed = read_count(require(j, "seed", ""), "seed");
    if (j.contains("paths")) {
        cfg.paths = read_count(j["paths"], "paths");
        if (cfg.paths == 0) throw ConfigError("paths", "expected a positive integer");
    }
    if (j.contains("out")) cfg.out = read_string(j["out"], "out");
    if (j.contains("audits")) {
        if (!j["audits"].is_array()) throw ConfigError("audits", "expected an array of names");
        for (std::size_t i = 0; i < j["audits"].size(); ++i) cfg.audits.push_back(read_string(j["audits"][i], index("audits", i)));
    }
    if (j.contains("threads")) cfg.threads = static_cast<unsigned>(std::max<std::size_t>(1, read_count(j["threads"], "threads")));
    if (j.contains("tolerances")) {
        const json& t = j["tolerances"];
        auto opt = [&](const char* key, double& dst) {
            if (t.contains(key)) dst = read_number(t[key], join("tolerances", key));
        };
        opt("picard_dt", cfg.audit.picard.dt);
        opt("picard_tol", cfg.audit.picard.tol);
        opt("drift", cfg.audit.drift_tol);
        opt("bound", cfg.audit.bound_tol);
        opt("equilibrium", cfg.audit.equilibrium_tol);
    }
    cfg.audit.seed = cfg.seed;
    cfg.audit.paths = cfg.paths;
    cfg.audit.threads = cfg.threads;
    return cfg;
}

inline json to_json(const AuditReport& r) {
    json j{{"check", r.check}, {"nodes_tested", r.nodes_tested}, {"worst_violation", r.worst_violation}, {"pass", r.pass}};
    if (r.check == "submartingale") j["worst_bound_violation"] = r.worst_bound_violation;
    j["paths"] = r.paths;
    return j;
}

inline json to_json(const ZetaSolution& z) {
    return {{"zeta", z.zeta}, {"class", std::string(to_string(z.gamma))}, {"residual", z.residual}, {"iterations", z.iterations}};
}

}  // namespace marketgame::io
