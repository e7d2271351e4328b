#pragma once

// Payoff processes described by their characteristics: drift density b on
// continuous segments and finite-support jump laws at predictable jump
// nodes, optionally modulated by a finite Markov chain.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "marketgame/paths.hpp"
#include "marketgame/rng.hpp"
#include "marketgame/types.hpp"

namespace marketgame {

struct JumpAtom {
    Vector x;
    double p = 0.0;
};

/// Finite-support law of the jump at a node. Missing mass 1 - nu_bar is "no jump".
class JumpLaw {
public:
    /// Totals within this distance of one are snapped to exactly one.
    static constexpr double kUnitMassSlack = 1e-12;

    JumpLaw() = default;

    explicit JumpLaw(std::vector<JumpAtom> atoms) : atoms_(std::move(atoms)) {
        if (atoms_.empty()) return;
        dim_ = atoms_.front().x.size();
        double total = 0.0;
        for (std::size_t i = 0; i < atoms_.size(); ++i) {
            const JumpAtom& a = atoms_[i];
            if (a.x.size() != dim_) throw ModelError("jump atoms have inconsistent dimensions");
            if (!all_nonnegative(a.x)) throw ModelError("jump atom coordinates must be non-negative");
            if (l1(a.x) == 0.0) throw ModelError("jump law cannot have an atom at zero");
            if (!(a.p > 0.0) || !std::isfinite(a.p)) throw ModelError("jump atom probabilities must be positive");
            total += a.p;
        }
        if (total > 1.0 + kUnitMassSlack) throw ModelError("jump law total mass exceeds one");
        nu_bar_ = std::abs(total - 1.0) <= kUnitMassSlack ? 1.0 : total;
    }

    const std::vector<JumpAtom>& atoms() const { return atoms_; }
    bool empty() const { return atoms_.empty(); }
    std::size_t dim() const { return dim_; }

    /// Conditional probability of a jump.
    double total_mass() const { return nu_bar_; }
    double no_jump_probability() const { return 1.0 - nu_bar_; }

    /// Integral of (1 ^ |x|) against the law.
    double truncated_mass() const {
        double s = 0.0;
        for (const auto& a : atoms_) s += a.p * std::min(1.0, l1(a.x));
        return s;
    }

private:
    std::vector<JumpAtom> atoms_;
    std::size_t dim_ = 0;
    double nu_bar_ = 0.0;
};

enum class NodeKind { segment, jump };

/// Characteristics of X at one grid node. On segments, b is normalized to
/// |b| = 1 and dG is the growth of operational time per unit of physical
/// time. At jump nodes, b = 0, dG is the atom of G and K = law / dG.
struct NodeCharacteristics {
    NodeKind kind = NodeKind::segment;
    Vector b;
    JumpLaw law;
    double dG = 0.0;

    bool is_jump() const { return kind == NodeKind::jump; }
    std::size_t dim() const { return b.size(); }
    double nu_bar() const { return is_jump() ? law.total_mass() : 0.0; }

    /// Integral of g(x) against the kernel K.
    template <class G>
    double kernel_integral(G&& g) const {
        if (!is_jump()) return 0.0;
        double s = 0.0;
        for (const auto& a : law.atoms()) s += a.p * g(a.x);
        return s / dG;
    }

    /// h = b + integral of x / (1 + |x|) against K.
    Vector h() const {
        Vector out = b;
        if (is_jump()) {
            for (const auto& a : law.atoms()) {
                const double w = a.p / ((1.0 + l1(a.x)) * dG);
                for (std::size_t n = 0; n < out.size(); ++n) out[n] += w * a.x[n];
            }
        }
        return out;
    }

    /// p = integral of 1 / (1 + |x|)^2 against the law at the node.
    double p() const {
        double s = 0.0;
        for (const auto& a : law.atoms()) {
            const double q = 1.0 + l1(a.x);
            s += a.p / (q * q);
        }
        return s;
    }
};

/// Brings raw characteristics to the normalized form |b| + int (1 ^ |x|) K = 1.
/// An empty law gives a continuous segment whose clock runs at |b_raw| per
/// unit time; a non-empty law gives a jump node with b = 0.
inline NodeCharacteristics normalize_characteristics(const Vector& b_raw, const JumpLaw& law_raw) {
    if (!all_nonnegative(b_raw)) throw ModelError("drift must be non-negative");
    NodeCharacteristics c;
    if (law_raw.empty()) {
        const double scale = l1(b_raw);
        if (scale == 0.0) throw ModelError("node has no payoff activity");
        c.kind = NodeKind::segment;
        c.b.resize(b_raw.size());
        for (std::size_t n = 0; n < b_raw.size(); ++n) c.b[n] = b_raw[n] / scale;
        c.dG = scale;
        return c;
    }
    if (!b_raw.empty() && b_raw.size() != law_raw.dim()) throw ModelError("drift and jump dimensions differ");
    c.kind = NodeKind::jump;
    c.b.assign(law_raw.dim(), 0.0);
    c.law = law_raw;
    c.dG = law_raw.truncated_mass();
    if (!(c.dG > 0.0)) throw ModelError("node has no payoff activity");
    return c;
}

/// One grid node: a continuous segment (t, t_end] or a jump at t, with
/// characteristics per Markov state.
struct ModelNode {
    double t = 0.0;
    double t_end = 0.0;
    std::vector<NodeCharacteristics> by_state;

    bool is_jump() const { return by_state.front().is_jump(); }
};

/// Finite Markov chain advanced once after every jump node.
struct MarkovChain {
    std::size_t initial = 0;
    std::vector<Vector> transition;  // empty: a single fixed state

    std::size_t states() const { return transition.empty() ? 1 : transition.size(); }
};

class MarketModel {
public:
    MarketModel() = default;

    MarketModel(std::size_t assets, double horizon, std::vector<ModelNode> nodes, MarkovChain chain = {})
        : assets_(assets), horizon_(horizon), nodes_(std::move(nodes)), chain_(std::move(chain)) {
        validate();
    }

    std::size_t assets() const { return assets_; }
    double horizon() const { return horizon_; }
    const std::vector<ModelNode>& nodes() const { return nodes_; }
    const ModelNode& node(std::size_t i) const { return nodes_.at(i); }
    const MarkovChain& chain() const { return chain_; }
    std::size_t state_count() const { return chain_.states(); }

    const NodeCharacteristics& characteristics(std::size_t node_index, std::size_t state) const {
        const ModelNode& n = nodes_.at(node_index);
        return n.by_state.size() == 1 ? n.by_state.front() : n.by_state.at(state);
    }

    bool has_jump_at(double t) const {
        return std::any_of(nodes_.begin(), nodes_.end(), [t](const ModelNode& n) { return n.is_jump() && n.t == t; });
    }

    /// Same model cut at a shorter horizon.
    MarketModel truncated(double horizon) const {
        std::vector<ModelNode> kept;
        for (ModelNode n : nodes_) {
            if (n.is_jump() ? n.t > horizon : n.t >= horizon) continue;
            n.t_end = std::min(n.t_end, horizon);
            kept.push_back(std::move(n));
        }
        return MarketModel(assets_, horizon, std::move(kept), chain_);
    }

private:
    void validate() const {
        if (assets_ == 0) throw ModelError("model needs at least one asset");
        if (!(horizon_ >= 0.0) || !std::isfinite(horizon_)) throw ModelError("horizon must be finite and non-negative");
        const std::size_t s = chain_.states();
        if (!chain_.transition.empty()) {
            if (chain_.initial >= s) throw ModelError("initial Markov state out of range");
            for (const auto& row : chain_.transition) {
                if (row.size() != s || !all_nonnegative(row))
                    throw ModelError("transition matrix must be square and non-negative");
                double sum = 0.0;
                for (double p : row) sum += p;
                if (std::abs(sum - 1.0) > 1e-9) throw ModelError("transition matrix rows must sum to one");
            }
        }
        double last_end = 0.0;
        double last_jump = -1.0;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const ModelNode& n = nodes_[i];
            const std::string where = "node " + std::to_string(i);
            if (n.by_state.empty()) throw ModelError(where + " has no characteristics");
            if (n.by_state.size() != 1 && n.by_state.size() != s)
                throw ModelError(where + " must give characteristics for every Markov state");
            const bool jump = n.by_state.front().is_jump();
            for (const auto& c : n.by_state) {
                if (c.is_jump() != jump) throw ModelError(where + " mixes segment and jump kinds across states");
                if (c.b.size() != assets_) throw ModelError(where + " has wrong asset dimension");
                if (jump && (l1(c.b) != 0.0 || c.law.empty())) throw ModelError(where + " jump node must have b = 0");
                if (!jump && std::abs(l1(c.b) - 1.0) > 1e-12) throw ModelError(where + " segment drift not normalized");
                if (!(c.dG > 0.0)) throw ModelError(where + " has no payoff activity");
            }
            if (jump) {
                if (n.t_end != n.t) throw ModelError(where + " jump node must have t_end == t");
                if (!(n.t > 0.0)) throw ModelError(where + " jump time must be positive");
                if (!(n.t > last_jump) || n.t < last_end) throw ModelError(where + " jump nodes out of order");
                last_jump = n.t;
                last_end = n.t;
            } else {
                if (!(n.t_end > n.t)) throw ModelError(where + " segment must have positive length");
                if (n.t < last_end || n.t < last_jump) throw ModelError(where + " segments overlap");
                last_end = n.t_end;
            }
            if (n.t < 0.0 || n.t_end > horizon_) throw ModelError(where + " outside [0, horizon]");
        }
    }

    std::size_t assets_ = 0;
    double horizon_ = 0.0;
    std::vector<ModelNode> nodes_;
    MarkovChain chain_;
};

/// Realized randomness at one node: the Markov state in force and the jump
/// (none on segments, or when the no-jump outcome is drawn).
struct NodeOutcome {
    std::size_t state = 0;
    std::optional<Vector> jump;
};

/// Realized outcomes for every node of a model, in node order.
struct Scenario {
    std::vector<NodeOutcome> outcomes;
};

inline std::size_t draw_index(PathRng& rng, const Vector& weights) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return i;
    }
    return weights.size() - 1;
}

inline Scenario sample_scenario(const MarketModel& model, std::uint64_t seed) {
    PathRng rng(seed);
    Scenario sc;
    sc.outcomes.reserve(model.nodes().size());
    std::size_t state = model.chain().initial;
    for (std::size_t i = 0; i < model.nodes().size(); ++i) {
        const NodeCharacteristics& c = model.characteristics(i, state);
        NodeOutcome out{state, std::nullopt};
        if (c.is_jump()) {
            const double u = rng.uniform();
            double acc = 0.0;
            for (const auto& a : c.law.atoms()) {
                acc += a.p;
                if (u < acc) {
                    out.jump = a.x;
                    break;
                }
            }
            // Laws snapped to unit mass never fall through to "no jump".
            if (!out.jump && c.law.total_mass() == 1.0) out.jump = c.law.atoms().back().x;
            if (!model.chain().transition.empty()) state = draw_index(rng, model.chain().transition[state]);
        }
        sc.outcomes.push_back(std::move(out));
    }
    return sc;
}

/// Realized payoff path X for a scenario.
inline MonotonePath payoff_path(const MarketModel& model, const Scenario& sc) {
    PathBuilder x(0.0, Vector(model.assets(), 0.0));
    for (std::size_t i = 0; i < model.nodes().size(); ++i) {
        const ModelNode& n = model.node(i);
        const NodeCharacteristics& c = model.characteristics(i, sc.outcomes[i].state);
        if (c.is_jump()) {
            x.hold(n.t);
            if (sc.outcomes[i].jump) x.jump(*sc.outcomes[i].jump);
        } else {
            x.hold(n.t);
            Vector slope(c.b.size());
            for (std::size_t k = 0; k < slope.size(); ++k) slope[k] = c.b[k] * c.dG;
            x.advance(n.t_end, slope);
        }
    }
    if (model.horizon() > x.time()) x.hold(model.horizon());
    return x.build();
}

/// Operational time G for a scenario (depends on the path only through the Markov states).
inline MonotonePath operational_time(const MarketModel& model, const Scenario& sc) {
    PathBuilder g(0.0, {0.0});
    for (std::size_t i = 0; i < model.nodes().size(); ++i) {
        const ModelNode& n = model.node(i);
        const NodeCharacteristics& c = model.characteristics(i, sc.outcomes[i].state);
        g.hold(n.t);
        if (c.is_jump())
            g.jump({c.dG});
        else
            g.advance(n.t_end, {c.dG});
    }
    if (model.horizon() > g.time()) g.hold(model.horizon());
    return g.build();
}

inline MonotonePath sample_path(const MarketModel& model, std::uint64_t seed) {
    return payoff_path(model, sample_scenario(model, seed));
}

struct Outcome {
    std::optional<Vector> jump;  // nullopt: no jump
    double probability = 0.0;
};

/// Exact outcome distribution at a jump node given the current Markov state.
inline std::vector<Outcome> enumerate_outcomes(const MarketModel& model, std::size_t node_index, std::size_t state) {
    const NodeCharacteristics& c = model.characteristics(node_index, state);
    if (!c.is_jump()) throw std::invalid_argument("enumerate_outcomes called on a continuous segment");
    std::vector<Outcome> out;
    out.reserve(c.law.atoms().size() + 1);
    for (const auto& a : c.law.atoms()) out.push_back({a.x, a.p});
    if (c.law.total_mass() < 1.0) out.push_back({std::nullopt, c.law.no_jump_probability()});
    return out;
}

}  // namespace marketgame
