#include "superhedge/hedging_lab.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

namespace superhedge {

AdaptedField hedge_strategy(const GameSolution& sol, const DefaultLattice& lattice) {
    AdaptedField phi(lattice.node_count());
    const auto& sigma = lattice.params().sigma;
    for (std::size_t k = 0; k < lattice.n_steps(); ++k) {
        for (NodeId id = lattice.step_begin(k); id < lattice.step_end(k); ++id) {
            phi[id] = -sol.Zbar[id] / sigma.at(k) + 0.0;
        }
    }
    return phi;
}

double wealth_step(const DefaultLattice& lattice, const Driver& f, NodeId node, const Branch& branch, double wealth,
                   double phi) {
    const NodeContext ctx = context_at(lattice, node);
    const double z = phi * lattice.params().sigma.at(ctx.step);
    return wealth - f(ctx, wealth, z, 0.0) * lattice.dt() + z * branch.dmS;
}

WealthTrajectory simulate_wealth(const DefaultLattice& lattice, double x0, const AdaptedField& strategy,
                                 const Driver& f, std::span<const std::uint8_t> path) {
    if (strategy.size() != lattice.node_count()) throw Error(ErrorCode::InvalidArgument, "strategy size mismatch");
    if (path.size() > lattice.n_steps()) throw Error(ErrorCode::InvalidArgument, "path longer than the horizon");
    WealthTrajectory out;
    out.nodes.reserve(path.size() + 1);
    out.wealth.reserve(path.size() + 1);
    NodeId node = lattice.root();
    double v = x0;
    out.nodes.push_back(node);
    out.wealth.push_back(v);
    for (std::uint8_t b : path) {
        const BranchSet br = lattice.branches(node);
        if (b >= br.size()) throw Error(ErrorCode::InvalidArgument, "path uses a branch the node does not have");
        v = wealth_step(lattice, f, node, br[b], v, strategy[node]);
        node = br[b].child;
        out.nodes.push_back(node);
        out.wealth.push_back(v);
    }
    return out;
}

std::string_view to_string(EnumerationMode mode) {
    return mode == EnumerationMode::Exhaustive ? "exhaustive" : "sampled";
}

double uniform01(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

namespace {

struct HedgeContext {
    const DefaultLattice& lattice;
    const GameSolution& sol;
    const Driver& f;
    const StopRule& tau;
    const AdaptedField& phi;
    HedgeReport& report;
};

void record_stop(HedgeContext& h, NodeId node, double wealth, double prob, double margin) {
    PathRecord r;
    r.path_id = h.report.records.size();
    r.stop_step = h.lattice.step_of(node);
    r.stop_node = node;
    r.probability = prob;
    r.wealth = wealth;
    r.payoff = h.sol.obstacle[node];
    r.slack = wealth + r.payoff;
    r.min_margin = margin;
    h.report.records.push_back(r);
}

void enumerate(HedgeContext& h, NodeId node, double wealth, double prob, double margin) {
    margin = std::min(margin, wealth + h.sol.Ybar[node]);
    if (h.tau.stops(node)) {
        record_stop(h, node, wealth, prob, margin);
        return;
    }
    const BranchSet br = h.lattice.branches(node);
    for (const Branch& b : br) {
        if (b.prob == 0.0) continue;
        const double next = wealth_step(h.lattice, h.f, node, b, wealth, h.phi[node]);
        enumerate(h, b.child, next, prob * b.prob, margin);
    }
}

void sample(HedgeContext& h, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        NodeId node = h.lattice.root();
        double wealth = -h.sol.Ybar[node];
        double prob = 1.0;
        double margin = std::numeric_limits<double>::infinity();
        for (;;) {
            margin = std::min(margin, wealth + h.sol.Ybar[node]);
            if (h.tau.stops(node)) break;
            const BranchSet br = h.lattice.branches(node);
            const double u = uniform01(rng());
            std::size_t pick = br.size() - 1;
            double acc = 0.0;
            for (std::size_t b = 0; b < br.size(); ++b) {
                acc += br[b].prob;
                if (u < acc) {
                    pick = b;
                    break;
                }
            }
            wealth = wealth_step(h.lattice, h.f, node, br[pick], wealth, h.phi[node]);
            prob *= br[pick].prob;
            node = br[pick].child;
        }
        record_stop(h, node, wealth, prob, margin);
    }
}

}  // namespace

HedgeReport verify_superhedge(const DefaultLattice& lattice, const GameSolution& sol, double epsilon,
                              const Driver& f, std::size_t path_budget, std::uint64_t seed) {
    if (!(epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
    if (path_budget == 0) throw Error(ErrorCode::InvalidArgument, "path budget must be >= 1");
    if (sol.Ybar.size() != lattice.node_count()) throw Error(ErrorCode::InvalidArgument, "solution size mismatch");

    const StopRule tau = epsilon_stop(sol, lattice, epsilon);
    const AdaptedField phi = hedge_strategy(sol, lattice);
    HedgeReport report;
    report.initial_wealth = -sol.Ybar[lattice.root()];
    report.epsilon = epsilon;
    report.seed = seed;

    double full_tree = 1.0;
    for (std::size_t k = 0; k < lattice.n_steps() && full_tree <= static_cast<double>(path_budget); ++k) full_tree *= 3.0;
    report.mode = full_tree <= static_cast<double>(path_budget) ? EnumerationMode::Exhaustive : EnumerationMode::Sampled;

    HedgeContext h{lattice, sol, f, tau, phi, report};
    if (report.mode == EnumerationMode::Exhaustive) {
        enumerate(h, lattice.root(), report.initial_wealth, 1.0, std::numeric_limits<double>::infinity());
    } else {
        report.records.reserve(path_budget);
        sample(h, path_budget, seed);
    }
    report.path_count = report.records.size();
    report.min_slack = std::numeric_limits<double>::infinity();
    report.min_margin = std::numeric_limits<double>::infinity();
    for (const PathRecord& r : report.records) {
        report.min_slack = std::min(report.min_slack, r.slack);
        report.min_margin = std::min(report.min_margin, r.min_margin);
    }
    return report;
}

namespace {

struct TreeWalk {
    const DefaultLattice& lattice;
    const AdaptedField& phi;
    const Driver& f;
    const Driver& g;

    double value(NodeId node, double wealth) const {
        if (lattice.is_terminal(node)) return wealth;
        const BranchSet br = lattice.branches(node);
        std::array<double, 3> child{};
        for (std::size_t b = 0; b < br.size(); ++b) {
            child[b] = value(br[b].child, wealth_step(lattice, f, node, br[b], wealth, phi[node]));
        }
        const StepRepresentation rep = represent_step(br, {child.data(), br.size()});
        const NodeContext ctx = context_at(lattice, node);
        return solve_implicit(rep.c, lattice.dt(), 0.0, [&](double y) { return g(ctx, y, rep.z, rep.k); });
    }
};

}  // namespace

double expected_terminal_wealth(const DefaultLattice& lattice, double x0, const AdaptedField& strategy,
                                const Driver& f, const Driver& g, std::size_t max_leaves) {
    if (strategy.size() != lattice.node_count()) throw Error(ErrorCode::InvalidArgument, "strategy size mismatch");
    double leaves = 1.0;
    for (std::size_t k = 0; k < lattice.n_steps(); ++k) leaves *= 3.0;
    if (leaves > static_cast<double>(max_leaves)) {
        throw Error(ErrorCode::InvalidArgument, "path tree too large for expected_terminal_wealth");
    }
    require_contraction(g.lipschitz(), lattice.dt());
    return TreeWalk{lattice, strategy, f, g}.value(lattice.root(), x0);
}

}  // namespace superhedge
