#include "superhedge/bsde_core.hpp"

#include <array>
#include <sstream>

namespace superhedge {

namespace {

constexpr double kOrthogonalityTolerance = 1e-12;

}  // namespace

StepRepresentation represent_step(const BranchSet& branches, std::span<const double> child_values) {
    if (child_values.size() != branches.size() || branches.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "child value count must match the branch count (>= 2)");
    }
    double p_sum = 0.0, w_mean = 0.0, m_mean = 0.0, wm = 0.0, ww = 0.0, mm = 0.0;
    for (const Branch& b : branches) {
        p_sum += b.prob;
        w_mean += b.prob * b.dW;
        m_mean += b.prob * b.dM;
        wm += b.prob * b.dW * b.dM;
        ww += b.prob * b.dW * b.dW;
        mm += b.prob * b.dM * b.dM;
    }
    const bool with_jump = branches.size() == 3;
    const bool orthogonal = std::abs(p_sum - 1.0) <= kOrthogonalityTolerance &&
                            std::abs(w_mean) <= kOrthogonalityTolerance &&
                            std::abs(m_mean) <= kOrthogonalityTolerance &&
                            std::abs(wm) <= kOrthogonalityTolerance;
    if (!orthogonal || !(ww > 0.0) || (with_jump && !(mm > 0.0))) {
        throw Error(ErrorCode::SingularSystem, "branch increments do not form an orthogonal basis");
    }

    // Deviations from the first child keep constants exact.
    const double ref = child_values[0];
    double c_dev = 0.0, zw = 0.0, km = 0.0;
    for (std::size_t i = 0; i < branches.size(); ++i) {
        const double dev = child_values[i] - ref;
        c_dev += branches[i].prob * dev;
        zw += branches[i].prob * dev * branches[i].dW;
        km += branches[i].prob * dev * branches[i].dM;
    }
    StepRepresentation rep;
    rep.c = ref + c_dev;
    rep.z = zw / ww;
    rep.k = with_jump ? km / mm : 0.0;
    return rep;
}

StepRepresentation represent_step(const DefaultLattice& lattice, NodeId node, std::span<const double> child_values) {
    return represent_step(branch_increments(lattice, node), child_values);
}

void require_contraction(double lipschitz, double dt) {
    if (lipschitz * dt >= 1.0) {
        std::ostringstream msg;
        msg << "C * dt = " << lipschitz * dt << " >= 1; increase n_steps";
        throw Error(ErrorCode::StepContractionFailure, msg.str());
    }
}

StopRule StopRule::from_flags(const DefaultLattice& lattice, std::vector<std::uint8_t> flags) {
    if (flags.size() != lattice.node_count()) throw Error(ErrorCode::InvalidArgument, "stop flags have the wrong size");
    for (NodeId id = lattice.step_begin(lattice.n_steps()); id < lattice.node_count(); ++id) flags[id] = 1;
    StopRule rule;
    rule.flags_ = std::move(flags);
    return rule;
}

StopRule StopRule::at_root(const DefaultLattice& lattice) {
    std::vector<std::uint8_t> flags(lattice.node_count(), 0);
    flags[lattice.root()] = 1;
    return from_flags(lattice, std::move(flags));
}

StopRule StopRule::at_horizon(const DefaultLattice& lattice) {
    return from_flags(lattice, std::vector<std::uint8_t>(lattice.node_count(), 0));
}

namespace {

template <class Frozen>
BsdeSolution backward_solve(const DefaultLattice& lattice, const Driver& g, const AdaptedField& values_at_stop,
                            std::span<const double> fv_adjustment, Frozen&& frozen) {
    if (values_at_stop.size() != lattice.node_count()) {
        throw Error(ErrorCode::InvalidArgument, "field size does not match the lattice");
    }
    if (!fv_adjustment.empty() && fv_adjustment.size() != lattice.node_count()) {
        throw Error(ErrorCode::InvalidArgument, "fv_adjustment size does not match the lattice");
    }
    require_contraction(g.lipschitz(), lattice.dt());

    const std::size_t n = lattice.n_steps();
    const double dt = lattice.dt();
    BsdeSolution sol{AdaptedField(lattice.node_count()), AdaptedField(lattice.node_count()),
                     AdaptedField(lattice.node_count())};
    for (NodeId id = lattice.step_begin(n); id < lattice.step_end(n); ++id) sol.Y[id] = values_at_stop[id];

    std::array<double, 3> child{};
    for (std::size_t k = n; k-- > 0;) {
        for (NodeId id = lattice.step_begin(k); id < lattice.step_end(k); ++id) {
            if (frozen(id)) {
                sol.Y[id] = values_at_stop[id];
                continue;
            }
            const BranchSet br = lattice.branches(id);
            for (std::size_t b = 0; b < br.size(); ++b) child[b] = sol.Y[br[b].child];
            const StepRepresentation rep = represent_step(br, {child.data(), br.size()});
            const NodeContext ctx = context_at(lattice, id);
            const double kappa = fv_adjustment.empty() ? 0.0 : fv_adjustment[id];
            sol.Y[id] = solve_implicit(rep.c, dt, kappa, [&](double y) { return g(ctx, y, rep.z, rep.k); });
            sol.Z[id] = rep.z;
            sol.K[id] = rep.k;
        }
    }
    return sol;
}

}  // namespace

BsdeSolution solve_bsde(const DefaultLattice& lattice, const Driver& g, const AdaptedField& terminal,
                        std::span<const double> fv_adjustment) {
    return backward_solve(lattice, g, terminal, fv_adjustment, [](NodeId) { return false; });
}

AdaptedField evaluate_expectation(const DefaultLattice& lattice, const Driver& g, const StopRule& tau,
                                  const AdaptedField& payoff) {
    if (tau.size() != lattice.node_count()) throw Error(ErrorCode::InvalidArgument, "stop rule does not match lattice");
    return backward_solve(lattice, g, payoff, {}, [&tau](NodeId id) { return tau.stops(id); }).Y;
}

}  // namespace superhedge
