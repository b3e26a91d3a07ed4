#include "superhedge/reflected_bsde.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <sstream>

namespace superhedge {

RbsdeSolution solve_rbsde(const DefaultLattice& lattice, const Driver& g, const AdaptedField& obstacle,
                          const AdaptedField& terminal, const StopRule& end) {
    const std::size_t count = lattice.node_count();
    if (obstacle.size() != count || terminal.size() != count || end.size() != count) {
        throw Error(ErrorCode::InvalidArgument, "solve_rbsde inputs do not match the lattice");
    }
    for (NodeId id = 0; id < count; ++id) {
        if (end.stops(id) && terminal[id] < obstacle[id]) {
            std::ostringstream msg;
            msg << "terminal " << terminal[id] << " below obstacle " << obstacle[id] << " at node " << id;
            throw Error(ErrorCode::TerminalBelowObstacle, msg.str());
        }
    }
    require_contraction(g.lipschitz(), lattice.dt());

    const double dt = lattice.dt();
    RbsdeSolution sol{AdaptedField(count), AdaptedField(count), AdaptedField(count), AdaptedField(count)};
    std::array<double, 3> child{};
    for (std::size_t k = lattice.n_steps() + 1; k-- > 0;) {
        for (NodeId id = lattice.step_begin(k); id < lattice.step_end(k); ++id) {
            if (end.stops(id)) {
                sol.Y[id] = terminal[id];
                continue;
            }
            const BranchSet br = lattice.branches(id);
            for (std::size_t b = 0; b < br.size(); ++b) child[b] = sol.Y[br[b].child];
            const StepRepresentation rep = represent_step(br, {child.data(), br.size()});
            const NodeContext ctx = context_at(lattice, id);
            const double y = solve_implicit(rep.c, dt, 0.0, [&](double v) { return g(ctx, v, rep.z, rep.k); });
            sol.Y[id] = std::max(obstacle[id], y);
            sol.A_inc[id] = sol.Y[id] - y;
            sol.Z[id] = rep.z;
            sol.K[id] = rep.k;
        }
    }
    return sol;
}

RbsdeSolution solve_rbsde(const DefaultLattice& lattice, const Driver& g, const AdaptedField& obstacle,
                          const AdaptedField& terminal) {
    return solve_rbsde(lattice, g, obstacle, terminal, StopRule::at_horizon(lattice));
}

SubmartingaleReport check_submartingale(const DefaultLattice& lattice, const AdaptedField& X, const Driver& g,
                                        const AdaptedField& obstacle, const std::vector<WindowPair>& pairs) {
    if (X.size() != lattice.node_count() || obstacle.size() != lattice.node_count()) {
        throw Error(ErrorCode::InvalidArgument, "check_submartingale inputs do not match the lattice");
    }
    for (NodeId id = 0; id < X.size(); ++id) {
        if (X[id] < obstacle[id]) {
            throw Error(ErrorCode::ObstacleViolation, "X lies below the obstacle at node " + std::to_string(id));
        }
    }
    SubmartingaleReport rep;
    rep.min_residual = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const RbsdeSolution y = solve_rbsde(lattice, g, obstacle, X, pairs[i].end);
        for (NodeId id = 0; id < X.size(); ++id) {
            if (!pairs[i].start.stops(id)) continue;
            ++rep.nodes_checked;
            const double r = y.Y[id] - X[id];
            if (r < rep.min_residual) {
                rep.min_residual = r;
                rep.worst_pair = i;
                rep.worst_node = id;
            }
        }
    }
    if (rep.nodes_checked == 0) rep.min_residual = 0.0;
    return rep;
}

}  // namespace superhedge
