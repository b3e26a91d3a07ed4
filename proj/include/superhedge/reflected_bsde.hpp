#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "superhedge/bsde_core.hpp"

namespace superhedge {

struct RbsdeSolution {
    AdaptedField Y;
    AdaptedField Z;
    AdaptedField K;
    AdaptedField A_inc;  ///< reflection increment at the node where the projection happens
};

/// Reflected solve with lower obstacle: Y = max(obstacle, implicit step) on the
/// window before `end`, Y = terminal on nodes flagged by `end`.
/// Throws TerminalBelowObstacle if terminal < obstacle on a flagged node.
RbsdeSolution solve_rbsde(const DefaultLattice& lattice, const Driver& g, const AdaptedField& obstacle,
                          const AdaptedField& terminal, const StopRule& end);
/// Window [0, T].
RbsdeSolution solve_rbsde(const DefaultLattice& lattice, const Driver& g, const AdaptedField& obstacle,
                          const AdaptedField& terminal);

struct WindowPair {
    StopRule start;
    StopRule end;
};

struct SubmartingaleReport {
    double min_residual = 0.0;  ///< min of Y^g_{s,t}(X_t) - X_s over pairs and start nodes
    std::size_t worst_pair = 0;
    NodeId worst_node = 0;
    std::size_t nodes_checked = 0;

    bool holds(double tolerance) const { return min_residual >= -tolerance; }
};

/// Evaluates Y^g_{s,t}(X_t) - X_s at every node flagged by s (t restarted there).
/// Throws ObstacleViolation if X < obstacle somewhere.
SubmartingaleReport check_submartingale(const DefaultLattice& lattice, const AdaptedField& X, const Driver& g,
                                        const AdaptedField& obstacle, const std::vector<WindowPair>& pairs);

}  // namespace superhedge
