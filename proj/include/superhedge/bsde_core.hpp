#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "superhedge/drivers.hpp"
#include "superhedge/error.hpp"
#include "superhedge/market_lattice.hpp"

namespace superhedge {

/// Martingale representation of one step: child = c + z dW + k dM on every branch.
struct StepRepresentation {
    double c = 0.0;
    double z = 0.0;
    double k = 0.0;
};

/// Exact on the canonical lattice: {1, dW, dM} are orthogonal under the branch
/// probabilities and span the branch space. k is 0 on nodes without a default branch.
/// Throws SingularSystem if the branch data cannot be inverted (malformed custom data),
/// InvalidArgument if the value count does not match the branch count.
StepRepresentation represent_step(const DefaultLattice& lattice, NodeId node, std::span<const double> child_values);
StepRepresentation represent_step(const BranchSet& branches, std::span<const double> child_values);

inline constexpr double kFixedPointTolerance = 1e-13;
inline constexpr int kFixedPointMaxIterations = 100;

/// Solves y = c + g(y) dt - kappa by fixed-point iteration; the caller guarantees
/// that g is Lipschitz in y with constant C and C dt < 1.
template <class G>
double solve_implicit(double c, double dt, double kappa, G&& g) {
    double y = c - kappa;
    for (int it = 0; it < kFixedPointMaxIterations; ++it) {
        const double next = c + g(y) * dt - kappa;
        if (std::abs(next - y) <= kFixedPointTolerance * (1.0 + std::abs(next))) return next;
        y = next;
    }
    throw Error(ErrorCode::NoConvergence, "implicit driver step did not converge");
}

/// Throws StepContractionFailure when lipschitz * dt >= 1.
void require_contraction(double lipschitz, double dt);

struct BsdeSolution {
    AdaptedField Y;
    AdaptedField Z;
    AdaptedField K;  ///< 0 after default, where dM vanishes
};

/// Per-node stop flag; the stopping time is the first flagged node along a path.
/// Terminal nodes are always flagged. Values computed from a rule at an interior
/// node are those of the rule restarted at that node.
class StopRule {
public:
    static StopRule at_root(const DefaultLattice& lattice);
    static StopRule at_horizon(const DefaultLattice& lattice);
    static StopRule from_flags(const DefaultLattice& lattice, std::vector<std::uint8_t> flags);

    template <class Pred>
    static StopRule from_predicate(const DefaultLattice& lattice, Pred&& pred) {
        std::vector<std::uint8_t> flags(lattice.node_count(), 0);
        for (NodeId id = 0; id < lattice.node_count(); ++id) flags[id] = pred(id) ? 1 : 0;
        return from_flags(lattice, std::move(flags));
    }

    bool stops(NodeId id) const { return flags_[id] != 0; }
    std::size_t size() const { return flags_.size(); }

private:
    std::vector<std::uint8_t> flags_;
};

/// Backward solve of -dY = g dt - Z dW - K dM - d(kappa), Y_T = terminal (read on terminal
/// nodes only). fv_adjustment, when non-empty, holds one increment of kappa per node.
BsdeSolution solve_bsde(const DefaultLattice& lattice, const Driver& g, const AdaptedField& terminal,
                        std::span<const double> fv_adjustment = {});

/// E^g_{t, tau}(payoff_tau) at every node, tau restarted at the node.
AdaptedField evaluate_expectation(const DefaultLattice& lattice, const Driver& g, const StopRule& tau,
                                  const AdaptedField& payoff);

}  // namespace superhedge
