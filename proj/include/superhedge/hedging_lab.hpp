#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "superhedge/game_pricer.hpp"

namespace superhedge {

/// phi = -Zbar / sigma on non-terminal nodes, 0 on the horizon.
AdaptedField hedge_strategy(const GameSolution& sol, const DefaultLattice& lattice);

struct WealthTrajectory {
    std::vector<NodeId> nodes;   ///< visited nodes, root first
    std::vector<double> wealth;  ///< wealth at each visited node
};

/// One forward wealth step V' = V - f(V, phi sigma) dt + phi sigma dmS.
double wealth_step(const DefaultLattice& lattice, const Driver& f, NodeId node, const Branch& branch, double wealth,
                   double phi);

/// Forward wealth along `path` (branch index per step, in lattice.branches order).
/// Throws InvalidArgument on an invalid path.
WealthTrajectory simulate_wealth(const DefaultLattice& lattice, double x0, const AdaptedField& strategy,
                                 const Driver& f, std::span<const std::uint8_t> path);

enum class EnumerationMode { Exhaustive, Sampled };

std::string_view to_string(EnumerationMode mode);

struct PathRecord {
    std::uint64_t path_id = 0;
    std::size_t stop_step = 0;
    NodeId stop_node = 0;
    double probability = 0.0;  ///< lattice probability of the stopped path prefix
    double wealth = 0.0;
    double payoff = 0.0;
    double slack = 0.0;         ///< wealth + payoff
    double min_margin = 0.0;    ///< min of V_t + Ybar_t before and at the stop
};

struct HedgeReport {
    double initial_wealth = 0.0;
    double epsilon = 0.0;
    EnumerationMode mode = EnumerationMode::Exhaustive;
    std::uint64_t seed = 0;
    std::size_t path_count = 0;
    double min_slack = 0.0;
    double min_margin = 0.0;
    std::vector<PathRecord> records;

    bool passed(double tolerance) const { return min_slack >= -epsilon - tolerance; }
};

inline constexpr std::size_t kDefaultPathBudget = 531441;  // 3^12
inline constexpr double kSuperhedgeTolerance = 1e-9;

/// Starts from -Ybar_0 with phi = -Zbar / sigma and stops at the epsilon stop.
/// Enumerates every path when 3^n <= path_budget, otherwise samples path_budget
/// paths under the lattice probabilities with the given seed.
HedgeReport verify_superhedge(const DefaultLattice& lattice, const GameSolution& sol, double epsilon,
                              const Driver& f, std::size_t path_budget = kDefaultPathBudget,
                              std::uint64_t seed = 20240601);

/// E^g_{0,T}(V_T) for the wealth started at x0, computed on the full path tree
/// (wealth is path dependent). Intended for small n; throws InvalidArgument when
/// the tree would exceed max_leaves.
double expected_terminal_wealth(const DefaultLattice& lattice, double x0, const AdaptedField& strategy,
                                const Driver& f, const Driver& g, std::size_t max_leaves = 2000000);

/// Uniform draw in [0, 1) from the top 53 bits; identical on every platform.
double uniform01(std::uint64_t bits);

}  // namespace superhedge
