#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "superhedge/bsde_core.hpp"

namespace superhedge {

/// Finite set of constant controls standing in for the bounded controls nu > -1.
///
/// With `lower_limit` the pricer also takes the limit nu -> -1 (the control term
/// is affine in nu, so the limit is attained by plugging in -1). Without it the
/// grid minimum sits strictly above -1 and the buyer's value carries an O(1)
/// bias whenever the jump exposure K - beta/sigma Z is positive.
struct NuGrid {
    std::vector<double> levels{-0.95, -0.5, 0.0, 0.5, 1.0, 2.0, 5.0, 10.0};
    bool lower_limit = true;

    /// Throws InvalidControl unless levels are finite, > -1, strictly ascending and contain 0.
    void validate() const;
    /// Inserts `factor - 1` evenly spaced points in every gap; the result contains this grid.
    NuGrid refined(std::size_t factor) const;

    double lowest() const { return lower_limit ? -1.0 : levels.front(); }
    double highest() const { return levels.back(); }
    double max_abs() const;
};

inline NuGrid zero_grid() { return NuGrid{{0.0}, false}; }

struct DecompositionDiagnostics {
    /// Largest positive predictable residual at a node strictly above the obstacle.
    double max_positive_residual_off_obstacle = 0.0;
    /// max |numerical residual - (dA - dA')| over nodes.
    double max_predictable_mismatch = 0.0;
    /// max over branches of |Y_t - Y_child - fbar dt + z dmS - (dk - dk')|.
    double max_reconstruction_error = 0.0;
};

struct GameSolution {
    AdaptedField Ybar;
    AdaptedField Zbar;
    AdaptedField Kbar;
    AdaptedField A_inc;
    AdaptedField Aprime_inc;
    AdaptedField nu_star;
    AdaptedField jump_exposure;  ///< q = K - beta/sigma Z (0 after default and at the horizon)
    /// Per node, indexed like lattice.branches(node); unused slots are 0.
    std::vector<std::array<double, 3>> kbar_inc;
    std::vector<std::array<double, 3>> kbarprime_inc;
    AdaptedField obstacle;
    NuGrid grid;
    double lipschitz = 0.0;  ///< lambda-constant of fbar^nu over the grid
    DecompositionDiagnostics diagnostics;
};

/// Buyer's price by dynamic programming: Ybar = max(obstacle, min over nu of the
/// implicit fbar^nu step). The decomposition is extracted before returning.
GameSolution solve_buyer_price(const DefaultLattice& lattice, const Driver& fbar, const AdaptedField& obstacle,
                               const NuGrid& grid = {});

/// Fills A, A', the per-branch Jordan increments and the diagnostics from Ybar,
/// Zbar, Kbar and nu_star.
void extract_decomposition(GameSolution& sol, const DefaultLattice& lattice, const Driver& fbar);

struct ConstraintReport {
    double skorokhod_A = 0.0;      ///< sum (Ybar - xi) dA
    double skorokhod_kbar = 0.0;   ///< sum (Ybar_t - xi_t) dk over branches
    double singular_A = 0.0;       ///< sum dA dA'
    double singular_kbar = 0.0;    ///< sum dk dk' over branches
    double min_jump_constraint = 0.0;     ///< min (K - beta/sigma Z) lambda above the obstacle
    double min_measure_constraint = 0.0;  ///< min dA' - (K - beta/sigma Z) lambda dt above the obstacle
    std::size_t nodes_above_obstacle = 0;
    double tolerance = 0.0;        ///< 10 C dt

    bool exact_parts_hold() const {
        return skorokhod_A == 0.0 && skorokhod_kbar == 0.0 && singular_A == 0.0 && singular_kbar == 0.0;
    }
    bool passed() const {
        return exact_parts_hold() && min_jump_constraint >= -tolerance && min_measure_constraint >= -tolerance;
    }
};

ConstraintReport check_constraints(const GameSolution& sol, const DefaultLattice& lattice);

/// First node with Ybar <= xi + epsilon. Throws InvalidArgument if epsilon < 0.
StopRule epsilon_stop(const GameSolution& sol, const DefaultLattice& lattice, double epsilon);

/// inf over the grid of E^nu_{t,tau}(xi_tau) at every node (no reflection).
AdaptedField lower_value_field(const DefaultLattice& lattice, const Driver& fbar, const NuGrid& grid,
                               const StopRule& tau, const AdaptedField& obstacle);
double lower_value(const DefaultLattice& lattice, const Driver& fbar, const NuGrid& grid, const StopRule& tau,
                   const AdaptedField& obstacle);

/// One controlled implicit step at a node; shared by the pricer and the tests.
double controlled_step(const DefaultLattice& lattice, const Driver& fbar, NodeId node,
                       const StepRepresentation& rep, double nu);

}  // namespace superhedge
