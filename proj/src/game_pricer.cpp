#include "superhedge/game_pricer.hpp"

#include <algorithm>
#include <cmath>

namespace superhedge {

void NuGrid::validate() const {
    if (levels.empty()) throw Error(ErrorCode::InvalidControl, "nu grid is empty");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (!std::isfinite(levels[i]) || !(levels[i] > -1.0)) {
            throw Error(ErrorCode::InvalidControl, "nu grid levels must be finite and > -1");
        }
        if (i > 0 && !(levels[i] > levels[i - 1])) {
            throw Error(ErrorCode::InvalidControl, "nu grid levels must be strictly ascending");
        }
    }
    if (std::find(levels.begin(), levels.end(), 0.0) == levels.end()) {
        throw Error(ErrorCode::InvalidControl, "nu grid must contain 0");
    }
}

NuGrid NuGrid::refined(std::size_t factor) const {
    validate();
    if (factor == 0) throw Error(ErrorCode::InvalidArgument, "refinement factor must be >= 1");
    NuGrid out;
    out.lower_limit = lower_limit;
    out.levels.clear();
    for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
        const double step = (levels[i + 1] - levels[i]) / static_cast<double>(factor);
        out.levels.push_back(levels[i]);
        for (std::size_t s = 1; s < factor; ++s) out.levels.push_back(levels[i] + step * static_cast<double>(s));
    }
    out.levels.push_back(levels.back());
    return out;
}

double NuGrid::max_abs() const {
    double m = lower_limit ? 1.0 : 0.0;
    for (double v : levels) m = std::max(m, std::abs(v));
    return m;
}

namespace {

// The controlled step is increasing in nu * lambda * q, so the minimizing
// level only depends on the sign of lambda * q. Ties go to the smallest level.
double select_nu(const NuGrid& grid, double intensity, double q) {
    const double u = intensity * q;
    return u < 0.0 ? grid.highest() : grid.lowest();
}

double jump_exposure(const DefaultLattice& lattice, NodeId id, const StepRepresentation& rep) {
    if (!(lattice.intensity(id) > 0.0)) return 0.0;
    return rep.k - lattice.beta_over_sigma(lattice.step_of(id)) * rep.z;
}

// dM on a Brownian move from an alive node (-lambda dt), 0 where no default branch exists.
double move_dM(const BranchSet& br) {
    return br.size() == 3 ? br[1].dM : 0.0;
}

void check_field(const DefaultLattice& lattice, const AdaptedField& f, const char* what) {
    if (f.size() != lattice.node_count()) {
        throw Error(ErrorCode::InvalidArgument, std::string(what) + " does not match the lattice");
    }
    if (!f.all_finite()) throw Error(ErrorCode::InvalidArgument, std::string(what) + " has non-finite values");
}

}  // namespace

double controlled_step(const DefaultLattice& lattice, const Driver& fbar, NodeId node, const StepRepresentation& rep,
                       double nu) {
    const NodeContext ctx = context_at(lattice, node);
    const double bos = lattice.beta_over_sigma(ctx.step);
    return solve_implicit(rep.c, lattice.dt(), 0.0, [&](double y) {
        return fbar(ctx, y, rep.z, 0.0) + control_term(nu, ctx.intensity, rep.k, rep.z, bos);
    });
}

GameSolution solve_buyer_price(const DefaultLattice& lattice, const Driver& fbar, const AdaptedField& obstacle,
                               const NuGrid& grid) {
    grid.validate();
    check_field(lattice, obstacle, "obstacle");
    if (fbar.depends_on_k()) throw Error(ErrorCode::InvalidArgument, "fbar must not depend on k");

    const std::size_t count = lattice.node_count();
    GameSolution sol;
    sol.grid = grid;
    sol.obstacle = obstacle;
    sol.lipschitz = controlled_lipschitz(fbar.lipschitz(), grid.max_abs(), lattice);
    require_contraction(sol.lipschitz, lattice.dt());

    sol.Ybar = AdaptedField(count);
    sol.Zbar = AdaptedField(count);
    sol.Kbar = AdaptedField(count);
    sol.nu_star = AdaptedField(count, grid.lowest());
    sol.jump_exposure = AdaptedField(count);

    const std::size_t n = lattice.n_steps();
    for (NodeId id = lattice.step_begin(n); id < lattice.step_end(n); ++id) sol.Ybar[id] = obstacle[id];

    std::array<double, 3> child{};
    for (std::size_t k = n; k-- > 0;) {
        for (NodeId id = lattice.step_begin(k); id < lattice.step_end(k); ++id) {
            const BranchSet br = lattice.branches(id);
            for (std::size_t b = 0; b < br.size(); ++b) child[b] = sol.Ybar[br[b].child];
            const StepRepresentation rep = represent_step(br, {child.data(), br.size()});
            const double q = jump_exposure(lattice, id, rep);
            const double nu = select_nu(grid, lattice.intensity(id), q);
            const double y = controlled_step(lattice, fbar, id, rep, nu);
            sol.Ybar[id] = std::max(obstacle[id], y);
            sol.Zbar[id] = rep.z;
            sol.Kbar[id] = rep.k;
            sol.nu_star[id] = nu;
            sol.jump_exposure[id] = q;
        }
    }
    extract_decomposition(sol, lattice, fbar);
    return sol;
}

void extract_decomposition(GameSolution& sol, const DefaultLattice& lattice, const Driver& fbar) {
    const std::size_t count = lattice.node_count();
    check_field(lattice, sol.Ybar, "Ybar");
    sol.A_inc = AdaptedField(count);
    sol.Aprime_inc = AdaptedField(count);
    sol.kbar_inc.assign(count, {0.0, 0.0, 0.0});
    sol.kbarprime_inc.assign(count, {0.0, 0.0, 0.0});
    sol.diagnostics = {};

    const double dt = lattice.dt();
    std::array<double, 3> child{};
    for (std::size_t k = 0; k < lattice.n_steps(); ++k) {
        for (NodeId id = lattice.step_begin(k); id < lattice.step_end(k); ++id) {
            const BranchSet br = lattice.branches(id);
            for (std::size_t b = 0; b < br.size(); ++b) child[b] = sol.Ybar[br[b].child];
            const StepRepresentation rep = represent_step(br, {child.data(), br.size()});
            const NodeContext ctx = context_at(lattice, id);
            const double y = sol.Ybar[id];
            const double drift = fbar(ctx, y, rep.z, 0.0) * dt;
            const double rho = y - rep.c - drift;
            const double q = jump_exposure(lattice, id, rep);

            double dA = 0.0, dAp = 0.0;
            if (y == sol.obstacle[id]) {
                dA = std::max(rho, 0.0) + 0.0;
                dAp = std::max(-rho, 0.0) + 0.0;
            } else {
                // Off the obstacle the residual is the control term nu* lambda q dt.
                const double u = -(q * move_dM(br));
                dAp = std::max(-(sol.nu_star[id] * u), 0.0) + 0.0;
                sol.diagnostics.max_positive_residual_off_obstacle =
                    std::max(sol.diagnostics.max_positive_residual_off_obstacle, rho);
            }
            sol.A_inc[id] = dA;
            sol.Aprime_inc[id] = dAp;
            sol.diagnostics.max_predictable_mismatch =
                std::max(sol.diagnostics.max_predictable_mismatch, std::abs(rho - (dA - dAp)));

            for (std::size_t b = 0; b < br.size(); ++b) {
                const double delta = (dA - dAp) - q * br[b].dM;
                sol.kbar_inc[id][b] = std::max(delta, 0.0) + 0.0;
                sol.kbarprime_inc[id][b] = std::max(-delta, 0.0) + 0.0;
                const double direct = y - child[b] - drift + rep.z * br[b].dmS;
                sol.diagnostics.max_reconstruction_error =
                    std::max(sol.diagnostics.max_reconstruction_error, std::abs(direct - delta));
            }
        }
    }
}

ConstraintReport check_constraints(const GameSolution& sol, const DefaultLattice& lattice) {
    ConstraintReport rep;
    rep.tolerance = 10.0 * sol.lipschitz * lattice.dt();
    bool any = false;
    for (std::size_t k = 0; k < lattice.n_steps(); ++k) {
        for (NodeId id = lattice.step_begin(k); id < lattice.step_end(k); ++id) {
            const double gap = sol.Ybar[id] - sol.obstacle[id];
            const auto& kb = sol.kbar_inc[id];
            const auto& kbp = sol.kbarprime_inc[id];
            rep.skorokhod_A += gap * sol.A_inc[id];
            rep.skorokhod_kbar += gap * (kb[0] + kb[1] + kb[2]);
            rep.singular_A += sol.A_inc[id] * sol.Aprime_inc[id];
            rep.singular_kbar += kb[0] * kbp[0] + kb[1] * kbp[1] + kb[2] * kbp[2];
            if (!(gap > 0.0)) continue;

            ++rep.nodes_above_obstacle;
            const double lambda = lattice.intensity(id);
            const double q = sol.jump_exposure[id];
            const double jump = q * lambda;
            // q lambda dt, written with the stored -lambda dt so the nu -> -1 limit cancels exactly
            const BranchSet br = lattice.branches(id);
            const double meas = sol.Aprime_inc[id] + q * move_dM(br);
            if (!any) {
                rep.min_jump_constraint = jump;
                rep.min_measure_constraint = meas;
                any = true;
            } else {
                rep.min_jump_constraint = std::min(rep.min_jump_constraint, jump);
                rep.min_measure_constraint = std::min(rep.min_measure_constraint, meas);
            }
        }
    }
    return rep;
}

StopRule epsilon_stop(const GameSolution& sol, const DefaultLattice& lattice, double epsilon) {
    if (!(epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
    return StopRule::from_predicate(lattice,
                                    [&](NodeId id) { return sol.Ybar[id] <= sol.obstacle[id] + epsilon; });
}

AdaptedField lower_value_field(const DefaultLattice& lattice, const Driver& fbar, const NuGrid& grid,
                               const StopRule& tau, const AdaptedField& obstacle) {
    grid.validate();
    check_field(lattice, obstacle, "obstacle");
    if (tau.size() != lattice.node_count()) throw Error(ErrorCode::InvalidArgument, "stop rule does not match lattice");
    require_contraction(controlled_lipschitz(fbar.lipschitz(), grid.max_abs(), lattice), lattice.dt());

    AdaptedField Y(lattice.node_count());
    std::array<double, 3> child{};
    for (std::size_t k = lattice.n_steps() + 1; k-- > 0;) {
        for (NodeId id = lattice.step_begin(k); id < lattice.step_end(k); ++id) {
            if (tau.stops(id)) {
                Y[id] = obstacle[id];
                continue;
            }
            const BranchSet br = lattice.branches(id);
            for (std::size_t b = 0; b < br.size(); ++b) child[b] = Y[br[b].child];
            const StepRepresentation rep = represent_step(br, {child.data(), br.size()});
            const double nu = select_nu(grid, lattice.intensity(id), jump_exposure(lattice, id, rep));
            Y[id] = controlled_step(lattice, fbar, id, rep, nu);
        }
    }
    return Y;
}

double lower_value(const DefaultLattice& lattice, const Driver& fbar, const NuGrid& grid, const StopRule& tau,
                   const AdaptedField& obstacle) {
    return lower_value_field(lattice, fbar, grid, tau, obstacle)[lattice.root()];
}

}  // namespace superhedge
