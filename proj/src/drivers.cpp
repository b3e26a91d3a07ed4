#include "superhedge/drivers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "superhedge/error.hpp"

namespace superhedge {

NodeContext context_at(const DefaultLattice& lattice, NodeId node) {
    const std::size_t k = lattice.step_of(node);
    return NodeContext{node, std::min(k, lattice.n_steps() - 1), lattice.time(node), lattice.intensity(node)};
}

Driver::Driver(std::string name, EvalFn eval, double lipschitz, bool depends_on_k,
               std::optional<CertificateFn> certificate)
    : name_(std::move(name)),
      eval_(std::move(eval)),
      lipschitz_(lipschitz),
      depends_on_k_(depends_on_k),
      certificate_(std::move(certificate)) {
    if (!eval_) throw Error(ErrorCode::InvalidArgument, "driver needs an evaluation function");
    if (!(lipschitz_ >= 0.0) || !std::isfinite(lipschitz_)) {
        throw Error(ErrorCode::InvalidArgument, "driver lambda-constant must be finite and >= 0");
    }
}

ControlProcess ControlProcess::constant(double level) {
    ControlProcess c;
    c.constant_ = level;
    c.upper_bound_ = level;
    if (!(level > -1.0) || !std::isfinite(level)) {
        throw Error(ErrorCode::InvalidControl, "control level must be finite and > -1");
    }
    return c;
}

ControlProcess::ControlProcess(std::vector<double> per_node, double upper_bound)
    : upper_bound_(upper_bound), per_node_(std::move(per_node)) {
    if (per_node_.empty()) throw Error(ErrorCode::InvalidControl, "per-node control is empty");
}

double ControlProcess::max_abs() const {
    if (per_node_.empty()) return std::abs(constant_);
    double m = 0.0;
    for (double v : per_node_) m = std::max(m, std::abs(v));
    return std::max(m, std::abs(upper_bound_));
}

void ControlProcess::validate(const DefaultLattice& lattice) const {
    if (per_node_.empty()) return;  // checked at construction
    if (per_node_.size() != lattice.node_count()) {
        throw Error(ErrorCode::InvalidControl, "per-node control has the wrong size");
    }
    for (std::size_t k = 0; k < lattice.n_steps(); ++k) {
        for (NodeId id = lattice.step_begin(k); id < lattice.alive_end(k); ++id) {
            const double v = per_node_[id];
            if (!(v > -1.0) || v > upper_bound_ || !std::isfinite(v)) {
                throw Error(ErrorCode::InvalidControl, "control must satisfy -1 < nu <= upper bound on alive nodes");
            }
        }
    }
}

namespace {

struct StepCoefficients {
    std::vector<double> r;
    std::vector<double> theta;
};

StepCoefficients step_coefficients(const MarketParams& params, std::size_t n_steps) {
    params.validate(n_steps);
    StepCoefficients c;
    c.r.resize(n_steps);
    c.theta.resize(n_steps);
    for (std::size_t k = 0; k < n_steps; ++k) {
        c.r[k] = params.r.at(k);
        c.theta[k] = (params.mu.at(k) - params.r.at(k)) / params.sigma.at(k);
    }
    return c;
}

double sup_abs(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s = std::max(s, std::abs(x));
    return s;
}

}  // namespace

Driver linear_wealth_driver(const MarketParams& params, std::size_t n_steps) {
    auto c = step_coefficients(params, n_steps);
    const double lip = std::max(sup_abs(c.r), sup_abs(c.theta));
    return Driver(
        "linear",
        [c = std::move(c)](const NodeContext& ctx, double y, double z, double) {
            return -c.r[ctx.step] * y - c.theta[ctx.step] * z;
        },
        lip, false);
}

Driver two_rate_wealth_driver(const MarketParams& params, std::size_t n_steps, double borrow_rate) {
    auto c = step_coefficients(params, n_steps);
    for (double r : c.r) {
        if (borrow_rate < r) throw Error(ErrorCode::InvalidArgument, "borrow rate must be >= lending rate");
    }
    const double lip = std::max({sup_abs(c.r), std::abs(borrow_rate), sup_abs(c.theta)});
    return Driver(
        "two_rate",
        [c = std::move(c), borrow_rate](const NodeContext& ctx, double y, double z, double) {
            const double pos = std::max(y, 0.0);
            const double neg = std::max(-y, 0.0);
            return -c.r[ctx.step] * pos + borrow_rate * neg - c.theta[ctx.step] * z;
        },
        lip, false);
}

Driver zero_driver() {
    return Driver("zero", [](const NodeContext&, double, double, double) { return 0.0; }, 0.0, false);
}

Driver dual_driver(const Driver& f) {
    if (f.depends_on_k()) throw Error(ErrorCode::InvalidArgument, "dual_driver needs a driver independent of k");
    return Driver(
        "dual(" + f.name() + ")",
        [f](const NodeContext& ctx, double y, double z, double) { return -f(ctx, -y, -z, 0.0); },
        f.lipschitz(), false);
}

double controlled_lipschitz(double fbar_lipschitz, double nu_abs_max, const DefaultLattice& lattice) {
    double worst = 0.0;
    const auto& p = lattice.params();
    for (std::size_t k = 0; k < lattice.n_steps(); ++k) {
        const double lam = p.lambda0.at(k);
        worst = std::max(worst, std::sqrt(lam) + lam * std::abs(lattice.beta_over_sigma(k)));
    }
    return fbar_lipschitz + nu_abs_max * worst;
}

Driver controlled_driver(const Driver& fbar, const ControlProcess& nu, const DefaultLattice& lattice) {
    if (fbar.depends_on_k()) throw Error(ErrorCode::InvalidArgument, "controlled_driver needs fbar independent of k");
    nu.validate(lattice);
    const double nu_abs = std::max(nu.max_abs(), std::abs(nu.upper_bound()));
    const double lip = controlled_lipschitz(fbar.lipschitz(), nu_abs, lattice);
    std::vector<double> bos(lattice.n_steps());
    for (std::size_t k = 0; k < lattice.n_steps(); ++k) bos[k] = lattice.beta_over_sigma(k);

    auto eval = [fbar, nu, bos](const NodeContext& ctx, double y, double z, double k) {
        return fbar(ctx, y, z, 0.0) + control_term(nu.at(ctx.node), ctx.intensity, k, z, bos[ctx.step]);
    };
    auto gamma = [nu](const NodeContext& ctx, double, double, double, double) { return nu.at(ctx.node); };
    return Driver("controlled(" + fbar.name() + ")", std::move(eval), lip, true, Driver::CertificateFn(gamma));
}

AdmissibilityReport admissibility_check(const Driver& g, const SampleSpec& spec) {
    if (spec.contexts.empty()) throw Error(ErrorCode::InvalidArgument, "admissibility_check needs sample contexts");
    std::mt19937_64 rng(spec.seed);
    auto draw = [&rng](std::pair<double, double> range) {
        std::uniform_real_distribution<double> u(range.first, range.second);
        return u(rng);
    };
    std::uniform_int_distribution<std::size_t> pick(0, spec.contexts.size() - 1);

    AdmissibilityReport rep;
    const double c = g.lipschitz();
    for (std::size_t i = 0; i < spec.count; ++i) {
        const NodeContext& ctx = spec.contexts[pick(rng)];
        const double y1 = draw(spec.y_range), y2 = draw(spec.y_range);
        const double z1 = draw(spec.z_range), z2 = draw(spec.z_range);
        const double k1 = draw(spec.k_range), k2 = draw(spec.k_range);
        // alternate joint and single-coordinate perturbations so each weight is probed alone
        double dy = y1 - y2, dz = z1 - z2, dk = k1 - k2;
        switch (i % 4) {
            case 1: dz = 0.0; dk = 0.0; break;
            case 2: dy = 0.0; dk = 0.0; break;
            case 3: dy = 0.0; dz = 0.0; break;
            default: break;
        }
        const double denom = std::abs(dy) + std::abs(dz) + std::sqrt(ctx.intensity) * std::abs(dk);
        const double diff = std::abs(g(ctx, y2 + dy, z2 + dz, k2 + dk) - g(ctx, y2, z2, k2));
        if (denom > 0.0) {
            rep.max_lipschitz_ratio = std::max(rep.max_lipschitz_ratio, diff / denom);
        } else if (diff > 0.0) {
            rep.max_lipschitz_ratio = std::numeric_limits<double>::infinity();
        }

        if (g.certificate()) {
            const double gamma = (*g.certificate())(ctx, y1, z1, k1, k2);
            double v = std::max(-1.0 - gamma, std::abs(gamma * std::sqrt(ctx.intensity)) - c);
            const double lhs = g(ctx, y1, z1, k1) - g(ctx, y1, z1, k2);
            v = std::max(v, gamma * (k1 - k2) * ctx.intensity - lhs);
            rep.max_comparison_violation = std::max(rep.max_comparison_violation, v);
        }
    }
    rep.lipschitz_ok = rep.max_lipschitz_ratio <= c + kComparisonTolerance * (1.0 + c);
    rep.comparison_ok = rep.max_comparison_violation <= kComparisonTolerance;
    return rep;
}

std::vector<NodeContext> sample_contexts(const DefaultLattice& lattice) {
    std::vector<NodeContext> out;
    for (std::size_t k = 0; k < lattice.n_steps(); ++k) {
        out.push_back(context_at(lattice, lattice.step_begin(k)));
        if (lattice.step_end(k) > lattice.alive_end(k)) out.push_back(context_at(lattice, lattice.alive_end(k)));
    }
    return out;
}

}  // namespace superhedge
