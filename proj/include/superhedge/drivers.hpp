#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "superhedge/market_lattice.hpp"

namespace superhedge {

/// Where a driver is evaluated: the node, its step, time and intensity.
struct NodeContext {
    NodeId node = 0;
    std::size_t step = 0;
    double time = 0.0;
    double intensity = 0.0;
};

NodeContext context_at(const DefaultLattice& lattice, NodeId node);

/// A lambda-admissible driver g(t, y, z, k) with its lambda-constant and an
/// optional comparison certificate gamma(t, y, z, k1, k2).
class Driver {
public:
    using EvalFn = std::function<double(const NodeContext&, double y, double z, double k)>;
    using CertificateFn = std::function<double(const NodeContext&, double y, double z, double k1, double k2)>;

    Driver(std::string name, EvalFn eval, double lipschitz, bool depends_on_k,
           std::optional<CertificateFn> certificate = std::nullopt);

    double operator()(const NodeContext& ctx, double y, double z, double k = 0.0) const {
        return eval_(ctx, y, z, k);
    }
    double lipschitz() const { return lipschitz_; }
    bool depends_on_k() const { return depends_on_k_; }
    const std::optional<CertificateFn>& certificate() const { return certificate_; }
    const std::string& name() const { return name_; }

private:
    std::string name_;
    EvalFn eval_;
    double lipschitz_;
    bool depends_on_k_;
    std::optional<CertificateFn> certificate_;
};

/// Control nu > -1 per alive node (constant or per node), bounded above.
class ControlProcess {
public:
    static ControlProcess constant(double level);
    ControlProcess(std::vector<double> per_node, double upper_bound);

    double at(NodeId id) const { return per_node_.empty() ? constant_ : per_node_[id]; }
    double upper_bound() const { return upper_bound_; }
    double max_abs() const;
    bool is_constant() const { return per_node_.empty(); }

    /// Throws InvalidControl unless -1 < nu <= upper_bound on every alive node.
    void validate(const DefaultLattice& lattice) const;

private:
    ControlProcess() = default;
    double constant_ = 0.0;
    double upper_bound_ = 0.0;
    std::vector<double> per_node_;
};

/// The affine control term nu * lambda * (k - beta / sigma * z); exactly +0 when lambda = 0.
inline double control_term(double nu, double intensity, double k, double z, double beta_over_sigma) {
    if (intensity == 0.0) return 0.0;
    return nu * intensity * (k - beta_over_sigma * z);
}

// Wealth drivers f(t, y, z); none of them depends on k and all vanish at (0, 0).

/// f = -r y - theta z with theta = (mu - r) / sigma.
Driver linear_wealth_driver(const MarketParams& params, std::size_t n_steps);
/// f = -r y^+ + R y^- - theta z (lending at r, borrowing at R >= r).
Driver two_rate_wealth_driver(const MarketParams& params, std::size_t n_steps, double borrow_rate);
Driver zero_driver();

/// fbar(t, y, z) = -f(t, -y, -z). Throws InvalidArgument if f depends on k.
Driver dual_driver(const Driver& f);

/// fbar^nu = fbar + nu lambda (k - beta sigma^-1 z), with certificate gamma = nu.
/// Throws InvalidControl if nu <= -1 somewhere on the alive nodes.
Driver controlled_driver(const Driver& fbar, const ControlProcess& nu, const DefaultLattice& lattice);

/// lambda-constant of fbar^nu when |nu| <= nu_abs_max.
double controlled_lipschitz(double fbar_lipschitz, double nu_abs_max, const DefaultLattice& lattice);

struct SampleSpec {
    std::size_t count = 10000;
    std::pair<double, double> y_range{-50.0, 50.0};
    std::pair<double, double> z_range{-50.0, 50.0};
    std::pair<double, double> k_range{-50.0, 50.0};
    std::uint64_t seed = 7;
    std::vector<NodeContext> contexts;  ///< sampled uniformly; must be non-empty
};

struct AdmissibilityReport {
    double max_lipschitz_ratio = 0.0;
    double max_comparison_violation = 0.0;  ///< 0 when no certificate is declared
    bool lipschitz_ok = true;
    bool comparison_ok = true;
    bool passed() const { return lipschitz_ok && comparison_ok; }
};

inline constexpr double kComparisonTolerance = 1e-12;

AdmissibilityReport admissibility_check(const Driver& g, const SampleSpec& spec);

/// One alive and (when present) one defaulted context per step.
std::vector<NodeContext> sample_contexts(const DefaultLattice& lattice);

}  // namespace superhedge
