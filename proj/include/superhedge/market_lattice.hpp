#pragma once

// Discrete default lattice for the market driven by a Brownian motion W and a
// single default jump N with intensity lambda (compensated martingale M).
//
// Node layout per time step k:
//   * alive nodes, indexed by the number of up-moves a in [0, k];
//   * defaulted nodes, grouped in blocks keyed by (default step m, up-moves a
//     taken before default), each block holding the post-default up-move
//     count b in [0, k - m].
// The pre-default up-move count is part of the default tag because pre- and
// post-default price factors differ when beta * lambda != 0; without it the
// asset price would not be a function of the node.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace superhedge {

using NodeId = std::size_t;

/// Model coefficient: either one constant or one value per time step.
class Coefficient {
public:
    Coefficient(double value = 0.0) : constant_(value) {}  // NOLINT: implicit by design of the config API
    explicit Coefficient(std::vector<double> per_step);

    double at(std::size_t step) const {
        return steps_.empty() ? constant_ : steps_[step];
    }
    bool is_constant() const { return steps_.empty(); }
    const std::vector<double>& per_step() const { return steps_; }
    double sup_abs(std::size_t n_steps) const;

private:
    double constant_ = 0.0;
    std::vector<double> steps_;
};

struct MarketParams {
    Coefficient r{0.0};       ///< riskless rate per unit time
    Coefficient mu{0.0};      ///< drift per unit time
    Coefficient sigma{0.2};   ///< volatility per sqrt(unit time)
    Coefficient beta{0.0};    ///< relative price jump at default
    Coefficient lambda0{0.0}; ///< pre-default intensity per unit time
    double horizon = 1.0;
    double s0 = 100.0;

    /// Throws Error(InvalidParams) on sigma <= 0, beta <= -1, lambda0 < 0,
    /// non-finite values or per-step arrays of the wrong length.
    void validate(std::size_t n_steps) const;
};

enum class BranchKind : std::uint8_t { Default, Up, Down };

struct Branch {
    BranchKind kind = BranchKind::Up;
    double prob = 0.0;
    double dW = 0.0;
    double dN = 0.0;
    double dM = 0.0;
    double dmS = 0.0;  ///< dW + beta / sigma * dM
    NodeId child = 0;
};

/// Up to three branches, stored inline.
class BranchSet {
public:
    void push(const Branch& b) { items_[size_++] = b; }
    std::size_t size() const { return size_; }
    const Branch& operator[](std::size_t i) const { return items_[i]; }
    const Branch* begin() const { return items_.data(); }
    const Branch* end() const { return items_.data() + size_; }
    std::span<const Branch> view() const { return {items_.data(), size_}; }

private:
    std::array<Branch, 3> items_{};
    std::size_t size_ = 0;
};

struct DefaultTag {
    std::size_t step = 0;        ///< step index m at which N jumped (1 <= m <= k)
    std::size_t pre_up_moves = 0;///< Brownian up-moves among the m - 1 pre-default steps
};

struct NodeState {
    std::size_t step = 0;
    int j = 0;  ///< net Brownian up-moves
    std::optional<DefaultTag> default_tag;

    bool alive() const { return !default_tag.has_value(); }
};

class DefaultLattice {
public:
    std::size_t n_steps() const { return n_steps_; }
    double dt() const { return dt_; }
    double horizon() const { return params_.horizon; }
    const MarketParams& params() const { return params_; }
    std::size_t node_count() const { return prices_.size(); }

    NodeId root() const { return 0; }
    std::size_t step_begin(std::size_t k) const { return step_base_[k]; }
    std::size_t step_end(std::size_t k) const { return step_base_[k + 1]; }
    std::size_t alive_end(std::size_t k) const { return step_base_[k] + k + 1; }

    std::size_t step_of(NodeId id) const;
    bool is_terminal(NodeId id) const { return id >= step_base_[n_steps_]; }
    bool is_alive(NodeId id) const { return id < alive_end(step_of(id)); }

    NodeState state(NodeId id) const;
    /// Node of an alive state; throws UnknownNode.
    NodeId alive_node(std::size_t k, std::size_t up_moves) const;
    /// Node of a defaulted state; throws UnknownNode.
    NodeId defaulted_node(std::size_t k, DefaultTag tag, std::size_t post_up_moves) const;
    /// Lookup by the public state triple; throws UnknownNode.
    NodeId find(const NodeState& s) const;

    BranchSet branches(NodeId id) const;
    double price(NodeId id) const { return prices_.at(id); }
    /// lambda_t at the node: lambda0 of its step when alive, zero after default.
    double intensity(NodeId id) const;
    double time(NodeId id) const { return static_cast<double>(step_of(id)) * dt_; }
    double beta_over_sigma(std::size_t step) const { return beta_over_sigma_[step]; }

private:
    friend DefaultLattice build_lattice(const MarketParams& params, std::size_t n_steps);

    struct StepTemplate {
        double p_default = 0.0;
        double p_move = 0.0;       // probability of each Brownian move
        double dM_default = 0.0;   // 1 - lambda dt
        double dM_move = 0.0;      // -lambda dt
        double dmS_default = 0.0;
        double dmS_up = 0.0;
        double dmS_down = 0.0;
        bool has_default = false;
    };

    std::size_t block_offset(std::size_t k, std::size_t m) const;

    MarketParams params_;
    std::size_t n_steps_ = 0;
    double dt_ = 0.0;
    double sqrt_dt_ = 0.0;
    std::vector<std::size_t> step_base_;          // size n + 2
    std::vector<std::size_t> default_steps_;      // m with lambda0[m-1] * dt > 0, ascending
    // block_start_[k][i]: offset (after alive nodes) of block default_steps_[i] at step k
    std::vector<std::vector<std::size_t>> block_start_;
    std::vector<StepTemplate> alive_templates_;   // per step 0..n-1
    std::vector<double> post_default_dmS_up_;     // per step
    std::vector<double> beta_over_sigma_;         // per step
    std::vector<double> prices_;
};

/// Builds the lattice. Errors: InvalidParams, IntensityTooLarge (lambda0 * dt >= 1),
/// NegativePriceFactor (a one-step factor <= 0), NonRecombiningCoefficients.
DefaultLattice build_lattice(const MarketParams& params, std::size_t n_steps);

/// Branch data of a node (copy of the stored per-step template with children filled in).
BranchSet branch_increments(const DefaultLattice& lattice, NodeId node);

double asset_price(const DefaultLattice& lattice, NodeId node);

/// One real value per lattice node.
class AdaptedField {
public:
    AdaptedField() = default;
    explicit AdaptedField(std::size_t size, double value = 0.0) : values_(size, value) {}
    explicit AdaptedField(std::vector<double> values) : values_(std::move(values)) {}

    double& operator[](NodeId id) { return values_[id]; }
    double operator[](NodeId id) const { return values_[id]; }
    std::size_t size() const { return values_.size(); }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    bool all_finite() const;

private:
    std::vector<double> values_;
};

/// Field with value f(price) on every node.
template <class Fn>
AdaptedField field_from_price(const DefaultLattice& lattice, Fn&& fn) {
    AdaptedField out(lattice.node_count());
    for (NodeId id = 0; id < lattice.node_count(); ++id) out[id] = fn(lattice.price(id));
    return out;
}

}  // namespace superhedge
