#include "superhedge/market_lattice.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "superhedge/error.hpp"

namespace superhedge {

Coefficient::Coefficient(std::vector<double> per_step) : steps_(std::move(per_step)) {
    if (steps_.empty()) throw Error(ErrorCode::InvalidParams, "per-step coefficient array is empty");
    constant_ = steps_.front();
}

double Coefficient::sup_abs(std::size_t n_steps) const {
    if (steps_.empty()) return std::abs(constant_);
    double s = 0.0;
    for (std::size_t k = 0; k < std::min(n_steps, steps_.size()); ++k) s = std::max(s, std::abs(steps_[k]));
    return s;
}

namespace {

void check_coefficient(const Coefficient& c, const char* name, std::size_t n_steps) {
    if (!c.is_constant() && c.per_step().size() != n_steps) {
        std::ostringstream msg;
        msg << name << " has " << c.per_step().size() << " per-step values, expected " << n_steps;
        throw Error(ErrorCode::InvalidParams, msg.str());
    }
    for (std::size_t k = 0; k < n_steps; ++k) {
        if (!std::isfinite(c.at(k))) {
            throw Error(ErrorCode::InvalidParams, std::string(name) + " is not finite");
        }
    }
}

}  // namespace

void MarketParams::validate(std::size_t n_steps) const {
    if (n_steps == 0) throw Error(ErrorCode::InvalidParams, "n_steps must be positive");
    if (!std::isfinite(horizon) || horizon <= 0.0) throw Error(ErrorCode::InvalidParams, "horizon must be positive");
    if (!std::isfinite(s0) || s0 <= 0.0) throw Error(ErrorCode::InvalidParams, "s0 must be positive");
    check_coefficient(r, "r", n_steps);
    check_coefficient(mu, "mu", n_steps);
    check_coefficient(sigma, "sigma", n_steps);
    check_coefficient(beta, "beta", n_steps);
    check_coefficient(lambda0, "lambda0", n_steps);
    for (std::size_t k = 0; k < n_steps; ++k) {
        if (sigma.at(k) <= 0.0) throw Error(ErrorCode::InvalidParams, "sigma must be > 0 at every step");
        if (beta.at(k) <= -1.0) throw Error(ErrorCode::InvalidParams, "beta must be > -1 at every step");
        if (lambda0.at(k) < 0.0) throw Error(ErrorCode::InvalidParams, "lambda0 must be >= 0 at every step");
    }
}

bool AdaptedField::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

DefaultLattice build_lattice(const MarketParams& params, std::size_t n_steps) {
    params.validate(n_steps);

    DefaultLattice lat;
    lat.params_ = params;
    lat.n_steps_ = n_steps;
    lat.dt_ = params.horizon / static_cast<double>(n_steps);
    lat.sqrt_dt_ = std::sqrt(lat.dt_);
    const double dt = lat.dt_;
    const double sq = lat.sqrt_dt_;

    struct Factors {
        double up, down, dflt, post_up, post_down;
    };
    std::vector<Factors> factors(n_steps);

    lat.alive_templates_.resize(n_steps);
    lat.post_default_dmS_up_.resize(n_steps);
    lat.beta_over_sigma_.resize(n_steps);
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double lam_dt = params.lambda0.at(k) * dt;
        if (lam_dt >= 1.0) {
            std::ostringstream msg;
            msg << "lambda0 * dt = " << lam_dt << " >= 1 at step " << k << "; increase n_steps";
            throw Error(ErrorCode::IntensityTooLarge, msg.str());
        }
        const double mu = params.mu.at(k);
        const double sig = params.sigma.at(k);
        const double beta = params.beta.at(k);
        const double bos = beta / sig;
        lat.beta_over_sigma_[k] = bos;

        auto& t = lat.alive_templates_[k];
        t.has_default = lam_dt > 0.0;
        t.p_default = lam_dt;
        t.p_move = (1.0 - lam_dt) / 2.0;
        t.dM_default = 1.0 - lam_dt;
        t.dM_move = -lam_dt;
        t.dmS_default = bos * t.dM_default;
        t.dmS_up = sq + bos * t.dM_move;
        t.dmS_down = -sq + bos * t.dM_move;
        lat.post_default_dmS_up_[k] = sq;

        const double drift = 1.0 + mu * dt;
        factors[k] = Factors{drift + sig * sq + beta * t.dM_move, drift - sig * sq + beta * t.dM_move,
                             drift + beta * t.dM_default, drift + sig * sq, drift - sig * sq};
        const auto& f = factors[k];
        const bool bad = f.up <= 0.0 || f.down <= 0.0 || f.post_up <= 0.0 || f.post_down <= 0.0 ||
                         (t.has_default && f.dflt <= 0.0);
        if (bad) {
            std::ostringstream msg;
            msg << "non-positive one-step price factor at step " << k << "; refine n_steps or shrink coefficients";
            throw Error(ErrorCode::NegativePriceFactor, msg.str());
        }
        if (t.has_default) lat.default_steps_.push_back(k + 1);
    }

    for (std::size_t k = 1; k < n_steps; ++k) {
        if (factors[k].up != factors[0].up || factors[k].down != factors[0].down) {
            throw Error(ErrorCode::NonRecombiningCoefficients,
                        "pre-default price factors vary with time (mu, sigma and beta*lambda0 must be constant)");
        }
    }
    if (!lat.default_steps_.empty()) {
        const std::size_t first = lat.default_steps_.front();
        for (std::size_t k = first + 1; k < n_steps; ++k) {
            if (factors[k].post_up != factors[first].post_up || factors[k].post_down != factors[first].post_down) {
                throw Error(ErrorCode::NonRecombiningCoefficients,
                            "post-default price factors vary with time (mu and sigma must be constant)");
            }
        }
    }

    // Node layout.
    lat.step_base_.assign(n_steps + 2, 0);
    lat.block_start_.resize(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k) {
        std::size_t count = k + 1;
        std::size_t off = 0;
        for (std::size_t m : lat.default_steps_) {
            if (m > k) break;
            lat.block_start_[k].push_back(off);
            off += m * (k - m + 1);
        }
        count += off;
        lat.step_base_[k + 1] = lat.step_base_[k] + count;
    }

    lat.prices_.assign(lat.step_base_[n_steps + 1], 0.0);
    lat.prices_[0] = params.s0;
    for (std::size_t k = 0; k < n_steps; ++k) {
        const auto& f = factors[k];
        const std::size_t next = k + 1;
        lat.prices_[lat.alive_node(next, 0)] = lat.prices_[lat.alive_node(k, 0)] * f.down;
        for (std::size_t a = 1; a <= next; ++a) {
            lat.prices_[lat.alive_node(next, a)] = lat.prices_[lat.alive_node(k, a - 1)] * f.up;
        }
        for (std::size_t m : lat.default_steps_) {
            if (m > next) break;
            for (std::size_t a = 0; a < m; ++a) {
                const DefaultTag tag{m, a};
                if (m == next) {
                    lat.prices_[lat.defaulted_node(next, tag, 0)] = lat.prices_[lat.alive_node(k, a)] * f.dflt;
                    continue;
                }
                lat.prices_[lat.defaulted_node(next, tag, 0)] = lat.prices_[lat.defaulted_node(k, tag, 0)] * f.post_down;
                for (std::size_t b = 1; b <= next - m; ++b) {
                    lat.prices_[lat.defaulted_node(next, tag, b)] =
                        lat.prices_[lat.defaulted_node(k, tag, b - 1)] * f.post_up;
                }
            }
        }
    }
    return lat;
}

std::size_t DefaultLattice::step_of(NodeId id) const {
    if (id >= prices_.size()) throw Error(ErrorCode::UnknownNode, "node id out of range");
    auto it = std::upper_bound(step_base_.begin(), step_base_.end(), id);
    return static_cast<std::size_t>(it - step_base_.begin()) - 1;
}

std::size_t DefaultLattice::block_offset(std::size_t k, std::size_t m) const {
    auto it = std::lower_bound(default_steps_.begin(), default_steps_.end(), m);
    if (it == default_steps_.end() || *it != m || m > k) {
        throw Error(ErrorCode::UnknownNode, "no default can occur at the requested step");
    }
    return block_start_[k][static_cast<std::size_t>(it - default_steps_.begin())];
}

NodeId DefaultLattice::alive_node(std::size_t k, std::size_t up_moves) const {
    if (k > n_steps_ || up_moves > k) throw Error(ErrorCode::UnknownNode, "alive state out of range");
    return step_base_[k] + up_moves;
}

NodeId DefaultLattice::defaulted_node(std::size_t k, DefaultTag tag, std::size_t post_up_moves) const {
    if (k > n_steps_ || tag.step == 0 || tag.step > k || tag.pre_up_moves >= tag.step ||
        post_up_moves > k - tag.step) {
        throw Error(ErrorCode::UnknownNode, "defaulted state out of range");
    }
    const std::size_t len = k - tag.step + 1;
    return step_base_[k] + (k + 1) + block_offset(k, tag.step) + tag.pre_up_moves * len + post_up_moves;
}

NodeState DefaultLattice::state(NodeId id) const {
    const std::size_t k = step_of(id);
    const std::size_t o = id - step_base_[k];
    NodeState s;
    s.step = k;
    if (o <= k) {
        s.j = 2 * static_cast<int>(o) - static_cast<int>(k);
        return s;
    }
    const std::size_t rest = o - (k + 1);
    const auto& starts = block_start_[k];
    auto it = std::upper_bound(starts.begin(), starts.end(), rest);
    const std::size_t i = static_cast<std::size_t>(it - starts.begin()) - 1;
    const std::size_t m = default_steps_[i];
    const std::size_t len = k - m + 1;
    const std::size_t r = rest - starts[i];
    const std::size_t a = r / len;
    const std::size_t b = r % len;
    s.j = (2 * static_cast<int>(a) - static_cast<int>(m - 1)) + (2 * static_cast<int>(b) - static_cast<int>(k - m));
    s.default_tag = DefaultTag{m, a};
    return s;
}

NodeId DefaultLattice::find(const NodeState& s) const {
    const int k = static_cast<int>(s.step);
    if (s.alive()) {
        const int twice = s.j + k;
        if (twice < 0 || twice % 2 != 0) throw Error(ErrorCode::UnknownNode, "alive state has wrong parity");
        return alive_node(s.step, static_cast<std::size_t>(twice / 2));
    }
    const auto& tag = *s.default_tag;
    const int m = static_cast<int>(tag.step);
    const int pre = 2 * static_cast<int>(tag.pre_up_moves) - (m - 1);
    const int twice = (s.j - pre) + (k - m);
    if (twice < 0 || twice % 2 != 0) throw Error(ErrorCode::UnknownNode, "defaulted state has wrong parity");
    return defaulted_node(s.step, tag, static_cast<std::size_t>(twice / 2));
}

double DefaultLattice::intensity(NodeId id) const {
    const std::size_t k = step_of(id);
    if (!is_alive(id) || k >= n_steps_) return 0.0;
    return params_.lambda0.at(k);
}

BranchSet DefaultLattice::branches(NodeId id) const {
    BranchSet out;
    const std::size_t k = step_of(id);
    if (k >= n_steps_) return out;
    const std::size_t o = id - step_base_[k];
    if (o <= k) {
        const auto& t = alive_templates_[k];
        if (t.has_default) {
            out.push(Branch{BranchKind::Default, t.p_default, 0.0, 1.0, t.dM_default, t.dmS_default,
                            defaulted_node(k + 1, DefaultTag{k + 1, o}, 0)});
        }
        out.push(Branch{BranchKind::Up, t.p_move, sqrt_dt_, 0.0, t.dM_move, t.dmS_up, alive_node(k + 1, o + 1)});
        out.push(Branch{BranchKind::Down, t.p_move, -sqrt_dt_, 0.0, t.dM_move, t.dmS_down, alive_node(k + 1, o)});
        return out;
    }
    const NodeState s = state(id);
    const auto tag = *s.default_tag;
    const std::size_t len = k - tag.step + 1;
    const std::size_t b = (id - step_base_[k] - (k + 1) - block_offset(k, tag.step)) % len;
    const double up = post_default_dmS_up_[k];
    out.push(Branch{BranchKind::Up, 0.5, sqrt_dt_, 0.0, 0.0, up, defaulted_node(k + 1, tag, b + 1)});
    out.push(Branch{BranchKind::Down, 0.5, -sqrt_dt_, 0.0, 0.0, -up, defaulted_node(k + 1, tag, b)});
    return out;
}

BranchSet branch_increments(const DefaultLattice& lattice, NodeId node) {
    if (node >= lattice.node_count()) throw Error(ErrorCode::UnknownNode, "node id out of range");
    return lattice.branches(node);
}

double asset_price(const DefaultLattice& lattice, NodeId node) {
    if (node >= lattice.node_count()) throw Error(ErrorCode::UnknownNode, "node id out of range");
    return lattice.price(node);
}

}  // namespace superhedge
