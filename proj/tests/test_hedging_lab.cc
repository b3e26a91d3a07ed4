#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "oracles.hpp"
#include "superhedge/error.hpp"
#include "superhedge/hedging_lab.hpp"

using namespace superhedge;

namespace {

MarketParams ref_params(double lambda0 = 0.1, double beta = -0.3) {
    MarketParams p;
    p.r = 0.03;
    p.mu = 0.05;
    p.sigma = 0.2;
    p.beta = beta;
    p.lambda0 = lambda0;
    return p;
}

AdaptedField put_payoff(const DefaultLattice& lat, double strike) {
    return field_from_price(lat, [strike](double s) { return std::max(strike - s, 0.0); });
}

struct Market {
    explicit Market(std::size_t n, MarketParams p = ref_params())
        : params(p), lat(build_lattice(p, n)), f(linear_wealth_driver(p, n)), fbar(dual_driver(f)),
          xi(put_payoff(lat, 100.0)), sol(solve_buyer_price(lat, fbar, xi)) {}
    MarketParams params;
    DefaultLattice lat;
    Driver f;
    Driver fbar;
    AdaptedField xi;
    GameSolution sol;
};

// Smallest V_tau + xi_tau over every path when starting from x0 with strategy phi.
double min_slack_from(const Market& s, double x0, const AdaptedField& phi, const StopRule& tau) {
    double worst = INFINITY;
    std::function<void(NodeId, double)> walk = [&](NodeId id, double v) {
        if (tau.stops(id)) {
            worst = std::min(worst, v + s.xi[id]);
            return;
        }
        for (const auto& b : s.lat.branches(id)) walk(b.child, wealth_step(s.lat, s.f, id, b, v, phi[id]));
    };
    walk(s.lat.root(), x0);
    return worst;
}

}  // namespace

TEST(HedgeStrategy, ConstantObstacleHoldsNothing) {
    const auto lat = build_lattice(ref_params(), 8);
    const auto sol = solve_buyer_price(lat, zero_driver(), AdaptedField(lat.node_count(), 2.0));
    const auto phi = hedge_strategy(sol, lat);
    for (NodeId id = 0; id < lat.node_count(); ++id) EXPECT_EQ(phi[id], 0.0);
}

TEST(HedgeStrategy, DirectFormula) {
    const auto lat = build_lattice(ref_params(), 4);
    GameSolution sol;
    sol.Zbar = AdaptedField(lat.node_count(), 0.05);
    const auto phi = hedge_strategy(sol, lat);
    EXPECT_DOUBLE_EQ(phi[lat.root()], -0.25);
    EXPECT_EQ(phi[lat.node_count() - 1], 0.0);
}

TEST(HedgeStrategy, CompleteMarketRootIsMinusCrrDelta) {
    Market s(100, ref_params(0.0, 0.0));
    const auto crr = oracle::crr_american_put(100.0, 100.0, 0.03, 0.05, 0.2, 1.0, 100);
    const auto phi = hedge_strategy(s.sol, s.lat);
    // phi is the amount held in the asset, delta the number of units
    EXPECT_NEAR(phi[s.lat.root()], -100.0 * crr.delta, 1e-10);
}

TEST(SimulateWealth, NoTradingNoDriverKeepsWealth) {
    const auto lat = build_lattice(ref_params(), 6);
    const std::vector<std::uint8_t> path{1, 2, 0, 1, 1, 0};
    const auto tr = simulate_wealth(lat, 3.5, AdaptedField(lat.node_count()), zero_driver(), path);
    ASSERT_EQ(tr.wealth.size(), 7u);
    for (double v : tr.wealth) EXPECT_EQ(v, 3.5);
}

TEST(SimulateWealth, TelescopesCompositeMartingale) {
    const auto lat = build_lattice(ref_params(), 6);
    const AdaptedField unit(lat.node_count(), 1.0 / 0.2);  // phi sigma = 1
    const std::vector<std::uint8_t> path{1, 2, 0, 1, 1, 0};
    const auto tr = simulate_wealth(lat, 0.0, unit, zero_driver(), path);
    double sum = 0.0;
    NodeId node = lat.root();
    for (std::uint8_t b : path) {
        const auto br = lat.branches(node);
        sum += br[b].dmS;
        node = br[b].child;
    }
    EXPECT_EQ(tr.nodes.back(), node);
    EXPECT_NEAR(tr.wealth.back(), sum, 1e-14);
}

TEST(SimulateWealth, RejectsInvalidPaths) {
    const auto lat = build_lattice(ref_params(), 4);
    const AdaptedField phi(lat.node_count());
    const std::vector<std::uint8_t> after_default{0, 2};  // defaulted nodes have two branches
    EXPECT_THROW(simulate_wealth(lat, 0.0, phi, zero_driver(), after_default), Error);
    const std::vector<std::uint8_t> too_long(5, 1);
    EXPECT_THROW(simulate_wealth(lat, 0.0, phi, zero_driver(), too_long), Error);
    EXPECT_THROW(simulate_wealth(lat, 0.0, AdaptedField(3), zero_driver(), std::vector<std::uint8_t>{1}), Error);
}

TEST(VerifySuperhedge, ConstantObstacleHasZeroSlack) {
    const auto lat = build_lattice(ref_params(), 6);
    const auto sol = solve_buyer_price(lat, zero_driver(), AdaptedField(lat.node_count(), 4.0));
    const auto rep = verify_superhedge(lat, sol, 0.0, zero_driver());
    EXPECT_EQ(rep.mode, EnumerationMode::Exhaustive);
    ASSERT_EQ(rep.path_count, 1u);
    EXPECT_EQ(rep.records[0].slack, 0.0);
    EXPECT_EQ(rep.min_slack, 0.0);
    EXPECT_TRUE(rep.passed(kSuperhedgeTolerance));
}

TEST(VerifySuperhedge, CompleteMarketExactHedge) {
    Market s(10, ref_params(0.0, 0.0));
    const auto rep = verify_superhedge(s.lat, s.sol, 0.0, s.f);
    EXPECT_EQ(rep.mode, EnumerationMode::Exhaustive);
    EXPECT_GE(rep.min_slack, -1e-9);
    EXPECT_GE(rep.min_margin, -1e-9);
    EXPECT_TRUE(rep.passed(kSuperhedgeTolerance));
}

TEST(VerifySuperhedge, ReferenceScenarioExhaustive) {
    Market s(10);
    const auto rep = verify_superhedge(s.lat, s.sol, 0.01, s.f);
    EXPECT_EQ(rep.mode, EnumerationMode::Exhaustive);
    EXPECT_GE(rep.min_slack, -0.01 - 1e-9);
    EXPECT_GE(rep.min_margin, -1e-9);
    EXPECT_TRUE(rep.passed(kSuperhedgeTolerance));
    double total = 0.0;
    for (const auto& r : rep.records) {
        total += r.probability;
        EXPECT_EQ(r.slack, r.wealth + r.payoff);
        EXPECT_LE(s.sol.Ybar[r.stop_node], s.xi[r.stop_node] + 0.01);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(VerifySuperhedge, ShortfallShrinksWithEpsilon) {
    // Stopping closer to the obstacle can only reduce the shortfall below zero.
    Market s(10);
    double prev = -INFINITY;
    for (double eps : {0.5, 0.2, 0.1, 0.05, 0.01, 0.001, 0.0}) {
        const double slack = verify_superhedge(s.lat, s.sol, eps, s.f).min_slack;
        EXPECT_GE(slack, -eps - 1e-9);
        EXPECT_GE(slack, prev - 1e-12) << eps;
        prev = slack;
    }
}

TEST(VerifySuperhedge, MoreCapitalThanThePriceIsNotCertified) {
    Market s(10);
    const auto phi = hedge_strategy(s.sol, s.lat);
    const auto tau = epsilon_stop(s.sol, s.lat, 0.0);
    const double y0 = s.sol.Ybar[s.lat.root()];
    EXPECT_GE(min_slack_from(s, -y0, phi, tau), -1e-9);
    EXPECT_LT(min_slack_from(s, -(y0 + 0.05), phi, tau), -1e-9);
}

TEST(VerifySuperhedge, SampledModeIsDeterministic) {
    Market s(14);
    const auto a = verify_superhedge(s.lat, s.sol, 0.01, s.f, 2000, 7);
    const auto b = verify_superhedge(s.lat, s.sol, 0.01, s.f, 2000, 7);
    const auto c = verify_superhedge(s.lat, s.sol, 0.01, s.f, 2000, 8);
    EXPECT_EQ(a.mode, EnumerationMode::Sampled);
    ASSERT_EQ(a.path_count, 2000u);
    bool differs = false;
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        EXPECT_EQ(a.records[i].stop_node, b.records[i].stop_node);
        EXPECT_EQ(a.records[i].slack, b.records[i].slack);
        differs = differs || a.records[i].stop_node != c.records[i].stop_node;
    }
    EXPECT_TRUE(differs);
    EXPECT_GE(a.min_slack, -0.01 - 1e-9);
}

TEST(VerifySuperhedge, RejectsBadArguments) {
    Market s(10);
    EXPECT_THROW(verify_superhedge(s.lat, s.sol, -0.1, s.f), Error);
    EXPECT_THROW(verify_superhedge(s.lat, s.sol, 0.1, s.f, 0), Error);
}

TEST(WealthMartingale, EveryControlAndConstantStrategy) {
    const auto p = ref_params();
    const auto lat = build_lattice(p, 8);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    for (const Driver& f : {linear_wealth_driver(p, 8), two_rate_wealth_driver(p, 8, 0.07)}) {
        for (int trial = 0; trial < 5; ++trial) {
            const AdaptedField phi(lat.node_count(), u(rng));
            const double x = u(rng);
            for (double nu : NuGrid{}.levels) {
                const Driver g = controlled_driver(f, ControlProcess::constant(nu), lat);
                EXPECT_NEAR(expected_terminal_wealth(lat, x, phi, f, g), x, 1e-9) << f.name() << " nu " << nu;
            }
        }
    }
}

TEST(WealthMartingale, TreeSizeGuard) {
    const auto lat = build_lattice(ref_params(), 20);
    EXPECT_THROW(expected_terminal_wealth(lat, 0.0, AdaptedField(lat.node_count()), zero_driver(), zero_driver()),
                 Error);
}

TEST(Uniform01, TopBitsMapping) {
    EXPECT_EQ(uniform01(0), 0.0);
    EXPECT_EQ(uniform01(~0ULL), 1.0 - 0x1.0p-53);
    EXPECT_EQ(uniform01(1ULL << 63), 0.5);
}
