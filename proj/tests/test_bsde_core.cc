#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "superhedge/bsde_core.hpp"
#include "superhedge/error.hpp"

using namespace superhedge;

namespace {

MarketParams ref_params(double lambda0 = 0.1) {
    MarketParams p;
    p.r = 0.03;
    p.mu = 0.05;
    p.sigma = 0.2;
    p.beta = -0.3;
    p.lambda0 = lambda0;
    return p;
}

Driver rate_driver(double r) {
    return Driver("rate", [r](const NodeContext&, double y, double, double) { return -r * y; }, std::abs(r), false);
}

AdaptedField random_field(const DefaultLattice& lat, std::uint64_t seed, double lo, double hi) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    AdaptedField f(lat.node_count());
    for (NodeId id = 0; id < lat.node_count(); ++id) f[id] = u(rng);
    return f;
}

}  // namespace

TEST(RepresentStep, ConstantsAreMartingales) {
    const auto lat = build_lattice(ref_params(), 10);
    const double seven[3] = {7.0, 7.0, 7.0};
    const auto rep = represent_step(lat, lat.root(), seven);
    EXPECT_EQ(rep.c, 7.0);
    EXPECT_EQ(rep.z, 0.0);
    EXPECT_EQ(rep.k, 0.0);
}

TEST(RepresentStep, ReproducesBasisIncrements) {
    const auto lat = build_lattice(ref_params(), 10);
    const auto br = lat.branches(lat.root());
    const double dM[3] = {br[0].dM, br[1].dM, br[2].dM};
    const double dW[3] = {br[0].dW, br[1].dW, br[2].dW};
    auto a = represent_step(lat, lat.root(), dM);
    EXPECT_NEAR(a.c, 0.0, 1e-16);
    EXPECT_NEAR(a.z, 0.0, 1e-16);
    EXPECT_NEAR(a.k, 1.0, 1e-15);
    auto b = represent_step(lat, lat.root(), dW);
    EXPECT_NEAR(b.c, 0.0, 1e-16);
    EXPECT_NEAR(b.z, 1.0, 1e-15);
    EXPECT_NEAR(b.k, 0.0, 1e-16);
}

TEST(RepresentStep, ExactOnEveryBranch) {
    const auto lat = build_lattice(ref_params(), 8);
    const auto values = random_field(lat, 11, -5.0, 5.0);
    for (NodeId id = 0; id < lat.step_begin(8); ++id) {
        const auto br = lat.branches(id);
        double child[3];
        for (std::size_t b = 0; b < br.size(); ++b) child[b] = values[br[b].child];
        const auto rep = represent_step(br, std::span<const double>(child, br.size()));
        if (br.size() == 2) {
            EXPECT_EQ(rep.k, 0.0);
        }
        for (std::size_t b = 0; b < br.size(); ++b) {
            EXPECT_NEAR(rep.c + rep.z * br[b].dW + rep.k * br[b].dM, child[b], 1e-13);
        }
    }
}

TEST(RepresentStep, GuardsMalformedBranches) {
    BranchSet skewed;
    skewed.push(Branch{BranchKind::Up, 0.7, 0.3, 0.0, 0.0, 0.3, 0});
    skewed.push(Branch{BranchKind::Down, 0.3, -0.3, 0.0, 0.0, -0.3, 0});
    const double v[2] = {1.0, 2.0};
    try {
        represent_step(skewed, v);
        FAIL() << "expected SingularSystem";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SingularSystem);
    }
    const auto lat = build_lattice(ref_params(), 4);
    const double two[2] = {1.0, 2.0};
    EXPECT_THROW(represent_step(lat, lat.root(), two), Error);
}

TEST(SolveBsde, ZeroDriverConstantTerminal) {
    const auto lat = build_lattice(ref_params(), 10);
    const auto sol = solve_bsde(lat, zero_driver(), AdaptedField(lat.node_count(), 5.0));
    for (NodeId id = 0; id < lat.node_count(); ++id) {
        EXPECT_EQ(sol.Y[id], 5.0);
        EXPECT_EQ(sol.Z[id], 0.0);
        EXPECT_EQ(sol.K[id], 0.0);
    }
}

TEST(SolveBsde, ImplicitDiscountingMatchesClosedForm) {
    MarketParams p;  // lambda0 = 0
    const auto lat = build_lattice(p, 10);
    const auto sol = solve_bsde(lat, rate_driver(0.03), AdaptedField(lat.node_count(), 1.0));
    EXPECT_NEAR(sol.Y[lat.root()], std::pow(1.003, -10), 1e-15);
    EXPECT_NEAR(sol.Y[lat.root()], 0.9704891, 1e-7);
}

TEST(SolveBsde, DefaultProbabilityByEnumeration) {
    MarketParams p = ref_params();
    p.horizon = 0.2;  // dt = 0.1 with n = 2
    const auto lat = build_lattice(p, 2);
    AdaptedField terminal(lat.node_count());
    for (NodeId id = lat.step_begin(2); id < lat.node_count(); ++id) terminal[id] = lat.is_alive(id) ? 0.0 : 1.0;
    double enumerated = 0.0;
    oracle::for_each_path(lat, [&](double prob, NodeId leaf) { enumerated += prob * terminal[leaf]; });
    const auto sol = solve_bsde(lat, zero_driver(), terminal);
    EXPECT_NEAR(sol.Y[lat.root()], 1.0 - 0.99 * 0.99, 1e-15);
    EXPECT_NEAR(sol.Y[lat.root()], enumerated, 1e-15);
}

TEST(SolveBsde, OneStepIdentityWithAdjustment) {
    const auto p = ref_params();
    const auto lat = build_lattice(p, 12);
    const Driver g = linear_wealth_driver(p, 12);
    const auto terminal = random_field(lat, 5, 0.0, 10.0);
    const auto kappa = random_field(lat, 6, -0.1, 0.1);
    const auto sol = solve_bsde(lat, g, terminal, kappa.values());
    for (NodeId id = 0; id < lat.step_begin(12); ++id) {
        const auto br = lat.branches(id);
        double c = 0.0;
        for (const auto& b : br) c += b.prob * sol.Y[b.child];
        const NodeContext ctx = context_at(lat, id);
        EXPECT_NEAR(sol.Y[id], c + g(ctx, sol.Y[id], sol.Z[id], sol.K[id]) * lat.dt() - kappa[id], 1e-12);
    }
}

TEST(SolveBsde, ContractionIsEnforced) {
    const auto lat = build_lattice(ref_params(), 10);
    try {
        solve_bsde(lat, rate_driver(10.0), AdaptedField(lat.node_count(), 1.0));
        FAIL() << "expected StepContractionFailure";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::StepContractionFailure);
    }
}

TEST(SolveBsde, ComparisonOfDriversAndTerminals) {
    const auto p = ref_params();
    const auto lat = build_lattice(p, 14);
    const Driver g1 = dual_driver(linear_wealth_driver(p, 14));
    const Driver g2("shifted", [g1](const NodeContext& c, double y, double z, double k) { return g1(c, y, z, k) + 0.01; },
                    g1.lipschitz(), false);
    const auto t1 = random_field(lat, 21, -3.0, 3.0);
    AdaptedField t2 = t1;
    const auto bump = random_field(lat, 22, 0.0, 1.0);
    for (NodeId id = 0; id < lat.node_count(); ++id) t2[id] += bump[id];
    const auto y1 = solve_bsde(lat, g1, t1).Y;
    const auto y2 = solve_bsde(lat, g2, t2).Y;
    for (NodeId id = 0; id < lat.node_count(); ++id) EXPECT_LE(y1[id], y2[id]);
}

TEST(SolveBsde, FlowProperty) {
    const auto p = ref_params();
    const auto lat = build_lattice(p, 12);
    const Driver g = two_rate_wealth_driver(p, 12, 0.07);
    const auto full = solve_bsde(lat, g, random_field(lat, 31, -4.0, 4.0)).Y;
    const std::size_t t = 5;
    const auto tau = StopRule::from_predicate(lat, [&](NodeId id) { return lat.step_of(id) == t; });
    const auto restarted = evaluate_expectation(lat, g, tau, full);
    for (NodeId id = 0; id < lat.step_end(t); ++id) EXPECT_EQ(restarted[id], full[id]);
}

TEST(EvaluateExpectation, StopAtRootReturnsPayoff) {
    const auto lat = build_lattice(ref_params(), 6);
    const auto payoff = random_field(lat, 41, -1.0, 1.0);
    const auto y = evaluate_expectation(lat, linear_wealth_driver(ref_params(), 6), StopRule::at_root(lat), payoff);
    EXPECT_EQ(y[lat.root()], payoff[lat.root()]);
}

TEST(EvaluateExpectation, ZeroDriverIsPathAverage) {
    const auto lat = build_lattice(ref_params(), 7);
    const auto payoff = random_field(lat, 42, -1.0, 1.0);
    double enumerated = 0.0;
    oracle::for_each_path(lat, [&](double prob, NodeId leaf) { enumerated += prob * payoff[leaf]; });
    const auto y = evaluate_expectation(lat, zero_driver(), StopRule::at_horizon(lat), payoff);
    EXPECT_NEAR(y[lat.root()], enumerated, 1e-14);
}

TEST(EvaluateExpectation, HorizonStopMatchesSolveBsde) {
    const auto p = ref_params();
    const auto lat = build_lattice(p, 9);
    const Driver g = linear_wealth_driver(p, 9);
    const auto payoff = random_field(lat, 43, 0.0, 2.0);
    const auto a = evaluate_expectation(lat, g, StopRule::at_horizon(lat), payoff);
    const auto b = solve_bsde(lat, g, payoff).Y;
    for (NodeId id = 0; id < lat.node_count(); ++id) EXPECT_EQ(a[id], b[id]);
}

TEST(EvaluateExpectation, FrozenAtStopNodes) {
    const auto lat = build_lattice(ref_params(), 9);
    const auto payoff = random_field(lat, 44, 0.0, 2.0);
    std::mt19937_64 rng(45);
    const auto tau = StopRule::from_predicate(lat, [&](NodeId) { return rng() % 5 == 0; });
    const auto y = evaluate_expectation(lat, linear_wealth_driver(ref_params(), 9), tau, payoff);
    for (NodeId id = 0; id < lat.node_count(); ++id) {
        if (tau.stops(id)) {
            EXPECT_EQ(y[id], payoff[id]);
        }
    }
}

TEST(StopRule, HorizonIsAlwaysFlagged) {
    const auto lat = build_lattice(ref_params(), 5);
    const auto tau = StopRule::from_flags(lat, std::vector<std::uint8_t>(lat.node_count(), 0));
    for (NodeId id = 0; id < lat.node_count(); ++id) EXPECT_EQ(tau.stops(id), lat.is_terminal(id));
    EXPECT_THROW(StopRule::from_flags(lat, std::vector<std::uint8_t>(3, 0)), Error);
}
