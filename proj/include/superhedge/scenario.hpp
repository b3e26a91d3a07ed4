#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "superhedge/game_pricer.hpp"
#include "superhedge/hedging_lab.hpp"

namespace superhedge {

inline constexpr int kSchemaVersion = 1;

struct PayoffSpec {
    enum class Type { Put, Call, Constant, Table };
    struct Entry {
        NodeState state;
        double value = 0.0;
    };
    Type type = Type::Put;
    double strike = 100.0;
    double value = 0.0;          ///< Constant
    double table_default = 0.0;  ///< Table: value of nodes not listed
    std::vector<Entry> entries;
};

struct DriverSpec {
    enum class Type { Linear, TwoRate, Zero };
    Type type = Type::Linear;
    double borrow_rate = 0.0;
};

enum class ReportFormat { Json, Csv, Both };

struct StudySpec {
    bool enabled = false;
    std::vector<std::size_t> levels{25, 50, 100};
    std::vector<NuGrid> grids;  ///< empty: the scenario grid only
};

struct ScenarioConfig {
    int schema_version = kSchemaVersion;
    MarketParams market;
    PayoffSpec payoff;
    DriverSpec driver;
    std::size_t n_steps = 50;
    NuGrid grid;
    double epsilon = 0.01;
    std::size_t path_budget = 100000;
    std::uint64_t seed = 20240601;
    std::string output_dir = "report";
    ReportFormat format = ReportFormat::Both;
    StudySpec study;

    /// Throws ConfigInvalid naming the offending field.
    void validate() const;
};

/// Strict parse: unknown keys, wrong types and a missing or unsupported
/// schema_version raise ConfigInvalid with the JSON path of the field.
ScenarioConfig parse_config(const nlohmann::json& doc);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Comma separated levels, e.g. "-0.5,0,1". Throws ConfigInvalid.
std::vector<double> parse_level_list(const std::string& text);

AdaptedField build_obstacle(const DefaultLattice& lattice, const PayoffSpec& payoff);
/// The wealth driver f (not its dual).
Driver build_wealth_driver(const DriverSpec& spec, const MarketParams& market, std::size_t n_steps);

/// American put/call by plain binomial backward induction on the lattice's
/// price factors with the risk-neutral one-step probability. Requires lambda0 = 0.
double binomial_american(const MarketParams& market, std::size_t n_steps, bool put, double strike);

struct ScenarioResult {
    nlohmann::ordered_json summary;
    bool passed = false;
    std::vector<std::filesystem::path> files;
};

/// Solve, decompose, check, hedge; writes the reports to config.output_dir.
ScenarioResult run_scenario(const ScenarioConfig& config);

struct StudyRow {
    std::size_t n_steps = 0;
    std::size_t grid_index = 0;
    double ybar0 = 0.0;
    double diff_prev = 0.0;  ///< Ybar_0(n) - Ybar_0(previous n), same grid; 0 on the first level
    double min_jump_constraint = 0.0;
    double min_measure_constraint = 0.0;
    double tolerance = 0.0;
    double interchange_gap = 0.0;
};

struct StudyResult {
    std::vector<StudyRow> rows;
    bool grid_monotone = true;  ///< hard check: a finer grid never prices higher
    bool cauchy_in_n = true;    ///< soft check: |d_{i+1}| <= 1.2 |d_i| per grid
    std::vector<std::filesystem::path> files;
};

/// Rows for every (level, grid). Throws ConfigInvalid unless levels ascend.
StudyResult convergence_study(const ScenarioConfig& config, const std::vector<std::size_t>& levels,
                              const std::vector<NuGrid>& grids);

/// True if every level of `coarse` is in `fine` and fine keeps the -1 limit when coarse has it.
bool grid_contains(const NuGrid& fine, const NuGrid& coarse);

/// Interchange bound gap <= K1 eps + K2 dt with K1 = exp(C_fbar T / (1 - C_fbar dt)), K2 = 10 C.
struct InterchangeBound {
    double k1 = 0.0;
    double k2 = 0.0;
};
InterchangeBound interchange_bound(const GameSolution& sol, const Driver& fbar, const DefaultLattice& lattice);

/// Nonnegative least squares fit of gap ~ K1 eps + K2 dt.
InterchangeBound fit_interchange_constants(const std::vector<double>& eps, const std::vector<double>& dt,
                                           const std::vector<double>& gap);

/// 17 significant digits, the CSV float format.
std::string format_double(double v);

}  // namespace superhedge
