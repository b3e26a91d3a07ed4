#include "superhedge/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "superhedge/reflected_bsde.hpp"

namespace superhedge {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void invalid(const std::string& path, const std::string& what) {
    throw Error(ErrorCode::ConfigInvalid, path + ": " + what);
}

void require_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) invalid(path, "expected an object");
    for (const auto& item : obj.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
        if (!known) invalid(path.empty() ? item.key() : path + "." + item.key(), "unknown key");
    }
}

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

double read_number(const json& v, const std::string& path) {
    if (!v.is_number()) invalid(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) invalid(path, "must be finite");
    return x;
}

std::uint64_t read_unsigned(const json& v, const std::string& path) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        invalid(path, "expected a nonnegative integer");
    }
    return v.get<std::uint64_t>();
}

bool read_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) invalid(path, "expected true or false");
    return v.get<bool>();
}

std::string read_string(const json& v, const std::string& path) {
    if (!v.is_string()) invalid(path, "expected a string");
    return v.get<std::string>();
}

Coefficient read_coefficient(const json& v, const std::string& path) {
    if (v.is_array()) {
        std::vector<double> values;
        for (std::size_t i = 0; i < v.size(); ++i) values.push_back(read_number(v[i], path + "[" + std::to_string(i) + "]"));
        return Coefficient(std::move(values));
    }
    return Coefficient(read_number(v, path));
}

std::vector<double> read_levels(const json& v, const std::string& path) {
    if (!v.is_array()) invalid(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(read_number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

NuGrid read_grid(const json& v, const std::string& path) {
    require_keys(v, path, {"levels", "lower_limit"});
    NuGrid grid;
    if (v.contains("levels")) grid.levels = read_levels(v["levels"], join(path, "levels"));
    if (v.contains("lower_limit")) grid.lower_limit = read_bool(v["lower_limit"], join(path, "lower_limit"));
    return grid;
}

MarketParams read_market(const json& v, const std::string& path) {
    require_keys(v, path, {"r", "mu", "sigma", "beta", "lambda0", "horizon", "s0"});
    MarketParams m;
    if (v.contains("r")) m.r = read_coefficient(v["r"], join(path, "r"));
    if (v.contains("mu")) m.mu = read_coefficient(v["mu"], join(path, "mu"));
    if (v.contains("sigma")) m.sigma = read_coefficient(v["sigma"], join(path, "sigma"));
    if (v.contains("beta")) m.beta = read_coefficient(v["beta"], join(path, "beta"));
    if (v.contains("lambda0")) m.lambda0 = read_coefficient(v["lambda0"], join(path, "lambda0"));
    if (v.contains("horizon")) m.horizon = read_number(v["horizon"], join(path, "horizon"));
    if (v.contains("s0")) m.s0 = read_number(v["s0"], join(path, "s0"));
    return m;
}

PayoffSpec read_payoff(const json& v, const std::string& path) {
    require_keys(v, path, {"type", "strike", "value", "default", "entries"});
    if (!v.contains("type")) invalid(join(path, "type"), "required");
    const std::string type = read_string(v["type"], join(path, "type"));
    PayoffSpec p;
    auto forbid = [&](std::initializer_list<const char*> keys) {
        for (const char* k : keys) {
            if (v.contains(k)) invalid(join(path, k), "not used by payoff type '" + type + "'");
        }
    };
    if (type == "put" || type == "call") {
        p.type = type == "put" ? PayoffSpec::Type::Put : PayoffSpec::Type::Call;
        if (!v.contains("strike")) invalid(join(path, "strike"), "required");
        p.strike = read_number(v["strike"], join(path, "strike"));
        forbid({"value", "default", "entries"});
    } else if (type == "constant") {
        p.type = PayoffSpec::Type::Constant;
        if (!v.contains("value")) invalid(join(path, "value"), "required");
        p.value = read_number(v["value"], join(path, "value"));
        forbid({"strike", "default", "entries"});
    } else if (type == "table") {
        p.type = PayoffSpec::Type::Table;
        forbid({"strike", "value"});
        if (v.contains("default")) p.table_default = read_number(v["default"], join(path, "default"));
        const std::string ep = join(path, "entries");
        if (!v.contains("entries") || !v["entries"].is_array()) invalid(ep, "expected an array");
        for (std::size_t i = 0; i < v["entries"].size(); ++i) {
            const std::string e = ep + "[" + std::to_string(i) + "]";
            const json& item = v["entries"][i];
            require_keys(item, e, {"k", "j", "default", "value"});
            for (const char* k : {"k", "j", "value"}) {
                if (!item.contains(k)) invalid(join(e, k), "required");
            }
            PayoffSpec::Entry entry;
            entry.state.step = read_unsigned(item["k"], join(e, "k"));
            if (!item["j"].is_number_integer()) invalid(join(e, "j"), "expected an integer");
            entry.state.j = item["j"].get<int>();
            if (item.contains("default") && !item["default"].is_null()) {
                const json& d = item["default"];
                const std::string dp = join(e, "default");
                require_keys(d, dp, {"step", "pre_up_moves"});
                if (!d.contains("step") || !d.contains("pre_up_moves")) invalid(dp, "needs step and pre_up_moves");
                entry.state.default_tag =
                    DefaultTag{read_unsigned(d["step"], join(dp, "step")), read_unsigned(d["pre_up_moves"], join(dp, "pre_up_moves"))};
            }
            entry.value = read_number(item["value"], join(e, "value"));
            p.entries.push_back(entry);
        }
    } else {
        invalid(join(path, "type"), "expected put, call, constant or table");
    }
    return p;
}

DriverSpec read_driver(const json& v, const std::string& path) {
    require_keys(v, path, {"type", "borrow_rate"});
    if (!v.contains("type")) invalid(join(path, "type"), "required");
    const std::string type = read_string(v["type"], join(path, "type"));
    DriverSpec d;
    if (type == "linear") {
        d.type = DriverSpec::Type::Linear;
    } else if (type == "zero") {
        d.type = DriverSpec::Type::Zero;
    } else if (type == "two_rate") {
        d.type = DriverSpec::Type::TwoRate;
        if (!v.contains("borrow_rate")) invalid(join(path, "borrow_rate"), "required for two_rate");
        d.borrow_rate = read_number(v["borrow_rate"], join(path, "borrow_rate"));
    } else {
        invalid(join(path, "type"), "expected linear, two_rate or zero");
    }
    if (d.type != DriverSpec::Type::TwoRate && v.contains("borrow_rate")) {
        invalid(join(path, "borrow_rate"), "only used by two_rate");
    }
    return d;
}

ReportFormat read_format(const json& v, const std::string& path) {
    const std::string s = read_string(v, path);
    if (s == "json") return ReportFormat::Json;
    if (s == "csv") return ReportFormat::Csv;
    if (s == "both") return ReportFormat::Both;
    invalid(path, "expected json, csv or both");
}

}  // namespace

ScenarioConfig parse_config(const json& doc) {
    require_keys(doc, "", {"schema_version", "market", "payoff", "driver", "n_steps", "nu_grid", "epsilon",
                           "path_budget", "seed", "output_dir", "format", "study"});
    if (!doc.contains("schema_version")) invalid("schema_version", "required");
    ScenarioConfig c;
    c.schema_version = static_cast<int>(read_unsigned(doc["schema_version"], "schema_version"));
    if (c.schema_version != kSchemaVersion) {
        invalid("schema_version", "unsupported version " + std::to_string(c.schema_version));
    }
    if (doc.contains("market")) c.market = read_market(doc["market"], "market");
    if (doc.contains("payoff")) c.payoff = read_payoff(doc["payoff"], "payoff");
    if (doc.contains("driver")) c.driver = read_driver(doc["driver"], "driver");
    if (doc.contains("n_steps")) c.n_steps = read_unsigned(doc["n_steps"], "n_steps");
    if (doc.contains("nu_grid")) c.grid = read_grid(doc["nu_grid"], "nu_grid");
    if (doc.contains("epsilon")) c.epsilon = read_number(doc["epsilon"], "epsilon");
    if (doc.contains("path_budget")) c.path_budget = read_unsigned(doc["path_budget"], "path_budget");
    if (doc.contains("seed")) c.seed = read_unsigned(doc["seed"], "seed");
    if (doc.contains("output_dir")) c.output_dir = read_string(doc["output_dir"], "output_dir");
    if (doc.contains("format")) c.format = read_format(doc["format"], "format");
    if (doc.contains("study")) {
        const json& s = doc["study"];
        require_keys(s, "study", {"enabled", "levels", "grids"});
        if (s.contains("enabled")) c.study.enabled = read_bool(s["enabled"], "study.enabled");
        if (s.contains("levels")) {
            if (!s["levels"].is_array()) invalid("study.levels", "expected an array");
            c.study.levels.clear();
            for (std::size_t i = 0; i < s["levels"].size(); ++i) {
                c.study.levels.push_back(read_unsigned(s["levels"][i], "study.levels[" + std::to_string(i) + "]"));
            }
        }
        if (s.contains("grids")) {
            if (!s["grids"].is_array()) invalid("study.grids", "expected an array");
            for (std::size_t i = 0; i < s["grids"].size(); ++i) {
                c.study.grids.push_back(read_grid(s["grids"][i], "study.grids[" + std::to_string(i) + "]"));
            }
        }
    }
    c.validate();
    return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot open config file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ConfigInvalid, path.string() + ": " + e.what());
    }
    return parse_config(doc);
}

void ScenarioConfig::validate() const {
    if (schema_version != kSchemaVersion) invalid("schema_version", "unsupported version");
    if (n_steps == 0) invalid("n_steps", "must be >= 1");
    try {
        market.validate(n_steps);
    } catch (const Error& e) {
        invalid("market", e.what());
    }
    try {
        grid.validate();
    } catch (const Error& e) {
        invalid("nu_grid", e.what());
    }
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) invalid("epsilon", "must be finite and >= 0");
    if (path_budget == 0) invalid("path_budget", "must be >= 1");
    if (output_dir.empty()) invalid("output_dir", "must not be empty");
    if (driver.type == DriverSpec::Type::TwoRate) {
        for (std::size_t k = 0; k < n_steps; ++k) {
            if (driver.borrow_rate < market.r.at(k)) invalid("driver.borrow_rate", "must be >= market.r");
        }
    }
    for (std::size_t i = 0; i < study.levels.size(); ++i) {
        if (study.levels[i] == 0) invalid("study.levels", "levels must be >= 1");
        if (i > 0 && study.levels[i] <= study.levels[i - 1]) invalid("study.levels", "levels must ascend");
    }
    for (std::size_t i = 0; i < study.grids.size(); ++i) {
        try {
            study.grids[i].validate();
        } catch (const Error& e) {
            invalid("study.grids[" + std::to_string(i) + "]", e.what());
        }
    }
}

std::vector<double> parse_level_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            invalid("nu_grid", "cannot parse level '" + item + "'");
        }
    }
    if (out.empty()) invalid("nu_grid", "no levels given");
    return out;
}

AdaptedField build_obstacle(const DefaultLattice& lattice, const PayoffSpec& payoff) {
    switch (payoff.type) {
        case PayoffSpec::Type::Put:
            return field_from_price(lattice, [k = payoff.strike](double s) { return std::max(k - s, 0.0); });
        case PayoffSpec::Type::Call:
            return field_from_price(lattice, [k = payoff.strike](double s) { return std::max(s - k, 0.0); });
        case PayoffSpec::Type::Constant:
            return AdaptedField(lattice.node_count(), payoff.value);
        case PayoffSpec::Type::Table:
            break;
    }
    AdaptedField out(lattice.node_count(), payoff.table_default);
    for (std::size_t i = 0; i < payoff.entries.size(); ++i) {
        try {
            out[lattice.find(payoff.entries[i].state)] = payoff.entries[i].value;
        } catch (const Error& e) {
            invalid("payoff.entries[" + std::to_string(i) + "]", e.what());
        }
    }
    return out;
}

Driver build_wealth_driver(const DriverSpec& spec, const MarketParams& market, std::size_t n_steps) {
    switch (spec.type) {
        case DriverSpec::Type::Linear: return linear_wealth_driver(market, n_steps);
        case DriverSpec::Type::TwoRate: return two_rate_wealth_driver(market, n_steps, spec.borrow_rate);
        case DriverSpec::Type::Zero: return zero_driver();
    }
    throw Error(ErrorCode::InvalidArgument, "unknown driver type");
}

double binomial_american(const MarketParams& market, std::size_t n_steps, bool put, double strike) {
    market.validate(n_steps);
    const double dt = market.horizon / static_cast<double>(n_steps);
    const double sq = std::sqrt(dt);
    std::vector<double> value(n_steps + 1);
    auto payoff = [&](double s) { return put ? std::max(strike - s, 0.0) : std::max(s - strike, 0.0); };
    auto price = [&](std::size_t k, std::size_t ups) {
        double s = market.s0;
        for (std::size_t i = 0; i < k; ++i) {
            const double drift = 1.0 + market.mu.at(i) * dt;
            s *= i < ups ? drift + market.sigma.at(i) * sq : drift - market.sigma.at(i) * sq;
        }
        return s;
    };
    for (std::size_t a = 0; a <= n_steps; ++a) value[a] = payoff(price(n_steps, a));
    for (std::size_t k = n_steps; k-- > 0;) {
        if (market.lambda0.at(k) != 0.0) throw Error(ErrorCode::InvalidArgument, "binomial_american needs lambda0 = 0");
        const double u = 1.0 + market.mu.at(k) * dt + market.sigma.at(k) * sq;
        const double d = 1.0 + market.mu.at(k) * dt - market.sigma.at(k) * sq;
        const double growth = 1.0 + market.r.at(k) * dt;
        const double pu = (growth - d) / (u - d);
        for (std::size_t a = 0; a <= k; ++a) {
            const double cont = (pu * value[a + 1] + (1.0 - pu) * value[a]) / growth;
            value[a] = std::max(payoff(price(k, a)), cont);
        }
    }
    return value[0];
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool grid_contains(const NuGrid& fine, const NuGrid& coarse) {
    if (coarse.lower_limit && !fine.lower_limit) return false;
    return std::all_of(coarse.levels.begin(), coarse.levels.end(), [&](double v) {
        return std::find(fine.levels.begin(), fine.levels.end(), v) != fine.levels.end();
    });
}

InterchangeBound interchange_bound(const GameSolution& sol, const Driver& fbar, const DefaultLattice& lattice) {
    const double c = fbar.lipschitz();
    const double dt = lattice.dt();
    return {std::exp(c * lattice.horizon() / (1.0 - c * dt)), 10.0 * sol.lipschitz};
}

InterchangeBound fit_interchange_constants(const std::vector<double>& eps, const std::vector<double>& dt,
                                           const std::vector<double>& gap) {
    if (eps.size() != dt.size() || eps.size() != gap.size() || eps.empty()) {
        throw Error(ErrorCode::InvalidArgument, "fit needs equally sized, non-empty samples");
    }
    double see = 0, sdd = 0, sed = 0, seg = 0, sdg = 0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        see += eps[i] * eps[i];
        sdd += dt[i] * dt[i];
        sed += eps[i] * dt[i];
        seg += eps[i] * gap[i];
        sdg += dt[i] * gap[i];
    }
    auto sse = [&](double k1, double k2) {
        double s = 0.0;
        for (std::size_t i = 0; i < eps.size(); ++i) s += std::pow(gap[i] - k1 * eps[i] - k2 * dt[i], 2);
        return s;
    };
    const double det = see * sdd - sed * sed;
    if (det > 0.0) {
        const double k1 = (seg * sdd - sdg * sed) / det;
        const double k2 = (sdg * see - seg * sed) / det;
        if (k1 >= 0.0 && k2 >= 0.0) return {k1, k2};
    }
    const InterchangeBound only_eps{see > 0 ? std::max(seg / see, 0.0) : 0.0, 0.0};
    const InterchangeBound only_dt{0.0, sdd > 0 ? std::max(sdg / sdd, 0.0) : 0.0};
    return sse(only_eps.k1, only_eps.k2) <= sse(only_dt.k1, only_dt.k2) ? only_eps : only_dt;
}

namespace {

constexpr double kOracleTolerance = 1e-12;
constexpr double kOrderTolerance = 1e-12;

struct LatticeDiagnostics {
    double max_prob_error = 0.0;
    double max_dW_mean = 0.0;
    double max_dM_mean = 0.0;
    double max_cross = 0.0;
    std::size_t alive_nodes = 0;
};

LatticeDiagnostics lattice_diagnostics(const DefaultLattice& lattice) {
    LatticeDiagnostics d;
    for (std::size_t k = 0; k < lattice.n_steps(); ++k) {
        d.alive_nodes += k + 1;
        for (NodeId id = lattice.step_begin(k); id < lattice.step_end(k); ++id) {
            double p = 0, w = 0, m = 0, wm = 0;
            for (const Branch& b : lattice.branches(id)) {
                p += b.prob;
                w += b.prob * b.dW;
                m += b.prob * b.dM;
                wm += b.prob * b.dW * b.dM;
            }
            d.max_prob_error = std::max(d.max_prob_error, std::abs(p - 1.0));
            d.max_dW_mean = std::max(d.max_dW_mean, std::abs(w));
            d.max_dM_mean = std::max(d.max_dM_mean, std::abs(m));
            d.max_cross = std::max(d.max_cross, std::abs(wm));
        }
    }
    d.alive_nodes += lattice.n_steps() + 1;
    return d;
}

bool oracle_applicable(const ScenarioConfig& c) {
    if (c.driver.type != DriverSpec::Type::Linear) return false;
    if (c.payoff.type != PayoffSpec::Type::Put && c.payoff.type != PayoffSpec::Type::Call) return false;
    for (std::size_t k = 0; k < c.n_steps; ++k) {
        if (c.market.lambda0.at(k) != 0.0) return false;
    }
    return true;
}

std::ofstream open_report(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
    return out;
}

ordered_json number_or_null(double v) {
    return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
}

void write_fields(const std::filesystem::path& path, const DefaultLattice& lattice, const GameSolution& sol,
                  const AdaptedField& phi, const StopRule& tau) {
    auto out = open_report(path);
    out << "node,step,j,default_step,pre_up_moves,price,obstacle,ybar,zbar,kbar,phi,nu_star,stop\n";
    for (NodeId id = 0; id < lattice.node_count(); ++id) {
        const NodeState s = lattice.state(id);
        out << id << ',' << s.step << ',' << s.j << ',' << (s.default_tag ? s.default_tag->step : 0) << ','
            << (s.default_tag ? s.default_tag->pre_up_moves : 0) << ',' << format_double(lattice.price(id)) << ','
            << format_double(sol.obstacle[id]) << ',' << format_double(sol.Ybar[id]) << ','
            << format_double(sol.Zbar[id]) << ',' << format_double(sol.Kbar[id]) << ',' << format_double(phi[id])
            << ',' << format_double(sol.nu_star[id]) << ',' << (tau.stops(id) ? 1 : 0) << '\n';
    }
}

void write_increments(const std::filesystem::path& path, const DefaultLattice& lattice, const GameSolution& sol) {
    auto out = open_report(path);
    out << "node,A,Aprime,kbar_default,kbar_up,kbar_down,kbarprime_default,kbarprime_up,kbarprime_down\n";
    for (std::size_t k = 0; k < lattice.n_steps(); ++k) {
        for (NodeId id = lattice.step_begin(k); id < lattice.step_end(k); ++id) {
            std::array<double, 3> kb{}, kbp{};
            const BranchSet br = lattice.branches(id);
            for (std::size_t b = 0; b < br.size(); ++b) {
                const auto slot = static_cast<std::size_t>(br[b].kind);
                kb[slot] = sol.kbar_inc[id][b];
                kbp[slot] = sol.kbarprime_inc[id][b];
            }
            out << id << ',' << format_double(sol.A_inc[id]) << ',' << format_double(sol.Aprime_inc[id]);
            for (double v : kb) out << ',' << format_double(v);
            for (double v : kbp) out << ',' << format_double(v);
            out << '\n';
        }
    }
}

void write_boundary(const std::filesystem::path& path, const DefaultLattice& lattice, const StopRule& tau) {
    auto out = open_report(path);
    out << "step,default_step,pre_up_moves,stop_nodes,min_stop_price,max_stop_price\n";
    for (std::size_t k = 0; k < lattice.n_steps(); ++k) {
        NodeId id = lattice.step_begin(k);
        while (id < lattice.step_end(k)) {
            const NodeState s = lattice.state(id);
            const std::size_t m = s.default_tag ? s.default_tag->step : 0;
            const std::size_t a = s.default_tag ? s.default_tag->pre_up_moves : 0;
            std::size_t count = 0;
            double lo = 0.0, hi = 0.0;
            for (; id < lattice.step_end(k); ++id) {
                const NodeState t = lattice.state(id);
                if ((t.default_tag ? t.default_tag->step : 0) != m ||
                    (t.default_tag ? t.default_tag->pre_up_moves : 0) != a || t.alive() != s.alive()) {
                    break;
                }
                if (!tau.stops(id)) continue;
                const double p = lattice.price(id);
                lo = count == 0 ? p : std::min(lo, p);
                hi = count == 0 ? p : std::max(hi, p);
                ++count;
            }
            if (count > 0) {
                out << k << ',' << m << ',' << a << ',' << count << ',' << format_double(lo) << ','
                    << format_double(hi) << '\n';
            }
        }
    }
}

void write_paths(const std::filesystem::path& path, const HedgeReport& report) {
    auto out = open_report(path);
    out << "path_id,stop_step,stop_node,probability,wealth,payoff,slack,min_margin\n";
    for (const PathRecord& r : report.records) {
        out << r.path_id << ',' << r.stop_step << ',' << r.stop_node << ',' << format_double(r.probability) << ','
            << format_double(r.wealth) << ',' << format_double(r.payoff) << ',' << format_double(r.slack) << ','
            << format_double(r.min_margin) << '\n';
    }
}

const char* format_name(ReportFormat f) {
    switch (f) {
        case ReportFormat::Json: return "json";
        case ReportFormat::Csv: return "csv";
        case ReportFormat::Both: return "both";
    }
    return "both";
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& config) {
    config.validate();
    const DefaultLattice lattice = build_lattice(config.market, config.n_steps);
    const AdaptedField xi = build_obstacle(lattice, config.payoff);
    const Driver f = build_wealth_driver(config.driver, config.market, config.n_steps);
    const Driver fbar = dual_driver(f);
    const NodeId root = lattice.root();

    const GameSolution sol = solve_buyer_price(lattice, fbar, xi, config.grid);
    const ConstraintReport cons = check_constraints(sol, lattice);
    const StopRule tau = epsilon_stop(sol, lattice, config.epsilon);
    const double lower = lower_value(lattice, fbar, config.grid, tau, xi);
    const double gap = sol.Ybar[root] - lower;
    const InterchangeBound bound = interchange_bound(sol, fbar, lattice);
    const double gap_limit = bound.k1 * config.epsilon + bound.k2 * lattice.dt();

    const double euro_lower = lower_value(lattice, fbar, config.grid, StopRule::at_horizon(lattice), xi);
    const double rbsde_upper =
        solve_rbsde(lattice, controlled_driver(fbar, ControlProcess::constant(0.0), lattice), xi, xi).Y[root];

    const HedgeReport hedge = verify_superhedge(lattice, sol, config.epsilon, f, config.path_budget, config.seed);
    const LatticeDiagnostics diag = lattice_diagnostics(lattice);

    ordered_json checks;
    checks["constraints"] = cons.passed();
    checks["superhedge"] = hedge.passed(kSuperhedgeTolerance);
    checks["interchange"] = gap >= -kOrderTolerance && gap <= gap_limit;
    checks["sandwich"] = euro_lower <= sol.Ybar[root] + kOrderTolerance && sol.Ybar[root] <= rbsde_upper + kOrderTolerance;

    ordered_json oracle;
    oracle["applicable"] = oracle_applicable(config);
    if (oracle_applicable(config)) {
        const double crr = binomial_american(config.market, config.n_steps, config.payoff.type == PayoffSpec::Type::Put,
                                             config.payoff.strike);
        oracle["binomial_value"] = crr;
        oracle["abs_diff"] = std::abs(crr - sol.Ybar[root]);
        oracle["match"] = std::abs(crr - sol.Ybar[root]) <= kOracleTolerance;
        checks["oracle"] = oracle["match"];
    }

    bool passed = true;
    for (const auto& item : checks.items()) passed = passed && item.value().get<bool>();

    ordered_json s;
    s["schema_version"] = kSchemaVersion;
    s["n_steps"] = config.n_steps;
    s["dt"] = lattice.dt();
    s["lattice"] = {{"node_count", lattice.node_count()},
                    {"alive_nodes", diag.alive_nodes},
                    {"max_probability_error", diag.max_prob_error},
                    {"max_abs_mean_dW", diag.max_dW_mean},
                    {"max_abs_mean_dM", diag.max_dM_mean},
                    {"max_abs_cross_dW_dM", diag.max_cross}};
    ordered_json grid_levels = sol.grid.levels;
    s["nu_grid"] = {{"levels", grid_levels}, {"lower_limit", sol.grid.lower_limit}};
    s["price"] = {{"ybar0", sol.Ybar[root]},
                  {"nu_star_root", sol.nu_star[root]},
                  {"european_lower_bound", euro_lower},
                  {"rbsde_nu0_upper_bound", rbsde_upper}};
    s["interchange"] = {{"epsilon", config.epsilon},
                        {"lower_value", lower},
                        {"gap", gap},
                        {"k1", bound.k1},
                        {"k2", bound.k2},
                        {"bound", gap_limit}};
    s["constraints"] = {{"skorokhod_A", cons.skorokhod_A},
                        {"skorokhod_kbar", cons.skorokhod_kbar},
                        {"singular_A", cons.singular_A},
                        {"singular_kbar", cons.singular_kbar},
                        {"min_jump_constraint", cons.min_jump_constraint},
                        {"min_measure_constraint", cons.min_measure_constraint},
                        {"nodes_above_obstacle", cons.nodes_above_obstacle},
                        {"tolerance", cons.tolerance},
                        {"lipschitz", sol.lipschitz}};
    s["decomposition"] = {
        {"max_positive_residual_off_obstacle", sol.diagnostics.max_positive_residual_off_obstacle},
        {"max_predictable_mismatch", sol.diagnostics.max_predictable_mismatch},
        {"max_reconstruction_error", sol.diagnostics.max_reconstruction_error}};
    s["hedge"] = {{"mode", std::string(to_string(hedge.mode))},
                  {"paths", hedge.path_count},
                  {"seed", hedge.seed},
                  {"epsilon", hedge.epsilon},
                  {"initial_wealth", hedge.initial_wealth},
                  {"min_slack", number_or_null(hedge.min_slack)},
                  {"min_margin", number_or_null(hedge.min_margin)}};
    if (hedge.mode == EnumerationMode::Sampled) {
        s["hedge"]["note"] = "sampled paths: min slack is a one-sided estimate over the drawn paths";
    }
    s["oracle"] = oracle;
    s["checks"] = checks;
    s["passed"] = passed;
    s["format"] = format_name(config.format);

    ScenarioResult result;
    result.summary = s;
    result.passed = passed;

    const std::filesystem::path dir(config.output_dir);
    std::filesystem::create_directories(dir);
    if (config.format != ReportFormat::Csv) {
        const auto p = dir / "summary.json";
        auto out = open_report(p);
        out << s.dump(2) << '\n';
        result.files.push_back(p);
    }
    if (config.format != ReportFormat::Json) {
        const AdaptedField phi = hedge_strategy(sol, lattice);
        write_fields(dir / "fields.csv", lattice, sol, phi, tau);
        write_increments(dir / "increments.csv", lattice, sol);
        write_boundary(dir / "exercise_boundary.csv", lattice, tau);
        write_paths(dir / "hedge_paths.csv", hedge);
        for (const char* name : {"fields.csv", "increments.csv", "exercise_boundary.csv", "hedge_paths.csv"}) {
            result.files.push_back(dir / name);
        }
    }
    return result;
}

StudyResult convergence_study(const ScenarioConfig& config, const std::vector<std::size_t>& levels,
                              const std::vector<NuGrid>& grids) {
    if (levels.empty()) invalid("study.levels", "no levels given");
    for (std::size_t i = 1; i < levels.size(); ++i) {
        if (levels[i] <= levels[i - 1]) invalid("study.levels", "levels must ascend");
    }
    std::vector<NuGrid> used = grids;
    if (used.empty()) used = {config.grid, config.grid.refined(2)};
    for (const NuGrid& g : used) g.validate();

    StudyResult res;
    for (std::size_t li = 0; li < levels.size(); ++li) {
        ScenarioConfig c = config;
        c.n_steps = levels[li];
        c.validate();
        const DefaultLattice lattice = build_lattice(c.market, c.n_steps);
        const AdaptedField xi = build_obstacle(lattice, c.payoff);
        const Driver fbar = dual_driver(build_wealth_driver(c.driver, c.market, c.n_steps));
        for (std::size_t gi = 0; gi < used.size(); ++gi) {
            const GameSolution sol = solve_buyer_price(lattice, fbar, xi, used[gi]);
            const ConstraintReport cons = check_constraints(sol, lattice);
            const double lower = lower_value(lattice, fbar, used[gi], epsilon_stop(sol, lattice, c.epsilon), xi);
            StudyRow row;
            row.n_steps = c.n_steps;
            row.grid_index = gi;
            row.ybar0 = sol.Ybar[lattice.root()];
            row.min_jump_constraint = cons.min_jump_constraint;
            row.min_measure_constraint = cons.min_measure_constraint;
            row.tolerance = cons.tolerance;
            row.interchange_gap = row.ybar0 - lower;
            if (li > 0) row.diff_prev = row.ybar0 - res.rows[(li - 1) * used.size() + gi].ybar0;
            res.rows.push_back(row);
        }
        for (std::size_t a = 0; a < used.size(); ++a) {
            for (std::size_t b = 0; b < used.size(); ++b) {
                if (a == b || !grid_contains(used[b], used[a])) continue;
                const double coarse = res.rows[li * used.size() + a].ybar0;
                const double fine = res.rows[li * used.size() + b].ybar0;
                if (fine > coarse) res.grid_monotone = false;
            }
        }
    }
    for (std::size_t gi = 0; gi < used.size(); ++gi) {
        for (std::size_t li = 2; li < levels.size(); ++li) {
            const double prev = std::abs(res.rows[(li - 1) * used.size() + gi].diff_prev);
            const double cur = std::abs(res.rows[li * used.size() + gi].diff_prev);
            if (cur > 1.2 * prev) res.cauchy_in_n = false;
        }
    }

    const std::filesystem::path dir(config.output_dir);
    std::filesystem::create_directories(dir);
    const auto p = dir / "convergence.csv";
    auto out = open_report(p);
    out << "n_steps,grid_index,ybar0,diff_prev,min_jump_constraint,min_measure_constraint,tolerance,interchange_gap\n";
    for (const StudyRow& r : res.rows) {
        out << r.n_steps << ',' << r.grid_index << ',' << format_double(r.ybar0) << ',' << format_double(r.diff_prev)
            << ',' << format_double(r.min_jump_constraint) << ',' << format_double(r.min_measure_constraint) << ','
            << format_double(r.tolerance) << ',' << format_double(r.interchange_gap) << '\n';
    }
    res.files.push_back(p);
    return res;
}

}  // namespace superhedge
