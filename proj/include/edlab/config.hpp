#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "edlab/common.hpp"
#include "edlab/dynamics.hpp"
#include "edlab/geometry.hpp"
#include "edlab/statespace.hpp"

namespace edlab::config {

// A validation finding. Errors block a run; warnings are reported and echoed.
struct Finding {
    std::string field;  // "section.key", or "section" for section-level problems
    std::string message;
    bool error = true;

    std::string str() const { return (error ? "error: " : "warning: ") + field + ": " + message; }
};

// Time-independent lapse or shift profile over the site lattice.
struct Profile {
    enum class Kind { uniform, sinusoidal, tabulated };
    Kind kind = Kind::uniform;
    double value = 1.0;
    double amplitude = 0.0;
    double wavenumber = 1.0;
    double offset = 0.0;
    std::vector<double> table;

    std::vector<double> evaluate(int n) const {
        std::vector<double> out(n, value);
        if (kind == Kind::tabulated) return table;
        if (kind == Kind::sinusoidal)
            for (int x = 0; x < n; ++x) out[x] = value + amplitude * std::sin(2.0 * std::numbers::pi * wavenumber * x / n + offset);
        return out;
    }
};

struct SampleSection {
    long walkers = 20000;
    double l1_tolerance = 0.05;
};

struct PathCheckSection {
    std::vector<double> eps{1e-2, 5e-3, 2.5e-3};
    int substeps = 8;
    Profile xi{Profile::Kind::sinusoidal, 1.0, 0.3, 1.0, 0.3, {}};
    Profile eta{Profile::Kind::sinusoidal, 1.0, 0.3, 1.0, 1.2, {}};
    std::string inject = "none";  // none | f1 | f2 | h0 | h1 | h2
    double inject_value = 0.1;
    double min_order = 2.5;  // asserted for canonical runs
    double max_order = 2.2;  // asserted when a coefficient is injected
    double phase_support = 1e-8;
};

struct AlgebraSection {
    std::vector<double> f;  // empty: 1 + 0.3 sin profile
    std::vector<double> g;  // empty: 1 + 0.3 cos profile
    double tolerance_perp = 1e-4;
    double tolerance_tan = 1e-5;
};

struct UniquenessSection {
    std::vector<double> scales{-1.0, -0.5, 0.0, 0.5, 1.0};
    std::vector<double> perturbations{-0.1, 0.1};
    int battery = 20;
    double tolerance = 1e-8;
    double separation = 1e-3;  // perturbed candidates must exceed this residual
};

struct MaxentSection {
    double kappa = 1.0;
    double drift_grad = 0.5;
    int points = 4001;
    double tolerance = 1e-6;
};

struct ExperimentConfig {
    // background
    std::string background_kind = "minkowski";
    double acceleration = 0.0;
    // lattice
    int n_sites = 1;
    double spacing = 1.0;
    double x1_origin = 0.0;
    double x0 = 0.0;
    // grid
    double half_width = 8.0;
    int points_per_axis = 64;
    // state
    std::string family = "gaussian";
    double width = 1.0;
    std::vector<double> center;
    std::vector<double> phase_linear;
    std::vector<double> phase_quadratic;
    double phase_cross = 0.0;
    // dynamics
    std::string potential = "mass";
    double mass = 1.0;
    std::vector<double> potential_coefficients;
    double eta = 1.0;
    double lambda = 0.125;
    double dtau = 1e-3;
    double T = 0.0;
    std::string mode = "pde";
    // foliation
    Profile lapse;
    Profile shift{Profile::Kind::uniform, 0.0, 0.0, 1.0, 0.0, {}};
    // run
    std::uint64_t seed = 1;
    std::string output = ".";
    std::string experiment;

    SampleSection sample;
    PathCheckSection path_check;
    AlgebraSection algebra_check;
    UniquenessSection uniqueness_scan;
    MaxentSection maxent_check;

    // Raw key/value pairs as read, for echoing into summaries.
    std::map<std::string, std::map<std::string, std::string>> raw;

    ConfigGrid grid() const { return ConfigGrid(n_sites, half_width, points_per_axis); }

    SpacetimeBackground background() const {
        return background_kind == "rindler" ? SpacetimeBackground::rindler(acceleration) : SpacetimeBackground::minkowski();
    }

    Hypersurface surface() const { return Hypersurface::flat(n_sites, spacing, x1_origin, x0); }

    Constants constants() const { return mode == "hybrid" ? Constants::make(eta, 0.0) : Constants::make(eta, lambda); }

    Model model() const {
        Model m;
        if (potential == "zero") m.potential = PotentialSpec::zero();
        else if (potential == "mass") m.potential = PotentialSpec::with_mass(mass);
        else m.potential = PotentialSpec::polynomial(potential_coefficients);
        m.constants = constants();
        return m;
    }

    EvolveMode evolve_mode() const { return mode == "wave" ? EvolveMode::wave : EvolveMode::pde; }

    double phase_at(const std::array<double, 3>& p) const {
        double v = 0.0;
        for (int a = 0; a < n_sites; ++a) {
            if (a < static_cast<int>(phase_linear.size())) v += phase_linear[a] * p[a];
            if (a < static_cast<int>(phase_quadratic.size())) v += phase_quadratic[a] * p[a] * p[a];
        }
        if (n_sites >= 2) v += phase_cross * p[0] * p[1];
        return v;
    }

    EnsembleState initial_state() const {
        const ConfigGrid g = grid();
        std::array<double, 3> c{0.0, 0.0, 0.0};
        for (std::size_t a = 0; a < center.size() && a < 3; ++a) c[a] = center[a];
        auto phi = [&](const std::array<double, 3>& p) { return phase_at(p); };
        if (family == "uniform") return sample_state(g, [](const std::array<double, 3>&) { return 1.0; }, phi);
        return sample_state(
            g,
            [&](const std::array<double, 3>& p) {
                double q = 0.0;
                for (int a = 0; a < n_sites; ++a) q += (p[a] - c[a]) * (p[a] - c[a]);
                return std::exp(-0.5 * q / (width * width));
            },
            phi);
    }

    FoliationSchedule schedule() const {
        FoliationSchedule sch;
        const long steps = std::lround(T / dtau);
        const auto N = lapse.evaluate(n_sites);
        const auto S = shift.evaluate(n_sites);
        for (long i = 0; i < steps; ++i) sch.push_back({N, S, dtau});
        return sch;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& s) {
    const std::string t = trim(s);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        throw ConfigError("expected a number, got '" + s + "'");
    }
    if (used != t.size()) throw ConfigError("expected a number, got '" + s + "'");
    if (!std::isfinite(v)) throw ConfigError("value must be finite");
    return v;
}

inline long parse_long(const std::string& s) {
    const double v = parse_double(s);
    if (v != std::floor(v) || std::abs(v) > 9e15) throw ConfigError("expected an integer, got '" + s + "'");
    return static_cast<long>(v);
}

inline std::uint64_t parse_seed(const std::string& s) {
    const std::string t = trim(s);
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(t, &used);
    } catch (const std::exception&) {
        throw ConfigError("expected a non-negative integer seed, got '" + s + "'");
    }
    if (used != t.size() || t.empty() || t[0] == '-') throw ConfigError("expected a non-negative integer seed, got '" + s + "'");
    return v;
}

inline std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(item));
    return out;
}

inline std::string parse_choice(const std::string& s, std::initializer_list<const char*> allowed) {
    const std::string t = trim(s);
    std::string list;
    for (const char* a : allowed) {
        if (t == a) return t;
        list += (list.empty() ? "" : ", ") + std::string(a);
    }
    throw ConfigError("unknown value '" + t + "' (allowed: " + list + ")");
}

using Setter = std::function<void(const std::string&)>;
using Registry = std::map<std::string, std::map<std::string, Setter>>;

inline void profile_keys(std::map<std::string, Setter>& sec, const std::string& prefix, Profile& p) {
    sec[prefix] = [&p](const std::string& v) {
        const std::string k = parse_choice(v, {"uniform", "sinusoidal", "tabulated"});
        p.kind = k == "uniform" ? Profile::Kind::uniform : k == "sinusoidal" ? Profile::Kind::sinusoidal : Profile::Kind::tabulated;
    };
    sec[prefix + "_value"] = [&p](const std::string& v) { p.value = parse_double(v); };
    sec[prefix + "_amplitude"] = [&p](const std::string& v) { p.amplitude = parse_double(v); };
    sec[prefix + "_wavenumber"] = [&p](const std::string& v) { p.wavenumber = parse_double(v); };
    sec[prefix + "_offset"] = [&p](const std::string& v) { p.offset = parse_double(v); };
    sec[prefix + "_table"] = [&p](const std::string& v) { p.table = parse_list(v); };
}

inline Registry registry(ExperimentConfig& c) {
    Registry r;
    auto& bg = r["background"];
    bg["kind"] = [&c](const std::string& v) { c.background_kind = parse_choice(v, {"minkowski", "rindler"}); };
    bg["acceleration"] = [&c](const std::string& v) { c.acceleration = parse_double(v); };

    auto& lat = r["lattice"];
    lat["n_sites"] = [&c](const std::string& v) { c.n_sites = static_cast<int>(parse_long(v)); };
    lat["spacing"] = [&c](const std::string& v) { c.spacing = parse_double(v); };
    lat["x1_origin"] = [&c](const std::string& v) { c.x1_origin = parse_double(v); };
    lat["x0"] = [&c](const std::string& v) { c.x0 = parse_double(v); };

    auto& grid = r["grid"];
    grid["half_width"] = [&c](const std::string& v) { c.half_width = parse_double(v); };
    grid["points_per_axis"] = [&c](const std::string& v) { c.points_per_axis = static_cast<int>(parse_long(v)); };

    auto& st = r["state"];
    st["family"] = [&c](const std::string& v) { c.family = parse_choice(v, {"gaussian", "uniform"}); };
    st["width"] = [&c](const std::string& v) { c.width = parse_double(v); };
    st["center"] = [&c](const std::string& v) { c.center = parse_list(v); };
    st["phase_linear"] = [&c](const std::string& v) { c.phase_linear = parse_list(v); };
    st["phase_quadratic"] = [&c](const std::string& v) { c.phase_quadratic = parse_list(v); };
    st["phase_cross"] = [&c](const std::string& v) { c.phase_cross = parse_double(v); };

    auto& dyn = r["dynamics"];
    dyn["potential"] = [&c](const std::string& v) { c.potential = parse_choice(v, {"zero", "mass", "polynomial"}); };
    dyn["mass"] = [&c](const std::string& v) { c.mass = parse_double(v); };
    dyn["potential_coefficients"] = [&c](const std::string& v) { c.potential_coefficients = parse_list(v); };
    dyn["eta"] = [&c](const std::string& v) { c.eta = parse_double(v); };
    dyn["lambda"] = [&c](const std::string& v) { c.lambda = parse_double(v); };
    dyn["dtau"] = [&c](const std::string& v) { c.dtau = parse_double(v); };
    dyn["T"] = [&c](const std::string& v) { c.T = parse_double(v); };
    dyn["mode"] = [&c](const std::string& v) { c.mode = parse_choice(v, {"pde", "wave", "hybrid"}); };

    auto& fol = r["foliation"];
    profile_keys(fol, "lapse", c.lapse);
    profile_keys(fol, "shift", c.shift);

    auto& run = r["run"];
    run["seed"] = [&c](const std::string& v) { c.seed = parse_seed(v); };
    run["output"] = [&c](const std::string& v) { c.output = trim(v); };
    run["experiment"] = [&c](const std::string& v) {
        c.experiment = parse_choice(v, {"simulate", "sample", "path-check", "algebra-check", "uniqueness-scan", "maxent-check"});
    };

    auto& sa = r["sample"];
    sa["walkers"] = [&c](const std::string& v) { c.sample.walkers = parse_long(v); };
    sa["l1_tolerance"] = [&c](const std::string& v) { c.sample.l1_tolerance = parse_double(v); };

    auto& pc = r["path_check"];
    pc["eps"] = [&c](const std::string& v) { c.path_check.eps = parse_list(v); };
    pc["substeps"] = [&c](const std::string& v) { c.path_check.substeps = static_cast<int>(parse_long(v)); };
    profile_keys(pc, "xi", c.path_check.xi);
    profile_keys(pc, "eta", c.path_check.eta);
    pc["inject"] = [&c](const std::string& v) { c.path_check.inject = parse_choice(v, {"none", "f1", "f2", "h0", "h1", "h2"}); };
    pc["inject_value"] = [&c](const std::string& v) { c.path_check.inject_value = parse_double(v); };
    pc["min_order"] = [&c](const std::string& v) { c.path_check.min_order = parse_double(v); };
    pc["max_order"] = [&c](const std::string& v) { c.path_check.max_order = parse_double(v); };
    pc["phase_support"] = [&c](const std::string& v) { c.path_check.phase_support = parse_double(v); };

    auto& al = r["algebra_check"];
    al["f"] = [&c](const std::string& v) { c.algebra_check.f = parse_list(v); };
    al["g"] = [&c](const std::string& v) { c.algebra_check.g = parse_list(v); };
    al["tolerance_perp"] = [&c](const std::string& v) { c.algebra_check.tolerance_perp = parse_double(v); };
    al["tolerance_tan"] = [&c](const std::string& v) { c.algebra_check.tolerance_tan = parse_double(v); };

    auto& us = r["uniqueness_scan"];
    us["scales"] = [&c](const std::string& v) { c.uniqueness_scan.scales = parse_list(v); };
    us["perturbations"] = [&c](const std::string& v) { c.uniqueness_scan.perturbations = parse_list(v); };
    us["battery"] = [&c](const std::string& v) { c.uniqueness_scan.battery = static_cast<int>(parse_long(v)); };
    us["tolerance"] = [&c](const std::string& v) { c.uniqueness_scan.tolerance = parse_double(v); };
    us["separation"] = [&c](const std::string& v) { c.uniqueness_scan.separation = parse_double(v); };

    auto& me = r["maxent_check"];
    me["kappa"] = [&c](const std::string& v) { c.maxent_check.kappa = parse_double(v); };
    me["drift_grad"] = [&c](const std::string& v) { c.maxent_check.drift_grad = parse_double(v); };
    me["points"] = [&c](const std::string& v) { c.maxent_check.points = static_cast<int>(parse_long(v)); };
    me["tolerance"] = [&c](const std::string& v) { c.maxent_check.tolerance = parse_double(v); };
    return r;
}

inline void range_checks(const ExperimentConfig& c, std::vector<Finding>& out) {
    auto err = [&](const std::string& f, const std::string& m) { out.push_back({f, m, true}); };
    if (c.n_sites < 1 || c.n_sites > 3) err("lattice.n_sites", "must be 1, 2 or 3");
    if (!(c.spacing > 0.0)) err("lattice.spacing", "must be positive");
    if (c.points_per_axis < 16) err("grid.points_per_axis", "points_per_axis below minimum 16");
    if (c.points_per_axis > 4096) err("grid.points_per_axis", "above maximum 4096");
    if (c.n_sites >= 1 && c.n_sites <= 3 && std::pow(static_cast<double>(c.points_per_axis), c.n_sites) > 3e7)
        err("grid.points_per_axis", "grid exceeds 3e7 nodes");
    if (!(c.half_width > 0.0)) err("grid.half_width", "must be positive");
    if (!(c.width > 0.0)) err("state.width", "must be positive");
    if (static_cast<int>(c.center.size()) > c.n_sites) err("state.center", "more entries than lattice.n_sites");
    if (static_cast<int>(c.phase_linear.size()) > c.n_sites) err("state.phase_linear", "more entries than lattice.n_sites");
    if (static_cast<int>(c.phase_quadratic.size()) > c.n_sites) err("state.phase_quadratic", "more entries than lattice.n_sites");
    if (c.potential == "polynomial" && c.potential_coefficients.size() > 7) err("dynamics.potential_coefficients", "degree exceeds 6");
    if (!(c.eta > 0.0)) err("dynamics.eta", "must be positive");
    if (c.lambda < 0.0) err("dynamics.lambda", "must be non-negative");
    if (!(c.dtau > 0.0)) err("dynamics.dtau", "must be positive");
    if (c.T < 0.0) err("dynamics.T", "must be non-negative");
    if (c.dtau > 0.0 && c.T / c.dtau > 1e7) err("dynamics.T", "more than 1e7 steps");
    if (c.mode == "wave" && !(c.lambda > 0.0)) err("dynamics.lambda", "wave mode needs lambda > 0");
    if (c.mode == "hybrid" && c.lambda != 0.0) err("dynamics.lambda", "hybrid mode needs lambda = 0");
    if (c.background_kind == "rindler") {
        const double far = c.x1_origin + c.spacing * std::max(c.n_sites - 1, 0);
        if (1.0 + c.acceleration * std::min(c.x1_origin, far) <= 0.0 || 1.0 + c.acceleration * std::max(c.x1_origin, far) <= 0.0)
            err("background.acceleration", "surface crosses the rindler horizon");
    }
    auto profile_check = [&](const Profile& p, const std::string& key) {
        if (p.kind == Profile::Kind::tabulated && static_cast<int>(p.table.size()) != c.n_sites)
            err(key + "_table", "needs exactly lattice.n_sites entries");
    };
    profile_check(c.lapse, "foliation.lapse");
    profile_check(c.shift, "foliation.shift");
    profile_check(c.path_check.xi, "path_check.xi");
    profile_check(c.path_check.eta, "path_check.eta");
    if (c.sample.walkers < 1 || c.sample.walkers > 100000000) err("sample.walkers", "must be in [1, 1e8]");
    if (!(c.sample.l1_tolerance > 0.0)) err("sample.l1_tolerance", "must be positive");
    if (c.path_check.eps.size() < 3) err("path_check.eps", "needs at least 3 values");
    for (double e : c.path_check.eps)
        if (!(e > 0.0)) err("path_check.eps", "values must be positive");
    if (c.path_check.substeps < 1) err("path_check.substeps", "must be at least 1");
    if (!(c.path_check.phase_support >= 0.0 && c.path_check.phase_support < 1.0)) err("path_check.phase_support", "must be in [0, 1)");
    if (!c.algebra_check.f.empty() && static_cast<int>(c.algebra_check.f.size()) != c.n_sites)
        err("algebra_check.f", "needs exactly lattice.n_sites entries");
    if (!c.algebra_check.g.empty() && static_cast<int>(c.algebra_check.g.size()) != c.n_sites)
        err("algebra_check.g", "needs exactly lattice.n_sites entries");
    if (!(c.algebra_check.tolerance_perp > 0.0)) err("algebra_check.tolerance_perp", "must be positive");
    if (!(c.algebra_check.tolerance_tan > 0.0)) err("algebra_check.tolerance_tan", "must be positive");
    if (c.uniqueness_scan.battery < 1) err("uniqueness_scan.battery", "must be at least 1");
    if (!(c.uniqueness_scan.tolerance > 0.0)) err("uniqueness_scan.tolerance", "must be positive");
    if (!(c.maxent_check.kappa > 0.0)) err("maxent_check.kappa", "must be positive");
    if (c.maxent_check.points < 101) err("maxent_check.points", "must be at least 101");
    if (!(c.maxent_check.tolerance > 0.0)) err("maxent_check.tolerance", "must be positive");
}

// Warns when the initial density reaches the box edges.
inline void support_check(const ExperimentConfig& c, std::vector<Finding>& out) {
    const EnsembleState s = c.initial_state();
    const double peak = *std::max_element(s.rho.begin(), s.rho.end());
    const double edge = boundary_max_rho(s, c.grid());
    if (peak > 0.0 && edge / peak > kRhoFloorFraction) {
        std::ostringstream m;
        m << "initial rho at the box edge is " << edge / peak << " of its peak (> 1e-12); increase grid.half_width";
        out.push_back({"grid.half_width", m.str(), false});
    }
}

}  // namespace detail

// Parses an INI stream. Returns the config and every finding; never throws on content problems.
inline std::pair<ExperimentConfig, std::vector<Finding>> parse(std::istream& in) {
    ExperimentConfig c;
    std::vector<Finding> findings;
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        findings.push_back({"file", e.message() + " (line " + std::to_string(e.line()) + ")", true});
        return {c, findings};
    }
    auto reg = detail::registry(c);
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            findings.push_back({section, "key outside any section", true});
            continue;
        }
        const auto sec = reg.find(section);
        if (sec == reg.end()) {
            findings.push_back({section, "unknown section", true});
            continue;
        }
        for (const auto& [key, node] : body) {
            const std::string field = section + "." + key;
            const auto setter = sec->second.find(key);
            if (setter == sec->second.end()) {
                findings.push_back({field, "unknown key", true});
                continue;
            }
            c.raw[section][key] = node.data();
            try {
                setter->second(node.data());
            } catch (const ConfigError& e) {
                findings.push_back({field, e.what(), true});
            }
        }
    }
    detail::range_checks(c, findings);
    const bool blocked = std::any_of(findings.begin(), findings.end(), [](const Finding& f) { return f.error; });
    if (!blocked) detail::support_check(c, findings);
    return {c, findings};
}

inline std::pair<ExperimentConfig, std::vector<Finding>> parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    return parse(in);
}

inline std::pair<ExperimentConfig, std::vector<Finding>> parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
}

inline std::vector<Finding> validate(const std::string& path) { return parse_file(path).second; }

}  // namespace edlab::config
