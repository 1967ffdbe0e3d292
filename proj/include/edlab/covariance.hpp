#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "edlab/common.hpp"
#include "edlab/dynamics.hpp"
#include "edlab/geometry.hpp"
#include "edlab/statespace.hpp"

namespace edlab {

// ---------------------------------------------------------------------------
// Truncated Taylor arithmetic. Jet<Jet<double>> carries exact mixed partials
// up to second order in each of two variables.

template <class S>
struct Jet {
    std::array<S, 3> c{S(0.0), S(0.0), S(0.0)};

    Jet() = default;
    Jet(double v) : c{S(v), S(0.0), S(0.0)} {}  // NOLINT(google-explicit-constructor)
    Jet(S a, S b, S d) : c{a, b, d} {}
    static Jet variable(S at) { return Jet(at, S(1.0), S(0.0)); }
};

template <class S> Jet<S> operator+(const Jet<S>& a, const Jet<S>& b) { return {a.c[0] + b.c[0], a.c[1] + b.c[1], a.c[2] + b.c[2]}; }
template <class S> Jet<S> operator-(const Jet<S>& a, const Jet<S>& b) { return {a.c[0] - b.c[0], a.c[1] - b.c[1], a.c[2] - b.c[2]}; }
template <class S> Jet<S> operator-(const Jet<S>& a) { return {-a.c[0], -a.c[1], -a.c[2]}; }
template <class S> Jet<S> operator*(const Jet<S>& a, const Jet<S>& b) {
    return {a.c[0] * b.c[0], a.c[0] * b.c[1] + a.c[1] * b.c[0], a.c[0] * b.c[2] + a.c[1] * b.c[1] + a.c[2] * b.c[0]};
}
template <class S> Jet<S> operator/(const Jet<S>& a, const Jet<S>& b) {
    Jet<S> q;
    q.c[0] = a.c[0] / b.c[0];
    q.c[1] = (a.c[1] - b.c[1] * q.c[0]) / b.c[0];
    q.c[2] = (a.c[2] - b.c[1] * q.c[1] - b.c[2] * q.c[0]) / b.c[0];
    return q;
}
template <class S> Jet<S> operator+(const Jet<S>& a, double s) { return a + Jet<S>(s); }
template <class S> Jet<S> operator+(double s, const Jet<S>& a) { return Jet<S>(s) + a; }
template <class S> Jet<S> operator-(const Jet<S>& a, double s) { return a - Jet<S>(s); }
template <class S> Jet<S> operator-(double s, const Jet<S>& a) { return Jet<S>(s) - a; }
template <class S> Jet<S> operator*(const Jet<S>& a, double s) { return {a.c[0] * s, a.c[1] * s, a.c[2] * s}; }
template <class S> Jet<S> operator*(double s, const Jet<S>& a) { return a * s; }
template <class S> Jet<S> operator/(const Jet<S>& a, double s) { return a * (1.0 / s); }
template <class S> Jet<S> operator/(double s, const Jet<S>& a) { return Jet<S>(s) / a; }

template <class S>
Jet<S> exp(const Jet<S>& a) {
    using std::exp;
    Jet<S> e;
    e.c[0] = exp(a.c[0]);
    e.c[1] = a.c[1] * e.c[0];
    e.c[2] = 0.5 * (a.c[1] * e.c[1] + 2.0 * a.c[2] * e.c[0]);
    return e;
}

using Jet1 = Jet<double>;
using Jet2 = Jet<Jet<double>>;

// ---------------------------------------------------------------------------
// Closed-form test states on a pair of configuration variables (u, v):
// rho = exp(-q^T A q / 2) (1 + p(u, v)^2), Phi = cubic with cross terms.

struct AnalyticTestState {
    std::array<double, 3> precision{1.0, 0.0, 1.0};  // A00, A01, A11
    std::array<double, 5> poly{};                      // p = c0 + c1 u + c2 v + c3 u v + c4 u^2
    std::array<double, 9> phase{};                     // b1 u + b2 v + b3 u^2 + b4 u v + b5 v^2 + b6 u^3 + b7 u^2 v + b8 u v^2 + b9 v^3
    std::vector<std::array<double, 2>> points;
    std::uint64_t seed = 0;

    template <class T>
    T rho(const T& u, const T& v) const {
        const T q = precision[0] * u * u + 2.0 * precision[1] * u * v + precision[2] * v * v;
        const T p = poly[0] + poly[1] * u + poly[2] * v + poly[3] * u * v + poly[4] * u * u;
        using std::exp;
        return exp(-0.5 * q) * (1.0 + p * p);
    }
    template <class T>
    T phi(const T& u, const T& v) const {
        const auto& b = phase;
        return b[0] * u + b[1] * v + b[2] * u * u + b[3] * u * v + b[4] * v * v + b[5] * u * u * u + b[6] * u * u * v +
               b[7] * u * v * v + b[8] * v * v * v;
    }

    static AnalyticTestState random(std::uint64_t seed, int n_points = 8) {
        std::mt19937_64 gen(seed);
        std::uniform_real_distribution<double> U(-1.0, 1.0);
        AnalyticTestState s;
        s.seed = seed;
        const double a = 0.6 + 0.6 * (U(gen) + 1.0) / 2.0, d = 0.6 + 0.6 * (U(gen) + 1.0) / 2.0;
        s.precision = {a, 0.4 * std::sqrt(a * d) * U(gen), d};
        for (double& c : s.poly) c = 0.6 * U(gen);
        auto lead = [&] { return (U(gen) < 0.0 ? -1.0 : 1.0) * (0.8 + 0.2 * (U(gen) + 1.0)); };
        s.phase[0] = lead();
        s.phase[1] = lead();
        for (int i = 2; i < 9; ++i) s.phase[i] = 0.1 * U(gen);
        for (int i = 0; i < n_points; ++i) s.points.push_back({0.8 * U(gen), 0.8 * U(gen)});
        return s;
    }
};

namespace detail {

// Taylor coefficients t[i][j] = d^i_u d^j_v f / (i! j!) at a point.
using Coeffs = std::array<std::array<double, 3>, 3>;

inline Coeffs taylor_coefficients(const Jet2& f) {
    Coeffs t{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t[i][j] = f.c[i].c[j];
    return t;
}

inline Coeffs transpose(const Coeffs& t) {
    Coeffs o{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) o[i][j] = t[j][i];
    return o;
}

// d_u (rho d_u M_v) with M_v = V(v) + U built from v-derivatives, expanded along u.
inline double constraint_side(const Coeffs& r, const Coeffs& p, const CandidateCoefficients& c, double v_at) {
    auto series = [](const Coeffs& t, int vorder) {
        const double f = vorder == 2 ? 2.0 : 1.0;
        return Jet1(t[0][vorder] * f, t[1][vorder] * f, t[2][vorder] * f);
    };
    const Jet1 R = series(r, 0), Rv = series(r, 1), Rvv = series(r, 2);
    const Jet1 Pv = series(p, 1), Pvv = series(p, 2);
    Jet1 U = Jet1(c.V(v_at));
    if (c.f1_scale != 0.0) U = U + c.f1_scale * Rvv / R;
    if (c.f2 != 0.0) U = U + c.f2 * Pvv;
    if (c.h0 != 0.0) U = U + c.h0 / (Pv * Pv);
    if (c.h1 != 0.0) U = U + c.h1 * Rv / Pv;
    if (c.h2_scale != 0.0) U = U + c.h2_scale * (Rv / R) * (Rv / R);
    return 2.0 * R.c[0] * U.c[2] + R.c[1] * U.c[1];
}

// Signed residual at one point. With `swapped` the state's variables are relabelled (x <-> x').
inline double constraint_at(const CandidateCoefficients& c, const AnalyticTestState& st, const std::array<double, 2>& pt,
                            bool swapped) {
    const double pu = swapped ? pt[1] : pt[0], pv = swapped ? pt[0] : pt[1];
    const Jet2 u = Jet2::variable(Jet1(pu));
    Jet2 v;
    v.c[0] = Jet1::variable(pv);
    const Jet2 r2 = swapped ? st.rho(v, u) : st.rho(u, v);
    const Jet2 p2 = swapped ? st.phi(v, u) : st.phi(u, v);
    const auto r = taylor_coefficients(r2);
    const auto p = taylor_coefficients(p2);
    return constraint_side(r, p, c, pv) - constraint_side(transpose(r), transpose(p), c, pu);
}

}  // namespace detail

// Max over the battery points of |d_x(rho d_x M_x') - d_x'(rho d_x' M_x)|.
inline double constraint_residual(const CandidateCoefficients& c, const AnalyticTestState& st, int x, int xp) {
    if (x == xp) throw ParameterError("constraint residual needs two distinct sites");
    double worst = 0.0;
    for (const auto& pt : st.points) {
        const double res = detail::constraint_at(c, st, pt, x > xp);
        if (!std::isfinite(res)) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, std::abs(res));
    }
    return worst;
}

// Signed residual at the first battery point.
inline double constraint_residual_signed(const CandidateCoefficients& c, const AnalyticTestState& st, int x, int xp) {
    if (x == xp) throw ParameterError("constraint residual needs two distinct sites");
    return detail::constraint_at(c, st, st.points.front(), x > xp);
}

inline std::vector<AnalyticTestState> test_battery(std::uint64_t seed, int count = 20) {
    std::vector<AnalyticTestState> out;
    std::mt19937_64 gen(seed);
    for (int i = 0; i < count; ++i) out.push_back(AnalyticTestState::random(gen()));
    return out;
}

struct CoefficientOdeCheck {
    double continuity = 0.0;  // max |rho f1' + f1|
    double h2_relation = 0.0;  // max |h2 - f1'/2|
};

// Substitutes f1 = s/rho, h2 = s2/rho^2 into the two coefficient equations on sampled densities.
inline CoefficientOdeCheck coefficient_odes(const CandidateCoefficients& c, const std::vector<double>& rhos) {
    CoefficientOdeCheck out;
    for (double r : rhos) {
        const Jet1 rho = Jet1::variable(r);
        const Jet1 f1 = c.f1_scale / rho;
        const double df1 = f1.c[1];
        const double h2 = c.h2_scale / (r * r);
        out.continuity = std::max(out.continuity, std::abs(r * df1 + f1.c[0]));
        out.h2_relation = std::max(out.h2_relation, std::abs(h2 - 0.5 * df1));
    }
    return out;
}

struct ScanReport {
    CandidateCoefficients candidate;
    double residual = 0.0;
    double tolerance = 1e-8;
    bool closes = false;
    bool canonical = false;
    std::string label;
    CoefficientOdeCheck odes;
};

struct ScanOptions {
    std::vector<double> scales{-1.0, -0.5, 0.0, 0.5, 1.0};
    std::vector<double> perturbations{-0.1, 0.1};
    std::uint64_t seed = 12345;
    int battery = 20;
    double tolerance = 1e-8;
};

inline ScanReport evaluate_candidate(const CandidateCoefficients& c, const std::vector<AnalyticTestState>& battery,
                                     double tolerance, std::string label) {
    ScanReport r;
    r.candidate = c;
    r.tolerance = tolerance;
    r.label = std::move(label);
    for (const auto& st : battery) r.residual = std::max(r.residual, constraint_residual(c, st, 0, 1));
    r.closes = r.residual <= tolerance;
    r.canonical = c.is_canonical();
    std::vector<double> rhos;
    for (int i = 1; i <= 20; ++i) rhos.push_back(0.1 * i);
    r.odes = coefficient_odes(c, rhos);
    return r;
}

// Canonical family members with random potentials, and every single-coefficient perturbation of each.
inline std::vector<ScanReport> uniqueness_scan(const ScanOptions& opt = {}) {
    const auto battery = test_battery(opt.seed, opt.battery);
    std::mt19937_64 gen(opt.seed ^ 0xa5a5a5a5ULL);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<ScanReport> out;
    const char* names[] = {"f1", "f2", "h0", "h1", "h2"};
    for (double c : opt.scales) {
        const PotentialSpec V = PotentialSpec::polynomial({U(gen), U(gen), 0.5 + 0.5 * U(gen), 0.1 * U(gen), 0.05 * std::abs(U(gen))});
        const auto base = CandidateCoefficients::canonical(c, V);
        out.push_back(evaluate_candidate(base, battery, opt.tolerance, "canonical c=" + std::to_string(c)));
        for (int k = 0; k < 5; ++k)
            for (double d : opt.perturbations) {
                CandidateCoefficients p = base;
                double* field[] = {&p.f1_scale, &p.f2, &p.h0, &p.h1, &p.h2_scale};
                *field[k] += d;
                out.push_back(evaluate_candidate(p, battery, opt.tolerance,
                                                 "c=" + std::to_string(c) + " " + names[k] + (d > 0 ? "+" : "") + std::to_string(d)));
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Path independence.

struct TwoPathEntry {
    double disc_rho = 0.0;
    double disc_phi = 0.0;
};

struct TwoPathReport {
    std::vector<double> eps_values;
    std::vector<double> discrepancy_rho;
    std::vector<double> discrepancy_phi;
    double fitted_order = 0.0;
};

inline double fitted_order(const std::vector<double>& eps, const std::vector<double>& disc) {
    if (eps.size() != disc.size()) throw ParameterError("eps and discrepancy lists differ in length");
    if (eps.size() < 3) throw ParameterError("fitted order needs at least 3 points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double n = static_cast<double>(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (!(eps[i] > 0.0) || !(disc[i] > 0.0)) throw ParameterError("fitted order needs positive eps and discrepancies");
        const double x = std::log(eps[i]), y = std::log(disc[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct PathContext {
    ConfigGrid grid;
    SpacetimeBackground background;
    Hypersurface surface;
    Model model;
    int substeps = 8;  // explicit steps per leg, the same for every eps
    double phase_support = 1e-8;  // phases compared only where rho >= phase_support * max rho
};

namespace detail {

inline void path_leg(EnsembleState& s, Hypersurface& surf, const PathContext& ctx, const Deformation& d, double dtau) {
    if (d.is_zero() || dtau == 0.0) return;
    const double h = dtau / ctx.substeps;
    for (int i = 0; i < ctx.substeps; ++i) {
        const InducedGeometry geo = induced_metric(ctx.background, surf);
        s = step_normal(s, ctx.grid, geo, d.normal_comp, h, ctx.model, d.tangential_comp);
        surf = apply_deformation(ctx.background, surf, d.scaled(h));
    }
}

}  // namespace detail

// Path A: eps*xi then eps*eta. Path B: eps*eta, eps*xi, then eps^2*zeta.
inline TwoPathEntry two_path_test(const EnsembleState& s, const PathContext& ctx, const Deformation& xi,
                                  const Deformation& eta, double eps) {
    const Deformation zeta = compensating_deformation(ctx.background, ctx.surface, xi, eta);
    EnsembleState a = s, b = s;
    Hypersurface sa = ctx.surface, sb = ctx.surface;
    detail::path_leg(a, sa, ctx, xi, eps);
    detail::path_leg(a, sa, ctx, eta, eps);
    detail::path_leg(b, sb, ctx, eta, eps);
    detail::path_leg(b, sb, ctx, xi, eps);
    detail::path_leg(b, sb, ctx, zeta, eps * eps);
    const double cut = ctx.phase_support * std::max(*std::max_element(a.rho.begin(), a.rho.end()),
                                                    *std::max_element(b.rho.begin(), b.rho.end()));
    double dphi = 0.0;
    for (std::size_t i = 0; i < a.phi.size(); ++i)
        if (a.rho[i] >= cut && b.rho[i] >= cut) dphi = std::max(dphi, std::abs(a.phi[i] - b.phi[i]));
    return {max_abs_diff(a.rho, b.rho), dphi};
}

inline TwoPathReport two_path_series(const EnsembleState& s, const PathContext& ctx, const Deformation& xi,
                                     const Deformation& eta, const std::vector<double>& eps) {
    TwoPathReport r;
    std::vector<double> combined;
    for (double e : eps) {
        const auto t = two_path_test(s, ctx, xi, eta, e);
        r.eps_values.push_back(e);
        r.discrepancy_rho.push_back(t.disc_rho);
        r.discrepancy_phi.push_back(t.disc_phi);
        combined.push_back(std::max(t.disc_rho, t.disc_phi));
    }
    r.fitted_order = fitted_order(r.eps_values, combined);
    return r;
}

// Lapse 1 + amplitude sin(2 pi k x / n + offset).
inline std::vector<double> sinusoidal_profile(int n, double amplitude, double wavenumber, double offset, double base = 1.0) {
    std::vector<double> v(n);
    for (int x = 0; x < n; ++x) v[x] = base + amplitude * std::sin(2.0 * std::numbers::pi * wavenumber * x / n + offset);
    return v;
}

// ---------------------------------------------------------------------------
// Smeared bracket relations.

struct AlgebraResiduals {
    double perp_perp = 0.0;
    double tan_perp = 0.0;
    double tan_tan = 0.0;
    double perp_perp_lhs = 0.0, perp_perp_rhs = 0.0, perp_perp_mixed = 0.0;
    double tan_perp_lhs = 0.0, tan_perp_rhs = 0.0, tan_perp_geometry = 0.0;
    double tan_tan_lhs = 0.0, tan_tan_rhs = 0.0;
};

namespace detail {

// (d delta)_{x, x'} = (delta_{x+1, x'} - delta_{x-1, x'}) / 2 on the periodic site lattice.
inline double d_delta(int x, int xp, int n) {
    return 0.5 * ((wrap(x + 1, n) == xp ? 1.0 : 0.0) - (wrap(x - 1, n) == xp ? 1.0 : 0.0));
}

inline double smeared_hamiltonian(const EnsembleState& s, const ConfigGrid& g, const InducedGeometry& geo, const Model& m,
                                  const std::vector<double>& f) {
    return total_hamiltonian(s, g, geo, m, f);
}

inline double smeared_momentum(const EnsembleState& s, const ConfigGrid& g, const std::vector<double>& f) {
    double t = 0.0;
    for (int x = 0; x < g.n_sites; ++x)
        if (f[x] != 0.0) t += f[x] * e_momentum(s, g, x);
    return t;
}

// Directional derivative of the smeared Hamiltonian under a surface deformation.
inline double surface_response(const EnsembleState& s, const ConfigGrid& g, const SpacetimeBackground& bg,
                               const Hypersurface& surf, const Model& m, const std::vector<double>& f, const Deformation& d) {
    if (d.is_zero()) return 0.0;
    const double step = 1e-5;
    auto at = [&](double e) {
        return smeared_hamiltonian(s, g, induced_metric(bg, apply_deformation(bg, surf, d.scaled(e))), m, f);
    };
    return (8.0 * (at(step) - at(-step)) - (at(2 * step) - at(-2 * step))) / (12.0 * step);
}

// T_{x,y} = cv sum over x-edges of flux * D+_x W_y: the exchange between the kinetic part at x and the potential at y.
inline double kinetic_potential_exchange(const EnsembleState& s, const ConfigGrid& g, const InducedGeometry& geo,
                                         const Model& m, int x, int y) {
    const double h = g.h();
    const double sg = geo.sqrt_g[x];
    const Constants& k = m.constants;
    double t = 0.0;
    g.for_each_line(x, [&](std::size_t first, std::size_t st) {
        for (int j = 0; j + 1 < g.m; ++j) {
            const std::size_t a = first + j * st, b = a + st;
            double flux;
            if (k.quantum())
                flux = k.hbar / (sg * h) * std::sqrt(std::max(s.rho[a], 0.0) * std::max(s.rho[b], 0.0)) *
                       std::sin((s.phi[b] - s.phi[a]) / k.hbar);
            else
                flux = 0.5 * (s.rho[a] + s.rho[b]) * (s.phi[b] - s.phi[a]) / (h * sg);
            const double dw = (site_potential(g, geo, m.potential, b, y) - site_potential(g, geo, m.potential, a, y)) / h;
            t += flux * dw;
        }
    });
    return t * g.cell_volume();
}

// <Phi, c_a S_a D_b rho> with zero ghosts; S_a averages the two neighbours along a.
inline double transport_cross_term(const EnsembleState& s, const ConfigGrid& g, int a, int b) {
    const Field db = centered_ghost_zero(s.rho, g, b);
    double t = 0.0;
    g.for_each_line(a, [&](std::size_t first, std::size_t st) {
        for (int j = 0; j < g.m; ++j) {
            const std::size_t node = first + j * st;
            const double up = j + 1 < g.m ? db[node + st] : 0.0;
            const double dn = j > 0 ? db[node - st] : 0.0;
            t += s.phi[node] * lattice_gradient(g, node, a) * 0.5 * (up + dn);
        }
    });
    return t * g.cell_volume();
}

}  // namespace detail

// Compares numerically computed brackets of smeared generators with their lattice right-hand sides.
// (perp perp) and (tan perp) use the model's own equations of motion for the second generator, so an
// inconsistent phase equation shows up as a residual.
inline AlgebraResiduals smeared_algebra_check(const EnsembleState& s, const ConfigGrid& g, const SpacetimeBackground& bg,
                                              const Hypersurface& surf, const Model& m, const std::vector<double>& f,
                                              const std::vector<double>& gs) {
    const int n = g.n_sites;
    const double cv = g.cell_volume();
    const InducedGeometry geo = induced_metric(bg, surf);
    AlgebraResiduals r;
    const Functional Hf = [&](const EnsembleState& t) { return detail::smeared_hamiltonian(t, g, geo, m, f); };
    const Field dHf_rho = e_gradient(Hf, s, Variable::rho, cv);
    const Field dHf_phi = e_gradient(Hf, s, Variable::phi, cv);
    auto along = [&](const std::pair<Field, Field>& v) {
        double t = 0.0;
        for (std::size_t i = 0; i < v.first.size(); ++i) t += dHf_rho[i] * v.first[i] + dHf_phi[i] * v.second[i];
        return t * cv;
    };

    // (perp perp)
    const std::vector<double> zero(n, 0.0);
    const double ens_pp = along(state_velocity(s, g, geo, m, gs, zero));
    r.perp_perp_mixed = detail::surface_response(s, g, bg, surf, m, f, Deformation::normal(gs)) -
                        detail::surface_response(s, g, bg, surf, m, gs, Deformation::normal(f));
    double rhs_pp = 0.0;
    for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y) {
            if (x == y || f[x] * gs[y] - gs[x] * f[y] == 0.0) continue;
            if (detail::d_delta(y, x, n) == 0.0) continue;
            rhs_pp += f[x] * gs[y] * (detail::kinetic_potential_exchange(s, g, geo, m, y, x) -
                                      detail::kinetic_potential_exchange(s, g, geo, m, x, y));
        }
    r.perp_perp_lhs = ens_pp + r.perp_perp_mixed;
    r.perp_perp_rhs = rhs_pp;
    r.perp_perp = std::abs(r.perp_perp_lhs - r.perp_perp_rhs);

    // (tan perp)
    std::pair<Field, Field> vt{Field(g.size(), 0.0), Field(g.size(), 0.0)};
    for (int x = 0; x < n; ++x) {
        if (gs[x] == 0.0) continue;
        const auto [a, b] = tangential_rhs(s, g, x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            vt.first[i] += gs[x] * a[i];
            vt.second[i] += gs[x] * b[i];
        }
    }
    // Moving the surface by g relabels configurations as chi -> chi + g dchi, so the ensemble is carried
    // against the tangential flow while the induced metric follows the surface.
    r.tan_perp_geometry = detail::surface_response(s, g, bg, surf, m, f, Deformation::tangential(gs));
    r.tan_perp_lhs = r.tan_perp_geometry - along(vt);
    std::vector<double> weight(n, 0.0);
    for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y) weight[x] += gs[x] * detail::d_delta(x, y, n) * f[y];
    r.tan_perp_rhs = -total_hamiltonian(s, g, geo, m, weight);
    r.tan_perp = std::abs(r.tan_perp_lhs - r.tan_perp_rhs);

    // (tan tan)
    const Functional Pf = [&](const EnsembleState& t) { return detail::smeared_momentum(t, g, f); };
    const Functional Pg = [&](const EnsembleState& t) { return detail::smeared_momentum(t, g, gs); };
    r.tan_tan_lhs = poisson_bracket(Pf, Pg, s, cv);
    double rhs_tt = 0.0;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            if (a == b) continue;
            const double w = f[a] * gs[b];
            if (w == 0.0) continue;
            const double kba = detail::d_delta(b, a, n), kab = detail::d_delta(a, b, n);
            if (kba != 0.0) rhs_tt += w * kba * detail::transport_cross_term(s, g, a, b);
            if (kab != 0.0) rhs_tt -= w * kab * detail::transport_cross_term(s, g, b, a);
        }
    r.tan_tan_rhs = rhs_tt;
    r.tan_tan = std::abs(r.tan_tan_lhs - r.tan_tan_rhs);
    return r;
}

}  // namespace edlab
