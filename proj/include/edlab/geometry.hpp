#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "edlab/common.hpp"

namespace edlab {

using Vec2 = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;

enum class BackgroundKind { minkowski, rindler, static_diagonal };

// Static 1+1 background ds^2 = -f(X1)^2 dX0^2 + dX1^2; minkowski has f = 1.
struct SpacetimeBackground {
    BackgroundKind kind = BackgroundKind::minkowski;
    double acceleration = 0.0;
    std::function<double(double)> profile;

    static SpacetimeBackground minkowski() { return {}; }
    static SpacetimeBackground rindler(double a) {
        SpacetimeBackground bg;
        bg.kind = BackgroundKind::rindler;
        bg.acceleration = a;
        return bg;
    }
    static SpacetimeBackground static_diagonal(std::function<double(double)> f) {
        SpacetimeBackground bg;
        bg.kind = BackgroundKind::static_diagonal;
        bg.profile = std::move(f);
        return bg;
    }

    double lapse_profile(double x1) const {
        switch (kind) {
            case BackgroundKind::minkowski: return 1.0;
            case BackgroundKind::rindler: return 1.0 + acceleration * x1;
            case BackgroundKind::static_diagonal: return profile(x1);
        }
        return 1.0;
    }

    Mat2 metric(double /*x0*/, double x1) const {
        const double f = lapse_profile(x1);
        return {{{-f * f, 0.0}, {0.0, 1.0}}};
    }

    std::string name() const {
        switch (kind) {
            case BackgroundKind::minkowski: return "minkowski";
            case BackgroundKind::rindler: return "rindler";
            case BackgroundKind::static_diagonal: return "static-diagonal";
        }
        return "unknown";
    }
};

inline double contract(const Mat2& g, const Vec2& a, const Vec2& b) {
    double s = 0.0;
    for (int m = 0; m < 2; ++m)
        for (int n = 0; n < 2; ++n) s += g[m][n] * a[m] * b[n];
    return s;
}

// Periodic lattice of sites; X1 winds by `period` once around the lattice.
struct Hypersurface {
    std::vector<double> X0;
    std::vector<double> X1;
    double period = 0.0;

    int n_sites() const { return static_cast<int>(X0.size()); }

    static Hypersurface flat(int n, double spacing = 1.0, double x1_origin = 0.0, double x0 = 0.0) {
        Hypersurface s;
        s.X0.assign(n, x0);
        s.X1.resize(n);
        for (int i = 0; i < n; ++i) s.X1[i] = x1_origin + spacing * i;
        s.period = spacing * n;
        return s;
    }

    Vec2 tangent(int x) const {
        const int n = n_sites();
        const int xp = x + 1, xm = x - 1;
        const double x1p = X1[wrap(xp, n)] + (xp >= n ? period : 0.0);
        const double x1m = X1[wrap(xm, n)] - (xm < 0 ? period : 0.0);
        return {0.5 * (X0[wrap(xp, n)] - X0[wrap(xm, n)]), 0.5 * (x1p - x1m)};
    }
};

struct InducedGeometry {
    std::vector<double> g11, sqrt_g, g_inv;
    std::vector<Vec2> normal, tangent;

    int n_sites() const { return static_cast<int>(g11.size()); }

    static InducedGeometry flat(int n) {
        InducedGeometry g;
        g.g11.assign(n, 1.0);
        g.sqrt_g.assign(n, 1.0);
        g.g_inv.assign(n, 1.0);
        g.normal.assign(n, Vec2{1.0, 0.0});
        g.tangent.assign(n, Vec2{0.0, 1.0});
        return g;
    }
};

// Unit future normal orthogonal to t for the metric g.
inline Vec2 unit_normal(const Mat2& g, const Vec2& t) {
    // g(n, t) = 0 fixes n up to scale: n = (g10 t0 + g11 t1, -(g00 t0 + g01 t1)).
    Vec2 n{g[1][0] * t[0] + g[1][1] * t[1], -(g[0][0] * t[0] + g[0][1] * t[1])};
    const double nn = contract(g, n, n);
    if (!(nn < 0.0)) throw GeometryError("normal is not timelike");
    const double s = 1.0 / std::sqrt(-nn);
    n[0] *= s;
    n[1] *= s;
    if (n[0] < 0.0) {
        n[0] = -n[0];
        n[1] = -n[1];
    }
    return n;
}

inline InducedGeometry induced_metric(const SpacetimeBackground& bg, const Hypersurface& s) {
    const int n = s.n_sites();
    InducedGeometry geo;
    geo.g11.resize(n);
    geo.sqrt_g.resize(n);
    geo.g_inv.resize(n);
    geo.normal.resize(n);
    geo.tangent.resize(n);
    for (int x = 0; x < n; ++x) {
        const Mat2 g = bg.metric(s.X0[x], s.X1[x]);
        const Vec2 t = s.tangent(x);
        const double g11 = contract(g, t, t);
        if (!(g11 > 0.0) || !std::isfinite(g11))
            throw GeometryError("surface is not spacelike at site " + std::to_string(x));
        geo.g11[x] = g11;
        geo.sqrt_g[x] = std::sqrt(g11);
        geo.g_inv[x] = 1.0 / g11;
        geo.tangent[x] = t;
        geo.normal[x] = unit_normal(g, t);
    }
    return geo;
}

struct Deformation {
    std::vector<double> normal_comp;
    std::vector<double> tangential_comp;

    static Deformation zero(int n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)}; }
    static Deformation normal(std::vector<double> lapse) {
        const auto n = lapse.size();
        return {std::move(lapse), std::vector<double>(n, 0.0)};
    }
    static Deformation tangential(std::vector<double> shift) {
        const auto n = shift.size();
        return {std::vector<double>(n, 0.0), std::move(shift)};
    }

    Deformation scaled(double c) const {
        Deformation d = *this;
        for (auto& v : d.normal_comp) v *= c;
        for (auto& v : d.tangential_comp) v *= c;
        return d;
    }
    bool is_zero() const {
        for (double v : normal_comp)
            if (v != 0.0) return false;
        for (double v : tangential_comp)
            if (v != 0.0) return false;
        return true;
    }
};

struct FoliationStep {
    std::vector<double> lapse;
    std::vector<double> shift;
    double dtau = 0.0;
};
using FoliationSchedule = std::vector<FoliationStep>;

// Embedding-space velocity of a deformation: xi_perp n + xi^1 X_1.
inline std::vector<Vec2> deformation_velocity(const SpacetimeBackground& bg, const Hypersurface& s,
                                              const Deformation& d) {
    const InducedGeometry geo = induced_metric(bg, s);
    const int n = s.n_sites();
    std::vector<Vec2> v(n);
    for (int x = 0; x < n; ++x)
        for (int m = 0; m < 2; ++m)
            v[x][m] = d.normal_comp[x] * geo.normal[x][m] + d.tangential_comp[x] * geo.tangent[x][m];
    return v;
}

inline Hypersurface displaced(const Hypersurface& s, const std::vector<Vec2>& v, double c) {
    Hypersurface out = s;
    for (int x = 0; x < s.n_sites(); ++x) {
        out.X0[x] += c * v[x][0];
        out.X1[x] += c * v[x][1];
    }
    return out;
}

inline Hypersurface apply_deformation(const SpacetimeBackground& bg, const Hypersurface& s,
                                      const Deformation& d) {
    for (double v : d.normal_comp)
        if (!std::isfinite(v)) throw GeometryError("non-finite deformation component");
    for (double v : d.tangential_comp)
        if (!std::isfinite(v)) throw GeometryError("non-finite deformation component");
    if (d.is_zero()) return s;
    Hypersurface out = displaced(s, deformation_velocity(bg, s, d), 1.0);
    induced_metric(bg, out);  // throws if the image is not spacelike
    return out;
}

namespace detail {

// Directional derivative of the deformation velocity field along w, fourth-order central stencil.
inline std::vector<Vec2> velocity_derivative(const SpacetimeBackground& bg, const Hypersurface& s,
                                             const Deformation& d, const std::vector<Vec2>& w) {
    double scale = 0.0;
    for (const auto& v : w) scale = std::max({scale, std::abs(v[0]), std::abs(v[1])});
    const int n = s.n_sites();
    std::vector<Vec2> out(n, Vec2{0.0, 0.0});
    if (scale == 0.0) return out;
    const double step = 1e-3 / scale;
    const auto vp1 = deformation_velocity(bg, displaced(s, w, step), d);
    const auto vm1 = deformation_velocity(bg, displaced(s, w, -step), d);
    const auto vp2 = deformation_velocity(bg, displaced(s, w, 2 * step), d);
    const auto vm2 = deformation_velocity(bg, displaced(s, w, -2 * step), d);
    for (int x = 0; x < n; ++x)
        for (int m = 0; m < 2; ++m)
            out[x][m] = (8.0 * (vp1[x][m] - vm1[x][m]) - (vp2[x][m] - vm2[x][m])) / (12.0 * step);
    return out;
}

}  // namespace detail

// Deformation zeta such that (xi then eta) = (eta then xi then zeta) to second order.
// It is the lattice Lie bracket of the two embedding velocity fields, resolved on (n, X_1).
inline Deformation compensating_deformation(const SpacetimeBackground& bg, const Hypersurface& s,
                                            const Deformation& xi, const Deformation& eta) {
    const auto vx = deformation_velocity(bg, s, xi);
    const auto ve = deformation_velocity(bg, s, eta);
    const auto d_eta_along_xi = detail::velocity_derivative(bg, s, eta, vx);
    const auto d_xi_along_eta = detail::velocity_derivative(bg, s, xi, ve);
    const InducedGeometry geo = induced_metric(bg, s);
    const int n = s.n_sites();
    Deformation z = Deformation::zero(n);
    for (int x = 0; x < n; ++x) {
        const Vec2 b{d_eta_along_xi[x][0] - d_xi_along_eta[x][0], d_eta_along_xi[x][1] - d_xi_along_eta[x][1]};
        const Mat2 g = bg.metric(s.X0[x], s.X1[x]);
        z.normal_comp[x] = -contract(g, geo.normal[x], b);
        z.tangential_comp[x] = contract(g, geo.tangent[x], b) * geo.g_inv[x];
    }
    return z;
}

// Continuum structure constants with centered lattice derivatives.
inline Deformation compensating_deformation_structure(const InducedGeometry& geo, const Deformation& xi,
                                                      const Deformation& eta) {
    const int n = geo.n_sites();
    auto d = [n](const std::vector<double>& f, int x) { return 0.5 * (f[wrap(x + 1, n)] - f[wrap(x - 1, n)]); };
    Deformation z = Deformation::zero(n);
    const auto& xp = xi.normal_comp;
    const auto& ep = eta.normal_comp;
    const auto& xt = xi.tangential_comp;
    const auto& et = eta.tangential_comp;
    for (int x = 0; x < n; ++x) {
        z.normal_comp[x] = et[x] * d(xp, x) - xt[x] * d(ep, x);
        z.tangential_comp[x] = geo.g_inv[x] * (ep[x] * d(xp, x) - xp[x] * d(ep, x)) + et[x] * d(xt, x) - xt[x] * d(et, x);
    }
    return z;
}

inline double surface_distance(const Hypersurface& a, const Hypersurface& b) {
    double m = 0.0;
    for (int x = 0; x < a.n_sites(); ++x)
        m = std::max({m, std::abs(a.X0[x] - b.X0[x]), std::abs(a.X1[x] - b.X1[x])});
    return m;
}

inline double surface_commutator_residual(const SpacetimeBackground& bg, const Hypersurface& s,
                                          const Deformation& xi, const Deformation& eta, double epsilon) {
    const Deformation exi = xi.scaled(epsilon), eeta = eta.scaled(epsilon);
    const Hypersurface a = apply_deformation(bg, apply_deformation(bg, s, exi), eeta);
    const Deformation zeta = compensating_deformation(bg, s, xi, eta).scaled(epsilon * epsilon);
    Hypersurface b = apply_deformation(bg, apply_deformation(bg, s, eeta), exi);
    b = apply_deformation(bg, b, zeta);
    return surface_distance(a, b);
}

}  // namespace edlab
