#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <deque>
#include <limits>
#include <numbers>
#include <vector>

#include "edlab/common.hpp"
#include "edlab/geometry.hpp"

namespace edlab {

inline constexpr double kRhoFloorFraction = 1e-12;

// Tensor grid over configuration space; axis x carries the field value chi_x at site x.
struct ConfigGrid {
    int n_sites = 1;
    double L = 1.0;
    int m = 16;

    ConfigGrid() = default;
    ConfigGrid(int n, double half_width, int points) : n_sites(n), L(half_width), m(points) { validate(); }

    void validate() const {
        if (n_sites < 1 || n_sites > 3) throw StateError("n_sites must be 1, 2 or 3");
        if (m < 16) throw StateError("points_per_axis below minimum 16");
        if (!(L > 0.0)) throw StateError("box half-width must be positive");
    }

    double h() const { return 2.0 * L / (m - 1); }
    double cell_volume() const { return std::pow(h(), n_sites); }
    std::size_t size() const {
        std::size_t s = 1;
        for (int i = 0; i < n_sites; ++i) s *= static_cast<std::size_t>(m);
        return s;
    }
    std::size_t stride(int axis) const {
        std::size_t s = 1;
        for (int i = 0; i < axis; ++i) s *= static_cast<std::size_t>(m);
        return s;
    }
    double coord(int i) const { return -L + h() * i; }
    int index_on_axis(std::size_t node, int axis) const {
        return static_cast<int>((node / stride(axis)) % static_cast<std::size_t>(m));
    }
    double coord_of(std::size_t node, int axis) const { return coord(index_on_axis(node, axis)); }
    std::array<double, 3> point(std::size_t node) const {
        std::array<double, 3> p{0.0, 0.0, 0.0};
        for (int a = 0; a < n_sites; ++a) p[a] = coord_of(node, a);
        return p;
    }

    // Visits every line along `axis` as (first node, stride).
    template <class F>
    void for_each_line(int axis, F&& f) const {
        const std::size_t st = stride(axis);
        const std::size_t block = st * static_cast<std::size_t>(m);
        for (std::size_t base = 0; base < size(); base += block)
            for (std::size_t off = 0; off < st; ++off) f(base + off, st);
    }
};

struct EnsembleState {
    Field rho;
    Field phi;
};

struct WaveState {
    std::vector<std::complex<double>> psi;
};

// eta sets units; lambda is the Fisher-term coefficient with hbar = (8|lambda|)^(1/2).
struct Constants {
    double eta = 1.0;
    double lambda = 0.0;
    double hbar = 0.0;
    double k_hat = 0.0;

    static Constants make(double eta, double lambda) {
        if (!(eta > 0.0)) throw ParameterError("eta must be positive");
        Constants c;
        c.eta = eta;
        c.lambda = lambda;
        c.hbar = std::sqrt(8.0 * std::abs(lambda));
        c.k_hat = c.hbar > 0.0 ? eta / c.hbar : 0.0;
        return c;
    }
    static Constants from_hbar(double eta, double hbar) { return make(eta, hbar * hbar / 8.0); }
    bool quantum() const { return hbar > 0.0; }
    // Coefficient of [rho''/rho - (rho'/rho)^2/2] in the potential entering the phase equation.
    double u_coefficient() const { return -0.25 * hbar * hbar; }
};

inline double total_probability(const EnsembleState& s, const ConfigGrid& g) {
    double t = 0.0;
    for (double r : s.rho) t += r;
    return t * g.cell_volume();
}

inline double wave_norm(const WaveState& w, const ConfigGrid& g) {
    double t = 0.0;
    for (const auto& p : w.psi) t += std::norm(p);
    return t * g.cell_volume();
}

inline EnsembleState normalize(EnsembleState s, const ConfigGrid& g) {
    const double total = total_probability(s, g);
    if (!(total > 0.0) || !std::isfinite(total)) throw StateError("cannot normalize: total probability is not positive");
    const double c = 1.0 / total;
    for (double& r : s.rho) r *= c;
    return s;
}

inline double rho_floor(const Field& rho) {
    double mx = 0.0;
    for (double r : rho) mx = std::max(mx, r);
    return kRhoFloorFraction * mx;
}

// Discrete Bohm potential along each axis: u_coefficient * 2 (D^2 R)/R with R = rho^(1/2).
// Boundary nodes use a linearly extrapolated ghost value.
inline std::vector<Field> quantum_potential(const EnsembleState& s, const ConfigGrid& g, const InducedGeometry& /*geo*/,
                                            const Constants& k) {
    const double floor = rho_floor(s.rho);
    const double h2 = g.h() * g.h();
    const double coef = 2.0 * k.u_coefficient() / h2;
    std::vector<Field> u(g.n_sites, Field(g.size(), 0.0));
    for (int ax = 0; ax < g.n_sites; ++ax) {
        g.for_each_line(ax, [&](std::size_t first, std::size_t st) {
            auto R = [&](int j) { return std::sqrt(std::max(s.rho[first + j * st], 0.0)); };
            for (int j = 0; j < g.m; ++j) {
                const std::size_t node = first + j * st;
                if (s.rho[node] < floor || s.rho[node] <= 0.0) continue;
                const double r0 = R(j);
                const double rp = j + 1 < g.m ? R(j + 1) : 2.0 * r0 - R(j - 1);
                const double rm = j > 0 ? R(j - 1) : 2.0 * r0 - R(j + 1);
                u[ax][node] = coef * (rp + rm - 2.0 * r0) / r0;
            }
        });
    }
    return u;
}

inline WaveState to_wave(const EnsembleState& s, const Constants& k) {
    if (!k.quantum()) throw ParameterError("Madelung map needs a nonzero quantum coefficient");
    WaveState w;
    w.psi.resize(s.rho.size());
    const double f = k.k_hat / k.eta;
    for (std::size_t i = 0; i < s.rho.size(); ++i)
        w.psi[i] = std::polar(std::sqrt(std::max(s.rho[i], 0.0)), f * s.phi[i]);
    return w;
}

namespace detail {

template <class F>
void for_each_neighbor(const ConfigGrid& g, std::size_t node, F&& f) {
    for (int ax = 0; ax < g.n_sites; ++ax) {
        const std::size_t st = g.stride(ax);
        const int i = g.index_on_axis(node, ax);
        if (i > 0) f(node - st);
        if (i + 1 < g.m) f(node + st);
    }
}

}  // namespace detail

// Inverse Madelung map. Phase is unwrapped by breadth-first traversal from the lowest defined node index.
inline EnsembleState from_wave(const WaveState& w, const ConfigGrid& g, const Constants& k, double floor_fraction = kRhoFloorFraction) {
    if (!k.quantum()) throw ParameterError("Madelung map needs a nonzero quantum coefficient");
    const std::size_t N = w.psi.size();
    EnsembleState s;
    s.rho.resize(N);
    double mx = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        s.rho[i] = std::norm(w.psi[i]);
        mx = std::max(mx, s.rho[i]);
    }
    if (mx == 0.0) throw StateError("wave function vanishes identically");
    const double floor = floor_fraction * mx;
    const double two_pi = 2.0 * std::numbers::pi;
    std::vector<char> defined(N), done(N, 0);
    for (std::size_t i = 0; i < N; ++i) defined[i] = s.rho[i] >= floor;
    Field theta(N, 0.0);
    std::deque<std::size_t> queue;
    for (std::size_t root = 0; root < N; ++root) {
        if (!defined[root] || done[root]) continue;
        theta[root] = std::arg(w.psi[root]);
        done[root] = 1;
        queue.push_back(root);
        while (!queue.empty()) {
            const std::size_t cur = queue.front();
            queue.pop_front();
            detail::for_each_neighbor(g, cur, [&](std::size_t nb) {
                if (!defined[nb] || done[nb]) return;
                const double raw = std::arg(w.psi[nb]);
                theta[nb] = raw + two_pi * std::round((theta[cur] - raw) / two_pi);
                done[nb] = 1;
                queue.push_back(nb);
            });
        }
    }
    // Undefined nodes copy the nearest defined value (multi-source breadth-first fill).
    for (std::size_t i = 0; i < N; ++i)
        if (done[i]) queue.push_back(i);
    while (!queue.empty()) {
        const std::size_t cur = queue.front();
        queue.pop_front();
        detail::for_each_neighbor(g, cur, [&](std::size_t nb) {
            if (done[nb]) return;
            theta[nb] = theta[cur];
            done[nb] = 1;
            queue.push_back(nb);
        });
    }
    s.phi.resize(N);
    const double f = k.eta / k.k_hat;
    for (std::size_t i = 0; i < N; ++i) s.phi[i] = f * theta[i];
    return s;
}

inline Field drift_potential(const EnsembleState& s, const Constants& k) {
    const double floor = std::max(rho_floor(s.rho), std::numeric_limits<double>::min());
    Field out(s.rho.size());
    for (std::size_t i = 0; i < s.rho.size(); ++i)
        out[i] = s.phi[i] / k.eta + 0.5 * std::log(std::max(s.rho[i], floor));
    return out;
}

inline Field phase_from_drift(const Field& drift, const EnsembleState& s, const Constants& k) {
    const double floor = std::max(rho_floor(s.rho), std::numeric_limits<double>::min());
    Field out(drift.size());
    for (std::size_t i = 0; i < drift.size(); ++i)
        out[i] = k.eta * (drift[i] - 0.5 * std::log(std::max(s.rho[i], floor)));
    return out;
}

// Sampled state from analytic profiles rho(point), phi(point); rho is normalized on the grid.
template <class RhoF, class PhiF>
EnsembleState sample_state(const ConfigGrid& g, RhoF&& rho, PhiF&& phi) {
    EnsembleState s;
    s.rho.resize(g.size());
    s.phi.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto p = g.point(i);
        s.rho[i] = rho(p);
        s.phi[i] = phi(p);
    }
    return normalize(std::move(s), g);
}

inline double boundary_max_rho(const EnsembleState& s, const ConfigGrid& g) {
    double mx = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        bool edge = false;
        for (int a = 0; a < g.n_sites; ++a) {
            const int j = g.index_on_axis(i, a);
            edge = edge || j == 0 || j == g.m - 1;
        }
        if (edge) mx = std::max(mx, s.rho[i]);
    }
    return mx;
}

}  // namespace edlab
