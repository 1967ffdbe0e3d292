#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "edlab/common.hpp"
#include "edlab/geometry.hpp"
#include "edlab/parallel.hpp"
#include "edlab/statespace.hpp"

namespace edlab {

struct PotentialSpec {
    enum class Kind { zero, mass, polynomial };
    Kind kind = Kind::zero;
    double mass = 0.0;
    std::vector<double> coefficients;

    static PotentialSpec zero() { return {}; }
    static PotentialSpec with_mass(double m) { return {Kind::mass, m, {}}; }
    static PotentialSpec polynomial(std::vector<double> c) {
        if (c.size() > 7) throw ParameterError("polynomial potential degree exceeds 6");
        for (double v : c)
            if (!std::isfinite(v)) throw ParameterError("non-finite potential coefficient");
        return {Kind::polynomial, 0.0, std::move(c)};
    }

    template <class T>
    T operator()(const T& chi) const {
        switch (kind) {
            case Kind::zero: return T(0.0);
            case Kind::mass: return 0.5 * mass * mass * chi * chi;
            case Kind::polynomial: {
                T acc(0.0);
                for (std::size_t i = coefficients.size(); i-- > 0;) acc = acc * chi + coefficients[i];
                return acc;
            }
        }
        return T(0.0);
    }
};

// U = f1_scale rho''/rho + f2 Phi'' + h0 Phi'^-2 + h1 rho' Phi'^-1 + h2_scale (rho'/rho)^2.
struct CandidateCoefficients {
    double f1_scale = 0.0;
    double f2 = 0.0;
    double h0 = 0.0;
    double h1 = 0.0;
    double h2_scale = 0.0;
    PotentialSpec V;

    static CandidateCoefficients canonical(double c, PotentialSpec v = {}) {
        CandidateCoefficients k;
        k.f1_scale = c;
        k.h2_scale = -0.5 * c;
        k.V = std::move(v);
        return k;
    }
    bool is_canonical(double tol = 0.0) const {
        return std::abs(f2) <= tol && std::abs(h0) <= tol && std::abs(h1) <= tol &&
               std::abs(h2_scale + 0.5 * f1_scale) <= tol;
    }
    bool empty() const { return f1_scale == 0.0 && f2 == 0.0 && h0 == 0.0 && h1 == 0.0 && h2_scale == 0.0; }
};

// Dynamics selector. Quantum when constants.hbar > 0, hybrid otherwise.
// `extra` adds a candidate potential term to the phase equation; `quantum_scale`
// rescales the quantum part of the phase equation only (sensitivity probes).
struct Model {
    PotentialSpec potential;
    Constants constants = Constants::make(1.0, 0.0);
    std::optional<CandidateCoefficients> extra;
    double quantum_scale = 1.0;
};

namespace detail {

// (chi_{x+1} - chi_{x-1})/2 on the periodic site lattice.
inline double lattice_gradient(const ConfigGrid& g, std::size_t node, int x) {
    const int n = g.n_sites;
    return 0.5 * (g.coord_of(node, wrap(x + 1, n)) - g.coord_of(node, wrap(x - 1, n)));
}

inline double site_potential(const ConfigGrid& g, const InducedGeometry& geo, const PotentialSpec& V, std::size_t node, int x) {
    const double c = lattice_gradient(g, node, x);
    return geo.sqrt_g[x] * (0.5 * geo.g_inv[x] * c * c + V(g.coord_of(node, x)));
}

// Second-order first and second derivatives along one line, one-sided at the ends.
inline void line_derivatives(const double* f, std::size_t st, int m, double h, double* d1, double* d2) {
    auto v = [&](int j) { return f[j * st]; };
    for (int j = 0; j < m; ++j) {
        if (j == 0) {
            d1[0] = (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h);
            d2[0] = (2.0 * v(0) - 5.0 * v(1) + 4.0 * v(2) - v(3)) / (h * h);
        } else if (j == m - 1) {
            d1[j] = (3.0 * v(j) - 4.0 * v(j - 1) + v(j - 2)) / (2.0 * h);
            d2[j] = (2.0 * v(j) - 5.0 * v(j - 1) + 4.0 * v(j - 2) - v(j - 3)) / (h * h);
        } else {
            d1[j] = (v(j + 1) - v(j - 1)) / (2.0 * h);
            d2[j] = (v(j + 1) - 2.0 * v(j) + v(j - 1)) / (h * h);
        }
    }
}

}  // namespace detail

// Candidate potential U_x on nodes above the density floor, centered differences along axis x.
inline Field candidate_potential(const EnsembleState& s, const ConfigGrid& g, const CandidateCoefficients& c, int x) {
    Field u(g.size(), 0.0);
    const double floor = rho_floor(s.rho);
    const double h = g.h();
    std::vector<double> r1(g.m), r2(g.m), p1(g.m), p2(g.m);
    g.for_each_line(x, [&](std::size_t first, std::size_t st) {
        detail::line_derivatives(s.rho.data() + first, st, g.m, h, r1.data(), r2.data());
        detail::line_derivatives(s.phi.data() + first, st, g.m, h, p1.data(), p2.data());
        for (int j = 0; j < g.m; ++j) {
            const std::size_t node = first + j * st;
            const double r = s.rho[node];
            if (!(r >= floor && r > 0.0)) continue;
            double acc = c.f2 * p2[j] + c.f1_scale * r2[j] / r + c.h2_scale * (r1[j] / r) * (r1[j] / r);
            if (std::abs(p1[j]) > 1e-8) acc += c.h0 / (p1[j] * p1[j]) + c.h1 * r1[j] / p1[j];
            u[node] = acc;
        }
    });
    return u;
}

inline Field ltfp_rhs(const EnsembleState& s, const ConfigGrid& g, const InducedGeometry& geo, const Model& model, int x) {
    Field out(g.size(), 0.0);
    const double h = g.h();
    const double sg = geo.sqrt_g[x];
    const Constants& k = model.constants;
    std::vector<double> flux(g.m + 1, 0.0);
    g.for_each_line(x, [&](std::size_t first, std::size_t st) {
        for (int j = 0; j + 1 < g.m; ++j) {
            const std::size_t a = first + j * st, b = a + st;
            if (k.quantum()) {
                const double ra = std::sqrt(std::max(s.rho[a], 0.0)), rb = std::sqrt(std::max(s.rho[b], 0.0));
                flux[j + 1] = k.hbar / (sg * h) * ra * rb * std::sin((s.phi[b] - s.phi[a]) / k.hbar);
            } else {
                flux[j + 1] = 0.5 * (s.rho[a] + s.rho[b]) * (s.phi[b] - s.phi[a]) / (h * sg);
            }
        }
        flux[0] = flux[g.m] = 0.0;
        for (int j = 0; j < g.m; ++j) out[first + j * st] = -(flux[j + 1] - flux[j]) / h;
    });
    return out;
}

inline Field lthj_rhs(const EnsembleState& s, const ConfigGrid& g, const InducedGeometry& geo, const Model& model, int x) {
    Field out(g.size(), 0.0);
    const double h = g.h();
    const double sg = geo.sqrt_g[x];
    const Constants& k = model.constants;
    const double floor = rho_floor(s.rho);
    g.for_each_line(x, [&](std::size_t first, std::size_t st) {
        for (int j = 0; j < g.m; ++j) {
            const std::size_t node = first + j * st;
            const double w = detail::site_potential(g, geo, model.potential, node, x);
            const bool has_p = j + 1 < g.m, has_m = j > 0;
            const double dp = has_p ? (s.phi[node + st] - s.phi[node]) / h : 0.0;
            const double dm = has_m ? (s.phi[node] - s.phi[node - st]) / h : 0.0;
            const double r = s.rho[node];
            if (k.quantum() && r >= floor && r > 0.0) {
                const double r0 = std::sqrt(r);
                const double rp = has_p ? std::sqrt(std::max(s.rho[node + st], 0.0)) : 0.0;
                const double rm = has_m ? std::sqrt(std::max(s.rho[node - st], 0.0)) : 0.0;
                const double cp = r0 * rp * std::cos(dp * h / k.hbar);
                const double cm = r0 * rm * std::cos(dm * h / k.hbar);
                const double pre = k.hbar * k.hbar / (2.0 * sg * h * h);
                const double kinetic = cp + cm - r0 * (rp + rm);
                const double quantum = r0 * (rp + rm) - 2.0 * r;
                out[node] = pre * (kinetic + model.quantum_scale * quantum) / r - w;
            } else if (k.quantum()) {
                // Below the density floor the phase is dynamically irrelevant; only the potential drives it.
                out[node] = -w;
            } else {
                out[node] = -(0.25 * (dp * dp + dm * dm) / sg + w);
            }
        }
    });
    if (model.extra && !model.extra->empty()) {
        const Field u = candidate_potential(s, g, *model.extra, x);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= u[i] / sg;
    }
    return out;
}

namespace detail {

// Centered difference along axis x with zero ghost values beyond the box.
inline Field centered_ghost_zero(const Field& f, const ConfigGrid& g, int x) {
    Field d(g.size(), 0.0);
    const double h = g.h();
    g.for_each_line(x, [&](std::size_t first, std::size_t st) {
        for (int j = 0; j < g.m; ++j) {
            const std::size_t node = first + j * st;
            const double fp = j + 1 < g.m ? f[node + st] : 0.0;
            const double fm = j > 0 ? f[node - st] : 0.0;
            d[node] = (fp - fm) / (2.0 * h);
        }
    });
    return d;
}

}  // namespace detail

inline std::pair<Field, Field> tangential_rhs(const EnsembleState& s, const ConfigGrid& g, int x) {
    Field dr = detail::centered_ghost_zero(s.rho, g, x);
    Field dp = detail::centered_ghost_zero(s.phi, g, x);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double c = detail::lattice_gradient(g, i, x);
        dr[i] *= c;
        dp[i] *= c;
    }
    return {std::move(dr), std::move(dp)};
}

inline double e_hamiltonian(const EnsembleState& s, const ConfigGrid& g, const InducedGeometry& geo, const Model& model, int x) {
    const double h = g.h();
    const double sg = geo.sqrt_g[x];
    const Constants& k = model.constants;
    double edges = 0.0, nodes = 0.0;
    g.for_each_line(x, [&](std::size_t first, std::size_t st) {
        for (int j = 0; j < g.m; ++j) {
            const std::size_t a = first + j * st;
            nodes += s.rho[a] * detail::site_potential(g, geo, model.potential, a, x);
            if (k.quantum()) {
                const double ra = std::sqrt(std::max(s.rho[a], 0.0));
                if (j + 1 < g.m) {
                    const std::size_t b = a + st;
                    const double rb = std::sqrt(std::max(s.rho[b], 0.0));
                    edges += s.rho[a] + s.rho[b] - 2.0 * ra * rb * std::cos((s.phi[b] - s.phi[a]) / k.hbar);
                }
                if (j == 0 || j == g.m - 1) edges += s.rho[a];
            } else if (j + 1 < g.m) {
                const std::size_t b = a + st;
                const double d = (s.phi[b] - s.phi[a]) / h;
                edges += 0.5 * (s.rho[a] + s.rho[b]) * d * d;
            }
        }
    });
    const double kin = k.quantum() ? k.hbar * k.hbar / (2.0 * sg * h * h) * edges : 0.5 * edges / sg;
    return (kin + nodes) * g.cell_volume();
}

inline double total_hamiltonian(const EnsembleState& s, const ConfigGrid& g, const InducedGeometry& geo, const Model& model,
                                const std::vector<double>& lapse) {
    double t = 0.0;
    for (int x = 0; x < g.n_sites; ++x)
        if (lapse[x] != 0.0) t += lapse[x] * e_hamiltonian(s, g, geo, model, x);
    return t;
}

inline double e_momentum(const EnsembleState& s, const ConfigGrid& g, int x) {
    const Field dr = detail::centered_ghost_zero(s.rho, g, x);
    double t = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) t += s.phi[i] * dr[i] * detail::lattice_gradient(g, i, x);
    return t * g.cell_volume();
}

enum class Variable { rho, phi };

using Functional = std::function<double(const EnsembleState&)>;

inline double e_derivative(const Functional& F, const EnsembleState& s, Variable which, std::size_t node, double cell_volume) {
    EnsembleState t = s;
    double& v = which == Variable::rho ? t.rho[node] : t.phi[node];
    const double v0 = v;
    const double step = std::max(1e-6, 1e-6 * std::abs(v0));
    v = v0 + step;
    const double fp = F(t);
    v = v0 - step;
    const double fm = F(t);
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericalError("functional is not finite near node " + std::to_string(node));
    return (fp - fm) / (2.0 * step) / cell_volume;
}

inline Field e_gradient(const Functional& F, const EnsembleState& s, Variable which, double cell_volume) {
    Field out(s.rho.size());
    parallel_for(out.size(), [&](std::size_t i) { out[i] = e_derivative(F, s, which, i, cell_volume); }, 32);
    return out;
}

inline double poisson_bracket(const Functional& F, const Functional& G, const EnsembleState& s, double cell_volume) {
    const Field fr = e_gradient(F, s, Variable::rho, cell_volume);
    const Field fp = e_gradient(F, s, Variable::phi, cell_volume);
    const Field gr = e_gradient(G, s, Variable::rho, cell_volume);
    const Field gp = e_gradient(G, s, Variable::phi, cell_volume);
    double t = 0.0;
    for (std::size_t i = 0; i < fr.size(); ++i) t += fr[i] * gp[i] - fp[i] * gr[i];
    return t * cell_volume;
}

// Combined velocity sum_x N_x (ltfp, lthj) + N^1_x (tangential).
inline std::pair<Field, Field> state_velocity(const EnsembleState& s, const ConfigGrid& g, const InducedGeometry& geo,
                                             const Model& model, const std::vector<double>& lapse,
                                             const std::vector<double>& shift) {
    Field dr(g.size(), 0.0), dp(g.size(), 0.0);
    for (int x = 0; x < g.n_sites; ++x) {
        if (lapse[x] != 0.0) {
            const Field a = ltfp_rhs(s, g, geo, model, x);
            const Field b = lthj_rhs(s, g, geo, model, x);
            for (std::size_t i = 0; i < dr.size(); ++i) {
                dr[i] += lapse[x] * a[i];
                dp[i] += lapse[x] * b[i];
            }
        }
        if (!shift.empty() && shift[x] != 0.0) {
            const auto [a, b] = tangential_rhs(s, g, x);
            for (std::size_t i = 0; i < dr.size(); ++i) {
                dr[i] += shift[x] * a[i];
                dp[i] += shift[x] * b[i];
            }
        }
    }
    return {std::move(dr), std::move(dp)};
}

// Largest dtau * rate seen by the explicit stepper; must stay below the RK4 stability radius.
inline double stability_number(const EnsembleState& s, const ConfigGrid& g, const InducedGeometry& geo, const Model& model,
                               const std::vector<double>& lapse, const std::vector<double>& shift, double dtau) {
    const double h = g.h();
    double rate = 0.0;
    for (int x = 0; x < g.n_sites; ++x) {
        if (lapse[x] == 0.0 && (shift.empty() || shift[x] == 0.0)) continue;
        double adv = 0.0;
        g.for_each_line(x, [&](std::size_t first, std::size_t st) {
            for (int j = 0; j + 1 < g.m; ++j)
                adv = std::max(adv, std::abs(s.phi[first + (j + 1) * st] - s.phi[first + j * st]) / h);
        });
        double r = adv / (geo.sqrt_g[x] * h);
        if (model.constants.quantum()) {
            // Madelung form of the lattice Schrodinger flow: the spectral radius bounds the rate.
            double wmax = 0.0;
            for (std::size_t node = 0; node < g.size(); ++node)
                wmax = std::max(wmax, std::abs(detail::site_potential(g, geo, model.potential, node, x)));
            r = 2.0 * model.constants.hbar / (geo.sqrt_g[x] * h * h) + wmax / model.constants.hbar;
        }
        if (model.extra && !model.extra->empty()) r += 4.0 * std::abs(model.extra->f2) / (geo.sqrt_g[x] * h * h);
        rate += std::abs(lapse[x]) * r;
        if (!shift.empty()) rate += std::abs(shift[x]) * g.L / h;
    }
    return rate * std::abs(dtau);
}

inline constexpr double kStabilityLimit = 2.8;

inline EnsembleState step_normal(const EnsembleState& s, const ConfigGrid& g, const InducedGeometry& geo,
                                 const std::vector<double>& lapse, double dtau, const Model& model,
                                 const std::vector<double>& shift = {}) {
    bool idle = true;
    for (double v : lapse) idle = idle && v == 0.0;
    for (double v : shift) idle = idle && v == 0.0;
    if (idle || dtau == 0.0) return s;
    const double sn = stability_number(s, g, geo, model, lapse, shift, dtau);
    if (sn > kStabilityLimit)
        throw NumericalError("explicit step unstable (dtau*rate = " + std::to_string(sn) + "); use a smaller dtau");
    auto axpy = [](const EnsembleState& base, const std::pair<Field, Field>& v, double c) {
        EnsembleState out = base;
        for (std::size_t i = 0; i < out.rho.size(); ++i) {
            out.rho[i] += c * v.first[i];
            out.phi[i] += c * v.second[i];
        }
        return out;
    };
    const auto k1 = state_velocity(s, g, geo, model, lapse, shift);
    const auto k2 = state_velocity(axpy(s, k1, 0.5 * dtau), g, geo, model, lapse, shift);
    const auto k3 = state_velocity(axpy(s, k2, 0.5 * dtau), g, geo, model, lapse, shift);
    const auto k4 = state_velocity(axpy(s, k3, dtau), g, geo, model, lapse, shift);
    EnsembleState out = s;
    for (std::size_t i = 0; i < out.rho.size(); ++i) {
        out.rho[i] += dtau / 6.0 * (k1.first[i] + 2.0 * k2.first[i] + 2.0 * k3.first[i] + k4.first[i]);
        out.phi[i] += dtau / 6.0 * (k1.second[i] + 2.0 * k2.second[i] + 2.0 * k3.second[i] + k4.second[i]);
    }
    if (!all_finite(out.rho) || !all_finite(out.phi)) throw NumericalError("non-finite values after explicit step");
    return out;
}

// Flat-space Fokker-Planck divergence assembled over all axes at once.
inline Field global_fp_rhs(const EnsembleState& s, const ConfigGrid& g, const Constants& k) {
    Field out(g.size(), 0.0);
    const double h = g.h();
    for (std::size_t node = 0; node < g.size(); ++node) {
        for (int ax = 0; ax < g.n_sites; ++ax) {
            const std::size_t st = g.stride(ax);
            const int j = g.index_on_axis(node, ax);
            auto flux = [&](std::size_t a, std::size_t b) {
                if (k.quantum())
                    return k.hbar / h * std::sqrt(std::max(s.rho[a], 0.0) * std::max(s.rho[b], 0.0)) *
                           std::sin((s.phi[b] - s.phi[a]) / k.hbar);
                return 0.5 * (s.rho[a] + s.rho[b]) * (s.phi[b] - s.phi[a]) / h;
            };
            const double fr = j + 1 < g.m ? flux(node, node + st) : 0.0;
            const double fl = j > 0 ? flux(node - st, node) : 0.0;
            out[node] -= (fr - fl) / h;
        }
    }
    return out;
}

// Sparse Hamiltonian sum_x N_x H_x + N^1_x P_x acting on the wave function (Dirichlet box).
inline Eigen::SparseMatrix<std::complex<double>> wave_hamiltonian(const ConfigGrid& g, const InducedGeometry& geo,
                                                                  const Model& model, const std::vector<double>& lapse,
                                                                  const std::vector<double>& shift) {
    using C = std::complex<double>;
    const double h = g.h();
    const double hbar = model.constants.hbar;
    std::vector<Eigen::Triplet<C>> trip;
    const std::size_t N = g.size();
    trip.reserve(N * (1 + 4 * g.n_sites));
    for (std::size_t node = 0; node < N; ++node) {
        double diag = 0.0;
        for (int x = 0; x < g.n_sites; ++x) {
            const std::size_t st = g.stride(x);
            const int j = g.index_on_axis(node, x);
            if (lapse[x] != 0.0) {
                const double kin = lapse[x] * hbar * hbar / (2.0 * geo.sqrt_g[x] * h * h);
                diag += 2.0 * kin + lapse[x] * detail::site_potential(g, geo, model.potential, node, x);
                if (j + 1 < g.m) trip.emplace_back(node, node + st, C(-kin, 0.0));
                if (j > 0) trip.emplace_back(node, node - st, C(-kin, 0.0));
            }
            if (!shift.empty() && shift[x] != 0.0) {
                const double c = shift[x] * detail::lattice_gradient(g, node, x);
                const C a(0.0, hbar * c / (2.0 * h));
                if (j + 1 < g.m) trip.emplace_back(node, node + st, a);
                if (j > 0) trip.emplace_back(node, node - st, -a);
            }
        }
        trip.emplace_back(node, node, C(diag, 0.0));
    }
    Eigen::SparseMatrix<C> H(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    H.setFromTriplets(trip.begin(), trip.end());
    return H;
}

// Implicit trapezoidal (Cayley) stepper with a cached factorization.
class SchrodingerStepper {
public:
    SchrodingerStepper(const ConfigGrid& g, const InducedGeometry& geo, const Model& model, const std::vector<double>& lapse,
                       const std::vector<double>& shift, double dtau)
        : n_(static_cast<Eigen::Index>(g.size())) {
        using C = std::complex<double>;
        if (!model.constants.quantum()) throw ParameterError("wave evolution needs a nonzero quantum coefficient");
        H_ = wave_hamiltonian(g, geo, model, lapse, shift);
        Eigen::SparseMatrix<C> I(n_, n_);
        I.setIdentity();
        const C a(0.0, dtau / (2.0 * model.constants.hbar));
        A_ = I + a * H_;
        B_ = I - a * H_;
        A_.makeCompressed();
        lu_.compute(A_);
        if (lu_.info() != Eigen::Success) throw NumericalError("factorization of the implicit wave step failed");
    }

    WaveState step(const WaveState& w) const {
        using V = Eigen::VectorXcd;
        const V in = Eigen::Map<const V>(w.psi.data(), n_);
        const V rhs = B_ * in;
        V out = lu_.solve(rhs);
        if (lu_.info() != Eigen::Success) throw NumericalError("implicit wave solve failed");
        // One refinement sweep keeps the Cayley map unitary to rounding.
        out += lu_.solve(rhs - A_ * out);
        WaveState r;
        r.psi.assign(out.data(), out.data() + n_);
        return r;
    }

    double energy(const WaveState& w, double cell_volume) const {
        using V = Eigen::VectorXcd;
        const V in = Eigen::Map<const V>(w.psi.data(), n_);
        return (in.adjoint() * (H_ * in)).value().real() * cell_volume;
    }

private:
    Eigen::Index n_;
    Eigen::SparseMatrix<std::complex<double>> H_, A_, B_;
    Eigen::SparseLU<Eigen::SparseMatrix<std::complex<double>>> lu_;
};

inline WaveState schrodinger_step(const WaveState& w, const ConfigGrid& g, const InducedGeometry& geo, const Model& model,
                                  const std::vector<double>& lapse, double dtau, const std::vector<double>& shift = {}) {
    bool idle = dtau == 0.0;
    if (!idle) {
        idle = true;
        for (double v : lapse) idle = idle && v == 0.0;
        for (double v : shift) idle = idle && v == 0.0;
    }
    if (idle) return w;
    return SchrodingerStepper(g, geo, model, lapse, shift, dtau).step(w);
}

struct Diagnostic {
    int step = 0;
    double tau = 0.0;
    double norm = 0.0;
    double energy = 0.0;
    double min_rho = 0.0;
    double max_defect = 0.0;
};

enum class EvolveMode { pde, wave };

struct Trajectory {
    EnsembleState final_state;
    WaveState final_wave;
    Hypersurface final_surface;
    std::vector<Diagnostic> diagnostics;
};

using StepObserver = std::function<void(int, double, const EnsembleState&)>;

// Iterates the schedule, deforming the surface alongside the state.
inline Trajectory evolve(const EnsembleState& initial, const ConfigGrid& g, const SpacetimeBackground& bg,
                         const Hypersurface& surface, const Model& model, const FoliationSchedule& schedule,
                         EvolveMode mode, const StepObserver& observer = {}) {
    Trajectory tr;
    tr.final_surface = surface;
    const double cv = g.cell_volume();
    EnsembleState s = initial;
    WaveState w;
    if (mode == EvolveMode::wave) w = to_wave(initial, model.constants);
    const double norm0 = total_probability(initial, g);
    auto record = [&](int step, double tau, const std::vector<double>& lapse, const InducedGeometry& geo,
                      const SchrodingerStepper* stepper) {
        Diagnostic d;
        d.step = step;
        d.tau = tau;
        if (mode == EvolveMode::wave) {
            d.norm = wave_norm(w, g);
            if (stepper) {
                d.energy = stepper->energy(w, cv);
            } else {
                const auto H = wave_hamiltonian(g, geo, model, lapse, {});
                const Eigen::Map<const Eigen::VectorXcd> v(w.psi.data(), static_cast<Eigen::Index>(w.psi.size()));
                d.energy = (v.adjoint() * (H * v)).value().real() * cv;
            }
            double mn = std::norm(w.psi[0]);
            for (const auto& p : w.psi) mn = std::min(mn, std::norm(p));
            d.min_rho = mn;
        } else {
            d.norm = total_probability(s, g);
            d.energy = total_hamiltonian(s, g, geo, model, lapse);
            d.min_rho = *std::min_element(s.rho.begin(), s.rho.end());
        }
        d.max_defect = std::abs(d.norm - norm0);
        tr.diagnostics.push_back(d);
    };
    InducedGeometry geo = induced_metric(bg, surface);
    const std::vector<double> unit(g.n_sites, 1.0);
    record(0, 0.0, schedule.empty() ? unit : schedule.front().lapse, geo, nullptr);
    std::unique_ptr<SchrodingerStepper> stepper;
    std::vector<double> cached_lapse, cached_shift, cached_sqrt_g;
    double cached_dtau = 0.0, tau = 0.0;
    int step = 0;
    for (const auto& st : schedule) {
        geo = induced_metric(bg, tr.final_surface);
        if (mode == EvolveMode::wave) {
            if (!stepper || st.lapse != cached_lapse || st.shift != cached_shift || st.dtau != cached_dtau ||
                geo.sqrt_g != cached_sqrt_g) {
                stepper = std::make_unique<SchrodingerStepper>(g, geo, model, st.lapse, st.shift, st.dtau);
                cached_lapse = st.lapse;
                cached_shift = st.shift;
                cached_dtau = st.dtau;
                cached_sqrt_g = geo.sqrt_g;
            }
            w = stepper->step(w);
        } else {
            s = step_normal(s, g, geo, st.lapse, st.dtau, model, st.shift);
        }
        Deformation d;
        d.normal_comp = st.lapse;
        d.tangential_comp = st.shift.empty() ? std::vector<double>(g.n_sites, 0.0) : st.shift;
        tr.final_surface = apply_deformation(bg, tr.final_surface, d.scaled(st.dtau));
        tau += st.dtau;
        ++step;
        record(step, tau, st.lapse, geo, stepper.get());
        if (observer) observer(step, tau, s);
    }
    tr.final_state = s;
    if (mode == EvolveMode::wave) {
        tr.final_wave = w;
        tr.final_state = from_wave(w, g, model.constants);
    }
    return tr;
}

inline FoliationSchedule uniform_schedule(int n_sites, double T, double dtau, double lapse = 1.0) {
    FoliationSchedule sch;
    const int steps = static_cast<int>(std::llround(T / dtau));
    for (int i = 0; i < steps; ++i) sch.push_back({std::vector<double>(n_sites, lapse), std::vector<double>(n_sites, 0.0), dtau});
    return sch;
}

}  // namespace edlab
