#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "edlab/common.hpp"
#include "edlab/dynamics.hpp"
#include "edlab/parallel.hpp"
#include "edlab/statespace.hpp"

namespace edlab {

namespace rng {

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t key(std::uint64_t seed, std::uint64_t walker, std::uint64_t step, std::uint64_t lane) {
    return mix64(mix64(mix64(mix64(seed) ^ walker) ^ step) ^ lane);
}

inline double uniform_open(std::uint64_t bits) { return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53; }

// Standard normal draw addressed by (seed, walker, step, lane).
inline double normal(std::uint64_t seed, std::uint64_t walker, std::uint64_t step, std::uint64_t lane) {
    const std::uint64_t k = key(seed, walker, step, lane);
    const double u1 = uniform_open(k);
    const double u2 = uniform_open(mix64(k ^ 0x5851f42d4c957f2dULL));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double uniform(std::uint64_t seed, std::uint64_t walker, std::uint64_t step, std::uint64_t lane) {
    return uniform_open(key(seed, walker, step, lane));
}

}  // namespace rng

struct WalkerEnsemble {
    int n_sites = 1;
    std::vector<double> values;  // walker-major, n_sites per walker
    std::uint64_t seed = 0;
    std::uint64_t steps_taken = 0;

    std::size_t count() const { return n_sites ? values.size() / n_sites : 0; }
    double* walker(std::size_t i) { return values.data() + i * n_sites; }
    const double* walker(std::size_t i) const { return values.data() + i * n_sites; }
};

struct KernelParams {
    double eta = 1.0;
    std::vector<double> dxi_perp;
    std::vector<double> sqrt_g;

    double alpha(int x) const { return 1.0 / (eta * dxi_perp[x]); }
    static constexpr double alpha_prime = 1.0;
};

struct StepMoments {
    std::vector<double> mean;
    std::vector<double> variance;
};

inline StepMoments step_moments(const std::vector<double>& drift_grad, const KernelParams& p) {
    StepMoments m;
    const std::size_t n = drift_grad.size();
    m.mean.resize(n);
    m.variance.resize(n);
    for (std::size_t x = 0; x < n; ++x) {
        if (!(p.dxi_perp[x] > 0.0)) throw ParameterError("normal deformation must be positive at every site");
        m.variance[x] = p.eta * p.dxi_perp[x] / p.sqrt_g[x];
        m.mean[x] = m.variance[x] * drift_grad[x];
    }
    return m;
}

// Gradient of the drift potential evaluated at a configuration (n_sites values in, n_sites out).
using DriftField = std::function<void(const double*, double*)>;

inline WalkerEnsemble sample_step(const WalkerEnsemble& e, const DriftField& drift, const KernelParams& p) {
    WalkerEnsemble out = e;
    const int n = e.n_sites;
    const std::uint64_t step = e.steps_taken;
    std::vector<double> sd(n), var(n);
    for (int x = 0; x < n; ++x) {
        if (!(p.dxi_perp[x] > 0.0)) throw ParameterError("normal deformation must be positive at every site");
        var[x] = p.eta * p.dxi_perp[x] / p.sqrt_g[x];
        sd[x] = std::sqrt(var[x]);
    }
    parallel_for(e.count(), [&](std::size_t i) {
        double grad[3] = {0.0, 0.0, 0.0};
        std::vector<double> big;
        double* gp = grad;
        if (n > 3) {
            big.resize(n);
            gp = big.data();
        }
        drift(e.walker(i), gp);
        double* w = out.walker(i);
        for (int x = 0; x < n; ++x) w[x] += var[x] * gp[x] + sd[x] * rng::normal(e.seed, i, step, static_cast<std::uint64_t>(x));
    });
    out.steps_taken = step + 1;
    return out;
}

struct DensityEstimate {
    Field rho;
    std::size_t outside = 0;
};

// Histogram over cells centered on grid nodes; walkers outside the box land in the nearest boundary cell.
inline DensityEstimate empirical_density(const WalkerEnsemble& e, const ConfigGrid& g) {
    DensityEstimate d;
    d.rho.assign(g.size(), 0.0);
    const double h = g.h();
    for (std::size_t i = 0; i < e.count(); ++i) {
        const double* w = e.walker(i);
        std::size_t node = 0;
        bool out = false;
        for (int a = 0; a < g.n_sites; ++a) {
            long j = std::lround((w[a] + g.L) / h);
            if (j < 0 || j >= g.m) {
                out = true;
                j = std::clamp<long>(j, 0, g.m - 1);
            }
            node += static_cast<std::size_t>(j) * g.stride(a);
        }
        d.outside += out;
        d.rho[node] += 1.0;
    }
    const double scale = 1.0 / (static_cast<double>(e.count()) * g.cell_volume());
    for (double& r : d.rho) r *= scale;
    return d;
}

inline double l1_distance(const Field& a, const Field& b, const ConfigGrid& g) {
    double t = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) t += std::abs(a[i] - b[i]);
    return t * g.cell_volume();
}

// Walkers drawn from the cell-constant density of a grid state.
inline WalkerEnsemble sample_walkers(const EnsembleState& s, const ConfigGrid& g, std::size_t M, std::uint64_t seed) {
    constexpr std::uint64_t kInitStep = 0xffffffffULL;
    WalkerEnsemble e;
    e.n_sites = g.n_sites;
    e.seed = seed;
    e.values.resize(M * g.n_sites);
    std::vector<double> cdf(g.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        acc += std::max(s.rho[i], 0.0);
        cdf[i] = acc;
    }
    const double h = g.h();
    parallel_for(M, [&](std::size_t w) {
        const double u = rng::uniform(seed, w, kInitStep, 0) * acc;
        std::size_t node = static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        node = std::min(node, g.size() - 1);
        for (int a = 0; a < g.n_sites; ++a)
            e.values[w * g.n_sites + a] =
                g.coord_of(node, a) + h * (rng::uniform(seed, w, kInitStep, 1 + a) - 0.5);
    });
    return e;
}

// Multilinear interpolation of the nodal drift-potential gradient.
class GridDrift {
public:
    GridDrift(const EnsembleState& s, const ConfigGrid& g, const Constants& k) : g_(g) {
        const Field phi = drift_potential(s, k);
        const double h = g.h();
        grad_.assign(g.n_sites, Field(g.size(), 0.0));
        std::vector<double> d1(g.m), d2(g.m);
        for (int a = 0; a < g.n_sites; ++a)
            g.for_each_line(a, [&](std::size_t first, std::size_t st) {
                detail::line_derivatives(phi.data() + first, st, g.m, h, d1.data(), d2.data());
                for (int j = 0; j < g.m; ++j) grad_[a][first + j * st] = d1[j];
            });
    }

    void operator()(const double* w, double* out) const {
        const double h = g_.h();
        int base[3] = {0, 0, 0};
        double frac[3] = {0.0, 0.0, 0.0};
        for (int a = 0; a < g_.n_sites; ++a) {
            const double t = std::clamp((w[a] + g_.L) / h, 0.0, static_cast<double>(g_.m - 1));
            base[a] = std::min(static_cast<int>(t), g_.m - 2);
            frac[a] = t - base[a];
        }
        const int corners = 1 << g_.n_sites;
        for (int a = 0; a < g_.n_sites; ++a) out[a] = 0.0;
        for (int c = 0; c < corners; ++c) {
            double wt = 1.0;
            std::size_t node = 0;
            for (int a = 0; a < g_.n_sites; ++a) {
                const int bit = (c >> a) & 1;
                wt *= bit ? frac[a] : 1.0 - frac[a];
                node += static_cast<std::size_t>(base[a] + bit) * g_.stride(a);
            }
            for (int a = 0; a < g_.n_sites; ++a) out[a] += wt * grad_[a][node];
        }
    }

private:
    ConfigGrid g_;
    std::vector<Field> grad_;
};

struct SamplerComparison {
    std::vector<double> tau;
    std::vector<double> l1;
    std::size_t outside = 0;
    EnsembleState final_state;
    WalkerEnsemble final_walkers;
};

// Co-evolves walkers and the grid density (hybrid phase equation) along the schedule.
inline SamplerComparison sampler_vs_pde(const EnsembleState& initial, const ConfigGrid& g, const InducedGeometry& geo,
                                        const Model& model, const FoliationSchedule& schedule, std::size_t M,
                                        std::uint64_t seed) {
    SamplerComparison out;
    EnsembleState s = initial;
    WalkerEnsemble e = sample_walkers(initial, g, M, seed);
    auto record = [&](double tau) {
        const auto d = empirical_density(e, g);
        out.tau.push_back(tau);
        out.l1.push_back(l1_distance(d.rho, s.rho, g));
        out.outside = std::max(out.outside, d.outside);
    };
    record(0.0);
    double tau = 0.0;
    for (const auto& st : schedule) {
        KernelParams p;
        p.eta = model.constants.eta;
        p.sqrt_g = geo.sqrt_g;
        p.dxi_perp.resize(g.n_sites);
        for (int x = 0; x < g.n_sites; ++x) p.dxi_perp[x] = st.lapse[x] * st.dtau;
        const GridDrift drift(s, g, model.constants);
        e = sample_step(e, std::cref(drift), p);
        s = step_normal(s, g, geo, st.lapse, st.dtau, model);
        tau += st.dtau;
        record(tau);
    }
    out.final_state = std::move(s);
    out.final_walkers = std::move(e);
    return out;
}

struct MaxEntResult {
    std::vector<double> dchi;
    std::vector<double> p;  // normalized weights on dchi
    double alpha = 0.0;
    double alpha_prime = 0.0;
    double mean = 0.0;
    double variance = 0.0;
    double second_moment = 0.0;
    double closed_alpha = 0.0;
    double closed_mean = 0.0;
    double closed_variance = 0.0;
    int iterations = 0;
    double residual = 0.0;
};

inline double discrete_entropy(const std::vector<double>& p) {
    double s = 0.0;
    for (double v : p)
        if (v > 0.0) s -= v * std::log(v);
    return s;
}

// Maximizes entropy relative to a uniform prior on a bounded step grid subject to
// <dchi^2> = kappa and <drift_grad dchi> = kappa' (the value implied by alpha' = 1).
inline MaxEntResult maxent_kernel_check(double kappa, double drift_grad, int points = 4001, double width_sigmas = 14.0) {
    if (!(kappa > 0.0)) throw ParameterError("kappa must be positive");
    MaxEntResult r;
    const double s = drift_grad;
    r.closed_alpha = (1.0 + std::sqrt(1.0 + 4.0 * kappa * s * s)) / (2.0 * kappa);
    r.closed_variance = 1.0 / r.closed_alpha;
    r.closed_mean = s / r.closed_alpha;
    const double kappa_prime = s * r.closed_mean;
    const double sigma = std::sqrt(r.closed_variance);
    const double lo = r.closed_mean - width_sigmas * sigma, hi = r.closed_mean + width_sigmas * sigma;
    r.dchi.resize(points);
    for (int i = 0; i < points; ++i) r.dchi[i] = lo + (hi - lo) * i / (points - 1);

    const bool drift = s != 0.0;
    const int dim = drift ? 2 : 1;
    // Dual variables: a (coefficient of -dchi^2), b (coefficient of s*dchi).
    Eigen::Vector2d lam(0.25 / kappa, 0.0);
    auto evaluate = [&](const Eigen::Vector2d& l, std::vector<double>& w, double& logZ) {
        double mx = -1e300;
        std::vector<double> e(points);
        for (int i = 0; i < points; ++i) {
            const double d = r.dchi[i];
            e[i] = -l[0] * d * d + l[1] * s * d;
            mx = std::max(mx, e[i]);
        }
        double z = 0.0;
        w.resize(points);
        for (int i = 0; i < points; ++i) {
            w[i] = std::exp(e[i] - mx);
            z += w[i];
        }
        for (double& v : w) v /= z;
        logZ = mx + std::log(z);
        return logZ + l[0] * kappa - l[1] * kappa_prime;
    };
    std::vector<double> w;
    double logZ = 0.0;
    double dual = evaluate(lam, w, logZ);
    for (r.iterations = 0; r.iterations < 100; ++r.iterations) {
        double m2 = 0.0, m1 = 0.0;
        for (int i = 0; i < points; ++i) {
            m2 += w[i] * r.dchi[i] * r.dchi[i];
            m1 += w[i] * s * r.dchi[i];
        }
        Eigen::Vector2d grad(kappa - m2, m1 - kappa_prime);
        double v22 = 0.0, v11 = 0.0, v12 = 0.0;
        for (int i = 0; i < points; ++i) {
            const double a = r.dchi[i] * r.dchi[i] - m2, b = s * r.dchi[i] - m1;
            v11 += w[i] * a * a;
            v12 += w[i] * a * b;
            v22 += w[i] * b * b;
        }
        r.residual = std::max(std::abs(grad[0]) / kappa, drift ? std::abs(grad[1]) / std::max(std::abs(kappa_prime), 1e-300) : 0.0);
        if (r.residual < 1e-13) break;
        Eigen::Vector2d delta;
        if (dim == 2) {
            Eigen::Matrix2d Hm;
            Hm << v11, -v12, -v12, v22;
            delta = -Hm.ldlt().solve(grad);
        } else {
            delta = Eigen::Vector2d(-grad[0] / v11, 0.0);
        }
        double t = 1.0;
        std::vector<double> wn;
        double ln = 0.0;
        for (int k = 0; k < 60; ++k) {
            const double dn = evaluate(lam + t * delta, wn, ln);
            if (dn <= dual + 1e-4 * t * grad.dot(delta) + 1e-14 * (1.0 + std::abs(dual)) || k == 59) {
                lam += t * delta;
                dual = dn;
                w.swap(wn);
                break;
            }
            t *= 0.5;
        }
    }
    if (r.residual >= 1e-10) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "maximum-entropy Newton iteration did not converge, residual %.3e", r.residual);
        throw NumericalError(buf);
    }
    r.p = w;
    r.alpha = 2.0 * lam[0];
    r.alpha_prime = drift ? lam[1] : KernelParams::alpha_prime;
    for (int i = 0; i < points; ++i) {
        r.mean += w[i] * r.dchi[i];
        r.second_moment += w[i] * r.dchi[i] * r.dchi[i];
    }
    r.variance = r.second_moment - r.mean * r.mean;
    return r;
}

// Largest entropy change over random constraint-preserving perturbations (nonpositive at a maximizer).
inline double maxent_perturbation_gain(const MaxEntResult& r, double drift_grad, int trials, std::uint64_t seed) {
    const int n = static_cast<int>(r.p.size());
    Eigen::MatrixXd C(3, n);
    for (int i = 0; i < n; ++i) {
        C(0, i) = 1.0;
        C(1, i) = r.dchi[i] * r.dchi[i];
        C(2, i) = drift_grad * r.dchi[i];
    }
    const Eigen::MatrixXd CCt = C * C.transpose();
    const auto solver = CCt.completeOrthogonalDecomposition();
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    const double s0 = discrete_entropy(r.p);
    double worst = -1e300;
    for (int t = 0; t < trials; ++t) {
        Eigen::VectorXd d(n);
        for (int i = 0; i < n; ++i) d[i] = nd(gen) * r.p[i];
        d -= C.transpose() * solver.solve(C * d);
        double scale = 1e300;
        for (int i = 0; i < n; ++i)
            if (d[i] < 0.0) scale = std::min(scale, -0.5 * r.p[i] / d[i]);
        scale = std::min(scale, 1.0);
        std::vector<double> q(n);
        for (int i = 0; i < n; ++i) q[i] = r.p[i] + scale * d[i];
        worst = std::max(worst, discrete_entropy(q) - s0);
    }
    return worst;
}

}  // namespace edlab
