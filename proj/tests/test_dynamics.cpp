#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "edlab/dynamics.hpp"
#include "support.hpp"

using namespace edlab;

namespace {

Model hybrid(PotentialSpec v = {}) {
    Model m;
    m.potential = std::move(v);
    m.constants = Constants::make(1.0, 0.0);
    return m;
}

Model quantum(PotentialSpec v = {}, double lambda = 0.125) {
    Model m;
    m.potential = std::move(v);
    m.constants = Constants::make(1.0, lambda);
    return m;
}

double sum(const Field& f) {
    double t = 0.0;
    for (double v : f) t += v;
    return t;
}

double mean_position(const WaveState& w, const ConfigGrid& g) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        num += g.coord(static_cast<int>(i)) * std::norm(w.psi[i]);
        den += std::norm(w.psi[i]);
    }
    return num / den;
}

}  // namespace

TEST(Ltfp, ConstantPhaseHasNoCurrent) {
    const ConfigGrid g(2, 3.0, 24);
    auto s = edlab::testing::random_smooth_state(g, 2);
    std::fill(s.phi.begin(), s.phi.end(), 0.7);
    const auto geo = InducedGeometry::flat(2);
    for (const auto& m : {hybrid(), quantum()})
        for (int x = 0; x < 2; ++x) EXPECT_EQ(max_abs(ltfp_rhs(s, g, geo, m, x)), 0.0);
}

TEST(Ltfp, LinearPhaseOnUnitGaussian) {
    const ConfigGrid g(1, 8.0, 401);
    const double b = 0.6;
    const auto s = edlab::testing::gaussian_state(g, 1.0, {0.0, 0.0, 0.0}, [&](const auto& p) { return b * p[0]; });
    const auto rhs = ltfp_rhs(s, g, InducedGeometry::flat(1), hybrid(), 0);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(rhs[i], b * g.coord(static_cast<int>(i)) * s.rho[i], 2e-4);
    EXPECT_NEAR(sum(rhs) * g.cell_volume(), 0.0, 1e-15);
}

TEST(Ltfp, SumsToGlobalFlatEquation) {
    const ConfigGrid g(3, 3.0, 16);
    const auto s = edlab::testing::random_smooth_state(g, 4);
    const auto geo = InducedGeometry::flat(3);
    for (const auto& m : {hybrid(), quantum()}) {
        Field total(g.size(), 0.0);
        for (int x = 0; x < 3; ++x) {
            const auto r = ltfp_rhs(s, g, geo, m, x);
            for (std::size_t i = 0; i < g.size(); ++i) total[i] += r[i];
        }
        EXPECT_LE(max_abs_diff(total, global_fp_rhs(s, g, m.constants)), 1e-12);
        EXPECT_NEAR(sum(total) * g.cell_volume(), 0.0, 1e-13);
    }
}

TEST(Lthj, UniformDensityZeroPhase) {
    const ConfigGrid g(1, 2.0, 32);
    const EnsembleState s = normalize({Field(g.size(), 1.0), Field(g.size(), 0.0)}, g);
    const auto geo = InducedGeometry::flat(1);
    EXPECT_EQ(max_abs(lthj_rhs(s, g, geo, hybrid(), 0)), 0.0);
    // The box wall curves sqrt(rho) at the outermost nodes in quantum mode; the interior stays flat.
    const auto q = lthj_rhs(s, g, geo, quantum(), 0);
    for (int j = 1; j + 1 < g.m; ++j) EXPECT_NEAR(q[j], 0.0, 1e-14);
}

TEST(Lthj, HybridHarmonicOscillator) {
    const ConfigGrid g(1, 4.0, 401);
    const auto s = edlab::testing::gaussian_state(g, 1.5, {0.0, 0.0, 0.0}, [](const auto& p) { return 0.3 * p[0] * p[0] - 0.2 * p[0]; });
    const auto rhs = lthj_rhs(s, g, InducedGeometry::flat(1), hybrid(PotentialSpec::with_mass(1.0)), 0);
    for (int j = 1; j + 1 < g.m; ++j) {
        const double chi = g.coord(j), dphi = 0.6 * chi - 0.2;
        EXPECT_NEAR(rhs[j], -(0.5 * dphi * dphi + 0.5 * chi * chi), 1e-3);
    }
}

TEST(Tangential, SingleSiteIsIdle) {
    const ConfigGrid g(1, 3.0, 32);
    const auto s = edlab::testing::random_smooth_state(g, 1);
    const auto [a, b] = tangential_rhs(s, g, 0);
    EXPECT_EQ(max_abs(a), 0.0);
    EXPECT_EQ(max_abs(b), 0.0);
    EXPECT_EQ(e_momentum(s, g, 0), 0.0);
}

TEST(Tangential, SiteExchangeMirror) {
    // Two sites have no lattice gradient, so a site-symmetric state on three sites exercises the mirror.
    const ConfigGrid g(3, 3.0, 16);
    const auto s = edlab::testing::gaussian_state(g, 0.8, {0.1, 0.1, 0.1}, [](const auto& p) { return p[0] * p[1] * p[2] + p[0] + p[1] + p[2]; });
    const auto t0 = tangential_rhs(s, g, 0).first;
    const auto t1 = tangential_rhs(s, g, 1).first;
    auto swap01 = [&](std::size_t node) {
        const int i = g.index_on_axis(node, 0), j = g.index_on_axis(node, 1), k = g.index_on_axis(node, 2);
        return static_cast<std::size_t>(j) + g.stride(1) * i + g.stride(2) * k;
    };
    // Exchanging sites 0 and 1 reverses the orientation of the periodic lattice.
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(t0[i], -t1[swap01(i)], 1e-14);
}

TEST(Tangential, ConstantShiftConservesProbability) {
    const ConfigGrid g(3, 4.0, 16);
    const auto s = edlab::testing::gaussian_state(g, 0.6, {0.0, 0.0, 0.0}, [](const auto& p) { return 0.3 * p[0] - 0.1 * p[2]; });
    const double dtau = 1e-2;
    const auto out = step_normal(s, g, InducedGeometry::flat(3), std::vector<double>(3, 0.0), dtau, hybrid(), std::vector<double>(3, 1.0));
    EXPECT_LE(std::abs(total_probability(out, g) - total_probability(s, g)) / dtau, 1e-10);
}

TEST(EHamiltonian, VanishesOnTrivialState) {
    const ConfigGrid g(2, 2.0, 16);
    const EnsembleState s = normalize({Field(g.size(), 1.0), Field(g.size(), 0.0)}, g);
    EXPECT_EQ(e_hamiltonian(s, g, InducedGeometry::flat(2), hybrid(), 0), 0.0);
}

class HamiltonForm : public ::testing::TestWithParam<std::tuple<int, bool>> {};

TEST_P(HamiltonForm, EDerivativesReproduceEquationsOfMotion) {
    const auto [n, is_quantum] = GetParam();
    const ConfigGrid g(n, 3.0, n == 1 ? 48 : 16);
    const auto s = edlab::testing::random_smooth_state(g, 11 + n);
    InducedGeometry geo = InducedGeometry::flat(n);
    geo.sqrt_g.assign(n, 1.3);
    const Model m = is_quantum ? quantum(PotentialSpec::with_mass(0.8)) : hybrid(PotentialSpec::with_mass(0.8));
    for (int x = 0; x < n; ++x) {
        const Functional H = [&](const EnsembleState& t) { return e_hamiltonian(t, g, geo, m, x); };
        const Field dphi = e_gradient(H, s, Variable::phi, g.cell_volume());
        const Field drho = e_gradient(H, s, Variable::rho, g.cell_volume());
        const Field fp = ltfp_rhs(s, g, geo, m, x);
        const Field hj = lthj_rhs(s, g, geo, m, x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            EXPECT_NEAR(dphi[i], fp[i], 1e-6);
            EXPECT_NEAR(drho[i], -hj[i], 1e-6);
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Modes, HamiltonForm,
                         ::testing::Values(std::make_tuple(1, false), std::make_tuple(1, true), std::make_tuple(2, false),
                                           std::make_tuple(2, true)));

TEST(EMomentum, EDerivativesReproduceTransport) {
    const ConfigGrid g(3, 3.0, 16);
    const auto s = edlab::testing::random_smooth_state(g, 21);
    for (int x = 0; x < 3; ++x) {
        const Functional P = [&](const EnsembleState& t) { return e_momentum(t, g, x); };
        const auto [tr, tp] = tangential_rhs(s, g, x);
        for (std::size_t i = 0; i < g.size(); i += 37) {
            EXPECT_NEAR(e_derivative(P, s, Variable::phi, i, g.cell_volume()), tr[i], 1e-6);
            EXPECT_NEAR(e_derivative(P, s, Variable::rho, i, g.cell_volume()), -tp[i], 1e-6);
        }
    }
}

TEST(EMomentum, ConstantPhaseOnConfinedDensity) {
    const ConfigGrid g(3, 5.0, 20);
    auto s = edlab::testing::gaussian_state(g, 0.7);
    std::fill(s.phi.begin(), s.phi.end(), 2.0);
    for (int x = 0; x < 3; ++x) EXPECT_NEAR(e_momentum(s, g, x), 0.0, 1e-12);
}

TEST(EDerivative, LinearAndPhaseFreeFunctionals) {
    const ConfigGrid g(2, 2.0, 16);
    const auto s = edlab::testing::random_smooth_state(g, 6);
    const Functional mass = [&](const EnsembleState& t) { return total_probability(t, g); };
    for (std::size_t i = 0; i < g.size(); i += 13) {
        EXPECT_NEAR(e_derivative(mass, s, Variable::rho, i, g.cell_volume()), 1.0, 1e-8);
        EXPECT_EQ(e_derivative(mass, s, Variable::phi, i, g.cell_volume()), 0.0);
    }
}

TEST(EDerivative, NonFiniteFunctionalIsReported) {
    const ConfigGrid g(1, 2.0, 16);
    const auto s = edlab::testing::random_smooth_state(g, 6);
    const Functional bad = [](const EnsembleState&) { return std::nan(""); };
    EXPECT_THROW(e_derivative(bad, s, Variable::rho, 3, g.cell_volume()), NumericalError);
}

TEST(PoissonBracket, AntisymmetryAndConservation) {
    const ConfigGrid g(1, 3.0, 40);
    const auto s = edlab::testing::random_smooth_state(g, 8);
    const auto geo = InducedGeometry::flat(1);
    const Model m = quantum(PotentialSpec::with_mass(1.0));
    const Functional H = [&](const EnsembleState& t) { return e_hamiltonian(t, g, geo, m, 0); };
    const Functional N = [&](const EnsembleState& t) { return total_probability(t, g); };
    EXPECT_NEAR(poisson_bracket(H, H, s, g.cell_volume()), 0.0, 1e-12);
    EXPECT_NEAR(poisson_bracket(N, H, s, g.cell_volume()), 0.0, 1e-8);
    EXPECT_NEAR(poisson_bracket(N, H, s, g.cell_volume()), -poisson_bracket(H, N, s, g.cell_volume()), 1e-12);
}

TEST(StepNormal, ZeroLapseIsIdentity) {
    const ConfigGrid g(2, 3.0, 16);
    const auto s = edlab::testing::random_smooth_state(g, 3);
    const auto out = step_normal(s, g, InducedGeometry::flat(2), {0.0, 0.0}, 0.1, quantum());
    EXPECT_EQ(out.rho, s.rho);
    EXPECT_EQ(out.phi, s.phi);
}

TEST(StepNormal, UnstableStepIsRejected) {
    const ConfigGrid g(1, 3.0, 64);
    const auto s = edlab::testing::random_smooth_state(g, 3);
    EXPECT_THROW(step_normal(s, g, InducedGeometry::flat(1), {1.0}, 1.0, quantum()), NumericalError);
}

TEST(StepNormal, FourthOrderInDtau) {
    const ConfigGrid g(1, 6.0, 64);
    const auto s = edlab::testing::gaussian_state(g, 1.0, {0.3, 0.0, 0.0}, [](const auto& p) { return 0.5 * p[0]; });
    const auto geo = InducedGeometry::flat(1);
    const Model m = quantum(PotentialSpec::with_mass(1.0));
    auto run = [&](double dtau) {
        EnsembleState t = s;
        for (int i = 0; i < static_cast<int>(std::llround(0.08 / dtau)); ++i) t = step_normal(t, g, geo, {1.0}, dtau, m);
        return t;
    };
    const auto ref = run(0.08 / 64);
    const double e1 = max_abs_diff(run(0.08 / 8).rho, ref.rho);
    const double e2 = max_abs_diff(run(0.08 / 16).rho, ref.rho);
    EXPECT_GT(e1 / e2, 12.0);
    EXPECT_LT(e1 / e2, 20.0);
}

TEST(Schrodinger, ZeroLapseIsIdentityAndNormIsKept) {
    const ConfigGrid g(1, 6.0, 128);
    const auto k = Constants::make(1.0, 0.125);
    const auto w = to_wave(edlab::testing::gaussian_state(g, 1.0, {0.5, 0.0, 0.0}, [](const auto& p) { return p[0]; }), k);
    const auto geo = InducedGeometry::flat(1);
    const Model m = quantum(PotentialSpec::with_mass(1.0));
    const auto same = schrodinger_step(w, g, geo, m, {0.0}, 0.1);
    EXPECT_EQ(same.psi, w.psi);
    const auto out = schrodinger_step(w, g, geo, m, {1.0}, 0.05);
    EXPECT_NEAR(wave_norm(out, g), wave_norm(w, g), 1e-12);
}

TEST(Schrodinger, LinearInPsi) {
    const ConfigGrid g(2, 4.0, 20);
    const auto k = Constants::make(1.0, 0.125);
    const auto a = to_wave(edlab::testing::random_smooth_state(g, 1), k);
    const auto b = to_wave(edlab::testing::random_smooth_state(g, 2), k);
    const std::complex<double> ca(0.3, -1.1), cb(2.0, 0.4);
    WaveState mix;
    for (std::size_t i = 0; i < g.size(); ++i) mix.psi.push_back(ca * a.psi[i] + cb * b.psi[i]);
    const auto geo = InducedGeometry::flat(2);
    const Model m = quantum(PotentialSpec::with_mass(1.0));
    const SchrodingerStepper step(g, geo, m, {1.0, 0.6}, {0.0, 0.0}, 0.02);
    const auto sa = step.step(a), sb = step.step(b), sm = step.step(mix);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_LE(std::abs(sm.psi[i] - (ca * sa.psi[i] + cb * sb.psi[i])), 1e-10);
}

TEST(Schrodinger, CoherentStateOscillation) {
    const ConfigGrid g(1, 8.0, 256);
    const auto k = Constants::from_hbar(1.0, 1.0);
    const double x0 = 1.5;
    // Ground-state width for unit mass, frequency and hbar: rho variance 1/2.
    const auto w0 = to_wave(edlab::testing::gaussian_state(g, std::sqrt(0.5), {x0, 0.0, 0.0}), k);
    const auto geo = InducedGeometry::flat(1);
    Model m;
    m.potential = PotentialSpec::with_mass(1.0);
    m.constants = k;
    const int steps = 400;
    const double dtau = 2.0 * std::numbers::pi / steps;
    const SchrodingerStepper step(g, geo, m, {1.0}, {0.0}, dtau);
    WaveState w = w0;
    double lo = x0, hi = x0;
    for (int i = 1; i <= steps; ++i) {
        w = step.step(w);
        const double c = mean_position(w, g);
        lo = std::min(lo, c);
        hi = std::max(hi, c);
        if (i == steps / 2) {
            EXPECT_NEAR(c, -x0, 0.01 * x0);
        }
    }
    EXPECT_NEAR(mean_position(w, g), x0, 0.01 * x0);
    EXPECT_NEAR(0.5 * (hi - lo), x0, 0.01 * x0);
}

TEST(Evolve, TrivialSchedules) {
    const ConfigGrid g(1, 4.0, 32);
    const auto s = edlab::testing::random_smooth_state(g, 5);
    const auto bg = SpacetimeBackground::minkowski();
    const auto surf = Hypersurface::flat(1);
    const auto empty = evolve(s, g, bg, surf, quantum(), {}, EvolveMode::pde);
    EXPECT_EQ(empty.final_state.rho, s.rho);
    EXPECT_EQ(empty.diagnostics.size(), 1u);
    const auto idle = evolve(s, g, bg, surf, quantum(), uniform_schedule(1, 0.5, 0.01, 0.0), EvolveMode::pde);
    EXPECT_EQ(idle.final_state.rho, s.rho);
    EXPECT_EQ(idle.final_state.phi, s.phi);
    EXPECT_EQ(idle.diagnostics.size(), 51u);
}

TEST(Evolve, EnergyDriftOnFlatBackground) {
    const ConfigGrid g(1, 6.0, 96);
    const auto s = edlab::testing::gaussian_state(g, 0.8, {0.4, 0.0, 0.0}, [](const auto& p) { return 0.3 * p[0]; });
    const auto tr = evolve(s, g, SpacetimeBackground::minkowski(), Hypersurface::flat(1), quantum(PotentialSpec::with_mass(1.0)),
                           uniform_schedule(1, 1.0, 1e-3), EvolveMode::pde);
    const double e0 = tr.diagnostics.front().energy, e1 = tr.diagnostics.back().energy;
    EXPECT_LE(std::abs(e1 - e0), 1e-6);
    for (const auto& d : tr.diagnostics) EXPECT_LE(d.max_defect, 1e-10);
}
