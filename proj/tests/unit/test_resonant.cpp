#include "doctest.h"

#include <cmath>
#include <numbers>

#include "isokit/errors.hpp"
#include "isokit/resonant.hpp"
#include "../oracles/discrete_bath.hpp"

using namespace isokit;
using namespace isokit::resonant;
using schedules::PiecewiseLinear;
using schedules::SwitchOrder;

namespace {

constexpr double pi = std::numbers::pi;

RLParams constant_params(double eps, double g, double T, double beta = 1.0, double n0 = 0.5) {
    RLParams p;
    p.beta = beta;
    p.Lambda = 100.0;
    p.eps = PiecewiseLinear::constant(eps, 0.0, T);
    p.g = PiecewiseLinear::constant(g, 0.0, T);
    p.n0 = n0;
    return p;
}

template <class F>
double simpson(F f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

// Steady occupation of a level with Lorentzian broadening g^2 in a wide band:
// 1/2 - (1/2pi) int tanh(beta (eps + (g^2/2) tan th)/2) dth over (-pi/2, pi/2).
double lorentzian_occupation(double eps, double g, double beta) {
    const double w = 0.5 * g * g;
    const double lim = 0.5 * pi - 1e-9;
    return 0.5 - simpson([&](double th) { return std::tanh(0.5 * beta * (eps + w * std::tan(th))); },
                         -lim, lim, 200000) / (2.0 * pi);
}

double sample_at(const RLTrajectory& tr, const std::vector<double>& v, double t) {
    for (std::size_t i = 0; i < tr.t.size(); ++i) {
        if (std::abs(tr.t[i] - t) < 1e-9) return v[i];
    }
    FAIL("time not on the recorded grid");
    return 0.0;
}

}  // namespace

TEST_CASE("fermi and free energy") {
    CHECK(fermi(0.0, 2.0) == doctest::Approx(0.5));
    CHECK(fermi(800.0, 1.0) == 0.0);
    CHECK(fermi(-800.0, 1.0) == 1.0);
    CHECK(free_energy_change(1.0, 2.0, 1.0) ==
          doctest::Approx(-std::log(1.0 + std::exp(-2.0)) + std::log(1.0 + std::exp(-1.0))));
    CHECK(free_energy_change(1.0, 2.0, 1.0) ==
          doctest::Approx(1.0 + std::log(fermi(2.0, 1.0) / fermi(1.0, 1.0))));
}

TEST_CASE("propagator_log") {
    const RLParams c = constant_params(0.7, 0.4, 10.0);
    CHECK(propagator_log(3.0, 3.0, c) == cplx(0.0, 0.0));
    const cplx v = propagator_log(7.0, 2.0, c);
    CHECK(v.real() == doctest::Approx(-0.08 * 5.0));
    CHECK(v.imag() == doctest::Approx(-0.7 * 5.0));
    CHECK_THROWS_AS(propagator_log(2.0, 3.0, c), DomainError);

    RLParams p = c;
    p.eps = PiecewiseLinear({0.0, 2.0, 6.0, 10.0}, {1.0, 1.0, 2.5, 2.0});
    p.g = PiecewiseLinear({0.0, 3.0, 7.0, 10.0}, {0.0, 0.6, 0.6, 0.1});
    const double re = -0.5 * simpson([&](double s) { return p.g(s) * p.g(s); }, 1.3, 9.1, 1000000);
    const double im = -simpson([&](double s) { return p.eps(s); }, 1.3, 9.1, 1000000);
    const cplx k = propagator_log(9.1, 1.3, p);
    CHECK(std::abs(k.real() - re) < 1e-10);
    CHECK(std::abs(k.imag() - im) < 1e-10);
    double prev = 0.0;
    for (double t = 1.3; t <= 10.0; t += 0.1) {
        const double r = propagator_log(t, 1.3, p).real();
        CHECK(r <= prev + 1e-15);
        prev = r;
    }
}

TEST_CASE("noise_phi symmetry and small-t limit") {
    CHECK(std::abs(noise_phi(0.0, 1.0, 0.0, 100.0)) < 1e-14);
    // phi(t) -> -i Lambda^2 t/(2 pi) as t -> 0
    CHECK(noise_phi(1e-7, 1.0, 0.0, 100.0).imag() == doctest::Approx(-1e4 * 1e-7 / (2.0 * pi)).epsilon(1e-4));
    for (double t : {0.001, 0.05, 0.3, 1.0, 4.0, 17.0}) {
        const cplx a = noise_phi(t, 1.3, 0.0, 100.0);
        const cplx b = noise_phi(-t, 1.3, 0.0, 100.0);
        CHECK(a.real() == 0.0);
        CHECK(std::abs(a + b) < 1e-15 * std::max(1.0, std::abs(a)));
    }
    // at t = 0 the band integral of tanh(beta (w - mu)/2)/(2 pi) is -mu/pi
    const cplx z = noise_phi(0.0, 1.0, 0.3, 100.0);
    CHECK(z.real() == doctest::Approx(-0.3 / pi).epsilon(1e-12));
    CHECK(z.imag() == 0.0);
}

TEST_CASE("noise_phi against the band integral") {
    const double beta = 1.0;
    const double Lambda = 100.0;
    for (double t : {beta, 0.37, 2.2}) {
        // phi(t) = int_{-L}^{L} dw/(2 pi) tanh(beta w/2) e^{-i w t} = -(i/pi) int_0^L tanh(beta w/2) sin(w t) dw
        const double integral =
            simpson([&](double w) { return std::tanh(0.5 * beta * w) * std::sin(w * t); }, 0.0, Lambda, 400000);
        const cplx oracle(0.0, -integral / pi);
        const cplx v = noise_phi(t, beta, 0.0, Lambda);
        CHECK(std::abs(v - oracle) < 1e-4 * std::abs(oracle));
    }
}

TEST_CASE("fluctuation-dissipation relation inside the band") {
    const double beta = 1.0;
    const double Lambda = 100.0;
    const double T = 60.0;
    const int n = 400000;
    for (double w : {0.3, 1.0, 3.0, 12.0, 45.0}) {
        // int phi(t) e^{i w t} dt over the real line, using that phi is odd and imaginary
        const double ft = 2.0 * simpson([&](double t) { return -noise_phi(t, beta, 0.0, Lambda).imag() * std::sin(w * t); },
                                        0.0, T, n);
        CHECK(std::abs(ft - std::tanh(0.5 * beta * w)) < 1e-3);
    }
}

TEST_CASE("decoupled level keeps its occupation") {
    const RLParams p = constant_params(0.8, 0.0, 30.0, 1.0, 0.83);
    const Solution s = solve(p);
    for (std::size_t i = 0; i < s.trajectory.t.size(); ++i) {
        CHECK(s.trajectory.n[i] == doctest::Approx(0.83).epsilon(1e-14));
        CHECK(s.trajectory.u[i] == 0.0);
    }
    CHECK(s.W == 0.0);
}

TEST_CASE("long-time occupation matches the Lorentzian steady state") {
    for (double g : {0.2, 0.5}) {
        const double eps = 0.7;
        const RLParams p = constant_params(eps, g, 25.0 / (g * g), 1.0, 0.95);
        const Solution s = solve(p);
        const double oracle = lorentzian_occupation(eps, g, 1.0);
        CHECK(std::abs(s.n_final - oracle) < 1e-4);
        CHECK(std::abs(oracle - fermi(eps, 1.0)) < 0.1);
    }
    // weak coupling tends to the Fermi function
    CHECK(std::abs(lorentzian_occupation(0.7, 0.02, 1.0) - fermi(0.7, 1.0)) < 1e-3);
}

TEST_CASE("equilibrium interaction energy is negative") {
    const RLParams p = constant_params(0.6, 0.5, 80.0, 1.0, fermi(0.6, 1.0));
    const Solution s = solve(p);
    CHECK(s.u_final * 0.5 < 0.0);
}

TEST_CASE("Langevin solution against the discrete-bath oracle") {
    RLParams p;
    p.beta = 1.0;
    p.Lambda = 100.0;
    p.n0 = 0.2;
    p.eps = PiecewiseLinear({0.0, 6.0, 14.0}, {1.0, 1.0, 1.8});
    p.g = PiecewiseLinear({0.0, 4.0, 14.0}, {0.0, 0.6, 0.6});
    SolverOptions o;
    o.dt = 0.002;
    const Solution s = solve(p, o);
    const std::vector<double> times{4.0, 8.0, 12.0, 14.0};
    const oracle::DiscreteBathResult r = oracle::discrete_bath(p, times);
    for (std::size_t i = 0; i < r.t.size(); ++i) {
        CHECK(std::abs(sample_at(s.trajectory, s.trajectory.n, r.t[i]) - r.n[i]) < 1e-2);
        CHECK(std::abs(sample_at(s.trajectory, s.trajectory.u, r.t[i]) - r.u[i]) < 2e-2 * std::abs(r.u[i]));
    }
}

TEST_CASE("trajectory invariants") {
    RLParams p;
    p.beta = 2.0;
    p.Lambda = 200.0;
    p.n0 = 1.0;
    p.eps = PiecewiseLinear({0.0, 5.0, 10.0, 20.0}, {-1.0, 2.0, 0.5, 0.5});
    p.g = PiecewiseLinear({0.0, 3.0, 20.0}, {0.0, 0.9, 0.2});
    const Solution s = solve(p);
    double prev = 0.0;
    for (std::size_t i = 0; i < s.trajectory.t.size(); ++i) {
        CHECK(s.trajectory.n[i] >= -1e-8);
        CHECK(s.trajectory.n[i] <= 1.0 + 1e-8);
        CHECK(s.trajectory.logK[i].real() <= prev + 1e-14);
        prev = s.trajectory.logK[i].real();
    }
    CHECK(s.within_validity_window);
    p.Lambda = 40.0;
    CHECK_FALSE(p.within_validity_window());
}

TEST_CASE("solver preconditions") {
    RLParams p = constant_params(1.0, 0.3, 5.0);
    SolverOptions o;
    o.dt = 0.05;
    CHECK_THROWS_AS(solve(p, o), DomainError);
    p.n0 = 1.2;
    CHECK_THROWS_AS(solve(p), DomainError);
    CHECK_THROWS_AS(run_protocol_rl(constant_params(1.0, 0.3, 5.0)), DomainError);
}

TEST_CASE("run_protocol_rl") {
    const RLParams null = constant_params(1.0, 0.0, 10.0, 1.0, fermi(1.0, 1.0));
    const ProtocolOutcome z = run_protocol_rl(null);
    CHECK(z.W == 0.0);
    CHECK(std::abs(z.W_diss) < 1e-15);

    const double g0 = std::sqrt(0.1);
    const Bath bath{1.0, 0.0, 100.0};
    const ProtocolOutcome slow =
        run_protocol_rl(params_from_schedule(isotherm_schedule({1.0, 2.0, g0, 1.0, 25.0, 5000.0, SwitchOrder::quadratic}), bath));
    CHECK(slow.delta_F == doctest::Approx(free_energy_change(1.0, 2.0, 1.0)));
    CHECK(slow.W_diss >= 0.0);
    CHECK(slow.W_diss / std::abs(slow.delta_F) < 2e-2);
}

TEST_CASE("params_from_schedule builds matching paths") {
    const auto s = isotherm_schedule({1.0, 2.0, 0.3, 2.0, 3.0, 40.0, SwitchOrder::quadratic});
    CHECK(s.tau_on == doctest::Approx(12.0));
    CHECK(s.tau_iso == doctest::Approx(10.0));
    const RLParams p = params_from_schedule(s, Bath{1.0, 0.0, 100.0});
    CHECK(p.duration() == doctest::Approx(s.total_time()));
    for (double t : {0.0, 5.0, 12.0, 17.0, 25.0, 34.0}) {
        CHECK(p.g(t) == doctest::Approx(s.coupling(t)).epsilon(1e-12));
        CHECK(p.eps(t) == doctest::Approx(s.drive_value(t)).epsilon(1e-12));
    }
    CHECK(p.n0 == doctest::Approx(fermi(1.0, 1.0)));
}

TEST_CASE("decay_sweep validates its grid") {
    const Bath bath{1.0, 0.0, 100.0};
    CHECK_THROWS_AS(decay_sweep(bath, 1.0, 2.0, 0.3, 1.0, {10.0, 50.0}, SweepMode::baseline), DomainError);
    CHECK_THROWS_AS(decay_sweep(bath, 1.0, 2.0, 0.3, 1.0, {10.0}, SweepMode::baseline), DomainError);
}

TEST_CASE("decay_sweep baseline splits the total time") {
    const Bath bath{1.0, 0.0, 100.0};
    const DecaySweep s = decay_sweep(bath, 1.0, 2.0, 0.3, 4.0, {40.0, 100.0, 400.0}, SweepMode::optimal);
    REQUIRE(s.points.size() == 3);
    for (const DecayPoint& pt : s.points) {
        CHECK(pt.tau_on == doctest::Approx(0.25 * pt.tau_tot));
        CHECK(pt.tau_iso == doctest::Approx(0.5 * pt.tau_tot));
        CHECK(pt.k == doctest::Approx(std::sqrt(pt.tau_tot / 16.0)));
        CHECK(pt.W_diss > 0.0);
    }
    CHECK(s.points[0].W_diss > s.points[2].W_diss);
}

TEST_CASE("Carnot engine and refrigerator respect the Carnot bounds") {
    CycleConfig c;
    c.g0 = std::sqrt(0.1);
    c.k = 2.0;
    c.tau_on_weak = 1.5;
    c.tau_iso_weak = 500.0;
    const CycleResult e = carnot_cycle(c);
    CHECK(e.engine);
    CHECK(e.eta > 0.0);
    CHECK(e.eta < carnot_efficiency(c.beta_c, c.beta_h));
    CHECK(e.cycles <= c.max_cycles);
    CHECK(e.P == doctest::Approx((e.Q_h + e.Q_c) / (e.tau_h + e.tau_c)));
    double dE = 0.0;
    for (const StrokeResult& s : e.strokes) dE += s.W + s.Q;
    CHECK(std::abs(dE) < 0.01 * e.Q_h);

    const FridgeResult f = refrigerator_cycle(c);
    CHECK(f.refrigerator);
    CHECK(f.W_in > 0.0);
    CHECK(f.COP > 0.0);
    CHECK(f.COP < carnot_cop(c.beta_c, c.beta_h));

    // fast linear switching at k = 8 costs more work than the cycle extracts
    CycleConfig lossy = c;
    lossy.k = 8.0;
    lossy.scaling = SwitchOrder::linear;
    const CycleResult l = carnot_cycle(lossy);
    CHECK(l.Q_h > 0.0);
    CHECK(l.W_total > 0.0);
    CHECK_FALSE(l.engine);

    CycleConfig bad = c;
    bad.eps = {1.0, 0.6, 1.5, 3.0};
    CHECK_THROWS_AS(carnot_cycle(bad), DomainError);
    bad = c;
    bad.max_cycles = 1;
    bad.tolerance = 1e-9;
    CHECK_THROWS_AS(carnot_cycle(bad), NonConvergenceError);
}

TEST_CASE("timing-noise Monte Carlo") {
    const Bath bath{1.0 / 1.1, 0.0, 100.0};
    const auto s = isotherm_schedule({1.0, 2.0, 0.1, 2.0, 15.0, 150.0, SwitchOrder::quadratic});
    const NoiseResult quiet = noisy_protocol_mc(bath, s, 0.0, 4, 7);
    CHECK(quiet.variance == 0.0);
    CHECK(quiet.mean == doctest::Approx(quiet.noiseless).epsilon(1e-14));

    const NoiseResult a = noisy_protocol_mc(bath, s, 0.1, 12, 2024, {}, 1);
    const NoiseResult b = noisy_protocol_mc(bath, s, 0.1, 12, 2024, {}, 3);
    CHECK(a.W_diss == b.W_diss);
    CHECK(a.durations == b.durations);
    CHECK(a.mean == b.mean);
    CHECK(a.variance > 0.0);
    const NoiseResult c = noisy_protocol_mc(bath, s, 0.1, 12, 2025, {}, 1);
    CHECK(c.W_diss != a.W_diss);
    for (const auto& d : a.durations) {
        CHECK(std::abs(d[0] / s.tau_on - 1.0) <= std::sqrt(3.0) * 0.1 + 1e-12);
        CHECK(std::abs(d[1] / s.tau_iso - 1.0) <= std::sqrt(3.0) * 0.1 + 1e-12);
        CHECK(std::abs(d[2] / s.tau_off - 1.0) <= std::sqrt(3.0) * 0.1 + 1e-12);
    }
    CHECK_THROWS_AS(noisy_protocol_mc(bath, s, 0.3, 4, 7), DomainError);
}

TEST_CASE("cutoff convergence") {
    const Bath bath{1.0, 0.0, 100.0};
    const auto s = isotherm_schedule({1.0, 2.0, std::sqrt(0.1), 2.0, 25.0, 500.0, SwitchOrder::linear});
    const CutoffResult r = cutoff_convergence(bath, s, {100.0, 200.0, 400.0});
    CHECK(r.relative_spread < 1e-2);
    CHECK(std::abs(r.W[2] - r.W[1]) <= std::abs(r.W[1] - r.W[0]) + 1e-6);

    RLParams p = params_from_schedule(s, bath);
    const Solution s100 = solve(p);
    p.Lambda = 200.0;
    const Solution s200 = solve(p);
    CHECK(std::abs(s100.n_final - s200.n_final) < 1e-3);
    for (std::size_t i = 0; i < s100.trajectory.t.size(); i += 97) {
        CHECK(std::abs(s100.trajectory.n[i] - s200.trajectory.n[i]) < 1e-3);
    }
    CHECK_THROWS_AS(cutoff_convergence(bath, s, {200.0, 100.0}), DomainError);
}
