#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "isokit/schedules.hpp"

namespace isokit::resonant {

using cplx = std::complex<double>;
using schedules::SwitchOrder;

// Resonant-level model: one fermionic level with energy eps(t) coupled with strength
// g(t) to a wide-band bath of half-width Lambda at inverse temperature beta.
struct RLParams {
    double beta{1.0};
    double mu{0.0};
    double Lambda{100.0};
    schedules::PiecewiseLinear eps;  // eps(t) over [0, T]
    schedules::PiecewiseLinear g;    // g(t) >= 0 over [0, T]
    double n0{0.5};

    void validate() const;
    double duration() const { return eps.back_x(); }
    // Lambda >= 50 max(|eps|, g^2, 1/beta, |mu|) along the whole path.
    bool within_validity_window() const;
};

// Bath settings shared by every run of an experiment.
struct Bath {
    double beta{1.0};
    double mu{0.0};
    double Lambda{100.0};
};

double fermi(double omega, double beta, double mu = 0.0);
// Free-energy change of the bare level between eps_i and eps_f.
double free_energy_change(double eps_i, double eps_f, double beta, double mu = 0.0);

// log K(t, t') = int_{t'}^{t} (-i eps - g^2/2) ds, exact for piecewise-linear eps and g.
cplx propagator_log(double t, double t_prime, const RLParams& params);

// phi(t) = (1/(i beta)) [e^{-i mu t}/sinh(pi t/beta) - cos(Lambda t)/(pi t/beta)].
cplx noise_phi(double t, double beta, double mu, double Lambda);
cplx noise_phi(double t, const RLParams& params);

struct SolverOptions {
    double dt{0.0};                  // 0 selects 0.01 / max(|eps|, g^2, 1/beta, |mu|)
    std::size_t max_samples{20001};  // recorded points, uniform stride over the grid
};

struct RLTrajectory {
    std::vector<double> t;
    std::vector<double> n;
    std::vector<double> u;  // v / g
    std::vector<cplx> logK;  // log K(t, 0)
    std::vector<double> W;
};

struct Solution {
    RLTrajectory trajectory;
    double n_final{0.0};
    double u_final{0.0};
    double W{0.0};
    double dt{0.0};
    std::size_t steps{0};
    bool within_validity_window{true};
};

// Integrates the level occupation n(t), the scaled interaction energy u(t) and the work
// W = int (eps' n + g' u) dt from a factorized initial state.
Solution solve(const RLParams& params, const SolverOptions& options = {});

// Time paths of an isothermal schedule (g_i = 0 at both ends for RL protocols).
RLParams params_from_schedule(const schedules::ProtocolSchedule& schedule, const Bath& bath,
                              std::optional<double> n0 = std::nullopt);

struct ProtocolOutcome {
    double W{0.0};
    double delta_F{0.0};
    double W_diss{0.0};
    Solution solution;
};

// Requires g = 0 at both ends. The initial occupation defaults to equilibrium.
ProtocolOutcome run_protocol_rl(const RLParams& params, const SolverOptions& options = {});

// Isotherm eps_i -> eps_f with the coupling ramped 0 -> k g0 -> 0 (alpha = 1).
struct IsothermSpec {
    double eps_i{1.0};
    double eps_f{2.0};
    double g0{0.0};
    double k{1.0};
    double tau_on_weak{1.0};
    double tau_iso_weak{1.0};
    SwitchOrder scaling{SwitchOrder::quadratic};
};

schedules::ProtocolSchedule isotherm_schedule(const IsothermSpec& spec);

enum class SweepMode { optimal, baseline };

struct DecayPoint {
    double tau_tot{0.0};
    double k{1.0};
    double tau_on{0.0};
    double tau_iso{0.0};
    double W_diss{0.0};
};

struct DecaySweep {
    std::vector<DecayPoint> points;
    double nu{0.0};  // W_diss ~ tau_tot^-nu
    double r_squared{0.0};
    bool unreliable{false};
};

// Both modes split the total time as tau_on = tau_off = tau_tot/4 and tau_iso = tau_tot/2.
// optimal: peak coupling k g0 with k^2 = tau_tot/(4 tau_on_weak), the minimizer of
// 2 k^2 tau_on_weak + tau_iso_weak/k^2 at fixed tau_tot (k may fall below 1).
// baseline: peak coupling g0 throughout.
DecaySweep decay_sweep(const Bath& bath, double eps_i, double eps_f, double g0,
                       double tau_on_weak, const std::vector<double>& tau_tot, SweepMode mode,
                       const SolverOptions& options = {}, int threads = 1);

struct CycleConfig {
    std::array<double, 4> eps{1.0, 0.5, 1.5, 3.0};
    double beta_c{1.0 / 1.1};
    double beta_h{1.0 / 2.2};
    double g0{0.0};
    double k{1.0};
    double tau_on_weak{1.0};
    double tau_iso_weak{1.0};
    SwitchOrder scaling{SwitchOrder::quadratic};
    double Lambda{100.0};
    int max_cycles{50};
    double tolerance{0.01};
    SolverOptions solver;

    void validate() const;
};

struct StrokeResult {
    double W{0.0};
    double Q{0.0};
    double duration{0.0};
    double n_start{0.0};
    double n_end{0.0};
};

struct CycleResult {
    double eta{0.0};
    double P{0.0};
    double Q_h{0.0};
    double Q_c{0.0};
    double W_total{0.0};  // work done on the level over one cycle
    double tau_c{0.0};
    double tau_h{0.0};
    int cycles{0};
    bool engine{true};  // Q_h > 0 and net work output
    std::array<StrokeResult, 4> strokes;
};

// Engine: adiabat eps1->eps2, cold isotherm eps2->eps3, adiabat eps3->eps4, hot isotherm eps4->eps1.
CycleResult carnot_cycle(const CycleConfig& config);

struct FridgeResult {
    double COP{0.0};
    double cooling_power{0.0};
    double Q_c{0.0};
    double Q_h{0.0};
    double W_in{0.0};
    double tau_c{0.0};
    double tau_h{0.0};
    int cycles{0};
    bool refrigerator{true};
    std::array<StrokeResult, 4> strokes;
};

// Reverse order: hot isotherm eps1->eps4, adiabat eps4->eps3, cold isotherm eps3->eps2, adiabat eps2->eps1.
FridgeResult refrigerator_cycle(const CycleConfig& config);

double carnot_efficiency(double beta_c, double beta_h);
double carnot_cop(double beta_c, double beta_h);

struct NoiseResult {
    double mean{0.0};
    double variance{0.0};  // sample variance (n - 1)
    double stddev{0.0};
    double noiseless{0.0};
    std::vector<double> W_diss;
    std::vector<std::array<double, 3>> durations;
    int rejected{0};
};

// Each stage duration is perturbed by a uniform error with standard deviation sigma * tau.
// Realization i draws from the counter stream of sub-seed seed ^ i.
NoiseResult noisy_protocol_mc(const Bath& bath, const schedules::ProtocolSchedule& schedule,
                              double sigma, int realizations, std::uint64_t seed,
                              const SolverOptions& options = {}, int threads = 1);

struct CutoffResult {
    std::vector<double> Lambda;
    std::vector<double> W;
    std::vector<double> W_diss;
    double relative_spread{0.0};  // |W(last) - W(previous)| / |W(last)|
};

CutoffResult cutoff_convergence(const Bath& bath, const schedules::ProtocolSchedule& schedule,
                                const std::vector<double>& Lambdas,
                                const SolverOptions& options = {}, int threads = 1);

}  // namespace isokit::resonant
