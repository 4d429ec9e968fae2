#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "isokit/numerics.hpp"
#include "isokit/schedules.hpp"

namespace isokit::gaussian {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Caldeira-Leggett bath discretisation. The bath grid is fixed by the reference
// system frequency omega_S; driving omega_S later does not move the bath.
struct CLParams {
    int N{300};
    double omega_S{1.0};
    double beta{1.2};
    VectorXd omega;       // bath mode frequencies omega_n, n = 1..N
    VectorXd gamma_unit;  // gamma_n / g

    static CLParams make(int N, double omega_S, double beta);

    double omega_min() const { return omega_S / N; }
    double omega_max() const { return 2.0 * omega_S; }
    double recurrence_time() const;
    // sum_n gamma_n^2 / omega_n^2 at unit coupling
    double renormalization_unit() const;
    double default_dt() const;
};

// H = 1/2 r^T M r over (x, x_1..x_N, p, p_1..p_N).
struct QuadraticForm {
    MatrixXd M;

    int modes() const { return static_cast<int>(M.rows() / 2); }
    MatrixXd x_block() const { return M.topLeftCorner(modes(), modes()); }
    MatrixXd p_block() const { return M.bottomRightCorner(modes(), modes()); }
};

struct GaussianState {
    MatrixXd cov;

    int modes() const { return static_cast<int>(cov.rows() / 2); }
};

MatrixXd symplectic_form(int modes);

QuadraticForm build_quadratic_form(const CLParams& params, double omega_S_value, double g_value);
// Interaction term x * sum_n gamma_n x_n at coupling g (no renormalisation).
QuadraticForm interaction_form(const CLParams& params, double g_value);
// System term (omega_S^2 x^2 + p^2)/2 embedded in the full phase space.
QuadraticForm system_form(const CLParams& params, double omega_S_value);

// Forms with zero xp-blocks and positive definite x- and p-blocks.
GaussianState thermal_state(const QuadraticForm& form, double beta);
double log_partition(const QuadraticForm& form, double beta);
// Normal-mode frequencies of a form with zero xp-blocks.
VectorXd normal_mode_frequencies(const QuadraticForm& form);

VectorXd symplectic_eigenvalues(const GaussianState& state);
double vn_entropy(const GaussianState& state);
double relative_entropy(const GaussianState& rho, const GaussianState& sigma);
GaussianState reduce_to_system(const GaussianState& state);
double expectation(const GaussianState& state, const QuadraticForm& form);

// Product of single-mode thermal states: system at omega_S_value, bath at omega_n.
GaussianState product_thermal_state(const CLParams& params, double omega_S_value);

enum class CovTarget { V, H_S };

struct KMCovariance {
    double value{0.0};
    bool precision_warning{false};
};

KMCovariance km_covariance(const CLParams& params, CovTarget target, double g_value,
                           double omega_S_value, double h = 1e-4);

// Drive and coupling for the CL model: the schedule's drive is omega_S(s).
struct Trajectory {
    std::vector<double> t;
    std::vector<double> work;           // accumulated per-step work
    std::vector<GaussianState> states;  // only when recording is requested
    double max_symplectic_defect{0.0};
    std::optional<GaussianState> final_state;
};

struct EvolveOptions {
    double dt{0.0};           // 0 selects params.default_dt()
    int record_every{0};      // 0 keeps no intermediate states
    int defect_check_every{200};
};

Trajectory evolve(const CLParams& params, const GaussianState& initial,
                  const schedules::ProtocolSchedule& schedule, const EvolveOptions& options);

struct ProtocolResult {
    double W{0.0};                // sum over steps of Tr(sigma dM)/2 with midpoint weighting
    double W_energy_balance{0.0};  // <H(T)> - <H(0)>
    double delta_F{0.0};
    double W_diss{0.0};
    Trajectory trajectory;
};

ProtocolResult run_protocol(const CLParams& params, const schedules::ProtocolSchedule& schedule,
                            const EvolveOptions& options);

// Exact propagator for a time-independent quadratic Hamiltonian with zero xp-blocks
// and p-block identity, built from the normal modes of the x-block.
class QuenchPropagator {
public:
    explicit QuenchPropagator(const QuadraticForm& form);

    // Full covariance at time t.
    GaussianState propagate(const GaussianState& initial, double t) const;

    struct SystemMoments {
        double xx{0.0};
        double xp{0.0};
        double pp{0.0};
        double x_with_bath{0.0};  // <x * sum_n c_n x_n> for the weights passed in
    };

    void prepare(const GaussianState& initial, const VectorXd& bath_weights);
    SystemMoments moments(double t) const;

private:
    MatrixXd O_;
    VectorXd nu_;
    int n_{0};
    // initial covariance blocks in the normal-mode basis
    MatrixXd xm_, pm_, cm_;
    VectorXd sys_row_, bath_row_;
};

struct DecayFit {
    double tau{0.0};
    double r_squared{0.0};
    bool unreliable{false};
    double t_start{0.0};
    double t_end{0.0};
    int points{0};
};

struct ThermalizationResult {
    double k{1.0};
    std::vector<double> t;
    std::vector<double> rel_entropy;
    std::vector<double> delta_V;
    std::vector<double> delta_V_avg;
    DecayFit fit_S;
    DecayFit fit_V;
};

struct ThermalizationOptions {
    double horizon{0.0};        // 0 selects the recurrence guard
    double sample_dt{0.1};
    double window{0.0};         // moving-average window in time, 0 selects 2 pi / omega_S
    double transient{0.0};      // 0 selects 2 / omega_S
    double floor_ratio{1e-6};
};

// Quench from the uncoupled product thermal state to g = k g0 at fixed omega_S.
ThermalizationResult thermalization_experiment(const CLParams& params, double g0, double k,
                                               const ThermalizationOptions& options);

// Exponential decay time from a signal: fit ln|s| over the window described in the module docs.
DecayFit fit_exponential_decay(const std::vector<double>& t, const std::vector<double>& s,
                               double t_start, double t_stop, double floor_ratio);

}  // namespace isokit::gaussian
