#pragma once

#include <vector>

namespace isokit::schedules {

struct CouplingRamp {
    double g_i{0.0};
    double g_f{0.0};
    double alpha{1.0};
    double duration{1.0};

    CouplingRamp() = default;
    CouplingRamp(double g_i, double g_f, double alpha, double duration);

    // Same ramp traversed backwards in time (g_f -> g_i).
    CouplingRamp reversed() const { return CouplingRamp(g_f, g_i, alpha, duration); }
};

double coupling_at(const CouplingRamp& ramp, double s);

double equilibration_time_at(double tau_eq0, double k, double alpha, double s);

// first: exact F1 integral; second: (k-1)^2 a^2/(2a-1); linear: k;
// quadratic: a^2/(2a-1) k^2, which is k^2 for linear ramps.
enum class SwitchOrder { first, second, linear, quadratic };

// F1(alpha, k) = int_0^1 a^2 (k-1)^2 s^(2a-2) / (1 + (k-1) s^a)^2 ds, by adaptive quadrature.
double first_order_switch_factor(double alpha, double k);

struct StageTimes {
    double tau_on{0.0};
    double tau_iso{0.0};
    double tau_tot{0.0};
};

StageTimes allocate_times(double k, double alpha, double tau_on_weak, double tau_iso_weak,
                          SwitchOrder order);

// Piecewise-linear path through (x_j, y_j) with strictly increasing x.
class PiecewiseLinear {
public:
    PiecewiseLinear() = default;
    PiecewiseLinear(std::vector<double> xs, std::vector<double> ys);

    static PiecewiseLinear constant(double value, double x0, double x1);
    static PiecewiseLinear linear(double y0, double y1, double x0, double x1);

    double operator()(double x) const;
    double slope(double x) const;
    double front_x() const { return xs_.front(); }
    double back_x() const { return xs_.back(); }
    double front() const { return ys_.front(); }
    double back() const { return ys_.back(); }
    const std::vector<double>& xs() const { return xs_; }
    const std::vector<double>& ys() const { return ys_; }

    // Index j of the segment [x_j, x_{j+1}] holding x (clamped to the domain).
    std::size_t segment(double x) const;

private:
    std::vector<double> xs_;
    std::vector<double> ys_;
};

enum class Stage { on, iso, off };

// Three-stage protocol: ramp the coupling up with the drive held at its initial
// value, move the drive along its path at constant coupling, then ramp back down.
struct ProtocolSchedule {
    CouplingRamp ramp_on;
    CouplingRamp ramp_off;
    double tau_on{0.0};
    double tau_iso{0.0};
    double tau_off{0.0};
    double k{1.0};
    double g0{0.0};
    // Drive lambda(s) over the isotherm, s in [0, 1].
    PiecewiseLinear drive;

    static ProtocolSchedule make(double g_i, double g0, double k, double alpha, double tau_on,
                                 double tau_iso, PiecewiseLinear drive);

    // Copy with independently chosen stage durations (timing noise breaks tau_off = tau_on).
    ProtocolSchedule with_durations(double on, double iso, double off) const;

    double total_time() const { return tau_on + tau_iso + tau_off; }
    Stage stage_at(double t) const;
    double coupling(double t) const;
    double drive_value(double t) const;
    // Stage boundaries 0, tau_on, tau_on + tau_iso, total.
    std::vector<double> boundaries() const;
};

}  // namespace isokit::schedules
