#include "isokit/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "isokit/errors.hpp"
#include "isokit/numerics.hpp"

namespace isokit::schedules {

CouplingRamp::CouplingRamp(double g_i_, double g_f_, double alpha_, double duration_)
    : g_i(g_i_), g_f(g_f_), alpha(alpha_), duration(duration_) {
    if (!(g_i >= 0.0) || !(g_f >= 0.0)) throw DomainError("CouplingRamp: couplings must be >= 0");
    if (!(alpha >= 1.0)) throw DomainError("CouplingRamp: alpha must be >= 1");
    if (!(duration > 0.0)) throw DomainError("CouplingRamp: duration must be > 0");
}

double coupling_at(const CouplingRamp& ramp, double s) {
    if (!(s >= 0.0 && s <= 1.0)) throw DomainError("coupling_at: s outside [0,1]");
    if (s == 1.0) return ramp.g_f;
    return ramp.g_i + (ramp.g_f - ramp.g_i) * std::pow(s, ramp.alpha);
}

double equilibration_time_at(double tau_eq0, double k, double alpha, double s) {
    if (!(k >= 1.0)) throw DomainError("equilibration_time_at: k must be >= 1");
    if (!(tau_eq0 > 0.0)) throw DomainError("equilibration_time_at: tau_eq0 must be > 0");
    if (!(s >= 0.0 && s <= 1.0)) throw DomainError("equilibration_time_at: s outside [0,1]");
    const double r = 1.0 + (k - 1.0) * std::pow(s, alpha);
    return tau_eq0 / (r * r);
}

double first_order_switch_factor(double alpha, double k) {
    if (!(alpha >= 1.0) || !(k >= 1.0)) {
        throw DomainError("switch factor requires alpha >= 1 and k >= 1");
    }
    if (k == 1.0) return 0.0;
    const double km1 = k - 1.0;
    auto integrand = [alpha, km1](double s) {
        const double sa = std::pow(s, alpha);
        const double den = 1.0 + km1 * sa;
        return alpha * alpha * km1 * km1 * std::pow(s, 2.0 * (alpha - 1.0)) / (den * den);
    };
    return numerics::adaptive_quad(integrand, 0.0, 1.0, 1e-10);
}

StageTimes allocate_times(double k, double alpha, double tau_on_weak, double tau_iso_weak,
                          SwitchOrder order) {
    if (!(k >= 1.0)) throw DomainError("allocate_times: k must be >= 1");
    if (!(alpha >= 1.0)) throw DomainError("allocate_times: alpha must be >= 1");
    if (!(tau_on_weak > 0.0) || !(tau_iso_weak > 0.0)) {
        throw DomainError("allocate_times: weak-coupling times must be > 0");
    }
    StageTimes t;
    t.tau_iso = tau_iso_weak / (k * k);
    if (k == 1.0) {
        t.tau_on = tau_on_weak;
    } else {
        const double b = alpha * alpha / (2.0 * alpha - 1.0);
        double factor = 0.0;
        switch (order) {
            case SwitchOrder::first: factor = first_order_switch_factor(alpha, k); break;
            case SwitchOrder::second: factor = (k - 1.0) * (k - 1.0) * b; break;
            case SwitchOrder::linear: factor = k; break;
            case SwitchOrder::quadratic: factor = b * k * k; break;
        }
        t.tau_on = factor * tau_on_weak;
    }
    t.tau_tot = 2.0 * t.tau_on + t.tau_iso;
    return t;
}

PiecewiseLinear::PiecewiseLinear(std::vector<double> xs, std::vector<double> ys)
    : xs_(std::move(xs)), ys_(std::move(ys)) {
    if (xs_.size() != ys_.size() || xs_.size() < 2) {
        throw DomainError("PiecewiseLinear: need >= 2 matching samples");
    }
    for (std::size_t i = 1; i < xs_.size(); ++i) {
        if (!(xs_[i] > xs_[i - 1])) throw DomainError("PiecewiseLinear: x must increase strictly");
    }
}

PiecewiseLinear PiecewiseLinear::constant(double value, double x0, double x1) {
    return PiecewiseLinear({x0, x1}, {value, value});
}

PiecewiseLinear PiecewiseLinear::linear(double y0, double y1, double x0, double x1) {
    return PiecewiseLinear({x0, x1}, {y0, y1});
}

std::size_t PiecewiseLinear::segment(double x) const {
    if (x <= xs_.front()) return 0;
    if (x >= xs_.back()) return xs_.size() - 2;
    auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    return static_cast<std::size_t>(it - xs_.begin()) - 1;
}

double PiecewiseLinear::operator()(double x) const {
    if (x <= xs_.front()) return ys_.front();
    if (x >= xs_.back()) return ys_.back();
    const std::size_t j = segment(x);
    const double w = (x - xs_[j]) / (xs_[j + 1] - xs_[j]);
    return ys_[j] + w * (ys_[j + 1] - ys_[j]);
}

double PiecewiseLinear::slope(double x) const {
    const std::size_t j = segment(x);
    return (ys_[j + 1] - ys_[j]) / (xs_[j + 1] - xs_[j]);
}

ProtocolSchedule ProtocolSchedule::make(double g_i, double g0, double k, double alpha,
                                        double tau_on, double tau_iso, PiecewiseLinear drive) {
    if (!(k >= 1.0)) throw DomainError("ProtocolSchedule: k must be >= 1");
    if (!(tau_iso >= 0.0)) throw DomainError("ProtocolSchedule: tau_iso must be >= 0");
    if (drive.front_x() != 0.0 || drive.back_x() != 1.0) {
        throw DomainError("ProtocolSchedule: drive must be sampled over s in [0,1]");
    }
    ProtocolSchedule p;
    p.ramp_on = CouplingRamp(g_i, k * g0, alpha, tau_on);
    p.ramp_off = p.ramp_on.reversed();
    p.tau_on = tau_on;
    p.tau_iso = tau_iso;
    p.tau_off = tau_on;
    p.k = k;
    p.g0 = g0;
    p.drive = std::move(drive);
    return p;
}

ProtocolSchedule ProtocolSchedule::with_durations(double on, double iso, double off) const {
    if (!(on > 0.0) || !(off > 0.0) || !(iso >= 0.0)) {
        throw DomainError("ProtocolSchedule: stage durations must be positive");
    }
    ProtocolSchedule p = *this;
    p.tau_on = on;
    p.tau_iso = iso;
    p.tau_off = off;
    p.ramp_on = CouplingRamp(ramp_on.g_i, ramp_on.g_f, ramp_on.alpha, on);
    p.ramp_off = CouplingRamp(ramp_off.g_i, ramp_off.g_f, ramp_off.alpha, off);
    return p;
}

Stage ProtocolSchedule::stage_at(double t) const {
    if (t < tau_on) return Stage::on;
    if (t < tau_on + tau_iso) return Stage::iso;
    return Stage::off;
}

double ProtocolSchedule::coupling(double t) const {
    if (t <= 0.0) return ramp_on.g_i;
    if (t >= total_time()) return ramp_off.g_f;
    switch (stage_at(t)) {
        case Stage::on: return coupling_at(ramp_on, t / tau_on);
        case Stage::iso: return ramp_on.g_f;
        case Stage::off: {
            // Time reverse of the switch-on ramp.
            const double s = std::clamp((total_time() - t) / tau_off, 0.0, 1.0);
            return coupling_at(ramp_on, s);
        }
    }
    return 0.0;
}

double ProtocolSchedule::drive_value(double t) const {
    if (t <= tau_on) return drive.front();
    if (t >= tau_on + tau_iso) return drive.back();
    return drive((t - tau_on) / tau_iso);
}

std::vector<double> ProtocolSchedule::boundaries() const {
    return {0.0, tau_on, tau_on + tau_iso, total_time()};
}

}  // namespace isokit::schedules
