#include "isokit/machines.hpp"

#include <cmath>

#include "isokit/errors.hpp"

namespace isokit::machines {

namespace {

constexpr double gamma_limit = 1e6;

void check_theta(double theta) {
    if (!(theta > 0.0 && theta < 1.0)) throw DomainError("theta must lie in (0,1)");
}

void check_gamma(double gamma) {
    if (!(gamma >= 1.0)) throw DomainError("gamma must be >= 1");
}

}  // namespace

void CycleSpec::validate() const {
    check_theta(theta);
    check_gamma(law.gamma);
    if (!(law.Sigma_gamma > 0.0)) throw DomainError("CycleSpec: Sigma_gamma must be > 0");
}

Heats isotherm_heats(const CycleSpec& spec, double tau_c, double tau_h) {
    spec.validate();
    if (!(tau_c > 0.0) || !(tau_h > 0.0)) throw DomainError("isotherm_heats: times must be > 0");
    const double g = spec.law.gamma;
    const double s = spec.law.Sigma_gamma;
    Heats h;
    h.Q_c = spec.theta * (-spec.delta_S - s / std::pow(tau_c, g));
    h.Q_h = spec.delta_S - s / std::pow(tau_h, g);
    return h;
}

PowerEfficiency engine_power_efficiency(const CycleSpec& spec, double tau_c, double tau_h) {
    const Heats h = isotherm_heats(spec, tau_c, tau_h);
    if (!(h.Q_h > 0.0)) throw DomainError("engine_power_efficiency: Q_h <= 0, not an engine");
    return {(h.Q_h + h.Q_c) / (tau_h + tau_c), 1.0 + h.Q_c / h.Q_h};
}

StrokeTimes engine_optimal_times(const CycleSpec& spec) {
    spec.validate();
    if (!(spec.delta_S > 0.0)) throw DomainError("engine_optimal_times: delta_S must be > 0");
    const double g = spec.law.gamma;
    const double th = spec.theta;
    const double r = std::pow(th, 1.0 / (g + 1.0));
    const double inner = spec.law.Sigma_gamma * (g + 1.0) * th *
                         std::pow(1.0 / r + 1.0, g + 1.0) / (spec.delta_S * (1.0 - th));
    StrokeTimes t;
    t.tau_c = r / (r + 1.0) * std::pow(inner, 1.0 / g);
    t.tau_h = t.tau_c / r;
    return t;
}

double emp(double gamma, double theta) {
    check_gamma(gamma);
    check_theta(theta);
    if (gamma > gamma_limit) return 1.0 - theta;
    const double g = gamma;
    const double r = std::pow(theta, 1.0 / (g + 1.0));
    const double num = (g + 1.0) * std::pow(theta, g / (g + 1.0)) + g * theta + 1.0;
    const double den = (g + 1.0) * r + g + theta;
    return 1.0 - r * num / den;
}

double carnot_efficiency(double theta) {
    check_theta(theta);
    return 1.0 - theta;
}

double curzon_ahlborn_efficiency(double theta) {
    check_theta(theta);
    return 1.0 - std::sqrt(theta);
}

double cooling_power(const CycleSpec& spec, double tau_c, double tau_h) {
    const Heats h = isotherm_heats(spec, tau_c, tau_h);
    return h.Q_c / (tau_c + tau_h);
}

double fridge_cop(const CycleSpec& spec, double tau_c, double tau_h) {
    const Heats h = isotherm_heats(spec, tau_c, tau_h);
    const double w_in = -(h.Q_c + h.Q_h);
    if (!(w_in > 0.0)) throw DomainError("fridge_cop: no work input, not a refrigerator");
    return h.Q_c / w_in;
}

StrokeTimes fridge_optimal_times(const CycleSpec& spec) {
    spec.validate();
    if (!(spec.R > 1.0)) throw DomainError("fridge_optimal_times: R must exceed 1");
    if (!(spec.delta_S < 0.0)) throw DomainError("fridge_optimal_times: delta_S must be < 0");
    const double g = spec.law.gamma;
    StrokeTimes t;
    t.tau_c = std::pow((g + 1.0) * spec.law.Sigma_gamma / (-spec.delta_S), 1.0 / g);
    t.tau_h = spec.R * t.tau_c;
    return t;
}

double cop_at_max_cooling(double gamma, double theta, double R) {
    check_gamma(gamma);
    check_theta(theta);
    if (!(R > 1.0)) throw DomainError("cop_at_max_cooling: R must exceed 1");
    if (gamma > gamma_limit) return carnot_cop(theta);
    return 1.0 / ((1.0 + gamma + std::pow(R, -gamma)) / (gamma * theta) - 1.0);
}

double carnot_cop(double theta) {
    check_theta(theta);
    return 1.0 / (1.0 / theta - 1.0);
}

}  // namespace isokit::machines
