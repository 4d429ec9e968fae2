#pragma once

#include "isokit/analytics.hpp"

namespace isokit::machines {

// All quantities use T_h = 1 and T_c = theta.
struct CycleSpec {
    double theta{0.5};
    double delta_S{1.0};
    analytics::DecayLaw law;
    double R{2.0};

    void validate() const;
};

struct Heats {
    double Q_c{0.0};
    double Q_h{0.0};
};

struct PowerEfficiency {
    double P{0.0};
    double eta{0.0};
};

struct StrokeTimes {
    double tau_c{0.0};
    double tau_h{0.0};
};

Heats isotherm_heats(const CycleSpec& spec, double tau_c, double tau_h);

// Throws DomainError (not an engine) when Q_h <= 0.
PowerEfficiency engine_power_efficiency(const CycleSpec& spec, double tau_c, double tau_h);

StrokeTimes engine_optimal_times(const CycleSpec& spec);

double emp(double gamma, double theta);

double carnot_efficiency(double theta);
double curzon_ahlborn_efficiency(double theta);

// Refrigerator convention: delta_S < 0 is the entropy change of the cold stroke.
double cooling_power(const CycleSpec& spec, double tau_c, double tau_h);
double fridge_cop(const CycleSpec& spec, double tau_c, double tau_h);
StrokeTimes fridge_optimal_times(const CycleSpec& spec);

double cop_at_max_cooling(double gamma, double theta, double R);
double carnot_cop(double theta);

}  // namespace isokit::machines
