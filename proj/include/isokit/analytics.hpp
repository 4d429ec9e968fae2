#pragma once

#include "isokit/schedules.hpp"

namespace isokit::analytics {

using schedules::SwitchOrder;

struct AlphaConstants {
    double alpha{1.0};
    double D_alpha{1.0};
    double B_alpha{1.0};
    double C_alpha{3.0};
    // alpha == 1: D is the removable-singularity limit and the large-k first-order
    // form k^(1/alpha) D does not apply (the exact factor is (k-1)^2/k instead).
    bool linear_limit{true};

    static AlphaConstants of(double alpha);
};

struct DissipationContext {
    double beta{1.0};
    double g0{0.0};
    double tau_eq0{0.0};
    double c_V0{0.0};
    double c_V2{0.0};
    double v_norm_sq{0.0};
    double Sigma{0.0};

    void validate() const;
};

struct DecayLaw {
    double gamma{1.0};
    double Sigma_gamma{1.0};

    DecayLaw() = default;
    DecayLaw(double gamma, double Sigma_gamma);
    double dissipation(double tau) const;
};

enum class CostMethod { exact, large_k };

double switch_cost_factor(double alpha, double k, SwitchOrder order, CostMethod method);

double switch_dissipation(const DissipationContext& ctx, double alpha, double k, double tau_on,
                          SwitchOrder order);

double switch_dissipation_bound(const DissipationContext& ctx, double alpha, double k,
                                double tau_on);

double total_time(double alpha, double k, double tau_on_weak, double tau_iso_weak,
                  SwitchOrder order, CostMethod method);

double optimal_k(double alpha, double tau_on_weak, double tau_iso_weak, SwitchOrder order);

double min_total_time(double alpha, double tau_on_weak, double tau_iso_weak, SwitchOrder order);

double dissipation_decay(const DissipationContext& ctx, double alpha, double tau_tot,
                         double tau_on_weak, SwitchOrder order);

DecayLaw decay_law(const DissipationContext& ctx, double alpha, double tau_on_weak,
                   SwitchOrder order);

struct AlphaOptimum {
    double alpha{1.0};
    double dissipation{0.0};
    bool at_boundary{false};
};

AlphaOptimum optimal_alpha(const DissipationContext& ctx, double tau_tot, double tau_on_weak,
                           double alpha_max = 12.0);

}  // namespace isokit::analytics
