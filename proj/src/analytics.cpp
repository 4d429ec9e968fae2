#include "isokit/analytics.hpp"

#include <cmath>
#include <numbers>

#include "isokit/errors.hpp"
#include "isokit/numerics.hpp"

namespace isokit::analytics {

AlphaConstants AlphaConstants::of(double alpha) {
    if (!(alpha >= 1.0)) throw DomainError("AlphaConstants: alpha must be >= 1");
    AlphaConstants c;
    c.alpha = alpha;
    c.linear_limit = (alpha == 1.0);
    // pi (a-1) / sin(pi/a) -> 1 as a -> 1; use the series near the removable point.
    const double d = alpha - 1.0;
    if (std::abs(d) < 1e-6) {
        c.D_alpha = 1.0 + d;
    } else {
        c.D_alpha = std::numbers::pi * d / std::sin(std::numbers::pi / alpha);
    }
    c.B_alpha = alpha * alpha / (2.0 * alpha - 1.0);
    c.C_alpha = (2.0 * alpha + 1.0) *
                std::pow(c.D_alpha / alpha, 2.0 * alpha / (2.0 * alpha + 1.0));
    return c;
}

void DissipationContext::validate() const {
    if (!(beta > 0.0)) throw DomainError("DissipationContext: beta must be > 0");
    if (g0 < 0.0 || tau_eq0 < 0.0 || c_V0 < 0.0 || c_V2 < 0.0 || v_norm_sq < 0.0 || Sigma < 0.0) {
        throw DomainError("DissipationContext: entries must be nonnegative");
    }
}

DecayLaw::DecayLaw(double gamma_, double Sigma_gamma_) : gamma(gamma_), Sigma_gamma(Sigma_gamma_) {
    if (!(gamma >= 1.0)) throw DomainError("DecayLaw: gamma must be >= 1");
    if (!(Sigma_gamma > 0.0)) throw DomainError("DecayLaw: Sigma_gamma must be > 0");
}

double DecayLaw::dissipation(double tau) const {
    if (!(tau > 0.0)) throw DomainError("DecayLaw: tau must be > 0");
    return Sigma_gamma / std::pow(tau, gamma);
}

double switch_cost_factor(double alpha, double k, SwitchOrder order, CostMethod method) {
    if (!(alpha >= 1.0) || !(k >= 1.0)) {
        throw DomainError("switch_cost_factor: requires alpha >= 1 and k >= 1");
    }
    if (k == 1.0) return 0.0;
    const AlphaConstants c = AlphaConstants::of(alpha);
    switch (order) {
        case SwitchOrder::first:
            if (method == CostMethod::exact) return schedules::first_order_switch_factor(alpha, k);
            if (c.linear_limit) return (k - 1.0) * (k - 1.0) / k;
            return c.D_alpha * std::pow(k, 1.0 / alpha);
        case SwitchOrder::second:
            if (method == CostMethod::exact) return (k - 1.0) * (k - 1.0) * c.B_alpha;
            return c.B_alpha * k * k;
        case SwitchOrder::linear: return k;
        case SwitchOrder::quadratic: return c.B_alpha * k * k;
    }
    return 0.0;
}

double switch_dissipation(const DissipationContext& ctx, double alpha, double k, double tau_on,
                          SwitchOrder order) {
    ctx.validate();
    if (!(tau_on > 0.0)) throw DomainError("switch_dissipation: tau_on must be > 0");
    if (order == SwitchOrder::second) {
        const double g4 = ctx.g0 * ctx.g0 * ctx.g0 * ctx.g0;
        return ctx.beta * g4 * ctx.tau_eq0 * ctx.c_V2 *
               switch_cost_factor(alpha, k, SwitchOrder::second, CostMethod::exact) / tau_on;
    }
    if (order != SwitchOrder::first) {
        throw DomainError("switch_dissipation: order must be first or second");
    }
    return ctx.beta * ctx.g0 * ctx.g0 * ctx.tau_eq0 * ctx.c_V0 *
           switch_cost_factor(alpha, k, SwitchOrder::first, CostMethod::exact) / tau_on;
}

double switch_dissipation_bound(const DissipationContext& ctx, double alpha, double k,
                                double tau_on) {
    ctx.validate();
    if (!std::isfinite(ctx.v_norm_sq)) throw DomainError("switch_dissipation_bound: infinite norm");
    if (!(tau_on > 0.0)) throw DomainError("switch_dissipation_bound: tau_on must be > 0");
    return ctx.beta * ctx.g0 * ctx.g0 * ctx.tau_eq0 * 2.0 * ctx.v_norm_sq *
           switch_cost_factor(alpha, k, SwitchOrder::first, CostMethod::exact) / tau_on;
}

double total_time(double alpha, double k, double tau_on_weak, double tau_iso_weak,
                  SwitchOrder order, CostMethod method) {
    if (method == CostMethod::exact && (order == SwitchOrder::first || order == SwitchOrder::second)) {
        return schedules::allocate_times(k, alpha, tau_on_weak, tau_iso_weak, order).tau_tot;
    }
    if (!(tau_on_weak > 0.0) || !(tau_iso_weak > 0.0)) {
        throw DomainError("total_time: weak-coupling times must be > 0");
    }
    if (k == 1.0) return 2.0 * tau_on_weak + tau_iso_weak;
    return 2.0 * switch_cost_factor(alpha, k, order, method) * tau_on_weak + tau_iso_weak / (k * k);
}

namespace {

void check_optimum_domain(double alpha, double tau_on_weak, double tau_iso_weak,
                          SwitchOrder order) {
    if (!(tau_on_weak > 0.0) || !(tau_iso_weak > 0.0)) {
        throw DomainError("optimal_k: weak-coupling times must be > 0");
    }
    if (order == SwitchOrder::first && !(alpha > 1.0)) {
        throw DomainError("optimal_k: first-order optimum requires alpha > 1");
    }
    if (order != SwitchOrder::first && order != SwitchOrder::second) {
        throw DomainError("optimal_k: order must be first or second");
    }
    if (!(alpha >= 1.0)) throw DomainError("optimal_k: alpha must be >= 1");
}

}  // namespace

double optimal_k(double alpha, double tau_on_weak, double tau_iso_weak, SwitchOrder order) {
    check_optimum_domain(alpha, tau_on_weak, tau_iso_weak, order);
    const AlphaConstants c = AlphaConstants::of(alpha);
    if (order == SwitchOrder::first) {
        return std::pow(alpha * tau_iso_weak / (c.D_alpha * tau_on_weak),
                        alpha / (2.0 * alpha + 1.0));
    }
    return std::pow(tau_iso_weak / (2.0 * c.B_alpha * tau_on_weak), 0.25);
}

double min_total_time(double alpha, double tau_on_weak, double tau_iso_weak, SwitchOrder order) {
    check_optimum_domain(alpha, tau_on_weak, tau_iso_weak, order);
    const AlphaConstants c = AlphaConstants::of(alpha);
    if (order == SwitchOrder::first) {
        return c.C_alpha * tau_iso_weak *
               std::pow(tau_on_weak / tau_iso_weak, 2.0 * alpha / (2.0 * alpha + 1.0));
    }
    return std::sqrt(8.0 * c.B_alpha * tau_iso_weak * tau_on_weak);
}

namespace {

double log_first_order_decay(double sigma, const AlphaConstants& c, double tau_tot,
                             double tau_on_weak) {
    const double a = c.alpha;
    return std::log(sigma) + (2.0 * a + 1.0) * std::log(c.C_alpha) +
           2.0 * a * std::log(tau_on_weak) - (2.0 * a + 1.0) * std::log(tau_tot);
}

}  // namespace

double dissipation_decay(const DissipationContext& ctx, double alpha, double tau_tot,
                         double tau_on_weak, SwitchOrder order) {
    ctx.validate();
    if (!(tau_tot > 0.0) || !(tau_on_weak > 0.0)) {
        throw DomainError("dissipation_decay: times must be > 0");
    }
    const AlphaConstants c = AlphaConstants::of(alpha);
    if (order == SwitchOrder::first) {
        if (c.linear_limit) throw DomainError("dissipation_decay: first order requires alpha > 1");
        if (ctx.Sigma == 0.0) return 0.0;
        return std::exp(log_first_order_decay(ctx.Sigma, c, tau_tot, tau_on_weak));
    }
    if (order != SwitchOrder::second) {
        throw DomainError("dissipation_decay: order must be first or second");
    }
    return 8.0 * c.B_alpha * ctx.Sigma * tau_on_weak / (tau_tot * tau_tot);
}

DecayLaw decay_law(const DissipationContext& ctx, double alpha, double tau_on_weak,
                   SwitchOrder order) {
    const AlphaConstants c = AlphaConstants::of(alpha);
    if (order == SwitchOrder::first) {
        return DecayLaw(2.0 * alpha + 1.0, dissipation_decay(ctx, alpha, 1.0, tau_on_weak, order));
    }
    return DecayLaw(2.0, 8.0 * c.B_alpha * ctx.Sigma * tau_on_weak);
}

AlphaOptimum optimal_alpha(const DissipationContext& ctx, double tau_tot, double tau_on_weak,
                           double alpha_max) {
    ctx.validate();
    if (!(tau_on_weak > 0.0) || !(tau_tot > 2.0 * tau_on_weak)) {
        throw DomainError("optimal_alpha: requires tau_tot > 2 tau_on_weak > 0");
    }
    if (!(alpha_max > 1.0)) throw DomainError("optimal_alpha: alpha_max must exceed 1");
    const double sigma = ctx.Sigma > 0.0 ? ctx.Sigma : 1.0;
    auto objective = [&](double a) {
        return log_first_order_decay(sigma, AlphaConstants::of(a), tau_tot, tau_on_weak);
    };
    const double lo = 1.0 + 1e-9;
    const double tol = 1e-6;
    const numerics::GoldenResult r = numerics::golden_section_minimize(objective, lo, alpha_max, tol);
    AlphaOptimum out;
    out.alpha = r.x;
    out.dissipation = ctx.Sigma > 0.0 ? std::exp(r.fx) : 0.0;
    out.at_boundary = (r.x - lo < 10.0 * tol) || (alpha_max - r.x < 10.0 * tol);
    return out;
}

}  // namespace isokit::analytics
