#pragma once

#include <cmath>
#include <functional>

namespace oracle {

// Golden-section maximization of f over [a, b], written out here so the check does not
// share code with the library's optimizer.
inline double golden_max(const std::function<double(double)>& f, double a, double b,
                         double tol = 1e-13) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - r * (b - a);
    double x2 = a + r * (b - a);
    double f1 = f(x1);
    double f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

// Scan a log grid for the best point, then polish with golden search in log space.
inline double log_grid_max(const std::function<double(double)>& f, double lo, double hi,
                           int points = 400) {
    const double la = std::log(lo);
    const double lb = std::log(hi);
    const double step = (lb - la) / points;
    int best = 0;
    double best_v = -INFINITY;
    for (int i = 0; i <= points; ++i) {
        const double v = f(std::exp(la + i * step));
        if (v > best_v) {
            best_v = v;
            best = i;
        }
    }
    const double a = la + std::max(best - 1, 0) * step;
    const double b = la + std::min(best + 1, points) * step;
    return std::exp(golden_max([&](double l) { return f(std::exp(l)); }, a, b));
}

struct EngineOptimum {
    double tau_c{0.0};
    double tau_h{0.0};
    double power{0.0};
    double efficiency{0.0};
};

// Low-dissipation engine with T_h = 1, T_c = theta, Sigma_gamma = delta_S = 1.
// The 2-D maximum is found by maximizing over tau_h for every trial tau_c.
inline EngineOptimum brute_engine(double gamma, double theta) {
    auto heats = [&](double tc, double th, double& qc, double& qh) {
        qc = theta * (-1.0 - 1.0 / std::pow(tc, gamma));
        qh = 1.0 - 1.0 / std::pow(th, gamma);
    };
    auto power = [&](double tc, double th) {
        double qc, qh;
        heats(tc, th, qc, qh);
        return (qc + qh) / (tc + th);
    };
    auto best_h = [&](double tc) { return log_grid_max([&](double th) { return power(tc, th); }, 1e-2, 1e4); };
    EngineOptimum o;
    o.tau_c = log_grid_max([&](double tc) { return power(tc, best_h(tc)); }, 1e-2, 1e4, 200);
    o.tau_h = best_h(o.tau_c);
    double qc, qh;
    heats(o.tau_c, o.tau_h, qc, qh);
    o.power = (qc + qh) / (o.tau_c + o.tau_h);
    o.efficiency = 1.0 + qc / qh;
    return o;
}

// Refrigerator COP at maximum cooling power for fixed tau_h = R tau_c.
inline double brute_fridge_cop(double gamma, double theta, double R) {
    auto heats = [&](double tc, double& qc, double& qh) {
        qc = theta * (1.0 - 1.0 / std::pow(tc, gamma));
        qh = -1.0 - 1.0 / std::pow(R * tc, gamma);
    };
    const double tc = log_grid_max(
        [&](double t) {
            double qc, qh;
            heats(t, qc, qh);
            return qc / (t + R * t);
        },
        1e-2, 1e4);
    double qc, qh;
    heats(tc, qc, qh);
    return qc / (-(qc + qh));
}

}  // namespace oracle
