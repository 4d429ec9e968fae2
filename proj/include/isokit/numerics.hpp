#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "isokit/errors.hpp"

namespace isokit::numerics {

struct FitResult {
    double slope{0.0};
    double intercept{0.0};
    double r_squared{0.0};
};

// Globally adaptive Gauss-Kronrod (7/15) quadrature. The panel with the largest
// Kronrod-Gauss discrepancy is bisected until the summed discrepancy drops below
// rel_tol * |estimate|. Bisection deeper than 30 levels raises NonConvergenceError.
double adaptive_quad(const std::function<double(double)>& f, double a, double b,
                     double rel_tol = 1e-10);

// Composite Simpson rule on equally spaced samples; an even number of panels is required.
double simpson(std::span<const double> samples, double h);

FitResult linear_fit(std::span<const double> xs, std::span<const double> ys);
FitResult loglog_fit(std::span<const double> xs, std::span<const double> ys);

// Centered moving average. Near the edges the window shrinks symmetrically so that
// every output stays centered on its own sample.
std::vector<double> moving_average(std::span<const double> series, std::size_t window);

// Counter-based generator: splitmix64 finalizer applied to seed and index.
// The same (seed, index) pair always maps to the same double in [0, 1).
std::uint64_t mix64(std::uint64_t x);
double rng_uniform(std::uint64_t seed, std::uint64_t index);

struct GoldenResult {
    double x{0.0};
    double fx{0.0};
};

GoldenResult golden_section_minimize(const std::function<double(double)>& f, double a, double b,
                                     double abs_tol);

// Gauss-Legendre points of the two-node rule on [t, t + h].
inline std::pair<double, double> gauss2_nodes(double t, double h) {
    const double c = 0.5 * h / std::sqrt(3.0);
    const double mid = t + 0.5 * h;
    return {mid - c, mid + c};
}

// exp(Omega) X by Taylor series, stopped once a term falls below tol relative to the
// running sum. apply(Y) must return Omega * Y; norm(Y) any consistent norm.
template <class Mat, class Apply, class Norm>
Mat taylor_expm_apply(const Apply& apply, const Mat& x, const Norm& norm, double tol = 1e-17,
                      int max_terms = 40) {
    Mat sum = x;
    Mat term = x;
    const double scale = norm(x);
    for (int j = 1; j <= max_terms; ++j) {
        term = apply(term);
        term /= static_cast<double>(j);
        sum += term;
        if (norm(term) <= tol * scale) return sum;
    }
    throw AccuracyError("taylor_expm_apply: series did not converge; step too large");
}

// Runs body(i) for i in [0, count) on up to `threads` workers. Each index is handled
// exactly once; the exception from the lowest failing index is rethrown.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

}  // namespace isokit::numerics
