#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "isokit/resonant.hpp"

namespace oracle {

// Level coupled to M bath modes equally spaced over [-Lambda, Lambda] with equal
// couplings lambda^2 = Lambda/(pi M), so that the level decay rate is g^2. The initial
// state is the product of the level at occupation n0 and the thermal bath. Rows of the
// single-particle propagator U(t, 0) are obtained by propagating e_0 and the collective
// bath mode backwards from each output time with a symmetric split step.
struct DiscreteBathResult {
    std::vector<double> t;
    std::vector<double> n;
    std::vector<double> u;
};

inline DiscreteBathResult discrete_bath(const isokit::resonant::RLParams& p,
                                        std::vector<double> times, int M = 4000,
                                        double dt = 0.002) {
    using cd = std::complex<double>;
    constexpr double pi = std::numbers::pi;
    std::sort(times.begin(), times.end(), std::greater<>());
    const int K = static_cast<int>(times.size());

    Eigen::ArrayXd omega(M);
    Eigen::ArrayXd occ(M + 1);
    occ(0) = p.n0;
    for (int k = 0; k < M; ++k) {
        omega(k) = -p.Lambda + (k + 0.5) * 2.0 * p.Lambda / M;
        occ(k + 1) = isokit::resonant::fermi(omega(k), p.beta, p.mu);
    }
    const double lam_norm = std::sqrt(p.Lambda / pi);
    const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(M));

    // Columns 2i and 2i+1 start as e_0 and the normalized collective mode at times[i].
    Eigen::ArrayXXcd X = Eigen::ArrayXXcd::Zero(M + 1, 2 * K);
    Eigen::ArrayXcd half_phase(M);
    double active_dt = -1.0;

    const auto step = [&](double t_hi, double h, int cols) {
        if (h != active_dt) {
            for (int k = 0; k < M; ++k) half_phase(k) = std::polar(1.0, 0.5 * omega(k) * h);
            active_dt = h;
        }
        const double tm = t_hi - 0.5 * h;
        const cd level_phase = std::polar(1.0, 0.5 * p.eps(tm) * h);
        const double theta = p.g(tm) * lam_norm * h;
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        auto block = X.leftCols(cols);
        for (int pass = 0; pass < 2; ++pass) {
            block.row(0) *= level_phase;
            block.bottomRows(M).colwise() *= half_phase;
            if (pass == 1) break;
            for (int j = 0; j < cols; ++j) {
                const cd a = block(0, j);
                const cd b = block.col(j).tail(M).sum() * inv_sqrt_m;
                block(0, j) = c * a + cd(0.0, s) * b;
                const cd shift = ((c - 1.0) * b + cd(0.0, s) * a) * inv_sqrt_m;
                block.col(j).tail(M) += shift;
            }
        }
    };

    int active = 0;
    for (int i = 0; i < K; ++i) {
        X(0, 2 * i) = 1.0;
        X.col(2 * i + 1).tail(M) = inv_sqrt_m;
        active += 2;
        const double t_hi = times[i];
        const double t_lo = i + 1 < K ? times[i + 1] : 0.0;
        const int steps = static_cast<int>(std::ceil((t_hi - t_lo) / dt - 1e-9));
        if (steps == 0) continue;
        const double h = (t_hi - t_lo) / steps;
        for (int m = 0; m < steps; ++m) step(t_hi - m * h, h, active);
    }

    DiscreteBathResult r;
    for (int i = K - 1; i >= 0; --i) {
        const Eigen::ArrayXcd row0 = X.col(2 * i).conjugate();
        const Eigen::ArrayXcd rowl = X.col(2 * i + 1).conjugate() * lam_norm;
        r.t.push_back(times[i]);
        r.n.push_back((occ * row0.abs2()).sum());
        r.u.push_back(2.0 * (occ * (row0.conjugate() * rowl).real()).sum());
    }
    return r;
}

}  // namespace oracle
