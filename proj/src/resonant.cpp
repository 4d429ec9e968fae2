#include "isokit/resonant.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>

#include "isokit/errors.hpp"
#include "isokit/numerics.hpp"

namespace isokit::resonant {

namespace {

constexpr double pi = std::numbers::pi;
constexpr cplx I{0.0, 1.0};

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// (1/beta) / sinh(pi tau / beta), odd in tau
double f_sinh(double tau, double beta) {
    const double x = pi * std::abs(tau) / beta;
    const double v = (2.0 / beta) * std::exp(-x) / (-std::expm1(-2.0 * x));
    return tau < 0.0 ? -v : v;
}

// 1/(pi tau) - f_sinh(tau), regular and odd
double pole_remainder(double tau, double beta) {
    const double x = pi * tau / beta;
    if (std::abs(x) < 1e-3) return (x / 6.0 - 7.0 * x * x * x / 360.0) / beta;
    return 1.0 / (pi * tau) - f_sinh(tau, beta);
}

// (1 - cos(Lambda tau)) / (pi tau)
double cutoff_remainder(double tau, double Lambda) {
    if (tau == 0.0) return 0.0;
    const double s = std::sin(0.5 * Lambda * tau);
    return 2.0 * s * s / (pi * tau);
}

// (e^{-i mu tau} - 1) / (pi tau)
cplx phase_remainder(double tau, double mu) {
    if (tau == 0.0) return cplx{0.0, -mu / pi};
    const double s = std::sin(0.5 * mu * tau);
    return cplx{-2.0 * s * s, -std::sin(mu * tau)} / (pi * tau);
}

// Kernel of the interaction energy in the frame rotating with mu:
// u(t) = int Re[g(s) K'(t,s) c(t - s)] ds with c(tau) = -f_sinh + e^{-i mu tau} cos(Lambda tau)/(pi tau).
cplx interaction_kernel(double tau, double beta, double mu, double Lambda) {
    return pole_remainder(tau, beta) - cutoff_remainder(tau, Lambda) +
           phase_remainder(tau, mu) * std::cos(Lambda * tau);
}

// Asymptotic value of int_edge^inf Re[b(tau) e^{-i mu tau}] cos(Lambda tau)/(pi tau) dtau from the
// value and slope of b at the edge. The leading boundary term alone is used when with_slope is false.
double cutoff_edge(cplx b, cplx db, double edge, double mu, double Lambda, bool with_slope = true) {
    const cplx e = std::exp(cplx{0.0, -mu * edge});
    const double value = (b * e).real() / (pi * edge);
    double result = -value * std::sin(Lambda * edge) / Lambda;
    if (with_slope) {
        const double slope = ((db - I * mu * b) * e).real() / (pi * edge) - value / edge;
        result -= slope * std::cos(Lambda * edge) / (Lambda * Lambda);
    }
    return result;
}

// Exact integrals of eps and g^2 over [a, b] for piecewise-linear paths.
class PathIntegrator {
public:
    explicit PathIntegrator(const RLParams& p) : p_(p) {
        knots_ = p.eps.xs();
        knots_.insert(knots_.end(), p.g.xs().begin(), p.g.xs().end());
        std::sort(knots_.begin(), knots_.end());
        knots_.erase(std::unique(knots_.begin(), knots_.end()), knots_.end());
    }

    std::pair<double, double> integrate(double a, double b) const {
        double ie = 0.0;
        double ig = 0.0;
        auto it = std::upper_bound(knots_.begin(), knots_.end(), a);
        double x0 = a;
        double e0 = p_.eps(a);
        double g0 = p_.g(a);
        while (x0 < b) {
            const double x1 = (it != knots_.end() && *it < b) ? *it++ : b;
            const double e1 = p_.eps(x1);
            const double g1 = p_.g(x1);
            const double w = x1 - x0;
            ie += 0.5 * w * (e0 + e1);
            ig += w * (g0 * g0 + g0 * g1 + g1 * g1) / 3.0;
            x0 = x1;
            e0 = e1;
            g0 = g1;
        }
        return {ie, ig};
    }

private:
    const RLParams& p_;
    std::vector<double> knots_;
};

double path_max_abs(const schedules::PiecewiseLinear& path) {
    double m = 0.0;
    for (double y : path.ys()) m = std::max(m, std::abs(y));
    return m;
}

double rate_scale(const RLParams& p) {
    const double gmax = path_max_abs(p.g);
    return std::max({1.0 / p.beta, std::abs(p.mu), path_max_abs(p.eps), gmax * gmax});
}

// Hat-function weights of the inner window: left[l] integrates c against the rising
// half of the hat centred at lag l, right[l] against the falling half.
struct InnerWeights {
    std::vector<cplx> left;
    std::vector<cplx> right;
};

InnerWeights inner_weights(std::size_t lags, double h, double beta, double mu, double Lambda) {
    const double fine = pi / (64.0 * Lambda);
    std::size_t ns = std::max<std::size_t>(8, static_cast<std::size_t>(std::ceil(h / fine)));
    if (ns % 2 == 1) ++ns;
    const double dx = h / static_cast<double>(ns);
    std::vector<cplx> c(lags * ns + 1);
    for (std::size_t i = 0; i < c.size(); ++i) {
        c[i] = interaction_kernel(static_cast<double>(i) * dx, beta, mu, Lambda);
    }
    InnerWeights w;
    w.left.assign(lags + 1, cplx{});
    w.right.assign(lags + 1, cplx{});
    for (std::size_t cell = 0; cell < lags; ++cell) {
        cplx rise{};
        cplx fall{};
        for (std::size_t i = 0; i <= ns; ++i) {
            const double simpson = (i == 0 || i == ns) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            const double r = static_cast<double>(i) / static_cast<double>(ns);
            const cplx v = c[cell * ns + i] * simpson;
            rise += v * r;
            fall += v * (1.0 - r);
        }
        w.right[cell] = fall * (dx / 3.0);
        w.left[cell + 1] = rise * (dx / 3.0);
    }
    return w;
}

void check_g_endpoints(const RLParams& p, const char* where) {
    if (p.g.front() != 0.0 || p.g.back() != 0.0) {
        throw DomainError(std::string(where) + ": coupling must vanish at both ends");
    }
}

}  // namespace

void RLParams::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw DomainError("RLParams: beta must be > 0");
    if (!(Lambda > 0.0) || !std::isfinite(Lambda)) throw DomainError("RLParams: Lambda must be > 0");
    if (!std::isfinite(mu)) throw DomainError("RLParams: mu must be finite");
    if (eps.xs().size() < 2 || g.xs().size() < 2) throw DomainError("RLParams: paths not set");
    if (eps.front_x() != 0.0 || g.front_x() != 0.0) {
        throw DomainError("RLParams: paths must start at t = 0");
    }
    const double T = eps.back_x();
    if (std::abs(g.back_x() - T) > 1e-12 * T) {
        throw DomainError("RLParams: eps and g paths must share the same end time");
    }
    for (double y : g.ys()) {
        if (!(y >= 0.0)) throw DomainError("RLParams: coupling must be >= 0");
    }
    if (!(n0 >= 0.0 && n0 <= 1.0)) throw DomainError("RLParams: n0 must lie in [0,1]");
}

bool RLParams::within_validity_window() const {
    return Lambda >= 50.0 * rate_scale(*this);
}

double fermi(double omega, double beta, double mu) {
    const double x = beta * (omega - mu);
    if (x > 0.0) {
        const double e = std::exp(-x);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(x));
}

double free_energy_change(double eps_i, double eps_f, double beta, double mu) {
    if (!(beta > 0.0)) throw DomainError("free_energy_change: beta must be > 0");
    return (softplus(-beta * (eps_i - mu)) - softplus(-beta * (eps_f - mu))) / beta;
}

cplx propagator_log(double t, double t_prime, const RLParams& params) {
    params.validate();
    if (t < t_prime) throw DomainError("propagator_log: requires t >= t'");
    const double T = params.duration();
    if (t_prime < 0.0 || t > T) throw DomainError("propagator_log: times outside the path domain");
    const auto [ie, ig] = PathIntegrator(params).integrate(t_prime, t);
    return cplx{-0.5 * ig, -ie};
}

cplx noise_phi(double t, double beta, double mu, double Lambda) {
    if (!(beta > 0.0) || !(Lambda > 0.0)) throw DomainError("noise_phi: beta, Lambda must be > 0");
    const cplx phase = std::exp(cplx{0.0, -mu * t});
    const cplx bracket = -phase * pole_remainder(t, beta) + phase_remainder(t, mu) +
                         cutoff_remainder(t, Lambda);
    return -I * bracket;
}

cplx noise_phi(double t, const RLParams& params) {
    return noise_phi(t, params.beta, params.mu, params.Lambda);
}

Solution solve(const RLParams& params, const SolverOptions& options) {
    params.validate();
    const double T = params.duration();
    const double scale = rate_scale(params);
    const double dt_req = options.dt > 0.0 ? options.dt : 0.01 / scale;
    if (dt_req * scale > 0.02 * (1.0 + 1e-12)) {
        throw DomainError("solve: dt exceeds 0.02 / max(|eps|, g^2, 1/beta, |mu|)");
    }
    const std::size_t M =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(T / dt_req - 1e-9)));
    const double h = T / static_cast<double>(M);
    const double beta = params.beta;
    const double mu = params.mu;

    const double window = std::max(20.0 * pi / params.Lambda, 0.25 * beta);
    const std::size_t Lc =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(window / h)));
    const double tau_c = static_cast<double>(Lc) * h;
    const std::size_t J =
        static_cast<std::size_t>(std::ceil(40.0 / (2.0 * pi * tau_c / beta))) + 1;

    std::vector<double> F(Lc + 1, 0.0);
    for (std::size_t l = 1; l <= Lc; ++l) F[l] = f_sinh(static_cast<double>(l) * h, beta);
    const InnerWeights iw = inner_weights(Lc, h, beta, mu, params.Lambda);
    std::vector<cplx> wfull(Lc + 1);
    for (std::size_t l = 0; l <= Lc; ++l) wfull[l] = iw.left[l] + iw.right[l];

    std::vector<double> decay_h(J), decay_c(J);
    for (std::size_t j = 0; j < J; ++j) {
        const double nu = (2.0 * static_cast<double>(j) + 1.0) * pi / beta;
        decay_h[j] = std::exp(-nu * h);
        decay_c[j] = std::exp(-nu * tau_c);
    }

    const PathIntegrator path(params);
    std::vector<cplx> B(Lc + 1, cplx{});
    std::vector<cplx> tail(J, cplx{});

    const std::size_t stride =
        options.max_samples == 0
            ? M + 1
            : std::max<std::size_t>(1, (M + options.max_samples) / options.max_samples);

    Solution sol;
    sol.dt = h;
    sol.steps = M;
    sol.within_validity_window = params.within_validity_window();

    double g_m = params.g(0.0);
    double e_m = params.eps(0.0);
    B[0] = g_m;
    double S_direct = 0.0;  // sum_l Im(B_l) F_l over the direct window
    double U_direct = g_m * wfull[0].real();
    cplx logK{};
    cplx logKp{};
    const double g0 = g_m;
    const double Lambda = params.Lambda;
    double Jint = 0.0;
    double phi_prev = 0.0;
    double rho_prev = 1.0;
    double n_prev = params.n0;
    double u_prev = 0.0;
    double g_prev = g_m;
    double e_prev = e_m;
    double W = 0.0;

    for (std::size_t m = 0;; ++m) {
        const double t = static_cast<double>(m) * h;
        const double two_over_beta = 2.0 / beta;

        double phi = 0.0;
        double u = 0.0;
        if (m > 0) {
            double s = S_direct * h;
            if (m <= Lc) s -= 0.5 * h * B[m].imag() * F[m];
            s += 0.5 * h * g_m * (-(e_m - mu) / pi);
            double tail_im = 0.0;
            double tail_re = 0.0;
            for (std::size_t j = 0; j < J; ++j) {
                tail_im += tail[j].imag();
                tail_re += tail[j].real();
            }
            s += two_over_beta * tail_im;
            phi = -2.0 * g_m * s;

            u = U_direct;
            if (m < Lc) u -= (B[m] * iw.right[m]).real();
            if (m > Lc) {
                u -= 0.5 * h * B[Lc].real() * F[Lc] + two_over_beta * tail_re;
                u += cutoff_edge(B[Lc], (B[Lc] - B[Lc - 1]) / h, tau_c, mu, Lambda);
                if (g0 != 0.0) {
                    const cplx b0 = g0 * std::exp(logKp);
                    u -= cutoff_edge(b0, cplx{}, t, mu, Lambda, false);
                }
            }

            Jint = rho_prev * Jint + 0.5 * h * (rho_prev * phi_prev + phi);
        }

        double n = 0.5 + std::exp(2.0 * logKp.real()) * (params.n0 - 0.5) - 0.5 * Jint;
        if (n < -1e-8 || n > 1.0 + 1e-8) {
            throw AccuracyError("solve: occupation left [0,1] at t = " + std::to_string(t) +
                                " (n = " + std::to_string(n) + "); reduce dt");
        }
        n = std::clamp(n, 0.0, 1.0);

        if (m > 0) {
            W += (e_m - e_prev) * 0.5 * (n + n_prev) + (g_m - g_prev) * 0.5 * (u + u_prev);
        }
        if (m % stride == 0 || m == M) {
            sol.trajectory.t.push_back(t);
            sol.trajectory.n.push_back(n);
            sol.trajectory.u.push_back(u);
            sol.trajectory.logK.push_back(logK);
            sol.trajectory.W.push_back(W);
        }
        if (m == M) {
            sol.n_final = n;
            sol.u_final = u;
            sol.W = W;
            break;
        }

        const double t_next = static_cast<double>(m + 1) * h;
        const auto [ie, ig] = path.integrate(t, t_next);
        const cplx dlog{-0.5 * ig, -ie};
        const cplx dlog_rot = dlog + cplx{0.0, mu * h};
        const cplx q = std::exp(dlog_rot);

        if (m >= Lc) {
            const cplx entry = B[Lc] * ((m == Lc) ? 0.5 * h : h);
            for (std::size_t j = 0; j < J; ++j) {
                tail[j] = (tail[j] + entry * decay_c[j]) * q * decay_h[j];
            }
        } else {
            for (std::size_t j = 0; j < J; ++j) tail[j] *= q * decay_h[j];
        }

        const double g_next = params.g(t_next);
        S_direct = 0.0;
        U_direct = 0.0;
        for (std::size_t l = Lc; l >= 1; --l) {
            const cplx b = q * B[l - 1];
            B[l] = b;
            S_direct += b.imag() * F[l];
            U_direct += b.real() * wfull[l].real() - b.imag() * wfull[l].imag();
        }
        B[0] = g_next;
        U_direct += g_next * wfull[0].real();

        logK += dlog;
        logKp += dlog_rot;
        rho_prev = std::exp(2.0 * dlog.real());
        phi_prev = phi;
        n_prev = n;
        u_prev = u;
        g_prev = g_m;
        e_prev = e_m;
        g_m = g_next;
        e_m = params.eps(t_next);
    }
    return sol;
}

RLParams params_from_schedule(const schedules::ProtocolSchedule& schedule, const Bath& bath,
                              std::optional<double> n0) {
    const double T = schedule.total_time();
    const double t1 = schedule.tau_on;
    const double t2 = schedule.tau_on + schedule.tau_iso;
    if (!(T > 0.0)) throw DomainError("params_from_schedule: empty schedule");

    std::vector<double> ex{0.0};
    std::vector<double> ey{schedule.drive.front()};
    const auto push = [](std::vector<double>& xs, std::vector<double>& ys, double x, double y) {
        if (x > xs.back()) {
            xs.push_back(x);
            ys.push_back(y);
        } else if (y != ys.back()) {
            throw DomainError("params_from_schedule: discontinuous path (zero-length stage)");
        }
    };
    push(ex, ey, t1, schedule.drive.front());
    for (std::size_t j = 1; j + 1 < schedule.drive.xs().size(); ++j) {
        push(ex, ey, t1 + schedule.drive.xs()[j] * schedule.tau_iso, schedule.drive.ys()[j]);
    }
    push(ex, ey, t2, schedule.drive.back());
    push(ex, ey, T, schedule.drive.back());

    std::vector<double> gx{0.0};
    std::vector<double> gy{schedule.coupling(0.0)};
    const bool linear = schedule.ramp_on.alpha == 1.0;
    const int pieces = linear ? 1 : 64;
    for (int i = 1; i <= pieces; ++i) {
        const double t = t1 * i / pieces;
        push(gx, gy, t, i == pieces ? schedule.ramp_on.g_f : schedule.coupling(t));
    }
    push(gx, gy, t2, schedule.ramp_on.g_f);
    for (int i = 1; i <= pieces; ++i) {
        const double t = t2 + schedule.tau_off * i / pieces;
        push(gx, gy, i == pieces ? T : t, i == pieces ? schedule.ramp_off.g_f : schedule.coupling(t));
    }

    RLParams p;
    p.beta = bath.beta;
    p.mu = bath.mu;
    p.Lambda = bath.Lambda;
    p.eps = schedules::PiecewiseLinear(std::move(ex), std::move(ey));
    p.g = schedules::PiecewiseLinear(std::move(gx), std::move(gy));
    p.n0 = n0 ? *n0 : fermi(p.eps.front(), bath.beta, bath.mu);
    p.validate();
    return p;
}

ProtocolOutcome run_protocol_rl(const RLParams& params, const SolverOptions& options) {
    params.validate();
    check_g_endpoints(params, "run_protocol_rl");
    ProtocolOutcome out;
    out.solution = solve(params, options);
    out.W = out.solution.W;
    out.delta_F = free_energy_change(params.eps.front(), params.eps.back(), params.beta, params.mu);
    out.W_diss = out.W - out.delta_F;
    if (out.W_diss < -1e-4 * std::max(std::abs(out.W), std::abs(out.delta_F))) {
        throw AccountingError("run_protocol_rl: negative dissipated work " +
                              std::to_string(out.W_diss));
    }
    return out;
}

schedules::ProtocolSchedule isotherm_schedule(const IsothermSpec& spec) {
    const auto times =
        schedules::allocate_times(spec.k, 1.0, spec.tau_on_weak, spec.tau_iso_weak, spec.scaling);
    return schedules::ProtocolSchedule::make(
        0.0, spec.g0, spec.k, 1.0, times.tau_on, times.tau_iso,
        schedules::PiecewiseLinear::linear(spec.eps_i, spec.eps_f, 0.0, 1.0));
}

DecaySweep decay_sweep(const Bath& bath, double eps_i, double eps_f, double g0,
                       double tau_on_weak, const std::vector<double>& tau_tot, SweepMode mode,
                       const SolverOptions& options, int threads) {
    if (tau_tot.size() < 2) throw DomainError("decay_sweep: need at least two total times");
    if (!(tau_on_weak > 0.0)) throw DomainError("decay_sweep: tau_on_weak must be > 0");
    const auto [lo, hi] = std::minmax_element(tau_tot.begin(), tau_tot.end());
    if (!(*lo > 0.0) || *hi < 10.0 * *lo * (1.0 - 1e-12)) {
        throw DomainError("decay_sweep: total times must be positive and span a decade");
    }
    DecaySweep sweep;
    sweep.points.resize(tau_tot.size());
    for (std::size_t i = 0; i < tau_tot.size(); ++i) {
        DecayPoint& pt = sweep.points[i];
        pt.tau_tot = tau_tot[i];
        pt.k = mode == SweepMode::optimal ? std::sqrt(tau_tot[i] / (4.0 * tau_on_weak)) : 1.0;
        pt.tau_on = 0.25 * tau_tot[i];
        pt.tau_iso = 0.5 * tau_tot[i];
    }
    numerics::parallel_for(sweep.points.size(), threads, [&](std::size_t i) {
        DecayPoint& pt = sweep.points[i];
        const auto schedule = schedules::ProtocolSchedule::make(
            0.0, pt.k * g0, 1.0, 1.0, pt.tau_on, pt.tau_iso,
            schedules::PiecewiseLinear::linear(eps_i, eps_f, 0.0, 1.0));
        pt.W_diss = run_protocol_rl(params_from_schedule(schedule, bath), options).W_diss;
    });
    std::vector<double> xs, ys;
    for (const auto& pt : sweep.points) {
        if (!(pt.W_diss > 0.0)) {
            sweep.unreliable = true;
            sweep.nu = std::numeric_limits<double>::quiet_NaN();
            return sweep;
        }
        xs.push_back(pt.tau_tot);
        ys.push_back(pt.W_diss);
    }
    const auto fit = numerics::loglog_fit(xs, ys);
    sweep.nu = -fit.slope;
    sweep.r_squared = fit.r_squared;
    sweep.unreliable = fit.r_squared < 0.95;
    return sweep;
}

void CycleConfig::validate() const {
    for (double e : eps) {
        if (!(e > 0.0)) throw DomainError("CycleConfig: level energies must be > 0");
    }
    if (!(beta_h > 0.0) || !(beta_c > beta_h)) {
        throw DomainError("CycleConfig: requires beta_c > beta_h > 0");
    }
    const double ratio = beta_h / beta_c;
    if (std::abs(eps[1] / eps[0] - ratio) > 1e-9 || std::abs(eps[2] / eps[3] - ratio) > 1e-9) {
        throw DomainError("CycleConfig: energies must satisfy eps2/eps1 = eps3/eps4 = beta_h/beta_c");
    }
    if (!(g0 > 0.0)) throw DomainError("CycleConfig: g0 must be > 0");
    if (!(Lambda > 0.0)) throw DomainError("CycleConfig: Lambda must be > 0");
    if (max_cycles < 1 || !(tolerance > 0.0)) {
        throw DomainError("CycleConfig: max_cycles >= 1 and tolerance > 0 required");
    }
}

namespace {

struct StrokeSpec {
    double eps_a{0.0};
    double eps_b{0.0};
    double beta{0.0};  // 0 marks an instantaneous adiabat
};

StrokeResult run_stroke(const CycleConfig& c, const StrokeSpec& s, double n) {
    StrokeResult r;
    r.n_start = n;
    if (s.beta == 0.0) {
        r.W = (s.eps_b - s.eps_a) * n;
        r.n_end = n;
        return r;
    }
    const auto schedule = isotherm_schedule(
        {s.eps_a, s.eps_b, c.g0, c.k, c.tau_on_weak, c.tau_iso_weak, c.scaling});
    const RLParams p = params_from_schedule(schedule, {s.beta, 0.0, c.Lambda}, n);
    const Solution sol = solve(p, c.solver);
    r.W = sol.W;
    r.n_end = sol.n_final;
    r.duration = schedule.total_time();
    r.Q = s.eps_b * r.n_end - s.eps_a * r.n_start - r.W;
    return r;
}

std::pair<std::array<StrokeResult, 4>, int> limit_cycle(const CycleConfig& c,
                                                        const std::array<StrokeSpec, 4>& strokes) {
    c.validate();
    double n = fermi(c.eps[0], c.beta_h);
    for (int cycle = 1; cycle <= c.max_cycles; ++cycle) {
        std::array<StrokeResult, 4> res;
        double carry = n;
        for (std::size_t i = 0; i < 4; ++i) {
            res[i] = run_stroke(c, strokes[i], carry);
            carry = res[i].n_end;
        }
        if (std::abs(carry - n) <= c.tolerance * n) return {res, cycle};
        n = carry;
    }
    throw NonConvergenceError("limit cycle not reached within " + std::to_string(c.max_cycles) +
                              " cycles");
}

}  // namespace

CycleResult carnot_cycle(const CycleConfig& config) {
    const auto& e = config.eps;
    const std::array<StrokeSpec, 4> strokes{StrokeSpec{e[0], e[1], 0.0},
                                            StrokeSpec{e[1], e[2], config.beta_c},
                                            StrokeSpec{e[2], e[3], 0.0},
                                            StrokeSpec{e[3], e[0], config.beta_h}};
    const auto [res, cycles] = limit_cycle(config, strokes);
    CycleResult r;
    r.strokes = res;
    r.cycles = cycles;
    r.Q_c = res[1].Q;
    r.Q_h = res[3].Q;
    r.tau_c = res[1].duration;
    r.tau_h = res[3].duration;
    for (const auto& s : res) r.W_total += s.W;
    r.engine = r.Q_h > 0.0 && r.W_total < 0.0;
    r.eta = 1.0 + r.Q_c / r.Q_h;
    r.P = (r.Q_h + r.Q_c) / (r.tau_h + r.tau_c);
    return r;
}

FridgeResult refrigerator_cycle(const CycleConfig& config) {
    const auto& e = config.eps;
    const std::array<StrokeSpec, 4> strokes{StrokeSpec{e[0], e[3], config.beta_h},
                                            StrokeSpec{e[3], e[2], 0.0},
                                            StrokeSpec{e[2], e[1], config.beta_c},
                                            StrokeSpec{e[1], e[0], 0.0}};
    const auto [res, cycles] = limit_cycle(config, strokes);
    FridgeResult r;
    r.strokes = res;
    r.cycles = cycles;
    r.Q_h = res[0].Q;
    r.Q_c = res[2].Q;
    r.tau_h = res[0].duration;
    r.tau_c = res[2].duration;
    for (const auto& s : res) r.W_in += s.W;
    r.refrigerator = r.Q_c > 0.0 && r.W_in > 0.0;
    r.COP = r.Q_c / r.W_in;
    r.cooling_power = r.Q_c / (r.tau_h + r.tau_c);
    return r;
}

double carnot_efficiency(double beta_c, double beta_h) {
    if (!(beta_h > 0.0) || !(beta_c > beta_h)) throw DomainError("requires beta_c > beta_h > 0");
    return 1.0 - beta_h / beta_c;
}

double carnot_cop(double beta_c, double beta_h) {
    if (!(beta_h > 0.0) || !(beta_c > beta_h)) throw DomainError("requires beta_c > beta_h > 0");
    return 1.0 / (beta_c / beta_h - 1.0);
}

NoiseResult noisy_protocol_mc(const Bath& bath, const schedules::ProtocolSchedule& schedule,
                              double sigma, int realizations, std::uint64_t seed,
                              const SolverOptions& options, int threads) {
    if (!(sigma >= 0.0 && sigma < 0.3)) throw DomainError("noisy_protocol_mc: sigma must lie in [0, 0.3)");
    if (realizations < 1) throw DomainError("noisy_protocol_mc: need at least one realization");
    constexpr int max_redraws = 1000;
    const std::size_t n = static_cast<std::size_t>(realizations);
    const std::array<double, 3> base{schedule.tau_on, schedule.tau_iso, schedule.tau_off};
    const double half_width = std::sqrt(3.0) * sigma;

    NoiseResult out;
    out.noiseless = run_protocol_rl(params_from_schedule(schedule, bath), options).W_diss;
    out.W_diss.assign(n, 0.0);
    out.durations.assign(n, {});
    std::vector<int> rejected(n, 0);

    numerics::parallel_for(n, threads, [&](std::size_t i) {
        const std::uint64_t sub = seed ^ static_cast<std::uint64_t>(i);
        std::uint64_t counter = 0;
        std::array<double, 3> d{};
        for (int attempt = 0;; ++attempt) {
            if (attempt == max_redraws) {
                throw NonConvergenceError("noisy_protocol_mc: too many rejected duration draws");
            }
            bool ok = true;
            for (std::size_t a = 0; a < 3; ++a) {
                const double u = numerics::rng_uniform(sub, counter++);
                d[a] = base[a] * (1.0 + (2.0 * u - 1.0) * half_width);
                ok = ok && d[a] > 0.0;
            }
            if (ok) break;
            ++rejected[i];
        }
        out.durations[i] = d;
        const auto noisy = schedule.with_durations(d[0], d[1], d[2]);
        out.W_diss[i] = run_protocol_rl(params_from_schedule(noisy, bath), options).W_diss;
    });

    for (int r : rejected) out.rejected += r;
    // Moments of the shifted data W_i - W_0, so identical samples give exactly zero variance.
    const double shift = out.W_diss.front();
    double sum = 0.0;
    for (double w : out.W_diss) sum += w - shift;
    const double mean_shifted = sum / static_cast<double>(n);
    out.mean = shift + mean_shifted;
    double ss = 0.0;
    for (double w : out.W_diss) ss += (w - shift - mean_shifted) * (w - shift - mean_shifted);
    out.variance = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
    out.stddev = std::sqrt(out.variance);
    return out;
}

CutoffResult cutoff_convergence(const Bath& bath, const schedules::ProtocolSchedule& schedule,
                                const std::vector<double>& Lambdas, const SolverOptions& options,
                                int threads) {
    if (Lambdas.size() < 2) throw DomainError("cutoff_convergence: need at least two cutoffs");
    for (std::size_t i = 1; i < Lambdas.size(); ++i) {
        if (!(Lambdas[i] > Lambdas[i - 1])) {
            throw DomainError("cutoff_convergence: cutoffs must be increasing");
        }
    }
    CutoffResult out;
    out.Lambda = Lambdas;
    out.W.assign(Lambdas.size(), 0.0);
    out.W_diss.assign(Lambdas.size(), 0.0);
    numerics::parallel_for(Lambdas.size(), threads, [&](std::size_t i) {
        Bath b = bath;
        b.Lambda = Lambdas[i];
        const auto res = run_protocol_rl(params_from_schedule(schedule, b), options);
        out.W[i] = res.W;
        out.W_diss[i] = res.W_diss;
    });
    const double last = out.W.back();
    out.relative_spread = std::abs(last - out.W[out.W.size() - 2]) / std::abs(last);
    return out;
}

}  // namespace isokit::resonant
