#include "isokit/gaussian.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>

#include "isokit/errors.hpp"

namespace isokit::gaussian {

namespace {

constexpr double pure_margin = 1e-10;

bool is_identity(const MatrixXd& m) {
    return (m - MatrixXd::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff() == 0.0;
}

MatrixXd sym_sqrt(const MatrixXd& m, bool inverse) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw NumericError("eigen-decomposition failed");
    if (es.eigenvalues().minCoeff() <= 0.0) {
        throw NumericError("matrix square root of a non positive definite block");
    }
    VectorXd d = es.eigenvalues().cwiseSqrt();
    if (inverse) d = d.cwiseInverse();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

// Entropy contribution of one symplectic eigenvalue (vacuum value 1/2).
double entropy_term(double nu) {
    const double a = nu + 0.5;
    const double b = nu - 0.5;
    double s = a * std::log(a);
    if (b > 0.0) s -= b * std::log(b);
    return s;
}

double log_2sinh(double x) {
    // ln(2 sinh x) = x + ln(1 - e^{-2x}) without overflow
    return x + std::log(-std::expm1(-2.0 * x));
}

// Eigenvalues of the arrow matrix [[a, c^T], [c, diag(d)]] with d strictly increasing,
// from the secular equation mu - a + sum c^2/(d - mu) = 0. Each root is bisected in
// coordinates relative to its nearest pole, which keeps small eigenvalues accurate
// to a few ulps of their own size.
VectorXd arrow_eigenvalues(double a, const VectorXd& c, const VectorXd& d) {
    std::vector<double> values;
    std::vector<double> dr, cr;
    for (int i = 0; i < d.size(); ++i) {
        if (c(i) == 0.0) {
            values.push_back(d(i));
        } else {
            dr.push_back(d(i));
            cr.push_back(c(i) * c(i));
        }
    }
    const int m = static_cast<int>(dr.size());
    if (m == 0) {
        values.push_back(a);
    } else {
        double csum = 0.0, cmax = 0.0;
        for (int i = 0; i < m; ++i) {
            csum += std::sqrt(cr[i]);
            cmax = std::max(cmax, std::sqrt(cr[i]));
        }
        const double lower = std::min(a - csum, dr.front() - cmax) - 1.0;
        const double upper = std::max(a + csum, dr.back() + cmax) + 1.0;
        std::vector<double> diff(m);
        auto phi = [&](double origin, double delta) {
            double s = origin + delta - a;
            for (int i = 0; i < m; ++i) s += cr[i] / (diff[i] - delta);
            return s;
        };
        for (int j = 0; j <= m; ++j) {
            double origin, lo, hi;
            if (j == 0) {
                origin = dr.front();
                lo = lower - origin;
                hi = 0.0;
            } else if (j == m) {
                origin = dr.back();
                lo = 0.0;
                hi = upper - origin;
            } else {
                const double mid = 0.5 * (dr[j - 1] + dr[j]);
                for (int i = 0; i < m; ++i) diff[i] = dr[i] - dr[j - 1];
                if (phi(dr[j - 1], mid - dr[j - 1]) > 0.0) {
                    origin = dr[j - 1];
                    lo = 0.0;
                    hi = mid - origin;
                } else {
                    origin = dr[j];
                    lo = mid - origin;
                    hi = 0.0;
                }
            }
            for (int i = 0; i < m; ++i) diff[i] = dr[i] - origin;
            for (int it = 0; it < 400; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (mid <= lo || mid >= hi) break;
                if (phi(origin, mid) > 0.0) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            values.push_back(origin + 0.5 * (lo + hi));
        }
    }
    std::sort(values.begin(), values.end());
    return Eigen::Map<VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// Squared normal-mode frequencies when the x-block couples mode 0 only to the others
// and the p-block is diagonal; empty otherwise.
std::optional<VectorXd> arrow_spectrum(const QuadraticForm& form) {
    const int n = form.modes();
    const MatrixXd& m = form.M;
    if (n < 2) return std::nullopt;
    for (int i = 0; i < 2 * n; ++i) {
        for (int j = 0; j < 2 * n; ++j) {
            if (i == j || m(i, j) == 0.0) continue;
            const bool arrow = i < n && j < n && (i == 0 || j == 0);
            if (!arrow) return std::nullopt;
        }
    }
    VectorXd p = m.diagonal().tail(n);
    if (!(p.minCoeff() > 0.0)) return std::nullopt;
    // P^{1/2} K P^{1/2} for diagonal P stays an arrow matrix.
    std::vector<int> order(n - 1);
    for (int i = 0; i < n - 1; ++i) order[i] = i + 1;
    auto dval = [&](int i) { return p(i) * m(i, i); };
    std::sort(order.begin(), order.end(), [&](int x, int y) { return dval(x) < dval(y); });
    VectorXd d(n - 1), c(n - 1);
    for (int i = 0; i < n - 1; ++i) {
        const int idx = order[i];
        d(i) = dval(idx);
        c(i) = std::sqrt(p(0) * p(idx)) * m(0, idx);
        if (i > 0 && !(d(i) > d(i - 1))) return std::nullopt;
    }
    return arrow_eigenvalues(p(0) * m(0, 0), c, d);
}

struct NormalModes {
    MatrixXd O;
    VectorXd nu;
    MatrixXd p_half;      // P^{1/2}, empty when the p-block is the identity
    MatrixXd p_half_inv;  // P^{-1/2}
};

NormalModes normal_modes(const QuadraticForm& form) {
    const int n = form.modes();
    if (form.M.rows() != 2 * n || form.M.cols() != 2 * n) {
        throw DomainError("quadratic form must be square with even dimension");
    }
    if (form.M.topRightCorner(n, n).cwiseAbs().maxCoeff() > 0.0) {
        throw DomainError("quadratic form must have zero xp-blocks");
    }
    NormalModes nm;
    MatrixXd kx = form.x_block();
    const MatrixXd kp = form.p_block();
    if (!is_identity(kp)) {
        nm.p_half = sym_sqrt(kp, false);
        nm.p_half_inv = sym_sqrt(kp, true);
        kx = nm.p_half * kx * nm.p_half;
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(kx);
    if (es.info() != Eigen::Success) throw NumericError("normal-mode eigen-decomposition failed");
    if (es.eigenvalues().minCoeff() <= 0.0) {
        throw NumericError("quadratic form is not positive definite");
    }
    nm.O = es.eigenvectors();
    nm.nu = es.eigenvalues().cwiseSqrt();
    return nm;
}

}  // namespace

CLParams CLParams::make(int N, double omega_S, double beta) {
    if (N < 1) throw DomainError("CLParams: N must be >= 1");
    if (!(omega_S > 0.0) || !(beta > 0.0)) throw DomainError("CLParams: omega_S, beta must be > 0");
    CLParams p;
    p.N = N;
    p.omega_S = omega_S;
    p.beta = beta;
    p.omega.resize(N);
    p.gamma_unit.resize(N);
    const double wmax = p.omega_max();
    const double wmin = p.omega_min();
    const double norm = std::sqrt(wmax / (2.0 * std::numbers::pi * N));
    for (int n = 1; n <= N; ++n) {
        const double w = (static_cast<double>(n) / N) * (wmax - wmin) + wmin;
        p.omega(n - 1) = w;
        p.gamma_unit(n - 1) = w * norm;
    }
    return p;
}

double CLParams::recurrence_time() const {
    return 2.0 * std::numbers::pi * N / (omega_max() - omega_min());
}

double CLParams::renormalization_unit() const {
    return (gamma_unit.array().square() / omega.array().square()).sum();
}

double CLParams::default_dt() const { return 2.0 * std::numbers::pi / (100.0 * omega_max()); }

MatrixXd symplectic_form(int modes) {
    MatrixXd om = MatrixXd::Zero(2 * modes, 2 * modes);
    om.topRightCorner(modes, modes) = MatrixXd::Identity(modes, modes);
    om.bottomLeftCorner(modes, modes) = -MatrixXd::Identity(modes, modes);
    return om;
}

QuadraticForm build_quadratic_form(const CLParams& params, double omega_S_value, double g_value) {
    if (!(g_value >= 0.0)) throw DomainError("build_quadratic_form: g must be >= 0");
    if (!(omega_S_value > 0.0)) throw DomainError("build_quadratic_form: omega_S must be > 0");
    const int n = params.N + 1;
    QuadraticForm f;
    f.M = MatrixXd::Zero(2 * n, 2 * n);
    f.M(0, 0) = omega_S_value * omega_S_value +
                2.0 * g_value * g_value * params.renormalization_unit();
    for (int j = 1; j < n; ++j) {
        f.M(j, j) = params.omega(j - 1) * params.omega(j - 1);
        f.M(0, j) = f.M(j, 0) = g_value * params.gamma_unit(j - 1);
    }
    f.M.bottomRightCorner(n, n) = MatrixXd::Identity(n, n);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(f.x_block(), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success || !(es.eigenvalues().minCoeff() > 0.0)) {
        throw NumericError("build_quadratic_form: Hamiltonian is not positive definite");
    }
    return f;
}

QuadraticForm interaction_form(const CLParams& params, double g_value) {
    const int n = params.N + 1;
    QuadraticForm f;
    f.M = MatrixXd::Zero(2 * n, 2 * n);
    for (int j = 1; j < n; ++j) f.M(0, j) = f.M(j, 0) = g_value * params.gamma_unit(j - 1);
    return f;
}

QuadraticForm system_form(const CLParams& params, double omega_S_value) {
    const int n = params.N + 1;
    QuadraticForm f;
    f.M = MatrixXd::Zero(2 * n, 2 * n);
    f.M(0, 0) = omega_S_value * omega_S_value;
    f.M(n, n) = 1.0;
    return f;
}

GaussianState thermal_state(const QuadraticForm& form, double beta) {
    if (!(beta > 0.0)) throw DomainError("thermal_state: beta must be > 0");
    const NormalModes nm = normal_modes(form);
    const int n = form.modes();
    VectorXd cx(n), cp(n);
    for (int k = 0; k < n; ++k) {
        const double c = 1.0 / std::tanh(0.5 * beta * nm.nu(k));
        cx(k) = c / (2.0 * nm.nu(k));
        cp(k) = nm.nu(k) * c / 2.0;
    }
    MatrixXd x = nm.O * cx.asDiagonal() * nm.O.transpose();
    MatrixXd p = nm.O * cp.asDiagonal() * nm.O.transpose();
    if (nm.p_half.size() > 0) {
        x = nm.p_half * x * nm.p_half;
        p = nm.p_half_inv * p * nm.p_half_inv;
    }
    GaussianState s;
    s.cov = MatrixXd::Zero(2 * n, 2 * n);
    s.cov.topLeftCorner(n, n) = 0.5 * (x + x.transpose());
    s.cov.bottomRightCorner(n, n) = 0.5 * (p + p.transpose());
    return s;
}

double log_partition(const QuadraticForm& form, double beta) {
    if (!(beta > 0.0)) throw DomainError("log_partition: beta must be > 0");
    const VectorXd nu = normal_mode_frequencies(form);
    double s = 0.0;
    for (int k = 0; k < nu.size(); ++k) s -= log_2sinh(0.5 * beta * nu(k));
    return s;
}

VectorXd normal_mode_frequencies(const QuadraticForm& form) {
    if (const auto mu = arrow_spectrum(form)) {
        if (!(mu->minCoeff() > 0.0)) throw NumericError("quadratic form is not positive definite");
        return mu->cwiseSqrt();
    }
    return normal_modes(form).nu;
}

VectorXd symplectic_eigenvalues(const GaussianState& state) {
    const int n = state.modes();
    const MatrixXd& v = state.cov;
    if (n == 1) {
        const double det = v(0, 0) * v(1, 1) - v(0, 1) * v(1, 0);
        if (!(det > 0.0)) throw NumericError("symplectic_eigenvalues: singular covariance");
        return VectorXd::Constant(1, std::sqrt(det));
    }
    VectorXd nu2;
    if (v.topRightCorner(n, n).cwiseAbs().maxCoeff() == 0.0) {
        const MatrixXd xh = sym_sqrt(v.topLeftCorner(n, n), false);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(xh * v.bottomRightCorner(n, n) * xh,
                                                   Eigen::EigenvaluesOnly);
        nu2 = es.eigenvalues();
    } else {
        const MatrixXd vh = sym_sqrt(v, false);
        const MatrixXd om = symplectic_form(n);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(vh * om.transpose() * v * om * vh,
                                                   Eigen::EigenvaluesOnly);
        const VectorXd all = es.eigenvalues();
        nu2.resize(n);
        for (int k = 0; k < n; ++k) nu2(k) = 0.5 * (all(2 * k) + all(2 * k + 1));
    }
    return nu2.cwiseMax(0.0).cwiseSqrt();
}

double vn_entropy(const GaussianState& state) {
    const VectorXd nu = symplectic_eigenvalues(state);
    double s = 0.0;
    for (int k = 0; k < nu.size(); ++k) s += entropy_term(std::max(nu(k), 0.5));
    return s;
}

namespace {

// Williamson transform: T with T V T^T = diag(nu, nu) and T Omega T^T = Omega.
struct Williamson {
    MatrixXd T;
    VectorXd nu;
};

Williamson williamson(const MatrixXd& v) {
    const int n = static_cast<int>(v.rows() / 2);
    const MatrixXd vh_inv = sym_sqrt(v, true);
    const MatrixXd a = vh_inv * symplectic_form(n) * vh_inv;
    using Cplx = std::complex<double>;
    const Eigen::MatrixXcd ia = Cplx(0.0, 1.0) * a.cast<Cplx>();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(ia);
    if (es.info() != Eigen::Success) throw NumericError("Williamson decomposition failed");
    // Eigenvalues come in pairs -1/nu_k, +1/nu_k; the positive half sits at the top.
    Williamson w;
    w.nu.resize(n);
    MatrixXd o(2 * n, 2 * n);
    for (int k = 0; k < n; ++k) {
        const int idx = n + k;
        const double lam = es.eigenvalues()(idx);
        if (!(lam > 0.0)) throw NumericError("Williamson decomposition: unexpected spectrum");
        const Eigen::VectorXcd wk = es.eigenvectors().col(idx);
        o.col(k) = std::sqrt(2.0) * wk.imag();
        o.col(n + k) = std::sqrt(2.0) * wk.real();
        w.nu(k) = 1.0 / lam;
    }
    VectorXd dh(2 * n);
    dh << w.nu.cwiseSqrt(), w.nu.cwiseSqrt();
    w.T = dh.asDiagonal() * o.transpose() * vh_inv;
    return w;
}

}  // namespace

double relative_entropy(const GaussianState& rho, const GaussianState& sigma) {
    if (rho.cov.rows() != sigma.cov.rows()) {
        throw DomainError("relative_entropy: states have different mode counts");
    }
    const int n = sigma.modes();
    const Williamson w = williamson(sigma.cov);
    if (w.nu.minCoeff() <= 0.5 + pure_margin) {
        throw DomainError("relative_entropy: reference state is (near) pure, support mismatch");
    }
    const MatrixXd tv = w.T * rho.cov * w.T.transpose();
    double cross = 0.0;
    for (int k = 0; k < n; ++k) {
        const double nu = w.nu(k);
        const double gk = std::log((nu + 0.5) / (nu - 0.5));
        const double half_trace = 0.5 * (tv(k, k) + tv(n + k, n + k));
        cross += gk * half_trace - 0.5 * gk + std::log(nu + 0.5);
    }
    return cross - vn_entropy(rho);
}

GaussianState reduce_to_system(const GaussianState& state) {
    const int n = state.modes();
    GaussianState r;
    r.cov.resize(2, 2);
    r.cov << state.cov(0, 0), state.cov(0, n), state.cov(n, 0), state.cov(n, n);
    return r;
}

double expectation(const GaussianState& state, const QuadraticForm& form) {
    if (state.cov.rows() != form.M.rows()) throw DomainError("expectation: dimension mismatch");
    return 0.5 * state.cov.cwiseProduct(form.M).sum();
}

GaussianState product_thermal_state(const CLParams& params, double omega_S_value) {
    const int n = params.N + 1;
    GaussianState s;
    s.cov = MatrixXd::Zero(2 * n, 2 * n);
    for (int j = 0; j < n; ++j) {
        const double w = j == 0 ? omega_S_value : params.omega(j - 1);
        const double c = 1.0 / std::tanh(0.5 * params.beta * w);
        s.cov(j, j) = c / (2.0 * w);
        s.cov(n + j, n + j) = w * c / 2.0;
    }
    return s;
}

KMCovariance km_covariance(const CLParams& params, CovTarget target, double g_value,
                           double omega_S_value, double h) {
    if (!(g_value >= 0.0)) throw DomainError("km_covariance: g must be >= 0");
    if (!(h > 0.0)) throw DomainError("km_covariance: step must be > 0");
    const QuadraticForm base = build_quadratic_form(params, omega_S_value, g_value);
    const int n = params.N + 1;
    double step = h;
    std::function<QuadraticForm(double)> form_at;
    if (target == CovTarget::V) {
        // Coupling amplitude a in front of V with the renormalisation held at g:
        // d^2/dlambda^2 at lambda g equals g^2 d^2/da^2, so the a-curvature is cov(V,V) directly.
        step = g_value > 0.0 ? h * g_value : h;
        form_at = [&, n](double a) {
            QuadraticForm f = base;
            for (int j = 1; j < n; ++j) f.M(0, j) = f.M(j, 0) = a * params.gamma_unit(j - 1);
            return f;
        };
    } else {
        form_at = [&, n](double lam) {
            QuadraticForm f = base;
            f.M(0, 0) += (lam - 1.0) * omega_S_value * omega_S_value;
            f.M(n, n) = lam;
            return f;
        };
    }
    const double x0 = target == CovTarget::V ? g_value : 1.0;
    const double beta = params.beta;
    // Second difference accumulated mode by mode to limit cancellation.
    const VectorXd nu_p = normal_mode_frequencies(form_at(x0 + step));
    const VectorXd nu_0 = normal_mode_frequencies(form_at(x0));
    const VectorXd nu_m = normal_mode_frequencies(form_at(x0 - step));
    // Roundoff model: each term carries a few ulps of its own size plus a few ulps of
    // relative error in mu_k, which enters through mu df/dmu = -(beta nu/4) coth(beta nu/2).
    double d2 = 0.0;
    double noise2 = 0.0;
    for (int k = 0; k < nu_0.size(); ++k) {
        const double x = 0.5 * beta * nu_0(k);
        const double fp = -log_2sinh(0.5 * beta * nu_p(k));
        const double f0 = -log_2sinh(x);
        const double fm = -log_2sinh(0.5 * beta * nu_m(k));
        d2 += (fp - f0) + (fm - f0);
        const double t = std::abs(f0) + 0.5 * x / std::tanh(x);
        noise2 += t * t;
    }
    const double noise = 4.0 * std::numeric_limits<double>::epsilon() * std::sqrt(noise2);
    KMCovariance out;
    out.value = d2 / (step * step) / (beta * beta);
    out.precision_warning = std::abs(d2) < 1e4 * noise;
    return out;
}

// ---------------------------------------------------------------------------
// Time evolution.
//
// The generator is split as A(t) = A0 + B(t): A0 is the uncoupled motion with the
// system frequency frozen at its initial value (diagonal, propagated exactly), and
// B(t) = [[0,0],[-Vt,0]] carries the rank-2 remainder Vt = K(t) - K0. The
// interaction-picture propagator is advanced with the two-node fourth-order Magnus
// step; its exponent has rank 4 and is exponentiated through a 4x4 series.
// ---------------------------------------------------------------------------

namespace {

struct FreeMotion {
    VectorXd w;  // mode frequencies, system first
    int n{0};

    // y = e^{A0 t} x  (transpose=false) or (e^{A0 t})^T x (transpose=true)
    void apply(double t, const Eigen::Ref<const MatrixXd>& x, Eigen::Ref<MatrixXd> y,
               bool transpose) const {
        for (int j = 0; j < n; ++j) {
            const double c = std::cos(w(j) * t);
            const double s = std::sin(w(j) * t);
            const double a = s / w(j);
            const double b = -w(j) * s;
            const double m12 = transpose ? b : a;
            const double m21 = transpose ? a : b;
            for (int col = 0; col < x.cols(); ++col) {
                const double xj = x(j, col);
                const double pj = x(n + j, col);
                y(j, col) = c * xj + m12 * pj;
                y(n + j, col) = m21 * xj + c * pj;
            }
        }
    }
};

struct ControlState {
    double d0{0.0};
    double g{0.0};
};

class Stepper {
public:
    Stepper(const CLParams& params, const schedules::ProtocolSchedule& schedule)
        : params_(params), schedule_(schedule) {
        n_ = params.N + 1;
        free_.n = n_;
        free_.w.resize(n_);
        d0_ref_ = control(0.0).d0;
        free_.w(0) = std::sqrt(d0_ref_);
        free_.w.tail(params.N) = params.omega;
    }

    ControlState control(double t) const {
        const double w = schedule_.drive_value(t);
        const double g = schedule_.coupling(t);
        return {w * w + 2.0 * g * g * params_.renormalization_unit(), g};
    }

    // Interaction-picture factors at time t: B~(t) = U Vt^T with U = e^{-A0 t}[0;-P]Q and
    // Vt = e^{A0 t}^T [P;0], P = [e0, coupling column].
    void factors(double t, MatrixXd& u, MatrixXd& v) const {
        // Vt = P Q P^T with P = [e0, w] and Q = [[delta, 1], [1, 0]], so P Q = [delta e0 + w, e0].
        const ControlState c = control(t);
        const double delta = c.d0 - d0_ref_;
        MatrixXd q0 = MatrixXd::Zero(2 * n_, 2);
        MatrixXd p0 = MatrixXd::Zero(2 * n_, 2);
        q0(n_, 0) = -delta;
        q0(n_, 1) = -1.0;
        p0(0, 0) = 1.0;
        for (int j = 1; j < n_; ++j) {
            const double wj = c.g * params_.gamma_unit(j - 1);
            q0(n_ + j, 0) = -wj;
            p0(j, 1) = wj;
        }
        u.resize(2 * n_, 2);
        v.resize(2 * n_, 2);
        free_.apply(-t, q0, u, false);
        free_.apply(t, p0, v, true);
    }

    // One Magnus step of length h from t on the interaction-picture propagator.
    void step(double t, double h, MatrixXd& s_tilde) const {
        const auto [t1, t2] = numerics::gauss2_nodes(t, h);
        MatrixXd u1, v1, u2, v2;
        factors(t1, u1, v1);
        factors(t2, u2, v2);
        MatrixXd U(2 * n_, 4), V(2 * n_, 4);
        U << u1, u2;
        V << v1, v2;
        const Eigen::Matrix4d G = V.transpose() * U;
        const double c = std::sqrt(3.0) * h * h / 12.0;
        Eigen::Matrix4d Z = Eigen::Matrix4d::Zero();
        Z.topLeftCorner<2, 2>() = 0.5 * h * Eigen::Matrix2d::Identity();
        Z.bottomRightCorner<2, 2>() = 0.5 * h * Eigen::Matrix2d::Identity();
        Z.topRightCorner<2, 2>() = -c * G.block<2, 2>(0, 2);  // V1^T U2
        Z.bottomLeftCorner<2, 2>() = c * G.block<2, 2>(2, 0);  // V2^T U1
        // exp(U Z V^T) = I + U phi(Z G) Z V^T, phi(x) = (e^x - 1)/x
        const Eigen::Matrix4d X = Z * G;
        Eigen::Matrix4d phi = Eigen::Matrix4d::Identity();
        Eigen::Matrix4d term = Eigen::Matrix4d::Identity();
        for (int j = 2; j < 40; ++j) {
            term = term * X / static_cast<double>(j);
            phi += term;
            if (term.cwiseAbs().maxCoeff() < 1e-18) break;
        }
        const Eigen::Matrix4d core = phi * Z;
        const MatrixXd proj = V.transpose() * s_tilde;  // 4 x m
        s_tilde.noalias() += U * (core * proj);
    }

    // Full propagator S = e^{A0 t} S~.
    MatrixXd full(double t, const MatrixXd& s_tilde) const {
        MatrixXd s(s_tilde.rows(), s_tilde.cols());
        free_.apply(t, s_tilde, s, false);
        return s;
    }

    // Row 0 of the x-block of sigma(t) = S sigma0 S^T, i.e. <x x_j>.
    VectorXd system_row(double t, const MatrixXd& s_tilde, const MatrixXd& sigma0) const {
        const double w0 = free_.w(0);
        const double c0 = std::cos(w0 * t), s0 = std::sin(w0 * t);
        const Eigen::RowVectorXd row = c0 * s_tilde.row(0) + (s0 / w0) * s_tilde.row(n_);
        const VectorXd u = sigma0 * row.transpose();
        const VectorXd y = s_tilde * u;
        VectorXd r(n_);
        for (int j = 0; j < n_; ++j) {
            const double c = std::cos(free_.w(j) * t), s = std::sin(free_.w(j) * t);
            r(j) = c * y(j) + (s / free_.w(j)) * y(n_ + j);
        }
        return r;
    }

    MatrixXd form_matrix(double t) const {
        const ControlState c = control(t);
        MatrixXd m = MatrixXd::Zero(2 * n_, 2 * n_);
        m(0, 0) = c.d0;
        for (int j = 1; j < n_; ++j) {
            m(j, j) = params_.omega(j - 1) * params_.omega(j - 1);
            m(0, j) = m(j, 0) = c.g * params_.gamma_unit(j - 1);
        }
        m.bottomRightCorner(n_, n_).setIdentity();
        return m;
    }

    int n() const { return n_; }

private:
    const CLParams& params_;
    const schedules::ProtocolSchedule& schedule_;
    FreeMotion free_;
    int n_{0};
    double d0_ref_{0.0};
};

double symplectic_defect(const MatrixXd& s) {
    const int n = static_cast<int>(s.rows() / 2);
    // S Omega S^T with Omega S^T formed by a block swap.
    MatrixXd os(s.cols(), s.rows());
    os.topRows(n) = s.rightCols(n).transpose();
    os.bottomRows(n) = -s.leftCols(n).transpose();
    return (s * os - symplectic_form(n)).cwiseAbs().maxCoeff();
}

std::vector<double> stage_grid(const schedules::ProtocolSchedule& schedule, double dt) {
    std::vector<double> grid{0.0};
    const auto b = schedule.boundaries();
    for (int s = 0; s < 3; ++s) {
        const double len = b[s + 1] - b[s];
        if (len <= 0.0) continue;
        const int steps = std::max(1, static_cast<int>(std::ceil(len / dt - 1e-9)));
        for (int i = 1; i <= steps; ++i) {
            grid.push_back(i == steps ? b[s + 1] : b[s] + len * i / steps);
        }
    }
    return grid;
}

}  // namespace

Trajectory evolve(const CLParams& params, const GaussianState& initial,
                  const schedules::ProtocolSchedule& schedule, const EvolveOptions& options) {
    const double dt = options.dt > 0.0 ? options.dt : params.default_dt();
    if (dt > 2.0 * std::numbers::pi / (50.0 * params.omega_max()) * (1.0 + 1e-12)) {
        throw DomainError("evolve: dt exceeds 2 pi / (50 omega_max)");
    }
    const int n = params.N + 1;
    if (initial.cov.rows() != 2 * n) throw DomainError("evolve: state dimension mismatch");
    Stepper stepper(params, schedule);
    const std::vector<double> grid = stage_grid(schedule, dt);
    MatrixXd s_tilde = MatrixXd::Identity(2 * n, 2 * n);

    Trajectory tr;
    double work = 0.0;
    VectorXd row_prev = stepper.system_row(0.0, s_tilde, initial.cov);
    ControlState c_prev = stepper.control(0.0);
    tr.t.push_back(0.0);
    tr.work.push_back(0.0);
    if (options.record_every > 0) tr.states.push_back(initial);

    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        const double t = grid[i];
        const double h = grid[i + 1] - t;
        stepper.step(t, h, s_tilde);
        const double t_next = grid[i + 1];
        const ControlState c_next = stepper.control(t_next);
        const bool driven = c_next.d0 != c_prev.d0 || c_next.g != c_prev.g;
        if (driven) {
            const VectorXd row_next = stepper.system_row(t_next, s_tilde, initial.cov);
            const VectorXd row_mid = 0.5 * (row_prev + row_next);
            double dw = 0.5 * (c_next.d0 - c_prev.d0) * row_mid(0);
            const double dg = c_next.g - c_prev.g;
            if (dg != 0.0) dw += dg * params.gamma_unit.dot(row_mid.tail(params.N));
            work += dw;
            row_prev = row_next;
        } else if (i + 2 < grid.size()) {
            row_prev = stepper.system_row(t_next, s_tilde, initial.cov);
        }
        c_prev = c_next;
        const bool last = i + 2 == grid.size();
        tr.t.push_back(t_next);
        tr.work.push_back(work);
        if (options.defect_check_every > 0 &&
            ((i + 1) % static_cast<std::size_t>(options.defect_check_every) == 0 || last)) {
            tr.max_symplectic_defect = std::max(tr.max_symplectic_defect, symplectic_defect(s_tilde));
            if (tr.max_symplectic_defect > 1e-6) {
                throw AccuracyError("evolve: symplectic defect " +
                                    std::to_string(tr.max_symplectic_defect) + " exceeds 1e-6");
            }
        }
        const bool record = options.record_every > 0 &&
                            ((i + 1) % static_cast<std::size_t>(options.record_every) == 0 || last);
        if (record || last) {
            const MatrixXd s = stepper.full(t_next, s_tilde);
            GaussianState st;
            st.cov = s * initial.cov * s.transpose();
            st.cov = 0.5 * (st.cov + st.cov.transpose()).eval();
            if (record) tr.states.push_back(st);
            if (last) tr.final_state = st;
        }
    }
    if (!tr.final_state) tr.final_state = initial;
    return tr;
}

ProtocolResult run_protocol(const CLParams& params, const schedules::ProtocolSchedule& schedule,
                            const EvolveOptions& options) {
    const double g_start = schedule.coupling(0.0);
    const double g_end = schedule.coupling(schedule.total_time());
    if (std::abs(g_start - g_end) > 1e-12 * std::max(1.0, g_start)) {
        throw DomainError("run_protocol: schedule must start and end at the same coupling");
    }
    const double T = schedule.total_time();
    const QuadraticForm f_i = build_quadratic_form(params, schedule.drive_value(0.0), g_start);
    const QuadraticForm f_f = build_quadratic_form(params, schedule.drive_value(T), g_end);
    const GaussianState rho0 = thermal_state(f_i, params.beta);

    ProtocolResult r;
    r.trajectory = evolve(params, rho0, schedule, options);
    r.W = r.trajectory.work.back();
    r.W_energy_balance = expectation(*r.trajectory.final_state, f_f) - expectation(rho0, f_i);
    r.delta_F = -(log_partition(f_f, params.beta) - log_partition(f_i, params.beta)) / params.beta;
    r.W_diss = r.W - r.delta_F;
    if (r.W_diss < -1e-6 * std::abs(r.W)) {
        throw AccountingError("run_protocol: negative dissipated work " + std::to_string(r.W_diss));
    }
    return r;
}

// ---------------------------------------------------------------------------

QuenchPropagator::QuenchPropagator(const QuadraticForm& form) {
    if (!is_identity(form.p_block())) {
        throw DomainError("QuenchPropagator: p-block must be the identity");
    }
    const NormalModes nm = normal_modes(form);
    O_ = nm.O;
    nu_ = nm.nu;
    n_ = form.modes();
}

GaussianState QuenchPropagator::propagate(const GaussianState& initial, double t) const {
    const int n = n_;
    VectorXd c(n), s(n);
    for (int k = 0; k < n; ++k) {
        c(k) = std::cos(nu_(k) * t);
        s(k) = std::sin(nu_(k) * t);
    }
    // E = blkdiag(O,O) [[C, S/nu], [-nu S, C]] blkdiag(O^T,O^T)
    MatrixXd e(2 * n, 2 * n);
    e.topLeftCorner(n, n) = O_ * c.asDiagonal() * O_.transpose();
    e.topRightCorner(n, n) = O_ * s.cwiseQuotient(nu_).asDiagonal() * O_.transpose();
    e.bottomLeftCorner(n, n) = -O_ * s.cwiseProduct(nu_).asDiagonal() * O_.transpose();
    e.bottomRightCorner(n, n) = e.topLeftCorner(n, n);
    GaussianState out;
    out.cov = e * initial.cov * e.transpose();
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    return out;
}

void QuenchPropagator::prepare(const GaussianState& initial, const VectorXd& bath_weights) {
    const int n = n_;
    if (bath_weights.size() != n - 1) throw DomainError("QuenchPropagator: weight size mismatch");
    xm_ = O_.transpose() * initial.cov.topLeftCorner(n, n) * O_;
    pm_ = O_.transpose() * initial.cov.bottomRightCorner(n, n) * O_;
    cm_ = O_.transpose() * initial.cov.topRightCorner(n, n) * O_;
    sys_row_ = O_.row(0).transpose();
    bath_row_ = O_.bottomRows(n - 1).transpose() * bath_weights;
}

QuenchPropagator::SystemMoments QuenchPropagator::moments(double t) const {
    const int n = n_;
    VectorXd c(n), s(n);
    for (int k = 0; k < n; ++k) {
        c(k) = std::cos(nu_(k) * t);
        s(k) = std::sin(nu_(k) * t);
    }
    // A linear form r^T x(t) in mode coordinates: sum_k r_k (c_k q_k + s_k/nu_k p_k);
    // r^T p(t): sum_k r_k (-nu_k s_k q_k + c_k p_k).
    const VectorXd ax = sys_row_.cwiseProduct(c);
    const VectorXd bx = sys_row_.cwiseProduct(s.cwiseQuotient(nu_));
    const VectorXd ap = -sys_row_.cwiseProduct(s.cwiseProduct(nu_));
    const VectorXd bp = sys_row_.cwiseProduct(c);
    const VectorXd av = bath_row_.cwiseProduct(c);
    const VectorXd bv = bath_row_.cwiseProduct(s.cwiseQuotient(nu_));
    auto pair = [&](const VectorXd& a1, const VectorXd& b1, const VectorXd& a2, const VectorXd& b2) {
        return a1.dot(xm_ * a2) + a1.dot(cm_ * b2) + b1.dot(cm_.transpose() * a2) + b1.dot(pm_ * b2);
    };
    SystemMoments m;
    m.xx = pair(ax, bx, ax, bx);
    m.pp = pair(ap, bp, ap, bp);
    m.xp = 0.5 * (pair(ax, bx, ap, bp) + pair(ap, bp, ax, bx));
    m.x_with_bath = pair(ax, bx, av, bv);
    return m;
}

// ---------------------------------------------------------------------------

DecayFit fit_exponential_decay(const std::vector<double>& t, const std::vector<double>& s,
                               double t_start, double t_stop, double floor_ratio) {
    DecayFit fit;
    std::size_t i0 = 0;
    while (i0 < t.size() && t[i0] < t_start) ++i0;
    if (i0 >= t.size()) throw DomainError("fit_exponential_decay: window starts after the data");
    std::size_t i1 = i0;
    const double ref = std::abs(s[i0]);
    while (i1 < t.size() && t[i1] <= t_stop && std::abs(s[i1]) >= floor_ratio * ref) ++i1;
    // The decaying tail keeps one sign; fit the samples that carry it.
    double net = 0.0;
    for (std::size_t i = i0; i < i1; ++i) net += s[i];
    const double sign = net >= 0.0 ? 1.0 : -1.0;
    std::vector<double> xs, ys;
    for (std::size_t i = i0; i < i1; ++i) {
        if (sign * s[i] > 0.0) {
            xs.push_back(t[i]);
            ys.push_back(std::log(sign * s[i]));
        }
    }
    fit.t_start = t[i0];
    fit.t_end = t[i1 > i0 ? i1 - 1 : i0];
    fit.points = static_cast<int>(xs.size());
    if (xs.size() < 3) {
        fit.unreliable = true;
        return fit;
    }
    const numerics::FitResult lf = numerics::linear_fit(xs, ys);
    fit.tau = lf.slope < 0.0 ? -1.0 / lf.slope : std::numeric_limits<double>::infinity();
    fit.r_squared = lf.r_squared;
    fit.unreliable = lf.r_squared < 0.9 || !(lf.slope < 0.0);
    return fit;
}

ThermalizationResult thermalization_experiment(const CLParams& params, double g0, double k,
                                               const ThermalizationOptions& options) {
    if (!(k >= 1.0) || !(g0 > 0.0)) throw DomainError("thermalization_experiment: need k >= 1, g0 > 0");
    const double guard = params.recurrence_time();
    const double horizon = options.horizon > 0.0 ? options.horizon : guard;
    if (horizon > guard) {
        throw DomainError("thermalization_experiment: horizon beyond the bath recurrence time");
    }
    const double g = k * g0;
    const QuadraticForm form = build_quadratic_form(params, params.omega_S, g);
    const GaussianState eq = thermal_state(form, params.beta);
    const GaussianState eq_sys = reduce_to_system(eq);
    const double v_eq = expectation(eq, interaction_form(params, g));
    const GaussianState rho0 = product_thermal_state(params, params.omega_S);

    QuenchPropagator prop(form);
    prop.prepare(rho0, g * params.gamma_unit);

    ThermalizationResult r;
    r.k = k;
    const auto samples = static_cast<std::size_t>(std::floor(horizon / options.sample_dt)) + 1;
    for (std::size_t i = 0; i < samples; ++i) {
        const double t = options.sample_dt * static_cast<double>(i);
        const auto m = prop.moments(t);
        GaussianState red;
        red.cov.resize(2, 2);
        red.cov << m.xx, m.xp, m.xp, m.pp;
        r.t.push_back(t);
        r.rel_entropy.push_back(std::max(relative_entropy(red, eq_sys), 0.0));
        r.delta_V.push_back(m.x_with_bath - v_eq);
    }
    const double window = options.window > 0.0 ? options.window
                                               : 2.0 * std::numbers::pi / params.omega_S;
    const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(window / options.sample_dt)));
    r.delta_V_avg = numerics::moving_average(r.delta_V, std::min(w, r.delta_V.size()));
    const double transient = options.transient > 0.0 ? options.transient : 2.0 / params.omega_S;
    r.fit_S = fit_exponential_decay(r.t, r.rel_entropy, transient, horizon, options.floor_ratio);
    // Skip the half window over which the centered average is edge-truncated.
    r.fit_V = fit_exponential_decay(r.t, r.delta_V_avg, transient + 0.5 * window,
                                    horizon - 0.5 * window, options.floor_ratio);
    return r;
}

}  // namespace isokit::gaussian
