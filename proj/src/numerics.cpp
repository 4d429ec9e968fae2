#include "isokit/numerics.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <exception>
#include <limits>
#include <queue>
#include <string>
#include <thread>

namespace isokit::numerics {

namespace {

constexpr std::array<double, 8> kronrod_x = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};

constexpr std::array<double, 8> kronrod_w = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};

constexpr std::array<double, 4> gauss_w = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
    double a;
    double b;
    double kronrod;
    double error;
    int depth;
    bool operator<(const Panel& other) const { return error < other.error; }
};

Panel gk15(const std::function<double(double)>& f, double a, double b, int depth) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double k = kronrod_w[7] * fc;
    double g = gauss_w[3] * fc;
    for (int i = 0; i < 7; ++i) {
        const double dx = h * kronrod_x[i];
        const double s = f(c - dx) + f(c + dx);
        k += kronrod_w[i] * s;
        if (i % 2 == 1) g += gauss_w[i / 2] * s;
    }
    k *= h;
    g *= h;
    return {a, b, k, std::abs(k - g), depth};
}

}  // namespace

double adaptive_quad(const std::function<double(double)>& f, double a, double b, double rel_tol) {
    if (!(a <= b)) throw DomainError("adaptive_quad: requires a <= b");
    if (a == b) return 0.0;
    std::priority_queue<Panel> panels;
    Panel whole = gk15(f, a, b, 0);
    double total = whole.kronrod;
    double error = whole.error;
    panels.push(whole);
    const double floor = 64.0 * std::numeric_limits<double>::epsilon();
    while (error > rel_tol * std::abs(total) && error > floor * std::abs(total)) {
        if (!std::isfinite(total)) throw NumericError("adaptive_quad: non-finite integrand");
        Panel worst = panels.top();
        if (worst.depth >= 30) {
            throw NonConvergenceError("adaptive_quad: no convergence after 30 refinement levels");
        }
        panels.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        Panel left = gk15(f, worst.a, mid, worst.depth + 1);
        Panel right = gk15(f, mid, worst.b, worst.depth + 1);
        total += left.kronrod + right.kronrod - worst.kronrod;
        error += left.error + right.error - worst.error;
        panels.push(left);
        panels.push(right);
        if (total == 0.0 && error == 0.0) break;
    }
    // Re-sum to shed the rounding drift accumulated by the incremental updates.
    double sum = 0.0;
    while (!panels.empty()) {
        sum += panels.top().kronrod;
        panels.pop();
    }
    return sum;
}

double simpson(std::span<const double> samples, double h) {
    const std::size_t n = samples.size();
    if (n < 3 || n % 2 == 0) throw DomainError("simpson: needs an odd sample count >= 3");
    double s = samples.front() + samples.back();
    for (std::size_t i = 1; i + 1 < n; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * samples[i];
    return s * h / 3.0;
}

FitResult linear_fit(std::span<const double> xs, std::span<const double> ys) {
    const std::size_t n = xs.size();
    if (n != ys.size() || n < 2) throw DomainError("linear_fit: need matching samples, n >= 2");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) throw DomainError("linear_fit: abscissae are all equal");
    FitResult r;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = ys[i] - (r.intercept + r.slope * xs[i]);
        ss_res += e * e;
    }
    r.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    return r;
}

FitResult loglog_fit(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() < 3) throw DomainError("loglog_fit: need at least 3 points");
    std::vector<double> lx(xs.size()), ly(ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) {
            throw DomainError("loglog_fit: nonpositive value at index " + std::to_string(i));
        }
        lx[i] = std::log(xs[i]);
        ly[i] = std::log(ys[i]);
    }
    return linear_fit(lx, ly);
}

std::vector<double> moving_average(std::span<const double> series, std::size_t window) {
    const std::size_t n = series.size();
    if (window < 1 || window > n) throw DomainError("moving_average: need 1 <= window <= length");
    const std::size_t left = (window - 1) / 2;
    const std::size_t right = window / 2;
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + series[i];
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t reach = std::min(i, n - 1 - i);
        const std::size_t lo = i - std::min(left, reach);
        const std::size_t hi = i + std::min(right, reach);
        out[i] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
    }
    return out;
}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double rng_uniform(std::uint64_t seed, std::uint64_t index) {
    const std::uint64_t bits = mix64(mix64(seed) ^ (index * 0xd1b54a32d192ed03ULL + 1));
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

GoldenResult golden_section_minimize(const std::function<double(double)>& f, double a, double b,
                                     double abs_tol) {
    if (!(a < b)) throw DomainError("golden_section_minimize: requires a < b");
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c);
    double fd = f(d);
    while (b - a > abs_tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    const double x = 0.5 * (a + b);
    return {x, f(x)};
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
    if (count == 0) return;
    const std::size_t workers =
        std::min<std::size_t>(count, static_cast<std::size_t>(std::max(threads, 1)));
    std::vector<std::exception_ptr> errors(count);
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        body(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace isokit::numerics
