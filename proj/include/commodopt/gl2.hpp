#pragma once

// GL2: joint Gaussian dynamics of x = ln A and the convenience yield y,
//   d[x, y]' = Lambda [x, y]' dt + M(t) dt + [sigma_a dW_a, sigma_y dW_y]',
//   Lambda = [[-kappa_x, -1], [kappa beta, -kappa]],  M(t) = [r - sigma_a^2/2, kappa alpha(t)].

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "commodopt/black.hpp"
#include "commodopt/errors.hpp"
#include "commodopt/payoff.hpp"

namespace commodopt {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

struct Mat2 {
    double a = 0.0, b = 0.0;
    double c = 0.0, d = 0.0;

    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    Mat2 transpose() const { return {a, c, b, d}; }
    double trace() const { return a + d; }
    double det() const { return a * d - b * c; }
};

inline Mat2 operator*(const Mat2& m, const Mat2& n) {
    return {m.a * n.a + m.b * n.c, m.a * n.b + m.b * n.d, m.c * n.a + m.d * n.c, m.c * n.b + m.d * n.d};
}
inline Vec2 operator*(const Mat2& m, const Vec2& v) { return {m.a * v.x + m.b * v.y, m.c * v.x + m.d * v.y}; }
inline Mat2 operator*(double s, const Mat2& m) { return {s * m.a, s * m.b, s * m.c, s * m.d}; }
inline Mat2 operator+(const Mat2& m, const Mat2& n) { return {m.a + n.a, m.b + n.b, m.c + n.c, m.d + n.d}; }
inline Mat2 operator-(const Mat2& m, const Mat2& n) { return {m.a - n.a, m.b - n.b, m.c - n.c, m.d - n.d}; }
inline Vec2 operator+(const Vec2& u, const Vec2& v) { return {u.x + v.x, u.y + v.y}; }
inline Vec2 operator-(const Vec2& u, const Vec2& v) { return {u.x - v.x, u.y - v.y}; }

// Squared discriminant root of a 2x2 matrix: disc^2 = (a - d)^2 + 4 b c.
// Negative values mean complex-conjugate eigenvalues.
inline double discriminant_sq(const Mat2& m) { return (m.a - m.d) * (m.a - m.d) + 4.0 * m.b * m.c; }

// exp(m t) by the closed 2x2 formula
//   e^{(a+d)t/2} [cosh(disc t/2) I + sinh(disc t/2)/disc (2m - (a+d) I)],
// with trigonometric functions when disc^2 < 0.
inline Mat2 mat_exp_2x2(const Mat2& m, double t) {
    const double s = 0.5 * m.trace();
    const double q = discriminant_sq(m);
    const double half = 0.5 * t;
    double ch, sh_over;  // cosh(disc t/2), sinh(disc t/2) / disc
    double growth = std::exp(s * t);
    if (q >= 0.0) {
        const double disc = std::sqrt(q);
        const double arg = disc * half;
        if (std::abs(disc * t) < 1e-6) {
            ch = 1.0 + 0.5 * arg * arg;
            sh_over = half * (1.0 + arg * arg / 6.0);
        } else if (arg < 350.0) {
            ch = std::cosh(arg);
            sh_over = std::sinh(arg) / disc;
        } else {
            // Combine with the trace factor before exponentiating to stay finite.
            double e1 = std::exp(s * t + arg), e2 = std::exp(s * t - arg);
            ch = 0.5 * (e1 + e2);
            sh_over = 0.5 * (e1 - e2) / disc;
            growth = 1.0;
        }
    } else {
        const double omega = std::sqrt(-q);
        const double arg = omega * half;
        if (std::abs(omega * t) < 1e-6) {
            ch = 1.0 - 0.5 * arg * arg;
            sh_over = half * (1.0 - arg * arg / 6.0);
        } else {
            ch = std::cos(arg);
            sh_over = std::sin(arg) / omega;
        }
    }
    const Mat2 n = m - Mat2{s, 0.0, 0.0, s};
    return growth * (ch * Mat2::identity() + (2.0 * sh_over) * n);
}

// Right-continuous step function: value[k] on [start[k], start[k+1]).
struct PiecewiseConstant {
    std::vector<double> start{0.0};
    std::vector<double> value{0.0};

    static PiecewiseConstant constant(double v) { return {{0.0}, {v}}; }

    void validate() const {
        if (start.empty() || start.size() != value.size())
            throw DomainError("PiecewiseConstant: start/value size mismatch");
        if (start.front() != 0.0) throw DomainError("PiecewiseConstant: first piece must start at 0");
        for (std::size_t k = 1; k < start.size(); ++k)
            if (!(start[k] > start[k - 1])) throw DomainError("PiecewiseConstant: start times must increase");
    }

    double operator()(double t) const {
        auto it = std::upper_bound(start.begin(), start.end(), t);
        return value[std::max<std::ptrdiff_t>(0, it - start.begin() - 1)];
    }
};

struct Gl2Params {
    double kappa = 0.0;  // yield mean reversion
    double beta = 0.0;   // coupling of the yield target to x
    PiecewiseConstant alpha = PiecewiseConstant::constant(0.0);
    double sigma_a = 0.0;
    double sigma_y = 0.0;
    double rho = 0.0;
    double r = 0.0;
    double x0 = 0.0;  // ln A_0
    double y0 = 0.0;
    double kappa_x = 0.0;  // explicit mean reversion of x

    Mat2 lambda() const { return {-kappa_x, -1.0, kappa * beta, -kappa}; }
    Mat2 noise_cov() const {
        double cxy = rho * sigma_a * sigma_y;
        return {sigma_a * sigma_a, cxy, cxy, sigma_y * sigma_y};
    }
    Vec2 drift(double t) const { return {r - 0.5 * sigma_a * sigma_a, kappa * alpha(t)}; }
    bool oscillatory() const { return discriminant_sq(lambda()) < 0.0; }

    void validate() const {
        if (!(kappa >= 0.0)) throw DomainError("Gl2Params: kappa must be >= 0");
        if (!(beta >= 0.0)) throw DomainError("Gl2Params: beta must be >= 0");
        if (!(kappa_x >= 0.0)) throw DomainError("Gl2Params: kappa_x must be >= 0");
        if (!(sigma_a > 0.0)) throw DomainError("Gl2Params: sigma_a must be positive");
        if (!(sigma_y >= 0.0)) throw DomainError("Gl2Params: sigma_y must be >= 0");
        if (!(rho >= -1.0 && rho <= 1.0)) throw DomainError("Gl2Params: rho must lie in [-1, 1]");
        alpha.validate();
        const Mat2 l = lambda();
        const double q = discriminant_sq(l);
        double max_re = 0.5 * l.trace() + (q > 0.0 ? 0.5 * std::sqrt(q) : 0.0);
        if (max_re > 1e-12) throw DomainError("Gl2Params: drift matrix has an eigenvalue with positive real part");
    }
};

struct Gl2Moments {
    Vec2 mean;
    Mat2 cov;
};

enum class Gl2Integration { automatic, quadrature, spectral };

namespace detail {

// 64-point Gauss-Legendre rule on [-1, 1].
struct GaussLegendre64 {
    std::array<double, 64> nodes{};
    std::array<double, 64> weights{};

    GaussLegendre64() {
        constexpr int n = 64;
        for (int i = 0; i < n / 2; ++i) {
            double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (int k = 2; k <= n; ++k) {
                    double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-16) break;
            }
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            double w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = weights[n - 1 - i] = w;
        }
    }

    static const GaussLegendre64& get() {
        static const GaussLegendre64 rule;
        return rule;
    }
};

// (e^z - 1) / z
inline double phi1(double z) { return z == 0.0 ? 1.0 : std::expm1(z) / z; }

// Spectral projectors for real, well-separated eigenvalues: e^{L u} = sum_k e^{l_k u} P_k.
struct Spectral {
    double l1, l2;
    Mat2 p1, p2;
};

inline std::optional<Spectral> spectral(const Mat2& l) {
    const double q = discriminant_sq(l);
    if (q <= 0.0) return std::nullopt;
    const double disc = std::sqrt(q);
    const double s = 0.5 * l.trace();
    if (disc < 1e-3 * (1.0 + std::abs(s))) return std::nullopt;
    const double l1 = s + 0.5 * disc, l2 = s - 0.5 * disc;
    const Mat2 id = Mat2::identity();
    return Spectral{l1, l2, (1.0 / (l1 - l2)) * (l - l2 * id), (1.0 / (l2 - l1)) * (l - l1 * id)};
}

inline int subintervals(const Mat2& l, double h) {
    double norm = std::abs(l.a) + std::abs(l.b) + std::abs(l.c) + std::abs(l.d);
    return std::max(1, static_cast<int>(std::ceil(h * norm / 2.0)));
}

}  // namespace detail

// int_0^h e^{L u} du
inline Mat2 exp_integral(const Mat2& l, double h, Gl2Integration how = Gl2Integration::automatic) {
    if (h <= 0.0) return {};
    auto sp = how == Gl2Integration::quadrature ? std::nullopt : detail::spectral(l);
    if (sp) return (h * detail::phi1(sp->l1 * h)) * sp->p1 + (h * detail::phi1(sp->l2 * h)) * sp->p2;
    if (how == Gl2Integration::spectral) throw DomainError("exp_integral: eigenvalues not real and distinct");
    const auto& gl = detail::GaussLegendre64::get();
    const int parts = detail::subintervals(l, h);
    const double w = h / parts;
    Mat2 total{};
    for (int p = 0; p < parts; ++p)
        for (int i = 0; i < 64; ++i) {
            double u = (p + 0.5 * (gl.nodes[i] + 1.0)) * w;
            total = total + (0.5 * w * gl.weights[i]) * mat_exp_2x2(l, u);
        }
    return total;
}

// int_0^h e^{L u} S e^{L' u} du
inline Mat2 cov_integral(const Mat2& l, const Mat2& s, double h, Gl2Integration how = Gl2Integration::automatic) {
    if (h <= 0.0) return {};
    auto sp = how == Gl2Integration::quadrature ? std::nullopt : detail::spectral(l);
    if (sp) {
        const std::array<std::pair<double, Mat2>, 2> parts{{{sp->l1, sp->p1}, {sp->l2, sp->p2}}};
        Mat2 total{};
        for (const auto& [lk, pk] : parts)
            for (const auto& [lj, pj] : parts)
                total = total + (h * detail::phi1((lk + lj) * h)) * (pk * s * pj.transpose());
        return total;
    }
    if (how == Gl2Integration::spectral) throw DomainError("cov_integral: eigenvalues not real and distinct");
    const auto& gl = detail::GaussLegendre64::get();
    const int parts = detail::subintervals(l, h);
    const double w = h / parts;
    Mat2 total{};
    for (int p = 0; p < parts; ++p)
        for (int i = 0; i < 64; ++i) {
            double u = (p + 0.5 * (gl.nodes[i] + 1.0)) * w;
            Mat2 e = mat_exp_2x2(l, u);
            total = total + (0.5 * w * gl.weights[i]) * (e * s * e.transpose());
        }
    return total;
}

// int_s^t e^{L (t - v)} M(v) dv with M piecewise constant through alpha.
inline Vec2 drift_integral(const Gl2Params& p, double s, double t,
                           Gl2Integration how = Gl2Integration::automatic) {
    const Mat2 l = p.lambda();
    Vec2 total{};
    const auto& starts = p.alpha.start;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        double a = std::max(starts[k], s);
        double b = std::min(k + 1 < starts.size() ? starts[k + 1] : INFINITY, t);
        if (!(b > a)) continue;
        Vec2 m{p.r - 0.5 * p.sigma_a * p.sigma_a, p.kappa * p.alpha.value[k]};
        Mat2 w = exp_integral(l, t - a, how) - exp_integral(l, t - b, how);
        total = total + w * m;
    }
    return total;
}

inline Gl2Moments moments(const Gl2Params& p, double t, Gl2Integration how = Gl2Integration::automatic) {
    p.validate();
    if (!(t >= 0.0)) throw DomainError("moments: t must be >= 0");
    const Mat2 l = p.lambda();
    Vec2 mean = mat_exp_2x2(l, t) * Vec2{p.x0, p.y0} + drift_integral(p, 0.0, t, how);
    return {mean, cov_integral(l, p.noise_cov(), t, how)};
}

struct CurvePoint {
    double maturity;
    double f_star;
    double var_x;
    std::optional<double> futures;  // quoted F when a liability is attached
};

inline std::vector<CurvePoint> futures_curve(const Gl2Params& p, std::span<const double> maturities,
                                             std::span<const EmbeddedLiability> liabilities = {}) {
    if (!liabilities.empty() && liabilities.size() != maturities.size())
        throw DomainError("futures_curve: one liability per maturity required");
    std::vector<CurvePoint> out;
    out.reserve(maturities.size());
    for (std::size_t i = 0; i < maturities.size(); ++i) {
        double t = maturities[i];
        auto mom = moments(p, t);
        CurvePoint pt{t, std::exp(mom.mean.x + 0.5 * mom.cov.a), mom.cov.a, std::nullopt};
        if (!liabilities.empty()) {
            if (t > 0.0 && pt.var_x > 0.0)
                pt.futures = futures_price({pt.f_star, std::sqrt(pt.var_x / t), t}, liabilities[i]).futures;
            else
                pt.futures = pt.f_star - payoff(liabilities[i], pt.f_star);
        }
        out.push_back(pt);
    }
    return out;
}

// A_T is lognormal with ln-variance Var_x(T), so the diffusion closed forms
// apply with sigma sqrt(T) = sqrt(Var_x(T)).
inline double gl2_option(const Gl2Params& p, const EmbeddedLiability& e, double maturity, double k_o,
                         OptionType type) {
    if (!(maturity > 0.0)) throw DomainError("gl2_option: maturity must be positive");
    auto mom = moments(p, maturity);
    double f_star = std::exp(mom.mean.x + 0.5 * mom.cov.a);
    return option_price({f_star, std::sqrt(mom.cov.a / maturity), maturity}, e, k_o, type);
}

inline double gl2_futures(const Gl2Params& p, const EmbeddedLiability& e, double maturity) {
    double m = maturity;
    auto pts = futures_curve(p, std::span<const double>(&m, 1), std::span<const EmbeddedLiability>(&e, 1));
    return *pts.front().futures;
}

// --- Exact simulation ------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Counter-based normal stream: draw i of path p depends only on (seed, p, i).
class PathStream {
public:
    PathStream(std::uint64_t seed, std::uint64_t path) : key_(splitmix64(seed ^ splitmix64(path + 0x632BE59BD9B4E019ull))) {}

    double uniform() {
        std::uint64_t bits = splitmix64(key_ + counter_++ * 0xD1B54A32D192ED03ull);
        return ((bits >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        double rad = std::sqrt(-2.0 * std::log(u1));
        double ang = 2.0 * std::numbers::pi * u2;
        spare_ = rad * std::sin(ang);
        has_spare_ = true;
        return rad * std::cos(ang);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace detail

struct Gl2Paths {
    std::vector<double> dates;
    std::size_t n_paths = 0;
    // Row-major [path][date].
    std::vector<double> x;
    std::vector<double> y;

    double x_at(std::size_t path, std::size_t date) const { return x[path * dates.size() + date]; }
    double y_at(std::size_t path, std::size_t date) const { return y[path * dates.size() + date]; }
};

inline Gl2Paths simulate(const Gl2Params& p, std::span<const double> dates, std::size_t n_paths, std::uint64_t seed,
                         unsigned threads = 1) {
    p.validate();
    if (dates.empty()) throw DomainError("simulate: no dates requested");
    double prev = 0.0;
    for (double d : dates) {
        if (!(d > prev)) throw DomainError("simulate: dates must be positive and strictly increasing");
        prev = d;
    }

    struct Step {
        Mat2 prop;
        Vec2 shift;
        double l00, l10, l11;
    };
    const Mat2 l = p.lambda();
    std::vector<Step> steps;
    prev = 0.0;
    for (double d : dates) {
        double h = d - prev;
        Mat2 c = cov_integral(l, p.noise_cov(), h);
        double l00 = std::sqrt(std::max(c.a, 0.0));
        double l10 = l00 > 0.0 ? c.c / l00 : 0.0;
        double l11 = std::sqrt(std::max(c.d - l10 * l10, 0.0));
        steps.push_back({mat_exp_2x2(l, h), drift_integral(p, prev, d), l00, l10, l11});
        prev = d;
    }

    Gl2Paths out;
    out.dates.assign(dates.begin(), dates.end());
    out.n_paths = n_paths;
    out.x.resize(n_paths * dates.size());
    out.y.resize(n_paths * dates.size());

    auto run_block = [&](std::size_t begin, std::size_t end) {
        for (std::size_t path = begin; path < end; ++path) {
            detail::PathStream rng(seed, path);
            Vec2 z{p.x0, p.y0};
            for (std::size_t k = 0; k < steps.size(); ++k) {
                const Step& st = steps[k];
                double e1 = rng.normal(), e2 = rng.normal();
                z = st.prop * z + st.shift + Vec2{st.l00 * e1, st.l10 * e1 + st.l11 * e2};
                out.x[path * steps.size() + k] = z.x;
                out.y[path * steps.size() + k] = z.y;
            }
        }
    };

    threads = std::max(1u, threads);
    if (threads == 1 || n_paths < 2 * threads) {
        run_block(0, n_paths);
    } else {
        std::vector<std::jthread> pool;
        std::size_t chunk = (n_paths + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            std::size_t b = t * chunk, e = std::min(n_paths, b + chunk);
            if (b < e) pool.emplace_back(run_block, b, e);
        }
    }
    return out;
}

}  // namespace commodopt
