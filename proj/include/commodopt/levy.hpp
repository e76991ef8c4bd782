#pragma once

// Exponential-Levy intrinsic futures: E[(F*_T / F*_t)^{iu}] = exp(L(u) tau).
// Option prices follow from the embedded-liability formulas once every normal
// probability is replaced by a (tilted) Levy probability Pr^nu(A_T > K).

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "commodopt/black.hpp"
#include "commodopt/errors.hpp"
#include "commodopt/payoff.hpp"

namespace commodopt {

using cplx = std::complex<double>;

struct BrownianParams {
    double mu;
    double sigma;
};

// Double-exponential jumps: upward mean xi_plus at rate kappa_plus, downward
// mean xi_minus at rate kappa_minus.
struct KouParams {
    double mu;
    double sigma;
    double kappa_plus;
    double xi_plus;
    double kappa_minus;
    double xi_minus;
};

// Normal log-jumps N(c, delta^2) at rate kappa. The drift enters L as (mu - sigma^2/2).
struct MertonParams {
    double mu;
    double sigma;
    double kappa;
    double c;
    double delta;
};

class LevyGenerator {
public:
    using Params = std::variant<BrownianParams, KouParams, MertonParams>;

    // Explicit drift; no martingale condition imposed (tilted generators).
    explicit LevyGenerator(Params p) : params_(p) { validate(); }

    // Martingale generators: mu solved from L(-i) = 0.
    static LevyGenerator brownian(double sigma) { return LevyGenerator(BrownianParams{-0.5 * sigma * sigma, sigma}); }

    static LevyGenerator kou(double sigma, double kappa_plus, double xi_plus, double kappa_minus, double xi_minus) {
        if (!(xi_plus > 0.0 && xi_plus < 1.0))
            throw DomainError("kou: xi_plus must lie in (0, 1), got " + std::to_string(xi_plus));
        double mu = -0.5 * sigma * sigma - kappa_plus * xi_plus / (1.0 - xi_plus) +
                    kappa_minus * xi_minus / (1.0 + xi_minus);
        return LevyGenerator(KouParams{mu, sigma, kappa_plus, xi_plus, kappa_minus, xi_minus});
    }

    static LevyGenerator merton(double sigma, double kappa, double c, double delta) {
        double mu = -kappa * std::expm1(c + 0.5 * delta * delta);
        return LevyGenerator(MertonParams{mu, sigma, kappa, c, delta});
    }

    const Params& params() const { return params_; }
    template <class T> const T* get() const { return std::get_if<T>(&params_); }

    const char* name() const {
        return std::visit([](const auto& p) -> const char* {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, BrownianParams>) return "brownian";
            else if constexpr (std::is_same_v<T, KouParams>) return "kou";
            else return "merton";
        }, params_);
    }

    double sigma() const { return std::visit([](const auto& p) { return p.sigma; }, params_); }

    // Mean and variance of ln(F*_T / F*_t) per unit time.
    double mean_rate() const {
        return std::visit([](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, BrownianParams>) return p.mu;
            else if constexpr (std::is_same_v<T, KouParams>)
                return p.mu + p.kappa_plus * p.xi_plus - p.kappa_minus * p.xi_minus;
            else return p.mu - 0.5 * p.sigma * p.sigma + p.kappa * p.c;
        }, params_);
    }

    double variance_rate() const {
        return std::visit([](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            double s2 = p.sigma * p.sigma;
            if constexpr (std::is_same_v<T, BrownianParams>) return s2;
            else if constexpr (std::is_same_v<T, KouParams>)
                return s2 + 2.0 * p.kappa_plus * p.xi_plus * p.xi_plus +
                       2.0 * p.kappa_minus * p.xi_minus * p.xi_minus;
            else return s2 + p.kappa * (p.c * p.c + p.delta * p.delta);
        }, params_);
    }

private:
    void validate() const {
        std::visit([](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if (!(p.sigma >= 0.0)) throw DomainError("LevyGenerator: sigma must be >= 0");
            if constexpr (std::is_same_v<T, KouParams>) {
                if (!(p.kappa_plus >= 0.0) || !(p.kappa_minus >= 0.0))
                    throw DomainError("LevyGenerator(kou): jump intensities must be >= 0");
                if (!(p.xi_plus > 0.0) || !(p.xi_minus > 0.0))
                    throw DomainError("LevyGenerator(kou): jump means must be positive");
            }
            if constexpr (std::is_same_v<T, MertonParams>) {
                if (!(p.kappa >= 0.0)) throw DomainError("LevyGenerator(merton): kappa must be >= 0");
                if (!(p.delta >= 0.0)) throw DomainError("LevyGenerator(merton): delta must be >= 0");
            }
        }, params_);
    }

    Params params_;
};

inline cplx cumulant(const LevyGenerator& g, cplx u) {
    const cplx iu = cplx(0.0, 1.0) * u;
    return std::visit([&](const auto& p) -> cplx {
        using T = std::decay_t<decltype(p)>;
        const double s2 = p.sigma * p.sigma;
        if constexpr (std::is_same_v<T, BrownianParams>) {
            return p.mu * iu - 0.5 * s2 * u * u;
        } else if constexpr (std::is_same_v<T, KouParams>) {
            cplx den_plus = 1.0 - p.xi_plus * iu;
            cplx den_minus = 1.0 + p.xi_minus * iu;
            if (std::abs(den_plus) < 1e-14 || std::abs(den_minus) < 1e-14)
                throw DomainError("cumulant(kou): u at a pole of the jump transform");
            return p.mu * iu - 0.5 * s2 * u * u + p.kappa_plus * p.xi_plus * iu / den_plus -
                   p.kappa_minus * p.xi_minus * iu / den_minus;
        } else {
            return (p.mu - 0.5 * s2) * iu - 0.5 * s2 * u * u +
                   p.kappa * (std::exp(p.c * iu - 0.5 * p.delta * p.delta * u * u) - 1.0);
        }
    }, g.params());
}

// Exponential tilt by A^nu, expressed as a parameter map within the family.
inline LevyGenerator tilt(const LevyGenerator& g, double nu) {
    return std::visit([&](const auto& p) -> LevyGenerator {
        using T = std::decay_t<decltype(p)>;
        const double s2 = p.sigma * p.sigma;
        if constexpr (std::is_same_v<T, BrownianParams>) {
            return LevyGenerator(BrownianParams{p.mu + nu * s2, p.sigma});
        } else if constexpr (std::is_same_v<T, KouParams>) {
            double a = 1.0 - nu * p.xi_plus;
            double b = 1.0 + nu * p.xi_minus;
            if (!(a > 0.0))
                throw DomainError("tilt(kou): need 1 - nu*xi_plus > 0 (xi_plus=" + std::to_string(p.xi_plus) +
                                  ", nu=" + std::to_string(nu) + ")");
            if (!(b > 0.0))
                throw DomainError("tilt(kou): need 1 + nu*xi_minus > 0 (xi_minus=" + std::to_string(p.xi_minus) +
                                  ", nu=" + std::to_string(nu) + ")");
            return LevyGenerator(KouParams{p.mu + nu * s2, p.sigma, p.kappa_plus / a, p.xi_plus / a,
                                           p.kappa_minus / b, p.xi_minus / b});
        } else {
            double d2 = p.delta * p.delta;
            return LevyGenerator(MertonParams{p.mu + nu * s2, p.sigma,
                                              p.kappa * std::exp(nu * p.c + 0.5 * nu * nu * d2),
                                              p.c + nu * d2, p.delta});
        }
    }, g.params());
}

// log E[(F*_t / A_T)^lambda] = L(i lambda) tau, with a named error when infinite.
inline double log_inverse_moment(const LevyGenerator& g, double lambda, double tau) {
    if (const auto* k = g.get<KouParams>(); k && !(lambda * k->xi_minus < 1.0))
        throw DomainError("levy: E[A^-lambda] infinite, need lambda*xi_minus < 1 (xi_minus=" +
                          std::to_string(k->xi_minus) + ", lambda=" + std::to_string(lambda) + ")");
    return cumulant(g, cplx(0.0, lambda)).real() * tau;
}

// --- FFT density -----------------------------------------------------------

struct FftGrid {
    int n_points = 1 << 12;
    double x_half_width = 6.0;

    // Default sizing: half-width max(10 sd, 6), refined until sd / dx >= 16.
    // Kou tails are only exponential, so the width also covers 30 mean jumps.
    static FftGrid for_generator(const LevyGenerator& g, double tau) {
        double sd = std::sqrt(g.variance_rate() * tau);
        FftGrid grid;
        grid.x_half_width = std::max(10.0 * sd, 6.0);
        if (const auto* k = g.get<KouParams>())
            grid.x_half_width = std::max(grid.x_half_width, 30.0 * std::max(k->xi_plus, k->xi_minus));
        while (grid.n_points < (1 << 20) && 2.0 * grid.x_half_width / grid.n_points > sd / 16.0)
            grid.n_points *= 2;
        return grid;
    }

    double spacing() const { return 2.0 * x_half_width / n_points; }

    void validate(const LevyGenerator& g, double tau) const {
        if (n_points < (1 << 10) || (n_points & (n_points - 1)) != 0)
            throw DomainError("FftGrid: n_points must be a power of two >= 1024");
        if (x_half_width < 10.0 * std::sqrt(g.variance_rate() * tau) * (1.0 - 1e-12))
            throw DomainError("FftGrid: half-width below 10 standard deviations");
    }
};

namespace detail {

struct FftwFree {
    void operator()(fftw_complex* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

// In-place forward DFT, out_k = sum_j in_j exp(-2 pi i jk / n).
inline void forward_dft(std::vector<cplx>& data) {
    const int n = static_cast<int>(data.size());
    FftwBuffer buf(fftw_alloc_complex(n));
    fftw_plan plan;
    {
        std::lock_guard lock(fftw_planner_mutex());
        plan = fftw_plan_dft_1d(n, buf.get(), buf.get(), FFTW_FORWARD, FFTW_ESTIMATE);
    }
    for (int j = 0; j < n; ++j) {
        buf[j][0] = data[j].real();
        buf[j][1] = data[j].imag();
    }
    fftw_execute(plan);
    for (int j = 0; j < n; ++j) data[j] = {buf[j][0], buf[j][1]};
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
}

}  // namespace detail

// Density f_tau(x) of x = ln(F*_T / F*_t) sampled on x_k = x0 + k dx, with the
// CDF on the same nodes. Both come from the Fourier series of the characteristic
// function; the CDF integrates that series term by term, so node values are
// exact for the periodised density. Off-grid CDF values use cubic Hermite
// interpolation on (CDF, density).
class LevyDensity {
public:
    LevyDensity(const LevyGenerator& g, double tau, FftGrid grid) : grid_(grid) {
        if (!(tau > 0.0)) throw DomainError("LevyDensity: tau must be positive");
        grid.validate(g, tau);
        const int n = grid.n_points;
        const double half = grid.x_half_width;
        dx_ = grid.spacing();
        center_ = g.mean_rate() * tau;
        x0_ = center_ - half;
        const double du = std::numbers::pi / half;

        std::vector<cplx> a(n), b(n);
        cplx b_sum = 0.0;
        for (int j = 0; j < n; ++j) {
            double u = (j - n / 2) * du;
            cplx phi = std::exp(cumulant(g, u) * tau);
            if (std::abs(phi) < 1e-14) phi = 0.0;
            a[j] = phi * std::exp(cplx(0.0, -u * x0_));
            b[j] = (j == n / 2) ? cplx(0.0) : a[j] / cplx(0.0, u);
            b_sum += b[j];
        }
        detail::forward_dft(a);
        detail::forward_dft(b);

        density_.resize(n);
        raw_density_.resize(n + 1);
        cdf_.resize(n + 1);
        const double norm = 1.0 / (2.0 * half);
        for (int k = 0; k < n; ++k) {
            double sign = (k % 2 == 0) ? 1.0 : -1.0;
            raw_density_[k] = norm * sign * a[k].real();
            density_[k] = raw_density_[k] < 0.0 ? 0.0 : raw_density_[k];
            cdf_[k] = k * dx_ * norm + norm * (b_sum - sign * b[k]).real();
        }
        raw_density_[n] = raw_density_[0];
        cdf_[n] = 1.0;

        double band = 0.05 * 2.0 * half;
        leakage_ = cdf(x0_ + band) + (1.0 - cdf(x0_ + 2.0 * half - band));
        if (leakage_ > 1e-4)
            throw DomainError("LevyDensity: grid too narrow, tail mass " + std::to_string(leakage_) +
                              " in the outer bands");
    }

    const FftGrid& grid() const { return grid_; }
    double x0() const { return x0_; }
    double spacing() const { return dx_; }
    double x(int k) const { return x0_ + k * dx_; }
    // Clipped at zero.
    const std::vector<double>& density() const { return density_; }
    double leakage() const { return leakage_; }

    // Pr(ln(F*_T / F*_t) <= x).
    double cdf(double x) const {
        const int n = grid_.n_points;
        double s = (x - x0_) / dx_;
        if (s <= 0.0) return 0.0;
        if (s >= n) return 1.0;
        int k = static_cast<int>(s);
        double t = s - k;
        double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
        double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
        double v = h00 * cdf_[k] + h10 * dx_ * raw_density_[k] + h01 * cdf_[k + 1] +
                   h11 * dx_ * raw_density_[k + 1];
        return std::clamp(v, 0.0, 1.0);
    }

    double total_mass() const {
        double s = 0.0;
        for (double f : density_) s += f;
        return s * dx_;
    }

private:
    FftGrid grid_;
    double dx_ = 0.0;
    double center_ = 0.0;
    double x0_ = 0.0;
    std::vector<double> density_;
    std::vector<double> raw_density_;
    std::vector<double> cdf_;
    double leakage_ = 0.0;
};

inline LevyDensity density_fft(const LevyGenerator& g, double tau, std::optional<FftGrid> grid = std::nullopt) {
    return LevyDensity(g, tau, grid.value_or(FftGrid::for_generator(g, tau)));
}

// Pr^nu(k1 < A_T < k2) given E[A_T] = f_star.
inline double prob_interval(const LevyGenerator& g, double tau, double f_star, double k1, double k2,
                            double nu = 0.0, std::optional<FftGrid> grid = std::nullopt) {
    if (!(k1 > 0.0) || !(k2 > k1)) throw DomainError("prob_interval: need 0 < k1 < k2");
    if (!(f_star > 0.0)) throw DomainError("prob_interval: f_star must be positive");
    LevyGenerator tilted = tilt(g, nu);
    LevyDensity dens = density_fft(tilted, tau, grid);
    double hi = std::isinf(k2) ? 1.0 : dens.cdf(std::log(k2 / f_star));
    return hi - dens.cdf(std::log(k1 / f_star));
}

// Embedded-liability pricing for one generator, maturity and liability. The
// three tilted densities (nu = 0, 1, -lambda) are built once and shared.
class LevyPricer {
public:
    LevyPricer(const LevyGenerator& g, double tau, const EmbeddedLiability& e,
               std::optional<FftGrid> grid = std::nullopt)
        : g_(g), tau_(tau), e_(e),
          p0_(density_fft(g, tau, grid)),
          p1_(density_fft(tilt(g, 1.0), tau, grid)) {
        detail::require_downside(e, "LevyPricer");
        if (e.active()) {
            log_moment_ = log_inverse_moment(g, e.lambda(), tau);
            pm_.emplace(density_fft(tilt(g, -e.lambda()), tau, grid));
        }
    }

    const LevyGenerator& generator() const { return g_; }
    double tau() const { return tau_; }

    double futures(double f_star) const { return f_star - liability(f_star); }

    double liability(double f_star) const {
        if (!e_.active()) return 0.0;
        double xk = std::log(e_.k_i() / f_star);
        return std::max(e_.ell() * e_.k_i() * (m(f_star) * pm_->cdf(xk) - p0_.cdf(xk)), 0.0);
    }

    double price(double f_star, double k_o, OptionType type) const {
        if (!(f_star > 0.0)) throw DomainError("LevyPricer: f_star must be positive");
        auto ash = exercise_boundary(e_, k_o);
        if (!ash) return type == OptionType::call ? futures(f_star) - k_o : 0.0;
        const double xa = std::log(*ash / f_star);
        // Lower-tail probabilities Pr^nu(A_T < A*).
        const double q0 = p0_.cdf(xa), q1 = p1_.cdf(xa);
        double liab = 0.0;
        if (e_.active()) {
            const double xk = std::log(e_.k_i() / f_star);
            const double mm = m(f_star);
            const double lk = e_.ell() * e_.k_i();
            const double qm = pm_->cdf(xa);
            const double qm_k = pm_->cdf(xk), q0_k = p0_.cdf(xk);
            if (type == OptionType::call) {
                if (*ash <= e_.k_i()) liab = lk * (mm * (qm_k - qm) - (q0_k - q0));
            } else {
                liab = *ash <= e_.k_i() ? lk * (mm * qm - q0) : lk * (mm * qm_k - q0_k);
            }
        }
        if (type == OptionType::call) return f_star * (1.0 - q1) - k_o * (1.0 - q0) - liab;
        return k_o * q0 - f_star * q1 + liab;
    }

private:
    double m(double f_star) const {
        return std::exp(e_.lambda() * std::log(e_.k_i() / f_star) + log_moment_);
    }

    LevyGenerator g_;
    double tau_;
    EmbeddedLiability e_;
    LevyDensity p0_;
    LevyDensity p1_;
    std::optional<LevyDensity> pm_;
    double log_moment_ = 0.0;
};

inline double price_embedded_levy(const LevyGenerator& g, double f_star, double tau, const EmbeddedLiability& e,
                                  double k_o, OptionType type) {
    return LevyPricer(g, tau, e).price(f_star, k_o, type);
}

inline double futures_price_levy(const LevyGenerator& g, double f_star, double tau, const EmbeddedLiability& e) {
    return LevyPricer(g, tau, e).futures(f_star);
}

}  // namespace commodopt
