#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "commodopt/errors.hpp"
#include "commodopt/normal.hpp"
#include "commodopt/payoff.hpp"
#include "commodopt/roots.hpp"

namespace commodopt {

enum class OptionType { call, put };

inline const char* to_string(OptionType t) { return t == OptionType::call ? "call" : "put"; }

// Lognormal intrinsic-asset state for one futures contract.
struct DiffusionSpec {
    double f_star;  // intrinsic futures E[A_T], always > 0
    double sigma;   // lognormal vol per sqrt(year)
    double tau;     // year fraction to expiry (ACT/365)
    double r = 0.0;

    void validate() const {
        if (!(f_star > 0.0) || !std::isfinite(f_star))
            throw DomainError("DiffusionSpec: f_star must be positive, got " + std::to_string(f_star));
        if (!(sigma > 0.0) || !std::isfinite(sigma))
            throw DomainError("DiffusionSpec: sigma must be positive, got " + std::to_string(sigma));
        if (!(tau >= 0.0) || !std::isfinite(tau))
            throw DomainError("DiffusionSpec: tau must be >= 0, got " + std::to_string(tau));
    }

    double total_sd() const { return sigma * std::sqrt(tau); }
    double discount_factor() const { return std::exp(-r * tau); }
};

struct PriceBreakdown {
    double futures;          // quoted futures F, any sign
    double liability_value;  // E[iota(A_T)] >= 0
    double f_star;
    bool undiscounted = true;
    double discount_factor = 1.0;
};

namespace detail {

// log Phi(x), usable far into the left tail where Phi underflows.
inline double log_norm_cdf(double x) {
    if (x > -30.0) return std::log(norm_cdf(x));
    double x2 = x * x;
    return -0.5 * x2 - std::log(-x) - 0.9189385332046728 +
           std::log1p(-1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2));
}

// ln A ~ N(log_mean, sd^2). Every closed form below is a sum of such slices:
// one for the pure diffusion, one per jump count for the Merton mixture.
struct LognormalSlice {
    double log_mean;
    double sd;

    double mean() const { return std::exp(log_mean + 0.5 * sd * sd); }
    // Pr(A > k) = Phi(d2(k)).
    double d2(double k) const { return (log_mean - std::log(k)) / sd; }
    // log E[(K_i / A)^lambda].
    double log_m(double k_i, double lambda) const {
        return lambda * (std::log(k_i) - log_mean) + 0.5 * lambda * lambda * sd * sd;
    }
};

// exp(log_m) * Phi(x) without overflowing when log_m is large.
inline double scaled_cdf(double log_m, double x) {
    return std::exp(log_m + log_norm_cdf(x));
}

inline double slice_liability(const LognormalSlice& sl, const EmbeddedLiability& e) {
    if (!e.active()) return 0.0;
    if (sl.sd <= 0.0) return payoff(e, std::exp(sl.log_mean));
    const double lam = e.lambda();
    const double h2 = sl.d2(e.k_i());
    const double h3 = h2 - lam * sl.sd;
    double v = e.ell() * e.k_i() *
               (scaled_cdf(sl.log_m(e.k_i(), lam), -h3) - norm_cdf(-h2));
    return std::max(v, 0.0);
}

inline double slice_option(const LognormalSlice& sl, const EmbeddedLiability& e, double k_o,
                           const std::optional<double>& ash, OptionType type) {
    if (!ash) {
        // Net delivered value exceeds the strike in every state.
        if (type == OptionType::put) return 0.0;
        return sl.mean() - slice_liability(sl, e) - k_o;
    }
    if (sl.sd <= 0.0) {
        double a = std::exp(sl.log_mean);
        double net = a - (e.active() ? payoff(e, a) : 0.0) - k_o;
        return type == OptionType::call ? std::max(net, 0.0) : std::max(-net, 0.0);
    }
    const double s = sl.sd;
    const double fj = sl.mean();
    const double d2 = sl.d2(*ash);
    const double d1 = d2 + s;

    double liab = 0.0;
    if (e.active()) {
        const double lam = e.lambda();
        const double log_m = sl.log_m(e.k_i(), lam);
        const double d3 = d2 - lam * s;
        const double h2 = sl.d2(e.k_i());
        const double h3 = h2 - lam * s;
        const double lk = e.ell() * e.k_i();
        if (type == OptionType::call) {
            if (*ash <= e.k_i()) {
                // m (Phi(d3) - Phi(h3)) = m Pr^{-lambda}(A* < A < K_i)
                double pm = scaled_cdf(log_m, -h3) - scaled_cdf(log_m, -d3);
                liab = lk * (pm - (norm_cdf(-h2) - norm_cdf(-d2)));
            }
        } else {
            if (*ash <= e.k_i())
                liab = lk * (scaled_cdf(log_m, -d3) - norm_cdf(-d2));
            else
                liab = lk * (scaled_cdf(log_m, -h3) - norm_cdf(-h2));
        }
    }
    if (type == OptionType::call) return std::max(fj * norm_cdf(d1) - k_o * norm_cdf(d2) - liab, 0.0);
    return std::max(k_o * norm_cdf(-d2) - fj * norm_cdf(-d1) + liab, 0.0);
}

inline LognormalSlice black_slice(const DiffusionSpec& d) {
    double s = d.total_sd();
    return {std::log(d.f_star) - 0.5 * s * s, s};
}

inline void require_downside(const EmbeddedLiability& e, const char* who) {
    if (e.side() != Side::downside)
        throw DomainError(std::string(who) + ": closed form covers the downside liability only");
}

}  // namespace detail

inline PriceBreakdown futures_price(const DiffusionSpec& d, const EmbeddedLiability& e) {
    d.validate();
    detail::require_downside(e, "futures_price");
    double liab = detail::slice_liability(detail::black_slice(d), e);
    return {d.f_star - liab, liab, d.f_star, true, d.discount_factor()};
}

// Undiscounted expected payoffs; multiply by d.discount_factor() for prices.
inline double option_price(const DiffusionSpec& d, const EmbeddedLiability& e, double k_o,
                           OptionType type) {
    d.validate();
    detail::require_downside(e, "option_price");
    return detail::slice_option(detail::black_slice(d), e, k_o, exercise_boundary(e, k_o), type);
}

inline double call_price(const DiffusionSpec& d, const EmbeddedLiability& e, double k_o) {
    return option_price(d, e, k_o, OptionType::call);
}

inline double put_price(const DiffusionSpec& d, const EmbeddedLiability& e, double k_o) {
    return option_price(d, e, k_o, OptionType::put);
}

// E[iota(A_T)] by Gauss-Legendre quadrature against the lognormal density.
// Works for either side; the upside liability has no closed form here.
inline double expected_liability_quadrature(const DiffusionSpec& d, const EmbeddedLiability& e) {
    d.validate();
    if (!e.active()) return 0.0;
    const double s = d.total_sd();
    if (s == 0.0) return payoff(e, d.f_star);
    const double mu = std::log(d.f_star) - 0.5 * s * s;
    // Integrate over z with A = exp(mu + s z); split at the kink z_k.
    const double z_k = (std::log(e.k_i()) - mu) / s;
    double z_lo, z_hi;
    if (e.side() == Side::downside) {
        z_lo = -40.0;
        z_hi = std::min(z_k, 40.0);
    } else {
        z_lo = std::max(z_k, -40.0);
        z_hi = 40.0 + s * e.lambda() + s;
    }
    if (z_hi <= z_lo) return 0.0;

    static constexpr std::array<double, 10> nodes = {
        -0.9739065285171717, -0.8650633666889845, -0.6794095682990244, -0.4333953941292472,
        -0.1488743389816312, 0.1488743389816312,  0.4333953941292472,  0.6794095682990244,
        0.8650633666889845,  0.9739065285171717};
    static constexpr std::array<double, 10> weights = {
        0.0666713443086881, 0.1494513491505806, 0.2190863625159820, 0.2692667193099963,
        0.2955242247147529, 0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
        0.1494513491505806, 0.0666713443086881};
    const int panels = 800;
    const double h = (z_hi - z_lo) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        double c = z_lo + (p + 0.5) * h;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            double z = c + 0.5 * h * nodes[i];
            // Combine exponents so that deep tails neither overflow nor underflow.
            double log_a = mu + s * z;
            double val;
            if (e.side() == Side::downside) {
                double lr = std::log(e.k_i()) - log_a;
                val = e.ell() * e.k_i() * (std::exp(e.lambda() * lr - 0.5 * z * z) - std::exp(-0.5 * z * z));
            } else {
                double lr = log_a - std::log(e.k_i());
                val = e.ell() * (std::exp(log_a + e.lambda() * lr - 0.5 * z * z) - std::exp(log_a - 0.5 * z * z));
            }
            total += weights[i] * 0.5 * h * std::max(val, 0.0);
        }
    }
    return total * 0.3989422804014327;
}

// --- Elementary Black ------------------------------------------------------

struct CallPut {
    double call;
    double put;
};

inline CallPut black_baseline(double f, double k, double sigma_b, double tau) {
    if (!(f > 0.0)) throw DomainError("black_baseline: futures must be positive, got " + std::to_string(f));
    if (!(k > 0.0)) throw DomainError("black_baseline: strike must be positive, got " + std::to_string(k));
    if (!(sigma_b >= 0.0) || !(tau >= 0.0)) throw DomainError("black_baseline: sigma and tau must be >= 0");
    const double s = sigma_b * std::sqrt(tau);
    if (s == 0.0) return {std::max(f - k, 0.0), std::max(k - f, 0.0)};
    const double dp = (std::log(f / k) + 0.5 * s * s) / s;
    const double dm = dp - s;
    return {f * norm_cdf(dp) - k * norm_cdf(dm), k * norm_cdf(-dm) - f * norm_cdf(-dp)};
}

// Classical Black implied volatility of an undiscounted price.
inline double black_implied_vol(double price, double f, double k, double tau, OptionType type) {
    if (!(f > 0.0) || !(k > 0.0)) throw DomainError("black_implied_vol: futures and strike must be positive");
    if (!(tau > 0.0)) throw DomainError("black_implied_vol: tau must be positive");
    // Work with the out-of-the-money side; parity maps the other one.
    double call = type == OptionType::call ? price : price + f - k;
    double lower = std::max(f - k, 0.0);
    if (!(call > lower) || !(call < f))
        throw NoSolutionError("black_implied_vol: price " + std::to_string(price) +
                              " outside Black bounds");
    const bool use_put = f > k;
    const double target = use_put ? call - f + k : call;
    auto fdf = [&](double s) {
        const double dp = (std::log(f / k) + 0.5 * s * s) / s;
        CallPut cp{f * norm_cdf(dp) - k * norm_cdf(dp - s), k * norm_cdf(s - dp) - f * norm_cdf(-dp)};
        double v = use_put ? cp.put : cp.call;
        return std::pair{v - target, f * norm_pdf(dp)};
    };
    double hi = 1.0;
    while (fdf(hi).first <= 0.0) {
        hi *= 2.0;
        if (hi > 1e3) throw NoSolutionError("black_implied_vol: price not attainable");
    }
    double lo = 1e-12;
    if (fdf(lo).first >= 0.0) return lo / std::sqrt(tau);
    double s = detail::newton_bisect(fdf, lo, hi, 1e-15);
    return s / std::sqrt(tau);
}

// --- Intrinsic futures and implied vol with the futures held fixed ---------

// Solves F(F*) = f_quoted for F* > 0. `futures_of` maps F* to the quoted
// futures and must be increasing.
template <class FuturesOf>
double invert_futures(FuturesOf&& futures_of, double f_quoted, double scale) {
    if (!std::isfinite(f_quoted)) throw DomainError("invert_futures: quoted futures must be finite");
    auto h = [&](double y) { return futures_of(std::exp(y)) - f_quoted; };
    double y_hi = std::log(std::max({f_quoted, scale, 1e-300}) * 2.0);
    double h_hi = h(y_hi);
    while (!(h_hi > 0.0)) {
        y_hi += 1.0;
        if (y_hi > 700.0) throw NoSolutionError("invert_futures: cannot bracket F*");
        h_hi = h(y_hi);
    }
    double y_lo = y_hi - 1.0;
    double h_lo = h(y_lo);
    while (!(h_lo < 0.0)) {
        if (h_lo == 0.0) return std::exp(y_lo);
        y_lo -= 2.0;
        if (y_lo < -700.0)
            throw NoSolutionError("invert_futures: quoted futures " + std::to_string(f_quoted) +
                                  " not attainable (no liability cannot produce F <= 0)");
        h_lo = h(y_lo);
    }
    double y = detail::bracketed_secant(h, y_lo, y_hi, h_lo, h_hi, 1e-15 * std::max(1.0, std::abs(y_hi)));
    return std::exp(y);
}

inline double intrinsic_futures(double f_quoted, double sigma, double tau, const EmbeddedLiability& e) {
    return invert_futures(
        [&](double fs) { return futures_price({fs, sigma, tau}, e).futures; }, f_quoted, e.k_i());
}

// Volatility sigma such that, with F* re-solved from the quoted futures at each
// trial sigma, the model reproduces `market_price`.
inline double implied_sigma(double market_price, double f_quoted, const EmbeddedLiability& e,
                            double k_o, double tau, OptionType type) {
    if (!(tau > 0.0)) throw DomainError("implied_sigma: tau must be positive");
    auto price_at = [&](double sigma) {
        double fs = intrinsic_futures(f_quoted, sigma, tau, e);
        return option_price({fs, sigma, tau}, e, k_o, type);
    };
    double lo = 1e-4, hi = 20.0;
    double p_lo = price_at(lo);
    double p_hi = NAN;
    for (;;) {
        try {
            p_hi = price_at(hi);
        } catch (const NoSolutionError&) {
            p_hi = NAN;
        }
        if (std::isfinite(p_hi) || hi < 0.5) break;
        hi *= 0.5;
    }
    if (!std::isfinite(p_hi) || !(market_price >= p_lo) || !(market_price <= p_hi))
        throw NoSolutionError("implied_sigma: price " + std::to_string(market_price) +
                              " outside the attainable range [" + std::to_string(p_lo) + ", " +
                              std::to_string(p_hi) + "]");
    if (market_price == p_lo) return lo;
    auto fdf = [&](double sigma) {
        double h = 1e-6 * std::max(sigma, 1e-3);
        double v = price_at(sigma) - market_price;
        double dv = (price_at(sigma + h) - price_at(std::max(sigma - h, 0.5 * sigma))) /
                    (sigma + h - std::max(sigma - h, 0.5 * sigma));
        return std::pair{v, dv};
    };
    return detail::newton_bisect(fdf, lo, hi, 1e-13);
}

}  // namespace commodopt
