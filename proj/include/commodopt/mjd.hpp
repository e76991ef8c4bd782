#pragma once

// Merton jump-diffusion with the embedded liability as a Poisson mixture of
// lognormal slices: conditional on j jumps, ln A_T is normal with variance
// sigma^2 tau + j delta^2.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "commodopt/black.hpp"
#include "commodopt/errors.hpp"
#include "commodopt/payoff.hpp"

namespace commodopt {

struct MjdSpec {
    double f_star;
    double sigma;
    double kappa;  // jump intensity per year
    double c;      // mean log-jump
    double delta;  // log-jump std
    double tau;
    int max_terms = 60;
    double tail_tolerance = 1e-12;

    void validate() const {
        if (!(f_star > 0.0)) throw DomainError("MjdSpec: f_star must be positive");
        if (!(sigma > 0.0)) throw DomainError("MjdSpec: sigma must be positive");
        if (!(kappa >= 0.0)) throw DomainError("MjdSpec: kappa must be >= 0");
        if (!(delta >= 0.0)) throw DomainError("MjdSpec: delta must be >= 0");
        if (!(tau >= 0.0)) throw DomainError("MjdSpec: tau must be >= 0");
        if (!std::isfinite(c)) throw DomainError("MjdSpec: c must be finite");
    }

    // Martingale drift.
    double mu() const { return -kappa * std::expm1(c + 0.5 * delta * delta); }
};

struct MjdTerm {
    int jumps;
    double weight;  // Poisson probability of `jumps` jumps in [0, tau]
    detail::LognormalSlice slice;
};

// Poisson terms up to the first j where the remaining tail drops below the
// tolerance. The tails of the first-moment and inverse-moment weighted sums
// (sum pi_j F*_j and sum pi_j m_j) are held to the same relative tolerance,
// since m_j grows geometrically in j when lambda > 0.
inline std::vector<MjdTerm> mjd_terms(const MjdSpec& s, double lambda = 0.0) {
    s.validate();
    const double theta = s.kappa * s.tau;
    const double base = std::log(s.f_star) + (s.mu() - 0.5 * s.sigma * s.sigma) * s.tau;
    const double d2 = s.delta * s.delta;
    // sum_j pi_j exp(a j) = exp(theta (e^a - 1)).
    const double a_mean = s.c + 0.5 * d2;
    const double a_inv = lambda * (-s.c + 0.5 * lambda * d2);
    const double total_mean = std::exp(theta * std::expm1(a_mean));
    const double total_inv = std::exp(theta * std::expm1(a_inv));
    std::vector<MjdTerm> terms;
    double w = std::exp(-theta);
    double cum = 0.0, cum_mean = 0.0, cum_inv = 0.0;
    for (int j = 0;; ++j) {
        if (j > 0) w *= theta / j;
        cum += w;
        cum_mean += w * std::exp(a_mean * j);
        cum_inv += w * std::exp(a_inv * j);
        double var = s.sigma * s.sigma * s.tau + j * d2;
        terms.push_back({j, w, {base + j * s.c, std::sqrt(var)}});
        double tail = std::max({1.0 - cum, 1.0 - cum_mean / total_mean, 1.0 - cum_inv / total_inv});
        if (tail < s.tail_tolerance) break;
        if (j + 1 >= s.max_terms)
            throw ConvergenceError("mjd: Poisson tail " + std::to_string(tail) + " above tolerance after " +
                                   std::to_string(s.max_terms) + " terms (kappa*tau=" + std::to_string(theta) + ")");
    }
    return terms;
}

inline double mjd_futures(const MjdSpec& s, const EmbeddedLiability& e) {
    detail::require_downside(e, "mjd_futures");
    double liab = 0.0;
    for (const auto& t : mjd_terms(s, e.active() ? e.lambda() : 0.0)) liab += t.weight * detail::slice_liability(t.slice, e);
    return s.f_star - liab;
}

inline double mjd_option(const MjdSpec& s, const EmbeddedLiability& e, double k_o, OptionType type) {
    detail::require_downside(e, "mjd_option");
    const auto ash = exercise_boundary(e, k_o);
    double total = 0.0;
    for (const auto& t : mjd_terms(s, e.active() ? e.lambda() : 0.0)) total += t.weight * detail::slice_option(t.slice, e, k_o, ash, type);
    return total;
}

inline double mjd_call(const MjdSpec& s, const EmbeddedLiability& e, double k_o) {
    return mjd_option(s, e, k_o, OptionType::call);
}

inline double mjd_put(const MjdSpec& s, const EmbeddedLiability& e, double k_o) {
    return mjd_option(s, e, k_o, OptionType::put);
}

inline double mjd_intrinsic_futures(double f_quoted, MjdSpec s, const EmbeddedLiability& e) {
    return invert_futures(
        [&](double fs) {
            s.f_star = fs;
            return mjd_futures(s, e);
        },
        f_quoted, e.k_i());
}

}  // namespace commodopt
