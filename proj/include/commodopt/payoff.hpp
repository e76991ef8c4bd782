#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "commodopt/errors.hpp"
#include "commodopt/roots.hpp"

namespace commodopt {

enum class Side { downside, upside };

// Delivery-liability payoff attached to the intrinsic asset at expiry.
//   downside: ell * K_i * ((K_i / A)^lambda - 1)^+
//   upside:   ell * A   * ((A / K_i)^lambda - 1)^+
class EmbeddedLiability {
public:
    EmbeddedLiability(double k_i, double ell, double lambda, Side side = Side::downside)
        : k_i_(k_i), ell_(ell), lambda_(lambda), side_(side) {
        if (!(k_i > 0.0) || !std::isfinite(k_i))
            throw DomainError("EmbeddedLiability: k_i must be positive, got " + std::to_string(k_i));
        if (!(ell >= 0.0) || !std::isfinite(ell))
            throw DomainError("EmbeddedLiability: ell must be >= 0, got " + std::to_string(ell));
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw DomainError("EmbeddedLiability: lambda must be >= 0, got " +
                              std::to_string(lambda));
    }

    // No liability at all (ell = 0).
    static EmbeddedLiability none(double k_i = 1.0) { return {k_i, 0.0, 0.0}; }

    double k_i() const { return k_i_; }
    double ell() const { return ell_; }
    double lambda() const { return lambda_; }
    Side side() const { return side_; }

    // ell * lambda > 0; otherwise the payoff is identically zero.
    bool active() const { return ell_ > 0.0 && lambda_ > 0.0; }

    friend bool operator==(const EmbeddedLiability&, const EmbeddedLiability&) = default;

private:
    double k_i_;
    double ell_;
    double lambda_;
    Side side_;
};

inline double payoff(const EmbeddedLiability& e, double a) {
    if (!(a > 0.0)) throw DomainError("payoff: asset price must be positive, got " + std::to_string(a));
    if (!e.active()) return 0.0;
    if (e.side() == Side::downside) {
        if (a >= e.k_i()) return 0.0;
        return e.ell() * e.k_i() * std::expm1(e.lambda() * std::log(e.k_i() / a));
    }
    if (a <= e.k_i()) return 0.0;
    return e.ell() * a * std::expm1(e.lambda() * std::log(a / e.k_i()));
}

// Unique A* > 0 with A* - iota(A*) = k_o for the downside liability, or nullopt
// when A - iota(A) > k_o for every A > 0 (no liability and k_o <= 0: the call is
// always exercised and the put never).
inline std::optional<double> exercise_boundary(const EmbeddedLiability& e, double k_o) {
    if (e.side() != Side::downside)
        throw DomainError("exercise_boundary: only defined for the downside liability");
    if (!std::isfinite(k_o)) throw DomainError("exercise_boundary: strike must be finite");
    if (!e.active()) {
        if (k_o > 0.0) return k_o;
        return std::nullopt;
    }
    const double k_i = e.k_i();
    if (k_o >= k_i) return k_o;

    // Work in z = ln(A / K_i) < 0 where g is smooth and the bracket is cheap to grow.
    const double ell = e.ell();
    const double lam = e.lambda();
    auto g = [&](double z) {
        double a = k_i * std::exp(z);
        double f = a - ell * k_i * std::expm1(-lam * z) - k_o;
        double df = a + ell * k_i * lam * std::exp(-lam * z);
        return std::pair{f, df};
    };

    const double hi = 0.0;
    double lo = std::log(1e-8);
    while (g(lo).first >= 0.0) {
        lo *= 2.0;
        if (lo < -1e6) throw ConvergenceError("exercise_boundary: cannot bracket the root");
    }
    double z = detail::newton_bisect(g, lo, hi, 1e-14);
    return k_i * std::exp(z);
}

}  // namespace commodopt
