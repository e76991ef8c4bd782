#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "commodopt/errors.hpp"

namespace commodopt::detail {

// Root of an increasing function on a bracket [lo, hi] with f(lo) < 0 < f(hi).
// `fdf` returns (f(x), f'(x)). Newton steps are taken while they stay inside
// the current bracket and shrink it fast enough; otherwise the step bisects.
template <class FDF>
double newton_bisect(FDF&& fdf, double lo, double hi, double xtol, int max_iter = 200) {
    double x = 0.5 * (lo + hi);
    double step_prev = hi - lo;
    for (int it = 0; it < max_iter; ++it) {
        auto [f, df] = fdf(x);
        if (f == 0.0) return x;
        if (f < 0.0) lo = x; else hi = x;

        double next = x - f / df;
        bool newton_ok = std::isfinite(next) && df > 0.0 && next > lo && next < hi &&
                         std::abs(next - x) < 0.5 * step_prev;
        if (!newton_ok) next = 0.5 * (lo + hi);
        step_prev = std::abs(next - x);
        x = next;
        if (step_prev <= xtol || hi - lo <= xtol) return x;
    }
    throw ConvergenceError("newton_bisect: no convergence after " + std::to_string(max_iter) +
                           " iterations");
}

// Same contract without a derivative: bisection interleaved with secant steps
// (Illinois-style false position guarded by the bracket).
template <class F>
double bracketed_secant(F&& f, double lo, double hi, double f_lo, double f_hi, double xtol,
                        int max_iter = 300) {
    int side = 0;
    for (int it = 0; it < max_iter; ++it) {
        double x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if (!std::isfinite(x) || x <= lo || x >= hi) x = 0.5 * (lo + hi);
        double fx = f(x);
        if (fx == 0.0) return x;
        if (fx < 0.0) {
            lo = x;
            f_lo = fx;
            if (side == -1) f_hi *= 0.5;
            side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if (side == 1) f_lo *= 0.5;
            side = 1;
        }
        if (hi - lo <= xtol) return 0.5 * (lo + hi);
    }
    throw ConvergenceError("bracketed_secant: no convergence after " + std::to_string(max_iter) +
                           " iterations");
}

}  // namespace commodopt::detail
