#pragma once

#include <cmath>
#include <numbers>

namespace commodopt {

// Standard normal CDF. erfc keeps both tails accurate to full relative
// precision, which matters for far out-of-the-money and negative strikes.
inline double norm_cdf(double x) {
    if (x == INFINITY) return 1.0;
    if (x == -INFINITY) return 0.0;
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

inline double norm_pdf(double x) {
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

}  // namespace commodopt
