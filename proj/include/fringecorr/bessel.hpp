#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace fringecorr {

// Bessel function of the first kind, integer order.
// Supported range: |n| <= 128, |x| <= 100, relative accuracy ~1e-13 over the
// working range (|x| <= 20 is the accuracy-critical region for this library).
// Evaluation is by downward recurrence with normalization (Miller's algorithm);
// the recurrence is started high enough above max(n, |x|) that the minimal
// solution dominates by the time it reaches n.
inline double bessel_j(int n, double x) {
    if (!std::isfinite(x))
        throw std::invalid_argument("bessel_j: argument not finite");
    if (n < -128 || n > 128)
        throw std::invalid_argument("bessel_j: order out of supported range (|n| <= 128), got n=" + std::to_string(n));
    if (std::fabs(x) > 100.0)
        throw std::invalid_argument("bessel_j: argument out of supported range (|x| <= 100)");

    double sign = 1.0;
    if (n < 0) {
        n = -n;
        if (n & 1) sign = -sign;
    }
    if (x < 0.0) {
        x = -x;
        if (n & 1) sign = -sign;
    }

    if (x == 0.0) return n == 0 ? 1.0 : 0.0;

    if (x < 1e-9) {
        // leading series terms; lgamma sidesteps factorial overflow
        double lead = std::exp(n * std::log(0.5 * x) - std::lgamma(n + 1.0));
        return sign * lead * (1.0 - 0.25 * x * x / (n + 1.0));
    }

    int m_start = std::max(n, static_cast<int>(std::ceil(1.2 * x))) + 42;
    if (m_start & 1) ++m_start;

    const double rescale_limit = 1e250;
    const double rescale_factor = 1e-250;

    double jp = 0.0;           // J_{m+1} (unnormalized)
    double jc = 1e-30;         // J_m
    double target = 0.0;       // unnormalized J_n
    double norm = 0.0;         // J_0 + 2*sum_{even m>0} J_m

    for (int m = m_start; m >= 0; --m) {
        if (m == n) target = jc;
        if (m % 2 == 0) norm += (m == 0) ? jc : 2.0 * jc;
        if (m > 0) {
            double jm = (2.0 * m / x) * jc - jp;
            jp = jc;
            jc = jm;
            if (std::fabs(jc) > rescale_limit) {
                jc *= rescale_factor;
                jp *= rescale_factor;
                target *= rescale_factor;
                norm *= rescale_factor;
            }
        }
    }
    return sign * target / norm;
}

} // namespace fringecorr
