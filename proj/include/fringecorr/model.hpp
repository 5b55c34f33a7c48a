#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "fringecorr/bessel.hpp"

namespace fringecorr {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

// ---------------------------------------------------------------------------
// Parameter structs. Units: mm, s, Hz, rad throughout.
// ---------------------------------------------------------------------------

struct FringeParameters {
    double f0 = 0.0;       // mean rate density, events / (mm * s)
    double contrast = 0.0; // K
    double lambda = 1.0;   // fringe period, mm

    void validate() const {
        if (!std::isfinite(f0) || f0 < 0.0)
            throw std::invalid_argument("FringeParameters: f0 must be finite and >= 0");
        if (!std::isfinite(contrast) || contrast < 0.0 || contrast > 1.0)
            throw std::invalid_argument("FringeParameters: contrast violates 0 <= K <= 1");
        if (!std::isfinite(lambda) || lambda <= 0.0)
            throw std::invalid_argument("FringeParameters: lambda must be > 0");
    }
    double wavenumber() const { return two_pi / lambda; }
};

struct PerturbationParameters {
    double phi0 = 0.0;        // peak phase deviation, rad
    double nu = 1.0;          // perturbation frequency, Hz
    double start_phase = 0.0; // phase of the perturbation at t = 0, rad

    void validate() const {
        if (!std::isfinite(phi0) || phi0 < 0.0)
            throw std::invalid_argument("PerturbationParameters: phi0 must be >= 0");
        if (!std::isfinite(nu) || nu <= 0.0)
            throw std::invalid_argument("PerturbationParameters: nu must be > 0");
        if (!std::isfinite(start_phase))
            throw std::invalid_argument("PerturbationParameters: start_phase not finite");
    }
    double omega() const { return two_pi * nu; }
};

struct ModelParameters {
    FringeParameters fringe;
    PerturbationParameters perturbation;

    void validate() const {
        fringe.validate();
        perturbation.validate();
    }
};

// Truncation control for the J_n^2 sum in modulation_amplitude.
struct SeriesOptions {
    int n_max = 16;
    double tolerance = 1e-12;

    // default order ceil(phi0) + 12, grown until the first dropped term
    // J_{n_max+1}(phi0)^2 falls below 1e-14 (or below tol if stricter)
    static SeriesOptions for_peak_phase(double phi0, double tol = 1e-12) {
        if (!std::isfinite(phi0) || phi0 < 0.0)
            throw std::invalid_argument("SeriesOptions: phi0 must be >= 0");
        SeriesOptions o;
        o.tolerance = tol;
        o.n_max = static_cast<int>(std::ceil(phi0)) + 12;
        const double bound = std::min(tol, 1e-14);
        while (o.n_max < 127) {
            double tail = bessel_j(o.n_max + 1, phi0);
            if (tail * tail < bound) break;
            ++o.n_max;
        }
        return o;
    }

    void validate(double phi0) const {
        if (n_max < 1 || n_max > 127)
            throw std::invalid_argument("SeriesOptions: n_max out of range [1, 127]");
        if (n_max < static_cast<int>(std::ceil(phi0)))
            throw std::invalid_argument("SeriesOptions: n_max below ceil(phi0)");
        if (!std::isfinite(tolerance) || tolerance <= 0.0)
            throw std::invalid_argument("SeriesOptions: tolerance must be > 0");
    }
};

// ---------------------------------------------------------------------------
// Analytic model
// ---------------------------------------------------------------------------

// instantaneous detection rate density  f0 * (1 + K cos(k y + phi0 cos(w t + phase)))
inline double intensity(double y, double t, const ModelParameters& p) {
    p.validate();
    const double k = p.fringe.wavenumber();
    const double phase = p.perturbation.phi0 *
                         std::cos(p.perturbation.omega() * t + p.perturbation.start_phase);
    return p.fringe.f0 * (1.0 + p.fringe.contrast * std::cos(k * y + phase));
}

// long-time average of intensity: contrast washes out to K * J0(phi0)
inline double time_averaged_pattern(double y, const ModelParameters& p) {
    p.validate();
    const double k = p.fringe.wavenumber();
    return p.fringe.f0 *
           (1.0 + p.fringe.contrast * bessel_j(0, p.perturbation.phi0) * std::cos(k * y));
}

// correlation amplitude A(tau) = K^2 [ J0(phi0)^2 / 2 + sum_{n>=1} J_n(phi0)^2 cos(n w tau) ]
inline double modulation_amplitude(double tau, double contrast, double phi0, double omega,
                                   const SeriesOptions& opts) {
    if (!std::isfinite(tau))
        throw std::invalid_argument("modulation_amplitude: tau not finite");
    if (!std::isfinite(contrast) || contrast < 0.0 || contrast > 1.0)
        throw std::invalid_argument("modulation_amplitude: contrast violates 0 <= K <= 1");
    if (!std::isfinite(phi0) || phi0 < 0.0)
        throw std::invalid_argument("modulation_amplitude: phi0 must be >= 0");
    if (!std::isfinite(omega) || omega <= 0.0)
        throw std::invalid_argument("modulation_amplitude: omega must be > 0");
    opts.validate(phi0);

    const double dropped = bessel_j(opts.n_max + 1, phi0);
    if (dropped * dropped >= opts.tolerance)
        throw std::runtime_error("modulation_amplitude: truncation order insufficient for requested tolerance");

    const double j0 = bessel_j(0, phi0);
    double acc = 0.5 * j0 * j0;
    // cos(n w tau) by Chebyshev recurrence
    const double c1 = std::cos(omega * tau);
    double cn_prev = 1.0, cn = c1;
    for (int n = 1; n <= opts.n_max; ++n) {
        const double jn = bessel_j(n, phi0);
        acc += jn * jn * cn;
        const double cnext = 2.0 * c1 * cn - cn_prev;
        cn_prev = cn;
        cn = cnext;
    }
    return contrast * contrast * acc;
}

// second order correlation of the analytic model: g2(u, tau) = 1 + A(tau) cos(k u)
inline double g2_model(double u, double tau, const ModelParameters& p, const SeriesOptions& opts) {
    p.validate();
    const double a = modulation_amplitude(tau, p.fringe.contrast, p.perturbation.phi0,
                                          p.perturbation.omega(), opts);
    return 1.0 + a * std::cos(p.fringe.wavenumber() * u);
}

// ---------------------------------------------------------------------------
// Brute-force reference for g2_model. Direct midpoint quadrature of
//
//   g2(u,tau) = <f(y+u,t+tau) f(y,t)> / ( <f(y+u,t+tau)> <f(y,t)> )
//
// over a finite window. The window must span whole fringe and perturbation
// periods; on such a window the midpoint rule is spectrally exact and the
// finite-window average equals the infinite-window limit. Deliberately does
// not share the Bessel series code path.
// ---------------------------------------------------------------------------

struct OracleGrid {
    double span_y = 0.0; // mm, total y window, centered on 0
    double span_t = 0.0; // s, t window [0, span_t]
    int n_y = 0;
    int n_t = 0;

    static OracleGrid commensurate(const ModelParameters& p, int periods_y, int periods_t,
                                   int n_y, int n_t) {
        OracleGrid g;
        g.span_y = periods_y * p.fringe.lambda;
        g.span_t = periods_t / p.perturbation.nu;
        g.n_y = n_y;
        g.n_t = n_t;
        return g;
    }

    void validate(const ModelParameters& p) const {
        if (!(span_y > 0.0) || !(span_t > 0.0))
            throw std::invalid_argument("OracleGrid: spans must be > 0");
        if (n_y < 2 || n_t < 2)
            throw std::invalid_argument("OracleGrid: need at least 2 samples per axis");
        const double my = span_y / p.fringe.lambda;
        const double mt = span_t * p.perturbation.nu;
        if (std::fabs(my - std::round(my)) > 1e-9 * std::max(1.0, my) ||
            std::fabs(mt - std::round(mt)) > 1e-9 * std::max(1.0, mt))
            throw std::invalid_argument("OracleGrid: grid not commensurate with model periods");
    }
};

inline double g2_numeric_oracle(double u, double tau, const ModelParameters& p,
                                const OracleGrid& grid) {
    p.validate();
    grid.validate(p);
    if (!std::isfinite(u) || !std::isfinite(tau))
        throw std::invalid_argument("g2_numeric_oracle: u/tau not finite");

    const double k = p.fringe.wavenumber();
    const double w = p.perturbation.omega();
    const double K = p.fringe.contrast;
    const double dy = grid.span_y / grid.n_y;
    const double dt = grid.span_t / grid.n_t;

    double num = 0.0, den_a = 0.0, den_b = 0.0;
    for (int j = 0; j < grid.n_t; ++j) {
        const double t = (j + 0.5) * dt;
        const double ph_b = p.perturbation.phi0 * std::cos(w * t + p.perturbation.start_phase);
        const double ph_a = p.perturbation.phi0 * std::cos(w * (t + tau) + p.perturbation.start_phase);
        for (int i = 0; i < grid.n_y; ++i) {
            const double y = -0.5 * grid.span_y + (i + 0.5) * dy;
            const double fa = 1.0 + K * std::cos(k * (y + u) + ph_a);
            const double fb = 1.0 + K * std::cos(k * y + ph_b);
            num += fa * fb;
            den_a += fa;
            den_b += fb;
        }
    }
    const double n = static_cast<double>(grid.n_y) * grid.n_t;
    return num * n / (den_a * den_b);
}

} // namespace fringecorr
