#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fringecorr/events.hpp"
#include "fringecorr/model.hpp"

namespace fringecorr {

// Undo a fitted periodic dephasing by sliding each event against the phase it
// was detected at: y' = y - (lambda / 2 pi) phi0 cos(omega t + phase).
// Shifted events may leave the detector window; they are kept and counted.
inline EventStream shift_events(const EventStream& s, double lambda, double phi0, double omega,
                                double phase) {
    if (!std::isfinite(lambda) || lambda <= 0.0)
        throw std::invalid_argument("shift_events: lambda must be > 0");
    if (!std::isfinite(phi0) || phi0 < 0.0)
        throw std::invalid_argument("shift_events: phi0 must be >= 0");
    if (!std::isfinite(omega) || omega <= 0.0)
        throw std::invalid_argument("shift_events: omega must be > 0");
    if (!std::isfinite(phase))
        throw std::invalid_argument("shift_events: phase not finite");

    EventStream out = s;
    const double d = lambda / two_pi * phi0;
    const double half = 0.5 * s.window.extent;
    out.n_outside = 0;
    for (auto& e : out.events) {
        e.y -= d * std::cos(omega * e.t + phase);
        if (e.y < -half || e.y > half) ++out.n_outside;
    }
    return out;
}

namespace detail {

// Least-squares spatial contrast from the cos/sin moments of the event
// positions. A plain 2|sum exp(iky)|/N picks up rectangular-window leakage
// of order 2/(kL) whenever the window holds a non-integer number of fringe
// periods, so the moments are corrected with the analytic Gram matrix of
// {1, cos(ky), sin(ky)} over the symmetric support [-L/2, L/2].
inline double moment_contrast(double mean_cos, double mean_sin, double k, double support) {
    const double h = 0.5 * k * support;
    const double s1 = std::sin(h) / h;
    const double c2 = 0.5 + std::sin(2.0 * h) / (4.0 * h);
    const double s2 = 0.5 - std::sin(2.0 * h) / (4.0 * h);
    const double det = c2 - s1 * s1;
    const double a0 = (c2 - s1 * mean_cos) / det;
    const double a1 = (mean_cos - s1) / det;
    const double a2 = mean_sin / s2;
    return std::sqrt(a1 * a1 + a2 * a2) / a0;
}

} // namespace detail

// spatial contrast estimator: least-squares amplitude of cos(ky)/sin(ky)
// against the event positions, relative to the mean level. Noise floor for a
// structureless stream is sqrt(pi / N). The support is widened beyond the
// acquisition window when shifted events lie outside it.
inline double fringe_contrast(const EventStream& s, double k) {
    if (!std::isfinite(k) || k <= 0.0)
        throw std::invalid_argument("fringe_contrast: k must be > 0");
    if (s.events.size() < 100)
        throw std::runtime_error("fringe_contrast: too few events for a contrast estimate (need >= 100)");
    double sc = 0.0, ss = 0.0, ymax = 0.0;
    for (const auto& e : s.events) {
        sc += std::cos(k * e.y);
        ss += std::sin(k * e.y);
        ymax = std::max(ymax, std::abs(e.y));
    }
    const double support = std::max(s.window.extent, 2.0 * ymax);
    if (k * support < 2.0 * two_pi)
        throw std::invalid_argument("fringe_contrast: support shorter than two fringe periods");
    const double n_inv = 1.0 / static_cast<double>(s.events.size());
    return detail::moment_contrast(sc * n_inv, ss * n_inv, k, support);
}

struct PhaseScanPoint {
    double phase = 0.0;
    double contrast = 0.0;
};

struct ReconstructionReport {
    double best_phase = 0.0;
    double contrast_before = 0.0;
    double contrast_after = 0.0;
    std::vector<PhaseScanPoint> scan;
    EventStream restored;
};

// Coarse scan of the unknown perturbation start phase followed by
// golden-section refinement down to a 2 pi / 1024 bracket. The fitted
// lambda / phi0 / omega are taken as given; only the phase is searched.
inline ReconstructionReport scan_phase(const EventStream& s, const ModelParameters& fitted,
                                       int n_coarse = 64) {
    fitted.validate();
    if (n_coarse < 4)
        throw std::invalid_argument("scan_phase: n_coarse must be >= 4");
    if (s.events.size() < 100)
        throw std::runtime_error("scan_phase: too few events for a contrast estimate (need >= 100)");

    const double k = fitted.fringe.wavenumber();
    const double omega = fitted.perturbation.omega();
    const double d = fitted.fringe.lambda / two_pi * fitted.perturbation.phi0;
    const double n_inv = 1.0 / static_cast<double>(s.events.size());

    // Shifted events within d of the window edge have partial time coverage
    // (their source position left the detector for part of the cycle), which
    // washes the restored pattern out locally. Contrast is therefore taken on
    // the fully covered interior when it still spans a few fringe periods.
    const double interior = s.window.extent - 2.0 * d;
    const bool use_interior = interior * k >= 2.0 * two_pi;

    auto contrast_at = [&](double phase) {
        double sc = 0.0, ss = 0.0, ymax = 0.0;
        std::size_t m = 0;
        const double half_cut = 0.5 * interior;
        for (const auto& e : s.events) {
            const double y = e.y - d * std::cos(omega * e.t + phase);
            if (use_interior && std::abs(y) > half_cut) continue;
            sc += std::cos(k * y);
            ss += std::sin(k * y);
            ymax = std::max(ymax, std::abs(y));
            ++m;
        }
        if (m < 100) return 0.0;
        const double support =
            use_interior ? interior : std::max(s.window.extent, 2.0 * ymax);
        return detail::moment_contrast(sc / static_cast<double>(m), ss / static_cast<double>(m), k,
                                       support);
    };

    ReconstructionReport rep;
    rep.contrast_before = fringe_contrast(s, k);

    rep.scan.reserve(n_coarse);
    std::size_t best = 0;
    for (int m = 0; m < n_coarse; ++m) {
        const double ph = two_pi * m / n_coarse;
        rep.scan.push_back({ph, contrast_at(ph)});
        if (rep.scan[m].contrast > rep.scan[best].contrast) best = m;
    }

    double mx = rep.scan[0].contrast, mn = rep.scan[0].contrast;
    for (const auto& p : rep.scan) {
        mx = std::max(mx, p.contrast);
        mn = std::min(mn, p.contrast);
    }
    const double noise_floor = std::sqrt(pi * n_inv);
    if (mx < 3.0 * noise_floor)
        throw std::runtime_error("scan_phase: scan is flat, no contrast recoverable");

    // golden-section around the coarse maximum
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = rep.scan[best].phase - two_pi / n_coarse;
    double hi = rep.scan[best].phase + two_pi / n_coarse;
    double x1 = hi - gr * (hi - lo);
    double x2 = lo + gr * (hi - lo);
    double f1 = contrast_at(x1);
    double f2 = contrast_at(x2);
    while (hi - lo > two_pi / 1024.0) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = contrast_at(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = contrast_at(x1);
        }
    }
    double best_phase = 0.5 * (lo + hi);
    best_phase = std::fmod(best_phase, two_pi);
    if (best_phase < 0.0) best_phase += two_pi;

    rep.best_phase = best_phase;
    rep.restored = shift_events(s, fitted.fringe.lambda, fitted.perturbation.phi0, omega, best_phase);
    rep.contrast_after = contrast_at(best_phase);
    return rep;
}

} // namespace fringecorr
