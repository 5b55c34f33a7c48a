#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fringecorr/events.hpp"
#include "fringecorr/model.hpp"

namespace fringecorr {

template <class T>
struct Mat {
    std::size_t rows = 0, cols = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), v(r * c, fill) {}
    T& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// ---------------------------------------------------------------------------
// (tau, u) grid layout. tau bins cover [0, n_tau*delta_tau), u bins cover
// [-u_max, u_max) with signed u = y_later - y_earlier.
// ---------------------------------------------------------------------------

struct GridSpec {
    double tau_max = 0.060;  // s
    double delta_tau = 5e-4; // s
    double u_max = 8.0;      // mm
    double delta_u = 0.1;    // mm

    void validate() const {
        if (!std::isfinite(tau_max) || !std::isfinite(delta_tau) || !std::isfinite(u_max) ||
            !std::isfinite(delta_u))
            throw std::invalid_argument("GridSpec: non-finite field");
        if (delta_tau <= 0.0 || delta_tau > tau_max)
            throw std::invalid_argument("GridSpec: need 0 < delta_tau <= tau_max");
        if (delta_u <= 0.0 || delta_u > u_max)
            throw std::invalid_argument("GridSpec: need 0 < delta_u <= u_max");
    }
    void validate_against(const AcquisitionWindow& w) const {
        validate();
        if (!(tau_max < w.duration))
            throw std::invalid_argument("GridSpec: tau_max must be below the stream duration");
        if (!(u_max < w.extent))
            throw std::invalid_argument("GridSpec: u_max must be below the stream extent");
    }

    std::size_t n_tau() const {
        return static_cast<std::size_t>(std::ceil(tau_max / delta_tau - 1e-9));
    }
    std::size_t n_u() const {
        return static_cast<std::size_t>(std::ceil(2.0 * u_max / delta_u - 1e-9));
    }
    double tau_center(std::size_t r) const { return (r + 0.5) * delta_tau; }
    double u_center(std::size_t c) const { return -u_max + (c + 0.5) * delta_u; }
};

struct CorrelationGrid {
    GridSpec spec;
    std::uint64_t n_events = 0; // N
    double duration = 0.0;      // T
    double extent = 0.0;        // Y
    Mat<std::uint64_t> counts;  // n_tau x n_u
    Mat<double> g2;
};

// ---------------------------------------------------------------------------
// Pair binning. Sliding window over the time-sorted stream: for each event i
// only predecessors within tau range are visited, so the cost is N * (pairs
// per window) instead of N^2. Ordered pairs, u = y_i - y_j with t_i >= t_j;
// self pairs excluded; equal-timestamp pairs land in tau bin 0 with |u| so the
// result does not depend on how ties are ordered in the input.
// ---------------------------------------------------------------------------

inline Mat<std::uint64_t> pair_histogram(const EventStream& s, const GridSpec& spec) {
    spec.validate_against(s.window);
    s.validate_order();

    const std::size_t n_tau = spec.n_tau();
    const std::size_t n_u = spec.n_u();
    Mat<std::uint64_t> counts(n_tau, n_u, 0);

    const double tau_lim = n_tau * spec.delta_tau;
    const double u_max = spec.u_max;
    const double inv_dtau = 1.0 / spec.delta_tau;
    const double inv_du = 1.0 / spec.delta_u;
    const EventRecord* ev = s.events.data();
    const std::size_t n = s.events.size();

    std::size_t j_lo = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double ti = ev[i].t;
        const double yi = ev[i].y;
        while (j_lo < i && ti - ev[j_lo].t >= tau_lim) ++j_lo;
        for (std::size_t j = j_lo; j < i; ++j) {
            const double dt = ti - ev[j].t;
            double u = yi - ev[j].y;
            if (dt == 0.0) u = std::fabs(u);
            if (u < -u_max || u >= u_max) continue;
            std::size_t row = static_cast<std::size_t>(dt * inv_dtau);
            std::size_t col = static_cast<std::size_t>((u + u_max) * inv_du);
            if (row >= n_tau) row = n_tau - 1; // guard the rounding seam at tau_lim
            if (col >= n_u) col = n_u - 1;
            ++counts(row, col);
        }
    }
    return counts;
}

// finite-window pair-count correction, evaluated at bin centers:
//   g2 = (T Y / (N^2 dtau du)) * counts / ((1 - tau/T)(1 - |u|/Y))
inline Mat<double> normalize(const Mat<std::uint64_t>& counts, std::uint64_t n_events,
                             double duration, double extent, const GridSpec& spec) {
    spec.validate();
    if (counts.rows != spec.n_tau() || counts.cols != spec.n_u())
        throw std::invalid_argument("normalize: counts shape does not match spec");
    if (!(duration > 0.0) || !(extent > 0.0))
        throw std::invalid_argument("normalize: duration and extent must be > 0");

    Mat<double> g2(counts.rows, counts.cols, 0.0);
    if (n_events == 0) return g2; // empty stream: leave g2 at 0, nothing to estimate

    const double nd = static_cast<double>(n_events);
    const double scale = duration * extent / (nd * nd * spec.delta_tau * spec.delta_u);
    for (std::size_t r = 0; r < counts.rows; ++r) {
        const double tw = 1.0 - spec.tau_center(r) / duration;
        for (std::size_t c = 0; c < counts.cols; ++c) {
            const double uw = 1.0 - std::fabs(spec.u_center(c)) / extent;
            g2(r, c) = scale * static_cast<double>(counts(r, c)) / (tw * uw);
        }
    }
    return g2;
}

inline CorrelationGrid correlate(const EventStream& s, const GridSpec& spec) {
    CorrelationGrid grid;
    grid.spec = spec;
    grid.n_events = s.events.size();
    grid.duration = s.window.duration;
    grid.extent = s.window.extent;
    grid.counts = pair_histogram(s, spec);
    grid.g2 = normalize(grid.counts, grid.n_events, grid.duration, grid.extent, spec);
    return grid;
}

// ---------------------------------------------------------------------------
// Nearest-neighbour displacement histogram with the 1/(1 - |dy|/Y) correction
// for the finite detector. dy axis spans (-Y, Y) so every consecutive pair is
// counted; dx is tracked only when the stream carries a transverse axis.
// ---------------------------------------------------------------------------

struct NeighborHistogram {
    double extent = 0.0; // Y
    std::size_t n_dy = 0, n_dx = 0;
    Mat<std::uint64_t> counts; // n_dx rows x n_dy cols
    std::uint64_t pairs_total = 0;

    double dy_center(std::size_t c) const {
        return -extent + (c + 0.5) * (2.0 * extent / n_dy);
    }
    // dy profile summed over dx, corrected for finite extent
    std::vector<double> corrected_dy_profile() const {
        std::vector<double> prof(n_dy, 0.0);
        for (std::size_t c = 0; c < n_dy; ++c) {
            std::uint64_t sum = 0;
            for (std::size_t r = 0; r < n_dx; ++r) sum += counts(r, c);
            prof[c] = static_cast<double>(sum) / (1.0 - std::fabs(dy_center(c)) / extent);
        }
        return prof;
    }
};

inline NeighborHistogram neighbor_histogram(const EventStream& s, std::size_t n_dy,
                                            std::size_t n_dx = 1) {
    if (n_dy < 2)
        throw std::invalid_argument("neighbor_histogram: need at least 2 dy bins");
    if (n_dx < 1)
        throw std::invalid_argument("neighbor_histogram: need at least 1 dx bin");
    s.validate_order();
    NeighborHistogram h;
    h.extent = s.window.extent;
    h.n_dy = n_dy;
    h.n_dx = s.has_x ? n_dx : 1;
    h.counts = Mat<std::uint64_t>(h.n_dx, n_dy, 0);
    if (s.events.size() < 2) return h;

    const double span = 2.0 * s.window.extent; // dy in (-Y, Y)
    for (std::size_t i = 0; i + 1 < s.events.size(); ++i) {
        const double dy = s.events[i + 1].y - s.events[i].y;
        const double fc = (dy + s.window.extent) / span * n_dy;
        const std::size_t c = fc <= 0.0 ? 0 : std::min(static_cast<std::size_t>(fc), n_dy - 1);
        std::size_t r = 0;
        if (s.has_x) {
            const double dx = s.events[i + 1].x - s.events[i].x;
            const double f = (dx + s.window.extent) / span * h.n_dx;
            r = f <= 0.0 ? 0 : std::min(static_cast<std::size_t>(f), h.n_dx - 1);
        }
        ++h.counts(r, c);
        ++h.pairs_total;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Per-tau-row least squares projection of (g2 - 1) onto cos(k u), sin(k u).
// in_phase recovers the signed A(tau); quadrature should stay at noise level
// for a well-centered grid.
// ---------------------------------------------------------------------------

struct AmplitudeProfile {
    std::vector<double> tau;       // row centers
    std::vector<double> in_phase;  // a, from cos(k u)
    std::vector<double> quadrature;// b, from sin(k u)
};

inline AmplitudeProfile amplitude_profile(const CorrelationGrid& grid, double k) {
    if (!std::isfinite(k) || k <= 0.0)
        throw std::invalid_argument("amplitude_profile: k must be > 0");
    const GridSpec& spec = grid.spec;
    const double period = two_pi / k;
    if (period < 2.0 * spec.delta_u || period > 2.0 * spec.u_max)
        throw std::invalid_argument("amplitude_profile: k out of grid resolution range");
    if (grid.g2.rows != spec.n_tau() || grid.g2.cols != spec.n_u())
        throw std::invalid_argument("amplitude_profile: grid g2 shape does not match spec");

    const std::size_t n_u = spec.n_u();
    std::vector<double> cosv(n_u), sinv(n_u);
    double scc = 0.0, sss = 0.0, scs = 0.0;
    for (std::size_t c = 0; c < n_u; ++c) {
        cosv[c] = std::cos(k * spec.u_center(c));
        sinv[c] = std::sin(k * spec.u_center(c));
        scc += cosv[c] * cosv[c];
        sss += sinv[c] * sinv[c];
        scs += cosv[c] * sinv[c];
    }
    const double det = scc * sss - scs * scs;
    if (std::fabs(det) < 1e-12 * scc * sss)
        throw std::invalid_argument("amplitude_profile: degenerate basis on this grid");

    AmplitudeProfile prof;
    prof.tau.resize(grid.g2.rows);
    prof.in_phase.resize(grid.g2.rows);
    prof.quadrature.resize(grid.g2.rows);
    for (std::size_t r = 0; r < grid.g2.rows; ++r) {
        double sc = 0.0, ss = 0.0;
        for (std::size_t c = 0; c < n_u; ++c) {
            const double d = grid.g2(r, c) - 1.0;
            sc += d * cosv[c];
            ss += d * sinv[c];
        }
        prof.tau[r] = spec.tau_center(r);
        prof.in_phase[r] = (sc * sss - ss * scs) / det;
        prof.quadrature[r] = (ss * scc - sc * scs) / det;
    }
    return prof;
}

} // namespace fringecorr
