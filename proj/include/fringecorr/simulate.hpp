#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <random>
#include <stdexcept>
#include <vector>

#include "fringecorr/events.hpp"
#include "fringecorr/model.hpp"

namespace fringecorr {

// 53-bit uniform in [0, 1); explicit construction so streams reproduce
// bit-identically across standard library implementations
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Time-tagged event stream from the oscillating fringe model: homogeneous
// Poisson arrivals at rate R, positions by rejection sampling under the
// envelope f0 (1 + K). Output is sorted in t by construction.
inline EventStream simulate(const ModelParameters& p, const AcquisitionWindow& w,
                            std::uint64_t seed) {
    p.validate();
    w.validate();
    const double f0_expected = w.rate / w.extent;
    if (std::fabs(p.fringe.f0 / f0_expected - 1.0) > 1e-6)
        throw std::invalid_argument("simulate: f0 inconsistent with window (need f0 = rate / extent)");

    if (w.extent < 5.0 * p.fringe.lambda)
        std::cerr << "warning: extent below 5 fringe periods, washout estimates will be biased\n";
    if (w.duration < 10.0 / p.perturbation.nu)
        std::cerr << "warning: duration below 10 perturbation periods, washout estimates will be biased\n";

    const double k = p.fringe.wavenumber();
    const double omega = p.perturbation.omega();
    const double K = p.fringe.contrast;
    const double phi0 = p.perturbation.phi0;
    const double phs = p.perturbation.start_phase;

    std::mt19937_64 rng(seed);
    EventStream s;
    s.window = w;
    s.provenance = SimulationProvenance{seed, "mt19937_64"};
    s.events.reserve(static_cast<std::size_t>(w.duration * w.rate * 1.05) + 16);

    double t = 0.0;
    while (true) {
        t += -std::log(1.0 - uniform01(rng)) / w.rate;
        if (t >= w.duration) break;
        const double dephase = phi0 * std::cos(omega * t + phs);
        double y;
        while (true) {
            y = (uniform01(rng) - 0.5) * w.extent;
            const double accept = (1.0 + K * std::cos(k * y + dephase)) / (1.0 + K);
            if (uniform01(rng) < accept) break;
        }
        s.events.push_back({t, y, 0.0});
    }
    return s;
}

// ---------------------------------------------------------------------------

struct Histogram1D {
    double lo = 0.0;
    double bin_width = 0.0;
    std::vector<std::uint64_t> counts;
    std::uint64_t underflow = 0;
    std::uint64_t overflow = 0;

    double center(std::size_t i) const { return lo + (i + 0.5) * bin_width; }
    std::uint64_t total() const {
        std::uint64_t n = underflow + overflow;
        for (auto c : counts) n += c;
        return n;
    }
};

// y histogram over the detector extent; restored streams may spill into
// underflow/overflow so the total still accounts for every event
inline Histogram1D integrated_pattern(const EventStream& s, double bin_width) {
    if (!std::isfinite(bin_width) || bin_width <= 0.0)
        throw std::invalid_argument("integrated_pattern: bin_width must be > 0");
    if (bin_width > s.window.extent / 8.0)
        throw std::invalid_argument("integrated_pattern: bin_width above extent/8");
    Histogram1D h;
    h.lo = -0.5 * s.window.extent;
    h.bin_width = bin_width;
    const std::size_t n_bins =
        static_cast<std::size_t>(std::ceil(s.window.extent / bin_width - 1e-9));
    h.counts.assign(n_bins, 0);
    for (const auto& e : s.events) {
        const double f = (e.y - h.lo) / bin_width;
        if (f < 0.0) {
            ++h.underflow;
        } else {
            const std::size_t b = static_cast<std::size_t>(f);
            if (b >= n_bins)
                ++h.overflow;
            else
                ++h.counts[b];
        }
    }
    return h;
}

} // namespace fringecorr
