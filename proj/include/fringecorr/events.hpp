#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fringecorr {

struct AcquisitionWindow {
    double duration = 0.0; // T, s
    double extent = 0.0;   // Y, mm, detector spans [-Y/2, Y/2]
    double rate = 0.0;     // R, mean event rate, Hz

    void validate() const {
        if (!std::isfinite(duration) || duration <= 0.0)
            throw std::invalid_argument("AcquisitionWindow: duration must be > 0");
        if (!std::isfinite(extent) || extent <= 0.0)
            throw std::invalid_argument("AcquisitionWindow: extent must be > 0");
        if (!std::isfinite(rate) || rate <= 0.0)
            throw std::invalid_argument("AcquisitionWindow: rate must be > 0");
        if (duration * rate < 1.0)
            throw std::invalid_argument("AcquisitionWindow: expected event count T*R below 1");
    }
};

struct EventRecord {
    double t = 0.0; // s
    double y = 0.0; // mm
    double x = 0.0; // mm, carried only when the stream has a transverse axis
};

struct SimulationProvenance {
    std::uint64_t seed = 0;
    std::string rng = "mt19937_64";
};

struct EventStream {
    AcquisitionWindow window;
    std::vector<EventRecord> events;
    bool has_x = false;
    // events whose y left [-Y/2, Y/2]; nonzero only for restored (shifted) streams
    std::size_t n_outside = 0;
    std::optional<SimulationProvenance> provenance;

    std::size_t size() const { return events.size(); }

    // timestamps non-decreasing and inside [0, T]; returns 1-based index of the
    // first violation, 0 if clean
    std::size_t first_order_violation() const {
        double prev = 0.0;
        for (std::size_t i = 0; i < events.size(); ++i) {
            const double t = events[i].t;
            if (!std::isfinite(t) || t < prev || t > window.duration) return i + 1;
            prev = t;
        }
        return 0;
    }

    void validate_order() const {
        const std::size_t bad = first_order_violation();
        if (bad != 0)
            throw std::runtime_error("EventStream: out-of-order or out-of-range timestamp at event " +
                                     std::to_string(bad));
    }
};

} // namespace fringecorr
