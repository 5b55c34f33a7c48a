#pragma once

#include <bit>
#include <charconv>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fringecorr/correlate.hpp"
#include "fringecorr/events.hpp"
#include "fringecorr/fit.hpp"
#include "fringecorr/reconstruct.hpp"
#include "fringecorr/simulate.hpp"

namespace fringecorr {

// ---------------------------------------------------------------------------
// small helpers
// ---------------------------------------------------------------------------

namespace ioutil {

inline std::string format(const char* fmt, ...) {
    char buf[256];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, args);
    va_end(args);
    return buf;
}

// full round-trip double
inline std::string g17(double v) { return format("%.17g", v); }
// fixed decimal, 12 places: >= 9 significant digits for any |v| >= 1e-3 and
// absolute error < 5.1e-13 everywhere, the decimal rounding of 5e-13 plus the
// re-parse ulp (values are seconds / millimeters)
inline std::string f12(double v) { return format("%.12f", v); }

inline double parse_double(std::string_view sv, const std::string& what, std::size_t line) {
    double v = 0.0;
    const auto res = std::from_chars(sv.data(), sv.data() + sv.size(), v);
    if (res.ec != std::errc{} || res.ptr != sv.data() + sv.size() || !std::isfinite(v))
        throw std::runtime_error("parse error at line " + std::to_string(line) + ": bad " + what +
                                 " '" + std::string(sv) + "'");
    return v;
}

inline std::uint64_t parse_u64(std::string_view sv, const std::string& what, std::size_t line) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(sv.data(), sv.data() + sv.size(), v);
    if (res.ec != std::errc{} || res.ptr != sv.data() + sv.size())
        throw std::runtime_error("parse error at line " + std::to_string(line) + ": bad " + what +
                                 " '" + std::string(sv) + "'");
    return v;
}

inline std::string trim(std::string s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

struct LineReader {
    std::ifstream in;
    std::size_t line_no = 0;
    explicit LineReader(const std::string& path) : in(path) {
        if (!in) throw std::runtime_error("cannot open " + path);
    }
    bool next(std::string& out) {
        if (!std::getline(in, out)) return false;
        ++line_no;
        if (!out.empty() && out.back() == '\r') out.pop_back();
        return true;
    }
};

inline void le_put(std::string& buf, const void* p, std::size_t n) {
    // serialize little-endian; byte-swap on big-endian hosts
    const auto* b = static_cast<const unsigned char*>(p);
    if constexpr (std::endian::native == std::endian::little) {
        buf.append(reinterpret_cast<const char*>(b), n);
    } else {
        for (std::size_t i = n; i-- > 0;) buf.push_back(static_cast<char>(b[i]));
    }
}

template <class T>
inline T le_get(const char* p) {
    T v;
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(&v, p, sizeof(T));
    } else {
        char tmp[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) tmp[i] = p[sizeof(T) - 1 - i];
        std::memcpy(&v, tmp, sizeof(T));
    }
    return v;
}

} // namespace ioutil

// FNV-1a 64-bit, used for manifest integrity listings
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::uint64_t h = 14695981039346656037ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// event list, text:
//   # fringe-events v1, T=<s>, Y=<mm>, N=<count>
//   t_seconds,y_mm[,x_mm]
// ---------------------------------------------------------------------------

inline void write_events_text(const std::string& path, const EventStream& s) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# fringe-events v1, T=" << ioutil::g17(s.window.duration)
        << ", Y=" << ioutil::g17(s.window.extent) << ", N=" << s.events.size() << "\n";
    std::string line;
    for (const auto& e : s.events) {
        line = ioutil::f12(e.t);
        line += ',';
        line += ioutil::f12(e.y);
        if (s.has_x) {
            line += ',';
            line += ioutil::f12(e.x);
        }
        line += '\n';
        out << line;
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

// rate is reconstructed as N/T: the window carries no separate field in the file
inline EventStream read_events_text(const std::string& path) {
    ioutil::LineReader rd(path);
    std::string line;
    if (!rd.next(line)) throw std::runtime_error(path + ": empty file");
    const std::string magic = "# fringe-events v1,";
    if (line.rfind(magic, 0) != 0)
        throw std::runtime_error(path + ": not a fringe-events v1 file");

    EventStream s;
    std::uint64_t n_declared = 0;
    {
        std::string rest = line.substr(magic.size());
        std::istringstream hs(rest);
        std::string field;
        bool got_t = false, got_y = false, got_n = false;
        while (std::getline(hs, field, ',')) {
            field = ioutil::trim(field);
            if (field.rfind("T=", 0) == 0) {
                s.window.duration = ioutil::parse_double(field.substr(2), "T", 1);
                got_t = true;
            } else if (field.rfind("Y=", 0) == 0) {
                s.window.extent = ioutil::parse_double(field.substr(2), "Y", 1);
                got_y = true;
            } else if (field.rfind("N=", 0) == 0) {
                n_declared = ioutil::parse_u64(field.substr(2), "N", 1);
                got_n = true;
            }
        }
        if (!got_t || !got_y || !got_n)
            throw std::runtime_error(path + ": header missing T=, Y= or N=");
        if (!(s.window.duration > 0.0) || !(s.window.extent > 0.0))
            throw std::runtime_error(path + ": header T and Y must be > 0");
    }
    s.events.reserve(n_declared);
    const double half = 0.5 * s.window.extent;
    double prev_t = 0.0;
    bool first = true;
    while (rd.next(line)) {
        if (line.empty()) continue;
        const char* p = line.data();
        const char* end = p + line.size();
        const char* c1 = static_cast<const char*>(std::memchr(p, ',', end - p));
        if (!c1)
            throw std::runtime_error(path + ": parse error at line " +
                                     std::to_string(rd.line_no) + ": expected t,y");
        const char* c2 = static_cast<const char*>(std::memchr(c1 + 1, ',', end - c1 - 1));
        EventRecord e;
        e.t = ioutil::parse_double({p, static_cast<std::size_t>(c1 - p)}, "t", rd.line_no);
        if (c2) {
            e.y = ioutil::parse_double({c1 + 1, static_cast<std::size_t>(c2 - c1 - 1)}, "y", rd.line_no);
            e.x = ioutil::parse_double({c2 + 1, static_cast<std::size_t>(end - c2 - 1)}, "x", rd.line_no);
        } else {
            e.y = ioutil::parse_double({c1 + 1, static_cast<std::size_t>(end - c1 - 1)}, "y", rd.line_no);
        }
        const bool line_has_x = c2 != nullptr;
        if (first) {
            s.has_x = line_has_x;
            first = false;
        } else if (line_has_x != s.has_x) {
            throw std::runtime_error(path + ": inconsistent column count at line " +
                                     std::to_string(rd.line_no));
        }
        if (e.t < prev_t)
            throw std::runtime_error(path + ": events out of order at line " +
                                     std::to_string(rd.line_no));
        if (e.t < 0.0 || e.t > s.window.duration)
            throw std::runtime_error(path + ": timestamp outside [0, T] at line " +
                                     std::to_string(rd.line_no));
        prev_t = e.t;
        if (e.y < -half || e.y > half) ++s.n_outside; // restored streams may overhang
        s.events.push_back(e);
    }
    if (s.events.size() != n_declared)
        throw std::runtime_error(path + ": header declares N=" + std::to_string(n_declared) +
                                 " but file has " + std::to_string(s.events.size()) + " events");
    s.window.rate = static_cast<double>(s.events.size()) / s.window.duration;
    return s;
}

// ---------------------------------------------------------------------------
// event list, packed binary. Layout (little-endian):
//   magic "FREV1" | u8 flags (bit0: has x) | u64 N | f64 T | f64 Y
//   then N records of f64 t, f64 y [, f64 x]
// ---------------------------------------------------------------------------

inline void write_events_binary(const std::string& path, const EventStream& s) {
    std::string buf;
    buf.reserve(30 + s.events.size() * (s.has_x ? 24 : 16));
    buf.append("FREV1", 5);
    buf.push_back(static_cast<char>(s.has_x ? 1 : 0));
    const std::uint64_t n = s.events.size();
    ioutil::le_put(buf, &n, 8);
    ioutil::le_put(buf, &s.window.duration, 8);
    ioutil::le_put(buf, &s.window.extent, 8);
    for (const auto& e : s.events) {
        ioutil::le_put(buf, &e.t, 8);
        ioutil::le_put(buf, &e.y, 8);
        if (s.has_x) ioutil::le_put(buf, &e.x, 8);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline EventStream read_events_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 30 || buf.compare(0, 5, "FREV1") != 0)
        throw std::runtime_error(path + ": not a FREV1 file");
    EventStream s;
    s.has_x = (buf[5] & 1) != 0;
    const std::uint64_t n = ioutil::le_get<std::uint64_t>(buf.data() + 6);
    s.window.duration = ioutil::le_get<double>(buf.data() + 14);
    s.window.extent = ioutil::le_get<double>(buf.data() + 22);
    if (!(s.window.duration > 0.0) || !(s.window.extent > 0.0))
        throw std::runtime_error(path + ": header T and Y must be > 0");
    const std::size_t rec = s.has_x ? 24 : 16;
    if (buf.size() != 30 + n * rec)
        throw std::runtime_error(path + ": truncated FREV1 payload");
    s.events.resize(n);
    const double half = 0.5 * s.window.extent;
    const char* p = buf.data() + 30;
    double prev_t = 0.0;
    for (std::uint64_t i = 0; i < n; ++i, p += rec) {
        EventRecord& e = s.events[i];
        e.t = ioutil::le_get<double>(p);
        e.y = ioutil::le_get<double>(p + 8);
        if (s.has_x) e.x = ioutil::le_get<double>(p + 16);
        if (!std::isfinite(e.t) || e.t < prev_t || e.t > s.window.duration)
            throw std::runtime_error(path + ": events out of order at record " +
                                     std::to_string(i + 1));
        prev_t = e.t;
        if (e.y < -half || e.y > half) ++s.n_outside;
    }
    s.window.rate = static_cast<double>(n) / s.window.duration;
    return s;
}

inline EventStream read_events(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[5] = {};
    in.read(magic, 5);
    if (in.gcount() == 5 && std::memcmp(magic, "FREV1", 5) == 0) return read_events_binary(path);
    return read_events_text(path);
}

// ---------------------------------------------------------------------------
// correlation grid CSV:
//   # fringe-grid v1
//   # spec tau_max_s=... delta_tau_s=... u_max_mm=... delta_u_mm=...
//   # meta n_events=... duration_s=... extent_mm=...
//   tau_s,u_mm,count,g2
// ---------------------------------------------------------------------------

inline void write_grid_csv(const std::string& path, const CorrelationGrid& grid) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# fringe-grid v1\n";
    out << "# spec tau_max_s=" << ioutil::g17(grid.spec.tau_max)
        << " delta_tau_s=" << ioutil::g17(grid.spec.delta_tau)
        << " u_max_mm=" << ioutil::g17(grid.spec.u_max)
        << " delta_u_mm=" << ioutil::g17(grid.spec.delta_u) << "\n";
    out << "# meta n_events=" << grid.n_events << " duration_s=" << ioutil::g17(grid.duration)
        << " extent_mm=" << ioutil::g17(grid.extent) << "\n";
    out << "tau_s,u_mm,count,g2\n";
    for (std::size_t r = 0; r < grid.counts.rows; ++r)
        for (std::size_t c = 0; c < grid.counts.cols; ++c)
            out << ioutil::g17(grid.spec.tau_center(r)) << ',' << ioutil::g17(grid.spec.u_center(c))
                << ',' << grid.counts(r, c) << ',' << ioutil::g17(grid.g2(r, c)) << "\n";
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline CorrelationGrid read_grid_csv(const std::string& path) {
    ioutil::LineReader rd(path);
    std::string line;
    if (!rd.next(line) || line != "# fringe-grid v1")
        throw std::runtime_error(path + ": not a fringe-grid v1 file");

    CorrelationGrid grid;
    auto read_kv_line = [&](const std::string& prefix) {
        if (!rd.next(line) || line.rfind(prefix, 0) != 0)
            throw std::runtime_error(path + ": missing '" + prefix + "' header line");
        std::map<std::string, std::string> kv;
        std::istringstream ss(line.substr(prefix.size()));
        std::string tok;
        while (ss >> tok) {
            const auto eq = tok.find('=');
            if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
        }
        return kv;
    };
    {
        auto kv = read_kv_line("# spec");
        grid.spec.tau_max = ioutil::parse_double(kv.at("tau_max_s"), "tau_max_s", rd.line_no);
        grid.spec.delta_tau = ioutil::parse_double(kv.at("delta_tau_s"), "delta_tau_s", rd.line_no);
        grid.spec.u_max = ioutil::parse_double(kv.at("u_max_mm"), "u_max_mm", rd.line_no);
        grid.spec.delta_u = ioutil::parse_double(kv.at("delta_u_mm"), "delta_u_mm", rd.line_no);
    }
    {
        auto kv = read_kv_line("# meta");
        grid.n_events = ioutil::parse_u64(kv.at("n_events"), "n_events", rd.line_no);
        grid.duration = ioutil::parse_double(kv.at("duration_s"), "duration_s", rd.line_no);
        grid.extent = ioutil::parse_double(kv.at("extent_mm"), "extent_mm", rd.line_no);
    }
    grid.spec.validate();
    if (!rd.next(line) || line != "tau_s,u_mm,count,g2")
        throw std::runtime_error(path + ": missing column header");

    const std::size_t n_tau = grid.spec.n_tau(), n_u = grid.spec.n_u();
    grid.counts = Mat<std::uint64_t>(n_tau, n_u, 0);
    grid.g2 = Mat<double>(n_tau, n_u, 0.0);
    std::size_t idx = 0;
    while (rd.next(line)) {
        if (line.empty()) continue;
        if (idx >= n_tau * n_u)
            throw std::runtime_error(path + ": more rows than spec allows at line " +
                                     std::to_string(rd.line_no));
        std::istringstream ss(line);
        std::string f_tau, f_u, f_count, f_g2;
        if (!std::getline(ss, f_tau, ',') || !std::getline(ss, f_u, ',') ||
            !std::getline(ss, f_count, ',') || !std::getline(ss, f_g2))
            throw std::runtime_error(path + ": parse error at line " + std::to_string(rd.line_no));
        grid.counts.v[idx] = ioutil::parse_u64(f_count, "count", rd.line_no);
        grid.g2.v[idx] = ioutil::parse_double(f_g2, "g2", rd.line_no);
        ++idx;
    }
    if (idx != n_tau * n_u)
        throw std::runtime_error(path + ": expected " + std::to_string(n_tau * n_u) +
                                 " data rows, found " + std::to_string(idx));
    return grid;
}

// ---------------------------------------------------------------------------
// PGM heatmap of g2 (binary P5, 8 or 16 bit), rows = tau, cols = u, linear
// map over the stated [min,max]
// ---------------------------------------------------------------------------

inline void write_grid_pgm(const std::string& path, const CorrelationGrid& grid, int bits = 8) {
    if (bits != 8 && bits != 16)
        throw std::invalid_argument("write_grid_pgm: bits must be 8 or 16");
    double lo = grid.g2.v.empty() ? 0.0 : grid.g2.v[0];
    double hi = lo;
    for (double v : grid.g2.v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi <= lo) hi = lo + 1.0;
    const unsigned maxval = bits == 8 ? 255u : 65535u;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "P5\n# g2 min=" << ioutil::g17(lo) << " max=" << ioutil::g17(hi) << "\n"
        << grid.g2.cols << " " << grid.g2.rows << "\n"
        << maxval << "\n";
    std::string buf;
    buf.reserve(grid.g2.v.size() * (bits / 8));
    for (double v : grid.g2.v) {
        const double f = (v - lo) / (hi - lo);
        const unsigned q = static_cast<unsigned>(f * maxval + 0.5);
        if (bits == 8) {
            buf.push_back(static_cast<char>(q & 0xff));
        } else {
            buf.push_back(static_cast<char>((q >> 8) & 0xff)); // PGM 16-bit is big-endian
            buf.push_back(static_cast<char>(q & 0xff));
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("write failed for " + path);
}

// ---------------------------------------------------------------------------
// fit result, key=value block
// ---------------------------------------------------------------------------

inline void write_fit_result(const std::string& path, const FitResult& fr) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# fringe-fit v1\n";
    out << "nu_hz=" << ioutil::g17(fr.params.perturbation.nu) << "\n";
    out << "nu_hz_sigma=" << ioutil::g17(fr.nu_sigma) << "\n";
    out << "k_contrast=" << ioutil::g17(fr.params.fringe.contrast) << "\n";
    out << "k_contrast_sigma=" << ioutil::g17(fr.contrast_sigma) << "\n";
    out << "lambda_mm=" << ioutil::g17(fr.params.fringe.lambda) << "\n";
    out << "lambda_mm_sigma=" << ioutil::g17(fr.lambda_sigma) << "\n";
    out << "phi0_rad=" << ioutil::g17(fr.params.perturbation.phi0) << "\n";
    out << "phi0_rad_sigma=" << ioutil::g17(fr.phi0_sigma) << "\n";
    out << "rms_residual=" << ioutil::g17(fr.rms_residual) << "\n";
    out << "converged=" << (fr.converged ? 1 : 0) << "\n";
    out << "iterations=" << fr.iterations << "\n";
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline std::map<std::string, std::string> read_kv_file(const std::string& path) {
    ioutil::LineReader rd(path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (rd.next(line)) {
        line = ioutil::trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ": expected key=value at line " +
                                     std::to_string(rd.line_no));
        kv[ioutil::trim(line.substr(0, eq))] = ioutil::trim(line.substr(eq + 1));
    }
    return kv;
}

inline FitResult read_fit_result(const std::string& path) {
    const auto kv = read_kv_file(path);
    auto need = [&](const char* key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end())
            throw std::runtime_error(path + ": missing key '" + key + "'");
        return it->second;
    };
    FitResult fr;
    fr.params.perturbation.nu = ioutil::parse_double(need("nu_hz"), "nu_hz", 0);
    fr.nu_sigma = ioutil::parse_double(need("nu_hz_sigma"), "nu_hz_sigma", 0);
    fr.params.fringe.contrast = ioutil::parse_double(need("k_contrast"), "k_contrast", 0);
    fr.contrast_sigma = ioutil::parse_double(need("k_contrast_sigma"), "k_contrast_sigma", 0);
    fr.params.fringe.lambda = ioutil::parse_double(need("lambda_mm"), "lambda_mm", 0);
    fr.lambda_sigma = ioutil::parse_double(need("lambda_mm_sigma"), "lambda_mm_sigma", 0);
    fr.params.perturbation.phi0 = ioutil::parse_double(need("phi0_rad"), "phi0_rad", 0);
    fr.phi0_sigma = ioutil::parse_double(need("phi0_rad_sigma"), "phi0_rad_sigma", 0);
    fr.rms_residual = ioutil::parse_double(need("rms_residual"), "rms_residual", 0);
    fr.converged = need("converged") == "1";
    return fr;
}

// ---------------------------------------------------------------------------
// reconstruction report + phase scan + histograms
// ---------------------------------------------------------------------------

inline void write_reconstruction_report(const std::string& path, const ReconstructionReport& rep) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# fringe-reconstruction v1\n";
    out << "best_phase_rad=" << ioutil::g17(rep.best_phase) << "\n";
    out << "contrast_before=" << ioutil::g17(rep.contrast_before) << "\n";
    out << "contrast_after=" << ioutil::g17(rep.contrast_after) << "\n";
    out << "n_outside=" << rep.restored.n_outside << "\n";
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline void write_phase_scan_csv(const std::string& path, const ReconstructionReport& rep) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "phase_rad,contrast\n";
    for (const auto& p : rep.scan)
        out << ioutil::g17(p.phase) << ',' << ioutil::g17(p.contrast) << "\n";
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline void write_histogram_csv(const std::string& path, const Histogram1D& h) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# underflow=" << h.underflow << " overflow=" << h.overflow << "\n";
    out << "y_mm,count\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i)
        out << ioutil::g17(h.center(i)) << ',' << h.counts[i] << "\n";
    if (!out) throw std::runtime_error("write failed for " + path);
}

} // namespace fringecorr
