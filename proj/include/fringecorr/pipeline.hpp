#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fringecorr/io.hpp"
#include "fringecorr/version.hpp"

namespace fringecorr {

// ---------------------------------------------------------------------------
// run configuration, parsed from line-based key=value text with dotted keys
// ---------------------------------------------------------------------------

struct PipelineConfig {
    ModelParameters model;
    AcquisitionWindow window;
    GridSpec grid;
    FitOptions fit_options;
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    std::string event_format = "csv"; // csv | bin
    bool heatmap = false;
    int scan_points = 64;
    // diagnostics: drive the reconstruction shift with the configured model
    // instead of the fitted parameters
    bool use_true_params = false;
    bool f0_explicit = false;

    void finalize() {
        if (!f0_explicit) model.fringe.f0 = window.rate / window.extent;
    }
    void validate() const {
        model.validate();
        window.validate();
        grid.validate();
        if (event_format != "csv" && event_format != "bin")
            throw std::invalid_argument("config: event_format must be csv or bin");
        if (scan_points < 4)
            throw std::invalid_argument("config: scan_points must be >= 4");
        if (fit_options.max_iterations < 1)
            throw std::invalid_argument("config: fit.max_iterations must be >= 1");
        if (!(fit_options.convergence_tol > 0.0))
            throw std::invalid_argument("config: fit.convergence_tol must be > 0");
    }
};

// full-scale defaults
inline PipelineConfig default_config() {
    PipelineConfig c;
    c.model.fringe.contrast = 0.345;
    c.model.fringe.lambda = 2.089;
    c.model.perturbation.phi0 = 0.802 * pi;
    c.model.perturbation.nu = 50.0;
    c.model.perturbation.start_phase = 0.0;
    c.window.duration = 100.0;
    c.window.extent = 20.0;
    c.window.rate = 5000.0;
    c.grid = GridSpec{}; // 60 ms x 0.5 ms, 8 mm x 0.1 mm
    c.finalize();
    return c;
}

inline void apply_config_entry(PipelineConfig& c, const std::string& key, const std::string& value,
                               std::size_t line_no) {
    auto bad = [&](const std::string& why) {
        throw std::runtime_error("config line " + std::to_string(line_no) + ": " + key + "=" +
                                 value + " " + why);
    };
    auto as_double = [&]() {
        try {
            return ioutil::parse_double(value, key, line_no);
        } catch (const std::runtime_error&) {
            bad("is not a number");
            return 0.0;
        }
    };
    auto as_u64 = [&]() {
        try {
            return ioutil::parse_u64(value, key, line_no);
        } catch (const std::runtime_error&) {
            bad("is not an unsigned integer");
            return std::uint64_t{0};
        }
    };

    if (key == "model.f0_per_mm_s") {
        c.model.fringe.f0 = as_double();
        c.f0_explicit = true;
    } else if (key == "model.contrast_k") {
        c.model.fringe.contrast = as_double();
        if (c.model.fringe.contrast < 0.0 || c.model.fringe.contrast > 1.0)
            bad("violates 0 <= K <= 1");
    } else if (key == "model.lambda_mm") {
        c.model.fringe.lambda = as_double();
        if (!(c.model.fringe.lambda > 0.0)) bad("violates lambda > 0");
    } else if (key == "model.phi0_rad") {
        c.model.perturbation.phi0 = as_double();
        if (c.model.perturbation.phi0 < 0.0) bad("violates phi0 >= 0");
    } else if (key == "model.nu_hz") {
        c.model.perturbation.nu = as_double();
        if (!(c.model.perturbation.nu > 0.0)) bad("violates nu > 0");
    } else if (key == "model.start_phase_rad") {
        c.model.perturbation.start_phase = as_double();
    } else if (key == "window.duration_s") {
        c.window.duration = as_double();
        if (!(c.window.duration > 0.0)) bad("violates duration > 0");
    } else if (key == "window.extent_mm") {
        c.window.extent = as_double();
        if (!(c.window.extent > 0.0)) bad("violates extent > 0");
    } else if (key == "window.rate_hz") {
        c.window.rate = as_double();
        if (!(c.window.rate > 0.0)) bad("violates rate > 0");
    } else if (key == "grid.tau_max_s") {
        c.grid.tau_max = as_double();
    } else if (key == "grid.delta_tau_s") {
        c.grid.delta_tau = as_double();
    } else if (key == "grid.u_max_mm") {
        c.grid.u_max = as_double();
    } else if (key == "grid.delta_u_mm") {
        c.grid.delta_u = as_double();
    } else if (key == "fit.max_iterations") {
        c.fit_options.max_iterations = static_cast<int>(as_u64());
    } else if (key == "fit.convergence_tol") {
        c.fit_options.convergence_tol = as_double();
    } else if (key == "fit.weight_mode") {
        if (value == "poisson")
            c.fit_options.weight_mode = WeightMode::poisson;
        else if (value == "uniform")
            c.fit_options.weight_mode = WeightMode::uniform;
        else
            bad("must be poisson or uniform");
    } else if (key == "fit.series_n_max") {
        c.fit_options.series.n_max = static_cast<int>(as_u64());
    } else if (key == "fit.series_tolerance") {
        c.fit_options.series.tolerance = as_double();
    } else if (key == "scan.points") {
        c.scan_points = static_cast<int>(as_u64());
    } else if (key == "seed") {
        c.seed = as_u64();
    } else if (key == "output_dir") {
        c.output_dir = value;
    } else if (key == "event_format") {
        if (value != "csv" && value != "bin") bad("must be csv or bin");
        c.event_format = value;
    } else if (key == "heatmap") {
        if (value == "1" || value == "true")
            c.heatmap = true;
        else if (value == "0" || value == "false")
            c.heatmap = false;
        else
            bad("must be 0/1/true/false");
    } else if (key == "use_true_params") {
        c.use_true_params = value == "1" || value == "true";
    } else {
        bad("is not a recognized key");
    }
}

inline PipelineConfig parse_config_file(const std::string& path) {
    PipelineConfig c = default_config();
    ioutil::LineReader rd(path);
    std::string line;
    while (rd.next(line)) {
        line = ioutil::trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(rd.line_no) +
                                     ": expected key=value, got '" + line + "'");
        apply_config_entry(c, ioutil::trim(line.substr(0, eq)), ioutil::trim(line.substr(eq + 1)),
                           rd.line_no);
    }
    c.finalize();
    c.validate();
    return c;
}

inline std::vector<std::string> config_echo(const PipelineConfig& c) {
    std::vector<std::string> out;
    auto put = [&](const std::string& k, const std::string& v) { out.push_back(k + "=" + v); };
    put("model.f0_per_mm_s", ioutil::g17(c.model.fringe.f0));
    put("model.contrast_k", ioutil::g17(c.model.fringe.contrast));
    put("model.lambda_mm", ioutil::g17(c.model.fringe.lambda));
    put("model.phi0_rad", ioutil::g17(c.model.perturbation.phi0));
    put("model.nu_hz", ioutil::g17(c.model.perturbation.nu));
    put("model.start_phase_rad", ioutil::g17(c.model.perturbation.start_phase));
    put("window.duration_s", ioutil::g17(c.window.duration));
    put("window.extent_mm", ioutil::g17(c.window.extent));
    put("window.rate_hz", ioutil::g17(c.window.rate));
    put("grid.tau_max_s", ioutil::g17(c.grid.tau_max));
    put("grid.delta_tau_s", ioutil::g17(c.grid.delta_tau));
    put("grid.u_max_mm", ioutil::g17(c.grid.u_max));
    put("grid.delta_u_mm", ioutil::g17(c.grid.delta_u));
    put("fit.max_iterations", std::to_string(c.fit_options.max_iterations));
    put("fit.convergence_tol", ioutil::g17(c.fit_options.convergence_tol));
    put("fit.weight_mode", c.fit_options.weight_mode == WeightMode::poisson ? "poisson" : "uniform");
    put("scan.points", std::to_string(c.scan_points));
    put("seed", std::to_string(c.seed));
    put("event_format", c.event_format);
    put("heatmap", c.heatmap ? "1" : "0");
    put("use_true_params", c.use_true_params ? "1" : "0");
    return out;
}

// ---------------------------------------------------------------------------
// run manifest: one stanza per command invocation, appended to manifest.txt
// ---------------------------------------------------------------------------

struct ManifestWriter {
    std::string out_dir;
    std::string stage;
    std::vector<std::string> config_lines;
    std::vector<std::pair<std::string, double>> timings; // label, seconds
    std::vector<std::string> files;                      // relative names

    void add_file(const std::string& name) { files.push_back(name); }

    void write() const {
        const std::string path = out_dir + "/manifest.txt";
        const bool fresh = !std::filesystem::exists(path);
        std::ofstream out(path, std::ios::app);
        if (!out) throw std::runtime_error("cannot write " + path);
        if (fresh) out << "# fringecorr run-manifest v1\n";
        out << "[" << stage << "]\n";
        out << "version=" << version_string << "\n";
        for (const auto& l : config_lines) out << "config." << l << "\n";
        for (const auto& [label, sec] : timings)
            out << "time_" << label << "_s=" << ioutil::format("%.6f", sec) << "\n";
        for (const auto& f : files) {
            const std::string full = out_dir + "/" + f;
            out << "file=" << f << " bytes=" << std::filesystem::file_size(full)
                << " fnv1a64=" << ioutil::format("%016llx",
                                                 (unsigned long long)fnv1a64_file(full))
                << "\n";
        }
        if (!out) throw std::runtime_error("write failed for " + path);
    }
};

class StageTimer {
  public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

inline void ensure_output_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw std::runtime_error("output_dir not writable: " + dir);
}

// ---------------------------------------------------------------------------
// commands; each returns the path(s) it produced
// ---------------------------------------------------------------------------

inline std::string cmd_simulate(const PipelineConfig& cfg) {
    cfg.validate();
    ensure_output_dir(cfg.output_dir);
    ManifestWriter man{cfg.output_dir, "simulate", config_echo(cfg)};

    StageTimer timer;
    const EventStream s = simulate(cfg.model, cfg.window, cfg.seed);
    const bool binary = cfg.event_format == "bin";
    const std::string name = binary ? "events.bin" : "events.csv";
    const std::string path = cfg.output_dir + "/" + name;
    if (binary)
        write_events_binary(path, s);
    else
        write_events_text(path, s);
    man.timings.emplace_back("simulate", timer.seconds());
    man.add_file(name);
    man.write();
    return path;
}

inline std::string cmd_correlate(const PipelineConfig& cfg, const std::string& events_path) {
    cfg.grid.validate();
    ensure_output_dir(cfg.output_dir);
    ManifestWriter man{cfg.output_dir, "correlate", config_echo(cfg)};

    EventStream s = read_events(events_path);
    StageTimer timer;
    const CorrelationGrid grid = correlate(s, cfg.grid);
    man.timings.emplace_back("correlate", timer.seconds());

    const std::string path = cfg.output_dir + "/grid.csv";
    write_grid_csv(path, grid);
    man.add_file("grid.csv");
    if (cfg.heatmap) {
        write_grid_pgm(cfg.output_dir + "/grid.pgm", grid, 8);
        man.add_file("grid.pgm");
    }
    man.write();
    return path;
}

inline FitResult cmd_fit(const PipelineConfig& cfg, const std::string& grid_path) {
    ensure_output_dir(cfg.output_dir);
    ManifestWriter man{cfg.output_dir, "fit", config_echo(cfg)};

    const CorrelationGrid grid = read_grid_csv(grid_path);
    StageTimer timer;
    const InitialGuess ig = initial_guess(grid);
    const FitResult fr = fit(grid, ig.params, cfg.fit_options);
    man.timings.emplace_back("fit", timer.seconds());

    write_fit_result(cfg.output_dir + "/fit.txt", fr);
    man.add_file("fit.txt");
    man.write();
    return fr;
}

inline ReconstructionReport cmd_reconstruct(const PipelineConfig& cfg,
                                            const std::string& events_path,
                                            const std::string& fit_path) {
    ensure_output_dir(cfg.output_dir);
    ManifestWriter man{cfg.output_dir, "reconstruct", config_echo(cfg)};

    EventStream s = read_events(events_path);
    ModelParameters params;
    if (cfg.use_true_params) {
        params = cfg.model;
    } else {
        const FitResult fr = read_fit_result(fit_path);
        params = fr.params;
        params.fringe.f0 = cfg.model.fringe.f0; // not part of the fit
    }
    params.validate();

    StageTimer timer;
    const ReconstructionReport rep = scan_phase(s, params, cfg.scan_points);
    man.timings.emplace_back("reconstruct", timer.seconds());

    write_reconstruction_report(cfg.output_dir + "/reconstruction.txt", rep);
    man.add_file("reconstruction.txt");
    write_phase_scan_csv(cfg.output_dir + "/phase_scan.csv", rep);
    man.add_file("phase_scan.csv");

    const std::string restored_name =
        cfg.event_format == "bin" ? "restored_events.bin" : "restored_events.csv";
    if (cfg.event_format == "bin")
        write_events_binary(cfg.output_dir + "/" + restored_name, rep.restored);
    else
        write_events_text(cfg.output_dir + "/" + restored_name, rep.restored);
    man.add_file(restored_name);

    const double bin_width = std::min(params.fringe.lambda / 20.0, s.window.extent / 8.0);
    write_histogram_csv(cfg.output_dir + "/pattern_before.csv", integrated_pattern(s, bin_width));
    man.add_file("pattern_before.csv");
    write_histogram_csv(cfg.output_dir + "/pattern_after.csv",
                        integrated_pattern(rep.restored, bin_width));
    man.add_file("pattern_after.csv");
    man.write();
    return rep;
}

inline void cmd_pipeline(const PipelineConfig& cfg) {
    auto fail = [](const std::string& stage, const std::exception& e) {
        throw std::runtime_error("pipeline stage " + stage + ": " + e.what());
    };
    std::string events_path, grid_path;
    try {
        events_path = cmd_simulate(cfg);
    } catch (const std::exception& e) {
        fail("simulate", e);
    }
    try {
        grid_path = cmd_correlate(cfg, events_path);
    } catch (const std::exception& e) {
        fail("correlate", e);
    }
    try {
        cmd_fit(cfg, grid_path);
    } catch (const std::exception& e) {
        fail("fit", e);
    }
    try {
        cmd_reconstruct(cfg, events_path, cfg.output_dir + "/fit.txt");
    } catch (const std::exception& e) {
        fail("reconstruct", e);
    }
}

// verify a manifest: recompute checksums, return failures (empty = clean)
inline std::vector<std::string> verify_manifest(const std::string& out_dir) {
    const std::string path = out_dir + "/manifest.txt";
    ioutil::LineReader rd(path);
    std::vector<std::string> problems;
    std::string line;
    while (rd.next(line)) {
        if (line.rfind("file=", 0) != 0) continue;
        std::istringstream ss(line);
        std::string f_file, f_bytes, f_sum;
        ss >> f_file >> f_bytes >> f_sum;
        const std::string name = f_file.substr(5);
        if (f_bytes.rfind("bytes=", 0) != 0 || f_sum.rfind("fnv1a64=", 0) != 0) {
            problems.push_back(name + ": malformed manifest line");
            continue;
        }
        const std::string full = out_dir + "/" + name;
        if (!std::filesystem::exists(full)) {
            problems.push_back(name + ": missing");
            continue;
        }
        const auto bytes = std::filesystem::file_size(full);
        if (std::to_string(bytes) != f_bytes.substr(6)) {
            problems.push_back(name + ": size mismatch");
            continue;
        }
        const std::string sum =
            ioutil::format("%016llx", (unsigned long long)fnv1a64_file(full));
        if (sum != f_sum.substr(8)) problems.push_back(name + ": checksum mismatch");
    }
    return problems;
}

} // namespace fringecorr
