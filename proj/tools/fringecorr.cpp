// command line front end: simulate / correlate / fit / reconstruct / pipeline / report

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fringecorr/fringecorr.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::string grid_arg;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool out_set = false;
    bool heatmap = false;
    bool heatmap_set = false;
    std::string format;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "key=value config file");
    cmd->add_option("--out", o.out_dir, "output directory")->each([&](const std::string&) {
        o.out_set = true;
    });
    cmd->add_option("--seed", o.seed, "simulation seed")->each([&](const std::string&) {
        o.seed_set = true;
    });
}

fringecorr::PipelineConfig resolve_config(const CommonOpts& o) {
    fringecorr::PipelineConfig cfg = o.config_path.empty()
                                         ? fringecorr::default_config()
                                         : fringecorr::parse_config_file(o.config_path);
    if (o.seed_set) cfg.seed = o.seed;
    if (o.out_set) cfg.output_dir = o.out_dir;
    if (o.heatmap_set) cfg.heatmap = o.heatmap;
    if (!o.format.empty()) {
        if (o.format != "csv" && o.format != "bin")
            throw std::runtime_error("config: --format must be csv or bin");
        cfg.event_format = o.format;
    }
    if (!o.grid_arg.empty()) {
        double v[4];
        if (std::sscanf(o.grid_arg.c_str(), "%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2], &v[3]) != 4)
            throw std::runtime_error("config: --grid expects tau_max,delta_tau,u_max,delta_u");
        cfg.grid = {v[0], v[1], v[2], v[3]};
    }
    cfg.finalize();
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"periodic-dephasing correlation toolkit"};
    app.require_subcommand(1);

    CommonOpts sim_o, cor_o, fit_o, rec_o, pipe_o;
    std::string cor_events, fit_grid, rec_events, rec_fit, report_dir;
    int rec_points = 0;
    bool rec_true_params = false, pipe_true_params = false;

    auto* sim = app.add_subcommand("simulate", "generate a time-tagged event stream");
    add_common(sim, sim_o);
    sim->add_option("--format", sim_o.format, "event file format: csv or bin");

    auto* cor = app.add_subcommand("correlate", "bin event pairs into a (tau, u) grid");
    add_common(cor, cor_o);
    cor->add_option("--events", cor_events, "input event file")->required();
    cor->add_option("--grid", cor_o.grid_arg, "tau_max,delta_tau,u_max,delta_u");
    cor->add_flag("--heatmap", cor_o.heatmap, "also write a PGM heatmap of g2")
        ->each([&](const std::string&) { cor_o.heatmap_set = true; });

    auto* fitc = app.add_subcommand("fit", "fit the dephasing model to a correlation grid");
    add_common(fitc, fit_o);
    fitc->add_option("--grid-file", fit_grid, "input grid CSV")->required();

    auto* rec = app.add_subcommand("reconstruct", "phase-scan and restore fringe contrast");
    add_common(rec, rec_o);
    rec->add_option("--events", rec_events, "input event file")->required();
    rec->add_option("--fit-file", rec_fit, "fit result to take parameters from");
    rec->add_option("--scan-points", rec_points, "coarse scan points (default 64)");
    rec->add_flag("--true-params", rec_true_params,
                  "diagnostic: shift with the configured model, not the fit");
    rec->add_option("--format", rec_o.format, "restored event file format: csv or bin");

    auto* pipe = app.add_subcommand("pipeline", "simulate, correlate, fit, reconstruct");
    add_common(pipe, pipe_o);
    pipe->add_option("--grid", pipe_o.grid_arg, "tau_max,delta_tau,u_max,delta_u");
    pipe->add_option("--format", pipe_o.format, "event file format: csv or bin");
    pipe->add_flag("--heatmap", pipe_o.heatmap, "also write a PGM heatmap of g2")
        ->each([&](const std::string&) { pipe_o.heatmap_set = true; });
    pipe->add_flag("--true-params", pipe_true_params,
                   "diagnostic: reconstruct with the configured model, not the fit");

    auto* rep = app.add_subcommand("report", "verify an output directory against its manifest");
    rep->add_option("--out", report_dir, "output directory to verify")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            const auto cfg = resolve_config(sim_o);
            const std::string path = fringecorr::cmd_simulate(cfg);
            std::printf("wrote %s\n", path.c_str());
        } else if (cor->parsed()) {
            const auto cfg = resolve_config(cor_o);
            const std::string path = fringecorr::cmd_correlate(cfg, cor_events);
            std::printf("wrote %s\n", path.c_str());
        } else if (fitc->parsed()) {
            const auto cfg = resolve_config(fit_o);
            const auto fr = fringecorr::cmd_fit(cfg, fit_grid);
            std::printf("nu_hz=%.6f k_contrast=%.4f lambda_mm=%.5f phi0_rad=%.5f converged=%d\n",
                        fr.params.perturbation.nu, fr.params.fringe.contrast,
                        fr.params.fringe.lambda, fr.params.perturbation.phi0,
                        fr.converged ? 1 : 0);
        } else if (rec->parsed()) {
            auto cfg = resolve_config(rec_o);
            if (rec_points > 0) cfg.scan_points = rec_points;
            if (rec_true_params) cfg.use_true_params = true;
            if (!cfg.use_true_params && rec_fit.empty())
                throw std::runtime_error("reconstruct: need --fit-file (or --true-params)");
            const auto report = fringecorr::cmd_reconstruct(cfg, rec_events, rec_fit);
            std::printf("best_phase_rad=%.5f contrast_before=%.4f contrast_after=%.4f\n",
                        report.best_phase, report.contrast_before, report.contrast_after);
        } else if (pipe->parsed()) {
            auto cfg = resolve_config(pipe_o);
            if (pipe_true_params) cfg.use_true_params = true;
            fringecorr::cmd_pipeline(cfg);
            std::printf("pipeline complete in %s\n", cfg.output_dir.c_str());
        } else if (rep->parsed()) {
            const auto problems = fringecorr::verify_manifest(report_dir);
            if (problems.empty()) {
                std::printf("manifest ok: %s\n", report_dir.c_str());
            } else {
                for (const auto& p : problems) std::printf("MISMATCH %s\n", p.c_str());
                std::fprintf(stderr, "error: report: %zu manifest entries failed verification\n",
                             problems.size());
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
