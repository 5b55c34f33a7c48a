#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "fringecorr/correlate.hpp"
#include "fringecorr/model.hpp"

namespace fringecorr {

enum class WeightMode { poisson, uniform };

struct FitOptions {
    int max_iterations = 200;
    double convergence_tol = 1e-10; // relative parameter change
    SeriesOptions series{16, 1e-12};
    WeightMode weight_mode = WeightMode::poisson;
    // grid bins hold pair counts integrated over the bin, which attenuates
    // harmonic n of the revival curve by sinc(n omega delta_tau / 2) and the
    // spatial cosine by sinc(k delta_u / 2); when set, the forward model
    // includes those factors instead of sampling at bin centers
    bool bin_average = true;
};

struct FitResult {
    ModelParameters params;
    double nu_sigma = 0.0;
    double contrast_sigma = 0.0;
    double lambda_sigma = 0.0;
    double phi0_sigma = 0.0;
    double rms_residual = 0.0;
    bool converged = false;
    int iterations = 0;
    Mat<double> residual; // data - model, per bin
};

struct InitialGuess {
    ModelParameters params;
    bool nu_identifiable = true;
};

namespace detail {

// ----- small dense linear algebra, enough for the 4x4 normal equations -----

template <std::size_t N>
inline std::array<double, N> solve_linear(std::array<std::array<double, N>, N> a,
                                          std::array<double, N> b) {
    for (std::size_t col = 0; col < N; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < N; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
        if (std::fabs(a[piv][col]) < 1e-300)
            throw std::runtime_error("fit: singular normal matrix");
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        for (std::size_t r = col + 1; r < N; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < N; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::array<double, N> x{};
    for (std::size_t ri = N; ri-- > 0;) {
        double s = b[ri];
        for (std::size_t c = ri + 1; c < N; ++c) s -= a[ri][c] * x[c];
        x[ri] = s / a[ri][ri];
    }
    return x;
}

template <std::size_t N>
inline std::array<std::array<double, N>, N> invert(std::array<std::array<double, N>, N> a) {
    std::array<std::array<double, N>, N> inv{};
    for (std::size_t i = 0; i < N; ++i) {
        std::array<double, N> e{};
        e[i] = 1.0;
        const auto col = solve_linear<N>(a, e);
        for (std::size_t r = 0; r < N; ++r) inv[r][i] = col[r];
    }
    return inv;
}

// ----- model evaluation over the whole grid -----

// theta = (nu, K, lambda, phi0)
inline void eval_model(const GridSpec& spec, const std::array<double, 4>& th,
                       const FitOptions& fopt, Mat<double>& out) {
    const double nu = th[0], K = th[1], lambda = th[2], phi0 = th[3];
    const double omega = two_pi * nu;
    const double k = two_pi / lambda;
    SeriesOptions opts = SeriesOptions::for_peak_phase(phi0, fopt.series.tolerance);
    opts.n_max = std::max(opts.n_max, fopt.series.n_max);

    const std::size_t n_tau = spec.n_tau();
    const std::size_t n_u = spec.n_u();
    if (out.rows != n_tau || out.cols != n_u) out = Mat<double>(n_tau, n_u, 0.0);

    auto sinc = [](double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; };

    // revival curve coefficients c_n = J_n(phi0)^2, harmonics attenuated by
    // the tau-bin average when requested
    std::vector<double> coef(static_cast<std::size_t>(opts.n_max) + 1);
    {
        const double j0 = bessel_j(0, phi0);
        coef[0] = 0.5 * j0 * j0;
        for (int n = 1; n <= opts.n_max; ++n) {
            const double jn = bessel_j(n, phi0);
            coef[n] = jn * jn *
                      (fopt.bin_average ? sinc(0.5 * n * omega * spec.delta_tau) : 1.0);
        }
    }
    const double kk = K * K;
    std::vector<double> amp(n_tau);
    for (std::size_t r = 0; r < n_tau; ++r) {
        const double c1 = std::cos(omega * spec.tau_center(r));
        double cn_prev = 1.0, cn = c1, acc = coef[0];
        for (int n = 1; n <= opts.n_max; ++n) {
            acc += coef[n] * cn;
            const double cnext = 2.0 * c1 * cn - cn_prev;
            cn_prev = cn;
            cn = cnext;
        }
        amp[r] = kk * acc;
    }
    const double u_atten = fopt.bin_average ? sinc(0.5 * k * spec.delta_u) : 1.0;
    std::vector<double> cu(n_u);
    for (std::size_t c = 0; c < n_u; ++c) cu[c] = u_atten * std::cos(k * spec.u_center(c));

    for (std::size_t r = 0; r < n_tau; ++r) {
        const double a = amp[r];
        double* row = &out(r, 0);
        for (std::size_t c = 0; c < n_u; ++c) row[c] = 1.0 + a * cu[c];
    }
}

struct Bounds {
    std::array<double, 4> lo{1e-9, 0.0, 1e-9, 0.0};
    std::array<double, 4> hi{1e12, 1.0, 1e12, two_pi};
    void clamp(std::array<double, 4>& th) const {
        for (int i = 0; i < 4; ++i) th[i] = std::min(std::max(th[i], lo[i]), hi[i]);
    }
};

struct LmRun {
    std::array<double, 4> theta{};
    std::array<std::array<double, 4>, 4> hessian{};
    double cost = 0.0;
    bool converged = false;
    int iterations = 0;
    std::size_t n_weighted = 0;
};

inline double weighted_cost(const Mat<double>& data, const Mat<double>& model,
                            const std::vector<double>& w) {
    double c = 0.0;
    for (std::size_t i = 0; i < data.v.size(); ++i) {
        const double r = data.v[i] - model.v[i];
        c += w[i] * r * r;
    }
    return c;
}

// damped Gauss-Newton with forward-difference Jacobian and box projection
inline LmRun lm_minimize(const CorrelationGrid& grid, std::array<double, 4> theta,
                         const std::vector<double>& w, const FitOptions& opts) {
    const Bounds bounds;
    bounds.clamp(theta);

    const std::size_t nb = grid.g2.v.size();
    Mat<double> model, pert;
    eval_model(grid.spec, theta, opts, model);
    double cost = weighted_cost(grid.g2, model, w);

    std::vector<std::array<double, 4>> jac(nb); // d(model)/d(theta_p) per bin
    double mu = 1e-3;
    bool converged = false;
    int iter = 0;

    for (; iter < opts.max_iterations && !converged; ++iter) {
        // Jacobian by forward differences, relative step 1e-6
        for (int p = 0; p < 4; ++p) {
            std::array<double, 4> tp = theta;
            double h = 1e-6 * std::max(std::fabs(theta[p]), 1e-3);
            if (tp[p] + h > bounds.hi[p]) h = -h; // step inward at an active bound
            tp[p] += h;
            eval_model(grid.spec, tp, opts, pert);
            const double inv_h = 1.0 / h;
            for (std::size_t i = 0; i < nb; ++i) jac[i][p] = (pert.v[i] - model.v[i]) * inv_h;
        }

        std::array<std::array<double, 4>, 4> jtj{};
        std::array<double, 4> jtr{};
        for (std::size_t i = 0; i < nb; ++i) {
            const double wi = w[i];
            if (wi == 0.0) continue;
            const double r = grid.g2.v[i] - model.v[i];
            for (int p = 0; p < 4; ++p) {
                jtr[p] += wi * jac[i][p] * r;
                for (int q = p; q < 4; ++q) jtj[p][q] += wi * jac[i][p] * jac[i][q];
            }
        }
        for (int p = 0; p < 4; ++p)
            for (int q = 0; q < p; ++q) jtj[p][q] = jtj[q][p];

        bool accepted = false;
        for (int attempt = 0; attempt < 25 && !accepted; ++attempt) {
            auto damped = jtj;
            for (int p = 0; p < 4; ++p)
                damped[p][p] += mu * (jtj[p][p] > 0.0 ? jtj[p][p] : 1.0);
            std::array<double, 4> step{};
            try {
                step = solve_linear<4>(damped, jtr);
            } catch (const std::runtime_error&) {
                mu *= 10.0;
                continue;
            }
            std::array<double, 4> trial = theta;
            for (int p = 0; p < 4; ++p) trial[p] += step[p];
            bounds.clamp(trial);

            eval_model(grid.spec, trial, opts, pert);
            const double trial_cost = weighted_cost(grid.g2, pert, w);
            if (trial_cost <= cost) {
                double rel = 0.0;
                for (int p = 0; p < 4; ++p)
                    rel = std::max(rel, std::fabs(trial[p] - theta[p]) /
                                            std::max(std::fabs(theta[p]), 1e-12));
                theta = trial;
                std::swap(model.v, pert.v);
                cost = trial_cost;
                mu = std::max(mu / 3.0, 1e-12);
                accepted = true;
                if (rel < opts.convergence_tol) converged = true;
            } else {
                mu *= 4.0;
            }
        }
        if (!accepted) break; // damping exhausted, treat as stalled
    }

    LmRun run;
    run.theta = theta;
    run.cost = cost;
    run.converged = converged;
    run.iterations = iter;

    // final Gauss-Newton normal matrix at the optimum (undamped) for sigmas
    for (int p = 0; p < 4; ++p) {
        std::array<double, 4> tp = theta;
        double h = 1e-6 * std::max(std::fabs(theta[p]), 1e-3);
        if (tp[p] + h > bounds.hi[p]) h = -h;
        tp[p] += h;
        eval_model(grid.spec, tp, opts, pert);
        const double inv_h = 1.0 / h;
        for (std::size_t i = 0; i < nb; ++i) jac[i][p] = (pert.v[i] - model.v[i]) * inv_h;
    }
    run.hessian = {};
    run.n_weighted = 0;
    for (std::size_t i = 0; i < nb; ++i) {
        const double wi = w[i];
        if (wi == 0.0) continue;
        ++run.n_weighted;
        for (int p = 0; p < 4; ++p)
            for (int q = p; q < 4; ++q) run.hessian[p][q] += wi * jac[i][p] * jac[i][q];
    }
    for (int p = 0; p < 4; ++p)
        for (int q = 0; q < p; ++q) run.hessian[p][q] = run.hessian[q][p];
    return run;
}

// direct DFT magnitudes up to Nyquist; the incremental rotation keeps the
// inner loop trig-free (error ~n*eps, irrelevant for peak picking)
inline std::vector<double> dft_magnitude(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<double> mag(n / 2 + 1, 0.0);
    for (std::size_t q = 0; q <= n / 2; ++q) {
        const double a = -two_pi * static_cast<double>(q) / static_cast<double>(n);
        const double wr = std::cos(a), wi = std::sin(a);
        double cr = 1.0, ci = 0.0;
        double re = 0.0, im = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            re += x[j] * cr;
            im += x[j] * ci;
            const double nr = cr * wr - ci * wi;
            ci = cr * wi + ci * wr;
            cr = nr;
        }
        mag[q] = std::hypot(re, im);
    }
    return mag;
}

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

inline double dtft_mag(const std::vector<double>& x, double f) { // f in cycles per sample
    const double a = -two_pi * f;
    const double wr = std::cos(a), wi = std::sin(a);
    double cr = 1.0, ci = 0.0, re = 0.0, im = 0.0;
    for (double v : x) {
        re += v * cr;
        im += v * ci;
        const double nr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = nr;
    }
    return std::hypot(re, im);
}

// sub-bin peak refinement: golden-section maximum of |DTFT| within one DFT bin
// either side of bin q; returns cycles per sample
inline double refine_frequency(const std::vector<double>& x, std::size_t q) {
    const double n = static_cast<double>(x.size());
    double lo = std::max((static_cast<double>(q) - 1.0) / n, 0.3 / n);
    double hi = std::min((static_cast<double>(q) + 1.0) / n, 0.499);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = dtft_mag(x, x1), f2 = dtft_mag(x, x2);
    for (int it = 0; it < 48 && hi - lo > 1e-7 / n; ++it) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = dtft_mag(x, x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = dtft_mag(x, x1);
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Spectral starting point: lambda from the u-axis DFT peak, nu from the
// temporal DFT of the in-phase amplitude profile, K from A(0), phi0 from the
// A_min/A_max ratio against the model by bisection.
// ---------------------------------------------------------------------------

inline InitialGuess initial_guess(const CorrelationGrid& grid) {
    const GridSpec& spec = grid.spec;
    if (grid.g2.rows != spec.n_tau() || grid.g2.cols != spec.n_u())
        throw std::invalid_argument("initial_guess: grid g2 shape does not match spec");
    const std::size_t n_u = spec.n_u();
    const std::size_t n_tau = spec.n_tau();
    if (n_u < 8 || n_tau < 8)
        throw std::invalid_argument("initial_guess: grid too coarse (need >= 8 bins per axis)");

    // spatial frequency: average |DFT| of (g2 - 1) over tau rows
    std::vector<double> avg_mag(n_u / 2 + 1, 0.0);
    double row_l1 = 0.0; // average per-row L1 of (g2 - 1), the physical scale
    {
        std::vector<double> row(n_u);
        for (std::size_t r = 0; r < n_tau; ++r) {
            for (std::size_t c = 0; c < n_u; ++c) {
                row[c] = grid.g2(r, c) - 1.0;
                row_l1 += std::fabs(row[c]);
            }
            const auto mag = detail::dft_magnitude(row);
            for (std::size_t q = 0; q < avg_mag.size(); ++q) avg_mag[q] += mag[q];
        }
        for (auto& m : avg_mag) m /= static_cast<double>(n_tau);
        row_l1 /= static_cast<double>(n_tau);
    }
    std::size_t q_peak = 1;
    for (std::size_t q = 2; q + 1 < avg_mag.size(); ++q)
        if (avg_mag[q] > avg_mag[q_peak]) q_peak = q;
    const double floor_u =
        detail::median_of({avg_mag.begin() + 1, avg_mag.end() - (avg_mag.size() > 2 ? 1 : 0)});
    // the absolute guard rejects constant grids whose spectrum is pure
    // floating point rounding noise
    if (!(avg_mag[q_peak] > 3.0 * floor_u) || !(avg_mag[q_peak] > 1e-9 * row_l1))
        throw std::runtime_error("initial_guess: no significant spectral peak");
    // refine on the first tau row, where the modulation amplitude is largest
    std::vector<double> row0(n_u);
    for (std::size_t c = 0; c < n_u; ++c) row0[c] = grid.g2(0, c) - 1.0;
    const double f_u = detail::refine_frequency(row0, q_peak);
    const double lambda_hat = spec.delta_u / f_u;
    const double k_hat = two_pi / lambda_hat;

    // amplitude profile at the estimated wavenumber
    const AmplitudeProfile prof = amplitude_profile(grid, k_hat);

    // K from A(0) (first tau row)
    const double a0 = std::max(prof.in_phase.front(), 0.0);
    const double k_contrast = std::clamp(std::sqrt(2.0 * a0), 0.0, 1.0);

    // nu from the temporal DFT of the in-phase profile
    bool nu_identifiable = true;
    double nu_hat;
    {
        std::vector<double> centered = prof.in_phase;
        double mean = 0.0, prof_l1 = 0.0;
        for (double v : centered) {
            mean += v;
            prof_l1 += std::fabs(v);
        }
        mean /= static_cast<double>(centered.size());
        for (double& v : centered) v -= mean;
        const auto tmag = detail::dft_magnitude(centered);
        std::size_t qt = 1;
        for (std::size_t q = 2; q + 1 < tmag.size(); ++q)
            if (tmag[q] > tmag[qt]) qt = q;
        const double floor_t =
            detail::median_of({tmag.begin() + 1, tmag.end() - (tmag.size() > 2 ? 1 : 0)});
        // absolute guard against rounding-noise spectra of a flat profile, as
        // for the spatial axis above
        if (!(tmag[qt] > 3.0 * floor_t) || !(tmag[qt] > 1e-9 * prof_l1)) {
            nu_identifiable = false;
            nu_hat = 1.0 / (static_cast<double>(n_tau) * spec.delta_tau);
        } else {
            // prefer the subharmonic when the fundamental is strong enough;
            // guards against locking onto 2 nu where J_1(phi0) is small
            for (std::size_t qh : {qt / 2, (qt + 1) / 2}) {
                if (qh >= 1 && qh < qt && tmag[qh] > 0.3 * tmag[qt] &&
                    tmag[qh] > 3.0 * floor_t) {
                    qt = qh;
                    break;
                }
            }
            const double f_t = detail::refine_frequency(centered, qt);
            nu_hat = f_t / spec.delta_tau;
        }
    }

    // phi0 by inverting the min/max ratio of A against the model.
    // min_z J0(z) over z in [0, 2 phi0] is 1 at phi0 = 0 and saturates at the
    // global J0 minimum once 2 phi0 passes 3.8317; beyond that the ratio alone
    // cannot localize phi0 and the multi-start in fit() takes over.
    double phi0_hat = 0.0;
    {
        double a_max = prof.in_phase.front(), a_min = prof.in_phase.front();
        for (double v : prof.in_phase) {
            a_max = std::max(a_max, v);
            a_min = std::min(a_min, v);
        }
        auto model_ratio = [](double phi0) {
            if (phi0 <= 0.0) return 1.0;
            double mn = 1.0;
            const int n_scan = 512;
            for (int i = 1; i <= n_scan; ++i)
                mn = std::min(mn, bessel_j(0, 2.0 * phi0 * i / n_scan));
            return mn;
        };
        if (a_max > 0.0) {
            const double r_data = std::clamp(a_min / a_max, -1.0, 1.0);
            double lo = 0.0, hi = two_pi;
            if (r_data >= 1.0) {
                phi0_hat = 0.0;
            } else if (r_data <= model_ratio(two_pi) + 1e-6) {
                phi0_hat = 3.8317059702075125 / 2.0; // saturation onset
            } else {
                for (int it = 0; it < 60 && hi - lo > 1e-4; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    if (model_ratio(mid) > r_data)
                        lo = mid;
                    else
                        hi = mid;
                }
                phi0_hat = 0.5 * (lo + hi);
            }
        }
    }

    InitialGuess ig;
    ig.params.fringe.f0 =
        grid.duration > 0.0 && grid.extent > 0.0
            ? static_cast<double>(grid.n_events) / (grid.duration * grid.extent)
            : 0.0;
    ig.params.fringe.contrast = k_contrast;
    ig.params.fringe.lambda = lambda_hat;
    ig.params.perturbation.phi0 = phi0_hat;
    ig.params.perturbation.nu = nu_hat;
    ig.params.perturbation.start_phase = 0.0;
    ig.nu_identifiable = nu_identifiable;
    return ig;
}

// ---------------------------------------------------------------------------
// Weighted fit of 1 + A(tau; K, phi0, nu) cos(2 pi u / lambda) to the grid.
// Offset pinned at exactly 1. Multi-start over phi0 (three starts across
// [0, 2 pi]); the lowest-cost run wins. Uncertainties are the linearized
// 1-sigma values from the inverse normal matrix scaled by residual variance.
// ---------------------------------------------------------------------------

inline FitResult fit(const CorrelationGrid& grid, const ModelParameters& init,
                     const FitOptions& opts = {}) {
    init.validate();
    const GridSpec& spec = grid.spec;
    if (grid.g2.rows != spec.n_tau() || grid.g2.cols != spec.n_u())
        throw std::invalid_argument("fit: grid g2 shape does not match spec");
    if (spec.n_u() < 8 || spec.n_tau() < 8)
        throw std::invalid_argument("fit: grid too coarse (need >= 8 bins per axis)");
    if (opts.max_iterations < 1)
        throw std::invalid_argument("fit: max_iterations must be >= 1");

    const std::size_t nb = grid.g2.v.size();
    std::vector<double> w(nb, 1.0);
    if (opts.weight_mode == WeightMode::poisson) {
        if (grid.counts.v.size() != nb)
            throw std::invalid_argument("fit: poisson weights need counts matching g2");
        for (std::size_t i = 0; i < nb; ++i) w[i] = static_cast<double>(grid.counts.v[i]);
    }

    const std::array<double, 4> base{init.perturbation.nu, init.fringe.contrast,
                                     init.fringe.lambda, init.perturbation.phi0};
    detail::LmRun best;
    bool have = false;
    for (int s = 0; s < 3; ++s) {
        std::array<double, 4> th = base;
        th[3] = std::fmod(base[3] + s * (two_pi / 3.0), two_pi);
        const auto run = detail::lm_minimize(grid, th, w, opts);
        if (!have || run.cost < best.cost) {
            best = run;
            have = true;
        }
    }

    FitResult res;
    res.params.fringe.f0 = init.fringe.f0;
    res.params.fringe.contrast = best.theta[1];
    res.params.fringe.lambda = best.theta[2];
    res.params.perturbation.nu = best.theta[0];
    res.params.perturbation.phi0 = best.theta[3];
    res.params.perturbation.start_phase = 0.0;
    res.converged = best.converged;
    res.iterations = best.iterations;

    // residual matrix and rms on the winning parameters
    Mat<double> model;
    detail::eval_model(spec, best.theta, opts, model);
    res.residual = Mat<double>(grid.g2.rows, grid.g2.cols, 0.0);
    double ss = 0.0;
    for (std::size_t i = 0; i < nb; ++i) {
        res.residual.v[i] = grid.g2.v[i] - model.v[i];
        ss += res.residual.v[i] * res.residual.v[i];
    }
    res.rms_residual = std::sqrt(ss / static_cast<double>(nb));

    // 1-sigma from inverse normal matrix, scaled by weighted residual variance
    std::array<std::array<double, 4>, 4> cov_unscaled;
    try {
        cov_unscaled = detail::invert<4>(best.hessian);
    } catch (const std::runtime_error&) {
        throw std::runtime_error(
            "fit: parameters unidentifiable on this grid (flat revival curve or zero weights)");
    }
    const double dof = std::max<double>(1.0, static_cast<double>(best.n_weighted) - 4.0);
    const double s2 = best.cost / dof;
    auto sig = [&](int p) {
        const double v = cov_unscaled[p][p] * s2;
        return v > 0.0 ? std::sqrt(v) : 0.0;
    };
    res.nu_sigma = sig(0);
    res.contrast_sigma = sig(1);
    res.lambda_sigma = sig(2);
    res.phi0_sigma = sig(3);
    return res;
}

} // namespace fringecorr
