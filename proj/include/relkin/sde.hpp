#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "relkin/fields.hpp"
#include "relkin/gauge.hpp"
#include "relkin/geometry.hpp"
#include "relkin/linalg.hpp"
#include "relkin/process.hpp"

namespace relkin {

enum class Direction { forward, backward };

struct SimulationConfig {
    double ds;           // parameter step, > 0 (backward runs use -ds internally)
    int n_steps;
    int n_paths;
    Direction direction = Direction::forward;
    std::uint64_t seed = 0;
    GaugeFunction gauge = GaugeFunction::identity();
    bool zero_diffusion = false;  // deterministic b = 0 override

    void validate() const {
        if (!(ds > 0.0)) throw std::invalid_argument("SimulationConfig: ds must be positive");
        if (n_steps < 1 || n_paths < 1) throw std::invalid_argument("SimulationConfig: counts must be >= 1");
    }
};

struct SamplePath {
    std::vector<double> s_values;
    std::vector<SpacetimePoint> points;
    Direction direction = Direction::forward;
    bool failed = false;  // drift/diffusion evaluation failed; path truncated
};

struct Ensemble {
    SpacetimePoint x0;
    double s0 = 0.0;
    Direction direction = Direction::forward;
    double ds = 0.0;  // signed step actually taken
    GaugeFunction gauge = GaugeFunction::identity();
    std::vector<SamplePath> paths;

    std::size_t failed_count() const {
        std::size_t n = 0;
        for (const auto& p : paths) n += p.failed ? 1 : 0;
        return n;
    }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Per-path RNG substream: seed-derived and independent of thread count.
struct PathRng {
    std::mt19937_64 engine;
    std::normal_distribution<double> normal{0.0, 1.0};

    PathRng(std::uint64_t seed, std::uint64_t path_index)
        : engine(splitmix64(splitmix64(seed) ^ splitmix64(path_index + 0x51ed2701ULL))) {}

    double gauss() { return normal(engine); }
};

inline unsigned worker_count() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("RELKIN_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
    return n;
}

/// Lower-triangular b with b b^T = 2w (Cholesky factorization).
inline Mat4 diffusion_factor(const Mat4& w) {
    return cholesky(2.0 * w);
}

/// Euler-Maruyama ensemble of the stochastic difference equation:
/// x += v(x) gdot(s) ds + b(x) xi sqrt(gdot(s) |ds|), with v = v+ forward
/// and v = v- with ds < 0 backward. Noise is Gaussian per step/component.
inline Ensemble simulate_ensemble(const ProcessSpec& spec, const SpacetimePoint& x0, double s0,
                                  const SimulationConfig& cfg) {
    cfg.validate();
    const double ds_signed = cfg.direction == Direction::forward ? cfg.ds : -cfg.ds;

    Ensemble ens;
    ens.x0 = x0;
    ens.s0 = s0;
    ens.direction = cfg.direction;
    ens.ds = ds_signed;
    ens.gauge = cfg.gauge;
    ens.paths.resize(static_cast<std::size_t>(cfg.n_paths));

    const auto run_path = [&](std::size_t p) {
        SamplePath& path = ens.paths[p];
        path.direction = cfg.direction;
        path.s_values.reserve(static_cast<std::size_t>(cfg.n_steps) + 1);
        path.points.reserve(static_cast<std::size_t>(cfg.n_steps) + 1);
        path.s_values.push_back(s0);
        path.points.push_back(x0);

        PathRng rng(cfg.seed, p);
        SpacetimePoint x = x0;
        double s = s0;
        for (int k = 0; k < cfg.n_steps; ++k) {
            FourVector drift;
            Mat4 b;
            try {
                const auto [vp, vm] = forward_backward_drifts(spec.drifts, x);
                drift = cfg.direction == Direction::forward ? vp : vm;
                if (!cfg.zero_diffusion) b = diffusion_factor(diffusion_tensor(spec.drifts, spec.constants, x));
            } catch (const std::domain_error&) {
                path.failed = true;
                return;
            }
            const double gd = cfg.gauge.deriv(s);
            x += drift * (gd * ds_signed);
            if (!cfg.zero_diffusion) {
                FourVector xi{rng.gauss(), rng.gauss(), rng.gauss(), rng.gauss()};
                const double amp = std::sqrt(gd * cfg.ds);
                for (int i = 0; i < 4; ++i) {
                    double inc = 0.0;
                    for (int j = 0; j <= i; ++j) inc += b(i, j) * xi[j];
                    x[i] += amp * inc;
                }
            }
            s += ds_signed;
            path.s_values.push_back(s);
            path.points.push_back(x);
        }
    };

    const unsigned n_workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(cfg.n_paths));
    if (n_workers <= 1) {
        for (std::size_t p = 0; p < ens.paths.size(); ++p) run_path(p);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (unsigned t = 0; t < n_workers; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t p = t; p < ens.paths.size(); p += n_workers) run_path(p);
            });
        for (auto& th : pool) th.join();
    }
    return ens;
}

struct DriftEstimate {
    FourVector value;
    FourVector std_error;
    std::size_t n_used = 0;
};

/// Parameter-free drift estimate from increments over the first
/// window_steps steps: mean(dx) / (g(s_w) - g(s_0)).
inline DriftEstimate estimate_drift(const Ensemble& e, int window_steps = 1) {
    if (window_steps < 1) throw std::invalid_argument("estimate_drift: window_steps must be >= 1");
    const std::size_t w = static_cast<std::size_t>(window_steps);
    const double dgau = e.gauge(e.s0 + e.ds * window_steps) - e.gauge(e.s0);

    DriftEstimate est;
    FourVector sum, sum2;
    for (const auto& p : e.paths) {
        if (p.failed || p.points.size() <= w) continue;
        const FourVector dx = p.points[w] - p.points[0];
        for (int i = 0; i < 4; ++i) {
            sum[i] += dx[i];
            sum2[i] += dx[i] * dx[i];
        }
        ++est.n_used;
    }
    if (est.n_used == 0) throw std::runtime_error("estimate_drift: no usable paths");
    const double n = static_cast<double>(est.n_used);
    for (int i = 0; i < 4; ++i) {
        const double mean = sum[i] / n;
        est.value[i] = mean / dgau;
        if (est.n_used >= 2) {
            const double var = std::max(0.0, (sum2[i] - n * mean * mean) / (n - 1.0));
            est.std_error[i] = std::sqrt(var / n) / std::abs(dgau);
        }
    }
    return est;
}

struct DiffusionEstimate {
    Mat4 value;       // estimates the parameter-free w
    Mat4 std_error;
    double metric_contraction = 0.0;     // estimates g_ij w^ij = -h/(2 pi m)
    double metric_contraction_se = 0.0;
    std::size_t n_used = 0;
};

/// w estimate from the second central moment of increments over
/// window_steps, divided by 2|dg|.
inline DiffusionEstimate estimate_diffusion(const Ensemble& e, int window_steps = 1) {
    if (window_steps < 1) throw std::invalid_argument("estimate_diffusion: window_steps must be >= 1");
    const std::size_t w = static_cast<std::size_t>(window_steps);
    const double dgau = std::abs(e.gauge(e.s0 + e.ds * window_steps) - e.gauge(e.s0));

    std::vector<FourVector> incs;
    incs.reserve(e.paths.size());
    FourVector mean;
    for (const auto& p : e.paths) {
        if (p.failed || p.points.size() <= w) continue;
        incs.push_back(p.points[w] - p.points[0]);
        mean += incs.back();
    }
    DiffusionEstimate est;
    est.n_used = incs.size();
    if (est.n_used == 0) throw std::runtime_error("estimate_diffusion: no usable paths");
    const double n = static_cast<double>(est.n_used);
    mean *= 1.0 / n;

    Mat4 sum, sum2;
    double csum = 0.0, csum2 = 0.0;
    for (const FourVector& dx : incs) {
        const FourVector d = dx - mean;
        const double q = minkowski_norm2(d) / (2.0 * dgau);
        csum += q;
        csum2 += q * q;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                const double v = d[i] * d[j] / (2.0 * dgau);
                sum(i, j) += v;
                sum2(i, j) += v * v;
            }
    }
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            const double m1 = sum(i, j) / n;
            est.value(i, j) = m1;
            if (est.n_used >= 2) {
                const double var = std::max(0.0, (sum2(i, j) - n * m1 * m1) / (n - 1.0));
                est.std_error(i, j) = std::sqrt(var / n);
            }
        }
    est.metric_contraction = csum / n;
    if (est.n_used >= 2) {
        const double var = std::max(0.0, (csum2 - n * est.metric_contraction * est.metric_contraction) / (n - 1.0));
        est.metric_contraction_se = std::sqrt(var / n);
    }
    return est;
}

/// Stochastic derivative D+- f = df/ds + v+-(x,s) d_i f +- w(x,s) d2_ij f,
/// evaluated from the spec's fields with s-scaled coefficients.
inline double stochastic_derivative(const ScalarSpacetimeField& f, const ProcessSpec& spec, const FourVector& x,
                                    double s, Direction dir) {
    const double gd = spec.gauge.deriv(s);
    const auto [vp, vm] = forward_backward_drifts(spec.drifts, x);
    const FourVector v = (dir == Direction::forward ? vp : vm) * gd;
    const Mat4 w = diffusion_tensor(spec.drifts, spec.constants, x) * gd;
    const double sign = dir == Direction::forward ? 1.0 : -1.0;

    double out = f.ds(x, s);
    const FourVector grad = f.grad(x, s);
    const Mat4 hess = f.hess(x, s);
    for (int i = 0; i < 4; ++i) {
        out += v[i] * grad[i];
        for (int j = 0; j < 4; ++j) out += sign * w(i, j) * hess(i, j);
    }
    return out;
}

struct IbpResult {
    double lhs = 0.0;       // E{f(b)g(b) - f(a)g(a)}
    double rhs = 0.0;       // integral of E{g D+f + f D-g}
    double abs_diff = 0.0;
    double std_error = 0.0; // combined Monte Carlo standard error
};

/// Integration-by-parts identity checked on a fresh forward ensemble started
/// at (x0, a). D- uses spec.conditional_backward_drift when present (the
/// ensemble is delta-started, so the stationary v - u would not apply);
/// otherwise it falls back to the field v - u. The first interval uses the
/// integrand at the first step, which costs O(ds) and avoids the singular
/// backward drift at the start.
inline IbpResult integration_by_parts_check(const ScalarSpacetimeField& f, const ScalarSpacetimeField& g,
                                            const ProcessSpec& spec, const SpacetimePoint& x0, double a, double b,
                                            SimulationConfig cfg) {
    if (!(b > a)) throw std::invalid_argument("integration_by_parts_check: need b > a");
    cfg.direction = Direction::forward;
    cfg.n_steps = std::max(1, static_cast<int>(std::llround((b - a) / cfg.ds)));
    cfg.ds = (b - a) / cfg.n_steps;
    const Ensemble ens = simulate_ensemble(spec, x0, a, cfg);

    const auto backward_drift = [&](const FourVector& x, double s) {
        if (spec.conditional_backward_drift) return spec.conditional_backward_drift(x, s);
        return forward_backward_drifts(spec.drifts, x).second;
    };

    const auto integrand = [&](const FourVector& x, double s) {
        const double gd = spec.gauge.deriv(s);
        const FourVector vp = forward_backward_drifts(spec.drifts, x).first * gd;
        const FourVector vm = backward_drift(x, s) * gd;
        const Mat4 w = diffusion_tensor(spec.drifts, spec.constants, x) * gd;

        double dplus_f = f.ds(x, s);
        double dminus_g = g.ds(x, s);
        const FourVector gf = f.grad(x, s), gg = g.grad(x, s);
        const Mat4 hf = f.hess(x, s), hg = g.hess(x, s);
        for (int i = 0; i < 4; ++i) {
            dplus_f += vp[i] * gf[i];
            dminus_g += vm[i] * gg[i];
            for (int j = 0; j < 4; ++j) {
                dplus_f += w(i, j) * hf(i, j);
                dminus_g -= w(i, j) * hg(i, j);
            }
        }
        return g.value(x, s) * dplus_f + f.value(x, s) * dminus_g;
    };

    const auto path_terms = [&](const SamplePath& p) -> std::pair<double, double> {
        const double lhs_p = f.value(p.points.back(), b) * g.value(p.points.back(), b) -
                             f.value(p.points.front(), a) * g.value(p.points.front(), a);
        // time quadrature along this path, starting from step 1
        std::vector<double> vals(p.points.size());
        for (std::size_t k = 1; k < p.points.size(); ++k) vals[k] = integrand(p.points[k], p.s_values[k]);
        double rhs_p = vals[1] * cfg.ds;  // first interval, O(ds)
        for (std::size_t k = 1; k + 1 < p.points.size(); ++k) rhs_p += 0.5 * (vals[k] + vals[k + 1]) * cfg.ds;
        return {lhs_p, rhs_p};
    };

    double lhs_sum = 0.0, lhs_sum2 = 0.0, rhs_sum = 0.0, rhs_sum2 = 0.0;
    std::size_t n_used = 0;
    const unsigned n_workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(ens.paths.size()));
    std::vector<std::array<double, 5>> acc(n_workers, {0.0, 0.0, 0.0, 0.0, 0.0});
    {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (unsigned t = 0; t < n_workers; ++t)
            pool.emplace_back([&, t] {
                auto& a5 = acc[t];
                for (std::size_t i = t; i < ens.paths.size(); i += n_workers) {
                    const auto& p = ens.paths[i];
                    if (p.failed || p.points.size() != static_cast<std::size_t>(cfg.n_steps) + 1) continue;
                    const auto [lhs_p, rhs_p] = path_terms(p);
                    a5[0] += lhs_p;
                    a5[1] += lhs_p * lhs_p;
                    a5[2] += rhs_p;
                    a5[3] += rhs_p * rhs_p;
                    a5[4] += 1.0;
                }
            });
        for (auto& th : pool) th.join();
    }
    for (const auto& a5 : acc) {
        lhs_sum += a5[0];
        lhs_sum2 += a5[1];
        rhs_sum += a5[2];
        rhs_sum2 += a5[3];
        n_used += static_cast<std::size_t>(a5[4]);
    }
    if (n_used < 2) throw std::runtime_error("integration_by_parts_check: too few usable paths");
    const double n = static_cast<double>(n_used);
    IbpResult out;
    out.lhs = lhs_sum / n;
    out.rhs = rhs_sum / n;
    out.abs_diff = std::abs(out.lhs - out.rhs);
    const double var_l = std::max(0.0, (lhs_sum2 - n * out.lhs * out.lhs) / (n - 1.0));
    const double var_r = std::max(0.0, (rhs_sum2 - n * out.rhs * out.rhs) / (n - 1.0));
    out.std_error = std::sqrt((var_l + var_r) / n);
    return out;
}

}  // namespace relkin
