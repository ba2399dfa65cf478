#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "relkin/constants.hpp"
#include "relkin/gauge.hpp"
#include "relkin/geometry.hpp"
#include "relkin/linalg.hpp"
#include "relkin/process.hpp"

namespace relkin {

/// Closed-form free-particle solution: constant drift V, constant SPD
/// diffusion tensor W, and the Gaussian transition kernel built from them.
/// All parameter dependence enters through S = g(s) - g(s0).
struct FreeParticleSolution {
    FourVector V;      // contravariant drift
    Mat4 W;            // contravariant diffusion tensor (plain SPD matrix)
    Mat4 W_cov;        // matrix inverse of W
    double det_W_cov;  // cached determinant of W_cov
    GaugeFunction gauge;
    PhysicalConstants constants;
    std::optional<LorentzTransform> frame;  // empty for the rest frame
};

inline FreeParticleSolution rest_solution(const PhysicalConstants& k, GaugeFunction gauge) {
    const double w = k.h / (4.0 * std::numbers::pi * k.m);
    FreeParticleSolution sol{FourVector{k.c, 0.0, 0.0, 0.0},
                             Mat4::diagonal(w, w, w, w),
                             Mat4::diagonal(1.0 / w, 1.0 / w, 1.0 / w, 1.0 / w),
                             1.0 / (w * w * w * w),
                             std::move(gauge),
                             k,
                             std::nullopt};
    return sol;
}

inline FreeParticleSolution boosted_solution(const PhysicalConstants& k, GaugeFunction gauge,
                                             const LorentzTransform& l) {
    FreeParticleSolution sol = rest_solution(k, std::move(gauge));
    sol.V = transform_vector(l, sol.V);
    sol.W = transform_tensor2(l, sol.W);
    sol.W_cov = inverse(sol.W);
    sol.det_W_cov = det(sol.W_cov);
    sol.frame = l;
    return sol;
}

/// Q(Y,S) = sqrt(det(W_ij)/(4 pi S)^4) exp(-W_ij Y^i Y^j / 4S), the solution
/// of dQ/dS = W^ij d2 Q/dY^i dY^j with a delta initial condition.
inline double kernel_Q(const FourVector& y, double S, const FreeParticleSolution& sol) {
    if (!(S > 0.0)) throw std::domain_error("kernel_Q: S must be positive");
    double q = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) q += sol.W_cov(i, j) * y[i] * y[j];
    const double norm = std::sqrt(sol.det_W_cov) / std::pow(4.0 * std::numbers::pi * S, 2.0);
    return norm * std::exp(-q / (4.0 * S));
}

/// P(X,s|X0,s0) = Q(Y, S) with S = g(s)-g(s0) and Y = X - X0 - V S.
inline double conditional_density(const FourVector& x, double s, const FourVector& x0, double s0,
                                  const FreeParticleSolution& sol) {
    const double S = sol.gauge(s) - sol.gauge(s0);
    if (!(S > 0.0)) throw std::domain_error("conditional_density: requires g(s) > g(s0)");
    return kernel_Q(x - x0 - sol.V * S, S, sol);
}

/// p(spacelike)/p(timelike) for equal displacements c tau: exp(-2 pi m c^2 tau / h).
inline double spacelike_timelike_ratio(double tau, const PhysicalConstants& k) {
    return std::exp(-2.0 * std::numbers::pi * k.m * k.c * k.c * tau / k.h);
}

/// 2 pi m c^2 / h, the decay rate of the spacelike/timelike ratio [1/s].
inline double ratio_decay_rate(const PhysicalConstants& k) {
    return 2.0 * std::numbers::pi * k.m * k.c * k.c / k.h;
}

/// Constant free-particle drift fields for cross-module residual checks.
inline DriftFields solution_drift_fields(const FreeParticleSolution& sol) {
    return DriftFields{VectorField::zero(), VectorField::constant(sol.V)};
}

/// Tensor-product quadrature of the density over X at fixed S, taken in the
/// eigenbasis of W where the Gaussian separates. span is in per-axis standard
/// deviations.
inline double normalization_quadrature(const FreeParticleSolution& sol, double s, double s0, int points_per_axis = 64,
                                       double span = 7.0) {
    const double S = sol.gauge(s) - sol.gauge(s0);
    if (!(S > 0.0)) throw std::domain_error("normalization_quadrature: requires g(s) > g(s0)");
    const SymEigen e = sym_eigen(sol.W);
    double integral = 1.0;
    for (int a = 0; a < 4; ++a) {
        const double var = 2.0 * e.values[static_cast<std::size_t>(a)] * S;
        if (!(var > 0.0)) throw std::domain_error("normalization_quadrature: W not positive definite");
        const double sigma = std::sqrt(var);
        const double hstep = 2.0 * span * sigma / (points_per_axis - 1);
        double axis = 0.0;
        for (int n = 0; n < points_per_axis; ++n) {
            const double q = -span * sigma + n * hstep;
            const double f = std::exp(-q * q / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
            axis += (n == 0 || n == points_per_axis - 1) ? 0.5 * f : f;
        }
        integral *= axis * hstep;
    }
    return integral;
}

/// Chapman-Kolmogorov check: convolve the kernels for (s0,s1) and (s1,s2)
/// numerically, per principal axis of W, and compare with the direct kernel
/// for (s0,s2). Returns the max pointwise error over sampled 4D points.
/// Throws when per-axis quadrature mass deviates from 1 by more than 1e-3.
inline double chapman_kolmogorov_check(const FreeParticleSolution& sol, double s0, double s1, double s2,
                                       int points_per_axis = 256, double span = 7.0, int n_samples = 512,
                                       unsigned rng_seed = 12345) {
    const double s_a = sol.gauge(s1) - sol.gauge(s0);
    const double s_b = sol.gauge(s2) - sol.gauge(s1);
    if (!(s_a > 0.0) || !(s_b > 0.0)) throw std::domain_error("chapman_kolmogorov_check: parameters must be ordered");
    const SymEigen e = sym_eigen(sol.W);

    // per-axis drift in the eigenbasis
    std::array<double, 4> vq{};
    for (int a = 0; a < 4; ++a)
        for (int r = 0; r < 4; ++r) vq[static_cast<std::size_t>(a)] += e.vectors(r, a) * sol.V[r];

    const auto gauss = [](double y, double var) {
        return std::exp(-y * y / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
    };

    const int n_eval = 33;  // query points per axis
    std::array<std::vector<double>, 4> conv{}, direct{};
    std::array<std::vector<double>, 4> eval_pts{};
    for (int a = 0; a < 4; ++a) {
        const double w_a = e.values[static_cast<std::size_t>(a)];
        const double var_a = 2.0 * w_a * s_a, var_b = 2.0 * w_a * s_b;
        const double var_tot = var_a + var_b;
        const double mu_a = vq[static_cast<std::size_t>(a)] * s_a;
        const double mu_b = vq[static_cast<std::size_t>(a)] * s_b;

        // intermediate-point grid covering the first factor
        const double sig_a = std::sqrt(var_a);
        const double lo = mu_a - span * sig_a, hi = mu_a + span * sig_a;
        const double hstep = (hi - lo) / (points_per_axis - 1);

        double mass = 0.0;
        std::vector<double> p1(static_cast<std::size_t>(points_per_axis));
        for (int n = 0; n < points_per_axis; ++n) {
            const double q1 = lo + n * hstep;
            p1[static_cast<std::size_t>(n)] = gauss(q1 - mu_a, var_a);
            mass += (n == 0 || n == points_per_axis - 1) ? 0.5 * p1[static_cast<std::size_t>(n)] : p1[static_cast<std::size_t>(n)];
        }
        mass *= hstep;
        if (std::abs(mass - 1.0) > 1e-3)
            throw std::runtime_error("chapman_kolmogorov_check: grid coverage rejected (mass deficit)");

        const double sig_tot = std::sqrt(var_tot);
        for (int m = 0; m < n_eval; ++m) {
            const double q2 = (mu_a + mu_b) + sig_tot * (-3.0 + 6.0 * m / (n_eval - 1));
            double acc = 0.0;
            for (int n = 0; n < points_per_axis; ++n) {
                const double q1 = lo + n * hstep;
                const double f = p1[static_cast<std::size_t>(n)] * gauss(q2 - q1 - mu_b, var_b);
                acc += (n == 0 || n == points_per_axis - 1) ? 0.5 * f : f;
            }
            eval_pts[static_cast<std::size_t>(a)].push_back(q2);
            conv[static_cast<std::size_t>(a)].push_back(acc * hstep);
            direct[static_cast<std::size_t>(a)].push_back(gauss(q2 - mu_a - mu_b, var_tot));
        }
    }

    // error of the 4D product over random grid-node combinations
    std::mt19937 rng(rng_seed);
    std::uniform_int_distribution<int> pick(0, n_eval - 1);
    double max_err = 0.0;
    for (int t = 0; t < n_samples; ++t) {
        double pc = 1.0, pd = 1.0;
        for (int a = 0; a < 4; ++a) {
            const int idx = pick(rng);
            pc *= conv[static_cast<std::size_t>(a)][static_cast<std::size_t>(idx)];
            pd *= direct[static_cast<std::size_t>(a)][static_cast<std::size_t>(idx)];
        }
        max_err = std::max(max_err, std::abs(pc - pd));
    }
    return max_err;
}

/// Finite-difference residuals of the backward and forward Kolmogorov
/// equations on the analytic density, relative to the local density value.
/// Second-order 3-point stencils throughout, so residuals shrink ~4x when
/// fd_step is halved.
struct KolmogorovResiduals {
    double backward_max = 0.0;
    double forward_max = 0.0;
};

inline KolmogorovResiduals kolmogorov_residuals(const FreeParticleSolution& sol,
                                                const std::vector<FourVector>& eval_offsets,
                                                const std::vector<double>& s_values, double s0 = 0.0,
                                                double fd_step = 1e-2) {
    KolmogorovResiduals out;
    const double h = fd_step;
    const FourVector x0{};
    for (double s : s_values) {
        const double S = sol.gauge(s) - sol.gauge(s0);
        const FourVector mean = x0 + sol.V * S;
        for (const FourVector& off : eval_offsets) {
            const FourVector x = mean + off;
            const double p = conditional_density(x, s, x0, s0, sol);

            // backward equation, derivatives in (x0, s0)
            double rb = (conditional_density(x, s, x0, s0 + h, sol) - conditional_density(x, s, x0, s0 - h, sol)) /
                        (2.0 * h) / sol.gauge.deriv(s0);
            for (int i = 0; i < 4; ++i) {
                rb += sol.V[i] *
                      (conditional_density(x, s, shifted(x0, i, h), s0, sol) -
                       conditional_density(x, s, shifted(x0, i, -h), s0, sol)) /
                      (2.0 * h);
                rb += sol.W(i, i) *
                      (conditional_density(x, s, shifted(x0, i, h), s0, sol) - 2.0 * p +
                       conditional_density(x, s, shifted(x0, i, -h), s0, sol)) /
                      (h * h);
                for (int j = i + 1; j < 4; ++j)
                    rb += 2.0 * sol.W(i, j) *
                          (conditional_density(x, s, shifted(shifted(x0, i, h), j, h), s0, sol) -
                           conditional_density(x, s, shifted(shifted(x0, i, h), j, -h), s0, sol) -
                           conditional_density(x, s, shifted(shifted(x0, i, -h), j, h), s0, sol) +
                           conditional_density(x, s, shifted(shifted(x0, i, -h), j, -h), s0, sol)) /
                          (4.0 * h * h);
            }

            // forward equation, derivatives in (x, s); V and W are constant
            double rf = (conditional_density(x, s + h, x0, s0, sol) - conditional_density(x, s - h, x0, s0, sol)) /
                        (2.0 * h) / sol.gauge.deriv(s);
            for (int i = 0; i < 4; ++i) {
                rf += sol.V[i] *
                      (conditional_density(shifted(x, i, h), s, x0, s0, sol) -
                       conditional_density(shifted(x, i, -h), s, x0, s0, sol)) /
                      (2.0 * h);
                rf -= sol.W(i, i) *
                      (conditional_density(shifted(x, i, h), s, x0, s0, sol) - 2.0 * p +
                       conditional_density(shifted(x, i, -h), s, x0, s0, sol)) /
                      (h * h);
                for (int j = i + 1; j < 4; ++j)
                    rf -= 2.0 * sol.W(i, j) *
                          (conditional_density(shifted(shifted(x, i, h), j, h), s, x0, s0, sol) -
                           conditional_density(shifted(shifted(x, i, h), j, -h), s, x0, s0, sol) -
                           conditional_density(shifted(shifted(x, i, -h), j, h), s, x0, s0, sol) +
                           conditional_density(shifted(shifted(x, i, -h), j, -h), s, x0, s0, sol)) /
                          (4.0 * h * h);
            }

            out.backward_max = std::max(out.backward_max, std::abs(rb) / p);
            out.forward_max = std::max(out.forward_max, std::abs(rf) / p);
        }
    }
    return out;
}

/// Offsets within +-span principal standard deviations, axis by axis.
inline std::vector<FourVector> default_residual_offsets(const FreeParticleSolution& sol, double S, double span = 1.0,
                                                        int per_axis = 3) {
    std::vector<FourVector> offsets;
    offsets.push_back(FourVector{});
    const SymEigen e = sym_eigen(sol.W);
    for (int a = 0; a < 4; ++a) {
        const double sigma = std::sqrt(2.0 * e.values[static_cast<std::size_t>(a)] * S);
        for (int n = 1; n <= per_axis; ++n) {
            const double amp = span * sigma * n / per_axis;
            FourVector plus, minus;
            for (int r = 0; r < 4; ++r) {
                plus[r] = amp * e.vectors(r, a);
                minus[r] = -amp * e.vectors(r, a);
            }
            offsets.push_back(plus);
            offsets.push_back(minus);
        }
    }
    return offsets;
}

/// Non-relativistic limit scan over ascending c values.
struct NonRelLimitReport {
    std::vector<double> c_values;
    std::vector<double> t_marginal_std;             // std of the t marginal at Delta g = dg
    std::vector<std::array<double, 4>> drift;       // v components per c
    std::vector<Mat4> w_tensors;                    // diffusion tensor per c
    double fitted_std_exponent = 0.0;               // log-log slope of std vs c
    double spatial_factor_max_rel_dev = 0.0;        // vs the non-relativistic kernel
};

inline NonRelLimitReport nr_limit_scan(const std::vector<double>& c_values, const PhysicalConstants& tmpl,
                                       const GaugeFunction& gauge, double dg = 1.0) {
    if (c_values.empty()) throw std::invalid_argument("nr_limit_scan: empty c list");
    NonRelLimitReport rep;
    rep.c_values = c_values;
    for (double c : c_values) {
        const PhysicalConstants k(tmpl.m, tmpl.q, c, tmpl.h);
        const FreeParticleSolution sol = rest_solution(k, gauge);
        // x0 marginal has variance 2 W00 dg; t = x0/c
        rep.t_marginal_std.push_back(std::sqrt(2.0 * sol.W(0, 0) * dg) / c);
        rep.drift.push_back({sol.V[0], sol.V[1], sol.V[2], sol.V[3]});
        rep.w_tensors.push_back(sol.W);
    }
    // least-squares slope of log std against log c
    const std::size_t n = c_values.size();
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lx = std::log(c_values[i]);
        const double ly = std::log(rep.t_marginal_std[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    rep.fitted_std_exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);

    // spatial factor of the rest density vs the non-relativistic Gaussian
    // kernel with per-axis variance h dg/(2 pi m), identifying g-g0 with t-t0
    const double m = tmpl.m, h = tmpl.h;
    const double var_nr = h * dg / (2.0 * std::numbers::pi * m);
    double max_dev = 0.0;
    for (int n1 = -3; n1 <= 3; ++n1) {
        const double r2 = n1 * n1 * var_nr;  // radius in units of the std
        const double spatial = std::pow(m / (h * dg), 1.5) * std::exp(-std::numbers::pi * m * r2 / (h * dg));
        const double nr = std::pow(2.0 * std::numbers::pi * var_nr, -1.5) * std::exp(-r2 / (2.0 * var_nr));
        max_dev = std::max(max_dev, std::abs(spatial / nr - 1.0));
    }
    rep.spatial_factor_max_rel_dev = max_dev;
    return rep;
}

}  // namespace relkin
