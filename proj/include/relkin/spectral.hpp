#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "relkin/gauge.hpp"
#include "relkin/process.hpp"

namespace relkin {

/// Uniform periodic grid in 1 or 2 reduced dimensions. The full 4D
/// eigenproblem is not desk-scale; the operator structure is exercised on
/// coefficients restricted to these axes.
struct PeriodicGrid {
    int dim;
    std::array<double, 2> length{};
    std::array<int, 2> n{};

    PeriodicGrid(int d, std::array<double, 2> len, std::array<int, 2> counts) : dim(d), length(len), n(counts) {
        if (dim < 1 || dim > 2) throw std::invalid_argument("PeriodicGrid: dimension must be 1 or 2");
        for (int a = 0; a < dim; ++a) {
            if (n[static_cast<std::size_t>(a)] < 8) throw std::invalid_argument("PeriodicGrid: need >= 8 points per axis");
            if (!(length[static_cast<std::size_t>(a)] > 0.0)) throw std::invalid_argument("PeriodicGrid: length must be positive");
        }
    }

    static PeriodicGrid line(double len, int count) { return PeriodicGrid(1, {len, 0.0}, {count, 0}); }
    static PeriodicGrid plane(double lx, int nx, double ly, int ny) { return PeriodicGrid(2, {lx, ly}, {nx, ny}); }

    int size() const { return dim == 1 ? n[0] : n[0] * n[1]; }
    double spacing(int axis) const { return length[static_cast<std::size_t>(axis)] / n[static_cast<std::size_t>(axis)]; }
    double cell_volume() const { return dim == 1 ? spacing(0) : spacing(0) * spacing(1); }

    int flat(int i0, int i1 = 0) const {
        const auto wrap = [](int i, int m) { return ((i % m) + m) % m; };
        if (dim == 1) return wrap(i0, n[0]);
        return wrap(i0, n[0]) * n[1] + wrap(i1, n[1]);
    }

    std::array<double, 2> point(int flat_index) const {
        if (dim == 1) return {flat_index * spacing(0), 0.0};
        return {(flat_index / n[1]) * spacing(0), (flat_index % n[1]) * spacing(1)};
    }
};

/// Drift and diffusion coefficients restricted to the grid axes.
struct GridCoefficients {
    std::function<std::array<double, 2>(const std::array<double, 2>&)> drift;       // v+ components
    std::function<std::array<std::array<double, 2>, 2>(const std::array<double, 2>&)> diffusion;

    static GridCoefficients constant(std::array<double, 2> v, std::array<std::array<double, 2>, 2> w) {
        GridCoefficients c;
        c.drift = [v](const std::array<double, 2>&) { return v; };
        c.diffusion = [w](const std::array<double, 2>&) { return w; };
        return c;
    }
};

/// Restriction of a 4D process to grid axes (axis0, axis1), remaining
/// coordinates held at the origin.
inline GridCoefficients restrict_to_grid(const ProcessSpec& spec, int axis0 = 1, int axis1 = 2) {
    GridCoefficients c;
    c.drift = [&spec, axis0, axis1](const std::array<double, 2>& q) {
        FourVector x{};
        x[axis0] = q[0];
        x[axis1] = q[1];
        const FourVector vp = forward_backward_drifts(spec.drifts, x).first;
        return std::array<double, 2>{vp[axis0], vp[axis1]};
    };
    c.diffusion = [&spec, axis0, axis1](const std::array<double, 2>& q) {
        FourVector x{};
        x[axis0] = q[0];
        x[axis1] = q[1];
        const Mat4 w = diffusion_tensor(spec.drifts, spec.constants, x);
        return std::array<std::array<double, 2>, 2>{{{w(axis0, axis0), w(axis0, axis1)}, {w(axis1, axis0), w(axis1, axis1)}}};
    };
    return c;
}

namespace spectral_detail {

inline void check_coefficients(const GridCoefficients& coef, const PeriodicGrid& grid) {
    for (int idx = 0; idx < grid.size(); ++idx) {
        const auto q = grid.point(idx);
        const auto w = coef.diffusion(q);
        const auto v = coef.drift(q);
        if (!(w[0][0] > 0.0)) throw std::domain_error("spectral: restricted diffusion tensor not SPD");
        if (grid.dim == 2 && !(w[0][0] * w[1][1] - w[0][1] * w[1][0] > 0.0))
            throw std::domain_error("spectral: restricted diffusion tensor not SPD");
        for (int a = 0; a < grid.dim; ++a) {
            const double peclet = std::abs(v[static_cast<std::size_t>(a)]) * grid.spacing(a) /
                                  w[static_cast<std::size_t>(a)][static_cast<std::size_t>(a)];
            if (peclet > 2.0) {
                std::ostringstream msg;
                msg << "spectral: grid Peclet number " << peclet << " on axis " << a
                    << " exceeds 2; refine the grid or reduce the drift";
                throw std::domain_error(msg.str());
            }
        }
    }
}

// periodic central-difference operators on the flattened grid
inline Eigen::MatrixXd d1_op(const PeriodicGrid& grid, int axis) {
    const int n = grid.size();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    const double h = grid.spacing(axis);
    for (int i0 = 0; i0 < grid.n[0]; ++i0)
        for (int i1 = 0; i1 < (grid.dim == 2 ? grid.n[1] : 1); ++i1) {
            const int row = grid.flat(i0, i1);
            const int plus = axis == 0 ? grid.flat(i0 + 1, i1) : grid.flat(i0, i1 + 1);
            const int minus = axis == 0 ? grid.flat(i0 - 1, i1) : grid.flat(i0, i1 - 1);
            d(row, plus) += 1.0 / (2.0 * h);
            d(row, minus) -= 1.0 / (2.0 * h);
        }
    return d;
}

inline Eigen::MatrixXd d2_op(const PeriodicGrid& grid, int axis) {
    const int n = grid.size();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    const double h = grid.spacing(axis);
    for (int i0 = 0; i0 < grid.n[0]; ++i0)
        for (int i1 = 0; i1 < (grid.dim == 2 ? grid.n[1] : 1); ++i1) {
            const int row = grid.flat(i0, i1);
            const int plus = axis == 0 ? grid.flat(i0 + 1, i1) : grid.flat(i0, i1 + 1);
            const int minus = axis == 0 ? grid.flat(i0 - 1, i1) : grid.flat(i0, i1 - 1);
            d(row, plus) += 1.0 / (h * h);
            d(row, row) -= 2.0 / (h * h);
            d(row, minus) += 1.0 / (h * h);
        }
    return d;
}

inline Eigen::VectorXd sample_drift(const GridCoefficients& coef, const PeriodicGrid& grid, int axis) {
    Eigen::VectorXd v(grid.size());
    for (int i = 0; i < grid.size(); ++i) v(i) = coef.drift(grid.point(i))[static_cast<std::size_t>(axis)];
    return v;
}

inline Eigen::VectorXd sample_diffusion(const GridCoefficients& coef, const PeriodicGrid& grid, int a, int b) {
    Eigen::VectorXd w(grid.size());
    for (int i = 0; i < grid.size(); ++i)
        w(i) = coef.diffusion(grid.point(i))[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
    return w;
}

}  // namespace spectral_detail

/// Backward generator L0 with L0 X0 = -lambda X0:
/// (L0 X0)(x) = w^ab d2_ab X0 + v+^a d_a X0, second-order central
/// differences with periodic wraparound.
inline Eigen::MatrixXd assemble_backward(const GridCoefficients& coef, const PeriodicGrid& grid) {
    spectral_detail::check_coefficients(coef, grid);
    using namespace spectral_detail;
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(grid.size(), grid.size());
    for (int a = 0; a < grid.dim; ++a) {
        l += sample_diffusion(coef, grid, a, a).asDiagonal() * d2_op(grid, a);
        l += sample_drift(coef, grid, a).asDiagonal() * d1_op(grid, a);
    }
    if (grid.dim == 2) {
        const Eigen::MatrixXd cross = d1_op(grid, 0) * d1_op(grid, 1);
        l += 2.0 * (sample_diffusion(coef, grid, 0, 1).asDiagonal() * cross);
    }
    return l;
}

/// Forward (Fokker-Planck) generator L with L X = -mu X:
/// (L X)(x) = d2_ab(w^ab X) - d_a(v+^a X). With the periodic central
/// stencils this is exactly the transpose of assemble_backward.
inline Eigen::MatrixXd assemble_forward(const GridCoefficients& coef, const PeriodicGrid& grid) {
    spectral_detail::check_coefficients(coef, grid);
    using namespace spectral_detail;
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(grid.size(), grid.size());
    for (int a = 0; a < grid.dim; ++a) {
        l += d2_op(grid, a) * sample_diffusion(coef, grid, a, a).asDiagonal();
        l -= d1_op(grid, a) * sample_drift(coef, grid, a).asDiagonal();
    }
    if (grid.dim == 2) {
        const Eigen::MatrixXd cross = d1_op(grid, 0) * d1_op(grid, 1);
        l += 2.0 * (cross * sample_diffusion(coef, grid, 0, 1).asDiagonal());
    }
    return l;
}

/// Biorthonormal eigenpair list reconstructing the conditional density as
/// sum_n X_n(x) X0_n(x0) exp(-lambda_n (g - g0)).
struct SpectralExpansion {
    std::vector<std::complex<double>> lambda;  // sorted by (Re, Im)
    Eigen::MatrixXcd right;                    // column n: X_n
    Eigen::MatrixXcd left0;                    // column n: X0_n
    std::vector<int> conjugate_partner;        // index of the paired mode
    int stationary_index = 0;                  // mode with lambda ~ 0
    double cell_volume = 0.0;
    double adjoint_spectrum_gap = 0.0;         // spectra of L vs L0, matched
    double pairing_residual = 0.0;

    int n_modes() const { return static_cast<int>(lambda.size()); }

    double max_biorthonormality_error() const {
        const Eigen::MatrixXcd b = right.transpose() * left0 * cell_volume;
        return (b - Eigen::MatrixXcd::Identity(b.rows(), b.cols())).cwiseAbs().maxCoeff();
    }
};

/// S0(s0) = exp[lambda g(s0)]
inline std::complex<double> initial_time_factor(std::complex<double> lambda, const GaugeFunction& gauge, double s0) {
    return std::exp(lambda * gauge(s0));
}

/// S(s) = exp[-mu g(s)]
inline std::complex<double> final_time_factor(std::complex<double> mu, const GaugeFunction& gauge, double s) {
    return std::exp(-mu * gauge(s));
}

/// Joint eigensolve of the adjoint pair (L0, L). Right eigenvectors of L are
/// constructed from the inverse of the L0 eigenbasis so that biorthonormality
/// holds by construction, then validated against L directly.
inline SpectralExpansion eigensolve(const Eigen::MatrixXd& l0, const Eigen::MatrixXd& l, const PeriodicGrid& grid) {
    const int n = grid.size();
    if (l0.rows() != n || l.rows() != n) throw std::invalid_argument("eigensolve: matrices do not match grid");

    Eigen::EigenSolver<Eigen::MatrixXd> es0(l0);
    if (es0.info() != Eigen::Success) throw std::runtime_error("eigensolve: backward eigensolver failed");

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const auto lam_of = [&](int i) { return -es0.eigenvalues()(i); };
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const auto la = lam_of(a), lb = lam_of(b);
        if (la.real() != lb.real()) return la.real() < lb.real();
        return la.imag() < lb.imag();
    });

    SpectralExpansion exp_out;
    exp_out.cell_volume = grid.cell_volume();
    exp_out.lambda.resize(static_cast<std::size_t>(n));
    exp_out.left0.resize(n, n);
    for (int k = 0; k < n; ++k) {
        exp_out.lambda[static_cast<std::size_t>(k)] = lam_of(order[static_cast<std::size_t>(k)]);
        exp_out.left0.col(k) = es0.eigenvectors().col(order[static_cast<std::size_t>(k)]);
    }

    // right eigenvectors of L = L0^T from the inverse basis
    exp_out.right = exp_out.left0.transpose().inverse() / exp_out.cell_volume;

    // validate against the independently assembled forward operator
    const Eigen::MatrixXcd lc = l.cast<std::complex<double>>();
    double resid = 0.0;
    double scale = std::max(1.0, l.cwiseAbs().maxCoeff());
    for (int k = 0; k < n; ++k) {
        const Eigen::VectorXcd r = lc * exp_out.right.col(k) + exp_out.lambda[static_cast<std::size_t>(k)] * exp_out.right.col(k);
        resid = std::max(resid, r.cwiseAbs().maxCoeff() / (scale * exp_out.right.col(k).cwiseAbs().maxCoeff()));
    }
    if (resid > 1e-6) {
        std::ostringstream msg;
        msg << "eigensolve: forward/backward pairing residual " << resid << " exceeds 1e-6 (defective pencil?)";
        throw std::runtime_error(msg.str());
    }

    // adjoint spectra comparison, matched by sorted order
    {
        Eigen::EigenSolver<Eigen::MatrixXd> es1(l);
        if (es1.info() != Eigen::Success) throw std::runtime_error("eigensolve: forward eigensolver failed");
        std::vector<std::complex<double>> mu(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) mu[static_cast<std::size_t>(i)] = -es1.eigenvalues()(i);
        std::sort(mu.begin(), mu.end(), [](auto a, auto b) {
            if (a.real() != b.real()) return a.real() < b.real();
            return a.imag() < b.imag();
        });
        double gap = 0.0;
        for (int i = 0; i < n; ++i) gap = std::max(gap, std::abs(mu[static_cast<std::size_t>(i)] - exp_out.lambda[static_cast<std::size_t>(i)]));
        exp_out.adjoint_spectrum_gap = gap;
    }

    // stationary pair: lambda nearest 0, normalized so X0 = constant 1
    int s_idx = 0;
    for (int k = 1; k < n; ++k)
        if (std::abs(exp_out.lambda[static_cast<std::size_t>(k)]) < std::abs(exp_out.lambda[static_cast<std::size_t>(s_idx)])) s_idx = k;
    exp_out.stationary_index = s_idx;
    const std::complex<double> c0 = exp_out.left0.col(s_idx).mean();
    if (std::abs(c0) > 0.0) {
        exp_out.left0.col(s_idx) /= c0;
        exp_out.right.col(s_idx) *= c0;
    }

    // greedy nearest-conjugate pairing
    exp_out.conjugate_partner.assign(static_cast<std::size_t>(n), -1);
    double pair_resid = 0.0;
    for (int k = 0; k < n; ++k) {
        const std::complex<double> target = std::conj(exp_out.lambda[static_cast<std::size_t>(k)]);
        int best = 0;
        double best_d = std::abs(exp_out.lambda[0] - target);
        for (int m = 1; m < n; ++m) {
            const double d = std::abs(exp_out.lambda[static_cast<std::size_t>(m)] - target);
            if (d < best_d) {
                best_d = d;
                best = m;
            }
        }
        exp_out.conjugate_partner[static_cast<std::size_t>(k)] = best;
        pair_resid = std::max(pair_resid, best_d / std::max(1.0, std::abs(target)));
    }
    exp_out.pairing_residual = pair_resid;
    if (pair_resid > 1e-6) {
        std::ostringstream msg;
        msg << "eigensolve: conjugate pairing residual " << pair_resid << " exceeds 1e-6";
        throw std::runtime_error(msg.str());
    }
    return exp_out;
}

struct SpectralDensityValue {
    double value = 0.0;
    double imag_residue = 0.0;
};

/// Partial sum of the expansion at grid nodes ix (final) and ix0 (initial).
inline SpectralDensityValue spectral_density(const SpectralExpansion& exp_in, int ix, double s, int ix0, double s0,
                                             const GaugeFunction& gauge, int n_modes = -1) {
    const double dg = gauge(s) - gauge(s0);
    if (dg < 0.0) throw std::domain_error("spectral_density: requires g(s) >= g(s0)");
    const int n = n_modes < 0 ? exp_in.n_modes() : std::min(n_modes, exp_in.n_modes());
    std::complex<double> acc = 0.0;
    for (int k = 0; k < n; ++k) {
        const std::complex<double> lam = exp_in.lambda[static_cast<std::size_t>(k)];
        // combined exponent: the separate time factors overflow for large g
        acc += exp_in.right(ix, k) * exp_in.left0(ix0, k) * std::exp(-lam * dg);
    }
    return SpectralDensityValue{acc.real(), std::abs(acc.imag())};
}

/// Marginalizing the middle point of the 3-point chain-rule joint must
/// reproduce the 2-point conditional (grid summation). Returns max abs error
/// over final points.
inline double markov_factorization_check(const SpectralExpansion& exp_in, int ix0, double s0, double s1, double s2,
                                         const GaugeFunction& gauge) {
    const int n = exp_in.n_modes();
    double max_err = 0.0;
    for (int ix2 = 0; ix2 < n; ++ix2) {
        double conv = 0.0;
        for (int ix1 = 0; ix1 < n; ++ix1)
            conv += spectral_density(exp_in, ix2, s2, ix1, s1, gauge).value *
                    spectral_density(exp_in, ix1, s1, ix0, s0, gauge).value * exp_in.cell_volume;
        const double direct = spectral_density(exp_in, ix2, s2, ix0, s0, gauge).value;
        max_err = std::max(max_err, std::abs(conv - direct));
    }
    return max_err;
}

/// A zero current drift together with a non-gradient potential contradicts
/// the gradient condition; reports the documented inconsistency.
inline std::optional<std::string> check_field_consistency(const ProcessSpec& spec,
                                                          const std::vector<FourVector>& samples) {
    bool v_zero = true;
    double max_b = 0.0;
    for (const FourVector& x : samples) {
        const FourVector v = spec.drifts.v.value(x);
        for (int i = 0; i < 4; ++i) v_zero = v_zero && std::abs(v[i]) < 1e-14;
        max_b = std::max(max_b, max_abs(field_tensor(spec.potential, x)));
    }
    if (v_zero && max_b > 1e-10)
        return "inconsistent fields: the electromagnetic field tensor is nonzero while the current drift "
               "vanishes; a nonzero field requires a nonzero drift";
    return std::nullopt;
}

}  // namespace relkin
