#pragma once

#include <array>
#include <functional>
#include <optional>

#include "relkin/geometry.hpp"

namespace relkin {

/// A four-vector field on spacetime. Analytic derivative callbacks are
/// optional; absent ones fall back to central finite differences with the
/// configured step (first order 2-point central, pure second derivatives via
/// 5-point stencils, mixed ones via the 4-point cross).
struct VectorField {
    std::function<FourVector(const FourVector&)> value;
    // jacobian(x)(i,j) = d F^i / d x^j
    std::function<Mat4(const FourVector&)> jacobian;
    // hessian(x)[i](j,k) = d^2 F^i / d x^j d x^k
    std::function<std::array<Mat4, 4>(const FourVector&)> hessian;
    double fd_step = 1e-4;

    static VectorField constant(const FourVector& v) {
        VectorField f;
        f.value = [v](const FourVector&) { return v; };
        f.jacobian = [](const FourVector&) { return Mat4{}; };
        f.hessian = [](const FourVector&) { return std::array<Mat4, 4>{}; };
        return f;
    }

    static VectorField zero() { return constant(FourVector{}); }
};

inline FourVector shifted(FourVector x, int axis, double h) {
    x[axis] += h;
    return x;
}

inline Mat4 field_jacobian(const VectorField& f, const FourVector& x) {
    if (f.jacobian) return f.jacobian(x);
    Mat4 jac;
    const double h = f.fd_step;
    for (int j = 0; j < 4; ++j) {
        const FourVector fp = f.value(shifted(x, j, h));
        const FourVector fm = f.value(shifted(x, j, -h));
        for (int i = 0; i < 4; ++i) jac(i, j) = (fp[i] - fm[i]) / (2.0 * h);
    }
    return jac;
}

inline std::array<Mat4, 4> field_hessian(const VectorField& f, const FourVector& x) {
    if (f.hessian) return f.hessian(x);
    std::array<Mat4, 4> hess{};
    const double h = f.fd_step;
    const FourVector f0 = f.value(x);
    for (int j = 0; j < 4; ++j) {
        const FourVector fp = f.value(shifted(x, j, h));
        const FourVector fm = f.value(shifted(x, j, -h));
        const FourVector fpp = f.value(shifted(x, j, 2.0 * h));
        const FourVector fmm = f.value(shifted(x, j, -2.0 * h));
        for (int i = 0; i < 4; ++i)
            hess[static_cast<std::size_t>(i)](j, j) =
                (-fpp[i] + 16.0 * fp[i] - 30.0 * f0[i] + 16.0 * fm[i] - fmm[i]) / (12.0 * h * h);
    }
    for (int j = 0; j < 4; ++j) {
        for (int k = j + 1; k < 4; ++k) {
            const FourVector fpp = f.value(shifted(shifted(x, j, h), k, h));
            const FourVector fpm = f.value(shifted(shifted(x, j, h), k, -h));
            const FourVector fmp = f.value(shifted(shifted(x, j, -h), k, h));
            const FourVector fmm = f.value(shifted(shifted(x, j, -h), k, -h));
            for (int i = 0; i < 4; ++i) {
                const double d = (fpp[i] - fpm[i] - fmp[i] + fmm[i]) / (4.0 * h * h);
                hess[static_cast<std::size_t>(i)](j, k) = d;
                hess[static_cast<std::size_t>(i)](k, j) = d;
            }
        }
    }
    return hess;
}

/// Scalar field of (x, s) with finite-difference derivatives.
struct ScalarSpacetimeField {
    std::function<double(const FourVector&, double)> value;
    double fd_step = 1e-4;

    double ds(const FourVector& x, double s) const {
        return (value(x, s + fd_step) - value(x, s - fd_step)) / (2.0 * fd_step);
    }

    FourVector grad(const FourVector& x, double s) const {
        FourVector g;
        for (int i = 0; i < 4; ++i)
            g[i] = (value(shifted(x, i, fd_step), s) - value(shifted(x, i, -fd_step), s)) / (2.0 * fd_step);
        return g;
    }

    Mat4 hess(const FourVector& x, double s) const {
        Mat4 hm;
        const double h = fd_step;
        const double f0 = value(x, s);
        for (int j = 0; j < 4; ++j) {
            hm(j, j) = (-value(shifted(x, j, 2.0 * h), s) + 16.0 * value(shifted(x, j, h), s) - 30.0 * f0 +
                        16.0 * value(shifted(x, j, -h), s) - value(shifted(x, j, -2.0 * h), s)) /
                       (12.0 * h * h);
            for (int k = j + 1; k < 4; ++k) {
                const double d = (value(shifted(shifted(x, j, h), k, h), s) - value(shifted(shifted(x, j, h), k, -h), s) -
                                  value(shifted(shifted(x, j, -h), k, h), s) + value(shifted(shifted(x, j, -h), k, -h), s)) /
                                 (4.0 * h * h);
                hm(j, k) = d;
                hm(k, j) = d;
            }
        }
        return hm;
    }
};

/// Osmotic drift u and current drift v, parameter-free (functions of x only).
struct DriftFields {
    VectorField u;
    VectorField v;
};

/// Electromagnetic potential by covariant components, A_0 = V/c. Fields
/// depend on x only, never on the dynamical parameter.
struct EMPotential {
    VectorField A;  // covariant components A_i

    static EMPotential zero() { return EMPotential{VectorField::zero()}; }
};

}  // namespace relkin
