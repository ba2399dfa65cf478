#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <utility>

#include "relkin/constants.hpp"
#include "relkin/fields.hpp"
#include "relkin/gauge.hpp"
#include "relkin/geometry.hpp"

namespace relkin {

/// v+ = v + u, v- = v - u. Reconstructing u, v from the pair is exact.
inline std::pair<FourVector, FourVector> forward_backward_drifts(const DriftFields& d, const FourVector& x) {
    const FourVector u = d.u.value(x);
    const FourVector v = d.v.value(x);
    return {v + u, v - u};
}

/// Diffusion tensor w^ij = (h/4pi m)[2 v^i v^j / (v_k v^k) - g^ij].
/// Requires a timelike current drift; the denominator is v_k v^k, the variant
/// for which the closed-form inverse and contraction identities hold.
inline Mat4 diffusion_tensor(const DriftFields& d, const PhysicalConstants& k, const FourVector& x) {
    const FourVector v = d.v.value(x);
    const double vv = minkowski_norm2(v);
    if (!(vv > 0.0)) throw std::domain_error("diffusion_tensor: current drift is not timelike");
    const double coef = k.h / (4.0 * std::numbers::pi * k.m);
    Mat4 w;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) w(i, j) = coef * (2.0 * v[i] * v[j] / vv - metric()(i, j));
    return w;
}

/// Closed-form covariant inverse w_ij = (4pi m/h)[2 v_i v_j / (v_k v^k) - g_ij],
/// satisfying w_ik w^jk = delta_i^j.
inline Mat4 diffusion_inverse(const DriftFields& d, const PhysicalConstants& k, const FourVector& x) {
    const FourVector v = d.v.value(x);
    const double vv = minkowski_norm2(v);
    if (!(vv > 0.0)) throw std::domain_error("diffusion_inverse: current drift is not timelike");
    const FourVector vl = lower_index(v);
    const double coef = 4.0 * std::numbers::pi * k.m / k.h;
    Mat4 w;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) w(i, j) = coef * (2.0 * vl[i] * vl[j] / vv - metric()(i, j));
    return w;
}

/// g_ij (v^i v^j + u^i u^j) - c^2; zero where the normalization hypothesis holds.
inline double normalization_residual(const DriftFields& d, const PhysicalConstants& k, const FourVector& x) {
    const FourVector u = d.u.value(x);
    const FourVector v = d.v.value(x);
    return minkowski_norm2(v) + minkowski_norm2(u) - k.c * k.c;
}

/// Normalized vectors (c u/|v|, c v/|v|) with |v|^2 = g_ij(v v + u u).
inline std::pair<FourVector, FourVector> normalized_vectors(const DriftFields& d, const PhysicalConstants& k,
                                                            const FourVector& x) {
    const FourVector u = d.u.value(x);
    const FourVector v = d.v.value(x);
    const double n2 = minkowski_norm2(v) + minkowski_norm2(u);
    if (!(n2 > 0.0)) throw std::domain_error("normalized_vectors: |v|^2 must be positive");
    const double f = k.c / std::sqrt(n2);
    return {u * f, v * f};
}

namespace detail {

// dst(i,j) = d_j of the lowered component F_i, given the contravariant jacobian.
inline Mat4 lowered_jacobian(const Mat4& jac_contra) {
    Mat4 out;
    for (int i = 0; i < 4; ++i) {
        const double sign = (i == 0) ? 1.0 : -1.0;
        for (int j = 0; j < 4; ++j) out(i, j) = sign * jac_contra(i, j);
    }
    return out;
}

}  // namespace detail

/// First Nelson equation residual, simple form: u^j v_j + w^ij d_i v_j.
inline double nelson1_residual(const DriftFields& d, const PhysicalConstants& k, const FourVector& x) {
    const FourVector u = d.u.value(x);
    const FourVector v = d.v.value(x);
    const Mat4 w = diffusion_tensor(d, k, x);
    const Mat4 dv = detail::lowered_jacobian(field_jacobian(d.v, x));  // dv(j,i) = d_i v_j
    double r = minkowski_dot(u, v);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) r += w(i, j) * dv(j, i);
    return r;
}

/// First Nelson equation residual in the general form
/// w_ij u^i v^j + w^ij d_i[w_jk v^k], differentiating the product field
/// numerically. Equals (4pi m/h) times the simple form for exact fields.
inline double nelson1_general_residual(const DriftFields& d, const PhysicalConstants& k, const FourVector& x) {
    const FourVector u = d.u.value(x);
    const FourVector v = d.v.value(x);
    const Mat4 w = diffusion_tensor(d, k, x);
    const Mat4 w_inv = diffusion_inverse(d, k, x);

    double r = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) r += w_inv(i, j) * u[i] * v[j];

    VectorField momentum;  // covariant components m_j = w_jk v^k
    momentum.fd_step = d.v.fd_step;
    momentum.value = [&d, &k](const FourVector& y) {
        const Mat4 wi = diffusion_inverse(d, k, y);
        const FourVector vy = d.v.value(y);
        FourVector m;
        for (int j = 0; j < 4; ++j) {
            double s = 0.0;
            for (int kk = 0; kk < 4; ++kk) s += wi(j, kk) * vy[kk];
            m[j] = s;
        }
        return m;
    };
    const Mat4 dm = field_jacobian(momentum, x);  // dm(j,i) = d_i m_j
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) r += w(i, j) * dm(j, i);
    return r;
}

/// Electromagnetic field tensor B_ij = d_j A_i - d_i A_j (A covariant).
inline Mat4 field_tensor(const EMPotential& pot, const FourVector& x) {
    const Mat4 da = field_jacobian(pot.A, x);  // da(i,j) = d_j A_i
    Mat4 b;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) b(i, j) = da(i, j) - da(j, i);
    return b;
}

/// Second Nelson equation residual, one covariant component per k:
/// m[v^i d_i v_k - u^i d_i u_k - w^ij d2_ij u_k] - q v^i (d_k A_i - d_i A_k).
inline FourVector nelson2_residual(const DriftFields& d, const PhysicalConstants& k, const EMPotential& pot,
                                   const FourVector& x) {
    const FourVector u = d.u.value(x);
    const FourVector v = d.v.value(x);
    const Mat4 w = diffusion_tensor(d, k, x);
    const Mat4 dv = detail::lowered_jacobian(field_jacobian(d.v, x));  // dv(k,i) = d_i v_k
    const Mat4 du = detail::lowered_jacobian(field_jacobian(d.u, x));
    const auto hu = field_hessian(d.u, x);  // hu[k](i,j) = d2_ij u^k
    const Mat4 bt = field_tensor(pot, x);   // bt(i,k) = d_k A_i - d_i A_k

    FourVector res;
    for (int kk = 0; kk < 4; ++kk) {
        const double sign = (kk == 0) ? 1.0 : -1.0;  // lowers the hessian index
        double t1 = 0.0, t2 = 0.0, t3 = 0.0, force = 0.0;
        for (int i = 0; i < 4; ++i) {
            t1 += v[i] * dv(kk, i);
            t2 += u[i] * du(kk, i);
            force += v[i] * bt(i, kk);
            for (int j = 0; j < 4; ++j) t3 += w(i, j) * sign * hu[static_cast<std::size_t>(kk)](i, j);
        }
        res[kk] = k.m * (t1 - t2 - t3) - k.q * force;
    }
    return res;
}

/// Curl of m v_i + q A_i; zero iff that covector is locally a gradient.
inline Mat4 gradient_condition_residual(const DriftFields& d, const PhysicalConstants& k, const EMPotential& pot,
                                        const FourVector& x) {
    const Mat4 dv = detail::lowered_jacobian(field_jacobian(d.v, x));  // dv(i,j) = d_j v_i
    const Mat4 da = field_jacobian(pot.A, x);
    Mat4 r;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            r(i, j) = (k.m * dv(i, j) + k.q * da(i, j)) - (k.m * dv(j, i) + k.q * da(j, i));
    return r;
}

/// L = mc sqrt(g_ij[v v + u u]) - q A_j v^j with s-scaled drifts.
inline double lagrangian(const DriftFields& d, const PhysicalConstants& k, const EMPotential& pot,
                         const FourVector& x, const GaugeFunction& gauge, double s) {
    const double gd = gauge.deriv(s);
    const FourVector u = d.u.value(x) * gd;
    const FourVector v = d.v.value(x) * gd;
    const double rad = minkowski_norm2(v) + minkowski_norm2(u);
    if (rad < 0.0) throw std::domain_error("lagrangian: negative radicand");
    const FourVector a = pot.A.value(x);  // covariant
    double av = 0.0;
    for (int j = 0; j < 4; ++j) av += a[j] * v[j];
    return k.m * k.c * std::sqrt(rad) - k.q * av;
}

/// p u^i - d_j(p w^ij), componentwise.
inline FourVector osmotic_relation_residual(const DriftFields& d, const PhysicalConstants& k,
                                            const std::function<double(const FourVector&)>& p, const FourVector& x,
                                            double fd_step = 1e-4) {
    const FourVector u = d.u.value(x);
    FourVector res = p(x) * u;
    for (int j = 0; j < 4; ++j) {
        const FourVector xp = shifted(x, j, fd_step);
        const FourVector xm = shifted(x, j, -fd_step);
        const Mat4 mp = p(xp) * diffusion_tensor(d, k, xp);
        const Mat4 mm = p(xm) * diffusion_tensor(d, k, xm);
        for (int i = 0; i < 4; ++i) res[i] -= (mp(i, j) - mm(i, j)) / (2.0 * fd_step);
    }
    return res;
}

/// (1/gdot) dp/ds + d_i(p v^i) for a density p(x, s).
inline double continuity_residual(const DriftFields& d, const ScalarSpacetimeField& p, const GaugeFunction& gauge,
                                  double s, const FourVector& x) {
    double r = p.ds(x, s) / gauge.deriv(s);
    const double h = p.fd_step;
    for (int i = 0; i < 4; ++i) {
        const FourVector xp = shifted(x, i, h);
        const FourVector xm = shifted(x, i, -h);
        r += (p.value(xp, s) * d.v.value(xp)[i] - p.value(xm, s) * d.v.value(xm)[i]) / (2.0 * h);
    }
    return r;
}

/// Everything needed to simulate and verify one process: constants, drift
/// fields, potential and gauge. conditional_backward_drift, when set, is the
/// backward drift of a delta-started ensemble as a function of (x, s); it is
/// used by the integration-by-parts estimator, where the stationary field
/// v - u would be wrong for a non-stationary initial condition.
struct ProcessSpec {
    PhysicalConstants constants;
    DriftFields drifts;
    EMPotential potential;
    GaugeFunction gauge;
    std::function<FourVector(const FourVector&, double)> conditional_backward_drift;

    ProcessSpec(PhysicalConstants k, DriftFields d, EMPotential a, GaugeFunction g)
        : constants(k), drifts(std::move(d)), potential(std::move(a)), gauge(std::move(g)) {}
};

/// u = 0, v = (c,0,0,0): the rest-frame free particle.
inline DriftFields free_particle_rest_fields(const PhysicalConstants& k) {
    return DriftFields{VectorField::zero(), VectorField::constant(FourVector{k.c, 0.0, 0.0, 0.0})};
}

inline ProcessSpec free_particle_rest_spec(const PhysicalConstants& k, GaugeFunction gauge) {
    return ProcessSpec(k, free_particle_rest_fields(k), EMPotential::zero(), std::move(gauge));
}

}  // namespace relkin
