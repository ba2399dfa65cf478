#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "relkin/linalg.hpp"

namespace relkin {

/// Spacetime vector with contravariant Minkowski components, x^0 = ct.
/// The same type holds covariant components after lower_index().
struct FourVector {
    std::array<double, 4> c{};

    FourVector() = default;
    FourVector(double x0, double x1, double x2, double x3) : c{x0, x1, x2, x3} {}

    double& operator[](int i) { return c[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return c[static_cast<std::size_t>(i)]; }

    bool finite() const {
        for (double x : c)
            if (!std::isfinite(x)) return false;
        return true;
    }

    FourVector& operator+=(const FourVector& o) {
        for (int i = 0; i < 4; ++i) c[static_cast<std::size_t>(i)] += o[i];
        return *this;
    }
    FourVector& operator-=(const FourVector& o) {
        for (int i = 0; i < 4; ++i) c[static_cast<std::size_t>(i)] -= o[i];
        return *this;
    }
    FourVector& operator*=(double s) {
        for (double& x : c) x *= s;
        return *this;
    }
};

inline FourVector operator+(FourVector l, const FourVector& r) { return l += r; }
inline FourVector operator-(FourVector l, const FourVector& r) { return l -= r; }
inline FourVector operator*(FourVector v, double s) { return v *= s; }
inline FourVector operator*(double s, FourVector v) { return v *= s; }

using SpacetimePoint = FourVector;

/// Minkowski metric diag(+1,-1,-1,-1); g_ij and g^ij share the same matrix
/// and g_ik g^kj = delta exactly.
inline const Mat4& metric() {
    static const Mat4 g = Mat4::diagonal(1.0, -1.0, -1.0, -1.0);
    return g;
}

/// result_i = g_ij v^j: component 0 unchanged, spatial components negated.
inline FourVector lower_index(const FourVector& v) {
    return FourVector{v[0], -v[1], -v[2], -v[3]};
}

/// Inverse of lower_index (same sign flips, diag metric).
inline FourVector raise_index(const FourVector& v) { return lower_index(v); }

/// g_ij a^i b^j
inline double minkowski_dot(const FourVector& a, const FourVector& b) {
    return a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3];
}

/// g_ij v^i v^j = (v0)^2 - (v1)^2 - (v2)^2 - (v3)^2
inline double minkowski_norm2(const FourVector& v) { return minkowski_dot(v, v); }

enum class IntervalKind { timelike, spacelike, lightlike };

/// Classifies the interval x1 - x0 by the sign of its quadratic form.
/// The lightlike band is relative to the squared magnitude of the largest
/// displacement component; exact zero is not testable in floating point.
inline IntervalKind classify_interval(const SpacetimePoint& x1, const SpacetimePoint& x0,
                                      double rel_tol = 1e-12) {
    const FourVector d = x1 - x0;
    double scale = 0.0;
    for (int i = 0; i < 4; ++i) scale = std::max(scale, std::abs(d[i]));
    const double q = minkowski_norm2(d);
    if (std::abs(q) <= rel_tol * scale * scale) return IntervalKind::lightlike;
    return q > 0.0 ? IntervalKind::timelike : IntervalKind::spacelike;
}

/// Largest entry of |L^T g L - g|; zero for an exact Lorentz transform.
inline double lorentz_defect(const Mat4& m) {
    return max_abs(m.transposed() * metric() * m - metric());
}

/// Linear coordinate map X^i = L^i_k x^k preserving the Minkowski form.
/// Any matrix passing the L^T g L = g check is accepted.
class LorentzTransform {
public:
    explicit LorentzTransform(const Mat4& m, double rel_tol = 1e-12) : m_(m) {
        double scale = std::max(1.0, max_abs(m));
        if (lorentz_defect(m) > rel_tol * scale)
            throw std::invalid_argument("LorentzTransform: matrix does not preserve the Minkowski form");
    }

    static LorentzTransform identity() { return LorentzTransform(Mat4::identity()); }

    const Mat4& matrix() const { return m_; }
    double operator()(int i, int j) const { return m_(i, j); }

    LorentzTransform inverse_transform() const {
        // Lambda^-1 = g Lambda^T g for a metric-preserving matrix
        return LorentzTransform(metric() * m_.transposed() * metric());
    }

private:
    Mat4 m_;
};

/// Standard pure boost with velocity beta = v/c, |beta| < 1.
inline LorentzTransform boost(const std::array<double, 3>& beta) {
    const double b2 = beta[0] * beta[0] + beta[1] * beta[1] + beta[2] * beta[2];
    if (b2 >= 1.0) throw std::domain_error("boost: |beta| must be < 1");
    Mat4 m = Mat4::identity();
    if (b2 == 0.0) return LorentzTransform(m);
    const double gamma = 1.0 / std::sqrt(1.0 - b2);
    m(0, 0) = gamma;
    for (int i = 0; i < 3; ++i) {
        m(0, i + 1) = m(i + 1, 0) = gamma * beta[static_cast<std::size_t>(i)];
        for (int j = 0; j < 3; ++j)
            m(i + 1, j + 1) = (i == j ? 1.0 : 0.0) +
                              (gamma - 1.0) * beta[static_cast<std::size_t>(i)] * beta[static_cast<std::size_t>(j)] / b2;
    }
    return LorentzTransform(m);
}

inline LorentzTransform compose(const LorentzTransform& l2, const LorentzTransform& l1) {
    return LorentzTransform(l2.matrix() * l1.matrix());
}

/// V^r = L^r_i v^i
inline FourVector transform_vector(const LorentzTransform& l, const FourVector& v) {
    FourVector out;
    for (int r = 0; r < 4; ++r) {
        double s = 0.0;
        for (int i = 0; i < 4; ++i) s += l(r, i) * v[i];
        out[r] = s;
    }
    return out;
}

/// W^rs = L^r_i L^s_j w^ij for a rank-2 contravariant tensor.
inline Mat4 transform_tensor2(const LorentzTransform& l, const Mat4& w) {
    return l.matrix() * w * l.matrix().transposed();
}

}  // namespace relkin
