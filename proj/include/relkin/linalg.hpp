#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace relkin {

/// Dense 4x4 matrix of doubles, row major.
struct Mat4 {
    std::array<double, 16> a{};

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(4 * i + j)]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(4 * i + j)]; }

    static Mat4 identity() {
        Mat4 m;
        for (int i = 0; i < 4; ++i) m(i, i) = 1.0;
        return m;
    }

    static Mat4 diagonal(double d0, double d1, double d2, double d3) {
        Mat4 m;
        m(0, 0) = d0;
        m(1, 1) = d1;
        m(2, 2) = d2;
        m(3, 3) = d3;
        return m;
    }

    Mat4 transposed() const {
        Mat4 t;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) t(i, j) = (*this)(j, i);
        return t;
    }

    Mat4& operator+=(const Mat4& o) {
        for (std::size_t k = 0; k < 16; ++k) a[k] += o.a[k];
        return *this;
    }
    Mat4& operator-=(const Mat4& o) {
        for (std::size_t k = 0; k < 16; ++k) a[k] -= o.a[k];
        return *this;
    }
    Mat4& operator*=(double s) {
        for (double& x : a) x *= s;
        return *this;
    }
};

inline Mat4 operator+(Mat4 l, const Mat4& r) { return l += r; }
inline Mat4 operator-(Mat4 l, const Mat4& r) { return l -= r; }
inline Mat4 operator*(Mat4 m, double s) { return m *= s; }
inline Mat4 operator*(double s, Mat4 m) { return m *= s; }

inline Mat4 operator*(const Mat4& l, const Mat4& r) {
    Mat4 p;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += l(i, k) * r(k, j);
            p(i, j) = s;
        }
    return p;
}

inline double max_abs(const Mat4& m) {
    double v = 0.0;
    for (double x : m.a) v = std::max(v, std::abs(x));
    return v;
}

inline bool is_symmetric(const Mat4& m, double tol = 0.0) {
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            if (std::abs(m(i, j) - m(j, i)) > tol) return false;
    return true;
}

/// LU decomposition with partial pivoting; returns determinant, leaves the
/// factors in place. Used for det() and inverse().
namespace detail {

inline double lu_factor(Mat4& m, std::array<int, 4>& piv) {
    double det = 1.0;
    for (int i = 0; i < 4; ++i) piv[static_cast<std::size_t>(i)] = i;
    for (int col = 0; col < 4; ++col) {
        int p = col;
        for (int r = col + 1; r < 4; ++r)
            if (std::abs(m(r, col)) > std::abs(m(p, col))) p = r;
        if (p != col) {
            for (int j = 0; j < 4; ++j) std::swap(m.a[static_cast<std::size_t>(4 * p + j)], m.a[static_cast<std::size_t>(4 * col + j)]);
            std::swap(piv[static_cast<std::size_t>(p)], piv[static_cast<std::size_t>(col)]);
            det = -det;
        }
        const double d = m(col, col);
        det *= d;
        if (d == 0.0) return 0.0;
        for (int r = col + 1; r < 4; ++r) {
            m(r, col) /= d;
            for (int j = col + 1; j < 4; ++j) m(r, j) -= m(r, col) * m(col, j);
        }
    }
    return det;
}

}  // namespace detail

inline double det(Mat4 m) {
    std::array<int, 4> piv{};
    return detail::lu_factor(m, piv);
}

inline Mat4 inverse(Mat4 m) {
    std::array<int, 4> piv{};
    if (detail::lu_factor(m, piv) == 0.0) throw std::domain_error("Mat4::inverse: singular matrix");
    Mat4 inv;
    for (int col = 0; col < 4; ++col) {
        std::array<double, 4> b{};
        b[static_cast<std::size_t>(col)] = 1.0;
        // forward substitution on permuted rhs
        std::array<double, 4> y{};
        for (int i = 0; i < 4; ++i) {
            double s = b[static_cast<std::size_t>(piv[static_cast<std::size_t>(i)])];
            for (int j = 0; j < i; ++j) s -= m(i, j) * y[static_cast<std::size_t>(j)];
            y[static_cast<std::size_t>(i)] = s;
        }
        for (int i = 3; i >= 0; --i) {
            double s = y[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < 4; ++j) s -= m(i, j) * inv(j, col);
            inv(i, col) = s / m(i, i);
        }
    }
    return inv;
}

/// Cholesky factor L of a symmetric positive-definite matrix, m = L L^T.
/// Throws std::domain_error when m is not positive definite.
inline Mat4 cholesky(const Mat4& m) {
    Mat4 l;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = m(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0) throw std::domain_error("cholesky: matrix not positive definite");
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return l;
}

/// Eigen-decomposition of a symmetric 4x4 matrix by cyclic Jacobi rotations.
/// Returns eigenvalues ascending; columns of vecs are the eigenvectors.
struct SymEigen {
    std::array<double, 4> values{};
    Mat4 vectors;  // column k is the eigenvector of values[k]
};

inline SymEigen sym_eigen(Mat4 m) {
    Mat4 v = Mat4::identity();
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) off += m(i, j) * m(i, j);
        if (off < 1e-300) break;
        for (int p = 0; p < 4; ++p) {
            for (int q = p + 1; q < 4; ++q) {
                if (m(p, q) == 0.0) continue;
                const double theta = (m(q, q) - m(p, p)) / (2.0 * m(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < 4; ++k) {
                    const double mkp = m(k, p), mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (int k = 0; k < 4; ++k) {
                    const double mpk = m(p, k), mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
                for (int k = 0; k < 4; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    SymEigen e;
    std::array<int, 4> order{0, 1, 2, 3};
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            if (m(order[static_cast<std::size_t>(j)], order[static_cast<std::size_t>(j)]) < m(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]))
                std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    for (int k = 0; k < 4; ++k) {
        const int src = order[static_cast<std::size_t>(k)];
        e.values[static_cast<std::size_t>(k)] = m(src, src);
        for (int r = 0; r < 4; ++r) e.vectors(r, k) = v(r, src);
    }
    return e;
}

inline double min_eigenvalue(const Mat4& m) { return sym_eigen(m).values[0]; }

}  // namespace relkin
