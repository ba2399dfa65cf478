#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>

#include "relkin/geometry.hpp"

namespace relkin {

/// Dynamical-parameter gauge g(s): strictly increasing, with an analytic
/// derivative that is positive and finite on the domain. Derivatives are
/// supplied, never differenced numerically.
class GaugeFunction {
public:
    static GaugeFunction identity() {
        return GaugeFunction([](double s) { return s; }, [](double) { return 1.0; });
    }

    /// g(s) = a*s + b with a > 0.
    static GaugeFunction affine(double a, double b) {
        if (!(a > 0.0) || !std::isfinite(a))
            throw std::domain_error("GaugeFunction::affine: slope must be positive and finite");
        return GaugeFunction([a, b](double s) { return a * s + b; }, [a](double) { return a; });
    }

    static GaugeFunction user(std::function<double(double)> g, std::function<double(double)> dg,
                              double lo = -std::numeric_limits<double>::infinity(),
                              double hi = std::numeric_limits<double>::infinity()) {
        return GaugeFunction(std::move(g), std::move(dg), lo, hi);
    }

    double operator()(double s) const {
        check_domain(s);
        return g_(s);
    }

    double deriv(double s) const {
        check_domain(s);
        const double d = dg_(s);
        if (!(d > 0.0) || !std::isfinite(d))
            throw std::domain_error("GaugeFunction: derivative must be positive and finite");
        return d;
    }

    double domain_lo() const { return lo_; }
    double domain_hi() const { return hi_; }

private:
    GaugeFunction(std::function<double(double)> g, std::function<double(double)> dg,
                  double lo = -std::numeric_limits<double>::infinity(),
                  double hi = std::numeric_limits<double>::infinity())
        : g_(std::move(g)), dg_(std::move(dg)), lo_(lo), hi_(hi) {}

    void check_domain(double s) const {
        if (s < lo_ || s > hi_) throw std::domain_error("GaugeFunction: s outside gauge domain");
    }

    std::function<double(double)> g_;
    std::function<double(double)> dg_;
    double lo_, hi_;
};

/// v(x,s) = v(x) gdot(s)
inline FourVector scaled_drift(const FourVector& v, const GaugeFunction& gauge, double s) {
    return v * gauge.deriv(s);
}

/// w(x,s) = w(x) gdot(s)
inline Mat4 scaled_diffusion(const Mat4& w, const GaugeFunction& gauge, double s) {
    return w * gauge.deriv(s);
}

}  // namespace relkin
