#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "relkin/fields.hpp"
#include "relkin/geometry.hpp"

namespace relkin {

/// Field samples on a regular 4D grid, loaded from CSV with header
/// x0,x1,x2,x3,u0..u3,v0..v3[,A0..A3]. Evaluation interpolates multilinearly
/// (linear per axis), so interpolated values are only first-order accurate
/// between samples; residual checks against grid fields inherit that limit.
struct GridSampledField {
    std::array<std::vector<double>, 4> axes;  // sorted unique coordinates
    std::vector<FourVector> u, v;             // row-major over (i0,i1,i2,i3)
    std::optional<std::vector<FourVector>> A;

    std::size_t flat(const std::array<std::size_t, 4>& idx) const {
        std::size_t f = 0;
        for (int a = 0; a < 4; ++a) f = f * axes[static_cast<std::size_t>(a)].size() + idx[static_cast<std::size_t>(a)];
        return f;
    }

    FourVector interpolate(const std::vector<FourVector>& data, const FourVector& x) const {
        std::array<std::size_t, 4> lo{};
        std::array<double, 4> t{};
        for (int a = 0; a < 4; ++a) {
            const auto& ax = axes[static_cast<std::size_t>(a)];
            if (ax.size() == 1) {
                lo[static_cast<std::size_t>(a)] = 0;
                t[static_cast<std::size_t>(a)] = 0.0;
                continue;
            }
            const double q = std::clamp(x[a], ax.front(), ax.back());
            auto it = std::upper_bound(ax.begin(), ax.end(), q);
            std::size_t j = static_cast<std::size_t>(std::distance(ax.begin(), it));
            j = std::min(std::max<std::size_t>(j, 1), ax.size() - 1) - 1;
            lo[static_cast<std::size_t>(a)] = j;
            t[static_cast<std::size_t>(a)] = (q - ax[j]) / (ax[j + 1] - ax[j]);
        }
        FourVector out{};
        for (int corner = 0; corner < 16; ++corner) {
            double weight = 1.0;
            std::array<std::size_t, 4> idx = lo;
            for (int a = 0; a < 4; ++a) {
                const bool hi = (corner >> a) & 1;
                const double ta = t[static_cast<std::size_t>(a)];
                if (hi) {
                    if (axes[static_cast<std::size_t>(a)].size() == 1) {
                        weight = 0.0;
                        break;
                    }
                    idx[static_cast<std::size_t>(a)] += 1;
                    weight *= ta;
                } else {
                    weight *= 1.0 - ta;
                }
            }
            if (weight == 0.0) continue;
            out += data[flat(idx)] * weight;
        }
        return out;
    }

    DriftFields drift_fields(double fd_step = 1e-4) const {
        VectorField fu, fv;
        fu.fd_step = fv.fd_step = fd_step;
        fu.value = [self = *this](const FourVector& x) { return self.interpolate(self.u, x); };
        fv.value = [self = *this](const FourVector& x) { return self.interpolate(self.v, x); };
        return DriftFields{fu, fv};
    }

    EMPotential potential(double fd_step = 1e-4) const {
        if (!A) return EMPotential::zero();
        VectorField fa;
        fa.fd_step = fd_step;
        fa.value = [self = *this](const FourVector& x) { return self.interpolate(*self.A, x); };
        return EMPotential{fa};
    }
};

namespace gridfield_detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
}

}  // namespace gridfield_detail

inline GridSampledField parse_grid_field_csv(const std::string& content) {
    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("grid field: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = gridfield_detail::split_csv_line(line);
    const std::vector<std::string> base = {"x0", "x1", "x2", "x3", "u0", "u1", "u2", "u3", "v0", "v1", "v2", "v3"};
    const std::vector<std::string> pot = {"A0", "A1", "A2", "A3"};
    bool has_potential;
    if (header.size() == base.size())
        has_potential = false;
    else if (header.size() == base.size() + pot.size())
        has_potential = true;
    else
        throw std::runtime_error("grid field: header must have 12 or 16 columns");
    for (std::size_t i = 0; i < base.size(); ++i)
        if (header[i] != base[i]) throw std::runtime_error("grid field: unexpected header column '" + header[i] + "'");
    if (has_potential)
        for (std::size_t i = 0; i < pot.size(); ++i)
            if (header[base.size() + i] != pot[i])
                throw std::runtime_error("grid field: unexpected header column '" + header[base.size() + i] + "'");

    struct Row {
        FourVector x, u, v, a;
    };
    std::vector<Row> rows;
    std::array<std::vector<double>, 4> axes;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = gridfield_detail::split_csv_line(line);
        if (cells.size() != header.size()) throw std::runtime_error("grid field: ragged row");
        Row r{};
        std::vector<double> vals;
        vals.reserve(cells.size());
        for (const auto& c : cells) {
            std::size_t pos = 0;
            const double d = std::stod(c, &pos);
            if (pos != c.size()) throw std::runtime_error("grid field: bad number '" + c + "'");
            vals.push_back(d);
        }
        for (int i = 0; i < 4; ++i) {
            r.x[i] = vals[static_cast<std::size_t>(i)];
            r.u[i] = vals[static_cast<std::size_t>(4 + i)];
            r.v[i] = vals[static_cast<std::size_t>(8 + i)];
            if (has_potential) r.a[i] = vals[static_cast<std::size_t>(12 + i)];
        }
        rows.push_back(r);
        for (int a = 0; a < 4; ++a) axes[static_cast<std::size_t>(a)].push_back(r.x[a]);
    }
    if (rows.empty()) throw std::runtime_error("grid field: no data rows");

    GridSampledField g;
    for (int a = 0; a < 4; ++a) {
        auto& ax = axes[static_cast<std::size_t>(a)];
        std::sort(ax.begin(), ax.end());
        ax.erase(std::unique(ax.begin(), ax.end()), ax.end());
        g.axes[static_cast<std::size_t>(a)] = ax;
    }
    std::size_t expected = 1;
    for (int a = 0; a < 4; ++a) expected *= g.axes[static_cast<std::size_t>(a)].size();
    if (expected != rows.size()) throw std::runtime_error("grid field: samples do not form a full regular grid");

    g.u.resize(expected);
    g.v.resize(expected);
    if (has_potential) g.A.emplace(expected);
    std::vector<bool> seen(expected, false);
    for (const Row& r : rows) {
        std::array<std::size_t, 4> idx{};
        for (int a = 0; a < 4; ++a) {
            const auto& ax = g.axes[static_cast<std::size_t>(a)];
            const auto it = std::lower_bound(ax.begin(), ax.end(), r.x[a]);
            if (it == ax.end() || *it != r.x[a]) throw std::runtime_error("grid field: coordinate lookup failed");
            idx[static_cast<std::size_t>(a)] = static_cast<std::size_t>(std::distance(ax.begin(), it));
        }
        const std::size_t f = g.flat(idx);
        if (seen[f]) throw std::runtime_error("grid field: duplicate grid point");
        seen[f] = true;
        g.u[f] = r.u;
        g.v[f] = r.v;
        if (has_potential) (*g.A)[f] = r.a;
    }
    return g;
}

}  // namespace relkin
