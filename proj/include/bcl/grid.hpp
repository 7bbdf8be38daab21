#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace bcl {

/// Uniform grid on [0, L] with nx nodes. Euclidean metric throughout.
struct Grid1D {
    double L = 1.0;
    int nx = 201;

    Grid1D() = default;
    Grid1D(double length, int nodes) : L(length), nx(nodes) {
        if (!(L > 0.0)) throw std::invalid_argument("Grid1D: L must be positive");
        if (nx < 3) throw std::invalid_argument("Grid1D: nx must be >= 3");
    }

    double h() const { return L / (nx - 1); }
    double x(int i) const { return i * h(); }
    bool same(const Grid1D& o) const { return nx == o.nx && L == o.L; }
};

/// Time nodes covering the window (0, 2T). cfl = dt/h with unit wave speed.
struct TimeGrid {
    double horizon = 3.0;  // = 2T
    int nt = 1201;

    TimeGrid() = default;
    TimeGrid(double two_t, int nodes) : horizon(two_t), nt(nodes) {
        if (!(horizon > 0.0)) throw std::invalid_argument("TimeGrid: horizon must be positive");
        if (nt < 3) throw std::invalid_argument("TimeGrid: nt must be >= 3");
    }

    /// Snap dt to the largest value <= cfl_target*h with an even step count,
    /// so t = T sits on a node.
    static TimeGrid make(double T, const Grid1D& g, double cfl_target = 0.5) {
        if (!(cfl_target > 0.0 && cfl_target <= 0.9))
            throw std::invalid_argument("TimeGrid: cfl target must lie in (0, 0.9]");
        double two_t = 2.0 * T;
        int steps = static_cast<int>(std::ceil(two_t / (cfl_target * g.h())));
        if (steps % 2 != 0) ++steps;
        return TimeGrid(two_t, steps + 1);
    }

    double dt() const { return horizon / (nt - 1); }
    double t(int j) const { return j * dt(); }
    double T() const { return 0.5 * horizon; }
    int mid() const { return (nt - 1) / 2; }  // node index of t = T when nt is odd
    double cfl(const Grid1D& g) const { return dt() / g.h(); }

    void require_stable(const Grid1D& g) const {
        if (cfl(g) > 0.9 + 1e-12)
            throw std::invalid_argument("TimeGrid: cfl = dt/h exceeds 0.9, leapfrog unstable");
    }
    bool same(const TimeGrid& o) const { return nt == o.nt && horizon == o.horizon; }
};

}  // namespace bcl
