#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bcl/grid.hpp"
#include "bcl/types.hpp"

namespace bcl {

/// Grid samples of an n x n matrix-valued coefficient.
struct MatrixField {
    Grid1D grid;
    int n = 1;
    std::vector<Mat> coeff;

    MatrixField() = default;
    MatrixField(const Grid1D& g, int rank)
        : grid(g), n(rank), coeff(g.nx, Mat::Zero(rank, rank)) {
        if (rank < 1) throw std::invalid_argument("MatrixField: rank must be >= 1");
    }

    bool compatible(const MatrixField& o) const { return grid.same(o.grid) && n == o.n; }
    double max_norm() const {
        double m = 0.0;
        for (const auto& c : coeff) m = std::max(m, c.norm());
        return m;
    }
};

/// Skew-Hermitian coefficient A1(x) of the connection 1-form A = A1 dx.
/// Construction projects onto the skew-Hermitian part; the projection
/// distance is kept for diagnostics.
struct ConnectionField : MatrixField {
    double projection_residual = 0.0;

    ConnectionField() = default;
    static ConnectionField make(const Grid1D& g, int rank, const std::vector<Mat>& raw);
    static ConnectionField zero(const Grid1D& g, int rank) {
        return make(g, rank, std::vector<Mat>(g.nx, Mat::Zero(rank, rank)));
    }
};

/// Hermitian potential V(x).
struct PotentialField : MatrixField {
    double projection_residual = 0.0;

    PotentialField() = default;
    static PotentialField make(const Grid1D& g, int rank, const std::vector<Mat>& raw);
    static PotentialField zero(const Grid1D& g, int rank) {
        return make(g, rank, std::vector<Mat>(g.nx, Mat::Zero(rank, rank)));
    }
};

/// Samples of U(x) in U(n). Throws if any sample is further than tol from
/// the unitary group.
struct GaugeTransform : MatrixField {
    static constexpr double kUnitaryTol = 1e-10;

    GaugeTransform() = default;
    static GaugeTransform make(const Grid1D& g, int rank, const std::vector<Mat>& samples);
    static GaugeTransform identity(const Grid1D& g, int rank) {
        return make(g, rank, std::vector<Mat>(g.nx, Mat::Identity(rank, rank)));
    }

    bool boundary_fixed(double tol = 1e-8) const {
        Mat id = Mat::Identity(n, n);
        return (coeff.front() - id).norm() <= tol && (coeff.back() - id).norm() <= tol;
    }
    GaugeTransform inverse() const;
};

/// Grid samples of a section of the trivial bundle M x C^n.
struct SectionField {
    Grid1D grid;
    int n = 1;
    std::vector<Vec> values;

    SectionField() = default;
    SectionField(const Grid1D& g, int rank)
        : grid(g), n(rank), values(g.nx, Vec::Zero(rank)) {}
};

// ---- analytic presets -------------------------------------------------

/// Sample a matrix-valued function on the grid.
std::vector<Mat> sample_matrix_function(const Grid1D& g, int rank,
                                        const std::function<Mat(double)>& f);

/// Seeded random smooth skew-Hermitian field: low Fourier modes with
/// decaying random coefficients, sup-norm ~ amplitude.
ConnectionField random_connection(const Grid1D& g, int rank, std::uint64_t seed,
                                  double amplitude = 0.8, int modes = 3);
PotentialField random_potential(const Grid1D& g, int rank, std::uint64_t seed,
                                double amplitude = 0.8, int modes = 3);

/// Random boundary-fixed gauge: U = exp(sum_j sin(j pi x / L) S_j).
GaugeTransform random_boundary_gauge(const Grid1D& g, int rank, std::uint64_t seed,
                                     double amplitude = 0.7, int modes = 3);

// ---- CSV persistence ---------------------------------------------------
// Columns: x, then Re/Im of each matrix entry in row-major order.

void write_matrix_field_csv(const std::string& path, const MatrixField& f);
MatrixField read_matrix_field_csv(const std::string& path);

}  // namespace bcl
