#pragma once

#include <utility>

#include "bcl/field.hpp"

namespace bcl {

/// 4th-order first derivative of a sampled matrix field (one-sided at the
/// two nodes nearest each endpoint).
std::vector<Mat> derivative4(const Grid1D& g, const std::vector<Mat>& f);
std::vector<Vec> derivative4(const Grid1D& g, const std::vector<Vec>& f);

/// B1 = U^-1 dU/dx + U^-1 A1 U, re-projected to skew-Hermitian.
ConnectionField gauge_transform_connection(const ConnectionField& a, const GaugeTransform& u);

/// U^-1 V U pointwise, Hermitian re-projection applied.
PotentialField gauge_transform_potential(const PotentialField& v, const GaugeTransform& u);

/// Covariant derivative du/dx + A1 u (central differences, 2nd order,
/// one-sided at the endpoints).
SectionField covariant_dx(const SectionField& u, const ConnectionField& a);

struct ProjectionReport {
    ConnectionField connection;
    PotentialField potential;
    double connection_distance = 0.0;  // Frobenius distance to the raw input, max over nodes
    double potential_distance = 0.0;
};

/// Nearest skew-Hermitian / Hermitian projections with distances reported.
ProjectionReport project_structures(const Grid1D& g, int rank,
                                    const std::vector<Mat>& a_raw,
                                    const std::vector<Mat>& v_raw);

}  // namespace bcl
