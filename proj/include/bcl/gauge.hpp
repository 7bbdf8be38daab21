#pragma once

#include "bcl/bundle.hpp"

namespace bcl {

/// Parallel transport u' = -A1(x) u, u(0) = Id, integrated node to node.
struct TransportSolution {
    Grid1D grid;
    int n = 1;
    std::vector<Mat> u;          // unitary at each node
    double max_unitary_drift = 0.0;  // before per-step polar re-unitarization
};

/// RK4 with per-step polar re-unitarization. Midpoint values of A1 by
/// 4-point interpolation.
TransportSolution parallel_transport(const ConnectionField& a);

/// u_A(L), the whole-interval transport. Boundary-fixed gauge invariant in 1-D.
Mat wilson_line(const ConnectionField& a);

struct GaugeDecision {
    bool equivalent = false;
    double distance = 0.0;
    double wilson_term = 0.0;
    double potential_term = 0.0;
    double connection_term = 0.0;
    GaugeTransform witness;
};

/// Decision procedure for the boundary-fixed gauge orbit. Witness candidate
/// U(x) = u_A(x) u_B(x)^-1.
GaugeDecision gauge_equivalent(const ConnectionField& a, const PotentialField& va,
                               const ConnectionField& b, const PotentialField& vb,
                               double tol = 1e-3);

/// Temporal gauge: returns (A transformed by u_A, u_A). The transformed
/// coefficient vanishes identically in 1-D; its norm is asserted <= 1e-6.
std::pair<ConnectionField, TransportSolution> normalize_temporal_gauge(const ConnectionField& a);

}  // namespace bcl
