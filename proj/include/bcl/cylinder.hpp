#pragma once

#include "bcl/bundle.hpp"

namespace bcl {

/// Transversal connection Laplacian P0 with Dirichlet conditions,
/// assembled in divergence form D^H D so the discrete matrix is exactly
/// Hermitian PSD.
struct TransversalOperator {
    Grid1D grid;
    int n = 1;
    ConnectionField a0;
    Mat p0;        // interior block, size (nx-2) n
    Mat coupling;  // interior x boundary (2n columns: left fiber, right fiber)

    int dim() const { return static_cast<int>(p0.rows()); }
};

TransversalOperator make_transversal(const ConnectionField& a0);

/// Lowest `count` Dirichlet eigenvalues, ascending.
RVec dirichlet_spectrum(const TransversalOperator& op, int count);

struct EllipticDtn {
    Vec neumann;          // covariant Neumann values, [left (n), right (n)]
    Vec neumann_spectral; // same via eigenbasis expansion
    double route_gap = 0.0;
    Vec interior;         // solution at interior nodes
};

/// Solve (P0 - mu) v = 0 with v(0), v(L) = h (stacked 2n vector); both a
/// direct solve and a spectral expansion, which must agree to 1e-8.
EllipticDtn elliptic_dtn(const TransversalOperator& op, double mu, const Vec& h);

/// Full 2n x 2n elliptic DtN matrix at spectral parameter mu.
Mat elliptic_dtn_matrix(const TransversalOperator& op, double mu);

struct CylinderReport {
    double lambda1 = 0.0;
    double max_cross_gap = 0.0;   // consistency across (lambda,k) pairs with equal mu
    double max_route_gap = 0.0;   // direct vs spectral
    double max_pde_residual = 0.0; // separated solution u = e^{ikt} v under wave stencils
    bool ok = true;
};

/// Checks the cylinder relation: Lambda_0(lambda - k^2) from every k, pair
/// consistency, plus the separated-variable residual under independent
/// stencils.
CylinderReport cylinder_relation_check(const TransversalOperator& op, double lambda,
                                       const std::vector<double>& ks, const Vec& h);

}  // namespace bcl
