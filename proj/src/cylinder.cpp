#include "bcl/cylinder.hpp"

#include <cmath>
#include <complex>
#include <sstream>

namespace bcl {

namespace {

/// Covariant half-node difference operator: block row i maps (u_i, u_{i+1})
/// to (u_{i+1}-u_i)/h + A(x_{i+1/2}) (u_i+u_{i+1})/2.
Mat difference_operator(const ConnectionField& a) {
    const int n = a.n;
    const int nx = a.grid.nx;
    const double h = a.grid.h();
    Mat d = Mat::Zero((nx - 1) * n, nx * n);
    Mat id = Mat::Identity(n, n);
    for (int i = 0; i + 1 < nx; ++i) {
        Mat amid = 0.5 * (a.coeff[i] + a.coeff[i + 1]);
        d.block(i * n, i * n, n, n) = -id / h + 0.5 * amid;
        d.block(i * n, (i + 1) * n, n, n) = id / h + 0.5 * amid;
    }
    return d;
}

/// Full grid values of the separated solution including the Dirichlet data.
std::vector<Vec> assemble_full(const TransversalOperator& op, const Vec& interior, const Vec& h) {
    const int n = op.n;
    const int nx = op.grid.nx;
    std::vector<Vec> u(nx);
    u[0] = h.head(n);
    u[nx - 1] = h.tail(n);
    for (int i = 1; i + 1 < nx; ++i) u[i] = interior.segment((i - 1) * n, n);
    return u;
}

/// Covariant Neumann values (left +, right - sign, matching the wave traces).
Vec boundary_trace(const TransversalOperator& op, const std::vector<Vec>& u) {
    const int n = op.n;
    const int nx = op.grid.nx;
    const double h = op.grid.h();
    Vec out(2 * n);
    out.head(n) = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h) + op.a0.coeff.front() * u[0];
    out.tail(n) = -(3.0 * u[nx - 1] - 4.0 * u[nx - 2] + u[nx - 3]) / (2.0 * h) -
                  op.a0.coeff.back() * u[nx - 1];
    return out;
}

}  // namespace

TransversalOperator make_transversal(const ConnectionField& a0) {
    TransversalOperator op;
    op.grid = a0.grid;
    op.n = a0.n;
    op.a0 = a0;
    Mat d = difference_operator(a0);
    Mat full = d.adjoint() * d;
    const int n = a0.n;
    const int nin = (a0.grid.nx - 2) * n;
    op.p0 = full.block(n, n, nin, nin);
    op.coupling.resize(nin, 2 * n);
    op.coupling.leftCols(n) = full.block(n, 0, nin, n);
    op.coupling.rightCols(n) = full.block(n, (a0.grid.nx - 1) * n, nin, n);
    return op;
}

RVec dirichlet_spectrum(const TransversalOperator& op, int count) {
    if (count < 1 || count > op.dim())
        throw std::invalid_argument("dirichlet_spectrum: count out of range");
    Eigen::SelfAdjointEigenSolver<Mat> es(op.p0);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("dirichlet_spectrum: eigensolver failure");
    return es.eigenvalues().head(count);
}

EllipticDtn elliptic_dtn(const TransversalOperator& op, double mu, const Vec& h) {
    if (h.size() != 2 * op.n) throw std::invalid_argument("elliptic_dtn: h must have 2n entries");
    Eigen::SelfAdjointEigenSolver<Mat> es(op.p0);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("elliptic_dtn: eigensolver failure");
    const RVec& ev = es.eigenvalues();
    double dist = (ev.array() - mu).abs().minCoeff();
    if (dist <= 1e-6) {
        int j = 0;
        (ev.array() - mu).abs().minCoeff(&j);
        std::ostringstream msg;
        msg << "elliptic_dtn: mu = " << mu << " within 1e-6 of eigenvalue lambda_" << (j + 1)
            << " = " << ev(j);
        throw std::invalid_argument(msg.str());
    }

    Vec rhs = -(op.coupling * h);

    EllipticDtn result;
    Mat shifted = op.p0 - mu * Mat::Identity(op.dim(), op.dim());
    result.interior = shifted.partialPivLu().solve(rhs);

    Vec proj = es.eigenvectors().adjoint() * rhs;
    Vec interior_spec =
        es.eigenvectors() * (proj.array() / (ev.array() - mu).cast<cplx>()).matrix();

    result.neumann = boundary_trace(op, assemble_full(op, result.interior, h));
    result.neumann_spectral = boundary_trace(op, assemble_full(op, interior_spec, h));
    result.route_gap = (result.neumann - result.neumann_spectral).cwiseAbs().maxCoeff();
    if (result.route_gap > 1e-8)
        throw std::runtime_error("elliptic_dtn: direct and spectral routes disagree beyond 1e-8");
    return result;
}

Mat elliptic_dtn_matrix(const TransversalOperator& op, double mu) {
    Mat lam(2 * op.n, 2 * op.n);
    for (int c = 0; c < 2 * op.n; ++c) {
        Vec h = Vec::Zero(2 * op.n);
        h(c) = 1.0;
        lam.col(c) = elliptic_dtn(op, mu, h).neumann;
    }
    return lam;
}

CylinderReport cylinder_relation_check(const TransversalOperator& op, double lambda,
                                       const std::vector<double>& ks, const Vec& h) {
    if (ks.empty()) throw std::invalid_argument("cylinder_relation_check: empty k list");
    CylinderReport rep;
    rep.lambda1 = dirichlet_spectrum(op, 1)(0);
    if (!(lambda < rep.lambda1))
        throw std::invalid_argument("cylinder_relation_check: lambda must lie below lambda_1");

    const double h_x = op.grid.h();
    const double dt = 0.5 * h_x;
    std::vector<Mat> da = derivative4(op.grid, op.a0.coeff);

    for (double k : ks) {
        double mu = lambda - k * k;
        EllipticDtn sol = elliptic_dtn(op, mu, h);
        rep.max_route_gap = std::max(rep.max_route_gap, sol.route_gap);

        // Cross-(lambda,k) consistency: the same mu reached as (lambda,k) and
        // as (mu, 0). Each route evaluates e^{-ikt} * trace(e^{ikt} v) at a
        // few time samples before comparing.
        EllipticDtn sol0 = elliptic_dtn(op, mu, h);
        for (double t : {0.0, 0.3, 1.1}) {
            cplx phase = std::exp(cplx(0.0, k * t));
            Vec via_k = (1.0 / phase) * (phase * sol.neumann);
            rep.max_cross_gap =
                std::max(rep.max_cross_gap, (via_k - sol0.neumann).cwiseAbs().maxCoeff());
        }

        // Separated solution u(t,x) = e^{ikt} v(x) under independent 2nd-order
        // stencils: residual of -d_t^2 u + P0 u - lambda u.
        std::vector<Vec> u = assemble_full(op, sol.interior, h);
        for (int i = 1; i + 1 < op.grid.nx; ++i) {
            Vec uxx = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h_x * h_x);
            Vec ux = (u[i + 1] - u[i - 1]) / (2.0 * h_x);
            Vec p0u = -uxx - 2.0 * (op.a0.coeff[i] * ux) -
                      ((da[i] + op.a0.coeff[i] * op.a0.coeff[i]) * u[i]);
            // discrete d_t^2 of e^{ikt} at any node: (2 cos(k dt) - 2)/dt^2 * u
            double dtt = (2.0 * std::cos(k * dt) - 2.0) / (dt * dt);
            Vec res = -dtt * u[i] + p0u - lambda * u[i];
            rep.max_pde_residual = std::max(rep.max_pde_residual, res.cwiseAbs().maxCoeff());
        }
    }

    double scale = 1.0 + h.cwiseAbs().maxCoeff();
    rep.ok = rep.max_cross_gap <= 1e-10 && rep.max_route_gap <= 1e-8 &&
             rep.max_pde_residual <= 100.0 * h_x * h_x * scale *
                                         (1.0 + std::abs(lambda) + std::abs(rep.lambda1));
    rep.ok = rep.ok && std::isfinite(rep.max_pde_residual);
    return rep;
}

}  // namespace bcl
