#include "bcl/gauge.hpp"

#include <cmath>

namespace bcl {

namespace {

/// Cubic interpolation of the samples at the midpoint of interval i.
Mat midpoint_value(const std::vector<Mat>& a, int i) {
    const int nx = static_cast<int>(a.size());
    if (i >= 1 && i + 2 < nx)
        return (-a[i - 1] + 9.0 * a[i] + 9.0 * a[i + 1] - a[i + 2]) / 16.0;
    if (i == 0)
        return 0.3125 * a[0] + 0.9375 * a[1] - 0.3125 * a[2] + 0.0625 * a[3];
    // last interval, mirrored weights
    return 0.3125 * a[nx - 1] + 0.9375 * a[nx - 2] - 0.3125 * a[nx - 3] + 0.0625 * a[nx - 4];
}

}  // namespace

TransportSolution parallel_transport(const ConnectionField& a) {
    const int nx = a.grid.nx;
    const double h = a.grid.h();
    TransportSolution sol;
    sol.grid = a.grid;
    sol.n = a.n;
    sol.u.resize(nx);
    sol.u[0] = Mat::Identity(a.n, a.n);
    for (int i = 0; i + 1 < nx; ++i) {
        const Mat& u = sol.u[i];
        Mat amid = midpoint_value(a.coeff, i);
        Mat k1 = -(a.coeff[i] * u);
        Mat k2 = -(amid * (u + 0.5 * h * k1));
        Mat k3 = -(amid * (u + 0.5 * h * k2));
        Mat k4 = -(a.coeff[i + 1] * (u + h * k3));
        Mat next = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        Mat unit = polar_unitary(next);
        sol.max_unitary_drift = std::max(sol.max_unitary_drift, (unit - next).norm());
        sol.u[i + 1] = unit;
    }
    return sol;
}

Mat wilson_line(const ConnectionField& a) { return parallel_transport(a).u.back(); }

GaugeDecision gauge_equivalent(const ConnectionField& a, const PotentialField& va,
                               const ConnectionField& b, const PotentialField& vb,
                               double tol) {
    if (!a.compatible(b) || !a.grid.same(va.grid) || !a.grid.same(vb.grid))
        throw std::invalid_argument("gauge_equivalent: grid/rank mismatch");
    const int nx = a.grid.nx;
    const int n = a.n;

    TransportSolution ua = parallel_transport(a);
    TransportSolution ub = parallel_transport(b);

    std::vector<Mat> w(nx);
    for (int i = 0; i < nx; ++i) w[i] = polar_unitary(ua.u[i] * ub.u[i].adjoint());

    GaugeDecision d;
    d.witness = GaugeTransform::make(a.grid, n, w);
    d.wilson_term = (ua.u.back() - ub.u.back()).norm() / std::sqrt(double(n));

    double vmax = 0.0, vscale = 0.0;
    for (int i = 0; i < nx; ++i) {
        vscale = std::max(vscale, va.coeff[i].norm());
        vmax = std::max(vmax, (w[i].adjoint() * va.coeff[i] * w[i] - vb.coeff[i]).norm());
    }
    d.potential_term = vmax / (1.0 + vscale);

    ConnectionField a_w = gauge_transform_connection(a, d.witness);
    double c2 = 0.0;
    for (int i = 0; i < nx; ++i) {
        double wgt = (i == 0 || i == nx - 1) ? 0.5 : 1.0;
        c2 += wgt * (a_w.coeff[i] - b.coeff[i]).squaredNorm();
    }
    d.connection_term = std::sqrt(c2 * a.grid.h());

    d.distance = d.wilson_term + d.potential_term + d.connection_term;
    d.equivalent = d.distance <= tol;
    return d;
}

std::pair<ConnectionField, TransportSolution> normalize_temporal_gauge(const ConnectionField& a) {
    TransportSolution ua = parallel_transport(a);
    GaugeTransform u = GaugeTransform::make(a.grid, a.n, ua.u);
    ConnectionField tilde = gauge_transform_connection(a, u);
    if (tilde.max_norm() > 1e-6 * (1.0 + a.max_norm()))
        throw std::runtime_error("normalize_temporal_gauge: transformed coefficient not ~0");
    return {tilde, ua};
}

}  // namespace bcl
