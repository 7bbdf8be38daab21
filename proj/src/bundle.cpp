#include "bcl/bundle.hpp"

namespace bcl {

namespace {

// 4th-order stencils: central 5-point in the interior, one-sided 5-point at
// the two nodes nearest each end.
template <typename T>
std::vector<T> deriv4_impl(const Grid1D& g, const std::vector<T>& f) {
    if (static_cast<int>(f.size()) != g.nx)
        throw std::invalid_argument("derivative4: sample count does not match grid");
    if (g.nx < 5) throw std::invalid_argument("derivative4: need at least 5 nodes");
    const double h = g.h();
    const int nx = g.nx;
    std::vector<T> d(nx);
    auto fw = [&](int i) -> T {
        return (-25.0 * f[i] + 48.0 * f[i + 1] - 36.0 * f[i + 2] + 16.0 * f[i + 3] -
                3.0 * f[i + 4]) / (12.0 * h);
    };
    auto fw1 = [&](int i) -> T {
        return (-3.0 * f[i - 1] - 10.0 * f[i] + 18.0 * f[i + 1] - 6.0 * f[i + 2] + f[i + 3]) /
               (12.0 * h);
    };
    d[0] = fw(0);
    d[1] = fw1(1);
    for (int i = 2; i < nx - 2; ++i)
        d[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h);
    d[nx - 2] = (3.0 * f[nx - 1] + 10.0 * f[nx - 2] - 18.0 * f[nx - 3] + 6.0 * f[nx - 4] -
                 f[nx - 5]) / (12.0 * h);
    d[nx - 1] = (25.0 * f[nx - 1] - 48.0 * f[nx - 2] + 36.0 * f[nx - 3] - 16.0 * f[nx - 4] +
                 3.0 * f[nx - 5]) / (12.0 * h);
    return d;
}

}  // namespace

std::vector<Mat> derivative4(const Grid1D& g, const std::vector<Mat>& f) {
    return deriv4_impl(g, f);
}
std::vector<Vec> derivative4(const Grid1D& g, const std::vector<Vec>& f) {
    return deriv4_impl(g, f);
}

ConnectionField gauge_transform_connection(const ConnectionField& a, const GaugeTransform& u) {
    if (!a.compatible(u))
        throw std::invalid_argument("gauge_transform_connection: grid/rank mismatch");
    auto du = derivative4(a.grid, u.coeff);
    std::vector<Mat> b(a.grid.nx);
    for (int i = 0; i < a.grid.nx; ++i) {
        Mat uinv = u.coeff[i].adjoint();
        b[i] = uinv * du[i] + uinv * a.coeff[i] * u.coeff[i];
    }
    return ConnectionField::make(a.grid, a.n, b);
}

PotentialField gauge_transform_potential(const PotentialField& v, const GaugeTransform& u) {
    if (!v.compatible(u))
        throw std::invalid_argument("gauge_transform_potential: grid/rank mismatch");
    std::vector<Mat> w(v.grid.nx);
    for (int i = 0; i < v.grid.nx; ++i)
        w[i] = u.coeff[i].adjoint() * v.coeff[i] * u.coeff[i];
    return PotentialField::make(v.grid, v.n, w);
}

SectionField covariant_dx(const SectionField& u, const ConnectionField& a) {
    if (!u.grid.same(a.grid) || u.n != a.n)
        throw std::invalid_argument("covariant_dx: grid/rank mismatch");
    const int nx = u.grid.nx;
    const double h = u.grid.h();
    SectionField d(u.grid, u.n);
    d.values[0] = (-3.0 * u.values[0] + 4.0 * u.values[1] - u.values[2]) / (2.0 * h);
    for (int i = 1; i < nx - 1; ++i)
        d.values[i] = (u.values[i + 1] - u.values[i - 1]) / (2.0 * h);
    d.values[nx - 1] =
        (3.0 * u.values[nx - 1] - 4.0 * u.values[nx - 2] + u.values[nx - 3]) / (2.0 * h);
    for (int i = 0; i < nx; ++i) d.values[i] += a.coeff[i] * u.values[i];
    return d;
}

ProjectionReport project_structures(const Grid1D& g, int rank, const std::vector<Mat>& a_raw,
                                    const std::vector<Mat>& v_raw) {
    ProjectionReport rep;
    rep.connection = ConnectionField::make(g, rank, a_raw);
    rep.potential = PotentialField::make(g, rank, v_raw);
    rep.connection_distance = rep.connection.projection_residual;
    rep.potential_distance = rep.potential.projection_residual;
    return rep;
}

}  // namespace bcl
