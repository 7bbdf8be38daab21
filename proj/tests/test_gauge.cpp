#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bcl/bundle.hpp"
#include "bcl/gauge.hpp"

using namespace bcl;

namespace {
const Grid1D g(1.0, 201);

ConnectionField scalar_connection(const Grid1D& gr, double c) {
    std::vector<Mat> raw(gr.nx, Mat(1, 1));
    for (auto& m : raw) m(0, 0) = cplx(0.0, c);
    return ConnectionField::make(gr, 1, raw);
}
}  // namespace

TEST_CASE("parallel_transport: A = 0 gives identity everywhere") {
    TransportSolution t = parallel_transport(ConnectionField::zero(g, 2));
    double err = 0.0;
    for (const auto& u : t.u) err = std::max(err, (u - Mat::Identity(2, 2)).norm());
    CHECK(err < 1e-14);
}

TEST_CASE("parallel_transport: constant scalar A1 = ic closed form") {
    const double c = 0.9;
    TransportSolution t = parallel_transport(scalar_connection(g, c));
    double err = 0.0;
    for (int i = 0; i < g.nx; ++i)
        err = std::max(err, std::abs(t.u[i](0, 0) - std::exp(cplx(0.0, -c * g.x(i)))));
    CHECK(err < 1e-10);
    CHECK(std::abs(wilson_line(scalar_connection(g, c))(0, 0) - std::exp(cplx(0.0, -c * g.L))) <
          1e-10);
}

TEST_CASE("parallel_transport: n=2 random A against refined-step reference") {
    // O(h^4) accumulation: nx = 601 puts the coarse run safely under 1e-8.
    Grid1D gc(1.0, 601);
    ConnectionField a = random_connection(gc, 2, 17);
    // Reference: the same field resampled on a 20x finer grid (same Fourier
    // modes, so the resample is exact).
    Grid1D fine(gc.L, (gc.nx - 1) * 20 + 1);
    ConnectionField af = random_connection(fine, 2, 17);
    Mat coarse = wilson_line(a);
    Mat ref = wilson_line(af);
    CHECK((coarse - ref).norm() < 1e-8);
    CHECK(unitarity_defect(coarse) < 1e-12);
}

TEST_CASE("wilson_line: scalar phase equals -integral of a(x)") {
    // A1 = i a(x), a = 0.4 + 0.3 sin(pi x): phase of u(L) is -int a dx.
    std::vector<Mat> raw(g.nx, Mat(1, 1));
    auto fa = [](double x) { return 0.4 + 0.3 * std::sin(M_PI * x); };
    for (int i = 0; i < g.nx; ++i) raw[i](0, 0) = cplx(0.0, fa(g.x(i)));
    ConnectionField a = ConnectionField::make(g, 1, raw);
    // Simpson quadrature of a on the same grid (nx odd).
    double integral = 0.0;
    for (int i = 0; i + 2 < g.nx; i += 2)
        integral += g.h() / 3.0 * (fa(g.x(i)) + 4.0 * fa(g.x(i + 1)) + fa(g.x(i + 2)));
    cplx w = wilson_line(a)(0, 0);
    double gap = std::abs(std::arg(w) - std::remainder(-integral, 2.0 * M_PI));
    CHECK(gap < 1e-9);
}

TEST_CASE("gauge_equivalent: identical pair") {
    ConnectionField a = random_connection(g, 2, 23);
    PotentialField v = random_potential(g, 2, 24);
    GaugeDecision d = gauge_equivalent(a, v, a, v);
    CHECK(d.equivalent);
    CHECK(d.distance < 1e-12);
    double werr = 0.0;
    for (const auto& u : d.witness.coeff) werr = std::max(werr, (u - Mat::Identity(2, 2)).norm());
    CHECK(werr < 1e-10);
}

TEST_CASE("gauge_equivalent: transformed pair is equivalent, witness matches U0") {
    ConnectionField a = random_connection(g, 2, 33);
    PotentialField v = random_potential(g, 2, 34);
    GaugeTransform u0 = random_boundary_gauge(g, 2, 35);
    ConnectionField b = gauge_transform_connection(a, u0);
    PotentialField w = gauge_transform_potential(v, u0);
    GaugeDecision d = gauge_equivalent(a, v, b, w);
    CHECK(d.equivalent);
    CHECK(d.distance < 1e-3);
    double werr = 0.0;
    for (int i = 0; i < g.nx; ++i) werr = std::max(werr, (d.witness.coeff[i] - u0.coeff[i]).norm());
    CHECK(werr < 1e-3);
}

TEST_CASE("gauge_equivalent: constant phase shift i pi/L is detected") {
    ConnectionField a = random_connection(g, 1, 43);
    PotentialField v = random_potential(g, 1, 44);
    std::vector<Mat> raw(g.nx);
    for (int i = 0; i < g.nx; ++i) raw[i] = a.coeff[i] + cplx(0.0, M_PI / g.L) * Mat::Identity(1, 1);
    ConnectionField b = ConnectionField::make(g, 1, raw);
    GaugeDecision d = gauge_equivalent(a, v, b, v);
    CHECK_FALSE(d.equivalent);
    CHECK(d.wilson_term > 0.5);  // Wilson phases differ by pi
}

TEST_CASE("normalize_temporal_gauge: transformed coefficient vanishes") {
    ConnectionField a = random_connection(g, 2, 53);
    auto [at, transport] = normalize_temporal_gauge(a);
    CHECK(at.max_norm() < 1e-6 * (1.0 + a.max_norm()));
    TransportSolution zero_case = parallel_transport(ConnectionField::zero(g, 2));
    CHECK((zero_case.u.back() - Mat::Identity(2, 2)).norm() < 1e-14);
}

TEST_CASE("normalize_temporal_gauge: equivalence decision survives the gauge change") {
    ConnectionField a = random_connection(g, 2, 63);
    PotentialField va = random_potential(g, 2, 64);
    GaugeTransform u0 = random_boundary_gauge(g, 2, 65);
    ConnectionField b = gauge_transform_connection(a, u0);
    PotentialField vb = gauge_transform_potential(va, u0);

    auto [an, ta] = normalize_temporal_gauge(a);
    auto [bn, tb] = normalize_temporal_gauge(b);
    // Transport solutions gauge-transform V; pass transported potentials
    // through the decision procedure with zero connections.
    std::vector<Mat> va_t(g.nx), vb_t(g.nx);
    for (int i = 0; i < g.nx; ++i) {
        va_t[i] = ta.u[i].adjoint() * va.coeff[i] * ta.u[i];
        vb_t[i] = tb.u[i].adjoint() * vb.coeff[i] * tb.u[i];
    }
    GaugeDecision direct = gauge_equivalent(a, va, b, vb);
    GaugeDecision temporal = gauge_equivalent(
        ConnectionField::zero(g, 2), PotentialField::make(g, 2, va_t),
        ConnectionField::zero(g, 2), PotentialField::make(g, 2, vb_t));
    CHECK(direct.equivalent == temporal.equivalent);
}
