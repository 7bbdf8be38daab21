#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <memory>

#include "bcl/control.hpp"

using namespace bcl;

namespace {

// Shared flat-geometry laboratory (A = V = 0, n = 1): the closed-form cases.
struct Lab {
    Grid1D g{1.0, 201};
    TimeGrid tg{TimeGrid::make(1.5, Grid1D(1.0, 201))};
    ConnectionField a;
    PotentialField v;
    DtnOperator dtn;
    std::unique_ptr<ConnectingOperator> conn;
    SourceBasis basis;
    ReferenceSet refs;
    GramData gd;

    Lab() {
        a = ConnectionField::zero(g, 1);
        v = PotentialField::zero(g, 1);
        dtn = synthesize_dtn(a, v, {Endpoint::Left, Endpoint::Right}, tg, 1);
        conn = std::make_unique<ConnectingOperator>(dtn);
        basis = make_hat_basis(dtn, 4, 0.0);
        // Offsets spaced by 0.1 < tau_max so the tau sweeps tile the full
        // depth range of the evaluation nodes with no coverage gaps.
        refs = make_reference_set(dtn, {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9},
                                  0.1, 21, 2);
        gd = make_gram_data(*conn, basis, refs);
    }
};

const Lab& lab() {
    static Lab l;
    return l;
}

ControlSchedule quick_schedule() {
    ControlSchedule s;
    s.ks = {4, 8};
    return s;
}

}  // namespace

TEST_CASE("influence_domain: closed-form unions") {
    Grid1D g(1.0, 101);
    InfluenceDomain left = influence_domain(g, {Endpoint::Left}, {0.3});
    REQUIRE(left.intervals.size() == 1);
    CHECK(left.intervals[0].first == 0.0);
    CHECK(left.intervals[0].second == doctest::Approx(0.3));

    InfluenceDomain both = influence_domain(g, {Endpoint::Left, Endpoint::Right}, {0.6, 0.6});
    REQUIRE(both.intervals.size() == 1);  // overlap at the cut point 0.5
    CHECK(both.intervals[0].first == 0.0);
    CHECK(both.intervals[0].second == doctest::Approx(1.0));
    CHECK(both.measure() == doctest::Approx(1.0));
}

TEST_CASE("make_hat_basis: support windows and select") {
    const Lab& L = lab();
    CHECK(L.basis.size() > 0);
    for (const auto& m : L.basis.members) {
        CHECK(m.t_lo >= 0.0);
        CHECK(m.t_hi <= L.tg.T() + 1e-12);
    }
    std::vector<int> sel = L.basis.select(Endpoint::Left, 0.4);
    for (int id : sel) {
        CHECK(L.basis.members[id].ep == Endpoint::Left);
        CHECK(L.basis.members[id].t_lo >= L.tg.T() - 0.4 - 1e-9);
    }
    CHECK(!sel.empty());
    CHECK(sel.size() < L.basis.members.size());
}

TEST_CASE("tikhonov_project: empty small set picks the top Gram eigenvector") {
    const Lab& L = lab();
    const Mat& G = L.gd.g_full.g;
    double scale = G.diagonal().real().mean();
    Mat empty(0, G.cols()), empty_g(0, 0);
    TikhonovResult r = tikhonov_project(L.gd.g_full, empty_g, empty, 1e-6 * scale, 1.0);
    CHECK(r.localizable);
    CHECK(r.leakage < 0.05);
    Eigen::SelfAdjointEigenSolver<Mat> es(G);
    Vec top = es.eigenvectors().col(G.cols() - 1);
    double align = std::abs(top.dot(r.coeff)) / (top.norm() * r.coeff.norm());
    CHECK(align == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::real(r.coeff.dot(G * r.coeff)) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("tikhonov_project: big set inside the small span is flagged") {
    const Lab& L = lab();
    // Small family = the whole big family: nothing orthogonal remains.
    TikhonovResult r = tikhonov_project(L.gd.g_full, L.gd.g_full.g, L.gd.g_full.g,
                                        1e-4 * L.gd.g_full.g.diagonal().real().mean(), 1.0);
    CHECK_FALSE(r.localizable);
    CHECK(r.leakage > 0.5);
}

TEST_CASE("tikhonov_project: nested influence domains give small leakage") {
    const Lab& L = lab();
    // Small family reaches depth 0.2 from the left, big family depth 0.5:
    // M(left, 0.2) subset of M(left, 0.5), so a deep localizer exists.
    std::vector<int> small_ids = L.basis.select(Endpoint::Left, 0.2);
    std::vector<int> big_ids = L.basis.select(Endpoint::Left, 0.5);
    Mat gb(big_ids.size(), big_ids.size());
    for (size_t i = 0; i < big_ids.size(); ++i)
        for (size_t j = 0; j < big_ids.size(); ++j)
            gb(i, j) = L.gd.g_full.g(big_ids[i], big_ids[j]);
    Mat cs(small_ids.size(), big_ids.size());
    for (size_t i = 0; i < small_ids.size(); ++i)
        for (size_t j = 0; j < big_ids.size(); ++j)
            cs(i, j) = L.gd.g_full.g(small_ids[i], big_ids[j]);
    Mat gs(small_ids.size(), small_ids.size());
    for (size_t i = 0; i < small_ids.size(); ++i)
        for (size_t j = 0; j < small_ids.size(); ++j)
            gs(i, j) = L.gd.g_full.g(small_ids[i], small_ids[j]);
    GramTable gt = make_gram_table(gb);
    TikhonovResult r = tikhonov_project(gt, gs, cs, 1e-4 * gt.g.diagonal().real().mean(), 1.0);
    CHECK(r.localizable);
    CHECK(r.leakage < 0.5);
}

TEST_CASE("tikhonov_project: linearity in the target norm") {
    const Lab& L = lab();
    Mat empty(0, L.gd.g_full.g.cols()), empty_g(0, 0);
    double alpha = 1e-5 * L.gd.g_full.g.diagonal().real().mean();
    TikhonovResult r1 = tikhonov_project(L.gd.g_full, empty_g, empty, alpha, 1.0);
    TikhonovResult r4 = tikhonov_project(L.gd.g_full, empty_g, empty, alpha, 4.0);
    // Doubling the control doubles every inner product <W f, W h>.
    bool doubled = (r4.coeff - 2.0 * r1.coeff).norm() < 1e-8 * r1.coeff.norm() ||
                   (r4.coeff + 2.0 * r1.coeff).norm() < 1e-8 * r1.coeff.norm();
    CHECK(doubled);
}

TEST_CASE("build_localizer: interior node, shells shrink onto the point") {
    const Lab& L = lab();
    Localizer loc = build_localizer(L.gd, 80, quick_schedule());  // x = 0.4
    REQUIRE(loc.ok);
    CHECK(loc.near == Endpoint::Left);
    CHECK(loc.s == doctest::Approx(0.4));
    REQUIRE(loc.slots.size() == 2);
    for (const auto& s : loc.slots) {
        CHECK(s.vol == doctest::Approx(1.0 / s.k));
        CHECK(s.leakage < 0.5);
    }
    CHECK(loc.gram_dev < 0.2);
}

TEST_CASE("oracle_exterior_mass: shell at x = 0.4, k = 8 keeps 90% inside") {
    const Lab& L = lab();
    Localizer loc = build_localizer(L.gd, 80, quick_schedule());
    REQUIRE(loc.ok);
    double mass = oracle_exterior_mass(L.a, L.v, L.basis, loc, 8, 2.0 * L.g.h());
    CHECK(mass <= 0.10);
}

TEST_CASE("build_frame: boundary tables hold Wh(x) = h(T - tau, x) on the boundary") {
    const Lab& L = lab();
    FrameData frame = build_frame(L.gd, {40, 80, 100, 120, 160}, quick_schedule());
    // Wh(x) = h(T - tau, x) at the boundary (the Dirichlet data itself), and
    // zero for sources driven from the other endpoint. The reference pulses
    // vanish near t = T by construction, so every tau = 0 column is zero.
    int mid = L.tg.mid();
    double err = 0.0;
    for (int itau = 0; itau < L.refs.ntau; ++itau)
        for (int q = 0; q < L.refs.nq; ++q) {
            int j = mid - itau * L.refs.dtau_steps;
            cplx want = L.refs.sources[q].endpoint == Endpoint::Left
                            ? L.refs.sources[q].samples(0, j)
                            : cplx(0.0, 0.0);
            err = std::max(err, std::abs(frame.r_left(0, L.refs.col(q, itau)) - want));
        }
    CHECK(err == 0.0);
    CHECK(frame.r_left.col(L.refs.col(0, 0)).norm() == 0.0);  // pulses end before T
}

TEST_CASE("build_frame: registration and end mismatch are unitary") {
    const Lab& L = lab();
    FrameData frame = build_frame(L.gd, {72, 76, 80, 84, 88}, quick_schedule());
    CHECK(unitarity_defect(frame.end_mismatch) < 1e-10);
    for (const auto& r : frame.registration) CHECK(unitarity_defect(r) < 1e-10);
    // n = 1: the frame is a phase field; on closely spaced nodes the
    // registered tables should not flip phase between neighbours.
    double scale = 0.0;
    for (const auto& loc : frame.nodes)
        if (loc.ok) scale = std::max(scale, loc.r.cwiseAbs().maxCoeff());
    REQUIRE(scale > 0.0);
    int ref_col = L.refs.col(0, 0);
    cplx prev = 0.0;
    for (const auto& loc : frame.nodes) {
        if (!loc.ok) continue;
        cplx cur = loc.r(0, ref_col);
        if (std::abs(prev) > 0.05 * scale && std::abs(cur) > 0.05 * scale)
            CHECK(std::abs(std::arg(cur / prev)) < M_PI / 2.0);
        prev = cur;
    }
}

TEST_CASE("evaluate_wave: zero signal, reference reproduction, oracle match") {
    const Lab& L = lab();
    std::vector<int> nodes = {60, 80, 100, 120, 140};
    FrameData frame = build_frame(L.gd, nodes, quick_schedule());

    BoundarySignal zero(Endpoint::Left, 1, L.tg.nt);
    std::vector<Vec> z = evaluate_wave(frame, L.gd, zero, 0);
    for (const auto& val : z) CHECK(val.norm() == 0.0);

    // tau = 0, h = reference h_q: column q of R.
    int q = 1;
    std::vector<Vec> got = evaluate_wave(frame, L.gd, L.refs.sources[q], 0);
    size_t idx = 0;
    double rep_err = 0.0, rep_scale = 0.0;
    for (const auto& loc : frame.nodes) {
        if (!loc.ok) continue;
        rep_err = std::max(rep_err, (got[idx] - loc.r.col(L.refs.col(q, 0))).norm());
        rep_scale = std::max(rep_scale, loc.r.col(L.refs.col(q, 0)).norm());
        ++idx;
    }
    CHECK(rep_err <= 1e-6 * (rep_scale + 1e-300));

    // Against the interior-field oracle for an unrelated smooth signal.
    // Centered so that u(T, x) = f(T - x) peaks at x = 0.5, inside the nodes,
    // and wide enough that u varies slowly across the coarsest (k = 4) shell:
    // the linear-in-vol extrapolation only removes the shell-averaging error
    // when the field is well resolved by the shells.
    BoundarySignal h = pulse_signal(Endpoint::Left, L.tg, 1, 0, 0.35, 1.3);
    std::vector<Vec> ev = evaluate_wave(frame, L.gd, h, 0);
    WaveField u = solve_ibvp(L.a, L.v, {h}, L.tg);
    double err = 0.0, scale = 0.0;
    idx = 0;
    for (const auto& loc : frame.nodes) {
        if (!loc.ok) continue;
        cplx oracle = u.u[L.tg.mid()](0, loc.node);
        // n = 1 frames are phases; compare magnitudes and track the worst
        // magnitude error against the field scale.
        err = std::max(err, std::abs(std::abs(ev[idx](0)) - std::abs(oracle)));
        scale = std::max(scale, std::abs(oracle));
        ++idx;
    }
    CHECK(scale > 0.0);
    CHECK(err <= 0.05 * scale);
}

TEST_CASE("default_evaluation_nodes: inside the domain of influence and margins") {
    const Lab& L = lab();
    std::vector<int> nodes = default_evaluation_nodes(L.g, L.tg, 8, 4);
    REQUIRE(!nodes.empty());
    double margin = 3.0 * L.g.h() * 8.0;
    for (int node : nodes) {
        double x = L.g.x(node);
        CHECK(x >= margin - 1e-12);
        CHECK(x <= L.g.L - margin + 1e-12);
        CHECK(std::min(x, L.g.L - x) <= L.tg.T() - 0.05 * L.g.L + 1e-12);
    }
}
