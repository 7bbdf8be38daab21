#include "bcl/recon.hpp"

#include "bcl/bundle.hpp"

#include <cmath>
#include <fstream>

namespace bcl {

namespace {

void require_uniform(const std::vector<int>& nodes) {
    if (nodes.size() < 2) throw std::invalid_argument("wave table: need >= 2 nodes");
    int stride = nodes[1] - nodes[0];
    if (stride < 1) throw std::invalid_argument("wave table: nodes must be increasing");
    for (std::size_t i = 1; i < nodes.size(); ++i)
        if (nodes[i] - nodes[i - 1] != stride)
            throw std::invalid_argument("wave table: node lattice not uniform");
}

/// Real basis of skew-Hermitian n x n matrices, n^2 members.
std::vector<Mat> skew_basis(int n) {
    std::vector<Mat> basis;
    for (int k = 0; k < n; ++k) {
        Mat s = Mat::Zero(n, n);
        s(k, k) = cplx(0.0, 1.0);
        basis.push_back(s);
    }
    for (int k = 0; k < n; ++k)
        for (int l = k + 1; l < n; ++l) {
            Mat s = Mat::Zero(n, n);
            s(k, l) = 1.0;
            s(l, k) = -1.0;
            basis.push_back(s);
            s.setZero();
            s(k, l) = cplx(0.0, 1.0);
            s(l, k) = cplx(0.0, 1.0);
            basis.push_back(s);
        }
    return basis;
}

}  // namespace

WaveTable assemble_wave_table(const FrameData& frame) {
    WaveTable t;
    t.n = frame.n;
    t.nq = frame.nq;
    t.ntau = frame.ntau;
    t.dtau = frame.dtau_steps * frame.tg.dt();
    std::vector<const Localizer*> ok;
    for (const auto& loc : frame.nodes)
        if (loc.ok) ok.push_back(&loc);
    if (ok.size() < 3) throw std::runtime_error("assemble_wave_table: too few usable nodes");
    for (const auto* loc : ok) {
        t.nodes.push_back(loc->node);
        t.x.push_back(loc->x);
    }
    require_uniform(t.nodes);
    t.dx = t.x[1] - t.x[0];
    t.values.assign(t.ntau, std::vector<Mat>(ok.size(), Mat::Zero(t.n, t.nq)));
    for (int itau = 0; itau < t.ntau; ++itau)
        for (std::size_t j = 0; j < ok.size(); ++j)
            for (int q = 0; q < t.nq; ++q)
                t.values[itau][j].col(q) = ok[j]->r.col(itau * t.nq + q);
    return t;
}

WaveTable oracle_wave_table(const ConnectionField& a, const PotentialField& v,
                            const ReferenceSet& refs, const TimeGrid& tg,
                            const std::vector<int>& nodes) {
    require_uniform(nodes);
    WaveTable t;
    t.n = a.n;
    t.nq = refs.nq;
    t.ntau = refs.ntau;
    t.dtau = refs.dtau_steps * tg.dt();
    t.nodes = nodes;
    for (int node : nodes) t.x.push_back(a.grid.x(node));
    t.dx = t.x[1] - t.x[0];
    t.values.assign(t.ntau, std::vector<Mat>(nodes.size(), Mat::Zero(t.n, t.nq)));
    for (int q = 0; q < t.nq; ++q) {
        WaveField w = solve_ibvp(a, v, {refs.sources[q]}, tg);
        for (int itau = 0; itau < t.ntau; ++itau) {
            int jt = tg.mid() - itau * refs.dtau_steps;
            if (jt < 0) throw std::invalid_argument("oracle_wave_table: shift before t = 0");
            for (std::size_t j = 0; j < nodes.size(); ++j)
                t.values[itau][j].col(q) = w.u[jt].col(nodes[j]);
        }
    }
    return t;
}

ReconResult recover_fields(const WaveTable& table) {
    const int n = table.n;
    const int m = static_cast<int>(table.nodes.size());
    if (table.ntau < 3 || m < 3)
        throw std::invalid_argument("recover_fields: need >= 3 shifts and nodes");

    std::vector<Mat> sbasis = skew_basis(n);
    const int na = static_cast<int>(sbasis.size());  // n^2
    const int nw = 2 * n * n;
    const int nparam = na + nw;

    struct NodeSolve {
        Mat a, w;
        double residual = 0.0, cond = 0.0;
        bool ok = false;
    };
    std::vector<NodeSolve> solves(m);

    for (int j = 1; j + 1 < m; ++j) {
        const int neq = 2 * n * table.nq * (table.ntau - 2);
        RMat sys = RMat::Zero(neq, nparam);
        RVec rhs(neq);
        int row = 0;
        for (int it = 1; it + 1 < table.ntau; ++it)
            for (int q = 0; q < table.nq; ++q) {
                Vec r = table.values[it][j].col(q);
                Vec g = (table.values[it][j + 1].col(q) - table.values[it][j - 1].col(q)) /
                        (2.0 * table.dx);
                Vec dtt = (table.values[it + 1][j].col(q) - 2.0 * r +
                           table.values[it - 1][j].col(q)) /
                          (table.dtau * table.dtau);
                Vec dxx = (table.values[it][j + 1].col(q) - 2.0 * r +
                           table.values[it][j - 1].col(q)) /
                          (table.dx * table.dx);
                Vec y = dtt - dxx;
                for (int k = 0; k < n; ++k) {
                    for (int p = 0; p < na; ++p) {
                        cplx c = 2.0 * (sbasis[p].row(k) * g)(0);
                        sys(row, p) = c.real();
                        sys(row + 1, p) = c.imag();
                    }
                    for (int kk = 0; kk < n; ++kk) {
                        // W entry (k, kk): real part column, imaginary part column
                        int base = na + 2 * (k * n + kk);
                        sys(row, base) = r(kk).real();
                        sys(row + 1, base) = r(kk).imag();
                        sys(row, base + 1) = -r(kk).imag();
                        sys(row + 1, base + 1) = r(kk).real();
                    }
                    rhs(row) = y(k).real();
                    rhs(row + 1) = y(k).imag();
                    row += 2;
                }
            }

        Eigen::BDCSVD<RMat> svd(sys, Eigen::ComputeThinU | Eigen::ComputeThinV);
        RVec sing = svd.singularValues();
        double smin = sing(sing.size() - 1);
        NodeSolve& ns = solves[j];
        ns.cond = smin > 0.0 ? sing(0) / smin : std::numeric_limits<double>::infinity();
        RVec sol = svd.solve(rhs);
        double bn = rhs.norm();
        ns.residual = (sys * sol - rhs).norm() / (bn > 0.0 ? bn : 1.0);
        ns.a = Mat::Zero(n, n);
        for (int p = 0; p < na; ++p) ns.a += sol(p) * sbasis[p];
        ns.w = Mat::Zero(n, n);
        for (int k = 0; k < n; ++k)
            for (int kk = 0; kk < n; ++kk) {
                int base = na + 2 * (k * n + kk);
                ns.w(k, kk) = cplx(sol(base), sol(base + 1));
            }
        ns.ok = std::isfinite(ns.cond) && ns.cond <= 1e8;
    }

    // dA/dx on the solved lattice, matching the forward solver's 4th-order
    // stencil so that V = dA + A^2 - W is discretely consistent with it.
    std::vector<Mat> da(m, Mat::Zero(n, n));
    const int nlat = m - 2;  // solved nodes j = 1 .. m-2
    if (nlat >= 5) {
        Grid1D lat(table.dx * (nlat - 1), nlat);
        std::vector<Mat> alat(nlat);
        for (int j = 0; j < nlat; ++j) alat[j] = solves[j + 1].a;
        std::vector<Mat> dlat = derivative4(lat, alat);
        for (int j = 0; j < nlat; ++j) da[j + 1] = dlat[j];
    } else {
        for (int j = 2; j + 2 < m; ++j)
            da[j] = (solves[j + 1].a - solves[j - 1].a) / (2.0 * table.dx);
    }

    // Edge exclusion: besides the stencil margin, drop lattice nodes closer
    // than ~5 fine cells to the evaluation-region edge.
    int lo = 3, hi = m - 4;
    if (hi - lo < 0) {
        lo = 1;
        hi = m - 2;
    }

    ReconResult res;
    res.n = n;
    for (int j = lo; j <= hi; ++j) {
        if (!solves[j].ok) continue;
        res.nodes.push_back(table.nodes[j]);
        res.x.push_back(table.x[j]);
        res.a_rec.push_back(skew_part(solves[j].a));
        res.w_rec.push_back(solves[j].w);
        Mat v = da[j] + solves[j].a * solves[j].a - solves[j].w;
        res.v_herm_dev.push_back(skew_part(v).norm() / (1.0 + v.norm()));
        res.v_rec.push_back(herm_part(v));
        res.residual.push_back(solves[j].residual);
        res.cond.push_back(solves[j].cond);
    }
    if (res.nodes.empty()) throw std::runtime_error("recover_fields: every node rejected");
    return res;
}

Grid1D ReconResult::subgrid() const {
    if (nodes.size() < 3) throw std::runtime_error("ReconResult: too few nodes for a grid");
    require_uniform(nodes);
    return Grid1D(x.back() - x.front(), static_cast<int>(nodes.size()));
}

ConnectionField ReconResult::connection() const {
    return ConnectionField::make(subgrid(), n, a_rec);
}

PotentialField ReconResult::potential() const { return PotentialField::make(subgrid(), n, v_rec); }

ReconReport recon_report(const ReconResult& r, const ConnectionField* truth_a,
                         const PotentialField* truth_v, double orbit_tol) {
    ReconReport rep;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
        rep.max_residual = std::max(rep.max_residual, r.residual[i]);
        rep.max_cond = std::max(rep.max_cond, r.cond[i]);
        rep.max_v_herm_dev = std::max(rep.max_v_herm_dev, r.v_herm_dev[i]);
    }
    if (truth_a && truth_v) {
        rep.truth_available = true;
        Grid1D sub = r.subgrid();
        std::vector<Mat> ta, tv;
        for (int node : r.nodes) {
            ta.push_back(truth_a->coeff.at(node));
            tv.push_back(truth_v->coeff.at(node));
        }
        ConnectionField truth_sub = ConnectionField::make(sub, r.n, ta);
        PotentialField truth_vsub = PotentialField::make(sub, r.n, tv);
        rep.orbit = gauge_equivalent(r.connection(), r.potential(), truth_sub, truth_vsub,
                                     orbit_tol);
        double amax = 0.0, vmax = 0.0, ascale = 0.0, vscale = 0.0;
        for (std::size_t i = 0; i < r.nodes.size(); ++i) {
            amax = std::max(amax, (r.a_rec[i] - ta[i]).norm());
            vmax = std::max(vmax, (r.v_rec[i] - tv[i]).norm());
            ascale = std::max(ascale, ta[i].norm());
            vscale = std::max(vscale, tv[i].norm());
        }
        rep.a_direct_err = amax / (1.0 + ascale);
        rep.v_direct_err = vmax / (1.0 + vscale);
    }
    return rep;
}

void write_recon_csv(const std::string& path, const ReconResult& r) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_recon_csv: cannot open " + path);
    out << "x";
    for (int a = 0; a < r.n; ++a)
        for (int b = 0; b < r.n; ++b)
            out << ",Re_A" << a << b << ",Im_A" << a << b;
    for (int a = 0; a < r.n; ++a)
        for (int b = 0; b < r.n; ++b)
            out << ",Re_V" << a << b << ",Im_V" << a << b;
    out << ",residual,condition\n";
    out.precision(17);
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
        out << r.x[i];
        for (int a = 0; a < r.n; ++a)
            for (int b = 0; b < r.n; ++b)
                out << ',' << r.a_rec[i](a, b).real() << ',' << r.a_rec[i](a, b).imag();
        for (int a = 0; a < r.n; ++a)
            for (int b = 0; b < r.n; ++b)
                out << ',' << r.v_rec[i](a, b).real() << ',' << r.v_rec[i](a, b).imag();
        out << ',' << r.residual[i] << ',' << r.cond[i] << '\n';
    }
    if (!out) throw std::runtime_error("write_recon_csv: write failed for " + path);
}

}  // namespace bcl
