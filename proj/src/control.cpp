#include "bcl/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace bcl {

namespace {

constexpr double kTimeTol = 1e-12;

/// Least-squares linear fit y = b + m * t; returns the intercept b (t -> 0).
Mat extrapolate_linear(const std::vector<double>& ts, const std::vector<Mat>& ys) {
    const int m = static_cast<int>(ts.size());
    if (m == 1) return ys[0];
    double st = 0.0, stt = 0.0;
    for (double t : ts) {
        st += t;
        stt += t * t;
    }
    double det = m * stt - st * st;
    Mat sy = Mat::Zero(ys[0].rows(), ys[0].cols());
    Mat sty = sy;
    for (int i = 0; i < m; ++i) {
        sy += ys[i];
        sty += ts[i] * ys[i];
    }
    return (stt * sy - st * sty) / det;
}

/// Pseudo-inverse square root of a Hermitian PSD Gram (eigenvalue cutoff
/// relative to the largest), used to whiten the small-family cross table.
/// Magnitude-only inverse of a delta-action estimate: with the polar split
/// A = Q H (Q unitary, H Hermitian positive) this is Q H^{-1} Q^H, equal to
/// U diag(1/sigma) U^H from the SVD A = U diag(sigma) V^H. It removes the
/// plateau-taper deficit from evaluations while preserving their fiber
/// orientation (dividing by the full A would undo the frame registration).
/// Singular values are floored so a degenerate estimate cannot blow up.
Mat action_correction(const Mat& a, double floor_frac = 0.25) {
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullU);
    RVec s = svd.singularValues();
    double top = std::max(s(0), 1e-300);
    Vec inv(s.size());
    for (int i = 0; i < s.size(); ++i)
        inv(i) = 1.0 / std::max(s(i), floor_frac * top);
    return svd.matrixU() * inv.asDiagonal() * svd.matrixU().adjoint();
}

Mat whitener(const Mat& g_small) {
    Eigen::SelfAdjointEigenSolver<Mat> es(herm_part(g_small));
    RVec lam = es.eigenvalues();
    double cut = 1e-12 * std::max(lam(lam.size() - 1), 0.0);
    Mat w = Mat::Zero(g_small.rows(), g_small.cols());
    for (int i = 0; i < lam.size(); ++i)
        if (lam(i) > cut && cut > 0.0)
            w += es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint() /
                 std::sqrt(lam(i));
    return w;
}

/// Generalized eigenproblem (C^H C + a I) c = mu (G + a I) c with C the
/// whitened cross table; all eigenpairs ascending in mu.
void solve_pencil(const Mat& g_big, const Mat& g_small, const Mat& c_small_big, double alpha,
                  RVec& mu, Mat& vecs) {
    const int m = static_cast<int>(g_big.rows());
    Mat num = alpha * Mat::Identity(m, m);
    if (c_small_big.rows() > 0) {
        Mat c_white = whitener(g_small) * c_small_big;
        num += c_white.adjoint() * c_white;
    }
    Mat den = g_big + alpha * Mat::Identity(m, m);
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(num, den);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("tikhonov_project: generalized eigensolver failed");
    mu = es.eigenvalues();
    vecs = es.eigenvectors();
}

BoundarySignal shift_signal(const BoundarySignal& s, int steps) {
    BoundarySignal out(s.endpoint, s.rank(), s.nt());
    for (int j = steps; j < s.nt(); ++j)
        if (j - steps >= 0) out.samples.col(j) = s.samples.col(j - steps);
    return out;
}

}  // namespace

InfluenceDomain influence_domain(const Grid1D& g, const std::vector<Endpoint>& gamma,
                                 const std::vector<double>& radii) {
    if (gamma.size() != radii.size())
        throw std::invalid_argument("influence_domain: gamma/radii size mismatch");
    std::vector<std::pair<double, double>> raw;
    for (std::size_t i = 0; i < gamma.size(); ++i) {
        double r = std::max(0.0, radii[i]);
        if (r == 0.0) continue;
        if (gamma[i] == Endpoint::Left)
            raw.emplace_back(0.0, std::min(r, g.L));
        else
            raw.emplace_back(std::max(0.0, g.L - r), g.L);
    }
    std::sort(raw.begin(), raw.end());
    InfluenceDomain dom;
    for (auto& iv : raw) {
        if (!dom.intervals.empty() && iv.first <= dom.intervals.back().second)
            dom.intervals.back().second = std::max(dom.intervals.back().second, iv.second);
        else
            dom.intervals.push_back(iv);
    }
    return dom;
}

std::vector<int> SourceBasis::select(Endpoint ep, double radius) const {
    const double t_min = tg.T() - radius;
    std::vector<int> ids;
    for (int p = 0; p < size(); ++p)
        if (members[p].ep == ep && members[p].t_lo >= t_min - kTimeTol) ids.push_back(p);
    return ids;
}

Vec SourceBasis::combine(const std::vector<int>& ids, const Vec& coeff) const {
    if (static_cast<int>(ids.size()) != coeff.size())
        throw std::invalid_argument("SourceBasis::combine: size mismatch");
    Vec out = Vec::Zero(columns.rows());
    for (std::size_t i = 0; i < ids.size(); ++i) out += coeff(i) * columns.col(ids[i]);
    return out;
}

SourceBasis make_hat_basis(const DtnOperator& layout, int stride, double t_min) {
    if (stride < 1) throw std::invalid_argument("make_hat_basis: stride must be >= 1");
    SourceBasis b;
    b.grid = layout.grid;
    b.tg = layout.tg;
    b.n = layout.n;
    b.gamma = layout.gamma;
    b.stride = stride;

    const int mid = layout.tg.mid();
    // Smooth bumps of width proportional to the stride: sharp (grid-scale)
    // controls disperse badly in the leapfrog scheme and smear the localizer
    // waves far behind the wave front. sigma = stride steps, support 2.5 sigma.
    const int wid = std::max(2, static_cast<int>(std::lround(1.25 * stride)));
    // Centers anchored at the T end of the window so radius cutoffs align.
    std::vector<int> centers;
    for (int c = mid - wid; c - wid >= 1 && layout.tg.t(c - wid) > t_min + kTimeTol; c -= stride)
        centers.push_back(c);
    std::sort(centers.begin(), centers.end());
    if (centers.empty()) throw std::invalid_argument("make_hat_basis: empty time window");

    std::vector<Vec> cols;
    for (int ep = 0; ep < layout.channels(); ++ep)
        for (int c : centers)
            for (int k = 0; k < layout.n; ++k) {
                SourceBasis::Member mem;
                mem.ep = layout.gamma[ep];
                mem.center = c;
                mem.fiber = k;
                mem.t_lo = layout.tg.t(c - wid);
                mem.t_hi = layout.tg.t(c + wid);
                b.members.push_back(mem);
                Vec col = Vec::Zero(layout.size());
                for (int j = -wid; j <= wid; ++j) {
                    double s = 2.0 * j / stride;
                    double taper = std::cos(0.5 * M_PI * j / (wid + 1.0));  // clean cutoff
                    col(layout.index(ep, c + j, k)) = std::exp(-0.5 * s * s) * taper * taper;
                }
                cols.push_back(std::move(col));
            }
    b.columns.resize(layout.size(), static_cast<int>(cols.size()));
    for (std::size_t p = 0; p < cols.size(); ++p) b.columns.col(static_cast<int>(p)) = cols[p];
    return b;
}

ReferenceSet make_reference_set(const DtnOperator& layout, const std::vector<double>& offsets,
                                double width, int ntau, int dtau_steps) {
    if (offsets.empty() || ntau < 1 || dtau_steps < 1)
        throw std::invalid_argument("make_reference_set: bad parameters");
    ReferenceSet refs;
    refs.ntau = ntau;
    refs.dtau_steps = dtau_steps;
    const double T = layout.tg.T();
    for (int ep = 0; ep < layout.channels(); ++ep)
        for (int k = 0; k < layout.n; ++k)
            for (double off : offsets) {
                if (off < width || off > T)
                    throw std::invalid_argument("make_reference_set: offset outside (width, T)");
                refs.sources.push_back(
                    pulse_signal(layout.gamma[ep], layout.tg, layout.n, k, T - off, width));
            }
    refs.nq = static_cast<int>(refs.sources.size());
    double t_last = T - *std::min_element(offsets.begin(), offsets.end()) + width +
                    (ntau - 1) * dtau_steps * layout.tg.dt();
    if (t_last > T + kTimeTol)
        throw std::invalid_argument("make_reference_set: shifted supports leave (0, T)");
    refs.cols.resize(layout.size(), refs.nq * ntau);
    for (int itau = 0; itau < ntau; ++itau)
        for (int q = 0; q < refs.nq; ++q)
            refs.cols.col(refs.col(q, itau)) =
                layout.stack({shift_signal(refs.sources[q], itau * dtau_steps)});
    return refs;
}

TikhonovResult tikhonov_project(const GramTable& g_big, const Mat& g_small,
                                const Mat& c_small_big, double alpha, double target_norm2) {
    if (!(alpha > 0.0)) throw std::invalid_argument("tikhonov_project: alpha must be > 0");
    if (c_small_big.cols() > 0 && c_small_big.cols() != g_big.g.cols())
        throw std::invalid_argument("tikhonov_project: cross table shape mismatch");
    if (c_small_big.rows() != g_small.rows())
        throw std::invalid_argument("tikhonov_project: small Gram shape mismatch");
    RVec mu;
    Mat vecs;
    solve_pencil(g_big.g, g_small, c_small_big, alpha, mu, vecs);

    TikhonovResult res;
    res.leakage = mu(0);
    res.coeff = vecs.col(0);
    double norm2 = std::real(res.coeff.dot(g_big.g * res.coeff));
    if (norm2 <= 0.0) {
        res.localizable = false;
        return res;
    }
    res.coeff *= std::sqrt(target_norm2 / norm2);
    res.localizable = res.leakage <= 0.5;
    return res;
}

GramData make_gram_data(const ConnectingOperator& conn, const SourceBasis& basis,
                        const ReferenceSet& refs) {
    GramData gd;
    gd.conn = &conn;
    gd.basis = &basis;
    gd.refs = &refs;
    const int m = basis.size();
    Mat joint(basis.columns.rows(), m + refs.cols.cols());
    joint.leftCols(m) = basis.columns;
    joint.rightCols(refs.cols.cols()) = refs.cols;
    Mat raw = conn.gram_matrix(basis.columns, joint);
    gd.g_full = make_gram_table(raw.leftCols(m));
    gd.cross_refs = raw.rightCols(refs.cols.cols());
    return gd;
}

std::vector<int> default_evaluation_nodes(const Grid1D& g, const TimeGrid& tg, int k_max,
                                          int stride) {
    const double margin = 3.0 * g.h() * k_max;
    const double reach = tg.T() - 0.05 * g.L;
    std::vector<int> nodes;
    for (int i = stride; i < g.nx - 1; i += stride) {
        double x = g.x(i);
        if (x < margin - kTimeTol || x > g.L - margin + kTimeTol) continue;
        if (std::min(x, g.L - x) > reach) continue;
        nodes.push_back(i);
    }
    return nodes;
}

Localizer build_localizer(const GramData& gd, int grid_node, const ControlSchedule& sched) {
    const SourceBasis& basis = *gd.basis;
    const ReferenceSet& refs = *gd.refs;
    const Grid1D& g = basis.grid;
    const int n = basis.n;
    const double T = basis.tg.T();

    Localizer loc;
    loc.node = grid_node;
    loc.x = g.x(grid_node);

    bool has_left = false, has_right = false;
    for (Endpoint e : basis.gamma) (e == Endpoint::Left ? has_left : has_right) = true;
    double d_left = loc.x, d_right = g.L - loc.x;
    if (has_left && (!has_right || d_left <= d_right)) {
        loc.near = Endpoint::Left;
        loc.s = d_left;
    } else {
        loc.near = Endpoint::Right;
        loc.s = d_right;
    }
    if (!(loc.s < T)) {
        loc.ok = false;
        loc.error = "point outside the controllable set d(x, Gamma) < T";
        return loc;
    }
    Endpoint far = loc.near == Endpoint::Left ? Endpoint::Right : Endpoint::Left;
    bool has_far = loc.near == Endpoint::Left ? has_right : has_left;

    // Reference columns per fiber, sorted by how far the column's wave center
    // sits from the node, plus each source's amplitude profile re-read as a
    // profile in depth (unit speed: samples emitted earlier travel deeper).
    // Each k slot fits the localizer against the columns near its shell with
    // a per-column target equal to the pulse's mass fraction inside the
    // shell — the overlap a flat plateau filling the shell would produce.
    // Seeding with a single narrow column would concentrate the localizer
    // into a spike whose delta action underestimates smooth sections, and a
    // seed window that does not scale with the shell leaves the wider slots
    // underfilled, which spoils the 1/k extrapolation.
    struct SeedCol {
        double gap;   // |depth - s|
        double depth; // wave center depth of the column
        int q;
        int col;
        bool operator<(const SeedCol& o) const { return gap < o.gap; }
    };
    std::vector<std::vector<SeedCol>> depth_cols(n);
    std::vector<int> src_jpeak(refs.nq, -1);
    std::vector<RVec> src_rho(refs.nq);
    std::vector<double> pmass(n, 0.0); // pulse mass per fiber, ∫|f| dt
    double pulse_hw = 0.0; // half-width of the reference pulses' support
    for (int k = 0; k < n; ++k) {
        for (int q = 0; q < refs.nq; ++q) {
            const BoundarySignal& src = refs.sources[q];
            if (src.endpoint != loc.near) continue;
            int fib = 0;
            double peak = -1.0;
            int jpeak = 0;
            for (int kk = 0; kk < n; ++kk)
                if (src.samples.row(kk).cwiseAbs().maxCoeff() > 0.0) fib = kk;
            RVec rho(src.nt());
            for (int j = 0; j < src.nt(); ++j) {
                double v = src.samples.col(j).cwiseAbs().maxCoeff();
                rho(j) = v;
                if (v > peak) {
                    peak = v;
                    jpeak = j;
                }
            }
            if (fib != k) continue;
            src_jpeak[q] = jpeak;
            src_rho[q] = rho;
            if (!(pmass[k] > 0.0)) pmass[k] = rho.sum() * basis.tg.dt();
            int j_lo = src.nt(), j_hi = -1;
            for (int j = 0; j < src.nt(); ++j)
                if (rho(j) > 1e-3 * peak) {
                    j_lo = std::min(j_lo, j);
                    j_hi = std::max(j_hi, j);
                }
            pulse_hw = std::max(pulse_hw, 0.5 * (j_hi - j_lo) * basis.tg.dt());
            double depth0 = T - basis.tg.t(jpeak);
            for (int itau = 0; itau < refs.ntau; ++itau) {
                double depth = depth0 - itau * refs.dtau_steps * basis.tg.dt();
                depth_cols[k].push_back(
                    {std::abs(depth - loc.s), depth, q, refs.col(q, itau)});
            }
        }
        if (depth_cols[k].empty()) {
            loc.ok = false;
            loc.error = "no near-endpoint reference source for fiber alignment";
            return loc;
        }
        std::sort(depth_cols[k].begin(), depth_cols[k].end());
    }
    // mass fraction of a column's pulse inside [s - vol/2, s + vol/2]
    auto shell_fraction = [&](const SeedCol& sc, double vol) {
        const RVec& rho = src_rho[sc.q];
        double total = 0.0, inside = 0.0;
        for (int j = 0; j < rho.size(); ++j) {
            double x = sc.depth + (src_jpeak[sc.q] - j) * basis.tg.dt();
            total += rho(j);
            if (std::abs(x - loc.s) <= 0.5 * vol) inside += rho(j);
        }
        return total > 0.0 ? inside / total : 0.0;
    };
    // Per-fiber reference columns sorted by depth, for the trapezoid
    // estimate of each slot's delta action.
    std::vector<std::vector<SeedCol>> by_depth = depth_cols;
    for (int l = 0; l < n; ++l)
        std::sort(by_depth[l].begin(), by_depth[l].end(),
                  [](const SeedCol& a, const SeedCol& b) { return a.depth < b.depth; });

    double gram_scale = std::max(std::real(gd.g_full.g.diagonal().mean()), 1e-300);

    std::vector<double> inv_ks;
    std::vector<Mat> r_slots;
    std::vector<double> pair_abscissa;
    std::vector<Mat> pair_grams;

    for (int k : sched.ks) {
        Localizer::KSlot slot;
        slot.k = k;
        slot.vol = 1.0 / k;
        // Shell centered on the node: X_k = M(s + 1/2k) \ M(s - 1/2k). A
        // one-sided shell [s, s + 1/k] biases the localizer wave towards the
        // shell middle (the basis members' own width spoils the inner edge),
        // and that bias does not vanish under the 1/k extrapolation.
        double r_big = loc.s + 0.5 * slot.vol;
        if (r_big > T) {
            loc.ok = false;
            loc.error = "shell radius exceeds the time horizon";
            return loc;
        }
        slot.big_ids = basis.select(loc.near, r_big);

        // Seed columns for this slot: every column whose pulse carries
        // appreciable mass inside the shell, with the mass fraction as the
        // fit target. Edge pulses straddling the shell boundary get reduced
        // targets — demanding full overlap there would drag energy outside.
        std::vector<std::vector<int>> seed_cols(n);
        std::vector<std::vector<double>> seed_frac(n);
        for (int l = 0; l < n; ++l) {
            for (const SeedCol& sc : depth_cols[l]) {
                if (sc.gap > 0.5 * slot.vol + pulse_hw) continue;
                double f = shell_fraction(sc, slot.vol);
                if (f < 0.05) continue;
                seed_cols[l].push_back(sc.col);
                seed_frac[l].push_back(f);
            }
            if (seed_cols[l].empty()) {
                seed_cols[l].push_back(depth_cols[l].front().col);
                seed_frac[l].push_back(1.0);
            }
        }
        std::vector<int> small_ids;
        if (loc.s - 0.5 * slot.vol > 0.0)
            small_ids = basis.select(loc.near, loc.s - 0.5 * slot.vol);
        if (has_far) {
            double r_far = g.L - loc.s - 0.5 * slot.vol;
            if (r_far > 0.0) {
                for (int id : basis.select(far, r_far)) small_ids.push_back(id);
            }
        }
        const int mb = static_cast<int>(slot.big_ids.size());
        if (mb < sched.subspace) {
            loc.ok = false;
            loc.error = "big source set too small for the requested subspace";
            return loc;
        }

        Mat g_sub(mb, mb);
        for (int p = 0; p < mb; ++p)
            for (int pp = 0; pp < mb; ++pp)
                g_sub(p, pp) = gd.g_full.g(slot.big_ids[p], slot.big_ids[pp]);
        const int ms = static_cast<int>(small_ids.size());
        Mat g_ss(ms, ms);
        for (int i = 0; i < ms; ++i)
            for (int ii = 0; ii < ms; ++ii)
                g_ss(i, ii) = gd.g_full.g(small_ids[i], small_ids[ii]);
        Mat c_sub(ms, mb);
        for (int i = 0; i < ms; ++i)
            for (int p = 0; p < mb; ++p)
                c_sub(i, p) = gd.g_full.g(small_ids[i], slot.big_ids[p]);

        // alpha ladder + discrepancy rule on the leakage of the lowest mode
        std::vector<double> leaks;
        for (double al : sched.alphas) {
            RVec mu;
            Mat vecs;
            solve_pencil(g_sub, g_ss, c_sub, al * gram_scale, mu, vecs);
            leaks.push_back(mu(0));
        }
        double leak_min = *std::min_element(leaks.begin(), leaks.end());
        int pick = 0;
        for (std::size_t i = 0; i < leaks.size(); ++i)
            if (leaks[i] <= sched.leak_factor * leak_min) {
                pick = static_cast<int>(i);
                break;  // ladder is descending; first hit is the largest alpha
            }
        slot.alpha = sched.alphas[pick] * gram_scale;
        slot.leakage = leaks[pick];
        if (slot.leakage > sched.not_localizable) {
            loc.ok = false;
            std::ostringstream msg;
            msg << "not localizable at k=" << k << ": leakage " << slot.leakage;
            loc.error = msg.str();
            return loc;
        }

        RVec mu;
        Mat vecs;
        solve_pencil(g_sub, g_ss, c_sub, slot.alpha, mu, vecs);
        // The candidate subspace must be able to span a plateau filling the
        // whole shell, so it grows with the number of near-side basis members
        // between the inner and outer control radii; sched.subspace is the
        // floor used for the thinnest shells.
        int near_small = 0;
        for (int id : small_ids)
            if (basis.members[id].ep == loc.near) ++near_small;
        int in_shell = mb - near_small;
        const int msub = std::min(std::max(sched.subspace, in_shell), mb);
        Mat cand = vecs.leftCols(msub);

        // Equal-action plateau: within the low-leakage candidate span, take
        // the minimum-energy wave with EQUAL overlap against every seed pulse
        // tiling the shell (the pencil alone fixes the norm but not the
        // shape, an oscillatory wave has no delta action against smooth
        // sections, and an unconstrained least-squares fit favors whichever
        // pulses the span reproduces easily, denting the plateau). Afterwards
        // Loewdin-orthonormalize in the vol-weighted wave metric so that
        // vol * <w_i, w_j> = Id.
        Mat m_wave = slot.vol * (cand.adjoint() * g_sub * cand);
        // Candidates whose wave norm is eaten by the alpha ball have tiny
        // m_wave eigenvalues and must not be amplified.
        Mat m_reg = m_wave + (1e-2 * std::abs(m_wave.trace()) / msub) *
                                 Mat::Identity(msub, msub);
        Mat z(msub, n);
        for (int l = 0; l < n; ++l) {
            const int nc = static_cast<int>(seed_cols[l].size());
            Mat bl(msub, nc);
            for (int j = 0; j < nc; ++j)
                for (int p = 0; p < msub; ++p) {
                    cplx acc = 0.0;
                    for (int pp = 0; pp < mb; ++pp)
                        acc += std::conj(cand(pp, p)) *
                               gd.cross_refs(slot.big_ids[pp], seed_cols[l][j]);
                    bl(p, j) = acc;
                }
            Vec f(nc);
            for (int j = 0; j < nc; ++j) f(j) = seed_frac[l][j];
            z.col(l) = m_reg.ldlt().solve(bl * f);
        }
        Mat s = z.adjoint() * m_wave * z;
        Eigen::SelfAdjointEigenSolver<Mat> es(herm_part(s));
        RVec nu = es.eigenvalues();
        if (!(nu(0) > 1e-10 * std::max(nu(n - 1), 0.0)) || !(nu(n - 1) > 0.0)) {
            loc.ok = false;
            loc.error = "rank-deficient localizer subspace";
            return loc;
        }
        Mat s_inv_half = Mat::Zero(n, n);
        for (int i = 0; i < n; ++i)
            s_inv_half += es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint() /
                          std::sqrt(nu(i));
        Mat d = cand * (z * s_inv_half);

        // mixing/phase pinned against the reference waves (polar alignment)
        Mat cross_align(n, n);
        for (int i = 0; i < n; ++i)
            for (int l = 0; l < n; ++l) {
                cplx acc = 0.0;
                for (int col : seed_cols[l])
                    for (int p = 0; p < mb; ++p)
                        acc += std::conj(d(p, i)) * gd.cross_refs(slot.big_ids[p], col);
                cross_align(i, l) = acc;
            }
        Mat omega = polar_unitary(cross_align);
        slot.coeffs = d * omega;

        slot.r.resize(n, refs.cols.cols());
        for (int col = 0; col < refs.cols.cols(); ++col)
            for (int l = 0; l < n; ++l) {
                cplx acc = 0.0;
                for (int p = 0; p < mb; ++p)
                    acc += std::conj(slot.coeffs(p, l)) * gd.cross_refs(slot.big_ids[p], col);
                slot.r(l, col) = acc;
            }
        // Delta action of the slot against the reference pulses: a trapezoid
        // in depth over the tau-tiled columns of fiber m, normalized by the
        // pulse mass. The plateau's taper (pulse + basis member width) does
        // not shrink with the shell, so raw evaluations underestimate point
        // values by this matrix; the r table and evaluate_wave apply its
        // inverse.
        slot.action = Mat::Identity(n, n);
        bool act_ok = true;
        for (int m2 = 0; m2 < n && act_ok; ++m2) {
            const auto& dl = by_depth[m2];
            if (!(pmass[m2] > 0.0) || dl.size() < 2) {
                act_ok = false;
                break;
            }
            for (int l = 0; l < n; ++l) {
                cplx acc = 0.0;
                for (std::size_t j = 0; j < dl.size(); ++j) {
                    double dd = j == 0 ? dl[1].depth - dl[0].depth
                                : j + 1 == dl.size()
                                    ? dl[j].depth - dl[j - 1].depth
                                    : 0.5 * (dl[j + 1].depth - dl[j - 1].depth);
                    acc += dd * slot.r(l, dl[j].col);
                }
                slot.action(l, m2) = acc / pmass[m2];
            }
        }
        if (act_ok) slot.r = action_correction(slot.action) * slot.r;
        // node Gram of the Loewdin-orthonormalized localizer waves at this k,
        // recomputed from the coefficient tables (identity up to round-off)
        slot.node_gram = slot.vol * (slot.coeffs.adjoint() * g_sub * slot.coeffs);

        inv_ks.push_back(slot.vol);
        r_slots.push_back(slot.r);
        pair_abscissa.push_back(slot.vol);
        pair_grams.push_back(slot.node_gram);
        loc.slots.push_back(std::move(slot));
    }

    loc.r = extrapolate_linear(inv_ks, r_slots);
    loc.node_gram = extrapolate_linear(pair_abscissa, pair_grams);
    loc.gram_dev = (loc.node_gram - Mat::Identity(n, n)).norm();
    return loc;
}

namespace {

/// Boundary evaluation table: Wh(x) = h(T - tau, x) for x on Gamma.
Mat boundary_table(const ReferenceSet& refs, const TimeGrid& tg, int n, Endpoint ep) {
    Mat r = Mat::Zero(n, refs.nq * refs.ntau);
    for (int itau = 0; itau < refs.ntau; ++itau)
        for (int q = 0; q < refs.nq; ++q) {
            if (refs.sources[q].endpoint != ep) continue;
            int j = tg.mid() - itau * refs.dtau_steps;
            if (j >= 0) r.col(refs.col(q, itau)) = refs.sources[q].samples.col(j);
        }
    return r;
}

void apply_transform(Localizer& loc, const Mat& t) {
    loc.r = t * loc.r;
    loc.node_gram = t * loc.node_gram * t.adjoint();
    for (auto& slot : loc.slots) {
        slot.r = t * slot.r;
        slot.coeffs = slot.coeffs * t.adjoint();
        slot.action = t * slot.action;
        slot.node_gram = t * slot.node_gram * t.adjoint();
    }
}

}  // namespace

FrameData build_frame(const GramData& gd, const std::vector<int>& grid_nodes,
                      const ControlSchedule& sched) {
    const SourceBasis& basis = *gd.basis;
    FrameData frame;
    frame.grid = basis.grid;
    frame.tg = basis.tg;
    frame.n = basis.n;
    frame.nq = gd.refs->nq;
    frame.ntau = gd.refs->ntau;
    frame.dtau_steps = gd.refs->dtau_steps;
    frame.r_left = boundary_table(*gd.refs, basis.tg, basis.n, Endpoint::Left);
    frame.r_right = boundary_table(*gd.refs, basis.tg, basis.n, Endpoint::Right);

    for (int node : grid_nodes) frame.nodes.push_back(build_localizer(gd, node, sched));
    std::sort(frame.nodes.begin(), frame.nodes.end(),
              [](const Localizer& a, const Localizer& b) { return a.node < b.node; });

    // Left-to-right chain registration. Every node frame is already pinned
    // deterministically by reference positivity (the reference sources vanish
    // near t = T on the boundary itself, so the boundary tables cannot pin
    // the chain); the first node keeps its intrinsic frame and each later
    // node is rotated to match its predecessor's table.
    const Mat* prev = nullptr;
    frame.end_mismatch = Mat::Identity(frame.n, frame.n);
    for (auto& loc : frame.nodes) {
        if (!loc.ok) continue;
        Mat reg = prev ? polar_unitary(loc.r * prev->adjoint())
                       : Mat(Mat::Identity(frame.n, frame.n));
        frame.registration.push_back(reg);
        apply_transform(loc, reg.adjoint());
        // total rotation the chain applied relative to the intrinsic pinning
        frame.end_mismatch = reg.adjoint() * frame.end_mismatch;
        prev = &loc.r;
    }
    return frame;
}

std::vector<Vec> evaluate_wave(const FrameData& frame, const GramData& gd,
                               const BoundarySignal& h, int tau_steps) {
    const SourceBasis& basis = *gd.basis;
    if (tau_steps < 0 || h.nt() != basis.tg.nt || h.rank() != basis.n)
        throw std::invalid_argument("evaluate_wave: bad source/shift");
    for (int j = basis.tg.nt - tau_steps; j < basis.tg.nt; ++j)
        if (j >= 0 && h.samples.col(j).cwiseAbs().maxCoeff() > 0.0)
            throw std::invalid_argument("evaluate_wave: shift pushes support outside the window");

    Vec stacked = gd.conn->dtn().stack({shift_signal(h, tau_steps)});
    Mat cross = gd.conn->gram_matrix(basis.columns, stacked);  // m x 1

    std::vector<Vec> out;
    for (const auto& loc : frame.nodes) {
        if (!loc.ok) {
            out.push_back(Vec::Zero(frame.n));
            continue;
        }
        std::vector<double> ts;
        std::vector<Mat> vals;
        for (const auto& slot : loc.slots) {
            Vec v = Vec::Zero(frame.n);
            for (int l = 0; l < frame.n; ++l)
                for (std::size_t p = 0; p < slot.big_ids.size(); ++p)
                    v(l) += std::conj(slot.coeffs(static_cast<int>(p), l)) *
                            cross(slot.big_ids[p], 0);
            if (slot.action.rows() == frame.n) v = action_correction(slot.action) * v;
            ts.push_back(slot.vol);
            vals.push_back(v);
        }
        out.push_back(extrapolate_linear(ts, vals));
    }
    return out;
}

// ---- oracle twins --------------------------------------------------------

namespace {

SectionField simulate_final_state(const ConnectionField& a, const PotentialField& v,
                                  const SourceBasis& basis, const Vec& stacked) {
    const int nt = basis.tg.nt;
    const int n = basis.n;
    std::vector<BoundarySignal> sources;
    for (int ep = 0; ep < static_cast<int>(basis.gamma.size()); ++ep) {
        BoundarySignal s(basis.gamma[ep], n, nt);
        for (int j = 0; j < nt; ++j)
            for (int k = 0; k < n; ++k) s.samples(k, j) = stacked((ep * nt + j) * n + k);
        sources.push_back(std::move(s));
    }
    WaveField w = solve_ibvp(a, v, sources, basis.tg);
    return final_state(w);
}

}  // namespace

double oracle_tikhonov_residual(const ConnectionField& a, const PotentialField& v,
                                const SourceBasis& basis, double radius,
                                const SectionField& target, double alpha) {
    std::vector<int> ids;
    for (Endpoint ep : basis.gamma)
        for (int id : basis.select(ep, radius)) ids.push_back(id);
    if (ids.empty()) throw std::invalid_argument("oracle_tikhonov_residual: empty source set");
    std::sort(ids.begin(), ids.end());

    std::vector<SectionField> waves;
    for (int id : ids)
        waves.push_back(simulate_final_state(a, v, basis, basis.columns.col(id)));

    const int m = static_cast<int>(ids.size());
    Mat gram(m, m);
    Vec data(m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) gram(i, j) = section_inner(waves[i], waves[j]);
        data(i) = section_inner(waves[i], target);
    }
    double scale = std::real(gram.diagonal().mean());
    Vec c = (gram + alpha * scale * Mat::Identity(m, m)).ldlt().solve(data);

    SectionField fit(basis.grid, basis.n);
    for (int i = 0; i < m; ++i)
        for (int node = 0; node < basis.grid.nx; ++node)
            fit.values[node] += c(i) * waves[i].values[node];
    double num = 0.0, den = 0.0;
    for (int node = 0; node < basis.grid.nx; ++node) {
        double wgt = (node == 0 || node == basis.grid.nx - 1) ? 0.5 : 1.0;
        num += wgt * (fit.values[node] - target.values[node]).squaredNorm();
        den += wgt * target.values[node].squaredNorm();
    }
    if (den <= 0.0) throw std::invalid_argument("oracle_tikhonov_residual: zero target");
    return std::sqrt(num / den);
}

double oracle_exterior_mass(const ConnectionField& a, const PotentialField& v,
                            const SourceBasis& basis, const Localizer& loc, int k, double pad) {
    const Localizer::KSlot* slot = nullptr;
    for (const auto& s : loc.slots)
        if (s.k == k) slot = &s;
    if (!slot) throw std::invalid_argument("oracle_exterior_mass: no slot for this k");

    Vec stacked = Vec::Zero(basis.columns.rows());
    for (std::size_t p = 0; p < slot->big_ids.size(); ++p)
        stacked += slot->coeffs(static_cast<int>(p), 0) * basis.columns.col(slot->big_ids[p]);
    SectionField wf = simulate_final_state(a, v, basis, stacked);

    double lo, hi;
    if (loc.near == Endpoint::Left) {
        lo = loc.s - 0.5 * slot->vol - pad;
        hi = loc.s + 0.5 * slot->vol + pad;
    } else {
        lo = basis.grid.L - loc.s - 0.5 * slot->vol - pad;
        hi = basis.grid.L - loc.s + 0.5 * slot->vol + pad;
    }
    double inside = 0.0, total = 0.0;
    for (int i = 0; i < basis.grid.nx; ++i) {
        double wgt = (i == 0 || i == basis.grid.nx - 1) ? 0.5 : 1.0;
        double m2 = wgt * wf.values[i].squaredNorm();
        total += m2;
        double x = basis.grid.x(i);
        if (x >= lo && x <= hi) inside += m2;
    }
    if (total <= 0.0) return 1.0;
    return (total - inside) / total;
}

}  // namespace bcl
