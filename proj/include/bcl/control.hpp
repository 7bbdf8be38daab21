#pragma once

#include <optional>

#include "bcl/blago.hpp"

namespace bcl {

/// Union of closed subintervals of [0, L] within radius r(endpoint) of the
/// boundary set.
struct InfluenceDomain {
    std::vector<std::pair<double, double>> intervals;  // sorted, disjoint

    double measure() const {
        double s = 0.0;
        for (auto& [a, b] : intervals) s += b - a;
        return s;
    }
    bool contains(double x, double tol = 0.0) const {
        for (auto& [a, b] : intervals)
            if (x >= a - tol && x <= b + tol) return true;
        return false;
    }
};

InfluenceDomain influence_domain(const Grid1D& g, const std::vector<Endpoint>& gamma,
                                 const std::vector<double>& radii);

/// Coarse lattice of smoothed time-hat sources; members are addressed by
/// (endpoint, lattice node, fiber). The controllable dictionary behind
/// every Gram computation.
struct SourceBasis {
    struct Member {
        Endpoint ep;
        int center;   // fine time node of the hat peak
        int fiber;
        double t_lo;  // support window (after smoothing)
        double t_hi;
    };

    Grid1D grid;
    TimeGrid tg;
    int n = 1;
    std::vector<Endpoint> gamma;
    int stride = 8;
    std::vector<Member> members;
    Mat columns;  // N x m stacked boundary vectors

    int size() const { return static_cast<int>(members.size()); }

    /// Members from one endpoint with support inside (T - radius, T).
    std::vector<int> select(Endpoint ep, double radius) const;
    Vec combine(const std::vector<int>& ids, const Vec& coeff) const;
};

/// Hats on the coarse lattice covering (t_min, T), one binomial smoothing
/// pass applied.
SourceBasis make_hat_basis(const DtnOperator& layout, int stride, double t_min);

/// Reference source family {h_q} with uniform time shifts; columns stacked
/// per (q, shift), shift-major ordering r = q * ntau + itau is NOT used;
/// layout is col(q, itau) = itau * nq + q.
struct ReferenceSet {
    std::vector<BoundarySignal> sources;
    int nq = 0;
    int ntau = 0;
    int dtau_steps = 0;  // shift step in dt units
    Mat cols;            // N x (nq * ntau)

    int col(int q, int itau) const { return itau * nq + q; }
};

/// 2n^2-or-more smooth pulses per the default recipe: per endpoint, per
/// fiber, pulses centered at T - offsets[i].
ReferenceSet make_reference_set(const DtnOperator& layout, const std::vector<double>& offsets,
                                double width, int ntau, int dtau_steps);

struct TikhonovResult {
    Vec coeff;       // scaled so c^H G_big c = target_norm2
    double leakage = 0.0;
    bool localizable = true;
};

/// Smallest-mu solution of (C^H C + a I) c = mu (G_big + a I) c, where the
/// cross table C[i,p] = <W h_i, W f_p> is first whitened by the small-family
/// Gram g_small (pseudo-inverse square root), so that |C c|^2 is the true
/// energy of the projection of W(f c) onto span{W h_i}. Without whitening an
/// ill-conditioned small Gram lets candidates hide inside the small span
/// while reporting near-zero leakage.
TikhonovResult tikhonov_project(const GramTable& g_big, const Mat& g_small,
                                const Mat& c_small_big, double alpha, double target_norm2);

struct ControlSchedule {
    std::vector<int> ks = {2, 4, 8, 16};
    std::vector<double> alphas = {1e-1, 1e-2, 1e-3, 1e-4, 1e-5};
    int subspace = 6;             // localizer candidates kept per (node, k)
    double leak_factor = 2.0;     // discrepancy rule: largest alpha with leak <= factor * min
    double not_localizable = 0.5; // leakage / norm^2 above this marks failure
};

/// One interior evaluation point: per-k localizer coefficients over the big
/// basis plus extrapolated evaluation data.
struct Localizer {
    int node = 0;       // grid node index
    double x = 0.0;
    Endpoint near = Endpoint::Left;
    double s = 0.0;     // d(x, nearest endpoint)
    bool ok = true;
    std::string error;

    struct KSlot {
        int k = 0;
        double vol = 0.0;          // |X_k|
        double alpha = 0.0;
        double leakage = 0.0;
        std::vector<int> big_ids;  // basis member ids
        Mat coeffs;                // m_big x n, one column per frame vector
        Mat r;                     // n x (nq*ntau) evaluation table at this k
        Mat action;                // n x n delta action against the pulses
        Mat node_gram;             // n x n, |X_k|-scaled
    };
    std::vector<KSlot> slots;

    Mat r;          // extrapolated table, n x (nq*ntau)
    Mat node_gram;  // extrapolated, pre-orthonormalization
    double gram_dev = 0.0;  // ||node_gram - Id|| after extrapolation
};

/// Build the localizer family at one point from Gram data alone.
/// g_full/cross tables must come from the same SourceBasis/ReferenceSet.
struct GramData {
    const ConnectingOperator* conn = nullptr;
    const SourceBasis* basis = nullptr;
    const ReferenceSet* refs = nullptr;
    GramTable g_full;   // basis x basis
    Mat cross_refs;     // basis x (nq*ntau): <W f_p, W h_(q,tau)>
};

GramData make_gram_data(const ConnectingOperator& conn, const SourceBasis& basis,
                        const ReferenceSet& refs);

Localizer build_localizer(const GramData& gd, int grid_node, const ControlSchedule& sched);

/// Interior frame built from localizers at the given grid nodes, registered
/// left to right; each node frame is pinned by reference positivity, the
/// chain registration smooths residual jumps, and end_mismatch records the
/// total rotation the chain applied at the rightmost node.
struct FrameData {
    Grid1D grid;
    TimeGrid tg;
    int n = 1;
    int nq = 0, ntau = 0, dtau_steps = 0;
    std::vector<Localizer> nodes;          // only ok nodes carry valid tables
    std::vector<Mat> registration;         // per consecutive ok-node pair
    Mat r_left, r_right;                   // boundary tables from the data itself
    Mat end_mismatch;                      // unitary spread along the chain
};

FrameData build_frame(const GramData& gd, const std::vector<int>& grid_nodes,
                      const ControlSchedule& sched);

/// Frame representation of u^h(T - tau, x) at every frame node.
std::vector<Vec> evaluate_wave(const FrameData& frame, const GramData& gd,
                               const BoundarySignal& h, int tau_steps);

/// Default evaluation nodes: grid nodes with stride inside
/// [3 h k_max, L - 3 h k_max] intersected with M(Gamma, T - 0.05 L).
std::vector<int> default_evaluation_nodes(const Grid1D& g, const TimeGrid& tg, int k_max,
                                          int stride);

// ---- oracle twins (interior fields from the simulator) ------------------

/// ||W f_c - phi|| / ||phi|| for the Tikhonov control targeting a smooth
/// section phi supported in M(Gamma, r); Grams and data vector computed
/// from simulated final states (oracle mode).
double oracle_tikhonov_residual(const ConnectionField& a, const PotentialField& v,
                                const SourceBasis& basis, double radius,
                                const SectionField& target, double alpha);

/// Fraction of ||Wf||^2 outside the shell (s, s + 1/k) widened by `pad`.
double oracle_exterior_mass(const ConnectionField& a, const PotentialField& v,
                            const SourceBasis& basis, const Localizer& loc, int k, double pad);

}  // namespace bcl
