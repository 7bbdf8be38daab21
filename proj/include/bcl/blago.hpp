#pragma once

#include "bcl/wave.hpp"

namespace bcl {

/// Kernel of the time-variable integral operator J:
/// sgn(t-s)/4 on {t+s <= 2T, t,s > 0}, zero elsewhere.
double j_kernel_value(double t, double s, double T);

/// Inner products <Wf, Wh> computed from the DtN operator alone.
/// Holds the kernel matrix composed with trapezoid weights so repeated
/// evaluations against one operator are cheap.
class ConnectingOperator {
public:
    explicit ConnectingOperator(const DtnOperator& dtn);

    /// <f, J Lambda h>_Q - <Lambda f, J h>_Q; conjugate-linear in f.
    cplx gram(const Vec& f, const Vec& h) const;

    /// Pairwise table: G[i,j] = <W f_i, W h_j> for stacked source columns.
    Mat gram_matrix(const Mat& f_cols, const Mat& h_cols) const;

    /// Quadrature-weighted inner product on stacked boundary vectors.
    cplx weighted_inner(const Vec& a, const Vec& b) const;

    const DtnOperator& dtn() const { return *dtn_; }

    /// J applied channel-wise in time to stacked columns (weights included).
    Mat apply_j(const Mat& cols) const;
    Mat apply_lambda(const Mat& cols) const { return dtn_->m * cols; }

private:
    const DtnOperator* dtn_;
    RMat jw_;   // nt x nt kernel matrix times quadrature weights
    RVec qw_;   // per-row quadrature weight (stacked layout)
};

/// Hermitian PSD table of <W f_i, W f_j>; small negative eigenvalues from
/// quadrature are clipped.
struct GramTable {
    Mat g;
    double asymmetry = 0.0;   // ||G - G^H|| before symmetrization
    double clipped = 0.0;     // magnitude of most negative clipped eigenvalue
    bool clip_warning = false;

    int size() const { return static_cast<int>(g.rows()); }
};

GramTable gram_table(const ConnectingOperator& conn, const Mat& source_cols);

/// Builds a GramTable from a precomputed raw Gram matrix (symmetrization +
/// PSD clip only).
GramTable make_gram_table(const Mat& raw);

struct CauchyReport {
    bool cauchy = false;
    double tail_max = 0.0;        // max ||W(f_i - f_j)||^2 over the tail
    bool quadrature_failure = false;
};

/// ||W(f_i - f_j)||^2 = G[i,i] - 2 Re G[i,j] + G[j,j] over the tail half of
/// the sequence; true iff below tol.
CauchyReport cauchy_test(const ConnectingOperator& conn, const Mat& sequence_cols, double tol);

}  // namespace bcl
