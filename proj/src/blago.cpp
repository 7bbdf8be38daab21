#include "bcl/blago.hpp"

#include <cmath>

namespace bcl {

double j_kernel_value(double t, double s, double T) {
    if (t <= 0.0 || s <= 0.0 || t + s > 2.0 * T) return 0.0;
    if (t > s) return 0.25;
    if (t < s) return -0.25;
    return 0.0;
}

ConnectingOperator::ConnectingOperator(const DtnOperator& dtn) : dtn_(&dtn) {
    const TimeGrid& tg = dtn.tg;
    const double T = tg.T();
    jw_.resize(tg.nt, tg.nt);
    for (int j = 0; j < tg.nt; ++j) {
        double ws = tg.dt();
        for (int s = 0; s < tg.nt; ++s) {
            double wgt = (s == 0 || s == tg.nt - 1) ? 0.5 * ws : ws;
            jw_(j, s) = j_kernel_value(tg.t(j), tg.t(s), T) * wgt;
        }
    }
    qw_ = dtn.weights;
}

Mat ConnectingOperator::apply_j(const Mat& cols) const {
    if (cols.rows() != dtn_->size())
        throw std::invalid_argument("ConnectingOperator::apply_j: row mismatch");
    const int n = dtn_->n;
    const int nt = dtn_->tg.nt;
    Mat out(cols.rows(), cols.cols());
    // Channel (endpoint, fiber) slices are strided views with stride n in the
    // time index; apply the nt x nt kernel to each.
    for (int ep = 0; ep < dtn_->channels(); ++ep)
        for (int k = 0; k < n; ++k) {
            Mat slice(nt, cols.cols());
            for (int j = 0; j < nt; ++j) slice.row(j) = cols.row(dtn_->index(ep, j, k));
            Mat js = jw_.cast<cplx>() * slice;
            for (int j = 0; j < nt; ++j) out.row(dtn_->index(ep, j, k)) = js.row(j);
        }
    return out;
}

cplx ConnectingOperator::weighted_inner(const Vec& a, const Vec& b) const {
    if (a.size() != dtn_->size() || b.size() != dtn_->size())
        throw std::invalid_argument("ConnectingOperator::weighted_inner: size mismatch");
    return a.dot(qw_.cast<cplx>().cwiseProduct(b));  // Eigen dot conjugates first arg
}

cplx ConnectingOperator::gram(const Vec& f, const Vec& h) const {
    Mat g = gram_matrix(f, h);
    return g(0, 0);
}

Mat ConnectingOperator::gram_matrix(const Mat& f_cols, const Mat& h_cols) const {
    if (f_cols.rows() != dtn_->size() || h_cols.rows() != dtn_->size())
        throw std::invalid_argument("ConnectingOperator::gram_matrix: row mismatch");
    Mat lam_h = apply_lambda(h_cols);
    Mat lam_f = apply_lambda(f_cols);
    Mat q_f = qw_.cast<cplx>().asDiagonal() * f_cols;
    Mat q_lf = qw_.cast<cplx>().asDiagonal() * lam_f;
    // The stored traces use the interior-pointing covariant derivative, the
    // negative of the outward normal derivative the identity is stated for;
    // the overall sign flips accordingly.
    return q_lf.adjoint() * apply_j(h_cols) - q_f.adjoint() * apply_j(lam_h);
}

GramTable make_gram_table(const Mat& raw) {
    GramTable t;
    t.asymmetry = (raw - raw.adjoint()).norm();
    Mat sym = 0.5 * (raw + raw.adjoint());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym);
    RVec ev = es.eigenvalues();
    double floor_clip = 0.0;
    for (int i = 0; i < ev.size(); ++i)
        if (ev(i) < 0.0) {
            floor_clip = std::max(floor_clip, -ev(i));
            ev(i) = 0.0;
        }
    t.clipped = floor_clip;
    double scale = ev.size() ? std::abs(ev(ev.size() - 1)) : 0.0;
    t.clip_warning = floor_clip > 1e-8 * (1.0 + scale);
    t.g = es.eigenvectors() * ev.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
    return t;
}

GramTable gram_table(const ConnectingOperator& conn, const Mat& source_cols) {
    return make_gram_table(conn.gram_matrix(source_cols, source_cols));
}

CauchyReport cauchy_test(const ConnectingOperator& conn, const Mat& sequence_cols, double tol) {
    CauchyReport rep;
    const int m = static_cast<int>(sequence_cols.cols());
    if (m < 2) throw std::invalid_argument("cauchy_test: need at least two columns");
    GramTable t = gram_table(conn, sequence_cols);
    rep.quadrature_failure = t.clip_warning;
    const int start = m / 2;
    for (int i = start; i < m; ++i)
        for (int j = start; j < m; ++j) {
            double d = std::real(t.g(i, i)) - 2.0 * std::real(t.g(i, j)) + std::real(t.g(j, j));
            rep.tail_max = std::max(rep.tail_max, d);
        }
    rep.cauchy = rep.tail_max <= tol;
    return rep;
}

}  // namespace bcl
