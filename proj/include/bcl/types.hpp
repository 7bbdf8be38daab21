#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace bcl {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline Mat herm_part(const Mat& m) { return 0.5 * (m + m.adjoint()); }
inline Mat skew_part(const Mat& m) { return 0.5 * (m - m.adjoint()); }

inline double unitarity_defect(const Mat& u) {
    return (u.adjoint() * u - Mat::Identity(u.rows(), u.cols())).norm();
}

/// Unitary factor of the polar decomposition m = u * p, p Hermitian PSD.
inline Mat polar_unitary(const Mat& m) {
    Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().adjoint();
}

/// Principal logarithm of a unitary matrix (skew-Hermitian result).
/// Eigenvalues on the unit circle; phases taken in (-pi, pi].
inline Mat unitary_log(const Mat& u) {
    Eigen::ComplexEigenSolver<Mat> es(u);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("unitary_log: eigensolver failed");
    Mat v = es.eigenvectors();
    Vec lam = es.eigenvalues();
    Vec loglam(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i)
        loglam[i] = cplx(0.0, std::arg(lam[i]));
    Mat l = v * loglam.asDiagonal() * v.inverse();
    return skew_part(l);  // clean up round-off
}

/// exp of a skew-Hermitian matrix, unitary by spectral construction.
inline Mat skew_exp(const Mat& s) {
    Eigen::SelfAdjointEigenSolver<Mat> es(Mat(cplx(0, -1) * s));
    Vec phase(es.eigenvalues().size());
    for (Eigen::Index i = 0; i < phase.size(); ++i)
        phase[i] = std::exp(cplx(0.0, es.eigenvalues()[i]));
    return es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace bcl
