#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace oracle {

// sigma(t) = S sigma(0) S^T for H = (p^T p + x^T K x)/2 with K constant and positive
// definite: S = [[cos(Wt), W^-1 sin(Wt)], [-W sin(Wt), cos(Wt)]], W = sqrt(K).
inline Eigen::MatrixXd quench_covariance(const Eigen::MatrixXd& K, const Eigen::MatrixXd& cov0,
                                         double t) {
    const Eigen::Index n = K.rows();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
    const Eigen::MatrixXd& O = es.eigenvectors();
    const Eigen::ArrayXd w = es.eigenvalues().array().sqrt();
    const Eigen::ArrayXd c = (w * t).cos();
    const Eigen::ArrayXd s = (w * t).sin();
    Eigen::MatrixXd S(2 * n, 2 * n);
    S.topLeftCorner(n, n) = O * c.matrix().asDiagonal() * O.transpose();
    S.topRightCorner(n, n) = O * (s / w).matrix().asDiagonal() * O.transpose();
    S.bottomLeftCorner(n, n) = -O * (s * w).matrix().asDiagonal() * O.transpose();
    S.bottomRightCorner(n, n) = S.topLeftCorner(n, n);
    return S * cov0 * S.transpose();
}

}  // namespace oracle
