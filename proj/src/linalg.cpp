#include "pwm/linalg.hpp"

#include <cmath>

#include "pwm/common.hpp"

namespace pwm {

void require_symmetric(const Mat& c) {
    if (c.rows() != c.cols()) throw InputError("matrix is not square");
    const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
    const double asym = (c - c.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale) {
        throw InputError("matrix asymmetry " + std::to_string(asym) + " beyond tolerance");
    }
}

Mat pseudo_inverse(const Mat& c) {
    require_symmetric(c);
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (c + c.transpose()));
    const Vec& lam = es.eigenvalues();
    const Mat& q = es.eigenvectors();
    const double lmax = lam.cwiseAbs().maxCoeff();
    if (lam.minCoeff() < -kPsdClipTol * std::max(1.0, lmax)) {
        throw InputError("matrix is not PSD within clip tolerance");
    }
    const double cutoff = kRankCutoff * std::max(lmax, 0.0);
    Vec inv = Vec::Zero(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam(i) > cutoff) inv(i) = 1.0 / lam(i);
    }
    return q * inv.asDiagonal() * q.transpose();
}

Mat pseudo_inverse_limit(const Mat& c, double m) {
    require_symmetric(c);
    const Eigen::Index n = c.rows();
    Mat shifted = c + Mat::Identity(n, n) / m;
    Mat inv = shifted.inverse();
    return inv * inv * c;
}

Mat clip_psd(const Mat& c, double tol) {
    require_symmetric(c);
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (c + c.transpose()));
    Vec lam = es.eigenvalues();
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam(i) < -tol * scale) {
            throw InputError("matrix eigenvalue " + std::to_string(lam(i)) +
                             " violates PSD beyond clip tolerance");
        }
        if (lam(i) < 0.0) lam(i) = 0.0;
    }
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

Vec project_onto_range(const Mat& c, const Vec& v) {
    return c * (pseudo_inverse(c) * v);
}

}  // namespace pwm
