#pragma once

#include <Eigen/Dense>

namespace pwm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Relative eigenvalue cutoff for rank detection: eigenvalues below
// rank_cutoff * lambda_max are treated as zero.
inline constexpr double kRankCutoff = 1e-10;

// Tolerance below which negative eigenvalues of a nominally PSD matrix are
// clipped; anything more negative is an input error.
inline constexpr double kPsdClipTol = 1e-10;

// Throws InputError if |c - c^T| exceeds 1e-12 * max(1, |c|_max).
void require_symmetric(const Mat& c);

// Moore-Penrose pseudo-inverse of a symmetric PSD matrix via symmetric
// eigendecomposition with the kRankCutoff rank rule.
Mat pseudo_inverse(const Mat& c);

// The limit construction (c + id/m)^{-2} c at finite m. Approaches
// pseudo_inverse(c) as m grows; kept as an independent second route.
Mat pseudo_inverse_limit(const Mat& c, double m);

// Eigenvalue-clips a symmetric matrix to PSD. Eigenvalues in
// [-tol*scale, 0) go to 0; below that throws InputError.
Mat clip_psd(const Mat& c, double tol = kPsdClipTol);

// Orthogonal projection of v onto range(c), c symmetric PSD.
Vec project_onto_range(const Mat& c, const Vec& v);

}  // namespace pwm
