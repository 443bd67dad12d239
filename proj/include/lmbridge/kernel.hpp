// Gaussian kernel parameters and scalar kernel evaluation.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace lmbridge {

// Kernel k(x, y) = alpha * exp(-1/2 (x-y)^T (sigma sigma^T)^{-1} (x-y)),
// with sigma lower triangular and positive on the diagonal.
struct KernelParams {
    double alpha;
    Eigen::MatrixXd sigma;      // d x d, lower triangular
    Eigen::MatrixXd sigma_inv;  // cached triangular inverse

    KernelParams(double alpha_, const Eigen::MatrixXd& sigma_) : alpha(alpha_), sigma(sigma_) {
        if (!std::isfinite(alpha) || alpha <= 0.0)
            throw std::invalid_argument("kernel amplitude alpha must be finite and positive");
        if (sigma.rows() != sigma.cols() || sigma.rows() < 1)
            throw std::invalid_argument("kernel sigma must be a square matrix");
        if (!sigma.allFinite())
            throw std::invalid_argument("kernel sigma contains non-finite entries");
        const int d = static_cast<int>(sigma.rows());
        for (int i = 0; i < d; ++i) {
            if (sigma(i, i) <= 0.0)
                throw std::invalid_argument("kernel sigma must have a positive diagonal");
            for (int j = i + 1; j < d; ++j)
                if (sigma(i, j) != 0.0)
                    throw std::invalid_argument("kernel sigma must be lower triangular");
        }
        sigma_inv = sigma.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(d, d));
    }

    // Isotropic kernel: sigma = width * I.
    static KernelParams isotropic(double alpha, double width, int dim) {
        return KernelParams(alpha, width * Eigen::MatrixXd::Identity(dim, dim));
    }

    int dim() const { return static_cast<int>(sigma.rows()); }
};

// k as a function of the squared Mahalanobis distance r2 = (x-y)^T Sigma^{-1} (x-y).
inline double kernel_scalar(double r2, const KernelParams& params) {
    if (!std::isfinite(r2) || r2 < 0.0)
        throw std::invalid_argument("kernel argument r2 must be finite and non-negative");
    return params.alpha * std::exp(-0.5 * r2);
}

// Squared Mahalanobis distance between two points under Sigma = sigma sigma^T.
inline double weighted_sq_dist(const Eigen::Ref<const Eigen::VectorXd>& x,
                               const Eigen::Ref<const Eigen::VectorXd>& y,
                               const KernelParams& params) {
    return (params.sigma_inv * (x - y)).squaredNorm();
}

}  // namespace lmbridge
