// Kernel cometric geometry of the landmark manifold.
//
// The cometric at a configuration q is the Nd x Nd matrix
//     K(q)_{(ia),(jb)} = k(|q_i - q_j|) delta_ab,
// i.e. K = k_N (x) I_d where k_N is the N x N scalar kernel Gram matrix and
// (x) is the Kronecker product with flat coordinates in landmark-major order.
// Everything here exploits that structure: factorizations, inverses and
// determinants are computed on k_N and lifted, which turns O((Nd)^3) work
// into O(N^3) + O(N^2 d).
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "lmbridge/errors.hpp"
#include "lmbridge/kernel.hpp"
#include "lmbridge/landmark.hpp"

namespace lmbridge {

namespace detail {

// Pairwise kernel values and weighted differences for one configuration:
//   kernel(i,j) = k(r2_ij),   w.row(i*N+j) = (Sigma^{-1} (q_i - q_j))^T.
// Buffers are reused across calls when already sized.
struct KernelTables {
    Eigen::MatrixXd kernel;  // N x N
    RowMatrixXd w;           // (N*N) x d, rows contiguous
    double min_r2 = 0.0;     // smallest off-diagonal squared Mahalanobis distance

    // The pair loop runs once per simulation step, so it is written with
    // plain scalar loops: Eigen expressions on d-sized vectors (d = 1..3 in
    // practice) spend more time in bookkeeping than arithmetic.
    void compute(const Eigen::Ref<const RowMatrixXd>& pos, const KernelParams& params) {
        const int n = static_cast<int>(pos.rows());
        const int d = static_cast<int>(pos.cols());
        kernel.resize(n, n);
        w.resize(n * n, d);
        z_.resize(d);
        min_r2 = std::numeric_limits<double>::infinity();
        const Eigen::MatrixXd& li = params.sigma_inv;  // lower triangular
        double* z = z_.data();
        for (int i = 0; i < n; ++i) {
            kernel(i, i) = params.alpha;
            for (int c = 0; c < d; ++c) w(i * n + i, c) = 0.0;
            for (int j = i + 1; j < n; ++j) {
                double r2 = 0.0;
                for (int c = 0; c < d; ++c) {  // z = Sigma^{-1/2} (q_i - q_j)
                    double acc = 0.0;
                    for (int e = 0; e <= c; ++e) acc += li(c, e) * (pos(i, e) - pos(j, e));
                    z[c] = acc;
                    r2 += acc * acc;
                }
                min_r2 = std::min(min_r2, r2);
                const double k = params.alpha * std::exp(-0.5 * r2);
                kernel(i, j) = k;
                kernel(j, i) = k;
                for (int c = 0; c < d; ++c) {  // w = Sigma^{-T/2} z
                    double acc = 0.0;
                    for (int e = c; e < d; ++e) acc += li(e, c) * z[e];
                    w(i * n + j, c) = acc;
                    w(j * n + i, c) = -acc;
                }
            }
        }
        if (n == 1) min_r2 = std::numeric_limits<double>::infinity();
    }

private:
    Eigen::VectorXd z_;
};

// M (x) I_d for an N x N matrix M.
inline Eigen::MatrixXd kron_identity(const Eigen::MatrixXd& m, int d) {
    const int n = static_cast<int>(m.rows());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n * d, n * d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int a = 0; a < d; ++a) out(i * d + a, j * d + a) = m(i, j);
    return out;
}

[[noreturn]] inline void throw_degenerate(double min_r2) {
    std::ostringstream msg;
    msg << "kernel cometric is numerically singular (closest landmark pair at squared distance " << min_r2
        << "); coincident or near-coincident landmarks make the metric degenerate";
    throw DegenerateMetricError(msg.str());
}

// Rejects a factorization that failed outright or whose pivots span so many
// orders of magnitude that the matrix is singular at working precision.
// Rounding can hand an exactly singular Gram matrix a tiny positive pivot, so
// checking info() alone is not enough.
inline void check_spd(const Eigen::LLT<Eigen::MatrixXd>& llt, double min_r2) {
    if (llt.info() != Eigen::Success) throw_degenerate(min_r2);
    const auto diag = llt.matrixLLT().diagonal();
    if (diag.minCoeff() < 1e-7 * diag.maxCoeff()) throw_degenerate(min_r2);
}

}  // namespace detail

// Cometric at one configuration, stored through its N x N scalar Gram matrix.
struct Cometric {
    int n_landmarks = 0;
    int dim = 0;
    Eigen::MatrixXd kernel;   // N x N scalar Gram matrix k_N
    double min_pair_r2 = 0.0;

    // Full Nd x Nd cometric K = k_N (x) I_d.
    Eigen::MatrixXd matrix() const { return detail::kron_identity(kernel, dim); }

    // K x for a landmark-major flat vector x, via the N x d reshape.
    Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& x) const {
        Eigen::Map<const RowMatrixXd> xm(x.data(), n_landmarks, dim);
        RowMatrixXd out = kernel * xm;
        return Eigen::Map<Eigen::VectorXd>(out.data(), out.size());
    }

    // Lower Cholesky factor of k_N. Throws DegenerateMetricError if k_N is
    // not numerically positive definite.
    Eigen::MatrixXd cholesky_scalar() const {
        Eigen::LLT<Eigen::MatrixXd> llt(kernel);
        detail::check_spd(llt, min_pair_r2);
        return llt.matrixL();
    }

    Eigen::MatrixXd inverse_scalar() const {
        Eigen::LLT<Eigen::MatrixXd> llt(kernel);
        detail::check_spd(llt, min_pair_r2);
        Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(n_landmarks, n_landmarks);
        llt.matrixL().solveInPlace(inv);
        llt.matrixU().solveInPlace(inv);
        return inv;
    }

    // K^{-1} x, landmark-major flat in and out.
    Eigen::VectorXd solve(const Eigen::Ref<const Eigen::VectorXd>& x) const {
        Eigen::LLT<Eigen::MatrixXd> llt(kernel);
        detail::check_spd(llt, min_pair_r2);
        Eigen::Map<const RowMatrixXd> xm(x.data(), n_landmarks, dim);
        RowMatrixXd out = llt.solve(xm);
        return Eigen::Map<Eigen::VectorXd>(out.data(), out.size());
    }

    // log det of the full Nd x Nd cometric: d * log det k_N.
    double log_det() const {
        Eigen::LLT<Eigen::MatrixXd> llt(kernel);
        detail::check_spd(llt, min_pair_r2);
        double ld = 0.0;
        for (int i = 0; i < n_landmarks; ++i) ld += std::log(llt.matrixLLT()(i, i));
        return 2.0 * dim * ld;
    }
};

inline Cometric cometric(const LandmarkConfig& q, const KernelParams& params) {
    if (params.dim() != q.dim())
        throw std::invalid_argument("kernel sigma dimension does not match landmark dimension");
    detail::KernelTables tables;
    tables.compute(q.positions(), params);
    Cometric out;
    out.n_landmarks = q.n_landmarks();
    out.dim = q.dim();
    out.kernel = std::move(tables.kernel);
    out.min_pair_r2 = tables.min_r2;
    return out;
}

// Lower-triangular L with L L^T = K(q), in landmark-major flat coordinates.
// Because K = k_N (x) I_d, L = chol(k_N) (x) I_d, which is again lower
// triangular in this ordering.
inline Eigen::MatrixXd cometric_sqrt(const LandmarkConfig& q, const KernelParams& params) {
    const Cometric co = cometric(q, params);
    return detail::kron_identity(co.cholesky_scalar(), co.dim);
}

// Partial derivatives of the full cometric: out[m] = dK/dq_m for the flat
// coordinate m = l*d + c. Each is Nd x Nd and symmetric; only row/column
// blocks touching landmark l are nonzero, with
//   d k_ij / d q_{l,c} = -k_ij (delta_il - delta_jl) w_{ij,c},
//   w_ij = Sigma^{-1} (q_i - q_j).
inline std::vector<Eigen::MatrixXd> cometric_derivative(const LandmarkConfig& q, const KernelParams& params) {
    if (params.dim() != q.dim())
        throw std::invalid_argument("kernel sigma dimension does not match landmark dimension");
    const int n = q.n_landmarks();
    const int d = q.dim();
    detail::KernelTables tables;
    tables.compute(q.positions(), params);

    std::vector<Eigen::MatrixXd> out;
    out.reserve(static_cast<std::size_t>(n) * d);
    Eigen::MatrixXd dk_scalar(n, n);
    for (int l = 0; l < n; ++l) {
        for (int c = 0; c < d; ++c) {
            dk_scalar.setZero();
            for (int j = 0; j < n; ++j) {
                if (j == l) continue;
                const double v = -tables.kernel(l, j) * tables.w(l * n + j, c);
                dk_scalar(l, j) = v;
                dk_scalar(j, l) = v;
            }
            out.push_back(detail::kron_identity(dk_scalar, d));
        }
    }
    return out;
}

// Christoffel symbols of the Levi-Civita connection of g = K^{-1}, raised
// index first: gamma[i](k,l) = Gamma^i_{kl}, plus the cometric-contracted
// vector contracted(i) = sum_{kl} K^{kl} Gamma^i_{kl}.
struct ChristoffelTensor {
    std::vector<Eigen::MatrixXd> gamma;
    Eigen::VectorXd contracted;
};

// Dense O((Nd)^4) evaluation from dg = -K^{-1} dK K^{-1}:
//   Gamma^i_{kl} = 1/2 K^{im} (dg_k(m,l) + dg_l(m,k) - dg_m(k,l)).
// Used by the frame-bundle scheme and as the reference for the fast
// contracted form in PointGeometry.
inline ChristoffelTensor christoffel(const LandmarkConfig& q, const KernelParams& params) {
    const int nd = q.flat_size();
    const Cometric co = cometric(q, params);
    const Eigen::MatrixXd K = co.matrix();
    const Eigen::MatrixXd A = detail::kron_identity(co.inverse_scalar(), co.dim);
    const std::vector<Eigen::MatrixXd> dK = cometric_derivative(q, params);

    std::vector<Eigen::MatrixXd> dg(nd);
    for (int m = 0; m < nd; ++m) dg[m] = -A * dK[m] * A;

    ChristoffelTensor out;
    out.gamma.assign(nd, Eigen::MatrixXd::Zero(nd, nd));
    out.contracted = Eigen::VectorXd::Zero(nd);
    for (int i = 0; i < nd; ++i) {
        Eigen::MatrixXd& gi = out.gamma[i];
        for (int k = 0; k < nd; ++k)
            for (int l = 0; l < nd; ++l) {
                double s = 0.0;
                for (int m = 0; m < nd; ++m) s += K(i, m) * (dg[k](m, l) + dg[l](m, k) - dg[m](k, l));
                gi(k, l) = 0.5 * s;
            }
        out.contracted(i) = (K.array() * gi.array()).sum();
    }
    return out;
}

// Workspace holding everything the sampling schemes need at one
// configuration: kernel Gram matrix, its Cholesky factor and inverse, and the
// Ito drift of Riemannian Brownian motion in coordinates,
//   drift^i = -1/2 K^{kl} Gamma^i_{kl},
// evaluated through the closed form (as N x d blocks)
//   drift_i = 1/2 (s_i + d * sum_m k_im t_m),
//   s_i = sum_j k_ij w_ij,  t_m = sum_j (k_N^{-1})_mj k_mj w_mj,
// which costs O(N^2 d) instead of the O((Nd)^4) dense contraction.
// compute() reuses all buffers, so a long simulation does not allocate.
class PointGeometry {
public:
    PointGeometry(int n_landmarks, int dim)
        : n_(n_landmarks),
          d_(dim),
          llt_(n_landmarks),
          kinv_(n_landmarks, n_landmarks),
          bmat_(n_landmarks, n_landmarks),
          smat_(n_landmarks, dim),
          tmat_(n_landmarks, dim),
          ktmat_(n_landmarks, dim),
          driftmat_(n_landmarks, dim),
          scratch_(n_landmarks, dim) {}

    // Recomputes every field at the configuration held in the flat vector q.
    // Throws DegenerateMetricError if the kernel matrix is not positive
    // definite.
    void compute(const Eigen::Ref<const Eigen::VectorXd>& q_flat, const KernelParams& params) {
        Eigen::Map<const RowMatrixXd> pos(q_flat.data(), n_, d_);
        tables_.compute(pos, params);
        llt_.compute(tables_.kernel);
        detail::check_spd(llt_, tables_.min_r2);
        kinv_.setIdentity();
        llt_.matrixL().solveInPlace(kinv_);
        llt_.matrixU().solveInPlace(kinv_);

        // s_i and t_m as rows of N x d matrices; both contract the pair table
        // with different weights.
        bmat_ = kinv_.cwiseProduct(tables_.kernel);
        smat_.setZero();
        tmat_.setZero();
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) {
                if (j == i) continue;
                const double kij = tables_.kernel(i, j);
                const double bij = bmat_(i, j);
                const double* wij = tables_.w.data() + static_cast<std::ptrdiff_t>(i * n_ + j) * d_;
                for (int c = 0; c < d_; ++c) {
                    smat_(i, c) += kij * wij[c];
                    tmat_(i, c) += bij * wij[c];
                }
            }
        ktmat_.noalias() = tables_.kernel * tmat_;
        driftmat_ = 0.5 * (smat_ + static_cast<double>(d_) * ktmat_);
    }

    int n_landmarks() const { return n_; }
    int dim() const { return d_; }
    const Eigen::MatrixXd& kernel() const { return tables_.kernel; }
    const Eigen::MatrixXd& kernel_inv() const { return kinv_; }

    // Ito drift as an N x d matrix; row i is the drift of landmark i.
    const RowMatrixXd& drift() const { return driftmat_; }

    // out += (chol(k_N) (x) I_d) w for a flat noise vector w, written into an
    // N x d matrix view.
    void add_sqrt_noise(const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::Ref<RowMatrixXd> out) {
        Eigen::Map<const RowMatrixXd> wm(w.data(), n_, d_);
        scratch_.noalias() = llt_.matrixL() * wm;
        out += scratch_;
    }

    // x^T K^{-1} y for flat vectors, via the Frobenius form <X, k_N^{-1} Y>.
    double bilinear_inv(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& y) const {
        Eigen::Map<const RowMatrixXd> xm(x.data(), n_, d_);
        Eigen::Map<const RowMatrixXd> ym(y.data(), n_, d_);
        return (xm.transpose() * (kinv_ * ym)).trace();
    }

    // log det of the full Nd x Nd cometric.
    double log_det() const {
        double ld = 0.0;
        for (int i = 0; i < n_; ++i) ld += std::log(llt_.matrixLLT()(i, i));
        return 2.0 * d_ * ld;
    }

private:
    int n_, d_;
    detail::KernelTables tables_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::MatrixXd kinv_, bmat_;
    RowMatrixXd smat_, tmat_, ktmat_, driftmat_, scratch_;
};

}  // namespace lmbridge
