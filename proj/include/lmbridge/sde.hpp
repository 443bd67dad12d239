// Sampling schemes for Riemannian Brownian motion on the landmark manifold.
//
// Two constructions of the same process:
//  * Euler-Maruyama in coordinates: the Ito SDE with drift -1/2 K^{kl}
//    Gamma^i_{kl} and noise covariance K, stepped with the left-point rule.
//  * A frame-bundle scheme: horizontal lift of the motion with a
//    predictor-corrector (Heun) step, which converges to the Stratonovich
//    solution of the driftless horizontal SDE and projects to the same base
//    process.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "lmbridge/errors.hpp"
#include "lmbridge/geometry.hpp"
#include "lmbridge/kernel.hpp"
#include "lmbridge/landmark.hpp"
#include "lmbridge/rng.hpp"

namespace lmbridge {

// Uniform grid 0 = t_0 < ... < t_{n_steps} = T.
struct TimeGrid {
    double T;
    int n_steps;

    TimeGrid(double T_, int n_steps_) : T(T_), n_steps(n_steps_) {
        if (!std::isfinite(T) || T <= 0.0) throw std::invalid_argument("time horizon T must be finite and positive");
        if (n_steps < 1) throw std::invalid_argument("time grid needs at least one step");
    }

    double dt() const { return T / n_steps; }
    double t(int k) const { return k * dt(); }
};

// Increments of a dim-dimensional Wiener process on a grid: row k holds the
// increment over [t_k, t_{k+1}], each entry N(0, dt). Rows are filled in step
// order and, within a row, in coordinate order, so a given seed always
// produces the same path.
struct WienerPath {
    Eigen::MatrixXd increments;  // n_steps x dim
    std::uint64_t seed = 0;
};

inline WienerPath sample_wiener(const TimeGrid& grid, int dim, std::uint64_t seed) {
    if (dim < 1) throw std::invalid_argument("Wiener process dimension must be positive");
    WienerPath path;
    path.seed = seed;
    path.increments.resize(grid.n_steps, dim);
    NormalSampler normal(seed);
    const double sqrt_dt = std::sqrt(grid.dt());
    for (int k = 0; k < grid.n_steps; ++k)
        for (int c = 0; c < dim; ++c) path.increments(k, c) = sqrt_dt * normal();
    return path;
}

namespace detail {

// One Euler-Maruyama step in place: y += drift(y) dt + chol(K(y)) dW.
// geom must already be computed at y; afterwards it is stale.
inline void euler_step_inplace(Eigen::VectorXd& y, PointGeometry& geom, double dt,
                               const Eigen::Ref<const Eigen::VectorXd>& dw) {
    Eigen::Map<RowMatrixXd> ym(y.data(), geom.n_landmarks(), geom.dim());
    ym += dt * geom.drift();
    geom.add_sqrt_noise(dw, ym);
}

[[noreturn]] inline void rethrow_at_step(const DegenerateMetricError& err, int step, double t) {
    std::ostringstream msg;
    msg << err.what() << " (at step " << step << ", t = " << t << ")";
    throw DegenerateMetricError(msg.str());
}

}  // namespace detail

// One Euler-Maruyama step of Riemannian Brownian motion from q.
inline LandmarkConfig euler_brownian_step(const LandmarkConfig& q, const Eigen::Ref<const Eigen::VectorXd>& dw,
                                          double dt, const KernelParams& params) {
    if (!std::isfinite(dt) || dt <= 0.0) throw std::invalid_argument("step size dt must be finite and positive");
    if (dw.size() != q.flat_size()) throw std::invalid_argument("noise increment size does not match configuration");
    PointGeometry geom(q.n_landmarks(), q.dim());
    geom.compute(q.flat(), params);
    Eigen::VectorXd y = q.flat();
    detail::euler_step_inplace(y, geom, dt, dw);
    return LandmarkConfig::from_flat(y, q.n_landmarks(), q.dim());
}

// Euler-Maruyama path driven by the given Wiener increments. Row k of the
// result is the flat configuration at t_k, row 0 the initial condition.
inline RowMatrixXd simulate_brownian(const LandmarkConfig& q0, const TimeGrid& grid, const KernelParams& params,
                                     const WienerPath& noise) {
    const int nd = q0.flat_size();
    if (noise.increments.rows() != grid.n_steps || noise.increments.cols() != nd)
        throw std::invalid_argument("Wiener path shape does not match grid and configuration");
    RowMatrixXd path(grid.n_steps + 1, nd);
    path.row(0) = q0.flat();
    Eigen::VectorXd y = q0.flat();
    PointGeometry geom(q0.n_landmarks(), q0.dim());
    const double dt = grid.dt();
    for (int k = 0; k < grid.n_steps; ++k) {
        try {
            geom.compute(y, params);
        } catch (const DegenerateMetricError& err) {
            detail::rethrow_at_step(err, k, grid.t(k));
        }
        detail::euler_step_inplace(y, geom, dt, noise.increments.row(k).transpose());
        path.row(k + 1) = y;
    }
    return path;
}

inline RowMatrixXd simulate_brownian(const LandmarkConfig& q0, const TimeGrid& grid, const KernelParams& params,
                                     std::uint64_t seed) {
    return simulate_brownian(q0, grid, params, sample_wiener(grid, q0.flat_size(), seed));
}

// Point on the frame bundle: a configuration together with a frame of Nd
// tangent vectors (columns).
struct FrameState {
    Eigen::VectorXd point;   // Nd, landmark-major
    Eigen::MatrixXd frame;   // Nd x Nd, column j = j-th frame vector
};

// Frame that is orthonormal for the metric g = K^{-1}: the Cholesky factor of
// the cometric, F F^T = K.
inline FrameState initial_frame(const LandmarkConfig& q, const KernelParams& params) {
    return FrameState{q.flat(), cometric_sqrt(q, params)};
}

// Horizontal lift directions at a frame point. For noise direction j,
// base_motion.col(j) is the base displacement per unit noise and
// frame_transport[j] the matching linear change of the whole frame:
//   dq = F e_j,   dF_{ml} = -Gamma^m_{ks} (F e_j)^k F^s_l.
struct HorizontalFields {
    Eigen::MatrixXd base_motion;                  // Nd x Nd (= the frame itself)
    std::vector<Eigen::MatrixXd> frame_transport; // per direction j, Nd x Nd
};

namespace detail {

// Horizontal displacement for one noise vector w (not a unit direction):
// dq = F w, dF.row(m) = -(dq^T Gamma[m] F).
inline void horizontal_delta(const FrameState& u, const ChristoffelTensor& gamma,
                             const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::VectorXd& dq, Eigen::MatrixXd& df) {
    const int nd = static_cast<int>(u.point.size());
    dq.noalias() = u.frame * w;
    df.resize(nd, nd);
    for (int m = 0; m < nd; ++m) df.row(m).noalias() = -(dq.transpose() * gamma.gamma[m]) * u.frame;
}

}  // namespace detail

inline HorizontalFields horizontal_fields(const FrameState& u, int n_landmarks, int dim,
                                          const KernelParams& params) {
    const LandmarkConfig q = LandmarkConfig::from_flat(u.point, n_landmarks, dim);
    const ChristoffelTensor gamma = christoffel(q, params);
    const int nd = q.flat_size();
    HorizontalFields out;
    out.base_motion = u.frame;
    out.frame_transport.resize(nd);
    Eigen::VectorXd dq;
    for (int j = 0; j < nd; ++j)
        detail::horizontal_delta(u, gamma, Eigen::VectorXd::Unit(nd, j), dq, out.frame_transport[j]);
    return out;
}

// One Heun (predictor-corrector) step of the horizontal frame-bundle SDE:
// evaluate the horizontal displacement at the current point, again at the
// predicted point, and advance by the average. The same noise increment
// drives both stages.
inline FrameState heun_frame_step(const FrameState& u, const Eigen::Ref<const Eigen::VectorXd>& dw, int n_landmarks,
                                  int dim, const KernelParams& params) {
    const ChristoffelTensor g0 = christoffel(LandmarkConfig::from_flat(u.point, n_landmarks, dim), params);
    Eigen::VectorXd dq1, dq2;
    Eigen::MatrixXd df1, df2;
    detail::horizontal_delta(u, g0, dw, dq1, df1);

    FrameState pred{u.point + dq1, u.frame + df1};
    const ChristoffelTensor g1 = christoffel(LandmarkConfig::from_flat(pred.point, n_landmarks, dim), params);
    detail::horizontal_delta(pred, g1, dw, dq2, df2);

    return FrameState{u.point + 0.5 * (dq1 + dq2), u.frame + 0.5 * (df1 + df2)};
}

// Frame-bundle Brownian motion started from the g-orthonormal frame at q0;
// returns the projected base path, row k = configuration at t_k.
inline RowMatrixXd simulate_frame_brownian(const LandmarkConfig& q0, const TimeGrid& grid,
                                           const KernelParams& params, const WienerPath& noise) {
    const int nd = q0.flat_size();
    if (noise.increments.rows() != grid.n_steps || noise.increments.cols() != nd)
        throw std::invalid_argument("Wiener path shape does not match grid and configuration");
    RowMatrixXd path(grid.n_steps + 1, nd);
    path.row(0) = q0.flat();
    FrameState u = initial_frame(q0, params);
    for (int k = 0; k < grid.n_steps; ++k) {
        try {
            u = heun_frame_step(u, noise.increments.row(k).transpose(), q0.n_landmarks(), q0.dim(), params);
        } catch (const DegenerateMetricError& err) {
            detail::rethrow_at_step(err, k, grid.t(k));
        }
        path.row(k + 1) = u.point;
    }
    return path;
}

inline RowMatrixXd simulate_frame_brownian(const LandmarkConfig& q0, const TimeGrid& grid,
                                           const KernelParams& params, std::uint64_t seed) {
    return simulate_frame_brownian(q0, grid, params, sample_wiener(grid, q0.flat_size(), seed));
}

}  // namespace lmbridge
