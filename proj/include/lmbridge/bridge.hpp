// Guided bridges and Monte Carlo transition density estimation.
//
// A bridge from q0 to v on [0, T] is sampled from the guided proposal
//     dy = b(y) dt - (y - v)/(T - t) dt + chol(K(y)) dW,
// where b is the Ito drift of the unconditioned motion. The proposal's law
// differs from the true conditioned law by a correction factor phi, and the
// transition density factors as
//     p_T(v | q0) = C(q0, v) E[exp(log phi)],
// estimated by averaging over independent guided samples. log phi is
// accumulated along the path with left-point Riemann sums; the stochastic
// integral against d(y~ y~^T) uses the product-increment form, so its
// quadratic covariation contribution is picked up automatically.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <vector>

#include "lmbridge/errors.hpp"
#include "lmbridge/geometry.hpp"
#include "lmbridge/kernel.hpp"
#include "lmbridge/landmark.hpp"
#include "lmbridge/parallel.hpp"
#include "lmbridge/rng.hpp"
#include "lmbridge/sde.hpp"

namespace lmbridge {

namespace detail {

// Buffers and arithmetic for one log phi increment. All quantities live on
// the N x N / N x d level: with Y~ the N x d reshape of y - v,
//   y~^T A b        = <Y~, k_N^{-1} B>_F,
//   y~^T dA y~      = <Y~, dA_s Y~>_F,
//   sum_ij dA^ij d(y~^i y~^j) = <dA_s, d(Y~ Y~^T)>_F.
struct BridgeWorkspace {
    BridgeWorkspace(int n, int d) : yt0(n, d), yt1(n, d), ab(n, d), ay(n, d), da(n, n), dgram(n, n) {}

    // Increment of log phi over [t, t+dt]; g0/g1 hold the geometry at y/y_next.
    double increment(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& y_next,
                     const Eigen::Ref<const Eigen::VectorXd>& v, double t, double dt, double T,
                     const PointGeometry& g0, const PointGeometry& g1) {
        const int n = static_cast<int>(yt0.rows());
        const int d = static_cast<int>(yt0.cols());
        Eigen::Map<const RowMatrixXd> ym(y.data(), n, d);
        Eigen::Map<const RowMatrixXd> y1m(y_next.data(), n, d);
        Eigen::Map<const RowMatrixXd> vm(v.data(), n, d);
        const double horizon = T - t;

        yt0 = ym - vm;
        yt1 = y1m - vm;
        ab.noalias() = g0.kernel_inv() * g0.drift();
        const double drift_term = yt0.cwiseProduct(ab).sum();

        da = g1.kernel_inv() - g0.kernel_inv();
        ay.noalias() = da * yt0;
        const double quad = yt0.cwiseProduct(ay).sum();
        dgram.noalias() = yt1 * yt1.transpose();
        dgram.noalias() -= yt0 * yt0.transpose();
        const double cross = da.cwiseProduct(dgram).sum();

        return -drift_term * dt / horizon - 0.5 * (quad + cross) / horizon;
    }

    RowMatrixXd yt0, yt1, ab, ay;
    Eigen::MatrixXd da, dgram;
};

}  // namespace detail

// One guided step from y toward the target v. If the step reaches the
// horizon (t + dt ~ T), the result is v exactly: the analytic pull diverges
// there and the discretized process is pinned by construction.
inline LandmarkConfig guided_step(const LandmarkConfig& y, const LandmarkConfig& v, double t, double dt, double T,
                                  const Eigen::Ref<const Eigen::VectorXd>& dw, const KernelParams& params) {
    if (!std::isfinite(dt) || dt <= 0.0) throw std::invalid_argument("step size dt must be finite and positive");
    if (!std::isfinite(t) || !std::isfinite(T) || t < 0.0 || t >= T)
        throw std::invalid_argument("guided step needs 0 <= t < T");
    if (v.n_landmarks() != y.n_landmarks() || v.dim() != y.dim())
        throw std::invalid_argument("target configuration shape does not match state");
    if (dw.size() != y.flat_size()) throw std::invalid_argument("noise increment size does not match configuration");

    if (T - (t + dt) < 0.5 * dt) return v;

    PointGeometry geom(y.n_landmarks(), y.dim());
    geom.compute(y.flat(), params);
    Eigen::VectorXd out = y.flat();
    Eigen::Map<RowMatrixXd> om(out.data(), y.n_landmarks(), y.dim());
    om += dt * geom.drift();
    out -= (y.flat() - v.flat()) * (dt / (T - t));
    geom.add_sqrt_noise(dw, om);
    return LandmarkConfig::from_flat(out, y.n_landmarks(), y.dim());
}

// Increment of log phi for one observed transition y -> y_next of a guided
// path (left-point rule on [t, t+dt]).
inline double log_phi_increment(const LandmarkConfig& y, const LandmarkConfig& y_next, const LandmarkConfig& v,
                                double t, double dt, double T, const KernelParams& params) {
    if (!std::isfinite(dt) || dt <= 0.0) throw std::invalid_argument("step size dt must be finite and positive");
    if (!std::isfinite(t) || t < 0.0 || t + dt > T + 1e-12 * T)
        throw std::invalid_argument("log phi increment needs 0 <= t and t + dt <= T");
    const int n = y.n_landmarks();
    const int d = y.dim();
    PointGeometry g0(n, d), g1(n, d);
    g0.compute(y.flat(), params);
    g1.compute(y_next.flat(), params);
    detail::BridgeWorkspace ws(n, d);
    return ws.increment(y.flat(), y_next.flat(), v.flat(), t, dt, T, g0, g1);
}

// A sampled guided bridge: states at every grid time (row k = t_k), the
// accumulated log correction, and the seed that produced it. The last row is
// the target exactly; the correction sum runs over steps 0..n_steps-2, the
// pinned final interval contributes no term.
struct BridgePath {
    RowMatrixXd path;  // (n_steps + 1) x Nd
    double log_phi = 0.0;
    std::uint64_t seed = 0;
};

inline BridgePath simulate_bridge(const LandmarkConfig& q0, const LandmarkConfig& v, const TimeGrid& grid,
                                  const KernelParams& params, const WienerPath& noise) {
    const int n = q0.n_landmarks();
    const int d = q0.dim();
    const int nd = q0.flat_size();
    if (v.n_landmarks() != n || v.dim() != d)
        throw std::invalid_argument("bridge endpoints must have the same shape");
    if (noise.increments.rows() != grid.n_steps || noise.increments.cols() != nd)
        throw std::invalid_argument("Wiener path shape does not match grid and configuration");

    BridgePath out;
    out.seed = noise.seed;
    out.path.resize(grid.n_steps + 1, nd);
    out.path.row(0) = q0.flat();

    Eigen::VectorXd y = q0.flat();
    Eigen::VectorXd y_next(nd);
    const Eigen::VectorXd v_flat = v.flat();
    PointGeometry geom_a(n, d), geom_b(n, d);
    detail::BridgeWorkspace ws(n, d);
    const double dt = grid.dt();
    const double T = grid.T;

    try {
        geom_a.compute(y, params);
    } catch (const DegenerateMetricError& err) {
        detail::rethrow_at_step(err, 0, 0.0);
    }
    for (int k = 0; k < grid.n_steps; ++k) {
        const double t = grid.t(k);
        if (k == grid.n_steps - 1) {
            y_next = v_flat;
        } else {
            y_next = y;
            Eigen::Map<RowMatrixXd> ym(y_next.data(), n, d);
            ym += dt * geom_a.drift();
            y_next -= (y - v_flat) * (dt / (T - t));
            geom_a.add_sqrt_noise(noise.increments.row(k).transpose(), ym);
            try {
                geom_b.compute(y_next, params);
            } catch (const DegenerateMetricError& err) {
                detail::rethrow_at_step(err, k + 1, grid.t(k + 1));
            }
            out.log_phi += ws.increment(y, y_next, v_flat, t, dt, T, geom_a, geom_b);
            std::swap(geom_a, geom_b);
        }
        y = y_next;
        out.path.row(k + 1) = y;
    }
    return out;
}

inline BridgePath simulate_bridge(const LandmarkConfig& q0, const LandmarkConfig& v, const TimeGrid& grid,
                                  const KernelParams& params, std::uint64_t seed) {
    return simulate_bridge(q0, v, grid, params, sample_wiener(grid, q0.flat_size(), seed));
}

// Monte Carlo estimate of the transition density p_T(v | q0).
struct DensityEstimate {
    double log_value = 0.0;
    double value = 0.0;
    double std_error = 0.0;  // standard error of `value`; 0 when n_samples == 1
    int n_samples = 0;       // bridges that completed
    int n_aborted = 0;       // bridges lost to degenerate-metric aborts
};

// Averages exp(log phi) over n_samples guided bridges (sample j uses the
// stream derive_seed(master_seed, {j})) and multiplies by the closed-form
// leading factor
//   log C = -(Nd/2) log(2 pi T) - 1/2 log det K(v) - (q0-v)^T K(q0)^{-1} (q0-v) / (2T).
// The average is combined in log space (log-sum-exp) in fixed sample order,
// so results are independent of thread scheduling. Samples whose metric
// degenerates mid-path are dropped; if every sample aborts, an
// EstimationFailedError is thrown.
inline DensityEstimate estimate_density(const LandmarkConfig& q0, const LandmarkConfig& v, const TimeGrid& grid,
                                        const KernelParams& params, int n_samples, std::uint64_t master_seed) {
    if (n_samples < 1) throw std::invalid_argument("density estimation needs at least one sample");
    const int n = q0.n_landmarks();
    const int d = q0.dim();
    const int nd = q0.flat_size();
    if (v.n_landmarks() != n || v.dim() != d)
        throw std::invalid_argument("density endpoints must have the same shape");

    PointGeometry geom_q0(n, d), geom_v(n, d);
    geom_q0.compute(q0.flat(), params);
    geom_v.compute(v.flat(), params);
    const Eigen::VectorXd displacement = q0.flat() - v.flat();
    const double quad = geom_q0.bilinear_inv(displacement, displacement);
    const double log_c =
        -0.5 * nd * std::log(2.0 * std::numbers::pi * grid.T) - 0.5 * geom_v.log_det() - quad / (2.0 * grid.T);

    std::vector<double> log_phi(n_samples, 0.0);
    std::vector<char> completed(n_samples, 0);
    parallel_for(n_samples, [&](int j) {
        try {
            const BridgePath b = simulate_bridge(q0, v, grid, params, derive_seed(master_seed, {static_cast<std::uint64_t>(j)}));
            log_phi[j] = b.log_phi;
            completed[j] = 1;
        } catch (const DegenerateMetricError&) {
            completed[j] = 0;
        }
    });

    std::vector<double> vals;
    vals.reserve(n_samples);
    for (int j = 0; j < n_samples; ++j)
        if (completed[j]) vals.push_back(log_phi[j]);
    DensityEstimate est;
    est.n_samples = static_cast<int>(vals.size());
    est.n_aborted = n_samples - est.n_samples;
    if (vals.empty())
        throw EstimationFailedError("all bridge samples aborted with a degenerate metric; density estimate unavailable");

    // log-sum-exp average of exp(log phi), plus the sample standard error of
    // the rescaled weights a_j = exp(log_phi_j - m).
    const double m = *std::max_element(vals.begin(), vals.end());
    double sum_a = 0.0;
    for (double lp : vals) sum_a += std::exp(lp - m);
    const double mean_a = sum_a / est.n_samples;
    est.log_value = log_c + m + std::log(mean_a);
    est.value = std::exp(est.log_value);
    if (est.n_samples > 1) {
        double ss = 0.0;
        for (double lp : vals) {
            const double diff = std::exp(lp - m) - mean_a;
            ss += diff * diff;
        }
        const double sd_a = std::sqrt(ss / (est.n_samples - 1));
        est.std_error = std::exp(log_c + m) * sd_a / std::sqrt(static_cast<double>(est.n_samples));
    }
    return est;
}

}  // namespace lmbridge
