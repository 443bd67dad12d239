// Maximum likelihood estimation of kernel parameters from observed
// configurations.
//
// The data log likelihood of theta = (q0, alpha, sigma) is the sum of log
// transition densities q0 -> q^i over the observations, each estimated by
// guided-bridge Monte Carlo. All estimates are driven by seeds derived
// deterministically from (master seed, iteration, observation, sample), so a
// fixed seed makes the likelihood an ordinary deterministic function: finite
// differences of it are meaningful (common random numbers), and whole runs
// are reproducible.
//
// Gradients are central finite differences in the natural parameters. The
// ascent itself runs in a transformed space (log alpha, log sigma_kk) so that
// positivity is automatic and step sizes are scale free.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lmbridge/bridge.hpp"
#include "lmbridge/errors.hpp"
#include "lmbridge/geometry.hpp"
#include "lmbridge/kernel.hpp"
#include "lmbridge/landmark.hpp"
#include "lmbridge/parallel.hpp"
#include "lmbridge/rng.hpp"
#include "lmbridge/sde.hpp"

namespace lmbridge {

// Full parameter point of the model.
struct ThetaParams {
    LandmarkConfig q0;
    KernelParams kernel;
};

// Which parameters an optimization run moves. With sigma_diag_only, only the
// diagonal of sigma is active and off-diagonal entries stay fixed.
struct ParamMask {
    bool q0 = true;
    bool alpha = true;
    bool sigma = true;
    bool sigma_diag_only = true;
};

struct OptimizerConfig {
    double step_size = 1e-2;        // initial (and maximal) ascent step in transformed space
    int max_iters = 50;
    int n_bridges = 20;             // Monte Carlo samples per density evaluation
    std::uint64_t master_seed = 0;
    ParamMask mask{};
    double convergence_tol = 1e-5;  // stop when the same-seed improvement drops below tol * (1 + |L|)
    double fd_step = 1e-4;          // relative finite-difference step
    int max_backtracks = 25;
};

namespace detail {

// Flat indexing of the active parameters, in the fixed order
//   [q0 entries (landmark-major)] [alpha] [sigma lower triangle, row major].
struct ParamLayout {
    bool q0 = false, alpha = false, sigma = false, diag_only = false;
    int n = 0, d = 0;
    int q0_size = 0, sigma_size = 0, total = 0;

    static ParamLayout make(const ParamMask& mask, int n, int d) {
        ParamLayout lay;
        lay.q0 = mask.q0;
        lay.alpha = mask.alpha;
        lay.sigma = mask.sigma;
        lay.diag_only = mask.sigma_diag_only;
        lay.n = n;
        lay.d = d;
        lay.q0_size = mask.q0 ? n * d : 0;
        lay.sigma_size = mask.sigma ? (mask.sigma_diag_only ? d : d * (d + 1) / 2) : 0;
        lay.total = lay.q0_size + (mask.alpha ? 1 : 0) + lay.sigma_size;
        return lay;
    }

    bool is_q0(int p) const { return p < q0_size; }
    bool is_alpha(int p) const { return alpha && p == q0_size; }
    // (row, col) of the sigma entry behind packed index p.
    std::pair<int, int> sigma_entry(int p) const {
        int s = p - q0_size - (alpha ? 1 : 0);
        if (diag_only) return {s, s};
        for (int r = 0; r < d; ++r) {
            if (s <= r) return {r, s};
            s -= r + 1;
        }
        return {d - 1, d - 1};  // unreachable for valid p
    }
    // Entries constrained to stay positive (alpha, sigma diagonal).
    bool is_positive(int p) const {
        if (is_q0(p)) return false;
        if (is_alpha(p)) return true;
        const auto [r, c] = sigma_entry(p);
        return r == c;
    }
};

inline double natural_value(const ThetaParams& theta, const ParamLayout& lay, int p) {
    if (lay.is_q0(p)) return theta.q0.flat()(p);
    if (lay.is_alpha(p)) return theta.kernel.alpha;
    const auto [r, c] = lay.sigma_entry(p);
    return theta.kernel.sigma(r, c);
}

inline ThetaParams with_natural(const ThetaParams& theta, const ParamLayout& lay, int p, double value) {
    if (lay.is_q0(p)) {
        Eigen::VectorXd flat = theta.q0.flat();
        flat(p) = value;
        return ThetaParams{LandmarkConfig::from_flat(flat, lay.n, lay.d), theta.kernel};
    }
    if (lay.is_alpha(p)) return ThetaParams{theta.q0, KernelParams(value, theta.kernel.sigma)};
    const auto [r, c] = lay.sigma_entry(p);
    Eigen::MatrixXd sigma = theta.kernel.sigma;
    sigma(r, c) = value;
    return ThetaParams{theta.q0, KernelParams(theta.kernel.alpha, sigma)};
}

// Ascent update in transformed coordinates: additive for q0 and sigma
// off-diagonals, multiplicative (exponential) for alpha and sigma diagonals.
inline ThetaParams apply_update(const ThetaParams& theta, const ParamLayout& lay,
                                const Eigen::Ref<const Eigen::VectorXd>& du) {
    Eigen::VectorXd q0_flat = theta.q0.flat();
    double alpha = theta.kernel.alpha;
    Eigen::MatrixXd sigma = theta.kernel.sigma;
    for (int p = 0; p < lay.total; ++p) {
        if (lay.is_q0(p)) {
            q0_flat(p) += du(p);
        } else if (lay.is_alpha(p)) {
            alpha *= std::exp(du(p));
        } else {
            const auto [r, c] = lay.sigma_entry(p);
            if (r == c)
                sigma(r, c) *= std::exp(du(p));
            else
                sigma(r, c) += du(p);
        }
    }
    return ThetaParams{LandmarkConfig::from_flat(q0_flat, lay.n, lay.d), KernelParams(alpha, sigma)};
}

// Chain rule from natural to transformed coordinates: d/d(log x) = x d/dx.
inline Eigen::VectorXd to_transformed(const Eigen::VectorXd& grad_nat, const ThetaParams& theta,
                                      const ParamLayout& lay) {
    Eigen::VectorXd g = grad_nat;
    for (int p = 0; p < lay.total; ++p) {
        if (lay.is_alpha(p)) {
            g(p) *= theta.kernel.alpha;
        } else if (!lay.is_q0(p)) {
            const auto [r, c] = lay.sigma_entry(p);
            if (r == c) g(p) *= theta.kernel.sigma(r, r);
        }
    }
    return g;
}

inline void check_observations(const std::vector<LandmarkConfig>& obs, const ThetaParams& theta) {
    if (obs.empty()) throw std::invalid_argument("likelihood needs at least one observation");
    for (const auto& o : obs)
        if (o.n_landmarks() != theta.q0.n_landmarks() || o.dim() != theta.q0.dim())
            throw std::invalid_argument("observation shape does not match q0");
    if (theta.kernel.dim() != theta.q0.dim())
        throw std::invalid_argument("kernel sigma dimension does not match landmark dimension");
}

}  // namespace detail

// Log likelihood of theta for a set of observed configurations, plus the
// per-observation density estimates. Observation i uses the sample streams
// derived from derive_seed(seed, {i}); for a fixed seed the value is a
// deterministic function of theta.
struct LikelihoodResult {
    double log_likelihood = 0.0;
    std::vector<DensityEstimate> per_observation;
};

inline LikelihoodResult log_likelihood(const ThetaParams& theta, const std::vector<LandmarkConfig>& observations,
                                       const TimeGrid& grid, int n_bridges, std::uint64_t seed) {
    detail::check_observations(observations, theta);
    const int m = static_cast<int>(observations.size());
    LikelihoodResult out;
    out.per_observation.resize(m);
    parallel_for(m, [&](int i) {
        try {
            out.per_observation[i] = estimate_density(theta.q0, observations[i], grid, theta.kernel, n_bridges,
                                                      derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        } catch (const EstimationFailedError& err) {
            std::ostringstream msg;
            msg << "observation " << i << ": " << err.what();
            throw EstimationFailedError(msg.str());
        }
    });
    for (const auto& est : out.per_observation) out.log_likelihood += est.log_value;
    return out;
}

// Central finite-difference gradient of the fixed-seed log likelihood in the
// natural parameters selected by mask, ordered as
// [q0 entries][alpha][sigma lower triangle]. Every evaluation reuses the same
// seed (common random numbers), so the differences see a smooth function.
inline Eigen::VectorXd grad_log_likelihood(const ThetaParams& theta, const std::vector<LandmarkConfig>& observations,
                                           const TimeGrid& grid, int n_bridges, std::uint64_t seed,
                                           const ParamMask& mask, double fd_step = 1e-4) {
    detail::check_observations(observations, theta);
    const detail::ParamLayout lay = detail::ParamLayout::make(mask, theta.q0.n_landmarks(), theta.q0.dim());
    if (lay.total == 0) throw std::invalid_argument("parameter mask selects nothing to differentiate");
    if (!(fd_step > 0.0) || !std::isfinite(fd_step)) throw std::invalid_argument("fd_step must be finite and positive");

    Eigen::VectorXd grad(lay.total);
    for (int p = 0; p < lay.total; ++p) {
        const double x = detail::natural_value(theta, lay, p);
        double h = fd_step * std::max(std::abs(x), 1e-2);
        if (lay.is_positive(p)) h = std::min(h, 0.4 * x);  // keep x - h positive
        const ThetaParams plus = detail::with_natural(theta, lay, p, x + h);
        const ThetaParams minus = detail::with_natural(theta, lay, p, x - h);
        const double lp = log_likelihood(plus, observations, grid, n_bridges, seed).log_likelihood;
        const double lm = log_likelihood(minus, observations, grid, n_bridges, seed).log_likelihood;
        grad(p) = (lp - lm) / (2.0 * h);
    }
    return grad;
}

// One optimization iteration as recorded in the trace. log_lik_before and
// log_lik_after are evaluated under the same seed, so their difference is the
// true effect of the parameter update.
struct IterationRecord {
    int iteration = 0;
    double log_lik_before = 0.0;
    double log_lik_after = 0.0;
    double grad_norm = 0.0;
    double step_used = 0.0;  // accepted transformed-space step; 0 when no step was accepted
    bool accepted = false;
    Eigen::VectorXd q0_flat;
    double alpha = 0.0;
    Eigen::MatrixXd sigma;
    std::vector<double> density_std_errors;  // per observation, at the pre-update theta
};

struct InferenceResult {
    ThetaParams theta;
    std::vector<IterationRecord> trace;
    bool converged = false;
    std::string message;
};

// Stochastic gradient ascent with per-iteration seed refresh, backtracking
// line search under the iteration's seed, and step regrowth after accepted
// moves. Returns the iterate with the highest observed likelihood. On a
// non-finite gradient or persistent failure to ascend the run stops and
// reports why in `message`.
inline InferenceResult infer(const std::vector<LandmarkConfig>& observations, const ThetaParams& theta_init,
                             const TimeGrid& grid, const OptimizerConfig& cfg) {
    detail::check_observations(observations, theta_init);
    const detail::ParamLayout lay =
        detail::ParamLayout::make(cfg.mask, theta_init.q0.n_landmarks(), theta_init.q0.dim());
    if (lay.total == 0) throw std::invalid_argument("parameter mask selects nothing to optimize");
    if (cfg.max_iters < 1) throw std::invalid_argument("optimizer needs at least one iteration");

    InferenceResult result{theta_init, {}, false, {}};
    ThetaParams theta = theta_init;
    double best_log_lik = -std::numeric_limits<double>::infinity();
    double step = cfg.step_size;
    int consecutive_failures = 0;

    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        const std::uint64_t seed_iter = derive_seed(cfg.master_seed, {static_cast<std::uint64_t>(iter)});
        const LikelihoodResult lik = log_likelihood(theta, observations, grid, cfg.n_bridges, seed_iter);
        if (lik.log_likelihood > best_log_lik) {
            best_log_lik = lik.log_likelihood;
            result.theta = theta;
        }

        Eigen::VectorXd grad_u;
        try {
            const Eigen::VectorXd grad_nat =
                grad_log_likelihood(theta, observations, grid, cfg.n_bridges, seed_iter, cfg.mask, cfg.fd_step);
            grad_u = detail::to_transformed(grad_nat, theta, lay);
        } catch (const std::runtime_error& err) {
            result.message = std::string("gradient evaluation failed: ") + err.what();
            return result;
        }
        if (!grad_u.allFinite()) {
            result.message = "gradient evaluation produced non-finite values";
            return result;
        }

        IterationRecord rec;
        rec.iteration = iter;
        rec.log_lik_before = lik.log_likelihood;
        rec.log_lik_after = lik.log_likelihood;
        rec.grad_norm = grad_u.norm();
        rec.density_std_errors.reserve(lik.per_observation.size());
        for (const auto& est : lik.per_observation) rec.density_std_errors.push_back(est.std_error);

        // Backtracking line search under the iteration's seed: accept the
        // first step that does not decrease the likelihood.
        double s = step;
        for (int b = 0; b <= cfg.max_backtracks; ++b, s *= 0.5) {
            ThetaParams trial = theta;
            double trial_log_lik;
            try {
                trial = detail::apply_update(theta, lay, s * grad_u);
                trial_log_lik = log_likelihood(trial, observations, grid, cfg.n_bridges, seed_iter).log_likelihood;
            } catch (const std::exception&) {
                continue;  // invalid parameters or failed estimate: halve and retry
            }
            if (std::isfinite(trial_log_lik) && trial_log_lik >= lik.log_likelihood) {
                rec.accepted = true;
                rec.step_used = s;
                rec.log_lik_after = trial_log_lik;
                theta = trial;
                break;
            }
        }

        rec.q0_flat = theta.q0.flat();
        rec.alpha = theta.kernel.alpha;
        rec.sigma = theta.kernel.sigma;
        result.trace.push_back(std::move(rec));
        const IterationRecord& r = result.trace.back();

        if (r.accepted) {
            consecutive_failures = 0;
            step = std::min(cfg.step_size, 1.5 * r.step_used);
            if (r.log_lik_after > best_log_lik) {
                best_log_lik = r.log_lik_after;
                result.theta = theta;
            }
            if (r.log_lik_after - r.log_lik_before <= cfg.convergence_tol * (1.0 + std::abs(r.log_lik_before))) {
                result.converged = true;
                result.message = "likelihood improvement below tolerance";
                break;
            }
        } else {
            if (++consecutive_failures >= 2) {
                result.converged = true;
                result.message = "no ascending step found in two consecutive iterations";
                break;
            }
        }
    }
    if (result.message.empty()) result.message = "iteration limit reached";
    return result;
}

// Intrinsic mean of the observations under the transition-density metric:
// the q0 that maximizes the likelihood with the kernel held fixed. Exactly
// infer() with a q0-only mask.
inline LandmarkConfig density_frechet_mean(const std::vector<LandmarkConfig>& observations,
                                           const KernelParams& kernel, const LandmarkConfig& q0_init,
                                           const TimeGrid& grid, OptimizerConfig cfg) {
    cfg.mask.q0 = true;
    cfg.mask.alpha = false;
    cfg.mask.sigma = false;
    return infer(observations, ThetaParams{q0_init, kernel}, grid, cfg).theta.q0;
}

}  // namespace lmbridge
