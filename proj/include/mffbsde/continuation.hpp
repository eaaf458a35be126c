#pragma once

#include "mffbsde/backward.hpp"
#include "mffbsde/coefficients.hpp"
#include "mffbsde/conditions.hpp"
#include "mffbsde/core.hpp"
#include "mffbsde/ensemble.hpp"
#include "mffbsde/forward.hpp"
#include "mffbsde/noise.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mffbsde {

struct ContinuationConfig {
    enum class Mode { Nested, Direct };

    double delta_init = 0.0;      // 0: use the probed 1/(2 sqrt(K3_hat))
    double delta_min = 1e-4;
    double fixpoint_tol = 1e-9;   // M^2-norm gap of successive iterates
    int max_iters = 50;           // per level
    double inner_tol_ratio = 0.1;
    Mode mode = Mode::Nested;
    double damping = 0.5;         // DIRECT mode update factor

    void validate() const {
        if (fixpoint_tol <= 0.0) throw DomainError("ContinuationConfig: fixpoint_tol must be > 0");
        if (delta_min <= 0.0) throw DomainError("ContinuationConfig: delta_min must be > 0");
        if (delta_init != 0.0 && (delta_init <= 0.0 || delta_init > 1.0))
            throw DomainError("ContinuationConfig: delta_init must lie in (0,1]");
        if (delta_init != 0.0 && delta_min > delta_init)
            throw DomainError("ContinuationConfig: delta_min must not exceed delta_init");
        if (damping <= 0.0 || damping > 1.0)
            throw DomainError("ContinuationConfig: damping must lie in (0,1]");
    }
};

struct SolveDiagnostics {
    std::vector<double> alpha_levels;        // levels visited (excluding 0)
    std::vector<int> level_iterations;
    std::vector<double> level_contraction;   // worst successive-gap ratio per level
    double residual = 0.0;
    double delta0_probe = 0.0;
    double mu_used = 0.0, nu_used = 0.0;
    bool clamped = false;
    bool direct_mode = false;                // DIRECT carries no convergence guarantee
    bool converged = false;
    int restarts = 0;
    std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// The decoupled alpha = 0 system
// ---------------------------------------------------------------------------

/// Solves the reference system under data (xi, eta, rho). Case A solves the
/// backward part first (its driver has no x) and feeds (y, z) into the
/// forward equation with x(t0) = -mu H^T H y(t0) + xi. Case B runs forward
/// first (drift psi, diffusion gamma, x(t0) = xi) and then backward with the
/// x-driven driver and terminal coupling.
inline SolutionEnsemble solve_alpha0(const DominationWeights& w, const Dimensions& dims,
                                     const PerturbationTriple& pert,
                                     const ScenarioBackend& backend,
                                     std::optional<RegressionConfig> regression = std::nullopt) {
    w.validate();
    const TimeGrid& grid = backend.grid();
    const int n = dims.n, d = dims.d;
    const int M = backend.scenarios();
    const CoefficientSet ref = reference_coefficients(w, dims);
    const VectorXd zn = VectorXd::Zero(n), znd = VectorXd::Zero(n * d);

    SolutionEnsemble th = SolutionEnsemble::zero(grid, n, d, M);

    if (w.flag == CaseFlag::A) {
        BsdeDriverFn driver = [&](int k, double, int p, const VectorXd&, const VectorXd&,
                                  const VectorXd&, const VectorXd&) -> VectorXd {
            return pert.phi[k].col(p);
        };
        BsdeResult back = solve_mf_bsde(driver, pert.eta, backend, regression);
        const VectorXd y0 = back.ybar[0];
        const VectorXd x_init = ref.psi(y0) + pert.xi;

        SdeDriftFn drift = [&](int k, double s, int p, const VectorXd&, const VectorXd&) -> VectorXd {
            return ref.b(k, s, zn, back.y[k].col(p), back.z[k].col(p), zn, back.ybar[k],
                         back.zbar[k]) +
                   pert.psi[k].col(p);
        };
        SdeDiffusionFn diff = [&](int k, double s, int p, const VectorXd&, const VectorXd&) -> VectorXd {
            return ref.sigma(k, s, zn, back.y[k].col(p), back.z[k].col(p), zn, back.ybar[k],
                             back.zbar[k]) +
                   pert.gamma[k].col(p);
        };
        PathEnsemble path = solve_mf_sde(drift, diff, x_init, backend);
        th.x = std::move(path.x);
        th.y = std::move(back.y);
        th.z = std::move(back.z);
    } else {
        SdeDriftFn drift = [&](int k, double, int p, const VectorXd&, const VectorXd&) -> VectorXd {
            return pert.psi[k].col(p);
        };
        SdeDiffusionFn diff = [&](int k, double, int p, const VectorXd&, const VectorXd&) -> VectorXd {
            return pert.gamma[k].col(p);
        };
        PathEnsemble path = solve_mf_sde(drift, diff, pert.xi, backend);

        MatrixXd y_term(n, M);
        for (int p = 0; p < M; ++p)
            y_term.col(p) =
                ref.phi(path.x[grid.steps].col(p), path.xbar[grid.steps]) + pert.eta.col(p);
        BsdeDriverFn driver = [&](int k, double s, int p, const VectorXd&, const VectorXd&,
                                  const VectorXd&, const VectorXd&) -> VectorXd {
            return ref.g(k, s, path.x[k].col(p), zn, znd, path.xbar[k], zn, znd) +
                   pert.phi[k].col(p);
        };
        BsdeResult back = solve_mf_bsde(driver, y_term, backend, regression);
        th.x = std::move(path.x);
        th.y = std::move(back.y);
        th.z = std::move(back.z);
    }
    th.refresh_means(backend);
    return th;
}

// ---------------------------------------------------------------------------
// The continuation map data
// ---------------------------------------------------------------------------

/// Data of the frozen-coefficient system: the step-delta difference between
/// the target and reference coefficients evaluated along theta_in, added to
/// the incoming data.
inline PerturbationTriple continuation_data(const CoefficientSet& target,
                                            const CoefficientSet& reference, double delta,
                                            const SolutionEnsemble& th,
                                            const PerturbationTriple& pert) {
    const TimeGrid& grid = th.grid;
    const int M = th.scenarios;
    const int N = grid.steps;

    PerturbationTriple out = pert;
    out.xi = delta * (target.psi(th.ybar[0]) - reference.psi(th.ybar[0])) + pert.xi;
    for (int p = 0; p < M; ++p)
        out.eta.col(p) += delta * (target.phi(th.x[N].col(p), th.xbar[N]) -
                                   reference.phi(th.x[N].col(p), th.xbar[N]));
    for (int k = 0; k < N; ++k) {
        const double s = grid.point(k);
        for (int p = 0; p < M; ++p) {
            const VectorXd x = th.x[k].col(p), y = th.y[k].col(p), z = th.z[k].col(p);
            const VectorXd &xb = th.xbar[k], &yb = th.ybar[k], &zb = th.zbar[k];
            out.phi[k].col(p) += delta * (target.g(k, s, x, y, z, xb, yb, zb) -
                                          reference.g(k, s, x, y, z, xb, yb, zb));
            out.psi[k].col(p) += delta * (target.b(k, s, x, y, z, xb, yb, zb) -
                                          reference.b(k, s, x, y, z, xb, yb, zb));
            out.gamma[k].col(p) += delta * (target.sigma(k, s, x, y, z, xb, yb, zb) -
                                            reference.sigma(k, s, x, y, z, xb, yb, zb));
        }
    }
    return out;
}

/// One application of the continuation map: assemble the data from theta_in
/// and hand it to a solver of the level-alpha0 system.
template <typename LevelSolver>
SolutionEnsemble t_map(const CoefficientSet& target, const CoefficientSet& reference, double delta,
                       const SolutionEnsemble& theta_in, const PerturbationTriple& pert,
                       LevelSolver&& level_solver) {
    return level_solver(continuation_data(target, reference, delta, theta_in, pert));
}

// ---------------------------------------------------------------------------
// Discrete consistency residual
// ---------------------------------------------------------------------------

/// Max-norm residual of the discrete system relations under an exact
/// conditional-expectation backend: forward recursion, backward mean and
/// increment-projection relations, initial and terminal couplings.
inline double system_residual(const CoefficientSet& coeffs, const PerturbationTriple& pert,
                              const SolutionEnsemble& th, const ScenarioBackend& backend) {
    if (!backend.exact_cond_exp())
        throw DomainError("system_residual: needs an exact conditional-expectation backend");
    const TimeGrid& grid = th.grid;
    const int n = th.n, d = th.d, M = th.scenarios, N = grid.steps;
    const double h = grid.h();

    double res = (th.x[0].col(0) - coeffs.psi(th.ybar[0]) - pert.xi).cwiseAbs().maxCoeff();
    for (int p = 0; p < M; ++p) {
        const double term = (th.y[N].col(p) - coeffs.phi(th.x[N].col(p), th.xbar[N]) -
                             pert.eta.col(p)).cwiseAbs().maxCoeff();
        res = std::max(res, term);
    }

    for (int k = 0; k < N; ++k) {
        const double s = grid.point(k);
        const MatrixXd ey = backend.cond_exp(k, th.y[k + 1]);
        MatrixXd ydw(n * d, M);
        for (int p = 0; p < M; ++p) {
            const VectorXd dw = backend.increment(k, p);
            for (int i = 0; i < d; ++i) ydw.col(p).segment(i * n, n) = th.y[k + 1].col(p) * dw(i);
        }
        const MatrixXd zproj = backend.cond_exp(k, ydw) / h;
        for (int p = 0; p < M; ++p) {
            const VectorXd x = th.x[k].col(p), y = th.y[k].col(p), z = th.z[k].col(p);
            const VectorXd dw = backend.increment(k, p);
            VectorXd fwd = th.x[k + 1].col(p) - x -
                           (coeffs.b(k, s, x, y, z, th.xbar[k], th.ybar[k], th.zbar[k]) +
                            pert.psi[k].col(p)) * h;
            const VectorXd sig = coeffs.sigma(k, s, x, y, z, th.xbar[k], th.ybar[k], th.zbar[k]) +
                                 pert.gamma[k].col(p);
            for (int i = 0; i < d; ++i) fwd -= sig.segment(i * n, n) * dw(i);
            res = std::max(res, fwd.cwiseAbs().maxCoeff());

            const VectorXd yrel = y - ey.col(p) +
                                  h * (coeffs.g(k, s, x, y, z, th.xbar[k], th.ybar[k], th.zbar[k]) +
                                       pert.phi[k].col(p));
            res = std::max(res, yrel.cwiseAbs().maxCoeff());
            res = std::max(res, (z - zproj.col(p)).cwiseAbs().maxCoeff());
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// The continuation solver
// ---------------------------------------------------------------------------

namespace detail {

struct LevelDiverged {
    std::size_t level;
    std::string reason;
};

}  // namespace detail

class ContinuationSolver {
public:
    ContinuationSolver(CoefficientSet target, DominationWeights weights, ContinuationConfig config,
                       const ScenarioBackend& backend,
                       std::optional<RegressionConfig> regression = std::nullopt)
        : target_(std::move(target)),
          weights_(std::move(weights)),
          cfg_(config),
          backend_(&backend),
          regression_(std::move(regression)) {
        cfg_.validate();
        weights_.validate();
        dims_ = target_.dims;
        clamp_weights();
        reference_ = reference_coefficients(weights_, dims_);
        if (!backend.exact_cond_exp() && backend.scenarios() > 20000)
            diag_.warnings.push_back(
                "nested continuation on a large Monte-Carlo ensemble is expensive");
    }

    const DominationWeights& weights() const { return weights_; }
    const CoefficientSet& reference() const { return reference_; }
    const SolveDiagnostics& diagnostics() const { return diag_; }

    /// Lipschitz constant of the one-step map (anchor 0, delta = 1) measured
    /// on probe pairs; the step bound is delta0 = 1 / (2 L_hat).
    double probe_delta0(int pairs = 5) {
        const int M = backend_->scenarios();
        double worst = 0.0;
        const std::uint64_t seed = 0xb10b5u;
        for (int i = 0; i < pairs; ++i) {
            PerturbationTriple da = random_constant_data(seed, 2 * i);
            PerturbationTriple db = random_constant_data(seed, 2 * i + 1);
            SolutionEnsemble ta = solve_alpha0(weights_, dims_, da, *backend_, regression_);
            SolutionEnsemble tb = solve_alpha0(weights_, dims_, db, *backend_, regression_);
            const double gap_in = m2_gap(ta, tb);
            if (gap_in < 1e-14) continue;
            const PerturbationTriple zero = PerturbationTriple::zero(backend_->grid(), dims_.n, dims_.d, M);
            SolutionEnsemble Ta = solve_alpha0(weights_, dims_,
                                               continuation_data(target_, reference_, 1.0, ta, zero),
                                               *backend_, regression_);
            SolutionEnsemble Tb = solve_alpha0(weights_, dims_,
                                               continuation_data(target_, reference_, 1.0, tb, zero),
                                               *backend_, regression_);
            worst = std::max(worst, m2_gap(Ta, Tb) / gap_in);
        }
        lipschitz_hat_ = worst > 0.0 ? worst : 1.0;
        diag_.delta0_probe = worst > 0.0 ? std::min(1.0, 1.0 / (2.0 * worst)) : 1.0;
        return diag_.delta0_probe;
    }

    std::pair<SolutionEnsemble, SolveDiagnostics> solve(const PerturbationTriple& pert) {
        diag_.alpha_levels.clear();
        diag_.level_iterations.clear();
        diag_.level_contraction.clear();
        diag_.mu_used = weights_.mu;
        diag_.nu_used = weights_.nu;
        diag_.converged = false;

        SolutionEnsemble theta = cfg_.mode == ContinuationConfig::Mode::Direct
                                     ? solve_direct(pert)
                                     : solve_nested(pert);

        if (backend_->exact_cond_exp()) {
            diag_.residual = system_residual(target_, pert, theta, *backend_);
            if (diag_.residual > 100.0 * std::max(cfg_.fixpoint_tol, 1e-12))
                throw ConsistencyError("continuation: residual " + std::to_string(diag_.residual) +
                                       " exceeds 100x tolerance");
        }
        diag_.converged = true;
        return {std::move(theta), diag_};
    }

    std::pair<SolutionEnsemble, SolveDiagnostics> solve() {
        return solve(PerturbationTriple::zero(backend_->grid(), dims_.n, dims_.d,
                                              backend_->scenarios()));
    }

    /// Solve the level-alpha system of the established chain for given data
    /// (exposed for the fixed-point and uniqueness diagnostics in tests).
    SolutionEnsemble solve_established(const PerturbationTriple& data,
                                       const SolutionEnsemble& guess, double tol) {
        if (levels_.size() <= 1) return solve_alpha0(weights_, dims_, data, *backend_, regression_);
        return solve_level(levels_.size() - 1, data, guess, tol, nullptr);
    }

    /// One application of the continuation map at the final chain level.
    SolutionEnsemble apply_final_t_map(const SolutionEnsemble& theta,
                                       const PerturbationTriple& pert, double tol) {
        if (levels_.size() < 2)
            return solve_alpha0(weights_, dims_,
                                continuation_data(target_, reference_, 1.0, theta, pert),
                                *backend_, regression_);
        const double delta = levels_.back() - levels_[levels_.size() - 2];
        return solve_at_level(levels_.size() - 2,
                              continuation_data(target_, reference_, delta, theta, pert), theta,
                              tol);
    }

private:
    struct LevelStats {
        int iterations = 0;
        double worst_ratio = 0.0;
    };

    // Damped fixed point of theta -> solve_alpha0(data + alpha * coeff-tilt(theta)),
    // the depth-one realization of the level-alpha system. Returns false when no
    // damping in the schedule converges.
    bool solve_damped(double alpha, const PerturbationTriple& data, SolutionEnsemble& theta,
                      double tol, double gamma_start, LevelStats* stats = nullptr) {
        const double floor_tol = std::max(tol, 1e-13);
        double gamma = std::min(1.0, gamma_start);
        for (; gamma >= 1.0 / 256.0; gamma /= 2.0) {
            SolutionEnsemble th = theta;
            double prev_gap = std::numeric_limits<double>::infinity();
            int growing = 0;
            bool failed = false;
            for (int it = 0; it < 2000; ++it) {
                PerturbationTriple tilted = continuation_data(target_, reference_, alpha, th, data);
                SolutionEnsemble mapped = solve_alpha0(weights_, dims_, tilted, *backend_, regression_);
                SolutionEnsemble next = th;
                for (std::size_t k = 0; k < next.x.size(); ++k) {
                    next.x[k] = (1 - gamma) * th.x[k] + gamma * mapped.x[k];
                    next.y[k] = (1 - gamma) * th.y[k] + gamma * mapped.y[k];
                }
                for (std::size_t k = 0; k < next.z.size(); ++k)
                    next.z[k] = (1 - gamma) * th.z[k] + gamma * mapped.z[k];
                next.refresh_means(*backend_);
                const double gap = m2_gap(next, th);
                th = std::move(next);
                if (stats) {
                    stats->iterations = it + 1;
                    if (std::isfinite(prev_gap) && prev_gap > 0.0)
                        stats->worst_ratio = std::max(stats->worst_ratio, gap / prev_gap);
                }
                if (gap < floor_tol * gamma) {
                    theta = std::move(th);
                    return true;
                }
                if (gap > prev_gap * (1.0 + 1e-12)) {
                    if (++growing >= 5 || gap > 1e7) {
                        failed = true;
                        break;
                    }
                } else {
                    growing = 0;
                }
                prev_gap = gap;
            }
            if (!failed) break;  // ran out of iterations without divergence: give up
        }
        return false;
    }

    double damping_for(double alpha) const {
        const double rho = alpha * lipschitz_hat_;
        return std::min(1.0, 1.0 / (1.0 + rho));
    }

    // Level solver used inside the continuation map: depth-one damped pass
    // first, recursive descent through the chain as the backstop.
    SolutionEnsemble solve_at_level(std::size_t idx, const PerturbationTriple& data,
                                    const SolutionEnsemble& guess, double tol) {
        if (idx == 0) return solve_alpha0(weights_, dims_, data, *backend_, regression_);
        const double alpha = levels_[idx];
        SolutionEnsemble theta = guess;
        if (solve_damped(alpha, data, theta, tol, damping_for(alpha))) return theta;
        return solve_level(idx, data, guess, tol, nullptr);
    }

    void clamp_weights() {
        const WlogReport wl = check_wlog(weights_, std::numeric_limits<double>::infinity());
        if (weights_.flag == CaseFlag::A && wl.caseA_required > 0.0) {
            const double cap = 1.0 / std::sqrt(wl.caseA_required);
            if (weights_.mu > cap) {
                weights_.mu = cap;
                diag_.clamped = true;
                diag_.warnings.push_back("mu clamped to " + std::to_string(cap) +
                                         " to satisfy the normalization inequality");
            }
        }
        if (weights_.flag == CaseFlag::B && wl.caseB_required > 0.0) {
            const double cap = 1.0 / std::sqrt(wl.caseB_required);
            if (weights_.nu > cap) {
                weights_.nu = cap;
                diag_.clamped = true;
                diag_.warnings.push_back("nu clamped to " + std::to_string(cap) +
                                         " to satisfy the normalization inequality");
            }
        }
    }

    PerturbationTriple random_constant_data(std::uint64_t seed, int tag) const {
        const TimeGrid& grid = backend_->grid();
        const int M = backend_->scenarios();
        PerturbationTriple p = PerturbationTriple::zero(grid, dims_.n, dims_.d, M);
        for (int i = 0; i < dims_.n; ++i) {
            p.xi(i) = stream_box(seed, tag, 0, i, 1.0);
            p.eta.row(i).setConstant(stream_box(seed, tag, 1, i, 1.0));
        }
        for (int k = 0; k < grid.steps; ++k) {
            for (int i = 0; i < dims_.n; ++i) {
                p.phi[k].row(i).setConstant(stream_box(seed, tag, 10 + k, i, 1.0));
                p.psi[k].row(i).setConstant(stream_box(seed, tag, 200 + k, i, 1.0));
            }
            for (int i = 0; i < dims_.n * dims_.d; ++i)
                p.gamma[k].row(i).setConstant(stream_box(seed, tag, 400 + k, i, 1.0));
        }
        return p;
    }

    // Picard on the continuation map anchored at the chain level idx-1.
    SolutionEnsemble solve_level(std::size_t idx, const PerturbationTriple& data,
                                 const SolutionEnsemble& guess, double tol, LevelStats* stats) {
        if (idx == 0) return solve_alpha0(weights_, dims_, data, *backend_, regression_);
        const double delta = levels_[idx] - levels_[idx - 1];
        const double inner_tol = std::max(tol * cfg_.inner_tol_ratio, 1e-13);

        SolutionEnsemble theta = guess;
        double prev_gap = std::numeric_limits<double>::infinity();
        int growing = 0;
        for (int it = 0; it < cfg_.max_iters; ++it) {
            PerturbationTriple tilted = continuation_data(target_, reference_, delta, theta, data);
            SolutionEnsemble next = solve_at_level(idx - 1, tilted, theta, inner_tol);
            const double gap = m2_gap(next, theta);
            if (stats) {
                stats->iterations = it + 1;
                if (std::isfinite(prev_gap) && prev_gap > 0.0)
                    stats->worst_ratio = std::max(stats->worst_ratio, gap / prev_gap);
            }
            theta = std::move(next);
            if (gap < tol) return theta;
            if (gap > prev_gap) {
                if (++growing >= 3)
                    throw detail::LevelDiverged{idx, "gap grew for 3 consecutive iterations"};
            } else {
                growing = 0;
            }
            if (gap > 1e6) throw detail::LevelDiverged{idx, "iterate gap exceeded 1e6"};
            prev_gap = gap;
        }
        throw detail::LevelDiverged{idx, "fixed point not reached within max_iters"};
    }

    SolutionEnsemble solve_nested(const PerturbationTriple& pert) {
        const double probed = diag_.delta0_probe > 0.0 ? diag_.delta0_probe : probe_delta0();
        double delta_cap = cfg_.delta_init > 0.0 ? cfg_.delta_init : probed;
        delta_cap = std::max(delta_cap, cfg_.delta_min);

        for (;;) {
            try {
                return run_chain(pert, delta_cap);
            } catch (const detail::LevelDiverged& err) {
                diag_.restarts += 1;
                const double bad_spacing =
                    err.level < levels_.size() && err.level >= 1
                        ? levels_[err.level] - levels_[err.level - 1]
                        : delta_cap;
                delta_cap = bad_spacing / 2.0;
                if (delta_cap < cfg_.delta_min)
                    throw NoConvergenceError(
                        "continuation: step underflow below delta_min (" + err.reason + ")");
                diag_.warnings.push_back("restarting with step cap " + std::to_string(delta_cap) +
                                         ": " + err.reason);
            }
        }
    }

    SolutionEnsemble run_chain(const PerturbationTriple& pert, double delta_cap) {
        diag_.alpha_levels.clear();
        diag_.level_iterations.clear();
        diag_.level_contraction.clear();
        levels_ = {0.0};
        SolutionEnsemble theta = solve_alpha0(weights_, dims_, pert, *backend_, regression_);
        double alpha = 0.0;
        double delta = delta_cap;
        while (alpha < 1.0 - 1e-14) {
            delta = std::min({delta, delta_cap, 1.0 - alpha});
            levels_.push_back(alpha + delta);
            LevelStats stats;
            try {
                theta = solve_level(levels_.size() - 1, pert, theta, cfg_.fixpoint_tol, &stats);
            } catch (const detail::LevelDiverged& err) {
                if (err.level + 1 == levels_.size()) {
                    // Only the freshly attempted level failed: retry it smaller.
                    levels_.pop_back();
                    delta /= 2.0;
                    if (delta < cfg_.delta_min)
                        throw NoConvergenceError(
                            "continuation: step underflow below delta_min (" + err.reason + ")");
                    continue;
                }
                throw;  // an established level failed; rebuild the chain
            }
            alpha += delta;
            diag_.alpha_levels.push_back(alpha);
            diag_.level_iterations.push_back(stats.iterations);
            diag_.level_contraction.push_back(stats.worst_ratio);
            if (stats.iterations <= 5) delta = std::min(delta * 1.5, 1.0);
        }
        return theta;
    }

    SolutionEnsemble solve_direct(const PerturbationTriple& pert) {
        diag_.direct_mode = true;
        diag_.warnings.push_back("direct mode: damped single-level iteration, no guarantee");
        const int M = backend_->scenarios();
        SolutionEnsemble theta = SolutionEnsemble::zero(backend_->grid(), dims_.n, dims_.d, M);
        LevelStats stats;
        if (!solve_damped(1.0, pert, theta, cfg_.fixpoint_tol, cfg_.damping, &stats))
            throw NoConvergenceError("continuation: direct iteration did not converge");
        diag_.alpha_levels.push_back(1.0);
        diag_.level_iterations.push_back(stats.iterations);
        diag_.level_contraction.push_back(stats.worst_ratio);
        return theta;
    }

    CoefficientSet target_, reference_;
    DominationWeights weights_;
    ContinuationConfig cfg_;
    const ScenarioBackend* backend_;
    std::optional<RegressionConfig> regression_;
    Dimensions dims_;
    std::vector<double> levels_;
    double lipschitz_hat_ = 1.0;
    SolveDiagnostics diag_;
};

/// One-call front end.
inline std::pair<SolutionEnsemble, SolveDiagnostics> solve_mf_fbsde(
    const CoefficientSet& coeffs, const DominationWeights& weights,
    const ContinuationConfig& config, const ScenarioBackend& backend,
    std::optional<PerturbationTriple> pert = std::nullopt,
    std::optional<RegressionConfig> regression = std::nullopt) {
    ContinuationSolver solver(coeffs, weights, config, backend, std::move(regression));
    if (pert) return solver.solve(*pert);
    return solver.solve();
}

// ---------------------------------------------------------------------------
// Estimate reporters
// ---------------------------------------------------------------------------

/// lhs = E[sup |x_A - x_B|^2 + sup |y_A - y_B|^2 + int |z_A - z_B|^2] against
/// the squared H-norm of the data difference; callers form K_hat = lhs / J_hat.
inline EstimateReport apriori_report(const SolutionEnsemble& theta_a,
                                     const SolutionEnsemble& theta_b,
                                     const PerturbationTriple& pert_a,
                                     const PerturbationTriple& pert_b, const TimeGrid& grid) {
    EstimateReport rep;
    const double gap = m2_gap(theta_a, theta_b);
    rep.lhs = gap * gap;

    PerturbationTriple diff = pert_a;
    diff.xi -= pert_b.xi;
    diff.eta -= pert_b.eta;
    for (std::size_t k = 0; k < diff.phi.size(); ++k) {
        diff.phi[k] -= pert_b.phi[k];
        diff.psi[k] -= pert_b.psi[k];
        diff.gamma[k] -= pert_b.gamma[k];
    }
    const double jn = h_norm(diff, grid);
    rep.rhs_core = jn * jn;
    if (rep.rhs_core == 0.0 && rep.lhs > 1e-12)
        throw ConsistencyError("apriori_report: zero data gap with nonzero solution gap");
    return rep;
}

/// Continuous-dependence report: solves the A-system, then compares against
/// theta_b with the coefficient differences sampled along theta_b.
inline EstimateReport wellposedness_report(const CoefficientSet& coeffs_a,
                                           const CoefficientSet& coeffs_b,
                                           const DominationWeights& weights_a,
                                           const SolutionEnsemble& theta_b,
                                           const ScenarioBackend& backend,
                                           const ContinuationConfig& config = {}) {
    const TimeGrid& grid = backend.grid();
    const int M = backend.scenarios();
    const int N = grid.steps;
    const double h = grid.h();

    auto [theta_a, diag] = solve_mf_fbsde(coeffs_a, weights_a, config, backend);
    (void)diag;

    EstimateReport rep;
    const double gap = m2_gap(theta_a, theta_b);
    rep.lhs = gap * gap;

    const VectorXd psi_gap = coeffs_a.psi(theta_b.ybar[0]) - coeffs_b.psi(theta_b.ybar[0]);
    double acc = psi_gap.squaredNorm();
    acc += detail::pairwise_reduce(0, M, [&](std::ptrdiff_t q) {
        const int p = static_cast<int>(q);
        return (coeffs_a.phi(theta_b.x[N].col(p), theta_b.xbar[N]) -
                coeffs_b.phi(theta_b.x[N].col(p), theta_b.xbar[N]))
            .squaredNorm();
    }) / M;
    acc += detail::pairwise_reduce(0, M, [&](std::ptrdiff_t q) {
        const int p = static_cast<int>(q);
        double g_l1 = 0.0, b_l1 = 0.0, s_l2 = 0.0;
        for (int k = 0; k < N; ++k) {
            const double s = grid.point(k);
            const VectorXd x = theta_b.x[k].col(p), y = theta_b.y[k].col(p), z = theta_b.z[k].col(p);
            const VectorXd &xb = theta_b.xbar[k], &yb = theta_b.ybar[k], &zb = theta_b.zbar[k];
            g_l1 += (coeffs_a.g(k, s, x, y, z, xb, yb, zb) - coeffs_b.g(k, s, x, y, z, xb, yb, zb))
                        .norm() * h;
            b_l1 += (coeffs_a.b(k, s, x, y, z, xb, yb, zb) - coeffs_b.b(k, s, x, y, z, xb, yb, zb))
                        .norm() * h;
            s_l2 += (coeffs_a.sigma(k, s, x, y, z, xb, yb, zb) -
                     coeffs_b.sigma(k, s, x, y, z, xb, yb, zb))
                        .squaredNorm() * h;
        }
        return g_l1 * g_l1 + b_l1 * b_l1 + s_l2;
    }) / M;

    rep.rhs_core = acc;
    if (rep.rhs_core == 0.0 && rep.lhs > 1e-12)
        throw ConsistencyError("wellposedness_report: zero data gap with nonzero solution gap");
    return rep;
}

}  // namespace mffbsde
