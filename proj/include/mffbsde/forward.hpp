#pragma once

#include "mffbsde/core.hpp"
#include "mffbsde/noise.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mffbsde {

/// Forward path values x[k] (n x M) with their cross-scenario means.
struct PathEnsemble {
    TimeGrid grid;
    int n = 0;
    std::vector<MatrixXd> x;      // N+1 entries
    std::vector<VectorXd> xbar;   // N+1 entries
};

/// Drift b(s_k, x, E[x]) for scenario p; diffusion returns the stacked
/// R^{nd} value (component i in rows [i n, (i+1) n)).
using SdeDriftFn =
    std::function<VectorXd(int k, double s, int p, const VectorXd& x, const VectorXd& xbar)>;
using SdeDiffusionFn =
    std::function<VectorXd(int k, double s, int p, const VectorXd& x, const VectorXd& xbar)>;

/// Explicit Euler for the mean-field SDE: the step-k mean enters the step-k
/// coefficients, so the recursion needs no inner fixed point.
inline PathEnsemble solve_mf_sde(const SdeDriftFn& b, const SdeDiffusionFn& sigma,
                                 const MatrixXd& x_init, const ScenarioBackend& backend) {
    const TimeGrid& grid = backend.grid();
    const int M = backend.scenarios();
    const int d = backend.brownian_dim();
    const int n = static_cast<int>(x_init.rows());
    if (x_init.cols() != M && x_init.cols() != 1)
        throw DomainError("solve_mf_sde: x_init must have 1 or M columns");

    PathEnsemble path;
    path.grid = grid;
    path.n = n;
    path.x.resize(grid.steps + 1);
    path.xbar.resize(grid.steps + 1);
    path.x[0] = x_init.cols() == M ? x_init : MatrixXd(x_init.col(0).replicate(1, M));
    if (!path.x[0].allFinite()) throw NumericError("solve_mf_sde: non-finite initial value");

    const double h = grid.h();
    for (int k = 0; k < grid.steps; ++k) {
        path.xbar[k] = backend.mean(path.x[k]);
        const double s = grid.point(k);
        MatrixXd next(n, M);
        for (int p = 0; p < M; ++p) {
            const VectorXd xp = path.x[k].col(p);
            VectorXd inc = b(k, s, p, xp, path.xbar[k]) * h;
            const VectorXd sig = sigma(k, s, p, xp, path.xbar[k]);
            const VectorXd dw = backend.increment(k, p);
            for (int i = 0; i < d; ++i) inc += sig.segment(i * n, n) * dw(i);
            next.col(p) = xp + inc;
        }
        path.x[k + 1] = std::move(next);
        if (!path.x[k + 1].allFinite())
            throw NumericError("solve_mf_sde: blow-up at step " + std::to_string(k + 1));
    }
    path.xbar[grid.steps] = backend.mean(path.x[grid.steps]);
    return path;
}

/// Raw sides of a stability estimate; the empirical constant is lhs/rhs_core.
struct EstimateReport {
    double lhs = 0.0;
    double rhs_core = 0.0;
    double ratio() const { return lhs / rhs_core; }
};

/// Left side E[sup_k |x_A - x_B|^2] against the bracketed data term of the
/// two-solution stability estimate, with coefficient differences sampled
/// along solution B. The constant is not formed here: callers divide.
inline EstimateReport sde_estimate_report(const PathEnsemble& sol_a, const PathEnsemble& sol_b,
                                          const SdeDriftFn& b_a, const SdeDriftFn& b_b,
                                          const SdeDiffusionFn& sigma_a,
                                          const SdeDiffusionFn& sigma_b,
                                          const ScenarioBackend& backend) {
    const TimeGrid& grid = backend.grid();
    const int M = backend.scenarios();
    const double h = grid.h();

    EstimateReport rep;
    rep.lhs = detail::pairwise_reduce(0, M, [&](std::ptrdiff_t q) {
        const int p = static_cast<int>(q);
        double sup = 0.0;
        for (std::size_t k = 0; k < sol_a.x.size(); ++k)
            sup = std::max(sup, (sol_a.x[k].col(p) - sol_b.x[k].col(p)).squaredNorm());
        return sup;
    }) / M;

    const double init_gap = detail::pairwise_reduce(0, M, [&](std::ptrdiff_t q) {
        const int p = static_cast<int>(q);
        return (sol_a.x[0].col(p) - sol_b.x[0].col(p)).squaredNorm();
    }) / M;

    const double data_gap = detail::pairwise_reduce(0, M, [&](std::ptrdiff_t q) {
        const int p = static_cast<int>(q);
        double drift_l1 = 0.0, diff_l2 = 0.0;
        for (int k = 0; k < grid.steps; ++k) {
            const double s = grid.point(k);
            const VectorXd xb = sol_b.x[k].col(p);
            const VectorXd& mb = sol_b.xbar[k];
            drift_l1 += (b_a(k, s, p, xb, mb) - b_b(k, s, p, xb, mb)).norm() * h;
            diff_l2 += (sigma_a(k, s, p, xb, mb) - sigma_b(k, s, p, xb, mb)).squaredNorm() * h;
        }
        return drift_l1 * drift_l1 + diff_l2;
    }) / M;

    rep.rhs_core = init_gap + data_gap;
    if (rep.rhs_core == 0.0 && rep.lhs > 1e-12)
        throw ConsistencyError("sde_estimate_report: zero data gap with nonzero solution gap");
    return rep;
}

}  // namespace mffbsde
