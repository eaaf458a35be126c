#pragma once

#include "mffbsde/core.hpp"
#include "mffbsde/noise.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mffbsde {

/// Conditional-expectation estimator for Monte-Carlo backends: ridge-regularized
/// least squares on polynomial features of a designated state. When no state is
/// supplied the cumulative Brownian path is used.
struct RegressionConfig {
    int degree = 2;
    double ridge = -1.0;               // < 0: auto scale 1e-8 * tr(F F^T)/q
    std::vector<MatrixXd> state;       // optional, N+1 entries of (q_raw x M)
};

/// Backward solution values: y on grid points, z on steps (stacked R^{nd}).
struct BsdeResult {
    TimeGrid grid;
    int n = 0;
    std::vector<MatrixXd> y;      // N+1
    std::vector<MatrixXd> z;      // N
    std::vector<VectorXd> ybar;   // N+1
    std::vector<VectorXd> zbar;   // N
};

/// Driver g(s_k, y, E[y], z, E[z]) for scenario p (z stacked in R^{nd}).
using BsdeDriverFn = std::function<VectorXd(int k, double s, int p, const VectorXd& y,
                                            const VectorXd& ybar, const VectorXd& z,
                                            const VectorXd& zbar)>;

namespace detail {

// Polynomial feature matrix (q x M) of the raw state columns, degree <= 2.
inline MatrixXd poly_features(const MatrixXd& state, int degree) {
    const int q_raw = static_cast<int>(state.rows());
    const int M = static_cast<int>(state.cols());
    int q = 1 + q_raw;
    if (degree >= 2) q += q_raw * (q_raw + 1) / 2;
    MatrixXd f(q, M);
    f.row(0).setOnes();
    f.middleRows(1, q_raw) = state;
    if (degree >= 2) {
        int r = 1 + q_raw;
        for (int i = 0; i < q_raw; ++i)
            for (int j = i; j < q_raw; ++j)
                f.row(r++) = state.row(i).cwiseProduct(state.row(j));
    }
    return f;
}

// Least-squares projection of each target row onto the row space of f.
inline MatrixXd regress(const MatrixXd& f, const MatrixXd& targets, double ridge) {
    const int q = static_cast<int>(f.rows());
    MatrixXd gram = f * f.transpose();
    if (ridge < 0.0) ridge = 1e-8 * gram.trace() / q;
    if (ridge == 0.0) {
        Eigen::FullPivLU<MatrixXd> lu(gram);
        if (!lu.isInvertible())
            throw RankError("regression system singular with ridge = 0; set ridge > 0");
        MatrixXd beta = lu.solve(f * targets.transpose());
        return beta.transpose() * f;
    }
    gram.diagonal().array() += ridge;
    Eigen::LDLT<MatrixXd> ldlt(gram);
    MatrixXd beta = ldlt.solve(f * targets.transpose());
    return beta.transpose() * f;
}

// Cumulative Brownian path W(s_k) per scenario, the default regression state.
inline std::vector<MatrixXd> brownian_state(const ScenarioBackend& backend) {
    const int N = backend.grid().steps;
    const int M = backend.scenarios();
    const int d = backend.brownian_dim();
    std::vector<MatrixXd> w(N + 1);
    w[0] = MatrixXd::Zero(d, M);
    for (int k = 0; k < N; ++k) {
        w[k + 1] = w[k];
        for (int p = 0; p < M; ++p) w[k + 1].col(p) += backend.increment(k, p);
    }
    return w;
}

// Max difference quotient of the driver in (y, ybar), one-shot sample.
inline double sample_driver_lipschitz(const BsdeDriverFn& g, const TimeGrid& grid, int n, int nd,
                                      double radius) {
    double worst = 0.0;
    const std::uint64_t seed = 0x9a3c5e71u;
    for (int s = 0; s < 32; ++s) {
        const int k = static_cast<int>(stream_u64(seed, s, 0) % grid.steps);
        auto box_vec = [&](int len, int tag) {
            VectorXd v(len);
            for (int i = 0; i < len; ++i) v(i) = stream_box(seed, s, tag, i, radius);
            return v;
        };
        const VectorXd z = box_vec(nd, 1), zbar = box_vec(nd, 2);
        const VectorXd y1 = box_vec(n, 3), y2 = box_vec(n, 4);
        const VectorXd m1 = box_vec(n, 5), m2 = box_vec(n, 6);
        const double den = (y1 - y2).norm() + (m1 - m2).norm();
        if (den < 1e-12) continue;
        const double s_pt = grid.point(k);
        const double num = (g(k, s_pt, 0, y1, m1, z, zbar) - g(k, s_pt, 0, y2, m2, z, zbar)).norm();
        worst = std::max(worst, num / den);
    }
    return worst;
}

}  // namespace detail

/// Backward induction for the mean-field BSDE
///   dy = g(s, y, E[y], z, E[z]) ds + sum_i z_i dW_i,  y(T) = y_T:
/// z_k is the increment projection (1/h) E_k[ y_{k+1} dW^T ]; y_k solves the
/// implicit relation y_k = E_k[y_{k+1}] - h g(s_k, y_k, E[y_k], z_k, E[z_k])
/// by Picard iteration with the mean inside the loop. Conditional
/// expectations are exact on tree backends and least-squares projections on
/// Monte-Carlo backends (plain mean at k = 0 where F_t is trivial).
inline BsdeResult solve_mf_bsde(const BsdeDriverFn& g, const MatrixXd& y_terminal,
                                const ScenarioBackend& backend,
                                std::optional<RegressionConfig> regression = std::nullopt) {
    const TimeGrid& grid = backend.grid();
    const int M = backend.scenarios();
    const int d = backend.brownian_dim();
    const int n = static_cast<int>(y_terminal.rows());
    const int nd = n * d;
    const double h = grid.h();
    if (y_terminal.cols() != M) throw DomainError("solve_mf_bsde: y_terminal needs M columns");
    if (!y_terminal.allFinite()) throw NumericError("solve_mf_bsde: non-finite terminal value");

    const double scale = 1.0 + y_terminal.cwiseAbs().maxCoeff();
    const double lip = detail::sample_driver_lipschitz(g, grid, n, nd, 2.0 * scale);
    if (h * lip >= 1.0)
        throw StepContractionError("solve_mf_bsde: h * L_g = " + std::to_string(h * lip) +
                                   " >= 1; refine the grid");

    const bool exact = backend.exact_cond_exp();
    std::vector<MatrixXd> feat;
    if (!exact) {
        RegressionConfig cfg = regression.value_or(RegressionConfig{});
        std::vector<MatrixXd> state =
            cfg.state.empty() ? detail::brownian_state(backend) : cfg.state;
        feat.resize(grid.steps + 1);
        for (int k = 0; k <= grid.steps; ++k) feat[k] = detail::poly_features(state[k], cfg.degree);
    }
    const double ridge = regression ? regression->ridge : -1.0;

    auto project = [&](int k, const MatrixXd& values) -> MatrixXd {
        if (exact) return backend.cond_exp(k, values);
        if (k == 0) {
            VectorXd m = backend.mean(values);
            return m.replicate(1, M);
        }
        return detail::regress(feat[k], values, ridge);
    };

    BsdeResult res;
    res.grid = grid;
    res.n = n;
    res.y.resize(grid.steps + 1);
    res.z.resize(grid.steps);
    res.ybar.resize(grid.steps + 1);
    res.zbar.resize(grid.steps);
    res.y[grid.steps] = y_terminal;
    res.ybar[grid.steps] = backend.mean(y_terminal);

    for (int k = grid.steps - 1; k >= 0; --k) {
        // z from the increment projection, before the y fixed point.
        MatrixXd ydw(nd, M);
        for (int p = 0; p < M; ++p) {
            const VectorXd dw = backend.increment(k, p);
            for (int i = 0; i < d; ++i) ydw.col(p).segment(i * n, n) = res.y[k + 1].col(p) * dw(i);
        }
        res.z[k] = project(k, ydw) / h;
        res.zbar[k] = backend.mean(res.z[k]);

        const MatrixXd ey = project(k, res.y[k + 1]);
        const double s = grid.point(k);
        MatrixXd y = ey;
        VectorXd ybar = backend.mean(y);
        bool converged = false;
        for (int it = 0; it < 200; ++it) {
            MatrixXd y_next(n, M);
            for (int p = 0; p < M; ++p)
                y_next.col(p) =
                    ey.col(p) - h * g(k, s, p, y.col(p), ybar, res.z[k].col(p), res.zbar[k]);
            const double change = (y_next - y).cwiseAbs().maxCoeff();
            y = std::move(y_next);
            ybar = backend.mean(y);
            if (change <= 1e-12 * std::max(1.0, y.cwiseAbs().maxCoeff())) {
                converged = true;
                break;
            }
        }
        if (!converged)
            throw StepContractionError("solve_mf_bsde: implicit step did not contract at step " +
                                       std::to_string(k));
        if (!y.allFinite()) throw NumericError("solve_mf_bsde: blow-up at step " + std::to_string(k));
        res.y[k] = std::move(y);
        res.ybar[k] = ybar;
    }
    return res;
}

struct EstimateReportB {
    double lhs = 0.0;
    double rhs_core = 0.0;
    double ratio() const { return lhs / rhs_core; }
};

/// Analogue of sde_estimate_report for the backward stability estimate.
inline EstimateReportB bsde_estimate_report(const BsdeResult& sol_a, const BsdeResult& sol_b,
                                            const BsdeDriverFn& g_a, const BsdeDriverFn& g_b,
                                            const ScenarioBackend& backend) {
    const TimeGrid& grid = backend.grid();
    const int M = backend.scenarios();
    const double h = grid.h();

    EstimateReportB rep;
    rep.lhs = detail::pairwise_reduce(0, M, [&](std::ptrdiff_t q) {
        const int p = static_cast<int>(q);
        double sup = 0.0, zacc = 0.0;
        for (std::size_t k = 0; k < sol_a.y.size(); ++k)
            sup = std::max(sup, (sol_a.y[k].col(p) - sol_b.y[k].col(p)).squaredNorm());
        for (std::size_t k = 0; k < sol_a.z.size(); ++k)
            zacc += (sol_a.z[k].col(p) - sol_b.z[k].col(p)).squaredNorm() * h;
        return sup + zacc;
    }) / M;

    rep.rhs_core = detail::pairwise_reduce(0, M, [&](std::ptrdiff_t q) {
        const int p = static_cast<int>(q);
        const int N = grid.steps;
        double term = (sol_a.y[N].col(p) - sol_b.y[N].col(p)).squaredNorm();
        double drift_l1 = 0.0;
        for (int k = 0; k < N; ++k) {
            const double s = grid.point(k);
            const VectorXd yb = sol_b.y[k].col(p);
            const VectorXd zb = sol_b.z[k].col(p);
            drift_l1 += (g_a(k, s, p, yb, sol_b.ybar[k], zb, sol_b.zbar[k]) -
                         g_b(k, s, p, yb, sol_b.ybar[k], zb, sol_b.zbar[k]))
                            .norm() *
                        h;
        }
        return term + drift_l1 * drift_l1;
    }) / M;

    if (rep.rhs_core == 0.0 && rep.lhs > 1e-12)
        throw ConsistencyError("bsde_estimate_report: zero data gap with nonzero solution gap");
    return rep;
}

}  // namespace mffbsde
