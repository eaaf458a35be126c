#pragma once

#include "mffbsde/core.hpp"
#include "mffbsde/noise.hpp"

#include <utility>
#include <vector>

namespace mffbsde {

/// Grid- and scenario-indexed values of theta = (x, y, z) plus their
/// cross-scenario means. x, y live on grid points 0..N; z on steps 0..N-1.
/// z columns stack the d components: (z_1; ...; z_d), each in R^n.
struct SolutionEnsemble {
    TimeGrid grid;
    int n = 0;
    int d = 0;
    int scenarios = 0;

    std::vector<MatrixXd> x, y;   // N+1 entries, n x M
    std::vector<MatrixXd> z;      // N entries, (n d) x M
    std::vector<VectorXd> xbar, ybar;
    std::vector<VectorXd> zbar;

    static SolutionEnsemble zero(const TimeGrid& grid, int n, int d, int scenarios) {
        SolutionEnsemble th;
        th.grid = grid;
        th.n = n;
        th.d = d;
        th.scenarios = scenarios;
        th.x.assign(grid.steps + 1, MatrixXd::Zero(n, scenarios));
        th.y.assign(grid.steps + 1, MatrixXd::Zero(n, scenarios));
        th.z.assign(grid.steps, MatrixXd::Zero(n * d, scenarios));
        th.xbar.assign(grid.steps + 1, VectorXd::Zero(n));
        th.ybar.assign(grid.steps + 1, VectorXd::Zero(n));
        th.zbar.assign(grid.steps, VectorXd::Zero(n * d));
        return th;
    }

    void refresh_means(const ScenarioBackend& backend) {
        for (int k = 0; k <= grid.steps; ++k) {
            xbar[k] = backend.mean(x[k]);
            ybar[k] = backend.mean(y[k]);
        }
        for (int k = 0; k < grid.steps; ++k) zbar[k] = backend.mean(z[k]);
    }

    bool shape_valid() const {
        const auto N = static_cast<std::size_t>(grid.steps);
        return x.size() == N + 1 && y.size() == N + 1 && z.size() == N && xbar.size() == N + 1 &&
               ybar.size() == N + 1 && zbar.size() == N;
    }
};

/// Data (xi, eta, rho = (phi, psi, gamma)) perturbing the system: xi shifts
/// the initial condition, eta the terminal condition, phi the backward
/// driver, psi the forward drift, gamma the forward diffusion.
struct PerturbationTriple {
    VectorXd xi;                     // n, deterministic
    MatrixXd eta;                    // n x M
    std::vector<MatrixXd> phi;       // N entries, n x M   (backward driver)
    std::vector<MatrixXd> psi;       // N entries, n x M   (forward drift)
    std::vector<MatrixXd> gamma;     // N entries, (n d) x M

    static PerturbationTriple zero(const TimeGrid& grid, int n, int d, int scenarios) {
        PerturbationTriple p;
        p.xi = VectorXd::Zero(n);
        p.eta = MatrixXd::Zero(n, scenarios);
        p.phi.assign(grid.steps, MatrixXd::Zero(n, scenarios));
        p.psi.assign(grid.steps, MatrixXd::Zero(n, scenarios));
        p.gamma.assign(grid.steps, MatrixXd::Zero(n * d, scenarios));
        return p;
    }
};

namespace detail {

inline void require_finite(const MatrixXd& v, const char* what) {
    if (!v.allFinite()) throw NumericError(std::string("non-finite values in ") + what);
}

// E[f(p)] with uniform weights, pairwise order.
template <typename F>
double mean_over(int scenarios, F&& f) {
    return detail::pairwise_reduce(0, scenarios, [&](std::ptrdiff_t p) { return f(static_cast<int>(p)); }) /
           scenarios;
}

}  // namespace detail

/// || theta ||_{M^2} = sqrt( E[sup_k |x_k|^2] + E[sup_k |y_k|^2] + E[sum_k |z_k|^2 h] ).
inline double m2_norm(const SolutionEnsemble& th) {
    if (!th.shape_valid()) throw DomainError("m2_norm: inconsistent shapes");
    const double h = th.grid.h();
    const int M = th.scenarios;
    const double ex = detail::mean_over(M, [&](int p) {
        double sup = 0.0;
        for (const auto& xk : th.x) sup = std::max(sup, xk.col(p).squaredNorm());
        return sup;
    });
    const double ey = detail::mean_over(M, [&](int p) {
        double sup = 0.0;
        for (const auto& yk : th.y) sup = std::max(sup, yk.col(p).squaredNorm());
        return sup;
    });
    const double ez = detail::mean_over(M, [&](int p) {
        double acc = 0.0;
        for (const auto& zk : th.z) acc += zk.col(p).squaredNorm() * h;
        return acc;
    });
    const double total = ex + ey + ez;
    if (!std::isfinite(total)) throw NumericError("m2_norm: non-finite values");
    return std::sqrt(total);
}

/// M^2 distance between two ensembles on the same grid/backend.
inline double m2_gap(const SolutionEnsemble& a, const SolutionEnsemble& b) {
    if (a.scenarios != b.scenarios || a.grid.steps != b.grid.steps)
        throw DomainError("m2_gap: mismatched ensembles");
    const double h = a.grid.h();
    const int M = a.scenarios;
    const double ex = detail::mean_over(M, [&](int p) {
        double sup = 0.0;
        for (std::size_t k = 0; k < a.x.size(); ++k)
            sup = std::max(sup, (a.x[k].col(p) - b.x[k].col(p)).squaredNorm());
        return sup;
    });
    const double ey = detail::mean_over(M, [&](int p) {
        double sup = 0.0;
        for (std::size_t k = 0; k < a.y.size(); ++k)
            sup = std::max(sup, (a.y[k].col(p) - b.y[k].col(p)).squaredNorm());
        return sup;
    });
    const double ez = detail::mean_over(M, [&](int p) {
        double acc = 0.0;
        for (std::size_t k = 0; k < a.z.size(); ++k)
            acc += (a.z[k].col(p) - b.z[k].col(p)).squaredNorm() * h;
        return acc;
    });
    const double total = ex + ey + ez;
    if (!std::isfinite(total)) throw NumericError("m2_gap: non-finite values");
    return std::sqrt(total);
}

/// || (xi, eta, rho) ||_{H} with the L^1-in-time treatment of (phi, psi).
inline double h_norm(const PerturbationTriple& pert, const TimeGrid& grid) {
    const double h = grid.h();
    const int M = static_cast<int>(pert.eta.cols());
    detail::require_finite(pert.eta, "eta");
    const double e_eta = detail::mean_over(M, [&](int p) { return pert.eta.col(p).squaredNorm(); });
    const double e_phi = detail::mean_over(M, [&](int p) {
        double acc = 0.0;
        for (const auto& f : pert.phi) acc += f.col(p).norm() * h;
        return acc * acc;
    });
    const double e_psi = detail::mean_over(M, [&](int p) {
        double acc = 0.0;
        for (const auto& f : pert.psi) acc += f.col(p).norm() * h;
        return acc * acc;
    });
    const double e_gamma = detail::mean_over(M, [&](int p) {
        double acc = 0.0;
        for (const auto& g : pert.gamma) acc += g.col(p).squaredNorm() * h;
        return acc;
    });
    const double total = pert.xi.squaredNorm() + e_eta + e_phi + e_psi + e_gamma;
    if (!std::isfinite(total)) throw NumericError("h_norm: non-finite values");
    return std::sqrt(total);
}

/// X = (X - E[X]) + E[X]: returns (first, second) with second = backend mean.
inline std::pair<MatrixXd, VectorXd> decompose(const MatrixXd& values,
                                               const ScenarioBackend& backend) {
    detail::require_finite(values, "decompose input");
    VectorXd second = backend.mean(values);
    MatrixXd first = values.colwise() - second;
    return {std::move(first), std::move(second)};
}

}  // namespace mffbsde
