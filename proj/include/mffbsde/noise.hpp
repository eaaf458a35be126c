#pragma once

#include "mffbsde/core.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace mffbsde {

/// A finite scenario model of the Brownian driver on a time grid.
///
/// Values of a process at step k are matrices with one column per scenario
/// (rows = components). All backends here carry uniform scenario weights, and
/// expectations reduce in a fixed pairwise order.
class ScenarioBackend {
public:
    virtual ~ScenarioBackend() = default;

    virtual const TimeGrid& grid() const = 0;
    virtual int scenarios() const = 0;
    virtual int brownian_dim() const = 0;

    /// Brownian increment over [s_k, s_{k+1}] for scenario p.
    virtual VectorXd increment(int k, int p) const = 0;

    /// True when cond_exp() is an exact conditional expectation.
    virtual bool exact_cond_exp() const = 0;

    /// E[ values at level k+1 | F_{s_k} ], returned on the same scenario index.
    virtual MatrixXd cond_exp(int k, const MatrixXd& values) const = 0;

    /// Probability-weighted mean across scenarios (pairwise order).
    VectorXd mean(const MatrixXd& values) const {
        if (values.cols() != scenarios()) throw DomainError("mean: scenario count mismatch");
        return pairwise_col_sum(values) / static_cast<double>(scenarios());
    }
};

/// Exact binomial tree: every Brownian component moves by +-sqrt(h) each step,
/// a node at level k branches into 2^d children of equal weight. Values are
/// stored leaf-indexed; a level-k-measurable process is constant on blocks of
/// 2^{(N-k)d} consecutive leaves.
class TreeBackend final : public ScenarioBackend {
public:
    TreeBackend(TimeGrid grid, int d, std::uint64_t cap)
        : grid_(grid), d_(d), sqrt_h_(std::sqrt(grid.h())) {
        if (d < 1) throw DomainError("TreeBackend: d must be >= 1");
        const std::uint64_t depth = static_cast<std::uint64_t>(grid.steps) * d;
        if (depth >= 63 || (std::uint64_t{1} << depth) > cap)
            throw BudgetExceeded("TreeBackend: leaf count 2^(N*d) exceeds budget cap");
        leaves_ = std::uint64_t{1} << depth;
    }

    const TimeGrid& grid() const override { return grid_; }
    int scenarios() const override { return static_cast<int>(leaves_); }
    int brownian_dim() const override { return d_; }

    /// Leaves per level-k node.
    std::int64_t block_size(int k) const {
        return std::int64_t{1} << (static_cast<std::int64_t>(grid_.steps - k) * d_);
    }
    std::int64_t nodes(int k) const { return static_cast<std::int64_t>(leaves_) / block_size(k); }

    int branch(int k, int p) const {
        const int shift = (grid_.steps - 1 - k) * d_;
        return static_cast<int>((static_cast<std::uint64_t>(p) >> shift) & ((1u << d_) - 1));
    }

    VectorXd increment(int k, int p) const override {
        const int bits = branch(k, p);
        VectorXd dw(d_);
        for (int i = 0; i < d_; ++i) dw(i) = (bits >> i) & 1 ? sqrt_h_ : -sqrt_h_;
        return dw;
    }

    bool exact_cond_exp() const override { return true; }

    MatrixXd cond_exp(int k, const MatrixXd& values) const override {
        if (k < 0 || k >= grid_.steps) throw DomainError("cond_exp: level out of range");
        if (values.cols() != scenarios()) throw DomainError("cond_exp: scenario count mismatch");
        const std::int64_t parent = block_size(k);
        MatrixXd out(values.rows(), values.cols());
        for (std::int64_t j = 0; j < nodes(k); ++j) {
            // Average over the whole leaf block: exact for any leaf-indexed
            // input and reduces to the child average on adapted values.
            VectorXd acc = detail::pairwise_reduce(
                j * parent, (j + 1) * parent,
                [&](std::ptrdiff_t c) -> VectorXd { return values.col(c); });
            acc /= static_cast<double>(parent);
            out.middleCols(j * parent, parent).colwise() = acc;
        }
        return out;
    }

private:
    TimeGrid grid_;
    int d_;
    double sqrt_h_;
    std::uint64_t leaves_ = 1;
};

/// Seeded Monte-Carlo ensemble with counter-based Gaussian increments:
/// stream index (k, p, component), so generation order never matters.
class MonteCarloBackend final : public ScenarioBackend {
public:
    MonteCarloBackend(std::uint64_t seed, int paths, TimeGrid grid, int d)
        : grid_(grid), d_(d), paths_(paths), seed_(seed) {
        if (paths < 2) throw DomainError("MonteCarloBackend: need at least 2 paths");
        if (d < 1) throw DomainError("MonteCarloBackend: d must be >= 1");
        const double s = std::sqrt(grid.h());
        dw_.resize(grid.steps);
        for (int k = 0; k < grid.steps; ++k) {
            dw_[k].resize(d, paths);
            for (int p = 0; p < paths; ++p)
                for (int i = 0; i < d; ++i) dw_[k](i, p) = s * stream_gauss(seed, k, p, i);
        }
    }

    const TimeGrid& grid() const override { return grid_; }
    int scenarios() const override { return paths_; }
    int brownian_dim() const override { return d_; }
    std::uint64_t seed() const { return seed_; }

    VectorXd increment(int k, int p) const override { return dw_[k].col(p); }
    const MatrixXd& increments(int k) const { return dw_[k]; }

    bool exact_cond_exp() const override { return false; }
    MatrixXd cond_exp(int, const MatrixXd&) const override {
        throw DomainError("MonteCarloBackend: conditional expectations require regression");
    }

private:
    TimeGrid grid_;
    int d_;
    int paths_;
    std::uint64_t seed_;
    std::vector<MatrixXd> dw_;
};

/// Degenerate one-scenario backend with zero increments. Conditional
/// expectation is the identity. This reproduces the exact tree recursion for
/// systems whose diffusion vanishes identically (everything deterministic),
/// at O(1) scenarios instead of 2^{Nd}.
class SinglePathBackend final : public ScenarioBackend {
public:
    SinglePathBackend(TimeGrid grid, int d) : grid_(grid), d_(d) {
        if (d < 1) throw DomainError("SinglePathBackend: d must be >= 1");
    }

    const TimeGrid& grid() const override { return grid_; }
    int scenarios() const override { return 1; }
    int brownian_dim() const override { return d_; }
    VectorXd increment(int, int) const override { return VectorXd::Zero(d_); }
    bool exact_cond_exp() const override { return true; }
    MatrixXd cond_exp(int k, const MatrixXd& values) const override {
        if (k < 0 || k >= grid_.steps) throw DomainError("cond_exp: level out of range");
        return values;
    }

private:
    TimeGrid grid_;
    int d_;
};

inline std::shared_ptr<TreeBackend> make_tree(TimeGrid grid, int d,
                                              std::uint64_t cap = (std::uint64_t{1} << 20)) {
    return std::make_shared<TreeBackend>(grid, d, cap);
}

inline std::shared_ptr<MonteCarloBackend> sample_mc(std::uint64_t seed, int paths, TimeGrid grid,
                                                    int d) {
    return std::make_shared<MonteCarloBackend>(seed, paths, grid, d);
}

inline std::shared_ptr<SinglePathBackend> make_single_path(TimeGrid grid, int d) {
    return std::make_shared<SinglePathBackend>(grid, d);
}

}  // namespace mffbsde
