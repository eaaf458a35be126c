#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace mffbsde {

inline constexpr const char* kVersion = "0.1.0";

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StepContractionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RankError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NoConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConsistencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConditioningError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Uniform grid t0 = s_0 < s_1 < ... < s_N = T with step h = (T-t0)/N.
struct TimeGrid {
    double t0 = 0.0;
    double T = 1.0;
    int steps = 1;

    TimeGrid() = default;
    TimeGrid(double t0_, double T_, int steps_) : t0(t0_), T(T_), steps(steps_) {
        if (!(T > t0)) throw DomainError("TimeGrid: T must exceed t0");
        if (steps < 1) throw DomainError("TimeGrid: steps must be >= 1");
    }

    double h() const { return (T - t0) / steps; }
    double point(int k) const { return t0 + k * h(); }
};

/// State dimension n, Brownian dimension d, control dimension m (0 when absent).
struct Dimensions {
    int n = 1;
    int d = 1;
    int m = 0;

    Dimensions() = default;
    Dimensions(int n_, int d_, int m_ = 0) : n(n_), d(d_), m(m_) {
        if (n < 1 || d < 1 || m < 0) throw DomainError("Dimensions: need n >= 1, d >= 1, m >= 0");
    }

    int theta() const { return n * (2 + d); }  // size of (x, y, z) stacked
};

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace detail {

// Fixed-order cascade over [lo, hi); bit-reproducible regardless of worker count.
template <typename F>
auto pairwise_reduce(std::ptrdiff_t lo, std::ptrdiff_t hi, F&& leaf) -> decltype(leaf(lo)) {
    if (hi - lo == 1) return leaf(lo);
    const std::ptrdiff_t mid = lo + (hi - lo) / 2;
    return pairwise_reduce(lo, mid, leaf) + pairwise_reduce(mid, hi, leaf);
}

}  // namespace detail

/// Pairwise (cascade) sum of the columns of a matrix.
inline VectorXd pairwise_col_sum(const MatrixXd& v) {
    if (v.cols() == 0) return VectorXd::Zero(v.rows());
    return detail::pairwise_reduce(0, v.cols(), [&](std::ptrdiff_t j) -> VectorXd { return v.col(j); });
}

/// Pairwise sum of a vector of scalars.
inline double pairwise_sum(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return detail::pairwise_reduce(0, static_cast<std::ptrdiff_t>(v.size()),
                                   [&](std::ptrdiff_t j) { return v[j]; });
}

// ---------------------------------------------------------------------------
// Matrix utilities
// ---------------------------------------------------------------------------

/// Largest singular value. SVD up to 64x64, power iteration on A^T A above.
inline double operator_norm(const MatrixXd& a) {
    if (a.rows() == 0 || a.cols() == 0) return 0.0;
    if (!a.allFinite()) throw NumericError("operator_norm: non-finite entries");
    if (a.rows() <= 64 && a.cols() <= 64) {
        Eigen::JacobiSVD<MatrixXd> svd(a);
        return svd.singularValues()(0);
    }
    const MatrixXd ata = a.transpose() * a;
    VectorXd x = VectorXd::Ones(ata.rows()).normalized();
    double lambda = 0.0;
    for (int it = 0; it < 10000; ++it) {
        VectorXd next = ata * x;
        const double norm = next.norm();
        if (norm == 0.0) return 0.0;
        next /= norm;
        const double lambda_next = next.dot(ata * next);
        if (std::abs(lambda_next - lambda) <= 1e-12 * std::max(1.0, lambda_next)) {
            lambda = lambda_next;
            break;
        }
        lambda = lambda_next;
        x = next;
    }
    return std::sqrt(std::max(0.0, lambda));
}

/// Symmetric square root with eigenvalues clamped at 0 (tolerance 1e-12).
inline MatrixXd sym_sqrt(const MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
    VectorXd ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) ev(i) = ev(i) > 1e-12 ? std::sqrt(ev(i)) : 0.0;
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Symmetric inverse square root; zero on the (clamped) null space.
inline MatrixXd sym_inv_sqrt(const MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
    VectorXd ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) ev(i) = ev(i) > 1e-12 ? 1.0 / std::sqrt(ev(i)) : 0.0;
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------
// Seed streams
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Counter-based stream: a value keyed by (seed, a, b, c, which), order independent.
inline std::uint64_t stream_u64(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                std::uint64_t c = 0, std::uint64_t which = 0) {
    std::uint64_t s = detail::splitmix64(seed ^ (a * 0xD6E8FEB86659FD93ull));
    s = detail::splitmix64(s ^ (b * 0xA5A5A5A5A5A5A5A5ull));
    s = detail::splitmix64(s ^ (c * 0xC2B2AE3D27D4EB4Full));
    return detail::splitmix64(s ^ which);
}

/// Uniform in (0,1], derived from the 53 high bits.
inline double stream_unit(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0, std::uint64_t which = 0) {
    const std::uint64_t u = stream_u64(seed, a, b, c, which);
    return ((u >> 11) + 1.0) * 0x1.0p-53;
}

/// Standard Gaussian via Box-Muller on two counter-based uniforms.
inline double stream_gauss(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                           std::uint64_t c = 0) {
    const double u1 = stream_unit(seed, a, b, c, 0);
    const double u2 = stream_unit(seed, a, b, c, 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// Uniform in [-r, r].
inline double stream_box(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c,
                         double r) {
    return (2.0 * stream_unit(seed, a, b, c, 2) - 1.0) * r;
}

}  // namespace mffbsde
