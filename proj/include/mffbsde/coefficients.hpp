#pragma once

#include "mffbsde/core.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace mffbsde {

/// Deterministic matrix of time, piecewise constant on the grid
/// (left-continuous): at(k) is the value on [s_k, s_{k+1}).
class TimeMatrix {
public:
    TimeMatrix() = default;
    TimeMatrix(MatrixXd constant) : vals_{std::move(constant)} {}
    TimeMatrix(std::vector<MatrixXd> per_step) : vals_(std::move(per_step)) {
        if (vals_.empty()) throw DomainError("TimeMatrix: empty per-step list");
    }

    static TimeMatrix zeros(int rows, int cols) { return TimeMatrix(MatrixXd::Zero(rows, cols)); }

    bool constant() const { return vals_.size() == 1; }
    int steps() const { return static_cast<int>(vals_.size()); }
    int rows() const { return static_cast<int>(vals_.front().rows()); }
    int cols() const { return static_cast<int>(vals_.front().cols()); }

    const MatrixXd& at(int k) const { return vals_[constant() ? 0 : static_cast<std::size_t>(k)]; }

    /// sup over steps of the operator norm (the L^infinity bound).
    double sup_norm() const {
        double s = 0.0;
        for (const auto& m : vals_) s = std::max(s, operator_norm(m));
        return s;
    }

    template <typename F>
    TimeMatrix map(F&& f) const {
        std::vector<MatrixXd> out;
        out.reserve(vals_.size());
        for (const auto& m : vals_) out.push_back(f(m));
        return TimeMatrix(std::move(out));
    }

    friend TimeMatrix blend_tm(const TimeMatrix& a, const TimeMatrix& b, double alpha) {
        if (a.constant() && b.constant()) return TimeMatrix(alpha * a.at(0) + (1 - alpha) * b.at(0));
        const int n = std::max(a.steps(), b.steps());
        std::vector<MatrixXd> out;
        out.reserve(n);
        for (int k = 0; k < n; ++k) out.push_back(alpha * a.at(k) + (1 - alpha) * b.at(k));
        return TimeMatrix(std::move(out));
    }

private:
    std::vector<MatrixXd> vals_;
};

inline TimeMatrix tm_mul(const TimeMatrix& a, const TimeMatrix& b) {
    if (a.constant() && b.constant()) return TimeMatrix(a.at(0) * b.at(0));
    const int n = std::max(a.steps(), b.steps());
    std::vector<MatrixXd> out;
    out.reserve(n);
    for (int k = 0; k < n; ++k) out.push_back(a.at(k) * b.at(k));
    return TimeMatrix(std::move(out));
}

inline TimeMatrix tm_scale(double c, const TimeMatrix& a) {
    return a.map([c](const MatrixXd& m) { return MatrixXd(c * m); });
}

inline TimeMatrix tm_sub(const TimeMatrix& a, const TimeMatrix& b) {
    if (a.constant() && b.constant()) return TimeMatrix(a.at(0) - b.at(0));
    const int n = std::max(a.steps(), b.steps());
    std::vector<MatrixXd> out;
    out.reserve(n);
    for (int k = 0; k < n; ++k) out.push_back(a.at(k) - b.at(k));
    return TimeMatrix(std::move(out));
}

inline TimeMatrix tm_transpose(const TimeMatrix& a) {
    return a.map([](const MatrixXd& m) { return MatrixXd(m.transpose()); });
}

/// Vertical stack per step.
inline TimeMatrix tm_vstack(const TimeMatrix& a, const TimeMatrix& b) {
    auto stack = [](const MatrixXd& x, const MatrixXd& y) {
        MatrixXd m(x.rows() + y.rows(), x.cols());
        m << x, y;
        return m;
    };
    if (a.constant() && b.constant()) return TimeMatrix(stack(a.at(0), b.at(0)));
    const int n = std::max(a.steps(), b.steps());
    std::vector<MatrixXd> out;
    out.reserve(n);
    for (int k = 0; k < n; ++k) out.push_back(stack(a.at(k), b.at(k)));
    return TimeMatrix(std::move(out));
}

/// Horizontal stack per step.
inline TimeMatrix tm_hstack(const TimeMatrix& a, const TimeMatrix& b) {
    auto stack = [](const MatrixXd& x, const MatrixXd& y) {
        MatrixXd m(x.rows(), x.cols() + y.cols());
        m << x, y;
        return m;
    };
    if (a.constant() && b.constant()) return TimeMatrix(stack(a.at(0), b.at(0)));
    const int n = std::max(a.steps(), b.steps());
    std::vector<MatrixXd> out;
    out.reserve(n);
    for (int k = 0; k < n; ++k) out.push_back(stack(a.at(k), b.at(k)));
    return TimeMatrix(std::move(out));
}

/// One row block of Gamma: X(s, theta, theta') =
///   x_m x + y_m y + z_m z + xp_m x' + yp_m y' + zp_m z' + c(s),
/// with z stacked component-wise in R^{nd}.
struct LinearBlock {
    TimeMatrix x, y, z, xp, yp, zp;
    TimeMatrix c;  // offset, column vector

    static LinearBlock zeros(int rows, int n, int nd) {
        LinearBlock blk;
        blk.x = TimeMatrix::zeros(rows, n);
        blk.y = TimeMatrix::zeros(rows, n);
        blk.z = TimeMatrix::zeros(rows, nd);
        blk.xp = TimeMatrix::zeros(rows, n);
        blk.yp = TimeMatrix::zeros(rows, n);
        blk.zp = TimeMatrix::zeros(rows, nd);
        blk.c = TimeMatrix::zeros(rows, 1);
        return blk;
    }

    VectorXd eval(int k, const VectorXd& xv, const VectorXd& yv, const VectorXd& zv,
                  const VectorXd& xpv, const VectorXd& ypv, const VectorXd& zpv) const {
        return x.at(k) * xv + y.at(k) * yv + z.at(k) * zv + xp.at(k) * xpv + yp.at(k) * ypv +
               zp.at(k) * zpv + c.at(k).col(0);
    }
};

/// Explicit-matrix representation of (Psi, Phi, Gamma).
struct LinearSpec {
    MatrixXd psi_y;   // n x n
    VectorXd psi_c;   // n
    MatrixXd phi_x, phi_xp;  // n x n
    VectorXd phi_c;   // n
    LinearBlock g, b;     // rows n
    LinearBlock sigma;    // rows n*d, components stacked

    static LinearSpec zeros(const Dimensions& dims) {
        LinearSpec ls;
        const int n = dims.n, nd = dims.n * dims.d;
        ls.psi_y = MatrixXd::Zero(n, n);
        ls.psi_c = VectorXd::Zero(n);
        ls.phi_x = MatrixXd::Zero(n, n);
        ls.phi_xp = MatrixXd::Zero(n, n);
        ls.phi_c = VectorXd::Zero(n);
        ls.g = LinearBlock::zeros(n, n, nd);
        ls.b = LinearBlock::zeros(n, n, nd);
        ls.sigma = LinearBlock::zeros(nd, n, nd);
        return ls;
    }
};

/// The coefficient tuple (Psi, Phi, Gamma = (g, b, sigma)) of the system as
/// evaluable maps. z arguments and sigma values are stacked in R^{nd}
/// (component i occupies rows [i n, (i+1) n)). Gamma pairs against theta in
/// the order (g <-> x, b <-> y, sigma <-> z).
struct CoefficientSet {
    using PsiFn = std::function<VectorXd(const VectorXd& y)>;
    using PhiFn = std::function<VectorXd(const VectorXd& x, const VectorXd& xp)>;
    using GammaFn = std::function<VectorXd(int k, double s, const VectorXd& x, const VectorXd& y,
                                           const VectorXd& z, const VectorXd& xp,
                                           const VectorXd& yp, const VectorXd& zp)>;

    Dimensions dims;
    PsiFn psi;
    PhiFn phi;
    GammaFn g, b;
    GammaFn sigma;  // returns R^{nd}
    std::optional<LinearSpec> linear;

    bool is_linear() const { return linear.has_value(); }

    static CoefficientSet zero(const Dimensions& dims) {
        return from_linear(dims, LinearSpec::zeros(dims));
    }

    static CoefficientSet from_linear(const Dimensions& dims, LinearSpec spec) {
        validate_linear(dims, spec);
        CoefficientSet cs;
        cs.dims = dims;
        // Evaluators share ownership of the spec so copies of the set stay valid.
        auto ls = std::make_shared<const LinearSpec>(std::move(spec));
        cs.linear = *ls;
        cs.psi = [ls](const VectorXd& y) -> VectorXd { return ls->psi_y * y + ls->psi_c; };
        cs.phi = [ls](const VectorXd& x, const VectorXd& xp) -> VectorXd {
            return ls->phi_x * x + ls->phi_xp * xp + ls->phi_c;
        };
        cs.g = [ls](int k, double, const VectorXd& x, const VectorXd& y, const VectorXd& z,
                    const VectorXd& xp, const VectorXd& yp, const VectorXd& zp) -> VectorXd {
            return ls->g.eval(k, x, y, z, xp, yp, zp);
        };
        cs.b = [ls](int k, double, const VectorXd& x, const VectorXd& y, const VectorXd& z,
                    const VectorXd& xp, const VectorXd& yp, const VectorXd& zp) -> VectorXd {
            return ls->b.eval(k, x, y, z, xp, yp, zp);
        };
        cs.sigma = [ls](int k, double, const VectorXd& x, const VectorXd& y, const VectorXd& z,
                        const VectorXd& xp, const VectorXd& yp, const VectorXd& zp) -> VectorXd {
            return ls->sigma.eval(k, x, y, z, xp, yp, zp);
        };
        return cs;
    }

    static void validate_linear(const Dimensions& dims, const LinearSpec& ls) {
        const int n = dims.n, nd = dims.n * dims.d;
        auto check = [](bool ok, const char* what) {
            if (!ok) throw DomainError(std::string("LinearSpec: bad shape for ") + what);
        };
        check(ls.psi_y.rows() == n && ls.psi_y.cols() == n, "psi_y");
        check(ls.psi_c.size() == n, "psi_c");
        check(ls.phi_x.rows() == n && ls.phi_x.cols() == n, "phi_x");
        check(ls.phi_xp.rows() == n && ls.phi_xp.cols() == n, "phi_xp");
        check(ls.phi_c.size() == n, "phi_c");
        auto check_block = [&](const LinearBlock& blk, int rows, const char* what) {
            check(blk.x.rows() == rows && blk.x.cols() == n, what);
            check(blk.y.rows() == rows && blk.y.cols() == n, what);
            check(blk.z.rows() == rows && blk.z.cols() == nd, what);
            check(blk.xp.rows() == rows && blk.xp.cols() == n, what);
            check(blk.yp.rows() == rows && blk.yp.cols() == n, what);
            check(blk.zp.rows() == rows && blk.zp.cols() == nd, what);
            check(blk.c.rows() == rows && blk.c.cols() == 1, what);
        };
        check_block(ls.g, n, "g");
        check_block(ls.b, n, "b");
        check_block(ls.sigma, nd, "sigma");
    }
};

namespace detail {

inline LinearBlock blend_block(const LinearBlock& a, const LinearBlock& b, double alpha) {
    LinearBlock out;
    out.x = blend_tm(a.x, b.x, alpha);
    out.y = blend_tm(a.y, b.y, alpha);
    out.z = blend_tm(a.z, b.z, alpha);
    out.xp = blend_tm(a.xp, b.xp, alpha);
    out.yp = blend_tm(a.yp, b.yp, alpha);
    out.zp = blend_tm(a.zp, b.zp, alpha);
    out.c = blend_tm(a.c, b.c, alpha);
    return out;
}

}  // namespace detail

/// Convex combination alpha * target + (1 - alpha) * reference, pointwise in
/// every component. LINEAR + LINEAR stays LINEAR.
inline CoefficientSet blend(const CoefficientSet& target, const CoefficientSet& reference,
                            double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("blend: alpha outside [0,1]");
    if (target.dims.n != reference.dims.n || target.dims.d != reference.dims.d)
        throw DomainError("blend: dimension mismatch");
    if (target.is_linear() && reference.is_linear()) {
        const LinearSpec& t = *target.linear;
        const LinearSpec& r = *reference.linear;
        LinearSpec out;
        out.psi_y = alpha * t.psi_y + (1 - alpha) * r.psi_y;
        out.psi_c = alpha * t.psi_c + (1 - alpha) * r.psi_c;
        out.phi_x = alpha * t.phi_x + (1 - alpha) * r.phi_x;
        out.phi_xp = alpha * t.phi_xp + (1 - alpha) * r.phi_xp;
        out.phi_c = alpha * t.phi_c + (1 - alpha) * r.phi_c;
        out.g = detail::blend_block(t.g, r.g, alpha);
        out.b = detail::blend_block(t.b, r.b, alpha);
        out.sigma = detail::blend_block(t.sigma, r.sigma, alpha);
        return CoefficientSet::from_linear(target.dims, std::move(out));
    }
    CoefficientSet cs;
    cs.dims = target.dims;
    const CoefficientSet t = target;  // capture by value, sets are immutable
    const CoefficientSet r = reference;
    cs.psi = [t, r, alpha](const VectorXd& y) -> VectorXd {
        return alpha * t.psi(y) + (1 - alpha) * r.psi(y);
    };
    cs.phi = [t, r, alpha](const VectorXd& x, const VectorXd& xp) -> VectorXd {
        return alpha * t.phi(x, xp) + (1 - alpha) * r.phi(x, xp);
    };
    auto mix = [alpha](const CoefficientSet::GammaFn& ft, const CoefficientSet::GammaFn& fr) {
        return [ft, fr, alpha](int k, double s, const VectorXd& x, const VectorXd& y,
                               const VectorXd& z, const VectorXd& xp, const VectorXd& yp,
                               const VectorXd& zp) -> VectorXd {
            return alpha * ft(k, s, x, y, z, xp, yp, zp) + (1 - alpha) * fr(k, s, x, y, z, xp, yp, zp);
        };
    };
    cs.g = mix(t.g, r.g);
    cs.b = mix(t.b, r.b);
    cs.sigma = mix(t.sigma, r.sigma);
    return cs;
}

// ---------------------------------------------------------------------------
// Domination weights (Assumption-style data)
// ---------------------------------------------------------------------------

enum class CaseFlag { A, B };

/// The weights (mu, nu, H, P, Pt, A, At, B, Bt, C, Ct). Case A: mu > 0 and
/// nu = 0; Case B: mu = 0 and nu > 0. C blocks act on stacked z, so they are
/// m3 x (n d) with component i in columns [i n, (i+1) n).
struct DominationWeights {
    CaseFlag flag = CaseFlag::A;
    double mu = 0.0;
    double nu = 0.0;
    MatrixXd H;        // m1 x n
    MatrixXd P, Pt;    // m2 x n
    TimeMatrix A, At;  // m3 x n
    TimeMatrix B, Bt;  // m3 x n
    TimeMatrix C, Ct;  // m3 x (n d)

    static DominationWeights zeros(CaseFlag flag, double value, int n, int d, int m1 = 1,
                                   int m2 = 1, int m3 = 1) {
        DominationWeights w;
        w.flag = flag;
        w.mu = flag == CaseFlag::A ? value : 0.0;
        w.nu = flag == CaseFlag::B ? value : 0.0;
        w.H = MatrixXd::Zero(m1, n);
        w.P = MatrixXd::Zero(m2, n);
        w.Pt = MatrixXd::Zero(m2, n);
        w.A = TimeMatrix::zeros(m3, n);
        w.At = TimeMatrix::zeros(m3, n);
        w.B = TimeMatrix::zeros(m3, n);
        w.Bt = TimeMatrix::zeros(m3, n);
        w.C = TimeMatrix::zeros(m3, n * d);
        w.Ct = TimeMatrix::zeros(m3, n * d);
        return w;
    }

    void validate() const {
        const bool case_a = flag == CaseFlag::A;
        if (case_a && !(mu > 0.0 && nu == 0.0))
            throw DomainError("DominationWeights: Case A needs mu > 0 and nu = 0");
        if (!case_a && !(mu == 0.0 && nu > 0.0))
            throw DomainError("DominationWeights: Case B needs mu = 0 and nu > 0");
    }
};

}  // namespace mffbsde
