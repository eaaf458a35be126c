#pragma once

#include "mffbsde/coefficients.hpp"
#include "mffbsde/core.hpp"
#include "mffbsde/ensemble.hpp"
#include "mffbsde/noise.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

namespace mffbsde {

// ---------------------------------------------------------------------------
// Lipschitz estimation
// ---------------------------------------------------------------------------

struct LipschitzEstimate {
    double psi = 0.0, phi = 0.0, g = 0.0, b = 0.0, sigma = 0.0;
    bool exact = false;
    double overall() const { return std::max({psi, phi, g, b, sigma}); }
};

namespace detail {

inline VectorXd box_sample(std::uint64_t seed, std::uint64_t s, int tag, int len, double radius) {
    VectorXd v(len);
    for (int i = 0; i < len; ++i) v(i) = stream_box(seed, s, static_cast<std::uint64_t>(tag) * 131 + i, 7, radius);
    return v;
}

inline double sample_radius(std::uint64_t seed, std::uint64_t s, double base) {
    // 10% of samples probe far out to catch growth.
    return stream_unit(seed, s, 999) < 0.1 ? 20.0 * base : base;
}

}  // namespace detail

/// Worst difference quotient per coefficient over sampled argument pairs
/// (uniform box plus coordinate-axis sweeps). LINEAR specs get the exact
/// operator norm of the stacked coefficient matrices instead.
inline LipschitzEstimate estimate_lipschitz(const CoefficientSet& coeffs, const TimeGrid& grid,
                                            int sample_budget = 1000, double box_radius = 5.0) {
    if (sample_budget < 100) throw DomainError("estimate_lipschitz: budget must be >= 100");
    const int n = coeffs.dims.n, nd = coeffs.dims.n * coeffs.dims.d;
    LipschitzEstimate est;

    if (coeffs.is_linear()) {
        const LinearSpec& ls = *coeffs.linear;
        est.exact = true;
        est.psi = operator_norm(ls.psi_y);
        est.phi = operator_norm(tm_hstack(TimeMatrix(ls.phi_x), TimeMatrix(ls.phi_xp)).at(0));
        auto block_norm = [](const LinearBlock& blk) {
            TimeMatrix all = tm_hstack(
                tm_hstack(tm_hstack(blk.x, blk.y), tm_hstack(blk.z, blk.xp)),
                tm_hstack(blk.yp, blk.zp));
            return all.sup_norm();
        };
        est.g = block_norm(ls.g);
        est.b = block_norm(ls.b);
        est.sigma = block_norm(ls.sigma);
        return est;
    }

    const std::uint64_t seed = 0x11ce57u;
    auto quot = [&](const VectorXd& fa, const VectorXd& fb, double den) {
        if (den < 1e-12) return 0.0;
        const double q = (fa - fb).norm() / den;
        if (!std::isfinite(q)) throw NumericError("estimate_lipschitz: non-finite evaluation");
        return q;
    };

    // Random pairs.
    for (int s = 0; s < sample_budget; ++s) {
        const double r = detail::sample_radius(seed, s, box_radius);
        const int k = static_cast<int>(stream_u64(seed, s, 1) % grid.steps);
        const double sp = grid.point(k);
        const VectorXd y1 = detail::box_sample(seed, s, 0, n, r), y2 = detail::box_sample(seed, s, 1, n, r);
        est.psi = std::max(est.psi, quot(coeffs.psi(y1), coeffs.psi(y2), (y1 - y2).norm()));
        const VectorXd x1 = detail::box_sample(seed, s, 2, n, r), x2 = detail::box_sample(seed, s, 3, n, r);
        const VectorXd xp1 = detail::box_sample(seed, s, 4, n, r), xp2 = detail::box_sample(seed, s, 5, n, r);
        est.phi = std::max(est.phi, quot(coeffs.phi(x1, xp1), coeffs.phi(x2, xp2),
                                         (x1 - x2).norm() + (xp1 - xp2).norm()));
        const VectorXd z1 = detail::box_sample(seed, s, 6, nd, r), z2 = detail::box_sample(seed, s, 7, nd, r);
        const VectorXd yp1 = detail::box_sample(seed, s, 8, n, r), yp2 = detail::box_sample(seed, s, 9, n, r);
        const VectorXd zp1 = detail::box_sample(seed, s, 10, nd, r), zp2 = detail::box_sample(seed, s, 11, nd, r);
        const double den = (x1 - x2).norm() + (y1 - y2).norm() + (z1 - z2).norm() +
                           (xp1 - xp2).norm() + (yp1 - yp2).norm() + (zp1 - zp2).norm();
        est.g = std::max(est.g, quot(coeffs.g(k, sp, x1, y1, z1, xp1, yp1, zp1),
                                     coeffs.g(k, sp, x2, y2, z2, xp2, yp2, zp2), den));
        est.b = std::max(est.b, quot(coeffs.b(k, sp, x1, y1, z1, xp1, yp1, zp1),
                                     coeffs.b(k, sp, x2, y2, z2, xp2, yp2, zp2), den));
        est.sigma = std::max(est.sigma, quot(coeffs.sigma(k, sp, x1, y1, z1, xp1, yp1, zp1),
                                             coeffs.sigma(k, sp, x2, y2, z2, xp2, yp2, zp2), den));
    }

    // Coordinate-axis sweeps with small forward differences.
    const int sweeps = 200;
    const double step = 2.0 * box_radius / sweeps;
    const VectorXd zero_n = VectorXd::Zero(n), zero_nd = VectorXd::Zero(nd);
    for (int axis_set = 0; axis_set < 6; ++axis_set) {
        const int len = (axis_set == 2 || axis_set == 5) ? nd : n;
        for (int j = 0; j < len; ++j) {
            for (int i = 0; i < sweeps; ++i) {
                const double t = -box_radius + i * step;
                auto unit = [&](double v) {
                    VectorXd u = VectorXd::Zero(len);
                    u(j) = v;
                    return u;
                };
                const VectorXd a = unit(t), bpt = unit(t + step);
                auto args = [&](const VectorXd& v) {
                    std::array<VectorXd, 6> arr = {zero_n, zero_n, zero_nd, zero_n, zero_n, zero_nd};
                    arr[axis_set] = v;
                    return arr;
                };
                const auto aa = args(a), bb = args(bpt);
                const double den = step;
                if (axis_set == 1) {
                    est.psi = std::max(est.psi, quot(coeffs.psi(a), coeffs.psi(bpt), den));
                }
                if (axis_set == 0 || axis_set == 3) {
                    est.phi = std::max(est.phi, quot(coeffs.phi(aa[0], aa[3]), coeffs.phi(bb[0], bb[3]), den));
                }
                const int k = (i * 7) % grid.steps;
                const double sp = grid.point(k);
                est.g = std::max(est.g, quot(coeffs.g(k, sp, aa[0], aa[1], aa[2], aa[3], aa[4], aa[5]),
                                             coeffs.g(k, sp, bb[0], bb[1], bb[2], bb[3], bb[4], bb[5]), den));
                est.b = std::max(est.b, quot(coeffs.b(k, sp, aa[0], aa[1], aa[2], aa[3], aa[4], aa[5]),
                                             coeffs.b(k, sp, bb[0], bb[1], bb[2], bb[3], bb[4], bb[5]), den));
                est.sigma = std::max(est.sigma,
                                     quot(coeffs.sigma(k, sp, aa[0], aa[1], aa[2], aa[3], aa[4], aa[5]),
                                          coeffs.sigma(k, sp, bb[0], bb[1], bb[2], bb[3], bb[4], bb[5]), den));
            }
        }
    }
    return est;
}

// ---------------------------------------------------------------------------
// Condition reports
// ---------------------------------------------------------------------------

struct ConditionEntry {
    std::string name;
    bool checked = true;   // false when the condition vanishes (1/mu or 1/nu infinite)
    bool exact = false;
    double worst_margin = std::numeric_limits<double>::infinity();
    bool pass = true;
    std::vector<double> witness;  // arguments of the worst offender
};

struct ConditionReport {
    std::vector<ConditionEntry> entries;
    int samples = 0;
    bool pass = true;

    const ConditionEntry& entry(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return e;
        throw DomainError("ConditionReport: no entry named " + name);
    }
    void finish() {
        pass = true;
        for (const auto& e : entries) pass = pass && e.pass;
    }
};

namespace detail {

constexpr double kTieTol = 1e-12;

inline void record(ConditionEntry& e, double margin, const std::vector<double>& args) {
    if (margin < e.worst_margin) {
        e.worst_margin = margin;
        e.witness = args;
    }
    if (margin < -kTieTol) e.pass = false;
}

inline std::vector<double> flatten(std::initializer_list<const VectorXd*> vs) {
    std::vector<double> out;
    for (const auto* v : vs)
        for (int i = 0; i < v->size(); ++i) out.push_back((*v)(i));
    return out;
}

// |F v| <= c |D v| for all v  <=>  F (I - D+ D) = 0 and ||F D+|| <= c.
inline void exact_domination(ConditionEntry& e, const MatrixXd& f, const MatrixXd& d, double c) {
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(d);
    const MatrixXd dpinv = cod.pseudoInverse();
    const MatrixXd eye = MatrixXd::Identity(d.cols(), d.cols());
    const double residual = (f * (eye - dpinv * d)).cwiseAbs().maxCoeff();
    const double factor = operator_norm(f * dpinv);
    const double margin = std::min(1e-10 - residual, c - factor + 1e-9);
    e.exact = true;
    record(e, margin, {residual, factor});
}

}  // namespace detail

/// Checks the four domination inequalities by sampling argument pairs;
/// LINEAR specs are additionally checked exactly by range inclusion of the
/// difference maps in the dominating block matrices. Conditions whose 1/mu
/// or 1/nu is infinite auto-pass as vanished. Failures are reported, never
/// thrown.
inline ConditionReport check_domination(const CoefficientSet& coeffs,
                                        const DominationWeights& w, const TimeGrid& grid,
                                        int sample_budget = 10000, double box_radius = 5.0) {
    w.validate();
    const int n = coeffs.dims.n, nd = coeffs.dims.n * coeffs.dims.d;
    ConditionReport rep;
    rep.samples = sample_budget;
    rep.entries = {{"psi"}, {"phi"}, {"g"}, {"b"}, {"sigma"}};
    ConditionEntry& e_psi = rep.entries[0];
    ConditionEntry& e_phi = rep.entries[1];
    ConditionEntry& e_g = rep.entries[2];
    ConditionEntry& e_b = rep.entries[3];
    ConditionEntry& e_sig = rep.entries[4];

    const bool mu_active = w.mu > 0.0;
    const bool nu_active = w.nu > 0.0;
    e_psi.checked = mu_active;
    e_b.checked = e_sig.checked = mu_active;
    e_phi.checked = e_g.checked = nu_active;
    const double inv_mu = mu_active ? 1.0 / w.mu : 0.0;
    const double inv_nu = nu_active ? 1.0 / w.nu : 0.0;

    const std::uint64_t seed = 0xd0317a7eu;
    for (int s = 0; s < sample_budget; ++s) {
        const double r = detail::sample_radius(seed, s, box_radius);
        const int k = static_cast<int>(stream_u64(seed, s, 12) % grid.steps);
        const double sp = grid.point(k);

        if (mu_active) {
            const VectorXd y = detail::box_sample(seed, s, 20, n, r);
            const VectorXd yb = detail::box_sample(seed, s, 21, n, r);
            const VectorXd yhat = y - yb;
            detail::record(e_psi, inv_mu * (w.H * yhat).norm() - (coeffs.psi(y) - coeffs.psi(yb)).norm(),
                           detail::flatten({&y, &yb}));

            // f = b, sigma: increments in (y, y', z, z') with (x, x') held.
            const VectorXd x = detail::box_sample(seed, s, 22, n, r);
            const VectorXd xp = detail::box_sample(seed, s, 23, n, r);
            const VectorXd y1 = detail::box_sample(seed, s, 24, n, r), y2 = detail::box_sample(seed, s, 25, n, r);
            const VectorXd yp1 = detail::box_sample(seed, s, 26, n, r), yp2 = detail::box_sample(seed, s, 27, n, r);
            const VectorXd z1 = detail::box_sample(seed, s, 28, nd, r), z2 = detail::box_sample(seed, s, 29, nd, r);
            const VectorXd zp1 = detail::box_sample(seed, s, 30, nd, r), zp2 = detail::box_sample(seed, s, 31, nd, r);
            VectorXd top = w.B.at(k) * (y1 - y2 - (yp1 - yp2)) + w.C.at(k) * (z1 - z2 - (zp1 - zp2));
            VectorXd bot = w.Bt.at(k) * (yp1 - yp2) + w.Ct.at(k) * (zp1 - zp2);
            const double dom = inv_mu * std::sqrt(top.squaredNorm() + bot.squaredNorm());
            const auto args = detail::flatten({&x, &xp, &y1, &y2, &yp1, &yp2, &z1, &z2, &zp1, &zp2});
            detail::record(e_b, dom - (coeffs.b(k, sp, x, y1, z1, xp, yp1, zp1) -
                                       coeffs.b(k, sp, x, y2, z2, xp, yp2, zp2)).norm(), args);
            detail::record(e_sig, dom - (coeffs.sigma(k, sp, x, y1, z1, xp, yp1, zp1) -
                                         coeffs.sigma(k, sp, x, y2, z2, xp, yp2, zp2)).norm(), args);
        }

        if (nu_active) {
            const VectorXd x1 = detail::box_sample(seed, s, 40, n, r), x2 = detail::box_sample(seed, s, 41, n, r);
            const VectorXd xp1 = detail::box_sample(seed, s, 42, n, r), xp2 = detail::box_sample(seed, s, 43, n, r);
            const VectorXd xhat = x1 - x2, xphat = xp1 - xp2;
            VectorXd top = w.P * (xhat - xphat);
            VectorXd bot = w.Pt * xphat;
            detail::record(e_phi,
                           inv_nu * std::sqrt(top.squaredNorm() + bot.squaredNorm()) -
                               (coeffs.phi(x1, xp1) - coeffs.phi(x2, xp2)).norm(),
                           detail::flatten({&x1, &x2, &xp1, &xp2}));

            const VectorXd y = detail::box_sample(seed, s, 44, n, r);
            const VectorXd yp = detail::box_sample(seed, s, 45, n, r);
            const VectorXd z = detail::box_sample(seed, s, 46, nd, r);
            const VectorXd zp = detail::box_sample(seed, s, 47, nd, r);
            VectorXd gtop = w.A.at(k) * (xhat - xphat);
            VectorXd gbot = w.At.at(k) * xphat;
            detail::record(e_g,
                           inv_nu * std::sqrt(gtop.squaredNorm() + gbot.squaredNorm()) -
                               (coeffs.g(k, sp, x1, y, z, xp1, yp, zp) -
                                coeffs.g(k, sp, x2, y, z, xp2, yp, zp)).norm(),
                           detail::flatten({&x1, &x2, &xp1, &xp2}));
        }
    }

    if (coeffs.is_linear()) {
        const LinearSpec& ls = *coeffs.linear;
        auto zeros = [](int r, int c) { return MatrixXd::Zero(r, c); };
        if (mu_active) {
            detail::exact_domination(e_psi, ls.psi_y, w.H, inv_mu);
            const int steps = std::max({ls.b.y.steps(), ls.sigma.y.steps(), w.B.steps(), w.C.steps()});
            for (int k = 0; k < steps; ++k) {
                MatrixXd dom(2 * w.B.rows(), 2 * n + 2 * nd);
                dom << w.B.at(k), w.C.at(k), -w.B.at(k), -w.C.at(k),
                       zeros(w.B.rows(), n), zeros(w.B.rows(), nd), w.Bt.at(k), w.Ct.at(k);
                MatrixXd fb(n, 2 * n + 2 * nd);
                fb << ls.b.y.at(k), ls.b.z.at(k), ls.b.yp.at(k), ls.b.zp.at(k);
                detail::exact_domination(e_b, fb, dom, inv_mu);
                MatrixXd fs(nd, 2 * n + 2 * nd);
                fs << ls.sigma.y.at(k), ls.sigma.z.at(k), ls.sigma.yp.at(k), ls.sigma.zp.at(k);
                detail::exact_domination(e_sig, fs, dom, inv_mu);
            }
        }
        if (nu_active) {
            MatrixXd domp(2 * w.P.rows(), 2 * n);
            domp << w.P, -w.P, zeros(w.P.rows(), n), w.Pt;
            MatrixXd fp(n, 2 * n);
            fp << ls.phi_x, ls.phi_xp;
            detail::exact_domination(e_phi, fp, domp, inv_nu);
            const int steps = std::max(ls.g.x.steps(), w.A.steps());
            for (int k = 0; k < steps; ++k) {
                MatrixXd domg(2 * w.A.rows(), 2 * n);
                domg << w.A.at(k), -w.A.at(k), zeros(w.A.rows(), n), w.At.at(k);
                MatrixXd fg(n, 2 * n);
                fg << ls.g.x.at(k), ls.g.xp.at(k);
                detail::exact_domination(e_g, fg, domg, inv_nu);
            }
        }
    }

    rep.finish();
    return rep;
}

enum class Orientation { Standard, Primed };

/// Checks the monotonicity conditions on sampled finite-atom random variables
/// (1-, 2-, and 4-point laws realized on backend scenarios), using the
/// decomposition X = (X - E[X]) + E[X]. The primed orientation flips the
/// required signs.
inline ConditionReport check_monotonicity(const CoefficientSet& coeffs,
                                          const DominationWeights& w, const TimeGrid& grid,
                                          const ScenarioBackend& backend,
                                          int sample_budget = 10000,
                                          Orientation orientation = Orientation::Standard,
                                          double box_radius = 5.0) {
    w.validate();
    const int n = coeffs.dims.n, d = coeffs.dims.d, nd = n * d;
    const int M = backend.scenarios();
    const double sign = orientation == Orientation::Standard ? 1.0 : -1.0;

    ConditionReport rep;
    rep.samples = sample_budget;
    rep.entries = {{"psi_mono"}, {"phi_mono"}, {"gamma_mono"}};
    ConditionEntry& e_psi = rep.entries[0];
    ConditionEntry& e_phi = rep.entries[1];
    ConditionEntry& e_gam = rep.entries[2];

    const std::uint64_t seed = 0x31ca9fu;
    const int atom_choices[3] = {1, 2, 4};

    for (int s = 0; s < sample_budget; ++s) {
        const double r = detail::sample_radius(seed, s, box_radius);
        // (3:M:Psi) is pointwise.
        {
            const VectorXd y = detail::box_sample(seed, s, 50, n, r);
            const VectorXd yb = detail::box_sample(seed, s, 51, n, r);
            const VectorXd yhat = y - yb;
            const double lhs = sign * (coeffs.psi(y) - coeffs.psi(yb)).dot(yhat);
            const double rhs = w.mu * (w.H * yhat).squaredNorm();
            detail::record(e_psi, -rhs - lhs, detail::flatten({&y, &yb}));
        }

        int K = atom_choices[stream_u64(seed, s, 52) % 3];
        K = std::min(K, M);
        std::vector<double> wt(K, 0.0);
        for (int p = 0; p < M; ++p) wt[p % K] += 1.0 / M;

        auto mean_of = [&](const std::vector<VectorXd>& atoms) {
            VectorXd m = VectorXd::Zero(atoms[0].size());
            for (int a = 0; a < K; ++a) m += wt[a] * atoms[a];
            return m;
        };

        // (3:M:Phi) over K-atom terminal variables.
        {
            std::vector<VectorXd> X(K), Xb(K);
            for (int a = 0; a < K; ++a) {
                X[a] = detail::box_sample(seed, s, 60 + a, n, r);
                Xb[a] = detail::box_sample(seed, s, 70 + a, n, r);
            }
            const VectorXd ex = mean_of(X), exb = mean_of(Xb);
            std::vector<VectorXd> F(K), Fb(K);
            for (int a = 0; a < K; ++a) {
                F[a] = coeffs.phi(X[a], ex);
                Fb[a] = coeffs.phi(Xb[a], exb);
            }
            const VectorXd ef = mean_of(F), efb = mean_of(Fb);
            double lhs = (ef - efb).dot(ex - exb);
            double rhs = w.nu * (w.Pt * (ex - exb)).squaredNorm();
            for (int a = 0; a < K; ++a) {
                const VectorXd xh1 = (X[a] - ex) - (Xb[a] - exb);
                lhs += wt[a] * ((F[a] - ef) - (Fb[a] - efb)).dot(xh1);
                rhs += wt[a] * w.nu * (w.P * xh1).squaredNorm();
            }
            detail::record(e_phi, sign * lhs - rhs, {});
        }

        // (3:M:Gamma) over K-atom (X, Y, Z) at a sampled grid time.
        {
            const int k = static_cast<int>(stream_u64(seed, s, 53) % grid.steps);
            const double sp = grid.point(k);
            std::vector<VectorXd> X(K), Y(K), Z(K), Xb(K), Yb(K), Zb(K);
            for (int a = 0; a < K; ++a) {
                X[a] = detail::box_sample(seed, s, 100 + a, n, r);
                Y[a] = detail::box_sample(seed, s, 110 + a, n, r);
                Z[a] = detail::box_sample(seed, s, 120 + a, nd, r);
                Xb[a] = detail::box_sample(seed, s, 130 + a, n, r);
                Yb[a] = detail::box_sample(seed, s, 140 + a, n, r);
                Zb[a] = detail::box_sample(seed, s, 150 + a, nd, r);
            }
            const VectorXd ex = mean_of(X), ey = mean_of(Y), ez = mean_of(Z);
            const VectorXd exb = mean_of(Xb), eyb = mean_of(Yb), ezb = mean_of(Zb);
            std::vector<VectorXd> G(K), Bv(K), S(K), Gb(K), Bb(K), Sb(K);
            for (int a = 0; a < K; ++a) {
                G[a] = coeffs.g(k, sp, X[a], Y[a], Z[a], ex, ey, ez);
                Bv[a] = coeffs.b(k, sp, X[a], Y[a], Z[a], ex, ey, ez);
                S[a] = coeffs.sigma(k, sp, X[a], Y[a], Z[a], ex, ey, ez);
                Gb[a] = coeffs.g(k, sp, Xb[a], Yb[a], Zb[a], exb, eyb, ezb);
                Bb[a] = coeffs.b(k, sp, Xb[a], Yb[a], Zb[a], exb, eyb, ezb);
                Sb[a] = coeffs.sigma(k, sp, Xb[a], Yb[a], Zb[a], exb, eyb, ezb);
            }
            const VectorXd eg = mean_of(G), eb = mean_of(Bv), es = mean_of(S);
            const VectorXd egb = mean_of(Gb), ebb = mean_of(Bb), esb = mean_of(Sb);
            // second-part pairing <Gamma^(2) gap, Theta^(2) gap>
            double lhs = (eg - egb).dot(ex - exb) + (eb - ebb).dot(ey - eyb) + (es - esb).dot(ez - ezb);
            double rhs = w.nu * (w.At.at(k) * (ex - exb)).squaredNorm() +
                         w.mu * (w.Bt.at(k) * (ey - eyb) + w.Ct.at(k) * (ez - ezb)).squaredNorm();
            for (int a = 0; a < K; ++a) {
                const VectorXd xh1 = (X[a] - ex) - (Xb[a] - exb);
                const VectorXd yh1 = (Y[a] - ey) - (Yb[a] - eyb);
                const VectorXd zh1 = (Z[a] - ez) - (Zb[a] - ezb);
                lhs += wt[a] * (((G[a] - eg) - (Gb[a] - egb)).dot(xh1) +
                                ((Bv[a] - eb) - (Bb[a] - ebb)).dot(yh1) +
                                ((S[a] - es) - (Sb[a] - esb)).dot(zh1));
                rhs += wt[a] * (w.nu * (w.A.at(k) * xh1).squaredNorm() +
                                w.mu * (w.B.at(k) * yh1 + w.C.at(k) * zh1).squaredNorm());
            }
            detail::record(e_gam, -sign * lhs - rhs, {});
        }
    }

    rep.finish();
    return rep;
}

// ---------------------------------------------------------------------------
// Reference system and normalization inequalities
// ---------------------------------------------------------------------------

/// The decoupled linear reference coefficients built from domination weights:
///   Psi0(y)  = -mu H^T H y
///   Phi0     = nu { P^T P (x - x') + Pt^T Pt x' }
///   g0       = -nu { A^T A (x - x') + At^T At x' }
///   b0       = -mu { B^T [B(y-y') + C(z-z')] + Bt^T [Bt y' + Ct z'] }
///   sigma0   = -mu { C^T [B(y-y') + C(z-z')] + Ct^T [Bt y' + Ct z'] }
inline CoefficientSet reference_coefficients(const DominationWeights& w, const Dimensions& dims) {
    w.validate();
    LinearSpec ls = LinearSpec::zeros(dims);
    const double mu = w.mu, nu = w.nu;

    ls.psi_y = -mu * w.H.transpose() * w.H;
    ls.phi_x = nu * w.P.transpose() * w.P;
    ls.phi_xp = nu * (w.Pt.transpose() * w.Pt - w.P.transpose() * w.P);

    ls.g.x = tm_scale(-nu, tm_mul(tm_transpose(w.A), w.A));
    ls.g.xp = tm_scale(-nu, tm_sub(tm_mul(tm_transpose(w.At), w.At), tm_mul(tm_transpose(w.A), w.A)));

    const TimeMatrix btb = tm_mul(tm_transpose(w.B), w.B);
    const TimeMatrix btc = tm_mul(tm_transpose(w.B), w.C);
    const TimeMatrix bttbt = tm_mul(tm_transpose(w.Bt), w.Bt);
    const TimeMatrix btct = tm_mul(tm_transpose(w.Bt), w.Ct);
    ls.b.y = tm_scale(-mu, btb);
    ls.b.z = tm_scale(-mu, btc);
    ls.b.yp = tm_scale(-mu, tm_sub(bttbt, btb));
    ls.b.zp = tm_scale(-mu, tm_sub(btct, btc));

    const TimeMatrix ctb = tm_mul(tm_transpose(w.C), w.B);
    const TimeMatrix ctc = tm_mul(tm_transpose(w.C), w.C);
    const TimeMatrix cttbt = tm_mul(tm_transpose(w.Ct), w.Bt);
    const TimeMatrix ctct = tm_mul(tm_transpose(w.Ct), w.Ct);
    ls.sigma.y = tm_scale(-mu, ctb);
    ls.sigma.z = tm_scale(-mu, ctc);
    ls.sigma.yp = tm_scale(-mu, tm_sub(cttbt, ctb));
    ls.sigma.zp = tm_scale(-mu, tm_sub(ctct, ctc));

    return CoefficientSet::from_linear(dims, std::move(ls));
}

struct WlogReport {
    bool caseA_ok = false;
    bool caseB_ok = false;
    double caseA_required = 0.0;  // max norm bound that 1/mu^2 must dominate
    double caseB_required = 0.0;
    double caseA_lip = 0.0;       // Lipschitz constant the reference needs
    double caseB_lip = 0.0;
};

/// Evaluates the normalization inequalities tying (mu, nu), the weight-matrix
/// norms and the Lipschitz constant L of the coefficients.
inline WlogReport check_wlog(const DominationWeights& w, double L) {
    WlogReport rep;
    rep.caseA_required = std::max({operator_norm(w.H), tm_vstack(w.B, w.Bt).sup_norm(),
                                   tm_vstack(w.C, w.Ct).sup_norm()});
    rep.caseA_lip =
        w.mu * std::max(operator_norm(w.H) * operator_norm(w.H),
                        std::pow(tm_hstack(w.B, w.C).sup_norm(), 2) +
                            std::pow(tm_hstack(w.Bt, w.Ct).sup_norm(), 2));
    MatrixXd pstack(w.P.rows() + w.Pt.rows(), w.P.cols());
    pstack << w.P, w.Pt;
    rep.caseB_required = std::max(operator_norm(pstack), tm_vstack(w.A, w.At).sup_norm());
    rep.caseB_lip = w.nu * std::max(std::pow(operator_norm(w.P), 2) + std::pow(operator_norm(w.Pt), 2),
                                    std::pow(w.A.sup_norm(), 2) + std::pow(w.At.sup_norm(), 2));
    rep.caseA_ok = w.mu > 0.0 && 1.0 / (w.mu * w.mu) >= rep.caseA_required && L >= rep.caseA_lip;
    rep.caseB_ok = w.nu > 0.0 && 1.0 / (w.nu * w.nu) >= rep.caseB_required && L >= rep.caseB_lip;
    return rep;
}

// ---------------------------------------------------------------------------
// Example systems
// ---------------------------------------------------------------------------

struct Example32 {
    CoefficientSet coeffs;
    double admissible_mu = 0.0;
    double admissible_nu = 0.0;
};

/// Nonlinear scalar test system (n = d = 1):
///   Psi(y) = -k1 y + sin y,   b = -k1 y + sin y',   sigma = -k1 z + sin z',
///   Phi    =  k2 x + sin x',  g = -k2 x + sin x'.
inline Example32 example32(double k1, double k2) {
    if (k1 < 1.0 || k2 < 1.0) throw DomainError("example32: requires k1 >= 1 and k2 >= 1");
    Example32 ex;
    Dimensions dims(1, 1);
    CoefficientSet cs;
    cs.dims = dims;
    cs.psi = [k1](const VectorXd& y) -> VectorXd {
        VectorXd v(1);
        v(0) = -k1 * y(0) + std::sin(y(0));
        return v;
    };
    cs.phi = [k2](const VectorXd& x, const VectorXd& xp) -> VectorXd {
        VectorXd v(1);
        v(0) = k2 * x(0) + std::sin(xp(0));
        return v;
    };
    cs.g = [k2](int, double, const VectorXd& x, const VectorXd&, const VectorXd&, const VectorXd& xp,
                const VectorXd&, const VectorXd&) -> VectorXd {
        VectorXd v(1);
        v(0) = -k2 * x(0) + std::sin(xp(0));
        return v;
    };
    cs.b = [k1](int, double, const VectorXd&, const VectorXd& y, const VectorXd&, const VectorXd&,
                const VectorXd& yp, const VectorXd&) -> VectorXd {
        VectorXd v(1);
        v(0) = -k1 * y(0) + std::sin(yp(0));
        return v;
    };
    cs.sigma = [k1](int, double, const VectorXd&, const VectorXd&, const VectorXd& z,
                    const VectorXd&, const VectorXd&, const VectorXd& zp) -> VectorXd {
        VectorXd v(1);
        v(0) = -k1 * z(0) + std::sin(zp(0));
        return v;
    };
    ex.coeffs = std::move(cs);
    ex.admissible_mu = k1 > 1.0 ? std::min(k1 - 1.0, 1.0 / (2.0 * (k1 + 1.0))) : 0.0;
    ex.admissible_nu = k2 > 1.0 ? std::min(k2 - 1.0, 1.0 / (2.0 * (k2 + 1.0))) : 0.0;
    return ex;
}

/// The standard weight matrices of the scalar example: H = P = Pt = 1 and
/// A, B, C the three coordinate injections R -> R^3.
inline DominationWeights example32_weights(CaseFlag flag, double value) {
    DominationWeights w = DominationWeights::zeros(flag, value, 1, 1, 1, 1, 3);
    w.H = MatrixXd::Ones(1, 1);
    w.P = MatrixXd::Ones(1, 1);
    w.Pt = MatrixXd::Ones(1, 1);
    MatrixXd e1 = MatrixXd::Zero(3, 1), e2 = MatrixXd::Zero(3, 1), e3 = MatrixXd::Zero(3, 1);
    e1(0, 0) = 1.0;
    e2(1, 0) = 1.0;
    e3(2, 0) = 1.0;
    w.A = TimeMatrix(e1);
    w.At = TimeMatrix(e1);
    w.B = TimeMatrix(e2);
    w.Bt = TimeMatrix(e2);
    w.C = TimeMatrix(e3);
    w.Ct = TimeMatrix(e3);
    w.validate();
    return w;
}

// ---------------------------------------------------------------------------
// Symmetric transform
// ---------------------------------------------------------------------------

/// The sign transform under which (x, -y, -z) solves the new system whenever
/// (x, y, z) solves the old one; swaps the two monotonicity orientations.
inline CoefficientSet symmetrize(const CoefficientSet& coeffs) {
    if (coeffs.is_linear()) {
        const LinearSpec& ls = *coeffs.linear;
        LinearSpec out = ls;
        out.psi_y = -ls.psi_y;
        out.phi_x = -ls.phi_x;
        out.phi_xp = -ls.phi_xp;
        out.phi_c = -ls.phi_c;
        auto negate = [](const TimeMatrix& m) { return tm_scale(-1.0, m); };
        // g is negated with (y, z) arguments negated.
        out.g.x = negate(ls.g.x);
        out.g.xp = negate(ls.g.xp);
        out.g.c = negate(ls.g.c);
        // b, sigma keep their sign; (y, z) arguments are negated.
        out.b.y = negate(ls.b.y);
        out.b.z = negate(ls.b.z);
        out.b.yp = negate(ls.b.yp);
        out.b.zp = negate(ls.b.zp);
        out.sigma.y = negate(ls.sigma.y);
        out.sigma.z = negate(ls.sigma.z);
        out.sigma.yp = negate(ls.sigma.yp);
        out.sigma.zp = negate(ls.sigma.zp);
        return CoefficientSet::from_linear(coeffs.dims, std::move(out));
    }
    CoefficientSet out;
    out.dims = coeffs.dims;
    const CoefficientSet src = coeffs;
    out.psi = [src](const VectorXd& y) -> VectorXd { return src.psi(-y); };
    out.phi = [src](const VectorXd& x, const VectorXd& xp) -> VectorXd { return -src.phi(x, xp); };
    out.g = [src](int k, double s, const VectorXd& x, const VectorXd& y, const VectorXd& z,
                  const VectorXd& xp, const VectorXd& yp, const VectorXd& zp) -> VectorXd {
        return -src.g(k, s, x, -y, -z, xp, -yp, -zp);
    };
    out.b = [src](int k, double s, const VectorXd& x, const VectorXd& y, const VectorXd& z,
                  const VectorXd& xp, const VectorXd& yp, const VectorXd& zp) -> VectorXd {
        return src.b(k, s, x, -y, -z, xp, -yp, -zp);
    };
    out.sigma = [src](int k, double s, const VectorXd& x, const VectorXd& y, const VectorXd& z,
                      const VectorXd& xp, const VectorXd& yp, const VectorXd& zp) -> VectorXd {
        return src.sigma(k, s, x, -y, -z, xp, -yp, -zp);
    };
    return out;
}

}  // namespace mffbsde
