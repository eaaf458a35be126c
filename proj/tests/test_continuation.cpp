#include "mffbsde/continuation.hpp"
#include "mffbsde/noise.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace mffbsde;

namespace {

// mu = 1, H = 1, all other weight matrices zero.
DominationWeights initial_coupling_weights() {
    DominationWeights w = DominationWeights::zeros(CaseFlag::A, 1.0, 1, 1);
    w.H = MatrixXd::Ones(1, 1);
    return w;
}

PerturbationTriple constant_eta(const TimeGrid& grid, int M, double value) {
    auto p = PerturbationTriple::zero(grid, 1, 1, M);
    p.eta.setConstant(value);
    return p;
}

}  // namespace

TEST_CASE("alpha0 solves the decoupled system") {
    TimeGrid g(0.0, 1.0, 8);
    auto tree = make_tree(g, 1);
    const int M = tree->scenarios();
    Dimensions dims(1, 1);

    SECTION("zero data gives the zero solution in both cases") {
        for (CaseFlag flag : {CaseFlag::A, CaseFlag::B}) {
            auto w = example32_weights(flag, 1.0 / 6.0);
            auto th = solve_alpha0(w, dims, PerturbationTriple::zero(g, 1, 1, M), *tree);
            CHECK(m2_norm(th) == Catch::Approx(0.0).margin(1e-14));
        }
    }
    SECTION("case A chain: eta = 1 gives y = 1, x = -1") {
        auto w = initial_coupling_weights();
        auto th = solve_alpha0(w, dims, constant_eta(g, M, 1.0), *tree);
        for (const auto& yk : th.y) CHECK((yk.array() - 1.0).abs().maxCoeff() < 1e-13);
        for (const auto& zk : th.z) CHECK(zk.cwiseAbs().maxCoeff() < 1e-13);
        for (const auto& xk : th.x) CHECK((xk.array() + 1.0).abs().maxCoeff() < 1e-13);
    }
    SECTION("case B chain: xi = 1 gives x = 1, y = 1") {
        DominationWeights w = DominationWeights::zeros(CaseFlag::B, 1.0, 1, 1);
        w.P = MatrixXd::Ones(1, 1);
        w.Pt = MatrixXd::Ones(1, 1);
        auto pert = PerturbationTriple::zero(g, 1, 1, M);
        pert.xi = VectorXd::Ones(1);
        auto th = solve_alpha0(w, dims, pert, *tree);
        for (const auto& xk : th.x) CHECK((xk.array() - 1.0).abs().maxCoeff() < 1e-13);
        for (const auto& yk : th.y) CHECK((yk.array() - 1.0).abs().maxCoeff() < 1e-13);
        for (const auto& zk : th.z) CHECK(zk.cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("continuation map") {
    TimeGrid g(0.0, 1.0, 8);
    auto tree = make_tree(g, 1);
    const int M = tree->scenarios();
    Dimensions dims(1, 1);
    auto ex = example32(2.0, 2.0);
    auto w = example32_weights(CaseFlag::A, ex.admissible_mu);
    auto ref = reference_coefficients(w, dims);
    auto level0 = [&](const PerturbationTriple& data) {
        return solve_alpha0(w, dims, data, *tree);
    };

    auto theta_a = solve_alpha0(w, dims, constant_eta(g, M, 1.0), *tree);
    auto theta_b = solve_alpha0(w, dims, constant_eta(g, M, -0.5), *tree);
    auto pert = constant_eta(g, M, 0.3);

    SECTION("delta = 0 ignores theta_in") {
        auto out_a = t_map(ex.coeffs, ref, 0.0, theta_a, pert, level0);
        auto out_b = t_map(ex.coeffs, ref, 0.0, theta_b, pert, level0);
        CHECK(m2_gap(out_a, out_b) < 1e-13);
    }
    SECTION("target equal to reference makes the map constant") {
        auto out_a = t_map(ref, ref, 0.7, theta_a, pert, level0);
        auto out_b = t_map(ref, ref, 0.7, theta_b, pert, level0);
        CHECK(m2_gap(out_a, out_b) < 1e-13);
    }
    SECTION("example 3.2 contracts at delta = 0.25") {
        auto out_a = t_map(ex.coeffs, ref, 0.25, theta_a, pert, level0);
        auto out_b = t_map(ex.coeffs, ref, 0.25, theta_b, pert, level0);
        const double in_gap = m2_gap(theta_a, theta_b);
        const double out_gap = m2_gap(out_a, out_b);
        CHECK(out_gap < in_gap);
    }
}

TEST_CASE("continuation solve on the zero system") {
    TimeGrid g(0.0, 1.0, 8);
    auto tree = make_tree(g, 1);
    auto zero = CoefficientSet::zero(Dimensions(1, 1));
    ContinuationConfig cfg;
    cfg.fixpoint_tol = 1e-10;

    DominationWeights w = DominationWeights::zeros(CaseFlag::A, 0.5, 1, 1);
    ContinuationSolver solver(zero, w, cfg, *tree);
    auto [theta, diag] = solver.solve();
    CHECK(m2_norm(theta) == Catch::Approx(0.0).margin(1e-14));
    CHECK(diag.residual < 1e-12);
    CHECK(diag.alpha_levels.size() == 1);
    CHECK(diag.level_iterations[0] == 1);
}

TEST_CASE("decoupled exactness: target equal to the reference system") {
    TimeGrid g(0.0, 1.0, 8);
    auto tree = make_tree(g, 1);
    Dimensions dims(1, 1);
    auto w = example32_weights(CaseFlag::A, 1.0 / 6.0);
    auto ref = reference_coefficients(w, dims);
    auto pert = constant_eta(g, tree->scenarios(), 1.0);

    ContinuationConfig cfg;
    cfg.fixpoint_tol = 1e-11;
    ContinuationSolver solver(ref, w, cfg, *tree);
    auto [theta, diag] = solver.solve(pert);
    auto direct = solve_alpha0(w, dims, pert, *tree);
    CHECK(m2_gap(theta, direct) < 1e-10);
}

TEST_CASE("example 3.2 full solve") {
    TimeGrid g(0.0, 1.0, 8);
    auto tree = make_tree(g, 1);
    const int M = tree->scenarios();
    auto ex = example32(2.0, 2.0);
    auto w = example32_weights(CaseFlag::A, ex.admissible_mu);
    auto pert = constant_eta(g, M, 1.0);
    pert.xi = VectorXd::Constant(1, 0.5);

    ContinuationConfig cfg;
    cfg.fixpoint_tol = 1e-9;

    ContinuationSolver solver(ex.coeffs, w, cfg, *tree);
    auto [theta, diag] = solver.solve(pert);

    SECTION("converged with small residual and recorded diagnostics") {
        CHECK(diag.converged);
        CHECK(diag.residual < 1e-8);
        CHECK_FALSE(diag.alpha_levels.empty());
        CHECK(diag.alpha_levels.back() == Catch::Approx(1.0));
        for (double c : diag.level_contraction) CHECK(c < 1.0);
    }

    SECTION("direct mode agrees") {
        ContinuationConfig dcfg = cfg;
        dcfg.mode = ContinuationConfig::Mode::Direct;
        ContinuationSolver dsolver(ex.coeffs, w, dcfg, *tree);
        auto [dtheta, ddiag] = dsolver.solve(pert);
        CHECK(ddiag.direct_mode);
        CHECK(m2_gap(theta, dtheta) < 10 * cfg.fixpoint_tol);
    }

    SECTION("fixed point moves less than the tolerance under one more map") {
        auto moved = solver.apply_final_t_map(theta, pert, 1e-12);
        CHECK(m2_gap(moved, theta) < cfg.fixpoint_tol);
    }

    SECTION("uniqueness probe: two starts land on the same fixed point") {
        auto start_a = solve_alpha0(w, Dimensions(1, 1), constant_eta(g, M, 2.0), *tree);
        auto start_b = SolutionEnsemble::zero(g, 1, 1, M);
        auto run = [&](SolutionEnsemble th) {
            for (int it = 0; it < 200; ++it) {
                auto next = solver.apply_final_t_map(th, pert, 1e-12);
                const double gap = m2_gap(next, th);
                th = std::move(next);
                if (gap < 1e-10) break;
            }
            return th;
        };
        auto fa = run(start_a);
        auto fb = run(start_b);
        CHECK(m2_gap(fa, fb) < 10 * cfg.fixpoint_tol);
    }

    SECTION("contraction certificate at the probed step bound") {
        ContinuationConfig ccfg = cfg;
        ContinuationSolver probe_solver(ex.coeffs, w, ccfg, *tree);
        const double delta0 = probe_solver.probe_delta0();
        CHECK(delta0 > 0.0);
        ccfg.delta_init = std::min(1.0, delta0);
        ContinuationSolver csolver(ex.coeffs, w, ccfg, *tree);
        auto [ctheta, cdiag] = csolver.solve(pert);
        for (double c : cdiag.level_contraction) CHECK(c <= 0.6);
        CHECK(m2_gap(ctheta, theta) < 10 * cfg.fixpoint_tol);
    }
}

TEST_CASE("case B full solve via the backward LQ style coupling") {
    // Psi(y) = -y coupling with case-B weights: a genuinely coupled system.
    TimeGrid g(0.0, 1.0, 6);
    auto tree = make_tree(g, 1);
    Dimensions dims(1, 1);
    LinearSpec ls = LinearSpec::zeros(dims);
    ls.psi_y(0, 0) = -1.0;
    ls.phi_x(0, 0) = 1.0;
    auto coeffs = CoefficientSet::from_linear(dims, std::move(ls));

    DominationWeights w = DominationWeights::zeros(CaseFlag::B, 1.0, 1, 1);
    w.P = MatrixXd::Ones(1, 1);
    w.Pt = MatrixXd::Ones(1, 1);

    auto pert = constant_eta(g, tree->scenarios(), 1.0);
    ContinuationConfig cfg;
    cfg.fixpoint_tol = 1e-10;
    ContinuationSolver solver(coeffs, w, cfg, *tree);
    auto [theta, diag] = solver.solve(pert);
    // Hand solution: y(T) = x(T) + 1 with x constant = -y(t0), y a martingale:
    // y = x + 1 everywhere, x = -y(t0) => y(t0) = 1/2, x = -1/2.
    CHECK(theta.ybar[0](0) == Catch::Approx(0.5).margin(1e-8));
    CHECK(theta.xbar[0](0) == Catch::Approx(-0.5).margin(1e-8));
    CHECK(diag.nu_used < 1.0);  // clamped below the stacked-norm bound
    CHECK(diag.clamped);
}

TEST_CASE("apriori estimate report") {
    TimeGrid g(0.0, 1.0, 8);
    auto tree = make_tree(g, 1);
    const int M = tree->scenarios();
    Dimensions dims(1, 1);
    auto w = initial_coupling_weights();

    SECTION("equal data gives zero lhs") {
        auto pert = constant_eta(g, M, 1.0);
        auto ta = solve_alpha0(w, dims, pert, *tree);
        auto rep = apriori_report(ta, ta, pert, pert, g);
        CHECK(rep.lhs == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("hand difference on the initial-coupling reference system") {
        auto pa = constant_eta(g, M, 1.0);
        auto pb = constant_eta(g, M, 0.0);
        auto ta = solve_alpha0(w, dims, pa, *tree);
        auto tb = solve_alpha0(w, dims, pb, *tree);
        auto rep = apriori_report(ta, tb, pa, pb, g);
        // y-hat = 1 and x-hat = -1 everywhere: lhs = 2, data norm = |eta-hat|^2 = 1.
        CHECK(rep.lhs == Catch::Approx(2.0).margin(1e-12));
        CHECK(rep.rhs_core == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("random perturbation pairs give a bounded constant") {
        auto ex = example32(2.0, 2.0);
        auto ww = example32_weights(CaseFlag::A, ex.admissible_mu);
        ContinuationConfig cfg;
        cfg.fixpoint_tol = 1e-10;
        ContinuationSolver solver(ex.coeffs, ww, cfg, *tree);
        const std::uint64_t seed = 61;
        double kmin = 1e300, kmax = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            auto pa = PerturbationTriple::zero(g, 1, 1, M);
            auto pb = PerturbationTriple::zero(g, 1, 1, M);
            pa.xi = VectorXd::Constant(1, stream_box(seed, trial, 0, 0, 1.0));
            pa.eta.setConstant(stream_box(seed, trial, 1, 0, 1.0));
            pb.xi = pa.xi + VectorXd::Constant(1, 0.5 + 0.5 * stream_unit(seed, trial, 2));
            pb.eta = pa.eta.array() + 0.5 + 0.5 * stream_unit(seed, trial, 3);
            auto [ta, da] = solver.solve(pa);
            auto [tb, db] = solver.solve(pb);
            auto rep = apriori_report(ta, tb, pa, pb, g);
            REQUIRE(rep.rhs_core > 0.0);
            kmin = std::min(kmin, rep.ratio());
            kmax = std::max(kmax, rep.ratio());
        }
        CHECK(std::isfinite(kmax));
        CHECK(kmax / kmin < 20.0);
    }
}

TEST_CASE("wellposedness report") {
    TimeGrid g(0.0, 1.0, 8);
    auto tree = make_tree(g, 1);
    Dimensions dims(1, 1);
    auto ex = example32(2.0, 2.0);
    auto w = example32_weights(CaseFlag::A, ex.admissible_mu);
    ContinuationConfig cfg;
    cfg.fixpoint_tol = 1e-10;

    ContinuationSolver solver(ex.coeffs, w, cfg, *tree);
    auto pert = constant_eta(g, tree->scenarios(), 1.0);
    auto [theta_b, diag] = solver.solve(pert);
    // Fold the data into the coefficients so the two systems differ only there.
    auto with_eta = [&](const CoefficientSet& base, double eta_shift) {
        CoefficientSet out = base;
        const CoefficientSet src = base;
        out.phi = [src, eta_shift](const VectorXd& x, const VectorXd& xp) -> VectorXd {
            return src.phi(x, xp).array() + eta_shift;
        };
        return out;
    };
    auto coeffs_b = with_eta(ex.coeffs, 1.0);

    SECTION("identical coefficients give zero lhs") {
        auto rep = wellposedness_report(coeffs_b, coeffs_b, w, theta_b, *tree, cfg);
        CHECK(rep.lhs == Catch::Approx(0.0).margin(1e-16));
    }
    SECTION("constant offset in Phi is measured exactly") {
        auto coeffs_a = with_eta(ex.coeffs, 1.0 + 0.25);
        auto rep = wellposedness_report(coeffs_a, coeffs_b, w, theta_b, *tree, cfg);
        CHECK(rep.rhs_core == Catch::Approx(0.0625).margin(1e-10));
        CHECK(rep.lhs > 0.0);
        CHECK(std::isfinite(rep.ratio()));
    }
}
