#include "mffbsde/conditions.hpp"
#include "mffbsde/noise.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace mffbsde;

namespace {

// Black-box copy of a linear spec, for comparing sampled against exact.
CoefficientSet as_blackbox(const CoefficientSet& lin) {
    CoefficientSet out;
    out.dims = lin.dims;
    out.psi = lin.psi;
    out.phi = lin.phi;
    out.g = lin.g;
    out.b = lin.b;
    out.sigma = lin.sigma;
    return out;
}

CoefficientSet example32_like(double k1, double k2) {
    // Same formulas as example32 without the admissibility guard.
    Dimensions dims(1, 1);
    CoefficientSet cs;
    cs.dims = dims;
    cs.psi = [k1](const VectorXd& y) { return VectorXd::Constant(1, -k1 * y(0) + std::sin(y(0))); };
    cs.phi = [k2](const VectorXd& x, const VectorXd& xp) {
        return VectorXd::Constant(1, k2 * x(0) + std::sin(xp(0)));
    };
    cs.g = [k2](int, double, const VectorXd& x, const VectorXd&, const VectorXd&, const VectorXd& xp,
                const VectorXd&, const VectorXd&) {
        return VectorXd::Constant(1, -k2 * x(0) + std::sin(xp(0)));
    };
    cs.b = [k1](int, double, const VectorXd&, const VectorXd& y, const VectorXd&, const VectorXd&,
                const VectorXd& yp, const VectorXd&) {
        return VectorXd::Constant(1, -k1 * y(0) + std::sin(yp(0)));
    };
    cs.sigma = [k1](int, double, const VectorXd&, const VectorXd&, const VectorXd& z,
                    const VectorXd&, const VectorXd&, const VectorXd& zp) {
        return VectorXd::Constant(1, -k1 * z(0) + std::sin(zp(0)));
    };
    return cs;
}

}  // namespace

TEST_CASE("lipschitz estimates") {
    TimeGrid g(0.0, 1.0, 4);

    SECTION("zero map") {
        auto zero = CoefficientSet::zero(Dimensions(1, 1));
        auto est = estimate_lipschitz(zero, g, 200);
        CHECK(est.psi == 0.0);
        CHECK(est.exact);
    }
    SECTION("linear scalar slope is exact") {
        Dimensions dims(1, 1);
        LinearSpec ls = LinearSpec::zeros(dims);
        ls.psi_y(0, 0) = -2.0;
        auto cs = CoefficientSet::from_linear(dims, std::move(ls));
        CHECK(estimate_lipschitz(cs, g, 200).psi == Catch::Approx(2.0));
    }
    SECTION("example 3.2 slope is found near cos y = -1") {
        auto ex = example32(2.0, 2.0);
        auto est = estimate_lipschitz(ex.coeffs, g, 1000);
        CHECK(est.psi >= 1.0);
        CHECK(est.psi <= 3.0 + 1e-9);
        CHECK(est.psi >= 2.9);
    }
    SECTION("sampled never exceeds exact for linear specs") {
        const std::uint64_t seed = 4242;
        Dimensions dims(2, 1);
        LinearSpec ls = LinearSpec::zeros(dims);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                ls.psi_y(i, j) = stream_box(seed, 0, i, j, 2.0);
                ls.phi_x(i, j) = stream_box(seed, 1, i, j, 2.0);
                ls.phi_xp(i, j) = stream_box(seed, 2, i, j, 2.0);
            }
        MatrixXd gy(2, 2), bz(2, 2), sy(2, 2);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                gy(i, j) = stream_box(seed, 3, i, j, 2.0);
                bz(i, j) = stream_box(seed, 4, i, j, 2.0);
                sy(i, j) = stream_box(seed, 5, i, j, 2.0);
            }
        ls.g.y = TimeMatrix(gy);
        ls.b.z = TimeMatrix(bz);
        ls.sigma.y = TimeMatrix(sy);
        auto lin = CoefficientSet::from_linear(dims, std::move(ls));
        auto exact = estimate_lipschitz(lin, g, 200);
        auto sampled = estimate_lipschitz(as_blackbox(lin), g, 2000);
        CHECK(sampled.psi <= exact.psi + 1e-10);
        CHECK(sampled.phi <= exact.phi + 1e-10);
        CHECK(sampled.g <= exact.g + 1e-10);
        CHECK(sampled.b <= exact.b + 1e-10);
        CHECK(sampled.sigma <= exact.sigma + 1e-10);
    }
    SECTION("budget validation") {
        auto zero = CoefficientSet::zero(Dimensions(1, 1));
        CHECK_THROWS_AS(estimate_lipschitz(zero, g, 50), DomainError);
    }
}

TEST_CASE("domination checks") {
    TimeGrid g(0.0, 1.0, 4);

    SECTION("zero coefficients pass for any weights") {
        auto zero = CoefficientSet::zero(Dimensions(1, 1));
        auto rep = check_domination(zero, example32_weights(CaseFlag::A, 0.5), g, 500);
        CHECK(rep.pass);
        for (const auto& e : rep.entries) CHECK(e.worst_margin >= -1e-12);
    }
    SECTION("example 3.2 with the admissible mu passes") {
        auto ex = example32(2.0, 2.0);
        auto rep = check_domination(ex.coeffs, example32_weights(CaseFlag::A, ex.admissible_mu), g,
                                    10000);
        CHECK(rep.pass);
        CHECK_FALSE(rep.entry("phi").checked);  // vanishes in Case A
        CHECK(rep.entry("psi").checked);
    }
    SECTION("mu = 10 breaks the psi domination") {
        auto ex = example32(2.0, 2.0);
        auto rep = check_domination(ex.coeffs, example32_weights(CaseFlag::A, 10.0), g, 10000);
        CHECK_FALSE(rep.pass);
        CHECK_FALSE(rep.entry("psi").pass);
        CHECK(rep.entry("psi").worst_margin < 0.0);
        CHECK_FALSE(rep.entry("psi").witness.empty());
    }
    SECTION("case B with the admissible nu passes") {
        auto ex = example32(2.0, 2.0);
        auto rep = check_domination(ex.coeffs, example32_weights(CaseFlag::B, ex.admissible_nu), g,
                                    10000);
        CHECK(rep.pass);
        CHECK_FALSE(rep.entry("psi").checked);
        CHECK(rep.entry("phi").checked);
    }
}

TEST_CASE("monotonicity checks") {
    TimeGrid g(0.0, 1.0, 4);
    auto tree = make_tree(g, 1);

    SECTION("zero coefficients with zero H pass trivially") {
        auto zero = CoefficientSet::zero(Dimensions(1, 1));
        auto w = DominationWeights::zeros(CaseFlag::A, 1e-6, 1, 1);
        auto rep = check_monotonicity(zero, w, g, *tree, 500);
        CHECK(rep.pass);
    }
    SECTION("example 3.2 passes under both admissible cases") {
        auto ex = example32(2.0, 2.0);
        auto repA = check_monotonicity(ex.coeffs, example32_weights(CaseFlag::A, ex.admissible_mu),
                                       g, *tree, 10000);
        CHECK(repA.pass);
        auto repB = check_monotonicity(ex.coeffs, example32_weights(CaseFlag::B, ex.admissible_nu),
                                       g, *tree, 10000);
        CHECK(repB.pass);
    }
    SECTION("k1 = 0.5 violates the psi monotonicity quickly") {
        auto bad = example32_like(0.5, 2.0);
        auto rep = check_monotonicity(bad, example32_weights(CaseFlag::A, 1e-3), g, *tree, 1000);
        CHECK_FALSE(rep.entry("psi_mono").pass);
        CHECK(rep.entry("psi_mono").worst_margin < 0.0);
    }
    SECTION("margins are invariant under swapping the pair") {
        auto ex = example32(2.0, 2.0);
        const auto w = example32_weights(CaseFlag::A, ex.admissible_mu);
        // Recompute the psi margin at the reported worst witness, swapped.
        auto rep = check_monotonicity(ex.coeffs, w, g, *tree, 2000);
        const auto& e = rep.entry("psi_mono");
        REQUIRE(e.witness.size() == 2);
        auto margin_at = [&](double y, double yb) {
            VectorXd vy = VectorXd::Constant(1, y), vyb = VectorXd::Constant(1, yb);
            const double lhs = (ex.coeffs.psi(vy) - ex.coeffs.psi(vyb))(0) * (y - yb);
            return -w.mu * std::pow(w.H(0, 0) * (y - yb), 2) - lhs;
        };
        CHECK(margin_at(e.witness[0], e.witness[1]) ==
              Catch::Approx(margin_at(e.witness[1], e.witness[0])).margin(1e-12));
        CHECK(margin_at(e.witness[0], e.witness[1]) == Catch::Approx(e.worst_margin).margin(1e-12));
    }
}

TEST_CASE("reference coefficients") {
    SECTION("case A with identity H gives Psi0(y) = -y") {
        DominationWeights w = DominationWeights::zeros(CaseFlag::A, 1.0, 1, 1);
        w.H = MatrixXd::Identity(1, 1);
        auto ref = reference_coefficients(w, Dimensions(1, 1));
        CHECK(ref.psi(VectorXd::Ones(1))(0) == Catch::Approx(-1.0));
    }
    SECTION("case B with P = Pt = I gives Phi0(x, x') = x") {
        DominationWeights w = DominationWeights::zeros(CaseFlag::B, 1.0, 2, 1, 1, 2);
        w.P = MatrixXd::Identity(2, 2);
        w.Pt = MatrixXd::Identity(2, 2);
        auto ref = reference_coefficients(w, Dimensions(2, 1));
        VectorXd x(2), xp(2);
        x << 1.0, -2.0;
        xp << 0.3, 0.7;
        CHECK((ref.phi(x, xp) - x).cwiseAbs().maxCoeff() < 1e-14);
    }
    SECTION("zero weights give zero Gamma") {
        DominationWeights w = DominationWeights::zeros(CaseFlag::A, 1.0, 2, 2);
        auto ref = reference_coefficients(w, Dimensions(2, 2));
        VectorXd x = VectorXd::Ones(2), z = VectorXd::Ones(4);
        CHECK(ref.g(0, 0.0, x, x, z, x, x, z).cwiseAbs().maxCoeff() == 0.0);
        CHECK(ref.b(0, 0.0, x, x, z, x, x, z).cwiseAbs().maxCoeff() == 0.0);
        CHECK(ref.sigma(0, 0.0, x, x, z, x, x, z).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("reference passes its own conditions when normalized") {
        TimeGrid g(0.0, 1.0, 4);
        auto tree = make_tree(g, 1);
        for (CaseFlag flag : {CaseFlag::A, CaseFlag::B}) {
            auto w = example32_weights(flag, 1.0 / 6.0);
            REQUIRE((flag == CaseFlag::A ? check_wlog(w, 10.0).caseA_ok
                                         : check_wlog(w, 10.0).caseB_ok));
            auto ref = reference_coefficients(w, Dimensions(1, 1));
            CHECK(check_domination(ref, w, g, 10000).pass);
            CHECK(check_monotonicity(ref, w, g, *tree, 10000).pass);
        }
    }
}

TEST_CASE("normalization inequalities") {
    SECTION("all zero matrices with mu = 1") {
        auto w = DominationWeights::zeros(CaseFlag::A, 1.0, 2, 1);
        CHECK(check_wlog(w, 1.0).caseA_ok);
    }
    SECTION("identity H needs mu <= 1") {
        auto w = DominationWeights::zeros(CaseFlag::A, 1.0, 2, 2);
        w.H = MatrixXd::Identity(2, 2);
        CHECK(check_wlog(w, 10.0).caseA_ok);
        w.mu = 2.0;
        CHECK_FALSE(check_wlog(w, 10.0).caseA_ok);
    }
    SECTION("stacked identities exceed the case B bound at nu = 1") {
        auto w = DominationWeights::zeros(CaseFlag::B, 1.0, 2, 1, 2);
        w.P = MatrixXd::Identity(2, 2);
        w.Pt = MatrixXd::Identity(2, 2);
        auto rep = check_wlog(w, 10.0);
        CHECK(rep.caseB_required == Catch::Approx(std::sqrt(2.0)));
        CHECK_FALSE(rep.caseB_ok);
    }
}

TEST_CASE("example32 admissible ranges") {
    auto ex = example32(2.0, 2.0);
    CHECK(ex.admissible_mu == Catch::Approx(1.0 / 6.0));
    CHECK(ex.admissible_nu == Catch::Approx(1.0 / 6.0));
    CHECK(example32(1.0, 2.0).admissible_mu == 0.0);
    CHECK_THROWS_AS(example32(0.5, 2.0), DomainError);

    VectorXd zero = VectorXd::Zero(1);
    CHECK(ex.coeffs.psi(zero)(0) == 0.0);
    CHECK(ex.coeffs.phi(zero, zero)(0) == 0.0);
    CHECK(ex.coeffs.g(0, 0.0, zero, zero, zero, zero, zero, zero)(0) == 0.0);
}

TEST_CASE("symmetrize") {
    TimeGrid g(0.0, 1.0, 4);
    auto tree = make_tree(g, 1);
    auto ex = example32(2.0, 2.0);

    SECTION("involution on random points") {
        auto twice = symmetrize(symmetrize(ex.coeffs));
        const std::uint64_t seed = 515;
        for (int s = 0; s < 100; ++s) {
            VectorXd y = VectorXd::Constant(1, stream_box(seed, s, 0, 0, 5.0));
            VectorXd x = VectorXd::Constant(1, stream_box(seed, s, 1, 0, 5.0));
            VectorXd z = VectorXd::Constant(1, stream_box(seed, s, 2, 0, 5.0));
            CHECK((twice.psi(y) - ex.coeffs.psi(y)).cwiseAbs().maxCoeff() < 1e-12);
            CHECK((twice.phi(x, y) - ex.coeffs.phi(x, y)).cwiseAbs().maxCoeff() < 1e-12);
            CHECK((twice.g(0, 0.0, x, y, z, x, y, z) - ex.coeffs.g(0, 0.0, x, y, z, x, y, z))
                      .cwiseAbs().maxCoeff() < 1e-12);
            CHECK((twice.b(0, 0.0, x, y, z, x, y, z) - ex.coeffs.b(0, 0.0, x, y, z, x, y, z))
                      .cwiseAbs().maxCoeff() < 1e-12);
            CHECK((twice.sigma(0, 0.0, x, y, z, x, y, z) - ex.coeffs.sigma(0, 0.0, x, y, z, x, y, z))
                      .cwiseAbs().maxCoeff() < 1e-12);
        }
    }
    SECTION("involution stays linear for linear specs") {
        DominationWeights w = example32_weights(CaseFlag::A, 0.25);
        auto ref = reference_coefficients(w, Dimensions(1, 1));
        auto twice = symmetrize(symmetrize(ref));
        REQUIRE(twice.is_linear());
        CHECK((twice.linear->psi_y - ref.linear->psi_y).cwiseAbs().maxCoeff() == 0.0);
        CHECK((twice.linear->b.y.at(0) - ref.linear->b.y.at(0)).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("transformed coefficients satisfy the primed orientation") {
        auto w = example32_weights(CaseFlag::A, example32(2.0, 2.0).admissible_mu);
        REQUIRE(check_monotonicity(ex.coeffs, w, g, *tree, 3000).pass);
        auto sym = symmetrize(ex.coeffs);
        auto rep = check_monotonicity(sym, w, g, *tree, 3000, Orientation::Primed);
        CHECK(rep.pass);
        // and the standard orientation now fails for the transformed system
        auto rep_std = check_monotonicity(sym, w, g, *tree, 3000, Orientation::Standard);
        CHECK_FALSE(rep_std.pass);
    }
}
