#include "mffbsde/coefficients.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace mffbsde;

namespace {

CoefficientSet scalar_linear(double psi_slope, double phi_slope) {
    Dimensions dims(1, 1);
    LinearSpec ls = LinearSpec::zeros(dims);
    ls.psi_y(0, 0) = psi_slope;
    ls.phi_x(0, 0) = phi_slope;
    return CoefficientSet::from_linear(dims, std::move(ls));
}

}  // namespace

TEST_CASE("linear evaluation and validation") {
    auto cs = scalar_linear(2.0, -1.0);
    VectorXd one = VectorXd::Ones(1);
    CHECK(cs.psi(one)(0) == Catch::Approx(2.0));
    CHECK(cs.phi(one, one)(0) == Catch::Approx(-1.0));
    CHECK(cs.is_linear());

    Dimensions dims(2, 1);
    LinearSpec bad = LinearSpec::zeros(dims);
    bad.psi_y = MatrixXd::Zero(1, 2);
    CHECK_THROWS_AS(CoefficientSet::from_linear(dims, bad), DomainError);
}

TEST_CASE("blend endpoints and midpoint") {
    auto target = scalar_linear(2.0, 1.0);
    auto reference = scalar_linear(-4.0, 3.0);

    VectorXd y = VectorXd::Ones(1);
    SECTION("alpha = 1 matches the target") {
        auto c = blend(target, reference, 1.0);
        CHECK(c.psi(y)(0) == Catch::Approx(2.0));
    }
    SECTION("alpha = 0 matches the reference") {
        auto c = blend(target, reference, 0.0);
        CHECK(c.psi(y)(0) == Catch::Approx(-4.0));
    }
    SECTION("alpha = 0.5 averages: 0.5*2 + 0.5*(-4) = -1") {
        auto c = blend(target, reference, 0.5);
        CHECK(c.psi(y)(0) == Catch::Approx(-1.0));
        CHECK(c.is_linear());
    }
    SECTION("alpha outside [0,1]") {
        CHECK_THROWS_AS(blend(target, reference, 1.5), DomainError);
        CHECK_THROWS_AS(blend(target, reference, -0.1), DomainError);
    }
}

TEST_CASE("blend is affine in alpha at random points") {
    Dimensions dims(2, 2);
    const std::uint64_t seed = 31;
    auto rnd_spec = [&](int tag) {
        LinearSpec ls = LinearSpec::zeros(dims);
        auto fill = [&](MatrixXd& m, int which) {
            for (int i = 0; i < m.rows(); ++i)
                for (int j = 0; j < m.cols(); ++j) m(i, j) = stream_box(seed, tag, which, i * 31 + j, 2.0);
        };
        fill(ls.psi_y, 0);
        fill(ls.phi_x, 1);
        fill(ls.phi_xp, 2);
        MatrixXd gy = MatrixXd::Zero(2, 2), bz = MatrixXd::Zero(2, 4), sz = MatrixXd::Zero(4, 4);
        fill(gy, 3);
        fill(bz, 4);
        fill(sz, 5);
        ls.g.y = TimeMatrix(gy);
        ls.b.z = TimeMatrix(bz);
        ls.sigma.z = TimeMatrix(sz);
        return CoefficientSet::from_linear(dims, std::move(ls));
    };
    auto t = rnd_spec(0);
    auto r = rnd_spec(1);

    for (int trial = 0; trial < 100; ++trial) {
        const double alpha = stream_unit(seed, trial, 7);
        auto c = blend(t, r, alpha);
        VectorXd x(2), y(2), z(4), xp(2), yp(2), zp(4);
        for (int i = 0; i < 2; ++i) {
            x(i) = stream_box(seed, trial, 10, i, 3.0);
            y(i) = stream_box(seed, trial, 11, i, 3.0);
            xp(i) = stream_box(seed, trial, 12, i, 3.0);
            yp(i) = stream_box(seed, trial, 13, i, 3.0);
        }
        for (int i = 0; i < 4; ++i) {
            z(i) = stream_box(seed, trial, 14, i, 3.0);
            zp(i) = stream_box(seed, trial, 15, i, 3.0);
        }
        const VectorXd expect_g =
            alpha * t.g(0, 0.0, x, y, z, xp, yp, zp) + (1 - alpha) * r.g(0, 0.0, x, y, z, xp, yp, zp);
        CHECK((c.g(0, 0.0, x, y, z, xp, yp, zp) - expect_g).cwiseAbs().maxCoeff() < 1e-12);
        const VectorXd expect_sigma = alpha * t.sigma(0, 0.0, x, y, z, xp, yp, zp) +
                                      (1 - alpha) * r.sigma(0, 0.0, x, y, z, xp, yp, zp);
        CHECK((c.sigma(0, 0.0, x, y, z, xp, yp, zp) - expect_sigma).cwiseAbs().maxCoeff() < 1e-12);
        const VectorXd expect_psi = alpha * t.psi(y) + (1 - alpha) * r.psi(y);
        CHECK((c.psi(y) - expect_psi).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("time matrix helpers") {
    MatrixXd a(1, 1), b(1, 1);
    a << 2.0;
    b << 3.0;
    TimeMatrix ta(a);
    TimeMatrix tb(std::vector<MatrixXd>{b, 2.0 * b});
    CHECK(tm_mul(ta, tb).at(1)(0, 0) == Catch::Approx(12.0));
    CHECK(tm_vstack(ta, tb).at(0).rows() == 2);
    CHECK(tb.sup_norm() == Catch::Approx(6.0));
}
