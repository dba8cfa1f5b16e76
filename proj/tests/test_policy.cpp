#include "doctest.h"
#include "support.hpp"

#include "rsbench/error.hpp"
#include "rsbench/game.hpp"
#include "rsbench/policy.hpp"

using namespace rsbench;
using namespace rsbench::testing;

namespace {

struct Saddle {
    VectorXd h;
    VectorXd gamma;
};

/// Joint first-order conditions of the integrand in (h, gamma), solved as one
/// linear system:
///   SS'h - Sigma gamma = a + Ax
///   theta Sigma'h + gamma = theta Xi + Lambda'Du
Saddle first_order_saddle(const ModelSpec& spec, const ValueCoefficients& vc, double t, const VectorXd& x) {
    const auto& c = spec.coeffs.segments.front();
    const auto m = static_cast<Eigen::Index>(spec.m);
    const auto d = static_cast<Eigen::Index>(spec.d);
    const double theta = spec.theta;
    const auto st = interpolate(vc, t);
    const VectorXd Du = -theta * (st.Q * x + st.q);

    MatrixXd K = MatrixXd::Zero(m + d, m + d);
    K.topLeftCorner(m, m) = c.Sigma * c.Sigma.transpose();
    K.topRightCorner(m, d) = -c.Sigma;
    K.bottomLeftCorner(d, m) = theta * c.Sigma.transpose();
    K.bottomRightCorner(d, d) = MatrixXd::Identity(d, d);
    VectorXd rhs(m + d);
    rhs.head(m) = c.a + c.A * x;
    rhs.tail(d) = theta * c.Xi + c.Lambda.transpose() * Du;
    const VectorXd z = K.fullPivLu().solve(rhs);
    return {z.head(m), z.tail(d)};
}

struct Fixture {
    ModelSpec spec;
    ValidatedModel model;
    ValueCoefficients vc;
    explicit Fixture(ModelSpec s) : spec(std::move(s)), model(validate_model(spec)), vc(solve_value_coefficients(model, 252.0)) {}
};

}  // namespace

TEST_CASE("optimal controls solve the first-order conditions") {
    std::mt19937_64 rng(21);
    for (double theta : {0.1, 1.0, 10.0}) {
        for (int rep = 0; rep < 8; ++rep) {
            Fixture fx(random_spec(rng, theta));
            const double t = 0.3 * fx.spec.horizon;
            const VectorXd x = gaussian(rng, static_cast<Eigen::Index>(fx.spec.n), 1, 0.5);
            const auto oracle = first_order_saddle(fx.spec, fx.vc, t, x);
            CHECK(nearly_equal(optimal_h(fx.model, fx.vc, t, x), oracle.h, 1e-10));
            CHECK(nearly_equal(optimal_gamma(fx.model, fx.vc, t, x), oracle.gamma, 1e-10));
            CHECK(nearly_equal(optimal_gamma_projected(fx.model, fx.vc, t, x), oracle.gamma, 1e-10));
        }
    }
}

TEST_CASE("integrand gradient vanishes at the saddle") {
    std::mt19937_64 rng(22);
    Fixture fx(random_spec(rng, 2.0));
    const double t = 0.5 * fx.spec.horizon;
    const VectorXd x = fx.spec.x0;
    const VectorXd h = optimal_h(fx.model, fx.vc, t, x);
    const VectorXd g = optimal_gamma(fx.model, fx.vc, t, x);
    const double eps = 1e-5;
    for (Eigen::Index i = 0; i < h.size(); ++i) {
        VectorXd hp = h, hm = h;
        hp(i) += eps;
        hm(i) -= eps;
        const double dh = (isaacs_integrand(fx.model, fx.vc, t, x, hp, g) - isaacs_integrand(fx.model, fx.vc, t, x, hm, g)) /
                          (2.0 * eps);
        CHECK(std::abs(dh) < 1e-7);
    }
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        VectorXd gp = g, gm = g;
        gp(i) += eps;
        gm(i) -= eps;
        const double dg = (isaacs_integrand(fx.model, fx.vc, t, x, h, gp) - isaacs_integrand(fx.model, fx.vc, t, x, h, gm)) /
                          (2.0 * eps);
        CHECK(std::abs(dg) < 1e-7);
    }
}

TEST_CASE("both derivations give the same allocation") {
    std::mt19937_64 rng(23);
    for (double theta : {0.0, 0.1, 1.0, 10.0}) {
        for (int rep = 0; rep < 10; ++rep) {
            Fixture fx(random_spec(rng, theta));
            const VectorXd x = gaussian(rng, static_cast<Eigen::Index>(fx.spec.n), 1, 0.5);
            const VectorXd a = optimal_h(fx.model, fx.vc, 0.0, x);
            const VectorXd b = optimal_h_kn(fx.model, fx.vc, 0.0, x);
            CHECK(nearly_equal(a, b, 1e-12));
        }
    }
}

TEST_CASE("tilt decomposes as nu minus theta times tracking exposure") {
    std::mt19937_64 rng(24);
    for (int rep = 0; rep < 10; ++rep) {
        Fixture fx(random_spec(rng, 1.7));
        const auto& c = fx.spec.coeffs.segments.front();
        const double t = 0.1;
        const VectorXd x = fx.spec.x0;
        const VectorXd h = optimal_h(fx.model, fx.vc, t, x);
        const VectorXd nu = optimal_nu(fx.model, fx.vc, t, x);
        const VectorXd e = c.Sigma.transpose() * h - c.Xi;
        CHECK(nearly_equal(optimal_gamma(fx.model, fx.vc, t, x), nu - 1.7 * e, 1e-10));
        const auto st = interpolate(fx.vc, t);
        CHECK(nearly_equal(nu, -1.7 * c.Lambda.transpose() * (st.Q * x + st.q), 1e-12));
    }
}

TEST_CASE("fractional Kelly recomposition") {
    std::mt19937_64 rng(25);
    for (double theta : {0.0, 0.5, 3.0}) {
        for (int rep = 0; rep < 6; ++rep) {
            Fixture fx(random_spec(rng, theta));
            const auto& c = fx.spec.coeffs.segments.front();
            const double t = 0.2;
            const VectorXd x = gaussian(rng, static_cast<Eigen::Index>(fx.spec.n), 1, 0.4);
            const auto act = fractional_kelly(fx.model, fx.vc, t, x);
            const MatrixXd S = c.Sigma * c.Sigma.transpose();
            const auto lu = S.fullPivLu();
            const auto st = interpolate(fx.vc, t);
            const VectorXd kelly = lu.solve(c.a + c.A * x);
            const VectorXd bench = lu.solve(c.Sigma * c.Xi);
            const VectorXd ihp = lu.solve(c.Sigma * c.Lambda.transpose() * (st.Q * x + st.q));
            const double f = 1.0 / (theta + 1.0);
            CHECK(act.f == doctest::Approx(f));
            CHECK(nearly_equal(act.kelly, kelly, 1e-10));
            CHECK(nearly_equal(act.bench_track, bench, 1e-10));
            CHECK(nearly_equal(act.ihp, ihp, 1e-10));
            CHECK(nearly_equal(act.h_star, f * kelly + (1.0 - f) * bench - (1.0 - f) * ihp, 1e-10));
            CHECK(nearly_equal(kelly_portfolio(fx.model, t, x), kelly, 1e-10));
        }
    }
}

TEST_CASE("risk-neutral limit recovers Kelly") {
    std::mt19937_64 rng(26);
    const auto base = random_spec(rng, 0.0);
    Fixture zero(base);
    const VectorXd x = base.x0;
    CHECK(nearly_equal(optimal_h(zero.model, zero.vc, 0.0, x), kelly_portfolio(zero.model, 0.0, x), 1e-14));

    auto tiny = base;
    tiny.theta = 1e-8;
    Fixture small(tiny);
    CHECK(scaled_difference(optimal_h(small.model, small.vc, 0.0, x), kelly_portfolio(small.model, 0.0, x)) < 1e-6);
}

TEST_CASE("affine representation reproduces pointwise controls") {
    std::mt19937_64 rng(27);
    RandomSpecOptions opt;
    opt.piecewise = true;
    for (int rep = 0; rep < 6; ++rep) {
        Fixture fx(random_spec(rng, 0.8, opt));
        for (double t : {0.0, 0.6 * fx.spec.horizon}) {
            const auto dual = affine_policy(fx.model, fx.vc, t, Route::Duality);
            const auto kn = affine_policy(fx.model, fx.vc, t, Route::ChangeOfMeasure);
            for (int k = 0; k < 3; ++k) {
                const VectorXd x = gaussian(rng, static_cast<Eigen::Index>(fx.spec.n), 1, 0.5);
                const VectorXd h = optimal_h(fx.model, fx.vc, t, x);
                CHECK(nearly_equal(dual.h0 + dual.H1 * x, h, 1e-10));
                CHECK(nearly_equal(kn.h0 + kn.H1 * x, h, 1e-10));
                CHECK(nearly_equal(dual.g0 + dual.G1 * x, optimal_gamma(fx.model, fx.vc, t, x), 1e-10));
            }
        }
    }
}

TEST_CASE("tolerance helpers scale with magnitude") {
    VectorXd a(2), b(2);
    a << 1e6, 0.0;
    b << 1e6 + 1e-4, 0.0;
    CHECK(nearly_equal(a, b, 1e-9));
    CHECK_FALSE(nearly_equal(a, b, 1e-11));
    CHECK(scaled_difference(a, a) == 0.0);
}

TEST_CASE("policy errors") {
    Fixture fx(scalar_spec(1.0));
    auto other = scalar_spec(2.0);
    const auto model2 = validate_model(other);
    CHECK_THROWS_AS(optimal_h(model2, fx.vc, 0.0, fx.spec.x0), Error);
    try {
        optimal_h(model2, fx.vc, 0.0, fx.spec.x0);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ConfigError);
    }
    try {
        optimal_h(fx.model, fx.vc, 0.0, VectorXd::Zero(3));
        FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimensionMismatch);
    }
}
