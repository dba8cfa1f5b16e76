#pragma once

#include "rsbench/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace rsbench::testing {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double max_abs(const MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// One asset, one factor, one shock.
inline ModelSpec scalar_spec(double theta = 1.0) {
    ModelSpec s;
    s.n = s.m = s.d = 1;
    auto c = Coefficients::zeros(1, 1, 1);
    c.a << 0.04;
    c.A << 1.0;
    c.Sigma << 0.2;
    c.b << 0.0;
    c.B << -0.5;
    c.Lambda << 0.1;
    c.c = 0.01;
    c.C << 0.0;
    c.Xi << 0.0;
    s.coeffs = CoefficientSet::constant(c);
    s.horizon = 1.0;
    s.theta = theta;
    s.x0 = VectorXd::Constant(1, 0.05);
    return s;
}

/// Two assets, one factor, four shocks; the benchmark is the equal-weight
/// portfolio of the assets, so it can be replicated exactly.
inline ModelSpec two_asset_spec(double theta = 1.0) {
    ModelSpec s;
    s.n = 1;
    s.m = 2;
    s.d = 4;
    auto c = Coefficients::zeros(1, 2, 4);
    c.a << 0.03, 0.05;
    c.A << 0.5, 1.0;
    c.Sigma << 0.15, 0.0, 0.0, 0.0, 0.05, 0.2, 0.0, 0.0;
    c.b << 0.0;
    c.B << -1.0;
    c.Lambda << -0.05, 0.02, 0.1, 0.0;
    const VectorXd w = VectorXd::Constant(2, 0.5);
    c.c = w.dot(c.a);
    c.C = c.A.transpose() * w;
    c.Xi = c.Sigma.transpose() * w;
    s.coeffs = CoefficientSet::constant(c);
    s.horizon = 1.0;
    s.theta = theta;
    s.x0 = VectorXd::Constant(1, 0.02);
    return s;
}

inline MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale) {
    std::normal_distribution<double> N(0.0, 1.0);
    MatrixXd out(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) out(i, j) = scale * N(rng);
    return out;
}

inline Coefficients random_coefficients(std::mt19937_64& rng, std::size_t n, std::size_t m, std::size_t d) {
    const auto N = static_cast<Eigen::Index>(n);
    const auto M = static_cast<Eigen::Index>(m);
    const auto D = static_cast<Eigen::Index>(d);
    auto c = Coefficients::zeros(n, m, d);
    c.a = gaussian(rng, M, 1, 0.05);
    c.A = gaussian(rng, M, N, 0.3);
    c.Sigma = gaussian(rng, M, D, 0.05);
    // Keep Sigma Sigma' comfortably conditioned.
    c.Sigma.leftCols(M) += 0.2 * MatrixXd::Identity(M, M);
    c.b = gaussian(rng, N, 1, 0.02);
    c.B = -0.8 * MatrixXd::Identity(N, N) + gaussian(rng, N, N, 0.1);
    c.Lambda = gaussian(rng, N, D, 0.05);
    c.c = gaussian(rng, 1, 1, 0.02)(0, 0);
    c.C = gaussian(rng, N, 1, 0.2);
    c.Xi = gaussian(rng, D, 1, 0.1);
    return c;
}

struct RandomSpecOptions {
    std::size_t max_n = 3;
    std::size_t max_m = 5;
    std::size_t max_d = 12;
    bool piecewise = false;
};

inline ModelSpec random_spec(std::mt19937_64& rng, double theta, const RandomSpecOptions& opt = {}) {
    std::uniform_int_distribution<std::size_t> pick_n(1, opt.max_n), pick_m(1, opt.max_m);
    ModelSpec s;
    s.n = pick_n(rng);
    s.m = pick_m(rng);
    std::uniform_int_distribution<std::size_t> pick_d(s.m, std::max(s.m, opt.max_d));
    s.d = pick_d(rng);
    std::uniform_real_distribution<double> U(0.5, 2.0);
    s.horizon = U(rng);
    s.theta = theta;
    s.x0 = gaussian(rng, static_cast<Eigen::Index>(s.n), 1, 0.1);
    if (opt.piecewise) {
        s.coeffs.knots = {0.0, 0.5 * s.horizon};
        s.coeffs.segments = {random_coefficients(rng, s.n, s.m, s.d), random_coefficients(rng, s.n, s.m, s.d)};
    } else {
        s.coeffs = CoefficientSet::constant(random_coefficients(rng, s.n, s.m, s.d));
    }
    return s;
}

}  // namespace rsbench::testing
