#include "rsbench/game.hpp"

#include "rsbench/error.hpp"
#include "rsbench/policy.hpp"
#include "rsbench/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace rsbench {

namespace {

void require_positive_theta(double theta) {
    if (!(theta > 0.0)) throw Error(ErrorCode::ConfigError, "game payoffs need theta > 0");
}

/// Uniform draw from the ball of the given radius in R^dim.
VectorXd ball_draw(const CounterRng& rng, std::uint64_t block, Eigen::Index dim, double radius) {
    std::vector<double> z(static_cast<std::size_t>(dim) + 1);
    rng.normals(block, z.size(), z);
    VectorXd dir(dim);
    for (Eigen::Index i = 0; i < dim; ++i) dir(i) = z[static_cast<std::size_t>(i)];
    const double norm = dir.norm();
    if (norm == 0.0) return VectorXd::Zero(dim);
    // The spare slot picks the radial fraction.
    const double u = 0.5 * (1.0 + std::erf(z.back() / std::sqrt(2.0)));
    return dir / norm * radius * std::pow(u, 1.0 / static_cast<double>(dim));
}

}  // namespace

double running_payoff_g(const ValidatedModel& model, double theta, double s, const VectorXd& x, const VectorXd& h,
                        const VectorXd& gamma) {
    require_positive_theta(theta);
    const auto& c = model.coefficients(s);
    const auto& g = model.gram(s);
    return 0.5 * h.dot(g.SS * h) - h.dot(c.a) - 0.5 * g.XiXi + c.c -
           (c.Sigma.transpose() * h - c.Xi).dot(gamma) - (h.dot(c.A * x) - c.C.dot(x)) -
           gamma.squaredNorm() / (2.0 * theta);
}

double running_payoff_g1(const ValidatedModel& model, double theta, double s, const VectorXd& x,
                         const VectorXd& h) {
    require_positive_theta(theta);
    const auto& c = model.coefficients(s);
    const auto& g = model.gram(s);
    return 0.5 * (theta + 1.0) * h.dot(g.SS * h) - h.dot(c.a + c.A * x) - theta * h.dot(g.SXi) +
           (c.c + c.C.dot(x)) + 0.5 * (theta - 1.0) * g.XiXi;
}

double hamiltonian_F(const ValidatedModel& model, double theta, double s, const VectorXd& x, const VectorXd& h,
                     const VectorXd& gamma, const VectorXd& p) {
    require_positive_theta(theta);
    const auto& c = model.coefficients(s);
    const auto& g = model.gram(s);
    return 0.5 * h.dot(g.SS * h) - h.dot(c.a + c.A * x) - gamma.squaredNorm() / (2.0 * theta) -
           gamma.dot(c.Sigma.transpose() * h - c.Xi) + gamma.dot(c.Lambda.transpose() * p) / theta;
}

double isaacs_integrand(const ValidatedModel& model, const ValueCoefficients& vc, double t, const VectorXd& x,
                        const VectorXd& h, const VectorXd& gamma) {
    const double theta = model.theta();
    require_positive_theta(theta);
    const auto& c = model.coefficients(t);
    const auto& g = model.gram(t);
    const auto st = interpolate(vc, t);
    const VectorXd Du = -theta * (st.Q * x + st.q);
    const MatrixXd D2u = -theta * st.Q;
    return (c.b + c.B * x + c.Lambda * gamma).dot(Du) + 0.5 * (g.LL * D2u).trace() +
           theta * running_payoff_g(model, theta, t, x, h, gamma);
}

double two_step_hamiltonian(const ValidatedModel& model, double theta, double s, const VectorXd& x,
                            const VectorXd& h, const VectorXd& nu, const VectorXd& p, const MatrixXd& M) {
    require_positive_theta(theta);
    const auto& c = model.coefficients(s);
    const auto& g = model.gram(s);
    const VectorXd drift = c.b + c.B * x - c.Lambda * (theta * (c.Sigma.transpose() * h - c.Xi) - nu);
    return drift.dot(p) + 0.5 * (g.LL * M).trace() - running_payoff_g1(model, theta, s, x, h) +
           nu.squaredNorm() / (2.0 * theta);
}

SaddleReport saddle_check(const ValidatedModel& model, const ValueCoefficients& vc, double t, const VectorXd& x,
                          const SaddleOptions& opts) {
    require_positive_theta(model.theta());
    const VectorXd h_hat = optimal_h(model, vc, t, x);
    const VectorXd g_hat = optimal_gamma(model, vc, t, x);
    const double radius = opts.radius > 0.0 ? opts.radius : 0.5 * (1.0 + h_hat.norm());

    SaddleReport rep;
    rep.center_value = isaacs_integrand(model, vc, t, x, h_hat, g_hat);
    rep.tolerance = opts.rel_tolerance * (1.0 + std::abs(rep.center_value));
    rep.probe_count = opts.probes;
    rep.min_curvature_h = std::numeric_limits<double>::infinity();
    rep.max_curvature_gamma = -std::numeric_limits<double>::infinity();

    const CounterRng rng_h(opts.seed, 0);
    const CounterRng rng_g(opts.seed, 1);
    for (std::size_t i = 0; i < opts.probes; ++i) {
        const VectorXd dh = ball_draw(rng_h, i, h_hat.size(), radius);
        const double up_h = isaacs_integrand(model, vc, t, x, h_hat + dh, g_hat);
        const double down_h = isaacs_integrand(model, vc, t, x, h_hat - dh, g_hat);
        rep.max_violation_h = std::max({rep.max_violation_h, rep.center_value - up_h, rep.center_value - down_h});
        if (dh.norm() > 0.0) rep.min_curvature_h = std::min(rep.min_curvature_h, up_h + down_h - 2.0 * rep.center_value);

        const VectorXd dg = ball_draw(rng_g, i, g_hat.size(), radius);
        const double up_g = isaacs_integrand(model, vc, t, x, h_hat, g_hat + dg);
        const double down_g = isaacs_integrand(model, vc, t, x, h_hat, g_hat - dg);
        rep.max_violation_gamma = std::max({rep.max_violation_gamma, up_g - rep.center_value, down_g - rep.center_value});
        if (dg.norm() > 0.0) {
            rep.max_curvature_gamma = std::max(rep.max_curvature_gamma, up_g + down_g - 2.0 * rep.center_value);
        }
    }
    if (opts.probes == 0) {
        rep.min_curvature_h = 1.0;
        rep.max_curvature_gamma = -1.0;
    }

    if (opts.throw_on_violation && !rep.passed()) {
        std::ostringstream msg;
        msg << "saddle violated at t=" << t << ": h-violation " << rep.max_violation_h << ", gamma-violation "
            << rep.max_violation_gamma << ", curvatures " << rep.min_curvature_h << " / " << rep.max_curvature_gamma
            << " (tolerance " << rep.tolerance << ")";
        throw Error(ErrorCode::SaddleViolation, msg.str());
    }
    return rep;
}

MinimaxGap hamiltonian_minimax_gap(const ValidatedModel& model, const ValueCoefficients& vc, double t,
                                   const VectorXd& x) {
    const double theta = model.theta();
    const auto& c = model.coefficients(t);
    const auto& g = model.gram(t);
    const auto st = interpolate(vc, t);
    const VectorXd p = -theta * (st.Q * x + st.q);  // Du
    const MatrixXd M = -theta * st.Q;               // D^2 u
    const VectorXd ax = c.a + c.A * x;
    const VectorXd Lp = c.Lambda.transpose() * p;

    // Terms of the Hamiltonian that do not involve the controls.
    const double common = (c.b + c.B * x).dot(p) + 0.5 * (g.LL * M).trace() + theta * (c.c + c.C.dot(x)) -
                          0.5 * theta * g.XiXi;

    // Both inner problems are written for theta * F so that theta = 0 stays finite.
    // Order 1: maximize over gamma, then minimize over h.
    const auto proj = projection_matrices(g, theta);
    const VectorXd v = ax + theta * g.SXi;
    const VectorXd Sinv_v = g.solve(v);
    const double kappa = theta / (theta + 1.0);
    const double inf_sup = -0.5 * kappa * v.dot(Sinv_v) - kappa * Sinv_v.dot(g.SL * p) + 0.5 * theta * theta * g.XiXi +
                           theta * c.Xi.dot(Lp) + 0.5 * Lp.dot(proj.Pminus * Lp);

    // Order 2: minimize over h, then maximize over gamma, with P+ inverted by factorization.
    const VectorXd Sinv_ax = g.solve(ax);
    const VectorXd w = -theta * (c.Sigma.transpose() * Sinv_ax) + theta * c.Xi + Lp;
    const VectorXd Pplus_inv_w = proj.Pplus.ldlt().solve(w);
    const double sup_inf = 0.5 * w.dot(Pplus_inv_w) - 0.5 * theta * ax.dot(Sinv_ax);

    MinimaxGap out;
    out.h_plus = common + inf_sup;
    out.h_minus = common + sup_inf;
    out.gap = std::abs(out.h_plus - out.h_minus);
    return out;
}

}  // namespace rsbench
