#include "rsbench/policy.hpp"

#include "rsbench/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rsbench {

namespace {

constexpr double kGammaFormsTolerance = 1e-10;
constexpr double kIdentityTolerance = 1e-12;

void check_inputs(const ValidatedModel& model, const ValueCoefficients& vc, const VectorXd& x) {
    if (vc.theta != model.theta()) {
        throw Error(ErrorCode::ConfigError, "value coefficients were solved for a different theta");
    }
    if (static_cast<std::size_t>(x.size()) != model.n()) {
        throw Error(ErrorCode::DimensionMismatch, "state has wrong dimension");
    }
}

void require_identity(const VectorXd& lhs, const VectorXd& rhs, double tol, const char* what) {
    const double diff = scaled_difference(lhs, rhs);
    if (!(diff <= tol)) {
        std::ostringstream msg;
        msg << what << " violated: scaled difference " << diff << " exceeds " << tol;
        throw Error(ErrorCode::RepresentationMismatch, msg.str());
    }
}

}  // namespace

double scaled_difference(const VectorXd& a, const VectorXd& b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    if (a.size() == 0) return 0.0;
    const double scale = std::max({1.0, a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

bool nearly_equal(const VectorXd& a, const VectorXd& b, double tol) { return scaled_difference(a, b) <= tol; }

VectorXd kelly_portfolio(const ValidatedModel& model, double t, const VectorXd& x) {
    const auto& c = model.coefficients(t);
    return model.gram(t).solve(c.a + c.A * x);
}

VectorXd optimal_h(const ValidatedModel& model, const ValueCoefficients& vc, double t, const VectorXd& x) {
    check_inputs(model, vc, x);
    const auto& c = model.coefficients(t);
    const auto& g = model.gram(t);
    const double theta = model.theta();
    const auto ev = value_function(vc, t, x);
    return g.solve(c.a + c.A * x + theta * g.SXi + g.SL * ev.Du) / (theta + 1.0);
}

VectorXd optimal_h_kn(const ValidatedModel& model, const ValueCoefficients& vc, double t, const VectorXd& x) {
    check_inputs(model, vc, x);
    const auto& c = model.coefficients(t);
    const auto& g = model.gram(t);
    const double theta = model.theta();
    const auto ev = value_function(vc, t, x);
    return g.solve(c.a + c.A * x + theta * g.SXi - theta * (g.SL * ev.DU)) / (theta + 1.0);
}

VectorXd optimal_gamma_projected(const ValidatedModel& model, const ValueCoefficients& vc, double t,
                                 const VectorXd& x) {
    check_inputs(model, vc, x);
    const auto& c = model.coefficients(t);
    const auto& g = model.gram(t);
    const double theta = model.theta();
    const auto proj = projection_matrices(g, theta);
    const auto ev = value_function(vc, t, x);
    return proj.Pminus * (c.Lambda.transpose() * ev.Du) -
           (theta / (theta + 1.0)) * g.SS_inv_Sigma.transpose() * (c.a + c.A * x) + theta * (proj.Pminus * c.Xi);
}

VectorXd optimal_gamma(const ValidatedModel& model, const ValueCoefficients& vc, double t, const VectorXd& x) {
    const auto& c = model.coefficients(t);
    const double theta = model.theta();
    const VectorXd h = optimal_h(model, vc, t, x);
    const auto ev = value_function(vc, t, x);
    VectorXd direct = c.Lambda.transpose() * ev.Du - theta * (c.Sigma.transpose() * h - c.Xi);
    const VectorXd projected = optimal_gamma_projected(model, vc, t, x);
    require_identity(direct, projected, kGammaFormsTolerance, "tilt representations");
    return direct;
}

VectorXd optimal_nu(const ValidatedModel& model, const ValueCoefficients& vc, double t, const VectorXd& x) {
    check_inputs(model, vc, x);
    const auto& c = model.coefficients(t);
    const auto ev = value_function(vc, t, x);
    return -model.theta() * (c.Lambda.transpose() * ev.DU);
}

PolicyAction fractional_kelly(const ValidatedModel& model, const ValueCoefficients& vc, double t,
                              const VectorXd& x) {
    check_inputs(model, vc, x);
    const auto& c = model.coefficients(t);
    const auto& g = model.gram(t);
    const double theta = model.theta();
    const auto ev = value_function(vc, t, x);

    PolicyAction act;
    act.f = 1.0 / (theta + 1.0);
    act.kelly = g.solve(c.a + c.A * x);
    act.bench_track = g.solve(g.SXi);
    act.ihp = g.solve(g.SL * ev.DU);
    act.h_star = optimal_h(model, vc, t, x);
    act.gamma_star = optimal_gamma(model, vc, t, x);
    act.nu_star = optimal_nu(model, vc, t, x);

    const double f = act.f;
    const VectorXd recomposed = f * act.kelly + (1.0 - f) * act.bench_track - (1.0 - f) * act.ihp;
    require_identity(act.h_star, recomposed, kIdentityTolerance, "fractional Kelly decomposition");

    const VectorXd regularized = act.kelly + g.SS_inv_Sigma * act.gamma_star;
    require_identity(act.h_star, regularized, kIdentityTolerance, "regularized Kelly identity");

    const VectorXd tilt = act.nu_star - theta * (c.Sigma.transpose() * act.h_star - c.Xi);
    require_identity(act.gamma_star, tilt, kIdentityTolerance, "tilt relation");
    return act;
}

AffinePolicy affine_policy(const ValidatedModel& model, const ValueCoefficients& vc, double t, Route route) {
    if (vc.theta != model.theta()) {
        throw Error(ErrorCode::ConfigError, "value coefficients were solved for a different theta");
    }
    const auto& c = model.coefficients(t);
    const auto& g = model.gram(t);
    const double theta = model.theta();
    const auto st = interpolate(vc, t);

    AffinePolicy pol;
    // Lambda' Du = -theta Lambda'(Q x + q)
    pol.p0 = -theta * (c.Lambda.transpose() * st.q);
    pol.P1 = -theta * (c.Lambda.transpose() * st.Q);
    if (route == Route::Duality) {
        const VectorXd Du0 = -theta * st.q;
        const MatrixXd Du1 = -theta * st.Q;
        pol.h0 = g.solve(c.a + theta * g.SXi + g.SL * Du0) / (theta + 1.0);
        pol.H1 = g.solve(c.A + g.SL * Du1) / (theta + 1.0);
    } else {
        pol.h0 = g.solve(c.a + theta * g.SXi - theta * (g.SL * st.q)) / (theta + 1.0);
        pol.H1 = g.solve(c.A - theta * (g.SL * st.Q)) / (theta + 1.0);
    }
    pol.g0 = pol.p0 - theta * (c.Sigma.transpose() * pol.h0 - c.Xi);
    pol.G1 = pol.P1 - theta * (c.Sigma.transpose() * pol.H1);
    return pol;
}

}  // namespace rsbench
