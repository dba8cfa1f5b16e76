#pragma once

#include "rsbench/model.hpp"
#include "rsbench/valuefn.hpp"

namespace rsbench {

/// Optimal controls at one (t, x) together with the fractional-Kelly parts.
struct PolicyAction {
    VectorXd h_star;       // optimal allocation
    VectorXd gamma_star;   // tilt of the one-step (duality) game
    VectorXd nu_star;      // tilt of the two-step (change of measure) game
    VectorXd kelly;        // (SS')^-1 (a + A x)
    VectorXd bench_track;  // (SS')^-1 Sigma Xi
    VectorXd ihp;          // (SS')^-1 Sigma Lambda'(q + Q x)
    double f = 1.0;        // 1 / (theta + 1)
};

/// Which derivation the allocation is evaluated from: the duality game with
/// the gradient Du, or the change-of-measure game with DU = -Du/theta.
enum class Route { Duality, ChangeOfMeasure };

/// Tolerance test scaled by the magnitude of the operands:
/// max|a-b| <= tol * max(1, max|a|, max|b|).
bool nearly_equal(const VectorXd& a, const VectorXd& b, double tol);
double scaled_difference(const VectorXd& a, const VectorXd& b);

/// Duality route: (1/(theta+1)) (SS')^-1 (a + A x + theta Sigma Xi + Sigma Lambda' Du).
VectorXd optimal_h(const ValidatedModel& model, const ValueCoefficients& vc, double t, const VectorXd& x);

/// Change-of-measure route: (1/(theta+1)) (SS')^-1 (a + A x + theta Sigma Xi - theta Sigma Lambda' DU).
VectorXd optimal_h_kn(const ValidatedModel& model, const ValueCoefficients& vc, double t, const VectorXd& x);

/// Duality tilt, evaluated in both closed forms; throws RepresentationMismatch
/// when they disagree beyond 1e-10.
VectorXd optimal_gamma(const ValidatedModel& model, const ValueCoefficients& vc, double t, const VectorXd& x);

/// The projection-matrix form of the tilt on its own.
VectorXd optimal_gamma_projected(const ValidatedModel& model, const ValueCoefficients& vc, double t,
                                 const VectorXd& x);

/// -theta Lambda' DU.
VectorXd optimal_nu(const ValidatedModel& model, const ValueCoefficients& vc, double t, const VectorXd& x);

/// Fills every PolicyAction field and checks the three structural identities.
PolicyAction fractional_kelly(const ValidatedModel& model, const ValueCoefficients& vc, double t,
                              const VectorXd& x);

/// Explicit Kelly allocation (SS')^-1 (a + A x).
VectorXd kelly_portfolio(const ValidatedModel& model, double t, const VectorXd& x);

/// The optimal controls written as affine maps of the state at a fixed time:
///   h*(x) = h0 + H1 x,   gamma*(x) = g0 + G1 x,   Lambda' Du(x) = p0 + P1 x.
struct AffinePolicy {
    VectorXd h0;
    MatrixXd H1;
    VectorXd g0;
    MatrixXd G1;
    VectorXd p0;
    MatrixXd P1;
};

AffinePolicy affine_policy(const ValidatedModel& model, const ValueCoefficients& vc, double t,
                           Route route = Route::Duality);

}  // namespace rsbench
