#pragma once

#include "rsbench/model.hpp"
#include "rsbench/valuefn.hpp"

#include <cstdint>

namespace rsbench {

/// Running payoff of the duality game,
///   1/2 h'SS'h - h'a - 1/2 Xi'Xi + c - (h'Sigma - Xi')gamma - (h'A - C)x - |gamma|^2/(2 theta).
double running_payoff_g(const ValidatedModel& model, double theta, double s, const VectorXd& x, const VectorXd& h,
                        const VectorXd& gamma);

/// Running payoff of the change-of-measure route,
///   (theta+1)/2 h'SS'h - h'(a + Ax) - theta h'Sigma Xi + (c + Cx) + (theta-1)/2 Xi'Xi.
double running_payoff_g1(const ValidatedModel& model, double theta, double s, const VectorXd& x, const VectorXd& h);

/// The (h, gamma)-dependent part of the Bellman-Isaacs Hamiltonian,
///   1/2 h'SS'h - h'(a + Ax) - gamma'gamma/(2 theta) - gamma'(Sigma'h - Xi) + gamma'Lambda'p / theta.
double hamiltonian_F(const ValidatedModel& model, double theta, double s, const VectorXd& x, const VectorXd& h,
                     const VectorXd& gamma, const VectorXd& p);

/// Bracketed Bellman-Isaacs integrand at the solved value function:
///   [b + Bx + Lambda gamma]'Du + 1/2 tr(Lambda Lambda' D^2u) + theta g(h, gamma).
double isaacs_integrand(const ValidatedModel& model, const ValueCoefficients& vc, double t, const VectorXd& x,
                        const VectorXd& h, const VectorXd& gamma);

/// Integrand of the two-step game's Hamiltonian,
///   {b + Bx - Lambda[theta(Sigma'h - Xi) - nu]}'p + 1/2 tr(Lambda Lambda' M) - g1(h) + nu'nu/(2 theta).
double two_step_hamiltonian(const ValidatedModel& model, double theta, double s, const VectorXd& x,
                            const VectorXd& h, const VectorXd& nu, const VectorXd& p, const MatrixXd& M);

struct SaddleReport {
    double center_value = 0.0;
    double max_violation_h = 0.0;      // worst decrease when perturbing h
    double max_violation_gamma = 0.0;  // worst increase when perturbing gamma
    double min_curvature_h = 0.0;      // smallest second difference along lines through h*
    double max_curvature_gamma = 0.0;  // largest second difference along lines through gamma*
    std::size_t probe_count = 0;
    double tolerance = 0.0;

    bool passed() const {
        return max_violation_h <= tolerance && max_violation_gamma <= tolerance && min_curvature_h > 0.0 &&
               max_curvature_gamma < 0.0;
    }
};

struct SaddleOptions {
    std::size_t probes = 1000;
    double radius = 0.0;  // <= 0 selects 0.5 (1 + |h*|)
    std::uint64_t seed = 0;
    double rel_tolerance = 1e-9;
    bool throw_on_violation = true;
};

/// Probes the local saddle of the integrand around the candidate policies.
SaddleReport saddle_check(const ValidatedModel& model, const ValueCoefficients& vc, double t, const VectorXd& x,
                          const SaddleOptions& opts = {});

struct MinimaxGap {
    double h_plus = 0.0;   // inf_h sup_gamma order
    double h_minus = 0.0;  // sup_gamma inf_h order
    double gap = 0.0;

    bool within(double rel_tol) const { return gap <= rel_tol * (1.0 + std::abs(h_plus)); }
};

/// Both Hamiltonians from their closed-form inner optimizations; the second
/// order inverts P+ numerically rather than through P-.
MinimaxGap hamiltonian_minimax_gap(const ValidatedModel& model, const ValueCoefficients& vc, double t,
                                   const VectorXd& x);

}  // namespace rsbench
