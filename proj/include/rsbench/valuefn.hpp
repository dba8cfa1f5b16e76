#pragma once

#include "rsbench/model.hpp"

#include <string>
#include <vector>

namespace rsbench {

struct SolverMeta {
    std::size_t steps = 0;
    double step_size = 0.0;
    double steps_per_year = 0.0;
    double max_asymmetry = 0.0;   // largest |Q - Q'| seen before symmetrization
    double min_eigenvalue = 0.0;  // smallest eigenvalue of Q over all nodes
};

/// Coefficients of the quadratic value function U(t,x) = 1/2 x'Q x + q'x + k
/// on a uniform forward-ordered grid t_0 = 0 < ... < t_N = T.
struct ValueCoefficients {
    std::vector<double> grid;
    std::vector<MatrixXd> Q;
    std::vector<VectorXd> q;
    std::vector<double> k;
    double theta = 0.0;
    SolverMeta meta;

    std::size_t nodes() const { return grid.size(); }
    double horizon() const { return grid.back(); }
};

/// Coefficients linearly interpolated at a time between nodes.
struct ValueState {
    MatrixXd Q;
    VectorXd q;
    double k = 0.0;
};

struct ValueEval {
    double u = 0.0;   // -theta U
    double U = 0.0;   // 1/2 x'Qx + q'x + k
    VectorXd Du;      // -theta (Q x + q)
    VectorXd DU;      // Q x + q
};

/// Time derivatives (Qdot, qdot, kdot) of the backward system at (s, Q, q).
struct ValueDerivative {
    MatrixXd Q;
    VectorXd q;
    double k = 0.0;
};

ValueDerivative value_rhs(const ValidatedModel& model, double theta, double s, const MatrixXd& Q,
                          const VectorXd& q);

/// Backward classical RK4 from Q(T)=0, q(T)=0, k(T)=0 with ceil(T * steps_per_year)
/// uniform steps, Q symmetrized after every step.
ValueCoefficients solve_value_coefficients(const ValidatedModel& model, double steps_per_year);

ValueState interpolate(const ValueCoefficients& vc, double t);

ValueEval value_function(const ValueCoefficients& vc, double t, const VectorXd& x);

struct RiccatiResidual {
    double Q = 0.0;
    double q = 0.0;
    double k = 0.0;
};

/// Residual of the ODE system at interior node `node`, with the time
/// derivative taken as a fourth-order five-point difference (off-centre next
/// to the ends).
RiccatiResidual riccati_residual(const ValueCoefficients& vc, const ValidatedModel& model, std::size_t node);

/// Residual at the interior node nearest to t.
RiccatiResidual riccati_residual(const ValueCoefficients& vc, const ValidatedModel& model, double t);

/// Largest residual over interior nodes whose stencil stays within one coefficient segment.
RiccatiResidual max_riccati_residual(const ValueCoefficients& vc, const ValidatedModel& model);

nlohmann::json value_coefficients_to_json(const ValueCoefficients& vc);
ValueCoefficients value_coefficients_from_json(const nlohmann::json& j);
void save_value_coefficients(const ValueCoefficients& vc, const std::string& path);
ValueCoefficients load_value_coefficients(const std::string& path);

}  // namespace rsbench
