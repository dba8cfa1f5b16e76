#include "rsbench/valuefn.hpp"

#include "rsbench/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace rsbench {

namespace {

constexpr double kBlowUpNorm = 1e12;
constexpr double kPsdTolerance = -1e-8;

void check_node_time(const ValueCoefficients& vc, double t) {
    const double slack = 1e-12 * std::max(1.0, vc.horizon());
    if (!(t >= -slack && t <= vc.horizon() + slack)) {
        std::ostringstream msg;
        msg << "time " << t << " outside [0, " << vc.horizon() << "]";
        throw Error(ErrorCode::TimeOutOfRange, msg.str());
    }
}

}  // namespace

ValueDerivative value_rhs(const ValidatedModel& model, double theta, double s, const MatrixXd& Q,
                          const VectorXd& q) {
    const auto& c = model.coefficients(s);
    const auto& g = model.gram(s);
    const double kappa = theta / (theta + 1.0);
    const double f = 1.0 / (theta + 1.0);

    const MatrixXd SinvA = g.solve(c.A);
    const MatrixXd M = c.B - kappa * g.SL.transpose() * SinvA;
    // Lambda P^-(theta) Lambda'
    const MatrixXd R = g.LL - kappa * g.SL.transpose() * g.solve(g.SL);
    const VectorXd a0 = c.a + theta * g.SXi;
    const VectorXd Sinv_a0 = g.solve(a0);

    ValueDerivative dot;
    dot.Q = theta * Q * R * Q - M.transpose() * Q - Q * M - f * c.A.transpose() * SinvA;

    const VectorXd drift_q = c.b - kappa * g.SL.transpose() * Sinv_a0 + theta * g.LXi;
    dot.q = -M.transpose() * q + theta * Q * (R * q) - Q * drift_q + c.C - f * c.A.transpose() * Sinv_a0;

    const double running = c.b.dot(q) + 0.5 * (g.LL * Q).trace() - c.c + 0.5 * (1.0 - theta) * g.XiXi +
                           0.5 * f * a0.dot(Sinv_a0) - kappa * Sinv_a0.dot(g.SL * q) + theta * g.LXi.dot(q) -
                           0.5 * theta * q.dot(R * q);
    dot.k = -running;
    return dot;
}

ValueCoefficients solve_value_coefficients(const ValidatedModel& model, double steps_per_year) {
    if (!(steps_per_year > 0.0) || !std::isfinite(steps_per_year)) {
        throw Error(ErrorCode::ConfigError, "steps_per_year must be positive");
    }
    const double T = model.horizon();
    const double theta = model.theta();
    const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(T * steps_per_year - 1e-9)));
    const double h = T / static_cast<double>(steps);
    const auto n = static_cast<Eigen::Index>(model.n());

    ValueCoefficients vc;
    vc.theta = theta;
    vc.grid.resize(steps + 1);
    vc.Q.resize(steps + 1);
    vc.q.resize(steps + 1);
    vc.k.resize(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) {
        vc.grid[i] = (i == steps) ? T : T * static_cast<double>(i) / static_cast<double>(steps);
    }

    MatrixXd Q = MatrixXd::Zero(n, n);
    VectorXd q = VectorXd::Zero(n);
    double k = 0.0;
    vc.Q[steps] = Q;
    vc.q[steps] = q;
    vc.k[steps] = k;

    double max_asym = 0.0;
    for (std::size_t i = steps; i > 0; --i) {
        // Coefficients are frozen at the step midpoint so that knots placed on
        // the grid never split a step.
        const double s_mid = 0.5 * (vc.grid[i] + vc.grid[i - 1]);
        auto rhs = [&](const MatrixXd& Qs, const VectorXd& qs) { return value_rhs(model, theta, s_mid, Qs, qs); };

        const auto k1 = rhs(Q, q);
        const auto k2 = rhs(Q - 0.5 * h * k1.Q, q - 0.5 * h * k1.q);
        const auto k3 = rhs(Q - 0.5 * h * k2.Q, q - 0.5 * h * k2.q);
        const auto k4 = rhs(Q - h * k3.Q, q - h * k3.q);

        Q -= (h / 6.0) * (k1.Q + 2.0 * k2.Q + 2.0 * k3.Q + k4.Q);
        q -= (h / 6.0) * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q);
        k -= (h / 6.0) * (k1.k + 2.0 * k2.k + 2.0 * k3.k + k4.k);

        max_asym = std::max(max_asym, (Q - Q.transpose()).cwiseAbs().maxCoeff());
        Q = 0.5 * (Q + Q.transpose()).eval();

        const double norm = std::max({Q.cwiseAbs().maxCoeff(), q.cwiseAbs().maxCoeff(), std::abs(k)});
        if (!std::isfinite(norm) || norm > kBlowUpNorm) {
            std::ostringstream msg;
            msg << "value coefficients exceed " << kBlowUpNorm << " at t=" << vc.grid[i - 1];
            throw Error(ErrorCode::BlowUp, msg.str());
        }
        vc.Q[i - 1] = Q;
        vc.q[i - 1] = q;
        vc.k[i - 1] = k;
    }

    double min_eig = 0.0;
    for (std::size_t i = 0; i <= steps; ++i) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(vc.Q[i], Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        min_eig = std::min(min_eig, lo);
        if (lo < kPsdTolerance) {
            std::ostringstream msg;
            msg << "Q lost positive semidefiniteness (eigenvalue " << lo << ") at t=" << vc.grid[i];
            throw Error(ErrorCode::EigenvalueViolation, msg.str());
        }
    }

    vc.meta.steps = steps;
    vc.meta.step_size = h;
    vc.meta.steps_per_year = steps_per_year;
    vc.meta.max_asymmetry = max_asym;
    vc.meta.min_eigenvalue = min_eig;
    return vc;
}

ValueState interpolate(const ValueCoefficients& vc, double t) {
    check_node_time(vc, t);
    const std::size_t last = vc.nodes() - 1;
    const double T = vc.horizon();
    t = std::clamp(t, 0.0, T);
    // Uniform grid: locate the bracketing interval directly.
    auto i = static_cast<std::size_t>(std::floor(t / T * static_cast<double>(last)));
    i = std::min(i, last);
    while (i > 0 && vc.grid[i] > t) --i;
    while (i < last && vc.grid[i + 1] <= t) ++i;

    ValueState st;
    if (i == last || vc.grid[i] == t) {
        st.Q = vc.Q[i];
        st.q = vc.q[i];
        st.k = vc.k[i];
        return st;
    }
    const double w = (t - vc.grid[i]) / (vc.grid[i + 1] - vc.grid[i]);
    st.Q = (1.0 - w) * vc.Q[i] + w * vc.Q[i + 1];
    st.q = (1.0 - w) * vc.q[i] + w * vc.q[i + 1];
    st.k = (1.0 - w) * vc.k[i] + w * vc.k[i + 1];
    return st;
}

ValueEval value_function(const ValueCoefficients& vc, double t, const VectorXd& x) {
    const auto st = interpolate(vc, t);
    if (x.size() != st.q.size()) {
        throw Error(ErrorCode::DimensionMismatch, "state has wrong dimension");
    }
    ValueEval ev;
    ev.DU = st.Q * x + st.q;
    ev.U = 0.5 * x.dot(st.Q * x) + st.q.dot(x) + st.k;
    ev.u = -vc.theta * ev.U;
    ev.Du = -vc.theta * ev.DU;
    return ev;
}

namespace {

/// Fourth-order difference weights (scaled by 12h) for the derivative at
/// `node`, centered where possible and shifted next to the ends.
struct Stencil {
    std::size_t first = 0;
    std::vector<double> w;
};

Stencil derivative_stencil(std::size_t node, std::size_t nodes) {
    if (nodes < 5) return {node - 1, {-6.0, 0.0, 6.0}};
    if (node == 1) return {0, {-3.0, -10.0, 18.0, -6.0, 1.0}};
    if (node + 2 == nodes) return {nodes - 5, {-1.0, 6.0, -18.0, 10.0, 3.0}};
    return {node - 2, {1.0, -8.0, 0.0, 8.0, -1.0}};
}

}  // namespace

RiccatiResidual riccati_residual(const ValueCoefficients& vc, const ValidatedModel& model, std::size_t node) {
    if (node == 0 || node + 1 >= vc.nodes()) {
        throw Error(ErrorCode::TimeOutOfRange, "residual needs an interior node");
    }
    const auto st = derivative_stencil(node, vc.nodes());
    const double h12 = 12.0 * (vc.grid[node + 1] - vc.grid[node - 1]) / 2.0;
    MatrixXd Qdot = MatrixXd::Zero(vc.Q[node].rows(), vc.Q[node].cols());
    VectorXd qdot = VectorXd::Zero(vc.q[node].size());
    double kdot = 0.0;
    for (std::size_t i = 0; i < st.w.size(); ++i) {
        Qdot += st.w[i] * vc.Q[st.first + i];
        qdot += st.w[i] * vc.q[st.first + i];
        kdot += st.w[i] * vc.k[st.first + i];
    }
    Qdot /= h12;
    qdot /= h12;
    kdot /= h12;
    const auto rhs = value_rhs(model, vc.theta, vc.grid[node], vc.Q[node], vc.q[node]);
    return {(Qdot - rhs.Q).cwiseAbs().maxCoeff(), (qdot - rhs.q).cwiseAbs().maxCoeff(), std::abs(kdot - rhs.k)};
}

RiccatiResidual riccati_residual(const ValueCoefficients& vc, const ValidatedModel& model, double t) {
    check_node_time(vc, t);
    const std::size_t last = vc.nodes() - 1;
    if (last < 2) throw Error(ErrorCode::TimeOutOfRange, "grid has no interior node");
    auto node = static_cast<std::size_t>(std::llround(t / vc.horizon() * static_cast<double>(last)));
    node = std::clamp<std::size_t>(node, 1, last - 1);
    return riccati_residual(vc, model, node);
}

RiccatiResidual max_riccati_residual(const ValueCoefficients& vc, const ValidatedModel& model) {
    RiccatiResidual worst;
    for (std::size_t i = 1; i + 1 < vc.nodes(); ++i) {
        // Difference stencils straddling a coefficient knot measure the jump, not the residual.
        const auto st = derivative_stencil(i, vc.nodes());
        const std::size_t last = st.first + st.w.size() - 1;
        if (model.segment_index(vc.grid[st.first]) != model.segment_index(vc.grid[last])) continue;
        const auto r = riccati_residual(vc, model, i);
        worst.Q = std::max(worst.Q, r.Q);
        worst.q = std::max(worst.q, r.q);
        worst.k = std::max(worst.k, r.k);
    }
    return worst;
}

nlohmann::json value_coefficients_to_json(const ValueCoefficients& vc) {
    nlohmann::json j;
    j["theta"] = vc.theta;
    j["n"] = vc.Q.empty() ? 0 : vc.Q.front().rows();
    j["grid"] = vc.grid;
    auto Qs = nlohmann::json::array();
    auto qs = nlohmann::json::array();
    for (std::size_t i = 0; i < vc.nodes(); ++i) {
        auto flat = nlohmann::json::array();
        const auto& Q = vc.Q[i];
        for (Eigen::Index r = 0; r < Q.rows(); ++r) {
            for (Eigen::Index c = 0; c < Q.cols(); ++c) flat.push_back(Q(r, c));
        }
        Qs.push_back(std::move(flat));
        qs.push_back(to_json_vector(vc.q[i]));
    }
    j["Q"] = std::move(Qs);
    j["q"] = std::move(qs);
    j["k"] = vc.k;
    j["solver"] = {{"method", "rk4"},
                   {"steps", vc.meta.steps},
                   {"step_size", vc.meta.step_size},
                   {"steps_per_year", vc.meta.steps_per_year},
                   {"max_asymmetry", vc.meta.max_asymmetry},
                   {"min_eigenvalue", vc.meta.min_eigenvalue}};
    return j;
}

ValueCoefficients value_coefficients_from_json(const nlohmann::json& j) {
    try {
        ValueCoefficients vc;
        vc.theta = j.at("theta").get<double>();
        const auto n = j.at("n").get<Eigen::Index>();
        vc.grid = j.at("grid").get<std::vector<double>>();
        vc.k = j.at("k").get<std::vector<double>>();
        const auto& Qs = j.at("Q");
        const auto& qs = j.at("q");
        if (vc.grid.size() < 2 || Qs.size() != vc.grid.size() || qs.size() != vc.grid.size() ||
            vc.k.size() != vc.grid.size()) {
            throw Error(ErrorCode::DimensionMismatch, "value coefficient arrays disagree in length");
        }
        for (std::size_t i = 0; i < vc.grid.size(); ++i) {
            const auto flat = Qs[i].get<std::vector<double>>();
            if (static_cast<Eigen::Index>(flat.size()) != n * n) {
                throw Error(ErrorCode::DimensionMismatch, "Q node has wrong size");
            }
            MatrixXd Q(n, n);
            for (Eigen::Index r = 0; r < n; ++r) {
                for (Eigen::Index c = 0; c < n; ++c) Q(r, c) = flat[static_cast<std::size_t>(r * n + c)];
            }
            vc.Q.push_back(std::move(Q));
            vc.q.push_back(vector_from_json(qs[i], "q"));
            if (vc.q.back().size() != n) throw Error(ErrorCode::DimensionMismatch, "q node has wrong size");
        }
        if (j.contains("solver")) {
            const auto& s = j["solver"];
            vc.meta.steps = s.value("steps", vc.grid.size() - 1);
            vc.meta.step_size = s.value("step_size", 0.0);
            vc.meta.steps_per_year = s.value("steps_per_year", 0.0);
            vc.meta.max_asymmetry = s.value("max_asymmetry", 0.0);
            vc.meta.min_eigenvalue = s.value("min_eigenvalue", 0.0);
        }
        return vc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("malformed value coefficients: ") + e.what());
    }
}

void save_value_coefficients(const ValueCoefficients& vc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out << value_coefficients_to_json(vc).dump() << '\n';
}

ValueCoefficients load_value_coefficients(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, "cannot parse " + path + ": " + e.what());
    }
    return value_coefficients_from_json(j);
}

}  // namespace rsbench
