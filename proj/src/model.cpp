#include "rsbench/model.hpp"

#include "rsbench/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace rsbench {

namespace {

constexpr double kPivotThreshold = 1e-12;
constexpr double kTimeSlack = 1e-12;

std::string shape(const MatrixXd& mat) {
    return std::to_string(mat.rows()) + "x" + std::to_string(mat.cols());
}

void expect_shape(const MatrixXd& mat, std::size_t rows, std::size_t cols, const char* name,
                  std::size_t segment) {
    if (static_cast<std::size_t>(mat.rows()) != rows || static_cast<std::size_t>(mat.cols()) != cols) {
        throw Error(ErrorCode::DimensionMismatch,
                    std::string(name) + " in segment " + std::to_string(segment) + " is " + shape(mat) +
                        ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (!mat.allFinite()) {
        throw Error(ErrorCode::DimensionMismatch,
                    std::string(name) + " in segment " + std::to_string(segment) + " has non-finite entries");
    }
}

void expect_size(const VectorXd& vec, std::size_t size, const char* name, std::size_t segment) {
    expect_shape(MatrixXd(vec), size, 1, name, segment);
}

}  // namespace

Coefficients Coefficients::zeros(std::size_t n, std::size_t m, std::size_t d) {
    const auto ni = static_cast<Eigen::Index>(n);
    const auto mi = static_cast<Eigen::Index>(m);
    const auto di = static_cast<Eigen::Index>(d);
    Coefficients c;
    c.a = VectorXd::Zero(mi);
    c.A = MatrixXd::Zero(mi, ni);
    c.Sigma = MatrixXd::Zero(mi, di);
    c.b = VectorXd::Zero(ni);
    c.B = MatrixXd::Zero(ni, ni);
    c.Lambda = MatrixXd::Zero(ni, di);
    c.c = 0.0;
    c.C = VectorXd::Zero(ni);
    c.Xi = VectorXd::Zero(di);
    return c;
}

CoefficientSet CoefficientSet::constant(Coefficients coeffs) {
    CoefficientSet set;
    set.knots = {0.0};
    set.segments.push_back(std::move(coeffs));
    return set;
}

std::size_t CoefficientSet::segment_index(double s) const {
    // Last knot <= s.
    const auto it = std::upper_bound(knots.begin(), knots.end(), s);
    if (it == knots.begin()) return 0;
    return static_cast<std::size_t>(std::distance(knots.begin(), it) - 1);
}

GramBlocks compute_gram_blocks(const Coefficients& coeffs) {
    GramBlocks g;
    g.SS = coeffs.Sigma * coeffs.Sigma.transpose();
    g.SS = 0.5 * (g.SS + g.SS.transpose()).eval();

    // Pivoted symmetric factorization for the definiteness test; the solves
    // use the plain Cholesky factor once the matrix has passed.
    Eigen::LDLT<MatrixXd> ldlt(g.SS);
    const double max_diag = g.SS.diagonal().cwiseAbs().maxCoeff();
    const double min_pivot = ldlt.vectorD().minCoeff();
    if (!(max_diag > 0.0) || ldlt.info() != Eigen::Success || !(min_pivot > kPivotThreshold * max_diag)) {
        std::ostringstream msg;
        msg << "Sigma Sigma' is not positive definite (min pivot " << min_pivot << ", max diagonal "
            << max_diag << ")";
        throw Error(ErrorCode::SingularCovariance, msg.str());
    }
    g.SS_chol.compute(g.SS);
    if (g.SS_chol.info() != Eigen::Success) {
        throw Error(ErrorCode::SingularCovariance, "Cholesky factorization of Sigma Sigma' failed");
    }
    const auto m = g.SS.rows();
    g.SS_inv = g.SS_chol.solve(MatrixXd::Identity(m, m));
    g.SS_inv = 0.5 * (g.SS_inv + g.SS_inv.transpose()).eval();
    g.SL = coeffs.Sigma * coeffs.Lambda.transpose();
    g.LL = coeffs.Lambda * coeffs.Lambda.transpose();
    g.SXi = coeffs.Sigma * coeffs.Xi;
    g.LXi = coeffs.Lambda * coeffs.Xi;
    g.XiXi = coeffs.Xi.squaredNorm();
    g.SS_inv_Sigma = g.SS_chol.solve(coeffs.Sigma);
    g.Pi = coeffs.Sigma.transpose() * g.SS_inv_Sigma;
    g.Pi = 0.5 * (g.Pi + g.Pi.transpose()).eval();
    return g;
}

ValidatedModel validate_model(const ModelSpec& spec) {
    if (spec.n < 1 || spec.m < 1) {
        throw Error(ErrorCode::DimensionMismatch, "n and m must be at least 1");
    }
    if (spec.d < spec.m) {
        throw Error(ErrorCode::DimensionMismatch,
                    "Brownian dimension d=" + std::to_string(spec.d) + " is smaller than m=" + std::to_string(spec.m));
    }
    if (!(spec.horizon > 0.0) || !std::isfinite(spec.horizon)) {
        throw Error(ErrorCode::NonpositiveHorizon, "horizon must be positive, got " + std::to_string(spec.horizon));
    }
    if (!(spec.theta >= 0.0) || !std::isfinite(spec.theta)) {
        throw Error(ErrorCode::NegativeTheta, "theta must be non-negative, got " + std::to_string(spec.theta));
    }
    if (static_cast<std::size_t>(spec.x0.size()) != spec.n || !spec.x0.allFinite()) {
        throw Error(ErrorCode::DimensionMismatch, "x0 must be a finite vector of length n=" + std::to_string(spec.n));
    }
    const auto& set = spec.coeffs;
    if (set.segments.empty() || set.knots.size() != set.segments.size()) {
        throw Error(ErrorCode::DimensionMismatch, "coefficient grid needs one knot per segment");
    }
    if (set.knots.front() != 0.0) {
        throw Error(ErrorCode::DimensionMismatch, "first coefficient knot must be 0");
    }
    for (std::size_t i = 1; i < set.knots.size(); ++i) {
        if (!(set.knots[i] > set.knots[i - 1]) || !(set.knots[i] < spec.horizon)) {
            throw Error(ErrorCode::DimensionMismatch,
                        "coefficient knots must increase strictly inside [0, horizon)");
        }
    }

    auto grams = std::make_shared<std::vector<GramBlocks>>();
    grams->reserve(set.segments.size());
    for (std::size_t i = 0; i < set.segments.size(); ++i) {
        const auto& c = set.segments[i];
        expect_size(c.a, spec.m, "a", i);
        expect_shape(c.A, spec.m, spec.n, "A", i);
        expect_shape(c.Sigma, spec.m, spec.d, "Sigma", i);
        expect_size(c.b, spec.n, "b", i);
        expect_shape(c.B, spec.n, spec.n, "B", i);
        expect_shape(c.Lambda, spec.n, spec.d, "Lambda", i);
        expect_size(c.C, spec.n, "C", i);
        expect_size(c.Xi, spec.d, "Xi", i);
        if (!std::isfinite(c.c)) {
            throw Error(ErrorCode::DimensionMismatch, "c in segment " + std::to_string(i) + " is not finite");
        }
        try {
            grams->push_back(compute_gram_blocks(c));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SingularCovariance) throw;
            std::ostringstream msg;
            msg << e.what() << " at time knot t=" << set.knots[i];
            throw Error(ErrorCode::SingularCovariance, msg.str());
        }
    }

    ValidatedModel model;
    model.spec_ = spec;
    model.grams_ = std::move(grams);
    return model;
}

void ValidatedModel::check_time(double s) const {
    const double slack = kTimeSlack * std::max(1.0, spec_.horizon);
    if (!(s >= -slack && s <= spec_.horizon + slack)) {
        std::ostringstream msg;
        msg << "time " << s << " outside [0, " << spec_.horizon << "]";
        throw Error(ErrorCode::TimeOutOfRange, msg.str());
    }
}

std::size_t ValidatedModel::segment_index(double s) const {
    check_time(s);
    return spec_.coeffs.segment_index(s);
}

const Coefficients& ValidatedModel::coefficients(double s) const {
    return spec_.coeffs.segments[segment_index(s)];
}

const GramBlocks& ValidatedModel::gram(double s) const { return (*grams_)[segment_index(s)]; }

ValidatedModel ValidatedModel::with_theta(double theta) const {
    if (!(theta >= 0.0) || !std::isfinite(theta)) {
        throw Error(ErrorCode::NegativeTheta, "theta must be non-negative");
    }
    ValidatedModel copy = *this;
    copy.spec_.theta = theta;
    return copy;
}

const GramBlocks& gram_blocks(const ValidatedModel& model, double s) { return model.gram(s); }

ProjectionPair projection_matrices(const GramBlocks& gram, double theta) {
    if (!(theta >= 0.0)) throw Error(ErrorCode::NegativeTheta, "theta must be non-negative");
    const auto d = gram.Pi.rows();
    const MatrixXd id = MatrixXd::Identity(d, d);
    return {id + theta * gram.Pi, id - (theta / (theta + 1.0)) * gram.Pi};
}

ProjectionPair projection_matrices(const ValidatedModel& model, double s, double theta) {
    return projection_matrices(model.gram(s), theta);
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json_matrix(const MatrixXd& mat) {
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < mat.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < mat.cols(); ++j) row.push_back(mat(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json to_json_vector(const VectorXd& vec) {
    auto arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < vec.size(); ++i) arr.push_back(vec(i));
    return arr;
}

MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& name) {
    if (!j.is_array()) throw Error(ErrorCode::ConfigError, name + " must be an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return MatrixXd(0, 0);
    if (!j[0].is_array()) throw Error(ErrorCode::ConfigError, name + " must be an array of rows");
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    MatrixXd mat(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw Error(ErrorCode::DimensionMismatch, name + " has ragged rows");
        }
        for (Eigen::Index k = 0; k < cols; ++k) {
            const auto& v = row[static_cast<std::size_t>(k)];
            if (!v.is_number()) throw Error(ErrorCode::ConfigError, name + " has a non-numeric entry");
            mat(i, k) = v.get<double>();
        }
    }
    return mat;
}

VectorXd vector_from_json(const nlohmann::json& j, const std::string& name) {
    if (j.is_number()) return VectorXd::Constant(1, j.get<double>());
    if (!j.is_array()) throw Error(ErrorCode::ConfigError, name + " must be an array");
    VectorXd vec(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw Error(ErrorCode::ConfigError, name + " has a non-numeric entry");
        vec(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return vec;
}

namespace {

Coefficients coefficients_from_json(const nlohmann::json& j, std::size_t n, std::size_t m, std::size_t d) {
    auto c = Coefficients::zeros(n, m, d);
    if (!j.contains("Sigma")) throw Error(ErrorCode::ConfigError, "coefficient block is missing Sigma");
    if (j.contains("a")) c.a = vector_from_json(j["a"], "a");
    if (j.contains("A")) c.A = matrix_from_json(j["A"], "A");
    c.Sigma = matrix_from_json(j["Sigma"], "Sigma");
    if (j.contains("b")) c.b = vector_from_json(j["b"], "b");
    if (j.contains("B")) c.B = matrix_from_json(j["B"], "B");
    if (j.contains("Lambda")) c.Lambda = matrix_from_json(j["Lambda"], "Lambda");
    if (j.contains("c")) c.c = j["c"].get<double>();
    if (j.contains("C")) c.C = vector_from_json(j["C"], "C");
    if (j.contains("Xi")) c.Xi = vector_from_json(j["Xi"], "Xi");
    return c;
}

nlohmann::json coefficients_to_json(const Coefficients& c) {
    return {{"a", to_json_vector(c.a)},    {"A", to_json_matrix(c.A)},
            {"Sigma", to_json_matrix(c.Sigma)}, {"b", to_json_vector(c.b)},
            {"B", to_json_matrix(c.B)},    {"Lambda", to_json_matrix(c.Lambda)},
            {"c", c.c},                    {"C", to_json_vector(c.C)},
            {"Xi", to_json_vector(c.Xi)}};
}

}  // namespace

ModelSpec model_from_json(const nlohmann::json& j) {
    try {
        ModelSpec spec;
        spec.n = j.at("n").get<std::size_t>();
        spec.m = j.at("m").get<std::size_t>();
        spec.d = j.contains("d") ? j["d"].get<std::size_t>() : spec.n + spec.m + 1;
        spec.theta = j.at("theta").get<double>();
        spec.horizon = j.at("horizon_years").get<double>();
        spec.x0 = j.contains("x0") ? vector_from_json(j["x0"], "x0")
                                   : VectorXd::Zero(static_cast<Eigen::Index>(spec.n));
        if (j.contains("constant") == j.contains("piecewise")) {
            throw Error(ErrorCode::ConfigError, "model needs exactly one of 'constant' or 'piecewise'");
        }
        if (j.contains("constant")) {
            spec.coeffs = CoefficientSet::constant(coefficients_from_json(j["constant"], spec.n, spec.m, spec.d));
        } else {
            for (const auto& seg : j["piecewise"]) {
                spec.coeffs.knots.push_back(seg.at("t").get<double>());
                spec.coeffs.segments.push_back(coefficients_from_json(seg, spec.n, spec.m, spec.d));
            }
        }
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("malformed model: ") + e.what());
    }
}

nlohmann::json model_to_json(const ModelSpec& spec) {
    nlohmann::json j = {{"n", spec.n},
                        {"m", spec.m},
                        {"d", spec.d},
                        {"theta", spec.theta},
                        {"horizon_years", spec.horizon},
                        {"x0", to_json_vector(spec.x0)}};
    if (spec.coeffs.segments.size() == 1) {
        j["constant"] = coefficients_to_json(spec.coeffs.segments.front());
    } else {
        auto arr = nlohmann::json::array();
        for (std::size_t i = 0; i < spec.coeffs.segments.size(); ++i) {
            auto seg = coefficients_to_json(spec.coeffs.segments[i]);
            seg["t"] = spec.coeffs.knots[i];
            arr.push_back(std::move(seg));
        }
        j["piecewise"] = std::move(arr);
    }
    return j;
}

ModelSpec load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open model file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, "cannot parse model file " + path + ": " + e.what());
    }
    return model_from_json(j);
}

void save_model_file(const ModelSpec& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out << model_to_json(spec).dump(2) << '\n';
}

}  // namespace rsbench
