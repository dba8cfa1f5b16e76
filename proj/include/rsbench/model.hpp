#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

namespace rsbench {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Coefficients of the asset, factor and benchmark dynamics on one segment
/// of the coefficient grid:
///
///   dS_i/S_i = (a + A x)_i ds + (Sigma dW)_i          assets (m)
///   dX       = (b + B x) ds + Lambda dW               factors (n)
///   dL/L     = (c + C x) ds + Xi' dW                  benchmark
///
/// C is stored as an n-vector (the row C_s written as a column).
struct Coefficients {
    VectorXd a;       // m
    MatrixXd A;       // m x n
    MatrixXd Sigma;   // m x d
    VectorXd b;       // n
    MatrixXd B;       // n x n
    MatrixXd Lambda;  // n x d
    double c = 0.0;
    VectorXd C;       // n
    VectorXd Xi;      // d

    /// All-zero coefficients of the given shape.
    static Coefficients zeros(std::size_t n, std::size_t m, std::size_t d);
};

/// Piecewise-constant coefficients. Segment i is active on
/// [knots[i], knots[i+1]), the last one up to and including the horizon.
/// knots[0] is always 0.
struct CoefficientSet {
    std::vector<double> knots;
    std::vector<Coefficients> segments;

    static CoefficientSet constant(Coefficients coeffs);
    std::size_t segment_index(double s) const;
};

struct ModelSpec {
    std::size_t n = 1;
    std::size_t m = 1;
    std::size_t d = 3;
    CoefficientSet coeffs;
    double horizon = 1.0;  // years
    double theta = 1.0;
    VectorXd x0;
};

/// Pre-contracted products of the diffusion loadings at one time.
struct GramBlocks {
    MatrixXd SS;          // Sigma Sigma'            m x m
    MatrixXd SS_inv;      // (Sigma Sigma')^-1       m x m
    MatrixXd SL;          // Sigma Lambda'           m x n
    MatrixXd LL;          // Lambda Lambda'          n x n
    VectorXd SXi;         // Sigma Xi                m
    VectorXd LXi;         // Lambda Xi               n
    double XiXi = 0.0;    // Xi' Xi
    MatrixXd SS_inv_Sigma;  // (Sigma Sigma')^-1 Sigma   m x d
    MatrixXd Pi;            // Sigma'(Sigma Sigma')^-1 Sigma   d x d (projection)
    Eigen::LLT<MatrixXd> SS_chol;

    /// (Sigma Sigma')^-1 v via the cached factorization.
    template <typename Derived>
    typename Derived::PlainObject solve(const Eigen::MatrixBase<Derived>& v) const {
        return SS_chol.solve(v.eval());
    }
};

struct ProjectionPair {
    MatrixXd Pplus;   // I + theta Pi
    MatrixXd Pminus;  // I - theta/(theta+1) Pi
};

/// A model whose invariants have been checked. Gram blocks are computed once
/// per coefficient segment and shared by every query in that segment.
class ValidatedModel {
public:
    const ModelSpec& spec() const { return spec_; }
    std::size_t n() const { return spec_.n; }
    std::size_t m() const { return spec_.m; }
    std::size_t d() const { return spec_.d; }
    double horizon() const { return spec_.horizon; }
    double theta() const { return spec_.theta; }
    const VectorXd& x0() const { return spec_.x0; }

    const Coefficients& coefficients(double s) const;
    const GramBlocks& gram(double s) const;
    std::size_t segment_index(double s) const;

    /// Same market with a different risk sensitivity.
    ValidatedModel with_theta(double theta) const;

private:
    friend ValidatedModel validate_model(const ModelSpec& spec);
    void check_time(double s) const;

    ModelSpec spec_;
    std::shared_ptr<const std::vector<GramBlocks>> grams_;
};

ValidatedModel validate_model(const ModelSpec& spec);

const GramBlocks& gram_blocks(const ValidatedModel& model, double s);

ProjectionPair projection_matrices(const ValidatedModel& model, double s, double theta);
ProjectionPair projection_matrices(const GramBlocks& gram, double theta);

/// Gram blocks for a raw coefficient set; throws SingularCovariance when
/// Sigma Sigma' fails the relative pivot test.
GramBlocks compute_gram_blocks(const Coefficients& coeffs);

// Structured-text model files.
ModelSpec model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const ModelSpec& spec);
ModelSpec load_model_file(const std::string& path);
void save_model_file(const ModelSpec& spec, const std::string& path);

// Shared helpers for JSON <-> Eigen conversion.
nlohmann::json to_json_matrix(const MatrixXd& mat);
nlohmann::json to_json_vector(const VectorXd& vec);
MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& name);
VectorXd vector_from_json(const nlohmann::json& j, const std::string& name);

}  // namespace rsbench
