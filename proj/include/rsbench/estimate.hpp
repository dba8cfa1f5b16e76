#pragma once

#include "rsbench/model.hpp"
#include "rsbench/panel.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rsbench {

/// Maps CSV columns to roles. Benchmark weights come from configuration, not the file.
struct PanelSchema {
    std::string date_column = "date";
    std::string asset_prefix = "asset:";
    std::string factor_prefix = "factor:";
    VectorXd bench_weights;  // empty selects equal weights
    double dt = 1.0 / 252.0;
};

ReturnPanel load_panel(const std::string& path, const PanelSchema& schema);
ReturnPanel parse_panel(std::istream& in, const PanelSchema& schema, const std::string& source = "<stream>");
void save_panel_csv(const ReturnPanel& panel, const std::string& path);

/// Checks shapes, finiteness, date order and weights.
void validate_panel(const ReturnPanel& panel);

struct RegressionFit {
    std::string response;
    VectorXd coef;       // intercept first
    VectorXd std_error;
    double r_squared = 0.0;
    double residual_var = 0.0;
};

struct DriftEstimate {
    VectorXd a;
    MatrixXd A;
    VectorXd b;
    MatrixXd B;
    std::vector<RegressionFit> fits;  // factors first, then assets
};

/// OLS of the discretized state and log-return drifts on (1, X).
DriftEstimate estimate_drift(const ReturnPanel& panel);
/// Same, with the Ito correction taken from a supplied Sigma Sigma'.
DriftEstimate estimate_drift(const ReturnPanel& panel, const MatrixXd& SS);

struct LoadingEstimate {
    MatrixXd Sigma;      // m x d
    MatrixXd Lambda;     // n x d
    VectorXd Xi;         // d
    MatrixXd joint_cov;  // (m+n+1) square, per unit time
    MatrixXd factor;     // lower-triangular, joint_cov = factor factor'
    double condition = 0.0;  // of the asset-factor block
};

/// Realized covariance of (asset returns, factor increments, benchmark return)
/// and its lower-triangular factorization with d = m+n+1.
LoadingEstimate estimate_loadings(const ReturnPanel& panel);

struct BenchmarkCoefficients {
    double c = 0.0;
    VectorXd C;
    VectorXd Xi;
};

/// Fixed-weight benchmark in price-relative form: c = w'a, C = w'A, Xi = Sigma'w.
BenchmarkCoefficients build_benchmark(const VectorXd& weights, const VectorXd& a, const MatrixXd& A,
                                      const MatrixXd& Sigma);

/// Gram blocks flattened in the order SS, SL, LL, SXi, LXi, XiXi (row-major).
VectorXd gram_vector(const MatrixXd& Sigma, const MatrixXd& Lambda, const VectorXd& Xi);
std::vector<std::string> gram_labels(std::size_t m, std::size_t n);

struct BootstrapOptions {
    std::size_t resamples = 500;
    std::size_t block_length = 21;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct BootstrapResult {
    std::size_t resamples = 0;
    std::size_t block_length = 0;
    VectorXd gram_std_error;  // layout of gram_vector
};

/// Stationary block bootstrap of the realized Gram blocks; standard errors only.
BootstrapResult bootstrap_gram(const ReturnPanel& panel, const BootstrapOptions& opts);

struct EstimationOptions {
    double theta = 1.0;
    double horizon = 1.0;
    std::optional<VectorXd> x0;  // defaults to the last factor observation
    bool bootstrap = true;
    BootstrapOptions boot;
};

struct EstimationReport {
    ModelSpec model;
    DriftEstimate drift;
    LoadingEstimate loadings;
    std::optional<BootstrapResult> bootstrap;
    double ss_condition = 0.0;
    std::size_t observations = 0;
};

EstimationReport estimate_model(const ReturnPanel& panel, const EstimationOptions& opts);

nlohmann::json estimation_report_to_json(const EstimationReport& report);

}  // namespace rsbench
