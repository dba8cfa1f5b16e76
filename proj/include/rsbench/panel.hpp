#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace rsbench {

/// Historical (or synthetic) observations used for estimation. Row i of
/// asset_logret is the excess log return over (t_{i-1}, t_i]; row 0 is
/// unused by the regressions since it has no preceding factor level.
struct ReturnPanel {
    std::vector<std::string> dates;
    std::vector<std::string> asset_names;
    std::vector<std::string> factor_names;
    Eigen::MatrixXd asset_logret;   // T x m
    Eigen::MatrixXd factor_levels;  // T x n
    Eigen::VectorXd bench_weights;  // m, sums to 1
    double dt = 1.0 / 252.0;

    Eigen::Index observations() const { return asset_logret.rows(); }
    Eigen::Index assets() const { return asset_logret.cols(); }
    Eigen::Index factors() const { return factor_levels.cols(); }
};

}  // namespace rsbench
