#pragma once

#include "rsbench/model.hpp"
#include "rsbench/panel.hpp"
#include "rsbench/valuefn.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace rsbench {

enum class Measure { Physical, TiltedGamma, TiltedH };
enum class Strategy { Optimal, OptimalKN, Kelly, Benchmark, Custom };

std::string_view to_string(Measure m);
std::string_view to_string(Strategy s);
Measure parse_measure(std::string_view name);
Strategy parse_strategy(std::string_view name);

/// Feedback map (t, x) -> control.
using FeedbackMap = std::function<VectorXd(double, const VectorXd&)>;

struct SimConfig {
    std::size_t n_paths = 5000;
    std::size_t steps = 1260;
    double dt = 1.0 / 252.0;
    std::uint64_t seed = 0;
    Measure measure = Measure::Physical;
    bool antithetic = false;
    Strategy strategy = Strategy::Optimal;
    FeedbackMap custom_h;      // Strategy::Custom
    FeedbackMap custom_gamma;  // overrides the candidate tilt when set
    std::size_t threads = 1;
    bool record_paths = false;    // X, R and applied controls at every step
    bool record_returns = false;  // per-step log returns of portfolio and benchmark
};

/// Simulated trajectories. Path-major flat storage; per-path scalars are
/// indexed by path. Optional arrays are empty unless requested.
struct PathBundle {
    std::size_t n_paths = 0;
    std::size_t steps = 0;
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t d = 0;
    double dt = 0.0;
    double theta = 0.0;
    std::uint64_t seed = 0;
    Measure measure = Measure::Physical;
    Strategy strategy = Strategy::Optimal;
    bool antithetic = false;

    std::vector<double> R_T;
    std::vector<double> logchi_gamma;       // ln chi^Gamma at the horizon
    std::vector<double> logchi_h;           // ln chi^H
    std::vector<double> logchi_h_to_gamma;  // ln dP^Gamma/dP^H, built from Lambda'Du
    std::vector<double> logchi_nu;          // the same increment built from nu = -theta Lambda'DU
    std::vector<double> half_int_gamma2;    // 1/2 int |gamma|^2 ds

    std::vector<double> X;              // [path][step 0..steps][n]
    std::vector<double> R;              // [path][step 0..steps]
    std::vector<double> applied_h;      // [path][step][m]
    std::vector<double> applied_gamma;  // [path][step][d]
    std::vector<double> portfolio_logret;  // [path][step]
    std::vector<double> benchmark_logret;  // [path][step]

    double x_at(std::size_t path, std::size_t step, std::size_t i) const { return X[(path * (steps + 1) + step) * n + i]; }
    double r_at(std::size_t path, std::size_t step) const { return R[path * (steps + 1) + step]; }
};

/// Euler-Maruyama simulation of the factor state, the log price relative and
/// the density processes, all driven by one d-dimensional increment per step.
/// `vc` may be null for strategies that do not need the value function.
PathBundle simulate_paths(const ValidatedModel& model, const ValueCoefficients* vc, const SimConfig& cfg);

struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

struct CriterionEstimate {
    double estimate = 0.0;      // mean of exp(-theta R_T)
    double std_error = 0.0;
    double log_estimate = 0.0;  // ln estimate
    double log_std_error = 0.0; // delta-method error of ln estimate
    double J = 0.0;             // -(1/theta) ln estimate; mean R_T at theta = 0
};

/// Sample mean and standard error of per-path values; antithetic bundles use
/// pair averages so the error reflects the pairing.
MeanEstimate sample_mean(const std::vector<double>& values, bool antithetic);

CriterionEstimate mc_criterion(const PathBundle& bundle, double theta);

struct KlEstimate {
    MeanEstimate from_logchi;
    MeanEstimate from_gamma_norm;

    double combined_std_error() const;
};

KlEstimate kl_estimate(const PathBundle& bundle);

enum class Density { Gamma, H };

/// Sample mean of the terminal density; a true martingale has unit mean.
MeanEstimate martingale_check(const PathBundle& bundle, Density which = Density::Gamma);

/// Synthetic daily panel from the model: asset excess log returns, factor
/// levels and the given fixed benchmark weights.
ReturnPanel simulate_market_panel(const ValidatedModel& model, std::size_t observations, double dt,
                                  std::uint64_t seed, const VectorXd& bench_weights);

void write_terminal_csv(const PathBundle& bundle, const std::string& path);
void write_returns_csv(const PathBundle& bundle, const std::string& path);
void write_path_dump(const PathBundle& bundle, const std::string& path);

}  // namespace rsbench
