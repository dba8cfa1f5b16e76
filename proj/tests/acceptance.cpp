// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include "support.hpp"

#include "rsbench/analytics.hpp"
#include "rsbench/cli.hpp"
#include "rsbench/error.hpp"
#include "rsbench/estimate.hpp"
#include "rsbench/game.hpp"
#include "rsbench/policy.hpp"
#include "rsbench/rng.hpp"
#include "rsbench/simulate.hpp"
#include "rsbench/valuefn.hpp"

#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

using namespace rsbench;
using namespace rsbench::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

double inf_norm(const MatrixXd& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

double relative(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// 1. Projection identity.
Outcome projection_identity() {
    std::mt19937_64 rng(101);
    double worst = 0.0;
    const double thetas[] = {0.0, 0.1, 1.0, 10.0};
    for (int i = 0; i < 100; ++i) {
        const auto model = validate_model(random_spec(rng, thetas[i % 4]));
        const auto P = projection_matrices(model, 0.0, model.theta());
        const auto d = static_cast<Eigen::Index>(model.d());
        worst = std::max(worst, inf_norm(P.Pminus * P.Pplus - MatrixXd::Identity(d, d)));
    }
    return {worst < 1e-12, "max ||P-P+ - I||inf = " + fmt(worst) + " over 100 models"};
}

// 2. Riccati correctness by step halving.
Outcome riccati_convergence() {
    const auto model = validate_model(scalar_spec(1.0));
    struct Y {
        double Q, q, k;
    };
    std::vector<Y> ys;
    for (double spy : {252.0, 504.0, 1008.0}) {
        const auto vc = solve_value_coefficients(model, spy);
        ys.push_back({vc.Q.front()(0, 0), vc.q.front()(0), vc.k.front()});
    }
    const auto diff = [](const Y& a, const Y& b) {
        return std::max({std::abs(a.Q - b.Q), std::abs(a.q - b.q), std::abs(a.k - b.k)});
    };
    const double order = std::log2(diff(ys[0], ys[1]) / diff(ys[1], ys[2]));
    const double rel = std::max({relative(ys[0].Q, ys[1].Q), relative(ys[0].q, ys[1].q), relative(ys[0].k, ys[1].k)});
    return {rel < 1e-8 && order >= 3.7, "relative change under halving " + fmt(rel) + ", observed order " + fmt(order)};
}

// 3. Route equivalence, pointwise and through the experiment command.
Outcome route_equivalence() {
    std::mt19937_64 rng(103);
    double worst_h = 0.0, worst_g = 0.0;
    for (int m = 0; m < 10; ++m) {
        const double theta = std::uniform_real_distribution<double>(0.05, 10.0)(rng);
        const auto spec = random_spec(rng, theta);
        const auto model = validate_model(spec);
        const auto vc = solve_value_coefficients(model, 252.0);
        std::uniform_real_distribution<double> U(0.0, spec.horizon);
        for (int p = 0; p < 100; ++p) {
            const double t = U(rng);
            const VectorXd x = gaussian(rng, static_cast<Eigen::Index>(spec.n), 1, 0.5);
            const auto& c = model.coefficients(t);
            const VectorXd h = optimal_h(model, vc, t, x);
            worst_h = std::max(worst_h, scaled_difference(h, optimal_h_kn(model, vc, t, x)));
            const VectorXd e = c.Sigma.transpose() * h - c.Xi;
            worst_g = std::max(worst_g, scaled_difference(optimal_gamma(model, vc, t, x),
                                                          optimal_nu(model, vc, t, x) - theta * e));
        }
    }

    const fs::path dir = fs::temp_directory_path() / "rsbench_acceptance_experiment";
    fs::remove_all(dir);
    fs::create_directories(dir);
    nlohmann::json cfg{{"model", (fs::path(RSBENCH_SOURCE_DIR) / "configs/models/two_asset.json").string()},
                       {"simulation", {{"paths", 2000}, {"steps", 252}, {"dt", 1.0 / 252.0}}},
                       {"seed", 2024},
                       {"out", (dir / "out").string()}};
    std::ofstream(dir / "config.json") << cfg.dump();
    std::ostringstream out, err;
    const int code = cli::run({"--config", (dir / "config.json").string(), "experiment"}, out, err);
    double column_diff = std::numeric_limits<double>::infinity();
    if (code == 0) {
        std::ifstream in(dir / "out/experiment.json");
        column_diff = nlohmann::json::parse(in)["kn_vs_feed_max_diff"].get<double>();
    }
    fs::remove_all(dir);
    const bool ok = worst_h <= 1e-12 && worst_g <= 1e-12 && column_diff <= 1e-12;
    return {ok, "h FEED vs KN " + fmt(worst_h) + ", gamma vs nu - theta e " + fmt(worst_g) +
                    ", experiment column diff " + fmt(column_diff)};
}

// 4. Fractional and regularized Kelly identities.
Outcome decomposition_identities() {
    std::mt19937_64 rng(104);
    double worst = 0.0;
    for (int m = 0; m < 20; ++m) {
        const double theta = std::uniform_real_distribution<double>(0.0, 5.0)(rng);
        const auto spec = random_spec(rng, theta);
        const auto model = validate_model(spec);
        const auto vc = solve_value_coefficients(model, 52.0);
        for (int p = 0; p < 10; ++p) {
            const double t = std::uniform_real_distribution<double>(0.0, spec.horizon)(rng);
            const VectorXd x = gaussian(rng, static_cast<Eigen::Index>(spec.n), 1, 0.5);
            const auto& c = model.coefficients(t);
            const auto st = interpolate(vc, t);
            const MatrixXd S = c.Sigma * c.Sigma.transpose();
            const auto lu = S.fullPivLu();
            const VectorXd kelly = lu.solve(c.a + c.A * x);
            const VectorXd bench = lu.solve(c.Sigma * c.Xi);
            const VectorXd hedge = lu.solve(c.Sigma * c.Lambda.transpose() * (st.Q * x + st.q));
            const double f = 1.0 / (theta + 1.0);
            const VectorXd h = optimal_h(model, vc, t, x);
            worst = std::max(worst, scaled_difference(h, f * kelly + (1.0 - f) * bench - (1.0 - f) * hedge));
            const VectorXd g = optimal_gamma(model, vc, t, x);
            worst = std::max(worst, scaled_difference(h, kelly + lu.solve(c.Sigma * g)));
        }
    }
    return {worst <= 1e-12, "max scaled deviation " + fmt(worst)};
}

// 5. Saddle probes and the Isaacs condition.
Outcome saddle_suite() {
    std::mt19937_64 rng(105);
    const auto spec = random_spec(rng, 1.5);
    const auto model = validate_model(spec);
    const auto vc = solve_value_coefficients(model, 252.0);
    SaddleOptions so;
    so.probes = 10000;
    so.seed = 5;
    so.throw_on_violation = false;
    const auto rep = saddle_check(model, vc, 0.3 * spec.horizon, spec.x0, so);
    const double viol = std::max(rep.max_violation_h, rep.max_violation_gamma) / (1.0 + std::abs(rep.center_value));

    double worst_gap = 0.0;
    for (int p = 0; p < 100; ++p) {
        const auto s2 = random_spec(rng, std::uniform_real_distribution<double>(0.05, 10.0)(rng));
        const auto m2 = validate_model(s2);
        const auto v2 = solve_value_coefficients(m2, 52.0);
        const double t = std::uniform_real_distribution<double>(0.0, s2.horizon)(rng);
        const VectorXd x = gaussian(rng, static_cast<Eigen::Index>(s2.n), 1, 0.5);
        const auto gap = hamiltonian_minimax_gap(m2, v2, t, x);
        worst_gap = std::max(worst_gap, gap.gap / (1.0 + std::abs(gap.h_plus)));
    }
    const bool ok = rep.passed() && viol < 1e-9 && worst_gap < 1e-9;
    return {ok, "relative probe violation " + fmt(viol) + " over 10^4 probes, max relative Isaacs gap " + fmt(worst_gap)};
}

// 6. Value function against Monte Carlo; a suboptimal strategy does worse.
Outcome value_function_mc() {
    const auto spec = two_asset_spec(1.0);
    const auto model = validate_model(spec);
    const auto vc = solve_value_coefficients(model, 252.0);
    SimConfig cfg;
    cfg.n_paths = 100000;
    cfg.steps = 252;
    cfg.dt = 1.0 / 252.0;
    cfg.seed = derive_seed(606, 1);
    cfg.antithetic = true;
    const auto opt = simulate_paths(model, &vc, cfg);
    const auto est = mc_criterion(opt, spec.theta);
    const double u0 = value_function(vc, 0.0, spec.x0).u;
    const double z = std::abs(est.log_estimate - u0) / est.log_std_error;

    const auto& c = spec.coeffs.segments.front();
    const MatrixXd S = c.Sigma * c.Sigma.transpose();
    cfg.strategy = Strategy::Custom;
    cfg.custom_h = [S, c](double, const VectorXd& x) -> VectorXd { return 2.0 * S.ldlt().solve(c.a + c.A * x); };
    const auto sub = simulate_paths(model, &vc, cfg);
    const auto est_sub = mc_criterion(sub, spec.theta);
    // Standard errors of J = -(1/theta) ln E from the delta method.
    const double se_opt = est.log_std_error / spec.theta;
    const double se_sub = est_sub.log_std_error / spec.theta;
    const double joint = std::hypot(se_opt, se_sub);
    const bool worse = est_sub.J <= est.J - 3.0 * joint;
    return {z <= 3.0 && worse, "|ln E - u(0,x0)| = " + fmt(z) + " s.e.; J optimal " + fmt(est.J) + ", 2x Kelly " +
                                   fmt(est_sub.J) + " (joint s.e. " + fmt(joint) + ")"};
}

// 7. Density factorization, martingale property, relative entropy.
Outcome measure_suite() {
    const auto spec = two_asset_spec(2.0);
    const auto model = validate_model(spec);
    const auto vc = solve_value_coefficients(model, 252.0);
    SimConfig cfg;
    cfg.n_paths = 10000;
    cfg.steps = 252;
    cfg.dt = 1.0 / 252.0;
    cfg.seed = derive_seed(707, 4);
    const auto phys = simulate_paths(model, &vc, cfg);
    double worst = 0.0;
    for (std::size_t i = 0; i < phys.n_paths; ++i) {
        const double lhs = phys.logchi_gamma[i];
        worst = std::max(worst, std::abs(lhs - phys.logchi_h[i] - phys.logchi_h_to_gamma[i]) / std::max(1.0, std::abs(lhs)));
    }
    const auto mg = martingale_check(phys, Density::Gamma);
    const auto mh = martingale_check(phys, Density::H);
    const double zg = std::abs(mg.mean - 1.0) / mg.std_error;
    const double zh = std::abs(mh.mean - 1.0) / mh.std_error;

    cfg.measure = Measure::TiltedGamma;
    const auto tilted = simulate_paths(model, &vc, cfg);
    const auto kl = kl_estimate(tilted);
    const double zkl = std::abs(kl.from_logchi.mean - kl.from_gamma_norm.mean) / kl.combined_std_error();
    const bool ok = worst <= 1e-10 && zg <= 3.0 && zh <= 3.0 && zkl <= 3.0;
    return {ok, "factorization " + fmt(worst) + ", E[chi] z-scores " + fmt(zg) + " / " + fmt(zh) + ", KL z-score " +
                    fmt(zkl)};
}

// 8. Kelly limit.
Outcome kelly_limit() {
    std::mt19937_64 rng(108);
    double worst_small = 0.0, worst_zero = 0.0;
    for (int m = 0; m < 10; ++m) {
        auto spec = random_spec(rng, 1e-8);
        spec.coeffs.segments[0].Xi.setZero();
        const auto model = validate_model(spec);
        const auto vc = solve_value_coefficients(model, 52.0);
        auto spec0 = spec;
        spec0.theta = 0.0;
        const auto model0 = validate_model(spec0);
        const auto vc0 = solve_value_coefficients(model0, 52.0);
        for (int p = 0; p < 10; ++p) {
            const VectorXd x = gaussian(rng, static_cast<Eigen::Index>(spec.n), 1, 0.5);
            const double t = std::uniform_real_distribution<double>(0.0, spec.horizon)(rng);
            const VectorXd kelly = kelly_portfolio(model, t, x);
            worst_small = std::max(worst_small, (optimal_h(model, vc, t, x) - kelly).cwiseAbs().maxCoeff());
            worst_zero = std::max(worst_zero, (optimal_h(model0, vc0, t, x) - kelly).cwiseAbs().maxCoeff());
        }
    }
    return {worst_small < 1e-6 && worst_zero == 0.0,
            "theta=1e-8 max deviation " + fmt(worst_small) + ", theta=0 max deviation " + fmt(worst_zero)};
}

// 9. Published ratio reproduction.
Outcome table_ratios() {
    struct Column {
        double mean, std, var, cvar, sharpe, mvar, mcvar;
    };
    const Column cols[] = {
        {0.0507, 1.1682, 1.6773, 2.8334, 0.0434, 0.0302, 0.0179},
        {0.2437, 4.3154, 7.0890, 8.9186, 0.0565, 0.0344, 0.0273},
        {0.2437, 4.3154, 7.0890, 8.9186, 0.0565, 0.0344, 0.0273},
        {0.3078, 7.8217, 12.8507, 16.1727, 0.0394, 0.0240, 0.0190},
    };
    double worst = 0.0;
    for (const auto& c : cols) {
        const auto r = ratios_from_moments(c.mean, c.std, c.var, c.cvar);
        worst = std::max({worst, std::abs(*r.sharpe - c.sharpe), std::abs(*r.mean_to_var - c.mvar),
                          std::abs(*r.mean_to_cvar - c.mcvar)});
    }
    return {worst <= 1e-4 + 1e-12, "max absolute ratio deviation " + fmt(worst)};
}

// 10. Estimation round trip.
Outcome estimation_round_trip() {
    // Strongly risk-averse investor on a spanned single-asset benchmark: the
    // allocation is dominated by benchmark tracking, which is identified
    // exactly, while the noisy drift enters with weight 1/(theta+1).
    ModelSpec spec;
    spec.n = spec.m = 1;
    spec.d = 2;
    auto c = Coefficients::zeros(1, 1, 2);
    c.a << 0.25;
    c.A << 0.5;
    c.Sigma << 0.5, 0.0;
    c.b << 0.0;
    c.B << -2.0;
    c.Lambda << 0.0, 0.1;
    c.c = 0.25;
    c.C << 0.5;
    c.Xi << 0.5, 0.0;
    spec.coeffs = CoefficientSet::constant(c);
    spec.theta = 19.0;
    spec.horizon = 1.0;
    spec.x0 = VectorXd::Zero(1);
    const auto truth = validate_model(spec);
    const auto vc_true = solve_value_coefficients(truth, 252.0);
    const VectorXd h_true = optimal_h(truth, vc_true, 0.0, spec.x0);

    const auto panel = simulate_market_panel(truth, 20 * 252 + 1, 1.0 / 252.0, derive_seed(1010, 1), VectorXd::Ones(1));
    EstimationOptions opts;
    opts.theta = spec.theta;
    opts.horizon = spec.horizon;
    opts.x0 = spec.x0;
    opts.boot.seed = derive_seed(1010, 2);
    const auto rep = estimate_model(panel, opts);
    const auto est = validate_model(rep.model);
    const auto vc_est = solve_value_coefficients(est, 252.0);
    const VectorXd h_est = optimal_h(est, vc_est, 0.0, spec.x0);
    const double rel_h = relative(h_est(0), h_true(0));

    const auto& ce = rep.model.coeffs.segments.front();
    const VectorXd g_true = gram_vector(c.Sigma, c.Lambda, c.Xi);
    const VectorXd g_est = gram_vector(ce.Sigma, ce.Lambda, ce.Xi);
    double worst_z = 0.0;
    for (Eigen::Index i = 0; i < g_true.size(); ++i) {
        worst_z = std::max(worst_z, std::abs(g_est(i) - g_true(i)) / rep.bootstrap->gram_std_error(i));
    }
    return {rel_h <= 0.10 && worst_z <= 3.0, "h*(0,x0) " + fmt(h_est(0)) + " vs " + fmt(h_true(0)) + " (rel " +
                                                 fmt(rel_h) + "), worst Gram z-score " + fmt(worst_z)};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "projection identity", 1.0, projection_identity},
        {2, "Riccati convergence", 5.0, riccati_convergence},
        {3, "route equivalence", 30.0, route_equivalence},
        {4, "decomposition identities", 1.0, decomposition_identities},
        {5, "saddle and Isaacs", 10.0, saddle_suite},
        {6, "value function vs Monte Carlo", 60.0, value_function_mc},
        {7, "measure identities", 60.0, measure_suite},
        {8, "Kelly limit", 1.0, kelly_limit},
        {9, "table ratios", 1.0, table_ratios},
        {10, "estimation round trip", 120.0, estimation_round_trip},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs <= c.budget_s;
        const bool pass = o.passed && in_time;
        if (!pass) ++failures;
        std::printf("criterion %2d %-30s %s  %s; %.2f s (budget %.0f s)%s\n", c.id, c.name, pass ? "PASS" : "FAIL",
                    o.detail.c_str(), secs, c.budget_s, in_time ? "" : " OVER BUDGET");
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
