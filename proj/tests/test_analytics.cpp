#include "doctest.h"
#include "support.hpp"

#include "rsbench/analytics.hpp"
#include "rsbench/error.hpp"
#include "rsbench/simulate.hpp"

#include <algorithm>
#include <numeric>

using namespace rsbench;
using namespace rsbench::testing;

namespace {

std::vector<double> normal_sample(std::uint64_t seed, std::size_t n, double mu, double sigma) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(mu, sigma);
    std::vector<double> out(n);
    for (auto& v : out) v = N(rng);
    return out;
}

PerfOptions unscaled() {
    PerfOptions o;
    o.scale = 1.0;
    return o;
}

}  // namespace

TEST_CASE("ratios reproduce the published performance table") {
    struct Column {
        double mean, std, var, cvar, sharpe, mvar, mcvar;
    };
    const Column cols[] = {
        {0.0507, 1.1682, 1.6773, 2.8334, 0.0434, 0.0302, 0.0179},
        {0.2437, 4.3154, 7.0890, 8.9186, 0.0565, 0.0344, 0.0273},
        {0.2437, 4.3154, 7.0890, 8.9186, 0.0565, 0.0344, 0.0273},
        {0.3078, 7.8217, 12.8507, 16.1727, 0.0394, 0.0240, 0.0190},
    };
    for (const auto& c : cols) {
        const auto r = ratios_from_moments(c.mean, c.std, c.var, c.cvar);
        REQUIRE(r.sharpe.has_value());
        CHECK(std::abs(*r.sharpe - c.sharpe) <= 1e-4);
        CHECK(std::abs(*r.mean_to_var - c.mvar) <= 1e-4);
        CHECK(std::abs(*r.mean_to_cvar - c.mcvar) <= 1e-4);
    }
}

TEST_CASE("moments match direct two-pass formulas") {
    const auto r = normal_sample(61, 5000, 0.001, 0.02);
    const auto rep = performance_report(r, unscaled());
    const double n = static_cast<double>(r.size());
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0, below = 0.0;
    std::size_t nb = 0;
    for (double v : r) {
        const double c = v - mean;
        m2 += c * c;
        m3 += c * c * c;
        m4 += c * c * c * c;
        if (v < mean) {
            below += c * c;
            ++nb;
        }
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    CHECK(rep.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(rep.std == doctest::Approx(std::sqrt(m2)).epsilon(1e-12));
    CHECK(*rep.skewness == doctest::Approx(m3 / std::pow(m2, 1.5)).epsilon(1e-10));
    CHECK(*rep.kurtosis == doctest::Approx(m4 / (m2 * m2) - 3.0).epsilon(1e-10));
    CHECK(rep.semideviation == doctest::Approx(std::sqrt(below / static_cast<double>(nb))).epsilon(1e-12));
    CHECK(*rep.sharpe == doctest::Approx(mean / std::sqrt(m2)).epsilon(1e-12));
    CHECK(*rep.sortino == doctest::Approx(mean / rep.semideviation).epsilon(1e-12));
    CHECK(rep.sample_count == 5000);
}

TEST_CASE("tail measures use the lower order statistic") {
    std::vector<double> r(101);
    std::iota(r.begin(), r.end(), 0.0);
    std::reverse(r.begin(), r.end());
    const auto rep = performance_report(r, unscaled());
    CHECK(rep.mean == 50.0);
    CHECK(rep.var95 == 45.0);                           // mean minus sorted[5]
    CHECK(rep.cvar95 == doctest::Approx(50.0 - 2.5));  // mean of {0,...,5}
    CHECK(*rep.mean_to_var == doctest::Approx(50.0 / 45.0));
}

TEST_CASE("Sortino conventions") {
    const std::vector<double> base{-2.0, -1.0, 0.5, 1.0, 3.0, 4.5};
    std::vector<double> r;
    for (int k = 0; k < 20; ++k) r.insert(r.end(), base.begin(), base.end());
    auto o = unscaled();
    const double mean = 1.0;
    double ss = 0.0, zero = 0.0;
    std::size_t nb = 0;
    for (double v : r) {
        if (v < mean) {
            ss += (v - mean) * (v - mean);
            ++nb;
        }
        if (v < 0.0) zero += v * v;
    }
    const double n = static_cast<double>(r.size());
    o.sortino = SortinoConvention::BelowMeanCount;
    CHECK(*performance_report(r, o).sortino == doctest::Approx(mean / std::sqrt(ss / static_cast<double>(nb))));
    o.sortino = SortinoConvention::FullSample;
    CHECK(*performance_report(r, o).sortino == doctest::Approx(mean / std::sqrt(ss / n)));
    o.sortino = SortinoConvention::BelowZero;
    CHECK(*performance_report(r, o).sortino == doctest::Approx(mean / std::sqrt(zero / n)));
    CHECK(parse_sortino_convention("full_sample") == SortinoConvention::FullSample);
    CHECK_THROWS_AS(parse_sortino_convention("bogus"), Error);
}

TEST_CASE("constant streams have undefined ratios") {
    const std::vector<double> r(250, 0.0003);
    const auto rep = performance_report(r);
    CHECK(rep.std == 0.0);
    CHECK(rep.semideviation == 0.0);
    CHECK_FALSE(rep.sharpe.has_value());
    CHECK_FALSE(rep.skewness.has_value());
    CHECK_FALSE(rep.mean_to_var.has_value());
    CHECK(rep.degenerate());
    CHECK(format_table({{"flat", rep}}).find("undefined") != std::string::npos);
}

TEST_CASE("scale and shift behaviour") {
    const auto r = normal_sample(62, 1000, 0.002, 0.01);
    const auto base = performance_report(r, unscaled());
    std::vector<double> scaled(r), shifted(r);
    for (auto& v : scaled) v *= 3.0;
    for (auto& v : shifted) v += 0.01;
    const auto s = performance_report(scaled, unscaled());
    const auto h = performance_report(shifted, unscaled());
    CHECK(s.mean == doctest::Approx(3.0 * base.mean).epsilon(1e-12));
    CHECK(s.std == doctest::Approx(3.0 * base.std).epsilon(1e-12));
    CHECK(s.var95 == doctest::Approx(3.0 * base.var95).epsilon(1e-12));
    CHECK(*s.sharpe == doctest::Approx(*base.sharpe).epsilon(1e-12));
    CHECK(*s.skewness == doctest::Approx(*base.skewness).epsilon(1e-9));
    CHECK(h.std == doctest::Approx(base.std).epsilon(1e-9));
    CHECK(h.var95 == doctest::Approx(base.var95).epsilon(1e-9));
    CHECK(h.cvar95 == doctest::Approx(base.cvar95).epsilon(1e-9));
    CHECK(*h.kurtosis == doctest::Approx(*base.kurtosis).epsilon(1e-8));
    const auto pct = performance_report(r);
    CHECK(pct.mean == doctest::Approx(100.0 * base.mean).epsilon(1e-12));
}

TEST_CASE("comparison of identical reports") {
    const auto r = normal_sample(63, 500, 0.0, 0.01);
    const auto rep = performance_report(r);
    const auto verdict = compare_strategies({{"A", rep}, {"B", rep}, {"C", performance_report(normal_sample(64, 500, 0.0, 0.01))}}, 1e-12);
    REQUIRE(verdict.pairs.size() == 3);
    const auto* ab = verdict.find("B", "A");
    REQUIRE(ab != nullptr);
    CHECK(ab->within);
    CHECK(ab->max_diff == 0.0);
    CHECK_FALSE(verdict.find("A", "C")->within);
    CHECK(verdict.find("A", "Z") == nullptr);
}

TEST_CASE("too few samples") {
    const std::vector<double> r(99, 0.01);
    try {
        performance_report(r);
        FAIL("expected InsufficientData");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InsufficientData);
    }
}

TEST_CASE("table and CSV layout") {
    const auto rep = performance_report(normal_sample(65, 300, 0.001, 0.01));
    const auto table = format_table({{"Kelly", rep}, {"Benchmark", rep}});
    CHECK(table.find("Kelly") != std::string::npos);
    CHECK(table.find("Mean-to-CVaR") != std::string::npos);
    const auto csv = format_csv({{"Kelly", rep}});
    CHECK(csv.rfind("metric,Kelly\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
    CHECK(csv.find("sample_count,300") != std::string::npos);
}

TEST_CASE("Kelly is more volatile than the risk-sensitive portfolio") {
    const auto model = validate_model(two_asset_spec(1.0));
    const auto vc = solve_value_coefficients(model, 252.0);
    SimConfig cfg;
    cfg.n_paths = 200;
    cfg.steps = 252;
    cfg.seed = 5;
    cfg.record_returns = true;
    const auto opt = simulate_paths(model, &vc, cfg);
    cfg.strategy = Strategy::Kelly;
    const auto kelly = simulate_paths(model, nullptr, cfg);
    const auto r_opt = performance_report(opt.portfolio_logret);
    const auto r_kelly = performance_report(kelly.portfolio_logret);
    const auto r_bench = performance_report(opt.benchmark_logret);
    CHECK(r_kelly.std > r_opt.std);
    CHECK(r_opt.std > r_bench.std);
}
