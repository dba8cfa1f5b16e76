#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rsbench {

/// Denominator convention of the Sortino ratio's downside deviation.
enum class SortinoConvention {
    BelowMeanCount,  // RMS of (r - mean) over r < mean, divided by that count (the semideviation)
    FullSample,      // same deviations, divided by the full sample size
    BelowZero,       // RMS of min(r, 0) over the full sample
};

SortinoConvention parse_sortino_convention(std::string_view name);
std::string_view to_string(SortinoConvention c);

struct PerfOptions {
    double level = 0.95;
    double scale = 100.0;  // reported in percent
    SortinoConvention sortino = SortinoConvention::BelowMeanCount;
    std::size_t min_samples = 100;
};

/// Table-style performance measures; location and dispersion fields are in
/// percent per period. Undefined ratios (zero denominator) are empty.
struct PerfReport {
    double mean = 0.0;
    double std = 0.0;
    double semideviation = 0.0;
    std::optional<double> skewness;
    std::optional<double> kurtosis;  // excess
    double var95 = 0.0;
    double cvar95 = 0.0;
    std::optional<double> sharpe;
    std::optional<double> sortino;
    std::optional<double> mean_to_var;
    std::optional<double> mean_to_cvar;
    std::size_t sample_count = 0;
    double level = 0.95;

    bool degenerate() const { return !sharpe.has_value(); }
};

PerfReport performance_report(std::span<const double> returns, const PerfOptions& opts = {});

struct RatioSet {
    std::optional<double> sharpe;
    std::optional<double> mean_to_var;
    std::optional<double> mean_to_cvar;
};

/// Ratios from already-aggregated statistics.
RatioSet ratios_from_moments(double mean, double std, double var, double cvar);

/// Named metric values in a fixed order, for tables and comparisons.
std::vector<std::pair<std::string, std::optional<double>>> metric_values(const PerfReport& r);

struct PairDifference {
    std::string first;
    std::string second;
    std::vector<std::pair<std::string, double>> abs_diff;  // +inf when only one side is defined
    double max_diff = 0.0;
    bool within = true;
};

struct ComparisonVerdict {
    double tolerance = 0.0;
    std::vector<PairDifference> pairs;

    const PairDifference* find(std::string_view a, std::string_view b) const;
};

using NamedReport = std::pair<std::string, PerfReport>;

ComparisonVerdict compare_strategies(const std::vector<NamedReport>& reports, double tolerance);

/// Aligned text table, one column per report.
std::string format_table(const std::vector<NamedReport>& reports);
/// CSV with a metric column followed by one column per report.
std::string format_csv(const std::vector<NamedReport>& reports);

}  // namespace rsbench
