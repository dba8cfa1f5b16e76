#include "rsbench/analytics.hpp"

#include "rsbench/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace rsbench {

namespace {

std::optional<double> safe_ratio(double num, double den) {
    if (den == 0.0 || !std::isfinite(den)) return std::nullopt;
    return num / den;
}

std::string cell(const std::optional<double>& v, int precision) {
    if (!v) return "undefined";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, *v);
    return buf;
}

}  // namespace

SortinoConvention parse_sortino_convention(std::string_view name) {
    for (auto c : {SortinoConvention::BelowMeanCount, SortinoConvention::FullSample, SortinoConvention::BelowZero}) {
        if (to_string(c) == name) return c;
    }
    throw Error(ErrorCode::ConfigError, "unknown sortino convention '" + std::string(name) + "'");
}

std::string_view to_string(SortinoConvention c) {
    switch (c) {
        case SortinoConvention::BelowMeanCount: return "below_mean_count";
        case SortinoConvention::FullSample: return "full_sample";
        case SortinoConvention::BelowZero: return "below_zero";
    }
    return "below_mean_count";
}

PerfReport performance_report(std::span<const double> returns, const PerfOptions& opts) {
    const std::size_t N = returns.size();
    if (N < std::max<std::size_t>(opts.min_samples, 1)) {
        throw Error(ErrorCode::InsufficientData, "performance report needs at least " +
                                                     std::to_string(std::max<std::size_t>(opts.min_samples, 1)) +
                                                     " returns, got " + std::to_string(N));
    }
    if (!(opts.level > 0.0 && opts.level < 1.0)) throw Error(ErrorCode::ConfigError, "level must lie in (0, 1)");

    std::vector<double> r(returns.begin(), returns.end());
    for (auto& v : r) v *= opts.scale;
    const double count = static_cast<double>(N);

    double mean = 0.0, max_abs = 0.0;
    for (double v : r) {
        mean += v;
        max_abs = std::max(max_abs, std::abs(v));
    }
    mean /= count;
    // Second pass removes the rounding of the first, so a constant stream has exactly zero deviations.
    double shift = 0.0;
    for (double v : r) shift += v - mean;
    mean += shift / count;

    double m2 = 0.0, m3 = 0.0, m4 = 0.0, below_ss = 0.0, zero_ss = 0.0;
    std::size_t below = 0;
    for (double v : r) {
        const double c = v - mean;
        const double c2 = c * c;
        m2 += c2;
        m3 += c2 * c;
        m4 += c2 * c2;
        if (v < mean) {
            below_ss += c2;
            ++below;
        }
        if (v < 0.0) zero_ss += v * v;
    }
    m2 /= count;
    m3 /= count;
    m4 /= count;
    if (std::sqrt(m2) <= 1e-14 * max_abs) m2 = m3 = m4 = below_ss = 0.0;

    PerfReport rep;
    rep.sample_count = N;
    rep.level = opts.level;
    rep.mean = mean;
    rep.std = std::sqrt(m2);
    rep.semideviation = below > 0 ? std::sqrt(below_ss / static_cast<double>(below)) : 0.0;
    if (m2 > 0.0) {
        rep.skewness = m3 / std::pow(m2, 1.5);
        rep.kurtosis = m4 / (m2 * m2) - 3.0;
    }

    std::sort(r.begin(), r.end());
    const auto idx = static_cast<std::size_t>(std::floor((1.0 - opts.level) * static_cast<double>(N - 1)));
    const double q = r[idx];
    double tail = 0.0;
    std::size_t tail_n = 0;
    for (double v : r) {
        if (v > q) break;
        tail += v;
        ++tail_n;
    }
    rep.var95 = mean - q;
    rep.cvar95 = mean - tail / static_cast<double>(tail_n);

    double downside = rep.semideviation;
    if (opts.sortino == SortinoConvention::FullSample) downside = std::sqrt(below_ss / count);
    if (opts.sortino == SortinoConvention::BelowZero) downside = std::sqrt(zero_ss / count);

    const auto ratios = ratios_from_moments(rep.mean, rep.std, rep.var95, rep.cvar95);
    rep.sharpe = ratios.sharpe;
    rep.mean_to_var = ratios.mean_to_var;
    rep.mean_to_cvar = ratios.mean_to_cvar;
    rep.sortino = safe_ratio(rep.mean, downside);
    return rep;
}

RatioSet ratios_from_moments(double mean, double std, double var, double cvar) {
    return {safe_ratio(mean, std), safe_ratio(mean, var), safe_ratio(mean, cvar)};
}

std::vector<std::pair<std::string, std::optional<double>>> metric_values(const PerfReport& r) {
    return {{"mean", r.mean},
            {"std", r.std},
            {"semideviation", r.semideviation},
            {"skewness", r.skewness},
            {"kurtosis", r.kurtosis},
            {"var95", r.var95},
            {"cvar95", r.cvar95},
            {"sharpe", r.sharpe},
            {"sortino", r.sortino},
            {"mean_to_var", r.mean_to_var},
            {"mean_to_cvar", r.mean_to_cvar}};
}

const PairDifference* ComparisonVerdict::find(std::string_view a, std::string_view b) const {
    for (const auto& p : pairs) {
        if ((p.first == a && p.second == b) || (p.first == b && p.second == a)) return &p;
    }
    return nullptr;
}

ComparisonVerdict compare_strategies(const std::vector<NamedReport>& reports, double tolerance) {
    ComparisonVerdict verdict;
    verdict.tolerance = tolerance;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        for (std::size_t j = i + 1; j < reports.size(); ++j) {
            PairDifference pd;
            pd.first = reports[i].first;
            pd.second = reports[j].first;
            const auto a = metric_values(reports[i].second);
            const auto b = metric_values(reports[j].second);
            for (std::size_t k = 0; k < a.size(); ++k) {
                double diff = 0.0;
                if (a[k].second.has_value() != b[k].second.has_value()) {
                    diff = std::numeric_limits<double>::infinity();
                } else if (a[k].second) {
                    diff = std::abs(*a[k].second - *b[k].second);
                }
                pd.abs_diff.emplace_back(a[k].first, diff);
                pd.max_diff = std::max(pd.max_diff, diff);
            }
            const double n_diff = std::abs(static_cast<double>(reports[i].second.sample_count) -
                                           static_cast<double>(reports[j].second.sample_count));
            pd.abs_diff.emplace_back("sample_count", n_diff);
            pd.max_diff = std::max(pd.max_diff, n_diff);
            pd.within = pd.max_diff <= tolerance;
            verdict.pairs.push_back(std::move(pd));
        }
    }
    return verdict;
}

std::string format_table(const std::vector<NamedReport>& reports) {
    std::vector<std::string> labels{"Mean (%)", "Std (%)", "Semidev (%)", "Skewness", "Kurtosis",
                                    "VaR (%)",  "CVaR (%)", "Sharpe",     "Sortino",  "Mean-to-VaR",
                                    "Mean-to-CVaR", "Observations"};
    std::size_t label_w = 0;
    for (const auto& l : labels) label_w = std::max(label_w, l.size());
    std::vector<std::vector<std::string>> cols;
    std::size_t col_w = 10;
    for (const auto& [name, rep] : reports) {
        std::vector<std::string> col;
        for (const auto& [metric, value] : metric_values(rep)) {
            (void)metric;
            col.push_back(cell(value, 4));
        }
        col.push_back(std::to_string(rep.sample_count));
        col_w = std::max(col_w, name.size());
        for (const auto& c : col) col_w = std::max(col_w, c.size());
        cols.push_back(std::move(col));
    }
    std::ostringstream os;
    auto pad_left = [](const std::string& s, std::size_t w) { return std::string(w > s.size() ? w - s.size() : 0, ' ') + s; };
    os << std::string(label_w, ' ');
    for (const auto& nr : reports) os << "  " << pad_left(nr.first, col_w);
    os << '\n';
    for (std::size_t i = 0; i < labels.size(); ++i) {
        os << labels[i] << std::string(label_w - labels[i].size(), ' ');
        for (const auto& col : cols) os << "  " << pad_left(col[i], col_w);
        os << '\n';
    }
    return os.str();
}

std::string format_csv(const std::vector<NamedReport>& reports) {
    std::ostringstream os;
    os << "metric";
    for (const auto& nr : reports) os << ',' << nr.first;
    os << '\n';
    if (reports.empty()) return os.str();
    const auto names = metric_values(reports.front().second);
    for (std::size_t k = 0; k < names.size(); ++k) {
        os << names[k].first;
        for (const auto& nr : reports) {
            const auto v = metric_values(nr.second)[k].second;
            if (v) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.17g", *v);
                os << ',' << buf;
            } else {
                os << ",undefined";
            }
        }
        os << '\n';
    }
    os << "sample_count";
    for (const auto& nr : reports) os << ',' << nr.second.sample_count;
    os << '\n';
    return os.str();
}

}  // namespace rsbench
