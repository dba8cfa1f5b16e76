#include "rsbench/estimate.hpp"

#include "rsbench/error.hpp"
#include "rsbench/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

namespace rsbench {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out = s.substr(b, e - b);
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool is_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    }
    const int month = std::stoi(s.substr(5, 2));
    const int day = std::stoi(s.substr(8, 2));
    return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

std::string line_ref(const std::string& source, std::size_t line) {
    return source + ":" + std::to_string(line);
}

void check_weights(const VectorXd& w, Eigen::Index m) {
    if (w.size() != m) {
        throw Error(ErrorCode::DimensionMismatch, "benchmark weights have " + std::to_string(w.size()) +
                                                      " entries for " + std::to_string(m) + " assets");
    }
    if (!w.allFinite() || std::abs(w.sum() - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg << "benchmark weights sum to " << w.sum() << ", expected 1";
        throw Error(ErrorCode::WeightSumError, msg.str());
    }
}

/// Increments used by all estimators: row k holds the asset returns over
/// (t_k, t_{k+1}] followed by the factor increments over the same interval.
MatrixXd increments(const ReturnPanel& panel) {
    const Eigen::Index N = panel.observations() - 1;
    const Eigen::Index m = panel.assets();
    const Eigen::Index n = panel.factors();
    MatrixXd Y(N, m + n);
    Y.leftCols(m) = panel.asset_logret.bottomRows(N);
    Y.rightCols(n) = panel.factor_levels.bottomRows(N) - panel.factor_levels.topRows(N);
    return Y;
}

MatrixXd realized_cov(const MatrixXd& Y, double dt) {
    const MatrixXd centered = Y.rowwise() - Y.colwise().mean();
    return (centered.transpose() * centered) / (static_cast<double>(Y.rows()) * dt);
}

/// Gram blocks from the asset-factor covariance and the benchmark weights.
VectorXd gram_from_cov(const MatrixXd& cov, const VectorXd& w, Eigen::Index m, Eigen::Index n) {
    const MatrixXd Caa = cov.topLeftCorner(m, m);
    const MatrixXd Caf = cov.topRightCorner(m, n);
    const MatrixXd Cff = cov.bottomRightCorner(n, n);
    const VectorXd SXi = Caa * w;
    const VectorXd LXi = Caf.transpose() * w;
    VectorXd out(m * m + m * n + n * n + m + n + 1);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) out(k++) = Caa(i, j);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out(k++) = Caf(i, j);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out(k++) = Cff(i, j);
    for (Eigen::Index i = 0; i < m; ++i) out(k++) = SXi(i);
    for (Eigen::Index i = 0; i < n; ++i) out(k++) = LXi(i);
    out(k) = w.dot(SXi);
    return out;
}

RegressionFit ols(const MatrixXd& Z, const VectorXd& y, const std::string& response) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(Z);
    if (qr.rank() < Z.cols()) {
        throw Error(ErrorCode::RankDeficient, "regressors for '" + response + "' have rank " +
                                                  std::to_string(qr.rank()) + " < " + std::to_string(Z.cols()));
    }
    RegressionFit fit;
    fit.response = response;
    fit.coef = qr.solve(y);
    const VectorXd resid = y - Z * fit.coef;
    const double dof = static_cast<double>(Z.rows() - Z.cols());
    fit.residual_var = resid.squaredNorm() / dof;
    const MatrixXd ZtZ_inv = (Z.transpose() * Z).inverse();
    fit.std_error = (fit.residual_var * ZtZ_inv.diagonal()).cwiseSqrt();
    const double tss = (y.array() - y.mean()).square().sum();
    fit.r_squared = tss > 0.0 ? 1.0 - resid.squaredNorm() / tss : 1.0;
    return fit;
}

void require_rows(const ReturnPanel& panel) {
    const auto need = 10 * (panel.factors() + 1);
    if (panel.observations() - 1 < need) {
        throw Error(ErrorCode::InsufficientData, "estimation needs at least " + std::to_string(need) +
                                                     " return observations, got " +
                                                     std::to_string(panel.observations() - 1));
    }
}

}  // namespace

void validate_panel(const ReturnPanel& panel) {
    const auto T = panel.observations();
    if (panel.factor_levels.rows() != T || static_cast<Eigen::Index>(panel.dates.size()) != T) {
        throw Error(ErrorCode::DimensionMismatch, "panel row counts differ");
    }
    if (panel.assets() < 1 || panel.factors() < 1) throw Error(ErrorCode::SchemaError, "panel needs assets and factors");
    if (!panel.asset_logret.allFinite() || !panel.factor_levels.allFinite()) {
        throw Error(ErrorCode::ParseError, "panel contains non-finite values");
    }
    if (!(panel.dt > 0.0)) throw Error(ErrorCode::ConfigError, "panel dt must be positive");
    for (std::size_t i = 1; i < panel.dates.size(); ++i) {
        if (!(panel.dates[i - 1] < panel.dates[i])) {
            throw Error(ErrorCode::NonMonotoneDates,
                        "date " + panel.dates[i] + " does not follow " + panel.dates[i - 1]);
        }
    }
    check_weights(panel.bench_weights, panel.assets());
}

ReturnPanel parse_panel(std::istream& in, const PanelSchema& schema, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!trim(line).empty()) {
            header = split_csv(line);
            break;
        }
    }
    if (header.empty()) throw Error(ErrorCode::ParseError, source + ": empty file");

    std::ptrdiff_t date_col = -1;
    std::vector<std::size_t> asset_cols, factor_cols;
    ReturnPanel panel;
    for (std::size_t j = 0; j < header.size(); ++j) {
        const auto& h = header[j];
        if (h == schema.date_column) {
            if (date_col >= 0) throw Error(ErrorCode::SchemaError, source + ": duplicate date column");
            date_col = static_cast<std::ptrdiff_t>(j);
        } else if (h.rfind(schema.asset_prefix, 0) == 0) {
            asset_cols.push_back(j);
            panel.asset_names.push_back(h.substr(schema.asset_prefix.size()));
        } else if (h.rfind(schema.factor_prefix, 0) == 0) {
            factor_cols.push_back(j);
            panel.factor_names.push_back(h.substr(schema.factor_prefix.size()));
        }
    }
    if (date_col < 0) throw Error(ErrorCode::SchemaError, source + ": no '" + schema.date_column + "' column");
    if (asset_cols.empty()) throw Error(ErrorCode::SchemaError, source + ": no '" + schema.asset_prefix + "' columns");
    if (factor_cols.empty()) throw Error(ErrorCode::SchemaError, source + ": no '" + schema.factor_prefix + "' columns");

    std::vector<std::vector<double>> assets, factors;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw Error(ErrorCode::ParseError, line_ref(source, lineno) + ": expected " +
                                                   std::to_string(header.size()) + " cells, found " +
                                                   std::to_string(cells.size()));
        }
        const auto& date = cells[static_cast<std::size_t>(date_col)];
        if (!is_iso_date(date)) throw Error(ErrorCode::ParseError, line_ref(source, lineno) + ": bad date '" + date + "'");
        if (!panel.dates.empty() && !(panel.dates.back() < date)) {
            throw Error(ErrorCode::NonMonotoneDates,
                        line_ref(source, lineno) + ": date " + date + " does not follow " + panel.dates.back());
        }
        auto read = [&](std::size_t col) {
            const auto& cell = cells[col];
            if (cell.empty()) {
                throw Error(ErrorCode::ParseError,
                            line_ref(source, lineno) + ": missing value in column '" + header[col] + "'");
            }
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end != cell.c_str() + cell.size() || !std::isfinite(v)) {
                throw Error(ErrorCode::ParseError,
                            line_ref(source, lineno) + ": bad number '" + cell + "' in column '" + header[col] + "'");
            }
            return v;
        };
        std::vector<double> ra, rf;
        for (auto c : asset_cols) ra.push_back(read(c));
        for (auto c : factor_cols) rf.push_back(read(c));
        panel.dates.push_back(date);
        assets.push_back(std::move(ra));
        factors.push_back(std::move(rf));
    }
    if (panel.dates.empty()) throw Error(ErrorCode::ParseError, source + ": no data rows");

    const auto T = static_cast<Eigen::Index>(panel.dates.size());
    const auto m = static_cast<Eigen::Index>(asset_cols.size());
    const auto n = static_cast<Eigen::Index>(factor_cols.size());
    panel.asset_logret.resize(T, m);
    panel.factor_levels.resize(T, n);
    for (Eigen::Index i = 0; i < T; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) panel.asset_logret(i, j) = assets[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        for (Eigen::Index j = 0; j < n; ++j) panel.factor_levels(i, j) = factors[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    panel.dt = schema.dt;
    panel.bench_weights = schema.bench_weights.size() == 0 ? VectorXd::Constant(m, 1.0 / static_cast<double>(m))
                                                          : schema.bench_weights;
    validate_panel(panel);
    return panel;
}

ReturnPanel load_panel(const std::string& path, const PanelSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open panel file '" + path + "'");
    return parse_panel(in, schema, path);
}

void save_panel_csv(const ReturnPanel& panel, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
    os << "date";
    for (const auto& a : panel.asset_names) os << ",asset:" << a;
    for (const auto& f : panel.factor_names) os << ",factor:" << f;
    os << '\n';
    char buf[64];
    for (Eigen::Index i = 0; i < panel.observations(); ++i) {
        os << panel.dates[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < panel.assets(); ++j) {
            std::snprintf(buf, sizeof(buf), ",%.17g", panel.asset_logret(i, j));
            os << buf;
        }
        for (Eigen::Index j = 0; j < panel.factors(); ++j) {
            std::snprintf(buf, sizeof(buf), ",%.17g", panel.factor_levels(i, j));
            os << buf;
        }
        os << '\n';
    }
    if (!os) throw Error(ErrorCode::IoError, "write to '" + path + "' failed");
}

DriftEstimate estimate_drift(const ReturnPanel& panel) {
    const auto cov = realized_cov(increments(panel), panel.dt);
    return estimate_drift(panel, cov.topLeftCorner(panel.assets(), panel.assets()));
}

DriftEstimate estimate_drift(const ReturnPanel& panel, const MatrixXd& SS) {
    require_rows(panel);
    const Eigen::Index N = panel.observations() - 1;
    const Eigen::Index m = panel.assets();
    const Eigen::Index n = panel.factors();
    if (SS.rows() != m || SS.cols() != m) throw Error(ErrorCode::DimensionMismatch, "SS has the wrong shape");

    MatrixXd Z(N, n + 1);
    Z.col(0).setOnes();
    Z.rightCols(n) = panel.factor_levels.topRows(N);

    DriftEstimate est;
    est.b.resize(n);
    est.B.resize(n, n);
    est.a.resize(m);
    est.A.resize(m, n);
    const MatrixXd dX = panel.factor_levels.bottomRows(N) - panel.factor_levels.topRows(N);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto name = i < static_cast<Eigen::Index>(panel.factor_names.size()) ? panel.factor_names[static_cast<std::size_t>(i)]
                                                                                   : "factor" + std::to_string(i + 1);
        auto fit = ols(Z, dX.col(i) / panel.dt, "factor:" + name);
        est.b(i) = fit.coef(0);
        est.B.row(i) = fit.coef.tail(n).transpose();
        est.fits.push_back(std::move(fit));
    }
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto name = i < static_cast<Eigen::Index>(panel.asset_names.size()) ? panel.asset_names[static_cast<std::size_t>(i)]
                                                                                  : "asset" + std::to_string(i + 1);
        const VectorXd y = panel.asset_logret.col(i).tail(N) / panel.dt + VectorXd::Constant(N, 0.5 * SS(i, i));
        auto fit = ols(Z, y, "asset:" + name);
        est.a(i) = fit.coef(0);
        est.A.row(i) = fit.coef.tail(n).transpose();
        est.fits.push_back(std::move(fit));
    }
    return est;
}

LoadingEstimate estimate_loadings(const ReturnPanel& panel) {
    require_rows(panel);
    const Eigen::Index m = panel.assets();
    const Eigen::Index n = panel.factors();
    const Eigen::Index k = m + n;
    const VectorXd& w = panel.bench_weights;
    check_weights(w, m);

    const MatrixXd cov = realized_cov(increments(panel), panel.dt);
    LoadingEstimate est;
    est.joint_cov = MatrixXd::Zero(k + 1, k + 1);
    est.joint_cov.topLeftCorner(k, k) = cov;
    const VectorXd cross = cov.leftCols(m) * w;  // cov of each series with the benchmark return
    est.joint_cov.block(k, 0, 1, k) = cross.transpose();
    est.joint_cov.block(0, k, k, 1) = cross;
    est.joint_cov(k, k) = w.dot(cov.topLeftCorner(m, m) * w);

    // The benchmark return is spanned by the assets, so the full matrix is
    // singular; factor the asset-factor block and express the last row in it.
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 1e-12 * hi)) {
        throw Error(ErrorCode::SingularCovariance, "realized covariance of assets and factor increments is singular");
    }
    est.condition = hi / lo;
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularCovariance, "Cholesky factorization failed");

    est.factor = MatrixXd::Zero(k + 1, k + 1);
    est.factor.topLeftCorner(k, k) = llt.matrixL();
    est.Sigma = est.factor.topRows(m);
    est.Lambda = est.factor.middleRows(m, n);
    est.Xi = est.Sigma.transpose() * w;
    est.factor.row(k) = est.Xi.transpose();
    return est;
}

BenchmarkCoefficients build_benchmark(const VectorXd& weights, const VectorXd& a, const MatrixXd& A,
                                      const MatrixXd& Sigma) {
    check_weights(weights, a.size());
    if (A.rows() != a.size() || Sigma.rows() != a.size()) {
        throw Error(ErrorCode::DimensionMismatch, "benchmark inputs disagree on the asset count");
    }
    BenchmarkCoefficients out;
    out.c = weights.dot(a);
    out.C = A.transpose() * weights;
    out.Xi = Sigma.transpose() * weights;
    return out;
}

VectorXd gram_vector(const MatrixXd& Sigma, const MatrixXd& Lambda, const VectorXd& Xi) {
    const Eigen::Index m = Sigma.rows();
    const Eigen::Index n = Lambda.rows();
    const MatrixXd SS = Sigma * Sigma.transpose();
    const MatrixXd SL = Sigma * Lambda.transpose();
    const MatrixXd LL = Lambda * Lambda.transpose();
    const VectorXd SXi = Sigma * Xi;
    const VectorXd LXi = Lambda * Xi;
    VectorXd out(m * m + m * n + n * n + m + n + 1);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) out(k++) = SS(i, j);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out(k++) = SL(i, j);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out(k++) = LL(i, j);
    for (Eigen::Index i = 0; i < m; ++i) out(k++) = SXi(i);
    for (Eigen::Index i = 0; i < n; ++i) out(k++) = LXi(i);
    out(k) = Xi.squaredNorm();
    return out;
}

std::vector<std::string> gram_labels(std::size_t m, std::size_t n) {
    std::vector<std::string> out;
    auto idx = [](const char* name, std::size_t i, std::size_t j) {
        return std::string(name) + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
    };
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) out.push_back(idx("SS", i, j));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.push_back(idx("SL", i, j));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out.push_back(idx("LL", i, j));
    for (std::size_t i = 0; i < m; ++i) out.push_back("SXi[" + std::to_string(i) + "]");
    for (std::size_t i = 0; i < n; ++i) out.push_back("LXi[" + std::to_string(i) + "]");
    out.emplace_back("XiXi");
    return out;
}

BootstrapResult bootstrap_gram(const ReturnPanel& panel, const BootstrapOptions& opts) {
    require_rows(panel);
    if (opts.resamples < 2) throw Error(ErrorCode::ConfigError, "bootstrap needs at least two resamples");
    if (opts.block_length < 1) throw Error(ErrorCode::ConfigError, "bootstrap block length must be positive");
    check_weights(panel.bench_weights, panel.assets());
    const MatrixXd Y = increments(panel);
    const Eigen::Index N = Y.rows();
    const Eigen::Index m = panel.assets();
    const Eigen::Index n = panel.factors();
    const double restart = 1.0 / static_cast<double>(opts.block_length);

    std::vector<VectorXd> draws(opts.resamples);
    auto one = [&](std::size_t r) {
        const CounterRng rng(opts.seed, r);
        std::uint64_t counter = 0;
        auto pick = [&]() {
            return static_cast<Eigen::Index>(std::min<double>(rng.uniform(counter++) * static_cast<double>(N),
                                                              static_cast<double>(N - 1)));
        };
        MatrixXd Yr(N, Y.cols());
        Eigen::Index idx = pick();
        for (Eigen::Index i = 0; i < N; ++i) {
            if (i > 0) idx = rng.uniform(counter++) < restart ? pick() : (idx + 1) % N;
            Yr.row(i) = Y.row(idx);
        }
        draws[r] = gram_from_cov(realized_cov(Yr, panel.dt), panel.bench_weights, m, n);
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(opts.threads, opts.resamples));
    std::vector<std::exception_ptr> errors(workers);
    auto chunk = [&](std::size_t w) {
        try {
            for (std::size_t r = opts.resamples * w / workers; r < opts.resamples * (w + 1) / workers; ++r) one(r);
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    if (workers == 1) {
        chunk(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(chunk, w);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    const auto len = draws.front().size();
    VectorXd mean = VectorXd::Zero(len);
    for (const auto& v : draws) mean += v;
    mean /= static_cast<double>(draws.size());
    VectorXd var = VectorXd::Zero(len);
    for (const auto& v : draws) var += (v - mean).cwiseAbs2();
    var /= static_cast<double>(draws.size() - 1);

    BootstrapResult out;
    out.resamples = opts.resamples;
    out.block_length = opts.block_length;
    out.gram_std_error = var.cwiseSqrt();
    return out;
}

EstimationReport estimate_model(const ReturnPanel& panel, const EstimationOptions& opts) {
    validate_panel(panel);
    EstimationReport rep;
    rep.observations = static_cast<std::size_t>(panel.observations());
    rep.loadings = estimate_loadings(panel);
    const MatrixXd SS = rep.loadings.Sigma * rep.loadings.Sigma.transpose();
    rep.drift = estimate_drift(panel, SS);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(SS, Eigen::EigenvaluesOnly);
    rep.ss_condition = eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();

    const auto m = static_cast<std::size_t>(panel.assets());
    const auto n = static_cast<std::size_t>(panel.factors());
    const std::size_t d = m + n + 1;
    auto coeffs = Coefficients::zeros(n, m, d);
    coeffs.a = rep.drift.a;
    coeffs.A = rep.drift.A;
    coeffs.b = rep.drift.b;
    coeffs.B = rep.drift.B;
    coeffs.Sigma = rep.loadings.Sigma;
    coeffs.Lambda = rep.loadings.Lambda;
    const auto bench = build_benchmark(panel.bench_weights, coeffs.a, coeffs.A, coeffs.Sigma);
    coeffs.c = bench.c;
    coeffs.C = bench.C;
    coeffs.Xi = bench.Xi;

    rep.model.n = n;
    rep.model.m = m;
    rep.model.d = d;
    rep.model.coeffs = CoefficientSet::constant(std::move(coeffs));
    rep.model.horizon = opts.horizon;
    rep.model.theta = opts.theta;
    rep.model.x0 = opts.x0 ? *opts.x0 : VectorXd(panel.factor_levels.bottomRows(1).transpose());

    if (opts.bootstrap) rep.bootstrap = bootstrap_gram(panel, opts.boot);
    return rep;
}

nlohmann::json estimation_report_to_json(const EstimationReport& report) {
    nlohmann::json j;
    j["model"] = model_to_json(report.model);
    j["observations"] = report.observations;
    j["ss_condition"] = report.ss_condition;
    j["joint_condition"] = report.loadings.condition;
    j["joint_covariance"] = to_json_matrix(report.loadings.joint_cov);
    j["joint_factor"] = to_json_matrix(report.loadings.factor);
    auto fits = nlohmann::json::array();
    for (const auto& f : report.drift.fits) {
        fits.push_back({{"response", f.response},
                        {"coef", to_json_vector(f.coef)},
                        {"std_error", to_json_vector(f.std_error)},
                        {"r_squared", f.r_squared},
                        {"residual_var", f.residual_var}});
    }
    j["regressions"] = fits;
    const auto& c = report.model.coeffs.segments.front();
    const auto g = gram_vector(c.Sigma, c.Lambda, c.Xi);
    const auto labels = gram_labels(report.model.m, report.model.n);
    auto gram = nlohmann::json::array();
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        nlohmann::json e{{"block", labels[static_cast<std::size_t>(i)]}, {"value", g(i)}};
        if (report.bootstrap) e["std_error"] = report.bootstrap->gram_std_error(i);
        gram.push_back(e);
    }
    j["gram"] = gram;
    if (report.bootstrap) {
        j["bootstrap"] = {{"resamples", report.bootstrap->resamples}, {"block_length", report.bootstrap->block_length}};
    }
    return j;
}

}  // namespace rsbench
