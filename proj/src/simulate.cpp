#include "rsbench/simulate.hpp"

#include "rsbench/error.hpp"
#include "rsbench/policy.hpp"
#include "rsbench/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

namespace rsbench {

std::string_view to_string(Measure m) {
    switch (m) {
        case Measure::Physical: return "physical";
        case Measure::TiltedGamma: return "tilted_gamma";
        case Measure::TiltedH: return "tilted_h";
    }
    return "physical";
}

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::Optimal: return "optimal";
        case Strategy::OptimalKN: return "optimal_kn";
        case Strategy::Kelly: return "kelly";
        case Strategy::Benchmark: return "benchmark";
        case Strategy::Custom: return "custom";
    }
    return "optimal";
}

Measure parse_measure(std::string_view name) {
    for (auto m : {Measure::Physical, Measure::TiltedGamma, Measure::TiltedH}) {
        if (to_string(m) == name) return m;
    }
    throw Error(ErrorCode::ConfigError, "unknown measure '" + std::string(name) + "'");
}

Strategy parse_strategy(std::string_view name) {
    for (auto s : {Strategy::Optimal, Strategy::OptimalKN, Strategy::Kelly, Strategy::Benchmark, Strategy::Custom}) {
        if (to_string(s) == name) return s;
    }
    throw Error(ErrorCode::ConfigError, "unknown strategy '" + std::string(name) + "'");
}

namespace {

constexpr double kTimeSlack = 1e-9;

/// Everything that is constant across paths within one time step.
struct StepPlan {
    const Coefficients* coeffs = nullptr;
    const GramBlocks* gram = nullptr;
    VectorXd h0;
    MatrixXd H1;
    bool has_value = false;
    VectorXd p0;   // Lambda' Du = p0 + P1 x
    MatrixXd P1;
    VectorXd nu0;  // -theta Lambda' DU = nu0 + Nu1 x
    MatrixXd Nu1;
};

void check_config(const ValidatedModel& model, const ValueCoefficients* vc, const SimConfig& cfg) {
    if (cfg.n_paths == 0) throw Error(ErrorCode::ConfigError, "n_paths must be positive");
    if (cfg.steps == 0) throw Error(ErrorCode::ConfigError, "steps must be positive");
    if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) throw Error(ErrorCode::ConfigError, "dt must be positive");
    if (cfg.antithetic && cfg.n_paths % 2 != 0) {
        throw Error(ErrorCode::ConfigError, "antithetic sampling needs an even path count");
    }
    const double span = static_cast<double>(cfg.steps) * cfg.dt;
    if (span > model.horizon() * (1.0 + kTimeSlack) + kTimeSlack) {
        std::ostringstream msg;
        msg << "steps * dt = " << span << " exceeds the horizon " << model.horizon();
        throw Error(ErrorCode::ConfigError, msg.str());
    }
    const bool needs_vc = cfg.strategy == Strategy::Optimal || cfg.strategy == Strategy::OptimalKN;
    if (needs_vc && vc == nullptr) {
        throw Error(ErrorCode::ConfigError, "strategy '" + std::string(to_string(cfg.strategy)) +
                                                "' needs solved value-function coefficients");
    }
    if (cfg.strategy == Strategy::Custom && !cfg.custom_h) {
        throw Error(ErrorCode::ConfigError, "custom strategy without a feedback map");
    }
    if (vc != nullptr) {
        if (std::abs(vc->theta - model.theta()) > 1e-14 * (1.0 + std::abs(model.theta()))) {
            throw Error(ErrorCode::ConfigError, "value coefficients were solved for a different theta");
        }
        if (span > vc->horizon() * (1.0 + kTimeSlack) + kTimeSlack) {
            throw Error(ErrorCode::ConfigError, "value coefficients do not cover the simulated span");
        }
        if (vc->q.front().size() != static_cast<Eigen::Index>(model.n())) {
            throw Error(ErrorCode::DimensionMismatch, "value coefficients have the wrong state dimension");
        }
    }
}

std::vector<StepPlan> build_plan(const ValidatedModel& model, const ValueCoefficients* vc, const SimConfig& cfg) {
    const auto n = static_cast<Eigen::Index>(model.n());
    const auto m = static_cast<Eigen::Index>(model.m());
    const double theta = model.theta();
    std::vector<StepPlan> plan(cfg.steps);
    for (std::size_t j = 0; j < cfg.steps; ++j) {
        const double t = std::min(static_cast<double>(j) * cfg.dt, model.horizon());
        StepPlan& sp = plan[j];
        sp.coeffs = &model.coefficients(t);
        sp.gram = &model.gram(t);
        const auto& c = *sp.coeffs;
        const auto& g = *sp.gram;

        switch (cfg.strategy) {
            case Strategy::Optimal:
            case Strategy::OptimalKN: {
                const auto ap = affine_policy(model, *vc, t,
                                              cfg.strategy == Strategy::Optimal ? Route::Duality : Route::ChangeOfMeasure);
                sp.h0 = ap.h0;
                sp.H1 = ap.H1;
                break;
            }
            case Strategy::Kelly:
                sp.h0 = g.solve(c.a);
                sp.H1 = g.SS_chol.solve(c.A);
                break;
            case Strategy::Benchmark:
                sp.h0 = g.solve(g.SXi);
                sp.H1 = MatrixXd::Zero(m, n);
                break;
            case Strategy::Custom:
                break;
        }

        if (vc != nullptr) {
            const auto st = interpolate(*vc, t);
            sp.has_value = true;
            sp.p0 = c.Lambda.transpose() * (-theta * st.q);
            sp.P1 = c.Lambda.transpose() * (-theta * st.Q);
            const VectorXd Lq = c.Lambda.transpose() * st.q;
            const MatrixXd LQ = c.Lambda.transpose() * st.Q;
            sp.nu0 = -theta * Lq;
            sp.Nu1 = -theta * LQ;
        }
    }
    return plan;
}

struct Workspace {
    VectorXd x, h, e, gamma, p, nu, dW, dWH, ax, z, Sh, drift;
    std::vector<double> raw;

    Workspace(Eigen::Index n, Eigen::Index m, Eigen::Index d)
        : x(n), h(m), e(d), gamma(d), p(d), nu(d), dW(d), dWH(d), ax(m), z(d), Sh(m), drift(n),
          raw(static_cast<std::size_t>(d)) {}
};

void simulate_one(const ValidatedModel& model, const std::vector<StepPlan>& plan, const SimConfig& cfg,
                  std::size_t path, PathBundle& out, Workspace& ws) {
    const auto d = static_cast<Eigen::Index>(model.d());
    const std::size_t n = model.n();
    const std::size_t m = model.m();
    const double theta = model.theta();
    const double dt = cfg.dt;
    const double sqdt = std::sqrt(dt);

    // Antithetic partners share one stream and flip the sign of every draw.
    const std::uint64_t stream = cfg.antithetic ? path / 2 : path;
    const double sign = (cfg.antithetic && path % 2 == 1) ? -1.0 : 1.0;
    const CounterRng rng(cfg.seed, stream);

    ws.x = model.x0();
    double R = 0.0, lg = 0.0, lh = 0.0, lhg = 0.0, lnu = 0.0, half = 0.0;
    const std::size_t stride = cfg.steps + 1;

    auto record_state = [&](std::size_t step) {
        if (!cfg.record_paths) return;
        for (std::size_t i = 0; i < n; ++i) out.X[(path * stride + step) * n + i] = ws.x(static_cast<Eigen::Index>(i));
        out.R[path * stride + step] = R;
    };
    record_state(0);

    for (std::size_t j = 0; j < cfg.steps; ++j) {
        const double t = static_cast<double>(j) * dt;
        const StepPlan& sp = plan[j];
        const auto& c = *sp.coeffs;
        const auto& g = *sp.gram;

        if (cfg.strategy == Strategy::Custom) {
            ws.h = cfg.custom_h(t, ws.x);
            if (ws.h.size() != static_cast<Eigen::Index>(m)) {
                throw Error(ErrorCode::DimensionMismatch, "custom allocation has the wrong dimension");
            }
        } else {
            ws.h = sp.h0;
            ws.h.noalias() += sp.H1 * ws.x;
        }
        if (sp.has_value) {
            ws.p = sp.p0;
            ws.p.noalias() += sp.P1 * ws.x;
            ws.nu = sp.nu0;
            ws.nu.noalias() += sp.Nu1 * ws.x;
        } else {
            ws.p.setZero();
            ws.nu.setZero();
        }
        ws.e.noalias() = c.Sigma.transpose() * ws.h;
        ws.e -= c.Xi;
        if (cfg.custom_gamma) {
            ws.gamma = cfg.custom_gamma(t, ws.x);
            if (ws.gamma.size() != d) throw Error(ErrorCode::DimensionMismatch, "custom tilt has the wrong dimension");
        } else {
            ws.gamma = ws.p - theta * ws.e;
        }

        rng.normals(j, ws.raw.size(), ws.raw);
        for (Eigen::Index i = 0; i < d; ++i) ws.z(i) = sign * ws.raw[static_cast<std::size_t>(i)] * sqdt;
        ws.dW = ws.z;
        if (cfg.measure == Measure::TiltedGamma) {
            ws.dW += ws.gamma * dt;
        } else if (cfg.measure == Measure::TiltedH) {
            ws.dW -= (theta * dt) * ws.e;
        }
        ws.dWH = ws.dW + (theta * dt) * ws.e;

        ws.ax = c.a;
        ws.ax.noalias() += c.A * ws.x;
        ws.Sh.noalias() = g.SS * ws.h;
        const double hSh = ws.h.dot(ws.Sh);
        const double bench_drift = c.c + c.C.dot(ws.x) - 0.5 * g.XiXi;
        const double ell = ws.h.dot(ws.ax) - 0.5 * hSh - bench_drift;
        const double e_dW = ws.e.dot(ws.dW);

        if (cfg.record_returns) {
            const double port = (ws.h.dot(ws.ax) - 0.5 * hSh) * dt + ws.h.dot(c.Sigma * ws.dW);
            const double bench = bench_drift * dt + c.Xi.dot(ws.dW);
            out.portfolio_logret[path * cfg.steps + j] = port;
            out.benchmark_logret[path * cfg.steps + j] = bench;
        }
        if (cfg.record_paths) {
            for (std::size_t i = 0; i < m; ++i) {
                out.applied_h[(path * cfg.steps + j) * m + i] = ws.h(static_cast<Eigen::Index>(i));
            }
            for (Eigen::Index i = 0; i < d; ++i) {
                out.applied_gamma[(path * cfg.steps + j) * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)] =
                    ws.gamma(i);
            }
        }

        const double g2 = ws.gamma.squaredNorm();
        R += ell * dt + e_dW;
        lg += ws.gamma.dot(ws.dW) - 0.5 * g2 * dt;
        lh += -theta * e_dW - 0.5 * theta * theta * ws.e.squaredNorm() * dt;
        lhg += ws.p.dot(ws.dWH) - 0.5 * ws.p.squaredNorm() * dt;
        lnu += ws.nu.dot(ws.dWH) - 0.5 * ws.nu.squaredNorm() * dt;
        half += 0.5 * g2 * dt;

        ws.drift = c.b;
        ws.drift.noalias() += c.B * ws.x;
        ws.x += ws.drift * dt;
        ws.x.noalias() += c.Lambda * ws.dW;

        if (!ws.x.allFinite() || !std::isfinite(R) || !std::isfinite(lg) || !std::isfinite(lh)) {
            std::ostringstream msg;
            msg << "non-finite state on path " << path << " at step " << j + 1;
            throw Error(ErrorCode::NonfiniteState, msg.str());
        }
        record_state(j + 1);
    }

    out.R_T[path] = R;
    out.logchi_gamma[path] = lg;
    out.logchi_h[path] = lh;
    out.logchi_h_to_gamma[path] = lhg;
    out.logchi_nu[path] = lnu;
    out.half_int_gamma2[path] = half;
}

}  // namespace

PathBundle simulate_paths(const ValidatedModel& model, const ValueCoefficients* vc, const SimConfig& cfg) {
    check_config(model, vc, cfg);
    const auto plan = build_plan(model, vc, cfg);

    PathBundle out;
    out.n_paths = cfg.n_paths;
    out.steps = cfg.steps;
    out.n = model.n();
    out.m = model.m();
    out.d = model.d();
    out.dt = cfg.dt;
    out.theta = model.theta();
    out.seed = cfg.seed;
    out.measure = cfg.measure;
    out.strategy = cfg.strategy;
    out.antithetic = cfg.antithetic;
    for (auto* v : {&out.R_T, &out.logchi_gamma, &out.logchi_h, &out.logchi_h_to_gamma, &out.logchi_nu,
                    &out.half_int_gamma2}) {
        v->assign(cfg.n_paths, 0.0);
    }
    if (cfg.record_paths) {
        out.X.assign(cfg.n_paths * (cfg.steps + 1) * out.n, 0.0);
        out.R.assign(cfg.n_paths * (cfg.steps + 1), 0.0);
        out.applied_h.assign(cfg.n_paths * cfg.steps * out.m, 0.0);
        out.applied_gamma.assign(cfg.n_paths * cfg.steps * out.d, 0.0);
    }
    if (cfg.record_returns) {
        out.portfolio_logret.assign(cfg.n_paths * cfg.steps, 0.0);
        out.benchmark_logret.assign(cfg.n_paths * cfg.steps, 0.0);
    }

    // Work is split in whole antithetic pairs so partners land in one chunk.
    const std::size_t unit = cfg.antithetic ? 2 : 1;
    const std::size_t units = cfg.n_paths / unit;
    const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.threads, units));
    std::vector<std::exception_ptr> errors(workers);

    auto run_chunk = [&](std::size_t w) {
        try {
            Workspace ws(static_cast<Eigen::Index>(out.n), static_cast<Eigen::Index>(out.m),
                         static_cast<Eigen::Index>(out.d));
            const std::size_t begin = units * w / workers * unit;
            const std::size_t end = units * (w + 1) / workers * unit;
            for (std::size_t p = begin; p < end; ++p) simulate_one(model, plan, cfg, p, out, ws);
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };

    if (workers == 1) {
        run_chunk(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run_chunk, w);
        for (auto& th : pool) th.join();
    }
    // Report the failure of the earliest chunk so errors do not depend on scheduling.
    for (auto& err : errors) {
        if (err) std::rethrow_exception(err);
    }
    return out;
}

MeanEstimate sample_mean(const std::vector<double>& values, bool antithetic) {
    MeanEstimate est;
    if (values.empty()) return est;
    std::vector<double> units;
    if (antithetic) {
        units.reserve(values.size() / 2);
        for (std::size_t i = 0; i + 1 < values.size(); i += 2) units.push_back(0.5 * (values[i] + values[i + 1]));
    } else {
        units = values;
    }
    const auto count = static_cast<double>(units.size());
    double mean = 0.0;
    for (double v : units) mean += v;
    mean /= count;
    double ss = 0.0;
    for (double v : units) ss += (v - mean) * (v - mean);
    est.mean = mean;
    est.std_error = units.size() > 1 ? std::sqrt(ss / (count - 1.0) / count) : 0.0;
    return est;
}

CriterionEstimate mc_criterion(const PathBundle& bundle, double theta) {
    if (bundle.measure != Measure::Physical) {
        throw Error(ErrorCode::MeasureMismatch, "the risk-sensitive criterion is an expectation under the physical measure");
    }
    if (theta < 0.0) throw Error(ErrorCode::NegativeTheta, "theta must be non-negative");
    CriterionEstimate out;
    if (theta == 0.0) {
        const auto r = sample_mean(bundle.R_T, bundle.antithetic);
        out.estimate = 1.0;
        out.J = r.mean;
        out.log_std_error = 0.0;
        return out;
    }
    // expm1/log1p keep precision when theta R_T is small.
    std::vector<double> y(bundle.R_T.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::expm1(-theta * bundle.R_T[i]);
    const auto est = sample_mean(y, bundle.antithetic);
    out.estimate = 1.0 + est.mean;
    out.std_error = est.std_error;
    out.log_estimate = std::log1p(est.mean);
    out.log_std_error = est.std_error / out.estimate;
    out.J = -out.log_estimate / theta;
    return out;
}

double KlEstimate::combined_std_error() const {
    return std::hypot(from_logchi.std_error, from_gamma_norm.std_error);
}

KlEstimate kl_estimate(const PathBundle& bundle) {
    if (bundle.measure != Measure::TiltedGamma) {
        throw Error(ErrorCode::MeasureMismatch, "relative entropy needs paths simulated under the tilted measure");
    }
    KlEstimate out;
    out.from_logchi = sample_mean(bundle.logchi_gamma, bundle.antithetic);
    out.from_gamma_norm = sample_mean(bundle.half_int_gamma2, bundle.antithetic);
    return out;
}

MeanEstimate martingale_check(const PathBundle& bundle, Density which) {
    const auto& logs = which == Density::Gamma ? bundle.logchi_gamma : bundle.logchi_h;
    std::vector<double> vals(logs.size());
    std::transform(logs.begin(), logs.end(), vals.begin(), [](double v) { return std::exp(v); });
    return sample_mean(vals, bundle.antithetic);
}

namespace {

/// Weekday ISO dates starting at 2000-01-03 (a Monday).
std::vector<std::string> business_dates(std::size_t count) {
    static constexpr std::array<int, 12> kDays{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    std::vector<std::string> out;
    out.reserve(count);
    int year = 2000, month = 1, day = 3, weekday = 0;  // 0 = Monday
    auto leap = [](int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; };
    char buf[32];
    while (out.size() < count) {
        if (weekday < 5) {
            std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
            out.emplace_back(buf);
        }
        weekday = (weekday + 1) % 7;
        const int len = kDays[static_cast<std::size_t>(month - 1)] + (month == 2 && leap(year) ? 1 : 0);
        if (++day > len) {
            day = 1;
            if (++month > 12) {
                month = 1;
                ++year;
            }
        }
    }
    return out;
}

}  // namespace

ReturnPanel simulate_market_panel(const ValidatedModel& model, std::size_t observations, double dt,
                                  std::uint64_t seed, const VectorXd& bench_weights) {
    if (observations < 2) throw Error(ErrorCode::InsufficientData, "a panel needs at least two observations");
    if (!(dt > 0.0)) throw Error(ErrorCode::ConfigError, "dt must be positive");
    const auto n = static_cast<Eigen::Index>(model.n());
    const auto m = static_cast<Eigen::Index>(model.m());
    const auto d = static_cast<Eigen::Index>(model.d());
    if (bench_weights.size() != m) throw Error(ErrorCode::DimensionMismatch, "benchmark weights need one entry per asset");
    if (std::abs(bench_weights.sum() - 1.0) > 1e-10) throw Error(ErrorCode::WeightSumError, "benchmark weights must sum to 1");

    ReturnPanel panel;
    panel.dt = dt;
    panel.bench_weights = bench_weights;
    panel.dates = business_dates(observations);
    for (Eigen::Index i = 0; i < m; ++i) panel.asset_names.push_back("asset" + std::to_string(i + 1));
    for (Eigen::Index i = 0; i < n; ++i) panel.factor_names.push_back("factor" + std::to_string(i + 1));
    const auto T = static_cast<Eigen::Index>(observations);
    panel.asset_logret = MatrixXd::Zero(T, m);
    panel.factor_levels = MatrixXd::Zero(T, n);

    const CounterRng rng(seed, 0);
    std::vector<double> raw(static_cast<std::size_t>(d));
    VectorXd x = model.x0();
    VectorXd dW(d);
    const double sqdt = std::sqrt(dt);
    panel.factor_levels.row(0) = x.transpose();
    for (Eigen::Index i = 1; i < T; ++i) {
        // Coefficients beyond the model horizon are held at their last value.
        const double t = std::min(static_cast<double>(i - 1) * dt, model.horizon());
        const auto& c = model.coefficients(t);
        const auto& g = model.gram(t);
        rng.normals(static_cast<std::uint64_t>(i), raw.size(), raw);
        for (Eigen::Index k = 0; k < d; ++k) dW(k) = raw[static_cast<std::size_t>(k)] * sqdt;
        const VectorXd drift = c.a + c.A * x - 0.5 * g.SS.diagonal();
        panel.asset_logret.row(i) = (drift * dt + c.Sigma * dW).transpose();
        x += (c.b + c.B * x) * dt + c.Lambda * dW;
        panel.factor_levels.row(i) = x.transpose();
    }
    return panel;
}

namespace {

std::ofstream open_output(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream os(path, mode | std::ios::trunc);
    if (!os) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
    return os;
}

void put_u64(std::ostream& os, std::uint64_t v) {
    std::array<char, 8> b{};
    for (std::size_t i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
    os.write(b.data(), 8);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(os, bits);
}

}  // namespace

void write_terminal_csv(const PathBundle& bundle, const std::string& path) {
    auto os = open_output(path);
    os << "path,R_T,logchi_gamma,logchi_h,logchi_h_to_gamma,logchi_nu,half_int_gamma2\n";
    char buf[512];
    for (std::size_t i = 0; i < bundle.n_paths; ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, bundle.R_T[i],
                      bundle.logchi_gamma[i], bundle.logchi_h[i], bundle.logchi_h_to_gamma[i], bundle.logchi_nu[i],
                      bundle.half_int_gamma2[i]);
        os << buf;
    }
    if (!os) throw Error(ErrorCode::IoError, "write to '" + path + "' failed");
}

void write_returns_csv(const PathBundle& bundle, const std::string& path) {
    if (bundle.portfolio_logret.empty()) {
        throw Error(ErrorCode::ConfigError, "per-step returns were not recorded");
    }
    auto os = open_output(path);
    os << "path,step,portfolio_logret,benchmark_logret\n";
    char buf[256];
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        for (std::size_t j = 0; j < bundle.steps; ++j) {
            std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%.17g\n", p, j + 1,
                          bundle.portfolio_logret[p * bundle.steps + j], bundle.benchmark_logret[p * bundle.steps + j]);
            os << buf;
        }
    }
    if (!os) throw Error(ErrorCode::IoError, "write to '" + path + "' failed");
}

// Layout: magic "RSBPATH1", u64 version, n_paths, steps, n, m, d, f64 dt, then
// X, R, applied_h, applied_gamma as little-endian doubles in path-major order.
void write_path_dump(const PathBundle& bundle, const std::string& path) {
    if (bundle.X.empty()) throw Error(ErrorCode::ConfigError, "paths were not recorded");
    auto os = open_output(path, std::ios::out | std::ios::binary);
    os.write("RSBPATH1", 8);
    put_u64(os, 1);
    put_u64(os, bundle.n_paths);
    put_u64(os, bundle.steps);
    put_u64(os, bundle.n);
    put_u64(os, bundle.m);
    put_u64(os, bundle.d);
    put_f64(os, bundle.dt);
    for (const auto* arr : {&bundle.X, &bundle.R, &bundle.applied_h, &bundle.applied_gamma}) {
        for (double v : *arr) put_f64(os, v);
    }
    if (!os) throw Error(ErrorCode::IoError, "write to '" + path + "' failed");
}

}  // namespace rsbench
