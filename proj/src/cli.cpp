#include "rsbench/cli.hpp"

#include "rsbench/analytics.hpp"
#include "rsbench/estimate.hpp"
#include "rsbench/game.hpp"
#include "rsbench/model.hpp"
#include "rsbench/policy.hpp"
#include "rsbench/rng.hpp"
#include "rsbench/simulate.hpp"
#include "rsbench/valuefn.hpp"

#include "CLI11.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

namespace rsbench::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::VerificationFailure:
        case ErrorCode::EquivalenceFailure:
        case ErrorCode::EigenvalueViolation:
        case ErrorCode::BlowUp:
        case ErrorCode::SaddleViolation:
        case ErrorCode::RepresentationMismatch:
            return 2;
        default:
            return 1;
    }
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read '" + path + "'");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error(ErrorCode::IoError, "SHA-256 initialisation failed");
    }
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md.data(), &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return hex.str();
}

namespace {

// Sub-seed roles.
constexpr std::uint64_t kRoleSimulate = 1;
constexpr std::uint64_t kRoleBootstrap = 2;
constexpr std::uint64_t kRoleSaddle = 3;
constexpr std::uint64_t kRoleVerifySim = 4;
constexpr std::uint64_t kRoleExperiment = 5;
constexpr std::uint64_t kRoleLattice = 6;

struct EstimationInputs {
    fs::path panel;
    VectorXd weights;
    double dt = 1.0 / 252.0;
    std::optional<VectorXd> x0;
    BootstrapOptions boot;
};

struct SimSection {
    std::size_t paths = 5000;
    std::size_t steps = 1260;
    double dt = 1.0 / 252.0;
    Measure measure = Measure::Physical;
    Strategy strategy = Strategy::Optimal;
    bool antithetic = false;
};

struct VerifySection {
    std::size_t times = 5;
    std::size_t states = 5;
    std::size_t probes = 200;
    std::size_t paths = 10000;
    std::size_t steps = 0;  // 0: one year of daily steps, capped at the horizon
    double state_radius = 1.0;
    std::string inject_fault = "none";
};

struct RunConfig {
    fs::path source;
    std::optional<fs::path> model_path;
    std::optional<json> model_inline;
    std::optional<EstimationInputs> estimation;
    std::optional<double> theta;
    std::optional<double> horizon;
    double steps_per_year = 252.0;
    SimSection sim;
    PerfOptions metrics;
    VerifySection verify;
    std::uint64_t seed = 0;
    std::string out = "out";
    std::size_t threads = 1;
};

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("config key '") + key + "': " + e.what());
    }
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) throw Error(ErrorCode::ConfigError, "unknown key '" + it.key() + "' in " + where);
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ParseError, "config '" + path + "': " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
    reject_unknown(j, {"model", "estimation", "theta", "horizon_years", "solver", "simulation", "metrics", "verify",
                       "seed", "out", "threads", "description"},
                   "config");

    RunConfig cfg;
    cfg.source = fs::path(path);
    const fs::path base = cfg.source.parent_path();
    if (j.contains("model")) {
        if (j["model"].is_string()) {
            cfg.model_path = resolve(base, j["model"].get<std::string>());
        } else if (j["model"].is_object()) {
            cfg.model_inline = j["model"];
        } else {
            throw Error(ErrorCode::ConfigError, "'model' must be a path or an object");
        }
    }
    if (j.contains("estimation")) {
        const auto& e = j["estimation"];
        reject_unknown(e, {"panel", "bench_weights", "dt", "x0", "bootstrap"}, "estimation");
        EstimationInputs est;
        if (!e.contains("panel")) throw Error(ErrorCode::ConfigError, "estimation block needs 'panel'");
        est.panel = resolve(base, e["panel"].get<std::string>());
        if (e.contains("bench_weights")) est.weights = vector_from_json(e["bench_weights"], "bench_weights");
        est.dt = get_or(e, "dt", est.dt);
        if (e.contains("x0")) est.x0 = vector_from_json(e["x0"], "x0");
        if (e.contains("bootstrap")) {
            const auto& b = e["bootstrap"];
            reject_unknown(b, {"resamples", "block_length"}, "estimation.bootstrap");
            est.boot.resamples = get_or<std::size_t>(b, "resamples", est.boot.resamples);
            est.boot.block_length = get_or<std::size_t>(b, "block_length", est.boot.block_length);
        }
        cfg.estimation = est;
    }
    const int sources = (cfg.model_path || cfg.model_inline ? 1 : 0) + (cfg.estimation ? 1 : 0);
    if (sources != 1) {
        throw Error(ErrorCode::ConfigError, "config must supply exactly one of 'model' and 'estimation'");
    }
    if (cfg.model_path && !fs::exists(*cfg.model_path)) {
        throw Error(ErrorCode::IoError, "model file '" + cfg.model_path->string() + "' does not exist");
    }
    if (cfg.estimation && !fs::exists(cfg.estimation->panel)) {
        throw Error(ErrorCode::IoError, "panel file '" + cfg.estimation->panel.string() + "' does not exist");
    }
    if (j.contains("theta")) cfg.theta = get_or(j, "theta", 0.0);
    if (j.contains("horizon_years")) cfg.horizon = get_or(j, "horizon_years", 0.0);
    if (j.contains("solver")) {
        reject_unknown(j["solver"], {"steps_per_year"}, "solver");
        cfg.steps_per_year = get_or(j["solver"], "steps_per_year", cfg.steps_per_year);
    }
    if (j.contains("simulation")) {
        const auto& s = j["simulation"];
        reject_unknown(s, {"paths", "steps", "dt", "measure", "strategy", "antithetic"}, "simulation");
        cfg.sim.paths = get_or<std::size_t>(s, "paths", cfg.sim.paths);
        cfg.sim.steps = get_or<std::size_t>(s, "steps", cfg.sim.steps);
        cfg.sim.dt = get_or(s, "dt", cfg.sim.dt);
        if (s.contains("measure")) cfg.sim.measure = parse_measure(s["measure"].get<std::string>());
        if (s.contains("strategy")) cfg.sim.strategy = parse_strategy(s["strategy"].get<std::string>());
        cfg.sim.antithetic = get_or(s, "antithetic", cfg.sim.antithetic);
    }
    if (j.contains("metrics")) {
        const auto& mtr = j["metrics"];
        reject_unknown(mtr, {"level", "sortino", "min_samples"}, "metrics");
        cfg.metrics.level = get_or(mtr, "level", cfg.metrics.level);
        if (mtr.contains("sortino")) cfg.metrics.sortino = parse_sortino_convention(mtr["sortino"].get<std::string>());
        cfg.metrics.min_samples = get_or<std::size_t>(mtr, "min_samples", cfg.metrics.min_samples);
    }
    if (j.contains("verify")) {
        const auto& v = j["verify"];
        reject_unknown(v, {"times", "states", "probes", "paths", "steps", "state_radius", "inject_fault"}, "verify");
        cfg.verify.times = get_or<std::size_t>(v, "times", cfg.verify.times);
        cfg.verify.states = get_or<std::size_t>(v, "states", cfg.verify.states);
        cfg.verify.probes = get_or<std::size_t>(v, "probes", cfg.verify.probes);
        cfg.verify.paths = get_or<std::size_t>(v, "paths", cfg.verify.paths);
        cfg.verify.steps = get_or<std::size_t>(v, "steps", cfg.verify.steps);
        cfg.verify.state_radius = get_or(v, "state_radius", cfg.verify.state_radius);
        cfg.verify.inject_fault = get_or<std::string>(v, "inject_fault", cfg.verify.inject_fault);
    }
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
    if (j.contains("out")) cfg.out = resolve(base, j["out"].get<std::string>()).string();
    cfg.threads = get_or<std::size_t>(j, "threads", cfg.threads);
    return cfg;
}

/// Files written by a command; hashed into the manifest at the end.
class OutputDir {
public:
    explicit OutputDir(fs::path root) : root_(std::move(root)) {
        std::error_code ec;
        fs::create_directories(root_, ec);
        if (ec) throw Error(ErrorCode::IoError, "cannot create output directory '" + root_.string() + "'");
    }

    std::string path(const std::string& name) {
        files_.insert(name);
        return (root_ / name).string();
    }

    void write_text(const std::string& name, const std::string& content) {
        std::ofstream os(path(name), std::ios::binary | std::ios::trunc);
        if (!os) throw Error(ErrorCode::IoError, "cannot write '" + (root_ / name).string() + "'");
        os << content;
    }

    void write_json(const std::string& name, const json& j) { write_text(name, j.dump(2) + "\n"); }

    void write_manifest(const std::string& command, std::uint64_t seed, const std::string& config_hash) {
        json files = json::array();
        for (const auto& name : files_) {
            const auto full = (root_ / name).string();
            files.push_back({{"file", name}, {"bytes", fs::file_size(full)}, {"sha256", sha256_file(full)}});
        }
        json m{{"command", command}, {"seed", seed}, {"config_sha256", config_hash}, {"files", files}};
        std::ofstream os(root_ / "manifest.json", std::ios::trunc);
        if (!os) throw Error(ErrorCode::IoError, "cannot write manifest");
        os << m.dump(2) << "\n";
    }

    const fs::path& root() const { return root_; }

private:
    fs::path root_;
    std::set<std::string> files_;
};

struct Context {
    RunConfig cfg;
    std::ostream& out;
    std::ostream& err;
};

struct BuiltModel {
    ModelSpec spec;
    std::optional<EstimationReport> report;
};

BuiltModel build_model(const RunConfig& cfg, bool with_bootstrap) {
    BuiltModel bm;
    if (cfg.model_path) {
        bm.spec = load_model_file(cfg.model_path->string());
    } else if (cfg.model_inline) {
        bm.spec = model_from_json(*cfg.model_inline);
    } else {
        const auto& e = *cfg.estimation;
        PanelSchema schema;
        schema.bench_weights = e.weights;
        schema.dt = e.dt;
        const auto panel = load_panel(e.panel.string(), schema);
        EstimationOptions opts;
        opts.theta = cfg.theta.value_or(1.0);
        opts.horizon = cfg.horizon.value_or(1.0);
        opts.x0 = e.x0;
        opts.bootstrap = with_bootstrap;
        opts.boot = e.boot;
        opts.boot.seed = derive_seed(cfg.seed, kRoleBootstrap);
        opts.boot.threads = cfg.threads;
        bm.report = estimate_model(panel, opts);
        bm.spec = bm.report->model;
    }
    if (cfg.theta) bm.spec.theta = *cfg.theta;
    if (cfg.horizon) bm.spec.horizon = *cfg.horizon;
    return bm;
}

std::string config_hash(const RunConfig& cfg) { return sha256_file(cfg.source.string()); }

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// ---------------------------------------------------------------- validate

int cmd_validate(Context& ctx) {
    OutputDir dir(ctx.cfg.out);
    const auto bm = build_model(ctx.cfg, false);
    const auto model = validate_model(bm.spec);
    json segs = json::array();
    for (std::size_t s = 0; s < bm.spec.coeffs.segments.size(); ++s) {
        const double t = bm.spec.coeffs.knots.empty() ? 0.0 : bm.spec.coeffs.knots[s];
        const auto& g = model.gram(std::min(t, model.horizon()));
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(g.SS, Eigen::EigenvaluesOnly);
        const auto proj = projection_matrices(g, model.theta());
        const MatrixXd I = MatrixXd::Identity(static_cast<Eigen::Index>(model.d()), static_cast<Eigen::Index>(model.d()));
        segs.push_back({{"start", t},
                        {"ss_min_eigenvalue", eig.eigenvalues().minCoeff()},
                        {"ss_condition", eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff()},
                        {"projection_identity_error", (proj.Pminus * proj.Pplus - I).cwiseAbs().maxCoeff()}});
    }
    dir.write_json("model.json", model_to_json(bm.spec));
    dir.write_json("validation.json", {{"n", model.n()},
                                       {"m", model.m()},
                                       {"d", model.d()},
                                       {"theta", model.theta()},
                                       {"horizon_years", model.horizon()},
                                       {"segments", segs}});
    dir.write_manifest("validate", ctx.cfg.seed, config_hash(ctx.cfg));
    ctx.out << "model valid: n=" << model.n() << " m=" << model.m() << " d=" << model.d()
            << " theta=" << fmt(model.theta()) << " horizon=" << fmt(model.horizon()) << "\n";
    return 0;
}

// ---------------------------------------------------------------- estimate

int cmd_estimate(Context& ctx) {
    if (!ctx.cfg.estimation) throw Error(ErrorCode::ConfigError, "estimate needs an 'estimation' block in the config");
    OutputDir dir(ctx.cfg.out);
    const auto bm = build_model(ctx.cfg, true);
    dir.write_json("estimation_report.json", estimation_report_to_json(*bm.report));
    dir.write_json("model.json", model_to_json(bm.spec));
    dir.write_manifest("estimate", ctx.cfg.seed, config_hash(ctx.cfg));
    ctx.out << "estimated model from " << bm.report->observations << " observations; SS condition "
            << fmt(bm.report->ss_condition) << "\n";
    return 0;
}

// ---------------------------------------------------------------- solve

struct SolvedModel {
    ValidatedModel model;
    ValueCoefficients vc;
};

SolvedModel solve_from_config(const RunConfig& cfg) {
    auto bm = build_model(cfg, false);
    auto model = validate_model(bm.spec);
    auto vc = solve_value_coefficients(model, cfg.steps_per_year);
    return {std::move(model), std::move(vc)};
}

double residual_tolerance(const ValueCoefficients& vc) {
    double scale = 1.0;
    scale = std::max({scale, vc.Q.front().cwiseAbs().maxCoeff(), vc.q.front().cwiseAbs().maxCoeff(), std::abs(vc.k.front())});
    return 1e-6 * scale;
}

int cmd_solve(Context& ctx) {
    OutputDir dir(ctx.cfg.out);
    const auto sm = solve_from_config(ctx.cfg);
    const auto res = max_riccati_residual(sm.vc, sm.model);
    const double tol = residual_tolerance(sm.vc);
    const bool psd = sm.vc.meta.min_eigenvalue >= -1e-8;
    const bool ok = res.Q <= tol && res.q <= tol && res.k <= tol && psd;
    const auto ev = value_function(sm.vc, 0.0, sm.model.x0());
    save_value_coefficients(sm.vc, dir.path("value_coefficients.json"));
    dir.write_json("residual_summary.json", {{"residual_Q", res.Q},
                                             {"residual_q", res.q},
                                             {"residual_k", res.k},
                                             {"tolerance", tol},
                                             {"min_eigenvalue", sm.vc.meta.min_eigenvalue},
                                             {"steps", sm.vc.meta.steps},
                                             {"Q0", to_json_matrix(sm.vc.Q.front())},
                                             {"q0", to_json_vector(sm.vc.q.front())},
                                             {"k0", sm.vc.k.front()},
                                             {"u0", ev.u},
                                             {"passed", ok}});
    dir.write_manifest("solve", ctx.cfg.seed, config_hash(ctx.cfg));
    ctx.out << "solved " << sm.vc.meta.steps << " steps; residual Q " << fmt(res.Q) << " q " << fmt(res.q) << " k "
            << fmt(res.k) << " (tolerance " << fmt(tol) << "); u(0,x0) = " << fmt(ev.u) << "\n";
    if (!ok) {
        std::ostringstream msg;
        msg << (psd ? "Riccati residual above tolerance" : "Q(t) left the positive semidefinite cone");
        throw Error(psd ? ErrorCode::VerificationFailure : ErrorCode::EigenvalueViolation, msg.str());
    }
    return 0;
}

// ---------------------------------------------------------------- policy

VectorXd parse_state(const std::string& text, std::size_t n) {
    std::vector<double> vals;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            vals.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw Error(ErrorCode::ConfigError, "bad state component '" + item + "'");
        }
    }
    if (vals.size() != n) throw Error(ErrorCode::DimensionMismatch, "state needs " + std::to_string(n) + " components");
    return Eigen::Map<VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

int cmd_policy(Context& ctx, double t, const std::string& state) {
    OutputDir dir(ctx.cfg.out);
    const auto sm = solve_from_config(ctx.cfg);
    const VectorXd x = state.empty() ? sm.model.x0() : parse_state(state, sm.model.n());
    const auto act = fractional_kelly(sm.model, sm.vc, t, x);
    const auto ap = affine_policy(sm.model, sm.vc, t);
    const auto ev = value_function(sm.vc, t, x);
    dir.write_json("policy.json", {{"t", t},
                                   {"x", to_json_vector(x)},
                                   {"theta", sm.model.theta()},
                                   {"h_star", to_json_vector(act.h_star)},
                                   {"h_star_kn", to_json_vector(optimal_h_kn(sm.model, sm.vc, t, x))},
                                   {"gamma_star", to_json_vector(act.gamma_star)},
                                   {"nu_star", to_json_vector(act.nu_star)},
                                   {"kelly", to_json_vector(act.kelly)},
                                   {"bench_track", to_json_vector(act.bench_track)},
                                   {"hedge", to_json_vector(act.ihp)},
                                   {"fraction", act.f},
                                   {"u", ev.u},
                                   {"affine", {{"h0", to_json_vector(ap.h0)},
                                               {"H1", to_json_matrix(ap.H1)},
                                               {"g0", to_json_vector(ap.g0)},
                                               {"G1", to_json_matrix(ap.G1)}}}});
    dir.write_manifest("policy", ctx.cfg.seed, config_hash(ctx.cfg));
    ctx.out << "h*(" << fmt(t) << ", x) =";
    for (Eigen::Index i = 0; i < act.h_star.size(); ++i) ctx.out << ' ' << fmt(act.h_star(i));
    ctx.out << "\n";
    return 0;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(Context& ctx, bool dump_paths, bool returns) {
    OutputDir dir(ctx.cfg.out);
    const auto sm = solve_from_config(ctx.cfg);
    SimConfig sc;
    sc.n_paths = ctx.cfg.sim.paths;
    sc.steps = ctx.cfg.sim.steps;
    sc.dt = ctx.cfg.sim.dt;
    sc.measure = ctx.cfg.sim.measure;
    sc.strategy = ctx.cfg.sim.strategy;
    sc.antithetic = ctx.cfg.sim.antithetic;
    sc.seed = derive_seed(ctx.cfg.seed, kRoleSimulate);
    sc.threads = ctx.cfg.threads;
    sc.record_paths = dump_paths;
    sc.record_returns = returns;
    if (sc.strategy == Strategy::Custom) throw Error(ErrorCode::ConfigError, "custom strategies are library-only");
    const auto bundle = simulate_paths(sm.model, &sm.vc, sc);

    json summary{{"paths", sc.n_paths},
                 {"steps", sc.steps},
                 {"dt", sc.dt},
                 {"seed", sc.seed},
                 {"measure", to_string(sc.measure)},
                 {"strategy", to_string(sc.strategy)},
                 {"antithetic", sc.antithetic},
                 {"theta", sm.model.theta()}};
    const auto rbar = sample_mean(bundle.R_T, bundle.antithetic);
    summary["mean_R_T"] = {{"mean", rbar.mean}, {"std_error", rbar.std_error}};
    if (sc.measure == Measure::Physical) {
        const auto crit = mc_criterion(bundle, sm.model.theta());
        summary["criterion"] = {{"estimate", crit.estimate},
                                {"std_error", crit.std_error},
                                {"log_estimate", crit.log_estimate},
                                {"log_std_error", crit.log_std_error},
                                {"J", crit.J}};
        const auto mg = martingale_check(bundle, Density::Gamma);
        const auto mh = martingale_check(bundle, Density::H);
        summary["martingale"] = {{"chi_gamma", {{"mean", mg.mean}, {"std_error", mg.std_error}}},
                                 {"chi_h", {{"mean", mh.mean}, {"std_error", mh.std_error}}}};
        ctx.out << "criterion E[exp(-theta R_T)] = " << fmt(crit.estimate) << " +- " << fmt(crit.std_error)
                << ", J = " << fmt(crit.J) << "\n";
    }
    if (sc.measure == Measure::TiltedGamma) {
        const auto kl = kl_estimate(bundle);
        summary["kl"] = {{"from_logchi", {{"mean", kl.from_logchi.mean}, {"std_error", kl.from_logchi.std_error}}},
                         {"from_gamma_norm",
                          {{"mean", kl.from_gamma_norm.mean}, {"std_error", kl.from_gamma_norm.std_error}}}};
        ctx.out << "relative entropy " << fmt(kl.from_logchi.mean) << " (log density) vs "
                << fmt(kl.from_gamma_norm.mean) << " (tilt norm)\n";
    }
    write_terminal_csv(bundle, dir.path("terminal.csv"));
    if (returns) write_returns_csv(bundle, dir.path("returns.csv"));
    if (dump_paths) write_path_dump(bundle, dir.path("paths.bin"));
    dir.write_json("simulation_summary.json", summary);
    dir.write_manifest("simulate", ctx.cfg.seed, config_hash(ctx.cfg));
    ctx.out << "simulated " << sc.n_paths << " paths x " << sc.steps << " steps under " << to_string(sc.measure) << "\n";
    return 0;
}

// ---------------------------------------------------------------- report

struct ReturnColumns {
    std::vector<double> portfolio;
    std::vector<double> benchmark;
};

ReturnColumns read_returns_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open returns file '" + path + "'");
    std::string line;
    std::getline(in, line);
    if (line.rfind("path,step,portfolio_logret,benchmark_logret", 0) != 0) {
        throw Error(ErrorCode::SchemaError, "'" + path + "' is not a returns file written by simulate");
    }
    ReturnColumns cols;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        double p = 0.0, b = 0.0;
        std::size_t path_idx = 0, step = 0;
        if (std::sscanf(line.c_str(), "%zu,%zu,%lf,%lf", &path_idx, &step, &p, &b) != 4) {
            throw Error(ErrorCode::ParseError, path + ":" + std::to_string(lineno) + ": malformed row");
        }
        cols.portfolio.push_back(p);
        cols.benchmark.push_back(b);
    }
    return cols;
}

void write_reports(OutputDir& dir, const std::vector<NamedReport>& reports) {
    dir.write_text("table.txt", format_table(reports));
    dir.write_text("table.csv", format_csv(reports));
}

int cmd_report(Context& ctx, const std::vector<std::string>& inputs) {
    if (inputs.empty()) throw Error(ErrorCode::ConfigError, "report needs at least one --returns name=path");
    OutputDir dir(ctx.cfg.out);
    std::vector<NamedReport> reports;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto eq = inputs[i].find('=');
        const std::string name = eq == std::string::npos ? "portfolio" + std::to_string(i + 1) : inputs[i].substr(0, eq);
        const std::string path = eq == std::string::npos ? inputs[i] : inputs[i].substr(eq + 1);
        const auto cols = read_returns_csv(path);
        if (i == 0) reports.emplace_back("benchmark", performance_report(cols.benchmark, ctx.cfg.metrics));
        reports.emplace_back(name, performance_report(cols.portfolio, ctx.cfg.metrics));
    }
    write_reports(dir, reports);
    dir.write_manifest("report", ctx.cfg.seed, config_hash(ctx.cfg));
    ctx.out << format_table(reports);
    return 0;
}

// ---------------------------------------------------------------- experiment

int cmd_experiment(Context& ctx) {
    OutputDir dir(ctx.cfg.out);
    const auto sm = solve_from_config(ctx.cfg);
    SimConfig base;
    base.n_paths = ctx.cfg.sim.paths;
    base.steps = ctx.cfg.sim.steps;
    base.dt = ctx.cfg.sim.dt;
    base.antithetic = ctx.cfg.sim.antithetic;
    base.measure = Measure::Physical;
    base.seed = derive_seed(ctx.cfg.seed, kRoleExperiment);
    base.threads = ctx.cfg.threads;
    base.record_returns = true;

    const std::vector<std::pair<std::string, Strategy>> runs{{"Benchmark", Strategy::Benchmark},
                                                             {"Kelly", Strategy::Kelly},
                                                             {"Portfolio (KN)", Strategy::OptimalKN},
                                                             {"Portfolio (FEED)", Strategy::Optimal}};
    std::vector<NamedReport> reports;
    json columns = json::object();
    for (const auto& [name, strategy] : runs) {
        SimConfig sc = base;
        sc.strategy = strategy;
        const auto bundle = simulate_paths(sm.model, &sm.vc, sc);
        // The benchmark column reports the benchmark's own returns.
        const auto& series = strategy == Strategy::Benchmark ? bundle.benchmark_logret : bundle.portfolio_logret;
        auto rep = performance_report(series, ctx.cfg.metrics);
        if (rep.degenerate() || bundle.n_paths < 2) {
            ctx.err << "WARNING degenerate statistics for '" << name << "' (" << bundle.n_paths << " path(s), "
                    << rep.sample_count << " returns)\n";
        }
        const auto crit = mc_criterion(bundle, sm.model.theta());
        columns[name] = {{"J", crit.J}, {"criterion", crit.estimate}, {"criterion_std_error", crit.std_error}};
        reports.emplace_back(name, rep);
    }
    const auto verdict = compare_strategies(reports, 1e-12);
    const auto* pair = verdict.find("Portfolio (KN)", "Portfolio (FEED)");
    write_reports(dir, reports);
    json diffs = json::object();
    for (const auto& [metric, diff] : pair->abs_diff) diffs[metric] = diff;
    dir.write_json("experiment.json", {{"paths", base.n_paths},
                                       {"steps", base.steps},
                                       {"dt", base.dt},
                                       {"seed", base.seed},
                                       {"theta", sm.model.theta()},
                                       {"criterion", columns},
                                       {"kn_vs_feed_max_diff", pair->max_diff},
                                       {"kn_vs_feed_diffs", diffs}});
    dir.write_manifest("experiment", ctx.cfg.seed, config_hash(ctx.cfg));
    ctx.out << format_table(reports);
    if (!pair->within) {
        std::ostringstream msg;
        msg << "KN and FEED columns differ by " << pair->max_diff << " (tolerance 1e-12)";
        throw Error(ErrorCode::EquivalenceFailure, msg.str());
    }
    ctx.out << "KN and FEED columns agree (max difference " << fmt(pair->max_diff) << ")\n";
    return 0;
}

// ---------------------------------------------------------------- verify

struct CheckResult {
    std::string name;
    bool passed = true;
    bool skipped = false;
    double value = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

class CheckList {
public:
    void add(std::string name, bool ok, double value, double tol, std::string detail = {}) {
        items_.push_back({std::move(name), ok, false, value, tol, std::move(detail)});
    }
    void skip(std::string name, std::string why) { items_.push_back({std::move(name), true, true, 0.0, 0.0, std::move(why)}); }
    const std::vector<CheckResult>& items() const { return items_; }

private:
    std::vector<CheckResult> items_;
};

void inject_fault(ValueCoefficients& vc, const std::string& fault) {
    if (fault == "none") return;
    if (fault == "q_offset") {
        for (auto& Q : vc.Q) {
            const double bump = 0.1 * (1.0 + Q.cwiseAbs().maxCoeff());
            Q += bump * MatrixXd::Identity(Q.rows(), Q.cols());
        }
        return;
    }
    if (fault == "q_transpose") {
        // Transposes an asymmetric perturbation so the stored Q is no longer the solved one.
        for (auto& Q : vc.Q) {
            MatrixXd P = MatrixXd::Zero(Q.rows(), Q.cols());
            for (Eigen::Index i = 0; i < Q.rows(); ++i)
                for (Eigen::Index j = 0; j < Q.cols(); ++j) P(i, j) = (i <= j ? 0.1 : -0.05) * (1.0 + std::abs(Q(i, j)));
            Q = (Q + P).transpose().eval();
        }
        return;
    }
    throw Error(ErrorCode::ConfigError, "unknown fault '" + fault + "' (expected none, q_offset or q_transpose)");
}

int cmd_verify(Context& ctx, const std::string& fault_flag) {
    OutputDir dir(ctx.cfg.out);
    auto bm = build_model(ctx.cfg, false);
    const auto model = validate_model(bm.spec);
    auto vc = solve_value_coefficients(model, ctx.cfg.steps_per_year);
    const std::string fault = fault_flag.empty() ? ctx.cfg.verify.inject_fault : fault_flag;
    inject_fault(vc, fault);

    const double theta = model.theta();
    const bool kelly_mode = theta == 0.0;
    const auto n = static_cast<Eigen::Index>(model.n());
    const auto d = static_cast<Eigen::Index>(model.d());
    const double T = model.horizon();
    CheckList checks;

    // Projection identity on every coefficient segment.
    {
        double worst = 0.0;
        for (std::size_t s = 0; s < bm.spec.coeffs.segments.size(); ++s) {
            const double t = bm.spec.coeffs.knots.empty() ? 0.0 : std::min(bm.spec.coeffs.knots[s], T);
            const auto proj = projection_matrices(model.gram(t), theta);
            worst = std::max(worst, (proj.Pminus * proj.Pplus - MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff());
        }
        checks.add("projection_identity", worst < 1e-12, worst, 1e-12);
    }
    // Value-function ODE residuals and the PSD property.
    {
        const auto res = max_riccati_residual(vc, model);
        const double tol = residual_tolerance(vc);
        const double worst = std::max({res.Q, res.q, res.k});
        checks.add("riccati_residual", worst <= tol, worst, tol);
        double min_eig = std::numeric_limits<double>::infinity();
        double asym = 0.0;
        for (const auto& Q : vc.Q) {
            asym = std::max(asym, (Q - Q.transpose()).cwiseAbs().maxCoeff());
            const MatrixXd sym = 0.5 * (Q + Q.transpose());
            Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
            min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());
        }
        checks.add("q_symmetric_psd", min_eig >= -1e-8 && asym <= 1e-12, std::min(min_eig, -asym), -1e-8);
    }

    // Pointwise policy and game checks over a time x state lattice.
    const CounterRng lattice(derive_seed(ctx.cfg.seed, kRoleLattice), 0);
    std::vector<double> z(static_cast<std::size_t>(n));
    double route_gap = 0.0, nu_gap = 0.0, saddle_worst = 0.0, minimax_worst = 0.0;
    std::size_t rep_failures = 0, kelly_failures = 0, saddle_failures = 0, points = 0;
    std::string first_rep_error;
    for (std::size_t i = 0; i < ctx.cfg.verify.times; ++i) {
        const double t = T * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(ctx.cfg.verify.times, 1));
        for (std::size_t k = 0; k < ctx.cfg.verify.states; ++k) {
            const std::uint64_t block = i * ctx.cfg.verify.states + k;
            lattice.normals(block, z.size(), z);
            VectorXd x = model.x0();
            for (Eigen::Index c = 0; c < n; ++c) x(c) += ctx.cfg.verify.state_radius * z[static_cast<std::size_t>(c)];
            ++points;
            const VectorXd h = optimal_h(model, vc, t, x);
            route_gap = std::max(route_gap, scaled_difference(h, optimal_h_kn(model, vc, t, x)));
            try {
                (void)fractional_kelly(model, vc, t, x);
            } catch (const Error& e) {
                ++kelly_failures;
                if (first_rep_error.empty()) first_rep_error = e.what();
            }
            if (kelly_mode) continue;
            try {
                const VectorXd g = optimal_gamma(model, vc, t, x);
                const auto& c = model.coefficients(t);
                const VectorXd rhs = optimal_nu(model, vc, t, x) - theta * (c.Sigma.transpose() * h - c.Xi);
                nu_gap = std::max(nu_gap, scaled_difference(g, rhs));
            } catch (const Error& e) {
                ++rep_failures;
                if (first_rep_error.empty()) first_rep_error = e.what();
            }
            SaddleOptions so;
            so.probes = ctx.cfg.verify.probes;
            so.seed = derive_seed(ctx.cfg.seed, kRoleSaddle) + block;
            so.throw_on_violation = false;
            const auto sr = saddle_check(model, vc, t, x, so);
            saddle_worst = std::max({saddle_worst, sr.max_violation_h / (1.0 + std::abs(sr.center_value)),
                                     sr.max_violation_gamma / (1.0 + std::abs(sr.center_value))});
            if (!sr.passed()) ++saddle_failures;
            const auto mm = hamiltonian_minimax_gap(model, vc, t, x);
            minimax_worst = std::max(minimax_worst, mm.gap / (1.0 + std::abs(mm.h_plus)));
        }
    }
    checks.add("policy_route_equivalence", route_gap <= 1e-12, route_gap, 1e-12);
    checks.add("fractional_kelly_identities", kelly_failures == 0, static_cast<double>(kelly_failures), 0.0,
               first_rep_error);
    if (kelly_mode) {
        for (const char* name : {"gamma_representations", "gamma_nu_relation", "saddle_probes", "isaacs_condition"}) {
            checks.skip(name, "Kelly mode (theta = 0): game route not defined");
        }
    } else {
        checks.add("gamma_representations", rep_failures == 0, static_cast<double>(rep_failures), 0.0, first_rep_error);
        checks.add("gamma_nu_relation", nu_gap <= 1e-12, nu_gap, 1e-12);
        checks.add("saddle_probes", saddle_failures == 0, saddle_worst, 1e-9,
                   std::to_string(saddle_failures) + " of " + std::to_string(points) + " points failed");
        checks.add("isaacs_condition", minimax_worst <= 1e-9, minimax_worst, 1e-9);
    }

    // Monte Carlo checks on the density processes.
    SimConfig sc;
    sc.n_paths = ctx.cfg.verify.paths;
    const double sim_dt = ctx.cfg.sim.dt;
    const std::size_t max_steps = static_cast<std::size_t>(std::floor(T / sim_dt + 1e-9));
    sc.steps = ctx.cfg.verify.steps > 0 ? ctx.cfg.verify.steps : std::min<std::size_t>(max_steps, 252);
    sc.dt = sim_dt;
    sc.antithetic = sc.n_paths % 2 == 0;
    sc.strategy = Strategy::Optimal;
    sc.seed = derive_seed(ctx.cfg.seed, kRoleVerifySim);
    sc.threads = ctx.cfg.threads;
    const auto phys = simulate_paths(model, &vc, sc);
    double fact = 0.0, equal = 0.0;
    for (std::size_t p = 0; p < phys.n_paths; ++p) {
        const double scale = std::max(1.0, std::abs(phys.logchi_gamma[p]));
        fact = std::max(fact, std::abs(phys.logchi_gamma[p] - phys.logchi_h[p] - phys.logchi_h_to_gamma[p]) / scale);
        equal = std::max(equal, std::abs(phys.logchi_h_to_gamma[p] - phys.logchi_nu[p]) /
                                    std::max(1.0, std::abs(phys.logchi_nu[p])));
    }
    checks.add("density_factorization", fact <= 1e-10, fact, 1e-10);
    checks.add("measure_equality", equal <= 1e-10, equal, 1e-10);
    for (auto [name, which] : {std::pair{"martingale_chi_gamma", Density::Gamma}, std::pair{"martingale_chi_h", Density::H}}) {
        const auto mc = martingale_check(phys, which);
        const double dev = std::abs(mc.mean - 1.0);
        checks.add(name, dev <= 3.0 * mc.std_error + 1e-14, dev, 3.0 * mc.std_error,
                   "mean " + fmt(mc.mean) + " +- " + fmt(mc.std_error));
    }
    if (!kelly_mode && std::abs(static_cast<double>(sc.steps) * sc.dt - T) <= 1e-9 * (1.0 + T)) {
        const auto crit = mc_criterion(phys, theta);
        const double u0 = value_function(vc, 0.0, model.x0()).u;
        const double dev = std::abs(crit.log_estimate - u0);
        checks.add("value_function_mc", dev <= 3.0 * crit.log_std_error, dev, 3.0 * crit.log_std_error,
                   "ln E = " + fmt(crit.log_estimate) + ", u(0,x0) = " + fmt(u0));
    } else if (kelly_mode) {
        checks.skip("value_function_mc", "Kelly mode (theta = 0)");
    } else {
        checks.skip("value_function_mc", "simulated span shorter than the horizon");
    }
    {
        SimConfig tc = sc;
        tc.measure = Measure::TiltedGamma;
        const auto tilted = simulate_paths(model, &vc, tc);
        const auto kl = kl_estimate(tilted);
        const double dev = std::abs(kl.from_logchi.mean - kl.from_gamma_norm.mean);
        const double tol = 3.0 * kl.combined_std_error() + 1e-14;
        checks.add("kl_dual_estimates", dev <= tol, dev, tol,
                   fmt(kl.from_logchi.mean) + " vs " + fmt(kl.from_gamma_norm.mean));
    }

    json arr = json::array();
    std::vector<std::string> failed;
    for (const auto& c : checks.items()) {
        arr.push_back({{"name", c.name},
                       {"status", c.skipped ? "skipped" : (c.passed ? "pass" : "fail")},
                       {"value", c.value},
                       {"tolerance", c.tolerance},
                       {"detail", c.detail}});
        const char* tag = c.skipped ? "SKIP" : (c.passed ? "PASS" : "FAIL");
        ctx.out << std::left << std::setw(5) << tag << ' ' << std::setw(28) << c.name;
        if (!c.skipped) ctx.out << " value=" << fmt(c.value) << " tol=" << fmt(c.tolerance);
        if (!c.detail.empty()) ctx.out << "  " << c.detail;
        ctx.out << "\n";
        if (!c.passed) failed.push_back(c.name);
    }
    dir.write_json("verify.json", {{"checks", arr},
                                   {"kelly_mode", kelly_mode},
                                   {"fault", fault},
                                   {"lattice_points", points},
                                   {"passed", failed.empty()}});
    dir.write_manifest("verify", ctx.cfg.seed, config_hash(ctx.cfg));
    if (kelly_mode) ctx.out << "Kelly mode: game-route checks skipped\n";
    if (!failed.empty()) {
        std::string names;
        for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
        throw Error(ErrorCode::VerificationFailure, "failing invariants: " + names);
    }
    ctx.out << "all invariants hold\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Benchmarked risk-sensitive portfolio engine"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    app.add_option("--config", config_path, "Run configuration (JSON)")->required();
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--seed", seed, "Master seed");
    app.add_option("--threads", threads, "Worker threads");

    auto* validate = app.add_subcommand("validate", "Validate the model and write its normalized form");
    auto* estimate = app.add_subcommand("estimate", "Estimate a model from a return panel");
    auto* solve = app.add_subcommand("solve", "Solve the value-function ODE system");
    auto* policy = app.add_subcommand("policy", "Evaluate the optimal controls at one (t, x)");
    double policy_t = 0.0;
    std::string policy_x;
    policy->add_option("--t", policy_t, "Time in years");
    policy->add_option("--x", policy_x, "Comma-separated state (defaults to x0)");

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo simulation");
    std::optional<std::size_t> sim_paths, sim_steps;
    std::optional<double> sim_dt;
    std::optional<std::string> sim_measure, sim_strategy;
    bool sim_antithetic = false, dump_paths = false, sim_returns = false;
    simulate->add_option("--paths", sim_paths, "Number of paths");
    simulate->add_option("--steps", sim_steps, "Number of time steps");
    simulate->add_option("--dt", sim_dt, "Step size in years");
    simulate->add_option("--measure", sim_measure, "physical, tilted_gamma or tilted_h");
    simulate->add_option("--strategy", sim_strategy, "optimal, optimal_kn, kelly or benchmark");
    simulate->add_flag("--antithetic", sim_antithetic, "Antithetic pairs");
    simulate->add_flag("--dump-paths", dump_paths, "Write the full-path binary dump");
    simulate->add_flag("--returns", sim_returns, "Write per-step portfolio and benchmark log returns");

    auto* report = app.add_subcommand("report", "Performance table from simulated returns");
    std::vector<std::string> report_inputs;
    report->add_option("--returns", report_inputs, "name=path of a returns.csv from simulate")->required();

    auto* experiment = app.add_subcommand("experiment", "Benchmark, Kelly and both optimal routes on shared seeds");
    auto* verify = app.add_subcommand("verify", "Run the invariant suite");
    std::string fault;
    verify->add_option("--inject-fault", fault, "Testing only: none, q_offset or q_transpose");

    std::vector<std::string> argv_store{"rsbench"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "ERROR ConfigError: " << e.what() << "\n";
        return 1;
    }

    try {
        Context ctx{load_config(config_path), out, err};
        if (out_dir) ctx.cfg.out = *out_dir;
        if (seed) ctx.cfg.seed = *seed;
        if (threads) ctx.cfg.threads = std::max<std::size_t>(1, *threads);
        if (sim_paths) ctx.cfg.sim.paths = *sim_paths;
        if (sim_steps) ctx.cfg.sim.steps = *sim_steps;
        if (sim_dt) ctx.cfg.sim.dt = *sim_dt;
        if (sim_measure) ctx.cfg.sim.measure = parse_measure(*sim_measure);
        if (sim_strategy) ctx.cfg.sim.strategy = parse_strategy(*sim_strategy);
        if (sim_antithetic) ctx.cfg.sim.antithetic = true;

        if (validate->parsed()) return cmd_validate(ctx);
        if (estimate->parsed()) return cmd_estimate(ctx);
        if (solve->parsed()) return cmd_solve(ctx);
        if (policy->parsed()) return cmd_policy(ctx, policy_t, policy_x);
        if (simulate->parsed()) return cmd_simulate(ctx, dump_paths, sim_returns);
        if (report->parsed()) return cmd_report(ctx, report_inputs);
        if (experiment->parsed()) return cmd_experiment(ctx);
        if (verify->parsed()) return cmd_verify(ctx, fault);
        return 1;
    } catch (const Error& e) {
        err << "ERROR " << code_name(e.code()) << ": " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const nlohmann::json::exception& e) {
        err << "ERROR ConfigError: " << e.what() << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "ERROR IoError: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "ERROR Internal: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace rsbench::cli
