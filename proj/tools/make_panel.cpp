// Writes a synthetic daily return panel simulated from a model file.
#include "rsbench/error.hpp"
#include "rsbench/estimate.hpp"
#include "rsbench/model.hpp"
#include "rsbench/simulate.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Synthetic return panel generator"};
    std::string model_path, out_path;
    std::size_t observations = 1260;
    std::uint64_t seed = 1;
    std::vector<double> weights;
    double dt = 1.0 / 252.0;
    app.add_option("--model", model_path, "Model file")->required();
    app.add_option("--out", out_path, "Output CSV")->required();
    app.add_option("--observations", observations, "Number of rows");
    app.add_option("--seed", seed, "Seed");
    app.add_option("--weights", weights, "Benchmark weights")->required();
    app.add_option("--dt", dt, "Years per observation");
    CLI11_PARSE(app, argc, argv);
    try {
        const auto model = rsbench::validate_model(rsbench::load_model_file(model_path));
        const Eigen::VectorXd w = Eigen::Map<Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
        const auto panel = rsbench::simulate_market_panel(model, observations, dt, seed, w);
        rsbench::save_panel_csv(panel, out_path);
    } catch (const rsbench::Error& e) {
        std::cerr << "ERROR " << rsbench::code_name(e.code()) << ": " << e.what() << "\n";
        return 1;
    }
    return 0;
}
