#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mesoflow/config.hpp"
#include "mesoflow/errors.hpp"
#include "mesoflow/parallel.hpp"
#include "mesoflow/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"mesoflow - transportation network model runner"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    int threads = 0;

    for (const auto& model : mesoflow::ExperimentConfig::known_models()) {
        CLI::App* sub = app.add_subcommand(model, "run the '" + model + "' model");
        sub->add_option("--config", config_path, "experiment config file (JSON)")->required();
        sub->add_option("--threads", threads, "worker threads (default: all cores)");
        sub->add_option("--out", out_dir, "output directory (overrides config)");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string model = app.get_subcommands().front()->get_name();

    try {
        mesoflow::ExperimentConfig cfg = mesoflow::parse_config(config_path);
        if (cfg.model != model) {
            std::cerr << "error: config model '" << cfg.model << "' does not match subcommand '"
                      << model << "'\n";
            return 2;
        }
        if (threads > 0) mesoflow::set_thread_count(threads);
        if (!out_dir.empty()) {
            cfg.out_dir = out_dir;
            cfg.resolved["out"] = out_dir;
        }
        for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";
        const mesoflow::RunResult result = mesoflow::run_experiment(cfg);
        std::cout << result.summary_json << "\n";
        return 0;
    } catch (const mesoflow::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const mesoflow::Error& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
