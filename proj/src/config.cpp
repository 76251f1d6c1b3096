#include "mesoflow/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "mesoflow/errors.hpp"

namespace mesoflow {

const std::vector<std::string>& ExperimentConfig::known_models() {
    static const std::vector<std::string> models = {
        "discrete",          "reduced",         "full",
        "monokinetic",       "scalar",          "fisher-rao",
        "stationary-plap",   "stationary-gamma1", "stationary-scalar",
        "stationary-fr",     "semidiscrete"};
    return models;
}

ExperimentConfig parse_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");

    ExperimentConfig cfg;
    std::vector<std::string> errors;

    static const std::set<std::string> known_keys = {
        "model", "params", "mesh", "schedule", "seed", "out",
        "graph", "source", "ensemble", "rho", "directions", "fr_spec"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!known_keys.count(key)) cfg.warnings.push_back("unknown key: " + key);
    }

    cfg.model = j.value("model", "");
    const auto& models = ExperimentConfig::known_models();
    if (std::find(models.begin(), models.end(), cfg.model) == models.end())
        errors.push_back("unknown model '" + cfg.model + "'");

    const nlohmann::json params = j.value("params", nlohmann::json::object());
    cfg.params.gamma = params.value("gamma", 2.0);
    cfg.params.nu = params.value("nu", 1.0);
    cfg.params.r = params.value("r", 1.0);
    cfg.params.dim = params.value("dim", 2);
    if (!(cfg.params.gamma > 0.0)) errors.push_back("gamma must be positive");
    if (!(cfg.params.nu >= 0.0)) errors.push_back("nu must be non-negative");
    if (!(cfg.params.r >= 0.0)) errors.push_back("r must be non-negative");
    if (cfg.params.dim < 1 || cfg.params.dim > 2)
        errors.push_back("dim must be 1 or 2 for grid models");

    const nlohmann::json mesh = j.value("mesh", nlohmann::json::object());
    cfg.mesh.dim = mesh.value("dim", cfg.params.dim);
    if (mesh.contains("extent")) {
        const auto e = mesh.at("extent").get<std::vector<double>>();
        for (std::size_t k = 0; k < std::min<std::size_t>(2, e.size()); ++k)
            cfg.mesh.extent[k] = e[k];
    }
    if (mesh.contains("origin")) {
        const auto o = mesh.at("origin").get<std::vector<double>>();
        for (std::size_t k = 0; k < std::min<std::size_t>(2, o.size()); ++k)
            cfg.mesh.origin[k] = o[k];
    }
    if (mesh.contains("cells")) {
        const auto c = mesh.at("cells").get<std::vector<int>>();
        for (std::size_t k = 0; k < std::min<std::size_t>(2, c.size()); ++k)
            cfg.mesh.cells[k] = c[k];
    }
    for (int a = 0; a < cfg.mesh.dim; ++a) {
        if (cfg.mesh.cells[a] < 2) errors.push_back("mesh needs at least 2 cells per axis");
        if (!(cfg.mesh.extent[a] > 0.0)) errors.push_back("mesh extent must be positive");
    }

    const nlohmann::json schedule = j.value("schedule", nlohmann::json::object());
    cfg.schedule.dt = schedule.value("dt", 1e-3);
    cfg.schedule.steps = schedule.value("steps", 10000);
    cfg.schedule.output_cadence = schedule.value("output_cadence", 0);
    cfg.schedule.dissipation_tol = schedule.value("dissipation_tol", 1e-9);
    if (!(cfg.schedule.dt > 0.0)) errors.push_back("schedule.dt must be positive");
    if (cfg.schedule.steps < 0) errors.push_back("schedule.steps must be >= 0");
    if (cfg.schedule.output_cadence < 0)
        errors.push_back("schedule.output_cadence must be >= 0");

    cfg.seed = j.value("seed", static_cast<std::uint64_t>(0));
    cfg.out_dir = j.value("out", "out");

    cfg.graph = j.value("graph", nlohmann::json());
    cfg.source = j.value("source", nlohmann::json());
    cfg.ensemble = j.value("ensemble", nlohmann::json());
    cfg.rho = j.value("rho", nlohmann::json());
    cfg.directions = j.value("directions", nlohmann::json());
    cfg.fr_spec = j.value("fr_spec", nlohmann::json());

    // model-specific required payloads
    if (cfg.model == "discrete" || cfg.model == "semidiscrete") {
        if (cfg.graph.is_null()) errors.push_back(cfg.model + " requires a 'graph' section");
    } else if (cfg.model == "stationary-fr") {
        if (cfg.fr_spec.is_null()) errors.push_back("stationary-fr requires 'fr_spec'");
    } else if (cfg.model == "stationary-scalar") {
        if (cfg.directions.is_null())
            errors.push_back("stationary-scalar requires 'directions'");
    }

    if (!errors.empty()) {
        std::ostringstream os;
        os << "config validation failed:";
        for (const auto& e : errors) os << "\n  - " << e;
        throw ConfigError(os.str());
    }

    // resolved echo with defaults filled in
    nlohmann::json resolved = j;
    resolved["model"] = cfg.model;
    resolved["params"] = {{"gamma", cfg.params.gamma},
                          {"nu", cfg.params.nu},
                          {"r", cfg.params.r},
                          {"dim", cfg.params.dim}};
    resolved["mesh"] = {{"dim", cfg.mesh.dim},
                        {"origin", {cfg.mesh.origin[0], cfg.mesh.origin[1]}},
                        {"extent", {cfg.mesh.extent[0], cfg.mesh.extent[1]}},
                        {"cells", {cfg.mesh.cells[0], cfg.mesh.cells[1]}}};
    resolved["schedule"] = {{"dt", cfg.schedule.dt},
                            {"steps", cfg.schedule.steps},
                            {"output_cadence", cfg.schedule.output_cadence},
                            {"dissipation_tol", cfg.schedule.dissipation_tol}};
    resolved["seed"] = cfg.seed;
    resolved["out"] = cfg.out_dir;
    if (!cfg.warnings.empty()) resolved["warnings"] = cfg.warnings;
    cfg.resolved = std::move(resolved);
    return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

} // namespace mesoflow
