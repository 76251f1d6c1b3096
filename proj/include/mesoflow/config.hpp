#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mesoflow/flows.hpp"
#include "mesoflow/grid.hpp"
#include "mesoflow/tensor.hpp"

namespace mesoflow {

/// Parsed and validated experiment description. Model-specific payloads
/// stay as JSON fragments and are interpreted by the runner.
struct ExperimentConfig {
    std::string model;
    ModelParams params;
    StructuredMesh mesh;
    FlowSchedule schedule;
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    nlohmann::json graph;      // discrete / semidiscrete input
    nlohmann::json source;     // source descriptor
    nlohmann::json ensemble;   // initial ensemble descriptor
    nlohmann::json rho;        // density descriptor for stationary solvers
    nlohmann::json directions; // angular density (stationary-scalar)
    nlohmann::json fr_spec;    // stationary measure spec (fisher-rao)

    std::vector<std::string> warnings; // unknown keys, notes
    nlohmann::json resolved;           // full config echo with defaults filled

    static const std::vector<std::string>& known_models();
};

/// Parses and validates a config file. Validation failures are collected
/// and reported together in a single ConfigError; unknown keys only
/// produce warnings.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

} // namespace mesoflow
