#pragma once

#include <string>
#include <vector>

#include "mesoflow/config.hpp"
#include "mesoflow/ensemble.hpp"
#include "mesoflow/stationary.hpp"

namespace mesoflow {

struct RunResult {
    std::string summary_json;            // machine-readable run summary
    std::vector<std::string> artifacts;  // files written (relative to out dir)
};

/// Dispatches a parsed config to the matching solver, writes all outputs
/// under cfg.out_dir and returns the summary. Deterministic: identical
/// (config, seed) produce byte-identical numeric outputs.
RunResult run_experiment(const ExperimentConfig& cfg);

/// Source construction from a config descriptor (two_bump, cosine_x,
/// sign_x, cells, zero). The field is de-meaned so it integrates to zero.
SourceField make_source(const StructuredMesh& mesh, const nlohmann::json& desc);

/// Initial particle ensemble from a descriptor (wishart, monokinetic,
/// custom, file).
ParticleEnsemble make_ensemble(const StructuredMesh& mesh, const nlohmann::json& desc,
                               std::uint64_t seed);

/// Scalar-model ensemble: lattice of directional atoms at cell centers.
ScalarEnsemble make_scalar_ensemble(const StructuredMesh& mesh, const nlohmann::json& desc);

/// Density field (uniform or per-cell values).
DensityField make_density(const StructuredMesh& mesh, const nlohmann::json& desc);

/// Angular density from a direction list and per-direction weight.
AngularDensity make_angular_density(const StructuredMesh& mesh, const nlohmann::json& desc);

/// The standard two-bump test source on the unit square / interval.
SourceField two_bump_source(const StructuredMesh& mesh, double amplitude = 1.0,
                            double sigma = 0.08);

} // namespace mesoflow
