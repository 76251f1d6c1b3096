#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mesoflow/grid.hpp"
#include "mesoflow/poisson.hpp"

namespace mesoflow {

/// One weighted atom (x_i, C_i, w_i) of the empirical measure.
struct Atom {
    std::array<double, 2> x{0.0, 0.0};
    SymTensor c;
    double w = 0.0;
};

/// Empirical measure on Omega x PSD tensors: weights sum to one, tensors
/// PSD (up to -1e-10 on the smallest eigenvalue), positions in the
/// domain closure.
struct ParticleEnsemble {
    StructuredMesh mesh;
    std::vector<Atom> atoms;

    void validate() const;
    void normalize_weights();

    std::string to_jsonl() const;
    static ParticleEnsemble from_jsonl(const StructuredMesh& mesh, const std::string& text);
};

/// Atom of the scalar (direction-resolved) model: unit direction theta
/// with theta_1 >= 0 and scalar conductivity C >= 0.
struct ScalarAtom {
    std::array<double, 2> x{0.0, 0.0};
    std::array<double, 2> theta{1.0, 0.0};
    double c = 0.0;
    double w = 0.0;
};

struct ScalarEnsemble {
    StructuredMesh mesh;
    std::vector<ScalarAtom> atoms;

    void validate() const;
    void normalize_weights();
};

/// Piecewise-constant deposition of the first tensor moment:
/// P_cell = sum_{atoms in cell} w_i C_i / cell_volume, so that the cell
/// sum times the volume reproduces sum_i w_i C_i exactly.
PermeabilityField deposit_permeability(const ParticleEnsemble& mu);

/// Scalar-model deposition with the rank-one tensor C theta x theta.
PermeabilityField deposit_permeability_scalar(const ScalarEnsemble& eta);

struct EnergyBreakdown {
    double total = 0.0;
    double kinetic = 0.0;    // int grad p . P grad p
    double metabolic = 0.0;  // (nu/gamma) |C|^gamma moment
    double background = 0.0; // r int |grad p|^2
    double source_pairing = 0.0; // int S p
};

/// Constrained energy E[mu]: solves the Poisson problem with the
/// deposited permeability and evaluates the three energy terms with the
/// assembly quadrature (so kinetic + background = int S p holds at the
/// solver tolerance).
EnergyBreakdown energy_total(const ParticleEnsemble& mu, const ModelParams& params,
                             const SourceField& s, PressureField* pressure_out = nullptr,
                             const CgOptions& opts = {});

EnergyBreakdown energy_total_scalar(const ScalarEnsemble& eta, const ModelParams& params,
                                    const SourceField& s, PressureField* pressure_out = nullptr,
                                    const CgOptions& opts = {});

/// First variation  -grad p . C grad p + (nu/gamma)|C|^gamma  at (x, C).
double first_variation_at(const ModelParams& params, const PressureField& p,
                          const double* x, const SymTensor& c);

struct ConvexityProbePoint {
    double t = 0.0;
    double energy = 0.0;
};

struct ConvexityProbeResult {
    std::vector<ConvexityProbePoint> trace;
    double min_second_difference = 0.0;
};

/// Energy along the segment (1-t) mu0 + t mu1 for ensembles sharing the
/// same atom sites (positions and tensors); only weights may differ.
ConvexityProbeResult convexity_probe(const ParticleEnsemble& mu0, const ParticleEnsemble& mu1,
                                     const ModelParams& params, const SourceField& s, int n_t);

/// Descriptor for sample_initial.
struct EnsembleSpec {
    enum class Kind { UniformWishart, Monokinetic, Custom } kind = Kind::UniformWishart;
    int count = 100;
    double wishart_scale = 1.0;          // scale of G G^T / d draws
    SymTensor monokinetic_c;             // Kind::Monokinetic
    std::vector<Atom> custom_atoms;      // Kind::Custom
};

/// Deterministic ensemble construction: equal weights, positions uniform
/// in Omega (except Custom), tensors per the descriptor kind.
ParticleEnsemble sample_initial(const StructuredMesh& mesh, const EnsembleSpec& spec,
                                std::uint64_t seed);

} // namespace mesoflow
