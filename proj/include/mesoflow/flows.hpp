#pragma once

#include <vector>

#include "mesoflow/ensemble.hpp"

namespace mesoflow {

struct EnergyLogEntry {
    int step = 0;
    double t = 0.0;
    double energy = 0.0;
    double kinetic = 0.0;
    double metabolic = 0.0;
    double background = 0.0;
    double max_residual = 0.0;
    double dissipation_estimate = 0.0;
};

struct FlowSchedule {
    double dt = 1e-3;
    int steps = 10000;
    int output_cadence = 0;       // snapshot every N accepted steps (0 = off)
    double dissipation_tol = 1e-9; // accepted-step slack: E_new <= E + tol*max(1,|E|)
};

/// Monokinetic state: cell density rho >= 0 with unit mass and a cell
/// tensor field Chat.
struct MonokineticState {
    StructuredMesh mesh;
    std::vector<double> rho;
    std::vector<SymTensor> chat;

    void validate() const;
    double mass() const;
    void renormalize_mass();
};

/// CFL rejection for the monokinetic density transport.
class CflError : public StepRejected {
public:
    CflError(const std::string& msg, double suggested) : StepRejected(msg, suggested) {}
};

/// One explicit Euler step of the reduced Wasserstein characteristics:
/// C_i <- proj_PSD(C_i + dt (grad p(x_i) x grad p(x_i) - nu|C|^{g-2}C)).
/// Positions and weights are unchanged. density_diag, when given, is
/// multiplied by the along-characteristics factor exp(dt nu (gamma-1)|C|^{gamma-2}).
ParticleEnsemble step_reduced(const ParticleEnsemble& mu, const PressureField& p,
                              const ModelParams& params, double dt,
                              std::vector<double>* density_diag = nullptr);

/// Full Wasserstein characteristics: additionally moves atoms with the
/// drift 2 D^2p C grad p (clamped to the domain closure) and integrates
/// the along-characteristics density equation.
ParticleEnsemble step_full(const ParticleEnsemble& mu, const PressureField& p,
                           const ModelParams& params, double dt,
                           std::vector<double>* density_diag = nullptr);

/// Monokinetic model step: L2 flow of Chat plus conservative upwind
/// transport of rho by the potential grad(grad p . C grad p - (nu/gamma)|C|^gamma).
/// Throws CflError when |v| dt / h > 1.
MonokineticState step_monokinetic(const MonokineticState& state, const PressureField& p,
                                  const ModelParams& params, double dt);

/// Scalar model step: C_i <- max(0, C_i + dt(|theta.grad p|^2 - nu C^{gamma-1})).
ScalarEnsemble step_scalar(const ScalarEnsemble& eta, const PressureField& p,
                           const ModelParams& params, double dt);

/// Max over atoms of |grad p x grad p - nu |C|^{gamma-2} C|_F (the reduced
/// flow stationarity residual).
double reduced_equilibrium_residual(const ParticleEnsemble& mu, const PressureField& p,
                                    const ModelParams& params);

template <typename State>
struct FlowRunResult {
    State final_state;
    PressureField final_pressure;
    std::vector<EnergyLogEntry> log;
    std::vector<std::pair<int, State>> snapshots;
    std::vector<double> density_diag; // particle flows only
    int accepted_steps = 0;
};

/// Orchestrated runs: explicit Euler with energy backtracking (reject and
/// halve dt whenever the energy increases beyond the tolerance; error
/// below dt = 1e-12).
FlowRunResult<ParticleEnsemble> run_reduced_flow(const ParticleEnsemble& mu0,
                                                 const ModelParams& params,
                                                 const SourceField& s,
                                                 const FlowSchedule& schedule);
FlowRunResult<ParticleEnsemble> run_full_flow(const ParticleEnsemble& mu0,
                                              const ModelParams& params, const SourceField& s,
                                              const FlowSchedule& schedule);
FlowRunResult<MonokineticState> run_monokinetic_flow(const MonokineticState& state0,
                                                     const ModelParams& params,
                                                     const SourceField& s,
                                                     const FlowSchedule& schedule);
FlowRunResult<ScalarEnsemble> run_scalar_flow(const ScalarEnsemble& eta0,
                                              const ModelParams& params, const SourceField& s,
                                              const FlowSchedule& schedule);

/// Energy of a monokinetic state (Poisson solve included).
EnergyBreakdown energy_total_monokinetic(const MonokineticState& state,
                                         const ModelParams& params, const SourceField& s,
                                         PressureField* pressure_out = nullptr,
                                         const CgOptions& opts = {});

void write_energy_log_csv(const std::string& path, const std::vector<EnergyLogEntry>& log);

} // namespace mesoflow
