#pragma once

#include <string>
#include <vector>

#include "mesoflow/ensemble.hpp"
#include "mesoflow/flows.hpp"

namespace mesoflow {

/// Non-negative roots C of  (nu/gamma) C^gamma - w C - K = 0  for w >= 0.
/// Returns 0, 1 or 2 values sorted ascending; multiplicity and existence
/// thresholds follow the branch case analysis (existence cutoffs
/// w_min_K for gamma > 1, K < 0 and w_max_K for gamma < 1, K > 0).
std::vector<double> branch_solve(double w, double k, const ModelParams& params);

/// Existence threshold for the two-branch regimes; NaN in regimes where
/// branches exist for all w.
double branch_threshold_w(double k, const ModelParams& params);

/// Range of the first variation over the phase space, given
/// alpha = min |grad p| and beta = max |grad p|. Half-open ends are
/// encoded with infinities.
struct RangeInterval {
    double lo = 0.0;
    double hi = 0.0;
    bool lo_closed = false;
    bool hi_closed = false;

    bool contains(double k) const;
};
RangeInterval fr_range(double alpha, double beta, const ModelParams& params);

/// Spherical Hellinger-Kakutani distance 2 arccos(sum sqrt(a_i b_i)) of
/// two normalized weight vectors on shared atoms.
double fr_distance(const std::vector<double>& a, const std::vector<double>& b);

/// Specification of a stationary measure: unit-norm PSD directions A_j at
/// sites x_j with weights, a level constant K and a branch policy.
struct StationaryMeasureSpec {
    struct SpecAtom {
        std::array<double, 2> x{0.0, 0.0};
        SymTensor a;
        double w = 0.0;
    };
    std::vector<SpecAtom> atoms;
    double k = 0.0;
    enum class Branch { Upper, Lower } branch = Branch::Upper;

    void validate(int dim) const;
    static StationaryMeasureSpec from_json_text(const std::string& text, int dim);
    static StationaryMeasureSpec from_json_file(const std::string& path, int dim);
};

/// Builds the stationary ensemble C_j = u(v_j) A_j with v_j = grad p . A_j grad p
/// and u the selected branch; every atom satisfies
/// |first_variation - K| <= 1e-8. K is validated against fr_range of p.
ParticleEnsemble fr_stationary_measure(const StationaryMeasureSpec& spec,
                                       const PressureField& p, const ModelParams& params);

/// One Fisher-Rao step: w_i <- w_i (1 - dt (phi_i - phibar)), clamped at
/// zero and renormalized. Throws StepRejected when dt (phi_i - phibar) >= 1
/// for some atom.
ParticleEnsemble fr_step(const ParticleEnsemble& mu, const PressureField& p,
                         const ModelParams& params, double dt);

/// Orchestrated Fisher-Rao run; the dissipation column logs the variance
/// estimate -(sum w phi^2 - (sum w phi)^2).
FlowRunResult<ParticleEnsemble> fr_run(const ParticleEnsemble& mu0, const ModelParams& params,
                                       const SourceField& s, const FlowSchedule& schedule);

} // namespace mesoflow
