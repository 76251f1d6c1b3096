#pragma once

#include <string>
#include <vector>

#include "mesoflow/fisher_rao.hpp"
#include "mesoflow/grid.hpp"
#include "mesoflow/poisson.hpp"

namespace mesoflow {

/// Per-cell position density of the network (>= 0).
struct DensityField {
    StructuredMesh mesh;
    std::vector<double> cell_values;

    void validate() const;
    static DensityField uniform(const StructuredMesh& mesh, double value = 1.0);
};

/// Per-cell gradient-constraint multiplier of the gamma = 1 problem;
/// lambda = a^2 / nu.
struct MultiplierField {
    StructuredMesh mesh;
    std::vector<double> a_squared;
};

struct SupportComponent {
    int id = 0;
    double omega = 0.0;  // mean |grad p| over the component
    double spread = 0.0; // max - min of |grad p|
    int cells = 0;
};

struct StationaryReport {
    int iterations = 0;
    double final_value = 0.0;
    double el_residual = 0.0;
    double constraint_max = 0.0;
    std::vector<SupportComponent> components;

    std::string to_json() const;
};

/// Minimizes J[p] = int [ (r/2)|grad p|^2
///   + ((gamma-1)/2gamma) nu^{-1/(gamma-1)} rho |grad p|^{2gamma/(gamma-1)} - p S ]
/// over zero-mean fields (gamma > 1). The solution is the fixed point of
/// the lagged-coefficient Poisson operator; the reported EL residual is
/// measured against that operator.
PressureField plap_minimize(const StructuredMesh& mesh, const DensityField& rho,
                            const SourceField& s, const ModelParams& params,
                            StationaryReport* report = nullptr);

/// Evaluates the discrete p-Laplace Euler-Lagrange residual
/// |A(r + nu^{-1/(g-1)} rho |grad p|^{2/(g-1)}) p - b| / |b| of an
/// arbitrary pressure field (used for cross-model consistency checks).
double plap_el_residual(const StructuredMesh& mesh, const DensityField& rho,
                        const SourceField& s, const ModelParams& params,
                        const PressureField& p);

/// gamma = 1 gradient-constrained problem: minimizes
/// int (r |grad p|^2/2 - p S) subject to |grad p|^2 <= nu per cell via
/// Uzawa dual ascent on per-cell multipliers. Recovers a^2 with
/// rho a^2 (|grad p|^2 - nu) = 0.
PressureField constrained_minimize_gamma1(const StructuredMesh& mesh, const DensityField& rho,
                                          const SourceField& s, const ModelParams& params,
                                          MultiplierField* multiplier_out = nullptr,
                                          StationaryReport* report = nullptr);

/// Direction-resolved angular density: shared unit directions with
/// per-cell nonnegative weights (cells x directions).
struct AngularDensity {
    StructuredMesh mesh;
    std::vector<std::array<double, 2>> directions;
    std::vector<std::vector<double>> cell_weights;

    void validate() const;
};

/// Scalar-model stationary solve: minimizes
/// int [ sum_k w_k nu^{-1/(g-1)} ((g-1)/2g)|theta_k . grad p|^{2g/(g-1)} - p S ]
/// (plus the r-term when params.r > 0), gamma > 1.
PressureField scalar_stationary_minimize(const StructuredMesh& mesh, const AngularDensity& rho_dir,
                                         const SourceField& s, const ModelParams& params,
                                         StationaryReport* report = nullptr);

/// Fisher-Rao stationary functional: finds the self-consistent pair of
/// pressure and stationary measure for a given sigma_0 spec (gamma > 1,
/// K >= 0). U is tabulated by adaptive Simpson integration of the branch
/// u(v) and enters the reported functional value; the pressure is the
/// fixed point of the Poisson solve with the deposited stationary
/// permeability.
PressureField fr_functional_minimize(const StructuredMesh& mesh,
                                     const StationaryMeasureSpec& spec, const SourceField& s,
                                     const ModelParams& params,
                                     StationaryReport* report = nullptr);

struct WassEquilibriumReport {
    bool is_equilibrium = false;
    std::vector<SupportComponent> components;
};

/// Checks the piecewise-constant-|grad p| characterization of Wasserstein
/// equilibria: per connected component of supp rho (cell flood fill with
/// threshold 1e-12), |grad p| must have spread <= tol.
WassEquilibriumReport verify_wass_equilibrium(const PressureField& p, const DensityField& rho,
                                              double tol);

/// Antiderivative table of a branch function u(v) with U(0) = 0, built by
/// adaptive Simpson integration (tol 1e-10) and evaluated with cubic
/// Hermite interpolation (u provides the exact slope at the knots).
class BranchAntiderivative {
public:
    BranchAntiderivative(const ModelParams& params, double k, bool upper_branch);
    double value(double v) const; // U(v)
    double slope(double v) const; // u(v)

private:
    void extend_to(double v) const;
    ModelParams params_;
    double k_ = 0.0;
    bool upper_ = true;
    mutable std::vector<double> knots_;
    mutable std::vector<double> u_;
    mutable std::vector<double> big_u_;
};

} // namespace mesoflow
