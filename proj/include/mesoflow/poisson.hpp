#pragma once

#include <vector>

#include "mesoflow/grid.hpp"

namespace mesoflow {

/// Compressed sparse row matrix (symmetric operators only in this project).
struct Csr {
    int n = 0;
    std::vector<int> row_ptr;
    std::vector<int> cols;
    std::vector<double> vals;

    void matvec(const std::vector<double>& x, std::vector<double>& y) const;
};

struct CgOptions {
    double rel_tol = 1e-12;
    int max_iter = 20000;
};

struct CgReport {
    int iterations = 0;
    double residual = 0.0; // final |Ax-b| / |b|
};

/// Conjugate gradient for a symmetric positive semidefinite system whose
/// kernel is the constant vector; iterates are projected onto the
/// zero-sum subspace every iteration. Throws SolverError on breakdown.
CgReport cg_solve_zero_mean(const Csr& a, const std::vector<double>& b,
                            std::vector<double>& x, const CgOptions& opts = {});

/// Q1 stiffness matrix assembly with per-cell constant tensor coefficient
/// (perm + r*I), 2x2 Gauss quadrature per cell in 2D.
Csr assemble_stiffness(const StructuredMesh& mesh,
                       const std::vector<SymTensor>& cell_tensors, double r);

/// Nodal load vector b_i = int S phi_i for a per-cell constant source.
std::vector<double> node_load(const StructuredMesh& mesh, const SourceField& s);

struct PoissonReport {
    CgReport cg;
    double weak_residual = 0.0; // |A p - b| / |b|
};

/// Solves -div((P + r I) grad p) = S with zero-flux boundary conditions
/// and the zero-integral-mean gauge. Cells whose smallest eigenvalue is
/// below -1e-10 are PSD-projected before assembly.
PressureField assemble_and_solve(const StructuredMesh& mesh, const PermeabilityField& perm,
                                 double r, const SourceField& s,
                                 PoissonReport* report = nullptr,
                                 const CgOptions& opts = {});

/// p^T A_P p for the permeability part alone (same quadrature as assembly).
double kinetic_quadratic_form(const StructuredMesh& mesh,
                              const std::vector<SymTensor>& cell_tensors,
                              const PressureField& p);

/// int |grad p|^2 dx with the assembly quadrature.
double dirichlet_quadratic_form(const StructuredMesh& mesh, const PressureField& p);

/// int S p dx with the load-vector pairing (exact for per-cell-constant S).
double source_pairing(const StructuredMesh& mesh, const SourceField& s,
                      const PressureField& p);

/// Per-cell quadrature rule exposed for nonlinear functionals: point
/// weights and basis gradients per local node. In 1D this is the single
/// midpoint (gradients are constant); in 2D the 2x2 Gauss rule.
struct CellRule {
    int nodes_per_cell = 0;
    int points = 0;
    // grad[q][a][axis], weight[q]
    double grad[4][4][2] = {};
    double weight[4] = {};
};
CellRule cell_rule(const StructuredMesh& mesh);

/// Global node indices of a cell's vertices (local order: x fastest).
void cell_nodes(const StructuredMesh& mesh, int c, int out[4]);

} // namespace mesoflow
