#pragma once

#include <array>
#include <vector>

#include "mesoflow/tensor.hpp"

namespace mesoflow {

/// Rectangular structured mesh over Omega in R^d, d in {1,2}. Pressure
/// unknowns live on vertices, coefficient/source fields on cells.
struct StructuredMesh {
    int dim = 2;
    std::array<double, 2> origin{0.0, 0.0};
    std::array<double, 2> extent{1.0, 1.0};
    std::array<int, 2> cells{16, 16};

    void validate() const;

    double h(int axis) const { return extent[axis] / cells[axis]; }
    double cell_volume() const;
    double domain_volume() const;
    double diameter() const;

    int num_cells() const { return dim == 1 ? cells[0] : cells[0] * cells[1]; }
    int num_nodes() const {
        return dim == 1 ? cells[0] + 1 : (cells[0] + 1) * (cells[1] + 1);
    }

    int cell_index(int ix, int iy = 0) const { return iy * cells[0] + ix; }
    int node_index(int ix, int iy = 0) const { return iy * (cells[0] + 1) + ix; }

    std::array<double, 2> cell_center(int c) const;
    /// Cell containing x (ties to the lower cell; x clamped to the closure).
    int locate_cell(const double* x) const;
    bool contains(const double* x) const;
    /// Integral weight of node i (trapezoidal rule).
    double node_weight(int i) const;

    bool operator==(const StructuredMesh& other) const = default;
};

/// Per-cell symmetric tensor coefficient (the deposited permeability).
struct PermeabilityField {
    StructuredMesh mesh;
    std::vector<SymTensor> cell_tensors;

    static PermeabilityField zero(const StructuredMesh& mesh);
    double min_eigenvalue_over_cells() const;
    /// Copy with cells below -tol on the smallest eigenvalue projected to PSD.
    PermeabilityField psd_sanitized(double tol = 1e-10) const;
};

/// Per-cell scalar source density. Must integrate to zero over Omega.
struct SourceField {
    StructuredMesh mesh;
    std::vector<double> cell_values;

    void validate_zero_mean(double rel_tol = 1e-12) const;
    double l2_norm() const;
    /// Subtracts the mean so the field integrates to exactly zero.
    void remove_mean();
};

/// Vertex pressure field with cached cell-centered derivative fields:
/// gradient, Hessian (finite differences of the cell gradients, one-sided
/// at the boundary) and gradient of the Laplacian (used by the full
/// Wasserstein flow drift).
class PressureField {
public:
    PressureField() = default;
    PressureField(const StructuredMesh& mesh, std::vector<double> node_values);

    const StructuredMesh& mesh() const { return mesh_; }
    const std::vector<double>& nodes() const { return node_values_; }

    double integral_mean() const;
    void subtract_mean();

    /// Multilinear interpolation of the cell-centered gradient; exact for
    /// globally affine fields. Throws DomainError outside the closure.
    std::array<double, 2> gradient_at(const double* x) const;
    SymTensor hessian_at(const double* x) const;
    std::array<double, 2> grad_laplacian_at(const double* x) const;

    const std::vector<std::array<double, 2>>& cell_gradients() const { return cell_grad_; }
    const std::vector<SymTensor>& cell_hessians() const { return cell_hess_; }
    std::array<double, 2> cell_gradient(int c) const { return cell_grad_[c]; }

    double value_at(const double* x) const;

private:
    void build_caches();
    std::array<double, 2> interp_cells(const std::vector<std::array<double, 2>>& f,
                                       const double* x) const;

    StructuredMesh mesh_;
    std::vector<double> node_values_;
    std::vector<std::array<double, 2>> cell_grad_;
    std::vector<SymTensor> cell_hess_;
    std::vector<std::array<double, 2>> cell_grad_lap_;
};

} // namespace mesoflow
