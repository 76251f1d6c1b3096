#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "mesoflow/errors.hpp"

namespace mesoflow {

constexpr int kMaxDim = 8;

/// Model parameters shared by all energy functionals:
/// gamma  - metabolic exponent (> 0),
/// nu     - metabolic coefficient (>= 0),
/// r      - isotropic background permeability (>= 0),
/// dim    - spatial dimension.
struct ModelParams {
    double gamma = 2.0;
    double nu = 1.0;
    double r = 1.0;
    int dim = 2;

    void validate() const;
};

/// Small dense symmetric d x d matrix, stored as the row-wise upper
/// triangle (d(d+1)/2 entries). This is the conductivity variable of the
/// mesoscopic model; all tensors handled by the library live in its
/// closed PSD cone or near it.
class SymTensor {
public:
    SymTensor() : dim_(0) {}
    explicit SymTensor(int dim);

    static SymTensor identity(int dim);
    static SymTensor zero(int dim) { return SymTensor(dim); }
    /// Rank-one tensor v ⊗ v.
    static SymTensor outer(const std::vector<double>& v);
    static SymTensor from_packed(int dim, const std::vector<double>& packed);

    int dim() const { return dim_; }
    int packed_size() const { return dim_ * (dim_ + 1) / 2; }

    double operator()(int i, int j) const { return data_[packed_index(i, j)]; }
    void set(int i, int j, double v) { data_[packed_index(i, j)] = v; }

    const double* packed_data() const { return data_.data(); }
    double* packed_data() { return data_.data(); }

    /// Compact vectorization v(A): row-wise upper triangle.
    std::vector<double> vec() const;

    double frobenius_norm() const;
    double trace() const;

    /// y = A x
    std::array<double, kMaxDim> apply(const double* x) const;
    /// x . A x
    double quad(const double* x) const;

    SymTensor& operator+=(const SymTensor& other);
    SymTensor& operator-=(const SymTensor& other);
    SymTensor& operator*=(double s);
    friend SymTensor operator+(SymTensor a, const SymTensor& b) { return a += b; }
    friend SymTensor operator-(SymTensor a, const SymTensor& b) { return a -= b; }
    friend SymTensor operator*(SymTensor a, double s) { return a *= s; }
    friend SymTensor operator*(double s, SymTensor a) { return a *= s; }

    bool all_finite() const;

private:
    int packed_index(int i, int j) const;

    int dim_;
    std::array<double, kMaxDim*(kMaxDim + 1) / 2> data_{};
};

/// Inverse of SymTensor::vec for a packed row-wise upper triangle.
SymTensor unvec_sym(int dim, const std::vector<double>& packed);

/// Eigen-decomposition by cyclic Jacobi rotations. Eigenvalues ascending,
/// eigenvectors[k] is the column (unit) vector for eigenvalues[k].
struct EigenDecomposition {
    std::vector<double> eigenvalues;
    std::vector<std::array<double, kMaxDim>> eigenvectors;
};
EigenDecomposition eigen_sym(const SymTensor& a, int max_sweeps = 64);

double min_eigenvalue(const SymTensor& a);

/// Frobenius-nearest PSD matrix: eigenvalue clipping at zero. Idempotent.
SymTensor project_psd(const SymTensor& a);

/// The metabolic power map  nu |C|^{gamma-2} C,  extended by 0 at C = 0.
/// Tensors with |C| below 1e-14 are treated as zero to avoid overflow of
/// the negative power for gamma < 2.
SymTensor power_map(const SymTensor& c, const ModelParams& params);

} // namespace mesoflow
