#include "mesoflow/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace mesoflow {

void ModelParams::validate() const {
    if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
    if (!(nu >= 0.0)) throw ConfigError("nu must be non-negative");
    if (!(r >= 0.0)) throw ConfigError("r must be non-negative");
    if (dim < 1 || dim > kMaxDim) throw ConfigError("dim out of range");
}

SymTensor::SymTensor(int dim) : dim_(dim) {
    if (dim < 1 || dim > kMaxDim) throw ConfigError("SymTensor: dim out of range");
}

int SymTensor::packed_index(int i, int j) const {
    if (i > j) std::swap(i, j);
    // row-wise upper triangle: row i contributes (dim - i) entries
    return i * dim_ - i * (i - 1) / 2 + (j - i);
}

SymTensor SymTensor::identity(int dim) {
    SymTensor t(dim);
    for (int i = 0; i < dim; ++i) t.set(i, i, 1.0);
    return t;
}

SymTensor SymTensor::outer(const std::vector<double>& v) {
    SymTensor t(static_cast<int>(v.size()));
    for (int i = 0; i < t.dim_; ++i)
        for (int j = i; j < t.dim_; ++j) t.set(i, j, v[i] * v[j]);
    return t;
}

SymTensor SymTensor::from_packed(int dim, const std::vector<double>& packed) {
    SymTensor t(dim);
    if (static_cast<int>(packed.size()) != t.packed_size())
        throw ConfigError("SymTensor::from_packed: wrong packed length");
    std::copy(packed.begin(), packed.end(), t.data_.begin());
    return t;
}

std::vector<double> SymTensor::vec() const {
    return std::vector<double>(data_.begin(), data_.begin() + packed_size());
}

double SymTensor::frobenius_norm() const {
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) {
        s += (*this)(i, i) * (*this)(i, i);
        for (int j = i + 1; j < dim_; ++j) s += 2.0 * (*this)(i, j) * (*this)(i, j);
    }
    return std::sqrt(s);
}

double SymTensor::trace() const {
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) s += (*this)(i, i);
    return s;
}

std::array<double, kMaxDim> SymTensor::apply(const double* x) const {
    std::array<double, kMaxDim> y{};
    for (int i = 0; i < dim_; ++i) {
        double s = 0.0;
        for (int j = 0; j < dim_; ++j) s += (*this)(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

double SymTensor::quad(const double* x) const {
    auto y = apply(x);
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) s += x[i] * y[i];
    return s;
}

SymTensor& SymTensor::operator+=(const SymTensor& other) {
    for (int k = 0; k < packed_size(); ++k) data_[k] += other.data_[k];
    return *this;
}

SymTensor& SymTensor::operator-=(const SymTensor& other) {
    for (int k = 0; k < packed_size(); ++k) data_[k] -= other.data_[k];
    return *this;
}

SymTensor& SymTensor::operator*=(double s) {
    for (int k = 0; k < packed_size(); ++k) data_[k] *= s;
    return *this;
}

bool SymTensor::all_finite() const {
    for (int k = 0; k < packed_size(); ++k)
        if (!std::isfinite(data_[k])) return false;
    return true;
}

SymTensor unvec_sym(int dim, const std::vector<double>& packed) {
    return SymTensor::from_packed(dim, packed);
}

EigenDecomposition eigen_sym(const SymTensor& a, int max_sweeps) {
    const int d = a.dim();
    // work on a full dense copy
    double m[kMaxDim][kMaxDim];
    double v[kMaxDim][kMaxDim];
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            m[i][j] = a(i, j);
            v[i][j] = (i == j) ? 1.0 : 0.0;
        }

    double scale = 0.0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) scale = std::max(scale, std::abs(m[i][j]));
    const double tol = 1e-15 * std::max(scale, 1.0);

    bool converged = (d == 1);
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < d - 1; ++p)
            for (int q = p + 1; q < d; ++q) off = std::max(off, std::abs(m[p][q]));
        if (off <= tol) {
            converged = true;
            break;
        }
        for (int p = 0; p < d - 1; ++p) {
            for (int q = p + 1; q < d; ++q) {
                if (std::abs(m[p][q]) <= tol) continue;
                const double theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < d; ++k) {
                    const double mkp = m[k][p], mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for (int k = 0; k < d; ++k) {
                    const double mpk = m[p][k], mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for (int k = 0; k < d; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if (!converged) {
        double off = 0.0;
        for (int p = 0; p < d - 1; ++p)
            for (int q = p + 1; q < d; ++q) off = std::max(off, std::abs(m[p][q]));
        if (off > 1e-10 * std::max(scale, 1.0))
            throw SolverError("eigen_sym: Jacobi iteration did not converge");
    }

    EigenDecomposition dec;
    dec.eigenvalues.resize(d);
    dec.eigenvectors.resize(d);
    std::array<int, kMaxDim> order;
    for (int i = 0; i < d; ++i) order[i] = i;
    std::sort(order.begin(), order.begin() + d,
              [&](int i, int j) { return m[i][i] < m[j][j]; });
    for (int k = 0; k < d; ++k) {
        const int src = order[k];
        dec.eigenvalues[k] = m[src][src];
        for (int i = 0; i < d; ++i) dec.eigenvectors[k][i] = v[i][src];
    }
    return dec;
}

double min_eigenvalue(const SymTensor& a) {
    return eigen_sym(a).eigenvalues.front();
}

SymTensor project_psd(const SymTensor& a) {
    const int d = a.dim();
    auto dec = eigen_sym(a);
    if (dec.eigenvalues.front() >= 0.0) return a;
    SymTensor out(d);
    for (int k = 0; k < d; ++k) {
        const double lam = std::max(0.0, dec.eigenvalues[k]);
        if (lam == 0.0) continue;
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j)
                out.set(i, j, out(i, j) + lam * dec.eigenvectors[k][i] * dec.eigenvectors[k][j]);
    }
    return out;
}

SymTensor power_map(const SymTensor& c, const ModelParams& params) {
    const double norm = c.frobenius_norm();
    if (norm < 1e-14) return SymTensor::zero(c.dim());
    const double factor = params.nu * std::pow(norm, params.gamma - 2.0);
    SymTensor out = c;
    out *= factor;
    return out;
}

} // namespace mesoflow
