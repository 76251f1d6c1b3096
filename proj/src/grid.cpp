#include "mesoflow/grid.hpp"

#include <algorithm>
#include <cmath>

#include "mesoflow/errors.hpp"

namespace mesoflow {

void StructuredMesh::validate() const {
    if (dim != 1 && dim != 2) throw ConfigError("mesh dim must be 1 or 2");
    for (int a = 0; a < dim; ++a) {
        if (cells[a] < 2) throw ConfigError("mesh needs at least 2 cells per axis");
        if (!(extent[a] > 0.0)) throw ConfigError("mesh extent must be positive");
    }
}

double StructuredMesh::cell_volume() const {
    return dim == 1 ? h(0) : h(0) * h(1);
}

double StructuredMesh::domain_volume() const {
    return dim == 1 ? extent[0] : extent[0] * extent[1];
}

double StructuredMesh::diameter() const {
    if (dim == 1) return extent[0];
    return std::sqrt(extent[0] * extent[0] + extent[1] * extent[1]);
}

std::array<double, 2> StructuredMesh::cell_center(int c) const {
    if (dim == 1) return {origin[0] + (c + 0.5) * h(0), 0.0};
    const int ix = c % cells[0];
    const int iy = c / cells[0];
    return {origin[0] + (ix + 0.5) * h(0), origin[1] + (iy + 0.5) * h(1)};
}

bool StructuredMesh::contains(const double* x) const {
    for (int a = 0; a < dim; ++a) {
        const double tol = 1e-12 * std::max(1.0, std::abs(extent[a]));
        if (x[a] < origin[a] - tol || x[a] > origin[a] + extent[a] + tol) return false;
    }
    return true;
}

int StructuredMesh::locate_cell(const double* x) const {
    if (!contains(x)) throw DomainError("point outside the domain closure");
    int idx[2] = {0, 0};
    for (int a = 0; a < dim; ++a) {
        int i = static_cast<int>(std::floor((x[a] - origin[a]) / h(a)));
        idx[a] = std::clamp(i, 0, cells[a] - 1);
    }
    return dim == 1 ? idx[0] : cell_index(idx[0], idx[1]);
}

double StructuredMesh::node_weight(int i) const {
    auto axis_weight = [](int k, int n) { return (k == 0 || k == n) ? 0.5 : 1.0; };
    if (dim == 1) return h(0) * axis_weight(i, cells[0]);
    const int ix = i % (cells[0] + 1);
    const int iy = i / (cells[0] + 1);
    return h(0) * h(1) * axis_weight(ix, cells[0]) * axis_weight(iy, cells[1]);
}

PermeabilityField PermeabilityField::zero(const StructuredMesh& mesh) {
    PermeabilityField f;
    f.mesh = mesh;
    f.cell_tensors.assign(mesh.num_cells(), SymTensor::zero(mesh.dim));
    return f;
}

double PermeabilityField::min_eigenvalue_over_cells() const {
    double m = 0.0;
    bool first = true;
    for (const auto& t : cell_tensors) {
        const double e = min_eigenvalue(t);
        if (first || e < m) m = e;
        first = false;
    }
    return m;
}

PermeabilityField PermeabilityField::psd_sanitized(double tol) const {
    PermeabilityField out = *this;
    for (auto& t : out.cell_tensors)
        if (min_eigenvalue(t) < -tol) t = project_psd(t);
    return out;
}

void SourceField::validate_zero_mean(double rel_tol) const {
    double total = 0.0, scale = 0.0;
    const double vol = mesh.cell_volume();
    for (double v : cell_values) {
        total += v * vol;
        scale += std::abs(v) * vol;
    }
    if (std::abs(total) > rel_tol * std::max(scale, 1.0))
        throw ConfigError("source field does not integrate to zero");
}

double SourceField::l2_norm() const {
    double s = 0.0;
    for (double v : cell_values) s += v * v;
    return std::sqrt(s * mesh.cell_volume());
}

void SourceField::remove_mean() {
    double total = 0.0;
    for (double v : cell_values) total += v;
    const double mean = total / cell_values.size();
    for (double& v : cell_values) v -= mean;
}

PressureField::PressureField(const StructuredMesh& mesh, std::vector<double> node_values)
    : mesh_(mesh), node_values_(std::move(node_values)) {
    if (static_cast<int>(node_values_.size()) != mesh_.num_nodes())
        throw ConfigError("PressureField: node value count mismatch");
    build_caches();
}

double PressureField::integral_mean() const {
    double s = 0.0;
    for (int i = 0; i < mesh_.num_nodes(); ++i) s += node_values_[i] * mesh_.node_weight(i);
    return s / mesh_.domain_volume();
}

void PressureField::subtract_mean() {
    const double m = integral_mean();
    for (double& v : node_values_) v -= m;
}

void PressureField::build_caches() {
    const int nc = mesh_.num_cells();
    cell_grad_.assign(nc, {0.0, 0.0});
    cell_hess_.assign(nc, SymTensor::zero(mesh_.dim));
    cell_grad_lap_.assign(nc, {0.0, 0.0});

    if (mesh_.dim == 1) {
        const double hx = mesh_.h(0);
        for (int c = 0; c < nc; ++c)
            cell_grad_[c][0] = (node_values_[c + 1] - node_values_[c]) / hx;
        // Hessian and higher by differencing the cell gradient field
        auto diff = [&](const std::vector<double>& f, int c) {
            if (c == 0) return (f[1] - f[0]) / hx;
            if (c == nc - 1) return (f[nc - 1] - f[nc - 2]) / hx;
            return (f[c + 1] - f[c - 1]) / (2.0 * hx);
        };
        std::vector<double> gx(nc);
        for (int c = 0; c < nc; ++c) gx[c] = cell_grad_[c][0];
        std::vector<double> lap(nc);
        for (int c = 0; c < nc; ++c) {
            const double hxx = diff(gx, c);
            cell_hess_[c].set(0, 0, hxx);
            lap[c] = hxx;
        }
        for (int c = 0; c < nc; ++c) cell_grad_lap_[c][0] = diff(lap, c);
        return;
    }

    const int cx = mesh_.cells[0], cy = mesh_.cells[1];
    const double hx = mesh_.h(0), hy = mesh_.h(1);
    for (int iy = 0; iy < cy; ++iy) {
        for (int ix = 0; ix < cx; ++ix) {
            const double p00 = node_values_[mesh_.node_index(ix, iy)];
            const double p10 = node_values_[mesh_.node_index(ix + 1, iy)];
            const double p01 = node_values_[mesh_.node_index(ix, iy + 1)];
            const double p11 = node_values_[mesh_.node_index(ix + 1, iy + 1)];
            auto& g = cell_grad_[mesh_.cell_index(ix, iy)];
            g[0] = ((p10 + p11) - (p00 + p01)) / (2.0 * hx);
            g[1] = ((p01 + p11) - (p00 + p10)) / (2.0 * hy);
        }
    }
    // central differences of the gradient field, one-sided at the boundary
    auto dcell = [&](auto&& get, int ix, int iy, int axis) {
        const int n = axis == 0 ? cx : cy;
        const double hh = axis == 0 ? hx : hy;
        const int k = axis == 0 ? ix : iy;
        auto shift = [&](int delta) {
            return axis == 0 ? get(ix + delta, iy) : get(ix, iy + delta);
        };
        if (k == 0) return (shift(1) - shift(0)) / hh;
        if (k == n - 1) return (shift(0) - shift(-1)) / hh;
        return (shift(1) - shift(-1)) / (2.0 * hh);
    };
    std::vector<double> lap(nc);
    for (int iy = 0; iy < cy; ++iy) {
        for (int ix = 0; ix < cx; ++ix) {
            auto gx = [&](int i, int j) { return cell_grad_[mesh_.cell_index(i, j)][0]; };
            auto gy = [&](int i, int j) { return cell_grad_[mesh_.cell_index(i, j)][1]; };
            const double hxx = dcell(gx, ix, iy, 0);
            const double hyy = dcell(gy, ix, iy, 1);
            const double hxy = 0.5 * (dcell(gx, ix, iy, 1) + dcell(gy, ix, iy, 0));
            auto& h = cell_hess_[mesh_.cell_index(ix, iy)];
            h.set(0, 0, hxx);
            h.set(1, 1, hyy);
            h.set(0, 1, hxy);
            lap[mesh_.cell_index(ix, iy)] = hxx + hyy;
        }
    }
    for (int iy = 0; iy < cy; ++iy) {
        for (int ix = 0; ix < cx; ++ix) {
            auto lv = [&](int i, int j) { return lap[mesh_.cell_index(i, j)]; };
            auto& gl = cell_grad_lap_[mesh_.cell_index(ix, iy)];
            gl[0] = dcell(lv, ix, iy, 0);
            gl[1] = dcell(lv, ix, iy, 1);
        }
    }
}

std::array<double, 2> PressureField::interp_cells(const std::vector<std::array<double, 2>>& f,
                                                  const double* x) const {
    if (!mesh_.contains(x)) throw DomainError("point outside the domain closure");
    // multilinear interpolation on the grid of cell centers, constant
    // extrapolation in the half-cell boundary strips
    double w[2] = {0.0, 0.0};
    int i0[2] = {0, 0};
    for (int a = 0; a < mesh_.dim; ++a) {
        const double t = (x[a] - mesh_.origin[a]) / mesh_.h(a) - 0.5;
        const double tc = std::clamp(t, 0.0, static_cast<double>(mesh_.cells[a] - 1));
        i0[a] = std::min(static_cast<int>(std::floor(tc)), mesh_.cells[a] - 2);
        i0[a] = std::max(i0[a], 0);
        w[a] = std::clamp(tc - i0[a], 0.0, 1.0);
    }
    std::array<double, 2> out{0.0, 0.0};
    if (mesh_.dim == 1) {
        const auto& a = f[i0[0]];
        const auto& b = f[std::min(i0[0] + 1, mesh_.cells[0] - 1)];
        out[0] = (1.0 - w[0]) * a[0] + w[0] * b[0];
        return out;
    }
    const int ix1 = std::min(i0[0] + 1, mesh_.cells[0] - 1);
    const int iy1 = std::min(i0[1] + 1, mesh_.cells[1] - 1);
    const auto& f00 = f[mesh_.cell_index(i0[0], i0[1])];
    const auto& f10 = f[mesh_.cell_index(ix1, i0[1])];
    const auto& f01 = f[mesh_.cell_index(i0[0], iy1)];
    const auto& f11 = f[mesh_.cell_index(ix1, iy1)];
    for (int k = 0; k < 2; ++k) {
        out[k] = (1.0 - w[0]) * (1.0 - w[1]) * f00[k] + w[0] * (1.0 - w[1]) * f10[k] +
                 (1.0 - w[0]) * w[1] * f01[k] + w[0] * w[1] * f11[k];
    }
    return out;
}

std::array<double, 2> PressureField::gradient_at(const double* x) const {
    return interp_cells(cell_grad_, x);
}

SymTensor PressureField::hessian_at(const double* x) const {
    // interpolate each packed component through the vector helper
    const int npack = mesh_.dim * (mesh_.dim + 1) / 2;
    SymTensor out(mesh_.dim);
    std::vector<std::array<double, 2>> comp(cell_hess_.size());
    for (int k = 0; k < npack; ++k) {
        for (std::size_t c = 0; c < cell_hess_.size(); ++c)
            comp[c] = {cell_hess_[c].packed_data()[k], 0.0};
        out.packed_data()[k] = interp_cells(comp, x)[0];
    }
    return out;
}

std::array<double, 2> PressureField::grad_laplacian_at(const double* x) const {
    return interp_cells(cell_grad_lap_, x);
}

double PressureField::value_at(const double* x) const {
    if (!mesh_.contains(x)) throw DomainError("point outside the domain closure");
    double w[2] = {0.0, 0.0};
    int i0[2] = {0, 0};
    for (int a = 0; a < mesh_.dim; ++a) {
        const double t = (x[a] - mesh_.origin[a]) / mesh_.h(a);
        const double tc = std::clamp(t, 0.0, static_cast<double>(mesh_.cells[a]));
        i0[a] = std::min(static_cast<int>(std::floor(tc)), mesh_.cells[a] - 1);
        w[a] = tc - i0[a];
    }
    if (mesh_.dim == 1) {
        return (1.0 - w[0]) * node_values_[i0[0]] + w[0] * node_values_[i0[0] + 1];
    }
    const double p00 = node_values_[mesh_.node_index(i0[0], i0[1])];
    const double p10 = node_values_[mesh_.node_index(i0[0] + 1, i0[1])];
    const double p01 = node_values_[mesh_.node_index(i0[0], i0[1] + 1)];
    const double p11 = node_values_[mesh_.node_index(i0[0] + 1, i0[1] + 1)];
    return (1.0 - w[0]) * (1.0 - w[1]) * p00 + w[0] * (1.0 - w[1]) * p10 +
           (1.0 - w[0]) * w[1] * p01 + w[0] * w[1] * p11;
}

} // namespace mesoflow
