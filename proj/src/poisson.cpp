#include "mesoflow/poisson.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mesoflow/errors.hpp"
#include "mesoflow/parallel.hpp"

namespace mesoflow {

void Csr::matvec(const std::vector<double>& x, std::vector<double>& y) const {
    y.assign(n, 0.0);
    parallel_for_chunks(static_cast<std::size_t>(n), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double s = 0.0;
            for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += vals[k] * x[cols[k]];
            y[i] = s;
        }
    });
}

namespace {

void project_zero_sum(std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    const double m = s / v.size();
    for (double& x : v) x -= m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace

CgReport cg_solve_zero_mean(const Csr& a, const std::vector<double>& b,
                            std::vector<double>& x, const CgOptions& opts) {
    const int n = a.n;
    if (static_cast<int>(x.size()) != n) x.assign(n, 0.0);
    project_zero_sum(x);

    std::vector<double> r(n), p(n), ap(n);
    a.matvec(x, ap);
    for (int i = 0; i < n; ++i) r[i] = b[i] - ap[i];
    project_zero_sum(r);
    p = r;

    const double bnorm = std::sqrt(dot(b, b));
    const double stop = opts.rel_tol * std::max(bnorm, 1e-300);
    double rs = dot(r, r);

    CgReport rep;
    rep.residual = std::sqrt(rs) / std::max(bnorm, 1e-300);
    if (std::sqrt(rs) <= stop) return rep;

    for (int it = 0; it < opts.max_iter; ++it) {
        a.matvec(p, ap);
        const double pap = dot(p, ap);
        if (!(pap > 0.0)) throw SolverError("cg: operator not positive on the zero-mean subspace");
        const double alpha = rs / pap;
        for (int i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        project_zero_sum(r);
        const double rs_new = dot(r, r);
        rep.iterations = it + 1;
        if (std::sqrt(rs_new) <= stop) {
            rep.residual = std::sqrt(rs_new) / std::max(bnorm, 1e-300);
            return rep;
        }
        const double beta = rs_new / rs;
        rs = rs_new;
        for (int i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    throw SolverError("cg: no convergence after max iterations");
}

CellRule cell_rule(const StructuredMesh& mesh) {
    CellRule rule;
    if (mesh.dim == 1) {
        rule.nodes_per_cell = 2;
        rule.points = 1;
        rule.weight[0] = mesh.h(0);
        rule.grad[0][0][0] = -1.0 / mesh.h(0);
        rule.grad[0][1][0] = 1.0 / mesh.h(0);
        return rule;
    }
    const double hx = mesh.h(0), hy = mesh.h(1);
    rule.nodes_per_cell = 4;
    rule.points = 4;
    const double g = 0.5 / std::sqrt(3.0);
    const double xi[2] = {0.5 - g, 0.5 + g};
    int q = 0;
    for (int jy = 0; jy < 2; ++jy) {
        for (int jx = 0; jx < 2; ++jx, ++q) {
            const double s = xi[jx], t = xi[jy];
            rule.weight[q] = 0.25 * hx * hy;
            // local nodes: (0,0),(1,0),(0,1),(1,1)
            rule.grad[q][0][0] = -(1.0 - t) / hx;
            rule.grad[q][0][1] = -(1.0 - s) / hy;
            rule.grad[q][1][0] = (1.0 - t) / hx;
            rule.grad[q][1][1] = -s / hy;
            rule.grad[q][2][0] = -t / hx;
            rule.grad[q][2][1] = (1.0 - s) / hy;
            rule.grad[q][3][0] = t / hx;
            rule.grad[q][3][1] = s / hy;
        }
    }
    return rule;
}

void cell_nodes(const StructuredMesh& mesh, int c, int out[4]) {
    if (mesh.dim == 1) {
        out[0] = c;
        out[1] = c + 1;
        return;
    }
    const int ix = c % mesh.cells[0];
    const int iy = c / mesh.cells[0];
    out[0] = mesh.node_index(ix, iy);
    out[1] = mesh.node_index(ix + 1, iy);
    out[2] = mesh.node_index(ix, iy + 1);
    out[3] = mesh.node_index(ix + 1, iy + 1);
}

namespace {

/// Builds the CSR sparsity for the tensor-product Q1 stencil and fills
/// values via a callback local_matrix(c, K) with K[a][b].
template <typename LocalFn>
Csr assemble_generic(const StructuredMesh& mesh, LocalFn&& local_matrix) {
    const int nn = mesh.num_nodes();
    const int nc = mesh.num_cells();
    const CellRule rule = cell_rule(mesh);
    const int npc = rule.nodes_per_cell;

    // collect (i, j, v) triplets per cell, then compress
    std::vector<std::vector<std::pair<int, double>>> rows(nn);
    const int expect = mesh.dim == 1 ? 3 : 9;
    for (auto& r : rows) r.reserve(expect);

    int nodes[4];
    double K[4][4];
    for (int c = 0; c < nc; ++c) {
        cell_nodes(mesh, c, nodes);
        local_matrix(c, K);
        for (int a = 0; a < npc; ++a)
            for (int b = 0; b < npc; ++b) rows[nodes[a]].emplace_back(nodes[b], K[a][b]);
    }

    Csr m;
    m.n = nn;
    m.row_ptr.assign(nn + 1, 0);
    for (int i = 0; i < nn; ++i) {
        auto& r = rows[i];
        std::sort(r.begin(), r.end(),
                  [](const auto& x, const auto& y) { return x.first < y.first; });
        int unique = 0;
        for (std::size_t k = 0; k < r.size(); ++k)
            if (k == 0 || r[k].first != r[k - 1].first) ++unique;
        m.row_ptr[i + 1] = m.row_ptr[i] + unique;
    }
    m.cols.resize(m.row_ptr[nn]);
    m.vals.resize(m.row_ptr[nn]);
    for (int i = 0; i < nn; ++i) {
        int at = m.row_ptr[i] - 1;
        int prev = -1;
        for (const auto& [j, v] : rows[i]) {
            if (j != prev) {
                ++at;
                m.cols[at] = j;
                m.vals[at] = v;
                prev = j;
            } else {
                m.vals[at] += v;
            }
        }
    }
    return m;
}

} // namespace

Csr assemble_stiffness(const StructuredMesh& mesh,
                       const std::vector<SymTensor>& cell_tensors, double r) {
    const CellRule rule = cell_rule(mesh);
    const int npc = rule.nodes_per_cell;
    return assemble_generic(mesh, [&](int c, double K[4][4]) {
        SymTensor t = cell_tensors[c];
        for (int i = 0; i < mesh.dim; ++i) t.set(i, i, t(i, i) + r);
        for (int a = 0; a < npc; ++a)
            for (int b = 0; b < npc; ++b) K[a][b] = 0.0;
        for (int q = 0; q < rule.points; ++q) {
            for (int a = 0; a < npc; ++a) {
                const auto ta = t.apply(rule.grad[q][a]);
                for (int b = 0; b < npc; ++b) {
                    double s = 0.0;
                    for (int ax = 0; ax < mesh.dim; ++ax) s += ta[ax] * rule.grad[q][b][ax];
                    K[a][b] += rule.weight[q] * s;
                }
            }
        }
    });
}

std::vector<double> node_load(const StructuredMesh& mesh, const SourceField& s) {
    std::vector<double> b(mesh.num_nodes(), 0.0);
    const double share = mesh.cell_volume() / (mesh.dim == 1 ? 2.0 : 4.0);
    int nodes[4];
    for (int c = 0; c < mesh.num_cells(); ++c) {
        cell_nodes(mesh, c, nodes);
        const int npc = mesh.dim == 1 ? 2 : 4;
        for (int a = 0; a < npc; ++a) b[nodes[a]] += share * s.cell_values[c];
    }
    return b;
}

PressureField assemble_and_solve(const StructuredMesh& mesh, const PermeabilityField& perm,
                                 double r, const SourceField& s, PoissonReport* report,
                                 const CgOptions& opts) {
    mesh.validate();
    if (perm.mesh != mesh || s.mesh != mesh)
        throw ConfigError("assemble_and_solve: field meshes disagree");
    s.validate_zero_mean();
    const PermeabilityField sane = perm.psd_sanitized();
    if (!(r > 0.0)) {
        if (sane.min_eigenvalue_over_cells() <= 0.0)
            throw ConfigError("assemble_and_solve: r = 0 requires uniformly elliptic permeability");
    }
    const Csr a = assemble_stiffness(mesh, sane.cell_tensors, r);
    const std::vector<double> b = node_load(mesh, s);
    std::vector<double> x(mesh.num_nodes(), 0.0);
    const CgReport cg = cg_solve_zero_mean(a, b, x, opts);
    if (report) {
        report->cg = cg;
        report->weak_residual = cg.residual;
    }
    PressureField p(mesh, std::move(x));
    p.subtract_mean();
    return p;
}

namespace {

template <typename TensorAt>
double quadratic_form_impl(const StructuredMesh& mesh, const PressureField& p,
                           TensorAt&& tensor_at) {
    const CellRule rule = cell_rule(mesh);
    const int npc = rule.nodes_per_cell;
    const auto& pv = p.nodes();
    return parallel_sum(static_cast<std::size_t>(mesh.num_cells()), [&](std::size_t c) {
        int nodes[4];
        cell_nodes(mesh, static_cast<int>(c), nodes);
        const SymTensor t = tensor_at(static_cast<int>(c));
        double acc = 0.0;
        for (int q = 0; q < rule.points; ++q) {
            double g[2] = {0.0, 0.0};
            for (int a = 0; a < npc; ++a)
                for (int ax = 0; ax < mesh.dim; ++ax)
                    g[ax] += pv[nodes[a]] * rule.grad[q][a][ax];
            acc += rule.weight[q] * t.quad(g);
        }
        return acc;
    });
}

} // namespace

double kinetic_quadratic_form(const StructuredMesh& mesh,
                              const std::vector<SymTensor>& cell_tensors,
                              const PressureField& p) {
    return quadratic_form_impl(mesh, p, [&](int c) { return cell_tensors[c]; });
}

double dirichlet_quadratic_form(const StructuredMesh& mesh, const PressureField& p) {
    const SymTensor id = SymTensor::identity(mesh.dim);
    return quadratic_form_impl(mesh, p, [&](int) { return id; });
}

double source_pairing(const StructuredMesh& mesh, const SourceField& s,
                      const PressureField& p) {
    const std::vector<double> b = node_load(mesh, s);
    double acc = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) acc += b[i] * p.nodes()[i];
    return acc;
}

} // namespace mesoflow
