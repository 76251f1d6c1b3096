#include "mesoflow/stationary.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "mesoflow/errors.hpp"
#include "mesoflow/io.hpp"

namespace mesoflow {

void DensityField::validate() const {
    mesh.validate();
    if (static_cast<int>(cell_values.size()) != mesh.num_cells())
        throw ConfigError("density field: size mismatch");
    for (double v : cell_values)
        if (v < 0.0 || !std::isfinite(v)) throw ConfigError("density field: values must be >= 0");
}

DensityField DensityField::uniform(const StructuredMesh& mesh, double value) {
    DensityField f;
    f.mesh = mesh;
    f.cell_values.assign(mesh.num_cells(), value);
    return f;
}

void AngularDensity::validate() const {
    mesh.validate();
    if (directions.empty()) throw ConfigError("angular density: needs at least one direction");
    for (const auto& th : directions) {
        double n2 = 0.0;
        for (int k = 0; k < mesh.dim; ++k) n2 += th[k] * th[k];
        if (std::abs(n2 - 1.0) > 1e-10)
            throw ConfigError("angular density: directions must be unit vectors");
    }
    if (static_cast<int>(cell_weights.size()) != mesh.num_cells())
        throw ConfigError("angular density: cell weight rows mismatch");
    for (const auto& row : cell_weights) {
        if (row.size() != directions.size())
            throw ConfigError("angular density: weight row length mismatch");
        for (double w : row)
            if (w < 0.0) throw ConfigError("angular density: weights must be >= 0");
    }
}

std::string StationaryReport::to_json() const {
    nlohmann::json j;
    j["iterations"] = iterations;
    j["final_value"] = final_value;
    j["el_residual"] = el_residual;
    j["constraint_max"] = constraint_max;
    j["components"] = nlohmann::json::array();
    for (const auto& c : components) {
        nlohmann::json jc;
        jc["id"] = c.id;
        jc["omega"] = c.omega;
        jc["spread"] = c.spread;
        jc["cells"] = c.cells;
        j["components"].push_back(jc);
    }
    return j.dump(2);
}

namespace {

double grad_norm(const std::array<double, 2>& g, int dim) {
    double n = 0.0;
    for (int k = 0; k < dim; ++k) n += g[k] * g[k];
    return std::sqrt(n);
}

double vec_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

/// |A(coef(p)) p - b| / |b| for a frozen-coefficient assembly.
double frozen_residual(const StructuredMesh& mesh, const std::vector<SymTensor>& tensors,
                       double r, const std::vector<double>& b, const PressureField& p) {
    const Csr a = assemble_stiffness(mesh, tensors, r);
    std::vector<double> ap;
    a.matvec(p.nodes(), ap);
    std::vector<double> res(ap.size());
    for (std::size_t i = 0; i < ap.size(); ++i) res[i] = ap[i] - b[i];
    // project out the gauge component
    double mean = 0.0;
    for (double v : res) mean += v;
    mean /= res.size();
    for (double& v : res) v -= mean;
    return vec_norm(res) / std::max(vec_norm(b), 1e-300);
}

struct PicardOptions {
    int max_iter = 400;
    double rel_tol = 1e-12;
};

/// Damped lagged-coefficient (Picard) iteration for quasi-linear Poisson
/// problems: solves A(coef(p_k)) p = b repeatedly until p is a fixed
/// point. coef_of(p) returns per-cell tensors; r is added by the
/// assembly. Damping halves the update whenever the frozen-operator
/// residual would not decrease.
PressureField picard_fixed_point(const StructuredMesh& mesh, const SourceField& s, double r,
                                 const std::function<std::vector<SymTensor>(const PressureField&)>& coef_of,
                                 int* iterations_out, double* residual_out,
                                 const PicardOptions& opts = {}) {
    const std::vector<double> b = node_load(mesh, s);
    // start from the r-only (or epsilon-regularized) linear solve
    PermeabilityField zero_perm = PermeabilityField::zero(mesh);
    const double r_eff = r > 0.0 ? r : 1.0;
    PressureField p = assemble_and_solve(mesh, zero_perm, r_eff, s);

    double res = frozen_residual(mesh, coef_of(p), r, b, p);
    int it = 0;
    for (; it < opts.max_iter && res > opts.rel_tol; ++it) {
        const std::vector<SymTensor> tensors = coef_of(p);
        const Csr a = assemble_stiffness(mesh, tensors, r);
        std::vector<double> x = p.nodes();
        CgOptions cg;
        cg.rel_tol = 1e-14;
        cg_solve_zero_mean(a, b, x, cg);

        double step = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 45; ++halving) {
            std::vector<double> trial(x.size());
            for (std::size_t i = 0; i < x.size(); ++i)
                trial[i] = p.nodes()[i] + step * (x[i] - p.nodes()[i]);
            PressureField p_trial(mesh, std::move(trial));
            p_trial.subtract_mean();
            const double res_trial = frozen_residual(mesh, coef_of(p_trial), r, b, p_trial);
            if (res_trial < res) {
                p = std::move(p_trial);
                res = res_trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            std::ostringstream os;
            os << "stationary solve: line-search failure at iteration " << it
               << " (residual " << res << ")";
            throw SolverError(os.str());
        }
    }
    if (res > opts.rel_tol * 10.0 && res > 1e-10)
        throw SolverError("stationary solve: no convergence (residual " +
                          format_double(res) + ")");
    if (iterations_out) *iterations_out = it;
    if (residual_out) *residual_out = res;
    return p;
}

std::vector<SupportComponent> support_components(const StructuredMesh& mesh,
                                                 const std::vector<double>& rho,
                                                 const PressureField& p) {
    const int nc = mesh.num_cells();
    std::vector<int> label(nc, -1);
    std::vector<SupportComponent> out;
    const int cx = mesh.cells[0];
    const int cy = mesh.dim == 2 ? mesh.cells[1] : 1;
    int next = 0;
    for (int start = 0; start < nc; ++start) {
        if (rho[start] <= 1e-12 || label[start] >= 0) continue;
        // flood fill with 4-neighbor adjacency
        std::deque<int> queue = {start};
        label[start] = next;
        std::vector<int> members;
        while (!queue.empty()) {
            const int c = queue.front();
            queue.pop_front();
            members.push_back(c);
            const int ix = c % cx;
            const int iy = c / cx;
            auto visit = [&](int jx, int jy) {
                if (jx < 0 || jx >= cx || jy < 0 || jy >= cy) return;
                const int cc = jy * cx + jx;
                if (rho[cc] <= 1e-12 || label[cc] >= 0) return;
                label[cc] = next;
                queue.push_back(cc);
            };
            visit(ix - 1, iy);
            visit(ix + 1, iy);
            if (mesh.dim == 2) {
                visit(ix, iy - 1);
                visit(ix, iy + 1);
            }
        }
        SupportComponent comp;
        comp.id = next;
        comp.cells = static_cast<int>(members.size());
        double lo = 0.0, hi = 0.0, sum = 0.0;
        bool first = true;
        for (int c : members) {
            const double n = grad_norm(p.cell_gradient(c), mesh.dim);
            if (first) {
                lo = hi = n;
                first = false;
            }
            lo = std::min(lo, n);
            hi = std::max(hi, n);
            sum += n;
        }
        comp.omega = sum / comp.cells;
        comp.spread = hi - lo;
        out.push_back(comp);
        ++next;
    }
    return out;
}

} // namespace

PressureField plap_minimize(const StructuredMesh& mesh, const DensityField& rho,
                            const SourceField& s, const ModelParams& params,
                            StationaryReport* report) {
    params.validate();
    rho.validate();
    if (!(params.gamma > 1.0)) throw ConfigError("plap_minimize: gamma must be > 1");
    if (!(params.r > 0.0)) {
        bool positive = true;
        for (double v : rho.cell_values) positive = positive && v > 0.0;
        if (!positive)
            throw ConfigError("plap_minimize: r = 0 requires uniformly positive rho");
    }
    const double expo = 2.0 / (params.gamma - 1.0);
    const double nu_factor = std::pow(1.0 / params.nu, 1.0 / (params.gamma - 1.0));

    auto coef_of = [&](const PressureField& p) {
        std::vector<SymTensor> out(mesh.num_cells(), SymTensor::zero(mesh.dim));
        for (int c = 0; c < mesh.num_cells(); ++c) {
            const double g = grad_norm(p.cell_gradient(c), mesh.dim);
            const double a = nu_factor * rho.cell_values[c] * std::pow(g, expo);
            for (int k = 0; k < mesh.dim; ++k) out[c].set(k, k, a);
        }
        return out;
    };

    int iters = 0;
    double res = 0.0;
    PressureField p = picard_fixed_point(mesh, s, params.r, coef_of, &iters, &res);
    if (report) {
        report->iterations = iters;
        report->el_residual = res;
        report->constraint_max = 0.0;
        // honest functional value (assembly quadrature for the gradient terms)
        const std::vector<SymTensor> tensors = coef_of(p);
        double value = 0.5 * params.r * dirichlet_quadratic_form(mesh, p);
        // nonlinear term: coef/|coef-power| bookkeeping; integrate per cell
        const double c_gamma = (params.gamma - 1.0) / (2.0 * params.gamma);
        for (int c = 0; c < mesh.num_cells(); ++c) {
            const double g = grad_norm(p.cell_gradient(c), mesh.dim);
            value += mesh.cell_volume() * c_gamma * nu_factor * rho.cell_values[c] *
                     std::pow(g, 2.0 * params.gamma / (params.gamma - 1.0));
        }
        value -= source_pairing(mesh, s, p);
        report->final_value = value;
        report->components = support_components(mesh, rho.cell_values, p);
    }
    return p;
}

double plap_el_residual(const StructuredMesh& mesh, const DensityField& rho,
                        const SourceField& s, const ModelParams& params,
                        const PressureField& p) {
    const double expo = 2.0 / (params.gamma - 1.0);
    const double nu_factor = std::pow(1.0 / params.nu, 1.0 / (params.gamma - 1.0));
    std::vector<SymTensor> tensors(mesh.num_cells(), SymTensor::zero(mesh.dim));
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const double g = grad_norm(p.cell_gradient(c), mesh.dim);
        const double a = nu_factor * rho.cell_values[c] * std::pow(g, expo);
        for (int k = 0; k < mesh.dim; ++k) tensors[c].set(k, k, a);
    }
    return frozen_residual(mesh, tensors, params.r, node_load(mesh, s), p);
}

PressureField constrained_minimize_gamma1(const StructuredMesh& mesh, const DensityField& rho,
                                          const SourceField& s, const ModelParams& params,
                                          MultiplierField* multiplier_out,
                                          StationaryReport* report) {
    params.validate();
    rho.validate();
    if (params.gamma != 1.0) throw ConfigError("constrained_minimize_gamma1: gamma must be 1");
    if (!(params.r > 0.0)) throw ConfigError("constrained_minimize_gamma1: r must be positive");
    const double nu = params.nu;
    if (!(nu > 0.0)) throw ConfigError("constrained_minimize_gamma1: nu must be positive");

    const int nc = mesh.num_cells();
    const std::vector<double> b = node_load(mesh, s);
    std::vector<double> m(nc, 0.0); // constraint multiplier rho a^2

    auto solve_with = [&](const std::vector<double>& mult, std::vector<double>& warm) {
        std::vector<SymTensor> tensors(nc, SymTensor::zero(mesh.dim));
        for (int c = 0; c < nc; ++c)
            for (int k = 0; k < mesh.dim; ++k) tensors[c].set(k, k, mult[c]);
        const Csr a = assemble_stiffness(mesh, tensors, params.r);
        CgOptions cg;
        cg.rel_tol = 1e-13;
        cg_solve_zero_mean(a, b, warm, cg);
        PressureField p(mesh, warm);
        p.subtract_mean();
        return p;
    };

    std::vector<double> warm(mesh.num_nodes(), 0.0);
    PressureField p = solve_with(m, warm);

    double tau = params.r / nu;
    double prev_err = 0.0;
    int it = 0;
    const int max_iter = 20000;
    for (; it < max_iter; ++it) {
        // feasibility everywhere plus sharp complementarity: cells holding
        // a multiplier must sit on the constraint
        double viol = 0.0, active_gap = 0.0, m_max = 0.0;
        for (int c = 0; c < nc; ++c) m_max = std::max(m_max, m[c]);
        for (int c = 0; c < nc; ++c) {
            const double g = grad_norm(p.cell_gradient(c), mesh.dim);
            viol = std::max(viol, g * g - nu);
            if (m[c] > 1e-10 * std::max(m_max, 1.0))
                active_gap = std::max(active_gap, nu - g * g);
        }
        const double err = std::max(viol, active_gap);
        if (viol <= 1e-9 && active_gap <= 1e-7) break;
        if (it > 0) {
            if (err < prev_err) tau *= 1.2;
            else tau *= 0.5;
            tau = std::clamp(tau, 1e-6 * params.r / nu, 1e6 * params.r / nu);
        }
        prev_err = err;
        for (int c = 0; c < nc; ++c) {
            const double g = grad_norm(p.cell_gradient(c), mesh.dim);
            m[c] = std::max(0.0, m[c] + tau * (g * g - nu));
        }
        p = solve_with(m, warm);
    }
    if (it == max_iter)
        throw SolverError("constrained_minimize_gamma1: no convergence (possibly infeasible)");

    if (multiplier_out) {
        multiplier_out->mesh = mesh;
        multiplier_out->a_squared.assign(nc, 0.0);
        for (int c = 0; c < nc; ++c)
            multiplier_out->a_squared[c] =
                rho.cell_values[c] > 1e-12 ? m[c] / rho.cell_values[c] : 0.0;
    }
    if (report) {
        report->iterations = it;
        double cmax = 0.0;
        for (int c = 0; c < nc; ++c) {
            const double g = grad_norm(p.cell_gradient(c), mesh.dim);
            cmax = std::max(cmax, g * g);
        }
        report->constraint_max = cmax;
        report->final_value =
            0.5 * params.r * dirichlet_quadratic_form(mesh, p) - source_pairing(mesh, s, p);
        std::vector<SymTensor> tensors(nc, SymTensor::zero(mesh.dim));
        for (int c = 0; c < nc; ++c)
            for (int k = 0; k < mesh.dim; ++k) tensors[c].set(k, k, m[c]);
        report->el_residual = frozen_residual(mesh, tensors, params.r, b, p);
        report->components = support_components(mesh, rho.cell_values, p);
    }
    return p;
}

PressureField scalar_stationary_minimize(const StructuredMesh& mesh, const AngularDensity& rho_dir,
                                         const SourceField& s, const ModelParams& params,
                                         StationaryReport* report) {
    params.validate();
    rho_dir.validate();
    if (!(params.gamma > 1.0)) throw ConfigError("scalar_stationary_minimize: gamma must be > 1");
    if (!(params.r > 0.0)) {
        for (const auto& row : rho_dir.cell_weights) {
            double total = 0.0;
            for (double w : row) total += w;
            if (!(total > 0.0))
                throw ConfigError(
                    "scalar_stationary_minimize: r = 0 requires uniformly positive density");
        }
    }
    const double expo = 2.0 / (params.gamma - 1.0);
    const double nu_factor = std::pow(1.0 / params.nu, 1.0 / (params.gamma - 1.0));
    // small floor keeps the operator elliptic where the directional
    // gradients vanish and r = 0
    const double floor_eps = params.r > 0.0 ? 0.0 : 1e-12;

    auto coef_of = [&](const PressureField& p) {
        std::vector<SymTensor> out(mesh.num_cells(), SymTensor::zero(mesh.dim));
        for (int c = 0; c < mesh.num_cells(); ++c) {
            const auto g = p.cell_gradient(c);
            SymTensor t(mesh.dim);
            for (std::size_t k = 0; k < rho_dir.directions.size(); ++k) {
                const auto& th = rho_dir.directions[k];
                double tg = 0.0;
                for (int ax = 0; ax < mesh.dim; ++ax) tg += th[ax] * g[ax];
                const double coef =
                    rho_dir.cell_weights[c][k] * nu_factor * std::pow(std::abs(tg), expo);
                for (int i = 0; i < mesh.dim; ++i)
                    for (int j = i; j < mesh.dim; ++j)
                        t.set(i, j, t(i, j) + coef * th[i] * th[j]);
            }
            for (int i = 0; i < mesh.dim; ++i) t.set(i, i, t(i, i) + floor_eps);
            out[c] = t;
        }
        return out;
    };

    int iters = 0;
    double res = 0.0;
    PressureField p = picard_fixed_point(mesh, s, params.r, coef_of, &iters, &res);
    if (report) {
        report->iterations = iters;
        report->el_residual = res;
        report->constraint_max = 0.0;
        const double c_gamma = (params.gamma - 1.0) / (2.0 * params.gamma);
        double value = 0.5 * params.r * dirichlet_quadratic_form(mesh, p);
        for (int c = 0; c < mesh.num_cells(); ++c) {
            const auto g = p.cell_gradient(c);
            for (std::size_t k = 0; k < rho_dir.directions.size(); ++k) {
                double tg = 0.0;
                for (int ax = 0; ax < mesh.dim; ++ax) tg += rho_dir.directions[k][ax] * g[ax];
                value += mesh.cell_volume() * rho_dir.cell_weights[c][k] * c_gamma * nu_factor *
                         std::pow(std::abs(tg), 2.0 * params.gamma / (params.gamma - 1.0));
            }
        }
        value -= source_pairing(mesh, s, p);
        report->final_value = value;
    }
    return p;
}

BranchAntiderivative::BranchAntiderivative(const ModelParams& params, double k, bool upper_branch)
    : params_(params), k_(k), upper_(upper_branch) {
    knots_ = {0.0};
    const std::vector<double> roots = branch_solve(0.0, k_, params_);
    if (roots.empty())
        throw ConfigError("BranchAntiderivative: branch undefined at v = 0");
    u_ = {upper_ ? roots.back() : roots.front()};
    big_u_ = {0.0};
}

double BranchAntiderivative::slope(double v) const {
    const std::vector<double> roots = branch_solve(v, k_, params_);
    if (roots.empty())
        throw SolverError("BranchAntiderivative: branch undefined at v = " + format_double(v));
    return upper_ ? roots.back() : roots.front();
}

void BranchAntiderivative::extend_to(double v) const {
    while (knots_.back() < v) {
        const double a = knots_.back();
        const double step = std::max(1e-3, 0.25 * std::max(a, 1.0));
        const double bpt = a + step;
        // adaptive Simpson on [a, b]
        std::function<double(double, double, double, double, double, double, int)> simpson =
            [&](double lo, double hi, double flo, double fmid, double fhi, double tol,
                int depth) -> double {
            const double mid = 0.5 * (lo + hi);
            const double lmid = 0.5 * (lo + mid);
            const double rmid = 0.5 * (mid + hi);
            const double fl = slope(lmid);
            const double fr = slope(rmid);
            const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
            const double left = (mid - lo) / 6.0 * (flo + 4.0 * fl + fmid);
            const double right = (hi - mid) / 6.0 * (fmid + 4.0 * fr + fhi);
            if (depth > 24 || std::abs(left + right - whole) < 15.0 * tol)
                return left + right + (left + right - whole) / 15.0;
            return simpson(lo, mid, flo, fl, fmid, 0.5 * tol, depth + 1) +
                   simpson(mid, hi, fmid, fr, fhi, 0.5 * tol, depth + 1);
        };
        const double fa = u_.back();
        const double fb = slope(bpt);
        const double fm = slope(0.5 * (a + bpt));
        const double seg = simpson(a, bpt, fa, fm, fb, 1e-10, 0);
        knots_.push_back(bpt);
        u_.push_back(fb);
        big_u_.push_back(big_u_.back() + seg);
    }
}

double BranchAntiderivative::value(double v) const {
    if (v < 0.0) throw ConfigError("BranchAntiderivative: v must be >= 0");
    if (v == 0.0) return 0.0;
    extend_to(v);
    // locate the knot interval
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), v);
    std::size_t hi = std::min<std::size_t>(it - knots_.begin(), knots_.size() - 1);
    if (hi == 0) hi = 1;
    const std::size_t lo = hi - 1;
    const double h = knots_[hi] - knots_[lo];
    if (h <= 0.0) return big_u_[lo];
    const double t = (v - knots_[lo]) / h;
    // cubic Hermite with exact slopes u at the knots
    const double h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
    const double h10 = t * (1.0 - t) * (1.0 - t);
    const double h01 = t * t * (3.0 - 2.0 * t);
    const double h11 = t * t * (t - 1.0);
    return h00 * big_u_[lo] + h10 * h * u_[lo] + h01 * big_u_[hi] + h11 * h * u_[hi];
}

PressureField fr_functional_minimize(const StructuredMesh& mesh,
                                     const StationaryMeasureSpec& spec, const SourceField& s,
                                     const ModelParams& params, StationaryReport* report) {
    params.validate();
    spec.validate(mesh.dim);
    if (!(params.gamma > 1.0)) throw ConfigError("fr_functional_minimize: gamma must be > 1");
    if (spec.k < 0.0) throw ConfigError("fr_functional_minimize: K must be >= 0");

    // u(v) evaluated through the branch equation; the deposited stationary
    // permeability P(p) = sum_j w_j u(v_j) A_j / vol recreates the
    // fr_stationary_measure deposition exactly.
    auto coef_of = [&](const PressureField& p) {
        std::vector<SymTensor> out(mesh.num_cells(), SymTensor::zero(mesh.dim));
        const double inv_vol = 1.0 / mesh.cell_volume();
        for (const auto& sa : spec.atoms) {
            const auto g = p.gradient_at(sa.x.data());
            const double v = sa.a.quad(g.data());
            const std::vector<double> roots = branch_solve(std::max(0.0, v), spec.k, params);
            if (roots.empty())
                throw SolverError("fr_functional_minimize: K left the branch domain");
            const double u =
                spec.branch == StationaryMeasureSpec::Branch::Upper ? roots.back() : roots.front();
            SymTensor t = sa.a;
            t *= sa.w * u * inv_vol;
            out[mesh.locate_cell(sa.x.data())] += t;
        }
        return out;
    };

    int iters = 0;
    double res = 0.0;
    PressureField p = picard_fixed_point(mesh, s, params.r, coef_of, &iters, &res);

    if (report) {
        report->iterations = iters;
        report->el_residual = res;
        report->constraint_max = 0.0;
        BranchAntiderivative big_u(params, spec.k,
                                   spec.branch == StationaryMeasureSpec::Branch::Upper);
        double value = 0.5 * params.r * dirichlet_quadratic_form(mesh, p);
        for (const auto& sa : spec.atoms) {
            const auto g = p.gradient_at(sa.x.data());
            const double v = std::max(0.0, sa.a.quad(g.data()));
            value += 0.5 * sa.w * big_u.value(v);
        }
        value -= source_pairing(mesh, s, p);
        report->final_value = value;
    }
    return p;
}

WassEquilibriumReport verify_wass_equilibrium(const PressureField& p, const DensityField& rho,
                                              double tol) {
    rho.validate();
    if (!(rho.mesh == p.mesh()))
        throw ConfigError("verify_wass_equilibrium: mesh mismatch");
    WassEquilibriumReport out;
    out.components = support_components(p.mesh(), rho.cell_values, p);
    out.is_equilibrium = true;
    for (const auto& c : out.components)
        if (c.spread > tol) out.is_equilibrium = false;
    return out;
}

} // namespace mesoflow
