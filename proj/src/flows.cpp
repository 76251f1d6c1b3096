#include "mesoflow/flows.hpp"

#include <algorithm>
#include <cmath>

#include "mesoflow/errors.hpp"
#include "mesoflow/io.hpp"
#include "mesoflow/parallel.hpp"
#include "mesoflow/detail/flow_driver.hpp"

namespace mesoflow {

void MonokineticState::validate() const {
    mesh.validate();
    if (static_cast<int>(rho.size()) != mesh.num_cells() ||
        static_cast<int>(chat.size()) != mesh.num_cells())
        throw ConfigError("monokinetic state: field sizes mismatch");
    for (double v : rho)
        if (v < 0.0 || !std::isfinite(v)) throw ConfigError("monokinetic state: rho must be >= 0");
    for (const auto& t : chat)
        if (min_eigenvalue(t) < -1e-10) throw ConfigError("monokinetic state: Chat not PSD");
    if (std::abs(mass() - 1.0) > 1e-12)
        throw ConfigError("monokinetic state: rho must have unit mass");
}

double MonokineticState::mass() const {
    double s = 0.0;
    for (double v : rho) s += v;
    return s * mesh.cell_volume();
}

void MonokineticState::renormalize_mass() {
    const double m = mass();
    if (!(m > 0.0)) throw SolverError("monokinetic state: mass became non-positive");
    for (double& v : rho) v /= m;
}

namespace {

double norm_power(const SymTensor& c, double expo) {
    const double n = c.frobenius_norm();
    if (n < 1e-14) return 0.0;
    return std::pow(n, expo);
}

void clamp_to_domain(const StructuredMesh& mesh, double* x) {
    for (int a = 0; a < mesh.dim; ++a)
        x[a] = std::clamp(x[a], mesh.origin[a], mesh.origin[a] + mesh.extent[a]);
}

} // namespace

ParticleEnsemble step_reduced(const ParticleEnsemble& mu, const PressureField& p,
                              const ModelParams& params, double dt,
                              std::vector<double>* density_diag) {
    if (dt < 0.0) throw ConfigError("step_reduced: dt must be >= 0");
    ParticleEnsemble out = mu;
    parallel_for_chunks(out.atoms.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Atom& a = out.atoms[i];
            const auto g = p.gradient_at(a.x.data());
            std::vector<double> gv(g.begin(), g.begin() + mu.mesh.dim);
            SymTensor drive = SymTensor::outer(gv);
            drive -= power_map(a.c, params);
            SymTensor c_new = a.c;
            drive *= dt;
            c_new += drive;
            if (!c_new.all_finite()) throw SolverError("step_reduced: non-finite tensor update");
            a.c = project_psd(c_new);
        }
    });
    if (density_diag) {
        for (std::size_t i = 0; i < out.atoms.size(); ++i) {
            const double factor =
                params.nu * (params.gamma - 1.0) * norm_power(mu.atoms[i].c, params.gamma - 2.0);
            (*density_diag)[i] *= std::exp(dt * factor);
        }
    }
    return out;
}

ParticleEnsemble step_full(const ParticleEnsemble& mu, const PressureField& p,
                           const ModelParams& params, double dt,
                           std::vector<double>* density_diag) {
    if (dt < 0.0) throw ConfigError("step_full: dt must be >= 0");
    const int d = mu.mesh.dim;
    ParticleEnsemble out = mu;
    parallel_for_chunks(out.atoms.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Atom& a = out.atoms[i];
            const auto g = p.gradient_at(a.x.data());
            const SymTensor hess = p.hessian_at(a.x.data());

            // position drift 2 D^2p C grad p, evaluated at the old position
            const auto cg = a.c.apply(g.data());
            const auto drift = hess.apply(cg.data());
            for (int k = 0; k < d; ++k) a.x[k] += dt * 2.0 * drift[k];
            clamp_to_domain(mu.mesh, a.x.data());

            std::vector<double> gv(g.begin(), g.begin() + d);
            SymTensor drive = SymTensor::outer(gv);
            drive -= power_map(a.c, params);
            drive *= dt;
            SymTensor c_new = a.c;
            c_new += drive;
            if (!c_new.all_finite()) throw SolverError("step_full: non-finite tensor update");
            a.c = project_psd(c_new);
        }
    });
    if (density_diag) {
        for (std::size_t i = 0; i < mu.atoms.size(); ++i) {
            const Atom& a = mu.atoms[i];
            const auto g = p.gradient_at(a.x.data());
            const SymTensor hess = p.hessian_at(a.x.data());
            const auto gl = p.grad_laplacian_at(a.x.data());
            const auto cg = a.c.apply(g.data());
            // Laplacian of grad p . C grad p = 2 grad(lap p) . C grad p + 2 tr(HCH)
            double lap_quad = 0.0;
            for (int k = 0; k < d; ++k) lap_quad += 2.0 * gl[k] * cg[k];
            for (int k = 0; k < d; ++k) {
                double col[kMaxDim];
                for (int r = 0; r < d; ++r) col[r] = hess(r, k);
                lap_quad += 2.0 * a.c.quad(col);
            }
            const double metabolic =
                params.nu * (params.gamma - 1.0) * norm_power(a.c, params.gamma - 2.0);
            (*density_diag)[i] *= std::exp(-dt * (lap_quad - metabolic));
        }
    }
    return out;
}

MonokineticState step_monokinetic(const MonokineticState& state, const PressureField& p,
                                  const ModelParams& params, double dt) {
    if (dt < 0.0) throw ConfigError("step_monokinetic: dt must be >= 0");
    const StructuredMesh& mesh = state.mesh;
    const int nc = mesh.num_cells();
    MonokineticState out = state;

    // transport potential per cell
    std::vector<double> phi(nc);
    for (int c = 0; c < nc; ++c) {
        const auto g = p.cell_gradient(c);
        phi[c] = state.chat[c].quad(g.data()) -
                 (params.nu / params.gamma) *
                     std::pow(state.chat[c].frobenius_norm(), params.gamma);
    }

    // CFL check over interior faces
    double vmax = 0.0;
    auto face_velocity = [&](int c_lo, int c_hi, double h) {
        return (phi[c_hi] - phi[c_lo]) / h;
    };
    const int cx = mesh.cells[0];
    const int cy = mesh.dim == 2 ? mesh.cells[1] : 1;
    for (int iy = 0; iy < cy; ++iy)
        for (int ix = 0; ix + 1 < cx; ++ix)
            vmax = std::max(vmax, std::abs(face_velocity(mesh.cell_index(ix, iy),
                                                         mesh.cell_index(ix + 1, iy), mesh.h(0))));
    if (mesh.dim == 2)
        for (int iy = 0; iy + 1 < cy; ++iy)
            for (int ix = 0; ix < cx; ++ix)
                vmax = std::max(vmax,
                                std::abs(face_velocity(mesh.cell_index(ix, iy),
                                                       mesh.cell_index(ix, iy + 1), mesh.h(1))));
    const double hmin = mesh.dim == 2 ? std::min(mesh.h(0), mesh.h(1)) : mesh.h(0);
    if (vmax * dt / hmin > 1.0)
        throw CflError("step_monokinetic: CFL violation", 0.9 * hmin / vmax);

    // conservative upwind update of rho, zero flux through the boundary
    std::vector<double> rho_new = state.rho;
    auto sweep = [&](int axis) {
        const double h = mesh.h(axis);
        const int n_lines = axis == 0 ? cy : cx;
        const int n_faces = (axis == 0 ? cx : cy) - 1;
        for (int line = 0; line < n_lines; ++line) {
            for (int f = 0; f < n_faces; ++f) {
                const int c_lo = axis == 0 ? mesh.cell_index(f, line) : mesh.cell_index(line, f);
                const int c_hi =
                    axis == 0 ? mesh.cell_index(f + 1, line) : mesh.cell_index(line, f + 1);
                const double v = face_velocity(c_lo, c_hi, h);
                const double flux = v > 0.0 ? state.rho[c_lo] * v : state.rho[c_hi] * v;
                rho_new[c_lo] -= dt / h * flux;
                rho_new[c_hi] += dt / h * flux;
            }
        }
    };
    sweep(0);
    if (mesh.dim == 2) sweep(1);
    for (double& v : rho_new) v = std::max(0.0, v);
    out.rho = std::move(rho_new);
    // the conservative update keeps the mass to roundoff; pin it exactly
    out.renormalize_mass();

    // L2 flow of Chat (old rho and p)
    for (int c = 0; c < nc; ++c) {
        const auto g = p.cell_gradient(c);
        std::vector<double> gv(g.begin(), g.begin() + mesh.dim);
        SymTensor drive = SymTensor::outer(gv);
        drive -= power_map(state.chat[c], params);
        drive *= dt * state.rho[c];
        SymTensor c_new = state.chat[c];
        c_new += drive;
        if (!c_new.all_finite())
            throw SolverError("step_monokinetic: non-finite tensor update");
        out.chat[c] = project_psd(c_new);
    }
    return out;
}

ScalarEnsemble step_scalar(const ScalarEnsemble& eta, const PressureField& p,
                           const ModelParams& params, double dt) {
    if (dt < 0.0) throw ConfigError("step_scalar: dt must be >= 0");
    ScalarEnsemble out = eta;
    for (auto& a : out.atoms) {
        const auto g = p.gradient_at(a.x.data());
        double tg = 0.0;
        for (int k = 0; k < eta.mesh.dim; ++k) tg += a.theta[k] * g[k];
        double met;
        if (a.c > 0.0) {
            met = params.nu * std::pow(a.c, params.gamma - 1.0);
        } else if (params.gamma > 1.0) {
            met = 0.0;
        } else if (params.gamma == 1.0) {
            met = params.nu;
        } else {
            continue; // gamma < 1: zero conductivity stays pruned
        }
        const double c_new = a.c + dt * (tg * tg - met);
        if (!std::isfinite(c_new)) throw SolverError("step_scalar: non-finite update");
        a.c = std::max(0.0, c_new);
    }
    return out;
}

double reduced_equilibrium_residual(const ParticleEnsemble& mu, const PressureField& p,
                                    const ModelParams& params) {
    double worst = 0.0;
    for (const auto& a : mu.atoms) {
        const auto g = p.gradient_at(a.x.data());
        std::vector<double> gv(g.begin(), g.begin() + mu.mesh.dim);
        SymTensor res = SymTensor::outer(gv);
        res -= power_map(a.c, params);
        worst = std::max(worst, res.frobenius_norm());
    }
    return worst;
}

EnergyBreakdown energy_total_monokinetic(const MonokineticState& state,
                                         const ModelParams& params, const SourceField& s,
                                         PressureField* pressure_out, const CgOptions& opts) {
    PermeabilityField perm = PermeabilityField::zero(state.mesh);
    for (int c = 0; c < state.mesh.num_cells(); ++c) {
        perm.cell_tensors[c] = state.chat[c];
        perm.cell_tensors[c] *= state.rho[c];
    }
    const PermeabilityField sane = perm.psd_sanitized();
    PressureField p = assemble_and_solve(state.mesh, sane, params.r, s, nullptr, opts);
    EnergyBreakdown e;
    e.kinetic = kinetic_quadratic_form(state.mesh, sane.cell_tensors, p);
    e.background = params.r * dirichlet_quadratic_form(state.mesh, p);
    const double vol = state.mesh.cell_volume();
    for (int c = 0; c < state.mesh.num_cells(); ++c)
        e.metabolic += vol * state.rho[c] * (params.nu / params.gamma) *
                       std::pow(state.chat[c].frobenius_norm(), params.gamma);
    e.source_pairing = source_pairing(state.mesh, s, p);
    e.total = e.kinetic + e.metabolic + e.background;
    if (pressure_out) *pressure_out = std::move(p);
    return e;
}

namespace {

using detail::run_flow_loop;

double particle_dissipation_reduced(const ParticleEnsemble& mu, const PressureField& p,
                                    const ModelParams& params) {
    double s = 0.0;
    for (const auto& a : mu.atoms) {
        const auto g = p.gradient_at(a.x.data());
        std::vector<double> gv(g.begin(), g.begin() + mu.mesh.dim);
        SymTensor res = SymTensor::outer(gv);
        res -= power_map(a.c, params);
        const double n = res.frobenius_norm();
        s += a.w * n * n;
    }
    return -s;
}

double particle_dissipation_full(const ParticleEnsemble& mu, const PressureField& p,
                                 const ModelParams& params) {
    double s = 0.0;
    for (const auto& a : mu.atoms) {
        const auto g = p.gradient_at(a.x.data());
        const SymTensor hess = p.hessian_at(a.x.data());
        const auto cg = a.c.apply(g.data());
        const auto drift = hess.apply(cg.data());
        double drift2 = 0.0;
        for (int k = 0; k < mu.mesh.dim; ++k) drift2 += drift[k] * drift[k];
        std::vector<double> gv(g.begin(), g.begin() + mu.mesh.dim);
        SymTensor res = SymTensor::outer(gv);
        res -= power_map(a.c, params);
        const double n = res.frobenius_norm();
        s += a.w * (4.0 * drift2 + n * n);
    }
    return -s;
}

} // namespace

namespace {

/// Ensemble plus the along-characteristics density diagnostic; bundled so
/// rejected trial steps discard both consistently.
struct DiagState {
    ParticleEnsemble ens;
    std::vector<double> diag;
};

FlowRunResult<ParticleEnsemble> run_particle_flow(const ParticleEnsemble& mu0,
                                                  const ModelParams& params,
                                                  const SourceField& s,
                                                  const FlowSchedule& schedule, bool full) {
    mu0.validate();
    params.validate();
    DiagState s0{mu0, std::vector<double>(mu0.atoms.size(), 1.0)};
    auto result = run_flow_loop<DiagState>(
        s0, schedule,
        [&](const DiagState& st, PressureField* p) { return energy_total(st.ens, params, s, p); },
        [&](const DiagState& st, const PressureField& p, double dt) {
            DiagState trial = st;
            trial.ens = full ? step_full(st.ens, p, params, dt, &trial.diag)
                             : step_reduced(st.ens, p, params, dt, &trial.diag);
            return trial;
        },
        [&](const DiagState& st, const PressureField& p) {
            return reduced_equilibrium_residual(st.ens, p, params);
        },
        [&](const DiagState& st, const PressureField& p) {
            return full ? particle_dissipation_full(st.ens, p, params)
                        : particle_dissipation_reduced(st.ens, p, params);
        });
    FlowRunResult<ParticleEnsemble> out;
    out.final_state = std::move(result.final_state.ens);
    out.final_pressure = std::move(result.final_pressure);
    out.log = std::move(result.log);
    out.density_diag = std::move(result.final_state.diag);
    out.accepted_steps = result.accepted_steps;
    for (auto& [step, st] : result.snapshots)
        out.snapshots.emplace_back(step, std::move(st.ens));
    return out;
}

} // namespace

FlowRunResult<ParticleEnsemble> run_reduced_flow(const ParticleEnsemble& mu0,
                                                 const ModelParams& params,
                                                 const SourceField& s,
                                                 const FlowSchedule& schedule) {
    return run_particle_flow(mu0, params, s, schedule, false);
}

FlowRunResult<ParticleEnsemble> run_full_flow(const ParticleEnsemble& mu0,
                                              const ModelParams& params, const SourceField& s,
                                              const FlowSchedule& schedule) {
    return run_particle_flow(mu0, params, s, schedule, true);
}

FlowRunResult<MonokineticState> run_monokinetic_flow(const MonokineticState& state0,
                                                     const ModelParams& params,
                                                     const SourceField& s,
                                                     const FlowSchedule& schedule) {
    state0.validate();
    params.validate();
    return run_flow_loop<MonokineticState>(
        state0, schedule,
        [&](const MonokineticState& st, PressureField* p) {
            return energy_total_monokinetic(st, params, s, p);
        },
        [&](const MonokineticState& st, const PressureField& p, double dt) {
            return step_monokinetic(st, p, params, dt);
        },
        [&](const MonokineticState& st, const PressureField& p) {
            double worst = 0.0;
            for (int c = 0; c < st.mesh.num_cells(); ++c) {
                if (st.rho[c] <= 1e-12) continue;
                const auto g = p.cell_gradient(c);
                std::vector<double> gv(g.begin(), g.begin() + st.mesh.dim);
                SymTensor res = SymTensor::outer(gv);
                res -= power_map(st.chat[c], params);
                worst = std::max(worst, res.frobenius_norm());
            }
            return worst;
        },
        [&](const MonokineticState& st, const PressureField& p) {
            double sum = 0.0;
            const double vol = st.mesh.cell_volume();
            for (int c = 0; c < st.mesh.num_cells(); ++c) {
                const auto g = p.cell_gradient(c);
                std::vector<double> gv(g.begin(), g.begin() + st.mesh.dim);
                SymTensor res = SymTensor::outer(gv);
                res -= power_map(st.chat[c], params);
                const double n = res.frobenius_norm();
                sum += vol * st.rho[c] * n * n;
            }
            return -sum;
        });
}

FlowRunResult<ScalarEnsemble> run_scalar_flow(const ScalarEnsemble& eta0,
                                              const ModelParams& params, const SourceField& s,
                                              const FlowSchedule& schedule) {
    eta0.validate();
    params.validate();
    auto scalar_residual = [&](const ScalarAtom& a, const PressureField& p) {
        const auto g = p.gradient_at(a.x.data());
        double tg = 0.0;
        for (int k = 0; k < eta0.mesh.dim; ++k) tg += a.theta[k] * g[k];
        const double kin = tg * tg;
        if (a.c > 0.0) return std::abs(kin - params.nu * std::pow(a.c, params.gamma - 1.0));
        if (params.gamma > 1.0) return kin;
        if (params.gamma == 1.0) return std::max(kin - params.nu, 0.0);
        return 0.0;
    };
    return run_flow_loop<ScalarEnsemble>(
        eta0, schedule,
        [&](const ScalarEnsemble& m, PressureField* p) {
            return energy_total_scalar(m, params, s, p);
        },
        [&](const ScalarEnsemble& m, const PressureField& p, double dt) {
            return step_scalar(m, p, params, dt);
        },
        [&](const ScalarEnsemble& m, const PressureField& p) {
            double worst = 0.0;
            for (const auto& a : m.atoms) worst = std::max(worst, scalar_residual(a, p));
            return worst;
        },
        [&](const ScalarEnsemble& m, const PressureField& p) {
            double sum = 0.0;
            for (const auto& a : m.atoms) {
                const double r = scalar_residual(a, p);
                sum += a.w * r * r;
            }
            return -sum;
        });
}

void write_energy_log_csv(const std::string& path, const std::vector<EnergyLogEntry>& log) {
    std::vector<std::vector<double>> rows;
    rows.reserve(log.size());
    for (const auto& e : log)
        rows.push_back({static_cast<double>(e.step), e.t, e.energy, e.kinetic, e.metabolic,
                        e.background, e.max_residual, e.dissipation_estimate});
    write_csv(path, {"step", "t", "E", "kinetic", "metabolic", "background", "max_residual",
                     "dissipation"},
              rows);
}

} // namespace mesoflow
