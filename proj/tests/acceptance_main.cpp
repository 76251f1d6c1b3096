// Acceptance suite: runs every release criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "mesoflow/config.hpp"
#include "mesoflow/fisher_rao.hpp"
#include "mesoflow/flows.hpp"
#include "mesoflow/graph.hpp"
#include "mesoflow/io.hpp"
#include "mesoflow/metric_graph.hpp"
#include "mesoflow/rng.hpp"
#include "mesoflow/runner.hpp"
#include "mesoflow/stationary.hpp"

using namespace mesoflow;

namespace {

int g_failures = 0;

void report(int id, bool ok, const std::string& label, const std::string& detail) {
    std::printf("%s criterion %2d: %s (%s)\n", ok ? "PASS" : "FAIL", id, label.c_str(),
                detail.c_str());
    if (!ok) ++g_failures;
}

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

StructuredMesh square(int n) {
    StructuredMesh m;
    m.dim = 2;
    m.extent = {1.0, 1.0};
    m.cells = {n, n};
    return m;
}

bool log_monotone(const std::vector<EnergyLogEntry>& log) {
    for (std::size_t k = 1; k < log.size(); ++k)
        if (log[k].energy >
            log[k - 1].energy + 1e-9 * std::max(1.0, std::abs(log[k - 1].energy)))
            return false;
    return true;
}

// ---------------------------------------------------------------- 1
void criterion_1() {
    bool ok = true;
    std::string detail;
    for (double gamma : {0.5, 1.0, 1.5, 2.0}) {
        DiscreteGraph g;
        g.num_nodes = 2;
        g.edges.push_back({0, 1, 1.0, 2.0});
        g.sources = {1.0, -1.0};
        ModelParams params;
        params.gamma = gamma;
        params.nu = 1.0;
        const double t0 = now_seconds();
        const auto traj = gf_evolve(g, params, 0.2, 300, 300);
        const double elapsed = now_seconds() - t0;
        const double c_final = traj.final_graph.edges[0].conductivity;
        const bool here = std::abs(c_final - 1.0) <= 1e-6 && elapsed < 1.0;
        ok = ok && here;
        detail += "gamma=" + std::to_string(gamma).substr(0, 4) + ": |C-1|=" +
                  format_double(std::abs(c_final - 1.0)) + " ";
    }
    report(1, ok, "discrete two-node fixed point C -> 1", detail);
}

// ---------------------------------------------------------------- 2
void criterion_2() {
    const double t0 = now_seconds();
    bool ok = true;
    std::string detail;

    {
        const StructuredMesh mesh = square(32);
        const SourceField s = two_bump_source(mesh);
        EnsembleSpec spec;
        spec.count = 200;
        const ParticleEnsemble mu0 = sample_initial(mesh, spec, 2024);
        ModelParams params;
        params.gamma = 2.0;
        FlowSchedule sched;
        sched.dt = 0.05;
        sched.steps = 100;
        const auto run = run_reduced_flow(mu0, params, s, sched);
        const bool here = log_monotone(run.log) && run.accepted_steps == 100;
        ok = ok && here;
        detail += std::string("reduced:") + (here ? "ok" : "bad") + " ";
    }
    {
        const StructuredMesh mesh = square(16);
        const SourceField s = two_bump_source(mesh);
        EnsembleSpec spec;
        spec.count = 50;
        const ParticleEnsemble mu0 = sample_initial(mesh, spec, 99);
        ModelParams params;
        params.gamma = 2.0;
        FlowSchedule sched;
        sched.dt = 0.02;
        sched.steps = 100;
        const auto run = run_full_flow(mu0, params, s, sched);
        const bool here = log_monotone(run.log) && run.accepted_steps == 100;
        ok = ok && here;
        detail += std::string("full:") + (here ? "ok" : "bad") + " ";
    }
    {
        const StructuredMesh mesh = square(16);
        const SourceField s = two_bump_source(mesh);
        MonokineticState st;
        st.mesh = mesh;
        st.rho.assign(mesh.num_cells(), 1.0 / mesh.domain_volume());
        st.chat.assign(mesh.num_cells(), SymTensor::zero(2));
        ModelParams params;
        params.gamma = 2.0;
        FlowSchedule sched;
        sched.dt = 0.02;
        sched.steps = 100;
        const auto run = run_monokinetic_flow(st, params, s, sched);
        const bool here = log_monotone(run.log) && run.accepted_steps == 100;
        ok = ok && here;
        detail += std::string("monokinetic:") + (here ? "ok" : "bad") + " ";
    }
    {
        const StructuredMesh mesh = square(12);
        const SourceField s = two_bump_source(mesh);
        nlohmann::json desc;
        desc["c0"] = 0.3;
        const ScalarEnsemble eta0 = make_scalar_ensemble(mesh, desc);
        ModelParams params;
        params.gamma = 2.0;
        FlowSchedule sched;
        sched.dt = 0.05;
        sched.steps = 100;
        const auto run = run_scalar_flow(eta0, params, s, sched);
        const bool here = log_monotone(run.log) && run.accepted_steps == 100;
        ok = ok && here;
        detail += std::string("scalar:") + (here ? "ok" : "bad") + " ";
    }
    {
        const StructuredMesh mesh = square(16);
        const SourceField s = two_bump_source(mesh);
        EnsembleSpec spec;
        spec.count = 100;
        const ParticleEnsemble mu0 = sample_initial(mesh, spec, 7);
        ModelParams params;
        params.gamma = 2.0;
        FlowSchedule sched;
        sched.dt = 0.02;
        sched.steps = 100;
        const auto run = fr_run(mu0, params, s, sched);
        const bool here = log_monotone(run.log) && run.accepted_steps == 100;
        ok = ok && here;
        detail += std::string("fisher-rao:") + (here ? "ok" : "bad") + " ";
    }
    const double elapsed = now_seconds() - t0;
    ok = ok && elapsed < 60.0;
    detail += "elapsed=" + format_double(elapsed) + "s";
    report(2, ok, "energy dissipation across all five flows", detail);
}

// ---------------------------------------------------------------- 3
void criterion_3() {
    const StructuredMesh mesh = square(16);
    const SourceField s = two_bump_source(mesh);
    EnsembleSpec spec;
    spec.kind = EnsembleSpec::Kind::Monokinetic;
    spec.monokinetic_c = SymTensor::zero(2);
    spec.count = 100;
    const ParticleEnsemble mu0 = sample_initial(mesh, spec, 31);
    ModelParams params;
    params.gamma = 2.0;
    params.nu = 1.0;
    params.r = 1.0;
    FlowSchedule sched;
    sched.dt = 0.4;
    sched.steps = 120;
    const auto run = run_reduced_flow(mu0, params, s, sched);
    const double res = run.log.back().max_residual;
    report(3, res <= 1e-4, "reduced flow reaches the rank-one equilibrium form",
           "max residual = " + format_double(res));
}

// ---------------------------------------------------------------- 4
void criterion_4() {
    auto solve_err = [&](int n) {
        const StructuredMesh mesh = square(n);
        SourceField s;
        s.mesh = mesh;
        s.cell_values.resize(mesh.num_cells());
        const double pi = 3.14159265358979323846;
        for (int c = 0; c < mesh.num_cells(); ++c)
            s.cell_values[c] = pi * pi * std::cos(pi * mesh.cell_center(c)[0]);
        s.remove_mean();
        const PressureField p = assemble_and_solve(mesh, PermeabilityField::zero(mesh), 1.0, s);
        // a-priori bound on this solve as well
        const double grad = std::sqrt(dirichlet_quadratic_form(mesh, p));
        const double bound = (mesh.diameter() / pi) / 1.0 * s.l2_norm();
        double err2 = 0.0;
        for (int c = 0; c < mesh.num_cells(); ++c) {
            const auto x = mesh.cell_center(c);
            const double d = p.value_at(x.data()) - std::cos(pi * x[0]);
            err2 += d * d * mesh.cell_volume();
        }
        return std::make_pair(std::sqrt(err2), grad <= bound);
    };
    const auto [e16, b16] = solve_err(16);
    const auto [e32, b32] = solve_err(32);
    const double ratio = e16 / e32;

    bool bound_ok = b16 && b32;
    for (double r : {0.25, 1.0, 4.0}) {
        const StructuredMesh mesh = square(24);
        const SourceField s = two_bump_source(mesh, 3.0);
        const PressureField p = assemble_and_solve(mesh, PermeabilityField::zero(mesh), r, s);
        const double grad = std::sqrt(dirichlet_quadratic_form(mesh, p));
        const double bound = (mesh.diameter() / 3.14159265358979323846) / r * s.l2_norm();
        bound_ok = bound_ok && grad <= bound;
    }
    const bool ok = ratio >= 3.5 && ratio <= 4.5 && bound_ok;
    report(4, ok, "Poisson convergence order and a-priori bound",
           "error ratio = " + format_double(ratio) +
               std::string(bound_ok ? ", bounds hold" : ", bounds fail"));
}

// ---------------------------------------------------------------- 5
int predict_multiplicity(double w, double k, const ModelParams& p) {
    if (p.gamma > 1.0) {
        if (k > 0.0) return 1;
        if (k == 0.0) return 2;
        return (w > 0.0 && w >= branch_threshold_w(k, p)) ? 2 : 0;
    }
    if (p.gamma == 1.0) {
        if (k > 0.0) return w < p.nu ? 1 : 0;
        if (k == 0.0) return 1;
        return w > p.nu ? 1 : 0;
    }
    if (k > 0.0) return w == 0.0 ? 1 : (w <= branch_threshold_w(k, p) ? 2 : 0);
    if (k == 0.0) return w == 0.0 ? 1 : 2;
    return w > 0.0 ? 1 : 0;
}

std::vector<double> oracle_roots(double w, double k, const ModelParams& p) {
    auto f = [&](double c) { return (p.nu / p.gamma) * std::pow(c, p.gamma) - w * c - k; };
    // provable upper bound for nonnegative roots
    double bound = 1.0;
    if (p.gamma > 1.0) {
        bound = 2.0 * std::max(1.0, std::pow(p.gamma * (w + std::abs(k)) / p.nu,
                                             1.0 / (p.gamma - 1.0)));
    } else if (p.gamma == 1.0) {
        bound = 2.0 * (std::abs(k) / std::max(std::abs(p.nu - w), 1e-8) + 1.0);
    } else if (w > 0.0) {
        bound = 2.0 * std::max({1.0, 2.0 * std::abs(k) / w,
                                std::pow(2.0 * p.nu / (p.gamma * w), 1.0 / (1.0 - p.gamma))});
    } else {
        bound = 2.0 * std::max(1.0, std::pow(p.gamma * std::abs(k) / p.nu, 1.0 / p.gamma));
    }
    std::vector<double> roots;
    if (f(0.0) == 0.0) roots.push_back(0.0);
    const double lo_exp = -14.0;
    const double hi_exp = std::log10(bound);
    const int npts = 6000;
    std::vector<double> grid = {0.0};
    for (int i = 0; i <= npts; ++i)
        grid.push_back(std::pow(10.0, lo_exp + (hi_exp - lo_exp) * i / npts));
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        double lo = grid[i], hi = grid[i + 1];
        double flo = f(lo), fhi = f(hi);
        if (flo == 0.0 || flo * fhi > 0.0) continue;
        for (int it = 0; it < 400; ++it) {
            const double mid = 0.5 * (lo + hi);
            if ((f(mid) > 0.0) == (fhi > 0.0)) hi = mid;
            else lo = mid;
        }
        roots.push_back(0.5 * (lo + hi));
    }
    return roots;
}

void criterion_5() {
    Rng rng(20240809);
    bool ok = true;
    std::string detail;
    for (int gamma_case = 0; gamma_case < 3 && ok; ++gamma_case) {
        int checked = 0;
        for (int trial = 0; trial < 1000 && ok; ++trial) {
            ModelParams p;
            p.gamma = gamma_case == 0   ? 1.1 + 2.4 * rng.uniform()
                      : gamma_case == 1 ? 1.0
                                        : 0.2 + 0.72 * rng.uniform();
            p.nu = 0.3 + 2.0 * rng.uniform();
            double k = rng.uniform(-1.2, 1.2);
            if (trial % 5 == 0) k = 0.0;
            double w = 0.05 + 2.45 * rng.uniform();
            // sample around the existence thresholds half the time
            const double thresh = branch_threshold_w(k, p);
            if (std::isfinite(thresh) && trial % 2 == 0) w = thresh * (0.5 + rng.uniform());
            const auto got = branch_solve(w, k, p);
            const auto want = oracle_roots(w, k, p);
            const int predicted = predict_multiplicity(w, k, p);
            if (static_cast<int>(got.size()) != predicted || got.size() != want.size()) {
                ok = false;
                detail = "multiplicity mismatch at gamma=" + format_double(p.gamma) +
                         " nu=" + format_double(p.nu) + " w=" + format_double(w) +
                         " K=" + format_double(k);
                break;
            }
            for (std::size_t i = 0; i < got.size(); ++i) {
                const double resid = std::abs((p.nu / p.gamma) * std::pow(got[i], p.gamma) -
                                              w * got[i] - k);
                if (resid > 1e-10 * std::max(1.0, std::abs(k) + w * got[i]) ||
                    std::abs(got[i] - want[i]) > 1e-8 * std::max(1.0, want[i])) {
                    ok = false;
                    detail = "value mismatch at gamma=" + format_double(p.gamma);
                    break;
                }
            }
            ++checked;
        }
        if (ok) detail += std::to_string(checked) + " ";
    }
    report(5, ok, "branch solver vs bisection oracle and case table",
           ok ? "draws per case: " + detail : detail);
}

// ---------------------------------------------------------------- 6
void criterion_6() {
    const StructuredMesh mesh = square(16);
    const SourceField s = two_bump_source(mesh);
    ModelParams params;
    params.gamma = 2.0;
    params.nu = 1.0;
    params.r = 1.0;

    StationaryMeasureSpec spec;
    spec.k = 0.15;
    spec.branch = StationaryMeasureSpec::Branch::Upper;
    const double iso = 1.0 / std::sqrt(2.0);
    for (int c = 0; c < mesh.num_cells(); ++c) {
        StationaryMeasureSpec::SpecAtom a;
        a.x = mesh.cell_center(c);
        a.a = SymTensor::identity(2);
        a.a *= iso;
        a.w = 1.0 / mesh.num_cells();
        spec.atoms.push_back(std::move(a));
    }
    const PressureField p_inf = fr_functional_minimize(mesh, spec, s, params);
    const ParticleEnsemble mu_inf = fr_stationary_measure(spec, p_inf, params);

    PressureField p_re;
    CgOptions tight;
    tight.rel_tol = 1e-14;
    energy_total(mu_inf, params, s, &p_re, tight);
    double spread = 0.0;
    for (const auto& a : mu_inf.atoms)
        spread = std::max(
            spread, std::abs(first_variation_at(params, p_re, a.x.data(), a.c) - spec.k));

    FlowSchedule sched;
    sched.dt = 1e-3;
    sched.steps = 100;
    const auto run = fr_run(mu_inf, params, s, sched);
    double movement = 0.0;
    for (std::size_t i = 0; i < mu_inf.atoms.size(); ++i)
        movement =
            std::max(movement, std::abs(run.final_state.atoms[i].w - mu_inf.atoms[i].w));
    double wsum = 0.0;
    for (const auto& a : run.final_state.atoms) wsum += a.w;
    const double drift = std::abs(wsum - 1.0);

    const bool ok = spread <= 1e-8 && movement <= 1e-10 && drift <= 1e-12;
    report(6, ok, "Fisher-Rao conservation and constructed stationarity",
           "spread=" + format_double(spread) + " movement=" + format_double(movement) +
               " drift=" + format_double(drift));
}

// ---------------------------------------------------------------- 7
void criterion_7() {
    Rng rng(777);
    bool ok = true;
    double worst_kirchhoff = 0.0, worst_affine = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3 + static_cast<int>(rng.integer() % 6); // 3..8 nodes
        MetricGraph g;
        for (int i = 0; i < n; ++i) {
            g.node_positions.push_back({rng.uniform(), rng.uniform()});
            g.node_sources.push_back(0.0);
        }
        double total = 0.0;
        for (int i = 0; i < n - 1; ++i) {
            g.node_sources[i] = rng.uniform(-1.0, 1.0);
            total += g.node_sources[i];
        }
        g.node_sources[n - 1] = -total;
        for (int i = 1; i < n; ++i) {
            MetricEdge e;
            e.j = i;
            e.i = static_cast<int>(rng.integer() % i);
            e.length = 0.4 + 1.2 * rng.uniform();
            e.cells = 4 + static_cast<int>(rng.integer() % 5);
            e.beta.assign(e.cells, 1.0 / e.length);
            e.source.assign(e.cells, 0.0);
            g.edges.push_back(std::move(e));
        }
        ModelParams params;
        params.gamma = 2.0;
        params.nu = 1.0;
        const ConsistencyReport rep = consistency_check(g, params);
        worst_kirchhoff = std::max(worst_kirchhoff, rep.kirchhoff_residual);
        worst_affine = std::max(worst_affine, rep.max_affine_deviation);
        ok = ok && rep.kirchhoff_residual <= 1e-8 && rep.max_affine_deviation <= 1e-8;
    }
    report(7, ok, "semi-discrete/discrete consistency on 20 random trees",
           "worst kirchhoff=" + format_double(worst_kirchhoff) +
               " worst affine=" + format_double(worst_affine));
}

// ---------------------------------------------------------------- 8
void criterion_8() {
    const StructuredMesh mesh = square(16);
    ModelParams params;
    params.gamma = 1.0;
    params.nu = 1.0;
    params.r = 1.0;
    const DensityField rho = DensityField::uniform(mesh, 1.0);

    const SourceField s_big = two_bump_source(mesh, 32.0);
    MultiplierField mult;
    const PressureField p = constrained_minimize_gamma1(mesh, rho, s_big, params, &mult);
    double gmax = 0.0, comp = 0.0;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const auto g = p.cell_gradient(c);
        const double g2 = g[0] * g[0] + g[1] * g[1];
        gmax = std::max(gmax, g2);
        comp += rho.cell_values[c] * mult.a_squared[c] * std::max(0.0, params.nu - g2) *
                mesh.cell_volume();
    }

    const SourceField s_small = two_bump_source(mesh, 3.2);
    const PressureField p_small =
        constrained_minimize_gamma1(mesh, rho, s_small, params, nullptr);
    const PressureField lin =
        assemble_and_solve(mesh, PermeabilityField::zero(mesh), params.r, s_small);
    double diff = 0.0;
    for (int i = 0; i < mesh.num_nodes(); ++i)
        diff = std::max(diff, std::abs(p_small.nodes()[i] - lin.nodes()[i]));

    const bool ok =
        gmax <= params.nu + 1e-8 && gmax >= params.nu - 1e-6 && comp <= 1e-6 && diff <= 1e-8;
    report(8, ok, "gamma = 1 gradient-constrained problem",
           "max|grad p|^2=" + format_double(gmax) + " comp=" + format_double(comp) +
               " small-S diff=" + format_double(diff));
}

// ---------------------------------------------------------------- 9
void criterion_9() {
    const StructuredMesh mesh = square(8);
    const SourceField s = two_bump_source(mesh);
    ModelParams params;
    params.gamma = 2.0;
    params.r = 1.0;
    Rng rng(4242);
    bool ok = true;
    double worst = 1e300;
    for (int pair = 0; pair < 20; ++pair) {
        EnsembleSpec spec;
        spec.count = 30;
        ParticleEnsemble mu0 = sample_initial(mesh, spec, 1000 + pair);
        ParticleEnsemble mu1 = mu0;
        for (auto& a : mu1.atoms) a.w = 0.05 + rng.uniform();
        mu1.normalize_weights();
        const auto probe = convexity_probe(mu0, mu1, params, s, 21);
        worst = std::min(worst, probe.min_second_difference);
        ok = ok && probe.min_second_difference >= -1e-8;
    }
    report(9, ok, "energy convexity along 20 random weight segments",
           "min second difference = " + format_double(worst));
}

// ---------------------------------------------------------------- 10
void criterion_10() {
    StructuredMesh mesh;
    mesh.dim = 1;
    mesh.cells = {64, 2};
    mesh.extent = {1.0, 1.0};
    SourceField s;
    s.mesh = mesh;
    s.cell_values.resize(mesh.num_cells());
    for (int c = 0; c < mesh.num_cells(); ++c)
        s.cell_values[c] = mesh.cell_center(c)[0] < 0.5 ? 1.0 : -1.0;
    ModelParams params;
    params.gamma = 2.0;
    params.nu = 1.0;
    params.r = 1.0;
    const PressureField p = plap_minimize(mesh, DensityField::uniform(mesh, 1.0), s, params);

    const std::vector<double> b = node_load(mesh, s);
    double cumulative = 0.0, worst = 0.0;
    std::vector<double> g_oracle(mesh.num_cells());
    for (int c = 0; c < mesh.num_cells(); ++c) {
        cumulative += b[c];
        const double target = -cumulative;
        double lo = -1e6, hi = 1e6;
        for (int it = 0; it < 220; ++it) {
            const double mid = 0.5 * (lo + hi);
            if ((params.r + mid * mid) * mid < target) lo = mid;
            else hi = mid;
        }
        g_oracle[c] = 0.5 * (lo + hi);
        worst = std::max(worst, std::abs(p.cell_gradient(c)[0] - g_oracle[c]));
    }
    std::vector<double> profile(mesh.num_nodes(), 0.0);
    for (int c = 0; c < mesh.num_cells(); ++c)
        profile[c + 1] = profile[c] + mesh.h(0) * g_oracle[c];
    double mean = 0.0;
    for (int i = 0; i < mesh.num_nodes(); ++i) mean += profile[i] * mesh.node_weight(i);
    mean /= mesh.domain_volume();
    double worst_p = 0.0;
    for (int i = 0; i < mesh.num_nodes(); ++i)
        worst_p = std::max(worst_p, std::abs(p.nodes()[i] - (profile[i] - mean)));

    const bool ok = worst <= 1e-6 && worst_p <= 1e-6;
    report(10, ok, "p-Laplace 1d profile vs flux-relation oracle",
           "grad Linf=" + format_double(worst) + " profile Linf=" + format_double(worst_p));
}

// ---------------------------------------------------------------- 11
void criterion_11() {
    const StructuredMesh mesh = square(16);
    const SourceField s = two_bump_source(mesh, 2.0);
    ModelParams params;
    params.gamma = 2.0;
    params.nu = 1.0;
    params.r = 0.5;

    // sigma_0 in the special product form V_#(dlambda x dH): dlambda a
    // point mass at the isotropic interior point, dH eight equispaced
    // rotations (exact fourth-moment isotropy)
    StationaryMeasureSpec spec;
    spec.k = 0.0;
    spec.branch = StationaryMeasureSpec::Branch::Upper;
    const double iso = 1.0 / std::sqrt(2.0);
    const int nrot = 8;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        for (int k = 0; k < nrot; ++k) {
            SymTensor a = SymTensor::identity(2);
            a *= iso;
            StationaryMeasureSpec::SpecAtom sa;
            sa.x = mesh.cell_center(c);
            sa.a = a;
            sa.w = 1.0 / (mesh.num_cells() * nrot);
            spec.atoms.push_back(std::move(sa));
        }
    }
    StationaryReport rep;
    const PressureField p = fr_functional_minimize(mesh, spec, s, params, &rep);
    // matched p-Laplace density: 2 E[(ghat . A ghat)^2] = 1 for A = I/sqrt(2)
    const double residual =
        plap_el_residual(mesh, DensityField::uniform(mesh, 1.0), s, params, p);
    const bool ok = residual <= 1e-4;
    report(11, ok, "FR functional consistency with the p-Laplace solve",
           "plap EL residual = " + format_double(residual) +
               ", own residual = " + format_double(rep.el_residual));
}

// ---------------------------------------------------------------- 12
void criterion_12() {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "mesoflow_acceptance";
    fs::remove_all(base);

    const char* reduced_cfg = R"({
        "model": "reduced",
        "params": {"gamma": 2.0, "nu": 1.0, "r": 1.0},
        "mesh": {"cells": [16, 16]},
        "ensemble": {"type": "wishart", "count": 60},
        "schedule": {"dt": 0.05, "steps": 20, "output_cadence": 10},
        "seed": 314159
    })";
    const char* discrete_cfg = R"({
        "model": "discrete",
        "params": {"gamma": 1.5, "nu": 1.0},
        "schedule": {"dt": 0.2, "steps": 100},
        "graph": {"nodes": 2,
                  "edges": [{"i":0,"j":1,"L":1.0,"C":2.0}],
                  "sources": [1.0, -1.0]}
    })";

    bool ok = true;
    std::string detail;
    int run_id = 0;
    for (const char* text : {reduced_cfg, discrete_cfg}) {
        std::vector<std::string> sums;
        for (int rep = 0; rep < 2; ++rep) {
            ExperimentConfig cfg = parse_config_text(text);
            cfg.out_dir =
                (base / ("run" + std::to_string(run_id) + "_" + std::to_string(rep))).string();
            const RunResult result = run_experiment(cfg);
            std::string combined;
            for (const auto& name : result.artifacts) {
                if (name == "manifest.json") continue;
                combined += file_checksum(cfg.out_dir + "/" + name);
            }
            sums.push_back(combined);
        }
        const bool here = sums[0] == sums[1];
        ok = ok && here;
        detail += std::string(run_id == 0 ? "reduced:" : "discrete:") + (here ? "ok " : "bad ");
        ++run_id;
    }
    report(12, ok, "byte-identical reruns of acceptance configs", detail);
}

} // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    criterion_11();
    criterion_12();
    if (g_failures == 0) {
        std::printf("acceptance: all criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criteria FAILED\n", g_failures);
    return 1;
}
