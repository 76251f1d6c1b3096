#include <doctest.h>

#include <cmath>

#include "mesoflow/flows.hpp"
#include "test_support.hpp"

using namespace mesoflow;
using namespace test_support;

namespace {

PressureField affine_pressure(const StructuredMesh& mesh, double ax, double ay) {
    std::vector<double> vals(mesh.num_nodes());
    for (int iy = 0; iy <= (mesh.dim == 2 ? mesh.cells[1] : 0); ++iy)
        for (int ix = 0; ix <= mesh.cells[0]; ++ix)
            vals[mesh.dim == 2 ? mesh.node_index(ix, iy) : ix] =
                ax * ix * mesh.h(0) + (mesh.dim == 2 ? ay * iy * mesh.h(1) : 0.0);
    PressureField p(mesh, vals);
    return p;
}

ParticleEnsemble one_atom(const StructuredMesh& mesh, const SymTensor& c, double x0 = 0.4,
                          double x1 = 0.6) {
    ParticleEnsemble mu;
    mu.mesh = mesh;
    Atom a;
    a.x = {x0, x1};
    a.c = c;
    a.w = 1.0;
    mu.atoms.push_back(a);
    return mu;
}

} // namespace

TEST_CASE("step_reduced: decay with zero gradient") {
    const StructuredMesh mesh = unit_square(8);
    const PressureField p(mesh, std::vector<double>(mesh.num_nodes(), 0.0));
    ModelParams params;
    params.gamma = 2.0;
    params.nu = 1.0;
    const ParticleEnsemble mu = one_atom(mesh, SymTensor::identity(2));
    const ParticleEnsemble out = step_reduced(mu, p, params, 0.1);
    CHECK(out.atoms[0].c(0, 0) == doctest::Approx(0.9).epsilon(1e-13));
    CHECK(out.atoms[0].c(1, 1) == doctest::Approx(0.9).epsilon(1e-13));
    CHECK(out.atoms[0].c(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("step_reduced: equilibrium tensor is a fixed point") {
    const StructuredMesh mesh = unit_square(8);
    const PressureField p = affine_pressure(mesh, 1.0, 0.0); // grad p = (1,0)
    ModelParams params;
    params.gamma = 2.0;
    params.nu = 1.0;
    // k(|grad p|) grad p x grad p with k = 1 here
    std::vector<double> g = {1.0, 0.0};
    const ParticleEnsemble mu = one_atom(mesh, SymTensor::outer(g));
    const ParticleEnsemble out = step_reduced(mu, p, params, 0.25);
    SymTensor diff = out.atoms[0].c - mu.atoms[0].c;
    CHECK(diff.frobenius_norm() <= 1e-12);
}

TEST_CASE("step_reduced: dt = 0 is the identity") {
    const StructuredMesh mesh = unit_square(8);
    const PressureField p = affine_pressure(mesh, 0.3, -0.2);
    ModelParams params;
    const ParticleEnsemble mu = one_atom(mesh, SymTensor::identity(2));
    const ParticleEnsemble out = step_reduced(mu, p, params, 0.0);
    SymTensor diff = out.atoms[0].c - mu.atoms[0].c;
    CHECK(diff.frobenius_norm() == 0.0);
}

TEST_CASE("step_full: affine pressure freezes the positions") {
    const StructuredMesh mesh = unit_square(8);
    const PressureField p = affine_pressure(mesh, 0.7, 0.1);
    ModelParams params;
    params.gamma = 2.0;
    const ParticleEnsemble mu = one_atom(mesh, SymTensor::identity(2));
    const ParticleEnsemble full = step_full(mu, p, params, 0.05);
    const ParticleEnsemble red = step_reduced(mu, p, params, 0.05);
    CHECK(full.atoms[0].x[0] == doctest::Approx(mu.atoms[0].x[0]).epsilon(1e-12));
    CHECK(full.atoms[0].x[1] == doctest::Approx(mu.atoms[0].x[1]).epsilon(1e-12));
    SymTensor diff = full.atoms[0].c - red.atoms[0].c;
    CHECK(diff.frobenius_norm() <= 1e-14);
}

TEST_CASE("step_full: zero tensor gains dt grad p x grad p and does not move") {
    const StructuredMesh mesh = unit_square(8);
    const PressureField p = affine_pressure(mesh, 1.0, 2.0);
    ModelParams params;
    params.gamma = 2.0;
    const ParticleEnsemble mu = one_atom(mesh, SymTensor::zero(2));
    const ParticleEnsemble out = step_full(mu, p, params, 0.1);
    CHECK(out.atoms[0].x[0] == mu.atoms[0].x[0]);
    CHECK(out.atoms[0].c(0, 0) == doctest::Approx(0.1).epsilon(1e-13));
    CHECK(out.atoms[0].c(0, 1) == doctest::Approx(0.2).epsilon(1e-13));
    CHECK(out.atoms[0].c(1, 1) == doctest::Approx(0.4).epsilon(1e-13));
}

TEST_CASE("step_full drift matches the finite-difference oracle") {
    // quadratic pressure: gradients linear, Hessian constant, exact for
    // the finite-difference caches
    const StructuredMesh mesh = unit_square(16);
    std::vector<double> vals(mesh.num_nodes());
    auto pfun = [](double x, double y) { return 0.8 * x * x - 0.5 * y * y + 0.3 * x * y; };
    for (int iy = 0; iy <= mesh.cells[1]; ++iy)
        for (int ix = 0; ix <= mesh.cells[0]; ++ix)
            vals[mesh.node_index(ix, iy)] = pfun(ix * mesh.h(0), iy * mesh.h(1));
    const PressureField p(mesh, vals);

    ModelParams params;
    params.gamma = 2.0;
    params.nu = 0.0; // isolate the drift
    SymTensor c(2);
    c.set(0, 0, 1.2);
    c.set(0, 1, 0.4);
    c.set(1, 1, 0.9);
    c = project_psd(c);
    const double x0 = 0.37, x1 = 0.44;
    const ParticleEnsemble mu = one_atom(mesh, c, x0, x1);
    const double dt = 1e-3;
    const ParticleEnsemble out = step_full(mu, p, params, dt);
    const double drift[2] = {(out.atoms[0].x[0] - x0) / dt, (out.atoms[0].x[1] - x1) / dt};

    // oracle: central difference of q(x) = grad p . C grad p
    auto q = [&](double a, double b) {
        const double pt[2] = {a, b};
        const auto g = p.gradient_at(pt);
        return c.quad(g.data());
    };
    const double eps = 1e-5;
    const double want[2] = {(q(x0 + eps, x1) - q(x0 - eps, x1)) / (2 * eps),
                            (q(x0, x1 + eps) - q(x0, x1 - eps)) / (2 * eps)};
    CHECK(std::abs(drift[0] - want[0]) <= 1e-6);
    CHECK(std::abs(drift[1] - want[1]) <= 1e-6);
}

TEST_CASE("monokinetic: rho = 0 freezes the tensor, uniform state hand step") {
    const StructuredMesh mesh = unit_square(8);
    const PressureField p = affine_pressure(mesh, 1.0, 0.0);
    ModelParams params;
    params.gamma = 2.0;
    params.nu = 1.0;

    MonokineticState st;
    st.mesh = mesh;
    st.rho.assign(mesh.num_cells(), 0.0);
    // all mass in one cell
    st.rho[10] = 1.0 / mesh.cell_volume();
    st.chat.assign(mesh.num_cells(), SymTensor::zero(2));
    const MonokineticState out = step_monokinetic(st, p, params, 0.1);
    // rho = 0 cells: Chat frozen at zero
    CHECK(out.chat[0].frobenius_norm() == 0.0);
    // the massive cell gains dt rho grad p x grad p
    CHECK(out.chat[10](0, 0) == doctest::Approx(0.1 * st.rho[10]).epsilon(1e-12));

    // uniform density, Chat = 0: potential is constant, so rho unchanged
    MonokineticState uni;
    uni.mesh = mesh;
    uni.rho.assign(mesh.num_cells(), 1.0 / mesh.domain_volume());
    uni.chat.assign(mesh.num_cells(), SymTensor::zero(2));
    const MonokineticState out2 = step_monokinetic(uni, p, params, 0.1);
    for (int c = 0; c < mesh.num_cells(); ++c)
        CHECK(out2.rho[c] == doctest::Approx(uni.rho[c]).epsilon(1e-12));
}

TEST_CASE("monokinetic: CFL violation is rejected with a suggested dt") {
    const StructuredMesh mesh = unit_square(8);
    const PressureField p = affine_pressure(mesh, 2.0, 0.0);
    ModelParams params;
    params.gamma = 2.0;
    params.nu = 1.0;
    MonokineticState st;
    st.mesh = mesh;
    st.rho.assign(mesh.num_cells(), 1.0 / mesh.domain_volume());
    st.chat.assign(mesh.num_cells(), SymTensor::zero(2));
    // strongly varying Chat makes the transport potential steep
    for (int c = 0; c < mesh.num_cells(); ++c) {
        SymTensor t = SymTensor::identity(2);
        t *= static_cast<double>(c % 7);
        st.chat[c] = t;
    }
    try {
        step_monokinetic(st, p, params, 50.0);
        FAIL("expected CflError");
    } catch (const CflError& e) {
        CHECK(e.suggested_dt > 0.0);
        CHECK(e.suggested_dt < 50.0);
    }
}

TEST_CASE("scalar step: orthogonal direction decays, equilibrium is fixed") {
    const StructuredMesh mesh = unit_square(8);
    const PressureField p = affine_pressure(mesh, 1.0, 0.0);
    ModelParams params;
    params.gamma = 2.0;
    params.nu = 1.0;
    ScalarEnsemble eta;
    eta.mesh = mesh;
    ScalarAtom a;
    a.x = {0.4, 0.4};
    a.theta = {0.0, 1.0}; // orthogonal to grad p
    a.c = 1.0;
    a.w = 0.5;
    eta.atoms.push_back(a);
    ScalarAtom b;
    b.x = {0.6, 0.6};
    b.theta = {1.0, 0.0};
    b.c = 1.0; // equilibrium: |theta.grad p|^2 = nu C^{gamma-1} -> C = 1
    b.w = 0.5;
    eta.atoms.push_back(b);
    const ScalarEnsemble out = step_scalar(eta, p, params, 0.1);
    CHECK(out.atoms[0].c == doctest::Approx(0.9).epsilon(1e-13));
    CHECK(out.atoms[1].c == doctest::Approx(1.0).epsilon(1e-13));
    const ScalarEnsemble same = step_scalar(eta, p, params, 0.0);
    CHECK(same.atoms[0].c == 1.0);
}

TEST_CASE("run_flow: zero steps returns the initial state") {
    const StructuredMesh mesh = unit_square(8);
    const SourceField s = two_bump_source(mesh);
    EnsembleSpec spec;
    spec.count = 20;
    const ParticleEnsemble mu0 = sample_initial(mesh, spec, 2);
    FlowSchedule sched;
    sched.dt = 0.1;
    sched.steps = 0;
    ModelParams params;
    const auto run = run_reduced_flow(mu0, params, s, sched);
    CHECK(run.accepted_steps == 0);
    CHECK(run.log.size() == 1);
    SymTensor diff = run.final_state.atoms[0].c - mu0.atoms[0].c;
    CHECK(diff.frobenius_norm() == 0.0);
}

TEST_CASE("run_flow: reduced flow dissipates and conserves weights") {
    const StructuredMesh mesh = unit_square(12);
    const SourceField s = two_bump_source(mesh);
    EnsembleSpec spec;
    spec.count = 50;
    const ParticleEnsemble mu0 = sample_initial(mesh, spec, 6);
    FlowSchedule sched;
    sched.dt = 0.05;
    sched.steps = 25;
    ModelParams params;
    params.gamma = 2.0;
    const auto run = run_reduced_flow(mu0, params, s, sched);
    for (std::size_t k = 1; k < run.log.size(); ++k)
        CHECK(run.log[k].energy <=
              run.log[k - 1].energy + 1e-9 * std::max(1.0, std::abs(run.log[k - 1].energy)));
    for (std::size_t i = 0; i < mu0.atoms.size(); ++i)
        CHECK(run.final_state.atoms[i].w == mu0.atoms[i].w);
    for (const auto& a : run.final_state.atoms) CHECK(min_eigenvalue(a.c) >= -1e-10);
    // dissipation estimates are non-positive
    for (const auto& le : run.log) CHECK(le.dissipation_estimate <= 0.0);
}

TEST_CASE("run_flow: identical configs give identical logs") {
    const StructuredMesh mesh = unit_square(8);
    const SourceField s = two_bump_source(mesh);
    EnsembleSpec spec;
    spec.count = 16;
    const ParticleEnsemble mu0 = sample_initial(mesh, spec, 3);
    FlowSchedule sched;
    sched.dt = 0.05;
    sched.steps = 10;
    ModelParams params;
    const auto run1 = run_reduced_flow(mu0, params, s, sched);
    const auto run2 = run_reduced_flow(mu0, params, s, sched);
    REQUIRE(run1.log.size() == run2.log.size());
    for (std::size_t k = 0; k < run1.log.size(); ++k)
        CHECK(run1.log[k].energy == run2.log[k].energy);
}

TEST_CASE("density diagnostic sign follows gamma") {
    const StructuredMesh mesh = unit_square(8);
    const SourceField s = two_bump_source(mesh);
    FlowSchedule sched;
    sched.dt = 0.02;
    sched.steps = 5;
    EnsembleSpec spec;
    spec.count = 10;
    for (double gamma : {0.5, 1.0, 2.0}) {
        ModelParams params;
        params.gamma = gamma;
        params.nu = 1.0;
        const ParticleEnsemble mu0 = sample_initial(mesh, spec, 14);
        const auto run = run_reduced_flow(mu0, params, s, sched);
        for (double d : run.density_diag) {
            if (gamma < 1.0) CHECK(d < 1.0);
            if (gamma == 1.0) CHECK(d == 1.0);
            if (gamma > 1.0) CHECK(d > 1.0);
        }
    }
}

TEST_CASE("reduced equilibrium residual decreases to small values") {
    const StructuredMesh mesh = unit_square(12);
    const SourceField s = two_bump_source(mesh);
    EnsembleSpec spec;
    spec.kind = EnsembleSpec::Kind::Monokinetic;
    spec.monokinetic_c = SymTensor::zero(2);
    spec.count = 60;
    const ParticleEnsemble mu0 = sample_initial(mesh, spec, 8);
    FlowSchedule sched;
    sched.dt = 0.4;
    sched.steps = 80;
    ModelParams params;
    params.gamma = 2.0;
    params.nu = 1.0;
    params.r = 1.0;
    const auto run = run_reduced_flow(mu0, params, s, sched);
    CHECK(run.log.back().max_residual <= 1e-4);
}
