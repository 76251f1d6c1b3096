#include "mesoflow/runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mesoflow/errors.hpp"
#include "mesoflow/fisher_rao.hpp"
#include "mesoflow/flows.hpp"
#include "mesoflow/graph.hpp"
#include "mesoflow/io.hpp"
#include "mesoflow/metric_graph.hpp"

namespace mesoflow {

namespace fs = std::filesystem;

SourceField two_bump_source(const StructuredMesh& mesh, double amplitude, double sigma) {
    SourceField s;
    s.mesh = mesh;
    s.cell_values.resize(mesh.num_cells());
    const double s2 = 2.0 * sigma * sigma;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const auto x = mesh.cell_center(c);
        double plus = 0.0, minus = 0.0;
        if (mesh.dim == 1) {
            const double xa = mesh.origin[0] + 0.25 * mesh.extent[0];
            const double xb = mesh.origin[0] + 0.75 * mesh.extent[0];
            plus = std::exp(-(x[0] - xa) * (x[0] - xa) / s2);
            minus = std::exp(-(x[0] - xb) * (x[0] - xb) / s2);
        } else {
            const double ax = mesh.origin[0] + 0.25 * mesh.extent[0];
            const double bx = mesh.origin[0] + 0.75 * mesh.extent[0];
            const double cy = mesh.origin[1] + 0.5 * mesh.extent[1];
            plus = std::exp(-((x[0] - ax) * (x[0] - ax) + (x[1] - cy) * (x[1] - cy)) / s2);
            minus = std::exp(-((x[0] - bx) * (x[0] - bx) + (x[1] - cy) * (x[1] - cy)) / s2);
        }
        s.cell_values[c] = amplitude * (plus - minus);
    }
    s.remove_mean();
    return s;
}

SourceField make_source(const StructuredMesh& mesh, const nlohmann::json& desc) {
    SourceField s;
    s.mesh = mesh;
    s.cell_values.assign(mesh.num_cells(), 0.0);
    const std::string type = desc.is_null() ? "two_bump" : desc.value("type", "two_bump");
    if (type == "zero") {
        return s;
    }
    if (type == "two_bump") {
        return two_bump_source(mesh, desc.is_null() ? 1.0 : desc.value("amplitude", 1.0),
                               desc.is_null() ? 0.08 : desc.value("sigma", 0.08));
    }
    if (type == "cosine_x") {
        const double amp = desc.value("amplitude", 1.0);
        const double pi = 3.14159265358979323846;
        for (int c = 0; c < mesh.num_cells(); ++c) {
            const auto x = mesh.cell_center(c);
            const double t = (x[0] - mesh.origin[0]) / mesh.extent[0];
            s.cell_values[c] = amp * pi * pi * std::cos(pi * t);
        }
        s.remove_mean();
        return s;
    }
    if (type == "sign_x") {
        const double amp = desc.value("amplitude", 1.0);
        for (int c = 0; c < mesh.num_cells(); ++c) {
            const auto x = mesh.cell_center(c);
            const double t = (x[0] - mesh.origin[0]) / mesh.extent[0];
            s.cell_values[c] = t < 0.5 ? amp : -amp;
        }
        s.remove_mean();
        return s;
    }
    if (type == "cells") {
        s.cell_values = desc.at("values").get<std::vector<double>>();
        if (static_cast<int>(s.cell_values.size()) != mesh.num_cells())
            throw ConfigError("source: 'values' length must match cell count");
        if (desc.value("normalize", true)) s.remove_mean();
        s.validate_zero_mean();
        return s;
    }
    throw ConfigError("source: unknown type '" + type + "'");
}

ParticleEnsemble make_ensemble(const StructuredMesh& mesh, const nlohmann::json& desc,
                               std::uint64_t seed) {
    EnsembleSpec spec;
    const std::string type = desc.is_null() ? "wishart" : desc.value("type", "wishart");
    if (type == "wishart") {
        spec.kind = EnsembleSpec::Kind::UniformWishart;
        spec.count = desc.is_null() ? 100 : desc.value("count", 100);
        spec.wishart_scale = desc.is_null() ? 1.0 : desc.value("scale", 1.0);
    } else if (type == "monokinetic") {
        spec.kind = EnsembleSpec::Kind::Monokinetic;
        spec.count = desc.value("count", 100);
        if (desc.contains("C")) {
            spec.monokinetic_c =
                SymTensor::from_packed(mesh.dim, desc.at("C").get<std::vector<double>>());
        } else {
            spec.monokinetic_c = SymTensor::identity(mesh.dim);
            spec.monokinetic_c *= desc.value("c0", 0.0);
        }
    } else if (type == "custom") {
        spec.kind = EnsembleSpec::Kind::Custom;
        for (const auto& ja : desc.at("atoms")) {
            Atom a;
            const auto x = ja.at("x").get<std::vector<double>>();
            for (int k = 0; k < mesh.dim; ++k) a.x[k] = x.at(k);
            a.c = SymTensor::from_packed(mesh.dim, ja.at("C").get<std::vector<double>>());
            a.w = ja.at("w").get<double>();
            spec.custom_atoms.push_back(std::move(a));
        }
    } else if (type == "file") {
        std::ifstream in(desc.at("path").get<std::string>());
        if (!in) throw ConfigError("ensemble: cannot open file");
        std::stringstream ss;
        ss << in.rdbuf();
        return ParticleEnsemble::from_jsonl(mesh, ss.str());
    } else {
        throw ConfigError("ensemble: unknown type '" + type + "'");
    }
    return sample_initial(mesh, spec, seed);
}

ScalarEnsemble make_scalar_ensemble(const StructuredMesh& mesh, const nlohmann::json& desc) {
    ScalarEnsemble eta;
    eta.mesh = mesh;
    std::vector<std::array<double, 2>> dirs;
    if (!desc.is_null() && desc.contains("dirs")) {
        for (const auto& jd : desc.at("dirs")) {
            const auto v = jd.get<std::vector<double>>();
            std::array<double, 2> th{0.0, 0.0};
            double n2 = 0.0;
            for (int k = 0; k < mesh.dim; ++k) {
                th[k] = v.at(k);
                n2 += th[k] * th[k];
            }
            const double n = std::sqrt(n2);
            if (!(n > 0.0)) throw ConfigError("scalar ensemble: zero direction");
            for (int k = 0; k < mesh.dim; ++k) th[k] /= n;
            if (th[0] < 0.0)
                for (int k = 0; k < mesh.dim; ++k) th[k] = -th[k];
            dirs.push_back(th);
        }
    } else {
        dirs.push_back({1.0, 0.0});
        if (mesh.dim == 2) dirs.push_back({0.0, 1.0});
    }
    const double c0 = desc.is_null() ? 0.5 : desc.value("c0", 0.5);
    const int n_atoms = mesh.num_cells() * static_cast<int>(dirs.size());
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const auto x = mesh.cell_center(c);
        for (const auto& th : dirs) {
            ScalarAtom a;
            a.x = x;
            a.theta = th;
            a.c = c0;
            a.w = 1.0 / n_atoms;
            eta.atoms.push_back(a);
        }
    }
    eta.normalize_weights();
    eta.validate();
    return eta;
}

DensityField make_density(const StructuredMesh& mesh, const nlohmann::json& desc) {
    DensityField rho;
    rho.mesh = mesh;
    const std::string type = desc.is_null() ? "uniform" : desc.value("type", "uniform");
    if (type == "uniform") {
        rho.cell_values.assign(mesh.num_cells(),
                               desc.is_null() ? 1.0 : desc.value("value", 1.0));
    } else if (type == "cells") {
        rho.cell_values = desc.at("values").get<std::vector<double>>();
        if (static_cast<int>(rho.cell_values.size()) != mesh.num_cells())
            throw ConfigError("rho: 'values' length must match cell count");
    } else {
        throw ConfigError("rho: unknown type '" + type + "'");
    }
    rho.validate();
    return rho;
}

AngularDensity make_angular_density(const StructuredMesh& mesh, const nlohmann::json& desc) {
    AngularDensity ad;
    ad.mesh = mesh;
    if (desc.is_null() || !desc.contains("dirs"))
        throw ConfigError("stationary-scalar: 'directions.dirs' required");
    std::vector<double> weights;
    for (const auto& jd : desc.at("dirs")) {
        const auto v = jd.get<std::vector<double>>();
        std::array<double, 2> th{0.0, 0.0};
        double n2 = 0.0;
        for (int k = 0; k < mesh.dim; ++k) {
            th[k] = v.at(k);
            n2 += th[k] * th[k];
        }
        const double n = std::sqrt(n2);
        if (!(n > 0.0)) throw ConfigError("stationary-scalar: zero direction");
        for (int k = 0; k < mesh.dim; ++k) th[k] /= n;
        ad.directions.push_back(th);
        weights.push_back(1.0);
    }
    if (desc.contains("weights")) {
        weights = desc.at("weights").get<std::vector<double>>();
        if (weights.size() != ad.directions.size())
            throw ConfigError("stationary-scalar: weights length mismatch");
    }
    ad.cell_weights.assign(mesh.num_cells(), weights);
    ad.validate();
    return ad;
}

namespace {

struct OutputWriter {
    fs::path dir;
    std::vector<std::string> artifacts;

    explicit OutputWriter(const std::string& out_dir) : dir(out_dir) {
        fs::create_directories(dir);
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
    void record(const std::string& name) { artifacts.push_back(name); }
};

void dump_grid_fields(OutputWriter& out, const std::string& name, const StructuredMesh& mesh,
                      const PressureField& p, const PermeabilityField* perm) {
    std::vector<std::pair<std::string, std::vector<double>>> fields;
    // cell-averaged pressure
    std::vector<double> pcell(mesh.num_cells());
    int nodes[4];
    const int npc = mesh.dim == 1 ? 2 : 4;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        cell_nodes(mesh, c, nodes);
        double v = 0.0;
        for (int a = 0; a < npc; ++a) v += p.nodes()[nodes[a]];
        pcell[c] = v / npc;
    }
    fields.emplace_back("p", pcell);
    std::vector<double> gmag(mesh.num_cells());
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const auto g = p.cell_gradient(c);
        double n = 0.0;
        for (int k = 0; k < mesh.dim; ++k) n += g[k] * g[k];
        gmag[c] = std::sqrt(n);
    }
    fields.emplace_back("grad_p_mag", gmag);
    if (perm) {
        const int npack = mesh.dim * (mesh.dim + 1) / 2;
        for (int k = 0; k < npack; ++k) {
            std::vector<double> comp(mesh.num_cells());
            for (int c = 0; c < mesh.num_cells(); ++c)
                comp[c] = perm->cell_tensors[c].packed_data()[k];
            fields.emplace_back("P_" + std::to_string(k), comp);
        }
    }
    write_vtk_structured_points(out.path(name), mesh.dim,
                                {mesh.cells[0], mesh.cells[1]},
                                {mesh.origin[0], mesh.origin[1]},
                                {mesh.h(0), mesh.dim == 2 ? mesh.h(1) : 1.0}, fields);
    out.record(name);
}

void write_pressure_slice_csv(OutputWriter& out, const std::string& name,
                              const StructuredMesh& mesh, const PressureField& p) {
    std::vector<std::vector<double>> rows;
    if (mesh.dim == 1) {
        for (int i = 0; i <= mesh.cells[0]; ++i)
            rows.push_back({mesh.origin[0] + i * mesh.h(0), p.nodes()[i]});
    } else {
        const int iy = mesh.cells[1] / 2;
        for (int i = 0; i <= mesh.cells[0]; ++i)
            rows.push_back({mesh.origin[0] + i * mesh.h(0),
                            p.nodes()[p.mesh().node_index(i, iy)]});
    }
    write_csv(out.path(name), {"x", "p"}, rows);
    out.record(name);
}

nlohmann::json flow_summary_common(const std::vector<EnergyLogEntry>& log, int accepted) {
    nlohmann::json s;
    s["accepted_steps"] = accepted;
    s["initial_energy"] = log.front().energy;
    s["final_energy"] = log.back().energy;
    s["final_max_residual"] = log.back().max_residual;
    bool monotone = true;
    for (std::size_t k = 1; k < log.size(); ++k)
        if (log[k].energy >
            log[k - 1].energy + 1e-9 * std::max(1.0, std::abs(log[k - 1].energy)))
            monotone = false;
    s["energy_monotone"] = monotone;
    return s;
}

void write_ensemble_snapshots(OutputWriter& out,
                              const std::vector<std::pair<int, ParticleEnsemble>>& snaps,
                              const ModelParams& params, const SourceField& s) {
    for (const auto& [step, ens] : snaps) {
        const std::string name = "ensemble_step" + std::to_string(step) + ".jsonl";
        write_text_file(out.path(name), ens.to_jsonl());
        out.record(name);
        PressureField p;
        energy_total(ens, params, s, &p);
        const PermeabilityField perm = deposit_permeability(ens);
        dump_grid_fields(out, "fields_step" + std::to_string(step) + ".vtk", ens.mesh, p,
                         &perm);
    }
}

} // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
    OutputWriter out(cfg.out_dir);
    nlohmann::json summary;
    summary["model"] = cfg.model;
    summary["config"] = cfg.resolved;

    if (cfg.model == "discrete") {
        DiscreteGraph g = cfg.graph.contains("file")
                              ? DiscreteGraph::from_json_file(cfg.graph.at("file"))
                              : DiscreteGraph::from_json_text(cfg.graph.dump());
        const GraphTrajectory traj =
            gf_evolve(g, cfg.params, cfg.schedule.dt, cfg.schedule.steps,
                      std::max(1, cfg.schedule.output_cadence));
        write_graph_trajectory_csv(out.path("trajectory.csv"), traj);
        out.record("trajectory.csv");
        summary["final_energy"] = traj.points.back().energy;
        summary["final_C"] = traj.points.back().conductivities;
        const auto res = discrete_stationary_residual(traj.final_graph, cfg.params);
        double rmax = 0.0;
        for (double v : res) rmax = std::max(rmax, std::abs(v));
        summary["stationary_residual_max"] = rmax;
    } else if (cfg.model == "reduced" || cfg.model == "full") {
        const SourceField s = make_source(cfg.mesh, cfg.source);
        const ParticleEnsemble mu0 = make_ensemble(cfg.mesh, cfg.ensemble, cfg.seed);
        const auto run = cfg.model == "reduced" ? run_reduced_flow(mu0, cfg.params, s, cfg.schedule)
                                                : run_full_flow(mu0, cfg.params, s, cfg.schedule);
        write_energy_log_csv(out.path("energy_log.csv"), run.log);
        out.record("energy_log.csv");
        write_text_file(out.path("final_ensemble.jsonl"), run.final_state.to_jsonl());
        out.record("final_ensemble.jsonl");
        write_ensemble_snapshots(out, run.snapshots, cfg.params, s);
        const PermeabilityField perm = deposit_permeability(run.final_state);
        dump_grid_fields(out, "fields.vtk", cfg.mesh, run.final_pressure, &perm);
        summary.update(flow_summary_common(run.log, run.accepted_steps));
    } else if (cfg.model == "monokinetic") {
        const SourceField s = make_source(cfg.mesh, cfg.source);
        MonokineticState st;
        st.mesh = cfg.mesh;
        st.rho.assign(cfg.mesh.num_cells(), 1.0 / cfg.mesh.domain_volume());
        SymTensor c0 = SymTensor::identity(cfg.mesh.dim);
        c0 *= cfg.ensemble.is_null() ? 0.0 : cfg.ensemble.value("c0", 0.0);
        st.chat.assign(cfg.mesh.num_cells(), c0);
        const auto run = run_monokinetic_flow(st, cfg.params, s, cfg.schedule);
        write_energy_log_csv(out.path("energy_log.csv"), run.log);
        out.record("energy_log.csv");
        dump_grid_fields(out, "fields.vtk", cfg.mesh, run.final_pressure, nullptr);
        std::vector<std::vector<double>> rows;
        for (int c = 0; c < cfg.mesh.num_cells(); ++c)
            rows.push_back({static_cast<double>(c), run.final_state.rho[c]});
        write_csv(out.path("rho.csv"), {"cell", "rho"}, rows);
        out.record("rho.csv");
        summary.update(flow_summary_common(run.log, run.accepted_steps));
        summary["final_mass"] = run.final_state.mass();
    } else if (cfg.model == "scalar") {
        const SourceField s = make_source(cfg.mesh, cfg.source);
        const ScalarEnsemble eta0 = make_scalar_ensemble(cfg.mesh, cfg.ensemble);
        const auto run = run_scalar_flow(eta0, cfg.params, s, cfg.schedule);
        write_energy_log_csv(out.path("energy_log.csv"), run.log);
        out.record("energy_log.csv");
        std::vector<std::vector<double>> rows;
        for (const auto& a : run.final_state.atoms)
            rows.push_back({a.x[0], a.x[1], a.theta[0], a.theta[1], a.c, a.w});
        write_csv(out.path("final_atoms.csv"), {"x0", "x1", "th0", "th1", "C", "w"}, rows);
        out.record("final_atoms.csv");
        summary.update(flow_summary_common(run.log, run.accepted_steps));
    } else if (cfg.model == "fisher-rao") {
        const SourceField s = make_source(cfg.mesh, cfg.source);
        const ParticleEnsemble mu0 = make_ensemble(cfg.mesh, cfg.ensemble, cfg.seed);
        const auto run = fr_run(mu0, cfg.params, s, cfg.schedule);
        write_energy_log_csv(out.path("energy_log.csv"), run.log);
        out.record("energy_log.csv");
        write_text_file(out.path("final_ensemble.jsonl"), run.final_state.to_jsonl());
        out.record("final_ensemble.jsonl");
        write_ensemble_snapshots(out, run.snapshots, cfg.params, s);
        summary.update(flow_summary_common(run.log, run.accepted_steps));
        double wsum = 0.0;
        for (const auto& a : run.final_state.atoms) wsum += a.w;
        summary["final_weight_sum"] = wsum;
    } else if (cfg.model == "stationary-plap") {
        const SourceField s = make_source(cfg.mesh, cfg.source);
        const DensityField rho = make_density(cfg.mesh, cfg.rho);
        StationaryReport rep;
        const PressureField p = plap_minimize(cfg.mesh, rho, s, cfg.params, &rep);
        write_text_file(out.path("report.json"), rep.to_json());
        out.record("report.json");
        dump_grid_fields(out, "fields.vtk", cfg.mesh, p, nullptr);
        write_pressure_slice_csv(out, "p_slice.csv", cfg.mesh, p);
        summary["report"] = nlohmann::json::parse(rep.to_json());
    } else if (cfg.model == "stationary-gamma1") {
        const SourceField s = make_source(cfg.mesh, cfg.source);
        const DensityField rho = make_density(cfg.mesh, cfg.rho);
        StationaryReport rep;
        MultiplierField mult;
        const PressureField p =
            constrained_minimize_gamma1(cfg.mesh, rho, s, cfg.params, &mult, &rep);
        write_text_file(out.path("report.json"), rep.to_json());
        out.record("report.json");
        dump_grid_fields(out, "fields.vtk", cfg.mesh, p, nullptr);
        std::vector<std::vector<double>> rows;
        for (int c = 0; c < cfg.mesh.num_cells(); ++c)
            rows.push_back({static_cast<double>(c), mult.a_squared[c]});
        write_csv(out.path("multiplier.csv"), {"cell", "a_squared"}, rows);
        out.record("multiplier.csv");
        summary["report"] = nlohmann::json::parse(rep.to_json());
    } else if (cfg.model == "stationary-scalar") {
        const SourceField s = make_source(cfg.mesh, cfg.source);
        const AngularDensity ad = make_angular_density(cfg.mesh, cfg.directions);
        StationaryReport rep;
        const PressureField p = scalar_stationary_minimize(cfg.mesh, ad, s, cfg.params, &rep);
        write_text_file(out.path("report.json"), rep.to_json());
        out.record("report.json");
        dump_grid_fields(out, "fields.vtk", cfg.mesh, p, nullptr);
        summary["report"] = nlohmann::json::parse(rep.to_json());
    } else if (cfg.model == "stationary-fr") {
        const SourceField s = make_source(cfg.mesh, cfg.source);
        const StationaryMeasureSpec spec =
            cfg.fr_spec.contains("file")
                ? StationaryMeasureSpec::from_json_file(cfg.fr_spec.at("file"), cfg.mesh.dim)
                : StationaryMeasureSpec::from_json_text(cfg.fr_spec.dump(), cfg.mesh.dim);
        StationaryReport rep;
        const PressureField p = fr_functional_minimize(cfg.mesh, spec, s, cfg.params, &rep);
        const ParticleEnsemble mu = fr_stationary_measure(spec, p, cfg.params);
        write_text_file(out.path("report.json"), rep.to_json());
        out.record("report.json");
        write_text_file(out.path("stationary_ensemble.jsonl"), mu.to_jsonl());
        out.record("stationary_ensemble.jsonl");
        dump_grid_fields(out, "fields.vtk", cfg.mesh, p, nullptr);
        summary["report"] = nlohmann::json::parse(rep.to_json());
    } else if (cfg.model == "semidiscrete") {
        MetricGraph g = cfg.graph.contains("file")
                            ? MetricGraph::from_json_file(cfg.graph.at("file"))
                            : MetricGraph::from_json_text(cfg.graph.dump());
        MetricSolveReport rep;
        const MetricPressure p = solve_pressure(g, cfg.params, &rep);
        write_metric_pressure_csv(out.path("edge_pressure.csv"), g, p);
        out.record("edge_pressure.csv");
        summary["newton_iterations"] = rep.newton_iterations;
        summary["gradient_norm"] = rep.gradient_norm;
        summary["functional_value"] = rep.functional_value;
        bool node_only = true;
        for (const auto& e : g.edges)
            for (double sv : e.source) node_only = node_only && sv == 0.0;
        bool beta_inverse_length = true;
        for (const auto& e : g.edges)
            for (double b : e.beta)
                beta_inverse_length = beta_inverse_length &&
                                      std::abs(b - 1.0 / e.length) <= 1e-12 / e.length;
        if (node_only && beta_inverse_length) {
            const ConsistencyReport cons = consistency_check(g, cfg.params);
            summary["consistency"] = {{"max_affine_deviation", cons.max_affine_deviation},
                                      {"kirchhoff_residual", cons.kirchhoff_residual},
                                      {"stationary_residual", cons.stationary_residual}};
        }
    } else {
        throw ConfigError("run_experiment: unknown model " + cfg.model);
    }

    write_text_file(out.path("summary.json"), summary.dump(2) + "\n");
    out.record("summary.json");

    // manifest with checksums over everything written so far
    nlohmann::json manifest;
    manifest["config"] = cfg.resolved;
    manifest["artifacts"] = nlohmann::json::array();
    for (const auto& name : out.artifacts) {
        manifest["artifacts"].push_back(
            {{"path", name}, {"checksum", file_checksum(out.path(name))}});
    }
    write_text_file(out.path("manifest.json"), manifest.dump(2) + "\n");

    RunResult result;
    result.summary_json = summary.dump(2);
    result.artifacts = out.artifacts;
    result.artifacts.push_back("manifest.json");
    return result;
}

} // namespace mesoflow
