#include "mesoflow/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mesoflow/errors.hpp"
#include "mesoflow/io.hpp"

namespace mesoflow {

void DiscreteGraph::validate() const {
    if (num_nodes < 1) throw ConfigError("graph needs at least one node");
    if (static_cast<int>(sources.size()) != num_nodes)
        throw ConfigError("graph: sources size must match node count");
    std::set<std::pair<int, int>> seen;
    for (const auto& e : edges) {
        if (e.i < 0 || e.i >= num_nodes || e.j < 0 || e.j >= num_nodes)
            throw ConfigError("graph: edge endpoint out of range");
        if (e.i == e.j) throw ConfigError("graph: self-loops are not allowed");
        if (!(e.length > 0.0)) throw ConfigError("graph: edge length must be positive");
        if (e.conductivity < 0.0) throw ConfigError("graph: conductivity must be >= 0");
        auto key = std::minmax(e.i, e.j);
        if (!seen.insert(key).second)
            throw ConfigError("graph: duplicate edge between a vertex pair");
    }
    double total = 0.0, scale = 0.0;
    for (double s : sources) {
        total += s;
        scale += std::abs(s);
    }
    if (std::abs(total) > 1e-12 * std::max(scale, 1.0))
        throw ConfigError("graph: sources must sum to zero");
}

bool DiscreteGraph::positive_subgraph_connected() const {
    if (num_nodes <= 1) return true;
    std::vector<int> parent(num_nodes);
    for (int i = 0; i < num_nodes; ++i) parent[i] = i;
    std::function<int(int)> find = [&](int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };
    for (const auto& e : edges)
        if (e.conductivity > 0.0) parent[find(e.i)] = find(e.j);
    const int root = find(0);
    for (int i = 1; i < num_nodes; ++i)
        if (find(i) != root) return false;
    return true;
}

DiscreteGraph DiscreteGraph::from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("graph json parse error: ") + e.what());
    }
    DiscreteGraph g;
    try {
        g.num_nodes = j.at("nodes").get<int>();
        for (const auto& je : j.at("edges")) {
            GraphEdge e;
            e.i = je.at("i").get<int>();
            e.j = je.at("j").get<int>();
            e.length = je.at("L").get<double>();
            e.conductivity = je.at("C").get<double>();
            g.edges.push_back(e);
        }
        g.sources = j.at("sources").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("graph json schema error: ") + e.what());
    }
    g.validate();
    return g;
}

DiscreteGraph DiscreteGraph::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open graph file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

namespace {

/// Weighted-Laplacian CG on the zero-mean subspace; weights C/L^2.
std::vector<double> laplacian_solve(const DiscreteGraph& g) {
    const int n = g.num_nodes;
    std::vector<double> x(n, 0.0), r(n), p(n), ap(n);

    auto apply = [&](const std::vector<double>& v, std::vector<double>& out) {
        out.assign(n, 0.0);
        for (const auto& e : g.edges) {
            const double w = e.conductivity / (e.length * e.length);
            const double d = v[e.i] - v[e.j];
            out[e.i] += w * d;
            out[e.j] -= w * d;
        }
    };
    auto project = [&](std::vector<double>& v) {
        double s = 0.0;
        for (double a : v) s += a;
        const double m = s / n;
        for (double& a : v) a -= m;
    };

    std::vector<double> b = g.sources;
    project(b);
    r = b;
    p = r;
    double rs = 0.0;
    for (double a : r) rs += a * a;
    double bnorm = std::sqrt(rs);
    if (bnorm == 0.0) return x;

    const double stop = 1e-14 * bnorm;
    for (int it = 0; it < 100 * n + 100; ++it) {
        if (std::sqrt(rs) <= stop) break;
        apply(p, ap);
        double pap = 0.0;
        for (int i = 0; i < n; ++i) pap += p[i] * ap[i];
        if (!(pap > 0.0)) throw SolverError("kirchhoff_solve: CG breakdown");
        const double alpha = rs / pap;
        for (int i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        project(r);
        double rs_new = 0.0;
        for (double a : r) rs_new += a * a;
        const double beta = rs_new / rs;
        rs = rs_new;
        for (int i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    project(x);
    return x;
}

} // namespace

std::vector<double> kirchhoff_solve(const DiscreteGraph& g) {
    g.validate();
    double source_max = 0.0;
    for (double s : g.sources) source_max = std::max(source_max, std::abs(s));
    if (source_max == 0.0) return std::vector<double>(g.num_nodes, 0.0);
    if (!g.positive_subgraph_connected())
        throw SolverError("kirchhoff_solve: positive-conductivity subgraph is disconnected");
    std::vector<double> p = laplacian_solve(g);

    // verify the nodal balance in the infinity norm
    double smax = 0.0;
    for (double s : g.sources) smax = std::max(smax, std::abs(s));
    std::vector<double> res = g.sources;
    for (const auto& e : g.edges) {
        const double w = e.conductivity / (e.length * e.length);
        const double d = p[e.j] - p[e.i];
        res[e.i] += w * d;
        res[e.j] -= w * d;
    }
    double rmax = 0.0;
    for (double v : res) rmax = std::max(rmax, std::abs(v));
    if (rmax > 1e-10 * std::max(1.0, smax))
        throw SolverError("kirchhoff_solve: residual above tolerance");
    return p;
}

std::vector<double> edge_flux(const DiscreteGraph& g, const std::vector<double>& pressures) {
    std::vector<double> q(g.edges.size());
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
        const auto& e = g.edges[k];
        q[k] = e.conductivity * (pressures[e.j] - pressures[e.i]) / e.length;
    }
    return q;
}

double discrete_energy(const DiscreteGraph& g, const ModelParams& params) {
    const std::vector<double> p = kirchhoff_solve(g);
    const std::vector<double> q = edge_flux(g, p);
    double e_total = 0.0;
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
        const auto& e = g.edges[k];
        double kin = 0.0;
        if (e.conductivity > 0.0) kin = q[k] * q[k] / e.conductivity;
        const double met = e.conductivity > 0.0
                               ? (params.nu / params.gamma) * std::pow(e.conductivity, params.gamma)
                               : 0.0;
        e_total += (kin + met) * e.length;
    }
    return e_total;
}

namespace {

double edge_growth_rate(const GraphEdge& e, double dp, const ModelParams& params) {
    const double kin = (dp / e.length) * (dp / e.length); // = Q^2/C^2
    double met;
    if (e.conductivity > 0.0) {
        met = params.nu * std::pow(e.conductivity, params.gamma - 1.0);
    } else if (params.gamma > 1.0) {
        met = 0.0;
    } else if (params.gamma == 1.0) {
        met = params.nu;
    } else {
        return 0.0; // gamma < 1: a pruned edge stays pruned
    }
    double rate = (kin - met) * e.length;
    if (e.conductivity <= 0.0 && rate < 0.0) rate = 0.0;
    return rate;
}

} // namespace

std::vector<double> discrete_stationary_residual(const DiscreteGraph& g,
                                                 const ModelParams& params) {
    const std::vector<double> p = kirchhoff_solve(g);
    std::vector<double> res(g.edges.size(), 0.0);
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
        const auto& e = g.edges[k];
        if (e.conductivity <= 0.0) continue;
        const double dp = p[e.j] - p[e.i];
        const double kin = (dp / e.length) * (dp / e.length);
        res[k] = std::abs(kin - params.nu * std::pow(e.conductivity, params.gamma - 1.0));
    }
    return res;
}

GraphTrajectory gf_evolve(const DiscreteGraph& g0, const ModelParams& params, double dt,
                          int steps, int log_every) {
    params.validate();
    if (!(dt > 0.0)) throw ConfigError("gf_evolve: dt must be positive");
    if (steps < 0) throw ConfigError("gf_evolve: steps must be >= 0");

    GraphTrajectory traj;
    DiscreteGraph g = g0;
    double energy = discrete_energy(g, params);
    double t = 0.0;
    traj.points.push_back({0, 0.0, energy, {}});
    traj.points.back().conductivities.reserve(g.edges.size());
    for (const auto& e : g.edges) traj.points.back().conductivities.push_back(e.conductivity);

    for (int step = 1; step <= steps; ++step) {
        std::vector<double> p = kirchhoff_solve(g);
        std::vector<double> rates(g.edges.size());
        for (std::size_t k = 0; k < g.edges.size(); ++k)
            rates[k] = edge_growth_rate(g.edges[k], p[g.edges[k].j] - p[g.edges[k].i], params);

        double local_dt = dt;
        while (true) {
            DiscreteGraph trial = g;
            bool finite = true;
            for (std::size_t k = 0; k < trial.edges.size(); ++k) {
                double c = g.edges[k].conductivity + local_dt * rates[k];
                if (!std::isfinite(c)) finite = false;
                trial.edges[k].conductivity = std::max(0.0, c);
            }
            if (!finite)
                throw SolverError("gf_evolve: non-finite conductivity at step " +
                                  std::to_string(step));
            const double trial_energy = discrete_energy(trial, params);
            if (trial_energy <= energy + 1e-13 * std::max(1.0, std::abs(energy))) {
                g = std::move(trial);
                energy = trial_energy;
                t += local_dt;
                break;
            }
            local_dt *= 0.5;
            if (local_dt < 1e-12)
                throw SolverError("gf_evolve: step size underflow at step " +
                                  std::to_string(step));
        }

        if (step % std::max(1, log_every) == 0 || step == steps) {
            GraphTrajectoryPoint pt;
            pt.step = step;
            pt.time = t;
            pt.energy = energy;
            pt.conductivities.reserve(g.edges.size());
            for (const auto& e : g.edges) pt.conductivities.push_back(e.conductivity);
            traj.points.push_back(std::move(pt));
        }
    }
    traj.final_graph = g;
    return traj;
}

void write_graph_trajectory_csv(const std::string& path, const GraphTrajectory& t) {
    std::vector<std::string> header = {"step", "time", "energy"};
    const std::size_t ne = t.points.empty() ? 0 : t.points.front().conductivities.size();
    for (std::size_t k = 0; k < ne; ++k) header.push_back("C_" + std::to_string(k + 1));
    std::vector<std::vector<double>> rows;
    for (const auto& pt : t.points) {
        std::vector<double> row = {static_cast<double>(pt.step), pt.time, pt.energy};
        row.insert(row.end(), pt.conductivities.begin(), pt.conductivities.end());
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

} // namespace mesoflow
