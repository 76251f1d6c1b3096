#pragma once

#include <string>
#include <vector>

#include "mesoflow/tensor.hpp"

namespace mesoflow {

struct GraphEdge {
    int i = 0;
    int j = 0;
    double length = 1.0;
    double conductivity = 0.0;
};

/// Undirected graph with edge lengths/conductivities and nodal sources.
/// At most one edge per vertex pair, no self-loops, sources sum to zero.
struct DiscreteGraph {
    int num_nodes = 0;
    std::vector<GraphEdge> edges;
    std::vector<double> sources;

    void validate() const;
    /// Connectivity of the subgraph of edges with positive conductivity.
    bool positive_subgraph_connected() const;

    static DiscreteGraph from_json_file(const std::string& path);
    static DiscreteGraph from_json_text(const std::string& text);
};

/// Nodal pressures from the Kirchhoff balance
///   - sum_j C_ij (P_j - P_i) / L_ij^2 = S_i,
/// normalized to zero mean. Residual infinity-norm <= 1e-10 max(1,|S|_inf).
std::vector<double> kirchhoff_solve(const DiscreteGraph& g);

/// Oriented edge fluxes Q_ij = C_ij (P_j - P_i) / L_ij.
std::vector<double> edge_flux(const DiscreteGraph& g, const std::vector<double>& pressures);

/// E[C] = sum_edges (Q^2/C + (nu/gamma) C^gamma) L, with Q^2/C := 0 on
/// zero-conductivity edges.
double discrete_energy(const DiscreteGraph& g, const ModelParams& params);

/// |Q^2/C^2 - nu C^{gamma-1}| per edge (zero on edges with C = 0); the
/// kinetic quotient is evaluated as (dP/L)^2.
std::vector<double> discrete_stationary_residual(const DiscreteGraph& g,
                                                 const ModelParams& params);

struct GraphTrajectoryPoint {
    int step = 0;
    double time = 0.0;
    double energy = 0.0;
    std::vector<double> conductivities;
};

struct GraphTrajectory {
    std::vector<GraphTrajectoryPoint> points;
    DiscreteGraph final_graph;
};

/// Explicit Euler integration of dC/dt = (Q^2/C^2 - nu C^{gamma-1}) L with
/// a Kirchhoff re-solve each step. Steps that would increase the energy
/// are retried with a halved dt (down to 1e-12). Conductivities are
/// clamped at zero; an edge at zero stays frozen unless its growth term
/// wins again (for gamma < 1 it never does).
GraphTrajectory gf_evolve(const DiscreteGraph& g, const ModelParams& params, double dt,
                          int steps, int log_every = 1);

void write_graph_trajectory_csv(const std::string& path, const GraphTrajectory& t);

} // namespace mesoflow
