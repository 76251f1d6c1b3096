#pragma once

#include <array>
#include <string>
#include <vector>

#include "mesoflow/graph.hpp"
#include "mesoflow/tensor.hpp"

namespace mesoflow {

struct MetricEdge {
    int i = 0;
    int j = 0;
    double length = 1.0;
    int cells = 8;               // arclength cells
    std::vector<double> beta;    // per-cell weight > 0
    std::vector<double> source;  // per-cell edge source density S_ij(s)
};

/// Metric graph embedded in Omega: nodes with point sources, edges with
/// arclength grids, weights beta and edge source profiles. Global
/// conservation: sum_i S_i + sum_edges int S_ij ds = 0.
struct MetricGraph {
    std::vector<std::array<double, 2>> node_positions;
    std::vector<double> node_sources;
    std::vector<MetricEdge> edges;

    int num_nodes() const { return static_cast<int>(node_sources.size()); }
    void validate() const;
    bool connected() const;

    static MetricGraph from_json_file(const std::string& path);
    static MetricGraph from_json_text(const std::string& text);
};

/// Pressure on the metric graph: nodal values plus the interior
/// interface values along each edge (edge e stores cells+1 values
/// including both endpoint nodes, oriented from node i to node j).
struct MetricPressure {
    std::vector<double> node_values;
    std::vector<std::vector<double>> edge_values;
};

struct MetricSolveReport {
    int newton_iterations = 0;
    double gradient_norm = 0.0;       // infinity norm of the functional gradient
    double functional_value = 0.0;
    std::vector<double> residual_history;
    std::vector<double> functional_history; // value after each accepted step
};

/// Damped-Newton minimization of the relaxed edge functional; the nodal
/// rows of its gradient are the Kirchhoff-type transmission conditions,
/// so at convergence the transmission residual matches gradient_norm.
/// Pressure is normalized to zero mean over all unknowns. gamma > 1 only.
MetricPressure solve_pressure(const MetricGraph& g, const ModelParams& params,
                              MetricSolveReport* report = nullptr);

struct ConsistencyReport {
    double max_affine_deviation = 0.0; // from per-edge linearity
    double kirchhoff_residual = 0.0;   // nodal residual of the recovered discrete relation
    double stationary_residual = 0.0;  // discrete_stationary_residual of the built graph
    DiscreteGraph recovered_graph;
};

/// For node-only sources with beta = 1/L per edge: verifies per-edge
/// linearity of p and that the recovered conductivities
/// C = nu^{-1/(gamma-1)} |dP/L|^{2/(gamma-1)} satisfy the discrete
/// Kirchhoff balance.
ConsistencyReport consistency_check(const MetricGraph& g, const ModelParams& params);

/// CSV per edge: (edge, s, p).
void write_metric_pressure_csv(const std::string& path, const MetricGraph& g,
                               const MetricPressure& p);

} // namespace mesoflow
