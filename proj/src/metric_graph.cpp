#include "mesoflow/metric_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "mesoflow/errors.hpp"
#include "mesoflow/io.hpp"

namespace mesoflow {

void MetricGraph::validate() const {
    if (num_nodes() < 1) throw ConfigError("metric graph: needs at least one node");
    if (node_positions.size() != node_sources.size())
        throw ConfigError("metric graph: node arrays mismatch");
    std::vector<std::pair<int, int>> seen;
    double conservation = 0.0, scale = 0.0;
    for (double s : node_sources) {
        conservation += s;
        scale += std::abs(s);
    }
    for (const auto& e : edges) {
        if (e.i < 0 || e.i >= num_nodes() || e.j < 0 || e.j >= num_nodes())
            throw ConfigError("metric graph: edge endpoint out of range");
        if (e.i == e.j) throw ConfigError("metric graph: self-loops not allowed");
        if (!(e.length > 0.0)) throw ConfigError("metric graph: edge length must be positive");
        if (e.cells < 1) throw ConfigError("metric graph: edges need at least one cell");
        if (static_cast<int>(e.beta.size()) != e.cells ||
            static_cast<int>(e.source.size()) != e.cells)
            throw ConfigError("metric graph: per-cell arrays must have 'cells' entries");
        for (double b : e.beta)
            if (!(b > 0.0)) throw ConfigError("metric graph: beta must be positive");
        const std::pair<int, int> key{std::min(e.i, e.j), std::max(e.i, e.j)};
        if (std::find(seen.begin(), seen.end(), key) != seen.end())
            throw ConfigError("metric graph: duplicate edge");
        seen.push_back(key);
        const double h = e.length / e.cells;
        for (double sv : e.source) {
            conservation += sv * h;
            scale += std::abs(sv) * h;
        }
    }
    if (std::abs(conservation) > 1e-12 * std::max(scale, 1.0))
        throw ConfigError("metric graph: sources must satisfy global conservation");
}

bool MetricGraph::connected() const {
    const int n = num_nodes();
    if (n <= 1) return true;
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };
    for (const auto& e : edges) parent[find(e.i)] = find(e.j);
    const int root = find(0);
    for (int i = 1; i < n; ++i)
        if (find(i) != root) return false;
    return true;
}

MetricGraph MetricGraph::from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("metric graph parse error: ") + e.what());
    }
    MetricGraph g;
    try {
        for (const auto& jn : j.at("nodes")) {
            std::array<double, 2> x{0.0, 0.0};
            if (jn.contains("x")) {
                const auto xv = jn.at("x").get<std::vector<double>>();
                for (std::size_t k = 0; k < std::min<std::size_t>(2, xv.size()); ++k) x[k] = xv[k];
            }
            g.node_positions.push_back(x);
            g.node_sources.push_back(jn.at("S").get<double>());
        }
        for (const auto& je : j.at("edges")) {
            MetricEdge e;
            e.i = je.at("i").get<int>();
            e.j = je.at("j").get<int>();
            e.length = je.at("L").get<double>();
            e.cells = je.value("cells", 8);
            auto fill = [&](const char* key, double fallback) {
                std::vector<double> out(e.cells, fallback);
                if (!je.contains(key)) return out;
                const auto& v = je.at(key);
                if (v.is_number()) out.assign(e.cells, v.get<double>());
                else out = v.get<std::vector<double>>();
                if (static_cast<int>(out.size()) != e.cells)
                    throw ConfigError(std::string("metric graph: ") + key + " length mismatch");
                return out;
            };
            e.beta = fill("beta", 1.0 / e.length);
            e.source = fill("S_profile", 0.0);
            g.edges.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("metric graph schema error: ") + e.what());
    }
    g.validate();
    return g;
}

MetricGraph MetricGraph::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open metric graph file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

namespace {

/// Unknown layout: [node 0..N-1, edge0 interior 0..m0-2, edge1 interior ...].
struct Layout {
    int n_nodes = 0;
    std::vector<int> edge_offset; // first interior dof of each edge
    int total = 0;
};

Layout make_layout(const MetricGraph& g) {
    Layout lay;
    lay.n_nodes = g.num_nodes();
    int at = lay.n_nodes;
    for (const auto& e : g.edges) {
        lay.edge_offset.push_back(at);
        at += e.cells - 1;
    }
    lay.total = at;
    return lay;
}

/// Value of interface k (0..cells) of edge e from the unknown vector.
double iface_value(const MetricGraph& g, const Layout& lay, const std::vector<double>& u,
                   std::size_t ei, int k) {
    const MetricEdge& e = g.edges[ei];
    if (k == 0) return u[e.i];
    if (k == e.cells) return u[e.j];
    return u[lay.edge_offset[ei] + k - 1];
}

int iface_index(const MetricGraph& g, const Layout& lay, std::size_t ei, int k) {
    const MetricEdge& e = g.edges[ei];
    if (k == 0) return e.i;
    if (k == e.cells) return e.j;
    return lay.edge_offset[ei] + k - 1;
}

struct FunctionalEval {
    double value = 0.0;
    std::vector<double> gradient;
};

FunctionalEval eval_functional(const MetricGraph& g, const Layout& lay,
                               const std::vector<double>& u, const ModelParams& params) {
    const double q_exp = 2.0 / (params.gamma - 1.0);
    const double nu_factor = std::pow(1.0 / params.nu, 1.0 / (params.gamma - 1.0));
    const double c_gamma = (params.gamma - 1.0) / (2.0 * params.gamma);

    FunctionalEval out;
    out.gradient.assign(lay.total, 0.0);
    for (int i = 0; i < lay.n_nodes; ++i) {
        out.value -= g.node_sources[i] * u[i];
        out.gradient[i] -= g.node_sources[i];
    }
    for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
        const MetricEdge& e = g.edges[ei];
        const double h = e.length / e.cells;
        for (int c = 0; c < e.cells; ++c) {
            const double ul = iface_value(g, lay, u, ei, c);
            const double ur = iface_value(g, lay, u, ei, c + 1);
            const int il = iface_index(g, lay, ei, c);
            const int ir = iface_index(g, lay, ei, c + 1);
            const double grad = (ur - ul) / h;
            const double agrad = std::abs(grad);
            out.value += c_gamma * nu_factor * e.beta[c] * std::pow(agrad, q_exp + 2.0) * h;
            const double flux = nu_factor * e.beta[c] * std::pow(agrad, q_exp) * grad;
            out.gradient[ir] += flux;
            out.gradient[il] -= flux;
            // midpoint pairing of the edge source
            const double pbar = 0.5 * (ul + ur);
            out.value -= e.source[c] * pbar * h;
            out.gradient[il] -= 0.5 * e.source[c] * h;
            out.gradient[ir] -= 0.5 * e.source[c] * h;
        }
    }
    return out;
}

/// Dense symmetric solve of H d = -grad on the zero-sum subspace. The
/// system is small (nodes plus interior interfaces), so a dense LDL^T
/// with a deflation shift keeps it simple and deterministic.
std::vector<double> newton_direction(const MetricGraph& g, const Layout& lay,
                                     const std::vector<double>& u, const ModelParams& params,
                                     const std::vector<double>& grad) {
    const int n = lay.total;
    const double q_exp = 2.0 / (params.gamma - 1.0);
    const double nu_factor = std::pow(1.0 / params.nu, 1.0 / (params.gamma - 1.0));

    std::vector<double> h_dense(static_cast<std::size_t>(n) * n, 0.0);
    double scale = 0.0;
    for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
        const MetricEdge& e = g.edges[ei];
        const double h = e.length / e.cells;
        for (int c = 0; c < e.cells; ++c) {
            const double ul = iface_value(g, lay, u, ei, c);
            const double ur = iface_value(g, lay, u, ei, c + 1);
            const int il = iface_index(g, lay, ei, c);
            const int ir = iface_index(g, lay, ei, c + 1);
            const double grad_c = (ur - ul) / h;
            const double w =
                nu_factor * e.beta[c] * (q_exp + 1.0) * std::pow(std::abs(grad_c), q_exp) / h;
            h_dense[static_cast<std::size_t>(il) * n + il] += w;
            h_dense[static_cast<std::size_t>(ir) * n + ir] += w;
            h_dense[static_cast<std::size_t>(il) * n + ir] -= w;
            h_dense[static_cast<std::size_t>(ir) * n + il] -= w;
            scale = std::max(scale, w);
        }
    }
    // regularization against flat cells; plus a rank-one gauge shift that
    // pins the constant kernel without touching the zero-sum subspace
    const double eps = std::max(1e-12 * std::max(scale, 1.0), 1e-14);
    for (int i = 0; i < n; ++i) h_dense[static_cast<std::size_t>(i) * n + i] += eps;
    const double gauge = std::max(scale, 1.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) h_dense[static_cast<std::size_t>(i) * n + j] += gauge / n;

    // Cholesky
    std::vector<double> chol = h_dense;
    for (int k = 0; k < n; ++k) {
        double d = chol[static_cast<std::size_t>(k) * n + k];
        for (int m = 0; m < k; ++m) {
            const double lkm = chol[static_cast<std::size_t>(k) * n + m];
            d -= lkm * lkm;
        }
        if (!(d > 0.0)) throw SolverError("solve_pressure: Newton system not positive definite");
        const double lkk = std::sqrt(d);
        chol[static_cast<std::size_t>(k) * n + k] = lkk;
        for (int i = k + 1; i < n; ++i) {
            double v = chol[static_cast<std::size_t>(i) * n + k];
            for (int m = 0; m < k; ++m)
                v -= chol[static_cast<std::size_t>(i) * n + m] *
                     chol[static_cast<std::size_t>(k) * n + m];
            chol[static_cast<std::size_t>(i) * n + k] = v / lkk;
        }
    }
    std::vector<double> rhs(n);
    double gsum = 0.0;
    for (double v : grad) gsum += v;
    for (int i = 0; i < n; ++i) rhs[i] = -(grad[i] - gsum / n);
    // forward/backward substitution
    for (int i = 0; i < n; ++i) {
        double v = rhs[i];
        for (int m = 0; m < i; ++m) v -= chol[static_cast<std::size_t>(i) * n + m] * rhs[m];
        rhs[i] = v / chol[static_cast<std::size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        double v = rhs[i];
        for (int m = i + 1; m < n; ++m) v -= chol[static_cast<std::size_t>(m) * n + i] * rhs[m];
        rhs[i] = v / chol[static_cast<std::size_t>(i) * n + i];
    }
    // keep the direction in the zero-sum subspace
    double dsum = 0.0;
    for (double v : rhs) dsum += v;
    for (double& v : rhs) v -= dsum / n;
    return rhs;
}

} // namespace

MetricPressure solve_pressure(const MetricGraph& g, const ModelParams& params,
                              MetricSolveReport* report) {
    g.validate();
    params.validate();
    if (!(params.gamma > 1.0))
        throw ConfigError("solve_pressure: the semi-discrete model requires gamma > 1");
    if (!g.connected()) throw SolverError("solve_pressure: graph is disconnected");

    const Layout lay = make_layout(g);
    std::vector<double> u(lay.total, 0.0);

    double source_scale = 0.0;
    for (double s : g.node_sources) source_scale = std::max(source_scale, std::abs(s));
    for (const auto& e : g.edges)
        for (double s : e.source) source_scale = std::max(source_scale, std::abs(s));
    const double tol = 1e-10 * std::max(1.0, source_scale);

    FunctionalEval f = eval_functional(g, lay, u, params);
    std::vector<double> history;
    std::vector<double> fhistory = {f.value};
    auto grad_norm_inf = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    };

    int it = 0;
    const int max_iter = 200;
    for (; it < max_iter; ++it) {
        const double gn = grad_norm_inf(f.gradient);
        history.push_back(gn);
        if (gn <= tol) break;
        const std::vector<double> dir = newton_direction(g, lay, u, params, f.gradient);
        double slope = 0.0;
        for (int i = 0; i < lay.total; ++i) slope += f.gradient[i] * dir[i];
        if (slope > 0.0) throw SolverError("solve_pressure: Newton direction not descent");

        double step = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving) {
            std::vector<double> trial(u.size());
            for (std::size_t i = 0; i < u.size(); ++i) trial[i] = u[i] + step * dir[i];
            const FunctionalEval ft = eval_functional(g, lay, trial, params);
            // near machine precision the functional decrease drops below
            // the evaluation noise; the gradient-norm decrease keeps the
            // terminal Newton steps alive
            if (ft.value <= f.value + 1e-4 * step * slope ||
                grad_norm_inf(ft.gradient) < gn) {
                u = std::move(trial);
                f = ft;
                fhistory.push_back(f.value);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            std::ostringstream os;
            os << "solve_pressure: Newton stagnation at iteration " << it << "; residuals:";
            for (double r : history) os << " " << format_double(r);
            throw SolverError(os.str());
        }
    }
    if (it == max_iter) {
        std::ostringstream os;
        os << "solve_pressure: no convergence after " << max_iter << " iterations; residuals:";
        for (std::size_t k = history.size() >= 5 ? history.size() - 5 : 0; k < history.size(); ++k)
            os << " " << format_double(history[k]);
        throw SolverError(os.str());
    }

    // zero-mean gauge over all pressure unknowns
    double mean = 0.0;
    for (double v : u) mean += v;
    mean /= lay.total;
    for (double& v : u) v -= mean;

    MetricPressure out;
    out.node_values.assign(u.begin(), u.begin() + lay.n_nodes);
    for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
        std::vector<double> vals(g.edges[ei].cells + 1);
        for (int k = 0; k <= g.edges[ei].cells; ++k) vals[k] = iface_value(g, lay, u, ei, k);
        out.edge_values.push_back(std::move(vals));
    }
    if (report) {
        report->newton_iterations = it;
        report->gradient_norm = history.empty() ? 0.0 : history.back();
        report->functional_value = f.value;
        report->residual_history = std::move(history);
        report->functional_history = std::move(fhistory);
    }
    return out;
}

ConsistencyReport consistency_check(const MetricGraph& g, const ModelParams& params) {
    g.validate();
    for (const auto& e : g.edges) {
        for (double sv : e.source)
            if (sv != 0.0)
                throw ConfigError("consistency_check: requires node-only sources");
        for (double b : e.beta)
            if (std::abs(b - 1.0 / e.length) > 1e-12 * std::max(1.0, 1.0 / e.length))
                throw ConfigError("consistency_check: requires beta = 1/L per edge");
    }

    const MetricPressure p = solve_pressure(g, params);
    ConsistencyReport rep;

    for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
        const auto& vals = p.edge_values[ei];
        const int m = g.edges[ei].cells;
        const double p0 = vals.front(), p1 = vals.back();
        for (int k = 0; k <= m; ++k) {
            const double affine = p0 + (p1 - p0) * (static_cast<double>(k) / m);
            rep.max_affine_deviation =
                std::max(rep.max_affine_deviation, std::abs(vals[k] - affine));
        }
    }

    // recovered discrete graph with the stationary conductivity relation
    DiscreteGraph dg;
    dg.num_nodes = g.num_nodes();
    dg.sources = g.node_sources;
    const double nu_factor = std::pow(1.0 / params.nu, 1.0 / (params.gamma - 1.0));
    for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
        const auto& e = g.edges[ei];
        GraphEdge ge;
        ge.i = e.i;
        ge.j = e.j;
        ge.length = e.length;
        const double dp = (p.node_values[e.j] - p.node_values[e.i]) / e.length;
        ge.conductivity = nu_factor * std::pow(std::abs(dp), 2.0 / (params.gamma - 1.0));
        dg.edges.push_back(ge);
    }

    std::vector<double> residual = dg.sources;
    for (const auto& e : dg.edges) {
        const double w = e.conductivity / (e.length * e.length);
        const double d = p.node_values[e.j] - p.node_values[e.i];
        residual[e.i] += w * d;
        residual[e.j] -= w * d;
    }
    for (double r : residual)
        rep.kirchhoff_residual = std::max(rep.kirchhoff_residual, std::abs(r));

    for (std::size_t k = 0; k < dg.edges.size(); ++k) {
        const auto& e = dg.edges[k];
        if (e.conductivity <= 0.0) continue;
        const double dp = (p.node_values[e.j] - p.node_values[e.i]) / e.length;
        const double res =
            std::abs(dp * dp - params.nu * std::pow(e.conductivity, params.gamma - 1.0));
        rep.stationary_residual = std::max(rep.stationary_residual, res);
    }
    rep.recovered_graph = std::move(dg);
    return rep;
}

void write_metric_pressure_csv(const std::string& path, const MetricGraph& g,
                               const MetricPressure& p) {
    std::vector<std::vector<double>> rows;
    for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
        const double h = g.edges[ei].length / g.edges[ei].cells;
        for (std::size_t k = 0; k < p.edge_values[ei].size(); ++k)
            rows.push_back({static_cast<double>(ei), k * h, p.edge_values[ei][k]});
    }
    write_csv(path, {"edge", "s", "p"}, rows);
}

} // namespace mesoflow
