#include "mesoflow/fisher_rao.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "mesoflow/detail/flow_driver.hpp"
#include "mesoflow/errors.hpp"

namespace mesoflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double branch_f(double c, double w, double k, const ModelParams& p) {
    return (p.nu / p.gamma) * std::pow(c, p.gamma) - w * c - k;
}

double branch_df(double c, double w, const ModelParams& p) {
    return p.nu * std::pow(c, p.gamma - 1.0) - w;
}

/// Safeguarded Newton on a bracket [lo, hi] with f(lo), f(hi) of opposite
/// sign (or zero at an end).
double newton_bisect(double lo, double hi, double w, double k, const ModelParams& p) {
    double flo = branch_f(lo, w, k, p);
    double fhi = branch_f(hi, w, k, p);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (flo * fhi > 0.0) throw SolverError("branch_solve: bracket lost");
    double c = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double f = branch_f(c, w, k, p);
        if (std::abs(f) < 1e-15 * (1.0 + std::abs(k) + w * c)) return c;
        if ((f > 0.0) == (fhi > 0.0)) hi = c;
        else lo = c;
        const double df = branch_df(c, w, p);
        double next = df != 0.0 ? c - f / df : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - c) < 1e-16 * std::max(1.0, std::abs(c))) return next;
        c = next;
    }
    return c;
}

/// Upper end of a bracket: doubles until f > 0 (gamma > 1 only).
double grow_upper(double start, double w, double k, const ModelParams& p) {
    double hi = std::max(start, 1.0);
    for (int it = 0; it < 400; ++it) {
        if (branch_f(hi, w, k, p) > 0.0) return hi;
        hi *= 2.0;
    }
    throw SolverError("branch_solve: failed to bracket the upper root");
}

} // namespace

double branch_threshold_w(double k, const ModelParams& p) {
    if (p.gamma > 1.0 && k < 0.0)
        return std::pow(p.gamma * std::abs(k) * std::pow(p.nu, 1.0 / (p.gamma - 1.0)) /
                            std::abs(1.0 - p.gamma),
                        (p.gamma - 1.0) / p.gamma);
    if (p.gamma < 1.0 && k > 0.0)
        return std::pow((1.0 - p.gamma) /
                            (p.gamma * k * std::pow(p.nu, 1.0 / (p.gamma - 1.0))),
                        (1.0 - p.gamma) / p.gamma);
    return std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> branch_solve(double w, double k, const ModelParams& params) {
    params.validate();
    if (!(params.nu > 0.0)) throw ConfigError("branch_solve: nu must be positive");
    if (w < 0.0) throw ConfigError("branch_solve: w must be >= 0");
    const double gamma = params.gamma;
    const double nu = params.nu;

    if (gamma == 1.0) {
        if (k > 0.0) {
            if (w < nu) return {k / (nu - w)};
            return {};
        }
        if (k == 0.0) return {0.0};
        // k < 0
        if (w > nu) return {-k / (w - nu)};
        return {};
    }

    if (k == 0.0) {
        // C = 0 plus the power branch (nu/gamma) C^{gamma-1} = w
        if (w == 0.0) return {0.0};
        const double c2 = std::pow(gamma * w / nu, 1.0 / (gamma - 1.0));
        std::vector<double> out = {0.0, c2};
        std::sort(out.begin(), out.end());
        return out;
    }

    // stationary point of f in C (finite for w > 0)
    const double c_star = w > 0.0 ? std::pow(w / nu, 1.0 / (gamma - 1.0)) : 0.0;

    if (gamma > 1.0) {
        if (k > 0.0) {
            // f(0) = -K < 0, single root beyond the minimum
            const double hi = grow_upper(std::max(c_star, 1.0), w, k, params);
            return {newton_bisect(std::max(c_star, 0.0), hi, w, k, params)};
        }
        // K < 0: two roots iff f(c_star) <= 0, i.e. w >= w_min_K
        if (w == 0.0) return {}; // f = (nu/gamma)C^gamma + |K| > 0
        const double fmin = branch_f(c_star, w, k, params);
        if (fmin > 0.0) return {};
        if (fmin == 0.0) return {c_star, c_star};
        const double lower = newton_bisect(0.0, c_star, w, k, params);
        const double hi = grow_upper(c_star, w, k, params);
        const double upper = newton_bisect(c_star, hi, w, k, params);
        return {lower, upper};
    }

    // 0 < gamma < 1
    if (k > 0.0) {
        if (w == 0.0) return {std::pow(gamma * k / nu, 1.0 / gamma)};
        const double fmax = branch_f(c_star, w, k, params);
        if (fmax < 0.0) return {};
        if (fmax == 0.0) return {c_star, c_star};
        const double lower = newton_bisect(0.0, c_star, w, k, params);
        // upper root: f decreases to -infinity past c_star
        double hi = std::max(2.0 * c_star, 1.0);
        for (int it = 0; it < 400 && branch_f(hi, w, k, params) > 0.0; ++it) hi *= 2.0;
        const double upper = newton_bisect(c_star, hi, w, k, params);
        return {lower, upper};
    }
    // K < 0: no root at w = 0, otherwise a single decreasing branch
    if (w == 0.0) return {};
    double hi = std::max(2.0 * c_star, 1.0);
    for (int it = 0; it < 400 && branch_f(hi, w, k, params) > 0.0; ++it) hi *= 2.0;
    return {newton_bisect(c_star, hi, w, k, params)};
}

bool RangeInterval::contains(double k) const {
    if (k < lo || (k == lo && !lo_closed)) return false;
    if (k > hi || (k == hi && !hi_closed)) return false;
    return true;
}

RangeInterval fr_range(double alpha, double beta, const ModelParams& params) {
    params.validate();
    if (alpha < 0.0 || beta < alpha) throw ConfigError("fr_range: need 0 <= alpha <= beta");
    const double gamma = params.gamma;
    const double nu = params.nu;
    RangeInterval out;
    if (gamma > 1.0) {
        out.lo = -((gamma - 1.0) / gamma) * std::pow(beta, 2.0 * gamma / (gamma - 1.0)) /
                 std::pow(nu, 1.0 / (gamma - 1.0));
        out.hi = kInf;
        out.lo_closed = true;
        return out;
    }
    if (gamma < 1.0) {
        out.lo = -kInf;
        if (alpha == 0.0) {
            out.hi = kInf;
            out.hi_closed = true;
            return out;
        }
        out.hi = ((1.0 - gamma) / gamma) /
                 (std::pow(nu, 1.0 / (gamma - 1.0)) *
                  std::pow(alpha, 2.0 * gamma / (1.0 - gamma)));
        out.hi_closed = true;
        return out;
    }
    // gamma = 1
    if (beta * beta > nu) {
        out.lo = -kInf;
        out.hi = kInf;
        return out;
    }
    out.lo = 0.0;
    out.lo_closed = true;
    out.hi = kInf;
    return out;
}

double fr_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ConfigError("fr_distance: weight vectors must share the atom index set");
    double sum_a = 0.0, sum_b = 0.0, bc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < 0.0 || b[i] < 0.0) throw ConfigError("fr_distance: negative weights");
        sum_a += a[i];
        sum_b += b[i];
        bc += std::sqrt(a[i] * b[i]);
    }
    if (std::abs(sum_a - 1.0) > 1e-10 || std::abs(sum_b - 1.0) > 1e-10)
        throw ConfigError("fr_distance: weights must be normalized");
    return 2.0 * std::acos(std::clamp(bc, 0.0, 1.0));
}

void StationaryMeasureSpec::validate(int dim) const {
    if (atoms.empty()) throw ConfigError("stationary spec: needs at least one atom");
    double wsum = 0.0;
    for (const auto& a : atoms) {
        if (a.a.dim() != dim) throw ConfigError("stationary spec: direction dim mismatch");
        if (std::abs(a.a.frobenius_norm() - 1.0) > 1e-12)
            throw ConfigError("stationary spec: directions must have unit Frobenius norm");
        if (min_eigenvalue(a.a) < -1e-10)
            throw ConfigError("stationary spec: directions must be PSD");
        if (a.w < 0.0) throw ConfigError("stationary spec: negative weight");
        wsum += a.w;
    }
    if (std::abs(wsum - 1.0) > 1e-12)
        throw ConfigError("stationary spec: weights must sum to one");
}

StationaryMeasureSpec StationaryMeasureSpec::from_json_text(const std::string& text, int dim) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("stationary spec parse error: ") + e.what());
    }
    StationaryMeasureSpec spec;
    try {
        spec.k = j.at("K").get<double>();
        const std::string branch = j.value("branch", "upper");
        if (branch == "upper") spec.branch = Branch::Upper;
        else if (branch == "lower") spec.branch = Branch::Lower;
        else throw ConfigError("stationary spec: branch must be 'upper' or 'lower'");
        for (const auto& ja : j.at("atoms")) {
            SpecAtom a;
            const auto x = ja.at("x").get<std::vector<double>>();
            for (int k2 = 0; k2 < dim; ++k2) a.x[k2] = x.at(k2);
            a.a = SymTensor::from_packed(dim, ja.at("A_upper_tri").get<std::vector<double>>());
            a.w = ja.at("w").get<double>();
            spec.atoms.push_back(std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("stationary spec schema error: ") + e.what());
    }
    spec.validate(dim);
    return spec;
}

StationaryMeasureSpec StationaryMeasureSpec::from_json_file(const std::string& path, int dim) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open stationary spec: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str(), dim);
}

ParticleEnsemble fr_stationary_measure(const StationaryMeasureSpec& spec,
                                       const PressureField& p, const ModelParams& params) {
    const int dim = p.mesh().dim;
    spec.validate(dim);
    params.validate();

    double alpha = kInf, beta = 0.0;
    for (const auto& g : p.cell_gradients()) {
        double n = 0.0;
        for (int k = 0; k < dim; ++k) n += g[k] * g[k];
        n = std::sqrt(n);
        alpha = std::min(alpha, n);
        beta = std::max(beta, n);
    }
    const RangeInterval range = fr_range(alpha, beta, params);
    if (!range.contains(spec.k))
        throw ConfigError("fr_stationary_measure: K outside the first-variation range");

    ParticleEnsemble mu;
    mu.mesh = p.mesh();
    mu.atoms.reserve(spec.atoms.size());
    for (std::size_t j = 0; j < spec.atoms.size(); ++j) {
        const auto& sa = spec.atoms[j];
        const auto g = p.gradient_at(sa.x.data());
        const double v = sa.a.quad(g.data());
        const std::vector<double> roots = branch_solve(v, spec.k, params);
        if (roots.empty())
            throw ConfigError("fr_stationary_measure: no branch value at atom " +
                              std::to_string(j));
        const double u = spec.branch == StationaryMeasureSpec::Branch::Upper ? roots.back()
                                                                             : roots.front();
        Atom a;
        a.x = sa.x;
        a.c = sa.a;
        a.c *= u;
        a.w = sa.w;
        mu.atoms.push_back(std::move(a));
    }
    mu.normalize_weights();

    for (std::size_t j = 0; j < mu.atoms.size(); ++j) {
        const double phi = first_variation_at(params, p, mu.atoms[j].x.data(), mu.atoms[j].c);
        if (std::abs(phi - spec.k) > 1e-8)
            throw SolverError("fr_stationary_measure: first-variation check failed at atom " +
                              std::to_string(j));
    }
    return mu;
}

ParticleEnsemble fr_step(const ParticleEnsemble& mu, const PressureField& p,
                         const ModelParams& params, double dt) {
    if (dt < 0.0) throw ConfigError("fr_step: dt must be >= 0");
    std::vector<double> phi(mu.atoms.size());
    double phibar = 0.0;
    for (std::size_t i = 0; i < mu.atoms.size(); ++i) {
        phi[i] = first_variation_at(params, p, mu.atoms[i].x.data(), mu.atoms[i].c);
        phibar += mu.atoms[i].w * phi[i];
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < mu.atoms.size(); ++i)
        worst = std::max(worst, dt * (phi[i] - phibar));
    if (worst >= 1.0)
        throw StepRejected("fr_step: weight factor would cross zero", 0.5 / worst * dt);

    ParticleEnsemble out = mu;
    for (std::size_t i = 0; i < out.atoms.size(); ++i)
        out.atoms[i].w = std::max(0.0, mu.atoms[i].w * (1.0 - dt * (phi[i] - phibar)));
    out.normalize_weights();
    return out;
}

FlowRunResult<ParticleEnsemble> fr_run(const ParticleEnsemble& mu0, const ModelParams& params,
                                       const SourceField& s, const FlowSchedule& schedule) {
    mu0.validate();
    params.validate();
    auto moments = [&](const ParticleEnsemble& m, const PressureField& p, double& mean,
                       double& second) {
        mean = 0.0;
        second = 0.0;
        for (const auto& a : m.atoms) {
            const double phi = first_variation_at(params, p, a.x.data(), a.c);
            mean += a.w * phi;
            second += a.w * phi * phi;
        }
    };
    return detail::run_flow_loop<ParticleEnsemble>(
        mu0, schedule,
        [&](const ParticleEnsemble& m, PressureField* p) { return energy_total(m, params, s, p); },
        [&](const ParticleEnsemble& m, const PressureField& p, double dt) {
            return fr_step(m, p, params, dt);
        },
        [&](const ParticleEnsemble& m, const PressureField& p) {
            // spread of the first variation around its mean
            double mean, second;
            moments(m, p, mean, second);
            double worst = 0.0;
            for (const auto& a : m.atoms) {
                const double phi = first_variation_at(params, p, a.x.data(), a.c);
                worst = std::max(worst, std::abs(phi - mean));
            }
            return worst;
        },
        [&](const ParticleEnsemble& m, const PressureField& p) {
            double mean, second;
            moments(m, p, mean, second);
            return -(second - mean * mean);
        });
}

} // namespace mesoflow
