#include "mesoflow/ensemble.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "mesoflow/errors.hpp"
#include "mesoflow/io.hpp"
#include "mesoflow/rng.hpp"

namespace mesoflow {

void ParticleEnsemble::validate() const {
    mesh.validate();
    double wsum = 0.0;
    for (const auto& a : atoms) {
        if (a.w < 0.0) throw ConfigError("ensemble: negative atom weight");
        if (!mesh.contains(a.x.data())) throw ConfigError("ensemble: atom outside domain");
        if (a.c.dim() != mesh.dim) throw ConfigError("ensemble: tensor dim mismatch");
        if (min_eigenvalue(a.c) < -1e-10) throw ConfigError("ensemble: atom tensor not PSD");
        wsum += a.w;
    }
    if (std::abs(wsum - 1.0) > 1e-12)
        throw ConfigError("ensemble: weights must sum to one");
}

void ParticleEnsemble::normalize_weights() {
    double wsum = 0.0;
    for (const auto& a : atoms) wsum += a.w;
    if (!(wsum > 0.0)) throw ConfigError("ensemble: total weight must be positive");
    for (auto& a : atoms) a.w /= wsum;
}

std::string ParticleEnsemble::to_jsonl() const {
    std::ostringstream os;
    for (const auto& a : atoms) {
        os << "{\"x\":[";
        for (int k = 0; k < mesh.dim; ++k) os << (k ? "," : "") << format_double(a.x[k]);
        os << "],\"C\":[";
        const auto packed = a.c.vec();
        for (std::size_t k = 0; k < packed.size(); ++k)
            os << (k ? "," : "") << format_double(packed[k]);
        os << "],\"w\":" << format_double(a.w) << "}\n";
    }
    return os.str();
}

ParticleEnsemble ParticleEnsemble::from_jsonl(const StructuredMesh& mesh,
                                              const std::string& text) {
    ParticleEnsemble mu;
    mu.mesh = mesh;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("ensemble jsonl parse error: ") + e.what());
        }
        Atom a;
        const auto x = j.at("x").get<std::vector<double>>();
        for (int k = 0; k < mesh.dim; ++k) a.x[k] = x.at(k);
        a.c = SymTensor::from_packed(mesh.dim, j.at("C").get<std::vector<double>>());
        a.w = j.at("w").get<double>();
        mu.atoms.push_back(std::move(a));
    }
    mu.validate();
    return mu;
}

void ScalarEnsemble::validate() const {
    mesh.validate();
    double wsum = 0.0;
    for (const auto& a : atoms) {
        if (a.w < 0.0) throw ConfigError("scalar ensemble: negative weight");
        if (a.c < 0.0) throw ConfigError("scalar ensemble: negative conductivity");
        if (!mesh.contains(a.x.data())) throw ConfigError("scalar ensemble: atom outside domain");
        double n2 = 0.0;
        for (int k = 0; k < mesh.dim; ++k) n2 += a.theta[k] * a.theta[k];
        if (std::abs(n2 - 1.0) > 1e-10)
            throw ConfigError("scalar ensemble: direction must be a unit vector");
        if (a.theta[0] < -1e-12)
            throw ConfigError("scalar ensemble: direction must have theta_1 >= 0");
        wsum += a.w;
    }
    if (std::abs(wsum - 1.0) > 1e-12)
        throw ConfigError("scalar ensemble: weights must sum to one");
}

void ScalarEnsemble::normalize_weights() {
    double wsum = 0.0;
    for (const auto& a : atoms) wsum += a.w;
    if (!(wsum > 0.0)) throw ConfigError("scalar ensemble: total weight must be positive");
    for (auto& a : atoms) a.w /= wsum;
}

PermeabilityField deposit_permeability(const ParticleEnsemble& mu) {
    PermeabilityField f = PermeabilityField::zero(mu.mesh);
    const double inv_vol = 1.0 / mu.mesh.cell_volume();
    for (const auto& a : mu.atoms) {
        const int c = mu.mesh.locate_cell(a.x.data());
        SymTensor t = a.c;
        t *= a.w * inv_vol;
        f.cell_tensors[c] += t;
    }
    return f;
}

PermeabilityField deposit_permeability_scalar(const ScalarEnsemble& eta) {
    PermeabilityField f = PermeabilityField::zero(eta.mesh);
    const double inv_vol = 1.0 / eta.mesh.cell_volume();
    for (const auto& a : eta.atoms) {
        const int c = eta.mesh.locate_cell(a.x.data());
        std::vector<double> th(a.theta.begin(), a.theta.begin() + eta.mesh.dim);
        SymTensor t = SymTensor::outer(th);
        t *= a.c * a.w * inv_vol;
        f.cell_tensors[c] += t;
    }
    return f;
}

namespace {

EnergyBreakdown energy_from_field(const StructuredMesh& mesh, const PermeabilityField& perm,
                                  double metabolic, const ModelParams& params,
                                  const SourceField& s, PressureField* pressure_out,
                                  const CgOptions& opts) {
    const PermeabilityField sane = perm.psd_sanitized();
    PressureField p = assemble_and_solve(mesh, sane, params.r, s, nullptr, opts);
    EnergyBreakdown e;
    e.kinetic = kinetic_quadratic_form(mesh, sane.cell_tensors, p);
    e.background = params.r * dirichlet_quadratic_form(mesh, p);
    e.metabolic = metabolic;
    e.source_pairing = source_pairing(mesh, s, p);
    e.total = e.kinetic + e.metabolic + e.background;
    if (pressure_out) *pressure_out = std::move(p);
    return e;
}

} // namespace

EnergyBreakdown energy_total(const ParticleEnsemble& mu, const ModelParams& params,
                             const SourceField& s, PressureField* pressure_out,
                             const CgOptions& opts) {
    params.validate();
    double metabolic = 0.0;
    for (const auto& a : mu.atoms)
        metabolic += a.w * (params.nu / params.gamma) *
                     std::pow(a.c.frobenius_norm(), params.gamma);
    return energy_from_field(mu.mesh, deposit_permeability(mu), metabolic, params, s,
                             pressure_out, opts);
}

EnergyBreakdown energy_total_scalar(const ScalarEnsemble& eta, const ModelParams& params,
                                    const SourceField& s, PressureField* pressure_out,
                                    const CgOptions& opts) {
    params.validate();
    double metabolic = 0.0;
    for (const auto& a : eta.atoms)
        metabolic += a.w * (params.nu / params.gamma) * std::pow(a.c, params.gamma);
    return energy_from_field(eta.mesh, deposit_permeability_scalar(eta), metabolic, params, s,
                             pressure_out, opts);
}

double first_variation_at(const ModelParams& params, const PressureField& p,
                          const double* x, const SymTensor& c) {
    const auto g = p.gradient_at(x);
    const double kinetic = c.quad(g.data());
    return -kinetic + (params.nu / params.gamma) * std::pow(c.frobenius_norm(), params.gamma);
}

ConvexityProbeResult convexity_probe(const ParticleEnsemble& mu0, const ParticleEnsemble& mu1,
                                     const ModelParams& params, const SourceField& s, int n_t) {
    if (mu0.atoms.size() != mu1.atoms.size())
        throw ConfigError("convexity_probe: ensembles must share atom sites");
    for (std::size_t i = 0; i < mu0.atoms.size(); ++i) {
        const auto& a = mu0.atoms[i];
        const auto& b = mu1.atoms[i];
        for (int k = 0; k < mu0.mesh.dim; ++k)
            if (a.x[k] != b.x[k])
                throw ConfigError("convexity_probe: atom positions differ");
        SymTensor d = a.c - b.c;
        if (d.frobenius_norm() > 0.0)
            throw ConfigError("convexity_probe: atom tensors differ");
    }
    if (n_t < 3) throw ConfigError("convexity_probe: need at least 3 samples");

    CgOptions tight;
    tight.rel_tol = 1e-14;
    ConvexityProbeResult out;
    ParticleEnsemble mix = mu0;
    for (int k = 0; k < n_t; ++k) {
        const double t = static_cast<double>(k) / (n_t - 1);
        for (std::size_t i = 0; i < mix.atoms.size(); ++i)
            mix.atoms[i].w = (1.0 - t) * mu0.atoms[i].w + t * mu1.atoms[i].w;
        const EnergyBreakdown e = energy_total(mix, params, s, nullptr, tight);
        out.trace.push_back({t, e.total});
    }
    double min_dd = 0.0;
    bool first = true;
    for (int k = 1; k + 1 < n_t; ++k) {
        const double dd = out.trace[k + 1].energy - 2.0 * out.trace[k].energy +
                          out.trace[k - 1].energy;
        if (first || dd < min_dd) min_dd = dd;
        first = false;
    }
    out.min_second_difference = min_dd;
    return out;
}

ParticleEnsemble sample_initial(const StructuredMesh& mesh, const EnsembleSpec& spec,
                                std::uint64_t seed) {
    mesh.validate();
    ParticleEnsemble mu;
    mu.mesh = mesh;

    if (spec.kind == EnsembleSpec::Kind::Custom) {
        mu.atoms = spec.custom_atoms;
        mu.normalize_weights();
        mu.validate();
        return mu;
    }
    if (spec.count < 1) throw ConfigError("sample_initial: count must be >= 1");

    Rng rng(seed);
    const int d = mesh.dim;
    mu.atoms.reserve(spec.count);
    for (int i = 0; i < spec.count; ++i) {
        Atom a;
        for (int k = 0; k < d; ++k)
            a.x[k] = mesh.origin[k] + rng.uniform() * mesh.extent[k];
        if (spec.kind == EnsembleSpec::Kind::Monokinetic) {
            a.c = spec.monokinetic_c.dim() == d ? spec.monokinetic_c : SymTensor::zero(d);
        } else {
            // Wishart-like draw G G^T / d, PSD by construction
            double g[kMaxDim][kMaxDim];
            for (int r = 0; r < d; ++r)
                for (int cidx = 0; cidx < d; ++cidx) g[r][cidx] = rng.normal();
            SymTensor t(d);
            for (int r = 0; r < d; ++r)
                for (int cidx = r; cidx < d; ++cidx) {
                    double sum = 0.0;
                    for (int k = 0; k < d; ++k) sum += g[r][k] * g[cidx][k];
                    t.set(r, cidx, spec.wishart_scale * sum / d);
                }
            a.c = t;
        }
        a.w = 1.0 / spec.count;
        mu.atoms.push_back(std::move(a));
    }
    mu.normalize_weights();
    mu.validate();
    return mu;
}

} // namespace mesoflow
