#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mesoflow/config.hpp"
#include "mesoflow/flows.hpp"
#include "mesoflow/io.hpp"
#include "mesoflow/parallel.hpp"
#include "mesoflow/runner.hpp"

using namespace mesoflow;

namespace {

const char* kDiscreteConfig = R"({
    "model": "discrete",
    "params": {"gamma": 2.0, "nu": 1.0},
    "graph": {"nodes": 2,
              "edges": [{"i":0,"j":1,"L":1.0,"C":2.0}],
              "sources": [1.0, -1.0]}
})";

std::string temp_dir(const std::string& leaf) {
    const auto dir = std::filesystem::temp_directory_path() / "mesoflow_tests" / leaf;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

} // namespace

TEST_CASE("parse_config: documented defaults") {
    const ExperimentConfig cfg = parse_config_text(kDiscreteConfig);
    CHECK(cfg.model == "discrete");
    CHECK(cfg.schedule.dt == 1e-3);
    CHECK(cfg.schedule.steps == 10000);
    CHECK(cfg.params.r == 1.0);
    CHECK(cfg.warnings.empty());
}

TEST_CASE("parse_config: invalid values are reported together") {
    const char* bad = R"({"model": "discrete", "params": {"gamma": 0.0, "nu": -1.0},
                          "graph": {"nodes":2, "edges":[], "sources":[0,0]}})";
    try {
        parse_config_text(bad);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("gamma must be positive") != std::string::npos);
        CHECK(msg.find("nu must be non-negative") != std::string::npos);
    }
}

TEST_CASE("parse_config: unknown keys warn but do not fail") {
    const char* cfg_text = R"({"model": "discrete", "frobnicate": 1,
        "graph": {"nodes":2, "edges":[{"i":0,"j":1,"L":1,"C":1}], "sources":[1,-1]}})";
    const ExperimentConfig cfg = parse_config_text(cfg_text);
    REQUIRE(cfg.warnings.size() == 1);
    CHECK(cfg.warnings[0].find("frobnicate") != std::string::npos);
}

TEST_CASE("parse_config: missing model-specific payloads") {
    CHECK_THROWS_AS(parse_config_text(R"({"model": "discrete"})"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"model": "stationary-fr"})"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"model": "nonsense"})"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("not json"), ConfigError);
}

TEST_CASE("run_experiment: discrete two-node run reaches the fixed point") {
    ExperimentConfig cfg = parse_config_text(kDiscreteConfig);
    cfg.schedule.dt = 0.2;
    cfg.schedule.steps = 300;
    cfg.out_dir = temp_dir("discrete");
    const RunResult result = run_experiment(cfg);
    CHECK(result.summary_json.find("final_C") != std::string::npos);
    const auto summary = nlohmann::json::parse(result.summary_json);
    CHECK(std::abs(summary.at("final_C")[0].get<double>() - 1.0) <= 1e-6);
    // summary echoes the resolved config
    CHECK(summary.at("config").at("schedule").at("dt").get<double>() == 1e-3);
}

TEST_CASE("run_experiment: snapshot cadence counting") {
    const char* text = R"({
        "model": "reduced",
        "params": {"gamma": 2.0, "r": 1.0},
        "mesh": {"cells": [8, 8]},
        "ensemble": {"type": "wishart", "count": 10},
        "schedule": {"dt": 0.05, "steps": 100, "output_cadence": 10},
        "seed": 7
    })";
    ExperimentConfig cfg = parse_config_text(text);
    cfg.out_dir = temp_dir("cadence");
    const RunResult result = run_experiment(cfg);
    int snapshots = 0;
    for (const auto& name : result.artifacts)
        if (name.rfind("ensemble_step", 0) == 0) ++snapshots;
    CHECK(snapshots == 11);
}

TEST_CASE("run_experiment: zero steps writes the initial snapshot only") {
    const char* text = R"({
        "model": "reduced",
        "params": {"gamma": 2.0},
        "mesh": {"cells": [8, 8]},
        "ensemble": {"count": 5},
        "schedule": {"dt": 0.05, "steps": 0, "output_cadence": 1},
        "seed": 1
    })";
    ExperimentConfig cfg = parse_config_text(text);
    cfg.out_dir = temp_dir("zerosteps");
    const RunResult result = run_experiment(cfg);
    int snapshots = 0;
    for (const auto& name : result.artifacts)
        if (name.rfind("ensemble_step", 0) == 0) ++snapshots;
    CHECK(snapshots == 1);
}

TEST_CASE("run_experiment: reruns are byte-identical") {
    const char* text = R"({
        "model": "reduced",
        "params": {"gamma": 2.0},
        "mesh": {"cells": [8, 8]},
        "ensemble": {"count": 16},
        "schedule": {"dt": 0.05, "steps": 5},
        "seed": 42
    })";
    ExperimentConfig cfg = parse_config_text(text);
    cfg.out_dir = temp_dir("det1");
    run_experiment(cfg);
    ExperimentConfig cfg2 = parse_config_text(text);
    cfg2.out_dir = temp_dir("det2");
    run_experiment(cfg2);
    for (const char* name : {"energy_log.csv", "final_ensemble.jsonl"}) {
        const std::string a = file_checksum(cfg.out_dir + "/" + name);
        const std::string b = file_checksum(cfg2.out_dir + "/" + name);
        CHECK(a == b);
    }
}

TEST_CASE("run_experiment: manifest lists artifacts with checksums") {
    ExperimentConfig cfg = parse_config_text(kDiscreteConfig);
    cfg.schedule.steps = 5;
    cfg.schedule.dt = 0.05;
    cfg.out_dir = temp_dir("manifest");
    run_experiment(cfg);
    std::ifstream in(cfg.out_dir + "/manifest.json");
    REQUIRE(in.good());
    const auto manifest = nlohmann::json::parse(in);
    CHECK(manifest.contains("config"));
    REQUIRE(manifest.at("artifacts").size() >= 2);
    for (const auto& a : manifest.at("artifacts")) {
        CHECK(a.at("checksum").get<std::string>().size() == 16);
    }
}

TEST_CASE("run_experiment: semidiscrete consistency summary") {
    const char* text = R"({
        "model": "semidiscrete",
        "params": {"gamma": 2.0, "nu": 1.0},
        "graph": {
            "nodes": [{"x":[0,0], "S": 1.0}, {"x":[1,0], "S": -1.0}],
            "edges": [{"i":0, "j":1, "L":1.0, "cells":8, "beta":1.0}]
        }
    })";
    ExperimentConfig cfg = parse_config_text(text);
    cfg.out_dir = temp_dir("semidiscrete");
    const RunResult result = run_experiment(cfg);
    const auto summary = nlohmann::json::parse(result.summary_json);
    CHECK(summary.at("consistency").at("kirchhoff_residual").get<double>() <= 1e-8);
}

TEST_CASE("thread count does not change numeric results") {
    const StructuredMesh mesh = [] {
        StructuredMesh m;
        m.dim = 2;
        m.extent = {1.0, 1.0};
        m.cells = {16, 16};
        return m;
    }();
    const SourceField s = two_bump_source(mesh);
    EnsembleSpec spec;
    spec.count = 80;
    const ParticleEnsemble mu0 = sample_initial(mesh, spec, 11);
    ModelParams params;
    params.gamma = 2.0;
    FlowSchedule sched;
    sched.dt = 0.05;
    sched.steps = 4;

    set_thread_count(1);
    const auto run1 = run_reduced_flow(mu0, params, s, sched);
    set_thread_count(4);
    const auto run4 = run_reduced_flow(mu0, params, s, sched);
    set_thread_count(0);
    REQUIRE(run1.log.size() == run4.log.size());
    for (std::size_t k = 0; k < run1.log.size(); ++k) {
        CHECK(run1.log[k].energy == run4.log[k].energy);
        CHECK(run1.log[k].max_residual == run4.log[k].max_residual);
    }
    for (std::size_t i = 0; i < run1.final_state.atoms.size(); ++i) {
        SymTensor d = run1.final_state.atoms[i].c - run4.final_state.atoms[i].c;
        CHECK(d.frobenius_norm() == 0.0);
    }
}
