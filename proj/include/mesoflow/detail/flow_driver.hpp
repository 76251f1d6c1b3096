#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "mesoflow/errors.hpp"
#include "mesoflow/flows.hpp"

namespace mesoflow::detail {

/// Shared explicit-Euler orchestration: propose a step, re-solve, accept
/// only if the energy does not increase beyond the tolerance, otherwise
/// halve dt and retry (error below dt = 1e-12). Propose may throw
/// StepRejected to force a retry at its suggested step size.
template <typename State, typename EnergyFn, typename ProposeFn, typename ResidualFn,
          typename DissipFn>
FlowRunResult<State> run_flow_loop(const State& s0, const FlowSchedule& schedule,
                                   EnergyFn&& energy_of, ProposeFn&& propose,
                                   ResidualFn&& residual_of, DissipFn&& dissipation_of) {
    if (!(schedule.dt > 0.0)) throw ConfigError("run_flow: dt must be positive");
    if (schedule.steps < 0) throw ConfigError("run_flow: steps must be >= 0");

    FlowRunResult<State> out;
    State state = s0;
    PressureField pressure;
    EnergyBreakdown e = energy_of(state, &pressure);
    double t = 0.0;
    double dt = schedule.dt;

    auto log_entry = [&](int step) {
        EnergyLogEntry le;
        le.step = step;
        le.t = t;
        le.energy = e.total;
        le.kinetic = e.kinetic;
        le.metabolic = e.metabolic;
        le.background = e.background;
        le.max_residual = residual_of(state, pressure);
        le.dissipation_estimate = dissipation_of(state, pressure);
        out.log.push_back(le);
    };
    log_entry(0);
    if (schedule.output_cadence > 0) out.snapshots.emplace_back(0, state);

    for (int step = 1; step <= schedule.steps; ++step) {
        while (true) {
            if (dt < 1e-12) throw SolverError("run_flow: dt underflow (divergence)");
            State trial;
            try {
                trial = propose(state, pressure, dt);
            } catch (const StepRejected& err) {
                dt = std::min(err.suggested_dt, 0.5 * dt);
                continue;
            }
            PressureField p_trial;
            const EnergyBreakdown e_trial = energy_of(trial, &p_trial);
            if (e_trial.total <=
                e.total + schedule.dissipation_tol * std::max(1.0, std::abs(e.total))) {
                state = std::move(trial);
                pressure = std::move(p_trial);
                e = e_trial;
                t += dt;
                break;
            }
            dt *= 0.5;
        }
        ++out.accepted_steps;
        log_entry(step);
        if (schedule.output_cadence > 0 && step % schedule.output_cadence == 0)
            out.snapshots.emplace_back(step, state);
    }
    out.final_state = std::move(state);
    out.final_pressure = std::move(pressure);
    return out;
}

} // namespace mesoflow::detail
