// Release gate: every bundled claim is re-measured here from scratch, one
// verdict line per criterion. Run with --criterion N (repeatable) to select
// a subset; anything else runs all nine. Exit 0 only when every selected
// criterion holds at the thresholds pinned below.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "regnet/builtin_scenarios.hpp"
#include "regnet/engine.hpp"
#include "regnet/oracle.hpp"
#include "regnet/scenario.hpp"
#include "regnet/synthesis.hpp"

using namespace regnet;

namespace {

struct Gate {
    std::set<int> wanted;
    int failures = 0;

    bool selected(int id) const { return wanted.empty() || wanted.count(id) > 0; }

    void verdict(int id, const char* label, bool ok, const std::string& detail) {
        std::printf("%s  criterion %d: %s (%s)\n", ok ? "pass" : "FAIL", id, label,
                    detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

/// The four-agent regulation run backs criteria 1, 2 and 7, so it is
/// integrated once and shared.
struct Regulation4Run {
    scenario::ScenarioConfig cfg;
    engine::NetworkSetup setup;
    graph::SwitchingDigraph graph;
    engine::RunResult out;
    double runtime = 0.0;
};

Regulation4Run run_regulation4() {
    scenario::ScenarioConfig cfg = scenario::regulation4_scenario();
    engine::NetworkSetup setup = scenario::build_engine_setup(cfg);
    graph::SwitchingDigraph g = scenario::build_graph(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    engine::RunResult out = engine::run(g, setup);
    const double runtime = seconds_since(t0);
    return {std::move(cfg), std::move(setup), std::move(g), std::move(out), runtime};
}

// --- criterion 1: four-agent regulation tails and runtime budget ---------

void criterion1(Gate& gate, const Regulation4Run& run) {
    const double z_bound = 1e-2, w_bound = 1e-3, beta_bound = 1e-3;
    const double runtime_bound = 60.0, beta_from = 100.0;

    const engine::Metrics& m = run.out.metrics;
    const scenario::ReferenceShape shape =
        scenario::reference_shape(run.cfg.S_reference);
    const Vec beta_target = shape.layout.reduce(shape.modes);

    double beta_dev = 0.0;
    const auto& beta = run.out.trajectory.per_agent.at("beta");
    for (const auto& series : beta)
        for (size_t s = 0; s < series.size(); ++s)
            if (run.out.trajectory.times[s] >= beta_from - 1e-9)
                beta_dev = std::max(
                    beta_dev, (series[s] - beta_target).cwiseAbs().maxCoeff());

    const bool ok = m.tail_max_regulation_error < z_bound &&
                    m.tail_max_generator_error < w_bound &&
                    beta_dev < beta_bound && run.runtime < runtime_bound;
    gate.verdict(1, "four-agent regulation converges", ok,
                 "tail z " + num(m.tail_max_regulation_error) + " vs " +
                     num(z_bound) + ", tail |w-w0| " +
                     num(m.tail_max_generator_error) + " vs " + num(w_bound) +
                     ", |beta-" + num(beta_target[0]) + "| " + num(beta_dev) +
                     " vs " + num(beta_bound) + " from t=" + num(beta_from) +
                     ", engine " + num(run.runtime) + " s vs " +
                     num(runtime_bound) + " s");
}

// --- criterion 2: recorded detours replay exactly from the root estimates -

void criterion2(Gate& gate, const Regulation4Run& run) {
    engine::Simulator probe(run.graph, run.setup);
    std::vector<internal_model::AvoidanceGeometry> geometry;
    for (size_t i = 0; i < run.setup.agents.size(); ++i)
        geometry.push_back(probe.geometry(static_cast<int>(i)));

    const engine::ActivationTrace trace =
        engine::alpha_activation_trace(run.out.trajectory, geometry);
    gate.verdict(2, "detour activation matches the distance rule", trace.mismatches == 0,
                 std::to_string(trace.mismatches) + " mismatches, " +
                     std::to_string(trace.events.size()) + " detour intervals over " +
                     std::to_string(run.out.trajectory.times.size()) + " samples");
}

// --- criterion 3: baseline collapses under uncertainty, proposed does not -

void criterion3(Gate& gate) {
    const double converge_bound = 1e-2, diverge_floor = 0.05;

    const scenario::ScenarioConfig nominal_cfg =
        scenario::builtin("motivating-baseline-nominal");
    const scenario::ScenarioConfig uncertain_cfg =
        scenario::builtin("motivating-baseline-uncertain");
    const scenario::ScenarioConfig proposed_cfg =
        scenario::builtin("motivating-proposed-uncertain");

    const oracle::BaselineSetup nominal = scenario::build_baseline_setup(nominal_cfg);
    const oracle::BaselineSetup uncertain =
        scenario::build_baseline_setup(uncertain_cfg);
    const engine::NetworkSetup proposed = scenario::build_engine_setup(proposed_cfg);

    // the contrast is only meaningful if the three runs share the realized
    // initial conditions, not just the seed
    bool shared_ics = nominal.w0_init.isApprox(uncertain.w0_init, 0.0) &&
                      nominal.w0_init.isApprox(proposed.w0_init, 0.0);
    for (size_t i = 0; i < nominal.agents.size(); ++i)
        shared_ics = shared_ics &&
                     nominal.agents[i].x_init.isApprox(uncertain.agents[i].x_init, 0.0) &&
                     nominal.agents[i].x_init.isApprox(proposed.agents[i].x_init, 0.0);

    const double nominal_tail =
        oracle::run_baseline(scenario::build_graph(nominal_cfg), nominal)
            .tail_max_regulation_error;
    const double uncertain_tail =
        oracle::run_baseline(scenario::build_graph(uncertain_cfg), uncertain)
            .tail_max_regulation_error;
    const double proposed_tail =
        engine::run(scenario::build_graph(proposed_cfg), proposed)
            .metrics.tail_max_regulation_error;

    const bool ok = shared_ics && nominal_tail < converge_bound &&
                    uncertain_tail > diverge_floor && proposed_tail < converge_bound;
    gate.verdict(3, "uncertainty contrast between the controllers", ok,
                 "baseline nominal " + num(nominal_tail) + " vs " +
                     num(converge_bound) + ", baseline perturbed " +
                     num(uncertain_tail) + " vs floor " + num(diverge_floor) +
                     ", proposed perturbed " + num(proposed_tail) + " vs " +
                     num(converge_bound) +
                     (shared_ics ? ", shared initial conditions"
                                 : ", INITIAL CONDITIONS DIVERGED"));
}

// --- criterion 4: the 155-agent network inside the runtime budget ---------

void criterion4(Gate& gate) {
    const double z_bound = 1e-2, runtime_bound = 600.0;

    const scenario::ScenarioConfig cfg = scenario::builtin("regulation155");
    const engine::NetworkSetup setup = scenario::build_engine_setup(cfg);
    const graph::SwitchingDigraph g = scenario::build_graph(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const engine::RunResult out = engine::run(g, setup);
    const double runtime = seconds_since(t0);

    const bool ok =
        out.metrics.tail_max_regulation_error < z_bound && runtime < runtime_bound;
    gate.verdict(4, "155-agent regulation converges", ok,
                 "tail z " + num(out.metrics.tail_max_regulation_error) + " vs " +
                     num(z_bound) + " across " + std::to_string(out.metrics.agents) +
                     " agents, engine " + num(runtime) + " s vs " +
                     num(runtime_bound) + " s");
}

// --- criterion 5: five-agent output synchronization -----------------------

void criterion5(Gate& gate) {
    const double gap_bound = 1e-2;

    const scenario::ScenarioConfig cfg = scenario::builtin("sync5");
    const engine::NetworkSetup setup = scenario::build_engine_setup(cfg);
    const engine::RunResult out = engine::run(scenario::build_graph(cfg), setup);

    const bool ok = out.metrics.tail_max_pairwise_output_gap < gap_bound;
    gate.verdict(5, "five-agent outputs synchronize", ok,
                 "tail pairwise gap " +
                     num(out.metrics.tail_max_pairwise_output_gap) + " vs " +
                     num(gap_bound));
}

// --- criterion 6: augmented stabilizability property suite ----------------

void criterion6(Gate& gate) {
    const int want_random = 200, want_violations = 20;

    std::mt19937_64 rng(6060);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    // random stabilizable single-input plants whose pinned roots keep the
    // system matrix at full rank must always yield a stabilizable
    // augmented pair; instances missing a hypothesis are redrawn
    int random_pass = 0, produced = 0, attempts = 0;
    while (produced < want_random && attempts < 50 * want_random) {
        ++attempts;
        const int n = 2 + static_cast<int>(rng() % 3);
        plant::AgentModel a;
        a.A0 = Mat::NullaryExpr(n, n, [&] { return unit(rng); });
        a.B0 = Mat::NullaryExpr(n, 1, [&] { return unit(rng); });
        a.C0 = Mat::NullaryExpr(1, n, [&] { return unit(rng); });
        a.D0 = Mat::NullaryExpr(1, 1, [&] { return unit(rng); });
        a.P0 = Mat::Zero(n, 2);
        a.Q0 = Mat::Zero(1, 2);
        a.zero_missing_perturbations();

        const double rate = 0.3 + 2.5 * std::abs(unit(rng));
        plant::ExosystemModel exo;
        exo.S0 = (Mat(2, 2) << 0.0, rate, -rate, 0.0).finished();
        const plant::AssumptionReport rep = plant::check_assumptions(a, exo);
        if (!rep.stabilizable || !rep.rank_at_exosystem_modes) continue;

        ++produced;
        CVec lambda(2);
        lambda << Complex{0.0, rate}, Complex{0.0, -rate};
        if (synthesis::augmented_stabilizable(a, lambda)) ++random_pass;
    }

    // pinning a root exactly on a transmission zero plants an uncontrollable
    // marginal mode, so the augmented PBH test must fail every time; the
    // plant is (s^2 + rate^2) / ((s+1)(s+2)(s+3)) in companion form
    int violation_fail = 0;
    for (int k = 0; k < want_violations; ++k) {
        const double rate = 0.3 + 2.5 * std::abs(unit(rng));
        plant::AgentModel a;
        a.A0 = (Mat(3, 3) << 0, 1, 0, 0, 0, 1, -6, -11, -6).finished();
        a.B0 = (Mat(3, 1) << 0, 0, 1).finished();
        a.C0 = (Mat(1, 3) << rate * rate, 0, 1).finished();
        a.D0 = Mat::Zero(1, 1);
        a.P0 = Mat::Zero(3, 2);
        a.Q0 = Mat::Zero(1, 2);
        a.zero_missing_perturbations();

        CVec lambda(2);
        lambda << Complex{0.0, rate}, Complex{0.0, -rate};
        if (!synthesis::rank_condition_holds(a, lambda) &&
            !synthesis::augmented_stabilizable(a, lambda))
            ++violation_fail;
    }

    const bool ok = produced == want_random && random_pass == want_random &&
                    violation_fail == want_violations;
    gate.verdict(6, "augmented stabilizability holds exactly when hypothesized", ok,
                 std::to_string(random_pass) + "/" + std::to_string(want_random) +
                     " qualified random plants pass, " +
                     std::to_string(violation_fail) + "/" +
                     std::to_string(want_violations) + " on-zero plants fail");
}

// --- criterion 7: regulator equations on every bundled agent --------------

void criterion7(Gate& gate, const Regulation4Run& run) {
    const double sylvester_bound = 1e-8, output_bound = 1e-6, cross_bound = 1e-2;

    // the baseline variants bundle plants without compensator pole sets;
    // they borrow the proposed sibling's, which targets the same family
    const scenario::ScenarioConfig proposed =
        scenario::builtin("motivating-proposed-uncertain");
    const CVec fallback_observer = proposed.agents[0].observer_poles;
    const CVec fallback_augmented = proposed.agents[0].augmented_poles;

    double worst_sylvester = 0.0, worst_output = 0.0;
    int checked = 0;
    for (const std::string& name : scenario::builtin_names()) {
        const scenario::ScenarioConfig cfg = scenario::builtin(name);
        const scenario::ReferenceShape shape =
            scenario::reference_shape(cfg.S_reference);
        for (const scenario::AgentConfig& agent : cfg.agents) {
            const CVec& observer = agent.observer_poles.size() > 0
                                       ? agent.observer_poles
                                       : fallback_observer;
            const CVec& augmented = agent.augmented_poles.size() > 0
                                        ? agent.augmented_poles
                                        : fallback_augmented;
            const synthesis::CompensatorGains g = synthesis::synthesize_gains(
                agent.model, shape.modes, observer, augmented);
            const oracle::RegulatorSolution sol =
                oracle::solve_regulator_pair(agent.model, g, cfg.S_reference);
            worst_sylvester = std::max(worst_sylvester, sol.sylvester_residual);
            worst_output = std::max(worst_output, sol.output_residual);
            ++checked;
        }
    }

    // the algebraic steady state must also be the one the converged
    // four-agent run actually sits on
    const scenario::ReferenceShape shape =
        scenario::reference_shape(run.cfg.S_reference);
    double worst_cross = 0.0;
    for (size_t i = 0; i < run.setup.agents.size(); ++i) {
        const engine::AgentSpec& spec = run.setup.agents[i];
        const synthesis::CompensatorGains g = synthesis::synthesize_gains(
            spec.model, shape.modes, spec.observer_poles, spec.augmented_poles);
        const oracle::RegulatorSolution sol =
            oracle::solve_regulator_pair(spec.model, g, run.setup.S_reference);
        worst_cross = std::max(
            worst_cross, oracle::steady_state_crosscheck(
                             run.out.trajectory, static_cast<int>(i), sol.X));
    }

    const bool ok = worst_sylvester < sylvester_bound && worst_output < output_bound &&
                    worst_cross < cross_bound;
    gate.verdict(7, "regulator equations solve on every bundled agent", ok,
                 std::to_string(checked) + " agents, worst residuals " +
                     num(worst_sylvester) + " vs " + num(sylvester_bound) + " and " +
                     num(worst_output) + " vs " + num(output_bound) +
                     ", steady-state crosscheck " + num(worst_cross) + " vs " +
                     num(cross_bound));
}

// --- criterion 8: randomized stability harness batteries ------------------

void criterion8(Gate& gate) {
    const int instances = 50;

    const std::vector<oracle::LemmaReport> reports =
        oracle::lemma_harnesses(instances);
    bool ok = true;
    std::string detail;
    for (const oracle::LemmaReport& rep : reports) {
        ok = ok && rep.passes == rep.instances && rep.precondition_violations == 0;
        if (!detail.empty()) detail += ", ";
        detail += rep.name + " " + std::to_string(rep.passes) + "/" +
                  std::to_string(rep.instances) + " (worst tail " +
                  num(rep.worst_tail) + " vs " + num(rep.tolerance) + ")";
    }
    gate.verdict(8, "stability harness batteries all pass", ok, detail);
}

// --- criterion 9: integrator order and run determinism ---------------------

void criterion9(Gate& gate) {
    auto decay = [](double, const Vec& y, Vec& dy) { dy = -y; };
    engine::Rk4Workspace ws;
    ws.resize(1);
    auto integrate = [&](double h, int steps) {
        Vec y = Vec::Ones(1);
        for (int s = 0; s < steps; ++s)
            engine::rk4_step(s * h, h, y, decay, ws);
        return y[0];
    };
    const double exact = std::exp(-1.0);
    const double ratio = std::abs(integrate(0.02, 50) - exact) /
                         std::abs(integrate(0.01, 100) - exact);
    const bool order_ok = ratio > 8.0 && ratio < 32.0;

    scenario::ScenarioConfig cfg = scenario::regulation4_scenario();
    cfg.integrator.horizon = 5.0;
    auto render = [&cfg] {
        const engine::NetworkSetup setup = scenario::build_engine_setup(cfg);
        const engine::RunResult out =
            engine::run(scenario::build_graph(cfg), setup);
        std::ostringstream csv;
        engine::write_csv(out.trajectory, csv);
        return csv.str();
    };
    const std::string first = render();
    const std::string second = render();
    const bool deterministic = first == second && !first.empty();

    gate.verdict(9, "fourth-order convergence and bitwise repeatability",
                 order_ok && deterministic,
                 "step-halving ratio " + num(ratio) + " in [8, 32], rebuilt CSV " +
                     (deterministic ? "identical (" + std::to_string(first.size()) +
                                          " bytes)"
                                    : "DIFFERS"));
}

} // namespace

int main(int argc, char** argv) {
    Gate gate;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            gate.wanted.insert(std::atoi(argv[++i]));
        } else {
            std::fprintf(stderr, "usage: %s [--criterion N]...\n", argv[0]);
            return 2;
        }
    }

    std::optional<Regulation4Run> reg4;
    if (gate.selected(1) || gate.selected(2) || gate.selected(7)) {
        try {
            reg4 = run_regulation4();
        } catch (const std::exception& e) {
            const std::string why = std::string("four-agent run threw: ") + e.what();
            for (int id : {1, 2, 7})
                if (gate.selected(id)) gate.verdict(id, "shared run unavailable", false, why);
        }
    }

    auto attempt = [&gate](int id, void (*fn)(Gate&)) {
        if (!gate.selected(id)) return;
        try {
            fn(gate);
        } catch (const std::exception& e) {
            gate.verdict(id, "criterion threw", false, e.what());
        }
    };
    auto attempt_shared = [&gate, &reg4](int id, void (*fn)(Gate&, const Regulation4Run&)) {
        if (!gate.selected(id) || !reg4) return;
        try {
            fn(gate, *reg4);
        } catch (const std::exception& e) {
            gate.verdict(id, "criterion threw", false, e.what());
        }
    };

    attempt_shared(1, criterion1);
    attempt_shared(2, criterion2);
    attempt(3, criterion3);
    attempt(4, criterion4);
    attempt(5, criterion5);
    attempt(6, criterion6);
    attempt_shared(7, criterion7);
    attempt(8, criterion8);
    attempt(9, criterion9);

    if (gate.failures == 0) {
        std::printf("all criteria pass\n");
        return 0;
    }
    std::printf("%d criteria FAILED\n", gate.failures);
    return 1;
}
