#pragma once

#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "regnet/models.hpp"
#include "regnet/scenario.hpp"

namespace regnet::scenario {

namespace detail {

inline CVec real_poles(std::initializer_list<double> values) {
    CVec p(static_cast<Eigen::Index>(values.size()));
    Eigen::Index d = 0;
    for (double v : values) p[d++] = Complex{v, 0.0};
    return p;
}

inline Mat edge_matrix(int nodes, std::initializer_list<std::pair<int, int>> edges) {
    Mat a = Mat::Zero(nodes, nodes);
    for (const auto& [to, from] : edges) a(to, from) = 1.0;
    return a;
}

} // namespace detail

/// Static-chain contrast family: four third-order plants tracking the
/// rate-2 oscillator, identical drawn initial states across the three
/// variants (only w0 and x are randomized, so the draw streams coincide).
inline ScenarioConfig motivating_scenario(const std::string& name, bool uncertain,
                                          Controller controller) {
    ScenarioConfig cfg;
    cfg.name = name;
    cfg.mode = engine::Mode::regulation;
    cfg.controller = controller;
    cfg.seed = 2024;
    cfg.graph.epsilon = 0.5;
    cfg.graph.periodic = true;
    cfg.graph.snapshots = {detail::edge_matrix(5, {{1, 0}, {2, 1}, {3, 2}, {4, 3}})};
    cfg.graph.schedule = {{0, 10.0}};
    cfg.S_reference = models::oscillator_exosystem().S0;
    cfg.w0_init = InitSpec::uniform(-1.0, 1.0);
    cfg.integrator.horizon = 200.0;
    cfg.thresholds["tail_max_regulation_error"] = 1e-2;
    cfg.thresholds["tail_max_generator_error"] = 1e-3;

    for (int i = 1; i <= 4; ++i) {
        AgentConfig a;
        a.model = models::oscillator_tracking_agent(i, uncertain);
        a.x_init = InitSpec::uniform(-1.0, 1.0);
        if (controller == Controller::baseline) {
            a.feedback_poles = detail::real_poles({-1.0, -2.0, -3.0});
            a.w_init = InitSpec::vector(Vec::Zero(2));
        } else {
            a.observer_poles = detail::real_poles({-1.0, -2.0, -3.0});
            a.augmented_poles = detail::real_poles({-0.4, -0.8, -1.2, -1.6, -2.0});
            a.xi_init = InitSpec::vector(Vec::Zero(5));
            a.w_init = InitSpec::vector(Vec::Zero(2));
            a.S_init = InitSpec::matrix(Mat::Zero(2, 2));
            a.beta_init = InitSpec::vector(Vec::Zero(1));
        }
        cfg.agents.push_back(std::move(a));
    }
    return cfg;
}

/// Four uncertain plants under the two-snapshot 10 s switch whose union is
/// the chain rooted at the exosystem.
inline ScenarioConfig regulation4_scenario() {
    ScenarioConfig cfg;
    cfg.name = "regulation4";
    cfg.mode = engine::Mode::regulation;
    cfg.controller = Controller::proposed;
    cfg.seed = 2024;
    cfg.graph.epsilon = 0.5;
    cfg.graph.periodic = true;
    cfg.graph.snapshots = {detail::edge_matrix(5, {{1, 0}, {3, 2}}),
                           detail::edge_matrix(5, {{2, 1}, {4, 3}})};
    cfg.graph.schedule = {{0, 10.0}, {1, 10.0}};
    cfg.S_reference = models::oscillator_exosystem().S0;
    cfg.w0_init = InitSpec::uniform(-1.0, 1.0);
    cfg.integrator.horizon = 200.0;
    cfg.thresholds["tail_max_regulation_error"] = 1e-2;
    cfg.thresholds["tail_max_generator_error"] = 1e-3;
    cfg.thresholds["tail_max_beta_error"] = 1e-3;

    for (int i = 1; i <= 4; ++i) {
        AgentConfig a;
        a.model = models::oscillator_tracking_agent(i, true);
        a.observer_poles = detail::real_poles({-1.0, -2.0, -3.0});
        a.augmented_poles = detail::real_poles({-0.4, -0.8, -1.2, -1.6, -2.0});
        a.x_init = InitSpec::uniform(-1.0, 1.0);
        a.xi_init = InitSpec::uniform(-1.0, 1.0);
        a.w_init = InitSpec::uniform(-1.0, 1.0);
        a.S_init = InitSpec::matrix(
            (Mat(2, 2) << 0.0, 0.5 * i, -0.5 * i, 0.0).finished());
        a.beta_init = InitSpec::vector(Vec::Zero(1));
        cfg.agents.push_back(std::move(a));
    }
    return cfg;
}

/// Two-output plants in five parameter classes hanging off the exosystem in
/// a 5-ary tree; the tree's edges rotate through three snapshots dwelling
/// 2, 3, and 5 seconds.
inline ScenarioConfig large_regulation_scenario(int agents) {
    if (agents < 1)
        throw std::invalid_argument("large_regulation_scenario: need at least one agent");
    ScenarioConfig cfg;
    {
        std::ostringstream name;
        name << "regulation" << agents;
        cfg.name = name.str();
    }
    cfg.mode = engine::Mode::regulation;
    cfg.controller = Controller::proposed;
    cfg.seed = 9001;
    cfg.graph.epsilon = 0.5;
    cfg.graph.periodic = true;
    const int nodes = agents + 1;
    std::vector<Mat> snaps(3, Mat::Zero(nodes, nodes));
    for (int i = 1; i <= agents; ++i) snaps[i % 3](i, (i - 1) / 5) = 1.0;
    for (int s = 0; s < 3; ++s)
        if (!snaps[s].isZero(0.0)) {
            cfg.graph.snapshots.push_back(snaps[s]);
            cfg.graph.schedule.push_back({static_cast<int>(cfg.graph.snapshots.size()) - 1,
                                          s == 0 ? 2.0 : (s == 1 ? 3.0 : 5.0)});
        }
    cfg.S_reference = models::unit_oscillator_exosystem().S0;
    cfg.w0_init = InitSpec::uniform(-1.0, 1.0);
    cfg.integrator.horizon = 400.0;
    cfg.thresholds["tail_max_regulation_error"] = 1e-2;

    for (int i = 1; i <= agents; ++i) {
        AgentConfig a;
        a.model = models::large_network_agent(i, true);
        a.observer_poles = detail::real_poles({-1.20, -1.21});
        a.augmented_poles =
            detail::real_poles({-0.70, -0.71, -0.72, -0.73, -0.74, -0.75});
        a.x_init = InitSpec::uniform(-1.0, 1.0);
        a.xi_init = InitSpec::uniform(-1.0, 1.0);
        a.w_init = InitSpec::uniform(-1.0, 1.0);
        a.S_init = InitSpec::matrix(Mat::Zero(2, 2));
        a.beta_init = InitSpec::vector(Vec::Zero(1));
        cfg.agents.push_back(std::move(a));
    }
    return cfg;
}

/// Five oscillators synchronizing on the unit-rate target carried by the
/// closed root set {1, 2, 3}; the network alternates 3 s snapshots.
inline ScenarioConfig sync5_scenario() {
    ScenarioConfig cfg;
    cfg.name = "sync5";
    cfg.mode = engine::Mode::synchronization;
    cfg.controller = Controller::proposed;
    cfg.seed = 77;
    cfg.graph.epsilon = 0.5;
    cfg.graph.periodic = true;
    cfg.graph.snapshots = {detail::edge_matrix(5, {{1, 0}, {0, 2}, {3, 2}}),
                           detail::edge_matrix(5, {{2, 1}, {4, 3}})};
    cfg.graph.schedule = {{0, 3.0}, {1, 3.0}};
    cfg.S_reference = models::synchronization_target();
    cfg.reference_agents = {0, 1, 2};
    cfg.integrator.horizon = 100.0;
    cfg.thresholds["tail_max_pairwise_output_gap"] = 1e-2;

    for (int i = 1; i <= 5; ++i) {
        const bool root = i <= 3;
        AgentConfig a;
        a.model = models::synchronizing_agent(i, true);
        a.observer_poles = detail::real_poles({-0.7, -0.8});
        a.augmented_poles = detail::real_poles({-0.7, -0.8, -0.9, -1.0});
        a.x_init = InitSpec::uniform(-1.0, 1.0);
        a.xi_init = InitSpec::uniform(-1.0, 1.0);
        a.w_init = InitSpec::uniform(-1.0, 1.0);
        a.S_init = InitSpec::matrix(root ? models::synchronization_target()
                                         : Mat::Zero(2, 2));
        a.beta_init = root ? InitSpec::vector(Vec::Ones(1))
                           : InitSpec::uniform(-1.0, 1.0);
        a.Q_init = InitSpec::matrix((Mat(1, 2) << -static_cast<double>(i), 0.0).finished());
        cfg.agents.push_back(std::move(a));
    }
    return cfg;
}

inline std::vector<std::string> builtin_names() {
    return {"motivating-baseline-nominal", "motivating-baseline-uncertain",
            "motivating-proposed-uncertain", "regulation4", "regulation155", "sync5"};
}

inline ScenarioConfig builtin(const std::string& name) {
    if (name == "motivating-baseline-nominal")
        return motivating_scenario(name, false, Controller::baseline);
    if (name == "motivating-baseline-uncertain")
        return motivating_scenario(name, true, Controller::baseline);
    if (name == "motivating-proposed-uncertain")
        return motivating_scenario(name, true, Controller::proposed);
    if (name == "regulation4") return regulation4_scenario();
    if (name == "regulation155") return large_regulation_scenario(155);
    if (name == "sync5") return sync5_scenario();
    std::ostringstream msg;
    msg << "unknown scenario '" << name << "'; bundled names are";
    for (const std::string& n : builtin_names()) msg << ' ' << n;
    throw std::invalid_argument(msg.str());
}

inline bool is_builtin(const std::string& name) {
    for (const std::string& n : builtin_names())
        if (n == name) return true;
    return false;
}

} // namespace regnet::scenario
