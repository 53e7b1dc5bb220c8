#pragma once

#include <stdexcept>

#include "regnet/plant.hpp"
#include "regnet/types.hpp"

namespace regnet::models {

/// Four third-order agents tracking a planar oscillator. Agent index i is
/// 1-based; the input gain and the pinned pair of system zeros at
/// +-(0.5 + 0.1 i)j both drift with i. The perturbation shifts the zeros,
/// which is exactly what the zero-avoidance machinery exists for.
inline plant::AgentModel oscillator_tracking_agent(int i, bool with_uncertainty) {
    if (i < 1) throw std::invalid_argument("oscillator_tracking_agent: index is 1-based");
    const double b = 0.5 + 0.1 * i;
    plant::AgentModel a;
    a.A0 = (Mat(3, 3) << 0, 1, 0,
                         0, 0, 1,
                         static_cast<double>(i), 0, 0).finished();
    a.B0 = (Mat(3, 1) << 1, 0, b * b).finished();
    a.C0 = (Mat(1, 3) << 1, 0, 0).finished();
    a.D0 = Mat::Zero(1, 1);
    a.P0 = (Mat(3, 2) << 0, 1,
                         0, 0,
                         0, 1).finished();
    a.Q0 = (Mat(1, 2) << -1, 0).finished();
    a.zero_missing_perturbations();
    if (with_uncertainty) {
        a.dA = (Mat(3, 3) << 0, 0.5, 0,
                             0, 0, 0,
                             -0.5, 0, 0).finished();
        a.dB = (Mat(3, 1) << 0.5, 0, 0).finished();
    }
    a.validate();
    return a;
}

/// Planar oscillator reference at angular rate 2.
inline plant::ExosystemModel oscillator_exosystem() {
    plant::ExosystemModel exo;
    exo.S0 = (Mat(2, 2) << 0, 2, -2, 0).finished();
    exo.w0_init = (Vec(2) << 1.0, 0.5).finished();
    return exo;
}

/// Two-input two-output second-order agents for the large network. Agents
/// cycle through five parameter classes m = 1..5; class m has zeros at
/// +-(0.1 m + 0.2)j.
inline plant::AgentModel large_network_agent(int i, bool with_uncertainty) {
    if (i < 1) throw std::invalid_argument("large_network_agent: index is 1-based");
    const double m = static_cast<double>((i - 1) % 5 + 1);
    const double g = 0.1 * m + 0.2;
    plant::AgentModel a;
    a.A0 = (Mat(2, 2) << 0, 1, m, 2).finished();
    a.B0 = (Mat(2, 2) << 1, 0, g * g + m + 1, 1).finished();
    a.C0 = Mat::Identity(2, 2);
    a.D0 = Mat::Identity(2, 2);
    a.P0 = (Mat(2, 2) << 0, 1, 1, 0).finished();
    a.Q0 = -Mat::Identity(2, 2);
    a.zero_missing_perturbations();
    if (with_uncertainty) {
        a.dA = (Mat(2, 2) << 0, 0, 0, -0.1).finished();
        a.dB = (Mat(2, 2) << 0, 0, -0.1, 0).finished();
    }
    a.validate();
    return a;
}

/// Unit-rate planar oscillator reference for the large network.
inline plant::ExosystemModel unit_oscillator_exosystem() {
    plant::ExosystemModel exo;
    exo.S0 = (Mat(2, 2) << 0, 1, -1, 0).finished();
    exo.w0_init = (Vec(2) << 1.0, 0.5).finished();
    return exo;
}

/// Second-order agents for output synchronization, zeros at +-(0.1 i)j. The
/// output ramps with direct feedthrough, there is no exosystem input; the
/// coupling matrix that scales the internal reference starts at [-i, 0].
inline plant::AgentModel synchronizing_agent(int i, bool with_uncertainty) {
    if (i < 1) throw std::invalid_argument("synchronizing_agent: index is 1-based");
    const double s = static_cast<double>(i);
    plant::AgentModel a;
    a.A0 = (Mat(2, 2) << 0, s, -s, 0).finished();
    a.B0 = (Mat(2, 1) << 0, -0.99 * s).finished();
    a.C0 = (Mat(1, 2) << 1, 0).finished();
    a.D0 = Mat::Ones(1, 1);
    a.P0 = Mat::Zero(2, 2);
    a.Q0 = (Mat(1, 2) << -s, 0).finished();
    a.zero_missing_perturbations();
    if (with_uncertainty) {
        a.dA = (Mat(2, 2) << 0.1, 0, 0, 0).finished();
        a.dB = (Mat(2, 1) << 0.1, 0).finished();
    }
    a.validate();
    return a;
}

/// Synchronization target dynamics shared by the root agents.
inline Mat synchronization_target() {
    return (Mat(2, 2) << 0, 1, -1, 0).finished();
}

} // namespace regnet::models
