#include <doctest.h>

#include "regnet/models.hpp"
#include "regnet/plant.hpp"

using namespace regnet;
using namespace regnet::plant;

TEST_CASE("transmission_zeros: oscillator-tracking agent 1 has the pinned pair +-0.6j") {
    const AgentModel a = models::oscillator_tracking_agent(1, false);
    const ZeroSet zs = transmission_zeros(a);
    REQUIRE(zs.unstable.size() == 2);
    REQUIRE(zs.imaginary.size() == 2);
    CHECK(std::abs(zs.imaginary[0] - Complex{0.0, 0.6}) < 1e-9);
    CHECK(std::abs(zs.imaginary[1] - Complex{0.0, -0.6}) < 1e-9);
    CHECK(zs.open_rhp().size() == 0);
}

TEST_CASE("transmission_zeros: zero pair tracks the agent index") {
    for (int i = 1; i <= 4; ++i) {
        const ZeroSet zs = transmission_zeros(models::oscillator_tracking_agent(i, false));
        REQUIRE(zs.imaginary.size() == 2);
        CHECK(std::abs(zs.imaginary[0].imag() - (0.5 + 0.1 * i)) < 1e-9);
    }
}

TEST_CASE("transmission_zeros: two-input two-output class m has zeros +-(0.1m + 0.2)j") {
    for (int m = 1; m <= 5; ++m) {
        const ZeroSet zs = transmission_zeros(models::large_network_agent(m, false));
        REQUIRE(zs.imaginary.size() == 2);
        CHECK(std::abs(zs.imaginary[0] - Complex{0.0, 0.1 * m + 0.2}) < 1e-8);
        CHECK(std::abs(zs.imaginary[1] - Complex{0.0, -(0.1 * m + 0.2)}) < 1e-8);
    }
}

TEST_CASE("transmission_zeros: synchronizing agent 2 has zeros +-0.2j") {
    const ZeroSet zs = transmission_zeros(models::synchronizing_agent(2, false));
    REQUIRE(zs.imaginary.size() == 2);
    CHECK(std::abs(zs.imaginary[0] - Complex{0.0, 0.2}) < 1e-9);
}

TEST_CASE("transmission_zeros: every reported zero is confirmed by a rank drop") {
    const AgentModel a = models::oscillator_tracking_agent(2, false);
    const ZeroSet zs = transmission_zeros(a);
    const int full = a.n() + a.q();
    for (Eigen::Index i = 0; i < zs.unstable.size(); ++i)
        CHECK(matops::numerical_rank(rosenbrock(a, zs.unstable[i])) < full);
    CHECK(matops::numerical_rank(rosenbrock(a, Complex{1.0, 0.0})) == full);
    CHECK(matops::numerical_rank(rosenbrock(a, Complex{0.0, 2.0})) == full);
}

TEST_CASE("transmission_zeros: the perturbation leaves this family's zero pair pinned") {
    // the uncertainty scales the row the output selects proportionally, so
    // the system-matrix minor becomes 1.5 (s^2 + b^2) and the zeros stay put
    for (int i = 1; i <= 4; ++i) {
        const AgentModel a = models::oscillator_tracking_agent(i, true);
        const ZeroSet nominal = transmission_zeros(a, true);
        const ZeroSet effective = transmission_zeros(a, false);
        REQUIRE(nominal.imaginary.size() == 2);
        REQUIRE(effective.imaginary.size() == 2);
        CHECK(std::abs(effective.imaginary[0] - nominal.imaginary[0]) < 1e-9);
        CHECK(std::abs(effective.imaginary[1] - nominal.imaginary[1]) < 1e-9);
    }
}

TEST_CASE("transmission_zeros: wide agent found by candidate sweep") {
    AgentModel a = models::oscillator_tracking_agent(1, false);
    // graft a dead second input: zero structure is unchanged, but the pencil
    // is rectangular and only the sweep can see it
    Mat b2(3, 2);
    b2 << a.B0, Mat::Zero(3, 1);
    a.B0 = b2;
    a.D0 = Mat::Zero(1, 2);
    a.dB = Mat::Zero(3, 2);
    a.dD = Mat::Zero(1, 2);
    ZeroOptions opts;
    opts.sweep_candidates = {Complex{0.0, 0.6}, Complex{0.0, -0.6}, Complex{0.0, 1.0},
                             Complex{0.0, 2.0}, Complex{0.5, 0.0}};
    const ZeroSet zs = transmission_zeros(a, true, opts);
    REQUIRE(zs.imaginary.size() == 2);
    CHECK(std::abs(zs.imaginary[0] - Complex{0.0, 0.6}) < 1e-12);
}

TEST_CASE("transmission_zeros: identically singular system matrix is rejected") {
    AgentModel a = models::oscillator_tracking_agent(1, false);
    a.C0 = Mat::Zero(1, 3);
    a.D0 = Mat::Zero(1, 1);
    CHECK_THROWS_WITH_AS(transmission_zeros(a),
                         doctest::Contains("rank deficient at every"),
                         std::runtime_error);
}

TEST_CASE("AgentModel: more outputs than inputs is rejected at validation") {
    AgentModel a;
    a.A0 = Mat::Identity(2, 2);
    a.B0 = Mat::Ones(2, 1);
    a.C0 = Mat::Identity(2, 2);   // q = 2 > m = 1
    a.D0 = Mat::Zero(2, 1);
    a.P0 = Mat::Zero(2, 1);
    a.Q0 = Mat::Zero(2, 1);
    a.zero_missing_perturbations();
    CHECK_THROWS_WITH_AS(a.validate(), doctest::Contains("fewer inputs"),
                         std::invalid_argument);
}

TEST_CASE("AgentModel: shape mismatches are named") {
    AgentModel a = models::oscillator_tracking_agent(1, false);
    a.P0 = Mat::Zero(2, 2);
    CHECK_THROWS_WITH_AS(a.validate(), doctest::Contains("P0"), std::invalid_argument);
}

TEST_CASE("check_assumptions: oscillator-tracking agents are healthy against the rate-2 oscillator") {
    const ExosystemModel exo = models::oscillator_exosystem();
    for (int i = 1; i <= 4; ++i) {
        const AssumptionReport rep =
            check_assumptions(models::oscillator_tracking_agent(i, true), exo);
        CHECK(rep.stabilizable);
        CHECK(rep.detectable);
        CHECK(rep.exosystem_neutral);
        CHECK(rep.rank_at_exosystem_modes);
        CHECK(rep.hard_ok());
        // the pinned imaginary zeros are reported but do not gate synthesis
        CHECK_FALSE(rep.no_imaginary_zeros);
        REQUIRE(rep.imaginary_zeros.size() == 2);
    }
}

TEST_CASE("check_assumptions: agent whose zeros collide with the exosystem modes") {
    // index 15 puts the zero pair at +-2j, exactly the oscillator rate
    const AssumptionReport rep = check_assumptions(
        models::oscillator_tracking_agent(15, false), models::oscillator_exosystem());
    CHECK_FALSE(rep.rank_at_exosystem_modes);
    CHECK_FALSE(rep.hard_ok());
    REQUIRE(rep.rank_failures.size() == 2);
}

TEST_CASE("check_assumptions: drifting exosystem and unstabilizable pair are flagged") {
    AgentModel a = models::oscillator_tracking_agent(1, false);
    ExosystemModel drift;
    drift.S0 = (Mat(1, 1) << 0.3).finished();
    a.P0 = Mat::Zero(3, 1);
    a.Q0 = Mat::Zero(1, 1);
    a.dP = Mat::Zero(3, 1);
    a.dQ = Mat::Zero(1, 1);
    const AssumptionReport rep = check_assumptions(a, drift);
    CHECK_FALSE(rep.exosystem_neutral);

    AgentModel frozen;
    frozen.A0 = Mat::Identity(2, 2);
    frozen.B0 = Mat::Zero(2, 2);
    frozen.C0 = Mat::Identity(2, 2);
    frozen.D0 = Mat::Identity(2, 2);
    frozen.P0 = Mat::Zero(2, 2);
    frozen.Q0 = Mat::Zero(2, 2);
    frozen.zero_missing_perturbations();
    const AssumptionReport bad =
        check_assumptions(frozen, models::unit_oscillator_exosystem());
    CHECK_FALSE(bad.stabilizable);
    CHECK(bad.stabilizability_failures.size() == 2);
}
