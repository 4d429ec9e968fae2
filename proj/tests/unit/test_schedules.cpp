#include "doctest.h"

#include <cmath>

#include "isokit/errors.hpp"
#include "isokit/schedules.hpp"

using namespace isokit;
using namespace isokit::schedules;

TEST_CASE("coupling_at follows the ramp law") {
    CHECK(coupling_at(CouplingRamp(0.0, 0.2, 1.0, 1.0), 0.5) == doctest::Approx(0.1));
    CHECK(coupling_at(CouplingRamp(0.01, 0.05, 2.0, 3.0), 0.5) == doctest::Approx(0.02));
    const CouplingRamp r(0.3, 0.7, 2.5, 1.0);
    CHECK(coupling_at(r, 0.0) == 0.3);
    CHECK(coupling_at(r, 1.0) == 0.7);
    CHECK_THROWS_AS(coupling_at(r, 1.0001), DomainError);
    CHECK_THROWS_AS(coupling_at(r, -1e-9), DomainError);
}

TEST_CASE("coupling_at is continuous and monotone") {
    const CouplingRamp r(0.05, 0.4, 3.0, 2.0);
    double prev = coupling_at(r, 0.0);
    for (int i = 1; i <= 1000; ++i) {
        const double v = coupling_at(r, i / 1000.0);
        CHECK(v >= prev);
        CHECK(v - prev < 2e-3);
        prev = v;
    }
}

TEST_CASE("CouplingRamp validates its fields") {
    CHECK_THROWS_AS(CouplingRamp(-0.1, 0.2, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(CouplingRamp(0.0, 0.2, 0.5, 1.0), DomainError);
    CHECK_THROWS_AS(CouplingRamp(0.0, 0.2, 1.0, 0.0), DomainError);
}

TEST_CASE("equilibration_time_at") {
    CHECK(equilibration_time_at(59.0, 1.0, 2.0, 0.3) == 59.0);
    CHECK(equilibration_time_at(59.0, 5.0, 1.0, 1.0) == doctest::Approx(2.36));
    const double tau0 = 0.59 / 0.01;
    CHECK(equilibration_time_at(tau0, 3.0, 2.0, 0.5) == doctest::Approx(tau0 / 2.25));
    CHECK_THROWS_AS(equilibration_time_at(59.0, 0.5, 1.0, 0.5), DomainError);
}

TEST_CASE("allocate_times examples") {
    const StageTimes t1 = allocate_times(1.0, 2.0, 3.0, 40.0, SwitchOrder::first);
    CHECK(t1.tau_on == 3.0);
    CHECK(t1.tau_iso == 40.0);
    CHECK(t1.tau_tot == 46.0);
    CHECK(allocate_times(2.0, 1.0, 1.0, 10.0, SwitchOrder::first).tau_on == doctest::Approx(0.5));
    CHECK(allocate_times(2.0, 1.0, 1.0, 10.0, SwitchOrder::second).tau_on == doctest::Approx(1.0));
    CHECK(allocate_times(3.0, 1.0, 2.0, 10.0, SwitchOrder::linear).tau_on == doctest::Approx(6.0));
    CHECK(allocate_times(3.0, 1.0, 2.0, 10.0, SwitchOrder::quadratic).tau_on == doctest::Approx(18.0));
    CHECK(allocate_times(4.0, 1.0, 2.0, 32.0, SwitchOrder::quadratic).tau_iso == doctest::Approx(2.0));
}

TEST_CASE("allocate_times invariants over a grid") {
    for (double alpha : {1.0, 1.5, 2.0, 3.0, 5.0}) {
        for (double k : {1.0, 1.2, 2.0, 3.5, 8.0, 20.0}) {
            const StageTimes f = allocate_times(k, alpha, 1.3, 25.0, SwitchOrder::first);
            const StageTimes s = allocate_times(k, alpha, 1.3, 25.0, SwitchOrder::second);
            CHECK(s.tau_on >= f.tau_on * (1.0 - 1e-12));
            CHECK(f.tau_tot == 2.0 * f.tau_on + f.tau_iso);
            CHECK(s.tau_tot == 2.0 * s.tau_on + s.tau_iso);
        }
    }
}

TEST_CASE("first-order switch factor at alpha = 1 is (k-1)^2/k") {
    for (double k : {1.5, 2.0, 4.0, 10.0}) {
        CHECK(first_order_switch_factor(1.0, k) == doctest::Approx((k - 1) * (k - 1) / k).epsilon(1e-10));
    }
}

TEST_CASE("PiecewiseLinear evaluation") {
    const PiecewiseLinear p({0.0, 1.0, 3.0}, {1.0, 3.0, 2.0});
    CHECK(p(0.5) == doctest::Approx(2.0));
    CHECK(p(2.0) == doctest::Approx(2.5));
    CHECK(p(-1.0) == 1.0);
    CHECK(p(5.0) == 2.0);
    CHECK(p.slope(2.0) == doctest::Approx(-0.5));
    CHECK_THROWS_AS(PiecewiseLinear({0.0, 0.0}, {1.0, 2.0}), DomainError);
    CHECK_THROWS_AS(PiecewiseLinear({0.0}, {1.0}), DomainError);
}

TEST_CASE("ProtocolSchedule stages") {
    const ProtocolSchedule s =
        ProtocolSchedule::make(0.0, 0.1, 3.0, 2.0, 4.0, 10.0, PiecewiseLinear::linear(1.0, 2.0, 0.0, 1.0));
    CHECK(s.tau_off == s.tau_on);
    CHECK(s.total_time() == 18.0);
    CHECK(s.coupling(0.0) == 0.0);
    CHECK(s.coupling(2.0) == doctest::Approx(0.3 * 0.25));
    CHECK(s.coupling(7.0) == doctest::Approx(0.3));
    CHECK(s.coupling(16.0) == doctest::Approx(s.coupling(2.0)));
    CHECK(s.coupling(18.0) == 0.0);
    CHECK(s.drive_value(1.0) == 1.0);
    CHECK(s.drive_value(9.0) == doctest::Approx(1.5));
    CHECK(s.drive_value(17.0) == 2.0);
    CHECK(s.stage_at(3.9) == Stage::on);
    CHECK(s.stage_at(4.0) == Stage::iso);
    CHECK(s.stage_at(14.0) == Stage::off);
    const ProtocolSchedule n = s.with_durations(5.0, 9.0, 3.0);
    CHECK(n.total_time() == 17.0);
    CHECK(n.coupling(15.5) == doctest::Approx(0.3 * 0.25));
    CHECK_THROWS_AS(s.with_durations(0.0, 9.0, 3.0), DomainError);
}
